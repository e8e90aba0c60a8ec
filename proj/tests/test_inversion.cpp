#include <gtest/gtest.h>

#include <cmath>

#include "idedit/errors.hpp"
#include "idedit/faces.hpp"
#include "idedit/inversion.hpp"

using namespace idedit;

namespace {

GenerativeAutoencoder small_model() { return GenerativeAutoencoder::initialize({16, 16, 2}, 5); }

ImageTensor small_face(std::uint64_t seed) { return render(sample_factors(seed, 1).front(), 16); }

}  // namespace

TEST(Projectors, MatchDefinitions) {
    const auto m = small_model();
    const auto img = small_face(1);
    EXPECT_EQ(project_encoder(m, img), encode(m, img));
    EXPECT_EQ(project_encoder(m, img), project_encoder(m, img));
    EXPECT_EQ(project_random(m, 3), sample_prior(m, 3));
    EXPECT_NE(project_random(m, 3), project_random(m, 4));
    const auto& e = *default_extractor();
    EXPECT_TRUE(std::isfinite(total_loss(img, decode(m, project_encoder(m, img)), e, 1.0, 1.0)));
}

TEST(LatentOpt, ConfigValidation) {
    LatentOptConfig c;
    EXPECT_NO_THROW(c.validate());
    c.steps = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.step_size = -1;
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.lambda_mse = 0;
    c.lambda_vgg = 0;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(LatentOpt, CurveAndBestIterate) {
    const auto m = small_model();
    const auto img = small_face(2);
    LatentOptConfig c;
    c.steps = 30;
    c.step_size = 5e-2;
    const auto r = project_latent_opt(m, img, c);
    ASSERT_EQ(r.loss_curve.size(), 31u);
    // decode() rounds to float pixels, so the scalar loss agrees only to float precision.
    EXPECT_NEAR(r.loss_curve.front(), total_loss(img, decode(m, encode(m, img)), *default_extractor(), 1, 1), 1e-6);
    EXPECT_EQ(r.best_loss, *std::min_element(r.loss_curve.begin(), r.loss_curve.end()));
    EXPECT_EQ(r.loss_curve[static_cast<std::size_t>(r.best_step)], r.best_loss);
    EXPECT_NEAR(total_loss(img, decode(m, r.latent), *default_extractor(), 1, 1), r.best_loss, 1e-6);
    EXPECT_LT(r.best_loss, r.loss_curve.front());
}

TEST(LatentOpt, FrozenModelAndDeterminism) {
    const auto m = small_model();
    const auto h = m.hash();
    const auto img = small_face(3);
    LatentOptConfig c;
    c.steps = 10;
    c.init = LatentInit::prior;
    c.seed = 9;
    const auto a = project_latent_opt(m, img, c);
    const auto b = project_latent_opt(m, img, c);
    EXPECT_EQ(m.hash(), h);
    EXPECT_EQ(a.latent, b.latent);
    EXPECT_EQ(a.loss_curve, b.loss_curve);
    EXPECT_NEAR(a.loss_curve.front(), total_loss(img, decode(m, sample_prior(m, 9)), *default_extractor(), 1, 1), 1e-6);
}

TEST(LatentOpt, RecordCurveOffAndProgress) {
    const auto m = small_model();
    const auto img = small_face(4);
    LatentOptConfig c;
    c.steps = 4;
    c.record_curve = false;
    int calls = 0;
    const auto r = project_latent_opt(m, img, c, *default_extractor(), [&](int, double) { ++calls; });
    EXPECT_TRUE(r.loss_curve.empty());
    EXPECT_EQ(calls, 5);
}

TEST(LatentOpt, SelfInversionOnSmallModel) {
    const auto m = small_model();
    int good = 0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto target = decode(m, sample_prior(m, 100 + s));
        LatentOptConfig c;
        c.steps = 100;
        c.step_size = 5e-2;
        c.init = LatentInit::prior;
        c.seed = 200 + s;
        const auto r = project_latent_opt(m, target, c);
        good += r.best_loss < 0.25 * r.loss_curve.front();
    }
    EXPECT_GE(good, 4);
}

TEST(LatentOpt, RejectsBadInputs) {
    const auto m = small_model();
    LatentOptConfig c;
    c.steps = 1;
    EXPECT_THROW(project_latent_opt(m, small_face(0), LatentOptConfig{0}), ValidationError);
    EXPECT_THROW(project_latent_opt(m, render(sample_factors(0, 1).front(), 32), c), DimensionError);
}
