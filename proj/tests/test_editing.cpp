#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "json.hpp"

#include "idedit/editing.hpp"
#include "idedit/errors.hpp"
#include "test_util.hpp"

using namespace idedit;

namespace {

AttributeDirection random_direction(std::mt19937_64& rng, int d) {
    std::normal_distribution<double> n(0.0, 1.0);
    AttributeDirection dir;
    dir.name = "smile";
    dir.normal.resize(static_cast<std::size_t>(d));
    double len = 0.0;
    for (double& v : dir.normal) {
        v = n(rng);
        len += v * v;
    }
    for (double& v : dir.normal) v /= std::sqrt(len);
    return dir;
}

LatentCode random_latent(std::mt19937_64& rng, int d) {
    std::normal_distribution<double> n(0.0, 1.0);
    LatentCode w;
    for (int i = 0; i < d; ++i) w.w.push_back(n(rng));
    return w;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST(EditLatent, AlgebraOverRandomCases) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> ua(-5.0, 5.0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto dir = random_direction(rng, 128);
        const auto w = random_latent(rng, 128);
        const double a = ua(rng), b = ua(rng);

        EXPECT_EQ(edit_latent(w, dir, 0.0), w);

        const auto ab = edit_latent(edit_latent(w, dir, a), dir, b);
        const auto sum = edit_latent(w, dir, a + b);
        for (std::size_t i = 0; i < w.size(); ++i) ASSERT_NEAR(ab.w[i], sum.w[i], 1e-6);

        const auto e = edit_latent(w, dir, a);
        std::vector<double> delta(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) delta[i] = e.w[i] - w.w[i];
        const double along = dot(delta, dir.normal);
        EXPECT_NEAR(along, a, 1e-6);
        EXPECT_NEAR(dir.signed_distance(e) - dir.signed_distance(w), a, 1e-6);
        double orth = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double r = delta[i] - along * dir.normal[i];
            orth += r * r;
        }
        EXPECT_LT(std::sqrt(orth), 1e-6);
    }
}

TEST(EditLatent, UnitArithmeticAndErrors) {
    AttributeDirection dir;
    dir.normal = {1.0, 0.0, 0.0};
    const auto out = edit_latent(LatentCode{{0.0, 0.0, 0.0}}, dir, 2.0);
    EXPECT_EQ(out.w, (std::vector<double>{2.0, 0.0, 0.0}));
    const LatentCode w{{1.0, 2.0, 3.0}};
    const auto copy = w;
    (void)edit_latent(w, dir, 1.0);
    EXPECT_EQ(w, copy);
    EXPECT_THROW(edit_latent(LatentCode{{1.0}}, dir, 1.0), DimensionError);
    EXPECT_THROW(edit_latent(w, dir, INFINITY), ValidationError);
    EXPECT_THROW(edit_latent(w, dir, NAN), ValidationError);
}

TEST(FitDirection, AxisAlignedSeparable) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.1, 2.0), v(-1.0, 1.0);
    std::vector<LatentCode> latents;
    std::vector<bool> labels;
    for (int i = 0; i < 200; ++i) {
        const bool pos = i % 2 == 0;
        latents.push_back({{pos ? u(rng) : -u(rng), v(rng)}});
        labels.push_back(pos);
    }
    const auto d = fit_direction(latents, labels, "smile");
    EXPECT_GT(std::abs(d.normal[0]), 0.99);
    EXPECT_GT(d.normal[0], 0.0);
    EXPECT_EQ(d.train_accuracy, 1.0);
    EXPECT_NEAR(std::hypot(d.normal[0], d.normal[1]), 1.0, 1e-12);
    EXPECT_EQ(d.name, "smile");
    EXPECT_GT(d.projection_std, 0.0);
    double pos_mean = 0, neg_mean = 0;
    for (std::size_t i = 0; i < latents.size(); ++i) {
        (labels[i] ? pos_mean : neg_mean) += d.signed_distance(latents[i]);
    }
    EXPECT_GT(pos_mean, 0.0);
    EXPECT_LT(neg_mean, 0.0);
}

TEST(FitDirection, OrientationFollowsPositives) {
    std::vector<LatentCode> latents{{{1.0, 0.0}}, {{2.0, 0.1}}, {{-1.0, 0.0}}, {{-2.0, -0.1}}};
    const auto d = fit_direction(latents, {false, false, true, true}, "age");
    EXPECT_LT(d.normal[0], -0.9);
}

TEST(FitDirection, ScaleInvariance) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<LatentCode> latents, scaled;
    std::vector<bool> labels;
    for (int i = 0; i < 300; ++i) {
        LatentCode w;
        for (int k = 0; k < 8; ++k) w.w.push_back(n(rng));
        labels.push_back(0.7 * w.w[0] - 0.5 * w.w[3] + 0.2 * w.w[5] > 0);
        latents.push_back(w);
        for (double& x : w.w) x *= 37.5;
        scaled.push_back(w);
    }
    const auto a = fit_direction(latents, labels, "hair");
    const auto b = fit_direction(scaled, labels, "hair");
    EXPECT_GT(dot(a.normal, b.normal), 0.99);
    EXPECT_NEAR(b.projection_std / a.projection_std, 37.5, 1e-6 * 37.5);
}

TEST(FitDirection, Errors) {
    std::vector<LatentCode> latents{{{1.0}}, {{2.0}}, {{3.0}}, {{4.0}}};
    EXPECT_THROW(fit_direction(latents, {true, true, true, true}, "x"), ValidationError);
    EXPECT_THROW(fit_direction(latents, {true, false, false, false}, "x"), ValidationError);
    EXPECT_THROW(fit_direction(latents, {true, false}, "x"), ValidationError);
}

TEST(Labels, Thresholds) {
    EXPECT_TRUE(attribute_label("age", 0.51));
    EXPECT_FALSE(attribute_label("age", 0.5));
    EXPECT_TRUE(attribute_label("smile", 0.01));
    EXPECT_FALSE(attribute_label("smile", 0.0));
    EXPECT_TRUE(attribute_label("hair", 0.6));
    EXPECT_FALSE(attribute_label("hair", 0.4));
    EXPECT_THROW(attribute_label("beard", 1.0), ValidationError);
    EXPECT_EQ(supported_attributes(), (std::vector<std::string>{"age", "hair", "smile"}));
}

TEST(Trajectory, DecodesEachAlpha) {
    const auto m = GenerativeAutoencoder::initialize({16, 16, 2}, 1);
    std::mt19937_64 rng(3);
    auto dir = random_direction(rng, 16);
    const auto w = sample_prior(m, 4);
    const std::vector<double> alphas{-3, 0, 3};
    const auto t = make_trajectory(m, w, dir, alphas);
    ASSERT_EQ(t.images.size(), 3u);
    EXPECT_EQ(t.alphas, alphas);
    EXPECT_EQ(t.base_latent, w);
    EXPECT_EQ(t.images[1], decode(m, w));
    EXPECT_EQ(t.images[2], decode(m, edit_latent(w, dir, 3)));
    EXPECT_NE(t.images[1], t.images[2]);
    EXPECT_EQ(make_trajectory(m, w, dir, {0.0}).images.front(), decode(m, w));
    EXPECT_THROW(make_trajectory(m, w, dir, {}), ValidationError);
}

TEST(DirectionIo, JsonRoundTripAndValidation) {
    std::mt19937_64 rng(9);
    auto d = random_direction(rng, 16);
    d.bias = 0.25;
    d.train_accuracy = 0.875;
    d.projection_std = 1.5;
    const auto back = direction_from_json(direction_to_json(d));
    EXPECT_EQ(back.name, d.name);
    EXPECT_EQ(back.normal, d.normal);
    EXPECT_EQ(back.bias, d.bias);
    EXPECT_EQ(back.train_accuracy, d.train_accuracy);
    EXPECT_EQ(back.projection_std, d.projection_std);

    auto j = nlohmann::json::parse(direction_to_json(d));
    EXPECT_EQ(j["d_w"], 16);
    for (const char* key : {"name", "normal", "bias", "train_accuracy", "d_w"}) EXPECT_TRUE(j.contains(key)) << key;
    auto bad = j;
    bad["normal"][0] = 5.0;
    EXPECT_THROW(direction_from_json(bad.dump()), ValidationError);
    bad = j;
    bad["d_w"] = 3;
    EXPECT_THROW(direction_from_json(bad.dump()), ValidationError);
    bad = j;
    bad["train_accuracy"] = 1.5;
    EXPECT_THROW(direction_from_json(bad.dump()), ValidationError);
    EXPECT_THROW(direction_from_json("{not json"), ValidationError);

    const auto dir = idedit::testing::temp_dir("directions");
    save_direction(d, dir / "smile.json");
    const auto all = load_directions(dir);
    ASSERT_EQ(all.size(), 1u);
    EXPECT_EQ(all.at("smile").normal, d.normal);
    EXPECT_THROW(load_direction(dir / "missing.json"), IoError);
    std::filesystem::remove_all(dir);
    EXPECT_THROW(load_directions(dir), IoError);
}
