#include <gtest/gtest.h>

#include <cmath>

#include "idedit/errors.hpp"
#include "idedit/faces.hpp"
#include "idedit/perceptual.hpp"
#include "test_util.hpp"

using namespace idedit;
using idedit::testing::random_image;

namespace {

double smooth_l1_of(double r) { return ag::smooth_l1(ag::constant(Tensor({1}, r))).item(); }

double smooth_l1_slope(double r) {
    const ag::Var x = ag::leaf(Tensor({1}, r), true);
    ag::backward(ag::smooth_l1(x));
    return x.grad().data[0];
}

ImageTensor offset(const ImageTensor& im, float delta) {
    ImageTensor out = im;
    for (float& v : out.pixels) v += delta;
    return out;
}

}  // namespace

TEST(SmoothL1, BranchValues) {
    EXPECT_EQ(smooth_l1_of(0.5), 0.125);
    EXPECT_EQ(smooth_l1_of(2.0), 1.5);
    EXPECT_EQ(smooth_l1_of(0.0), 0.0);
}

TEST(SmoothL1, ContinuousWithContinuousSlopeAtOne) {
    EXPECT_EQ(smooth_l1_of(1.0), 0.5);
    EXPECT_EQ(smooth_l1_slope(1.0), 1.0);
    for (double eps : {1e-2, 1e-4, 1e-6, 1e-8}) {
        EXPECT_NEAR(smooth_l1_of(1.0 - eps), 0.5, 1.01 * eps);
        EXPECT_NEAR(smooth_l1_of(1.0 + eps), 0.5, 1.01 * eps);
        EXPECT_NEAR(smooth_l1_slope(1.0 - eps), 1.0, 1.01 * eps);
        EXPECT_NEAR(smooth_l1_slope(1.0 + eps), 1.0, 1e-12);
    }
}

TEST(FeatureTerm, ForcedDistances) {
    Tensor zeros({1, 2, 3, 3}, 0.0);
    EXPECT_EQ(feature_term(zeros, Tensor({1, 2, 3, 3}, 0.5)), 0.125);
    EXPECT_EQ(feature_term(zeros, Tensor({1, 2, 3, 3}, 2.0)), 1.5);
    EXPECT_EQ(feature_term(zeros, zeros), 0.0);
    EXPECT_THROW(feature_term(zeros, Tensor({1, 2, 3, 4}, 0.0)), DimensionError);
}

TEST(Extractor, TapShapesFollowInputShape) {
    const RandomConvExtractor e;
    const auto taps = e.taps(ag::constant(to_tensor(random_image(64, 64, 1))));
    ASSERT_EQ(taps.size(), 4u);
    EXPECT_EQ(taps[0].shape(), (std::vector<int>{1, 8, 64, 64}));
    EXPECT_EQ(taps[1].shape(), (std::vector<int>{1, 8, 64, 64}));
    EXPECT_EQ(taps[2].shape(), (std::vector<int>{1, 16, 16, 16}));
    EXPECT_EQ(taps[3].shape(), (std::vector<int>{1, 24, 8, 8}));
    const auto again = e.taps(ag::constant(to_tensor(random_image(64, 64, 2))));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(taps[j].shape(), again[j].shape());
    EXPECT_THROW(e.taps(ag::constant(Tensor({1, 1, 8, 8}))), DimensionError);
}

TEST(Extractor, FrozenAcrossCalls) {
    const auto e = default_extractor();
    const auto h = e->hash();
    const auto a = random_image(32, 32, 3), b = random_image(32, 32, 4);
    const double first = perceptual_loss(*e, a, b);
    for (int i = 0; i < 20; ++i) EXPECT_EQ(perceptual_loss(*e, a, b), first);
    const ag::Var recon = ag::leaf(to_tensor(a), true);
    ag::backward(perceptual_loss_graph(*e, recon, LossTarget::from(*e, b).features));
    EXPECT_EQ(e->hash(), h);
    EXPECT_EQ(RandomConvExtractor(1234).hash(), h);
    EXPECT_NE(RandomConvExtractor(99).hash(), h);
}

TEST(PerceptualLoss, IdenticalIsZeroAndDistinctPositive) {
    const auto& e = *default_extractor();
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto a = random_image(32, 32, s), b = random_image(32, 32, s + 100);
        EXPECT_EQ(perceptual_loss(e, a, a), 0.0);
        EXPECT_GT(perceptual_loss(e, a, b), 0.0);
    }
    EXPECT_THROW(perceptual_loss(e, random_image(16, 16, 0), random_image(32, 32, 0)), DimensionError);
}

TEST(TotalLoss, Decomposition) {
    const auto& e = *default_extractor();
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto a = render(sample_factors(s, 1).front(), 64);
        const auto b = random_image(64, 64, s);
        for (auto [lm, lv] : {std::pair{1.0, 1.0}, {0.3, 2.5}, {0.0, 1.0}, {1.0, 0.0}}) {
            const double expected = lm * mse(a, b) + lv * perceptual_loss(e, b, a);
            EXPECT_NEAR(total_loss(a, b, e, lm, lv), expected, 1e-9 * std::abs(expected));
        }
    }
}

TEST(TotalLoss, ClosedForms) {
    const auto& e = *default_extractor();
    const auto a = random_image(16, 16, 9);
    EXPECT_EQ(total_loss(a, a, e, 1.0, 1.0), 0.0);
    const ImageTensor base(16, 16, 0.25f);
    const auto shifted = offset(base, 0.1f);
    const double d = double(shifted.pixels[0]) - 0.25;
    EXPECT_NEAR(total_loss(base, shifted, e, 1.0, 0.0), d * d, 1e-15);
    EXPECT_NEAR(total_loss(base, shifted, e, 2.0, 0.0), 0.02, 1e-8);  // float offset error is ~2.4e-9
    EXPECT_EQ(total_loss(base, shifted, e, 0.0, 3.0), 3.0 * perceptual_loss(e, shifted, base));
    EXPECT_THROW(total_loss(a, a, e, -1.0, 1.0), ValidationError);
    EXPECT_THROW(total_loss(a, random_image(8, 8, 0), e, 1.0, 1.0), DimensionError);
}

TEST(TotalLoss, GraphMatchesScalar) {
    const auto& e = *default_extractor();
    const auto a = random_image(32, 32, 1), b = random_image(32, 32, 2);
    const auto target = LossTarget::from(e, a);
    const double graph = total_loss_graph(e, ag::constant(to_tensor(b)), target, 0.7, 1.3).item();
    EXPECT_NEAR(graph, total_loss(a, b, e, 0.7, 1.3), 1e-12);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
    const auto& e = *default_extractor();
    const auto target = LossTarget::from(e, random_image(8, 8, 5));
    Tensor recon = to_tensor(random_image(8, 8, 6));
    for (double& v : recon.data) v = 0.1 + 0.8 * v;
    const double err = idedit::testing::max_gradient_error(
        {recon}, [&](const std::vector<ag::Var>& in) { return total_loss_graph(e, in[0], target, 1.0, 1.0); });
    EXPECT_LT(err, 1e-4);
}
