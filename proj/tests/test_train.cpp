#include <gtest/gtest.h>

#include "idedit/errors.hpp"
#include "idedit/train.hpp"

using namespace idedit;

namespace {

TrainConfig small_config() {
    TrainConfig c;
    c.model = {16, 16, 2};
    c.epochs = 3;
    c.batch_size = 8;
    c.warmup_epochs = 1;
    return c;
}

}  // namespace

TEST(Train, SeededRunsAreIdentical) {
    const auto ds = generate_dataset(3, 24, 16);
    std::vector<EpochStats> log_a, log_b;
    const auto a = train_toy(ds, small_config(), 11, [&](const EpochStats& s) { log_a.push_back(s); });
    const auto b = train_toy(ds, small_config(), 11, [&](const EpochStats& s) { log_b.push_back(s); });
    ASSERT_EQ(log_a.size(), 3u);
    ASSERT_EQ(log_b.size(), 3u);
    EXPECT_NEAR(log_a.back().loss, log_b.back().loss, 1e-4 * std::abs(log_a.back().loss));
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(a.info().epoch_losses, b.info().epoch_losses);
    const auto c = train_toy(ds, small_config(), 12);
    EXPECT_NE(a.hash(), c.hash());
}

TEST(Train, LogsEveryEpochAndReturnsEvalModel) {
    const auto ds = generate_dataset(4, 16, 16);
    std::vector<int> epochs;
    const auto m = train_toy(ds, small_config(), 1, [&](const EpochStats& s) {
        epochs.push_back(s.epoch);
        EXPECT_TRUE(std::isfinite(s.loss));
        EXPECT_GE(s.discriminator, 0.0);
    });
    EXPECT_EQ(epochs, (std::vector<int>{0, 1, 2}));
    EXPECT_EQ(m.info().epoch_losses.size(), 3u);
    EXPECT_EQ(m.info().training_seed, 1u);
    EXPECT_EQ(m.mode(), Mode::eval);
}

TEST(Train, PixelTermFollowsWarmup) {
    const auto ds = generate_dataset(4, 16, 16);
    auto c = small_config();
    c.lambda_pixel_after = 0.0;
    std::vector<EpochStats> log;
    train_toy(ds, c, 1, [&](const EpochStats& s) { log.push_back(s); });
    EXPECT_GT(log[0].pixel, 0.0);
    EXPECT_EQ(log[2].pixel, 0.0);
}

TEST(Train, Errors) {
    EXPECT_THROW(train_toy(SyntheticDataset{}, small_config(), 0), ValidationError);
    auto c = small_config();
    c.epochs = 0;
    EXPECT_THROW(train_toy(generate_dataset(1, 4, 16), c, 0), ValidationError);
    EXPECT_THROW(train_toy(generate_dataset(1, 4, 32), small_config(), 0), DimensionError);
}

TEST(TrainConfigJson, StrictAndRoundTrips) {
    auto c = small_config();
    c.lambda_adv = 0.25;
    const auto back = train_config_from_json(train_config_to_json(c));
    EXPECT_EQ(train_config_to_json(back), train_config_to_json(c));
    EXPECT_EQ(train_config_from_json({{"epochs", 7}}).epochs, 7);
    EXPECT_THROW(train_config_from_json({{"epochz", 7}}), ConfigError);
    EXPECT_THROW(train_config_from_json({{"epochs", "seven"}}), ConfigError);
    EXPECT_THROW(train_config_from_json({{"epochs", 0}}), ConfigError);
    EXPECT_THROW(train_config_from_json({{"image_size", 24}}), ConfigError);
}

TEST(ReconstructionSsim, UntrainedIsLow) {
    const auto m = GenerativeAutoencoder::initialize({16, 16, 2}, 0);
    const double s = reconstruction_ssim(m, generate_dataset(1, 5, 16).images);
    EXPECT_LT(s, 0.5);
    EXPECT_GE(s, -1.0);
}
