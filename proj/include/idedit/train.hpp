#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "idedit/faces.hpp"
#include "idedit/model.hpp"
#include "json.hpp"

namespace idedit {

struct TrainConfig {
    ModelConfig model;
    int epochs = 30;
    int batch_size = 16;
    double step_size = 2e-3;
    double disc_step_size = 5e-4;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double lambda_adv = 0.1;
    double lambda_reciprocity = 1.0;
    int warmup_epochs = 5;        // pixel MSE on G(E(x)) during these epochs
    double lambda_pixel = 1.0;    // pixel weight during warm-up
    double lambda_pixel_after = 1.0;  // pixel weight once warm-up ends

    void validate() const;
};

// Strict parse of a flat JSON object; unknown keys and wrong types raise ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& c);

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;  // mean generator-side objective
    double adversarial = 0.0;
    double reciprocity = 0.0;
    double pixel = 0.0;
    double discriminator = 0.0;
};

using EpochFn = std::function<void(const EpochStats&)>;

// Adversarial + latent reciprocity training of the toy autoencoder. Runs
// single-threaded and is bitwise reproducible for a fixed seed and config.
GenerativeAutoencoder train_toy(const SyntheticDataset& dataset, const TrainConfig& config, std::uint64_t seed,
                                const EpochFn& on_epoch = {});

// Mean SSIM of D(E(x)) against x.
double reconstruction_ssim(const GenerativeAutoencoder& model, const std::vector<ImageTensor>& images);

}  // namespace idedit
