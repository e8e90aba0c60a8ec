#pragma once

#include <cstdint>
#include <vector>

#include "idedit/adaptation.hpp"
#include "idedit/model.hpp"
#include "idedit/perceptual.hpp"

namespace idedit {

enum class LatentInit { encoder, prior };

struct LatentOptConfig {
    int steps = 500;
    double step_size = 5e-3;
    std::uint64_t seed = 0;
    LatentInit init = LatentInit::encoder;
    bool record_curve = true;
    double lambda_mse = 1.0;
    double lambda_vgg = 1.0;

    void validate() const;
};

struct LatentOptResult {
    LatentCode latent;               // best-seen iterate
    std::vector<double> loss_curve;  // steps + 1 entries when record_curve
    double best_loss = 0.0;
    int best_step = 0;
};

// Encoder projection: E(I).
LatentCode project_encoder(const GenerativeAutoencoder& model, const ImageTensor& image);
// Random projection: a prior sample, independent of any image.
LatentCode project_random(const GenerativeAutoencoder& model, std::uint64_t seed);
// Adam on w against the pixel + perceptual loss with the decoder frozen.
LatentOptResult project_latent_opt(const GenerativeAutoencoder& model, const ImageTensor& image,
                                   const LatentOptConfig& config,
                                   const FeatureExtractor& extractor = *default_extractor(),
                                   const ProgressFn& progress = {});

}  // namespace idedit
