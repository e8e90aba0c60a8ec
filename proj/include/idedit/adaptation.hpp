#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "idedit/model.hpp"
#include "idedit/perceptual.hpp"

namespace idedit {

struct AdaptationConfig {
    double lambda_mse = 1.0;
    double lambda_vgg = 1.0;
    int steps = 200;
    double step_size = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;
};

struct AdaptationResult {
    GenerativeAutoencoder adapted_model;
    LatentCode fixed_latent;
    std::vector<double> loss_curve;  // steps + 1 entries; entry i is the loss after i updates
    AdaptationConfig config;
};

// Called after every recorded loss with (step, loss); used for job progress.
using ProgressFn = std::function<void(int step, double loss)>;

// One-shot manifold shift: fine-tunes a private copy of the decoder so that
// D(w) matches `image` while w stays fixed. The source model is untouched.
AdaptationResult adapt_decoder(const GenerativeAutoencoder& model, const LatentCode& w, const ImageTensor& image,
                               const AdaptationConfig& config,
                               const FeatureExtractor& extractor = *default_extractor(),
                               const ProgressFn& progress = {});

}  // namespace idedit
