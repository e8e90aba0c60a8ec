#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "idedit/autograd.hpp"
#include "idedit/image.hpp"
#include "idedit/weights.hpp"

namespace idedit {

// Frozen feature extractor F_1..F_4 for the perceptual loss. Implementations
// must be deterministic and never mutate their weights.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    // images: [N, 3, H, W] in [0, 1]; returns the four tap activations.
    virtual std::vector<ag::Var> taps(const ag::Var& images) const = 0;
    virtual std::uint64_t hash() const = 0;
};

// Seeded random 8-layer conv stack (3x3, leaky ReLU, 2x2 average pooling after
// layers 2, 4 and 6) tapped after layers 1, 2, 5 and 7. Stands in for the
// shallow-to-mid VGG-16 taps.
class RandomConvExtractor final : public FeatureExtractor {
public:
    explicit RandomConvExtractor(std::uint64_t seed = 1234);

    std::vector<ag::Var> taps(const ag::Var& images) const override;
    std::uint64_t hash() const override { return weights_hash(weights_); }
    const Weights& weights() const { return weights_; }

    static constexpr int kLayers = 8;
    static constexpr int kTaps[4] = {1, 2, 5, 7};

private:
    Weights weights_;
    VarMap bound_;
};

std::shared_ptr<const FeatureExtractor> default_extractor();

// z(r) for one tap, with r = ||fa - fb|| / sqrt(numel).
double feature_term(const Tensor& fa, const Tensor& fb);

double perceptual_loss(const FeatureExtractor& extractor, const ImageTensor& a, const ImageTensor& b);
double mse(const ImageTensor& a, const ImageTensor& b);
// lambda_mse * mean squared pixel error + lambda_vgg * perceptual loss.
double total_loss(const ImageTensor& image, const ImageTensor& recon, const FeatureExtractor& extractor,
                  double lambda_mse, double lambda_vgg);

// Differentiable forms. Target features are precomputed constants.
struct LossTarget {
    ag::Var image;
    std::vector<ag::Var> features;

    static LossTarget from(const FeatureExtractor& extractor, const ImageTensor& image);
};

ag::Var perceptual_loss_graph(const FeatureExtractor& extractor, const ag::Var& recon,
                              const std::vector<ag::Var>& target_features);
ag::Var total_loss_graph(const FeatureExtractor& extractor, const ag::Var& recon, const LossTarget& target,
                         double lambda_mse, double lambda_vgg);

}  // namespace idedit
