#include "idedit/perceptual.hpp"

#include <cmath>

#include "idedit/errors.hpp"

namespace idedit {
namespace {

constexpr int kChannels[RandomConvExtractor::kLayers] = {8, 8, 12, 12, 16, 16, 24, 24};
constexpr double kSlope = 0.2;

bool pool_after(int layer) { return layer == 2 || layer == 4 || layer == 6; }

}  // namespace

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    int in = 3;
    for (int l = 0; l < kLayers; ++l) {
        const int out = kChannels[l];
        const std::string base = "conv" + std::to_string(l + 1);
        weights_[base + ".weight"] = normal_param({out, in, 3, 3}, std::sqrt(2.0 / (in * 9)), rng);
        weights_[base + ".bias"] = normal_param({out}, 0.05, rng);
        in = out;
    }
    bound_ = bind_params(weights_, false);
}

std::vector<ag::Var> RandomConvExtractor::taps(const ag::Var& images) const {
    if (images.shape().size() != 4 || images.shape()[1] != 3) {
        throw DimensionError("extractor input must be [N, 3, H, W]");
    }
    Tensor shift(images.shape(), -0.5);
    ag::Var x = ag::add(images, ag::constant(std::move(shift)));
    std::vector<ag::Var> out;
    const int last_tap = kTaps[3];
    for (int l = 1; l <= last_tap; ++l) {
        const std::string base = "conv" + std::to_string(l);
        x = ag::leaky_relu(ag::conv2d(x, bound_.at(base + ".weight"), bound_.at(base + ".bias"), 1, 1), kSlope);
        for (int t : kTaps) {
            if (t == l) out.push_back(x);
        }
        if (pool_after(l) && x.shape()[2] >= 2 && x.shape()[3] >= 2) x = ag::avg_pool2x(x);
    }
    return out;
}

std::shared_ptr<const FeatureExtractor> default_extractor() {
    static const auto instance = std::make_shared<const RandomConvExtractor>();
    return instance;
}

double feature_term(const Tensor& fa, const Tensor& fb) {
    if (fa.shape != fb.shape) throw DimensionError("feature_term: shape mismatch");
    return ag::smooth_l1(ag::rms_distance(ag::constant(fa), ag::constant(fb))).item();
}

LossTarget LossTarget::from(const FeatureExtractor& extractor, const ImageTensor& image) {
    LossTarget t;
    t.image = ag::constant(to_tensor(image));
    for (const auto& f : extractor.taps(t.image)) t.features.push_back(ag::detach(f));
    return t;
}

ag::Var perceptual_loss_graph(const FeatureExtractor& extractor, const ag::Var& recon,
                              const std::vector<ag::Var>& target_features) {
    const auto feats = extractor.taps(recon);
    if (feats.size() != target_features.size()) throw DimensionError("perceptual loss: tap count mismatch");
    ag::Var total;
    for (std::size_t j = 0; j < feats.size(); ++j) {
        const ag::Var z = ag::smooth_l1(ag::rms_distance(feats[j], target_features[j]));
        total = total.valid() ? ag::add(total, z) : z;
    }
    return total;
}

ag::Var total_loss_graph(const FeatureExtractor& extractor, const ag::Var& recon, const LossTarget& target,
                         double lambda_mse, double lambda_vgg) {
    if (lambda_mse < 0 || lambda_vgg < 0) throw ValidationError("loss weights must be non-negative");
    if (recon.shape() != target.image.shape()) throw DimensionError("total_loss: shape mismatch");
    ag::Var loss = ag::scale(ag::mse(recon, target.image), lambda_mse);
    if (lambda_vgg > 0.0) {
        loss = ag::add(loss, ag::scale(perceptual_loss_graph(extractor, recon, target.features), lambda_vgg));
    }
    return loss;
}

double perceptual_loss(const FeatureExtractor& extractor, const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_shape(b)) throw DimensionError("perceptual_loss: image shapes differ");
    const auto fa = extractor.taps(ag::constant(to_tensor(a)));
    const auto fb = extractor.taps(ag::constant(to_tensor(b)));
    double s = 0.0;
    for (std::size_t j = 0; j < fa.size(); ++j) s += feature_term(fa[j].value(), fb[j].value());
    return s;
}

double mse(const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_shape(b)) throw DimensionError("mse: image shapes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
        s += d * d;
    }
    return s / static_cast<double>(a.pixels.size());
}

double total_loss(const ImageTensor& image, const ImageTensor& recon, const FeatureExtractor& extractor,
                  double lambda_mse, double lambda_vgg) {
    if (!image.same_shape(recon)) throw DimensionError("total_loss: image shapes differ");
    if (lambda_mse < 0 || lambda_vgg < 0) throw ValidationError("loss weights must be non-negative");
    double loss = lambda_mse * mse(image, recon);
    if (lambda_vgg > 0.0) loss += lambda_vgg * perceptual_loss(extractor, recon, image);
    return loss;
}

}  // namespace idedit
