#include "idedit/inversion.hpp"

#include <cmath>

#include "idedit/errors.hpp"

namespace idedit {

void LatentOptConfig::validate() const {
    if (steps < 1) throw ValidationError("latent optimization steps must be >= 1");
    if (!(step_size > 0)) throw ValidationError("latent optimization step_size must be > 0");
    if (lambda_mse < 0 || lambda_vgg < 0 || (lambda_mse == 0 && lambda_vgg == 0)) {
        throw ValidationError("invalid loss weights");
    }
}

LatentCode project_encoder(const GenerativeAutoencoder& model, const ImageTensor& image) {
    return encode(model, image);
}

LatentCode project_random(const GenerativeAutoencoder& model, std::uint64_t seed) {
    return sample_prior(model, seed);
}

LatentOptResult project_latent_opt(const GenerativeAutoencoder& model, const ImageTensor& image,
                                   const LatentOptConfig& config, const FeatureExtractor& extractor,
                                   const ProgressFn& progress) {
    config.validate();
    if (model.mode() != Mode::eval) throw ValidationError("model must be in eval mode");
    validate_model_image(image, model.image_size());

    LatentCode current = config.init == LatentInit::encoder ? project_encoder(model, image)
                                                            : project_random(model, config.seed);
    const LossTarget target = LossTarget::from(extractor, image);
    const VarMap decoder = bind_params(model.decoder(), false);

    // Adam state for a single vector.
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> m(current.size(), 0.0), v(current.size(), 0.0);

    LatentOptResult result;
    result.best_loss = INFINITY;
    for (int step = 0; step <= config.steps; ++step) {
        const ag::Var w = ag::leaf(latent_tensor({current}), step < config.steps);
        const ag::Var recon = net::decoder_forward(decoder, w, model.arch());
        const ag::Var loss = total_loss_graph(extractor, recon, target, config.lambda_mse, config.lambda_vgg);
        const double value = loss.item();
        if (!std::isfinite(value)) throw DivergenceError("latent optimization loss is not finite", step);
        if (config.record_curve) result.loss_curve.push_back(value);
        if (progress) progress(step, value);
        if (value < result.best_loss) {
            result.best_loss = value;
            result.best_step = step;
            result.latent = current;
        }
        if (step == config.steps) break;
        ag::backward(loss);
        const auto& g = w.grad().data;
        const int t = step + 1;
        const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < current.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            current.w[i] -= config.step_size * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
    return result;
}

}  // namespace idedit
