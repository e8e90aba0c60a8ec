#include "idedit/adaptation.hpp"

#include <cmath>

#include "idedit/errors.hpp"

namespace idedit {

void AdaptationConfig::validate() const {
    if (lambda_mse < 0 || lambda_vgg < 0) throw ValidationError("lambdas must be >= 0");
    if (lambda_mse == 0 && lambda_vgg == 0) throw ValidationError("lambdas must not both be zero");
    if (steps < 1) throw ValidationError("adaptation steps must be >= 1");
    if (!(step_size > 0)) throw ValidationError("adaptation step_size must be > 0");
}

AdaptationResult adapt_decoder(const GenerativeAutoencoder& model, const LatentCode& w, const ImageTensor& image,
                               const AdaptationConfig& config, const FeatureExtractor& extractor,
                               const ProgressFn& progress) {
    config.validate();
    if (model.mode() != Mode::eval) throw ValidationError("source model must be in eval mode");
    validate_latent(w, model.d_w());
    validate_model_image(image, model.image_size());

    AdaptationResult result{model, w, {}, config};
    GenerativeAutoencoder& adapted = result.adapted_model;
    const LossTarget target = LossTarget::from(extractor, image);
    const ag::Var latent = ag::constant(latent_tensor({w}));
    Adam opt(config.step_size);

    result.loss_curve.reserve(static_cast<std::size_t>(config.steps) + 1);
    for (int step = 0; step <= config.steps; ++step) {
        const bool update = step < config.steps;
        const VarMap params = bind_params(adapted.decoder(), update);
        const ag::Var recon = net::decoder_forward(params, latent, adapted.arch());
        const ag::Var loss = total_loss_graph(extractor, recon, target, config.lambda_mse, config.lambda_vgg);
        const double value = loss.item();
        if (!std::isfinite(value)) throw DivergenceError("adaptation loss is not finite", step);
        result.loss_curve.push_back(value);
        if (progress) progress(step, value);
        if (update) {
            ag::backward(loss);
            opt.step(adapted.mutable_decoder(), params);
        }
    }
    return result;
}

}  // namespace idedit
