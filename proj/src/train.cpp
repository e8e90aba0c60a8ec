#include "idedit/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "idedit/errors.hpp"
#include "idedit/metrics.hpp"

namespace idedit {

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(step_size > 0) || !(disc_step_size > 0)) throw ValidationError("step sizes must be > 0");
    if (lambda_adv < 0 || lambda_reciprocity < 0 || lambda_pixel < 0 || lambda_pixel_after < 0) {
        throw ValidationError("loss weights must be >= 0");
    }
    if (warmup_epochs < 0) throw ValidationError("warmup_epochs must be >= 0");
    Architecture::from(model);
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> keys{
        "image_size", "d_w",        "mapping_layers", "epochs",        "batch_size",         "step_size",
        "disc_step_size", "beta1", "beta2",          "lambda_adv",    "lambda_reciprocity", "warmup_epochs",
        "lambda_pixel", "lambda_pixel_after"};
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError("unknown train config key " + k);
    }
    TrainConfig c;
    try {
        auto read = [&](const char* key, auto& out) {
            if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
        };
        read("image_size", c.model.image_size);
        read("d_w", c.model.d_w);
        read("mapping_layers", c.model.mapping_layers);
        read("epochs", c.epochs);
        read("batch_size", c.batch_size);
        read("step_size", c.step_size);
        read("disc_step_size", c.disc_step_size);
        read("beta1", c.beta1);
        read("beta2", c.beta2);
        read("lambda_adv", c.lambda_adv);
        read("lambda_reciprocity", c.lambda_reciprocity);
        read("warmup_epochs", c.warmup_epochs);
        read("lambda_pixel", c.lambda_pixel);
        read("lambda_pixel_after", c.lambda_pixel_after);
        c.validate();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid train config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"image_size", c.model.image_size},
            {"d_w", c.model.d_w},
            {"mapping_layers", c.model.mapping_layers},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"step_size", c.step_size},
            {"disc_step_size", c.disc_step_size},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"lambda_adv", c.lambda_adv},
            {"lambda_reciprocity", c.lambda_reciprocity},
            {"warmup_epochs", c.warmup_epochs},
            {"lambda_pixel", c.lambda_pixel},
            {"lambda_pixel_after", c.lambda_pixel_after}};
}

namespace {

Tensor normal_batch(std::mt19937_64& rng, int n, int d) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor z({n, d});
    for (double& v : z.data) v = normal(rng);
    return z;
}

void check_finite(double v, int step) {
    if (!std::isfinite(v)) throw DivergenceError("training loss is not finite", step);
}

}  // namespace

GenerativeAutoencoder train_toy(const SyntheticDataset& dataset, const TrainConfig& config, std::uint64_t seed,
                                const EpochFn& on_epoch) {
    if (dataset.size() == 0) throw ValidationError("training dataset is empty");
    config.validate();
    for (const auto& img : dataset.images) validate_model_image(img, config.model.image_size);

    GenerativeAutoencoder model = GenerativeAutoencoder::initialize(config.model, seed);
    model.set_mode(Mode::train);
    const Architecture& arch = model.arch();
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    Weights disc = net::init_encoder(arch, rng, 1);

    Adam opt_enc(config.step_size, config.beta1, config.beta2);
    Adam opt_map(config.step_size, config.beta1, config.beta2);
    Adam opt_dec(config.step_size, config.beta1, config.beta2);
    Adam opt_dis(config.disc_step_size, config.beta1, config.beta2);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    int step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double pixel_weight = epoch < config.warmup_epochs ? config.lambda_pixel : config.lambda_pixel_after;
        EpochStats stats;
        stats.epoch = epoch;
        int batches = 0;

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            std::vector<const ImageTensor*> chunk;
            for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(config.batch_size)); ++i) {
                chunk.push_back(&dataset.images[order[i]]);
            }
            const int n = static_cast<int>(chunk.size());
            const ag::Var real = ag::constant(to_tensor(chunk));

            // Discriminator: softplus(Dis(fake)) + softplus(-Dis(real)).
            {
                const VarMap map = bind_params(model.mapping(), false);
                const VarMap dec = bind_params(model.decoder(), false);
                const VarMap dis = bind_params(disc, true);
                const ag::Var w = net::mapping_forward(map, ag::constant(normal_batch(rng, n, arch.d_w)), arch);
                const ag::Var fake = net::decoder_forward(dec, w, arch);
                const ag::Var loss = ag::add(ag::mean(ag::softplus(net::encoder_forward(dis, fake, arch))),
                                             ag::mean(ag::softplus(ag::scale(net::encoder_forward(dis, real, arch), -1.0))));
                check_finite(loss.item(), step);
                ag::backward(loss);
                opt_dis.step(disc, dis);
                stats.discriminator += loss.item();
            }

            // Generator side: adversarial + latent reciprocity (+ pixel term).
            {
                const VarMap map = bind_params(model.mapping(), true);
                const VarMap dec = bind_params(model.decoder(), true);
                const VarMap enc = bind_params(model.encoder(), true);
                const VarMap dis = bind_params(disc, false);
                const ag::Var w = net::mapping_forward(map, ag::constant(normal_batch(rng, n, arch.d_w)), arch);
                const ag::Var fake = net::decoder_forward(dec, w, arch);
                const ag::Var adv = ag::mean(ag::softplus(ag::scale(net::encoder_forward(dis, fake, arch), -1.0)));
                const ag::Var recip = ag::mse(net::encoder_forward(enc, fake, arch), ag::detach(w));
                ag::Var loss = ag::add(ag::scale(adv, config.lambda_adv), ag::scale(recip, config.lambda_reciprocity));
                double pixel_value = 0.0;
                if (pixel_weight > 0) {
                    const ag::Var recon = net::decoder_forward(dec, net::encoder_forward(enc, real, arch), arch);
                    const ag::Var pixel = ag::mse(recon, real);
                    pixel_value = pixel.item();
                    loss = ag::add(loss, ag::scale(pixel, pixel_weight));
                }
                check_finite(loss.item(), step);
                ag::backward(loss);
                opt_map.step(model.mutable_mapping(), map);
                opt_dec.step(model.mutable_decoder(), dec);
                opt_enc.step(model.mutable_encoder(), enc);
                stats.loss += loss.item();
                stats.adversarial += adv.item();
                stats.reciprocity += recip.item();
                stats.pixel += pixel_value;
            }
            ++batches;
            ++step;
        }
        const double b = batches;
        stats.loss /= b;
        stats.adversarial /= b;
        stats.reciprocity /= b;
        stats.pixel /= b;
        stats.discriminator /= b;
        model.info().epoch_losses.push_back(stats.loss);
        if (on_epoch) on_epoch(stats);
    }
    model.set_mode(Mode::eval);
    model.info().training_seed = seed;
    return model;
}

double reconstruction_ssim(const GenerativeAutoencoder& model, const std::vector<ImageTensor>& images) {
    if (images.empty()) throw ValidationError("reconstruction_ssim: no images");
    const auto latents = encode_batch(model, images);
    double total = 0;
    for (std::size_t i = 0; i < images.size(); ++i) total += ssim(images[i], decode(model, latents[i]));
    return total / static_cast<double>(images.size());
}

}  // namespace idedit
