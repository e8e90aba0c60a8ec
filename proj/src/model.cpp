#include "idedit/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "idedit/errors.hpp"

namespace idedit {
namespace {

constexpr double kSlope = 0.2;

int log2_exact(int v) { return std::countr_zero(static_cast<unsigned>(v)); }

}  // namespace

Architecture Architecture::from(const ModelConfig& cfg) {
    if (cfg.image_size < 16 || !std::has_single_bit(static_cast<unsigned>(cfg.image_size))) {
        throw ValidationError("image_size must be a power of two >= 16");
    }
    if (cfg.d_w < 1) throw ValidationError("d_w must be positive");
    if (cfg.mapping_layers < 1) throw ValidationError("mapping_layers must be positive");
    Architecture a{};
    a.image_size = cfg.image_size;
    a.d_w = cfg.d_w;
    a.mapping_layers = cfg.mapping_layers;
    a.num_blocks = log2_exact(cfg.image_size) - 2;
    a.const_channels = 64;
    for (int b = 0, res = 8; b < a.num_blocks; ++b, res *= 2) {
        a.decoder_channels.push_back(std::clamp(512 / res, 16, 64));
    }
    for (int b = 0, res = cfg.image_size / 2; b < a.num_blocks; ++b, res /= 2) {
        a.encoder_channels.push_back(std::clamp(256 / res, 8, 64));
    }
    return a;
}

GenerativeAutoencoder GenerativeAutoencoder::initialize(const ModelConfig& cfg, std::uint64_t seed) {
    const Architecture a = Architecture::from(cfg);
    std::mt19937_64 rng(seed);
    Weights enc = net::init_encoder(a, rng, cfg.d_w);
    Weights map = net::init_mapping(a, rng);
    Weights dec = net::init_decoder(a, rng);
    GenerativeAutoencoder m(cfg, std::move(enc), std::move(map), std::move(dec));
    m.info_.training_seed = seed;
    return m;
}

GenerativeAutoencoder::GenerativeAutoencoder(ModelConfig cfg, Weights encoder, Weights mapping,
                                             Weights decoder)
    : cfg_(cfg),
      arch_(Architecture::from(cfg)),
      encoder_(std::make_shared<Weights>(std::move(encoder))),
      mapping_(std::make_shared<Weights>(std::move(mapping))),
      decoder_(std::move(decoder)) {}

Weights& GenerativeAutoencoder::mutable_encoder() {
    if (encoder_.use_count() > 1) encoder_ = std::make_shared<Weights>(*encoder_);
    return *encoder_;
}

Weights& GenerativeAutoencoder::mutable_mapping() {
    if (mapping_.use_count() > 1) mapping_ = std::make_shared<Weights>(*mapping_);
    return *mapping_;
}

std::uint64_t GenerativeAutoencoder::hash() const {
    std::uint64_t h = weights_hash(*encoder_);
    h = h * 31 + weights_hash(*mapping_);
    h = h * 31 + weights_hash(decoder_);
    return h;
}

void validate_latent(const LatentCode& w, int d_w) {
    if (static_cast<int>(w.size()) != d_w) {
        throw DimensionError("latent has length " + std::to_string(w.size()) + ", expected " +
                             std::to_string(d_w));
    }
    for (double v : w.w) {
        if (!std::isfinite(v)) throw ValidationError("latent contains non-finite values");
    }
}

Tensor latent_tensor(const std::vector<LatentCode>& codes) {
    if (codes.empty()) throw ValidationError("latent_tensor: empty batch");
    const int d = static_cast<int>(codes.front().size());
    Tensor t({static_cast<int>(codes.size()), d});
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (static_cast<int>(codes[i].size()) != d) throw DimensionError("latent_tensor: ragged batch");
        std::copy(codes[i].w.begin(), codes[i].w.end(), t.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return t;
}

LatentCode latent_from_row(const Tensor& t, int row) {
    const int d = t.dim(1);
    LatentCode out;
    out.w.assign(t.data.begin() + static_cast<std::ptrdiff_t>(row) * d,
                 t.data.begin() + static_cast<std::ptrdiff_t>(row + 1) * d);
    return out;
}

namespace {

void require_eval(const GenerativeAutoencoder& m) {
    if (m.mode() != Mode::eval) throw ValidationError("model must be in eval mode");
}

}  // namespace

std::vector<LatentCode> encode_batch(const GenerativeAutoencoder& model,
                                     const std::vector<ImageTensor>& images) {
    require_eval(model);
    std::vector<LatentCode> out;
    out.reserve(images.size());
    constexpr std::size_t kChunk = 32;
    const VarMap p = bind_params(model.encoder(), false);
    for (std::size_t start = 0; start < images.size(); start += kChunk) {
        std::vector<const ImageTensor*> chunk;
        for (std::size_t i = start; i < std::min(images.size(), start + kChunk); ++i) {
            validate_model_image(images[i], model.image_size());
            chunk.push_back(&images[i]);
        }
        const ag::Var w = net::encoder_forward(p, ag::constant(to_tensor(chunk)), model.arch());
        for (int i = 0; i < static_cast<int>(chunk.size()); ++i) {
            out.push_back(latent_from_row(w.value(), i));
        }
    }
    return out;
}

LatentCode encode(const GenerativeAutoencoder& model, const ImageTensor& image) {
    return encode_batch(model, {image}).front();
}

ImageTensor decode(const GenerativeAutoencoder& model, const LatentCode& w) {
    require_eval(model);
    validate_latent(w, model.d_w());
    const ag::Var img = net::decoder_forward(bind_params(model.decoder(), false),
                                             ag::constant(latent_tensor({w})), model.arch());
    return from_tensor(img.value(), 0);
}

LatentCode sample_prior(const GenerativeAutoencoder& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor z({1, model.d_w()});
    for (double& v : z.data) v = normal(rng);
    const ag::Var w =
        net::mapping_forward(bind_params(model.mapping(), false), ag::constant(std::move(z)), model.arch());
    return latent_from_row(w.value(), 0);
}

namespace net {
namespace {

double he_std(int fan_in) { return std::sqrt(2.0 / (1.0 + kSlope * kSlope) / fan_in); }

const ag::Var& param(const VarMap& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw ValidationError("missing parameter " + name);
    return it->second;
}

}  // namespace

Weights init_encoder(const Architecture& a, std::mt19937_64& rng, int outputs) {
    Weights w;
    int in = 3;
    for (int i = 0; i < a.num_blocks; ++i) {
        const int out = a.encoder_channels[static_cast<std::size_t>(i)];
        const std::string base = "conv" + std::to_string(i);
        w[base + ".weight"] = normal_param({out, in, 3, 3}, he_std(in * 9), rng);
        w[base + ".bias"] = constant_param({out}, 0.0f);
        in = out;
    }
    const int flat = in * 16;
    w["fc.weight"] = normal_param({outputs, flat}, 1.0 / std::sqrt(flat), rng);
    w["fc.bias"] = constant_param({outputs}, 0.0f);
    return w;
}

Weights init_mapping(const Architecture& a, std::mt19937_64& rng) {
    Weights w;
    for (int i = 0; i < a.mapping_layers; ++i) {
        const std::string base = "fc" + std::to_string(i);
        w[base + ".weight"] = normal_param({a.d_w, a.d_w}, he_std(a.d_w), rng);
        w[base + ".bias"] = constant_param({a.d_w}, 0.0f);
    }
    return w;
}

Weights init_decoder(const Architecture& a, std::mt19937_64& rng) {
    Weights w;
    w["const"] = normal_param({1, a.const_channels, 4, 4}, 1.0, rng);
    int in = a.const_channels;
    for (int b = 0; b < a.num_blocks; ++b) {
        const int out = a.decoder_channels[static_cast<std::size_t>(b)];
        const std::string base = "block" + std::to_string(b);
        w[base + ".conv.weight"] = normal_param({out, in, 3, 3}, he_std(in * 9), rng);
        w[base + ".conv.bias"] = constant_param({out}, 0.0f);
        w[base + ".style.weight"] = normal_param({2 * out, a.d_w}, 0.2 / std::sqrt(a.d_w), rng);
        w[base + ".style.bias"] = constant_param({2 * out}, 0.0f);
        in = out;
    }
    w["to_rgb.weight"] = normal_param({3, in, 1, 1}, 0.5 / std::sqrt(in), rng);
    w["to_rgb.bias"] = constant_param({3}, 0.5f);
    return w;
}

ag::Var encoder_forward(const VarMap& p, const ag::Var& images, const Architecture& a) {
    const auto& s = images.shape();
    if (s.size() != 4 || s[1] != 3 || s[2] != a.image_size || s[3] != a.image_size) {
        throw DimensionError("encoder input must be [N, 3, S, S] at the model resolution");
    }
    ag::Var x = images;
    for (int i = 0; i < a.num_blocks; ++i) {
        const std::string base = "conv" + std::to_string(i);
        x = ag::leaky_relu(ag::conv2d(x, param(p, base + ".weight"), param(p, base + ".bias"), 2, 1),
                           kSlope);
    }
    const int n = x.shape()[0];
    const int flat = static_cast<int>(x.value().size()) / n;
    x = ag::reshape(x, {n, flat});
    return ag::linear(x, param(p, "fc.weight"), param(p, "fc.bias"));
}

ag::Var mapping_forward(const VarMap& p, const ag::Var& z, const Architecture& a) {
    if (z.shape().size() != 2 || z.shape()[1] != a.d_w) throw DimensionError("mapping input must be [N, d_w]");
    ag::Var x = z;
    for (int i = 0; i < a.mapping_layers; ++i) {
        const std::string base = "fc" + std::to_string(i);
        x = ag::leaky_relu(ag::linear(x, param(p, base + ".weight"), param(p, base + ".bias")), kSlope);
    }
    return x;
}

ag::Var decoder_forward(const VarMap& p, const ag::Var& w, const Architecture& a) {
    if (w.shape().size() != 2 || w.shape()[1] != a.d_w) throw DimensionError("decoder input must be [N, d_w]");
    const int n = w.shape()[0];
    ag::Var x = ag::repeat_batch(param(p, "const"), n);
    for (int b = 0; b < a.num_blocks; ++b) {
        const std::string base = "block" + std::to_string(b);
        x = ag::upsample2x(x);
        x = ag::conv2d(x, param(p, base + ".conv.weight"), param(p, base + ".conv.bias"), 1, 1);
        x = ag::instance_norm(x);
        const ag::Var style = ag::linear(w, param(p, base + ".style.weight"), param(p, base + ".style.bias"));
        x = ag::leaky_relu(ag::modulate(x, style), kSlope);
    }
    x = ag::conv2d(x, param(p, "to_rgb.weight"), param(p, "to_rgb.bias"), 1, 0);
    return ag::clamp(x, 0.0, 1.0);
}

}  // namespace net
}  // namespace idedit
