#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "idedit/autograd.hpp"
#include "idedit/image.hpp"
#include "idedit/weights.hpp"

namespace idedit {

// A single style vector w, broadcast to every decoder style layer.
struct LatentCode {
    std::vector<double> w;

    std::size_t size() const { return w.size(); }
    friend bool operator==(const LatentCode&, const LatentCode&) = default;
};

struct ModelConfig {
    int image_size = 64;
    int d_w = 128;
    int mapping_layers = 3;
};

// Layer plan derived from a ModelConfig.
struct Architecture {
    int image_size;
    int d_w;
    int mapping_layers;
    int num_blocks;                    // encoder convs == decoder style blocks
    int const_channels;                // decoder 4x4 input
    std::vector<int> decoder_channels; // output channels per style block
    std::vector<int> encoder_channels; // output channels per strided conv

    static Architecture from(const ModelConfig& cfg);
};

enum class Mode { train, eval };

// Metadata persisted alongside weights.
struct ModelInfo {
    std::uint64_t training_seed = 0;
    std::string dataset;
    std::vector<double> epoch_losses;
};

// Encoder E, mapping network F and style decoder D. Copies share the
// immutable encoder/mapping storage and deep-copy the decoder; mutable
// accessors detach shared storage first.
class GenerativeAutoencoder {
public:
    static GenerativeAutoencoder initialize(const ModelConfig& cfg, std::uint64_t seed);
    GenerativeAutoencoder(ModelConfig cfg, Weights encoder, Weights mapping, Weights decoder);

    const ModelConfig& config() const { return cfg_; }
    const Architecture& arch() const { return arch_; }
    int d_w() const { return cfg_.d_w; }
    int image_size() const { return cfg_.image_size; }
    int num_style_layers() const { return arch_.num_blocks; }

    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }

    const Weights& encoder() const { return *encoder_; }
    const Weights& mapping() const { return *mapping_; }
    const Weights& decoder() const { return decoder_; }
    Weights& mutable_encoder();
    Weights& mutable_mapping();
    Weights& mutable_decoder() { return decoder_; }

    ModelInfo& info() { return info_; }
    const ModelInfo& info() const { return info_; }

    std::uint64_t hash() const;
    std::uint64_t decoder_hash() const { return weights_hash(decoder_); }

private:
    ModelConfig cfg_;
    Architecture arch_;
    Mode mode_ = Mode::eval;
    std::shared_ptr<Weights> encoder_;
    std::shared_ptr<Weights> mapping_;
    Weights decoder_;
    ModelInfo info_;
};

LatentCode encode(const GenerativeAutoencoder& model, const ImageTensor& image);
ImageTensor decode(const GenerativeAutoencoder& model, const LatentCode& w);
LatentCode sample_prior(const GenerativeAutoencoder& model, std::uint64_t seed);

std::vector<LatentCode> encode_batch(const GenerativeAutoencoder& model,
                                     const std::vector<ImageTensor>& images);

void validate_latent(const LatentCode& w, int d_w);

Tensor latent_tensor(const std::vector<LatentCode>& codes);
LatentCode latent_from_row(const Tensor& t, int row);

// Graph builders used by training, inversion and adaptation.
namespace net {

Weights init_encoder(const Architecture& a, std::mt19937_64& rng, int outputs);
Weights init_mapping(const Architecture& a, std::mt19937_64& rng);
Weights init_decoder(const Architecture& a, std::mt19937_64& rng);

// images: [N, 3, S, S] -> [N, outputs]. Shared by encoder and discriminator.
ag::Var encoder_forward(const VarMap& p, const ag::Var& images, const Architecture& a);
// z: [N, d_w] -> w: [N, d_w]
ag::Var mapping_forward(const VarMap& p, const ag::Var& z, const Architecture& a);
// w: [N, d_w] -> images in [0, 1]: [N, 3, S, S]
ag::Var decoder_forward(const VarMap& p, const ag::Var& w, const Architecture& a);

}  // namespace net

}  // namespace idedit
