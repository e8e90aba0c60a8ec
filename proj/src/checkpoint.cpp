#include "idedit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "idedit/errors.hpp"
#include "json.hpp"

namespace idedit {
namespace {

using nlohmann::json;

constexpr char kMagic[] = "ALAE-TOY\x01";
constexpr std::size_t kMagicSize = sizeof(kMagic) - 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void append_group(json& tensors, std::string& blob, const std::string& group, const Weights& w) {
    for (const auto& [name, p] : w) {
        const std::size_t nbytes = p.value.size() * sizeof(float);
        tensors.push_back({{"name", group + "/" + name},
                           {"dtype", "float32"},
                           {"shape", p.shape},
                           {"offset", blob.size()},
                           {"nbytes", nbytes}});
        blob.append(reinterpret_cast<const char*>(p.value.data()), nbytes);
    }
}

}  // namespace

std::string serialize_checkpoint(const GenerativeAutoencoder& model) {
    json tensors = json::array();
    std::string blob;
    append_group(tensors, blob, "encoder", model.encoder());
    append_group(tensors, blob, "mapping", model.mapping());
    append_group(tensors, blob, "decoder", model.decoder());

    const ModelInfo& info = model.info();
    json manifest = {
        {"format_version", kCheckpointFormatVersion},
        {"metadata",
         {{"image_size", model.image_size()},
          {"d_w", model.d_w()},
          {"mapping_layers", model.config().mapping_layers},
          {"training_seed", info.training_seed},
          {"dataset", info.dataset},
          {"epoch_losses", info.epoch_losses}}},
        {"tensors", tensors},
        {"blob_bytes", blob.size()},
    };
    const std::string text = manifest.dump();
    const auto len = static_cast<std::uint32_t>(text.size());

    std::string out(kMagic, kMagicSize);
    out.append(reinterpret_cast<const char*>(&len), sizeof len);
    out += text;
    out += blob;
    return out;
}

GenerativeAutoencoder deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < kMagicSize || bytes.compare(0, kMagicSize, kMagic, kMagicSize) != 0) {
        throw CheckpointFormatError("bad checkpoint magic");
    }
    if (bytes.size() < kMagicSize + 4) throw CheckpointTruncatedError("checkpoint header truncated");
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data() + kMagicSize, sizeof len);
    const std::size_t body = kMagicSize + 4;
    if (bytes.size() < body + len) throw CheckpointTruncatedError("checkpoint manifest truncated");

    json manifest;
    try {
        manifest = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(body),
                               bytes.begin() + static_cast<std::ptrdiff_t>(body + len));
    } catch (const json::exception& e) {
        throw CheckpointFormatError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
    }

    try {
        const int version = manifest.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion) {
            throw CheckpointVersionError("unsupported checkpoint format_version " + std::to_string(version));
        }
        const std::size_t blob_start = body + len;
        const auto blob_bytes = manifest.at("blob_bytes").get<std::size_t>();
        if (bytes.size() < blob_start + blob_bytes) throw CheckpointTruncatedError("checkpoint blob truncated");
        if (bytes.size() > blob_start + blob_bytes) throw CheckpointFormatError("trailing bytes after blob");

        const json& meta = manifest.at("metadata");
        ModelConfig cfg;
        cfg.image_size = meta.at("image_size").get<int>();
        cfg.d_w = meta.at("d_w").get<int>();
        cfg.mapping_layers = meta.at("mapping_layers").get<int>();

        Weights groups[3];
        for (const json& t : manifest.at("tensors")) {
            if (t.at("dtype").get<std::string>() != "float32") throw CheckpointFormatError("unsupported dtype");
            const auto full = t.at("name").get<std::string>();
            const auto slash = full.find('/');
            if (slash == std::string::npos) throw CheckpointFormatError("tensor name without group: " + full);
            const std::string group = full.substr(0, slash);
            int gi = group == "encoder" ? 0 : group == "mapping" ? 1 : group == "decoder" ? 2 : -1;
            if (gi < 0) throw CheckpointFormatError("unknown tensor group " + group);

            Param p;
            p.shape = t.at("shape").get<std::vector<int>>();
            const std::size_t n = Tensor::count(p.shape);
            const auto offset = t.at("offset").get<std::size_t>();
            const auto nbytes = t.at("nbytes").get<std::size_t>();
            if (nbytes != n * sizeof(float)) throw CheckpointFormatError("tensor size mismatch for " + full);
            if (offset + nbytes > blob_bytes) throw CheckpointFormatError("tensor out of blob range: " + full);
            p.value.resize(n);
            std::memcpy(p.value.data(), bytes.data() + blob_start + offset, nbytes);
            groups[gi][full.substr(slash + 1)] = std::move(p);
        }

        GenerativeAutoencoder model(cfg, std::move(groups[0]), std::move(groups[1]), std::move(groups[2]));
        // Structural check: the stored tensors must match a freshly planned model.
        const auto reference = GenerativeAutoencoder::initialize(cfg, 0);
        auto same_layout = [](const Weights& a, const Weights& b) {
            if (a.size() != b.size()) return false;
            for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
                if (ia->first != ib->first || ia->second.shape != ib->second.shape) return false;
            }
            return true;
        };
        if (!same_layout(model.encoder(), reference.encoder()) ||
            !same_layout(model.mapping(), reference.mapping()) ||
            !same_layout(model.decoder(), reference.decoder())) {
            throw CheckpointFormatError("checkpoint tensors do not match the declared architecture");
        }
        model.info().training_seed = meta.value("training_seed", std::uint64_t{0});
        model.info().dataset = meta.value("dataset", std::string{});
        model.info().epoch_losses = meta.value("epoch_losses", std::vector<double>{});
        return model;
    } catch (const json::exception& e) {
        throw CheckpointFormatError(std::string("malformed checkpoint manifest: ") + e.what());
    } catch (const ValidationError& e) {
        throw CheckpointFormatError(std::string("invalid checkpoint architecture: ") + e.what());
    }
}

void save_checkpoint(const GenerativeAutoencoder& model, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::string bytes = serialize_checkpoint(model);
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

GenerativeAutoencoder load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}  // namespace idedit
