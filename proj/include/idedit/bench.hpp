#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "idedit/adaptation.hpp"
#include "idedit/editing.hpp"
#include "idedit/faces.hpp"
#include "idedit/inversion.hpp"
#include "idedit/metrics.hpp"
#include "json.hpp"

namespace idedit {

std::string code_version();

struct BenchPaths {
    std::filesystem::path checkpoint;
    std::filesystem::path dataset;     // directory written by make-dataset; empty = generate
    std::filesystem::path directions;  // directory of <attribute>.json files
    std::filesystem::path output;
};

struct BenchSeeds {
    std::uint64_t dataset = 2024;     // used when paths.dataset is empty
    std::uint64_t projection = 7;     // random projection seed base (plus image index)
    std::uint64_t swd = 0;
};

struct BenchConfig {
    std::vector<std::string> algorithms = algorithm_order();
    std::vector<std::string> attributes = attribute_order();
    int n_images = 100;
    std::vector<double> alphas{-3.0, -1.5, 0.0, 1.5, 3.0};  // latent std units along N
    BenchSeeds seeds;
    BenchPaths paths;
    AdaptationConfig adaptation;
    LatentOptConfig latent_opt;
    int workers = 1;
    bool deterministic = false;
    bool save_images = true;

    // Structural checks only; path existence is checked when a bench starts.
    void validate() const;
};

// Strict parse: unknown keys and wrong types raise ConfigError.
BenchConfig bench_config_from_json(const nlohmann::json& j);
nlohmann::json bench_config_to_json(const BenchConfig& c);
BenchConfig load_bench_config(const std::filesystem::path& path);

bool is_oneshot(const std::string& algorithm);

// Projected latent plus the model to decode it with. For one-shot variants the
// model is a private adapted copy; otherwise it is the shared source model.
struct Prepared {
    LatentCode latent;
    std::shared_ptr<const GenerativeAutoencoder> model;
    std::vector<double> adaptation_curve;
};

// Thread-safe memo of prepared variants keyed by (algorithm, image index).
// Lets the reconstruction and edit benches share one set of adaptations.
class PreparedCache {
public:
    std::optional<Prepared> get(const std::string& algorithm, int image) const;
    void put(const std::string& algorithm, int image, Prepared p);
    std::optional<LatentCode> get_latent_opt(int image) const;
    void put_latent_opt(int image, LatentCode w);
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::map<std::pair<std::string, int>, Prepared> prepared_;
    std::map<int, LatentCode> latent_opt_;
};

struct BenchContext {
    std::shared_ptr<const GenerativeAutoencoder> model;
    std::vector<ImageTensor> images;
    std::map<std::string, AttributeDirection> directions;
    std::shared_ptr<const FeatureExtractor> extractor;
};

// Loads the checkpoint, images and (optionally) directions named by the config.
BenchContext load_bench_context(const BenchConfig& config, bool need_directions);

// Runs one variant's projection (and adaptation) rule on one image.
Prepared prepare_variant(const std::string& algorithm, const BenchContext& ctx, int image_index,
                         const BenchConfig& config, PreparedCache* cache = nullptr);

using LogFn = std::function<void(const std::string&)>;

MetricsReport run_reconstruction_bench(const BenchConfig& config, PreparedCache* cache = nullptr,
                                       const LogFn& log = {});
MetricsReport run_reconstruction_bench(const BenchConfig& config, const BenchContext& ctx,
                                       PreparedCache* cache = nullptr, const LogFn& log = {});
MetricsReport run_edit_bench(const BenchConfig& config, PreparedCache* cache = nullptr, const LogFn& log = {});
MetricsReport run_edit_bench(const BenchConfig& config, const BenchContext& ctx, PreparedCache* cache = nullptr,
                             const LogFn& log = {});

// Persisted per-image record. attribute/alpha are absent for reconstruction.
struct BenchRecord {
    std::string algorithm;
    int image = 0;
    std::optional<std::string> attribute;
    std::optional<double> alpha;
    double ssim = 0.0, psnr = 0.0, swd = 0.0;
    FactorScores factors;
    std::optional<double> attribute_change;  // |measured attribute(edit) - measured attribute(alpha 0)|
};

nlohmann::json record_to_json(const BenchRecord& r);
BenchRecord record_from_json(const nlohmann::json& j);
// Reads a JSON-lines record file, ignoring a torn trailing line.
std::vector<BenchRecord> read_records(const std::filesystem::path& path);

// Rebuilds a report (rows, supplementary, metadata) from a report.json file.
MetricsReport load_report(const std::filesystem::path& path);

}  // namespace idedit
