#include "idedit/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "idedit/checkpoint.hpp"
#include "idedit/errors.hpp"
#include "idedit/grid.hpp"

namespace idedit {

using nlohmann::json;

std::string code_version() { return "idedit 0.1.0"; }

bool is_oneshot(const std::string& algorithm) { return algorithm.rfind("oneshot_", 0) == 0; }

// ---------------------------------------------------------------- config

void BenchConfig::validate() const {
    if (algorithms.empty()) throw ConfigError("algorithms must be nonempty");
    std::set<std::string> seen;
    for (const auto& a : algorithms) {
        if (std::find(algorithm_order().begin(), algorithm_order().end(), a) == algorithm_order().end()) {
            throw ConfigError("unknown algorithm " + a);
        }
        if (!seen.insert(a).second) throw ConfigError("duplicate algorithm " + a);
    }
    seen.clear();
    for (const auto& a : attributes) {
        if (std::find(attribute_order().begin(), attribute_order().end(), a) == attribute_order().end()) {
            throw ConfigError("unknown attribute " + a);
        }
        if (!seen.insert(a).second) throw ConfigError("duplicate attribute " + a);
    }
    if (n_images < 1) throw ConfigError("n_images must be >= 1");
    if (alphas.empty()) throw ConfigError("alphas must be nonempty");
    for (double a : alphas) {
        if (!std::isfinite(a)) throw ConfigError("alphas must be finite");
    }
    if (!std::is_sorted(alphas.begin(), alphas.end())) throw ConfigError("alphas must be sorted");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (paths.checkpoint.empty()) throw ConfigError("paths.checkpoint is required");
    if (paths.output.empty()) throw ConfigError("paths.output is required");
    try {
        adaptation.validate();
        latent_opt.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) throw ConfigError("unknown config key " + where + "." + k);
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

BenchConfig bench_config_from_json(const json& j) {
    BenchConfig c;
    try {
        check_keys(j,
                   {"algorithms", "attributes", "n_images", "alphas", "seeds", "paths", "adaptation", "latent_opt",
                    "workers", "deterministic", "save_images"},
                   "config");
        read(j, "algorithms", c.algorithms);
        read(j, "attributes", c.attributes);
        read(j, "n_images", c.n_images);
        read(j, "alphas", c.alphas);
        read(j, "workers", c.workers);
        read(j, "deterministic", c.deterministic);
        read(j, "save_images", c.save_images);
        if (j.contains("seeds")) {
            const json& s = j.at("seeds");
            check_keys(s, {"dataset", "projection", "swd"}, "seeds");
            read(s, "dataset", c.seeds.dataset);
            read(s, "projection", c.seeds.projection);
            read(s, "swd", c.seeds.swd);
        }
        if (j.contains("paths")) {
            const json& p = j.at("paths");
            check_keys(p, {"checkpoint", "dataset", "directions", "output"}, "paths");
            if (p.contains("checkpoint")) c.paths.checkpoint = p.at("checkpoint").get<std::string>();
            if (p.contains("dataset")) c.paths.dataset = p.at("dataset").get<std::string>();
            if (p.contains("directions")) c.paths.directions = p.at("directions").get<std::string>();
            if (p.contains("output")) c.paths.output = p.at("output").get<std::string>();
        }
        if (j.contains("adaptation")) {
            const json& a = j.at("adaptation");
            check_keys(a, {"lambda_mse", "lambda_vgg", "steps", "step_size", "seed"}, "adaptation");
            read(a, "lambda_mse", c.adaptation.lambda_mse);
            read(a, "lambda_vgg", c.adaptation.lambda_vgg);
            read(a, "steps", c.adaptation.steps);
            read(a, "step_size", c.adaptation.step_size);
            read(a, "seed", c.adaptation.seed);
        }
        if (j.contains("latent_opt")) {
            const json& l = j.at("latent_opt");
            check_keys(l, {"steps", "step_size", "seed", "init", "lambda_mse", "lambda_vgg"}, "latent_opt");
            read(l, "steps", c.latent_opt.steps);
            read(l, "step_size", c.latent_opt.step_size);
            read(l, "seed", c.latent_opt.seed);
            read(l, "lambda_mse", c.latent_opt.lambda_mse);
            read(l, "lambda_vgg", c.latent_opt.lambda_vgg);
            if (l.contains("init")) {
                const auto init = l.at("init").get<std::string>();
                if (init == "encoder") c.latent_opt.init = LatentInit::encoder;
                else if (init == "prior") c.latent_opt.init = LatentInit::prior;
                else throw ConfigError("latent_opt.init must be \"encoder\" or \"prior\"");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    if (c.deterministic) c.workers = 1;
    c.validate();
    return c;
}

json bench_config_to_json(const BenchConfig& c) {
    return {
        {"algorithms", c.algorithms},
        {"attributes", c.attributes},
        {"n_images", c.n_images},
        {"alphas", c.alphas},
        {"seeds", {{"dataset", c.seeds.dataset}, {"projection", c.seeds.projection}, {"swd", c.seeds.swd}}},
        {"paths",
         {{"checkpoint", c.paths.checkpoint.string()},
          {"dataset", c.paths.dataset.string()},
          {"directions", c.paths.directions.string()},
          {"output", c.paths.output.string()}}},
        {"adaptation",
         {{"lambda_mse", c.adaptation.lambda_mse},
          {"lambda_vgg", c.adaptation.lambda_vgg},
          {"steps", c.adaptation.steps},
          {"step_size", c.adaptation.step_size},
          {"seed", c.adaptation.seed}}},
        {"latent_opt",
         {{"steps", c.latent_opt.steps},
          {"step_size", c.latent_opt.step_size},
          {"seed", c.latent_opt.seed},
          {"init", c.latent_opt.init == LatentInit::encoder ? "encoder" : "prior"},
          {"lambda_mse", c.latent_opt.lambda_mse},
          {"lambda_vgg", c.latent_opt.lambda_vgg}}},
        {"workers", c.workers},
        {"deterministic", c.deterministic},
        {"save_images", c.save_images},
    };
}

BenchConfig load_bench_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return bench_config_from_json(j);
}

// ---------------------------------------------------------------- cache

std::optional<Prepared> PreparedCache::get(const std::string& algorithm, int image) const {
    std::lock_guard lock(mu_);
    auto it = prepared_.find({algorithm, image});
    if (it == prepared_.end()) return std::nullopt;
    return it->second;
}

void PreparedCache::put(const std::string& algorithm, int image, Prepared p) {
    std::lock_guard lock(mu_);
    prepared_[{algorithm, image}] = std::move(p);
}

std::optional<LatentCode> PreparedCache::get_latent_opt(int image) const {
    std::lock_guard lock(mu_);
    auto it = latent_opt_.find(image);
    if (it == latent_opt_.end()) return std::nullopt;
    return it->second;
}

void PreparedCache::put_latent_opt(int image, LatentCode w) {
    std::lock_guard lock(mu_);
    latent_opt_[image] = std::move(w);
}

std::size_t PreparedCache::size() const {
    std::lock_guard lock(mu_);
    return prepared_.size();
}

// ---------------------------------------------------------------- context

BenchContext load_bench_context(const BenchConfig& config, bool need_directions) {
    config.validate();
    BenchContext ctx;
    if (!std::filesystem::exists(config.paths.checkpoint)) {
        throw ConfigError("checkpoint not found: " + config.paths.checkpoint.string());
    }
    auto model = std::make_shared<GenerativeAutoencoder>(load_checkpoint(config.paths.checkpoint));
    model->set_mode(Mode::eval);
    ctx.model = model;

    if (!config.paths.dataset.empty()) {
        if (!std::filesystem::is_directory(config.paths.dataset)) {
            throw ConfigError("dataset directory not found: " + config.paths.dataset.string());
        }
        SyntheticDataset ds = read_dataset(config.paths.dataset);
        if (static_cast<int>(ds.size()) < config.n_images) {
            throw ConfigError("dataset has " + std::to_string(ds.size()) + " images, config asks for " +
                              std::to_string(config.n_images));
        }
        ds.images.resize(static_cast<std::size_t>(config.n_images));
        for (auto& img : ds.images) {
            if (img.height != model->image_size()) img = resize_square(img, model->image_size());
        }
        ctx.images = std::move(ds.images);
    } else {
        ctx.images = generate_dataset(config.seeds.dataset, config.n_images, model->image_size()).images;
    }

    if (need_directions) {
        if (config.paths.directions.empty() || !std::filesystem::is_directory(config.paths.directions)) {
            throw ConfigError("directions directory not found: " + config.paths.directions.string());
        }
        for (const auto& attr : config.attributes) {
            const auto p = config.paths.directions / (attr + ".json");
            if (!std::filesystem::exists(p)) throw ConfigError("missing direction file " + p.string());
            AttributeDirection d = load_direction(p);
            if (d.d_w() != model->d_w()) throw ConfigError("direction " + attr + " has wrong d_w");
            ctx.directions[attr] = std::move(d);
        }
    }
    ctx.extractor = default_extractor();
    return ctx;
}

Prepared prepare_variant(const std::string& algorithm, const BenchContext& ctx, int image_index,
                         const BenchConfig& config, PreparedCache* cache) {
    if (cache) {
        if (auto hit = cache->get(algorithm, image_index)) return *hit;
    }
    const GenerativeAutoencoder& source = *ctx.model;
    const ImageTensor& image = ctx.images.at(static_cast<std::size_t>(image_index));

    auto latent_opt = [&]() {
        if (cache) {
            if (auto hit = cache->get_latent_opt(image_index)) return *hit;
        }
        LatentOptConfig lc = config.latent_opt;
        lc.record_curve = false;
        LatentCode w = project_latent_opt(source, image, lc, *ctx.extractor).latent;
        if (cache) cache->put_latent_opt(image_index, w);
        return w;
    };

    Prepared p;
    if (algorithm == "vanilla" || algorithm == "oneshot_encoder") {
        p.latent = project_encoder(source, image);
    } else if (algorithm == "latent_opt" || algorithm == "oneshot_latent_opt") {
        p.latent = latent_opt();
    } else if (algorithm == "oneshot_random") {
        p.latent = project_random(source, config.seeds.projection + static_cast<std::uint64_t>(image_index));
    } else {
        throw ConfigError("unknown algorithm " + algorithm);
    }

    if (is_oneshot(algorithm)) {
        AdaptationResult r = adapt_decoder(source, p.latent, image, config.adaptation, *ctx.extractor);
        p.adaptation_curve = std::move(r.loss_curve);
        p.model = std::make_shared<const GenerativeAutoencoder>(std::move(r.adapted_model));
    } else {
        p.model = ctx.model;
    }
    if (cache) cache->put(algorithm, image_index, p);
    return p;
}

// ---------------------------------------------------------------- records

json record_to_json(const BenchRecord& r) {
    json j = {{"algorithm", r.algorithm}, {"image", r.image}};
    j["attribute"] = r.attribute ? json(*r.attribute) : json(nullptr);
    j["alpha"] = r.alpha ? json(*r.alpha) : json(nullptr);
    j["ssim"] = r.ssim;
    j["psnr"] = finite_or_inf(r.psnr);
    j["swd"] = r.swd;
    j["identity_error"] = r.factors.identity_error;
    j["identity_errors"] = r.factors.identity_errors;
    j["attribute_errors"] = r.factors.attribute_errors;
    if (r.attribute_change) j["attribute_change"] = *r.attribute_change;
    return j;
}

BenchRecord record_from_json(const json& j) {
    BenchRecord r;
    r.algorithm = j.at("algorithm").get<std::string>();
    r.image = j.at("image").get<int>();
    if (!j.at("attribute").is_null()) r.attribute = j.at("attribute").get<std::string>();
    if (!j.at("alpha").is_null()) r.alpha = j.at("alpha").get<double>();
    r.ssim = j.at("ssim").get<double>();
    r.psnr = number_or_inf(j.at("psnr"));
    r.swd = j.at("swd").get<double>();
    r.factors.identity_error = j.at("identity_error").get<double>();
    r.factors.identity_errors = j.at("identity_errors").get<std::map<std::string, double>>();
    r.factors.attribute_errors = j.at("attribute_errors").get<std::map<std::string, double>>();
    if (j.contains("attribute_change")) r.attribute_change = j.at("attribute_change").get<double>();
    return r;
}

std::vector<BenchRecord> read_records(const std::filesystem::path& path) {
    std::vector<BenchRecord> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception&) {
            // torn write from an interrupted run; the pair is recomputed
        }
    }
    return out;
}

MetricsReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read report " + path.string());
    try {
        json j;
        in >> j;
        return report_from_json(j);
    } catch (const json::exception& e) {
        throw ConfigError("malformed report " + path.string() + ": " + e.what());
    }
}

namespace {

std::string image_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%05d", index);
    return buf;
}

std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string alpha_key(double a) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", a);
    return buf;
}

int rank(const std::vector<std::string>& order, const std::string& key) {
    auto it = std::find(order.begin(), order.end(), key);
    return static_cast<int>(it - order.begin());
}

void sort_records(std::vector<BenchRecord>& records) {
    std::sort(records.begin(), records.end(), [](const BenchRecord& a, const BenchRecord& b) {
        auto key = [](const BenchRecord& r) {
            return std::make_tuple(rank(algorithm_order(), r.algorithm),
                                   r.attribute ? rank(attribute_order(), *r.attribute) : -1, r.image,
                                   r.alpha.value_or(0.0));
        };
        return key(a) < key(b);
    });
}

// Rewrites the record file keeping only complete (algorithm, image) groups,
// so a torn tail from an interrupted run cannot leave partial groups behind.
std::set<std::pair<std::string, int>> load_completed(const std::filesystem::path& path, std::size_t per_pair,
                                                     std::vector<BenchRecord>& kept) {
    std::map<std::pair<std::string, int>, std::vector<BenchRecord>> groups;
    for (auto& r : read_records(path)) groups[{r.algorithm, r.image}].push_back(std::move(r));
    std::set<std::pair<std::string, int>> done;
    std::ofstream out(path, std::ios::trunc);
    for (auto& [key, recs] : groups) {
        if (recs.size() != per_pair) continue;
        done.insert(key);
        for (auto& r : recs) {
            out << record_to_json(r).dump() << '\n';
            kept.push_back(std::move(r));
        }
    }
    return done;
}

// Runs fn(i) for i in [0, n) on `workers` threads. The first exception is rethrown.
void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> threads;
    for (int t = 0; t < std::min(workers, n); ++t) {
        threads.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                {
                    std::lock_guard lock(error_mu);
                    if (error) return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : threads) th.join();
    if (error) std::rethrow_exception(error);
}

class RecordSink {
public:
    explicit RecordSink(std::filesystem::path path) : path_(std::move(path)) {}

    void append(const std::vector<BenchRecord>& group, std::vector<BenchRecord>& all) {
        std::string text;
        std::vector<BenchRecord> parsed;
        for (const auto& r : group) {
            const std::string line = record_to_json(r).dump();
            // Keep exactly what a resumed run would read back.
            parsed.push_back(record_from_json(json::parse(line)));
            text += line + '\n';
        }
        std::lock_guard lock(mu_);
        std::ofstream out(path_, std::ios::app);
        if (!out) throw IoError("cannot append to " + path_.string());
        out << text;
        out.flush();
        for (auto& r : parsed) all.push_back(std::move(r));
    }

private:
    std::filesystem::path path_;
    std::mutex mu_;
};

void require_pristine(const GenerativeAutoencoder& model, std::uint64_t expected) {
    if (model.hash() != expected) throw std::runtime_error("source model weights changed during the benchmark");
}

json base_metadata(const BenchConfig& config, const BenchContext& ctx, const std::string& bench) {
    SwdParams sp;
    // The output directory is left out so reruns elsewhere produce identical reports.
    json echo = bench_config_to_json(config);
    echo["paths"].erase("output");
    return {
        {"bench", bench},
        {"code_version", code_version()},
        {"config", echo},
        {"checkpoint_hash", hex(ctx.model->hash())},
        {"extractor_hash", hex(ctx.extractor->hash())},
        {"swd",
         {{"patch", sp.patch},
          {"stride", sp.stride},
          {"levels", sp.levels},
          {"projections", sp.projections},
          {"scale", sp.scale},
          {"seed", config.seeds.swd}}},
        {"std", "population"},
        {"psnr_infinity", "serialized as \"inf\" and excluded from means"},
    };
}

void write_report(const MetricsReport& report, const std::filesystem::path& dir, const std::string& stem) {
    {
        std::ofstream out(dir / (stem + ".json"));
        if (!out) throw IoError("cannot write report in " + dir.string());
        out << report_to_json(report).dump(2) << '\n';
    }
    std::ofstream out(dir / (stem + ".txt"));
    out << report_to_text(report);
}

std::vector<MetricRecord> metric_records(const std::vector<BenchRecord>& records) {
    std::vector<MetricRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back({r.algorithm, r.attribute, r.ssim, r.psnr, r.swd});
    return out;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace

// ---------------------------------------------------------------- benches

MetricsReport run_reconstruction_bench(const BenchConfig& config, PreparedCache* cache, const LogFn& log) {
    return run_reconstruction_bench(config, load_bench_context(config, false), cache, log);
}

MetricsReport run_reconstruction_bench(const BenchConfig& config, const BenchContext& ctx, PreparedCache* cache,
                                       const LogFn& log) {
    config.validate();
    const auto& out_dir = config.paths.output;
    std::filesystem::create_directories(out_dir);
    const auto record_path = out_dir / "records_recon.jsonl";
    if (config.save_images) {
        for (const auto& alg : config.algorithms) std::filesystem::create_directories(out_dir / "images" / alg);
    }
    const std::uint64_t pristine = ctx.model->hash();

    std::vector<BenchRecord> records;
    const auto done = load_completed(record_path, 1, records);
    std::erase_if(records, [&](const BenchRecord& r) {
        return r.image >= config.n_images ||
               std::find(config.algorithms.begin(), config.algorithms.end(), r.algorithm) == config.algorithms.end();
    });
    PreparedCache local;
    PreparedCache* memo = cache ? cache : &local;
    RecordSink sink(record_path);
    std::mutex mu;

    parallel_for(config.n_images, config.workers, [&](int i) {
        const ImageTensor& input = ctx.images[static_cast<std::size_t>(i)];
        for (const auto& alg : config.algorithms) {
            if (done.count({alg, i})) continue;
            require_pristine(*ctx.model, pristine);
            const Prepared p = prepare_variant(alg, ctx, i, config, memo);
            const ImageTensor recon = decode(*p.model, p.latent);
            BenchRecord r;
            r.algorithm = alg;
            r.image = i;
            r.ssim = ssim(input, recon);
            r.psnr = psnr(input, recon);
            r.swd = swd(input, recon, config.seeds.swd);
            r.factors = factor_scores(input, recon);
            if (config.save_images) write_png(out_dir / "images" / alg / (image_name(i) + ".png"), recon);
            {
                std::lock_guard lock(mu);
                sink.append({r}, records);
            }
            if (log) log("recon " + alg + " " + image_name(i) + " ssim=" + std::to_string(r.ssim));
        }
        require_pristine(*ctx.model, pristine);
    });

    sort_records(records);
    MetricsReport report = aggregate(metric_records(records));
    report.metadata = base_metadata(config, ctx, "reconstruction");
    json identity = json::object();
    for (const auto& alg : config.algorithms) {
        std::vector<double> errs;
        for (const auto& r : records) {
            if (r.algorithm == alg) errs.push_back(r.factors.identity_error);
        }
        const auto [m, s] = mean_std(errs);
        identity[alg] = {{"identity_error_mean", m}, {"identity_error_std", s}, {"n", errs.size()}};
    }
    report.supplementary["identity"] = identity;
    json per_image = json::array();
    for (const auto& r : records) per_image.push_back(record_to_json(r));
    report.supplementary["per_image"] = per_image;
    write_report(report, out_dir, "report_recon");
    return report;
}

MetricsReport run_edit_bench(const BenchConfig& config, PreparedCache* cache, const LogFn& log) {
    return run_edit_bench(config, load_bench_context(config, true), cache, log);
}

MetricsReport run_edit_bench(const BenchConfig& config, const BenchContext& ctx, PreparedCache* cache,
                             const LogFn& log) {
    config.validate();
    if (config.attributes.empty()) throw ConfigError("edit bench needs at least one attribute");
    for (const auto& a : config.attributes) {
        if (!ctx.directions.count(a)) throw ConfigError("missing direction for attribute " + a);
    }
    const auto& out_dir = config.paths.output;
    std::filesystem::create_directories(out_dir);
    const auto record_path = out_dir / "records_edit.jsonl";
    if (config.save_images) std::filesystem::create_directories(out_dir / "grids");
    const std::uint64_t pristine = ctx.model->hash();

    std::vector<double> edit_alphas;
    for (double a : config.alphas) {
        if (a != 0.0) edit_alphas.push_back(a);
    }
    if (edit_alphas.empty()) throw ConfigError("edit bench needs a nonzero alpha");
    const std::size_t per_pair = edit_alphas.size() * config.attributes.size();

    std::vector<BenchRecord> records;
    const auto done = load_completed(record_path, per_pair, records);
    std::erase_if(records, [&](const BenchRecord& r) {
        return r.image >= config.n_images ||
               std::find(config.algorithms.begin(), config.algorithms.end(), r.algorithm) == config.algorithms.end();
    });
    PreparedCache local;
    PreparedCache* memo = cache ? cache : &local;
    RecordSink sink(record_path);
    std::mutex mu;

    parallel_for(config.n_images, config.workers, [&](int i) {
        const ImageTensor& input = ctx.images[static_cast<std::size_t>(i)];
        std::vector<std::filesystem::path> grid_paths;
        bool grids_present = true;
        for (const auto& attr : config.attributes) {
            grid_paths.push_back(out_dir / "grids" / (image_name(i) + "_" + attr + ".png"));
            grids_present = grids_present && std::filesystem::exists(grid_paths.back());
        }
        bool all_done = true;
        for (const auto& alg : config.algorithms) all_done = all_done && done.count({alg, i});
        if (all_done && (grids_present || !config.save_images)) return;

        std::map<std::string, std::vector<GridRow>> grid_rows;
        for (const auto& alg : config.algorithms) {
            const bool pair_done = done.count({alg, i}) > 0;
            require_pristine(*ctx.model, pristine);
            const Prepared p = prepare_variant(alg, ctx, i, config, memo);
            std::vector<BenchRecord> group;
            for (const auto& attr : config.attributes) {
                const AttributeDirection& dir = ctx.directions.at(attr);
                std::vector<double> raw;
                for (double a : config.alphas) raw.push_back(a * dir.projection_std);
                EditTrajectory traj = make_trajectory(*p.model, p.latent, dir, raw);
                traj.alphas = config.alphas;
                const ImageTensor base = decode(*p.model, p.latent);
                const double base_attr = factor_value(measure_factors(base), attr);
                if (!pair_done) {
                    for (std::size_t k = 0; k < config.alphas.size(); ++k) {
                        if (config.alphas[k] == 0.0) continue;
                        const ImageTensor& edited = traj.images[k];
                        BenchRecord r;
                        r.algorithm = alg;
                        r.image = i;
                        r.attribute = attr;
                        r.alpha = config.alphas[k];
                        r.ssim = ssim(input, edited);
                        r.psnr = psnr(input, edited);
                        r.swd = swd(input, edited, config.seeds.swd);
                        r.factors = factor_scores(input, edited);
                        r.attribute_change = std::abs(factor_value(measure_factors(edited), attr) - base_attr);
                        group.push_back(std::move(r));
                    }
                }
                grid_rows[attr].push_back({algorithm_label(alg), std::move(traj)});
            }
            if (!pair_done) {
                std::lock_guard lock(mu);
                sink.append(group, records);
            }
            if (log) log("edit " + alg + " " + image_name(i));
        }
        if (config.save_images) {
            for (std::size_t a = 0; a < config.attributes.size(); ++a) {
                emit_grids(grid_rows[config.attributes[a]], grid_paths[a]);
            }
        }
        require_pristine(*ctx.model, pristine);
    });

    sort_records(records);
    MetricsReport report = aggregate(metric_records(records));
    report.metadata = base_metadata(config, ctx, "edit");
    report.metadata["alpha_units"] = "latent standard deviations along the attribute normal";
    json dirs = json::object();
    for (const auto& [name, d] : ctx.directions) {
        dirs[name] = {{"train_accuracy", d.train_accuracy}, {"projection_std", d.projection_std}};
    }
    report.metadata["directions"] = dirs;

    // Oracle disentanglement: identity drift vs intended attribute change.
    json dis = json::array();
    for (const auto& alg : config.algorithms) {
        for (const auto& attr : config.attributes) {
            json by_alpha = json::object();
            std::vector<double> id_all, ch_all;
            for (double a : edit_alphas) {
                std::vector<double> id, ch;
                for (const auto& r : records) {
                    if (r.algorithm == alg && r.attribute == attr && r.alpha == a) {
                        id.push_back(r.factors.identity_error);
                        ch.push_back(r.attribute_change.value_or(0.0));
                    }
                }
                id_all.insert(id_all.end(), id.begin(), id.end());
                ch_all.insert(ch_all.end(), ch.begin(), ch.end());
                by_alpha[alpha_key(a)] = {{"identity_error_mean", mean_std(id).first},
                                          {"attribute_change_mean", mean_std(ch).first},
                                          {"n", id.size()}};
            }
            const auto [im, is] = mean_std(id_all);
            const auto [cm, cs] = mean_std(ch_all);
            dis.push_back({{"algorithm", alg},
                           {"attribute", attr},
                           {"identity_error_mean", im},
                           {"identity_error_std", is},
                           {"attribute_change_mean", cm},
                           {"attribute_change_std", cs},
                           {"by_alpha", by_alpha}});
        }
    }
    report.supplementary["disentanglement"] = dis;
    json per_image = json::array();
    for (const auto& r : records) per_image.push_back(record_to_json(r));
    report.supplementary["per_image"] = per_image;
    write_report(report, out_dir, "report_edit");
    return report;
}

}  // namespace idedit
