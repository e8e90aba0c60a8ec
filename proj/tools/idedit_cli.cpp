#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "idedit/adaptation.hpp"
#include "idedit/bench.hpp"
#include "idedit/checkpoint.hpp"
#include "idedit/editing.hpp"
#include "idedit/errors.hpp"
#include "idedit/faces.hpp"
#include "idedit/grid.hpp"
#include "idedit/inversion.hpp"
#include "idedit/service.hpp"
#include "idedit/train.hpp"
#include "json.hpp"

using namespace idedit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

GenerativeAutoencoder require_checkpoint(const fs::path& p) {
    if (p.empty()) throw ConfigError("--checkpoint is required");
    if (!fs::exists(p)) throw ConfigError("checkpoint not found: " + p.string());
    auto m = load_checkpoint(p);
    m.set_mode(Mode::eval);
    return m;
}

ImageTensor load_input(const fs::path& p, int size) {
    if (!fs::exists(p)) throw ConfigError("image not found: " + p.string());
    return resize_square(read_png(p), size);
}

void write_latent(const LatentCode& w, const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out << json{{"d_w", w.size()}, {"w", w.w}}.dump() << '\n';
}

LatentCode read_latent(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot read latent " + p.string());
    try {
        json j;
        in >> j;
        return LatentCode{j.at("w").get<std::vector<double>>()};
    } catch (const json::exception& e) {
        throw ConfigError("malformed latent file: " + std::string(e.what()));
    }
}

LatentCode project(const std::string& method, const GenerativeAutoencoder& m, const ImageTensor& img,
                   std::uint64_t seed, int steps) {
    if (method == "encoder") return project_encoder(m, img);
    if (method == "random") return project_random(m, seed);
    if (method == "latent_opt") {
        LatentOptConfig c;
        c.seed = seed;
        if (steps > 0) c.steps = steps;
        return project_latent_opt(m, img, c).latent;
    }
    throw ConfigError("unknown projection method " + method);
}

std::vector<double> parse_alphas(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad alpha value '" + tok + "'");
        }
    }
    if (out.empty()) throw ConfigError("alphas must be nonempty");
    return out;
}

struct BenchFlags {
    std::string config, checkpoint, out;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool deterministic = false;
};

void add_bench_flags(CLI::App* cmd, BenchFlags& f) {
    cmd->add_option("--config", f.config, "BenchConfig JSON")->required();
    cmd->add_option("--checkpoint", f.checkpoint, "override paths.checkpoint");
    cmd->add_option("--out", f.out, "override paths.output");
    cmd->add_option("--seed", f.seed, "override seeds.projection");
    cmd->add_option("--workers", f.workers, "worker threads");
    cmd->add_flag("--deterministic", f.deterministic, "single worker, reproducible output");
}

BenchConfig resolve_bench(const BenchFlags& f) {
    std::ifstream in(f.config);
    if (!in) throw ConfigError("cannot read config " + f.config);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (!f.checkpoint.empty()) j["paths"]["checkpoint"] = f.checkpoint;
    if (!f.out.empty()) j["paths"]["output"] = f.out;
    if (f.seed) j["seeds"]["projection"] = *f.seed;
    if (f.workers) j["workers"] = *f.workers;
    if (f.deterministic) j["deterministic"] = true;
    return bench_config_from_json(j);
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

EditService* g_service = nullptr;
void on_signal(int) {
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Identity-preserving face editing toolkit"};
    app.require_subcommand(1);

    // make-dataset
    fs::path ds_out;
    int ds_n = 2000, ds_size = 64;
    std::uint64_t ds_seed = 1;
    auto* make_ds = app.add_subcommand("make-dataset", "render synthetic faces to PNG + factors.json");
    make_ds->add_option("--out", ds_out)->required();
    make_ds->add_option("--n", ds_n);
    make_ds->add_option("--size", ds_size);
    make_ds->add_option("--seed", ds_seed);

    // train-toy
    fs::path tr_out, tr_dataset, tr_config;
    int tr_n = 2000, tr_epochs = -1;
    std::uint64_t tr_seed = 0, tr_data_seed = 1;
    auto* train = app.add_subcommand("train-toy", "train the toy autoencoder");
    train->add_option("--out", tr_out, "checkpoint path")->required();
    train->add_option("--dataset", tr_dataset, "dataset directory (default: generate)");
    train->add_option("--config", tr_config, "TrainConfig JSON");
    train->add_option("--n", tr_n, "images to generate when no dataset is given");
    train->add_option("--data-seed", tr_data_seed);
    train->add_option("--epochs", tr_epochs);
    train->add_option("--seed", tr_seed);

    // fit-directions
    fs::path fd_ckpt, fd_out, fd_dataset;
    int fd_n = 500;
    std::uint64_t fd_seed = 11;
    auto* fit = app.add_subcommand("fit-directions", "fit attribute hyperplanes in latent space");
    fit->add_option("--checkpoint", fd_ckpt)->required();
    fit->add_option("--out", fd_out, "directions directory")->required();
    fit->add_option("--dataset", fd_dataset);
    fit->add_option("--n", fd_n);
    fit->add_option("--seed", fd_seed);

    // invert
    fs::path inv_ckpt, inv_image, inv_out, inv_latent;
    std::string inv_method = "encoder";
    std::uint64_t inv_seed = 0;
    int inv_steps = 0;
    auto* inv = app.add_subcommand("invert", "project an image into latent space");
    inv->add_option("--checkpoint", inv_ckpt)->required();
    inv->add_option("--image", inv_image)->required();
    inv->add_option("--method", inv_method)->check(CLI::IsMember({"encoder", "latent_opt", "random"}));
    inv->add_option("--seed", inv_seed);
    inv->add_option("--steps", inv_steps);
    inv->add_option("--out", inv_out, "reconstruction PNG");
    inv->add_option("--latent-out", inv_latent, "latent JSON");

    // adapt
    fs::path ad_ckpt, ad_image, ad_out, ad_recon, ad_latent;
    std::string ad_method = "encoder";
    std::uint64_t ad_seed = 0;
    AdaptationConfig ad_cfg;
    auto* ad = app.add_subcommand("adapt", "one-shot decoder adaptation toward one image");
    ad->add_option("--checkpoint", ad_ckpt)->required();
    ad->add_option("--image", ad_image)->required();
    ad->add_option("--method", ad_method)->check(CLI::IsMember({"encoder", "latent_opt", "random"}));
    ad->add_option("--latent", ad_latent, "use this latent JSON instead of projecting");
    ad->add_option("--seed", ad_seed);
    ad->add_option("--steps", ad_cfg.steps);
    ad->add_option("--step-size", ad_cfg.step_size);
    ad->add_option("--lambda-mse", ad_cfg.lambda_mse);
    ad->add_option("--lambda-vgg", ad_cfg.lambda_vgg);
    ad->add_option("--out", ad_out, "adapted checkpoint")->required();
    ad->add_option("--recon", ad_recon, "reconstruction PNG");

    // edit
    fs::path ed_ckpt, ed_image, ed_latent, ed_dirs, ed_out;
    std::string ed_attr = "smile", ed_alphas = "-3,-1.5,0,1.5,3";
    auto* ed = app.add_subcommand("edit", "render an attribute trajectory strip");
    ed->add_option("--checkpoint", ed_ckpt)->required();
    ed->add_option("--image", ed_image, "project with the encoder");
    ed->add_option("--latent", ed_latent, "latent JSON");
    ed->add_option("--directions", ed_dirs)->required();
    ed->add_option("--attribute", ed_attr);
    ed->add_option("--alphas", ed_alphas, "comma-separated, latent std units");
    ed->add_option("--out", ed_out)->required();

    BenchFlags recon_flags, edit_flags;
    auto* bench_recon = app.add_subcommand("bench-recon", "reconstruction benchmark");
    add_bench_flags(bench_recon, recon_flags);
    auto* bench_edit = app.add_subcommand("bench-edit", "edit-trajectory benchmark");
    add_bench_flags(bench_edit, edit_flags);

    fs::path rep_in;
    std::string rep_format = "text";
    auto* rep = app.add_subcommand("report", "print a saved report");
    rep->add_option("--in", rep_in, "report JSON")->required();
    rep->add_option("--format", rep_format)->check(CLI::IsMember({"text", "json"}));

    fs::path sv_ckpt, sv_dirs;
    std::string sv_host = "127.0.0.1";
    int sv_port = 8080;
    auto* serve = app.add_subcommand("serve", "HTTP API");
    serve->add_option("--checkpoint", sv_ckpt)->required();
    serve->add_option("--directions", sv_dirs)->required();
    serve->add_option("--host", sv_host);
    serve->add_option("--port", sv_port);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*make_ds) {
            const auto ds = generate_dataset(ds_seed, ds_n, ds_size);
            write_dataset(ds, ds_out);
            std::cout << "wrote " << ds.size() << " images to " << ds_out << '\n';
        } else if (*train) {
            TrainConfig cfg;
            if (!tr_config.empty()) {
                std::ifstream in(tr_config);
                if (!in) throw ConfigError("cannot read " + tr_config.string());
                json j;
                try {
                    in >> j;
                } catch (const json::exception& e) {
                    throw ConfigError("train config is not valid JSON: " + std::string(e.what()));
                }
                cfg = train_config_from_json(j);
            }
            if (tr_epochs > 0) cfg.epochs = tr_epochs;
            try {
                cfg.validate();
            } catch (const ValidationError& e) {
                throw ConfigError(e.what());
            }
            SyntheticDataset ds = tr_dataset.empty() ? generate_dataset(tr_data_seed, tr_n, cfg.model.image_size)
                                                     : read_dataset(tr_dataset);
            auto model = train_toy(ds, cfg, tr_seed, [](const EpochStats& s) {
                std::fprintf(stderr, "epoch %d loss %.5f adv %.5f recip %.5f pixel %.5f disc %.5f\n", s.epoch,
                             s.loss, s.adversarial, s.reciprocity, s.pixel, s.discriminator);
            });
            model.info().dataset = tr_dataset.empty() ? "generated:seed=" + std::to_string(tr_data_seed) +
                                                            ",n=" + std::to_string(tr_n)
                                                      : tr_dataset.string();
            save_checkpoint(model, tr_out);
            std::cout << "saved " << tr_out << '\n';
        } else if (*fit) {
            const auto model = require_checkpoint(fd_ckpt);
            const SyntheticDataset ds =
                fd_dataset.empty() ? generate_dataset(fd_seed, fd_n, model.image_size()) : read_dataset(fd_dataset);
            const auto dirs = fit_attribute_directions(model, ds, supported_attributes());
            for (const auto& [name, d] : dirs) {
                save_direction(d, fd_out / (name + ".json"));
                std::cout << name << " train_accuracy=" << d.train_accuracy << '\n';
            }
        } else if (*inv) {
            const auto model = require_checkpoint(inv_ckpt);
            const auto img = load_input(inv_image, model.image_size());
            const LatentCode w = project(inv_method, model, img, inv_seed, inv_steps);
            if (!inv_out.empty()) write_png(inv_out, decode(model, w));
            if (!inv_latent.empty()) write_latent(w, inv_latent);
            std::cout << "latent_id " << latent_id(w) << '\n';
        } else if (*ad) {
            const auto model = require_checkpoint(ad_ckpt);
            const auto img = load_input(ad_image, model.image_size());
            const LatentCode w = ad_latent.empty() ? project(ad_method, model, img, ad_seed, 0) : read_latent(ad_latent);
            try {
                ad_cfg.validate();
            } catch (const ValidationError& e) {
                throw ConfigError(e.what());
            }
            ad_cfg.seed = ad_seed;
            const auto r = adapt_decoder(model, w, img, ad_cfg);
            save_checkpoint(r.adapted_model, ad_out);
            if (!ad_recon.empty()) write_png(ad_recon, decode(r.adapted_model, w));
            std::cout << "loss " << r.loss_curve.front() << " -> " << r.loss_curve.back() << '\n';
        } else if (*ed) {
            const auto model = require_checkpoint(ed_ckpt);
            if (ed_image.empty() == ed_latent.empty()) throw ConfigError("pass exactly one of --image or --latent");
            const LatentCode w = ed_latent.empty() ? project_encoder(model, load_input(ed_image, model.image_size()))
                                                   : read_latent(ed_latent);
            const auto path = ed_dirs / (ed_attr + ".json");
            if (!fs::exists(path)) throw ConfigError("missing direction file " + path.string());
            const AttributeDirection dir = load_direction(path);
            const auto alphas = parse_alphas(ed_alphas);
            std::vector<double> raw;
            for (double a : alphas) raw.push_back(a * dir.projection_std);
            EditTrajectory t = make_trajectory(model, w, dir, raw);
            t.alphas = alphas;
            emit_grids({{ed_attr, std::move(t)}}, ed_out);
        } else if (*bench_recon) {
            const auto cfg = resolve_bench(recon_flags);
            const auto report = run_reconstruction_bench(cfg, nullptr, log_line);
            std::cout << report_to_text(report);
        } else if (*bench_edit) {
            const auto cfg = resolve_bench(edit_flags);
            const auto report = run_edit_bench(cfg, nullptr, log_line);
            std::cout << report_to_text(report);
        } else if (*rep) {
            const auto report = load_report(rep_in);
            if (rep_format == "json") std::cout << report_to_json(report).dump(2) << '\n';
            else std::cout << report_to_text(report);
        } else if (*serve) {
            auto model = std::make_shared<GenerativeAutoencoder>(require_checkpoint(sv_ckpt));
            if (!fs::is_directory(sv_dirs)) throw ConfigError("directions directory not found: " + sv_dirs.string());
            EditService service(model, load_directions(sv_dirs));
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            const int port = service.bind(sv_host, sv_port);
            std::cerr << "listening on " << sv_host << ":" << port << '\n';
            service.serve();
            g_service = nullptr;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
