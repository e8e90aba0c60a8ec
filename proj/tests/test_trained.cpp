// Properties of the reference 64x64 model produced by the prepare_model
// fixture: 2000 faces, 30 epochs, directions fitted on 500 faces.
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "idedit/adaptation.hpp"
#include "idedit/checkpoint.hpp"
#include "idedit/editing.hpp"
#include "idedit/faces.hpp"
#include "idedit/inversion.hpp"
#include "idedit/metrics.hpp"
#include "idedit/perceptual.hpp"
#include "idedit/train.hpp"

using namespace idedit;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = IDEDIT_FIXTURE_DIR;

const GenerativeAutoencoder& reference() {
    static const GenerativeAutoencoder m = load_checkpoint(kDir / "model.ckpt");
    return m;
}

// Held out from both the training faces (seed 1) and the direction fit (seed 11).
const SyntheticDataset& held_out() {
    static const SyntheticDataset ds = generate_dataset(77, 100, 64);
    return ds;
}

// 95th percentile of the relative residual ||E(D(w)) - w|| / ||w|| over 100
// prior samples, frozen from a calibration run on the reference model.
constexpr double kReciprocityP95 = 0.62;

struct Adapted {
    LatentCode w;
    GenerativeAutoencoder model;
};

// Encoder projection plus default one-shot adaptation of the first n held-out faces.
const std::vector<Adapted>& adapted(std::size_t n) {
    static std::vector<Adapted> cache;
    while (cache.size() < n) {
        const ImageTensor& img = held_out().images[cache.size()];
        const LatentCode w = project_encoder(reference(), img);
        cache.push_back({w, adapt_decoder(reference(), w, img, AdaptationConfig{}).adapted_model});
    }
    return cache;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

TEST(Reference, HeldOutReconstruction) {
    const double trained = reconstruction_ssim(reference(), held_out().images);
    const double untrained =
        reconstruction_ssim(GenerativeAutoencoder::initialize(reference().config(), 0), held_out().images);
    EXPECT_GE(trained, 0.6);
    EXPECT_GE(trained, 2.0 * untrained);
}

TEST(Reference, TrainingLogShowsProgress) {
    std::ifstream in(kDir / "train_log.txt");
    ASSERT_TRUE(in) << "missing training log";
    std::vector<double> losses;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag, key;
        int epoch = 0;
        double loss = 0.0;
        if (ss >> tag >> epoch >> key >> loss && tag == "epoch" && key == "loss") losses.push_back(loss);
    }
    ASSERT_EQ(losses.size(), 30u);
    EXPECT_GT(losses.front(), losses.back());
    for (double l : losses) EXPECT_TRUE(std::isfinite(l));
}

TEST(Reference, DirectionsSeparateAttributes) {
    const auto dirs = load_directions(kDir / "directions");
    ASSERT_EQ(dirs.size(), 3u);
    EXPECT_GE(dirs.at("smile").train_accuracy, 0.9);
    for (const auto& [name, d] : dirs) {
        double n2 = 0.0;
        for (double v : d.normal) n2 += v * v;
        EXPECT_NEAR(std::sqrt(n2), 1.0, 1e-6) << name;
        EXPECT_GT(d.projection_std, 0.0) << name;
        EXPECT_EQ(d.d_w(), reference().d_w());
    }
}

TEST(Reference, ReciprocityResidualWithinFrozenBound) {
    const auto& m = reference();
    std::vector<double> res;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const LatentCode w = sample_prior(m, 1000 + s);
        const LatentCode back = encode(m, decode(m, w));
        double d2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            d2 += (back.w[i] - w.w[i]) * (back.w[i] - w.w[i]);
            n2 += w.w[i] * w.w[i];
        }
        res.push_back(std::sqrt(d2 / n2));
    }
    std::sort(res.begin(), res.end());
    EXPECT_LE(res[94], kReciprocityP95);
}

TEST(Reference, EncoderProjectsCloserThanRandom) {
    const auto& m = reference();
    const auto& e = *default_extractor();
    std::vector<double> enc, rnd, opt;
    for (std::size_t i = 0; i < held_out().size(); ++i) {
        const ImageTensor& img = held_out().images[i];
        enc.push_back(total_loss(img, decode(m, project_encoder(m, img)), e, 1.0, 1.0));
        rnd.push_back(total_loss(img, decode(m, project_random(m, i)), e, 1.0, 1.0));
        if (i < 20) {
            LatentOptConfig cfg;
            cfg.steps = 100;
            cfg.record_curve = false;
            opt.push_back(project_latent_opt(m, img, cfg).best_loss);
        }
    }
    EXPECT_GT(mean(rnd), mean(enc));
    EXPECT_GE(mean({enc.begin(), enc.begin() + 20}), mean(opt));
}

TEST(Reference, AdaptedNeighborhoodKeepsIdentity) {
    const auto& m = reference();
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& a = adapted(5)[i];
        const ImageTensor& img = held_out().images[i];
        double wn = 0.0;
        for (double v : a.w.w) wn += v * v;
        wn = std::sqrt(wn);
        std::mt19937_64 rng(100 + i);
        std::normal_distribution<double> n(0.0, 1.0);
        std::vector<double> err_adapted, err_source;
        for (int k = 0; k < 10; ++k) {
            std::vector<double> d(a.w.size());
            double dn = 0.0;
            for (double& v : d) {
                v = n(rng);
                dn += v * v;
            }
            LatentCode near = a.w;
            for (std::size_t j = 0; j < d.size(); ++j) near.w[j] += 0.1 * wn * d[j] / std::sqrt(dn);
            err_adapted.push_back(factor_scores(img, decode(a.model, near)).identity_error);
            err_source.push_back(factor_scores(img, decode(m, near)).identity_error);
        }
        EXPECT_LT(mean(err_adapted), mean(err_source)) << "image " << i;
    }
}

TEST(Reference, SmileEditsChangeSmileMoreThanIdentity) {
    const auto smile = load_directions(kDir / "directions").at("smile");
    std::vector<double> id, change;
    for (std::size_t i = 0; i < 50; ++i) {
        const auto& a = adapted(50)[i];
        const ImageTensor& img = held_out().images[i];
        const double base = measure_factors(decode(a.model, a.w)).smile;
        for (double alpha : {-3.0, -1.5, 1.5, 3.0}) {
            const ImageTensor out = decode(a.model, edit_latent(a.w, smile, alpha * smile.projection_std));
            id.push_back(factor_scores(img, out).identity_error);
            change.push_back(std::abs(measure_factors(out).smile - base));
        }
    }
    EXPECT_LT(mean(id), mean(change));
}
