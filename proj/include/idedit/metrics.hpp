#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "idedit/image.hpp"

namespace idedit {

// SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 1.
// The window is truncated at the borders and renormalized, so every pixel
// contributes and images smaller than the window are supported.
double ssim(const ImageTensor& a, const ImageTensor& b);

// 10 log10(1 / MSE); +infinity for identical images.
double psnr(const ImageTensor& a, const ImageTensor& b);

struct SwdParams {
    int patch = 7;
    int stride = 4;
    int levels = 2;
    int projections = 128;
    double scale = 1e3;
};

// Unit directions used to slice patch space. Exposed for oracle tests.
std::vector<std::vector<double>> swd_directions(std::uint64_t seed, int dim, int count);
// Mean absolute difference of sorted samples; inputs must have equal size.
double wasserstein1_sorted(std::vector<double> a, std::vector<double> b);
// Per-patch normalized 7x7x3 patches of one pyramid level.
std::vector<std::vector<double>> swd_patches(const ImageTensor& image, const SwdParams& params);
ImageTensor downsample2x(const ImageTensor& image);

// Sliced Wasserstein distance between the patch distributions of a and b.
double swd(const ImageTensor& a, const ImageTensor& b, std::uint64_t seed,
           const SwdParams& params = {});

struct FactorScores {
    double identity_error = 0.0;
    std::map<std::string, double> identity_errors;
    std::map<std::string, double> attribute_errors;
};

FactorScores factor_scores(const ImageTensor& input, const ImageTensor& output);

// Canonical algorithm order for reports.
const std::vector<std::string>& algorithm_order();
const std::vector<std::string>& attribute_order();
std::string algorithm_label(const std::string& key);

struct MetricRecord {
    std::string algorithm;
    std::optional<std::string> attribute;
    double ssim = 0.0;
    double psnr = 0.0;
    double swd = 0.0;
};

struct ReportRow {
    std::string algorithm;
    std::optional<std::string> attribute;
    double ssim_mean = 0.0, ssim_std = 0.0;
    double psnr_mean = 0.0, psnr_std = 0.0;
    double swd_mean = 0.0, swd_std = 0.0;
    int n = 0;
    int psnr_inf_count = 0;
};

struct MetricsReport {
    std::vector<ReportRow> rows;
    nlohmann::json metadata = nlohmann::json::object();
    nlohmann::json supplementary = nlohmann::json::object();

    const ReportRow* find(const std::string& algorithm,
                          const std::optional<std::string>& attribute = std::nullopt) const;
};

// Population mean/std per (algorithm, attribute) in canonical order. PSNR
// infinities are excluded from the moments and counted separately.
MetricsReport aggregate(const std::vector<MetricRecord>& records);

nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);
// Aligned text table with "mean / std" cells.
std::string report_to_text(const MetricsReport& report);

// JSON number, or the string "inf" for the PSNR sentinel.
nlohmann::json finite_or_inf(double v);
double number_or_inf(const nlohmann::json& j);

}  // namespace idedit
