#include "idedit/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "idedit/errors.hpp"
#include "idedit/faces.hpp"

namespace idedit {
namespace {

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same(const ImageTensor& a, const ImageTensor& b, const char* what) {
    if (!a.same_shape(b) || a.pixels.size() != b.pixels.size()) {
        throw DimensionError(std::string(what) + ": image shapes differ");
    }
}

std::array<double, 2 * kRadius + 1> gaussian_taps() {
    std::array<double, 2 * kRadius + 1> g{};
    double s = 0.0;
    for (int k = -kRadius; k <= kRadius; ++k) {
        g[static_cast<std::size_t>(k + kRadius)] = std::exp(-(k * k) / (2.0 * kSigma * kSigma));
        s += g[static_cast<std::size_t>(k + kRadius)];
    }
    for (double& v : g) v /= s;
    return g;
}

// Renormalized truncated 1-D filter along rows (horizontal) or columns.
std::vector<double> filter(const std::vector<double>& src, int h, int w, bool horizontal) {
    static const auto g = gaussian_taps();
    std::vector<double> out(src.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int yy = horizontal ? y : y + k;
                const int xx = horizontal ? x + k : x;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                const double gk = g[static_cast<std::size_t>(k + kRadius)];
                acc += gk * src[static_cast<std::size_t>(yy) * w + xx];
                wsum += gk;
            }
            out[static_cast<std::size_t>(y) * w + x] = acc / wsum;
        }
    }
    return out;
}

std::vector<double> blur(const std::vector<double>& src, int h, int w) {
    return filter(filter(src, h, w, true), h, w, false);
}

}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b) {
    require_same(a, b, "ssim");
    const int h = a.height, w = a.width;
    const std::size_t n = static_cast<std::size_t>(h) * w;
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> va(n), vb(n), aa(n), bb(n), ab(n);
        for (std::size_t i = 0; i < n; ++i) {
            va[i] = a.pixels[i * 3 + c];
            vb[i] = b.pixels[i * 3 + c];
            aa[i] = va[i] * va[i];
            bb[i] = vb[i] * vb[i];
            ab[i] = va[i] * vb[i];
        }
        const auto mu_a = blur(va, h, w), mu_b = blur(vb, h, w);
        const auto e_aa = blur(aa, h, w), e_bb = blur(bb, h, w), e_ab = blur(ab, h, w);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double sa = e_aa[i] - ma * ma;
            const double sb = e_bb[i] - mb * mb;
            const double sab = e_ab[i] - ma * mb;
            sum += ((2 * ma * mb + kC1) * (2 * sab + kC2)) /
                   ((ma * ma + mb * mb + kC1) * (sa + sb + kC2));
        }
        total += sum / static_cast<double>(n);
    }
    return total / 3.0;
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
    require_same(a, b, "psnr");
    // Compensated sum; a uniform offset then yields the closed form bit for bit.
    double s = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
        const double y = d * d - comp;
        const double t = s + y;
        comp = (t - s) - y;
        s = t;
    }
    const double mse = s / static_cast<double>(a.pixels.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

std::vector<std::vector<double>> swd_directions(std::uint64_t seed, int dim, int count) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> dirs(static_cast<std::size_t>(count), std::vector<double>(static_cast<std::size_t>(dim)));
    for (auto& d : dirs) {
        double norm = 0.0;
        for (double& v : d) {
            v = normal(rng);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : d) v /= norm;
    }
    return dirs;
}

double wasserstein1_sorted(std::vector<double> a, std::vector<double> b) {
    if (a.size() != b.size() || a.empty()) throw DimensionError("wasserstein1_sorted: sizes differ or empty");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

ImageTensor downsample2x(const ImageTensor& image) {
    const int h = image.height / 2, w = image.width / 2;
    ImageTensor out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(y, x, c) = 0.25f * (image.at(2 * y, 2 * x, c) + image.at(2 * y, 2 * x + 1, c) +
                                           image.at(2 * y + 1, 2 * x, c) + image.at(2 * y + 1, 2 * x + 1, c));
            }
        }
    }
    return out;
}

std::vector<std::vector<double>> swd_patches(const ImageTensor& image, const SwdParams& params) {
    std::vector<std::vector<double>> out;
    const int p = params.patch;
    for (int y = 0; y + p <= image.height; y += params.stride) {
        for (int x = 0; x + p <= image.width; x += params.stride) {
            std::vector<double> v;
            v.reserve(static_cast<std::size_t>(p * p * 3));
            for (int dy = 0; dy < p; ++dy) {
                for (int dx = 0; dx < p; ++dx) {
                    for (int c = 0; c < 3; ++c) v.push_back(image.at(y + dy, x + dx, c));
                }
            }
            double mean = 0.0;
            for (double e : v) mean += e;
            mean /= static_cast<double>(v.size());
            double var = 0.0;
            for (double e : v) var += (e - mean) * (e - mean);
            const double sd = std::sqrt(var / static_cast<double>(v.size()));
            for (double& e : v) e = sd > 1e-8 ? (e - mean) / sd : e - mean;
            out.push_back(std::move(v));
        }
    }
    return out;
}

double swd(const ImageTensor& a, const ImageTensor& b, std::uint64_t seed, const SwdParams& params) {
    require_same(a, b, "swd");
    if (a.height < params.patch || a.width < params.patch) {
        throw ValidationError("swd: image smaller than one patch");
    }
    const int dim = params.patch * params.patch * 3;
    const auto dirs = swd_directions(seed, dim, params.projections);
    ImageTensor la = a, lb = b;
    double total = 0.0;
    int used = 0;
    for (int level = 0; level < params.levels; ++level) {
        if (level > 0) {
            la = downsample2x(la);
            lb = downsample2x(lb);
        }
        const auto pa = swd_patches(la, params);
        const auto pb = swd_patches(lb, params);
        if (pa.empty()) break;
        double level_sum = 0.0;
        std::vector<double> proj_a(pa.size()), proj_b(pb.size());
        for (const auto& d : dirs) {
            for (std::size_t i = 0; i < pa.size(); ++i) {
                double sa = 0.0, sb = 0.0;
                for (int k = 0; k < dim; ++k) {
                    sa += pa[i][static_cast<std::size_t>(k)] * d[static_cast<std::size_t>(k)];
                    sb += pb[i][static_cast<std::size_t>(k)] * d[static_cast<std::size_t>(k)];
                }
                proj_a[i] = sa;
                proj_b[i] = sb;
            }
            level_sum += wasserstein1_sorted(proj_a, proj_b);
        }
        total += level_sum / static_cast<double>(dirs.size());
        ++used;
    }
    return params.scale * total / used;
}

FactorScores factor_scores(const ImageTensor& input, const ImageTensor& output) {
    const FaceFactors fa = measure_factors(input);
    const FaceFactors fb = measure_factors(output);
    FactorScores s;
    s.identity_errors["identity_hue"] = std::abs(fa.identity_hue - fb.identity_hue);
    s.identity_errors["identity_aspect"] = std::abs(fa.identity_aspect - fb.identity_aspect);
    s.identity_errors["identity_eye_spacing"] = std::abs(fa.identity_eye_spacing - fb.identity_eye_spacing);
    s.identity_error = (s.identity_errors["identity_hue"] + s.identity_errors["identity_aspect"] +
                        s.identity_errors["identity_eye_spacing"]) / 3.0;
    s.attribute_errors["age"] = std::abs(fa.age - fb.age);
    s.attribute_errors["smile"] = std::abs(fa.smile - fb.smile);
    s.attribute_errors["hair"] = std::abs(fa.hair - fb.hair);
    return s;
}

const std::vector<std::string>& algorithm_order() {
    static const std::vector<std::string> order{"vanilla", "latent_opt", "oneshot_random",
                                                "oneshot_latent_opt", "oneshot_encoder"};
    return order;
}

const std::vector<std::string>& attribute_order() {
    static const std::vector<std::string> order{"age", "hair", "smile"};
    return order;
}

std::string algorithm_label(const std::string& key) {
    static const std::map<std::string, std::string> labels{
        {"vanilla", "Vanilla autoencoder"},
        {"latent_opt", "Only latent optimization"},
        {"oneshot_random", "One-shot + random projection"},
        {"oneshot_latent_opt", "One-shot + latent optimization"},
        {"oneshot_encoder", "One-shot + encoder projection"},
    };
    auto it = labels.find(key);
    return it == labels.end() ? key : it->second;
}

const ReportRow* MetricsReport::find(const std::string& algorithm,
                                     const std::optional<std::string>& attribute) const {
    for (const auto& r : rows) {
        if (r.algorithm == algorithm && r.attribute == attribute) return &r;
    }
    return nullptr;
}

namespace {

int rank_of(const std::vector<std::string>& order, const std::string& key) {
    auto it = std::find(order.begin(), order.end(), key);
    return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

std::pair<double, double> moments(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace

MetricsReport aggregate(const std::vector<MetricRecord>& records) {
    if (records.empty()) throw ValidationError("aggregate: no records");
    using Key = std::pair<std::string, std::optional<std::string>>;
    std::map<Key, std::vector<const MetricRecord*>> groups;
    for (const auto& r : records) groups[{r.algorithm, r.attribute}].push_back(&r);

    std::vector<Key> keys;
    for (const auto& [k, v] : groups) keys.push_back(k);
    std::stable_sort(keys.begin(), keys.end(), [](const Key& x, const Key& y) {
        const int ax = rank_of(algorithm_order(), x.first), ay = rank_of(algorithm_order(), y.first);
        if (ax != ay) return ax < ay;
        if (x.first != y.first) return x.first < y.first;
        const int bx = x.second ? rank_of(attribute_order(), *x.second) : -1;
        const int by = y.second ? rank_of(attribute_order(), *y.second) : -1;
        if (bx != by) return bx < by;
        return x.second < y.second;
    });

    MetricsReport report;
    for (const auto& k : keys) {
        const auto& g = groups.at(k);
        if (g.empty()) throw ValidationError("aggregate: empty group " + k.first);
        std::vector<double> s, p, w;
        int inf = 0;
        for (const auto* r : g) {
            s.push_back(r->ssim);
            w.push_back(r->swd);
            if (std::isinf(r->psnr)) {
                ++inf;
            } else {
                p.push_back(r->psnr);
            }
        }
        ReportRow row;
        row.algorithm = k.first;
        row.attribute = k.second;
        row.n = static_cast<int>(g.size());
        row.psnr_inf_count = inf;
        std::tie(row.ssim_mean, row.ssim_std) = moments(s);
        std::tie(row.swd_mean, row.swd_std) = moments(w);
        if (p.empty()) {
            row.psnr_mean = std::numeric_limits<double>::infinity();
            row.psnr_std = 0.0;
        } else {
            std::tie(row.psnr_mean, row.psnr_std) = moments(p);
        }
        report.rows.push_back(row);
    }
    return report;
}

nlohmann::json finite_or_inf(double v) {
    if (std::isinf(v) && v > 0) return "inf";
    return v;
}

double number_or_inf(const nlohmann::json& j) {
    if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    return j.get<double>();
}

nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"algorithm", r.algorithm},
                        {"attribute", r.attribute ? nlohmann::json(*r.attribute) : nlohmann::json(nullptr)},
                        {"ssim_mean", r.ssim_mean},
                        {"ssim_std", r.ssim_std},
                        {"psnr_mean", finite_or_inf(r.psnr_mean)},
                        {"psnr_std", r.psnr_std},
                        {"swd_mean", r.swd_mean},
                        {"swd_std", r.swd_std},
                        {"n", r.n},
                        {"psnr_inf_count", r.psnr_inf_count}});
    }
    return {{"rows", rows}, {"metadata", report.metadata}, {"supplementary", report.supplementary}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
    MetricsReport report;
    for (const auto& r : j.at("rows")) {
        ReportRow row;
        row.algorithm = r.at("algorithm").get<std::string>();
        if (!r.at("attribute").is_null()) row.attribute = r.at("attribute").get<std::string>();
        row.ssim_mean = r.at("ssim_mean").get<double>();
        row.ssim_std = r.at("ssim_std").get<double>();
        row.psnr_mean = number_or_inf(r.at("psnr_mean"));
        row.psnr_std = r.at("psnr_std").get<double>();
        row.swd_mean = r.at("swd_mean").get<double>();
        row.swd_std = r.at("swd_std").get<double>();
        row.n = r.at("n").get<int>();
        row.psnr_inf_count = r.value("psnr_inf_count", 0);
        report.rows.push_back(row);
    }
    if (j.contains("metadata")) report.metadata = j.at("metadata");
    if (j.contains("supplementary")) report.supplementary = j.at("supplementary");
    return report;
}

std::string report_to_text(const MetricsReport& report) {
    auto cell = [](double m, double s) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(3);
        if (std::isinf(m)) {
            os << "inf";
        } else {
            os << m;
        }
        os << " / " << s;
        return os.str();
    };
    bool with_attr = false;
    for (const auto& r : report.rows) with_attr = with_attr || r.attribute.has_value();

    std::vector<std::array<std::string, 5>> lines;
    lines.push_back({"Algorithm", "Attribute", "SSIM ↑", "PSNR ↑", "SWD ↓"});
    for (const auto& r : report.rows) {
        lines.push_back({algorithm_label(r.algorithm), r.attribute.value_or("-"), cell(r.ssim_mean, r.ssim_std),
                         cell(r.psnr_mean, r.psnr_std), cell(r.swd_mean, r.swd_std)});
    }
    // Arrow glyphs are 3 bytes but one column wide.
    auto width = [](const std::string& s) {
        std::size_t n = 0;
        for (unsigned char ch : s) n += (ch & 0xC0) != 0x80;
        return n;
    };
    std::array<std::size_t, 5> widths{};
    for (const auto& l : lines) {
        for (std::size_t c = 0; c < 5; ++c) widths[c] = std::max(widths[c], width(l[c]));
    }
    std::ostringstream os;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        bool first = true;
        for (std::size_t c = 0; c < 5; ++c) {
            if (c == 1 && !with_attr) continue;
            if (!first) os << " | ";
            first = false;
            os << lines[i][c] << std::string(widths[c] - width(lines[i][c]), ' ');
        }
        os << "\n";
        if (i == 0) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < 5; ++c) {
                if (c == 1 && !with_attr) continue;
                total += widths[c] + 3;
            }
            os << std::string(total - 3, '-') << "\n";
        }
    }
    return os.str();
}

}  // namespace idedit
