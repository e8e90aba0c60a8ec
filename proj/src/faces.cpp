#include "idedit/faces.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "json.hpp"

#include "idedit/errors.hpp"

namespace idedit {
namespace {

using Rgb = std::array<double, 3>;

constexpr int kSuper = 4;

constexpr Rgb kBackground{0.82, 0.86, 0.90};
constexpr Rgb kSkinLight{0.96, 0.80, 0.66};
constexpr Rgb kSkinDark{0.62, 0.46, 0.36};
constexpr Rgb kHair{0.22, 0.14, 0.08};
constexpr Rgb kEye{0.10, 0.10, 0.16};
constexpr Rgb kMouth{0.55, 0.12, 0.15};
constexpr Rgb kWrinkle{0.30, 0.18, 0.12};

constexpr double kFaceCx = 0.5;
constexpr double kFaceCy = 0.56;
constexpr double kFaceRx = 0.30;

constexpr double kHairX0 = 0.14, kHairX1 = 0.86, kHairTop = 0.02, kHairMax = 0.32;

constexpr double kEyeY = 0.50, kEyeR = 0.035;

constexpr double kWrinkleX0 = 0.38, kWrinkleX1 = 0.62, kWrinkleHalf = 0.012;
constexpr std::array<double, 2> kWrinkleY{0.395, 0.435};

constexpr double kMouthX0 = 0.385, kMouthX1 = 0.615, kMouthY = 0.625;
constexpr double kMouthCurve = 0.14;  // control-point offset at smile = 1
constexpr double kMouthHalf = 0.02;
constexpr int kMouthSegments = 64;
constexpr double kSmileHalfWidth = 0.0625;

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
    return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

double dot(const Rgb& a, const Rgb& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Rgb minus(const Rgb& a, const Rgb& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

bool in_face(double x, double y, double aspect) {
    const double dx = (x - kFaceCx) / kFaceRx;
    const double dy = (y - kFaceCy) / (kFaceRx * aspect);
    return dx * dx + dy * dy <= 1.0;
}

bool in_wrinkle(double x, double y) {
    if (x < kWrinkleX0 || x >= kWrinkleX1) return false;
    for (double cy : kWrinkleY) {
        if (y >= cy - kWrinkleHalf && y < cy + kWrinkleHalf) return true;
    }
    return false;
}

bool in_eye(double x, double y, double spacing) {
    for (double cx : {0.5 - spacing / 2.0, 0.5 + spacing / 2.0}) {
        const double dx = x - cx, dy = y - kEyeY;
        if (dx * dx + dy * dy <= kEyeR * kEyeR) return true;
    }
    return false;
}

struct MouthCurve {
    std::array<std::array<double, 2>, kMouthSegments + 1> pts;

    explicit MouthCurve(double smile) {
        const double cy = kMouthY + kMouthCurve * smile;
        for (int i = 0; i <= kMouthSegments; ++i) {
            const double t = static_cast<double>(i) / kMouthSegments;
            const double a = (1 - t) * (1 - t), b = 2 * t * (1 - t), c = t * t;
            pts[static_cast<std::size_t>(i)] = {a * kMouthX0 + b * 0.5 + c * kMouthX1,
                                                a * kMouthY + b * cy + c * kMouthY};
        }
    }

    // Fraction of a subsample of width `footprint` covered by the stroke.
    double coverage(double x, double y, double footprint) const {
        const double reach = kMouthHalf + footprint;
        if (x < kMouthX0 - reach || x > kMouthX1 + reach) return 0.0;
        double best = 1e9;
        for (int i = 0; i < kMouthSegments; ++i) {
            const auto& p = pts[static_cast<std::size_t>(i)];
            const auto& q = pts[static_cast<std::size_t>(i + 1)];
            const double vx = q[0] - p[0], vy = q[1] - p[1];
            const double wx = x - p[0], wy = y - p[1];
            const double t = std::clamp((wx * vx + wy * vy) / (vx * vx + vy * vy), 0.0, 1.0);
            const double ex = wx - t * vx, ey = wy - t * vy;
            best = std::min(best, ex * ex + ey * ey);
        }
        return std::clamp((kMouthHalf - std::sqrt(best)) / footprint + 0.5, 0.0, 1.0);
    }
};

Rgb skin_color(double hue) { return lerp(kSkinLight, kSkinDark, hue); }

// Pixel index range fully or partially covered by [a, b) at resolution n.
std::pair<int, int> span(double a, double b, int n) {
    const int lo = std::clamp(static_cast<int>(std::floor(a * n)), 0, n);
    const int hi = std::clamp(static_cast<int>(std::ceil(b * n)), 0, n);
    return {lo, hi};
}

// Pixel index range fully inside [a, b).
std::pair<int, int> inner_span(double a, double b, int n) {
    const int lo = std::clamp(static_cast<int>(std::ceil(a * n)), 0, n);
    const int hi = std::clamp(static_cast<int>(std::floor(b * n)), 0, n);
    return {lo, std::max(lo, hi)};
}

Rgb pixel(const ImageTensor& img, int y, int x) {
    return {img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)};
}

// Projection coefficient of (p - from) onto (to - from).
double coverage(const Rgb& p, const Rgb& from, const Rgb& to) {
    const Rgb d = minus(to, from);
    const double n = dot(d, d);
    return n > 1e-12 ? dot(minus(p, from), d) / n : 0.0;
}

double wrinkle_subsample_coverage(int size, int y, int x) {
    int inside = 0;
    for (int i = 0; i < kSuper; ++i) {
        for (int j = 0; j < kSuper; ++j) {
            const double sx = (x + (j + 0.5) / kSuper) / size;
            const double sy = (y + (i + 0.5) / kSuper) / size;
            if (in_wrinkle(sx, sy)) ++inside;
        }
    }
    return static_cast<double>(inside) / (kSuper * kSuper);
}

}  // namespace

namespace face_layout {
Region mouth_region() {
    constexpr double pad = kMouthHalf + 0.01;
    return {kMouthX0 - pad, kMouthY - kMouthCurve / 2 - pad, kMouthX1 + pad,
            kMouthY + kMouthCurve / 2 + pad};
}
Region wrinkle_region() {
    return {kWrinkleX0, kWrinkleY.front() - kWrinkleHalf, kWrinkleX1, kWrinkleY.back() + kWrinkleHalf};
}
Region hair_region() { return {kHairX0, kHairTop, kHairX1, kHairTop + kHairMax}; }
Region eye_band() { return {0.5 - 0.2 - kEyeR, kEyeY - kEyeR, 0.5 + 0.2 + kEyeR, kEyeY + kEyeR}; }
}  // namespace face_layout

std::vector<FaceFactors> sample_factors(std::uint64_t seed, int n) {
    if (n < 1) throw ValidationError("sample_factors: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<FaceFactors> out(static_cast<std::size_t>(n));
    for (auto& f : out) {
        f.identity_hue = u(rng);
        f.identity_aspect = 0.7 + 0.6 * u(rng);
        f.identity_eye_spacing = 0.2 + 0.2 * u(rng);
        f.age = u(rng);
        f.smile = -1.0 + 2.0 * u(rng);
        f.hair = u(rng);
    }
    return out;
}

ImageTensor render(const FaceFactors& f, int size) {
    if (size < 16) throw ValidationError("render: size must be >= 16");
    ImageTensor img(size, size);
    const Rgb skin = skin_color(f.identity_hue);
    const Rgb wrinkle = lerp(skin, kWrinkle, f.age);
    const MouthCurve mouth(f.smile);
    const Region mr = face_layout::mouth_region();
    const double footprint = 1.0 / (kSuper * size);
    const double hair_bottom = kHairTop + kHairMax * f.hair;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            Rgb acc{0, 0, 0};
            for (int i = 0; i < kSuper; ++i) {
                for (int j = 0; j < kSuper; ++j) {
                    const double sx = (x + (j + 0.5) / kSuper) / size;
                    const double sy = (y + (i + 0.5) / kSuper) / size;
                    Rgb c = kBackground;
                    if (in_face(sx, sy, f.identity_aspect)) {
                        c = skin;
                        if (in_wrinkle(sx, sy)) c = wrinkle;
                        if (in_eye(sx, sy, f.identity_eye_spacing)) c = kEye;
                        if (sy >= mr.y0 && sy <= mr.y1) {
                            c = lerp(c, kMouth, mouth.coverage(sx, sy, footprint));
                        }
                    }
                    if (sx >= kHairX0 && sx < kHairX1 && sy >= kHairTop && sy < hair_bottom) c = kHair;
                    for (int k = 0; k < 3; ++k) acc[k] += c[static_cast<std::size_t>(k)];
                }
            }
            for (int k = 0; k < 3; ++k) {
                img.at(y, x, k) = static_cast<float>(acc[static_cast<std::size_t>(k)] / (kSuper * kSuper));
            }
        }
    }
    return img;
}

FaceFactors measure_factors(const ImageTensor& img) {
    const int s = img.width;
    const int h = img.height;
    FaceFactors f;
    if (s <= 0 || h <= 0) return f;

    // Skin: two cheek patches that no other feature reaches.
    Rgb skin{0, 0, 0};
    int count = 0;
    {
        const auto [y0, y1] = inner_span(0.56, 0.62, h);
        for (const auto& [a, b] : {std::pair{0.30, 0.36}, std::pair{0.64, 0.70}}) {
            const auto [x0, x1] = inner_span(a, b, s);
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    const Rgb p = pixel(img, y, x);
                    for (int k = 0; k < 3; ++k) skin[static_cast<std::size_t>(k)] += p[static_cast<std::size_t>(k)];
                    ++count;
                }
            }
        }
        if (count > 0) {
            for (double& v : skin) v /= count;
        } else {
            skin = skin_color(0.5);
        }
    }
    f.identity_hue = std::clamp(coverage(skin, kSkinLight, kSkinDark), 0.0, 1.0);

    const auto center_cols = span(0.5 - 1.0 / s, 0.5 + 1.0 / s, s);

    // Aspect: skin coverage below the mouth along the center columns locates the chin.
    {
        const int r0 = static_cast<int>(std::ceil(0.73 * h));
        double total = 0.0;
        for (int x = center_cols.first; x < center_cols.second; ++x) {
            double len = 0.0;
            for (int y = r0; y < h; ++y) {
                len += std::clamp(coverage(pixel(img, y, x), kBackground, skin), 0.0, 1.0);
            }
            total += len;
        }
        const int ncols = center_cols.second - center_cols.first;
        const double bottom = static_cast<double>(r0) / h + total / std::max(1, ncols) / h;
        f.identity_aspect = std::clamp((bottom - kFaceCy) / kFaceRx, 0.0, 2.0);
    }

    // Hair: dark coverage in a column strip beside the face.
    {
        const auto [x0, x1] = inner_span(0.145, 0.195, s);
        const auto [y0, y1] = span(0.0, 0.40, h);
        double total = 0.0;
        for (int x = x0; x < x1; ++x) {
            for (int y = y0; y < y1; ++y) {
                total += std::clamp(coverage(pixel(img, y, x), kBackground, kHair), 0.0, 1.0);
            }
        }
        const double len = total / std::max(1, x1 - x0) / h;
        f.hair = std::clamp(len / kHairMax, 0.0, 1.0);
    }

    // Eye spacing: darkness centroid in each half of the eye band.
    {
        const auto [y0, y1] = span(0.455, 0.545, h);
        double spacing_sum = 0.0;
        int halves = 0;
        for (int side = 0; side < 2; ++side) {
            const auto [x0, x1] = side == 0 ? span(0.25, 0.5, s) : span(0.5, 0.75, s);
            double wsum = 0.0, xsum = 0.0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    const double d = std::clamp(coverage(pixel(img, y, x), skin, kEye), 0.0, 1.0);
                    wsum += d;
                    xsum += d * (x + 0.5) / s;
                }
            }
            if (wsum > 1e-9) {
                spacing_sum += 2.0 * std::abs(xsum / wsum - 0.5);
                ++halves;
            }
        }
        f.identity_eye_spacing = halves > 0 ? std::clamp(spacing_sum / halves, 0.0, 1.0) : 0.3;
    }

    // Age: wrinkle darkness normalized by the strokes' exact pixel coverage.
    {
        const auto [x0, x1] = span(0.37, 0.63, s);
        const auto [y0, y1] = span(0.38, 0.452, h);
        double deficit = 0.0, expected = 0.0;
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                deficit += coverage(pixel(img, y, x), skin, kWrinkle);
                if (s == h) expected += wrinkle_subsample_coverage(s, y, x);
            }
        }
        f.age = expected > 0.0 ? std::clamp(deficit / expected, 0.0, 1.0) : 0.0;
    }

    // Smile: vertical darkness centroid of the mouth stroke near its midpoint.
    {
        const auto [x0, x1] = span(0.5 - kSmileHalfWidth, 0.5 + kSmileHalfWidth, s);
        const auto [y0, y1] = span(0.53, 0.73, h);
        double wsum = 0.0, ysum = 0.0, gain_sum = 0.0;
        const double mouth_width = kMouthX1 - kMouthX0;
        for (int x = x0; x < x1; ++x) {
            double col_w = 0.0;
            for (int y = y0; y < y1; ++y) {
                const double d = std::clamp(coverage(pixel(img, y, x), skin, kMouth), 0.0, 1.0);
                col_w += d;
                ysum += d * (y + 0.5) / h;
            }
            // Bezier height factor 2t(1-t) averaged over the column, t = 0.5 + u / width.
            const double ua = static_cast<double>(x) / s - 0.5, ub = static_cast<double>(x + 1) / s - 0.5;
            const double mean_u2 = (ub * ub * ub - ua * ua * ua) / (3.0 * (ub - ua));
            gain_sum += col_w * (0.5 - 2.0 * mean_u2 / (mouth_width * mouth_width));
            wsum += col_w;
        }
        if (wsum > 1e-9) {
            const double gain = kMouthCurve * gain_sum / wsum;
            f.smile = std::clamp((ysum / wsum - kMouthY) / gain, -1.0, 1.0);
        } else {
            f.smile = 0.0;
        }
    }
    return f;
}

SyntheticDataset generate_dataset(std::uint64_t seed, int n, int size) {
    SyntheticDataset ds;
    ds.seed = seed;
    ds.factors = sample_factors(seed, n);
    ds.images.reserve(ds.factors.size());
    for (const auto& f : ds.factors) ds.images.push_back(render(f, size));
    return ds;
}

double factor_value(const FaceFactors& f, const std::string& name) {
    if (name == "identity_hue") return f.identity_hue;
    if (name == "identity_aspect") return f.identity_aspect;
    if (name == "identity_eye_spacing") return f.identity_eye_spacing;
    if (name == "age") return f.age;
    if (name == "smile") return f.smile;
    if (name == "hair") return f.hair;
    throw ValidationError("unknown factor '" + name + "'");
}

void write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json records = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05zu.png", i);
        write_png(dir / name, ds.images[i]);
        const auto& f = ds.factors[i];
        records.push_back({{"identity_hue", f.identity_hue},
                           {"identity_aspect", f.identity_aspect},
                           {"identity_eye_spacing", f.identity_eye_spacing},
                           {"age", f.age},
                           {"smile", f.smile},
                           {"hair", f.hair}});
    }
    std::ofstream out(dir / "factors.json");
    if (!out) throw IoError("cannot write " + (dir / "factors.json").string());
    out << records.dump(2) << "\n";
}

SyntheticDataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "factors.json");
    if (!in) throw IoError("missing " + (dir / "factors.json").string());
    const auto records = nlohmann::json::parse(in);
    SyntheticDataset ds;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        FaceFactors f;
        f.identity_hue = r.at("identity_hue").get<double>();
        f.identity_aspect = r.at("identity_aspect").get<double>();
        f.identity_eye_spacing = r.at("identity_eye_spacing").get<double>();
        f.age = r.at("age").get<double>();
        f.smile = r.at("smile").get<double>();
        f.hair = r.at("hair").get<double>();
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05zu.png", i);
        ds.images.push_back(read_png(dir / name));
        ds.factors.push_back(f);
    }
    return ds;
}

}  // namespace idedit
