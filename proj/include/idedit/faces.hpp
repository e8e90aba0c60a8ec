#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "idedit/image.hpp"

namespace idedit {

// Ground-truth generative factors of a synthetic face. The first three are
// identity; age, smile and hair are the editable attributes.
struct FaceFactors {
    double identity_hue = 0.5;          // [0, 1] skin color ramp (global)
    double identity_aspect = 1.0;       // [0.7, 1.3] face height / width (global)
    double identity_eye_spacing = 0.3;  // [0.2, 0.4] eye distance, image widths
    double age = 0.0;                   // [0, 1] forehead wrinkle contrast
    double smile = 0.0;                 // [-1, 1] mouth curvature
    double hair = 0.5;                  // [0, 1] hair band height

    friend bool operator==(const FaceFactors&, const FaceFactors&) = default;
};

struct SyntheticDataset {
    std::vector<ImageTensor> images;
    std::vector<FaceFactors> factors;
    std::uint64_t seed = 0;

    std::size_t size() const { return images.size(); }
};

// Normalized-coordinate rectangle [x0, x1) x [y0, y1).
struct Region {
    double x0, y0, x1, y1;
};

namespace face_layout {
// Pixels that can change when only the named factor changes.
Region mouth_region();
Region wrinkle_region();
Region hair_region();
Region eye_band();
}  // namespace face_layout

std::vector<FaceFactors> sample_factors(std::uint64_t seed, int n);
ImageTensor render(const FaceFactors& factors, int size);
// Recovers factors analytically from fixed measurement windows. Total on any
// image; accurate on images produced by render().
FaceFactors measure_factors(const ImageTensor& image);

SyntheticDataset generate_dataset(std::uint64_t seed, int n, int size);

// Attribute access by name: "age", "smile", "hair", or an identity factor.
double factor_value(const FaceFactors& f, const std::string& name);

// PNG files img_00000.png ... plus factors.json.
void write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir);
SyntheticDataset read_dataset(const std::filesystem::path& dir);

}  // namespace idedit
