#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "idedit/tensor.hpp"

namespace idedit {

// H x W x 3 float image, row-major, channels interleaved, values in [0, 1].
struct ImageTensor {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    ImageTensor() = default;
    ImageTensor(int h, int w, float fill = 0.0f)
        : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

    float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    bool same_shape(const ImageTensor& o) const { return height == o.height && width == o.width; }

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

// Throws ValidationError on non-finite or out-of-range pixels.
void validate_pixels(const ImageTensor& image);
// Model inputs additionally need square power-of-two sides >= 16.
void validate_model_image(const ImageTensor& image, int image_size);

// Packs images into an NCHW tensor.
Tensor to_tensor(const std::vector<const ImageTensor*>& images);
Tensor to_tensor(const ImageTensor& image);
// Extracts sample `index` of an NCHW tensor, clamping into [0, 1].
ImageTensor from_tensor(const Tensor& t, int index = 0);

std::vector<std::uint8_t> encode_png(const ImageTensor& image);
ImageTensor decode_png(const std::vector<std::uint8_t>& bytes);
void write_png(const std::filesystem::path& path, const ImageTensor& image);
ImageTensor read_png(const std::filesystem::path& path);

// Area-weighted resampling to a square image.
ImageTensor resize_square(const ImageTensor& image, int size);

}  // namespace idedit
