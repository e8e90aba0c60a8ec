#include "idedit/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "idedit/errors.hpp"

namespace idedit {

void validate_pixels(const ImageTensor& image) {
    if (image.height <= 0 || image.width <= 0 ||
        image.pixels.size() != static_cast<std::size_t>(image.height) * image.width * 3) {
        throw DimensionError("image buffer does not match its declared shape");
    }
    for (float v : image.pixels) {
        if (!std::isfinite(v)) throw ValidationError("image contains non-finite pixels");
        if (v < 0.0f || v > 1.0f) throw ValidationError("image pixels outside [0, 1]");
    }
}

void validate_model_image(const ImageTensor& image, int image_size) {
    if (image.height != image_size || image.width != image_size) {
        throw DimensionError("image is " + std::to_string(image.height) + "x" +
                             std::to_string(image.width) + ", model expects " +
                             std::to_string(image_size) + "x" + std::to_string(image_size));
    }
    validate_pixels(image);
}

Tensor to_tensor(const std::vector<const ImageTensor*>& images) {
    if (images.empty()) throw ValidationError("to_tensor: no images");
    const int h = images.front()->height, w = images.front()->width;
    Tensor t({static_cast<int>(images.size()), 3, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t n = 0; n < images.size(); ++n) {
        const ImageTensor& img = *images[n];
        if (img.height != h || img.width != w) throw DimensionError("to_tensor: mixed image sizes");
        double* dst = t.ptr() + n * 3 * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            for (int c = 0; c < 3; ++c) dst[c * plane + p] = img.pixels[p * 3 + c];
        }
    }
    return t;
}

Tensor to_tensor(const ImageTensor& image) { return to_tensor(std::vector{&image}); }

ImageTensor from_tensor(const Tensor& t, int index) {
    if (t.rank() != 4 || t.dim(1) != 3) throw DimensionError("from_tensor: expected [N, 3, H, W]");
    const int h = t.dim(2), w = t.dim(3);
    ImageTensor img(h, w);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const double* src = t.ptr() + static_cast<std::size_t>(index) * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < 3; ++c) {
            img.pixels[p * 3 + c] = static_cast<float>(std::clamp(src[c * plane + p], 0.0, 1.0));
        }
    }
    return img;
}

std::vector<std::uint8_t> encode_png(const ImageTensor& image) {
    validate_pixels(image);
    std::vector<std::uint8_t> rgb(image.pixels.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        rgb[i] = static_cast<std::uint8_t>(std::lround(image.pixels[i] * 255.0f));
    }
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
        throw IoError(std::string("png encode failed: ") + png.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, rgb.data(), 0, nullptr)) {
        throw IoError(std::string("png encode failed: ") + png.message);
    }
    out.resize(size);
    return out;
}

ImageTensor decode_png(const std::vector<std::uint8_t>& bytes) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        throw ValidationError(std::string("png decode failed: ") + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, rgb.data(), 0, nullptr)) {
        png_image_free(&png);
        throw ValidationError(std::string("png decode failed: ") + png.message);
    }
    ImageTensor img(static_cast<int>(png.height), static_cast<int>(png.width));
    for (std::size_t i = 0; i < rgb.size(); ++i) img.pixels[i] = rgb[i] / 255.0f;
    return img;
}

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

ImageTensor read_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

ImageTensor resize_square(const ImageTensor& image, int size) {
    validate_pixels(image);
    if (image.height == size && image.width == size) return image;
    ImageTensor out(size, size);
    const double sy = static_cast<double>(image.height) / size;
    const double sx = static_cast<double>(image.width) / size;
    for (int y = 0; y < size; ++y) {
        const double y0 = y * sy, y1 = (y + 1) * sy;
        for (int x = 0; x < size; ++x) {
            const double x0 = x * sx, x1 = (x + 1) * sx;
            double acc[3] = {0, 0, 0};
            double wsum = 0.0;
            for (int iy = static_cast<int>(std::floor(y0)); iy < std::ceil(y1) && iy < image.height; ++iy) {
                const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
                if (wy <= 0) continue;
                for (int ix = static_cast<int>(std::floor(x0)); ix < std::ceil(x1) && ix < image.width; ++ix) {
                    const double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
                    if (wx <= 0) continue;
                    for (int c = 0; c < 3; ++c) acc[c] += wy * wx * image.at(iy, ix, c);
                    wsum += wy * wx;
                }
            }
            for (int c = 0; c < 3; ++c) {
                out.at(y, x, c) = static_cast<float>(std::clamp(acc[c] / wsum, 0.0, 1.0));
            }
        }
    }
    return out;
}

}  // namespace idedit
