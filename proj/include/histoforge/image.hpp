#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace histoforge {

/// Interleaved 8-bit RGB raster. Pixel (x, y) channel c lives at
/// data[(y * width + x) * 3 + c] with c = 0 red, 1 green, 2 blue.
struct ImageTensor {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    ImageTensor() = default;
    ImageTensor(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    std::uint8_t& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    bool operator==(const ImageTensor&) const = default;
};

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

ImageTensor load_image(const std::filesystem::path& path);
void save_png(const ImageTensor& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const ImageTensor& image);

/// True if the file decodes as an image without throwing.
bool is_readable_image(const std::filesystem::path& path);

}  // namespace histoforge
