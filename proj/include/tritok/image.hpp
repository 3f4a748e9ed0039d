#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "tritok/tensor.hpp"

namespace tritok {

// Row-major H x W x C float image, channels interleaved.
struct Image {
    std::size_t height = 0, width = 0, channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
        : height(h), width(w), channels(c), data(h * w * c, fill) {}

    float& at(std::size_t r, std::size_t c, std::size_t ch) { return data[(r * width + c) * channels + ch]; }
    float at(std::size_t r, std::size_t c, std::size_t ch) const { return data[(r * width + c) * channels + ch]; }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    template <typename T>
    Tensor<T> to_tensor() const {
        return Tensor<T>::from({height, width, channels}, std::vector<T>(data.begin(), data.end()));
    }
    template <typename T>
    static Image from_tensor(const Tensor<T>& t);
};

// 8-bit PNG (gray or RGB); values are clamped to [0, 1] on write.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);
// Binary P6 (RGB) / P5 (gray).
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);
// Single-channel little-endian 32-bit float PFM ("Pf"), bottom row first.
void write_pfm(const std::filesystem::path& path, const Image& depth);
Image read_pfm(const std::filesystem::path& path);

}  // namespace tritok
