#include "tritok/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "tritok/error.hpp"

namespace tritok {

template <typename T>
Image Image::from_tensor(const Tensor<T>& t) {
    if (t.rank() != 3) throw shape_error("image from tensor: expected [H,W,C], got " + shape_str(t.shape()));
    Image img(t.dim(0), t.dim(1), t.dim(2));
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(t.data()[i]);
    return img;
}

template Image Image::from_tensor(const Tensor<float>&);
template Image Image::from_tensor(const Tensor<double>&);

namespace {

using FilePtr = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode), &std::fclose);
    if (!f) throw io_error("cannot open '" + path.string() + "'");
    return f;
}

std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3)
        throw io_error("PNG writer supports 1 or 3 channels, got " + std::to_string(image.channels));
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw io_error("libpng initialisation failed");
    }
    std::vector<std::uint8_t> bytes(image.data.size());
    std::transform(image.data.begin(), image.data.end(), bytes.begin(), to_byte);
    std::vector<png_bytep> rows(image.height);
    for (std::size_t r = 0; r < image.height; ++r) rows[r] = bytes.data() + r * image.width * image.channels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw io_error("PNG encoding failed for '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("libpng initialisation failed");
    }
    Image img;
    std::vector<std::uint8_t> bytes;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("PNG decoding failed for '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    img.height = png_get_image_height(png, info);
    img.width = png_get_image_width(png, info);
    img.channels = png_get_channels(png, info);
    bytes.resize(img.height * img.width * img.channels);
    rows.resize(img.height);
    for (std::size_t r = 0; r < img.height; ++r) rows[r] = bytes.data() + r * img.width * img.channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    img.data.resize(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3)
        throw io_error("PPM writer supports 1 or 3 channels, got " + std::to_string(image.channels));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open '" + path.string() + "'");
    os << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
    std::vector<std::uint8_t> bytes(image.data.size());
    std::transform(image.data.begin(), image.data.end(), bytes.begin(), to_byte);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open '" + path.string() + "'");
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    is >> magic >> w >> h >> maxval;
    if ((magic != "P6" && magic != "P5") || maxval != 255) throw io_error("unsupported PPM header in '" + path.string() + "'");
    is.get();
    Image img(h, w, magic == "P6" ? 3 : 1);
    std::vector<std::uint8_t> bytes(img.data.size());
    if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
        throw io_error("truncated PPM payload in '" + path.string() + "'");
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

void write_pfm(const std::filesystem::path& path, const Image& depth) {
    if (depth.channels != 1) throw io_error("PFM depth maps must have one channel");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open '" + path.string() + "'");
    os << "Pf\n" << depth.width << ' ' << depth.height << "\n-1.0\n";
    for (std::size_t r = depth.height; r-- > 0;)
        os.write(reinterpret_cast<const char*>(depth.data.data() + r * depth.width),
                 static_cast<std::streamsize>(depth.width * sizeof(float)));
}

Image read_pfm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open '" + path.string() + "'");
    std::string magic;
    std::size_t w = 0, h = 0;
    double scale = 0;
    is >> magic >> w >> h >> scale;
    if (magic != "Pf" || scale >= 0) throw io_error("only little-endian single-channel PFM is supported");
    is.get();
    Image img(h, w, 1);
    for (std::size_t r = h; r-- > 0;)
        if (!is.read(reinterpret_cast<char*>(img.data.data() + r * w), static_cast<std::streamsize>(w * sizeof(float))))
            throw io_error("truncated PFM payload in '" + path.string() + "'");
    return img;
}

}  // namespace tritok
