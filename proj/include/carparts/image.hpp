#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "carparts/error.hpp"

namespace carparts {

// Row-major single-channel raster.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    T& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    const T& at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }

    bool same_size(int w, int h) const { return width == w && height == h; }
    size_t size() const { return data.size(); }
};

// Channel-major stack of scalar planes (C x H x W).
struct Tensor3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), data(static_cast<size_t>(c) * h * w, fill)
    {
    }

    double& at(int c, int y, int x)
    {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const
    {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }

    size_t plane_size() const { return static_cast<size_t>(height) * width; }
};

// 16-bit PGM (P5, maxval 65535, big-endian samples per the Netpbm spec).
void write_pgm16(const std::string& path, const Image<std::uint16_t>& img);
Image<std::uint16_t> read_pgm16(const std::string& path);

// Raw float raster: u32 LE width, u32 LE height, then f32 LE row-major.
void write_depth_raw(const std::string& path, const Image<float>& img);
Image<float> read_depth_raw(const std::string& path);

// Binary PPM (P6, 8-bit) for the optional shaded preview.
void write_ppm(const std::string& path, const Image<std::uint8_t>& r,
               const Image<std::uint8_t>& g, const Image<std::uint8_t>& b);

} // namespace carparts
