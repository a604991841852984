#include "carparts/image.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "carparts/error.hpp"

namespace carparts {

namespace {

void write_exact(std::ofstream& out, const void* data, size_t bytes)
{
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

void read_exact(std::ifstream& in, void* data, size_t bytes, const std::string& path)
{
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (static_cast<size_t>(in.gcount()) != bytes)
        throw Error(Err::Io, "truncated file: " + path);
}

} // namespace

void write_pgm16(const std::string& path, const Image<uint16_t>& img)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(Err::Io, "cannot write " + path);
    out << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * 2);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const uint16_t v = img.at(x, y);
            row[2 * x] = static_cast<unsigned char>(v >> 8); // big-endian per netpbm
            row[2 * x + 1] = static_cast<unsigned char>(v & 0xff);
        }
        write_exact(out, row.data(), row.size());
    }
}

Image<uint16_t> read_pgm16(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(Err::Io, "cannot open " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || w <= 0 || h <= 0)
        throw Error(Err::Schema, "not a binary pgm: " + path);
    if (maxval != 65535)
        throw Error(Err::Schema, "expected 16-bit pgm: " + path);
    in.get(); // single whitespace after maxval
    Image<uint16_t> img(w, h);
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 2);
    read_exact(in, raw.data(), raw.size(), path);
    for (size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    return img;
}

void write_depth_raw(const std::string& path, const Image<float>& depth)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(Err::Io, "cannot write " + path);
    const uint32_t w = static_cast<uint32_t>(depth.width);
    const uint32_t h = static_cast<uint32_t>(depth.height);
    write_exact(out, &w, 4);
    write_exact(out, &h, 4);
    write_exact(out, depth.data.data(), depth.data.size() * sizeof(float));
}

Image<float> read_depth_raw(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(Err::Io, "cannot open " + path);
    uint32_t w = 0, h = 0;
    read_exact(in, &w, 4, path);
    read_exact(in, &h, 4, path);
    if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20))
        throw Error(Err::Schema, "implausible depth dimensions in " + path);
    Image<float> depth(static_cast<int>(w), static_cast<int>(h));
    read_exact(in, depth.data.data(), depth.data.size() * sizeof(float), path);
    return depth;
}

void write_ppm(const std::string& path, const Image<uint8_t>& r, const Image<uint8_t>& g,
               const Image<uint8_t>& b)
{
    if (!r.same_size(g.width, g.height) || !r.same_size(b.width, b.height))
        throw Error(Err::ShapeMismatch, "ppm channels differ in size");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(Err::Io, "cannot write " + path);
    out << "P6\n" << r.width << ' ' << r.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(r.width) * 3);
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) {
            row[3 * x] = r.at(x, y);
            row[3 * x + 1] = g.at(x, y);
            row[3 * x + 2] = b.at(x, y);
        }
        write_exact(out, row.data(), row.size());
    }
}

} // namespace carparts
