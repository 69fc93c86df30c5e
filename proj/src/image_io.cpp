#include "relex/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "relex/errors.hpp"

namespace relex {

namespace {

// Skips whitespace and "#" comment lines, then reads one ASCII integer.
std::size_t read_header_int(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw FormatError("malformed netpbm header in " + path);
    std::size_t value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + static_cast<std::size_t>(c - '0');
        c = in.get();
    }
    if (c != EOF && !std::isspace(c)) throw FormatError("malformed netpbm header in " + path);
    return value;
}

void write_netpbm(const Tensor& image, const std::string& path, const char* magic,
                  std::size_t channels) {
    if (image.rank() != 3 || image.extent(0) != channels) {
        throw DimensionError(std::string("netpbm writer expects [") + std::to_string(channels) +
                             ",H,W], got " + image.shape_string());
    }
    const std::size_t h = image.extent(1), w = image.extent(2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open image for writing: " + path);
    out << magic << "\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(w * channels);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                row[x * channels + c] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw FormatError("short write to image: " + path);
}

}  // namespace

Tensor nearest_neighbor_resize(const Tensor& image, std::size_t out_h, std::size_t out_w) {
    if (image.rank() != 3) throw DimensionError("resize expects [C,H,W]");
    const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
    if (h == out_h && w == out_w) return image;
    Tensor out({c, out_h, out_w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < out_h; ++y) {
            const std::size_t sy = std::min(h - 1, y * h / out_h);
            for (std::size_t x = 0; x < out_w; ++x) {
                const std::size_t sx = std::min(w - 1, x * w / out_w);
                out.at(ch, y, x) = image.at(ch, sy, sx);
            }
        }
    }
    return out;
}

Tensor decode_image(const std::string& path, std::size_t target_h, std::size_t target_w) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open image: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    std::size_t channels;
    if (m0 == 'P' && m1 == '5') {
        channels = 1;
    } else if (m0 == 'P' && m1 == '6') {
        channels = 3;
    } else {
        throw FormatError("unsupported image magic in " + path + " (want P5 or P6)");
    }
    const std::size_t w = read_header_int(in, path);
    const std::size_t h = read_header_int(in, path);
    const std::size_t maxval = read_header_int(in, path);
    if (maxval != 255) throw FormatError("unsupported maxval " + std::to_string(maxval) + " in " + path);
    if (w == 0 || h == 0) throw FormatError("zero image extent in " + path);

    std::vector<unsigned char> raw(w * h * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        throw FormatError("truncated pixel data in " + path);
    }

    Tensor image({channels, h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                image.at(c, y, x) = raw[(y * w + x) * channels + c] / 255.0;
            }
        }
    }
    if (target_h != 0 && target_w != 0) image = nearest_neighbor_resize(image, target_h, target_w);
    return image;
}

void encode_pgm(const Tensor& image, const std::string& path) { write_netpbm(image, path, "P5", 1); }

void encode_ppm(const Tensor& image, const std::string& path) { write_netpbm(image, path, "P6", 3); }

}  // namespace relex
