#include "sspsd/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "sspsd/geometry.hpp"

namespace sspsd {

void write_pnm(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3) {
        throw IoError("write_pnm: only 1- or 3-channel images supported");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> bytes(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
        bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write: " + path);
}

Image read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string magic;
    in >> magic;
    int channels = 0;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw IoError("unsupported PNM magic '" + magic + "' in " + path);

    auto next_int = [&in, &path]() {
        // Skip whitespace and '#' comment lines between header tokens.
        int c = in.peek();
        while (c == '#' || std::isspace(c)) {
            if (c == '#') in.ignore(1 << 16, '\n');
            else in.ignore(1);
            c = in.peek();
        }
        int v = 0;
        if (!(in >> v)) throw IoError("bad PNM header in " + path);
        return v;
    };
    const int width = next_int();
    const int height = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw IoError("only 8-bit PNM supported: " + path);
    in.ignore(1);  // single whitespace after maxval

    Image img(height, width, channels);
    std::vector<std::uint8_t> bytes(img.pixels.size());
    in.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw IoError("truncated PNM data in " + path);
    }
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        img.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
    }
    return img;
}

void draw_segment(Image& img, double x0, double y0, double x1, double y1,
                  double thickness, double value, int channel) {
    const double half = thickness * 0.5;
    const double margin = half + 1.5;
    const int min_x = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - margin)));
    const int max_x = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(x0, x1) + margin)));
    const int min_y = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - margin)));
    const int max_y = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(y0, y1) + margin)));

    for (int y = min_y; y <= max_y; ++y) {
        for (int x = min_x; x <= max_x; ++x) {
            const double d = point_segment_distance(x + 0.5, y + 0.5, x0, y0, x1, y1);
            // 1 px linear falloff at the edge gives a cheap anti-alias.
            const double cover = std::clamp(half + 0.5 - d, 0.0, 1.0);
            if (cover <= 0.0) continue;
            const int c_lo = channel >= 0 ? channel : 0;
            const int c_hi = channel >= 0 ? channel + 1 : img.channels;
            for (int c = c_lo; c < c_hi; ++c) {
                const float old = img.at(y, x, c);
                img.at(y, x, c) = static_cast<float>(old + (value - old) * cover);
            }
        }
    }
}

void fill_rotated_rect(Image& img, double cx, double cy, double half_w,
                       double half_h, double angle_deg, double value) {
    const double rad = deg_to_rad(angle_deg);
    const double ca = std::cos(rad), sa = std::sin(rad);
    const double radius = std::hypot(half_w, half_h);
    const int min_x = std::max(0, static_cast<int>(std::floor(cx - radius)));
    const int max_x = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius)));
    const int min_y = std::max(0, static_cast<int>(std::floor(cy - radius)));
    const int max_y = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));

    for (int y = min_y; y <= max_y; ++y) {
        for (int x = min_x; x <= max_x; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double u = dx * ca + dy * sa;
            const double v = -dx * sa + dy * ca;
            if (std::fabs(u) <= half_w && std::fabs(v) <= half_h) {
                for (int c = 0; c < img.channels; ++c) {
                    img.at(y, x, c) = static_cast<float>(value);
                }
            }
        }
    }
}

}  // namespace sspsd
