#pragma once

#include <string>

#include "sspsd/types.hpp"

namespace sspsd {

/// Binary PGM (P5, 1 channel) / PPM (P6, 3 channels), 8-bit. Pixels are
/// quantized to 1/255 steps, which keeps generated datasets byte-stable.
void write_pnm(const Image& img, const std::string& path);
Image read_pnm(const std::string& path);

/// Draws an anti-aliased segment of the given thickness; intensity blends
/// toward `value` by pixel coverage. Operates on every channel, or on a
/// single one when `channel` >= 0.
void draw_segment(Image& img, double x0, double y0, double x1, double y1,
                  double thickness, double value, int channel = -1);

/// Filled axis-rotated rectangle (center, half extents, rotation in degrees).
void fill_rotated_rect(Image& img, double cx, double cy, double half_w,
                       double half_h, double angle_deg, double value);

}  // namespace sspsd
