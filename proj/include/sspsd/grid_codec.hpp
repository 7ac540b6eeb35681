#pragma once

#include <vector>

#include "sspsd/types.hpp"

namespace sspsd {

/// Encode ground-truth marking points into the S x S x 9 grid target.
/// Each point owns the cell containing it: C = 1, offsets are the fractional
/// position inside the cell, angles become (cos, sin) pairs, shape/type are
/// binary codes (s = 1 for T, t = 1 for slanted). All other cells stay zero.
///
/// Throws PointOutOfBoundsError or TwoPointsOneCellError.
PredictionGrid encode_ground_truth(const std::vector<MarkingPoint>& points,
                                   int grid_size, int image_size);

/// Decode a grid back into marking points: one point per cell with
/// C >= conf_threshold, emitted in row-major cell order. (cos, sin) pairs are
/// renormalized to unit length before atan2; zero-norm pairs decode to 0 deg.
std::vector<MarkingPoint> decode_grid(const PredictionGrid& grid,
                                      double conf_threshold, int image_size);

}  // namespace sspsd
