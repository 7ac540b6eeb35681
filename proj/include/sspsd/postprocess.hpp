#pragma once

#include <vector>

#include "sspsd/types.hpp"

namespace sspsd {

/// Geometric template-matching parameters. Pixel-unit defaults are for
/// 512 px images; scaled_to() rescales them for other sizes.
struct TemplateConfig {
    double conf_threshold = 0.5;
    double suppress_radius = 16.0;  // one grid cell at 512 / 16
    double perp_length_min = 120.0;
    double perp_length_max = 300.0;
    double slant_length_min = 120.0;
    double slant_length_max = 300.0;
    double direction_tolerance = 10.0;  // degrees
    bool midline_clearance = true;

    TemplateConfig scaled_to(int image_size, int reference_size = 512) const;
    void validate() const;
};

/// decode_grid at conf_threshold followed by greedy non-max suppression:
/// points are processed by descending confidence (ties by cell order) and a
/// point within suppress_radius of an already-kept point is dropped.
std::vector<MarkingPoint> extract_marking_points(const PredictionGrid& grid,
                                                 const TemplateConfig& cfg,
                                                 int image_size);

/// Template matching of point pairs into entrance lines. A pair forms a slot
/// iff (a) both points have the same type and the entrance length is within
/// that type's range, (b) each point's theta1 is collinear with the pair
/// direction and the two theta2 point the same way, off the entrance line,
/// within direction_tolerance, and (c) with midline_clearance, no third point
/// lies within suppress_radius of the segment. Output is sorted by
/// endpoint coordinates and is invariant to input order.
std::vector<ParkingSlot> pair_slots(const std::vector<MarkingPoint>& points,
                                    const TemplateConfig& cfg);

}  // namespace sspsd
