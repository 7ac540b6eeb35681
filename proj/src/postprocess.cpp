#include "sspsd/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "sspsd/geometry.hpp"
#include "sspsd/grid_codec.hpp"

namespace sspsd {

TemplateConfig TemplateConfig::scaled_to(int image_size, int reference_size) const {
    TemplateConfig c = *this;
    const double f = static_cast<double>(image_size) / reference_size;
    c.suppress_radius = suppress_radius * f;
    c.perp_length_min = perp_length_min * f;
    c.perp_length_max = perp_length_max * f;
    c.slant_length_min = slant_length_min * f;
    c.slant_length_max = slant_length_max * f;
    return c;
}

void TemplateConfig::validate() const {
    if (conf_threshold < 0.0 || conf_threshold > 1.0) {
        throw ConfigError("conf_threshold must be in [0, 1]");
    }
    if (suppress_radius < 0.0) throw ConfigError("suppress_radius must be >= 0");
    if (!(perp_length_min > 0.0 && perp_length_max >= perp_length_min)) {
        throw ConfigError("perpendicular length range is degenerate");
    }
    if (!(slant_length_min > 0.0 && slant_length_max >= slant_length_min)) {
        throw ConfigError("slanted length range is degenerate");
    }
    if (direction_tolerance <= 0.0) throw ConfigError("direction_tolerance must be > 0");
}

std::vector<MarkingPoint> extract_marking_points(const PredictionGrid& grid,
                                                 const TemplateConfig& cfg,
                                                 int image_size) {
    std::vector<MarkingPoint> decoded = decode_grid(grid, cfg.conf_threshold, image_size);

    // decode_grid emits row-major cell order; a stable sort keeps that order
    // among equal confidences, making suppression deterministic.
    std::vector<std::size_t> order(decoded.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&decoded](std::size_t a, std::size_t b) {
        return decoded[a].confidence > decoded[b].confidence;
    });

    std::vector<MarkingPoint> kept;
    for (std::size_t idx : order) {
        const MarkingPoint& p = decoded[idx];
        bool suppressed = false;
        for (const MarkingPoint& q : kept) {
            if (dist(p.x, p.y, q.x, q.y) < cfg.suppress_radius) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(p);
    }
    return kept;
}

namespace {

bool pair_passes(const MarkingPoint& a, const MarkingPoint& b,
                 const std::vector<MarkingPoint>& all, std::size_t ia, std::size_t ib,
                 const TemplateConfig& cfg) {
    if (a.type != b.type) return false;

    const double len = dist(a.x, a.y, b.x, b.y);
    const double lo = a.type == SlotType::Slanted ? cfg.slant_length_min : cfg.perp_length_min;
    const double hi = a.type == SlotType::Slanted ? cfg.slant_length_max : cfg.perp_length_max;
    if (len < lo || len > hi) return false;

    // Entrance edges must run along the pair; separating edges must agree
    // with each other and leave the entrance line.
    const double seg_dir = rad_to_deg(std::atan2(b.y - a.y, b.x - a.x));
    if (axial_diff_deg(a.theta1, seg_dir) > cfg.direction_tolerance) return false;
    if (axial_diff_deg(b.theta1, seg_dir) > cfg.direction_tolerance) return false;
    if (angle_diff_deg(a.theta2, b.theta2) > cfg.direction_tolerance) return false;
    if (axial_diff_deg(a.theta2, seg_dir) < cfg.direction_tolerance) return false;
    if (axial_diff_deg(b.theta2, seg_dir) < cfg.direction_tolerance) return false;

    if (cfg.midline_clearance) {
        for (std::size_t k = 0; k < all.size(); ++k) {
            if (k == ia || k == ib) continue;
            if (point_segment_distance(all[k].x, all[k].y, a.x, a.y, b.x, b.y) <
                cfg.suppress_radius) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace

std::vector<ParkingSlot> pair_slots(const std::vector<MarkingPoint>& points,
                                    const TemplateConfig& cfg) {
    std::vector<ParkingSlot> slots;
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            const MarkingPoint& a = points[i];
            const MarkingPoint& b = points[j];
            if (!pair_passes(a, b, points, i, j, cfg)) continue;

            const MarkingPoint* p1 = &a;
            const MarkingPoint* p2 = &b;
            if (std::make_pair(b.x, b.y) < std::make_pair(a.x, a.y)) std::swap(p1, p2);

            ParkingSlot s;
            s.x1 = p1->x; s.y1 = p1->y;
            s.x2 = p2->x; s.y2 = p2->y;
            s.theta_s = canonical_deg(rad_to_deg(std::atan2(p2->y - p1->y, p2->x - p1->x)));
            s.type = a.type;
            s.confidence = std::min(a.confidence, b.confidence);
            slots.push_back(s);
        }
    }
    std::sort(slots.begin(), slots.end(), [](const ParkingSlot& l, const ParkingSlot& r) {
        return std::tie(l.x1, l.y1, l.x2, l.y2) < std::tie(r.x1, r.y1, r.x2, r.y2);
    });
    return slots;
}

}  // namespace sspsd
