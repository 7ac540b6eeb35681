#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <json.hpp>

#include "sspsd/types.hpp"

namespace sspsd {

/// Matching tolerances: I (max endpoint distance, pixels) and B (max angular
/// difference, degrees). I defaults to 10 px for 600 px data; use 8.53 for
/// 512 px data (10 * 512/600). The paper never publishes B; 10 deg here.
struct MatchConfig {
    double position_tolerance_px = 10.0;  // I
    double angle_tolerance_deg = 10.0;    // B

    void validate() const;
};

/// One scored detection with its matching outcome, kept in descending
/// confidence order.
struct DetectionFlag {
    double confidence = 0.0;
    bool is_tp = false;
};

/// Greedy confidence-ordered matching of detected marking points to ground
/// truth. A detection is a true positive iff an unmatched GT point satisfies
/// position (squared distance < I^2), both angle differences < B with 360
/// wraparound, and equal shape and type. Each GT matches at most once;
/// among eligible GT the nearest wins.
std::vector<DetectionFlag> match_points(const std::vector<MarkingPoint>& gt,
                                        const std::vector<MarkingPoint>& det,
                                        const MatchConfig& cfg);

/// Same protocol for slots: both endpoint distances < I under the better of
/// the two endpoint assignments, and the entrance direction within B
/// (crossed assignments compare against theta + 180).
std::vector<DetectionFlag> match_slots(const std::vector<ParkingSlot>& gt,
                                       const std::vector<ParkingSlot>& det,
                                       const MatchConfig& cfg);

struct PRCurve {
    std::vector<double> recalls;     // non-decreasing
    std::vector<double> precisions;
    std::int64_t n_gt = 0;
};

/// Cumulative precision/recall at every rank. `flags` must be sorted by
/// descending confidence. Throws ZeroGtError when n_gt == 0 but detections
/// exist.
PRCurve pr_curve(const std::vector<DetectionFlag>& flags, std::int64_t n_gt);

/// PASCAL VOC 2010 all-point interpolation: sum of recall increments times
/// the running maximum of precision to the right. Empty curve -> 0.
double average_precision(const PRCurve& curve);

struct ImageDetections {
    std::vector<MarkingPoint> points;
    std::vector<ParkingSlot> slots;
};

struct SceneReport {
    double ap_slot = 0.0;
    int n_images = 0;
};

struct EvalReport {
    double ap_point = 0.0;
    double ap_slot = 0.0;
    std::map<Scene, SceneReport> per_scene;
    MatchConfig config;

    nlohmann::json to_json() const;
};

/// Full-protocol evaluation: per-image matching, detections pooled across the
/// split into one PR curve per target, plus a per-scene AP breakdown.
EvalReport evaluate(const std::vector<AnnotatedImage>& dataset,
                    const std::vector<ImageDetections>& detections,
                    const MatchConfig& cfg);

}  // namespace sspsd
