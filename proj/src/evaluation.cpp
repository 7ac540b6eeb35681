#include "sspsd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sspsd/geometry.hpp"

namespace sspsd {

void MatchConfig::validate() const {
    if (position_tolerance_px <= 0.0) throw ConfigError("I must be > 0");
    if (angle_tolerance_deg <= 0.0 || angle_tolerance_deg >= 180.0) {
        throw ConfigError("B must be in (0, 180)");
    }
}

namespace {

std::vector<std::size_t> confidence_order(std::size_t n, const double* confs) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [confs](std::size_t a, std::size_t b) { return confs[a] > confs[b]; });
    return order;
}

}  // namespace

std::vector<DetectionFlag> match_points(const std::vector<MarkingPoint>& gt,
                                        const std::vector<MarkingPoint>& det,
                                        const MatchConfig& cfg) {
    cfg.validate();
    const double i2 = cfg.position_tolerance_px * cfg.position_tolerance_px;

    std::vector<double> confs(det.size());
    for (std::size_t i = 0; i < det.size(); ++i) confs[i] = det[i].confidence;
    const auto order = confidence_order(det.size(), confs.data());

    std::vector<bool> gt_used(gt.size(), false);
    std::vector<DetectionFlag> flags;
    flags.reserve(det.size());
    for (std::size_t idx : order) {
        const MarkingPoint& d = det[idx];
        double best_d2 = std::numeric_limits<double>::infinity();
        std::size_t best_g = gt.size();
        for (std::size_t g = 0; g < gt.size(); ++g) {
            if (gt_used[g]) continue;
            const MarkingPoint& t = gt[g];
            const double d2 = dist2(t.x, t.y, d.x, d.y);
            if (!(d2 < i2)) continue;
            if (!(angle_diff_deg(t.theta1, d.theta1) < cfg.angle_tolerance_deg)) continue;
            if (!(angle_diff_deg(t.theta2, d.theta2) < cfg.angle_tolerance_deg)) continue;
            if (t.shape != d.shape || t.type != d.type) continue;
            if (d2 < best_d2) {
                best_d2 = d2;
                best_g = g;
            }
        }
        DetectionFlag f;
        f.confidence = d.confidence;
        f.is_tp = best_g < gt.size();
        if (f.is_tp) gt_used[best_g] = true;
        flags.push_back(f);
    }
    return flags;
}

std::vector<DetectionFlag> match_slots(const std::vector<ParkingSlot>& gt,
                                       const std::vector<ParkingSlot>& det,
                                       const MatchConfig& cfg) {
    cfg.validate();
    const double i2 = cfg.position_tolerance_px * cfg.position_tolerance_px;

    // Valid under the direct or the crossed endpoint assignment; the crossed
    // one flips the entrance direction by 180 degrees.
    auto assignment_cost = [&](const ParkingSlot& t, const ParkingSlot& d) {
        double best = std::numeric_limits<double>::infinity();
        const double d11 = dist2(t.x1, t.y1, d.x1, d.y1);
        const double d22 = dist2(t.x2, t.y2, d.x2, d.y2);
        if (d11 < i2 && d22 < i2 &&
            angle_diff_deg(t.theta_s, d.theta_s) < cfg.angle_tolerance_deg) {
            best = std::min(best, d11 + d22);
        }
        const double d12 = dist2(t.x1, t.y1, d.x2, d.y2);
        const double d21 = dist2(t.x2, t.y2, d.x1, d.y1);
        if (d12 < i2 && d21 < i2 &&
            angle_diff_deg(t.theta_s, d.theta_s + 180.0) < cfg.angle_tolerance_deg) {
            best = std::min(best, d12 + d21);
        }
        return best;  // infinity when no valid assignment
    };

    std::vector<double> confs(det.size());
    for (std::size_t i = 0; i < det.size(); ++i) confs[i] = det[i].confidence;
    const auto order = confidence_order(det.size(), confs.data());

    std::vector<bool> gt_used(gt.size(), false);
    std::vector<DetectionFlag> flags;
    flags.reserve(det.size());
    for (std::size_t idx : order) {
        const ParkingSlot& d = det[idx];
        double best_cost = std::numeric_limits<double>::infinity();
        std::size_t best_g = gt.size();
        for (std::size_t g = 0; g < gt.size(); ++g) {
            if (gt_used[g]) continue;
            const double cost = assignment_cost(gt[g], d);
            if (cost < best_cost) {
                best_cost = cost;
                best_g = g;
            }
        }
        DetectionFlag f;
        f.confidence = d.confidence;
        f.is_tp = best_g < gt.size();
        if (f.is_tp) gt_used[best_g] = true;
        flags.push_back(f);
    }
    return flags;
}

PRCurve pr_curve(const std::vector<DetectionFlag>& flags, std::int64_t n_gt) {
    if (n_gt == 0 && !flags.empty()) {
        throw ZeroGtError("pr_curve: detections present but no ground truth");
    }
    PRCurve curve;
    curve.n_gt = n_gt;
    std::int64_t tp = 0;
    for (std::size_t k = 0; k < flags.size(); ++k) {
        if (flags[k].is_tp) ++tp;
        curve.precisions.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        curve.recalls.push_back(n_gt > 0 ? static_cast<double>(tp) / static_cast<double>(n_gt)
                                         : 0.0);
    }
    return curve;
}

double average_precision(const PRCurve& curve) {
    const std::size_t n = curve.recalls.size();
    if (n == 0) return 0.0;

    std::vector<double> envelope(n);  // running max of precision to the right
    double run = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        run = std::max(run, curve.precisions[i]);
        envelope[i] = run;
    }

    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (curve.recalls[i] != prev_recall) {
            ap += (curve.recalls[i] - prev_recall) * envelope[i];
            prev_recall = curve.recalls[i];
        }
    }
    return ap;
}

namespace {

/// Pools flags across images, sorts by confidence (stable over image/index
/// order) and returns the all-point AP.
double pooled_ap(std::vector<DetectionFlag> flags, std::int64_t n_gt) {
    std::stable_sort(flags.begin(), flags.end(),
                     [](const DetectionFlag& a, const DetectionFlag& b) {
                         return a.confidence > b.confidence;
                     });
    if (n_gt == 0 && !flags.empty()) return 0.0;  // per-scene degenerate slice
    return average_precision(pr_curve(flags, n_gt));
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["ap_point"] = ap_point;
    j["ap_slot"] = ap_slot;
    j["per_scene"] = nlohmann::json::object();
    for (const auto& [scene, rep] : per_scene) {
        j["per_scene"][to_string(scene)] = {{"ap_slot", rep.ap_slot},
                                            {"n_images", rep.n_images}};
    }
    j["config"] = {{"I", config.position_tolerance_px}, {"B", config.angle_tolerance_deg}};
    return j;
}

EvalReport evaluate(const std::vector<AnnotatedImage>& dataset,
                    const std::vector<ImageDetections>& detections,
                    const MatchConfig& cfg) {
    cfg.validate();
    if (dataset.size() != detections.size()) {
        throw ShapeError("evaluate: detections must be provided for every image");
    }

    std::vector<DetectionFlag> point_flags, slot_flags;
    std::int64_t n_gt_points = 0, n_gt_slots = 0;
    std::map<Scene, std::vector<DetectionFlag>> scene_slot_flags;
    std::map<Scene, std::int64_t> scene_gt_slots;
    std::map<Scene, int> scene_images;

    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const AnnotatedImage& item = dataset[i];
        const auto pf = match_points(item.points(), detections[i].points, cfg);
        const auto sf = match_slots(item.slots(), detections[i].slots, cfg);
        point_flags.insert(point_flags.end(), pf.begin(), pf.end());
        slot_flags.insert(slot_flags.end(), sf.begin(), sf.end());
        n_gt_points += static_cast<std::int64_t>(item.points().size());
        n_gt_slots += static_cast<std::int64_t>(item.slots().size());

        auto& sflags = scene_slot_flags[item.scene];
        sflags.insert(sflags.end(), sf.begin(), sf.end());
        scene_gt_slots[item.scene] += static_cast<std::int64_t>(item.slots().size());
        scene_images[item.scene] += 1;
    }

    EvalReport report;
    report.config = cfg;
    if (n_gt_points == 0 && !point_flags.empty()) {
        throw ZeroGtError("evaluate: point detections present but no GT points");
    }
    if (n_gt_slots == 0 && !slot_flags.empty()) {
        throw ZeroGtError("evaluate: slot detections present but no GT slots");
    }
    report.ap_point = pooled_ap(std::move(point_flags), n_gt_points);
    report.ap_slot = pooled_ap(std::move(slot_flags), n_gt_slots);
    for (const auto& [scene, flags] : scene_slot_flags) {
        SceneReport sr;
        sr.n_images = scene_images[scene];
        sr.ap_slot = pooled_ap(flags, scene_gt_slots[scene]);
        report.per_scene[scene] = sr;
    }
    return report;
}

}  // namespace sspsd
