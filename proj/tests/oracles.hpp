#pragma once

// Test-only independent oracles: brute-force matchers, a rectangle-sum AP,
// finite differences and a ring-profile corner extractor. These must stay
// independent of the library implementation paths they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sspsd/evaluation.hpp"
#include "sspsd/geometry.hpp"
#include "sspsd/types.hpp"

namespace oracles {

inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

/// Central finite difference of f around *x.
template <typename F>
double central_diff(F&& f, double* x, double h = 1e-5) {
    const double orig = *x;
    *x = orig + h;
    const double fp = f();
    *x = orig - h;
    const double fm = f();
    *x = orig;
    return (fp - fm) / (2.0 * h);
}

/// All-point interpolated AP, computed directly: at every recall change the
/// precision is the maximum over all later ranks (naive suffix max).
inline double ap_rectangle_oracle(const std::vector<sspsd::DetectionFlag>& flags,
                                  long long n_gt) {
    const std::size_t n = flags.size();
    if (n == 0 || n_gt <= 0) return 0.0;
    std::vector<double> prec(n), rec(n);
    long long tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (flags[i].is_tp) ++tp;
        prec[i] = double(tp) / double(i + 1);
        rec[i] = double(tp) / double(n_gt);
    }
    double ap = 0.0, prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (rec[i] == prev) continue;
        double env = 0.0;
        for (std::size_t j = i; j < n; ++j) env = std::max(env, prec[j]);
        ap += (rec[i] - prev) * env;
        prev = rec[i];
    }
    return ap;
}

inline bool point_pair_valid(const sspsd::MarkingPoint& g, const sspsd::MarkingPoint& d,
                             const sspsd::MatchConfig& cfg) {
    using namespace sspsd;
    if (dist2(g.x, g.y, d.x, d.y) >= cfg.position_tolerance_px * cfg.position_tolerance_px)
        return false;
    if (angle_diff_deg(g.theta1, d.theta1) >= cfg.angle_tolerance_deg) return false;
    if (angle_diff_deg(g.theta2, d.theta2) >= cfg.angle_tolerance_deg) return false;
    return g.shape == d.shape && g.type == d.type;
}

inline bool slot_pair_valid(const sspsd::ParkingSlot& g, const sspsd::ParkingSlot& d,
                            const sspsd::MatchConfig& cfg) {
    using namespace sspsd;
    const double i2 = cfg.position_tolerance_px * cfg.position_tolerance_px;
    const bool direct = dist2(g.x1, g.y1, d.x1, d.y1) < i2 &&
                        dist2(g.x2, g.y2, d.x2, d.y2) < i2 &&
                        angle_diff_deg(g.theta_s, d.theta_s) < cfg.angle_tolerance_deg;
    const bool crossed = dist2(g.x1, g.y1, d.x2, d.y2) < i2 &&
                         dist2(g.x2, g.y2, d.x1, d.y1) < i2 &&
                         angle_diff_deg(g.theta_s, d.theta_s + 180.0) < cfg.angle_tolerance_deg;
    return direct || crossed;
}

/// Exhaustive one-to-one assignment search. Detections are visited in
/// descending confidence; among all injective assignments the TP flag vector
/// that is lexicographically best in that order wins (TP beats FP at the
/// earliest differing rank). This is the semantics the greedy matcher is
/// expected to realize.
template <typename Item, typename ValidFn>
std::vector<sspsd::DetectionFlag> brute_force_match(const std::vector<Item>& gt,
                                                    const std::vector<Item>& det,
                                                    ValidFn&& valid) {
    std::vector<std::size_t> order(det.size());
    for (std::size_t i = 0; i < det.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&det](std::size_t a, std::size_t b) {
        return det[a].confidence > det[b].confidence;
    });

    std::vector<char> flags(det.size(), 0), best_flags;
    std::vector<char> gt_used(gt.size(), 0);
    bool have_best = false;

    std::function<void(std::size_t)> recurse = [&](std::size_t pos) {
        if (pos == order.size()) {
            if (!have_best || std::lexicographical_compare(best_flags.begin(), best_flags.end(),
                                                           flags.begin(), flags.end())) {
                best_flags = flags;
                have_best = true;
            }
            return;
        }
        const Item& d = det[order[pos]];
        for (std::size_t g = 0; g < gt.size(); ++g) {
            if (gt_used[g] || !valid(gt[g], d)) continue;
            gt_used[g] = 1;
            flags[pos] = 1;
            recurse(pos + 1);
            gt_used[g] = 0;
        }
        flags[pos] = 0;
        recurse(pos + 1);
    };
    recurse(0);

    std::vector<sspsd::DetectionFlag> result(det.size());
    for (std::size_t i = 0; i < det.size(); ++i) {
        result[i].confidence = det[order[i]].confidence;
        result[i].is_tp = best_flags[i] != 0;
    }
    return result;
}

/// Ring-profile junction detector for clean synthetic renders: a pixel on a
/// line is a corner when the intensity profile on a circle around it has two
/// non-collinear arcs (L) or three arcs (T). Candidate pixels are clustered
/// and averaged.
struct ExtractedCorner {
    double x = 0.0, y = 0.0;
    int arms = 0;
};

inline double bilinear(const sspsd::Image& img, double x, double y) {
    const int x0 = std::clamp(int(std::floor(x)), 0, img.width - 1);
    const int y0 = std::clamp(int(std::floor(y)), 0, img.height - 1);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = std::clamp(x - x0, 0.0, 1.0), fy = std::clamp(y - y0, 0.0, 1.0);
    return (1 - fy) * ((1 - fx) * img.at(y0, x0, 0) + fx * img.at(y0, x1, 0)) +
           fy * ((1 - fx) * img.at(y1, x0, 0) + fx * img.at(y1, x1, 0));
}

/// Arc centers (degrees) of the bright runs on a circle around (cx, cy).
inline std::vector<double> ring_arcs(const sspsd::Image& img, double cx, double cy,
                                     double radius, double thr) {
    const int n = 720;
    std::vector<char> on(n);
    for (int s = 0; s < n; ++s) {
        const double a = 2.0 * sspsd::kPi * s / n;
        on[s] = bilinear(img, cx + radius * std::cos(a), cy + radius * std::sin(a)) > thr;
    }
    int start = -1;
    for (int s = 0; s < n; ++s) {
        if (on[s] && !on[(s + n - 1) % n]) start = s;
    }
    if (start < 0) return {};  // no transition: fully on or off
    std::vector<double> centers;
    for (int step = 0; step < n;) {
        if (!on[(start + step) % n]) {
            ++step;
            continue;
        }
        const int arc_start = step;
        int len = 0;
        while (step < n && on[(start + step) % n]) {
            ++step;
            ++len;
        }
        centers.push_back(std::fmod(360.0 * (start + arc_start + len / 2.0) / n, 360.0));
    }
    std::sort(centers.begin(), centers.end());
    return centers;
}

inline std::vector<ExtractedCorner> extract_corners(const sspsd::Image& img) {
    float lo = 1.0f, hi = 0.0f;
    for (float v : img.pixels) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double thr = 0.5 * (lo + hi);
    const double r1 = 9.0, r2 = 14.0;

    // A pixel is a junction candidate when both rings see the same 2..3 arms
    // at consistent angles: arms radiate from the true corner, so apparent
    // angles shift with displacement and only near-center pixels agree.
    struct Candidate {
        int x, y, arms;
    };
    std::vector<Candidate> cands;
    const int margin = int(r2) + 2;
    for (int y = margin; y < img.height - margin; ++y) {
        for (int x = margin; x < img.width - margin; ++x) {
            if (img.at(y, x, 0) <= thr) continue;
            const double cx = x + 0.5, cy = y + 0.5;
            const auto a1 = ring_arcs(img, cx, cy, r1, thr);
            const auto a2 = ring_arcs(img, cx, cy, r2, thr);
            if (a1.size() != a2.size()) continue;
            if (a1.size() < 2 || a1.size() > 3) continue;
            double max_shift = 0.0;
            for (double c1 : a1) {
                double best = 360.0;
                for (double c2 : a2) best = std::min(best, sspsd::angle_diff_deg(c1, c2));
                max_shift = std::max(max_shift, best);
            }
            if (max_shift > 3.0) continue;
            if (a2.size() == 2) {
                const double sep = sspsd::angle_diff_deg(a2[0], a2[1]);
                if (sep < 20.0 || sep > 155.0) continue;  // line interior or blob
            }
            cands.push_back({x, y, int(a2.size())});
        }
    }

    std::vector<ExtractedCorner> corners;
    std::vector<char> used(cands.size(), 0);
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (used[i]) continue;
        double sx = 0, sy = 0;
        int n = 0, arms = 0;
        std::vector<std::size_t> stack{i};
        used[i] = 1;
        while (!stack.empty()) {
            const std::size_t k = stack.back();
            stack.pop_back();
            sx += cands[k].x + 0.5;
            sy += cands[k].y + 0.5;
            arms = std::max(arms, cands[k].arms);
            ++n;
            for (std::size_t j = 0; j < cands.size(); ++j) {
                if (used[j]) continue;
                if (std::abs(cands[j].x - cands[k].x) <= 3 &&
                    std::abs(cands[j].y - cands[k].y) <= 3) {
                    used[j] = 1;
                    stack.push_back(j);
                }
            }
        }
        corners.push_back({sx / n, sy / n, arms});
    }
    return corners;
}

}  // namespace oracles
