#include "sspsd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sspsd/geometry.hpp"
#include "sspsd/image.hpp"
#include "sspsd/rng.hpp"

namespace sspsd {

std::map<Scene, double> SynthConfig::default_scene_mix() {
    // Rough shape of the real-world scene distribution.
    return {
        {Scene::OutdoorDaylight, 0.30}, {Scene::OutdoorShadow, 0.20},
        {Scene::IndoorBrightLight, 0.15}, {Scene::IndoorLowLight, 0.12},
        {Scene::OutdoorRainy, 0.10}, {Scene::OutdoorNight, 0.08},
        {Scene::Damaged, 0.05},
    };
}

SynthConfig SynthConfig::scaled_to(int new_image_size) const {
    SynthConfig c = *this;
    const double f = static_cast<double>(new_image_size) / image_size;
    c.image_size = new_image_size;
    c.slot_width_min = slot_width_min * f;
    c.slot_width_max = slot_width_max * f;
    c.line_thickness = std::max(1.0, line_thickness * f);
    return c;
}

void SynthConfig::validate() const {
    if (n_images < 0) throw ConfigError("n_images must be >= 0");
    if (image_size < 32) throw ConfigError("image_size must be >= 32");
    if (!(slot_width_min > 0.0 && slot_width_max >= slot_width_min)) {
        throw ConfigError("slot width range is degenerate");
    }
    if (!(slots_min >= 1 && slots_max >= slots_min)) {
        throw ConfigError("slots-per-row range is degenerate");
    }
    if (!(rows_min >= 1 && rows_max >= rows_min)) {
        throw ConfigError("rows-per-image range is degenerate");
    }
    if (slanted_fraction < 0.0 || slanted_fraction > 1.0) {
        throw ConfigError("slanted_fraction must be in [0, 1]");
    }
    if (line_thickness <= 0.0) throw ConfigError("line_thickness must be > 0");
    if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
    if (!(brightness_min >= 0.0 && brightness_max >= brightness_min && brightness_max <= 1.0)) {
        throw ConfigError("brightness range is degenerate");
    }
    if (occlusion_prob < 0.0 || occlusion_prob > 1.0) {
        throw ConfigError("occlusion_prob must be in [0, 1]");
    }
    if (far_line_prob < 0.0 || far_line_prob > 1.0) {
        throw ConfigError("far_line_prob must be in [0, 1]");
    }
}

nlohmann::json SynthConfig::to_json() const {
    nlohmann::json mix = nlohmann::json::object();
    for (const auto& [scene, w] : scene_mix) mix[to_string(scene)] = w;
    return nlohmann::json{{"n_images", n_images},
                          {"image_size", image_size},
                          {"slot_width_min", slot_width_min},
                          {"slot_width_max", slot_width_max},
                          {"slots_min", slots_min},
                          {"slots_max", slots_max},
                          {"rows_min", rows_min},
                          {"rows_max", rows_max},
                          {"slanted_fraction", slanted_fraction},
                          {"line_thickness", line_thickness},
                          {"noise_std", noise_std},
                          {"brightness_min", brightness_min},
                          {"brightness_max", brightness_max},
                          {"occlusion_prob", occlusion_prob},
                          {"far_line_prob", far_line_prob},
                          {"scene_mix", mix}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.n_images = j.value("n_images", c.n_images);
    c.image_size = j.value("image_size", c.image_size);
    c.slot_width_min = j.value("slot_width_min", c.slot_width_min);
    c.slot_width_max = j.value("slot_width_max", c.slot_width_max);
    c.slots_min = j.value("slots_min", c.slots_min);
    c.slots_max = j.value("slots_max", c.slots_max);
    c.rows_min = j.value("rows_min", c.rows_min);
    c.rows_max = j.value("rows_max", c.rows_max);
    c.slanted_fraction = j.value("slanted_fraction", c.slanted_fraction);
    c.line_thickness = j.value("line_thickness", c.line_thickness);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.brightness_min = j.value("brightness_min", c.brightness_min);
    c.brightness_max = j.value("brightness_max", c.brightness_max);
    c.occlusion_prob = j.value("occlusion_prob", c.occlusion_prob);
    c.far_line_prob = j.value("far_line_prob", c.far_line_prob);
    if (j.contains("scene_mix")) {
        c.scene_mix.clear();
        for (const auto& [tag, w] : j.at("scene_mix").items()) {
            c.scene_mix[scene_from_string(tag)] = w.get<double>();
        }
    }
    c.validate();
    return c;
}

namespace {

constexpr int kGridSize = 16;  // cells of the detector grid; used only to keep
                               // generated corners in distinct cells

struct SceneLayout {
    std::vector<double> corner_x, corner_y;  // k+1 entrance corners
    double row_angle = 0.0;                  // theta1 for all corners
    double sep_angle = 0.0;                  // theta2 for all corners
    double depth = 0.0;
    bool extended_ends = false;  // baseline runs past the end corners (T ends)
    bool slanted = false;
    double width = 0.0;
};

Scene sample_scene_tag(const std::map<Scene, double>& mix, Rng& rng) {
    double total = 0.0;
    for (const auto& [scene, w] : mix) {
        if (scene == Scene::Slanted || w <= 0.0) continue;
        total += w;
    }
    if (total <= 0.0) return Scene::OutdoorDaylight;
    double r = rng.uniform() * total;
    for (const auto& [scene, w] : mix) {
        if (scene == Scene::Slanted || w <= 0.0) continue;
        r -= w;
        if (r < 0.0) return scene;
    }
    return Scene::OutdoorDaylight;
}

bool corners_in_distinct_cells(const SceneLayout& lay, int image_size) {
    const double cell = static_cast<double>(image_size) / kGridSize;
    std::vector<int> seen;
    for (std::size_t i = 0; i < lay.corner_x.size(); ++i) {
        const int col = static_cast<int>(lay.corner_x[i] / cell);
        const int row = static_cast<int>(lay.corner_y[i] / cell);
        const int id = row * kGridSize + col;
        if (std::find(seen.begin(), seen.end(), id) != seen.end()) return false;
        seen.push_back(id);
    }
    return true;
}

SceneLayout sample_layout(const SynthConfig& cfg, bool slanted, Rng& rng) {
    const double size = cfg.image_size;
    const double margin = 0.05 * size;

    for (int attempt = 0; attempt < 200; ++attempt) {
        SceneLayout lay;
        lay.slanted = slanted;
        const int k = static_cast<int>(rng.uniform_int(cfg.slots_min, cfg.slots_max));
        const double span = 0.9 * size - 2.0 * margin;
        const double w_hi = std::min(cfg.slot_width_max, span / k);
        if (w_hi < cfg.slot_width_min) continue;
        lay.width = rng.uniform(cfg.slot_width_min, w_hi);

        const double phi = rng.uniform(0.0, 360.0);
        const double ux = std::cos(deg_to_rad(phi));
        const double uy = std::sin(deg_to_rad(phi));
        const double cx = size / 2.0 + rng.uniform(-0.15, 0.15) * size;
        const double cy = size / 2.0 + rng.uniform(-0.15, 0.15) * size;

        const double total = k * lay.width;
        for (int j = 0; j <= k; ++j) {
            const double t = j * lay.width - total / 2.0;
            lay.corner_x.push_back(cx + t * ux);
            lay.corner_y.push_back(cy + t * uy);
        }

        bool inside = true;
        for (std::size_t i = 0; i < lay.corner_x.size(); ++i) {
            if (lay.corner_x[i] < margin || lay.corner_x[i] >= size - margin ||
                lay.corner_y[i] < margin || lay.corner_y[i] >= size - margin) {
                inside = false;
                break;
            }
        }
        if (!inside || !corners_in_distinct_cells(lay, cfg.image_size)) continue;

        const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
        double sep = phi + side * 90.0;
        if (slanted) sep += (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(30.0, 60.0);
        // theta1's sign must be recoverable from the pixels alone, so it is
        // oriented by the (visible) separator side: rotating theta1 by +90
        // always points into the slots.
        lay.row_angle = canonical_deg(side > 0 ? phi : phi + 180.0);
        lay.sep_angle = canonical_deg(sep);
        lay.depth = rng.uniform(0.8, 1.4) * lay.width;
        lay.extended_ends = rng.bernoulli(0.5);
        return lay;
    }
    throw ConfigError("generate_synthetic: could not place a slot row; "
                      "check slot width range vs image size");
}

void render_scene(const SynthConfig& cfg, const SceneLayout& lay, Rng& rng, Image& img) {
    const double base = rng.uniform(cfg.brightness_min, cfg.brightness_max);
    std::fill(img.pixels.begin(), img.pixels.end(), static_cast<float>(base));

    const double line_val = rng.uniform(0.75, 0.95);
    const std::size_t n = lay.corner_x.size();
    // baseline direction from the corner chain itself (row_angle may be the
    // opposite orientation)
    const double span = dist(lay.corner_x[0], lay.corner_y[0],
                             lay.corner_x[n - 1], lay.corner_y[n - 1]);
    const double ux = (lay.corner_x[n - 1] - lay.corner_x[0]) / span;
    const double uy = (lay.corner_y[n - 1] - lay.corner_y[0]) / span;
    const double sx = std::cos(deg_to_rad(lay.sep_angle));
    const double sy = std::sin(deg_to_rad(lay.sep_angle));

    // Baseline along the row, optionally extended past the end corners.
    const double ext = lay.extended_ends ? rng.uniform(0.2, 0.5) * lay.width : 0.0;
    draw_segment(img, lay.corner_x[0] - ext * ux, lay.corner_y[0] - ext * uy,
                 lay.corner_x[n - 1] + ext * ux, lay.corner_y[n - 1] + ext * uy,
                 cfg.line_thickness, line_val);

    // Separators from every corner into the slots.
    for (std::size_t j = 0; j < n; ++j) {
        draw_segment(img, lay.corner_x[j], lay.corner_y[j],
                     lay.corner_x[j] + lay.depth * sx, lay.corner_y[j] + lay.depth * sy,
                     cfg.line_thickness, line_val);
    }

    if (rng.bernoulli(cfg.far_line_prob)) {
        draw_segment(img, lay.corner_x[0] + lay.depth * sx, lay.corner_y[0] + lay.depth * sy,
                     lay.corner_x[n - 1] + lay.depth * sx, lay.corner_y[n - 1] + lay.depth * sy,
                     cfg.line_thickness, line_val);
    }

    if (rng.bernoulli(cfg.occlusion_prob)) {
        const double occ_cx = rng.uniform(0.2, 0.8) * cfg.image_size;
        const double occ_cy = rng.uniform(0.2, 0.8) * cfg.image_size;
        const double hw = rng.uniform(0.08, 0.22) * cfg.image_size;
        const double hh = rng.uniform(0.08, 0.22) * cfg.image_size;
        fill_rotated_rect(img, occ_cx, occ_cy, hw, hh, rng.uniform(0.0, 180.0),
                          rng.uniform(0.05, 0.45));
    }

    // Shading gradient plus pixel noise, then quantize like the on-disk format.
    const double grad_angle = rng.uniform(0.0, 2.0 * kPi);
    const double grad_amp = rng.uniform(0.0, 0.06);
    const double gx = std::cos(grad_angle), gy = std::sin(grad_angle);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double g = ((x * gx + y * gy) / cfg.image_size) * 2.0 * grad_amp;
            for (int c = 0; c < img.channels; ++c) {
                double v = img.at(y, x, c) + g;
                if (cfg.noise_std > 0.0) v += cfg.noise_std * rng.normal();
                v = std::clamp(v, 0.0, 1.0);
                img.at(y, x, c) = static_cast<float>(std::lround(v * 255.0) / 255.0);
            }
        }
    }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer over (seed, index)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::vector<AnnotatedImage> generate_synthetic(const SynthConfig& config,
                                               std::uint64_t seed) {
    config.validate();
    std::vector<AnnotatedImage> out(static_cast<std::size_t>(config.n_images));

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < config.n_images; ++i) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        const bool slanted = rng.bernoulli(config.slanted_fraction);
        const Scene scene = slanted ? Scene::Slanted
                                    : sample_scene_tag(config.scene_mix, rng);
        const SceneLayout lay = sample_layout(config, slanted, rng);

        const SlotType type = slanted ? SlotType::Slanted : SlotType::Perpendicular;
        std::vector<MarkingPoint> points;
        const std::size_t n = lay.corner_x.size();
        for (std::size_t j = 0; j < n; ++j) {
            MarkingPoint p;
            p.x = lay.corner_x[j];
            p.y = lay.corner_y[j];
            p.theta1 = lay.row_angle;
            p.theta2 = lay.sep_angle;
            const bool end = (j == 0 || j == n - 1);
            p.shape = (end && !lay.extended_ends) ? PointShape::L : PointShape::T;
            p.type = type;
            p.confidence = 1.0;
            points.push_back(p);
        }

        std::vector<ParkingSlot> slots;
        for (std::size_t j = 0; j + 1 < n; ++j) {
            ParkingSlot s;
            double ax = lay.corner_x[j], ay = lay.corner_y[j];
            double bx = lay.corner_x[j + 1], by = lay.corner_y[j + 1];
            if (std::make_pair(bx, by) < std::make_pair(ax, ay)) {
                std::swap(ax, bx);
                std::swap(ay, by);
            }
            s.x1 = ax; s.y1 = ay; s.x2 = bx; s.y2 = by;
            s.theta_s = canonical_deg(rad_to_deg(std::atan2(by - ay, bx - ax)));
            s.type = type;
            s.confidence = 1.0;
            slots.push_back(s);
        }

        auto img = std::make_shared<Image>(config.image_size, config.image_size, 1);
        render_scene(config, lay, rng, *img);

        char name[32];
        std::snprintf(name, sizeof(name), "img_%06d", i);
        out[static_cast<std::size_t>(i)] =
            AnnotatedImage(name, std::move(img), scene, std::move(points),
                           std::move(slots), true);
    }
    return out;
}

}  // namespace sspsd
