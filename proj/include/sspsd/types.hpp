#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sspsd/errors.hpp"

namespace sspsd {

enum class PointShape { T, L };
enum class SlotType { Perpendicular, Slanted };

const char* to_string(PointShape s);
const char* to_string(SlotType t);
PointShape shape_from_string(const std::string& s);
SlotType slot_type_from_string(const std::string& s);

/// Scene taxonomy tags of the dataset.
enum class Scene {
    IndoorLowLight,
    IndoorBrightLight,
    OutdoorDaylight,
    OutdoorRainy,
    OutdoorShadow,
    OutdoorNight,
    Slanted,
    Damaged,
};

inline constexpr int kSceneCount = 8;
const std::array<Scene, kSceneCount>& all_scenes();
const char* to_string(Scene s);
Scene scene_from_string(const std::string& tag);

/// A directional corner of a parking slot entrance.
struct MarkingPoint {
    double x = 0.0;        // pixels, [0, W)
    double y = 0.0;        // pixels, [0, H)
    double theta1 = 0.0;   // degrees, [0, 360)
    double theta2 = 0.0;   // degrees, [0, 360)
    PointShape shape = PointShape::T;
    SlotType type = SlotType::Perpendicular;
    double confidence = 1.0;
};

/// Two paired marking points plus the entrance-line direction.
struct ParkingSlot {
    double x1 = 0.0, y1 = 0.0;
    double x2 = 0.0, y2 = 0.0;
    double theta_s = 0.0;  // degrees, direction from p1 to p2
    SlotType type = SlotType::Perpendicular;
    double confidence = 1.0;
};

/// The S x S x 9 tensor a detector emits; one cell = one candidate point.
/// Per-cell layout: (C, x_off, y_off, cos t1, sin t1, cos t2, sin t2, s, t).
struct PredictionGrid {
    static constexpr int kChannels = 9;
    enum Channel {
        kConf = 0,
        kXOff = 1,
        kYOff = 2,
        kCos1 = 3,
        kSin1 = 4,
        kCos2 = 5,
        kSin2 = 6,
        kShape = 7,
        kType = 8,
    };

    int size = 16;
    std::vector<double> cells;  // size*size*kChannels, row-major (row, col, ch)

    PredictionGrid() : cells(static_cast<std::size_t>(16) * 16 * kChannels, 0.0) {}
    explicit PredictionGrid(int s)
        : size(s), cells(static_cast<std::size_t>(s) * s * kChannels, 0.0) {}

    double& at(int row, int col, int ch) {
        return cells[(static_cast<std::size_t>(row) * size + col) * kChannels + ch];
    }
    double at(int row, int col, int ch) const {
        return cells[(static_cast<std::size_t>(row) * size + col) * kChannels + ch];
    }
    int cell_count() const { return size * size; }
};

/// Dense pixel array, HWC layout, values in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<float> pixels;

    Image() = default;
    Image(int h, int w, int c)
        : height(h), width(w), channels(c),
          pixels(static_cast<std::size_t>(h) * w * c, 0.0f) {}

    float& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

namespace labels {
/// Counts reads of ground-truth annotations on unlabeled items through the
/// training-facing accessor. Must stay zero over any training run.
std::uint64_t tripwire_count();
void reset_tripwire();
void bump_tripwire();
}  // namespace labels

/// Image plus its ground truth, scene tag and labeled/unlabeled flag.
class AnnotatedImage {
public:
    std::string name;
    std::shared_ptr<const Image> image;
    Scene scene = Scene::OutdoorDaylight;
    bool labeled = true;

    AnnotatedImage() = default;
    AnnotatedImage(std::string n, std::shared_ptr<const Image> img, Scene sc,
                   std::vector<MarkingPoint> pts, std::vector<ParkingSlot> sl,
                   bool lab = true)
        : name(std::move(n)), image(std::move(img)), scene(sc), labeled(lab),
          points_(std::move(pts)), slots_(std::move(sl)) {}

    /// Tooling access (stats, serialization, evaluation ground truth).
    const std::vector<MarkingPoint>& points() const { return points_; }
    const std::vector<ParkingSlot>& slots() const { return slots_; }

    /// Trainer-facing access: reading labels of an unlabeled item trips a
    /// global counter that tests assert stays at zero.
    const std::vector<MarkingPoint>& training_points() const {
        if (!labeled) labels::bump_tripwire();
        return points_;
    }

    std::vector<MarkingPoint>& mutable_points() { return points_; }
    std::vector<ParkingSlot>& mutable_slots() { return slots_; }

private:
    std::vector<MarkingPoint> points_;
    std::vector<ParkingSlot> slots_;
};

}  // namespace sspsd
