#include "sspsd/grid_codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sspsd/geometry.hpp"

namespace sspsd {

PredictionGrid encode_ground_truth(const std::vector<MarkingPoint>& points,
                                   int grid_size, int image_size) {
    if (grid_size <= 0 || image_size <= 0) {
        throw ConfigError("encode_ground_truth: grid_size and image_size must be positive");
    }
    PredictionGrid grid(grid_size);
    const double cell_px = static_cast<double>(image_size) / grid_size;

    for (const MarkingPoint& p : points) {
        if (!(p.x >= 0.0 && p.x < image_size && p.y >= 0.0 && p.y < image_size)) {
            throw PointOutOfBoundsError("point (" + std::to_string(p.x) + ", " +
                                        std::to_string(p.y) + ") outside image of size " +
                                        std::to_string(image_size));
        }
        int col = static_cast<int>(p.x / cell_px);
        int row = static_cast<int>(p.y / cell_px);
        col = std::min(col, grid_size - 1);
        row = std::min(row, grid_size - 1);
        if (grid.at(row, col, PredictionGrid::kConf) != 0.0) {
            throw TwoPointsOneCellError("two points map to grid cell (" +
                                        std::to_string(row) + ", " + std::to_string(col) + ")");
        }
        const double t1 = deg_to_rad(p.theta1);
        const double t2 = deg_to_rad(p.theta2);
        grid.at(row, col, PredictionGrid::kConf) = 1.0;
        grid.at(row, col, PredictionGrid::kXOff) = std::clamp(p.x / cell_px - col, 0.0, 1.0);
        grid.at(row, col, PredictionGrid::kYOff) = std::clamp(p.y / cell_px - row, 0.0, 1.0);
        grid.at(row, col, PredictionGrid::kCos1) = std::cos(t1);
        grid.at(row, col, PredictionGrid::kSin1) = std::sin(t1);
        grid.at(row, col, PredictionGrid::kCos2) = std::cos(t2);
        grid.at(row, col, PredictionGrid::kSin2) = std::sin(t2);
        grid.at(row, col, PredictionGrid::kShape) = p.shape == PointShape::T ? 1.0 : 0.0;
        grid.at(row, col, PredictionGrid::kType) = p.type == SlotType::Slanted ? 1.0 : 0.0;
    }
    return grid;
}

namespace {

double decode_angle_deg(double cos_v, double sin_v) {
    const double norm = std::hypot(cos_v, sin_v);
    if (norm < 1e-12) return 0.0;
    return canonical_deg(rad_to_deg(std::atan2(sin_v / norm, cos_v / norm)));
}

}  // namespace

std::vector<MarkingPoint> decode_grid(const PredictionGrid& grid,
                                      double conf_threshold, int image_size) {
    std::vector<MarkingPoint> points;
    const double cell_px = static_cast<double>(image_size) / grid.size;

    for (int row = 0; row < grid.size; ++row) {
        for (int col = 0; col < grid.size; ++col) {
            const double conf = grid.at(row, col, PredictionGrid::kConf);
            if (conf < conf_threshold) continue;
            MarkingPoint p;
            p.x = (col + grid.at(row, col, PredictionGrid::kXOff)) * cell_px;
            p.y = (row + grid.at(row, col, PredictionGrid::kYOff)) * cell_px;
            p.theta1 = decode_angle_deg(grid.at(row, col, PredictionGrid::kCos1),
                                        grid.at(row, col, PredictionGrid::kSin1));
            p.theta2 = decode_angle_deg(grid.at(row, col, PredictionGrid::kCos2),
                                        grid.at(row, col, PredictionGrid::kSin2));
            p.shape = grid.at(row, col, PredictionGrid::kShape) >= 0.5 ? PointShape::T
                                                                       : PointShape::L;
            p.type = grid.at(row, col, PredictionGrid::kType) >= 0.5 ? SlotType::Slanted
                                                                     : SlotType::Perpendicular;
            p.confidence = conf;
            points.push_back(p);
        }
    }
    return points;
}

}  // namespace sspsd
