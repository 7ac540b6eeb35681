#include "sspsd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sspsd/geometry.hpp"
#include "sspsd/image.hpp"
#include "sspsd/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sspsd {

namespace {

int find_point_index(const std::vector<MarkingPoint>& points, double x, double y) {
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (std::fabs(points[i].x - x) <= 1e-6 && std::fabs(points[i].y - y) <= 1e-6) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

json point_to_json(const MarkingPoint& p) {
    return json{{"x", p.x},           {"y", p.y},
                {"theta1", p.theta1}, {"theta2", p.theta2},
                {"shape", to_string(p.shape)}, {"type", to_string(p.type)}};
}

AnnotatedImage parse_record(const json& j, const std::string& file,
                            const std::string& dir) {
    auto fail = [&file](const std::string& msg) -> void {
        throw SchemaError(file + ": " + msg);
    };

    for (const char* key : {"image", "scene", "points", "slots"}) {
        if (!j.contains(key)) fail(std::string("missing field '") + key + "'");
    }

    const std::string image_file = j.at("image").get<std::string>();
    const fs::path image_path = fs::path(dir) / image_file;
    if (!fs::exists(image_path)) fail("referenced image not found: " + image_file);
    auto image = std::make_shared<Image>(read_pnm(image_path.string()));

    Scene scene;
    try {
        scene = scene_from_string(j.at("scene").get<std::string>());
    } catch (const SchemaError& e) {
        fail(e.what());
        throw;  // unreachable
    }

    std::vector<MarkingPoint> points;
    for (const auto& pj : j.at("points")) {
        MarkingPoint p;
        try {
            p.x = pj.at("x").get<double>();
            p.y = pj.at("y").get<double>();
            p.theta1 = pj.at("theta1").get<double>();
            p.theta2 = pj.at("theta2").get<double>();
            p.shape = shape_from_string(pj.at("shape").get<std::string>());
            p.type = slot_type_from_string(pj.at("type").get<std::string>());
        } catch (const json::exception& e) {
            fail(std::string("bad point record: ") + e.what());
        } catch (const SchemaError& e) {
            fail(e.what());
        }
        if (!(p.x >= 0.0 && p.x < image->width && p.y >= 0.0 && p.y < image->height)) {
            fail("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                 ") out of bounds for " + std::to_string(image->width) + "x" +
                 std::to_string(image->height) + " image");
        }
        if (p.theta1 < 0.0 || p.theta1 >= 360.0 || p.theta2 < 0.0 || p.theta2 >= 360.0) {
            fail("angles must be in [0, 360)");
        }
        p.confidence = 1.0;
        points.push_back(p);
    }

    std::vector<ParkingSlot> slots;
    for (const auto& sj : j.at("slots")) {
        int i1 = -1, i2 = -1;
        ParkingSlot s;
        try {
            i1 = sj.at("p1").get<int>();
            i2 = sj.at("p2").get<int>();
            s.theta_s = sj.at("theta_s").get<double>();
            s.type = slot_type_from_string(sj.at("type").get<std::string>());
        } catch (const json::exception& e) {
            fail(std::string("bad slot record: ") + e.what());
        } catch (const SchemaError& e) {
            fail(e.what());
        }
        if (i1 < 0 || i2 < 0 || i1 >= static_cast<int>(points.size()) ||
            i2 >= static_cast<int>(points.size())) {
            throw DanglingSlotRefError(file + ": slot references missing point index " +
                                       std::to_string(i1 < 0 || i1 >= static_cast<int>(points.size()) ? i1 : i2));
        }
        if (i1 == i2) fail("slot endpoints must be two distinct points");
        s.x1 = points[static_cast<std::size_t>(i1)].x;
        s.y1 = points[static_cast<std::size_t>(i1)].y;
        s.x2 = points[static_cast<std::size_t>(i2)].x;
        s.y2 = points[static_cast<std::size_t>(i2)].y;
        s.confidence = 1.0;
        slots.push_back(s);
    }

    std::string name = fs::path(file).stem().string();
    return AnnotatedImage(std::move(name), std::move(image), scene,
                          std::move(points), std::move(slots), true);
}

}  // namespace

std::vector<AnnotatedImage> load_annotations(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        // tooling snapshots live next to datasets but are not records
        if (entry.path().filename().string().ends_with(".config.json")) continue;
        files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());

    std::vector<AnnotatedImage> out;
    out.reserve(files.size());
    for (const auto& file : files) {
        std::ifstream in(file);
        if (!in) throw IoError("cannot open: " + file);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw SchemaError(file + ": invalid JSON: " + e.what());
        }
        out.push_back(parse_record(j, fs::path(file).filename().string(), dir));
    }
    return out;
}

void save_annotations(const std::string& dir,
                      const std::vector<AnnotatedImage>& dataset) {
    fs::create_directories(dir);
    for (const auto& item : dataset) {
        if (!item.image) throw IoError("save_annotations: item '" + item.name + "' has no image");
        const std::string image_file = item.name + (item.image->channels == 1 ? ".pgm" : ".ppm");
        write_pnm(*item.image, (fs::path(dir) / image_file).string());

        json j;
        j["image"] = image_file;
        j["scene"] = to_string(item.scene);
        j["points"] = json::array();
        for (const auto& p : item.points()) j["points"].push_back(point_to_json(p));
        j["slots"] = json::array();
        for (const auto& s : item.slots()) {
            const int i1 = find_point_index(item.points(), s.x1, s.y1);
            const int i2 = find_point_index(item.points(), s.x2, s.y2);
            if (i1 < 0 || i2 < 0) {
                throw DanglingSlotRefError("save_annotations: slot endpoints of '" +
                                           item.name + "' do not coincide with any point");
            }
            j["slots"].push_back(json{{"p1", i1},
                                      {"p2", i2},
                                      {"theta_s", s.theta_s},
                                      {"type", to_string(s.type)}});
        }
        std::ofstream out((fs::path(dir) / (item.name + ".json")).string());
        if (!out) throw IoError("cannot write sidecar for " + item.name);
        out << j.dump(2) << "\n";
    }
}

std::pair<std::vector<AnnotatedImage>, std::vector<AnnotatedImage>>
split_semi(const std::vector<AnnotatedImage>& dataset, const SplitProtocol& protocol) {
    if (dataset.empty()) throw EmptyDatasetError("split_semi: empty dataset");
    if (protocol.n < 1) throw ConfigError("split_semi: n must be >= 1");

    const std::size_t n_total = dataset.size();
    const std::size_t n_labeled =
        (n_total + static_cast<std::size_t>(protocol.n) - 1) / static_cast<std::size_t>(protocol.n);

    std::vector<std::size_t> order(n_total);
    for (std::size_t i = 0; i < n_total; ++i) order[i] = i;
    Rng rng(protocol.seed);
    rng.shuffle(order);

    std::vector<bool> is_labeled(n_total, false);
    for (std::size_t i = 0; i < n_labeled; ++i) is_labeled[order[i]] = true;

    std::pair<std::vector<AnnotatedImage>, std::vector<AnnotatedImage>> result;
    for (std::size_t i = 0; i < n_total; ++i) {
        AnnotatedImage copy = dataset[i];
        copy.labeled = is_labeled[i];
        (is_labeled[i] ? result.first : result.second).push_back(std::move(copy));
    }
    return result;
}

DatasetStats dataset_stats(const std::vector<AnnotatedImage>& dataset) {
    if (dataset.empty()) throw EmptyDatasetError("dataset_stats: empty dataset");
    DatasetStats s;
    s.n_images = static_cast<std::int64_t>(dataset.size());
    for (const auto& item : dataset) {
        s.per_scene_counts[item.scene] += 1;
        s.n_slots += static_cast<std::int64_t>(item.slots().size());
        for (const auto& slot : item.slots()) {
            if (slot.type == SlotType::Slanted) s.n_slanted += 1;
        }
    }
    s.density = static_cast<double>(s.n_slots) / static_cast<double>(s.n_images);
    s.slanted_pct = s.n_slots > 0
                        ? static_cast<double>(s.n_slanted) / static_cast<double>(s.n_slots)
                        : 0.0;
    return s;
}

}  // namespace sspsd
