#include "sspsd/types.hpp"

#include <atomic>

namespace sspsd {

const char* to_string(PointShape s) { return s == PointShape::T ? "T" : "L"; }

const char* to_string(SlotType t) {
    return t == SlotType::Perpendicular ? "perpendicular" : "slanted";
}

PointShape shape_from_string(const std::string& s) {
    if (s == "T") return PointShape::T;
    if (s == "L") return PointShape::L;
    throw SchemaError("unknown marking-point shape: '" + s + "'");
}

SlotType slot_type_from_string(const std::string& s) {
    if (s == "perpendicular") return SlotType::Perpendicular;
    if (s == "slanted") return SlotType::Slanted;
    throw SchemaError("unknown slot type: '" + s + "'");
}

const std::array<Scene, kSceneCount>& all_scenes() {
    static const std::array<Scene, kSceneCount> scenes = {
        Scene::IndoorLowLight,  Scene::IndoorBrightLight, Scene::OutdoorDaylight,
        Scene::OutdoorRainy,    Scene::OutdoorShadow,     Scene::OutdoorNight,
        Scene::Slanted,         Scene::Damaged,
    };
    return scenes;
}

const char* to_string(Scene s) {
    switch (s) {
        case Scene::IndoorLowLight: return "indoor_low_light";
        case Scene::IndoorBrightLight: return "indoor_bright_light";
        case Scene::OutdoorDaylight: return "outdoor_daylight";
        case Scene::OutdoorRainy: return "outdoor_rainy";
        case Scene::OutdoorShadow: return "outdoor_shadow";
        case Scene::OutdoorNight: return "outdoor_night";
        case Scene::Slanted: return "slanted";
        case Scene::Damaged: return "damaged";
    }
    return "outdoor_daylight";
}

Scene scene_from_string(const std::string& tag) {
    for (Scene s : all_scenes()) {
        if (tag == to_string(s)) return s;
    }
    throw SchemaError("unknown scene tag: '" + tag + "'");
}

namespace labels {

namespace {
std::atomic<std::uint64_t> g_tripwire{0};
}

std::uint64_t tripwire_count() { return g_tripwire.load(); }
void reset_tripwire() { g_tripwire.store(0); }
void bump_tripwire() { g_tripwire.fetch_add(1); }

}  // namespace labels

}  // namespace sspsd
