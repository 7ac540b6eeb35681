#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sspsd/types.hpp"

namespace sspsd {

struct DatasetStats {
    std::int64_t n_images = 0;
    std::int64_t n_slots = 0;
    std::int64_t n_slanted = 0;
    double density = 0.0;      // slots per image
    double slanted_pct = 0.0;  // fraction in [0, 1]
    std::map<Scene, std::int64_t> per_scene_counts;
};

struct SplitProtocol {
    int n = 1;  // labeled fraction 1/n
    std::uint64_t seed = 0;
};

/// Loads every `*.json` annotation sidecar (sorted by name) plus its image
/// from `dir`. Throws SchemaError / DanglingSlotRefError naming the file.
std::vector<AnnotatedImage> load_annotations(const std::string& dir);

/// Writes one image file plus one JSON sidecar per item.
void save_annotations(const std::string& dir,
                      const std::vector<AnnotatedImage>& dataset);

/// Deterministic 1/n semi-supervised split. The labeled side has
/// ceil(N / n) items; the unlabeled side keeps its annotations in memory but
/// carries labeled = false, which the trainer-facing accessor enforces.
std::pair<std::vector<AnnotatedImage>, std::vector<AnnotatedImage>>
split_semi(const std::vector<AnnotatedImage>& dataset, const SplitProtocol& protocol);

DatasetStats dataset_stats(const std::vector<AnnotatedImage>& dataset);

}  // namespace sspsd
