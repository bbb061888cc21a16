#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace microcount {

// One count-labeled image. `image` is a path relative to the manifest's
// directory so datasets stay relocatable.
struct DatasetRecord {
    std::string image;
    int count = 0;
    std::optional<std::vector<std::array<double, 2>>> centroids;
    uint64_t seed = 0;
    std::string source;   // originating dataset tag
    std::string lineage;  // augmentation lineage ("orig", "hflip", ...)
};

struct CountStats {
    long long total = 0;
    int min = 0;
    int max = 0;
    double mean = 0.0;
    size_t records = 0;
};

struct Manifest {
    std::filesystem::path root;  // directory that image paths are relative to
    std::vector<DatasetRecord> records;

    CountStats count_stats() const;
    std::filesystem::path resolve(const DatasetRecord& rec) const { return root / rec.image; }
};

// JSON-lines serialization:
//   {"image": "...", "count": N, "centroids": [[x,y],...], "seed": S, ...}
// Field order and float formatting are fixed, so identical record sets
// serialize to identical bytes.
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace microcount
