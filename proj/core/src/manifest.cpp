#include "microcount/manifest.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "microcount/errors.hpp"

namespace microcount {

using nlohmann::json;

CountStats Manifest::count_stats() const {
    CountStats s;
    if (records.empty()) return s;
    s.records = records.size();
    s.min = records.front().count;
    s.max = records.front().count;
    for (const auto& r : records) {
        s.total += r.count;
        s.min = std::min(s.min, r.count);
        s.max = std::max(s.max, r.count);
    }
    s.mean = static_cast<double>(s.total) / static_cast<double>(s.records);
    return s;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open manifest for writing: " + path.string());
    for (const auto& r : manifest.records) {
        json j;
        j["image"] = r.image;
        j["count"] = r.count;
        if (r.centroids) {
            json cs = json::array();
            for (const auto& c : *r.centroids) cs.push_back({c[0], c[1]});
            j["centroids"] = std::move(cs);
        }
        j["seed"] = r.seed;
        if (!r.source.empty()) j["source"] = r.source;
        if (!r.lineage.empty()) j["lineage"] = r.lineage;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed while writing manifest: " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    Manifest m;
    m.root = path.parent_path();
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw InputError("manifest " + path.string() + " line " + std::to_string(lineno) +
                             ": " + e.what());
        }
        DatasetRecord r;
        r.image = j.at("image").get<std::string>();
        r.count = j.at("count").get<int>();
        if (r.count < 0)
            throw InputError("manifest " + path.string() + " line " + std::to_string(lineno) +
                             ": negative count");
        if (j.contains("centroids")) {
            std::vector<std::array<double, 2>> cs;
            for (const auto& c : j["centroids"]) cs.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
            if (static_cast<int>(cs.size()) != r.count)
                throw InputError("manifest " + path.string() + " line " + std::to_string(lineno) +
                                 ": count does not match centroid list length");
            r.centroids = std::move(cs);
        }
        if (j.contains("seed")) r.seed = j["seed"].get<uint64_t>();
        if (j.contains("source")) r.source = j["source"].get<std::string>();
        if (j.contains("lineage")) r.lineage = j["lineage"].get<std::string>();
        m.records.push_back(std::move(r));
    }
    return m;
}

}  // namespace microcount
