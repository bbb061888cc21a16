#include "microcount/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <unordered_map>

#include "microcount/errors.hpp"

namespace microcount::nn {

namespace {

constexpr uint32_t kMagic = 0x504B434DU;  // "MCKP" little-endian
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t read_u64(std::istream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    write_u32(out, kMagic);
    write_u32(out, kVersion);
    write_u32(out, static_cast<uint32_t>(tensors.size()));

    uint64_t offset = 0;
    for (const auto& nt : tensors) {
        write_u32(out, static_cast<uint32_t>(nt.name.size()));
        out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
        write_u32(out, static_cast<uint32_t>(nt.tensor.shape().size()));
        for (int d : nt.tensor.shape()) write_u32(out, static_cast<uint32_t>(d));
        write_u64(out, offset);
        offset += nt.tensor.numel() * sizeof(float);
    }
    for (const auto& nt : tensors) {
        const auto& v = nt.tensor.data();
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed while writing checkpoint: " + path.string());
}

std::vector<LoadedTensor> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    if (read_u32(in) != kMagic) throw InputError("not a checkpoint file: " + path.string());
    const uint32_t version = read_u32(in);
    if (version != kVersion)
        throw InputError("unsupported checkpoint version " + std::to_string(version));
    const uint32_t count = read_u32(in);

    struct Entry {
        std::string name;
        Shape shape;
        uint64_t offset;
    };
    std::vector<Entry> entries(count);
    for (auto& e : entries) {
        const uint32_t name_len = read_u32(in);
        e.name.resize(name_len);
        in.read(e.name.data(), name_len);
        const uint32_t rank = read_u32(in);
        e.shape.resize(rank);
        for (uint32_t i = 0; i < rank; ++i) e.shape[i] = static_cast<int>(read_u32(in));
        e.offset = read_u64(in);
    }
    const std::streampos payload_start = in.tellg();

    std::vector<LoadedTensor> out;
    out.reserve(count);
    for (const auto& e : entries) {
        LoadedTensor t;
        t.name = e.name;
        t.shape = e.shape;
        t.values.resize(shape_numel(e.shape));
        in.seekg(payload_start + static_cast<std::streamoff>(e.offset));
        in.read(reinterpret_cast<char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(float)));
        if (!in) throw InputError("truncated checkpoint: " + path.string());
        out.push_back(std::move(t));
    }
    return out;
}

void restore_checkpoint(const std::filesystem::path& path, std::vector<NamedTensor>& params) {
    auto loaded = load_checkpoint(path);
    std::unordered_map<std::string, LoadedTensor*> by_name;
    for (auto& t : loaded) by_name[t.name] = &t;
    for (auto& p : params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end())
            throw InputError("checkpoint is missing tensor '" + p.name + "'");
        if (it->second->shape != p.tensor.shape())
            throw InputError("checkpoint shape mismatch for '" + p.name + "': expected " +
                             shape_str(p.tensor.shape()) + ", found " +
                             shape_str(it->second->shape));
        p.tensor.data() = it->second->values;
    }
}

}  // namespace microcount::nn
