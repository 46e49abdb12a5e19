#include "pathvlm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pathvlm/hashing.hpp"

namespace pathvlm::checkpoint {

static constexpr char kMagic[8] = {'P', 'V', 'L', 'M', 'B', 'L', 'B', '1'};

static void put_u32(std::string& out, uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

std::string serialize_group(const ParamGroup& g) {
    std::string out;
    out.append(kMagic, 8);
    put_u32(out, static_cast<uint32_t>(g.params.size()));
    for (const auto& [name, t] : g.params) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.append(name);
        put_u32(out, static_cast<uint32_t>(t->v.rows()));
        put_u32(out, static_cast<uint32_t>(t->v.cols()));
        for (int i = 0; i < t->v.rows(); ++i)
            for (int j = 0; j < t->v.cols(); ++j) {
                const double d = t->v(i, j);
                char b[8];
                std::memcpy(b, &d, 8);
                out.append(b, 8);
            }
    }
    return out;
}

void save(const std::filesystem::path& dir, const ParamRegistry& reg, const nlohmann::json& metadata) {
    std::filesystem::create_directories(dir);
    for (const auto& [gname, group] : reg.groups) {
        std::ofstream out(dir / (gname + ".bin"), std::ios::binary);
        if (!out) throw std::runtime_error("checkpoint: cannot write " + (dir / (gname + ".bin")).string());
        const std::string bytes = serialize_group(*group);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    std::ofstream meta(dir / "metadata.json");
    if (!meta) throw std::runtime_error("checkpoint: cannot write metadata.json");
    meta << metadata.dump(2) << "\n";
}

namespace {

struct Reader {
    std::string bytes;
    size_t pos = 0;

    uint32_t u32() {
        if (pos + 4 > bytes.size()) throw std::runtime_error("checkpoint: truncated blob");
        uint32_t v;
        std::memcpy(&v, bytes.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::string str(size_t n) {
        if (pos + n > bytes.size()) throw std::runtime_error("checkpoint: truncated blob");
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
    double f64() {
        if (pos + 8 > bytes.size()) throw std::runtime_error("checkpoint: truncated blob");
        double d;
        std::memcpy(&d, bytes.data() + pos, 8);
        pos += 8;
        return d;
    }
};

}  // namespace

void load_group(const std::filesystem::path& dir, ParamGroup& group) {
    const auto path = dir / (group.name + ".bin");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: missing blob " + path.string());
    Reader r;
    r.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (r.str(8) != std::string(kMagic, 8)) throw std::runtime_error("checkpoint: bad magic in " + path.string());
    const uint32_t n = r.u32();
    if (n != group.params.size())
        throw std::runtime_error("checkpoint: param count mismatch in group " + group.name);
    for (auto& [pname, t] : group.params) {
        const std::string name = r.str(r.u32());
        if (name != pname) throw std::runtime_error("checkpoint: param order mismatch: " + name + " vs " + pname);
        const uint32_t rows = r.u32();
        const uint32_t cols = r.u32();
        if (rows != static_cast<uint32_t>(t->v.rows()) || cols != static_cast<uint32_t>(t->v.cols()))
            throw std::runtime_error("checkpoint: shape mismatch for " + pname);
        for (uint32_t i = 0; i < rows; ++i)
            for (uint32_t j = 0; j < cols; ++j) t->v(i, j) = r.f64();
    }
}

void load_into(const std::filesystem::path& dir, ParamRegistry& reg) {
    for (auto& [gname, group] : reg.groups) load_group(dir, *group);
}

nlohmann::json load_metadata(const std::filesystem::path& dir) {
    std::ifstream in(dir / "metadata.json");
    if (!in) throw std::runtime_error("checkpoint: missing metadata.json in " + dir.string());
    nlohmann::json j;
    in >> j;
    return j;
}

std::string group_hash(const ParamGroup& g) { return sha256_hex(serialize_group(g)); }

}  // namespace pathvlm::checkpoint
