#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrw/subnets.hpp"
#include "rrw/train_config.hpp"

namespace rrw {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointVersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointDigestError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointTruncatedError : CheckpointError {
    using CheckpointError::CheckpointError;
};

// Single-file versioned container for the four subnets, the hyperparameter
// snapshot, the training stage tag, and the reversibility verification flag.
struct Checkpoint {
    static constexpr uint32_t kFormatVersion = 1;

    TrainConfig config;
    std::string stage;  // "1a", "1b", "2"
    bool reversibility_verified = false;

    std::unique_ptr<Subnet> hnet, enet, dnet, gnet;

    static Checkpoint fresh(const TrainConfig& cfg) {
        Checkpoint ck;
        ck.config = cfg;
        ck.stage = "init";
        ck.hnet = build_subnet(Role::H, cfg.hnet_depth, cfg.seed, cfg.unet_subnet_config());
        ck.gnet = build_subnet(Role::G, cfg.gnet_depth, cfg.seed, cfg.unet_subnet_config());
        ck.enet = build_subnet(Role::E, cfg.enet_blocks, cfg.seed, cfg.enet_subnet_config());
        ck.dnet = build_subnet(Role::D, cfg.dnet_layers, cfg.seed, cfg.dnet_subnet_config());
        return ck;
    }

    std::vector<nn::Param*> all_params() {
        std::vector<nn::Param*> out;
        hnet->collect_params(out);
        enet->collect_params(out);
        dnet->collect_params(out);
        gnet->collect_params(out);
        return out;
    }
};

namespace detail {

inline uint64_t fnv1a64(const uint8_t* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    for (size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct ByteWriter {
    std::vector<uint8_t> buf;
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    void floats(const FloatVec& v) {
        u64(v.size());
        raw(v.data(), v.size() * sizeof(float));
    }
    void raw(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
};

struct ByteReader {
    const uint8_t* p;
    size_t n, pos = 0;
    void need(size_t k) const {
        if (pos + k > n) throw CheckpointTruncatedError("truncated checkpoint");
    }
    uint32_t u32() {
        need(4);
        uint32_t v;
        std::memcpy(&v, p + pos, 4);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v;
        std::memcpy(&v, p + pos, 8);
        pos += 8;
        return v;
    }
    std::string str() {
        uint64_t k = u64();
        need(k);
        std::string s(reinterpret_cast<const char*>(p + pos), k);
        pos += k;
        return s;
    }
    FloatVec floats() {
        uint64_t k = u64();
        need(k * sizeof(float));
        FloatVec v(k);
        std::memcpy(v.data(), p + pos, k * sizeof(float));
        pos += k * sizeof(float);
        return v;
    }
};

}  // namespace detail

inline void save_checkpoint(Checkpoint& ck, const std::string& path) {
    detail::ByteWriter w;
    w.str(ck.stage);
    w.u32(ck.reversibility_verified ? 1 : 0);

    auto cfgmap = config_to_map(ck.config);
    w.u64(cfgmap.size());
    for (const auto& [k, v] : cfgmap) {
        w.str(k);
        w.str(v);
    }

    auto params = ck.all_params();
    w.u64(params.size());
    for (const nn::Param* p : params) {
        w.str(p->name);
        w.floats(p->w);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path);
    const char magic[8] = {'R', 'R', 'W', 'C', 'K', 'P', 'T', '\0'};
    f.write(magic, 8);
    uint32_t version = Checkpoint::kFormatVersion;
    f.write(reinterpret_cast<const char*>(&version), 4);
    uint64_t digest = detail::fnv1a64(w.buf.data(), w.buf.size());
    f.write(reinterpret_cast<const char*>(&digest), 8);
    uint64_t size = w.buf.size();
    f.write(reinterpret_cast<const char*>(&size), 8);
    f.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
    if (!f) throw CheckpointError("short write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint: " + path);
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (file.size() < 28) throw CheckpointTruncatedError("truncated checkpoint: " + path);
    if (std::memcmp(file.data(), "RRWCKPT\0", 8) != 0)
        throw CheckpointError("not a checkpoint file: " + path);
    uint32_t version;
    std::memcpy(&version, file.data() + 8, 4);
    if (version != Checkpoint::kFormatVersion)
        throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version));
    uint64_t digest, size;
    std::memcpy(&digest, file.data() + 12, 8);
    std::memcpy(&size, file.data() + 20, 8);
    if (file.size() - 28 < size) throw CheckpointTruncatedError("truncated checkpoint: " + path);
    const uint8_t* body = file.data() + 28;
    if (detail::fnv1a64(body, size) != digest)
        throw CheckpointDigestError("checkpoint digest mismatch: " + path);

    detail::ByteReader r{body, size};
    Checkpoint ck;
    ck.stage = r.str();
    ck.reversibility_verified = r.u32() != 0;

    uint64_t ncfg = r.u64();
    TrainConfig cfg;
    for (uint64_t i = 0; i < ncfg; ++i) {
        std::string k = r.str();
        std::string v = r.str();
        apply_config_entry(cfg, k, v);
    }
    ck.config = cfg;
    ck.hnet = build_subnet(Role::H, cfg.hnet_depth, cfg.seed, cfg.unet_subnet_config());
    ck.gnet = build_subnet(Role::G, cfg.gnet_depth, cfg.seed, cfg.unet_subnet_config());
    ck.enet = build_subnet(Role::E, cfg.enet_blocks, cfg.seed, cfg.enet_subnet_config());
    ck.dnet = build_subnet(Role::D, cfg.dnet_layers, cfg.seed, cfg.dnet_subnet_config());

    auto params = ck.all_params();
    uint64_t np = r.u64();
    if (np != params.size())
        throw CheckpointError("checkpoint parameter block count mismatch");
    for (uint64_t i = 0; i < np; ++i) {
        std::string name = r.str();
        FloatVec vals = r.floats();
        if (params[i]->name != name)
            throw CheckpointError("unexpected parameter block '" + name + "', wanted '" +
                                  params[i]->name + "'");
        if (params[i]->w.size() != vals.size())
            throw CheckpointError("parameter block size mismatch for " + name);
        params[i]->w = std::move(vals);
    }
    return ck;
}

}  // namespace rrw
