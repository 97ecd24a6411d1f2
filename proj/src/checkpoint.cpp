// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/checkpoint.hpp"

#include "splatswap/errors.hpp"
#include "splatswap/io.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace splatswap {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kOptimMagic[4] = {'G', 'S', 'W', 'O'};
constexpr std::uint32_t kOptimVersion = 1;

class Writer {
  public:
    template <class T> void put(const T &v) {
        const auto *p = reinterpret_cast<const char *>(&v);
        mBytes.append(p, sizeof(T));
    }
    template <class M> void put_block(const M &m) {
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) put<double>(m(i, j));
    }
    void put_params(const SplatParams<double> &p) {
        put_block(p.mu_local);
        put_block(p.rot_local);
        put_block(p.scale_raw);
        put_block(p.opacity_raw);
        put_block(p.sh);
    }
    std::string &bytes() { return mBytes; }

  private:
    std::string mBytes;
};

class Reader {
  public:
    Reader(std::string bytes, std::string name) : mBytes(std::move(bytes)), mName(std::move(name)) {}
    template <class T> T get() {
        if (mPos + sizeof(T) > mBytes.size()) throw IoError(mName + " is truncated");
        T v;
        std::memcpy(&v, mBytes.data() + mPos, sizeof(T));
        mPos += sizeof(T);
        return v;
    }
    template <class M> void get_block(M &m) {
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>();
    }
    SplatParams<double> get_params(Index n) {
        SplatParams<double> p = SplatParams<double>::zeros(n);
        get_block(p.mu_local);
        get_block(p.rot_local);
        get_block(p.scale_raw);
        get_block(p.opacity_raw);
        get_block(p.sh);
        return p;
    }
    bool done() const { return mPos == mBytes.size(); }

  private:
    std::string mBytes;
    std::string mName;
    std::size_t mPos = 0;
};

std::string read_all(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

fs::path sidecar_path(const fs::path &ckpt) { return fs::path(ckpt.string() + ".json"); }
fs::path optimizer_path(const fs::path &ckpt) { return fs::path(ckpt.string() + ".optim"); }

void save_checkpoint(const fs::path &ckpt, const TrainState &state, CheckpointInfo info) {
    std::ostringstream rng;
    rng << state.rng;
    info.iteration = state.iteration;
    info.rng_state = rng.str();

    Writer w;
    w.bytes().append(kOptimMagic, 4);
    w.put(kOptimVersion);
    w.put(static_cast<std::uint32_t>(state.cloud.size()));
    w.put(static_cast<std::int64_t>(state.adam.step));
    w.put_params(state.cloud.params);
    w.put_params(state.adam.m);
    w.put_params(state.adam.v);
    w.put_block(state.accum.grad_sum);
    w.put_block(state.accum.count);
    for (auto p : state.cloud.parent_face) w.put(p);
    write_file_atomic(optimizer_path(ckpt), w.bytes());

    json doc = {
        {"stage", info.stage},
        {"iteration", info.iteration},
        {"config_hash", info.config_hash},
        {"config", info.config},
        {"rng_state", info.rng_state},
        {"mesh_id", info.mesh_id},
        {"shape", std::vector<double>(info.shape.data(), info.shape.data() + info.shape.size())},
        {"scene", info.scene},
        {"n_splats", state.cloud.size()},
    };
    write_file_atomic(sidecar_path(ckpt), doc.dump(2) + "\n");
    save_cloud(ckpt, state.cloud);
}

Checkpoint load_checkpoint(const fs::path &ckpt) {
    Checkpoint out;
    out.cloud = load_cloud(ckpt);
    const fs::path side = sidecar_path(ckpt);
    try {
        const json doc = json::parse(read_all(side));
        CheckpointInfo &info = out.info;
        info.stage = doc.at("stage").get<std::string>();
        info.iteration = doc.at("iteration").get<int>();
        info.config_hash = doc.at("config_hash").get<std::uint64_t>();
        info.config = doc.at("config").get<std::string>();
        info.rng_state = doc.at("rng_state").get<std::string>();
        info.mesh_id = doc.at("mesh_id").get<std::string>();
        const auto shape = doc.at("shape").get<std::vector<double>>();
        info.shape = Eigen::Map<const VecX<double>>(shape.data(), static_cast<Index>(shape.size()));
        info.scene = doc.at("scene").get<std::string>();
    } catch (const json::exception &e) {
        throw IoError("bad checkpoint sidecar " + side.string() + ": " + e.what());
    }
    if (config_hash(out.config()) != out.info.config_hash)
        throw IoError("checkpoint sidecar " + side.string() + ": config hash mismatch");
    return out;
}

TrainState load_train_state(const fs::path &ckpt, const CheckpointInfo &info) {
    const fs::path path = optimizer_path(ckpt);
    Reader r(read_all(path), path.string());
    char magic[4];
    for (char &c : magic) c = r.get<char>();
    if (std::memcmp(magic, kOptimMagic, 4) != 0) throw IoError(path.string() + " is not an optimizer state file");
    if (r.get<std::uint32_t>() != kOptimVersion) throw IoError(path.string() + ": unsupported version");
    const Index n = r.get<std::uint32_t>();
    TrainState st;
    st.adam.step = r.get<std::int64_t>();
    st.cloud.params = r.get_params(n);
    st.adam.m = r.get_params(n);
    st.adam.v = r.get_params(n);
    st.accum = DensifyAccumulator::zeros(n);
    r.get_block(st.accum.grad_sum);
    r.get_block(st.accum.count);
    st.cloud.parent_face.resize(static_cast<std::size_t>(n));
    for (auto &p : st.cloud.parent_face) p = r.get<std::uint32_t>();
    if (!r.done()) throw IoError(path.string() + " has trailing bytes");
    std::istringstream rng(info.rng_state);
    rng >> st.rng;
    if (!rng) throw IoError("bad rng state in checkpoint sidecar");
    st.iteration = info.iteration;
    return st;
}

} // namespace splatswap
