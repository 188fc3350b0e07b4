#include "salfield/binio.hpp"
#include "salfield/trainer.hpp"

namespace salfield {

namespace {

void put_tensor(BinaryWriter& w, const Tensor<float>& t) {
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    w.f32s(t.values());
}

Tensor<float> get_tensor(BinaryReader& r) {
    const auto rank = r.u32();
    if (rank > 8) throw FormatError("checkpoint: implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
        d = r.u64();
        if (d != 0 && n > r.remaining() / d) throw FormatError("checkpoint: truncated tensor");
        n *= d;
    }
    return Tensor<float>(shape, r.f32s(n));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    BinaryWriter w(path);
    w.magic("ISSN");
    w.u32(kCheckpointVersion);
    w.string(c.kind);
    w.string(c.config.to_string());
    w.u32(static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& t : c.tensors) {
        w.string(t.name);
        put_tensor(w, t.value);
    }
    if (c.shape_ids.size() != c.latents.size()) throw std::invalid_argument("checkpoint: latent table is inconsistent");
    const std::uint32_t dim = c.latents.empty() ? 0 : static_cast<std::uint32_t>(c.latents[0].size());
    w.u64(c.latents.size());
    w.u32(dim);
    for (std::size_t i = 0; i < c.latents.size(); ++i) {
        if (c.latents[i].size() != dim) throw std::invalid_argument("checkpoint: latents differ in dimension");
        w.string(c.shape_ids[i]);
        w.f32s(c.latents[i]);
    }
    w.u32(static_cast<std::uint32_t>(c.optimizers.size()));
    for (const auto& o : c.optimizers) {
        w.string(o.name);
        w.u64(o.state.step);
        w.f64(o.state.beta1);
        w.f64(o.state.beta2);
        w.f64(o.state.eps);
        w.u32(static_cast<std::uint32_t>(o.state.m.size()));
        for (std::size_t k = 0; k < o.state.m.size(); ++k) {
            put_tensor(w, o.state.m[k]);
            put_tensor(w, o.state.v[k]);
        }
    }
    w.u64(c.epoch);
    w.string(c.rng_state);
    w.close();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    BinaryReader r(path);
    r.expect_magic("ISSN");
    if (const auto v = r.u32(); v != kCheckpointVersion)
        throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
    Checkpoint c;
    c.kind = r.string();
    c.config = KeyValueConfig::parse(r.string(), path.string() + " config block");
    const auto nt = r.u32();
    for (std::uint32_t i = 0; i < nt; ++i) {
        NamedTensor t;
        t.name = r.string();
        t.value = get_tensor(r);
        c.tensors.push_back(std::move(t));
    }
    const auto nl = r.u64();
    const auto dim = r.u32();
    if (nl > r.remaining()) throw FormatError(path.string() + ": truncated latent table");
    for (std::uint64_t i = 0; i < nl; ++i) {
        c.shape_ids.push_back(r.string());
        c.latents.push_back(r.f32s(dim));
    }
    const auto no = r.u32();
    for (std::uint32_t i = 0; i < no; ++i) {
        NamedOptimizer o;
        o.name = r.string();
        o.state.step = r.u64();
        o.state.beta1 = r.f64();
        o.state.beta2 = r.f64();
        o.state.eps = r.f64();
        const auto k = r.u32();
        for (std::uint32_t j = 0; j < k; ++j) {
            o.state.m.push_back(get_tensor(r));
            o.state.v.push_back(get_tensor(r));
        }
        c.optimizers.push_back(std::move(o));
    }
    c.epoch = r.u64();
    c.rng_state = r.string();
    r.expect_end();
    return c;
}

}  // namespace salfield
