#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "privdfs/model.hpp"

namespace privdfs {

// Little-endian binary IO. The in-memory layout on every supported target is
// already little-endian; writes go through fixed-width helpers anyway so the
// layout is explicit.
namespace io {

inline void put_u8(std::ostream& os, std::uint8_t v) {
    os.write(reinterpret_cast<const char*>(&v), 1);
}
inline void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}
inline void put_f32(std::ostream& os, float v) {
    std::uint32_t u;
    static_assert(sizeof(u) == sizeof(v));
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}
inline void put_floats(std::ostream& os, const std::vector<float>& v) {
    put_u32(os, static_cast<std::uint32_t>(v.size()));
    for (float f : v) put_f32(os, f);
}

inline std::uint8_t get_u8(std::istream& is) {
    unsigned char b;
    is.read(reinterpret_cast<char*>(&b), 1);
    return b;
}
inline std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
inline float get_f32(std::istream& is) {
    const std::uint32_t u = get_u32(is);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}
inline std::vector<float> get_floats(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    if (!is || n > (1u << 28)) throw std::runtime_error("get_floats: bad count");
    std::vector<float> v(n);
    for (auto& f : v) f = get_f32(is);
    return v;
}

}  // namespace io

// ---- policy blob -------------------------------------------------------

constexpr char kPolicyMagic[4] = {'P', 'D', 'P', 'L'};
constexpr std::uint8_t kPolicyVersion = 1;

inline void save_policy(const DfsPolicy& p, std::ostream& os) {
    os.write(kPolicyMagic, 4);
    io::put_u8(os, kPolicyVersion);
    io::put_u32(os, p.policy_id);
    io::put_u32(os, static_cast<std::uint32_t>(p.channels));
    io::put_u32(os, static_cast<std::uint32_t>(p.num_branches));
    io::put_u32(os, static_cast<std::uint32_t>(p.kernel_size));
    io::put_floats(os, p.depthwise_kernel);
    io::put_floats(os, p.ortho_matrix);
    for (const auto& perm : p.chan_perms) {
        io::put_u32(os, static_cast<std::uint32_t>(perm.size()));
        for (int v : perm) io::put_u32(os, static_cast<std::uint32_t>(v));
    }
    for (const auto& shifts : p.patch_shifts) {
        io::put_u32(os, static_cast<std::uint32_t>(shifts.size()));
        for (const auto& [a, b] : shifts) {
            io::put_u32(os, static_cast<std::uint32_t>(a));
            io::put_u32(os, static_cast<std::uint32_t>(b));
        }
    }
    io::put_floats(os, p.mix_matrix);
    for (auto s : p.noise_seeds) io::put_u64(os, s);
}

inline DfsPolicy load_policy(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kPolicyMagic, 4) != 0)
        throw std::runtime_error("load_policy: bad magic");
    if (io::get_u8(is) != kPolicyVersion)
        throw std::runtime_error("load_policy: unknown version");
    DfsPolicy p;
    p.policy_id = io::get_u32(is);
    p.channels = static_cast<int>(io::get_u32(is));
    p.num_branches = static_cast<int>(io::get_u32(is));
    p.kernel_size = static_cast<int>(io::get_u32(is));
    if (!is || p.channels < 1 || p.channels > (1 << 16) || p.num_branches < 1 ||
        p.num_branches > p.channels || p.kernel_size < 1 || p.kernel_size > 63)
        throw std::runtime_error("load_policy: bad header fields");
    p.depthwise_kernel = io::get_floats(is);
    p.ortho_matrix = io::get_floats(is);
    const std::uint32_t cb = static_cast<std::uint32_t>(p.channels / p.num_branches);
    p.chan_perms.resize(p.num_branches);
    for (auto& perm : p.chan_perms) {
        const std::uint32_t sz = io::get_u32(is);
        if (!is || sz != cb) throw std::runtime_error("load_policy: bad perm size");
        perm.resize(sz);
        for (auto& v : perm) v = static_cast<int>(io::get_u32(is));
    }
    p.patch_shifts.resize(p.num_branches);
    for (auto& shifts : p.patch_shifts) {
        const std::uint32_t sz = io::get_u32(is);
        if (!is || sz != cb) throw std::runtime_error("load_policy: bad shift size");
        shifts.resize(sz);
        for (auto& sp : shifts) {
            sp.first = static_cast<int>(io::get_u32(is));
            sp.second = static_cast<int>(io::get_u32(is));
        }
    }
    p.mix_matrix = io::get_floats(is);
    p.noise_seeds.resize(p.num_branches);
    for (auto& s : p.noise_seeds) s = io::get_u64(is);
    if (!is) throw std::runtime_error("load_policy: truncated blob");
    return p;
}

// ---- model bundle ------------------------------------------------------

constexpr char kModelMagic[4] = {'P', 'D', 'M', 'B'};
constexpr std::uint8_t kModelVersion = 1;

// Layer tags for the weight records (see docs/formats.md).
enum WeightTag : std::uint32_t {
    kTagEncW = 1,
    kTagEncB = 2,
    kTagFus1W = 3,
    kTagFus1B = 4,
    kTagFus2W = 5,
    kTagFus2B = 6,
    kTagBranchBase = 100,  // branch i uses kTagBranchBase + 10*i + {0..5}
};

namespace detail {
inline void put_layer(std::ostream& os, std::uint32_t tag,
                      std::initializer_list<std::uint32_t> shape,
                      const std::vector<float>& values) {
    io::put_u32(os, tag);
    io::put_u8(os, static_cast<std::uint8_t>(shape.size()));
    std::uint64_t count = 1;
    for (auto d : shape) {
        io::put_u32(os, d);
        count *= d;
    }
    require(count == values.size(), "put_layer: shape/value mismatch");
    for (float f : values) io::put_f32(os, f);
}

inline std::vector<float> get_layer(std::istream& is, std::uint32_t expect_tag) {
    const std::uint32_t tag = io::get_u32(is);
    if (!is) throw std::runtime_error("model file: truncated layer header");
    if (tag != expect_tag) throw std::runtime_error("model file: unexpected layer tag");
    const int ndims = io::get_u8(is);
    std::uint64_t count = 1;
    for (int i = 0; i < ndims; ++i) count *= io::get_u32(is);
    if (!is || count > (1ULL << 28))
        throw std::runtime_error("model file: bad layer shape");
    std::vector<float> v(count);
    for (auto& f : v) f = io::get_f32(is);
    return v;
}
}  // namespace detail

inline void save_bundle(const ModelBundle& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_bundle: cannot open " + path);
    os.write(kModelMagic, 4);
    io::put_u8(os, kModelVersion);

    const ModelArch& a = m.arch;
    io::put_u32(os, a.in_channels);
    io::put_u32(os, a.enc_channels);
    io::put_u32(os, a.enc_kernel);
    io::put_u32(os, a.branch_width);
    io::put_u32(os, a.branch_kernel);
    io::put_u32(os, a.emb_dim);
    io::put_u32(os, a.fusion_hidden);
    io::put_u32(os, a.classes);

    const DfsConfig& c = m.cfg;
    io::put_u32(os, c.num_branches);
    io::put_f32(os, c.noise_scale);
    io::put_u32(os, c.patch_size);
    io::put_f32(os, c.mix_alpha);
    io::put_u32(os, c.kernel_size);
    io::put_u32(os, c.height);
    io::put_u32(os, c.width);
    std::uint8_t flags = 0;
    flags |= c.use_loc_conf << 0;
    flags |= c.use_ortho << 1;
    flags |= c.use_ada_noise << 2;
    flags |= c.use_chan_perm << 3;
    flags |= c.use_patch_reorg << 4;
    flags |= c.use_cross_mix << 5;
    io::put_u8(os, flags);

    io::put_u32(os, static_cast<std::uint32_t>(m.epochs_trained));
    io::put_u32(os, static_cast<std::uint32_t>(m.family.keys.size()));
    for (auto k : m.family.keys) io::put_u64(os, k);
    for (const auto& p : m.family.policies) save_policy(p, os);

    const std::uint32_t layer_count =
        6 + 6 * static_cast<std::uint32_t>(m.branches.size());
    io::put_u32(os, layer_count);
    detail::put_layer(os, kTagEncW,
                      {static_cast<std::uint32_t>(m.encoder.out_c),
                       static_cast<std::uint32_t>(m.encoder.in_c),
                       static_cast<std::uint32_t>(m.encoder.k),
                       static_cast<std::uint32_t>(m.encoder.k)},
                      m.encoder.w);
    detail::put_layer(os, kTagEncB, {static_cast<std::uint32_t>(m.encoder.out_c)},
                      m.encoder.b);
    for (std::size_t i = 0; i < m.branches.size(); ++i) {
        const auto& br = m.branches[i];
        const std::uint32_t base = kTagBranchBase + 10 * static_cast<std::uint32_t>(i);
        detail::put_layer(os, base + 0,
                          {static_cast<std::uint32_t>(br.c1.out_c),
                           static_cast<std::uint32_t>(br.c1.in_c),
                           static_cast<std::uint32_t>(br.c1.k),
                           static_cast<std::uint32_t>(br.c1.k)},
                          br.c1.w);
        detail::put_layer(os, base + 1, {static_cast<std::uint32_t>(br.c1.out_c)},
                          br.c1.b);
        detail::put_layer(os, base + 2,
                          {static_cast<std::uint32_t>(br.c2.out_c),
                           static_cast<std::uint32_t>(br.c2.in_c),
                           static_cast<std::uint32_t>(br.c2.k),
                           static_cast<std::uint32_t>(br.c2.k)},
                          br.c2.w);
        detail::put_layer(os, base + 3, {static_cast<std::uint32_t>(br.c2.out_c)},
                          br.c2.b);
        detail::put_layer(os, base + 4,
                          {static_cast<std::uint32_t>(br.emb.out_n),
                           static_cast<std::uint32_t>(br.emb.in_n)},
                          br.emb.w);
        detail::put_layer(os, base + 5, {static_cast<std::uint32_t>(br.emb.out_n)},
                          br.emb.b);
    }
    detail::put_layer(os, kTagFus1W,
                      {static_cast<std::uint32_t>(m.fusion1.out_n),
                       static_cast<std::uint32_t>(m.fusion1.in_n)},
                      m.fusion1.w);
    detail::put_layer(os, kTagFus1B, {static_cast<std::uint32_t>(m.fusion1.out_n)},
                      m.fusion1.b);
    detail::put_layer(os, kTagFus2W,
                      {static_cast<std::uint32_t>(m.fusion2.out_n),
                       static_cast<std::uint32_t>(m.fusion2.in_n)},
                      m.fusion2.w);
    detail::put_layer(os, kTagFus2B, {static_cast<std::uint32_t>(m.fusion2.out_n)},
                      m.fusion2.b);
}

inline ModelBundle load_bundle(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_bundle: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kModelMagic, 4) != 0)
        throw std::runtime_error("load_bundle: bad magic");
    if (io::get_u8(is) != kModelVersion)
        throw std::runtime_error("load_bundle: unknown version");

    ModelArch a;
    a.in_channels = static_cast<int>(io::get_u32(is));
    a.enc_channels = static_cast<int>(io::get_u32(is));
    a.enc_kernel = static_cast<int>(io::get_u32(is));
    a.branch_width = static_cast<int>(io::get_u32(is));
    a.branch_kernel = static_cast<int>(io::get_u32(is));
    a.emb_dim = static_cast<int>(io::get_u32(is));
    a.fusion_hidden = static_cast<int>(io::get_u32(is));
    a.classes = static_cast<int>(io::get_u32(is));

    DfsConfig c;
    c.num_branches = static_cast<int>(io::get_u32(is));
    c.noise_scale = io::get_f32(is);
    c.patch_size = static_cast<int>(io::get_u32(is));
    c.mix_alpha = io::get_f32(is);
    c.kernel_size = static_cast<int>(io::get_u32(is));
    c.height = static_cast<int>(io::get_u32(is));
    c.width = static_cast<int>(io::get_u32(is));
    const std::uint8_t flags = io::get_u8(is);
    c.use_loc_conf = flags & 1;
    c.use_ortho = flags & 2;
    c.use_ada_noise = flags & 4;
    c.use_chan_perm = flags & 8;
    c.use_patch_reorg = flags & 16;
    c.use_cross_mix = flags & 32;

    ModelBundle m;
    m.arch = a;
    m.cfg = c;
    m.epochs_trained = static_cast<int>(io::get_u32(is));
    const std::uint32_t key_count = io::get_u32(is);
    m.family.keys.resize(key_count);
    for (auto& k : m.family.keys) k = io::get_u64(is);
    m.family.policies.reserve(key_count);
    for (std::uint32_t i = 0; i < key_count; ++i)
        m.family.policies.push_back(load_policy(is));

    const std::uint32_t layer_count = io::get_u32(is);
    const std::uint32_t expect =
        6 + 6 * static_cast<std::uint32_t>(c.num_branches);
    if (layer_count != expect)
        throw std::runtime_error("load_bundle: unexpected layer count");

    m.encoder.in_c = a.in_channels;
    m.encoder.out_c = a.enc_channels;
    m.encoder.k = a.enc_kernel;
    m.encoder.w = detail::get_layer(is, kTagEncW);
    m.encoder.b = detail::get_layer(is, kTagEncB);
    const int cb = a.enc_channels / c.num_branches;
    m.branches.resize(c.num_branches);
    for (int i = 0; i < c.num_branches; ++i) {
        auto& br = m.branches[i];
        const std::uint32_t base = kTagBranchBase + 10 * static_cast<std::uint32_t>(i);
        br.c1.in_c = cb;
        br.c1.out_c = a.branch_width;
        br.c1.k = a.branch_kernel;
        br.c1.w = detail::get_layer(is, base + 0);
        br.c1.b = detail::get_layer(is, base + 1);
        br.c2.in_c = a.branch_width;
        br.c2.out_c = a.branch_width;
        br.c2.k = a.branch_kernel;
        br.c2.w = detail::get_layer(is, base + 2);
        br.c2.b = detail::get_layer(is, base + 3);
        br.emb.in_n = a.branch_width;
        br.emb.out_n = a.emb_dim;
        br.emb.w = detail::get_layer(is, base + 4);
        br.emb.b = detail::get_layer(is, base + 5);
    }
    m.fusion1.in_n = c.num_branches * a.emb_dim;
    m.fusion1.out_n = a.fusion_hidden;
    m.fusion1.w = detail::get_layer(is, kTagFus1W);
    m.fusion1.b = detail::get_layer(is, kTagFus1B);
    m.fusion2.in_n = a.fusion_hidden;
    m.fusion2.out_n = a.classes;
    m.fusion2.w = detail::get_layer(is, kTagFus2W);
    m.fusion2.b = detail::get_layer(is, kTagFus2B);
    if (!is) throw std::runtime_error("load_bundle: truncated file");
    return m;
}

}  // namespace privdfs
