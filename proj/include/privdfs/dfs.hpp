#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "privdfs/flops.hpp"
#include "privdfs/rng.hpp"
#include "privdfs/tensor.hpp"

namespace privdfs {

// Pipeline configuration. Spatial dims are deployment constants so policies
// can materialize patch shifts up front.
struct DfsConfig {
    int num_branches = 3;
    float noise_scale = 0.3f;
    int patch_size = 4;
    float mix_alpha = 0.25f;
    int kernel_size = 3;
    int height = 16;
    int width = 16;

    // Stage toggles for ablation runs.
    bool use_loc_conf = true;
    bool use_ortho = true;
    bool use_ada_noise = true;
    bool use_chan_perm = true;
    bool use_patch_reorg = true;
    bool use_cross_mix = true;

    void validate(int encoder_channels) const {
        require(num_branches >= 1, "num_branches must be >= 1");
        require(encoder_channels % num_branches == 0,
                "encoder channel count must be divisible by num_branches");
        require(height % patch_size == 0 && width % patch_size == 0,
                "height and width must be divisible by patch_size");
        require(noise_scale >= 0.0f, "noise_scale must be >= 0");
        require(kernel_size >= 1 && kernel_size % 2 == 1,
                "kernel_size must be odd");
        const float limit =
            num_branches == 1 ? 0.0f
                              : static_cast<float>(num_branches - 1) / num_branches;
        if (num_branches == 1)
            require(mix_alpha == 0.0f, "mix_alpha must be 0 when N = 1");
        else
            require(mix_alpha >= 0.0f && mix_alpha < limit,
                    "mix_alpha out of [0, (N-1)/N)");
    }
};

// Fully materialized per-key stage parameters.
struct DfsPolicy {
    std::uint32_t policy_id = 0;
    int channels = 0;       // encoder output channels C
    int num_branches = 0;   // N
    int kernel_size = 0;

    std::vector<float> depthwise_kernel;  // C * k * k
    std::vector<float> ortho_matrix;      // C * C, row-major, v <- Q v
    std::vector<std::vector<int>> chan_perms;                      // N x (C/N)
    std::vector<std::vector<std::pair<int, int>>> patch_shifts;    // N x (C/N)
    std::vector<float> mix_matrix;        // N * N, row-major
    std::vector<std::uint64_t> noise_seeds;  // N

    int branch_channels() const { return channels / num_branches; }
};

struct Share {
    int branch_id = 0;
    std::uint32_t policy_id = 0;
    FeatureMap features;
};

// Seed domain tags; one stream per stage (and per branch where applicable).
enum SeedTag : std::uint32_t {
    kTagKernel = 1,
    kTagOrtho = 2,
    kTagPerm = 3,
    kTagShift = 4,
    kTagNoise = 5,
};

// Seeded Gaussian fill + Householder QR, column signs flipped so that R's
// diagonal is positive. This makes Q unique for a given seed.
inline std::vector<float> ortho_matrix(std::uint64_t seed, int c) {
    require(c >= 1, "ortho_matrix: C must be >= 1");
    const int n = c;
    Rng rng(seed);
    std::vector<double> a(static_cast<std::size_t>(n) * n);
    for (auto& v : a) v = rng.gaussian();

    std::vector<double> q(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) q[i * n + i] = 1.0;

    std::vector<double> house(n);
    for (int k = 0; k < n; ++k) {
        double norm = 0.0;
        for (int i = k; i < n; ++i) norm += a[i * n + k] * a[i * n + k];
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        const double alpha = a[k * n + k] >= 0.0 ? -norm : norm;
        double vnorm2 = 0.0;
        for (int i = k; i < n; ++i) {
            house[i] = a[i * n + k];
            if (i == k) house[i] -= alpha;
            vnorm2 += house[i] * house[i];
        }
        if (vnorm2 == 0.0) continue;
        // A <- (I - 2 v v^T / v^T v) A
        for (int j = k; j < n; ++j) {
            double dot = 0.0;
            for (int i = k; i < n; ++i) dot += house[i] * a[i * n + j];
            const double f = 2.0 * dot / vnorm2;
            for (int i = k; i < n; ++i) a[i * n + j] -= f * house[i];
        }
        // Q <- Q (I - 2 v v^T / v^T v)
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = k; j < n; ++j) dot += q[i * n + j] * house[j];
            const double f = 2.0 * dot / vnorm2;
            for (int j = k; j < n; ++j) q[i * n + j] -= f * house[j];
        }
    }
    for (int j = 0; j < n; ++j) {
        if (a[j * n + j] < 0.0)
            for (int i = 0; i < n; ++i) q[i * n + j] = -q[i * n + j];
    }
    std::vector<float> out(static_cast<std::size_t>(n) * n);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(q[i]);
    return out;
}

inline std::vector<int> fisher_yates(std::uint64_t seed, int n) {
    require(n >= 1, "fisher_yates: n must be >= 1");
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    Rng rng(seed);
    for (int i = n - 1; i >= 1; --i) {
        const int j = static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

inline std::vector<float> make_mix_matrix(int n, float alpha) {
    std::vector<float> m(static_cast<std::size_t>(n) * n, 0.0f);
    const float off = n > 1 ? alpha / static_cast<float>(n - 1) : 0.0f;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            m[i * n + j] = (i == j) ? 1.0f - alpha : off;
    return m;
}

inline DfsPolicy make_policy(std::uint64_t key, const DfsConfig& cfg,
                             int encoder_channels,
                             std::uint32_t policy_id = 0) {
    cfg.validate(encoder_channels);
    const int c = encoder_channels;
    const int n = cfg.num_branches;
    const int k = cfg.kernel_size;
    const int cb = c / n;
    const int grid_h = cfg.height / cfg.patch_size;
    const int grid_w = cfg.width / cfg.patch_size;

    DfsPolicy p;
    p.policy_id = policy_id;
    p.channels = c;
    p.num_branches = n;
    p.kernel_size = k;

    // Averaging kernel with seeded jitter so channels diffuse differently.
    Rng kr(derive_seed(key, kTagKernel, 0));
    const float base = 1.0f / static_cast<float>(k * k);
    p.depthwise_kernel.resize(static_cast<std::size_t>(c) * k * k);
    for (auto& w : p.depthwise_kernel)
        w = base + 0.05f * static_cast<float>(kr.gaussian());

    p.ortho_matrix = ortho_matrix(derive_seed(key, kTagOrtho, 0), c);

    p.chan_perms.resize(n);
    p.patch_shifts.resize(n);
    p.noise_seeds.resize(n);
    for (int b = 0; b < n; ++b) {
        p.chan_perms[b] = fisher_yates(derive_seed(key, kTagPerm, b), cb);
        Rng sr(derive_seed(key, kTagShift, b));
        p.patch_shifts[b].resize(cb);
        for (int ch = 0; ch < cb; ++ch) {
            const int a = static_cast<int>(sr.next() % static_cast<std::uint64_t>(grid_h));
            const int bb = static_cast<int>(sr.next() % static_cast<std::uint64_t>(grid_w));
            p.patch_shifts[b][ch] = {a, bb};
        }
        p.noise_seeds[b] = derive_seed(key, kTagNoise, b);
    }
    p.mix_matrix = make_mix_matrix(n, cfg.mix_alpha);
    return p;
}

// ---- stages ----------------------------------------------------------

// Depthwise conv with zero same-padding, then ReLU. If pre_act is given it
// receives the pre-ReLU map (needed for backprop).
inline FeatureMap loc_conf(const FeatureMap& z, const std::vector<float>& kernel,
                           int kernel_size, FeatureMap* pre_act = nullptr) {
    const int k = kernel_size;
    require(k % 2 == 1, "loc_conf: kernel must be odd");
    require(static_cast<int>(kernel.size()) == z.channels * k * k,
            "loc_conf: kernel channel count mismatch");
    const int r = k / 2;
    FeatureMap out(z.channels, z.height, z.width);
    for (int c = 0; c < z.channels; ++c) {
        const float* kc = kernel.data() + static_cast<std::size_t>(c) * k * k;
        for (int y = 0; y < z.height; ++y) {
            for (int x = 0; x < z.width; ++x) {
                double acc = 0.0;
                for (int i = 0; i < k; ++i) {
                    const int yy = y + i - r;
                    if (yy < 0 || yy >= z.height) continue;
                    for (int j = 0; j < k; ++j) {
                        const int xx = x + j - r;
                        if (xx < 0 || xx >= z.width) continue;
                        acc += static_cast<double>(kc[i * k + j]) * z.at(c, yy, xx);
                    }
                }
                out.at(c, y, x) = static_cast<float>(acc);
                add_flops(2LL * k * k);
            }
        }
    }
    if (pre_act) *pre_act = out;
    for (auto& v : out.data)
        if (v < 0.0f) v = 0.0f;
    return out;
}

// 1x1 orthogonal convolution: channel vector v <- Q v at each position.
inline FeatureMap ortho_rcb(const FeatureMap& z, const std::vector<float>& q) {
    const int c = z.channels;
    require(static_cast<int>(q.size()) == c * c, "ortho_rcb: Q dimension mismatch");
    FeatureMap out(c, z.height, z.width);
    const int plane = z.plane();
    for (int i = 0; i < c; ++i) {
        const float* row = q.data() + static_cast<std::size_t>(i) * c;
        float* dst = out.data.data() + static_cast<std::size_t>(i) * plane;
        for (int j = 0; j < c; ++j) {
            const float w = row[j];
            if (w == 0.0f) continue;
            const float* src = z.data.data() + static_cast<std::size_t>(j) * plane;
            for (int p = 0; p < plane; ++p) dst[p] += w * src[p];
        }
    }
    add_flops(2LL * c * c * plane);
    return out;
}

inline std::vector<FeatureMap> split_branches(const FeatureMap& z, int n) {
    require(z.channels % n == 0, "split_branches: channels not divisible by N");
    const int cb = z.channels / n;
    std::vector<FeatureMap> out;
    out.reserve(n);
    for (int b = 0; b < n; ++b) {
        FeatureMap f(cb, z.height, z.width);
        const std::size_t off = static_cast<std::size_t>(b) * cb * z.plane();
        std::copy(z.data.begin() + off, z.data.begin() + off + f.size(),
                  f.data.begin());
        out.push_back(std::move(f));
    }
    return out;
}

// Additive Gaussian noise scaled by each channel's population std.
inline FeatureMap ada_noise(const FeatureMap& s, std::uint64_t seed, float sigma) {
    require(sigma >= 0.0f, "ada_noise: sigma must be >= 0");
    FeatureMap out = s;
    if (sigma == 0.0f) return out;
    add_flops(4LL * s.channels * s.plane());  // std pass + scale-add pass
    Rng rng(seed);
    const int plane = s.plane();
    for (int c = 0; c < s.channels; ++c) {
        const float* src = s.data.data() + static_cast<std::size_t>(c) * plane;
        double sum = 0.0, sq = 0.0;
        for (int p = 0; p < plane; ++p) {
            sum += src[p];
            sq += static_cast<double>(src[p]) * src[p];
        }
        const double mean = sum / plane;
        const double var = sq / plane - mean * mean;
        const double sd = var > 0.0 ? std::sqrt(var) : 0.0;
        float* dst = out.data.data() + static_cast<std::size_t>(c) * plane;
        if (sd == 0.0) {
            // constant channel: std 0, no noise, but keep the stream aligned
            for (int p = 0; p < plane; ++p) rng.gaussian();
            continue;
        }
        const double scale = sigma * sd;
        for (int p = 0; p < plane; ++p)
            dst[p] = static_cast<float>(dst[p] + scale * rng.gaussian());
    }
    return out;
}

inline FeatureMap chan_perm(const FeatureMap& s, const std::vector<int>& perm) {
    require(static_cast<int>(perm.size()) == s.channels,
            "chan_perm: perm size mismatch");
    std::vector<bool> seen(s.channels, false);
    for (int v : perm) {
        require(v >= 0 && v < s.channels && !seen[v], "chan_perm: not a bijection");
        seen[v] = true;
    }
    FeatureMap out(s.channels, s.height, s.width);
    const int plane = s.plane();
    for (int i = 0; i < s.channels; ++i) {
        std::copy_n(s.data.begin() + static_cast<std::size_t>(perm[i]) * plane,
                    plane, out.data.begin() + static_cast<std::size_t>(i) * plane);
    }
    return out;
}

// Cyclic shift of the PxP patch grid, channel-specific offsets.
inline FeatureMap patch_reorg(const FeatureMap& s,
                              const std::vector<std::pair<int, int>>& shifts,
                              int patch) {
    require(s.height % patch == 0 && s.width % patch == 0,
            "patch_reorg: dims not divisible by patch size");
    require(static_cast<int>(shifts.size()) == s.channels,
            "patch_reorg: shifts size mismatch");
    const int gh = s.height / patch;
    const int gw = s.width / patch;
    FeatureMap out(s.channels, s.height, s.width);
    for (int c = 0; c < s.channels; ++c) {
        const int a = ((shifts[c].first % gh) + gh) % gh;
        const int b = ((shifts[c].second % gw) + gw) % gw;
        for (int u = 0; u < gh; ++u) {
            const int tu = (u + a) % gh;
            for (int v = 0; v < gw; ++v) {
                const int tv = (v + b) % gw;
                for (int py = 0; py < patch; ++py)
                    for (int px = 0; px < patch; ++px)
                        out.at(c, tu * patch + py, tv * patch + px) =
                            s.at(c, u * patch + py, v * patch + px);
            }
        }
    }
    return out;
}

// Rows of the share stack are mixed: out_i = sum_j M[i][j] s_j.
inline std::vector<FeatureMap> cross_mix(const std::vector<FeatureMap>& shares,
                                         const std::vector<float>& m) {
    const int n = static_cast<int>(shares.size());
    require(static_cast<int>(m.size()) == n * n, "cross_mix: M dimension mismatch");
    for (int i = 1; i < n; ++i)
        require(shares[i].same_shape(shares[0]), "cross_mix: shape mismatch");
    std::vector<FeatureMap> out(n);
    for (int i = 0; i < n; ++i) {
        out[i] = FeatureMap(shares[0].channels, shares[0].height, shares[0].width);
        for (int j = 0; j < n; ++j) {
            const float w = m[i * n + j];
            if (w == 0.0f) continue;
            for (std::size_t p = 0; p < out[i].size(); ++p)
                out[i].data[p] += w * shares[j].data[p];
        }
    }
    add_flops(2LL * n * n * static_cast<std::int64_t>(shares[0].size()));
    return out;
}

// ---- full pipeline ---------------------------------------------------

// Intermediates retained for the backward pass.
struct DfsCache {
    FeatureMap input;
    FeatureMap pre_relu;           // loc_conf pre-activation
    FeatureMap post_relu;
    FeatureMap mixed_channels;     // after ortho_rcb
    std::vector<FeatureMap> pre_mix;  // per-branch, just before cross_mix
};

inline std::vector<Share> dfs_forward(const FeatureMap& z, const DfsPolicy& policy,
                                      const DfsConfig& cfg, std::uint64_t nonce,
                                      DfsCache* cache = nullptr) {
    require(z.channels == policy.channels, "dfs_forward: channel mismatch");
    require(z.height == cfg.height && z.width == cfg.width,
            "dfs_forward: spatial dims mismatch");
    const int n = policy.num_branches;

    if (cache) cache->input = z;
    FeatureMap cur = cfg.use_loc_conf
                         ? loc_conf(z, policy.depthwise_kernel, policy.kernel_size,
                                    cache ? &cache->pre_relu : nullptr)
                         : z;
    if (cache) cache->post_relu = cur;
    if (cfg.use_ortho) cur = ortho_rcb(cur, policy.ortho_matrix);
    if (cache) cache->mixed_channels = cur;

    std::vector<FeatureMap> branches = split_branches(cur, n);
    for (int b = 0; b < n; ++b) {
        if (cfg.use_ada_noise && cfg.noise_scale > 0.0f)
            branches[b] = ada_noise(branches[b], policy.noise_seeds[b] ^ nonce,
                                    cfg.noise_scale);
        if (cfg.use_chan_perm)
            branches[b] = chan_perm(branches[b], policy.chan_perms[b]);
        if (cfg.use_patch_reorg)
            branches[b] = patch_reorg(branches[b], policy.patch_shifts[b],
                                      cfg.patch_size);
    }
    if (cache) cache->pre_mix = branches;
    if (cfg.use_cross_mix) branches = cross_mix(branches, policy.mix_matrix);

    std::vector<Share> shares(n);
    for (int b = 0; b < n; ++b) {
        shares[b].branch_id = b;
        shares[b].policy_id = policy.policy_id;
        shares[b].features = std::move(branches[b]);
    }
    return shares;
}

struct DfsGrads {
    FeatureMap input;                 // d loss / d z
    std::vector<float> depthwise_kernel;
    std::vector<float> mix_matrix;
};

// Reverse of dfs_forward. Additive noise is treated as a constant, so its
// stage is an identity in the backward direction.
inline DfsGrads dfs_backward(const DfsCache& cache,
                             const std::vector<FeatureMap>& grad_shares,
                             const DfsPolicy& policy, const DfsConfig& cfg) {
    const int n = policy.num_branches;
    const int k = policy.kernel_size;
    DfsGrads g;
    g.depthwise_kernel.assign(policy.depthwise_kernel.size(), 0.0f);
    g.mix_matrix.assign(policy.mix_matrix.size(), 0.0f);

    std::vector<FeatureMap> gb(n);
    if (cfg.use_cross_mix) {
        for (int j = 0; j < n; ++j)
            gb[j] = FeatureMap(grad_shares[0].channels, grad_shares[0].height,
                               grad_shares[0].width);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const float w = policy.mix_matrix[i * n + j];
                double dot = 0.0;
                for (std::size_t p = 0; p < gb[j].size(); ++p) {
                    gb[j].data[p] += w * grad_shares[i].data[p];
                    dot += static_cast<double>(grad_shares[i].data[p]) *
                           cache.pre_mix[j].data[p];
                }
                g.mix_matrix[i * n + j] = static_cast<float>(dot);
            }
        }
    } else {
        gb = grad_shares;
    }

    for (int b = 0; b < n; ++b) {
        if (cfg.use_patch_reorg) {
            std::vector<std::pair<int, int>> neg(policy.patch_shifts[b].size());
            for (std::size_t c = 0; c < neg.size(); ++c)
                neg[c] = {-policy.patch_shifts[b][c].first,
                          -policy.patch_shifts[b][c].second};
            gb[b] = patch_reorg(gb[b], neg, cfg.patch_size);
        }
        if (cfg.use_chan_perm) {
            // out[i] = in[perm[i]]  =>  grad_in[perm[i]] = grad_out[i]
            const auto& perm = policy.chan_perms[b];
            FeatureMap gi(gb[b].channels, gb[b].height, gb[b].width);
            const int plane = gb[b].plane();
            for (int i = 0; i < gb[b].channels; ++i)
                std::copy_n(gb[b].data.begin() + static_cast<std::size_t>(i) * plane,
                            plane,
                            gi.data.begin() +
                                static_cast<std::size_t>(perm[i]) * plane);
            gb[b] = std::move(gi);
        }
    }

    // concat branch grads back into full channel space
    const int cb = policy.branch_channels();
    FeatureMap gfull(policy.channels, cfg.height, cfg.width);
    for (int b = 0; b < n; ++b) {
        const std::size_t off = static_cast<std::size_t>(b) * cb * gfull.plane();
        std::copy(gb[b].data.begin(), gb[b].data.end(), gfull.data.begin() + off);
    }

    if (cfg.use_ortho) {
        // v <- Q v  =>  grad <- Q^T grad
        const int c = policy.channels;
        FeatureMap gq(c, cfg.height, cfg.width);
        const int plane = gq.plane();
        for (int j = 0; j < c; ++j) {
            float* dst = gq.data.data() + static_cast<std::size_t>(j) * plane;
            for (int i = 0; i < c; ++i) {
                const float w = policy.ortho_matrix[i * c + j];
                const float* src =
                    gfull.data.data() + static_cast<std::size_t>(i) * plane;
                for (int p = 0; p < plane; ++p) dst[p] += w * src[p];
            }
        }
        gfull = std::move(gq);
    }

    if (!cfg.use_loc_conf) {
        g.input = std::move(gfull);
        return g;
    }

    // ReLU mask, then depthwise conv transpose + kernel gradient.
    for (std::size_t p = 0; p < gfull.size(); ++p)
        if (cache.pre_relu.data[p] <= 0.0f) gfull.data[p] = 0.0f;

    const int r = k / 2;
    const FeatureMap& z = cache.input;
    g.input = FeatureMap(z.channels, z.height, z.width);
    for (int c = 0; c < z.channels; ++c) {
        const float* kc =
            policy.depthwise_kernel.data() + static_cast<std::size_t>(c) * k * k;
        float* gk = g.depthwise_kernel.data() + static_cast<std::size_t>(c) * k * k;
        for (int y = 0; y < z.height; ++y) {
            for (int x = 0; x < z.width; ++x) {
                const float go = gfull.at(c, y, x);
                if (go == 0.0f) continue;
                for (int i = 0; i < k; ++i) {
                    const int yy = y + i - r;
                    if (yy < 0 || yy >= z.height) continue;
                    for (int j = 0; j < k; ++j) {
                        const int xx = x + j - r;
                        if (xx < 0 || xx >= z.width) continue;
                        g.input.at(c, yy, xx) += go * kc[i * k + j];
                        gk[i * k + j] += go * z.at(c, yy, xx);
                    }
                }
            }
        }
    }
    return g;
}

}  // namespace privdfs
