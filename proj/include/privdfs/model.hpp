#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "privdfs/dataio.hpp"
#include "privdfs/dfs.hpp"
#include "privdfs/keyed.hpp"
#include "privdfs/metrics.hpp"
#include "privdfs/nn.hpp"

namespace privdfs {

struct ModelArch {
    int in_channels = 1;
    int enc_channels = 12;
    int enc_kernel = 3;
    int branch_width = 16;
    int branch_kernel = 3;
    int emb_dim = 16;
    int fusion_hidden = 32;
    int classes = 10;
};

struct BranchNet {
    Conv2d c1, c2;
    Dense emb;
};

struct TrainConfig {
    float learning_rate = 0.05f;
    int batch_size = 32;
    int epochs = 10;
    float momentum = 0.9f;
    std::uint64_t seed = 1;

    void validate() const {
        require(learning_rate > 0.0f, "learning_rate must be > 0");
        require(batch_size >= 1 && epochs >= 0, "bad batch/epoch counts");
    }
};

struct ModelBundle {
    ModelArch arch;
    DfsConfig cfg;
    PolicyFamily family;
    Conv2d encoder;
    std::vector<BranchNet> branches;
    Dense fusion1, fusion2;
    int epochs_trained = 0;
};

inline ModelBundle make_bundle(const ModelArch& arch, const DfsConfig& cfg,
                               const std::vector<std::uint64_t>& keys,
                               std::uint64_t weight_seed) {
    require(arch.enc_channels % cfg.num_branches == 0,
            "encoder channels must be divisible by num_branches");
    ModelBundle b;
    b.arch = arch;
    b.cfg = cfg;
    b.family = family_create(keys, cfg, arch.enc_channels);
    Rng rng(weight_seed);
    b.encoder = Conv2d(arch.in_channels, arch.enc_channels, arch.enc_kernel, rng);
    const int cb = arch.enc_channels / cfg.num_branches;
    b.branches.resize(cfg.num_branches);
    for (auto& br : b.branches) {
        br.c1 = Conv2d(cb, arch.branch_width, arch.branch_kernel, rng);
        br.c2 = Conv2d(arch.branch_width, arch.branch_width, arch.branch_kernel, rng);
        br.emb = Dense(arch.branch_width, arch.emb_dim, rng);
    }
    b.fusion1 = Dense(cfg.num_branches * arch.emb_dim, arch.fusion_hidden, rng);
    b.fusion2 = Dense(arch.fusion_hidden, arch.classes, rng);
    return b;
}

// ---- forward / backward ----------------------------------------------

struct BranchCache {
    FeatureMap share;  // input to the branch
    FeatureMap pre1, act1, pre2, act2;
    std::vector<float> pooled;
    std::vector<float> embedding;
};

struct FullCache {
    FeatureMap input;
    FeatureMap encoded;
    int policy_idx = 0;
    DfsCache dfs;
    std::vector<BranchCache> branch;
    std::vector<float> concat;
    std::vector<float> pre_hidden, hidden;
    std::vector<float> logits, probs;
};

inline std::vector<float> branch_forward(const BranchNet& br, const FeatureMap& share,
                                         BranchCache* cache = nullptr) {
    FeatureMap pre1 = br.c1.forward(share);
    FeatureMap act1 = relu(pre1);
    FeatureMap pre2 = br.c2.forward(act1);
    FeatureMap act2 = relu(pre2);
    std::vector<float> pooled = global_avg_pool(act2);
    std::vector<float> embedding = br.emb.forward(pooled);
    if (cache) {
        cache->share = share;
        cache->pre1 = std::move(pre1);
        cache->act1 = std::move(act1);
        cache->pre2 = std::move(pre2);
        cache->act2 = std::move(act2);
        cache->pooled = pooled;
        cache->embedding = embedding;
    }
    return embedding;
}

inline std::vector<float> fuse_embeddings(const ModelBundle& b,
                                          const std::vector<float>& concat,
                                          FullCache* cache = nullptr) {
    std::vector<float> pre_h = b.fusion1.forward(concat);
    std::vector<float> h = relu_vec(pre_h);
    std::vector<float> logits = b.fusion2.forward(h);
    std::vector<float> probs = softmax(logits);
    if (cache) {
        cache->concat = concat;
        cache->pre_hidden = std::move(pre_h);
        cache->hidden = std::move(h);
        cache->logits = std::move(logits);
        cache->probs = probs;
    }
    return probs;
}

inline std::vector<float> forward_full(const ModelBundle& b, const FeatureMap& x,
                                       int policy_idx, std::uint64_t nonce,
                                       FullCache* cache = nullptr) {
    const DfsPolicy& policy = b.family.policies.at(policy_idx);
    FeatureMap z = b.encoder.forward(x);
    std::vector<Share> shares =
        dfs_forward(z, policy, b.cfg, nonce, cache ? &cache->dfs : nullptr);

    const int n = b.cfg.num_branches;
    std::vector<float> concat;
    concat.reserve(static_cast<std::size_t>(n) * b.arch.emb_dim);
    if (cache) {
        cache->input = x;
        cache->encoded = std::move(z);
        cache->policy_idx = policy_idx;
        cache->branch.resize(n);
    }
    for (int i = 0; i < n; ++i) {
        std::vector<float> emb = branch_forward(b.branches[i], shares[i].features,
                                                cache ? &cache->branch[i] : nullptr);
        concat.insert(concat.end(), emb.begin(), emb.end());
    }
    return fuse_embeddings(b, concat, cache);
}

struct FullGrads {
    std::vector<float> enc_w, enc_b;
    struct Branch {
        std::vector<float> c1w, c1b, c2w, c2b, ew, eb;
    };
    std::vector<Branch> br;
    std::vector<float> f1w, f1b, f2w, f2b;
    std::vector<float> dfs_kernel, dfs_mix;

    void init(const ModelBundle& m) {
        enc_w.assign(m.encoder.w.size(), 0.0f);
        enc_b.assign(m.encoder.b.size(), 0.0f);
        br.resize(m.branches.size());
        for (std::size_t i = 0; i < m.branches.size(); ++i) {
            br[i].c1w.assign(m.branches[i].c1.w.size(), 0.0f);
            br[i].c1b.assign(m.branches[i].c1.b.size(), 0.0f);
            br[i].c2w.assign(m.branches[i].c2.w.size(), 0.0f);
            br[i].c2b.assign(m.branches[i].c2.b.size(), 0.0f);
            br[i].ew.assign(m.branches[i].emb.w.size(), 0.0f);
            br[i].eb.assign(m.branches[i].emb.b.size(), 0.0f);
        }
        f1w.assign(m.fusion1.w.size(), 0.0f);
        f1b.assign(m.fusion1.b.size(), 0.0f);
        f2w.assign(m.fusion2.w.size(), 0.0f);
        f2b.assign(m.fusion2.b.size(), 0.0f);
        const DfsPolicy& p = m.family.policies.front();
        dfs_kernel.assign(p.depthwise_kernel.size(), 0.0f);
        dfs_mix.assign(p.mix_matrix.size(), 0.0f);
    }
};

inline void scale_blob(std::vector<float>& v, float s) {
    for (auto& x : v) x *= s;
}

inline void scale_grads(FullGrads& g, float s) {
    scale_blob(g.enc_w, s);
    scale_blob(g.enc_b, s);
    for (auto& b : g.br) {
        scale_blob(b.c1w, s);
        scale_blob(b.c1b, s);
        scale_blob(b.c2w, s);
        scale_blob(b.c2b, s);
        scale_blob(b.ew, s);
        scale_blob(b.eb, s);
    }
    scale_blob(g.f1w, s);
    scale_blob(g.f1b, s);
    scale_blob(g.f2w, s);
    scale_blob(g.f2b, s);
    scale_blob(g.dfs_kernel, s);
    scale_blob(g.dfs_mix, s);
}

// Clips the defender-learnable gradients (encoder, depthwise kernel, mix
// matrix) to a global L2 norm. Returns the pre-clip norm. A non-finite norm
// zeroes the gradients so one bad batch cannot poison the weights.
inline double clip_defender_grads(FullGrads& g, double max_norm) {
    double sq = 0.0;
    auto add = [&](const std::vector<float>& v) {
        for (float x : v) sq += static_cast<double>(x) * x;
    };
    add(g.enc_w);
    add(g.enc_b);
    add(g.dfs_kernel);
    add(g.dfs_mix);
    const double norm = std::sqrt(sq);
    auto rescale = [&](std::vector<float>& v, float s) {
        for (auto& x : v) x *= s;
    };
    if (!std::isfinite(norm)) {
        rescale(g.enc_w, 0.0f);
        rescale(g.enc_b, 0.0f);
        rescale(g.dfs_kernel, 0.0f);
        rescale(g.dfs_mix, 0.0f);
        return norm;
    }
    if (max_norm > 0.0 && norm > max_norm) {
        const float s = static_cast<float>(max_norm / norm);
        rescale(g.enc_w, s);
        rescale(g.enc_b, s);
        rescale(g.dfs_kernel, s);
        rescale(g.dfs_mix, s);
    }
    return norm;
}

// Accumulates exact cross-entropy gradients for every learnable parameter.
// extra_share_grads, when present, is added to the per-branch share gradient
// (used by the adversarial-training loop to inject the inverter path), and
// extra_loss_only skips the task path entirely.
inline void backward_full(const ModelBundle& b, const FullCache& cache, int label,
                          FullGrads& g,
                          const std::vector<FeatureMap>* extra_share_grads = nullptr,
                          bool task_path = true) {
    const int n = b.cfg.num_branches;
    const int emb_dim = b.arch.emb_dim;
    std::vector<FeatureMap> share_grads(n);
    for (int i = 0; i < n; ++i)
        share_grads[i] = FeatureMap(cache.branch[i].share.channels,
                                    cache.branch[i].share.height,
                                    cache.branch[i].share.width);

    if (task_path) {
        std::vector<float> glogits = softmax_ce_grad(cache.probs, label);
        std::vector<float> gh = b.fusion2.backward(cache.hidden, glogits, g.f2w, g.f2b);
        for (std::size_t i = 0; i < gh.size(); ++i)
            if (cache.pre_hidden[i] <= 0.0f) gh[i] = 0.0f;
        std::vector<float> gconcat = b.fusion1.backward(cache.concat, gh, g.f1w, g.f1b);

        for (int i = 0; i < n; ++i) {
            const BranchCache& bc = cache.branch[i];
            std::vector<float> gemb(gconcat.begin() + i * emb_dim,
                                    gconcat.begin() + (i + 1) * emb_dim);
            std::vector<float> gpool =
                b.branches[i].emb.backward(bc.pooled, gemb, g.br[i].ew, g.br[i].eb);
            FeatureMap gact2 = global_avg_pool_backward(
                bc.act2.channels, bc.act2.height, bc.act2.width, gpool);
            FeatureMap gpre2 = relu_backward(bc.pre2, gact2);
            FeatureMap gact1 =
                b.branches[i].c2.backward(bc.act1, gpre2, g.br[i].c2w, g.br[i].c2b);
            FeatureMap gpre1 = relu_backward(bc.pre1, gact1);
            share_grads[i] =
                b.branches[i].c1.backward(bc.share, gpre1, g.br[i].c1w, g.br[i].c1b);
        }
    }

    if (extra_share_grads) {
        for (int i = 0; i < n; ++i)
            for (std::size_t p = 0; p < share_grads[i].size(); ++p)
                share_grads[i].data[p] += (*extra_share_grads)[i].data[p];
    }

    const DfsPolicy& policy = b.family.policies.at(cache.policy_idx);
    DfsGrads dg = dfs_backward(cache.dfs, share_grads, policy, b.cfg);
    for (std::size_t i = 0; i < dg.depthwise_kernel.size(); ++i)
        g.dfs_kernel[i] += dg.depthwise_kernel[i];
    for (std::size_t i = 0; i < dg.mix_matrix.size(); ++i)
        g.dfs_mix[i] += dg.mix_matrix[i];

    // dummy buffers are not needed: encoder grads accumulate directly
    b.encoder.backward(cache.input, dg.input, g.enc_w, g.enc_b);
}

// ---- optimizer --------------------------------------------------------

struct OptState {
    FullGrads v;  // velocity buffers, same layout as the gradients
    bool initialized = false;
    void ensure(const ModelBundle& m) {
        if (!initialized) {
            v.init(m);
            initialized = true;
        }
    }
};

inline void apply_task_sgd(ModelBundle& m, const FullGrads& g, OptState& opt,
                           float lr, float momentum) {
    opt.ensure(m);
    sgd_update(m.encoder.w, g.enc_w, opt.v.enc_w, lr, momentum);
    sgd_update(m.encoder.b, g.enc_b, opt.v.enc_b, lr, momentum);
    for (std::size_t i = 0; i < m.branches.size(); ++i) {
        sgd_update(m.branches[i].c1.w, g.br[i].c1w, opt.v.br[i].c1w, lr, momentum);
        sgd_update(m.branches[i].c1.b, g.br[i].c1b, opt.v.br[i].c1b, lr, momentum);
        sgd_update(m.branches[i].c2.w, g.br[i].c2w, opt.v.br[i].c2w, lr, momentum);
        sgd_update(m.branches[i].c2.b, g.br[i].c2b, opt.v.br[i].c2b, lr, momentum);
        sgd_update(m.branches[i].emb.w, g.br[i].ew, opt.v.br[i].ew, lr, momentum);
        sgd_update(m.branches[i].emb.b, g.br[i].eb, opt.v.br[i].eb, lr, momentum);
    }
    sgd_update(m.fusion1.w, g.f1w, opt.v.f1w, lr, momentum);
    sgd_update(m.fusion1.b, g.f1b, opt.v.f1b, lr, momentum);
    sgd_update(m.fusion2.w, g.f2w, opt.v.f2w, lr, momentum);
    sgd_update(m.fusion2.b, g.f2b, opt.v.f2b, lr, momentum);
}

// The AT learnable set: encoder, depthwise kernel, mix matrix.
inline void apply_defender_sgd(ModelBundle& m, const FullGrads& g, OptState& opt,
                               float lr, float momentum) {
    opt.ensure(m);
    sgd_update(m.encoder.w, g.enc_w, opt.v.enc_w, lr, momentum);
    sgd_update(m.encoder.b, g.enc_b, opt.v.enc_b, lr, momentum);
    DfsPolicy& p = m.family.policies.front();
    sgd_update(p.depthwise_kernel, g.dfs_kernel, opt.v.dfs_kernel, lr, momentum);
    sgd_update(p.mix_matrix, g.dfs_mix, opt.v.dfs_mix, lr, momentum);
}

// ---- training / evaluation --------------------------------------------

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
};

inline TrainLog train_task(ModelBundle& m, const std::vector<Sample>& data,
                           const TrainConfig& cfg) {
    cfg.validate();
    require(!data.empty(), "train_task: empty dataset");
    Rng rng(cfg.seed);
    OptState opt;
    TrainLog log;
    const int n = static_cast<int>(data.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int e = 0; e < cfg.epochs; ++e) {
        for (int i = n - 1; i >= 1; --i) {
            const int j =
                static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
            std::swap(order[i], order[j]);
        }
        double total_loss = 0.0;
        int correct = 0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int end = std::min(n, start + cfg.batch_size);
            const int policy_idx = sample_policy(m.family, rng);
            FullGrads grads;
            grads.init(m);
            for (int s = start; s < end; ++s) {
                const Sample& sample = data[order[s]];
                const std::uint64_t nonce = rng.next();
                FullCache cache;
                std::vector<float> probs =
                    forward_full(m, sample.image, policy_idx, nonce, &cache);
                total_loss += cross_entropy(probs, sample.label);
                int pred = 0;
                for (std::size_t c = 1; c < probs.size(); ++c)
                    if (probs[c] > probs[pred]) pred = static_cast<int>(c);
                if (pred == sample.label) ++correct;
                backward_full(m, cache, sample.label, grads);
            }
            scale_grads(grads, 1.0f / static_cast<float>(end - start));
            apply_task_sgd(m, grads, opt, cfg.learning_rate, cfg.momentum);
        }
        log.epochs.push_back(
            {e, total_loss / n, static_cast<double>(correct) / n});
    }
    m.epochs_trained += cfg.epochs;
    return log;
}

inline double evaluate_accuracy(const ModelBundle& m, const std::vector<Sample>& data,
                                int policy_idx, std::uint64_t nonce_seed) {
    require(!data.empty(), "evaluate_accuracy: empty dataset");
    Rng rng(nonce_seed);
    int correct = 0;
    for (const Sample& s : data) {
        std::vector<float> probs = forward_full(m, s.image, policy_idx, rng.next());
        int pred = 0;
        for (std::size_t c = 1; c < probs.size(); ++c)
            if (probs[c] > probs[pred]) pred = static_cast<int>(c);
        if (pred == s.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Freezes the bundle and trains a fresh linear softmax head on one branch's
// embedding (branch_id = -1 probes the concatenation of all branches).
inline double single_share_probe(const ModelBundle& m,
                                 const std::vector<Sample>& train,
                                 const std::vector<Sample>& test, int branch_id,
                                 std::uint64_t seed, int probe_epochs = 40) {
    require(branch_id >= -1 && branch_id < m.cfg.num_branches,
            "single_share_probe: bad branch id");
    Rng rng(seed);
    auto embed = [&](const Sample& s) {
        FullCache cache;
        forward_full(m, s.image, 0, rng.next(), &cache);
        if (branch_id >= 0) return cache.branch[branch_id].embedding;
        std::vector<float> cc;
        for (const auto& bc : cache.branch)
            cc.insert(cc.end(), bc.embedding.begin(), bc.embedding.end());
        return cc;
    };

    std::vector<std::vector<float>> xtr, xte;
    xtr.reserve(train.size());
    xte.reserve(test.size());
    for (const auto& s : train) xtr.push_back(embed(s));
    for (const auto& s : test) xte.push_back(embed(s));

    const int dim = static_cast<int>(xtr.front().size());
    Dense head(dim, m.arch.classes, rng);
    std::vector<float> vw(head.w.size(), 0.0f), vb(head.b.size(), 0.0f);
    const int bs = 32;
    const int ntr = static_cast<int>(train.size());
    std::vector<int> order(ntr);
    for (int i = 0; i < ntr; ++i) order[i] = i;
    for (int e = 0; e < probe_epochs; ++e) {
        for (int i = ntr - 1; i >= 1; --i) {
            const int j =
                static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
            std::swap(order[i], order[j]);
        }
        for (int start = 0; start < ntr; start += bs) {
            const int end = std::min(ntr, start + bs);
            std::vector<float> gw(head.w.size(), 0.0f), gb(head.b.size(), 0.0f);
            for (int s = start; s < end; ++s) {
                const auto& x = xtr[order[s]];
                std::vector<float> probs = softmax(head.forward(x));
                std::vector<float> gl = softmax_ce_grad(probs, train[order[s]].label);
                head.backward(x, gl, gw, gb);
            }
            const float inv = 1.0f / static_cast<float>(end - start);
            for (auto& v : gw) v *= inv;
            for (auto& v : gb) v *= inv;
            sgd_update(head.w, gw, vw, 0.1f, 0.9f);
            sgd_update(head.b, gb, vb, 0.1f, 0.9f);
        }
    }
    int correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        std::vector<float> probs = softmax(head.forward(xte[i]));
        int pred = 0;
        for (std::size_t c = 1; c < probs.size(); ++c)
            if (probs[c] > probs[pred]) pred = static_cast<int>(c);
        if (pred == test[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

// ---- FLOPs accounting (closed form; matches the instrumented counter) --

struct FlopsReport {
    std::int64_t client_encoder = 0;
    std::int64_t client_dfs = 0;
    std::int64_t client_fusion = 0;
    std::int64_t server_branch = 0;   // one branch
    std::int64_t deep_split_client = 0;  // encoder + all branch stacks
    std::int64_t client_total() const { return client_encoder + client_dfs; }
};

inline std::int64_t conv_flops(int in_c, int out_c, int k, int h, int w) {
    return 2LL * in_c * out_c * k * k * h * w;
}

inline FlopsReport flops_count(const ModelBundle& m) {
    const ModelArch& a = m.arch;
    const DfsConfig& c = m.cfg;
    const int hw = c.height * c.width;
    FlopsReport r;
    r.client_encoder =
        conv_flops(a.in_channels, a.enc_channels, a.enc_kernel, c.height, c.width);
    std::int64_t dfs = 0;
    if (c.use_loc_conf) dfs += 2LL * c.kernel_size * c.kernel_size * a.enc_channels * hw;
    if (c.use_ortho) dfs += 2LL * a.enc_channels * a.enc_channels * hw;
    if (c.use_ada_noise && c.noise_scale > 0.0f) dfs += 4LL * a.enc_channels * hw;
    if (c.use_cross_mix)
        dfs += 2LL * c.num_branches * c.num_branches *
               (a.enc_channels / c.num_branches) * hw;
    r.client_dfs = dfs;
    const int cb = a.enc_channels / c.num_branches;
    r.server_branch =
        conv_flops(cb, a.branch_width, a.branch_kernel, c.height, c.width) +
        conv_flops(a.branch_width, a.branch_width, a.branch_kernel, c.height, c.width) +
        2LL * a.branch_width * hw +                 // global average pool
        2LL * a.branch_width * a.emb_dim;           // embedding dense
    r.client_fusion = 2LL * (c.num_branches * a.emb_dim) * a.fusion_hidden +
                      2LL * a.fusion_hidden * a.classes;
    r.deep_split_client =
        r.client_encoder + c.num_branches * r.server_branch;
    return r;
}

}  // namespace privdfs
