#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "privdfs/dataio.hpp"
#include "privdfs/metrics.hpp"
#include "privdfs/model.hpp"

namespace privdfs {

// One (flattened share, target image) training pair for an inverter.
struct AttackPair {
    std::vector<float> share;
    FeatureMap image;
};

struct InverterTrainConfig {
    int hidden = 128;
    int epochs = 30;
    float learning_rate = 0.01f;
    int batch_size = 32;
    std::uint64_t seed = 7;
};

struct Inverter {
    enum class Kind { Ridge, Mlp };
    Kind kind = Kind::Ridge;
    int branch_id = 0;
    int d_in = 0;   // share dimension, bias not included
    int d_out = 0;  // pixel dimension
    std::vector<float> w;  // ridge: (d_in + 1) x d_out, row-major by input
    Dense l1, l2;          // mlp

    std::vector<float> reconstruct(const std::vector<float>& share) const {
        if (kind == Kind::Ridge) {
            std::vector<double> out(d_out, 0.0);
            for (int i = 0; i < d_in; ++i) {
                const float s = share[i];
                if (s == 0.0f) continue;
                const float* row = w.data() + static_cast<std::size_t>(i) * d_out;
                for (int j = 0; j < d_out; ++j) out[j] += static_cast<double>(s) * row[j];
            }
            const float* bias = w.data() + static_cast<std::size_t>(d_in) * d_out;
            std::vector<float> res(d_out);
            for (int j = 0; j < d_out; ++j)
                res[j] = static_cast<float>(out[j] + bias[j]);
            return res;
        }
        return l2.forward(relu_vec(l1.forward(share)));
    }
};

// In-place Cholesky solve of (symmetric positive definite) M X = B, where M is
// d x d and B is d x p, both row-major doubles.
inline void cholesky_solve(std::vector<double>& m, std::vector<double>& b, int d,
                           int p) {
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = m[static_cast<std::size_t>(i) * d + j];
            for (int k = 0; k < j; ++k)
                sum -= m[static_cast<std::size_t>(i) * d + k] *
                       m[static_cast<std::size_t>(j) * d + k];
            if (i == j) {
                if (sum <= 0.0)
                    throw std::runtime_error("cholesky: matrix not positive definite");
                m[static_cast<std::size_t>(i) * d + j] = std::sqrt(sum);
            } else {
                m[static_cast<std::size_t>(i) * d + j] =
                    sum / m[static_cast<std::size_t>(j) * d + j];
            }
        }
    }
    // forward substitution L Y = B, then back substitution L^T X = Y
    for (int col = 0; col < p; ++col) {
        for (int i = 0; i < d; ++i) {
            double sum = b[static_cast<std::size_t>(i) * p + col];
            for (int k = 0; k < i; ++k)
                sum -= m[static_cast<std::size_t>(i) * d + k] *
                       b[static_cast<std::size_t>(k) * p + col];
            b[static_cast<std::size_t>(i) * p + col] =
                sum / m[static_cast<std::size_t>(i) * d + i];
        }
        for (int i = d - 1; i >= 0; --i) {
            double sum = b[static_cast<std::size_t>(i) * p + col];
            for (int k = i + 1; k < d; ++k)
                sum -= m[static_cast<std::size_t>(k) * d + i] *
                       b[static_cast<std::size_t>(k) * p + col];
            b[static_cast<std::size_t>(i) * p + col] =
                sum / m[static_cast<std::size_t>(i) * d + i];
        }
    }
}

// Scale-free default regularizer: 1e-3 * trace(A^T A) / d.
inline double default_ridge_lambda(const std::vector<AttackPair>& pairs) {
    double tr = 0.0;
    const int d = static_cast<int>(pairs.front().share.size());
    for (const auto& p : pairs)
        for (float v : p.share) tr += static_cast<double>(v) * v;
    return 1e-3 * tr / d;
}

// Closed-form ridge inverter: W = (A^T A + lambda I)^-1 A^T B on flattened
// shares A (bias via column augmentation) and images B, solved by Cholesky.
inline Inverter fit_ridge(const std::vector<AttackPair>& pairs, double lambda,
                          int branch_id = 0) {
    require(!pairs.empty(), "fit_ridge: no pairs");
    require(lambda > 0.0, "fit_ridge: lambda must be > 0");
    const int d = static_cast<int>(pairs.front().share.size());
    const int da = d + 1;
    const int p = static_cast<int>(pairs.front().image.size());

    std::vector<double> ata(static_cast<std::size_t>(da) * da, 0.0);
    std::vector<double> atb(static_cast<std::size_t>(da) * p, 0.0);
    std::vector<double> row(da);
    for (const auto& pr : pairs) {
        for (int i = 0; i < d; ++i) row[i] = pr.share[i];
        row[d] = 1.0;
        for (int i = 0; i < da; ++i) {
            const double ri = row[i];
            if (ri == 0.0) continue;
            double* arow = ata.data() + static_cast<std::size_t>(i) * da;
            for (int j = i; j < da; ++j) arow[j] += ri * row[j];
            double* brow = atb.data() + static_cast<std::size_t>(i) * p;
            for (int j = 0; j < p; ++j)
                brow[j] += ri * static_cast<double>(pr.image.data[j]);
        }
    }
    for (int i = 0; i < da; ++i) {
        for (int j = 0; j < i; ++j)
            ata[static_cast<std::size_t>(i) * da + j] =
                ata[static_cast<std::size_t>(j) * da + i];
        ata[static_cast<std::size_t>(i) * da + i] += lambda;
    }
    cholesky_solve(ata, atb, da, p);

    Inverter inv;
    inv.kind = Inverter::Kind::Ridge;
    inv.branch_id = branch_id;
    inv.d_in = d;
    inv.d_out = p;
    inv.w.resize(static_cast<std::size_t>(da) * p);
    for (std::size_t i = 0; i < inv.w.size(); ++i)
        inv.w[i] = static_cast<float>(atb[i]);
    return inv;
}

inline Inverter fit_mlp_inverter(const std::vector<AttackPair>& pairs,
                                 const InverterTrainConfig& cfg, int branch_id = 0) {
    require(!pairs.empty(), "fit_mlp_inverter: no pairs");
    const int d = static_cast<int>(pairs.front().share.size());
    const int p = static_cast<int>(pairs.front().image.size());
    Rng rng(cfg.seed);
    Inverter inv;
    inv.kind = Inverter::Kind::Mlp;
    inv.branch_id = branch_id;
    inv.d_in = d;
    inv.d_out = p;
    inv.l1 = Dense(d, cfg.hidden, rng);
    inv.l2 = Dense(cfg.hidden, p, rng);

    std::vector<float> v1w(inv.l1.w.size(), 0.0f), v1b(inv.l1.b.size(), 0.0f);
    std::vector<float> v2w(inv.l2.w.size(), 0.0f), v2b(inv.l2.b.size(), 0.0f);
    const int n = static_cast<int>(pairs.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int e = 0; e < cfg.epochs; ++e) {
        for (int i = n - 1; i >= 1; --i) {
            const int j =
                static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
            std::swap(order[i], order[j]);
        }
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int end = std::min(n, start + cfg.batch_size);
            std::vector<float> g1w(inv.l1.w.size(), 0.0f), g1b(inv.l1.b.size(), 0.0f);
            std::vector<float> g2w(inv.l2.w.size(), 0.0f), g2b(inv.l2.b.size(), 0.0f);
            for (int s = start; s < end; ++s) {
                const auto& pr = pairs[order[s]];
                std::vector<float> pre = inv.l1.forward(pr.share);
                std::vector<float> h = relu_vec(pre);
                std::vector<float> y = inv.l2.forward(h);
                std::vector<float> gy(p);
                for (int j = 0; j < p; ++j)
                    gy[j] = 2.0f * (y[j] - pr.image.data[j]) / static_cast<float>(p);
                std::vector<float> gh = inv.l2.backward(h, gy, g2w, g2b);
                for (int j = 0; j < cfg.hidden; ++j)
                    if (pre[j] <= 0.0f) gh[j] = 0.0f;
                inv.l1.backward(pr.share, gh, g1w, g1b);
            }
            const float invn = 1.0f / static_cast<float>(end - start);
            for (auto& x : g1w) x *= invn;
            for (auto& x : g1b) x *= invn;
            for (auto& x : g2w) x *= invn;
            for (auto& x : g2b) x *= invn;
            sgd_update(inv.l1.w, g1w, v1w, cfg.learning_rate, 0.9f);
            sgd_update(inv.l1.b, g1b, v1b, cfg.learning_rate, 0.9f);
            sgd_update(inv.l2.w, g2w, v2w, cfg.learning_rate, 0.9f);
            sgd_update(inv.l2.b, g2b, v2b, cfg.learning_rate, 0.9f);
        }
    }
    return inv;
}

struct AttackReport {
    int level = 0;
    std::uint32_t key_id = 0;
    int branch_id = 0;
    int samples = 0;
    double psnr_mean = 0.0, psnr_std = 0.0;
    double ssim_mean = 0.0, ssim_std = 0.0;
    double mse_mean = 0.0, mse_std = 0.0;
    double lpips_reserved = -1.0;  // schema placeholder, never populated

    // Line record, fixed field order.
    std::string to_record() const {
        std::ostringstream os;
        os.setf(std::ios::fixed);
        os.precision(6);
        os << "attack-report v1"
           << " level=" << level << " key=" << key_id << " branch=" << branch_id
           << " n=" << samples << " psnr=" << psnr_mean << " psnr_std=" << psnr_std
           << " ssim=" << ssim_mean << " ssim_std=" << ssim_std
           << " mse=" << mse_mean << " mse_std=" << mse_std
           << " lpips=" << lpips_reserved;
        return os.str();
    }
};

// Produces (share, image) pairs by querying the real client pipeline.
// branch_count > 1 concatenates the lowest branch ids (compromise mode).
inline std::vector<AttackPair> make_attack_pairs(const ModelBundle& m,
                                                 const std::vector<Sample>& data,
                                                 int policy_idx, int branch_id,
                                                 std::uint64_t nonce_seed,
                                                 int branch_count = 1) {
    Rng rng(nonce_seed);
    const DfsPolicy& policy = m.family.policies.at(policy_idx);
    std::vector<AttackPair> pairs;
    pairs.reserve(data.size());
    for (const Sample& s : data) {
        FeatureMap z = m.encoder.forward(s.image);
        std::vector<Share> shares = dfs_forward(z, policy, m.cfg, rng.next());
        AttackPair p;
        for (int b = branch_id; b < branch_id + branch_count; ++b) {
            const auto& f = shares.at(b).features;
            p.share.insert(p.share.end(), f.data.begin(), f.data.end());
        }
        p.image = s.image;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

// Split-inference baseline pairs: the raw encoder output, no DFS.
inline std::vector<AttackPair> make_baseline_pairs(const ModelBundle& m,
                                                   const std::vector<Sample>& data) {
    std::vector<AttackPair> pairs;
    pairs.reserve(data.size());
    for (const Sample& s : data) {
        FeatureMap z = m.encoder.forward(s.image);
        AttackPair p;
        p.share.assign(z.data.begin(), z.data.end());
        p.image = s.image;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

inline AttackReport evaluate_attack(const Inverter& inv,
                                    const std::vector<AttackPair>& eval_pairs,
                                    int level = 0, std::uint32_t key_id = 0) {
    require(!eval_pairs.empty(), "evaluate_attack: empty eval set");
    AttackReport rep;
    rep.level = level;
    rep.key_id = key_id;
    rep.branch_id = inv.branch_id;
    rep.samples = static_cast<int>(eval_pairs.size());
    std::vector<double> psnrs, ssims, mses;
    for (const auto& pr : eval_pairs) {
        std::vector<float> rec = inv.reconstruct(pr.share);
        FeatureMap recon(pr.image.channels, pr.image.height, pr.image.width);
        recon.data = rec;
        psnrs.push_back(psnr(pr.image, recon));
        ssims.push_back(ssim(pr.image, recon));
        mses.push_back(mse(pr.image, recon));
    }
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        double s = 0.0;
        for (double x : v) s += x;
        mean = s / v.size();
        double q = 0.0;
        for (double x : v) q += (x - mean) * (x - mean);
        sd = std::sqrt(q / v.size());
    };
    mean_std(psnrs, rep.psnr_mean, rep.psnr_std);
    mean_std(ssims, rep.ssim_mean, rep.ssim_std);
    mean_std(mses, rep.mse_mean, rep.mse_std);
    return rep;
}

// Honest-majority compromise: fit a ridge inverter on the concatenation of a
// fraction of the shares. Fractions above 1/2 violate the threat model and
// require the diagnostic override.
inline AttackReport compromise_scenario(const ModelBundle& m,
                                        const std::vector<Sample>& attacker_train,
                                        const std::vector<Sample>& eval_set,
                                        double fraction, std::uint64_t nonce_seed,
                                        bool allow_over_half = false) {
    const int n = m.cfg.num_branches;
    const int compromised =
        static_cast<int>(std::lround(fraction * static_cast<double>(n)));
    require(compromised >= 1, "compromise_scenario: fraction selects no shares");
    if (!allow_over_half)
        require(2 * compromised <= n,
                "compromise_scenario: fraction violates honest majority");
    require(compromised <= n, "compromise_scenario: fraction exceeds share count");

    auto train_pairs =
        make_attack_pairs(m, attacker_train, 0, 0, nonce_seed, compromised);
    auto eval_pairs =
        make_attack_pairs(m, eval_set, 0, 0, nonce_seed ^ 0x517CC1B727220A95ULL,
                          compromised);
    Inverter inv = fit_ridge(train_pairs, default_ridge_lambda(train_pairs), 0);
    return evaluate_attack(inv, eval_pairs);
}

}  // namespace privdfs
