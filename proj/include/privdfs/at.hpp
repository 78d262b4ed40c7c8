#pragma once

#include <cstdint>
#include <vector>

#include "privdfs/attack.hpp"
#include "privdfs/metrics.hpp"
#include "privdfs/model.hpp"

namespace privdfs {

struct AtConfig {
    float lambda = 1.0f;
    int rounds = 5;
    int defender_epochs = 3;
    float learning_rate = 0.01f;
    float momentum = 0.9f;
    int batch_size = 32;
    float clip_norm = 5.0f;  // global-norm gradient clip; 0 disables
    std::uint64_t seed = 11;

    void validate() const {
        require(lambda >= 0.0f, "AtConfig: lambda must be >= 0");
        require(rounds >= 1 && defender_epochs >= 1, "AtConfig: bad counts");
        require(clip_norm >= 0.0f, "AtConfig: clip_norm must be >= 0");
    }
};

// Anti-reconstruction objective: (1/N) sum_i [SSIM(x, x~_i) - MSE(x, x~_i)],
// with the differentiable global-statistics SSIM.
inline double loss_ar(const FeatureMap& x,
                      const std::vector<FeatureMap>& reconstructions) {
    require(!reconstructions.empty(), "loss_ar: no reconstructions");
    double acc = 0.0;
    for (const auto& r : reconstructions) {
        require(r.same_shape(x), "loss_ar: shape mismatch");
        acc += ssim_global(x, r) - mse(x, r);
    }
    return acc / static_cast<double>(reconstructions.size());
}

// d loss_ar / d x~_i (the 1/N factor included).
inline std::vector<float> loss_ar_grad(const FeatureMap& x, const FeatureMap& recon,
                                       int num_branches) {
    std::vector<float> g = ssim_global_grad_y(x, recon);
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double dmse =
            2.0 * (static_cast<double>(recon.data[i]) - x.data[i]) / n;
        g[i] = static_cast<float>((g[i] - dmse) / num_branches);
    }
    return g;
}

inline double defender_loss(double task_loss, double ar_loss, double lambda) {
    return task_loss + lambda * ar_loss;
}

struct AtRoundLog {
    int round = 0;
    double accuracy = 0.0;
    double attacker_ssim = 0.0;
    double attacker_mse = 0.0;
};

struct AtResult {
    std::vector<AtRoundLog> rounds;
    double final_accuracy = 0.0;
    double final_ssim = 0.0;
    double final_mse = 0.0;
};

namespace detail {
inline std::vector<Inverter> refit_attackers(const ModelBundle& m,
                                             const std::vector<Sample>& data,
                                             std::uint64_t nonce_seed) {
    std::vector<Inverter> out;
    for (int b = 0; b < m.cfg.num_branches; ++b) {
        auto pairs = make_attack_pairs(m, data, 0, b, nonce_seed + b);
        out.push_back(fit_ridge(pairs, default_ridge_lambda(pairs), b));
    }
    return out;
}

inline void attacker_metrics(const ModelBundle& m, const std::vector<Inverter>& inv,
                             const std::vector<Sample>& eval_set,
                             std::uint64_t nonce_seed, double& mean_ssim,
                             double& mean_mse) {
    double st = 0.0, mt = 0.0;
    int count = 0;
    for (int b = 0; b < m.cfg.num_branches; ++b) {
        auto pairs = make_attack_pairs(m, eval_set, 0, b, nonce_seed ^ (0x9E37ULL + b));
        AttackReport rep = evaluate_attack(inv[b], pairs);
        st += rep.ssim_mean;
        mt += rep.mse_mean;
        ++count;
    }
    mean_ssim = st / count;
    mean_mse = mt / count;
}
}  // namespace detail

// PrivDFS-AT: alternate full ridge refits (per branch, full in-distribution
// data) with defender epochs on L_task + lambda * L_ar. Only the encoder,
// depthwise kernel and mix matrix move; attacker weights are frozen within
// each round.
inline AtResult at_train(ModelBundle& m, const std::vector<Sample>& train,
                         const std::vector<Sample>& eval_set, const AtConfig& cfg) {
    cfg.validate();
    require(m.epochs_trained > 0, "at_train: bundle must be pretrained");
    Rng rng(cfg.seed);
    OptState opt;
    AtResult result;
    const int n = static_cast<int>(train.size());
    const int nb = m.cfg.num_branches;
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int round = 0; round < cfg.rounds; ++round) {
        std::vector<Inverter> attackers =
            detail::refit_attackers(m, train, rng.next());

        AtRoundLog log;
        log.round = round;
        detail::attacker_metrics(m, attackers, eval_set, rng.next(),
                                 log.attacker_ssim, log.attacker_mse);
        log.accuracy = evaluate_accuracy(m, eval_set, 0, 0xE7A1u + round);
        result.rounds.push_back(log);

        for (int e = 0; e < cfg.defender_epochs; ++e) {
            for (int i = n - 1; i >= 1; --i) {
                const int j = static_cast<int>(
                    rng.next() % static_cast<std::uint64_t>(i + 1));
                std::swap(order[i], order[j]);
            }
            for (int start = 0; start < n; start += cfg.batch_size) {
                const int end = std::min(n, start + cfg.batch_size);
                FullGrads grads;
                grads.init(m);
                for (int s = start; s < end; ++s) {
                    const Sample& sample = train[order[s]];
                    FullCache cache;
                    forward_full(m, sample.image, 0, rng.next(), &cache);

                    std::vector<FeatureMap> extra(nb);
                    for (int b = 0; b < nb; ++b) {
                        const FeatureMap& share = cache.branch[b].share;
                        std::vector<float> flat(share.data.begin(),
                                                share.data.end());
                        std::vector<float> rec = attackers[b].reconstruct(flat);
                        FeatureMap recon(sample.image.channels,
                                         sample.image.height, sample.image.width);
                        recon.data = rec;
                        std::vector<float> gx =
                            loss_ar_grad(sample.image, recon, nb);
                        for (auto& v : gx) v *= cfg.lambda;
                        // pull the gradient back through the linear inverter
                        extra[b] = FeatureMap(share.channels, share.height,
                                              share.width);
                        const int din = attackers[b].d_in;
                        const int dout = attackers[b].d_out;
                        for (int i2 = 0; i2 < din; ++i2) {
                            const float* row =
                                attackers[b].w.data() +
                                static_cast<std::size_t>(i2) * dout;
                            double acc = 0.0;
                            for (int j2 = 0; j2 < dout; ++j2)
                                acc += static_cast<double>(row[j2]) * gx[j2];
                            extra[b].data[i2] = static_cast<float>(acc);
                        }
                    }
                    backward_full(m, cache, sample.label, grads, &extra);
                }
                scale_grads(grads, 1.0f / static_cast<float>(end - start));
                clip_defender_grads(grads, cfg.clip_norm);
                apply_defender_sgd(m, grads, opt, cfg.learning_rate, cfg.momentum);
            }
        }
    }

    std::vector<Inverter> final_attackers =
        detail::refit_attackers(m, train, rng.next());
    detail::attacker_metrics(m, final_attackers, eval_set, rng.next(),
                             result.final_ssim, result.final_mse);
    result.final_accuracy = evaluate_accuracy(m, eval_set, 0, 0xF00Du);
    return result;
}

}  // namespace privdfs
