// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria share trained artifacts where the configurations agree;
// every empirical number is recomputed here from fixed seeds.
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "privdfs/at.hpp"
#include "privdfs/attack.hpp"
#include "privdfs/dataio.hpp"
#include "privdfs/dfs.hpp"
#include "privdfs/flops.hpp"
#include "privdfs/keyed.hpp"
#include "privdfs/model.hpp"
#include "privdfs/model_io.hpp"
#include "privdfs/transport.hpp"
#include "privdfs/wire.hpp"

using namespace privdfs;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %2d (%s): %s\n", ok ? "PASS" : "FAIL", idx,
                name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

// ---- shared experiment setup -------------------------------------------

// High-noise privacy configuration: used for the utility/privacy criteria.
constexpr float kSigmaHi = 8.0f;
constexpr float kAlphaHi = 0.0f;
// Moderate-noise configuration: used for AT, KD and threat-level criteria,
// where the attacker needs headroom for the measured drops.
constexpr float kSigmaMod = 0.5f;
constexpr float kAlphaMod = 0.25f;

constexpr int kTrainN = 1500;
constexpr int kTestN = 300;
constexpr std::uint64_t kDataSeed = 2024;
constexpr std::uint64_t kKeyA = 0x1234;
constexpr std::uint64_t kKeyB = 0xBEEFCAFE;
constexpr std::uint64_t kKeyC = 0x5EED5EED;
constexpr std::uint64_t kKeyD = 0xA11CE;
constexpr std::uint64_t kWeightSeed = 7;

struct Shared {
    std::vector<Sample> train, test;
    SynthSpec spec;

    std::unique_ptr<ModelBundle> m_hi;   // N=3, k=1, high noise
    std::unique_ptr<ModelBundle> m_hi6;  // N=6, k=1, high noise
    std::unique_ptr<ModelBundle> m_mod;  // N=3, k=1, moderate noise

    Shared() {
        spec.seed = kDataSeed;
        auto pool = synth_generate(spec, kTrainN + kTestN);
        train.assign(pool.begin(), pool.begin() + kTrainN);
        test.assign(pool.begin() + kTrainN, pool.end());
    }

    static DfsConfig dfs_config(float sigma, float alpha, int branches) {
        DfsConfig cfg;
        cfg.noise_scale = sigma;
        cfg.mix_alpha = alpha;
        cfg.num_branches = branches;
        return cfg;
    }

    ModelBundle train_bundle(float sigma, float alpha, int branches,
                             const std::vector<std::uint64_t>& keys, int epochs,
                             float lr) {
        ModelArch arch;
        ModelBundle m =
            make_bundle(arch, dfs_config(sigma, alpha, branches), keys, kWeightSeed);
        TrainConfig tc;
        tc.epochs = epochs;
        tc.learning_rate = lr;
        train_task(m, train, tc);
        return m;
    }

    const ModelBundle& hi() {
        if (!m_hi)
            m_hi = std::make_unique<ModelBundle>(
                train_bundle(kSigmaHi, kAlphaHi, 3, {kKeyA}, 16, 0.05f));
        return *m_hi;
    }
    const ModelBundle& hi6() {
        if (!m_hi6)
            m_hi6 = std::make_unique<ModelBundle>(
                train_bundle(kSigmaHi, kAlphaHi, 6, {kKeyA}, 16, 0.05f));
        return *m_hi6;
    }
    const ModelBundle& mod() {
        if (!m_mod)
            m_mod = std::make_unique<ModelBundle>(
                train_bundle(kSigmaMod, kAlphaMod, 3, {kKeyA}, 10, 0.05f));
        return *m_mod;
    }
};

double mean_branch_ssim(const ModelBundle& m, const std::vector<Sample>& fit_set,
                        const std::vector<Sample>& eval_set, std::uint64_t seed) {
    double acc = 0.0;
    for (int b = 0; b < m.cfg.num_branches; ++b) {
        auto trp = make_attack_pairs(m, fit_set, 0, b, seed + b);
        auto evp = make_attack_pairs(m, eval_set, 0, b, seed ^ (0xABCDull + b));
        Inverter inv = fit_ridge(trp, default_ridge_lambda(trp), b);
        acc += evaluate_attack(inv, evp).ssim_mean;
    }
    return acc / m.cfg.num_branches;
}

// ---- criterion 1: determinism ------------------------------------------

struct PipelineFingerprint {
    std::string model_bytes;
    std::vector<float> probs;
    std::string attack_record;
};

PipelineFingerprint run_pipeline_once(const Shared& sh) {
    ModelArch arch;
    DfsConfig cfg = Shared::dfs_config(0.5f, 0.25f, 3);
    ModelBundle m = make_bundle(arch, cfg, {kKeyA}, kWeightSeed);
    std::vector<Sample> tr(sh.train.begin(), sh.train.begin() + 300);
    TrainConfig tc;
    tc.epochs = 2;
    train_task(m, tr, tc);

    PipelineFingerprint fp;
    const auto path = std::filesystem::temp_directory_path() / "privdfs_acc_c1.bin";
    save_bundle(m, path.string());
    std::ifstream in(path, std::ios::binary);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    fp.model_bytes = bytes.str();
    std::filesystem::remove(path);

    Simulator sim(m);
    fp.probs = sim.infer(sh.test.front().image, 0, 42);

    std::vector<Sample> ev(sh.test.begin(), sh.test.begin() + 100);
    auto trp = make_attack_pairs(m, tr, 0, 0, 31);
    auto evp = make_attack_pairs(m, ev, 0, 0, 77);
    Inverter inv = fit_ridge(trp, default_ridge_lambda(trp), 0);
    fp.attack_record = evaluate_attack(inv, evp, 3, 0).to_record();
    return fp;
}

void criterion_1(const Shared& sh) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        PipelineFingerprint a = run_pipeline_once(sh);
        PipelineFingerprint b = run_pipeline_once(sh);
        const bool model_eq = a.model_bytes == b.model_bytes &&
                              !a.model_bytes.empty();
        const bool probs_eq = a.probs == b.probs;
        const bool report_eq = a.attack_record == b.attack_record;
        const double secs = elapsed_s(t0);
        report(1, "determinism",
               model_eq && probs_eq && report_eq && secs < 300.0,
               "model_bytes_equal=" + std::string(model_eq ? "yes" : "no") +
                   " probs_equal=" + (probs_eq ? "yes" : "no") +
                   " report_equal=" + (report_eq ? "yes" : "no") +
                   " runtime=" + fmt(secs, 1) + "s (limit 300s)");
    } catch (const std::exception& e) {
        report(1, "determinism", false, std::string("exception: ") + e.what());
    }
}

// ---- criterion 2: math oracles -----------------------------------------

bool check_orthogonality(std::string& why) {
    for (std::uint64_t seed : {3ULL, 71ULL, 0xDEADULL}) {
        const int c = 12;
        auto q = ortho_matrix(seed, c);
        double worst = 0.0;
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < c; ++j) {
                double dot = 0.0;
                for (int k = 0; k < c; ++k)
                    dot += static_cast<double>(q[i * c + k]) * q[j * c + k];
                worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
            }
        if (worst >= 1e-5) {
            why = "orthogonality max deviation " + fmt(worst, 8);
            return false;
        }
    }
    return true;
}

bool check_bijectivity(std::string& why) {
    DfsConfig cfg = Shared::dfs_config(0.0f, 0.25f, 3);
    DfsPolicy p = make_policy(kKeyA, cfg, 12, 0);
    FeatureMap s(4, 16, 16);
    Rng rng(99);
    for (auto& v : s.data) v = rng.uniform();
    // Channel permutation: exact per-map multiset equality.
    FeatureMap sp = chan_perm(s, p.chan_perms[0]);
    std::multiset<float> before(s.data.begin(), s.data.end());
    std::multiset<float> after(sp.data.begin(), sp.data.end());
    if (before != after) {
        why = "chan_perm multiset mismatch";
        return false;
    }
    // Patch reorganization: per-channel multiset equality.
    FeatureMap sr = patch_reorg(s, p.patch_shifts[0], cfg.patch_size);
    for (int c = 0; c < s.channels; ++c) {
        auto b0 = s.data.begin() + static_cast<std::ptrdiff_t>(c) * 256;
        auto b1 = sr.data.begin() + static_cast<std::ptrdiff_t>(c) * 256;
        if (std::multiset<float>(b0, b0 + 256) != std::multiset<float>(b1, b1 + 256)) {
            why = "patch_reorg multiset mismatch on channel " + std::to_string(c);
            return false;
        }
    }
    return true;
}

bool check_cross_mix_inverse(std::string& why) {
    const int n = 3;
    DfsConfig cfg = Shared::dfs_config(0.0f, 0.4f, n);
    DfsPolicy p = make_policy(kKeyB, cfg, 12, 0);
    Rng rng(5);
    std::vector<FeatureMap> shares;
    for (int b = 0; b < n; ++b) {
        FeatureMap f(4, 8, 8);
        for (auto& v : f.data) v = rng.uniform() - 0.5f;
        shares.push_back(f);
    }
    auto mixed = cross_mix(shares, p.mix_matrix);
    // Gauss-Jordan inverse of the mix matrix as the independent oracle.
    std::vector<double> a(n * 2 * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) a[i * 2 * n + j] = p.mix_matrix[i * n + j];
        a[i * 2 * n + n + i] = 1.0;
    }
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r2 = col + 1; r2 < n; ++r2)
            if (std::abs(a[r2 * 2 * n + col]) > std::abs(a[piv * 2 * n + col]))
                piv = r2;
        for (int j = 0; j < 2 * n; ++j) std::swap(a[col * 2 * n + j], a[piv * 2 * n + j]);
        const double d = a[col * 2 * n + col];
        for (int j = 0; j < 2 * n; ++j) a[col * 2 * n + j] /= d;
        for (int r2 = 0; r2 < n; ++r2) {
            if (r2 == col) continue;
            const double f = a[r2 * 2 * n + col];
            for (int j = 0; j < 2 * n; ++j) a[r2 * 2 * n + j] -= f * a[col * 2 * n + j];
        }
    }
    double worst = 0.0;
    for (int b = 0; b < n; ++b)
        for (std::size_t i = 0; i < shares[b].data.size(); ++i) {
            double rec = 0.0;
            for (int j = 0; j < n; ++j)
                rec += a[b * 2 * n + n + j] * mixed[j].data[i];
            worst = std::max(worst, std::abs(rec - shares[b].data[i]));
        }
    if (worst >= 1e-5) {
        why = "cross_mix inverse recovery error " + fmt(worst, 8);
        return false;
    }
    return true;
}

bool check_ridge_residual(std::string& why) {
    Rng rng(2718);
    std::vector<AttackPair> pairs;
    const int d = 10, p = 6, n = 40;
    for (int i = 0; i < n; ++i) {
        AttackPair pr;
        pr.share.resize(d);
        for (auto& v : pr.share) v = rng.uniform() - 0.5f;
        pr.image = FeatureMap(1, 2, 3);
        for (auto& v : pr.image.data) v = rng.uniform();
        (void)p;
        pairs.push_back(std::move(pr));
    }
    const double lambda = default_ridge_lambda(pairs);
    Inverter inv = fit_ridge(pairs, lambda, 0);
    // Normal-equation residual: ||(A^T A + lambda I) W - A^T B|| relative.
    const int da = d + 1;  // bias column
    std::vector<double> ata(da * da, 0.0), atb(da * inv.d_out, 0.0);
    for (const auto& pr : pairs) {
        std::vector<double> row(da);
        for (int i = 0; i < d; ++i) row[i] = pr.share[i];
        row[d] = 1.0;
        for (int i = 0; i < da; ++i) {
            for (int j = 0; j < da; ++j) ata[i * da + j] += row[i] * row[j];
            for (int j = 0; j < inv.d_out; ++j)
                atb[i * inv.d_out + j] += row[i] * pr.image.data[j];
        }
    }
    for (int i = 0; i < da; ++i) ata[i * da + i] += lambda;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < da; ++i)
        for (int j = 0; j < inv.d_out; ++j) {
            double lhs = 0.0;
            for (int k = 0; k < da; ++k)
                lhs += ata[i * da + k] * inv.w[k * inv.d_out + j];
            const double r = lhs - atb[i * inv.d_out + j];
            num += r * r;
            den += atb[i * inv.d_out + j] * atb[i * inv.d_out + j];
        }
    const double rel = std::sqrt(num / den);
    if (rel >= 1e-5) {
        why = "ridge normal-equation relative residual " + fmt(rel, 8);
        return false;
    }
    return true;
}

bool check_gradients(std::string& why) {
    // End-to-end finite-difference check through the full DFS backward path
    // (sigma = 0 so the loss is deterministic), L = sum(out^2)/2.
    DfsConfig cfg = Shared::dfs_config(0.0f, 0.3f, 2);
    cfg.height = cfg.width = 8;
    cfg.patch_size = 4;
    DfsPolicy pol = make_policy(kKeyC, cfg, 4, 0);
    FeatureMap x(4, 8, 8);
    Rng rng(31337);
    for (auto& v : x.data) v = rng.uniform() - 0.5f;

    auto loss_of = [&](const FeatureMap& in) {
        auto shares = dfs_forward(in, pol, cfg, 1);
        double l = 0.0;
        for (const auto& s : shares)
            for (float v : s.features.data) l += 0.5 * static_cast<double>(v) * v;
        return l;
    };

    DfsCache cache;
    auto shares = dfs_forward(x, pol, cfg, 1, &cache);
    std::vector<FeatureMap> gout;
    for (const auto& s : shares) gout.push_back(s.features);  // dL/dout = out
    DfsGrads grads = dfs_backward(cache, gout, pol, cfg);
    const FeatureMap& gin = grads.input;

    double worst = 0.0;
    const double eps = 1e-3;
    Rng pick(4242);
    for (int trial = 0; trial < 24; ++trial) {
        const std::size_t i = pick.next() % x.data.size();
        FeatureMap xp = x, xm = x;
        xp.data[i] += static_cast<float>(eps);
        xm.data[i] -= static_cast<float>(eps);
        const double fd = (loss_of(xp) - loss_of(xm)) / (2 * eps);
        const double an = gin.data[i];
        const double rel = std::abs(fd - an) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, rel);
    }
    if (worst >= 1e-3) {
        why = "dfs_backward FD relative error " + fmt(worst, 6);
        return false;
    }

    // Dense layer weight gradient vs central differences.
    Rng r2(7);
    Dense dn(5, 3, r2);
    std::vector<float> in(5);
    for (auto& v : in) v = r2.uniform() - 0.5f;
    auto dense_loss = [&]() {
        auto out = dn.forward(in);
        double l = 0.0;
        for (float v : out) l += 0.5 * static_cast<double>(v) * v;
        return l;
    };
    std::vector<float> gw(dn.w.size(), 0.0f), gb(dn.b.size(), 0.0f);
    {
        auto out = dn.forward(in);
        dn.backward(in, out, gw, gb);
    }
    for (std::size_t i = 0; i < dn.w.size(); ++i) {
        const float keep = dn.w[i];
        dn.w[i] = keep + static_cast<float>(eps);
        const double lp = dense_loss();
        dn.w[i] = keep - static_cast<float>(eps);
        const double lm = dense_loss();
        dn.w[i] = keep;
        const double fd = (lp - lm) / (2 * eps);
        const double rel = std::abs(fd - gw[i]) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, rel);
    }
    if (worst >= 1e-3) {
        why = "dense FD relative error " + fmt(worst, 6);
        return false;
    }
    return true;
}

void criterion_2() {
    try {
        std::string why;
        bool ok = check_orthogonality(why) && check_bijectivity(why) &&
                  check_cross_mix_inverse(why) && check_ridge_residual(why) &&
                  check_gradients(why);
        report(2, "math oracles", ok,
               ok ? "orthogonality, bijectivity, cross-mix inverse, ridge "
                    "residual, gradient checks all within bounds"
                  : why);
    } catch (const std::exception& e) {
        report(2, "math oracles", false, std::string("exception: ") + e.what());
    }
}

// ---- criterion 3: utility ----------------------------------------------

void criterion_3(Shared& sh) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const ModelBundle& m = sh.hi();
        const double fused = evaluate_accuracy(m, sh.test, 0, 0xE7A1);
        double worst_probe = 0.0;
        std::string probes;
        for (int b = 0; b < 3; ++b) {
            const double p = single_share_probe(m, sh.train, sh.test, b, 100 + b);
            worst_probe = std::max(worst_probe, p);
            probes += (b ? "/" : "") + fmt(p, 3);
        }
        const double secs = elapsed_s(t0);
        const bool ok = fused >= 0.85 && worst_probe <= 0.45 && secs < 600.0;
        report(3, "utility", ok,
               "fused=" + fmt(fused, 3) + " probes=" + probes +
                   " (need fused>=0.85, every probe<=0.45) runtime=" +
                   fmt(secs, 1) + "s (limit 600s)");
    } catch (const std::exception& e) {
        report(3, "utility", false, std::string("exception: ") + e.what());
    }
}

// ---- criterion 4: privacy direction ------------------------------------

void criterion_4(Shared& sh) {
    try {
        const ModelBundle& m = sh.hi();
        const double priv = mean_branch_ssim(m, sh.train, sh.test, 4001);
        auto btr = make_baseline_pairs(m, sh.train);
        auto bev = make_baseline_pairs(m, sh.test);
        Inverter binv = fit_ridge(btr, default_ridge_lambda(btr), 0);
        const double base = evaluate_attack(binv, bev).ssim_mean;
        const bool ok = priv <= 0.6 * base;
        report(4, "privacy direction", ok,
               "privdfs_ssim=" + fmt(priv, 3) + " baseline_ssim=" + fmt(base, 3) +
                   " ratio=" + fmt(priv / base, 3) + " (need <=0.6)");
    } catch (const std::exception& e) {
        report(4, "privacy direction", false,
               std::string("exception: ") + e.what());
    }
}

// ---- criterion 5: compromise robustness --------------------------------

void criterion_5(Shared& sh) {
    try {
        AttackReport one_of_three =
            compromise_scenario(sh.hi(), sh.train, sh.test, 1.0 / 3.0, 555);
        AttackReport three_of_six =
            compromise_scenario(sh.hi6(), sh.train, sh.test, 0.5, 555);
        const double gain = three_of_six.ssim_mean - one_of_three.ssim_mean;
        const bool ok = gain < 0.10;
        report(5, "compromise robustness", ok,
               "ssim_1of3=" + fmt(one_of_three.ssim_mean, 3) +
                   " ssim_3of6=" + fmt(three_of_six.ssim_mean, 3) +
                   " gain=" + fmt(gain, 3) + " (need <0.10)");
    } catch (const std::exception& e) {
        report(5, "compromise robustness", false,
               std::string("exception: ") + e.what());
    }
}

// ---- criterion 6: AT hardening -----------------------------------------

void criterion_6(Shared& sh) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        ModelBundle m = sh.mod();  // hardened copy; sh.mod() stays pristine
        AtConfig cfg;
        cfg.lambda = 1.0f;
        cfg.rounds = 5;
        // Gentlest configuration found that preserves task accuracy across
        // all five rounds; stronger steps trade accuracy for the SSIM drop.
        cfg.learning_rate = 0.005f;
        cfg.clip_norm = 2.0f;
        cfg.defender_epochs = 3;
        cfg.seed = 11;
        AtResult res = at_train(m, sh.train, sh.test, cfg);
        const double ssim0 = res.rounds.front().attacker_ssim;
        const double acc0 = res.rounds.front().accuracy;
        const double drop = ssim0 - res.final_ssim;
        const double acc_drop = acc0 - res.final_accuracy;
        const double secs = elapsed_s(t0);
        const bool ok = drop >= 0.10 && acc_drop <= 0.03 && secs < 1200.0;
        report(6, "AT hardening", ok,
               "ssim " + fmt(ssim0, 3) + "->" + fmt(res.final_ssim, 3) +
                   " (drop=" + fmt(drop, 3) + ", need >=0.10) acc " +
                   fmt(acc0, 3) + "->" + fmt(res.final_accuracy, 3) +
                   " (drop=" + fmt(acc_drop, 3) + ", need <=0.03) runtime=" +
                   fmt(secs, 1) + "s (limit 1200s)");
    } catch (const std::exception& e) {
        report(6, "AT hardening", false, std::string("exception: ") + e.what());
    }
}

// ---- criterion 7: KD isolation -----------------------------------------

void criterion_7(Shared& sh) {
    try {
        // Multi-policy training needs a gentler step: each mini-batch draws a
        // different policy, so large steps make the shared branches diverge.
        ModelBundle kd2 =
            sh.train_bundle(kSigmaMod, kAlphaMod, 3, {kKeyA, kKeyB}, 16, 0.02f);
        ModelBundle kd4 = sh.train_bundle(
            kSigmaMod, kAlphaMod, 3, {kKeyA, kKeyB, kKeyC, kKeyD}, 16, 0.02f);

        // Inverter fitted under key A's policy of the k=2 model, evaluated on
        // shares produced under key A (same-key) and key B (cross-key).
        auto fit = make_attack_pairs(kd2, sh.train, 0, 0, 61);
        Inverter inv = fit_ridge(fit, default_ridge_lambda(fit), 0);
        auto same = make_attack_pairs(kd2, sh.test, 0, 0, 62);
        auto cross = make_attack_pairs(kd2, sh.test, 1, 0, 63);
        const double s_same = evaluate_attack(inv, same).ssim_mean;
        const double s_cross = evaluate_attack(inv, cross).ssim_mean;
        const double gap = s_same - s_cross;

        auto kd_accuracy = [&](const ModelBundle& m) {
            double acc = 0.0;
            const int k = static_cast<int>(m.family.policies.size());
            for (int p = 0; p < k; ++p)
                acc += evaluate_accuracy(m, sh.test, p, 0xE7A1 + p);
            return acc / k;
        };
        const double a1 = evaluate_accuracy(sh.mod(), sh.test, 0, 0xE7A1);
        const double a2 = kd_accuracy(kd2);
        const double a4 = kd_accuracy(kd4);

        const bool ok = gap >= 0.15 && (a1 - a4) <= 0.08 && a1 >= a2 - 0.005 &&
                        a2 >= a4 - 0.005;
        report(7, "KD isolation", ok,
               "same_key_ssim=" + fmt(s_same, 3) + " cross_key_ssim=" +
                   fmt(s_cross, 3) + " gap=" + fmt(gap, 3) +
                   " (need >=0.15) acc k1/k2/k4=" + fmt(a1, 3) + "/" +
                   fmt(a2, 3) + "/" + fmt(a4, 3) +
                   " (need monotone, k4 within 8 points of k1)");
    } catch (const std::exception& e) {
        report(7, "KD isolation", false, std::string("exception: ") + e.what());
    }
}

// ---- criterion 8: threat-level ordering --------------------------------

void criterion_8(Shared& sh) {
    try {
        const ModelBundle& m = sh.mod();
        std::vector<Sample> pool = sh.train;
        pool.insert(pool.end(), sh.test.begin(), sh.test.end());
        SynthSpec aux = sh.spec;
        aux.style = SynthStyle::Shifted;
        aux.seed = 9999;
        double ssim_by_level[3] = {0, 0, 0};
        for (int lv = 1; lv <= 3; ++lv) {
            ThreatSplit split =
                threat_split(pool, static_cast<ThreatLevel>(lv), 400, kTestN,
                             77, aux);
            auto fit = make_attack_pairs(m, split.attacker_train, 0, 0, 81);
            Inverter inv = fit_ridge(fit, default_ridge_lambda(fit), 0);
            auto ev = make_attack_pairs(m, split.defense_eval, 0, 0, 82);
            ssim_by_level[lv - 1] = evaluate_attack(inv, ev, lv).ssim_mean;
        }
        const bool ok = ssim_by_level[0] <= ssim_by_level[1] + 0.03 &&
                        ssim_by_level[1] <= ssim_by_level[2] + 0.03;
        report(8, "threat-level ordering", ok,
               "ssim L1/L2/L3=" + fmt(ssim_by_level[0], 3) + "/" +
                   fmt(ssim_by_level[1], 3) + "/" + fmt(ssim_by_level[2], 3) +
                   " (need non-decreasing within 0.03)");
    } catch (const std::exception& e) {
        report(8, "threat-level ordering", false,
               std::string("exception: ") + e.what());
    }
}

// ---- criterion 9: distributed equivalence ------------------------------

void criterion_9(Shared& sh) {
    try {
        const ModelBundle& m = sh.mod();
        std::vector<std::unique_ptr<BranchServer>> servers;
        ClusterConfig cluster;
        cluster.timeout_ms = 2000;
        cluster.retries = 0;
        for (int b = 0; b < 3; ++b) {
            servers.push_back(std::make_unique<BranchServer>(
                m.branches[b], b, 0x9000ULL + b));
            servers.back()->start("127.0.0.1", 0);
            cluster.servers.push_back("127.0.0.1:" +
                                      std::to_string(servers.back()->port()));
        }
        Simulator sim(m);
        double worst = 0.0;
        for (int i = 0; i < 4; ++i) {
            const FeatureMap& x = sh.test[i].image;
            auto remote = client_infer(m, x, 0, 1000 + i, cluster);
            auto local = sim.infer(x, 0, 1000 + i);
            for (std::size_t j = 0; j < local.size(); ++j)
                worst = std::max(worst,
                                 std::abs(static_cast<double>(remote[j]) -
                                          local[j]));
        }
        const int s2s = sim.server_to_server_messages();

        servers[1]->stop();
        const auto t0 = std::chrono::steady_clock::now();
        bool failed_right = false;
        std::string err_text;
        try {
            client_infer(m, sh.test[0].image, 0, 7, cluster);
        } catch (const TransportError& e) {
            failed_right = e.branch_id == 1 &&
                           std::string(e.what()).find("branch 1") !=
                               std::string::npos;
            err_text = e.what();
        }
        const double fail_ms = elapsed_s(t0) * 1000.0;
        for (auto& s : servers) s->stop();

        const bool ok = worst <= 1e-6 && s2s == 0 && failed_right &&
                        fail_ms <= cluster.timeout_ms + 100.0;
        report(9, "distributed equivalence", ok,
               "max_prob_diff=" + fmt(worst, 9) + " server_to_server=" +
                   std::to_string(s2s) + " down_server_error=\"" + err_text +
                   "\" fail_ms=" + fmt(fail_ms, 0) + " (limit " +
                   std::to_string(cluster.timeout_ms + 100) + ")");
    } catch (const std::exception& e) {
        report(9, "distributed equivalence", false,
               std::string("exception: ") + e.what());
    }
}

// ---- criterion 10: protocol conformance --------------------------------

void criterion_10() {
    try {
        std::string why;
        bool ok = true;

        // Golden HELLO frame: server_id 8, branch 1.
        HelloMsg hello;
        hello.server_id = 8;
        hello.branch_id = 1;
        const std::vector<std::uint8_t> golden = {0x50, 0x44, 0x46, 0x53, 0x01,
                                                  0x01, 0x09, 0x00, 0x00, 0x00,
                                                  0x08, 0x00, 0x00, 0x00, 0x00,
                                                  0x00, 0x00, 0x00, 0x01};
        auto enc = encode_message(WireMessage{hello});
        if (enc != golden) {
            ok = false;
            why = "golden HELLO encoding mismatch";
        }
        WireMessage out;
        if (ok && decode_message(golden.data(), golden.size(), out) !=
                      WireError::Ok) {
            ok = false;
            why = "golden HELLO decode failed";
        }
        if (ok) {
            const auto& h = std::get<HelloMsg>(out);
            if (h.server_id != 8 || h.branch_id != 1) {
                ok = false;
                why = "golden HELLO round-trip value mismatch";
            }
        }
        // Round-trip every message type byte-exactly.
        if (ok) {
            InferReqMsg req;
            req.request_id = 77;
            req.policy_id = 3;
            req.branch_id = 2;
            req.tensor = FeatureMap(2, 2, 2);
            for (std::size_t i = 0; i < req.tensor.data.size(); ++i)
                req.tensor.data[i] = static_cast<float>(i) * 0.25f;
            InferRespMsg resp;
            resp.request_id = 77;
            resp.embedding = {1.5f, -2.25f};
            ErrMsg err;
            err.code = kErrBadRequest;
            err.message = "nope";
            for (const WireMessage& msg :
                 {WireMessage{hello}, WireMessage{req}, WireMessage{resp},
                  WireMessage{err}}) {
                auto bytes = encode_message(msg);
                WireMessage back;
                if (decode_message(bytes.data(), bytes.size(), back) !=
                    WireError::Ok) {
                    ok = false;
                    why = "round-trip decode failed";
                    break;
                }
                if (encode_message(back) != bytes) {
                    ok = false;
                    why = "re-encode not byte-exact";
                    break;
                }
            }
        }
        // Malformed corpus, each mapped to its designated error code.
        if (ok) {
            auto frame = encode_message(WireMessage{hello});
            WireMessage ignored;

            auto bad_magic = frame;
            bad_magic[0] = 'X';
            auto truncated = frame;
            truncated.resize(frame.size() - 3);
            auto unknown_type = frame;
            unknown_type[5] = 0x42;

            InferReqMsg big;
            big.request_id = 1;
            big.tensor = FeatureMap(1, 8, 8);
            auto oversize = encode_message(WireMessage{big});

            struct Case {
                const char* name;
                std::vector<std::uint8_t> bytes;
                std::size_t cap;
                WireError want;
            };
            const Case cases[] = {
                {"bad magic", bad_magic, 1u << 22, WireError::BadMagic},
                {"truncation", truncated, 1u << 22, WireError::Truncated},
                {"unknown type", unknown_type, 1u << 22, WireError::UnknownType},
                {"oversize", oversize, 63, WireError::Oversize},
            };
            for (const auto& c : cases) {
                const WireError got =
                    decode_message(c.bytes.data(), c.bytes.size(), ignored, c.cap);
                if (got != c.want) {
                    ok = false;
                    why = std::string(c.name) + " yielded " +
                          wire_error_name(got) + " instead of " +
                          wire_error_name(c.want);
                    break;
                }
            }
        }
        report(10, "protocol conformance", ok,
               ok ? "golden frames round-trip byte-exactly; malformed corpus "
                    "maps to designated error codes"
                  : why);
    } catch (const std::exception& e) {
        report(10, "protocol conformance", false,
               std::string("exception: ") + e.what());
    }
}

// ---- criterion 11: client-cost accounting ------------------------------

void criterion_11(Shared& sh) {
    try {
        const ModelBundle& m = sh.mod();
        const FlopsReport closed = flops_count(m);

        std::int64_t measured = 0;
        {
            FlopScope scope;
            FeatureMap z = m.encoder.forward(sh.test[0].image);
            (void)dfs_forward(z, m.family.policies[0], m.cfg, 99);
            measured = scope.count;
        }
        const double ratio = static_cast<double>(closed.client_total()) /
                             static_cast<double>(closed.deep_split_client);
        const bool ok =
            measured == closed.client_total() && ratio <= 0.05;
        report(11, "client-cost accounting", ok,
               "client=" + std::to_string(closed.client_total()) +
                   " measured=" + std::to_string(measured) + " deep_split=" +
                   std::to_string(closed.deep_split_client) + " ratio=" +
                   fmt(ratio, 4) + " (need exact match and <=0.05)");
    } catch (const std::exception& e) {
        report(11, "client-cost accounting", false,
               std::string("exception: ") + e.what());
    }
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    Shared sh;

    criterion_1(sh);
    criterion_2();
    criterion_3(sh);
    criterion_4(sh);
    criterion_5(sh);
    criterion_6(sh);
    criterion_7(sh);
    criterion_8(sh);
    criterion_9(sh);
    criterion_10();
    criterion_11(sh);

    std::printf("acceptance: %d/11 criteria passed in %.1fs\n", 11 - g_failures,
                elapsed_s(t0));
    return g_failures == 0 ? 0 : 1;
}
