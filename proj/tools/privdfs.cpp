// privdfs: operator CLI for the distributed feature-sharing stack.
//
// Subcommands: keygen, train, harden, serve, infer, attack, eval, ablate.
// Config schema is documented in docs/config.md; every printed table is also
// written to a machine-readable record file.

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "privdfs/at.hpp"
#include "privdfs/attack.hpp"
#include "privdfs/dataio.hpp"
#include "privdfs/model.hpp"
#include "privdfs/model_io.hpp"
#include "privdfs/transport.hpp"

using json = nlohmann::json;
using namespace privdfs;

namespace {

// ---- config ------------------------------------------------------------

struct DataSpec {
    std::string source = "synth";  // synth | cifar | dataset
    std::string path;              // cifar/dataset file
    int train_count = 2000;
    int test_count = 400;
    std::uint64_t seed = 123;
};

struct AppConfig {
    ModelArch arch;
    DfsConfig dfs;
    TrainConfig train;
    AtConfig at;
    DataSpec data;
    std::vector<std::uint64_t> keys{0x243F6A8885A308D3ULL};
    std::uint64_t weight_seed = 7;
};

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& ctx) {
    if (!j.is_object()) throw std::runtime_error("config: " + ctx + " must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const auto& a : allowed)
            if (key == a) ok = true;
        if (!ok) throw std::runtime_error("config: unknown key \"" + key + "\" in " + ctx);
    }
}

std::uint64_t parse_key(const json& v) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        return std::stoull(s, nullptr, 16);
    }
    throw std::runtime_error("config: keys must be hex strings or integers");
}

template <typename T>
void read_field(const json& j, const char* name, T& out) {
    if (j.contains(name)) out = j.at(name).get<T>();
}

AppConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    json j = json::parse(f);

    check_keys(j, {"arch", "dfs", "train", "at", "data", "keys", "weight_seed"},
               "top level");
    AppConfig c;
    if (j.contains("arch")) {
        const json& a = j["arch"];
        check_keys(a,
                   {"in_channels", "enc_channels", "enc_kernel", "branch_width",
                    "branch_kernel", "emb_dim", "fusion_hidden", "classes"},
                   "arch");
        read_field(a, "in_channels", c.arch.in_channels);
        read_field(a, "enc_channels", c.arch.enc_channels);
        read_field(a, "enc_kernel", c.arch.enc_kernel);
        read_field(a, "branch_width", c.arch.branch_width);
        read_field(a, "branch_kernel", c.arch.branch_kernel);
        read_field(a, "emb_dim", c.arch.emb_dim);
        read_field(a, "fusion_hidden", c.arch.fusion_hidden);
        read_field(a, "classes", c.arch.classes);
    }
    if (j.contains("dfs")) {
        const json& d = j["dfs"];
        check_keys(d,
                   {"num_branches", "noise_scale", "patch_size", "mix_alpha",
                    "kernel_size", "height", "width", "stages"},
                   "dfs");
        read_field(d, "num_branches", c.dfs.num_branches);
        read_field(d, "noise_scale", c.dfs.noise_scale);
        read_field(d, "patch_size", c.dfs.patch_size);
        read_field(d, "mix_alpha", c.dfs.mix_alpha);
        read_field(d, "kernel_size", c.dfs.kernel_size);
        read_field(d, "height", c.dfs.height);
        read_field(d, "width", c.dfs.width);
        if (d.contains("stages")) {
            const json& s = d["stages"];
            check_keys(s,
                       {"loc_conf", "ortho", "ada_noise", "chan_perm",
                        "patch_reorg", "cross_mix"},
                       "dfs.stages");
            read_field(s, "loc_conf", c.dfs.use_loc_conf);
            read_field(s, "ortho", c.dfs.use_ortho);
            read_field(s, "ada_noise", c.dfs.use_ada_noise);
            read_field(s, "chan_perm", c.dfs.use_chan_perm);
            read_field(s, "patch_reorg", c.dfs.use_patch_reorg);
            read_field(s, "cross_mix", c.dfs.use_cross_mix);
        }
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        check_keys(t, {"learning_rate", "batch_size", "epochs", "momentum", "seed"},
                   "train");
        read_field(t, "learning_rate", c.train.learning_rate);
        read_field(t, "batch_size", c.train.batch_size);
        read_field(t, "epochs", c.train.epochs);
        read_field(t, "momentum", c.train.momentum);
        read_field(t, "seed", c.train.seed);
    }
    if (j.contains("at")) {
        const json& a = j["at"];
        check_keys(a,
                   {"lambda", "rounds", "defender_epochs", "learning_rate",
                    "momentum", "batch_size", "clip_norm", "seed"},
                   "at");
        read_field(a, "lambda", c.at.lambda);
        read_field(a, "rounds", c.at.rounds);
        read_field(a, "defender_epochs", c.at.defender_epochs);
        read_field(a, "learning_rate", c.at.learning_rate);
        read_field(a, "momentum", c.at.momentum);
        read_field(a, "batch_size", c.at.batch_size);
        read_field(a, "clip_norm", c.at.clip_norm);
        read_field(a, "seed", c.at.seed);
    }
    if (j.contains("data")) {
        const json& d = j["data"];
        check_keys(d, {"source", "path", "train_count", "test_count", "seed"},
                   "data");
        read_field(d, "source", c.data.source);
        read_field(d, "path", c.data.path);
        read_field(d, "train_count", c.data.train_count);
        read_field(d, "test_count", c.data.test_count);
        read_field(d, "seed", c.data.seed);
        if (c.data.source != "synth" && c.data.source != "cifar" &&
            c.data.source != "dataset")
            throw std::runtime_error("config: data.source must be synth|cifar|dataset");
    }
    if (j.contains("keys")) {
        c.keys.clear();
        for (const auto& k : j["keys"]) c.keys.push_back(parse_key(k));
        if (c.keys.empty()) throw std::runtime_error("config: keys must be nonempty");
    }
    if (j.contains("weight_seed")) c.weight_seed = j["weight_seed"].get<std::uint64_t>();
    return c;
}

struct SplitData {
    std::vector<Sample> train, test;
    SynthSpec spec;  // spec used for synth pools (threat level 1 aux)
};

SplitData load_data(const AppConfig& c) {
    SplitData out;
    out.spec.channels = c.arch.in_channels;
    out.spec.height = c.dfs.height;
    out.spec.width = c.dfs.width;
    out.spec.classes = c.arch.classes;
    out.spec.seed = c.data.seed;

    std::vector<Sample> pool;
    if (c.data.source == "synth") {
        pool = synth_generate(out.spec, c.data.train_count + c.data.test_count);
    } else if (c.data.source == "cifar") {
        pool = load_cifar10(c.data.path);
    } else {
        pool = load_dataset(c.data.path);
    }
    const int total = c.data.train_count + c.data.test_count;
    if (static_cast<int>(pool.size()) < total)
        throw std::runtime_error("data pool smaller than train_count + test_count");
    out.train.assign(pool.begin(), pool.begin() + c.data.train_count);
    out.test.assign(pool.begin() + c.data.train_count, pool.begin() + total);
    return out;
}

// Print a table line and append it to the record file.
struct Recorder {
    std::ofstream file;
    explicit Recorder(const std::string& path) : file(path) {
        if (!file) throw std::runtime_error("cannot open record file " + path);
    }
    void line(const std::string& s) {
        std::cout << s << "\n";
        file << s << "\n";
    }
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(prec);
    os << v;
    return os.str();
}

int find_policy_index(const ModelBundle& m, std::uint64_t key) {
    for (std::size_t i = 0; i < m.family.keys.size(); ++i)
        if (m.family.keys[i] == key) return static_cast<int>(i);
    throw std::runtime_error("key not found in the model's policy family");
}

// ---- subcommands ---------------------------------------------------------

int cmd_keygen(int count, const std::string& out_path) {
    std::ifstream ur("/dev/urandom", std::ios::binary);
    if (!ur) throw std::runtime_error("cannot open /dev/urandom");
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open " + out_path);
    for (int i = 0; i < count; ++i) {
        std::uint64_t k = 0;
        ur.read(reinterpret_cast<char*>(&k), 8);
        std::ostringstream os;
        os.setf(std::ios::hex, std::ios::basefield);
        os.width(16);
        os.fill('0');
        os << k;
        out << os.str() << "\n";
    }
    std::cout << "wrote " << count << " keys to " << out_path << "\n";
    return 0;
}

std::vector<std::uint64_t> load_keys_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open keys file " + path);
    std::vector<std::uint64_t> keys;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        keys.push_back(std::stoull(line, nullptr, 16));
    }
    if (keys.empty()) throw std::runtime_error("keys file is empty");
    return keys;
}

int cmd_dataset(const std::string& config_path, const std::string& out_path) {
    AppConfig cfg = load_config(config_path);
    SplitData data = load_data(cfg);
    std::vector<Sample> all = data.train;
    all.insert(all.end(), data.test.begin(), data.test.end());
    save_dataset(all, out_path);
    std::cout << "wrote " << all.size() << " samples to " << out_path << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& keys_path,
              const std::string& out_path) {
    AppConfig cfg = load_config(config_path);
    if (!keys_path.empty()) cfg.keys = load_keys_file(keys_path);
    SplitData data = load_data(cfg);

    ModelBundle m = make_bundle(cfg.arch, cfg.dfs, cfg.keys, cfg.weight_seed);
    Recorder rec(out_path + ".train-log.txt");
    rec.line("train-log v1 policies=" + std::to_string(m.family.size()) +
             " train_n=" + std::to_string(data.train.size()) +
             " test_n=" + std::to_string(data.test.size()));
    TrainLog log = train_task(m, data.train, cfg.train);
    for (const auto& e : log.epochs)
        rec.line("epoch=" + std::to_string(e.epoch) + " loss=" + fmt(e.loss) +
                 " train_acc=" + fmt(e.accuracy));
    const double acc = evaluate_accuracy(m, data.test, 0, 0xE7A1);
    rec.line("test_acc=" + fmt(acc));
    save_bundle(m, out_path);
    std::cout << "model written to " << out_path << "\n";
    return 0;
}

int cmd_harden(const std::string& model_path, const std::string& config_path,
               double lambda, int rounds, const std::string& out_path) {
    AppConfig cfg = load_config(config_path);
    ModelBundle m = load_bundle(model_path);
    SplitData data = load_data(cfg);
    if (lambda >= 0.0) cfg.at.lambda = static_cast<float>(lambda);
    if (rounds > 0) cfg.at.rounds = rounds;

    Recorder rec(out_path + ".at-curve.txt");
    rec.line("at-curve v1 lambda=" + fmt(cfg.at.lambda) +
             " rounds=" + std::to_string(cfg.at.rounds));
    AtResult res = at_train(m, data.train, data.test, cfg.at);
    for (const auto& r : res.rounds)
        rec.line("round=" + std::to_string(r.round) + " acc=" + fmt(r.accuracy) +
                 " attacker_ssim=" + fmt(r.attacker_ssim) +
                 " attacker_mse=" + fmt(r.attacker_mse));
    rec.line("final acc=" + fmt(res.final_accuracy) +
             " attacker_ssim=" + fmt(res.final_ssim) +
             " attacker_mse=" + fmt(res.final_mse));
    save_bundle(m, out_path);
    std::cout << "hardened model written to " << out_path << "\n";
    return 0;
}

volatile std::sig_atomic_t g_stop = 0;

int cmd_serve(const std::string& model_path, int branch, const std::string& listen) {
    ModelBundle m = load_bundle(model_path);
    if (branch < 0 || branch >= m.cfg.num_branches)
        throw std::runtime_error("branch id out of range");
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos)
        throw std::runtime_error("--listen must be host:port");
    const std::string host = listen.substr(0, colon);
    const int port = std::stoi(listen.substr(colon + 1));

    BranchServer server(m.branches[branch], branch,
                        0xB000ULL + static_cast<std::uint64_t>(branch));
    server.start(host, port);
    std::cout << "serving branch " << branch << " on " << host << ":"
              << server.port() << "\n";
    std::signal(SIGINT, [](int) { g_stop = 1; });
    std::signal(SIGTERM, [](int) { g_stop = 1; });
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}

int cmd_infer(const std::string& model_path, const std::string& key_hex,
              const std::string& servers_csv, const std::string& input_path,
              int index, std::uint64_t nonce) {
    ModelBundle m = load_bundle(model_path);
    int policy_idx = 0;
    if (!key_hex.empty())
        policy_idx = find_policy_index(m, std::stoull(key_hex, nullptr, 16));

    std::vector<Sample> data = load_dataset(input_path);
    if (index < 0 || index >= static_cast<int>(data.size()))
        throw std::runtime_error("--index out of range");

    ClusterConfig cluster;
    std::stringstream ss(servers_csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) cluster.servers.push_back(tok);

    std::vector<float> probs =
        client_infer(m, data[index].image, policy_idx, nonce, cluster);
    int pred = 0;
    for (std::size_t c = 1; c < probs.size(); ++c)
        if (probs[c] > probs[pred]) pred = static_cast<int>(c);
    for (std::size_t c = 0; c < probs.size(); ++c)
        std::cout << "class " << c << " p=" << fmt(probs[c], 6) << "\n";
    std::cout << "predicted=" << pred << " label=" << data[index].label << "\n";
    return 0;
}

int cmd_attack(const std::string& model_path, const std::string& config_path,
               int level, const std::string& attacker, const std::string& cross_key,
               double compromise, int budget, const std::string& record_path) {
    AppConfig cfg = load_config(config_path);
    ModelBundle m = load_bundle(model_path);
    SplitData data = load_data(cfg);
    if (level < 1 || level > 3) throw std::runtime_error("--level must be 1..3");
    if (attacker != "ridge" && attacker != "mlp")
        throw std::runtime_error("--attacker must be ridge or mlp");

    // pool = train data; eval = held-out tail
    std::vector<Sample> pool = data.train;
    pool.insert(pool.end(), data.test.begin(), data.test.end());
    ThreatSplit split =
        threat_split(pool, static_cast<ThreatLevel>(level), budget,
                     static_cast<int>(data.test.size()), cfg.data.seed ^ 0x5EED,
                     data.spec);

    Recorder rec(record_path);
    rec.line("attack-table v1 level=" + std::to_string(level) + " attacker=" +
             attacker + " budget=" + std::to_string(split.attacker_train.size()) +
             " eval_n=" + std::to_string(split.defense_eval.size()));

    if (compromise > 0.0) {
        AttackReport rep = compromise_scenario(m, split.attacker_train,
                                               split.defense_eval, compromise,
                                               cfg.data.seed + 17);
        rep.level = level;
        rec.line(rep.to_record());
        return 0;
    }

    // inverters are trained against policy 0; cross-key evaluates them on
    // shares produced under a different key
    int eval_policy = 0;
    if (!cross_key.empty())
        eval_policy = find_policy_index(m, std::stoull(cross_key, nullptr, 16));

    for (int b = 0; b < m.cfg.num_branches; ++b) {
        auto train_pairs =
            make_attack_pairs(m, split.attacker_train, 0, b, cfg.data.seed + b);
        auto eval_pairs = make_attack_pairs(m, split.defense_eval, eval_policy, b,
                                            cfg.data.seed ^ (0xABCDULL + b));
        Inverter inv;
        if (attacker == "ridge") {
            inv = fit_ridge(train_pairs, default_ridge_lambda(train_pairs), b);
        } else {
            InverterTrainConfig icfg;
            inv = fit_mlp_inverter(train_pairs, icfg, b);
        }
        AttackReport rep = evaluate_attack(
            inv, eval_pairs, level, static_cast<std::uint32_t>(eval_policy));
        rec.line(rep.to_record());
    }
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& config_path,
             const std::string& at_curve, const std::string& record_path) {
    AppConfig cfg = load_config(config_path);
    ModelBundle m = load_bundle(model_path);
    SplitData data = load_data(cfg);

    Recorder rec(record_path);
    const double acc = evaluate_accuracy(m, data.test, 0, 0xE7A1);
    rec.line("eval v1 test_acc=" + fmt(acc) +
             " epochs_trained=" + std::to_string(m.epochs_trained));

    for (int b = 0; b < m.cfg.num_branches; ++b) {
        const double p =
            single_share_probe(m, data.train, data.test, b, 0xBEEF + b);
        rec.line("probe branch=" + std::to_string(b) + " acc=" + fmt(p));
    }
    const double fused = single_share_probe(m, data.train, data.test, -1, 0xBEEF);
    rec.line("probe branch=all acc=" + fmt(fused));

    const FlopsReport fl = flops_count(m);
    rec.line("flops client_encoder=" + std::to_string(fl.client_encoder) +
             " client_dfs=" + std::to_string(fl.client_dfs) +
             " client_total=" + std::to_string(fl.client_total()) +
             " client_fusion=" + std::to_string(fl.client_fusion) +
             " server_branch=" + std::to_string(fl.server_branch) +
             " deep_split_client=" + std::to_string(fl.deep_split_client));

    if (!at_curve.empty()) {
        std::ifstream f(at_curve);
        if (!f) throw std::runtime_error("cannot open AT curve " + at_curve);
        std::string line;
        while (std::getline(f, line)) rec.line(line);
    }
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& stage,
               const std::string& record_path) {
    AppConfig cfg = load_config(config_path);

    auto run = [&](const DfsConfig& dfs, const std::string& tag,
                   Recorder& rec) {
        ModelBundle m = make_bundle(cfg.arch, dfs, cfg.keys, cfg.weight_seed);
        SplitData data = load_data(cfg);
        train_task(m, data.train, cfg.train);
        const double acc = evaluate_accuracy(m, data.test, 0, 0xE7A1);
        double mean_ssim = 0.0;
        for (int b = 0; b < m.cfg.num_branches; ++b) {
            auto train_pairs = make_attack_pairs(m, data.train, 0, b, 31 + b);
            auto eval_pairs = make_attack_pairs(m, data.test, 0, b, 77 + b);
            Inverter inv =
                fit_ridge(train_pairs, default_ridge_lambda(train_pairs), b);
            mean_ssim += evaluate_attack(inv, eval_pairs).ssim_mean;
        }
        mean_ssim /= m.cfg.num_branches;
        rec.line("ablate stage=" + tag + " acc=" + fmt(acc) +
                 " ridge_ssim=" + fmt(mean_ssim));
    };

    DfsConfig ablated = cfg.dfs;
    if (stage == "LocConf") ablated.use_loc_conf = false;
    else if (stage == "OrthoRcb") ablated.use_ortho = false;
    else if (stage == "AdaNoise") ablated.use_ada_noise = false;
    else if (stage == "ChanPerm") ablated.use_chan_perm = false;
    else if (stage == "PatchReorg") ablated.use_patch_reorg = false;
    else if (stage == "CrossMix") ablated.use_cross_mix = false;
    else throw std::runtime_error("unknown stage " + stage);

    Recorder rec(record_path);
    rec.line("ablate-table v1 stage=" + stage);
    run(cfg.dfs, "none", rec);
    run(ablated, stage, rec);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PrivDFS: private inference via distributed feature sharing"};
    app.require_subcommand(1);

    // keygen
    auto* keygen = app.add_subcommand("keygen", "generate policy keys");
    int kg_count = 1;
    std::string kg_out = "keys.txt";
    keygen->add_option("--count", kg_count, "number of keys")->check(CLI::PositiveNumber);
    keygen->add_option("--out", kg_out, "output file");

    // dataset
    auto* dataset = app.add_subcommand("dataset", "materialize a dataset file");
    std::string ds_config, ds_out = "data.pdds";
    dataset->add_option("--config", ds_config, "config file")->required();
    dataset->add_option("--out", ds_out, "output dataset path");

    // train
    auto* train = app.add_subcommand("train", "train a model bundle");
    std::string tr_config, tr_keys, tr_out = "model.bin";
    train->add_option("--config", tr_config, "config file")->required();
    train->add_option("--keys", tr_keys, "keys file (overrides config keys)");
    train->add_option("--out", tr_out, "output model path");

    // harden
    auto* harden = app.add_subcommand("harden", "adversarial hardening");
    std::string hd_model, hd_config, hd_out = "model_at.bin";
    double hd_lambda = -1.0;
    int hd_rounds = 0;
    harden->add_option("--model", hd_model)->required();
    harden->add_option("--config", hd_config)->required();
    harden->add_option("--lambda", hd_lambda, "anti-reconstruction weight");
    harden->add_option("--rounds", hd_rounds, "alternation rounds");
    harden->add_option("--out", hd_out);

    // serve
    auto* serve = app.add_subcommand("serve", "run one branch server");
    std::string sv_model, sv_listen = "127.0.0.1:0";
    int sv_branch = 0;
    serve->add_option("--model", sv_model)->required();
    serve->add_option("--branch", sv_branch)->required();
    serve->add_option("--listen", sv_listen, "host:port");

    // infer
    auto* infer = app.add_subcommand("infer", "distributed inference");
    std::string in_model, in_key, in_servers, in_input;
    int in_index = 0;
    std::uint64_t in_nonce = 1;
    infer->add_option("--model", in_model)->required();
    infer->add_option("--key", in_key, "policy key (hex)");
    infer->add_option("--servers", in_servers, "comma-separated host:port list")
        ->required();
    infer->add_option("--input", in_input, "dataset file")->required();
    infer->add_option("--index", in_index, "sample index");
    infer->add_option("--nonce", in_nonce, "noise nonce");

    // attack
    auto* attack = app.add_subcommand("attack", "inversion attack harness");
    std::string at_model, at_config, at_attacker = "ridge", at_cross, at_record =
        "attack-report.txt";
    int at_level = 3, at_budget = 2000;
    double at_compromise = 0.0;
    attack->add_option("--model", at_model)->required();
    attack->add_option("--config", at_config)->required();
    attack->add_option("--level", at_level, "threat level 1..3");
    attack->add_option("--attacker", at_attacker, "ridge | mlp");
    attack->add_option("--cross-key", at_cross, "evaluate against this key (hex)");
    attack->add_option("--compromise", at_compromise, "fraction of shares seized");
    attack->add_option("--budget", at_budget, "attacker query budget (levels 1-2)");
    attack->add_option("--record", at_record, "record file");

    // eval
    auto* eval = app.add_subcommand("eval", "accuracy, probes, FLOPs");
    std::string ev_model, ev_config, ev_curve, ev_record = "eval-report.txt";
    eval->add_option("--model", ev_model)->required();
    eval->add_option("--config", ev_config)->required();
    eval->add_option("--at-curve", ev_curve, "AT round curve to append");
    eval->add_option("--record", ev_record, "record file");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "stage ablation (paired runs)");
    std::string ab_config, ab_stage, ab_record = "ablate-report.txt";
    ablate->add_option("--config", ab_config)->required();
    ablate
        ->add_option("--stage", ab_stage,
                     "LocConf|OrthoRcb|AdaNoise|ChanPerm|PatchReorg|CrossMix")
        ->required();
    ablate->add_option("--record", ab_record, "record file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (keygen->parsed()) return cmd_keygen(kg_count, kg_out);
        if (dataset->parsed()) return cmd_dataset(ds_config, ds_out);
        if (train->parsed()) return cmd_train(tr_config, tr_keys, tr_out);
        if (harden->parsed())
            return cmd_harden(hd_model, hd_config, hd_lambda, hd_rounds, hd_out);
        if (serve->parsed()) return cmd_serve(sv_model, sv_branch, sv_listen);
        if (infer->parsed())
            return cmd_infer(in_model, in_key, in_servers, in_input, in_index,
                             in_nonce);
        if (attack->parsed())
            return cmd_attack(at_model, at_config, at_level, at_attacker, at_cross,
                              at_compromise, at_budget, at_record);
        if (eval->parsed()) return cmd_eval(ev_model, ev_config, ev_curve, ev_record);
        if (ablate->parsed()) return cmd_ablate(ab_config, ab_stage, ab_record);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
