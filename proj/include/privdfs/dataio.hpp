#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "privdfs/rng.hpp"
#include "privdfs/tensor.hpp"

namespace privdfs {

struct Sample {
    FeatureMap image;  // values in [0,1]
    int label = 0;
};

enum class SynthStyle { Base, Shifted };

struct SynthSpec {
    int classes = 10;
    int channels = 1;
    int height = 16;
    int width = 16;
    SynthStyle style = SynthStyle::Base;
    std::uint64_t seed = 0;
};

// Ten separable parametric pattern families:
//   0..3  sinusoidal stripes at 45*c degrees, seeded phase
//   4..6  checkerboards of cell size 2 + 2*(c-4), seeded offset
//   7..9  Gaussian blobs of radius 2 + (c-7), seeded position
// Shifted style: contrast 0.7 and pixel noise std 0.1 (base: 1.0 / 0.02).
inline std::vector<Sample> synth_generate(const SynthSpec& spec, int n) {
    require(n >= 1, "synth_generate: n must be >= 1");
    const bool shifted = spec.style == SynthStyle::Shifted;
    const double contrast = shifted ? 0.7 : 1.0;
    const double noise_std = shifted ? 0.1 : 0.02;
    constexpr double two_pi = 6.283185307179586476925286766559;

    Rng rng(spec.seed);
    std::vector<Sample> out;
    out.reserve(n);
    for (int s = 0; s < n; ++s) {
        const int label = static_cast<int>(rng.next() %
                                           static_cast<std::uint64_t>(spec.classes));
        Sample sample;
        sample.label = label;
        sample.image = FeatureMap(spec.channels, spec.height, spec.width);
        FeatureMap& img = sample.image;

        if (label <= 3) {
            const double theta = (45.0 * label) * two_pi / 360.0;
            const double phase = rng.uniform() * two_pi;
            const double freq = two_pi / 5.0;  // ~5-pixel period
            for (int y = 0; y < spec.height; ++y)
                for (int x = 0; x < spec.width; ++x) {
                    const double t = x * std::cos(theta) + y * std::sin(theta);
                    const double v = 0.5 + 0.5 * std::sin(freq * t + phase);
                    for (int c = 0; c < spec.channels; ++c)
                        img.at(c, y, x) = static_cast<float>(v);
                }
        } else if (label <= 6) {
            const int cell = 2 + 2 * (label - 4);
            const int oy = static_cast<int>(rng.next() %
                                            static_cast<std::uint64_t>(cell));
            const int ox = static_cast<int>(rng.next() %
                                            static_cast<std::uint64_t>(cell));
            for (int y = 0; y < spec.height; ++y)
                for (int x = 0; x < spec.width; ++x) {
                    const int par = (((y + oy) / cell) + ((x + ox) / cell)) % 2;
                    for (int c = 0; c < spec.channels; ++c)
                        img.at(c, y, x) = par ? 1.0f : 0.0f;
                }
        } else {
            const double radius = 2.0 + (label - 7);
            const double cy = 3.0 + rng.uniform() * (spec.height - 6);
            const double cx = 3.0 + rng.uniform() * (spec.width - 6);
            for (int y = 0; y < spec.height; ++y)
                for (int x = 0; x < spec.width; ++x) {
                    const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                    const double v = std::exp(-d2 / (2.0 * radius * radius));
                    for (int c = 0; c < spec.channels; ++c)
                        img.at(c, y, x) = static_cast<float>(v);
                }
        }

        for (auto& v : img.data) {
            double p = 0.5 + contrast * (static_cast<double>(v) - 0.5);
            p += noise_std * rng.gaussian();
            if (p < 0.0) p = 0.0;
            if (p > 1.0) p = 1.0;
            v = static_cast<float>(p);
        }
        out.push_back(std::move(sample));
    }
    return out;
}

// CIFAR-10 binary format: 3073-byte records, 1 label byte + 3x32x32 pixels
// (plane order R,G,B, row-major).
inline std::vector<Sample> load_cifar10(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_cifar10: cannot open " + path);
    f.seekg(0, std::ios::end);
    const std::int64_t len = f.tellg();
    f.seekg(0);
    constexpr std::int64_t rec = 3073;
    if (len % rec != 0)
        throw std::runtime_error("load_cifar10: file length " +
                                 std::to_string(len) +
                                 " is not a multiple of 3073");
    const std::int64_t count = len / rec;
    std::vector<Sample> out;
    out.reserve(count);
    std::vector<unsigned char> buf(rec);
    for (std::int64_t r = 0; r < count; ++r) {
        f.read(reinterpret_cast<char*>(buf.data()), rec);
        if (!f)
            throw std::runtime_error("load_cifar10: truncated record at offset " +
                                     std::to_string(r * rec));
        if (buf[0] > 9)
            throw std::runtime_error("load_cifar10: bad label at offset " +
                                     std::to_string(r * rec));
        Sample s;
        s.label = buf[0];
        s.image = FeatureMap(3, 32, 32);
        for (std::size_t i = 0; i < 3072; ++i)
            s.image.data[i] = static_cast<float>(buf[1 + i]) / 255.0f;
        out.push_back(std::move(s));
    }
    return out;
}

enum class ThreatLevel : int { L1 = 1, L2 = 2, L3 = 3 };

struct ThreatSplit {
    std::vector<Sample> attacker_train;
    std::vector<Sample> defense_eval;
};

// Level 1: shifted-distribution generator; Level 2: seeded in-distribution
// subset of size budget; Level 3: the full pool. Eval samples are held out
// from the tail of the pool and never appear in the attacker set.
inline ThreatSplit threat_split(const std::vector<Sample>& pool, ThreatLevel level,
                                int budget, int eval_count, std::uint64_t seed,
                                const SynthSpec& aux_spec) {
    require(eval_count >= 1 && eval_count < static_cast<int>(pool.size()),
            "threat_split: bad eval_count");
    const int train_pool = static_cast<int>(pool.size()) - eval_count;
    ThreatSplit out;
    out.defense_eval.assign(pool.begin() + train_pool, pool.end());

    if (level == ThreatLevel::L1) {
        require(budget >= 1, "threat_split: bad budget");
        SynthSpec aux = aux_spec;
        aux.style = SynthStyle::Shifted;
        aux.seed = seed ^ 0xA5A5A5A5A5A5A5A5ULL;
        out.attacker_train = synth_generate(aux, budget);
    } else if (level == ThreatLevel::L2) {
        require(budget >= 1 && budget <= train_pool,
                "threat_split: budget exceeds pool");
        std::vector<int> idx(train_pool);
        for (int i = 0; i < train_pool; ++i) idx[i] = i;
        Rng rng(seed);
        for (int i = train_pool - 1; i >= 1; --i) {
            const int j =
                static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
            std::swap(idx[i], idx[j]);
        }
        out.attacker_train.reserve(budget);
        for (int i = 0; i < budget; ++i)
            out.attacker_train.push_back(pool[idx[i]]);
    } else {
        out.attacker_train.assign(pool.begin(), pool.begin() + train_pool);
    }
    return out;
}

// Versioned binary dataset cache; tensors use the wire encoding (float32 LE).
inline void save_dataset(const std::vector<Sample>& data, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
    const char magic[4] = {'P', 'D', 'D', 'S'};
    f.write(magic, 4);
    const std::uint8_t version = 1;
    f.write(reinterpret_cast<const char*>(&version), 1);
    const std::uint32_t n = static_cast<std::uint32_t>(data.size());
    f.write(reinterpret_cast<const char*>(&n), 4);
    for (const auto& s : data) {
        const std::uint32_t meta[4] = {
            static_cast<std::uint32_t>(s.label),
            static_cast<std::uint32_t>(s.image.channels),
            static_cast<std::uint32_t>(s.image.height),
            static_cast<std::uint32_t>(s.image.width)};
        f.write(reinterpret_cast<const char*>(meta), sizeof(meta));
        f.write(reinterpret_cast<const char*>(s.image.data.data()),
                static_cast<std::streamsize>(s.image.size() * sizeof(float)));
    }
}

inline std::vector<Sample> load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || magic[0] != 'P' || magic[1] != 'D' || magic[2] != 'D' ||
        magic[3] != 'S')
        throw std::runtime_error("load_dataset: bad magic");
    std::uint8_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 1);
    if (version != 1) throw std::runtime_error("load_dataset: unknown version");
    std::uint32_t n = 0;
    f.read(reinterpret_cast<char*>(&n), 4);
    std::vector<Sample> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint32_t meta[4];
        f.read(reinterpret_cast<char*>(meta), sizeof(meta));
        Sample s;
        s.label = static_cast<int>(meta[0]);
        s.image = FeatureMap(static_cast<int>(meta[1]), static_cast<int>(meta[2]),
                             static_cast<int>(meta[3]));
        f.read(reinterpret_cast<char*>(s.image.data.data()),
               static_cast<std::streamsize>(s.image.size() * sizeof(float)));
        if (!f) throw std::runtime_error("load_dataset: truncated file");
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace privdfs
