#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "privdfs/dfs.hpp"
#include "privdfs/rng.hpp"

namespace privdfs {

// A family of k key-derived policies. Policy ids follow key order.
struct PolicyFamily {
    std::vector<std::uint64_t> keys;
    std::vector<DfsPolicy> policies;

    int size() const { return static_cast<int>(policies.size()); }
};

inline PolicyFamily family_create(const std::vector<std::uint64_t>& keys,
                                  const DfsConfig& cfg, int encoder_channels) {
    require(!keys.empty(), "family_create: keys must be nonempty");
    std::unordered_set<std::uint64_t> seen;
    for (auto k : keys)
        require(seen.insert(k).second, "family_create: duplicate keys");
    PolicyFamily fam;
    fam.keys = keys;
    fam.policies.reserve(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i)
        fam.policies.push_back(make_policy(keys[i], cfg, encoder_channels,
                                           static_cast<std::uint32_t>(i)));
    return fam;
}

// Uniform policy index from the training rng stream.
inline int sample_policy(const PolicyFamily& family, Rng& rng) {
    require(family.size() > 0, "sample_policy: empty family");
    return static_cast<int>(rng.next() %
                            static_cast<std::uint64_t>(family.size()));
}

}  // namespace privdfs
