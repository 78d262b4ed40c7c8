#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "privdfs/keyed.hpp"

using namespace privdfs;

TEST_CASE("family_create assigns ids in key order") {
    DfsConfig cfg;
    PolicyFamily fam = family_create({10, 20, 30}, cfg, 12);
    REQUIRE(fam.size() == 3);
    REQUIRE(fam.keys == std::vector<std::uint64_t>{10, 20, 30});
    for (int i = 0; i < 3; ++i)
        REQUIRE(fam.policies[i].policy_id == static_cast<std::uint32_t>(i));

    // policies equal make_policy of their key
    const DfsPolicy ref = make_policy(20, cfg, 12, 1);
    REQUIRE(fam.policies[1].depthwise_kernel == ref.depthwise_kernel);
    REQUIRE(fam.policies[1].chan_perms == ref.chan_perms);

    REQUIRE_THROWS(family_create({}, cfg, 12));
    REQUIRE_THROWS(family_create({1, 2, 1}, cfg, 12));
}

TEST_CASE("policies in a family differ meaningfully") {
    DfsConfig cfg;
    PolicyFamily fam = family_create({0xAAA, 0xBBB, 0xCCC, 0xDDD}, cfg, 12);
    for (int i = 0; i < fam.size(); ++i)
        for (int j = i + 1; j < fam.size(); ++j) {
            REQUIRE(fam.policies[i].ortho_matrix != fam.policies[j].ortho_matrix);
            REQUIRE(fam.policies[i].depthwise_kernel !=
                    fam.policies[j].depthwise_kernel);
            REQUIRE(fam.policies[i].noise_seeds != fam.policies[j].noise_seeds);
            const bool scramble_differs =
                fam.policies[i].chan_perms != fam.policies[j].chan_perms ||
                fam.policies[i].patch_shifts != fam.policies[j].patch_shifts;
            REQUIRE(scramble_differs);
        }
}

TEST_CASE("degenerate single-policy family") {
    DfsConfig cfg;
    PolicyFamily fam = family_create({0x42}, cfg, 12);
    REQUIRE(fam.size() == 1);
    Rng rng(3);
    for (int t = 0; t < 100; ++t) REQUIRE(sample_policy(fam, rng) == 0);
}

TEST_CASE("sample_policy is uniform over the family") {
    DfsConfig cfg;
    PolicyFamily fam = family_create({1, 2, 3, 4}, cfg, 12);
    Rng rng(99);
    std::vector<int> counts(4, 0);
    const int trials = 40000;
    for (int t = 0; t < trials; ++t) {
        const int idx = sample_policy(fam, rng);
        REQUIRE(idx >= 0);
        REQUIRE(idx < 4);
        ++counts[idx];
    }
    for (int c : counts)
        REQUIRE(std::abs(c / static_cast<double>(trials) - 0.25) < 0.01);
}
