#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "hsemis/patches.hpp"
#include "hsemis/rng.hpp"

#include "test_util.hpp"

using namespace hsemis;

TEST_CASE("patchify geometry and round trip") {
    Rng rng(1);
    Tensor img = testutil::random_tensor({32, 32, 1}, rng);
    PatchSet ps = patchify(img, 8);
    CHECK(ps.patch_count() == 16);
    CHECK(ps.patch_len() == 64);

    Tensor back = unpatchify(ps);
    CHECK(back.values() == img.values()); // bit-exact inverse

    CHECK_THROWS_AS(patchify(img, 5), std::invalid_argument);
}

TEST_CASE("zero image encodes to exactly the positional encodings") {
    PatchSet ps = patchify(Tensor::zeros({16, 16, 1}), 8);
    for (int i = 0; i < ps.patch_count(); ++i) {
        const auto enc = ps.encoded(i);
        for (std::size_t j = 0; j < enc.size(); ++j) {
            CHECK(enc[j] == ps.pos_enc[static_cast<std::size_t>(i)][j]);
        }
    }
}

TEST_CASE("sample_mask partitions with the exact count") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        MaskPlan plan = sample_mask(16, 0.75, seed);
        CHECK(plan.masked.size() == 12);
        CHECK(plan.visible.size() == 4);
        std::set<int> all(plan.masked.begin(), plan.masked.end());
        for (int v : plan.visible) CHECK(all.insert(v).second); // disjoint
        CHECK(all.size() == 16);                                 // covers
    }
}

TEST_CASE("sample_mask partition invariant across sizes and ratios") {
    Rng rng(2);
    for (int np : {4, 16, 64, 256, 1024}) {
        for (double ratio : {0.6, 0.7, 0.75, 0.8, 0.9}) {
            const MaskPlan plan = sample_mask(np, ratio, rng.next_u64());
            CHECK(static_cast<long>(plan.masked.size()) == std::lround(ratio * np));
            CHECK(plan.masked.size() + plan.visible.size() == static_cast<std::size_t>(np));
        }
    }
}

TEST_CASE("sample_mask rejects degenerate plans") {
    CHECK_THROWS_AS(sample_mask(16, 0.01, 1), std::invalid_argument); // rounds to 0
    CHECK_THROWS_AS(sample_mask(16, 0.99, 1), std::invalid_argument); // rounds to 16
    CHECK_THROWS_AS(sample_mask(1, 0.5, 1), std::invalid_argument);
    CHECK_NOTHROW(sample_mask(16, 0.75, 1));
}

TEST_CASE("sample_mask is deterministic per seed and uniform across seeds") {
    const MaskPlan a = sample_mask(16, 0.75, 42);
    const MaskPlan b = sample_mask(16, 0.75, 42);
    CHECK(a.masked == b.masked);

    // empirical per-index masking frequency over many seeds
    std::vector<int> hits(16, 0);
    const int trials = 10000;
    for (int s = 0; s < trials; ++s) {
        for (int idx : sample_mask(16, 0.75, static_cast<std::uint64_t>(s)).masked) {
            ++hits[static_cast<std::size_t>(idx)];
        }
    }
    for (int idx = 0; idx < 16; ++idx) {
        const double freq = static_cast<double>(hits[static_cast<std::size_t>(idx)]) / trials;
        CHECK(freq == doctest::Approx(0.75).epsilon(0.0267)); // 0.75 +/- 0.02
    }
}

TEST_CASE("repair splices reconstructions and keeps visible content") {
    Rng rng(3);
    Tensor img = testutil::random_tensor({16, 16, 1}, rng);
    PatchSet ps = patchify(img, 8);
    MaskPlan plan = sample_mask(ps.patch_count(), 0.75, 7);

    // reconstructions equal to the originals reproduce the image
    std::vector<std::vector<double>> exact;
    for (int idx : plan.masked) exact.push_back(ps.patches[static_cast<std::size_t>(idx)]);
    CHECK(repair(ps, exact, plan).values() == img.values());

    // zero reconstructions zero out exactly the masked blocks
    std::vector<std::vector<double>> zeros(plan.masked.size(),
                                           std::vector<double>(static_cast<std::size_t>(ps.patch_len()), 0.0));
    Tensor repaired = repair(ps, zeros, plan);
    // oracle: direct block assignment
    std::vector<double> expect = img.values();
    for (int idx : plan.masked) {
        const int gy = idx / 2, gx = idx % 2;
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) expect[static_cast<std::size_t>((gy * 8 + y) * 16 + gx * 8 + x)] = 0.0;
    }
    CHECK(repaired.values() == expect);

    // count mismatch
    zeros.pop_back();
    CHECK_THROWS_AS(repair(ps, zeros, plan), std::invalid_argument);
}
