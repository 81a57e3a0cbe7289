#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <catch_amalgamated.hpp>

#include "cfprobe/random.hpp"

using namespace cfprobe;

TEST_CASE("fnv1a64 matches the published test vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("derive_seed separates streams by tag and base") {
    CHECK(derive_seed(42, "plan") == derive_seed(42, "plan"));
    CHECK(derive_seed(42, "plan") != derive_seed(42, "disguise"));
    CHECK(derive_seed(42, "plan") != derive_seed(43, "plan"));
    CHECK(derive_seed(0, "x") != derive_seed(0, "y"));
}

TEST_CASE("uniform_real stays inside its half-open interval") {
    RandomStream rng(1);
    for (int i = 0; i < 10000; ++i) {
        double v = rng.uniform_real(-2.5, 7.25);
        REQUIRE(v >= -2.5);
        REQUIRE(v < 7.25);
    }
}

TEST_CASE("uniform_int covers both endpoints and stays in bounds") {
    RandomStream rng(7);
    std::set<long long> seen;
    for (int i = 0; i < 10000; ++i) {
        long long v = rng.uniform_int(1, 5);
        REQUIRE(v >= 1);
        REQUIRE(v <= 5);
        seen.insert(v);
    }
    CHECK(seen == std::set<long long>{1, 2, 3, 4, 5});
}

TEST_CASE("uniform_int handles degenerate and negative ranges") {
    RandomStream rng(11);
    CHECK(rng.uniform_int(3, 3) == 3);
    for (int i = 0; i < 1000; ++i) {
        long long v = rng.uniform_int(-4, -1);
        REQUIRE(v >= -4);
        REQUIRE(v <= -1);
    }
}

TEST_CASE("bernoulli honors the degenerate probabilities") {
    RandomStream rng(3);
    for (int i = 0; i < 1000; ++i) {
        CHECK_FALSE(rng.bernoulli(0.0));
        CHECK(rng.bernoulli(1.0));
    }
}

TEST_CASE("bernoulli rate approaches p") {
    RandomStream rng(5);
    int hits = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) hits += rng.bernoulli(0.3);
    double rate = static_cast<double>(hits) / n;
    // 5 standard errors of a binomial(n, 0.3)
    CHECK(std::abs(rate - 0.3) < 5.0 * std::sqrt(0.3 * 0.7 / n));
}

TEST_CASE("normal draws have the requested moments") {
    RandomStream rng(9);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double v = rng.normal(2.0, 0.5);
        sum += v;
        sumsq += v * v;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean - 2.0) < 5.0 * 0.5 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - 0.25) < 0.01);
}

TEST_CASE("shuffle permutes without losing elements") {
    RandomStream rng(13);
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    std::vector<int> shuffled = v;
    rng.shuffle(shuffled);
    CHECK(shuffled != v);  // 50! permutations; identity is astronomically unlikely
    std::sort(shuffled.begin(), shuffled.end());
    CHECK(shuffled == v);
}

TEST_CASE("identical seeds give identical streams, different seeds diverge") {
    RandomStream a(99), b(99), c(100);
    std::vector<std::uint64_t> va, vb, vc;
    for (int i = 0; i < 100; ++i) {
        va.push_back(a.next_u64());
        vb.push_back(b.next_u64());
        vc.push_back(c.next_u64());
    }
    CHECK(va == vb);
    CHECK(va != vc);
}

TEST_CASE("pick_index stays below n") {
    RandomStream rng(17);
    for (int i = 0; i < 1000; ++i) REQUIRE(rng.pick_index(7) < 7);
}
