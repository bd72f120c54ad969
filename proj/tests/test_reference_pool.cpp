#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "realism/error.hpp"
#include "realism/reference_pool.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

#include <algorithm>
#include <set>

using namespace realism;
using realism::testing::Gaussian;
using realism::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::vector<ActivationTensor> random_layer(std::size_t images, TensorShape shape, std::uint64_t seed) {
    Gaussian g(seed);
    std::vector<ActivationTensor> out;
    for (std::size_t i = 0; i < images; ++i) out.push_back(realism::testing::random_tensor("L", shape, g));
    return out;
}

std::vector<float> pool_vector(const ReferencePool& pool, std::size_t k) {
    auto v = pool.vector(0, k);
    return {v.begin(), v.end()};
}

} // namespace

TEST_CASE("SplitMix64 matches its published reference output") {
    // First outputs for seed 1234567, as listed with the reference C implementation.
    SplitMix64 rng(1234567);
    CHECK(rng() == 6457827717110365317ULL);
    CHECK(rng() == 3203168211198807973ULL);
    CHECK(rng() == 9817491932198370423ULL);
}

TEST_CASE("sampling without replacement draws distinct in-range indices") {
    SplitMix64 rng(99);
    for (std::uint64_t population : {1ULL, 2ULL, 7ULL, 50ULL, 200ULL}) {
        for (std::uint64_t count = 0; count <= population; count += std::max<std::uint64_t>(1, population / 5)) {
            auto picks = sample_without_replacement(population, count, rng);
            CHECK(picks.size() == count);
            CHECK(std::is_sorted(picks.begin(), picks.end()));
            CHECK(std::adjacent_find(picks.begin(), picks.end()) == picks.end());
            for (auto p : picks) CHECK(p < population);
        }
    }
    CHECK_THROWS_AS(sample_without_replacement(3, 4, rng), Error);
}

TEST_CASE("sampling without replacement is close to uniform") {
    SplitMix64 rng(5);
    const int trials = 30000;
    std::vector<int> hits(10, 0);
    for (int t = 0; t < trials; ++t) {
        for (auto p : sample_without_replacement(10, 3, rng)) ++hits[p];
    }
    // Each index is included with probability 3/10; binomial sd is ~79.
    for (int h : hits) CHECK(std::abs(h - 9000) < 400);
}

TEST_CASE("a pool smaller than the cap keeps every candidate") {
    InMemorySource source({ActivationTensor("L", {1, 1, 4}, {1, 2, 3, 4})});
    auto pool = build_pool(source, "L", PoolConfig{});
    REQUIRE(pool.size() == 1);
    CHECK(pool_vector(pool, 0) == std::vector<float>{1, 2, 3, 4});
    CHECK(pool.source_count() == 1);
}

TEST_CASE("candidates under the cap come back in (image, u, v) order") {
    auto tensors = random_layer(3, {2, 2, 3}, 11);
    InMemorySource source(tensors);
    auto pool = build_pool(source, "L", PoolConfig{100, 0});
    const auto candidates = realism::testing::candidate_vectors(tensors);
    REQUIRE(pool.size() == candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) CHECK(pool_vector(pool, k) == candidates[k]);
}

TEST_CASE("a capped pool is a subset of the candidate multiset") {
    auto tensors = random_layer(3, {2, 2, 6}, 12);
    const auto candidates = realism::testing::candidate_vectors(tensors);
    REQUIRE(candidates.size() == 12);
    InMemorySource source(tensors);
    auto pool = build_pool(source, "L", PoolConfig{5, 42});
    REQUIRE(pool.size() == 5);
    std::set<std::size_t> matched;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        auto v = pool_vector(pool, k);
        auto it = std::find(candidates.begin(), candidates.end(), v);
        REQUIRE(it != candidates.end());
        matched.insert(static_cast<std::size_t>(it - candidates.begin()));
    }
    CHECK(matched.size() == 5);
}

TEST_CASE("pools are deterministic under a seed") {
    auto tensors = random_layer(6, {3, 3, 4}, 13);
    InMemorySource source(tensors);
    auto a = build_pool(source, "L", PoolConfig{10, 7});
    auto b = build_pool(source, "L", PoolConfig{10, 7});
    CHECK(a == b);
    auto c = build_pool(source, "L", PoolConfig{10, 8});
    CHECK(c.size() == 10);
    CHECK_FALSE(std::equal(a.all_vectors().begin(), a.all_vectors().end(), c.all_vectors().begin()));
}

TEST_CASE("inconsistent channel counts and empty input are rejected") {
    Gaussian g(1);
    InMemorySource mixed({realism::testing::random_tensor("L", {1, 1, 3}, g),
                          realism::testing::random_tensor("L", {1, 1, 4}, g)});
    CHECK_THROWS_AS(build_pool(mixed, "L", PoolConfig{}), Error);
    InMemorySource empty({});
    CHECK_THROWS_AS(build_pool(empty, "L", PoolConfig{}), Error);
    InMemorySource one({realism::testing::random_tensor("L", {1, 1, 3}, g)});
    CHECK_THROWS_AS(build_pool(one, "L", PoolConfig{0, 0}), Error);
}

TEST_CASE("images may differ in spatial size for pooled references") {
    Gaussian g(2);
    InMemorySource source({realism::testing::random_tensor("L", {1, 1, 3}, g),
                           realism::testing::random_tensor("L", {2, 3, 3}, g)});
    auto pool = build_pool(source, "L", PoolConfig{});
    CHECK(pool.size() == 7);
}

TEST_CASE("location-matched pools keep one group per location") {
    auto tensors = random_layer(5, {2, 2, 3}, 14);
    InMemorySource source(tensors);
    auto pool = build_pool(source, "L", PoolConfig{3, 9, true});
    CHECK(pool.location_matched());
    CHECK(pool.group_count() == 4);
    CHECK(pool.group_size() == 3);
    for (std::size_t loc = 0; loc < 4; ++loc) {
        std::set<std::size_t> images;
        for (std::size_t k = 0; k < 3; ++k) {
            auto v = pool.vector(loc, k);
            std::size_t found = tensors.size();
            for (std::size_t i = 0; i < tensors.size(); ++i) {
                auto cand = tensors[i].location(loc);
                if (std::equal(cand.begin(), cand.end(), v.begin())) found = i;
            }
            REQUIRE(found < tensors.size());
            images.insert(found);
        }
        CHECK(images.size() == 3);
    }
    Gaussian g(3);
    InMemorySource ragged({realism::testing::random_tensor("L", {1, 1, 3}, g),
                           realism::testing::random_tensor("L", {2, 1, 3}, g)});
    CHECK_THROWS_AS(build_pool(ragged, "L", PoolConfig{10, 0, true}), Error);
}

TEST_CASE("pool files round-trip exactly") {
    TempDir tmp("pool");
    auto tensors = random_layer(4, {3, 2, 5}, 15);
    InMemorySource source(tensors);
    for (bool matched : {false, true}) {
        auto pool = build_pool(source, "Mixed_6e", PoolConfig{3, 123456789012345ULL, matched});
        const auto path = tmp.path() / "p.pool";
        save_pool(path, pool);
        CHECK(load_pool(path) == pool);
    }
}

TEST_CASE("corrupt pool files are rejected") {
    TempDir tmp("pool");
    const auto path = tmp.path() / "bad.pool";
    {
        std::ofstream out(path);
        out << "NOTAPOOL\n";
    }
    CHECK_THROWS_AS(load_pool(path), Error);
    auto tensors = random_layer(2, {1, 1, 2}, 16);
    InMemorySource source(tensors);
    save_pool(path, build_pool(source, "L", PoolConfig{}));
    fs::resize_file(path, fs::file_size(path) - 3);
    try {
        (void)load_pool(path);
        FAIL("expected truncation error");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::truncated);
    }
}

TEST_CASE("bundle directories feed pool construction lazily") {
    TempDir tmp("src");
    auto tensors = random_layer(3, {2, 1, 2}, 17);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        fs::create_directories(tmp.path() / ("i" + std::to_string(i)));
        write_tensor(tmp.path() / ("i" + std::to_string(i)) / "L.atn", tensors[i]);
    }
    BundleDirSource dir_source(tmp.path(), list_bundle_ids(tmp.path()), "L");
    InMemorySource mem_source(tensors);
    CHECK(build_pool(dir_source, "L", PoolConfig{4, 3}) == build_pool(mem_source, "L", PoolConfig{4, 3}));
    CHECK_THROWS_AS(BundleDirSource(tmp.path(), {"i0", "missing"}, "L"), Error);
}
