#include "doctest.h"

#include "msgtl/rng.hpp"
#include "msgtl/topology.hpp"
#include "support/oracles.hpp"

using namespace msgtl;

namespace {

// Independent shape oracle: the sub-block for matrix l is bounded by both
// networks' widths at l and l + 1, for every matrix both networks have.
std::vector<EmbeddingPair> enumerate_blocks(const Topology& prev, const Topology& next) {
    std::vector<EmbeddingPair> out;
    const std::size_t common = std::min(prev.matrix_count(), next.matrix_count());
    for (std::size_t l = 0; l < common; ++l) {
        out.push_back({l, l, std::min(prev.widths[l], next.widths[l]), std::min(prev.widths[l + 1], next.widths[l + 1])});
    }
    return out;
}

}  // namespace

TEST_CASE("layer count examples") {
    CHECK(layer_count(2, 2, 6) == 3);
    CHECK(layer_count(300, 2, 6) == 6);
    CHECK(layer_count(32, 2, 10) == 6);
    CHECK(layer_count(1, 2, 6) == 3);
    CHECK(layer_count(3, 2, 6) == 3);
}

TEST_CASE("layer count matches direct evaluation over the full grid") {
    std::size_t mismatches = 0;
    for (std::size_t gamma : {2, 4, 8}) {
        for (std::size_t omega = 3; omega <= 10; ++omega) {
            for (std::size_t n = 1; n <= 4096; ++n) {
                const std::size_t got = layer_count(n, gamma, omega);
                if (got != oracle::layer_count(n, gamma, omega)) ++mismatches;
                if (got < 3 || got > omega) ++mismatches;
                if (width_schedule(n, gamma, omega).layer_count() != got) ++mismatches;
            }
        }
    }
    CHECK(mismatches == 0);
}

TEST_CASE("width schedule examples") {
    CHECK(width_schedule(8, 2, 6).widths == std::vector<std::size_t>{8, 4, 2, 1});
    CHECK(width_schedule(300, 2, 6).widths == std::vector<std::size_t>{300, 150, 75, 38, 2, 1});
    CHECK(width_schedule(2, 2, 6).widths == std::vector<std::size_t>{2, 2, 1});
    CHECK(width_schedule(1, 2, 6).widths == std::vector<std::size_t>{1, 2, 1});
    CHECK(width_schedule(5, 2, 6).widths == std::vector<std::size_t>{5, 3, 2, 1});
}

TEST_CASE("width schedule shape invariants") {
    for (std::size_t gamma : {1, 2, 4, 8}) {
        for (std::size_t omega = 3; omega <= 10; ++omega) {
            for (std::size_t n = 1; n <= 600; ++n) {
                const Topology t = width_schedule(n, gamma, omega);
                const auto& w = t.widths;
                REQUIRE(w.size() >= 3);
                CHECK(w.front() == n);
                CHECK(w.back() == 1);
                CHECK(w[w.size() - 2] == gamma);
                CHECK(t.gamma_layer() == w.size() - 2);
                if (n > gamma) {
                    for (std::size_t i = 1; i + 1 < w.size(); ++i) CHECK(w[i] <= w[i - 1]);
                }
                for (std::size_t i = 1; i + 2 < w.size(); ++i) CHECK(w[i] == (w[i - 1] + 1) / 2);
            }
        }
    }
}

TEST_CASE("width schedule rejects bad parameters") {
    CHECK_THROWS_AS(width_schedule(0, 2, 6), TopologyError);
    CHECK_THROWS_AS(width_schedule(10, 0, 6), TopologyError);
    CHECK_THROWS_AS(width_schedule(10, 2, 2), TopologyError);
}

TEST_CASE("embedding plan examples") {
    const Topology small = width_schedule(8, 2, 6);
    const auto same = embedding_plan(small, small).pairs;
    CHECK(same == std::vector<EmbeddingPair>{{0, 0, 8, 4}, {1, 1, 4, 2}, {2, 2, 2, 1}});

    const Topology deeper = width_schedule(32, 2, 6);
    REQUIRE(deeper.widths == std::vector<std::size_t>{32, 16, 8, 4, 2, 1});
    CHECK(embedding_plan(small, deeper).pairs == std::vector<EmbeddingPair>{{0, 0, 8, 4}, {1, 1, 4, 2}, {2, 2, 2, 1}});

    const Topology a = width_schedule(300, 2, 6);
    const Topology b = width_schedule(500, 2, 6);
    REQUIRE(b.widths == std::vector<std::size_t>{500, 250, 125, 63, 2, 1});
    const auto pairs = embedding_plan(a, b).pairs;
    CHECK(pairs == std::vector<EmbeddingPair>{{0, 0, 300, 150}, {1, 1, 150, 75}, {2, 2, 75, 38}, {3, 3, 38, 2}, {4, 4, 2, 1}});
    CHECK(pairs == enumerate_blocks(a, b));
}

TEST_CASE("embedding plan agrees with the shape oracle on random pairs") {
    Rng rng(42);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t gamma = 1 + rng.below(8);
        const std::size_t omega = 3 + rng.below(8);
        const std::size_t n1 = 1 + rng.below(1000);
        const std::size_t n2 = n1 + rng.below(1000);
        const Topology prev = width_schedule(n1, gamma, omega);
        const Topology next = width_schedule(n2, gamma, omega);
        const auto pairs = embedding_plan(prev, next).pairs;
        REQUIRE(pairs == enumerate_blocks(prev, next));
        for (const auto& p : pairs) {
            CHECK(p.old_layer == p.new_layer);
            CHECK(p.rows <= next.widths[p.new_layer]);
            CHECK(p.cols <= next.widths[p.new_layer + 1]);
            CHECK(p.rows <= prev.widths[p.old_layer]);
            CHECK(p.cols <= prev.widths[p.old_layer + 1]);
        }
    }
}
