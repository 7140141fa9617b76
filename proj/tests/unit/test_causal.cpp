#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "lungcrct/causal.hpp"
#include "lungcrct/errors.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace lungcrct;
using namespace lungcrct::causal;

namespace {

Tensor two_cycle(double a) { return Tensor({2, 2}, {0.0, a, a, 0.0}); }

testing::Adjacency to_nested(const BinaryGraph& g) {
    testing::Adjacency out(g.d, std::vector<bool>(g.d));
    for (std::size_t i = 0; i < g.d; ++i)
        for (std::size_t j = 0; j < g.d; ++j) out[i][j] = g(i, j);
    return out;
}

BinaryGraph random_graph(std::size_t d, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution edge(p);
    BinaryGraph g(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (i != j && edge(rng)) g.set(i, j);
    return g;
}

}  // namespace

TEST_CASE("constraints match the closed forms on a 2-cycle") {
    for (int k = 1; k <= 9; ++k) {
        const double a = 0.1 * k;
        CHECK(std::abs(h_trace_exp(two_cycle(a)) - (2 * std::cosh(a * a) - 2)) <= 1e-9);
        CHECK(std::abs(h_logdet(two_cycle(a), 1.0) - (-std::log(1 - std::pow(a, 4)))) <= 1e-9);
    }
}

TEST_CASE("strictly triangular matrices have zero constraint") {
    std::mt19937_64 rng(11);
    for (std::size_t d : {2u, 4u, 7u}) {
        Tensor w = testing::random_tensor({d, d}, rng, -0.9, 0.9);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j <= i; ++j) w.at(i, j) = 0.0;
        CHECK(std::abs(h_trace_exp(w)) <= 1e-10);
        CHECK(std::abs(h_logdet(w, 1.0)) <= 1e-10);
    }
}

TEST_CASE("constraint gradients agree with finite differences") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 5; ++rep) {
        Var w = parameter(testing::random_tensor({5, 5}, rng, -0.4, 0.4));
        std::vector<Var> params{w};
        CHECK(testing::gradcheck(params, [&] { return h_trace_exp(w); }).max_relative_error <= 1e-6);
        CHECK(testing::gradcheck(params, [&] { return h_logdet(w, 1.0); }).max_relative_error <= 1e-6);
        CHECK(testing::gradcheck(params, [&] { return h_logdet(w, 2.0); }).max_relative_error <= 1e-6);
    }
}

TEST_CASE("constraints are nonnegative on feasible matrices") {
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<std::size_t> dim(2, 6);
    int logdet_checked = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t d = dim(rng);
        Tensor w = testing::random_tensor({d, d}, rng, -0.5, 0.5);
        CHECK(h_trace_exp(w) >= -1e-12);
        if (logdet_feasible(w, 1.0)) {
            CHECK(h_logdet(w, 1.0) >= -1e-12);
            ++logdet_checked;
        }
    }
    CHECK(logdet_checked > 500);
}

TEST_CASE("zero constraint iff the support is acyclic") {
    std::mt19937_64 rng(14);
    std::uniform_int_distribution<std::size_t> dim(2, 6);
    std::uniform_real_distribution<double> mag(0.1, 0.9);
    std::bernoulli_distribution sign(0.5);
    int cyclic = 0, acyclic = 0;
    for (int rep = 0; rep < 400; ++rep) {
        const std::size_t d = dim(rng);
        const BinaryGraph g = random_graph(d, 0.25, rng);
        Tensor w({d, d}, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                if (g(i, j)) w.at(i, j) = (sign(rng) ? 1 : -1) * mag(rng) / std::sqrt(double(d));
        const bool has_cycle = testing::has_cycle(to_nested(g));
        has_cycle ? ++cyclic : ++acyclic;
        CHECK(is_acyclic(g) == !has_cycle);
        if (has_cycle) {
            CHECK(h_trace_exp(w) > 1e-10);
        } else {
            CHECK(std::abs(h_trace_exp(w)) <= 1e-10);
        }
        if (logdet_feasible(w, 1.0)) {
            if (has_cycle) CHECK(h_logdet(w, 1.0) > 1e-10);
            else CHECK(std::abs(h_logdet(w, 1.0)) <= 1e-10);
        }
    }
    CHECK(cyclic > 50);
    CHECK(acyclic > 50);
}

TEST_CASE("logdet outside the feasible region throws") {
    CHECK_FALSE(logdet_feasible(two_cycle(1.2), 1.0));
    CHECK_THROWS_AS(h_logdet(two_cycle(1.2), 1.0), InfeasibleError);
    CHECK(logdet_feasible(two_cycle(1.2), 2.5));
    CHECK_THROWS_AS(h_trace_exp(Tensor({2, 3})), ShapeError);
}

TEST_CASE("augmented Lagrangian update") {
    AugLagState st;
    st.prev_h = 0.1;
    AugLagState next = auglag_update(st, 0.05);
    CHECK(next.alpha == doctest::Approx(0.605).epsilon(1e-12));
    CHECK(next.rho == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(next.prev_h == 0.05);

    next = auglag_update(st, 0.095);
    CHECK(next.rho == doctest::Approx(0.101).epsilon(1e-12));

    next = auglag_update(st, 0.01);
    CHECK(next.rho == doctest::Approx(0.1).epsilon(1e-12));

    // fresh state compares against the zero adjacency
    CHECK(auglag_update(AugLagState{}, 0.0).rho == doctest::Approx(0.101).epsilon(1e-12));

    AugLagState bad;
    bad.beta = 1.0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = AugLagState{};
    bad.gamma = 1.0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    CHECK_NOTHROW(AugLagState{}.validate());
}

TEST_CASE("binarize keeps the largest allowed entries") {
    SUBCASE("all zero falls back to row-major order") {
        AdjacencyMatrix a = AdjacencyMatrix::zeros(4);
        const BinaryGraph g = binarize(a, 0.3);  // pool 12 -> 4 edges
        int edges = 0;
        for (char c : g.cells) edges += c;
        CHECK(edges == 4);
        CHECK(g(0, 1));
        CHECK(g(0, 2));
        CHECK(g(0, 3));
        CHECK(g(1, 0));
    }
    SUBCASE("label blacklist shrinks the pool") {
        AdjacencyMatrix a = AdjacencyMatrix::with_label_blacklist(4);
        a.weights.at(3, 0) = 5.0;  // forbidden, never selected
        a.weights.at(0, 3) = 0.7;
        a.weights.at(1, 2) = -0.9;
        a.weights.at(2, 1) = 0.2;
        const BinaryGraph g = binarize(a, 0.3);  // pool 9 -> 3 edges
        int edges = 0;
        for (char c : g.cells) edges += c;
        CHECK(edges == 3);
        CHECK(g(1, 2));
        CHECK(g(0, 3));
        CHECK(g(2, 1));
        CHECK_FALSE(g(3, 0));
    }
    CHECK_THROWS_AS(binarize(AdjacencyMatrix::zeros(3), 0.0), ArgumentError);
    CHECK_THROWS_AS(binarize(AdjacencyMatrix::zeros(3), 1.5), ArgumentError);
}

TEST_CASE("mask helpers") {
    AdjacencyMatrix a = AdjacencyMatrix::with_label_blacklist(3);
    CHECK(a.respects_mask());
    a.weights.fill(1.0);
    CHECK_FALSE(a.respects_mask());
    a.apply_mask();
    CHECK(a.respects_mask());
    const Tensor m = a.allowed_mask();
    CHECK(m.at(0, 0) == 0.0);
    CHECK(m.at(2, 0) == 0.0);
    CHECK(m.at(2, 1) == 0.0);
    CHECK(m.at(0, 2) == 1.0);
    CHECK(m.at(1, 0) == 1.0);
}

TEST_CASE("shd matches the brute-force oracle") {
    std::mt19937_64 rng(15);
    std::uniform_int_distribution<std::size_t> dim(2, 5);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t d = dim(rng);
        const BinaryGraph g1 = random_graph(d, 0.3, rng), g2 = random_graph(d, 0.3, rng);
        const auto n1 = to_nested(g1), n2 = to_nested(g2);
        CHECK(shd(g1, g2, false) == testing::shd_bruteforce(n1, n2, 0));
        CHECK(shd(g1, g2, true) == testing::shd_bruteforce(n1, n2, d - 1));
        CHECK(shd(g1, g2, true) == shd(g2, g1, true));
        CHECK(shd(g1, g2, false) == shd(g2, g1, false));
        CHECK(shd(g1, g1, false) == 0);
    }
}

TEST_CASE("shd counts a reversal once") {
    BinaryGraph a(3), b(3);
    a.set(0, 1);
    b.set(1, 0);
    CHECK(shd(a, b, false) == 1);
    a.set(1, 2);
    CHECK(shd(a, b, false) == 2);
    CHECK_THROWS_AS(shd(BinaryGraph(2), BinaryGraph(3), false), ArgumentError);
}

TEST_CASE("graph traversal") {
    BinaryGraph g(4);
    g.set(0, 1);
    g.set(1, 2);
    g.set(0, 3);
    CHECK(topological_order(g) == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(longest_path_length(g) == 2);
    CHECK(descendants(g, 0) == std::vector<std::size_t>{1, 2, 3});
    CHECK(descendants(g, 2).empty());
    g.set(2, 0);
    CHECK_FALSE(is_acyclic(g));
    CHECK_THROWS_AS(longest_path_length(g), ArgumentError);
}

TEST_CASE("intervention on a linear chain") {
    // 0 -> 1 -> 2 with q1 = 2 q0, q2 = 3 q1
    BinaryGraph g(3);
    g.set(0, 1);
    g.set(1, 2);
    Predictor linear = [](std::span<const double> q) {
        return std::vector<double>{q[0], 2 * q[0], 3 * q[1]};
    };
    const std::vector<double> q{0.5, 1.0, 3.0};
    const auto out = intervene_propagate(q, 0, 1.0, linear, g);
    CHECK(std::abs(out[0] - 1.0) <= 1e-6);
    CHECK(std::abs(out[1] - 2.0) <= 1e-6);
    CHECK(std::abs(out[2] - 6.0) <= 1e-6);

    const auto mid = intervene_propagate(q, 1, 4.0, linear, g);
    CHECK(mid[0] == q[0]);
    CHECK(std::abs(mid[2] - 12.0) <= 1e-6);
}

TEST_CASE("intervention without descendants changes only the target") {
    BinaryGraph g(3);
    g.set(0, 1);
    int calls = 0;
    Predictor noisy = [&](std::span<const double> q) {
        ++calls;
        return std::vector<double>{q[0] + 10, q[1] + 10, q[2] + 10};
    };
    const std::vector<double> q{0.1, 0.2, 0.3};
    const auto out = intervene_propagate(q, 2, 9.0, noisy, g);
    CHECK(out == std::vector<double>{0.1, 0.2, 9.0});
    CHECK(calls == 0);
    const auto out1 = intervene_propagate(q, 1, 9.0, noisy, g);
    CHECK(out1 == std::vector<double>{0.1, 9.0, 0.3});

    CHECK_THROWS_AS(intervene_propagate(q, 2, 1.0, noisy, g, 2), ArgumentError);
    CHECK_THROWS_AS(intervene_propagate(q, 5, 1.0, noisy, g), ArgumentError);
}

TEST_CASE("csv round trip") {
    std::mt19937_64 rng(16);
    const Tensor w = testing::random_tensor({4, 4}, rng);
    std::stringstream ss;
    write_matrix_csv(ss, w);
    CHECK(read_matrix_csv(ss) == w);

    BinaryGraph g(3);
    g.set(0, 2);
    std::stringstream gs;
    write_graph_csv(gs, g);
    CHECK(gs.str() == "0,0,1\n0,0,0\n0,0,0\n");
    CHECK(read_graph_csv(gs) == g);

    std::stringstream bad("1,2\n3\n");
    CHECK_THROWS_AS(read_matrix_csv(bad), DataError);
}
