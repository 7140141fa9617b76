#include <doctest.h>

#include <cmath>
#include <random>

#include "lungcrct/errors.hpp"
#include "lungcrct/gae.hpp"
#include "lungcrct/ops.hpp"
#include "support/gradcheck.hpp"

using namespace lungcrct;
using namespace lungcrct::gae;

namespace {

Tensor random_batch(std::size_t n, std::size_t d, std::mt19937_64& rng) {
    return testing::random_tensor({n, d}, rng, -1.0, 1.0);
}

}  // namespace

TEST_CASE("zero adjacency gives the decoder bias response for every input") {
    std::mt19937_64 rng(1);
    Gae model({}, causal::AdjacencyMatrix::zeros(4), 3);
    const Tensor out1 = model.predict(random_batch(5, 4, rng));
    const Tensor out2 = model.predict(random_batch(5, 4, rng));
    const Tensor f2_zero = model.decode(constant(Tensor({1, 4}, 0.0))).value();
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(out1.at(r, c) == f2_zero.at(0, c));
            CHECK(out2.at(r, c) == f2_zero.at(0, c));
        }
}

TEST_CASE("a single edge makes its head depend on its tail only") {
    std::mt19937_64 rng(2);
    Gae model({}, causal::AdjacencyMatrix::zeros(4), 4);
    model.raw_adjacency().mutable_value().at(0, 1) = 0.8;
    const Tensor base = random_batch(6, 4, rng);
    const Tensor ref = model.predict(base);
    for (std::size_t col = 0; col < 4; ++col) {
        Tensor moved = base;
        for (std::size_t r = 0; r < 6; ++r) moved.at(r, col) += 0.5;
        const Tensor out = model.predict(moved);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 4; ++c) {
                const bool should_change = col == 0 && c == 1;
                if (should_change) CHECK(out.at(r, c) != ref.at(r, c));
                else CHECK(out.at(r, c) == ref.at(r, c));
            }
    }
}

TEST_CASE("block isolation of the per-variable encoders") {
    std::mt19937_64 rng(3);
    GaeConfig cfg;
    cfg.embed_dim = 2;
    Gae model(cfg, causal::AdjacencyMatrix::zeros(4), 5);
    const Tensor base = random_batch(4, 4, rng);
    const Tensor ref = model.encode(constant(base)).value();
    for (std::size_t j = 0; j < 4; ++j) {
        Tensor zeroed = base;
        for (std::size_t r = 0; r < 4; ++r) zeroed.at(r, j) = 0.0;
        const Tensor emb = model.encode(constant(zeroed)).value();
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t c = 0; c < 8; ++c) {
                if (c / 2 == j) continue;
                CHECK(emb.at(r, c) == ref.at(r, c));
            }
    }
}

TEST_CASE("masked weights and adjacency entries receive zero gradient") {
    std::mt19937_64 rng(4);
    Gae model({}, causal::AdjacencyMatrix::with_label_blacklist(4), 6);
    model.raw_adjacency().mutable_value() = testing::random_tensor({4, 4}, rng, -0.3, 0.3);
    const Var q = constant(random_batch(8, 4, rng));
    backward(causal_loss(q, model, 0.1, {}, causal::Constraint::LogDet).total);

    const Tensor ga = model.raw_adjacency().grad();
    const Tensor allowed = model.allowed_mask();
    int nonzero = 0;
    for (std::size_t i = 0; i < ga.size(); ++i) {
        if (allowed[i] == 0.0) CHECK(ga[i] == 0.0);
        else nonzero += ga[i] != 0.0;
    }
    CHECK(nonzero == 9);

    for (const auto& [name, p] : model.named_parameters()) {
        if (name.find(".weight") == std::string::npos) continue;
        const Tensor g = p.grad();
        const std::size_t d = 4, rows = p.value().dim(0) / d, cols = p.value().dim(1) / d;
        for (std::size_t r = 0; r < p.value().dim(0); ++r)
            for (std::size_t c = 0; c < p.value().dim(1); ++c)
                if (r / rows != c / cols) CHECK(g.at(r, c) == 0.0);
    }
}

TEST_CASE("causal loss gradient agrees with finite differences") {
    std::mt19937_64 rng(5);
    for (auto constraint : {causal::Constraint::LogDet, causal::Constraint::TraceExp}) {
        GaeConfig cfg;
        cfg.embed_dim = 2;
        Gae model(cfg, causal::AdjacencyMatrix::with_label_blacklist(4), 7);
        model.raw_adjacency().mutable_value() = testing::random_tensor({4, 4}, rng, -0.4, 0.4);
        const Var q = constant(random_batch(10, 4, rng));
        causal::AugLagState st;
        st.alpha = 1.3;
        st.rho = 2.0;
        std::vector<Var> params{model.raw_adjacency()};
        auto loss = [&] { return causal_loss(q, model, 0.0, st, constraint).total; };
        CHECK(testing::gradcheck(params, loss).max_relative_error <= 1e-4);
        std::vector<Var> nets = model.net_parameters();
        CHECK(testing::gradcheck(nets, loss).max_relative_error <= 1e-4);
    }
}

TEST_CASE("causal loss vanishes for a perfect reconstruction with empty graph") {
    Gae model({}, causal::AdjacencyMatrix::zeros(4), 8);
    const Tensor q = model.predict(Tensor({5, 4}, 0.25));
    causal::AugLagState st;
    const auto loss = causal_loss(constant(q), model, 0.0, st, causal::Constraint::LogDet);
    CHECK(std::abs(loss.total.value().item()) <= 1e-15);
}

TEST_CASE("training keeps structural zeros exactly zero") {
    std::mt19937_64 rng(9);
    Gae model({}, causal::AdjacencyMatrix::with_label_blacklist(4), 10);
    FitOptions opt;
    opt.epochs = 60;
    fit(model, random_batch(40, 4, rng), opt);
    const auto a = model.adjacency_matrix();
    CHECK(a.respects_mask());
    const Tensor& raw = model.raw_adjacency().value();
    for (std::size_t j = 0; j < 3; ++j) CHECK(raw.at(3, j) == 0.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(raw.at(i, i) == 0.0);
}

TEST_CASE("rho never decreases during training") {
    std::mt19937_64 rng(11);
    Gae model({}, causal::AdjacencyMatrix::zeros(4), 12);
    FitOptions opt;
    opt.epochs = 80;
    const FitTrace trace = fit(model, random_batch(30, 4, rng), opt);
    for (std::size_t i = 1; i < trace.rho.size(); ++i) CHECK(trace.rho[i] >= trace.rho[i - 1]);
}

TEST_CASE("predictor adapter matches a batch forward") {
    std::mt19937_64 rng(13);
    Gae model({}, causal::AdjacencyMatrix::zeros(4), 14);
    model.raw_adjacency().mutable_value() = testing::random_tensor({4, 4}, rng, -0.3, 0.3);
    const Tensor q = random_batch(1, 4, rng);
    const auto single = model.predictor()(q.values());
    const Tensor batch = model.predict(q);
    for (std::size_t i = 0; i < 4; ++i) CHECK(single[i] == batch[i]);
}

TEST_CASE("shape and configuration errors") {
    CHECK_THROWS_AS(Gae({}, causal::AdjacencyMatrix::zeros(3), 1), ShapeError);
    GaeConfig bad;
    bad.embed_dim = 0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    Gae model({}, causal::AdjacencyMatrix::zeros(4), 1);
    CHECK_THROWS_AS(model.predict(Tensor({2, 3})), ShapeError);
}
