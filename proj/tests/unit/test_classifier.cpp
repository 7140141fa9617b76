#include <doctest.h>

#include <random>

#include "lungcrct/classifier.hpp"
#include "lungcrct/errors.hpp"
#include "support/oracles.hpp"

using namespace lungcrct;
using namespace lungcrct::pipeline;

namespace {

std::vector<double> scores_of(const std::vector<int>& y, std::mt19937_64& rng, double separation, int levels) {
    std::normal_distribution<double> g;
    std::vector<double> s(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        s[i] = g(rng) + separation * y[i];
        if (levels > 0) s[i] = std::round(s[i] * levels) / levels;  // force ties
    }
    return s;
}

}  // namespace

TEST_CASE("malignant relabelling") {
    CHECK(malignant_labels({0, 1, 2, 2, 1, 0}) == std::vector<int>{0, 0, 1, 1, 0, 0});
    CHECK_THROWS_AS(malignant_labels({0, 3}), DataError);
}

TEST_CASE("AUC equals the Mann-Whitney pair count") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 60; ++t) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng() % 199);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(rng() % 2);
        y[0] = 0;
        y[1] = 1;
        const auto s = scores_of(y, rng, 0.8, t % 3 == 0 ? 2 : 0);
        CHECK(std::abs(roc_auc(s, y) - testing::auc_mann_whitney(s, y)) <= 1e-10);
    }
}

TEST_CASE("perfect and random scores") {
    const std::vector<int> y{0, 0, 1, 1, 0, 1};
    const std::vector<double> s{0.1, 0.2, 0.9, 0.8, 0.3, 0.7};
    const auto m = metrics(s, y);
    for (double v : {m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1, m.auc, m.sensitivity,
                     m.specificity, m.npv})
        CHECK(v == 1.0);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u;
    std::vector<int> yy(1000);
    std::vector<double> ss(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        yy[i] = static_cast<int>(i % 2);
        ss[i] = u(rng);
    }
    CHECK(std::abs(roc_auc(ss, yy) - 0.5) <= 0.05);
    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), DataError);
    CHECK_THROWS_AS(metrics({0.1, 0.2}, {0, 0}), DataError);
}

TEST_CASE("rates from a hand-built confusion matrix") {
    // tp 3, fn 1, tn 4, fp 2
    const std::vector<int> y{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    const std::vector<double> s{0.9, 0.6, 0.5, 0.2, 0.1, 0.3, 0.4, 0.45, 0.7, 0.55};
    const auto m = metrics(s, y);
    CHECK(m.confusion.tp == 3);
    CHECK(m.confusion.fn == 1);
    CHECK(m.confusion.tn == 4);
    CHECK(m.confusion.fp == 2);
    CHECK(m.confusion.total() == 10);
    CHECK(m.accuracy == doctest::Approx(0.7));
    CHECK(m.sensitivity == doctest::Approx(0.75));
    CHECK(m.specificity == doctest::Approx(4.0 / 6));
    CHECK(m.npv == doctest::Approx(0.8));
    CHECK(m.macro_precision == doctest::Approx((0.6 + 0.8) / 2));
    CHECK(m.macro_recall == doctest::Approx((0.75 + 4.0 / 6) / 2));
    const double f1_pos = 2 * 0.6 * 0.75 / 1.35, f1_neg = 2 * 0.8 * (4.0 / 6) / (0.8 + 4.0 / 6);
    CHECK(m.macro_f1 == doctest::Approx((f1_pos + f1_neg) / 2));
}

TEST_CASE("ROC curve runs from the origin to (1,1)") {
    const std::vector<int> y{0, 1, 0, 1, 1};
    const std::vector<double> s{0.3, 0.3, 0.1, 0.8, 0.5};
    const auto roc = roc_curve(s, y);
    CHECK(roc.front().fpr == 0.0);
    CHECK(roc.front().tpr == 0.0);
    CHECK(roc.back().fpr == 1.0);
    CHECK(roc.back().tpr == 1.0);
    CHECK(roc.size() == 5);  // origin + 4 distinct scores
}

TEST_CASE("classifier architecture and capacity") {
    ClassifierConfig cfg;
    Classifier clf(cfg);
    // batch norm (gamma, beta, two moving statistics) 12 + 128 + 1056 + 33
    CHECK(clf.parameter_count() == 1229);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    const std::size_t n = 120;
    Tensor x({n, 3});
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(i % 2);
        for (std::size_t j = 0; j < 3; ++j) x.at(i, j) = g(rng) * 0.3 + (y[i] ? 2.0 : -2.0) + j;
    }
    cfg.epochs = 150;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 40;
    const Classifier fitted = train_classifier(x, y, cfg);
    const auto m = evaluate(fitted, x, y);
    CHECK(m.accuracy == 1.0);

    const Classifier again = train_classifier(x, y, cfg);
    CHECK(again.predict(x) == fitted.predict(x));

    std::vector<int> one(n, 1);
    CHECK_THROWS_AS(train_classifier(x, one, cfg), DataError);
    CHECK_THROWS_AS(fitted.predict(Tensor({2, 4})), ShapeError);
}

TEST_CASE("inference uses moving statistics") {
    ClassifierConfig cfg;
    cfg.bn_momentum = 0.0;  // moving stats become the last batch's
    Classifier clf(cfg);
    std::mt19937_64 rng(4);
    Tensor x({16, 3});
    std::normal_distribution<double> g;
    for (auto& v : x.values()) v = g(rng) * 2 + 1;
    const Tensor train_out = clf.forward(constant(x), true).value();
    const auto infer = clf.predict(x);
    for (std::size_t i = 0; i < 16; ++i) CHECK(infer[i] == doctest::Approx(train_out[i]).epsilon(1e-3));
}
