#include "lungcrct/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "lungcrct/adam.hpp"
#include "lungcrct/errors.hpp"
#include "lungcrct/ops.hpp"

namespace lungcrct::pipeline {

void ClassifierConfig::validate() const {
    if (input_dim < 1) throw ArgumentError("classifier input_dim must be >= 1");
    for (auto h : hidden)
        if (h < 1) throw ArgumentError("classifier hidden widths must be >= 1");
    if (batch_size < 1) throw ArgumentError("classifier batch size must be >= 1");
    if (!(learning_rate > 0)) throw ArgumentError("classifier learning rate must be positive");
    if (!(bn_epsilon > 0) || !(bn_momentum >= 0 && bn_momentum < 1))
        throw ArgumentError("classifier batch-norm epsilon must be positive and momentum in [0,1)");
}

std::vector<int> malignant_labels(const std::vector<int>& labels) {
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] > 2) throw DataError("labels must be 0, 1 or 2");
        out[i] = labels[i] == 2 ? 1 : 0;
    }
    return out;
}

Classifier::Classifier(ClassifierConfig config) : config_(std::move(config)) {
    config_.validate();
    const std::size_t d = config_.input_dim;
    gamma_ = parameter(Tensor({d}, 1.0));
    beta_ = parameter(Tensor({d}, 0.0));
    moving_mean_ = constant(Tensor({d}, 0.0));
    moving_var_ = constant(Tensor({d}, 1.0));
    std::mt19937_64 rng(config_.seed);
    std::size_t in = d;
    std::vector<std::size_t> widths = config_.hidden;
    widths.push_back(1);
    for (std::size_t out : widths) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-limit, limit);
        Tensor w({in, out});
        for (auto& v : w.values()) v = u(rng);
        dense_.emplace_back(parameter(std::move(w)), parameter(Tensor({out}, 0.0)));
        in = out;
    }
}

Var Classifier::head(const Var& h0) const {
    Var h = h0;
    for (std::size_t l = 0; l < dense_.size(); ++l) {
        h = dense(h, dense_[l].first, dense_[l].second);
        h = l + 1 < dense_.size() ? elu(h) : sigmoid(h);
    }
    return h;
}

Var Classifier::forward(const Var& x, bool training) {
    if (x.shape().size() != 2 || x.shape()[1] != config_.input_dim)
        throw ShapeError("classifier expects [n," + std::to_string(config_.input_dim) + "] inputs, got " +
                         shape_str(x.shape()));
    if (!training) return head(constant(normalise_moving(x.value())));
    BatchStats stats;
    const Var normalised = batch_norm(x, gamma_, beta_, config_.bn_epsilon, &stats);
    const double m = config_.bn_momentum;
    Tensor& mm = moving_mean_.mutable_value();
    Tensor& mv = moving_var_.mutable_value();
    for (std::size_t c = 0; c < config_.input_dim; ++c) {
        mm[c] = m * mm[c] + (1 - m) * stats.mean[c];
        mv[c] = m * mv[c] + (1 - m) * stats.var[c];
    }
    return head(normalised);
}

Tensor Classifier::normalise_moving(const Tensor& x) const {
    const std::size_t n = x.dim(0), d = config_.input_dim;
    Tensor out({n, d});
    for (std::size_t c = 0; c < d; ++c) {
        const double inv = 1.0 / std::sqrt(moving_var_.value()[c] + config_.bn_epsilon);
        for (std::size_t r = 0; r < n; ++r)
            out.at(r, c) = (x.at(r, c) - moving_mean_.value()[c]) * inv * gamma_.value()[c] + beta_.value()[c];
    }
    return out;
}

std::vector<double> Classifier::predict(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != config_.input_dim)
        throw ShapeError("classifier expects [n," + std::to_string(config_.input_dim) + "] inputs, got " +
                         shape_str(x.shape()));
    return head(constant(normalise_moving(x))).value().vec();
}

std::vector<Var> Classifier::trainable_parameters() const {
    std::vector<Var> out{gamma_, beta_};
    for (const auto& [w, b] : dense_) {
        out.push_back(w);
        out.push_back(b);
    }
    return out;
}

std::vector<std::pair<std::string, Var>> Classifier::named_parameters() const {
    std::vector<std::pair<std::string, Var>> out{{"clf.bn.gamma", gamma_},
                                                 {"clf.bn.beta", beta_},
                                                 {"clf.bn.moving_mean", moving_mean_},
                                                 {"clf.bn.moving_var", moving_var_}};
    for (std::size_t l = 0; l < dense_.size(); ++l) {
        out.emplace_back("clf.dense." + std::to_string(l) + ".weight", dense_[l].first);
        out.emplace_back("clf.dense." + std::to_string(l) + ".bias", dense_[l].second);
    }
    return out;
}

std::size_t Classifier::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : named_parameters()) n += v.size();
    return n;
}

Classifier train_classifier(const Tensor& x, const std::vector<int>& labels, const ClassifierConfig& config) {
    if (x.rank() != 2 || x.dim(0) != labels.size() || labels.empty())
        throw ShapeError("classifier training needs [n,d] inputs with n labels");
    std::size_t positives = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw DataError("classifier labels must be 0 or 1");
        positives += static_cast<std::size_t>(y);
    }
    if (positives == 0 || positives == labels.size())
        throw DataError("classifier training labels hold a single class");

    Classifier clf(config);
    Adam opt(config.learning_rate);
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t n = labels.size(), d = x.dim(1);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b0 = 0; b0 < n; b0 += config.batch_size) {
            const std::size_t m = std::min(config.batch_size, n - b0);
            Tensor xb({m, d}), yb({m, 1});
            for (std::size_t i = 0; i < m; ++i) {
                std::copy(x.data() + order[b0 + i] * d, x.data() + (order[b0 + i] + 1) * d, xb.data() + i * d);
                yb[i] = labels[order[b0 + i]];
            }
            const Var loss = mean(bce(clf.forward(constant(xb), true), yb));
            backward(loss);
            auto params = clf.trainable_parameters();
            opt.step(params);
        }
    }
    return clf;
}

namespace {

void check_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw ShapeError("scores and labels must be nonempty and of equal length");
    for (int y : labels)
        if (y != 0 && y != 1) throw DataError("binary labels must be 0 or 1");
}

double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

}  // namespace

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_binary(scores, labels);
    const std::size_t pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw DataError("ROC is undefined when the labels hold a single class");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<RocPoint> roc{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp)++;
        roc.push_back({s, ratio(fp, neg), ratio(tp, pos)});
    }
    return roc;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    const auto roc = roc_curve(scores, labels);
    double area = 0;
    for (std::size_t i = 1; i < roc.size(); ++i)
        area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2;
    return area;
}

void write_roc_csv(std::ostream& os, const std::vector<RocPoint>& roc) {
    os << "# lungcrct roc v1\nthreshold,fpr,tpr\n";
    const auto prec = os.precision(17);
    for (const auto& p : roc) os << p.threshold << ',' << p.fpr << ',' << p.tpr << '\n';
    os.precision(prec);
}

Confusion confusion(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
    check_binary(scores, labels);
    Confusion c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (labels[i]) (predicted ? c.tp : c.fn)++;
        else (predicted ? c.fp : c.tn)++;
    }
    return c;
}

MetricsRecord metrics(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
    MetricsRecord m;
    m.auc = roc_auc(scores, labels);
    const Confusion c = confusion(scores, labels, threshold);
    m.confusion = c;
    m.accuracy = ratio(c.tp + c.tn, c.total());
    m.sensitivity = ratio(c.tp, c.tp + c.fn);
    m.specificity = ratio(c.tn, c.tn + c.fp);
    m.npv = ratio(c.tn, c.tn + c.fn);
    const double ppv = ratio(c.tp, c.tp + c.fp);
    const auto f1 = [](double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; };
    m.macro_precision = (ppv + m.npv) / 2;
    m.macro_recall = (m.sensitivity + m.specificity) / 2;
    m.macro_f1 = (f1(ppv, m.sensitivity) + f1(m.npv, m.specificity)) / 2;
    return m;
}

MetricsRecord evaluate(const Classifier& classifier, const Tensor& x, const std::vector<int>& labels) {
    return metrics(classifier.predict(x), labels);
}

void MetricsRecord::write_csv(std::ostream& os) const {
    os << "# lungcrct metrics v1\nmetric,value\n";
    const auto prec = os.precision(17);
    os << "accuracy," << accuracy << "\nmacro_precision," << macro_precision << "\nmacro_recall," << macro_recall
       << "\nmacro_f1," << macro_f1 << "\nauc," << auc << "\nsensitivity," << sensitivity << "\nspecificity,"
       << specificity << "\nnpv," << npv << "\ntn," << confusion.tn << "\nfp," << confusion.fp << "\nfn,"
       << confusion.fn << "\ntp," << confusion.tp << '\n';
    os.precision(prec);
}

}  // namespace lungcrct::pipeline
