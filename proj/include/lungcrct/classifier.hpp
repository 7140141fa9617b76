#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "lungcrct/autograd.hpp"

namespace lungcrct::pipeline {

struct ClassifierConfig {
    std::size_t input_dim = 3;
    std::vector<std::size_t> hidden{32, 32};
    std::size_t epochs = 300;
    std::size_t batch_size = 80;
    double learning_rate = 1e-4;
    double bn_epsilon = 1e-3;
    double bn_momentum = 0.99;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Malignant (2) -> 1, normal and benign -> 0.
std::vector<int> malignant_labels(const std::vector<int>& labels);

/// Batch norm -> ELU hidden layers -> one sigmoid unit.
class Classifier {
public:
    explicit Classifier(ClassifierConfig config);

    const ClassifierConfig& config() const { return config_; }

    /// Probabilities [n,1]. Training mode normalises with batch statistics and
    /// updates the moving averages; inference uses the moving averages.
    Var forward(const Var& x, bool training);
    std::vector<double> predict(const Tensor& x) const;

    std::vector<Var> trainable_parameters() const;
    /// Includes the moving statistics.
    std::vector<std::pair<std::string, Var>> named_parameters() const;
    std::size_t parameter_count() const;

private:
    ClassifierConfig config_;
    Var gamma_, beta_, moving_mean_, moving_var_;
    std::vector<std::pair<Var, Var>> dense_;

    Var head(const Var& normalised) const;
    Tensor normalise_moving(const Tensor& x) const;
};

/// Mini-batch BCE training of a fresh classifier. Throws DataError when the
/// labels hold a single class.
Classifier train_classifier(const Tensor& x, const std::vector<int>& binary_labels, const ClassifierConfig& config);

struct Confusion {
    std::size_t tn = 0, fp = 0, fn = 0, tp = 0;
    std::size_t total() const { return tn + fp + fn + tp; }
};

struct MetricsRecord {
    double accuracy = 0;
    double macro_precision = 0;
    double macro_recall = 0;
    double macro_f1 = 0;
    double auc = 0;
    double sensitivity = 0;
    double specificity = 0;
    double npv = 0;
    Confusion confusion;

    void write_csv(std::ostream& os) const;
};

struct RocPoint {
    double threshold = 0;
    double fpr = 0;
    double tpr = 0;
};

/// Full ROC over the distinct scores, from (0,0) to (1,1). Tied scores move
/// along the diagonal together.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);
/// Trapezoidal area under roc_curve. Throws DataError for a single class.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);
void write_roc_csv(std::ostream& os, const std::vector<RocPoint>& roc);

/// Scores >= threshold are predicted positive.
Confusion confusion(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5);
MetricsRecord metrics(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5);
MetricsRecord evaluate(const Classifier& classifier, const Tensor& x, const std::vector<int>& binary_labels);

}  // namespace lungcrct::pipeline
