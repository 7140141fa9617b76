#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lungcrct/autograd.hpp"

namespace lungcrct::causal {

// Edge convention used throughout: weights(i, j) != 0 means i -> j.

/// Square boolean matrix, row-major.
struct BoolMatrix {
    std::size_t d = 0;
    std::vector<char> cells;

    BoolMatrix() = default;
    explicit BoolMatrix(std::size_t d) : d(d), cells(d * d, 0) {}
    bool operator()(std::size_t i, std::size_t j) const { return cells[i * d + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v = true) { cells[i * d + j] = v ? 1 : 0; }
    friend bool operator==(const BoolMatrix&, const BoolMatrix&) = default;
};

/// Trainable weighted adjacency with its structural-zero mask.
struct AdjacencyMatrix {
    Tensor weights;        // [d,d]
    BoolMatrix forbidden;  // true = structurally zero (diagonal always included)

    std::size_t d() const { return forbidden.d; }

    /// Zero weights; forbids self-loops plus the given extra entries.
    static AdjacencyMatrix zeros(std::size_t d, const std::vector<std::pair<std::size_t, std::size_t>>&
                                                    extra_forbidden = {});
    /// Zero weights with every edge leaving the last node (the label) forbidden.
    static AdjacencyMatrix with_label_blacklist(std::size_t d);

    /// 1.0 where an entry is trainable, 0.0 where structurally zero.
    Tensor allowed_mask() const;
    /// Zero every forbidden entry in place.
    void apply_mask();
    /// True iff the diagonal and every forbidden entry are exactly zero.
    bool respects_mask() const;
};

using BinaryGraph = BoolMatrix;

// ---------------------------------------------------------------------------
// Acyclicity constraints

/// tr(exp(W o W)) - d. Writes (exp(W o W))^T o 2W to `grad` when given.
double h_trace_exp(const Tensor& w, Tensor* grad = nullptr);

/// -log det(sI - W o W) + d log s. Writes (sI - W o W)^{-T} o 2W to `grad`.
/// Throws InfeasibleError outside the M-matrix region (spectral radius of
/// W o W not below s, or nonpositive determinant).
double h_logdet(const Tensor& w, double s, Tensor* grad = nullptr);

/// Spectral radius of W o W is strictly below s.
bool logdet_feasible(const Tensor& w, double s);

enum class Constraint { TraceExp, LogDet };

Var h_trace_exp(const Var& w);
Var h_logdet(const Var& w, double s);
Var acyclicity(const Var& w, Constraint constraint, double s = 1.0);

// ---------------------------------------------------------------------------
// Augmented Lagrangian schedule

struct AugLagState {
    double alpha = 0.6;
    double rho = 0.1;
    double beta = 1.01;
    double gamma = 0.9;
    double s = 1.0;
    double prev_h = 0.0;  // h of the zero-initialised adjacency

    /// Throws ArgumentError unless beta > 1, 0 < gamma < 1, s > 0, rho > 0.
    void validate() const;
};

/// alpha += rho * h_new; rho *= beta if |h_new| >= gamma |prev_h|; prev_h = h_new.
AugLagState auglag_update(AugLagState state, double h_new);

// ---------------------------------------------------------------------------
// Graphs

/// Keeps the round(fraction * pool) largest |weights| among non-diagonal,
/// non-forbidden entries; ties resolve by (row, col) order.
BinaryGraph binarize(const AdjacencyMatrix& a, double fraction);

/// Edge edits (insert, delete, reverse = 1) turning g1 into g2. With
/// `match_permutations`, minimised over relabelings of every node except the
/// last (the label).
int shd(const BinaryGraph& g1, const BinaryGraph& g2, bool match_permutations);

bool is_acyclic(const BinaryGraph& g);
/// Kahn order with smallest-index-first tie-breaking; throws if cyclic.
std::vector<std::size_t> topological_order(const BinaryGraph& g);
/// Number of edges on the longest directed path; throws if cyclic.
std::size_t longest_path_length(const BinaryGraph& g);
/// Nodes reachable from `node` (excluding itself), ascending.
std::vector<std::size_t> descendants(const BinaryGraph& g, std::size_t node);

/// One full reconstruction pass of a fitted structural model on a single vector.
using Predictor = std::function<std::vector<double>(std::span<const double>)>;

/// do(q[index] = value): recomputes every descendant of `index` through
/// `predict`, one pass per level of the longest path, never touching
/// non-descendants. `label_node`, when given, may not be intervened on.
std::vector<double> intervene_propagate(std::span<const double> q, std::size_t index, double value,
                                        const Predictor& predict, const BinaryGraph& graph,
                                        std::optional<std::size_t> label_node = std::nullopt);

// ---------------------------------------------------------------------------
// CSV (d rows of d comma-separated values)

void write_matrix_csv(std::ostream& os, const Tensor& m);
void write_graph_csv(std::ostream& os, const BinaryGraph& g);
Tensor read_matrix_csv(std::istream& is);
BinaryGraph read_graph_csv(std::istream& is);

}  // namespace lungcrct::causal
