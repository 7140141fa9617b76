#include "lungcrct/causal.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lungcrct/errors.hpp"

namespace lungcrct::causal {

namespace {

using Mat = Eigen::MatrixXd;

void require_square(const char* op, const Tensor& w) {
    if (w.rank() != 2 || w.dim(0) != w.dim(1))
        throw ShapeError(std::string(op) + ": expected a square matrix, got " +
                         shape_str(w.shape()));
}

Mat hadamard_square(const Tensor& w) {
    const std::size_t d = w.dim(0);
    Mat m(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = w.at(i, j) * w.at(i, j);
    return m;
}

/// Scaling and squaring with a Taylor series run to machine precision.
Mat expm(const Mat& m) {
    const double norm = m.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Mat a = m / std::ldexp(1.0, squarings);
    Mat result = Mat::Identity(m.rows(), m.cols());
    Mat term = result;
    for (int k = 1; k < 40; ++k) {
        term = term * a / static_cast<double>(k);
        result += term;
        if (term.cwiseAbs().maxCoeff() < 1e-18 * result.cwiseAbs().maxCoeff()) break;
    }
    for (int i = 0; i < squarings; ++i) result = result * result;
    return result;
}

Tensor to_tensor(const Mat& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            t.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
    return t;
}

double spectral_radius(const Mat& m) {
    Eigen::EigenSolver<Mat> es(m, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

// ---------------------------------------------------------------------------

AdjacencyMatrix AdjacencyMatrix::zeros(
    std::size_t d, const std::vector<std::pair<std::size_t, std::size_t>>& extra_forbidden) {
    if (d < 2) throw ArgumentError("adjacency: need at least 2 nodes");
    AdjacencyMatrix a;
    a.weights = Tensor({d, d}, 0.0);
    a.forbidden = BoolMatrix(d);
    for (std::size_t i = 0; i < d; ++i) a.forbidden.set(i, i);
    for (auto [i, j] : extra_forbidden) {
        if (i >= d || j >= d) throw ArgumentError("adjacency: forbidden entry out of range");
        a.forbidden.set(i, j);
    }
    return a;
}

AdjacencyMatrix AdjacencyMatrix::with_label_blacklist(std::size_t d) {
    std::vector<std::pair<std::size_t, std::size_t>> extra;
    for (std::size_t j = 0; j + 1 < d; ++j) extra.emplace_back(d - 1, j);
    return zeros(d, extra);
}

Tensor AdjacencyMatrix::allowed_mask() const {
    Tensor m({d(), d()}, 1.0);
    for (std::size_t i = 0; i < m.size(); ++i)
        if (forbidden.cells[i]) m[i] = 0.0;
    return m;
}

void AdjacencyMatrix::apply_mask() {
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (forbidden.cells[i]) weights[i] = 0.0;
}

bool AdjacencyMatrix::respects_mask() const {
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (forbidden.cells[i] && weights[i] != 0.0) return false;
    for (std::size_t i = 0; i < d(); ++i)
        if (weights.at(i, i) != 0.0) return false;
    return true;
}

// ---------------------------------------------------------------------------

double h_trace_exp(const Tensor& w, Tensor* grad) {
    require_square("h_trace_exp", w);
    const Mat e = expm(hadamard_square(w));
    if (grad) {
        *grad = to_tensor(e.transpose());
        for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] *= 2.0 * w[i];
    }
    return e.trace() - static_cast<double>(w.dim(0));
}

bool logdet_feasible(const Tensor& w, double s) {
    require_square("logdet_feasible", w);
    return spectral_radius(hadamard_square(w)) < s;
}

double h_logdet(const Tensor& w, double s, Tensor* grad) {
    require_square("h_logdet", w);
    if (!(s > 0)) throw ArgumentError("h_logdet: s must be positive");
    const std::size_t d = w.dim(0);
    const Mat m = hadamard_square(w);
    const double radius = spectral_radius(m);
    if (!(radius < s))
        throw InfeasibleError("h_logdet: left feasible region (spectral radius " +
                              std::to_string(radius) + " >= s = " + std::to_string(s) + ")");
    const Mat sys = s * Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) - m;
    Eigen::PartialPivLU<Mat> lu(sys);
    const double det = lu.determinant();
    if (!(det > 0))
        throw InfeasibleError("h_logdet: left feasible region (det(sI - W o W) = " +
                              std::to_string(det) + ")");
    if (grad) {
        *grad = to_tensor(lu.inverse().transpose());
        for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] *= 2.0 * w[i];
    }
    return -std::log(det) + static_cast<double>(d) * std::log(s);
}

Var h_trace_exp(const Var& w) {
    auto g = std::make_shared<Tensor>();
    const double h = h_trace_exp(w.value(), g.get());
    return make_op(Tensor::scalar(h), {w}, [g](Node& self) {
        auto& gw = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += self.grad[0] * (*g)[i];
    });
}

Var h_logdet(const Var& w, double s) {
    auto g = std::make_shared<Tensor>();
    const double h = h_logdet(w.value(), s, g.get());
    return make_op(Tensor::scalar(h), {w}, [g](Node& self) {
        auto& gw = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += self.grad[0] * (*g)[i];
    });
}

Var acyclicity(const Var& w, Constraint constraint, double s) {
    return constraint == Constraint::TraceExp ? h_trace_exp(w) : h_logdet(w, s);
}

// ---------------------------------------------------------------------------

void AugLagState::validate() const {
    if (!(beta > 1)) throw ArgumentError("auglag: beta must exceed 1");
    if (!(gamma > 0 && gamma < 1)) throw ArgumentError("auglag: gamma must lie in (0, 1)");
    if (!(s > 0)) throw ArgumentError("auglag: s must be positive");
    if (!(rho > 0)) throw ArgumentError("auglag: rho must be positive");
}

AugLagState auglag_update(AugLagState state, double h_new) {
    state.alpha += state.rho * h_new;
    if (std::abs(h_new) >= state.gamma * std::abs(state.prev_h)) state.rho *= state.beta;
    state.prev_h = h_new;
    return state;
}

// ---------------------------------------------------------------------------

BinaryGraph binarize(const AdjacencyMatrix& a, double fraction) {
    if (!(fraction > 0 && fraction <= 1))
        throw ArgumentError("binarize: fraction must lie in (0, 1]");
    const std::size_t d = a.d();
    struct Candidate {
        double magnitude;
        std::size_t i, j;
    };
    std::vector<Candidate> pool;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (i != j && !a.forbidden(i, j)) pool.push_back({std::abs(a.weights.at(i, j)), i, j});
    std::stable_sort(pool.begin(), pool.end(), [](const Candidate& x, const Candidate& y) {
        return x.magnitude > y.magnitude;
    });
    const auto keep = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(pool.size())));
    BinaryGraph g(d);
    for (std::size_t k = 0; k < keep && k < pool.size(); ++k) g.set(pool[k].i, pool[k].j);
    return g;
}

namespace {

int pair_cost(bool a_ij, bool a_ji, bool b_ij, bool b_ji) {
    if (a_ij == b_ij && a_ji == b_ji) return 0;
    const bool single_a = a_ij != a_ji, single_b = b_ij != b_ji;
    if (single_a && single_b) return 1;  // reversal
    return (a_ij != b_ij) + (a_ji != b_ji);
}

int shd_under(const BinaryGraph& g1, const BinaryGraph& g2, const std::vector<std::size_t>& perm) {
    int total = 0;
    for (std::size_t i = 0; i < g1.d; ++i)
        for (std::size_t j = i + 1; j < g1.d; ++j)
            total += pair_cost(g1(i, j), g1(j, i), g2(perm[i], perm[j]), g2(perm[j], perm[i]));
    return total;
}

}  // namespace

int shd(const BinaryGraph& g1, const BinaryGraph& g2, bool match_permutations) {
    if (g1.d != g2.d)
        throw ArgumentError("shd: graphs have " + std::to_string(g1.d) + " and " +
                            std::to_string(g2.d) + " nodes");
    std::vector<std::size_t> perm(g1.d);
    std::iota(perm.begin(), perm.end(), 0);
    int best = shd_under(g1, g2, perm);
    if (!match_permutations || g1.d < 2) return best;
    const auto last = perm.end() - 1;  // the label keeps its identity
    while (std::next_permutation(perm.begin(), last)) best = std::min(best, shd_under(g1, g2, perm));
    return best;
}

std::vector<std::size_t> topological_order(const BinaryGraph& g) {
    std::vector<std::size_t> indeg(g.d, 0), order;
    for (std::size_t i = 0; i < g.d; ++i)
        for (std::size_t j = 0; j < g.d; ++j)
            if (g(i, j)) ++indeg[j];
    std::vector<bool> done(g.d, false);
    while (order.size() < g.d) {
        std::size_t pick = g.d;
        for (std::size_t v = 0; v < g.d; ++v)
            if (!done[v] && indeg[v] == 0) {
                pick = v;
                break;
            }
        if (pick == g.d) throw ArgumentError("graph contains a cycle");
        done[pick] = true;
        order.push_back(pick);
        for (std::size_t j = 0; j < g.d; ++j)
            if (g(pick, j)) --indeg[j];
    }
    return order;
}

bool is_acyclic(const BinaryGraph& g) {
    try {
        topological_order(g);
        return true;
    } catch (const ArgumentError&) {
        return false;
    }
}

std::size_t longest_path_length(const BinaryGraph& g) {
    const auto order = topological_order(g);
    std::vector<std::size_t> depth(g.d, 0);
    std::size_t best = 0;
    for (auto u : order)
        for (std::size_t v = 0; v < g.d; ++v)
            if (g(u, v)) {
                depth[v] = std::max(depth[v], depth[u] + 1);
                best = std::max(best, depth[v]);
            }
    return best;
}

std::vector<std::size_t> descendants(const BinaryGraph& g, std::size_t node) {
    std::vector<bool> seen(g.d, false);
    std::vector<std::size_t> stack{node};
    while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        for (std::size_t v = 0; v < g.d; ++v)
            if (g(u, v) && !seen[v]) {
                seen[v] = true;
                stack.push_back(v);
            }
    }
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < g.d; ++v)
        if (seen[v] && v != node) out.push_back(v);
    return out;
}

std::vector<double> intervene_propagate(std::span<const double> q, std::size_t index, double value,
                                        const Predictor& predict, const BinaryGraph& graph,
                                        std::optional<std::size_t> label_node) {
    if (q.size() != graph.d)
        throw ArgumentError("intervene: vector has " + std::to_string(q.size()) +
                            " entries for a " + std::to_string(graph.d) + "-node graph");
    if (index >= graph.d) throw ArgumentError("intervene: node index out of range");
    if (label_node && *label_node == index)
        throw ArgumentError("intervene: the label node cannot be intervened on");
    const std::size_t passes = longest_path_length(graph);  // throws on cycles
    const auto affected = descendants(graph, index);

    std::vector<double> state(q.begin(), q.end());
    state[index] = value;
    if (affected.empty()) return state;
    for (std::size_t pass = 0; pass < passes; ++pass) {
        const auto predicted = predict(state);
        if (predicted.size() != state.size())
            throw ShapeError("intervene: predictor returned " + std::to_string(predicted.size()) +
                             " values");
        for (auto v : affected) state[v] = predicted[v];
        state[index] = value;
    }
    return state;
}

// ---------------------------------------------------------------------------

void write_matrix_csv(std::ostream& os, const Tensor& m) {
    require_square("write_matrix_csv", m);
    const auto prec = os.precision(17);
    for (std::size_t i = 0; i < m.dim(0); ++i) {
        for (std::size_t j = 0; j < m.dim(1); ++j) os << (j ? "," : "") << m.at(i, j);
        os << '\n';
    }
    os.precision(prec);
}

void write_graph_csv(std::ostream& os, const BinaryGraph& g) {
    for (std::size_t i = 0; i < g.d; ++i) {
        for (std::size_t j = 0; j < g.d; ++j) os << (j ? "," : "") << (g(i, j) ? 1 : 0);
        os << '\n';
    }
}

Tensor read_matrix_csv(std::istream& is) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                throw DataError("matrix csv: cannot parse '" + cell + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    const std::size_t d = rows.size();
    if (d == 0) throw DataError("matrix csv: empty");
    Tensor m({d, d});
    for (std::size_t i = 0; i < d; ++i) {
        if (rows[i].size() != d)
            throw DataError("matrix csv: row " + std::to_string(i) + " has " +
                            std::to_string(rows[i].size()) + " values, expected " +
                            std::to_string(d));
        for (std::size_t j = 0; j < d; ++j) m.at(i, j) = rows[i][j];
    }
    return m;
}

BinaryGraph read_graph_csv(std::istream& is) {
    const Tensor m = read_matrix_csv(is);
    BinaryGraph g(m.dim(0));
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] != 0.0 && m[i] != 1.0) throw DataError("graph csv: entries must be 0 or 1");
        g.cells[i] = m[i] != 0.0;
    }
    return g;
}

}  // namespace lungcrct::causal
