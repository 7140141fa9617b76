#pragma once

// Brute-force reference implementations. Each one follows the textbook
// definition as directly as possible and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace lungcrct::testing {

/// Distance correlation written out with explicit loops over the centring sums.
inline double dcor_bruteforce(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    auto centred = [n](const std::vector<double>& v) {
        std::vector<std::vector<double>> d(n, std::vector<double>(n));
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t l = 0; l < n; ++l) d[k][l] = std::abs(v[k] - v[l]);
        std::vector<std::vector<double>> c(n, std::vector<double>(n));
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t l = 0; l < n; ++l) {
                double row = 0, col = 0, all = 0;
                for (std::size_t j = 0; j < n; ++j) row += d[k][j];
                for (std::size_t i = 0; i < n; ++i) col += d[i][l];
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j) all += d[i][j];
                c[k][l] = d[k][l] - row / n - col / n + all / (double(n) * n);
            }
        return c;
    };
    const auto a = centred(x), b = centred(y);
    double vxy = 0, vx = 0, vy = 0;
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) {
            vxy += a[k][l] * b[k][l];
            vx += a[k][l] * a[k][l];
            vy += b[k][l] * b[k][l];
        }
    const double nn = double(n) * n;
    vxy /= nn;
    vx /= nn;
    vy /= nn;
    if (vx * vy <= 0) return 0.0;
    return std::sqrt(vxy / std::sqrt(vx * vy));
}

using Adjacency = std::vector<std::vector<bool>>;

/// SHD over all relabelings of the first `permutable` nodes, enumerated
/// recursively. Counts differing matrix entries, then credits one for every
/// pair that is a pure reversal.
inline int shd_bruteforce(const Adjacency& g1, const Adjacency& g2, std::size_t permutable) {
    const std::size_t d = g1.size();
    auto distance = [&](const std::vector<std::size_t>& p) {
        // relabel g2: node i of the relabelled graph is node p[i] of g2
        int mismatched = 0, reversals = 0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                if (g1[i][j] != g2[p[i]][p[j]]) ++mismatched;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j) {
                const bool a_ij = g1[i][j], a_ji = g1[j][i];
                const bool b_ij = g2[p[i]][p[j]], b_ji = g2[p[j]][p[i]];
                if (a_ij && !a_ji && b_ji && !b_ij) ++reversals;
                if (a_ji && !a_ij && b_ij && !b_ji) ++reversals;
            }
        return mismatched - reversals;
    };
    std::vector<std::size_t> p(d);
    std::iota(p.begin(), p.end(), 0);
    int best = distance(p);
    std::vector<bool> used(permutable, false);
    std::function<void(std::size_t)> rec = [&](std::size_t pos) {
        if (pos == permutable) {
            best = std::min(best, distance(p));
            return;
        }
        for (std::size_t c = 0; c < permutable; ++c) {
            if (used[c]) continue;
            used[c] = true;
            p[pos] = c;
            rec(pos + 1);
            used[c] = false;
        }
    };
    rec(0);
    return best;
}

/// AUC as the Mann-Whitney statistic: fraction of (positive, negative) pairs
/// ranked correctly, ties counting one half.
inline double auc_mann_whitney(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0;
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 1) ++pos;
        else ++neg;
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] == 1) continue;
            if (scores[i] > scores[j]) wins += 1;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / (double(pos) * double(neg));
}

/// Cycle detection on a boolean adjacency by colouring DFS.
inline bool has_cycle(const Adjacency& g) {
    const std::size_t d = g.size();
    std::vector<int> colour(d, 0);
    std::function<bool(std::size_t)> visit = [&](std::size_t u) {
        colour[u] = 1;
        for (std::size_t v = 0; v < d; ++v) {
            if (!g[u][v]) continue;
            if (colour[v] == 1) return true;
            if (colour[v] == 0 && visit(v)) return true;
        }
        colour[u] = 2;
        return false;
    };
    for (std::size_t u = 0; u < d; ++u)
        if (colour[u] == 0 && visit(u)) return true;
    return false;
}

}  // namespace lungcrct::testing
