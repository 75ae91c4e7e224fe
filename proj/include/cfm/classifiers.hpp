#pragma once

#include "cfm/matrix.hpp"
#include "cfm/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cfm {

// Brute-force k-nearest-neighbour vote. Distance ties resolve toward the
// lower training index, vote ties toward the smaller class label, so
// predictions are invariant to training-row permutations up to those rules.
inline std::vector<int> knn_predict(const Matrix& train_x, const std::vector<int>& train_y,
                                    const Matrix& test_x, int k_neighbors) {
    if (train_x.rows == 0) throw std::invalid_argument("knn: empty training set");
    if (static_cast<int>(train_y.size()) != train_x.rows)
        throw std::invalid_argument("knn: label count mismatch");
    if (k_neighbors < 1 || k_neighbors > train_x.rows)
        throw std::invalid_argument("knn: k_neighbors outside [1, train size]");
    if (test_x.cols != train_x.cols)
        throw std::invalid_argument("knn: feature width mismatch " + test_x.shape_str() + " vs " +
                                    train_x.shape_str());

    std::vector<int> out(static_cast<std::size_t>(test_x.rows));
    std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(train_x.rows));
    for (int t = 0; t < test_x.rows; ++t) {
        const double* q = test_x.row_ptr(t);
        for (int i = 0; i < train_x.rows; ++i) {
            const double* p = train_x.row_ptr(i);
            double d2 = 0.0;
            for (int j = 0; j < train_x.cols; ++j) {
                const double d = q[j] - p[j];
                d2 += d * d;
            }
            dist[static_cast<std::size_t>(i)] = {d2, i};
        }
        std::partial_sort(dist.begin(), dist.begin() + k_neighbors, dist.end());
        std::map<int, int> votes;
        for (int n = 0; n < k_neighbors; ++n)
            votes[train_y[static_cast<std::size_t>(dist[static_cast<std::size_t>(n)].second)]]++;
        int best_label = 0, best_count = -1;
        for (auto [label, count] : votes)
            if (count > best_count) {  // map iterates ascending: first max wins ties
                best_count = count;
                best_label = label;
            }
        out[static_cast<std::size_t>(t)] = best_label;
    }
    return out;
}

struct ErtConfig {
    int n_trees = 100;
    int max_depth = 0;  // 0 = grow to purity
};

namespace detail {

struct ErtNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;  // leaf payload when feature < 0
};

inline int majority_label(const std::vector<int>& rows, const std::vector<int>& y) {
    std::map<int, int> counts;
    for (int r : rows) counts[y[static_cast<std::size_t>(r)]]++;
    int best_label = 0, best_count = -1;
    for (auto [label, count] : counts)
        if (count > best_count) {
            best_count = count;
            best_label = label;
        }
    return best_label;
}

// Totally randomized split: one feature drawn uniformly among those with a
// non-degenerate range at the node, one threshold drawn uniformly inside
// that range. Both children are guaranteed non-empty.
inline int build_ert_node(std::vector<ErtNode>& nodes, const Matrix& x, const std::vector<int>& y,
                          std::vector<int>&& rows, int depth, int max_depth, Rng& rng) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();

    bool pure = true;
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (y[static_cast<std::size_t>(rows[i])] != y[static_cast<std::size_t>(rows[0])]) {
            pure = false;
            break;
        }
    std::vector<int> usable;
    if (!pure && (max_depth == 0 || depth < max_depth)) {
        for (int j = 0; j < x.cols; ++j) {
            double lo = x(rows[0], j), hi = lo;
            for (int r : rows) {
                lo = std::min(lo, x(r, j));
                hi = std::max(hi, x(r, j));
            }
            if (hi > lo) usable.push_back(j);
        }
    }
    if (pure || usable.empty()) {
        nodes[static_cast<std::size_t>(id)].label = majority_label(rows, y);
        return id;
    }

    const int feature =
        usable[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(usable.size()) - 1))];
    double lo = x(rows[0], feature), hi = lo;
    for (int r : rows) {
        lo = std::min(lo, x(r, feature));
        hi = std::max(hi, x(r, feature));
    }
    const double threshold = rng.uniform(lo, hi);

    std::vector<int> left_rows, right_rows;
    for (int r : rows)
        (x(r, feature) <= threshold ? left_rows : right_rows).push_back(r);
    rows.clear();

    const int left = build_ert_node(nodes, x, y, std::move(left_rows), depth + 1, max_depth, rng);
    const int right = build_ert_node(nodes, x, y, std::move(right_rows), depth + 1, max_depth, rng);
    nodes[static_cast<std::size_t>(id)].feature = feature;
    nodes[static_cast<std::size_t>(id)].threshold = threshold;
    nodes[static_cast<std::size_t>(id)].left = left;
    nodes[static_cast<std::size_t>(id)].right = right;
    return id;
}

inline int ert_traverse(const std::vector<ErtNode>& nodes, const double* row) {
    int id = 0;
    while (nodes[static_cast<std::size_t>(id)].feature >= 0) {
        const auto& n = nodes[static_cast<std::size_t>(id)];
        id = row[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(id)].label;
}

}  // namespace detail

// Ensemble of totally randomized trees over the full training sample,
// majority vote with ties toward the smaller label. Tree t draws from its own
// stream derive_seed(seed, t), so the forest is reproducible for a given seed.
inline std::vector<int> ert_predict(const Matrix& train_x, const std::vector<int>& train_y,
                                    const Matrix& test_x, const ErtConfig& cfg,
                                    std::uint64_t seed) {
    if (train_x.rows == 0) throw std::invalid_argument("ert: empty training set");
    if (static_cast<int>(train_y.size()) != train_x.rows)
        throw std::invalid_argument("ert: label count mismatch");
    if (cfg.n_trees < 1) throw std::invalid_argument("ert: n_trees must be >= 1");
    if (test_x.cols != train_x.cols)
        throw std::invalid_argument("ert: feature width mismatch " + test_x.shape_str() + " vs " +
                                    train_x.shape_str());

    std::vector<std::map<int, int>> votes(static_cast<std::size_t>(test_x.rows));
    for (int t = 0; t < cfg.n_trees; ++t) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        std::vector<detail::ErtNode> nodes;
        std::vector<int> all_rows(static_cast<std::size_t>(train_x.rows));
        std::iota(all_rows.begin(), all_rows.end(), 0);
        detail::build_ert_node(nodes, train_x, train_y, std::move(all_rows), 0, cfg.max_depth, rng);
        for (int i = 0; i < test_x.rows; ++i)
            votes[static_cast<std::size_t>(i)][detail::ert_traverse(nodes, test_x.row_ptr(i))]++;
    }
    std::vector<int> out(static_cast<std::size_t>(test_x.rows));
    for (int i = 0; i < test_x.rows; ++i) {
        int best_label = 0, best_count = -1;
        for (auto [label, count] : votes[static_cast<std::size_t>(i)])
            if (count > best_count) {
                best_count = count;
                best_label = label;
            }
        out[static_cast<std::size_t>(i)] = best_label;
    }
    return out;
}

}  // namespace cfm
