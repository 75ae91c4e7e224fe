#pragma once

#include "cfm/classifiers.hpp"
#include "cfm/dataset.hpp"
#include "cfm/model.hpp"
#include "cfm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace cfm {

struct Provenance {
    std::uint64_t seed = 0;
    double gamma = 0.0;
    std::string method;
};

struct SelectionResult {
    std::vector<int> ranked_indices;  // descending score, ties by ascending index
    std::vector<double> scores;
    int k = 0;
    double rho = 0.0;
    Provenance provenance;
};

inline SelectionResult top_k(const Matrix& mask_row, int k, Provenance provenance = {}) {
    if (mask_row.rows != 1) throw std::invalid_argument("top_k: mask must be a single row");
    const int d = mask_row.cols;
    if (k < 1 || k > d)
        throw std::invalid_argument("top_k: k=" + std::to_string(k) + " outside [1, " +
                                    std::to_string(d) + "]");
    std::vector<int> idx(static_cast<std::size_t>(d));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (mask_row(0, a) != mask_row(0, b)) return mask_row(0, a) > mask_row(0, b);
        return a < b;
    });
    SelectionResult out;
    out.ranked_indices.assign(idx.begin(), idx.begin() + k);
    out.scores.reserve(static_cast<std::size_t>(k));
    for (int i : out.ranked_indices) out.scores.push_back(mask_row(0, i));
    out.k = k;
    out.rho = static_cast<double>(k) / d;
    out.provenance = std::move(provenance);
    return out;
}

// k = round(rho * D), clamped into [1, D].
inline int rho_to_k(double rho, int d) {
    if (rho <= 0.0 || rho > 1.0)
        throw std::invalid_argument("rho_to_k: rho must lie in (0, 1]");
    if (d < 1) throw std::invalid_argument("rho_to_k: no features");
    return std::clamp(static_cast<int>(std::lround(rho * d)), 1, d);
}

struct RecoveryMetrics {
    double informative_recall = 0.0;
    int redundant_count = 0;
    int distractor_count = 0;
};

inline RecoveryMetrics recovery_metrics(const SelectionResult& selection,
                                        const FeaturePartition& truth) {
    if (truth.informative.empty())
        throw std::invalid_argument("recovery_metrics: no informative features in partition");
    RecoveryMetrics out;
    int informative_hits = 0;
    for (int i : selection.ranked_indices) {
        if (std::find(truth.informative.begin(), truth.informative.end(), i) !=
            truth.informative.end())
            ++informative_hits;
        else if (std::find(truth.redundant.begin(), truth.redundant.end(), i) !=
                 truth.redundant.end())
            ++out.redundant_count;
        else if (std::find(truth.distractor.begin(), truth.distractor.end(), i) !=
                 truth.distractor.end())
            ++out.distractor_count;
    }
    out.informative_recall =
        static_cast<double>(informative_hits) / static_cast<double>(truth.informative.size());
    return out;
}

enum class ClassifierKind { knn, ert };

inline std::string to_string(ClassifierKind kind) {
    return kind == ClassifierKind::knn ? "knn" : "ert";
}

struct MethodSpec {
    std::string name;  // "cfm", "fm", "dfs-cfm"
    MaskKind kind = MaskKind::attention;
    double gamma = 1.0;
    double lambda = 0.0;
    bool gamma_search = false;

    // fm is the gamma = 0 degenerate case of the same objective
    static MethodSpec from_name(const std::string& name, double gamma, double lambda,
                                bool gamma_search) {
        if (name == "fm") return {name, MaskKind::attention, 0.0, 0.0, false};
        if (name == "cfm") return {name, MaskKind::attention, gamma, 0.0, gamma_search};
        if (name == "dfs-cfm") return {name, MaskKind::trainable_vector, gamma, lambda, gamma_search};
        throw std::invalid_argument("unknown method '" + name + "' (expected cfm, fm or dfs-cfm)");
    }
};

struct SweepCell {
    std::string method;
    std::string classifier;
    double rho = 0.0;
    std::uint64_t seed = 0;
    double gamma = 0.0;  // value actually trained with
    double accuracy = 0.0;
    bool ok = false;
    std::string error;
};

struct EvalAggregate {
    std::string method;
    std::string classifier;
    double rho = 0.0;
    double mean = 0.0;
    double stddev = 0.0;  // sample deviation; meaningful only when has_stddev
    bool has_stddev = false;
    int n = 0;
};

struct EvalReport {
    std::vector<SweepCell> cells;

    std::vector<EvalAggregate> aggregate() const {
        std::vector<EvalAggregate> out;
        // preserve first-appearance order of (method, classifier, rho)
        for (const auto& cell : cells) {
            bool found = false;
            for (const auto& agg : out)
                if (agg.method == cell.method && agg.classifier == cell.classifier &&
                    agg.rho == cell.rho) {
                    found = true;
                    break;
                }
            if (found) continue;
            EvalAggregate agg;
            agg.method = cell.method;
            agg.classifier = cell.classifier;
            agg.rho = cell.rho;
            std::vector<double> values;
            for (const auto& c : cells)
                if (c.ok && c.method == agg.method && c.classifier == agg.classifier &&
                    c.rho == agg.rho)
                    values.push_back(c.accuracy);
            agg.n = static_cast<int>(values.size());
            if (!values.empty()) {
                agg.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
                if (values.size() >= 2) {
                    double ss = 0.0;
                    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
                    agg.stddev = std::sqrt(ss / (values.size() - 1));
                    agg.has_stddev = true;
                }
            }
            out.push_back(std::move(agg));
        }
        return out;
    }
};

struct SweepOptions {
    std::vector<double> rhos = {0.01, 0.015, 0.02, 0.025, 0.05, 0.075, 0.10};
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::vector<ClassifierKind> classifiers = {ClassifierKind::knn, ClassifierKind::ert};
    int knn_k = 5;
    ErtConfig ert;
    int workers = 1;
    TrainingConfig base;  // gamma/lambda/seed overridden per method and cell
};

// One feature-selection training per (method, seed); every (rho, classifier)
// cell reuses that trained mask. Selection sees only training rows; test rows
// enter only through the classifiers. Failed cells carry their error and the
// sweep continues. Cell randomness derives from (seed, method, rho,
// classifier) values alone, so results do not depend on worker count.
inline EvalReport evaluate_sweep(const std::vector<MethodSpec>& methods, const Dataset& train_set,
                                 const Dataset& test_set, const SweepOptions& opt) {
    if (methods.empty() || opt.rhos.empty() || opt.seeds.empty() || opt.classifiers.empty())
        throw std::invalid_argument("evaluate_sweep: empty methods/rhos/seeds/classifiers");
    if (train_set.dims() != test_set.dims())
        throw std::invalid_argument("evaluate_sweep: train/test feature width mismatch");

    const int n_jobs = static_cast<int>(methods.size() * opt.seeds.size());
    const int cells_per_job = static_cast<int>(opt.rhos.size() * opt.classifiers.size());
    std::vector<SweepCell> cells(static_cast<std::size_t>(n_jobs * cells_per_job));

    parallel_for(n_jobs, opt.workers, [&](int job) {
        const std::size_t method_idx = static_cast<std::size_t>(job) % methods.size();
        const std::size_t seed_idx = static_cast<std::size_t>(job) / methods.size();
        const MethodSpec& method = methods[method_idx];
        const std::uint64_t seed = opt.seeds[seed_idx];

        SweepCell* slot = cells.data() + static_cast<std::size_t>(job) * cells_per_job;
        for (std::size_t r = 0; r < opt.rhos.size(); ++r)
            for (std::size_t c = 0; c < opt.classifiers.size(); ++c) {
                SweepCell& cell = slot[r * opt.classifiers.size() + c];
                cell.method = method.name;
                cell.classifier = to_string(opt.classifiers[c]);
                cell.rho = opt.rhos[r];
                cell.seed = seed;
            }

        try {
            TrainingConfig cfg = opt.base;
            cfg.seed = seed;
            cfg.gamma = method.gamma;
            cfg.lambda = method.lambda;
            if (method.gamma_search)
                cfg.gamma = select_gamma(train_set, cfg, method.kind).best_gamma;
            TrainOutcome outcome = train_cfm(train_set, cfg, method.kind);
            const Matrix& mask = outcome.report.final_masks.m;

            for (std::size_t r = 0; r < opt.rhos.size(); ++r) {
                const int k = rho_to_k(opt.rhos[r], train_set.dims());
                SelectionResult sel =
                    top_k(mask, k, Provenance{seed, cfg.gamma, method.name});
                Matrix train_cols = restrict_columns(train_set.X, sel.ranked_indices);
                Matrix test_cols = restrict_columns(test_set.X, sel.ranked_indices);
                for (std::size_t c = 0; c < opt.classifiers.size(); ++c) {
                    SweepCell& cell = slot[r * opt.classifiers.size() + c];
                    cell.gamma = cfg.gamma;
                    try {
                        std::vector<int> pred;
                        if (opt.classifiers[c] == ClassifierKind::knn) {
                            pred = knn_predict(train_cols, train_set.y, test_cols,
                                               std::min(opt.knn_k, train_cols.rows));
                        } else {
                            const std::uint64_t cell_seed = derive_seed(
                                seed ^ detail::splitmix64(method_idx),
                                (static_cast<std::uint64_t>(r) << 8) | c);
                            pred = ert_predict(train_cols, train_set.y, test_cols, opt.ert,
                                               cell_seed);
                        }
                        int hits = 0;
                        for (int i = 0; i < test_set.rows(); ++i)
                            if (pred[static_cast<std::size_t>(i)] ==
                                test_set.y[static_cast<std::size_t>(i)])
                                ++hits;
                        cell.accuracy = static_cast<double>(hits) / test_set.rows();
                        cell.ok = true;
                    } catch (const std::exception& e) {
                        cell.ok = false;
                        cell.error = e.what();
                    }
                }
            }
        } catch (const std::exception& e) {
            for (int i = 0; i < cells_per_job; ++i)
                if (!slot[i].ok && slot[i].error.empty()) slot[i].error = e.what();
        }
    });

    EvalReport report;
    report.cells = std::move(cells);
    return report;
}

}  // namespace cfm
