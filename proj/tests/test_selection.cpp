#include "cfm/selection.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

using namespace cfm;

namespace {

// Independent kNN oracle: full sort, explicit ties, no shared code path.
std::vector<int> knn_oracle(const Matrix& train_x, const std::vector<int>& train_y,
                            const Matrix& test_x, int k) {
    std::vector<int> out;
    for (int t = 0; t < test_x.rows; ++t) {
        std::vector<std::pair<double, int>> all;
        for (int i = 0; i < train_x.rows; ++i) {
            double d2 = 0;
            for (int j = 0; j < train_x.cols; ++j) {
                double d = test_x(t, j) - train_x(i, j);
                d2 += d * d;
            }
            all.emplace_back(d2, i);
        }
        std::sort(all.begin(), all.end());
        std::map<int, int> votes;
        for (int n = 0; n < k; ++n) votes[train_y[static_cast<std::size_t>(all[static_cast<std::size_t>(n)].second)]]++;
        int best = 0, count = -1;
        for (auto [label, c] : votes)
            if (c > count) {
                count = c;
                best = label;
            }
        out.push_back(best);
    }
    return out;
}

// Noiseless axis-aligned concept: class 2 iff first coordinate > 0.5.
void axis_problem(Rng& rng, int n, Matrix& x, std::vector<int>& y) {
    x = Matrix(n, 2);
    y.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        x(i, 0) = rng.uniform();
        x(i, 1) = rng.uniform();
        y[static_cast<std::size_t>(i)] = x(i, 0) > 0.5 ? 2 : 1;
    }
}

double fraction_correct(const std::vector<int>& pred, const std::vector<int>& truth) {
    int hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / pred.size();
}

}  // namespace

TEST(TopK, BasicRanking) {
    Matrix m = Matrix::from_rows({{0.1, 0.4, 0.2, 0.3}});
    SelectionResult sel = top_k(m, 2);
    EXPECT_EQ(sel.ranked_indices, (std::vector<int>{1, 3}));
    EXPECT_DOUBLE_EQ(sel.scores[0], 0.4);
    EXPECT_DOUBLE_EQ(sel.scores[1], 0.3);
}

TEST(TopK, FullSelectionIsPermutation) {
    Matrix m = Matrix::from_rows({{0.3, 0.1, 0.4, 0.2}});
    SelectionResult sel = top_k(m, 4);
    std::vector<int> sorted = sel.ranked_indices;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3}));
}

TEST(TopK, TiesResolveToAscendingIndex) {
    Matrix m(1, 5, 0.2);
    SelectionResult sel = top_k(m, 3);
    EXPECT_EQ(sel.ranked_indices, (std::vector<int>{0, 1, 2}));
}

TEST(TopK, OutOfRangeRejected) {
    Matrix m(1, 4, 0.25);
    EXPECT_THROW(top_k(m, 0), std::invalid_argument);
    EXPECT_THROW(top_k(m, 5), std::invalid_argument);
}

TEST(TopK, SmallerSelectionIsPrefixOfLarger) {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix m(1, 12);
        for (auto& v : m.data) v = rng.uniform(0, 1);
        SelectionResult big = top_k(m, 12);
        for (int k = 1; k < 12; ++k) {
            SelectionResult small = top_k(m, k);
            for (int i = 0; i < k; ++i)
                ASSERT_EQ(small.ranked_indices[static_cast<std::size_t>(i)],
                          big.ranked_indices[static_cast<std::size_t>(i)]);
        }
    }
}

TEST(RhoToK, KnownValues) {
    EXPECT_EQ(rho_to_k(0.01, 784), 8);
    EXPECT_EQ(rho_to_k(0.01, 500), 5);
    EXPECT_EQ(rho_to_k(0.001, 100), 1);  // clamp floor
    EXPECT_EQ(rho_to_k(1.0, 30), 30);
}

TEST(RhoToK, InvalidRhoRejected) {
    EXPECT_THROW(rho_to_k(0.0, 10), std::invalid_argument);
    EXPECT_THROW(rho_to_k(1.5, 10), std::invalid_argument);
    EXPECT_THROW(rho_to_k(-0.1, 10), std::invalid_argument);
}

TEST(Knn, ExactTrainingPointWinsAtKOne) {
    Matrix train = Matrix::from_rows({{0, 0}, {5, 5}, {9, 1}});
    std::vector<int> y = {1, 2, 3};
    Matrix test = Matrix::from_rows({{5, 5}});
    EXPECT_EQ(knn_predict(train, y, test, 1), (std::vector<int>{2}));
}

TEST(Knn, NearbyClusterWins) {
    Matrix train = Matrix::from_rows({{0, 0}, {0.5, 0}, {0, 0.5}, {10, 10}, {10.5, 10}, {10, 10.5}});
    std::vector<int> y = {1, 1, 1, 2, 2, 2};
    Matrix test = Matrix::from_rows({{1, 1}});
    EXPECT_EQ(knn_predict(train, y, test, 3), (std::vector<int>{1}));
}

TEST(Knn, MatchesIndependentOracleOnRandomPoints) {
    Rng rng(7);
    Matrix train(200, 4);
    for (auto& v : train.data) v = rng.uniform(-1, 1);
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) y.push_back(static_cast<int>(rng.uniform_int(1, 3)));
    Matrix test(200, 4);
    for (auto& v : test.data) v = rng.uniform(-1, 1);
    for (int k : {1, 5, 9}) {
        std::vector<int> ours = knn_predict(train, y, test, k);
        std::vector<int> oracle = knn_oracle(train, y, test, k);
        EXPECT_EQ(ours, oracle) << "k=" << k;
    }
}

TEST(Knn, PermutationInvariantWithoutTies) {
    Rng rng(8);
    Matrix train(60, 3);
    for (auto& v : train.data) v = rng.uniform(-1, 1);
    std::vector<int> y;
    for (int i = 0; i < 60; ++i) y.push_back(static_cast<int>(rng.uniform_int(1, 2)));
    Matrix test(30, 3);
    for (auto& v : test.data) v = rng.uniform(-1, 1);

    std::vector<int> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Matrix train_p = take_rows(train, perm);
    std::vector<int> y_p;
    for (int r : perm) y_p.push_back(y[static_cast<std::size_t>(r)]);

    EXPECT_EQ(knn_predict(train, y, test, 5), knn_predict(train_p, y_p, test, 5));
}

TEST(Knn, EmptyTrainOrBadKRejected) {
    Matrix train(0, 2), test(1, 2);
    std::vector<int> y;
    EXPECT_THROW(knn_predict(train, y, test, 1), std::invalid_argument);
    Matrix train2(3, 2, 1.0);
    std::vector<int> y2 = {1, 1, 2};
    EXPECT_THROW(knn_predict(train2, y2, test, 4), std::invalid_argument);
    EXPECT_THROW(knn_predict(train2, y2, test, 0), std::invalid_argument);
}

TEST(Ert, SingleClassAlwaysPredicted) {
    Matrix train = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
    std::vector<int> y = {3, 3, 3};
    Matrix test = Matrix::from_rows({{0, 0}, {9, 9}});
    ErtConfig cfg;
    cfg.n_trees = 5;
    EXPECT_EQ(ert_predict(train, y, test, cfg, 0), (std::vector<int>{3, 3}));
}

TEST(Ert, SameSeedSameForest) {
    Rng rng(9);
    Matrix train(80, 3);
    std::vector<int> y;
    for (auto& v : train.data) v = rng.uniform(0, 1);
    for (int i = 0; i < 80; ++i) y.push_back(static_cast<int>(rng.uniform_int(1, 3)));
    Matrix test(40, 3);
    for (auto& v : test.data) v = rng.uniform(0, 1);
    ErtConfig cfg;
    cfg.n_trees = 20;
    EXPECT_EQ(ert_predict(train, y, test, cfg, 777), ert_predict(train, y, test, cfg, 777));
}

TEST(Ert, EnsembleBeatsSingleTreeOnAverage) {
    // Variance reduction of voting, averaged over 10 seeds.
    double single = 0, ensemble = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(100 + seed);
        Matrix train, test;
        std::vector<int> train_y, test_y;
        axis_problem(rng, 200, train, train_y);
        axis_problem(rng, 1000, test, test_y);
        ErtConfig one;
        one.n_trees = 1;
        ErtConfig many;
        many.n_trees = 101;
        single += fraction_correct(ert_predict(train, train_y, test, one, seed), test_y);
        ensemble += fraction_correct(ert_predict(train, train_y, test, many, seed), test_y);
    }
    EXPECT_GE(ensemble, single);
    EXPECT_GE(ensemble / 10, 0.95);
}

TEST(RecoveryMetrics, ExactInformativeSelection) {
    FeaturePartition truth;
    truth.informative = {0, 1, 2};
    truth.redundant = {3, 4};
    truth.distractor = {5, 6, 7};
    SelectionResult sel;
    sel.ranked_indices = {2, 0, 1};
    RecoveryMetrics m = recovery_metrics(sel, truth);
    EXPECT_DOUBLE_EQ(m.informative_recall, 1.0);
    EXPECT_EQ(m.redundant_count, 0);
    EXPECT_EQ(m.distractor_count, 0);
}

TEST(RecoveryMetrics, AllDistractorsGiveZeroRecall) {
    FeaturePartition truth;
    truth.informative = {0, 1};
    truth.distractor = {2, 3, 4};
    SelectionResult sel;
    sel.ranked_indices = {4, 2, 3};
    RecoveryMetrics m = recovery_metrics(sel, truth);
    EXPECT_DOUBLE_EQ(m.informative_recall, 0.0);
    EXPECT_EQ(m.distractor_count, 3);
}

TEST(RecoveryMetrics, RandomSelectionMatchesHypergeometricExpectation) {
    // E[recall of k random from D] = k / D.
    FeaturePartition truth;
    for (int j = 0; j < 5; ++j) truth.informative.push_back(j);
    for (int j = 5; j < 50; ++j) truth.distractor.push_back(j);
    Rng rng(11);
    const int k = 10, d = 50, draws = 100000;
    double total = 0;
    std::vector<int> pool(d);
    std::iota(pool.begin(), pool.end(), 0);
    for (int t = 0; t < draws; ++t) {
        rng.shuffle(pool);
        SelectionResult sel;
        sel.ranked_indices.assign(pool.begin(), pool.begin() + k);
        total += recovery_metrics(sel, truth).informative_recall;
    }
    const double expected = static_cast<double>(k) / d;
    EXPECT_NEAR(total / draws, expected, 0.02 * expected);
}

namespace {

std::pair<Dataset, Dataset> small_train_test(std::uint64_t seed = 21) {
    Dataset all = make_madelon_like(150, 3, 2, 5, 3.0, 0.1, seed).dataset;
    all = normalize(all, NormScheme::minmax).first;
    SplitSpec spec = split(all, {0.8, 0.2}, seed);
    return {take(all, spec.parts[0]), take(all, spec.parts[1])};
}

SweepOptions fast_sweep_options() {
    SweepOptions opt;
    opt.base.epochs = 4;
    opt.base.trunk1_width = 16;
    opt.base.trunk2_width = 8;
    opt.ert.n_trees = 15;
    return opt;
}

}  // namespace

TEST(EvaluateSweep, SingleCellReport) {
    auto [train_set, test_set] = small_train_test();
    SweepOptions opt = fast_sweep_options();
    opt.rhos = {0.5};
    opt.seeds = {0};
    opt.classifiers = {ClassifierKind::knn};
    EvalReport report = evaluate_sweep({MethodSpec::from_name("cfm", 1.0, 0, false)}, train_set,
                                       test_set, opt);
    ASSERT_EQ(report.cells.size(), 1u);
    EXPECT_TRUE(report.cells[0].ok);
    auto agg = report.aggregate();
    ASSERT_EQ(agg.size(), 1u);
    EXPECT_EQ(agg[0].n, 1);
    EXPECT_FALSE(agg[0].has_stddev);  // needs >= 2 seeds
}

TEST(EvaluateSweep, DefaultRhoGridHasSevenPoints) {
    SweepOptions opt;
    EXPECT_EQ(opt.rhos.size(), 7u);
    EXPECT_EQ(opt.seeds.size(), 5u);
}

TEST(EvaluateSweep, CellCountAndAggregates) {
    auto [train_set, test_set] = small_train_test(22);
    SweepOptions opt = fast_sweep_options();
    opt.rhos = {0.2, 0.5, 0.8};
    opt.seeds = {0, 1};
    opt.classifiers = {ClassifierKind::knn};
    std::vector<MethodSpec> methods = {MethodSpec::from_name("cfm", 1.0, 0, false),
                                       MethodSpec::from_name("fm", 0, 0, false)};
    EvalReport report = evaluate_sweep(methods, train_set, test_set, opt);
    EXPECT_EQ(report.cells.size(), 12u);  // 2 methods x 3 rhos x 1 classifier x 2 seeds
    auto agg = report.aggregate();
    EXPECT_EQ(agg.size(), 6u);
    for (const auto& a : agg) {
        EXPECT_EQ(a.n, 2);
        EXPECT_TRUE(a.has_stddev);
        double manual = 0;
        int n = 0;
        for (const auto& c : report.cells)
            if (c.ok && c.method == a.method && c.rho == a.rho) {
                manual += c.accuracy;
                ++n;
            }
        EXPECT_NEAR(a.mean, manual / n, 1e-15);
    }
}

TEST(EvaluateSweep, DeterministicAcrossRerunsAndWorkerCounts) {
    auto [train_set, test_set] = small_train_test(23);
    SweepOptions opt = fast_sweep_options();
    opt.rhos = {0.3, 0.6};
    opt.seeds = {0, 1};
    std::vector<MethodSpec> methods = {MethodSpec::from_name("cfm", 1.0, 0, false)};

    EvalReport a = evaluate_sweep(methods, train_set, test_set, opt);
    opt.workers = 4;
    EvalReport b = evaluate_sweep(methods, train_set, test_set, opt);
    ASSERT_EQ(a.cells.size(), b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        EXPECT_EQ(a.cells[i].method, b.cells[i].method);
        EXPECT_EQ(a.cells[i].rho, b.cells[i].rho);
        EXPECT_EQ(a.cells[i].seed, b.cells[i].seed);
        ASSERT_EQ(a.cells[i].accuracy, b.cells[i].accuracy);
    }
}

TEST(EvaluateSweep, SelectedSubsetNeverReadsUnselectedColumns) {
    auto [train_set, test_set] = small_train_test(24);
    TrainingConfig cfg = fast_sweep_options().base;
    TrainOutcome outcome = train_cfm(train_set, cfg, MaskKind::attention);
    SelectionResult sel = top_k(outcome.report.final_masks.m, 3);

    Matrix train_clean = restrict_columns(train_set.X, sel.ranked_indices);
    Matrix test_clean = restrict_columns(test_set.X, sel.ranked_indices);

    Dataset train_poisoned = train_set, test_poisoned = test_set;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (int j = 0; j < train_set.dims(); ++j) {
        if (std::find(sel.ranked_indices.begin(), sel.ranked_indices.end(), j) !=
            sel.ranked_indices.end())
            continue;
        for (int i = 0; i < train_poisoned.rows(); ++i) train_poisoned.X(i, j) = nan;
        for (int i = 0; i < test_poisoned.rows(); ++i) test_poisoned.X(i, j) = nan;
    }
    Matrix train_p = restrict_columns(train_poisoned.X, sel.ranked_indices);
    Matrix test_p = restrict_columns(test_poisoned.X, sel.ranked_indices);

    EXPECT_EQ(knn_predict(train_clean, train_set.y, test_clean, 5),
              knn_predict(train_p, train_poisoned.y, test_p, 5));
    ErtConfig ert;
    ert.n_trees = 10;
    EXPECT_EQ(ert_predict(train_clean, train_set.y, test_clean, ert, 3),
              ert_predict(train_p, train_poisoned.y, test_p, ert, 3));
}
