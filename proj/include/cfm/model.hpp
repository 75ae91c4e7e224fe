#pragma once

#include "cfm/dataset.hpp"
#include "cfm/mask.hpp"
#include "cfm/matrix.hpp"
#include "cfm/nn.hpp"
#include "cfm/parallel.hpp"
#include "cfm/rng.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cfm {

enum class MaskKind { attention, trainable_vector };

inline std::string to_string(MaskKind kind) {
    return kind == MaskKind::attention ? "attention" : "vector";
}

// Seed-stream tags so unrelated randomness (weight init, shuffling, dropout,
// complementary labels, splits) never shares a generator. Adding or removing
// draws in one stream cannot shift any other.
namespace seed_stream {
constexpr std::uint64_t init = 1;
constexpr std::uint64_t shuffle = 2;
constexpr std::uint64_t dropout = 3;
constexpr std::uint64_t comp_labels = 4;
constexpr std::uint64_t val_split = 5;
}  // namespace seed_stream

struct TrainingConfig {
    double gamma = 1.0;        // weight of the complementary loss
    double lambda = 0.0;       // sparsity weight, trainable-vector variant only
    int epochs = 100;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    std::vector<double> gamma_grid = {0.001, 0.01, 0.1, 1.0, 10.0, 100.0};
    double validation_fraction = 0.10;
    int mask_hidden = 0;       // 0 -> same as input dim
    int trunk1_width = 128;
    int trunk2_width = 64;
    double dropout_rate = 0.3;
    double leaky_alpha = 0.02;

    void validate() const {
        if (gamma < 0 || lambda < 0) throw std::invalid_argument("config: negative loss weight");
        if (epochs < 0) throw std::invalid_argument("config: negative epochs");
        if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
        if (learning_rate <= 0) throw std::invalid_argument("config: learning_rate must be > 0");
        if (validation_fraction <= 0 || validation_fraction >= 1)
            throw std::invalid_argument("config: validation_fraction must be in (0, 1)");
        if (gamma_grid.empty()) throw std::invalid_argument("config: empty gamma grid");
    }
};

struct EpochRecord {
    double main_loss = 0.0;
    double comp_loss = 0.0;
    double total_loss = 0.0;
    std::optional<double> val_accuracy;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    MaskPair final_masks;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    double gamma = 0.0;
};

struct DualOutput {
    Matrix pred_main;
    Matrix pred_comp;
    MaskPair masks;
};

struct StepLoss {
    double total = 0.0;
    double main = 0.0;
    double comp = 0.0;
    double sparsity = 0.0;
};

struct CompLoss {
    double loss = 0.0;
    Matrix logits_grad;       // gradient w.r.t. the pre-softmax logits
    std::vector<int> labels;  // the sampled targets
};

// Cross-entropy of the complementary predictions against labels freshly
// sampled from U(1, C), one per row. Minimizing it pulls the complementary
// path toward maximally uncertain predictions.
inline CompLoss complementary_loss(const Matrix& pred_comp, int num_classes, Rng& rng) {
    if (num_classes < 2)
        throw std::invalid_argument("complementary loss needs at least 2 classes");
    if (pred_comp.cols != num_classes)
        throw std::invalid_argument("complementary loss: " + std::to_string(pred_comp.cols) +
                                    " prediction columns for " + std::to_string(num_classes) +
                                    " classes");
    CompLoss out;
    out.labels.reserve(static_cast<std::size_t>(pred_comp.rows));
    for (int i = 0; i < pred_comp.rows; ++i)
        out.labels.push_back(static_cast<int>(rng.uniform_int(1, num_classes)));
    Matrix onehot = one_hot(out.labels, num_classes);
    out.loss = cross_entropy(pred_comp, onehot).loss;
    out.logits_grad = softmax_xent_grad(pred_comp, onehot);
    return out;
}

// Dual-head model: a mask generator feeding x (.) m into the main path and
// x (.) m_comp into the complementary path, a shared trunk
// dense -> leaky_relu -> dense -> leaky_relu -> dropout, and one softmax
// classification head per path consuming the same trunk output.
struct CfmModel {
    std::variant<AttentionMaskNet, VectorMask> mask;
    DenseLayer trunk1;
    DenseLayer trunk2;
    DropoutLayer dropout;
    DenseLayer head_main;
    DenseLayer head_comp;
    double leaky_alpha = 0.02;
    bool training = false;

    static CfmModel make(int input_dim, int num_classes, MaskKind kind, Rng& rng,
                         const TrainingConfig& cfg = {}) {
        if (input_dim < 1) throw std::invalid_argument("model: input_dim must be >= 1");
        if (num_classes < 2) throw std::invalid_argument("model: need at least 2 classes");
        CfmModel model;
        if (kind == MaskKind::attention)
            model.mask = AttentionMaskNet(input_dim, cfg.mask_hidden, rng);
        else
            model.mask = VectorMask(input_dim, rng);
        model.trunk1 = DenseLayer::glorot(input_dim, cfg.trunk1_width, rng);
        model.trunk2 = DenseLayer::glorot(cfg.trunk1_width, cfg.trunk2_width, rng);
        model.dropout = DropoutLayer(cfg.dropout_rate);
        model.head_main = DenseLayer::glorot(cfg.trunk2_width, num_classes, rng);
        model.head_comp = DenseLayer::glorot(cfg.trunk2_width, num_classes, rng);
        model.leaky_alpha = cfg.leaky_alpha;
        return model;
    }

    MaskKind kind() const {
        return std::holds_alternative<AttentionMaskNet>(mask) ? MaskKind::attention
                                                              : MaskKind::trainable_vector;
    }
    int input_dim() const { return trunk1.in_dim(); }
    int num_classes() const { return head_main.out_dim(); }

    void set_training(bool on) {
        training = on;
        dropout.training = on;
    }

    std::vector<Matrix*> parameters() {
        std::vector<Matrix*> out = std::visit([](auto& m) { return m.parameters(); }, mask);
        for (Matrix* p : {&trunk1.w, &trunk1.b, &trunk2.w, &trunk2.b, &head_main.w, &head_main.b,
                          &head_comp.w, &head_comp.b})
            out.push_back(p);
        return out;
    }
    std::vector<Matrix*> gradients() {
        std::vector<Matrix*> out = std::visit([](auto& m) { return m.gradients(); }, mask);
        for (Matrix* g : {&trunk1.gw, &trunk1.gb, &trunk2.gw, &trunk2.gb, &head_main.gw,
                          &head_main.gb, &head_comp.gw, &head_comp.gb})
            out.push_back(g);
        return out;
    }
    void zero_grad() {
        std::visit([](auto& m) { m.zero_grad(); }, mask);
        trunk1.zero_grad();
        trunk2.zero_grad();
        head_main.zero_grad();
        head_comp.zero_grad();
    }

    MaskPair mask_forward(const Matrix& batch) {
        if (auto* attn = std::get_if<AttentionMaskNet>(&mask)) return attn->forward(batch);
        return std::get<VectorMask>(mask).forward();
    }

    // Selection-time mask over the whole dataset (batch mean for the
    // attention generator is a training-time stochastic estimate).
    MaskPair selection_mask(const Matrix& data) const {
        if (const auto* attn = std::get_if<AttentionMaskNet>(&mask))
            return attn->full_data_mask(data);
        return std::get<VectorMask>(mask).forward();
    }

    // Both paths through one forward. In training mode a single dropout
    // realization is sampled here and shared by the two paths.
    DualOutput forward_dual(const Matrix& batch, Rng* dropout_rng = nullptr) {
        check_batch(batch);
        DualOutput out;
        out.masks = mask_forward(batch);
        sample_dropout(batch.rows, dropout_rng);
        PathCache main_cache, comp_cache;
        run_path(batch, out.masks.m, head_main, main_cache);
        run_path(batch, out.masks.m_comp, head_comp, comp_cache);
        out.pred_main = std::move(main_cache.probs);
        out.pred_comp = std::move(comp_cache.probs);
        return out;
    }

    // Forward-only objective value. Deterministic whenever the dropout state
    // is frozen (or the model is in eval mode) and the labels are fixed, which
    // is exactly what finite-difference checking needs.
    double compute_loss(const Matrix& batch, const std::vector<int>& labels,
                        const std::vector<int>& comp_labels, double gamma, double lambda) {
        check_batch(batch);
        MaskPair masks = mask_forward(batch);
        PathCache main_cache, comp_cache;
        run_path(batch, masks.m, head_main, main_cache);
        run_path(batch, masks.m_comp, head_comp, comp_cache);
        const double main_loss =
            cross_entropy(main_cache.probs, one_hot(labels, num_classes())).loss;
        const double comp_loss =
            cross_entropy(comp_cache.probs, one_hot(comp_labels, num_classes())).loss;
        return main_loss + gamma * comp_loss + sparsity_penalty(lambda);
    }

    // Full training objective with gradients for every parameter, including
    // the mask generator through the Hadamard products and both softmax
    // branches. Complementary-path gradients are scaled by gamma before any
    // accumulation, so gamma = 0 contributes exact zeros everywhere.
    StepLoss loss_and_gradients(const Matrix& batch, const std::vector<int>& labels,
                                const std::vector<int>& comp_labels, double gamma, double lambda,
                                Rng* dropout_rng = nullptr) {
        check_batch(batch);
        if (static_cast<int>(labels.size()) != batch.rows ||
            static_cast<int>(comp_labels.size()) != batch.rows)
            throw std::invalid_argument("loss_and_gradients: label count mismatch");
        zero_grad();
        sample_dropout(batch.rows, dropout_rng);

        MaskPair masks = mask_forward(batch);
        StepLoss loss;

        PathCache main_cache;
        run_path(batch, masks.m, head_main, main_cache);
        Matrix y_main = one_hot(labels, num_classes());
        loss.main = cross_entropy(main_cache.probs, y_main).loss;
        Matrix grad_m =
            path_backward(batch, main_cache, head_main, softmax_xent_grad(main_cache.probs, y_main));

        PathCache comp_cache;
        run_path(batch, masks.m_comp, head_comp, comp_cache);
        Matrix y_comp = one_hot(comp_labels, num_classes());
        loss.comp = cross_entropy(comp_cache.probs, y_comp).loss;
        Matrix grad_comp_logits = scale(softmax_xent_grad(comp_cache.probs, y_comp), gamma);
        Matrix grad_m_comp = path_backward(batch, comp_cache, head_comp, grad_comp_logits);

        if (auto* attn = std::get_if<AttentionMaskNet>(&mask)) {
            attn->backward(masks, grad_m, grad_m_comp);
        } else {
            auto& vec = std::get<VectorMask>(mask);
            vec.backward(masks, grad_m, grad_m_comp);
            if (lambda > 0.0)
                for (int j = 0; j < vec.logits.cols; ++j)
                    vec.grad(0, j) += lambda * (vec.logits(0, j) > 0    ? 1.0
                                                : vec.logits(0, j) < 0 ? -1.0
                                                                       : 0.0);
        }
        loss.sparsity = sparsity_penalty(lambda);
        loss.total = loss.main + gamma * loss.comp + loss.sparsity;
        return loss;
    }

private:
    struct PathCache {
        Matrix x_masked, z1, a1, z2, a2, dropped, probs;
    };

    void check_batch(const Matrix& batch) const {
        if (batch.rows < 1) throw std::invalid_argument("model: empty batch");
        if (batch.cols != input_dim())
            throw std::invalid_argument("model: batch has " + std::to_string(batch.cols) +
                                        " columns, expected " + std::to_string(input_dim()));
    }

    void sample_dropout(int rows, Rng* rng) {
        if (!training || dropout.frozen) return;
        if (rng == nullptr)
            throw std::invalid_argument("model: training-mode forward needs a dropout rng");
        dropout.sample_mask(rows, trunk2.out_dim(), *rng);
    }

    void run_path(const Matrix& batch, const Matrix& mask_row, const DenseLayer& head,
                  PathCache& c) const {
        c.x_masked = elementwise(batch, mask_row, ElemOp::mul);
        c.z1 = elementwise(matmul(c.x_masked, trunk1.w), trunk1.b, ElemOp::add);
        c.a1 = leaky_relu_forward(c.z1, leaky_alpha);
        c.z2 = elementwise(matmul(c.a1, trunk2.w), trunk2.b, ElemOp::add);
        c.a2 = leaky_relu_forward(c.z2, leaky_alpha);
        c.dropped = dropout.apply(c.a2);
        c.probs = softmax_rows(elementwise(matmul(c.dropped, head.w), head.b, ElemOp::add));
    }

    // Returns the 1 x D gradient with respect to the path's mask row.
    Matrix path_backward(const Matrix& batch, const PathCache& c, DenseLayer& head,
                         const Matrix& grad_logits) {
        Matrix grad_dropped = head.backward(c.dropped, grad_logits);
        Matrix grad_a2 = dropout.backward(grad_dropped);
        Matrix grad_z2 = leaky_relu_backward(c.z2, grad_a2, leaky_alpha);
        Matrix grad_a1 = trunk2.backward(c.a1, grad_z2);
        Matrix grad_z1 = leaky_relu_backward(c.z1, grad_a1, leaky_alpha);
        Matrix grad_x_masked = trunk1.backward(c.x_masked, grad_z1);
        Matrix grad_mask(1, batch.cols);
        for (int i = 0; i < batch.rows; ++i)
            for (int j = 0; j < batch.cols; ++j)
                grad_mask(0, j) += grad_x_masked(i, j) * batch(i, j);
        return grad_mask;
    }

    double sparsity_penalty(double lambda) const {
        if (lambda <= 0.0) return 0.0;
        const auto* vec = std::get_if<VectorMask>(&mask);
        if (vec == nullptr) return 0.0;
        double l1 = 0.0;
        for (double v : vec->logits.data) l1 += std::fabs(v);
        return lambda * l1;
    }
};

namespace detail {
// Stable names for the model's parameter blocks, in parameters() order.
inline std::vector<std::string> param_block_names(MaskKind kind) {
    std::vector<std::string> names;
    if (kind == MaskKind::attention)
        names = {"mask.dense1.w", "mask.dense1.b", "mask.dense2.w", "mask.dense2.b"};
    else
        names = {"mask.logits"};
    for (const char* s : {"trunk1.w", "trunk1.b", "trunk2.w", "trunk2.b", "head_main.w",
                          "head_main.b", "head_comp.w", "head_comp.b"})
        names.emplace_back(s);
    return names;
}
}  // namespace detail

inline std::vector<int> predict_labels(CfmModel& model, const Matrix& X) {
    const bool was_training = model.training;
    model.set_training(false);
    DualOutput out = model.forward_dual(X);
    model.set_training(was_training);
    std::vector<int> labels(static_cast<std::size_t>(X.rows));
    for (int i = 0; i < X.rows; ++i) {
        int best = 0;
        for (int j = 1; j < out.pred_main.cols; ++j)
            if (out.pred_main(i, j) > out.pred_main(i, best)) best = j;
        labels[static_cast<std::size_t>(i)] = best + 1;
    }
    return labels;
}

inline double accuracy(CfmModel& model, const Dataset& ds) {
    if (ds.rows() == 0) throw std::invalid_argument("accuracy: empty dataset");
    std::vector<int> pred = predict_labels(model, ds.X);
    int hits = 0;
    for (int i = 0; i < ds.rows(); ++i)
        if (pred[static_cast<std::size_t>(i)] == ds.y[static_cast<std::size_t>(i)]) ++hits;
    return static_cast<double>(hits) / ds.rows();
}

// Minibatch Adam over seeded shuffles. The model is left in eval mode; the
// report holds one record per completed epoch and the selection-time masks.
inline TrainReport train(CfmModel& model, const Dataset& train_set, const TrainingConfig& cfg,
                         const Dataset* val_set = nullptr) {
    cfg.validate();
    if (train_set.rows() == 0) throw std::invalid_argument("train: empty dataset");
    if (static_cast<int>(train_set.y.size()) != train_set.rows())
        throw std::invalid_argument("train: labels missing for some rows");
    if (train_set.num_classes < 2) throw std::invalid_argument("train: need at least 2 classes");

    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_seed(cfg.seed, seed_stream::shuffle));
    Rng dropout_rng(derive_seed(cfg.seed, seed_stream::dropout));
    Rng label_rng(derive_seed(cfg.seed, seed_stream::comp_labels));

    AdamState adam;
    adam.lr = cfg.learning_rate;
    auto params = model.parameters();
    adam.init(params);

    TrainReport report;
    report.seed = cfg.seed;
    report.gamma = cfg.gamma;

    model.set_training(true);
    std::vector<int> order(static_cast<std::size_t>(train_set.rows()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        EpochRecord record;
        for (int start = 0; start < train_set.rows(); start += cfg.batch_size) {
            const int end = std::min(train_set.rows(), start + cfg.batch_size);
            std::vector<int> idx(order.begin() + start, order.begin() + end);
            Matrix xb = take_rows(train_set.X, idx);
            std::vector<int> yb;
            yb.reserve(idx.size());
            for (int r : idx) yb.push_back(train_set.y[static_cast<std::size_t>(r)]);
            std::vector<int> comp;
            comp.reserve(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i)
                comp.push_back(static_cast<int>(label_rng.uniform_int(1, train_set.num_classes)));

            StepLoss loss = model.loss_and_gradients(xb, yb, comp, cfg.gamma, cfg.lambda,
                                                     &dropout_rng);
            if (!std::isfinite(loss.total))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(start / cfg.batch_size));
            adam.step(params, const_ptrs(model.gradients()));

            const double weight = static_cast<double>(end - start) / train_set.rows();
            record.main_loss += loss.main * weight;
            record.comp_loss += loss.comp * weight;
            record.total_loss += loss.total * weight;
        }
        if (val_set != nullptr) record.val_accuracy = accuracy(model, *val_set);
        report.epochs.push_back(record);
    }

    model.set_training(false);
    report.final_masks = model.selection_mask(train_set.X);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

struct TrainOutcome {
    CfmModel model;
    TrainReport report;
};

inline TrainOutcome train_cfm(const Dataset& train_set, const TrainingConfig& cfg, MaskKind kind,
                              const Dataset* val_set = nullptr) {
    Rng init_rng(derive_seed(cfg.seed, seed_stream::init));
    TrainOutcome out{CfmModel::make(train_set.dims(), train_set.num_classes, kind, init_rng, cfg),
                     {}};
    out.report = train(out.model, train_set, cfg, val_set);
    return out;
}

struct GammaSearchResult {
    double best_gamma = 0.0;
    std::vector<std::pair<double, double>> accuracies;  // (gamma, validation accuracy)
};

// Grid search on a held-out validation split (the tail of a seeded shuffle of
// the training data). Each gamma trains an independent model on its own seed
// stream; ties go to the smaller gamma.
inline GammaSearchResult select_gamma(const Dataset& train_set, const TrainingConfig& cfg,
                                      MaskKind kind, int workers = 1) {
    cfg.validate();
    SplitSpec spec = split(train_set, {1.0 - cfg.validation_fraction, cfg.validation_fraction},
                           derive_seed(cfg.seed, seed_stream::val_split));
    Dataset sub_train = take(train_set, spec.parts[0]);
    Dataset validation = take(train_set, spec.parts[1]);
    if (validation.rows() == 0)
        throw std::invalid_argument("select_gamma: validation split is empty");

    const int n = static_cast<int>(cfg.gamma_grid.size());
    std::vector<double> accs(static_cast<std::size_t>(n));
    parallel_for(n, workers, [&](int i) {
        TrainingConfig sub_cfg = cfg;
        sub_cfg.gamma = cfg.gamma_grid[static_cast<std::size_t>(i)];
        sub_cfg.seed = cfg.seed ^ detail::splitmix64(static_cast<std::uint64_t>(i));
        TrainOutcome outcome = train_cfm(sub_train, sub_cfg, kind);
        accs[static_cast<std::size_t>(i)] = accuracy(outcome.model, validation);
    });

    GammaSearchResult result;
    result.best_gamma = cfg.gamma_grid[0];
    double best_acc = -1.0;
    for (int i = 0; i < n; ++i) {
        const double gamma = cfg.gamma_grid[static_cast<std::size_t>(i)];
        const double acc = accs[static_cast<std::size_t>(i)];
        result.accuracies.emplace_back(gamma, acc);
        if (acc > best_acc || (acc == best_acc && gamma < result.best_gamma)) {
            best_acc = acc;
            result.best_gamma = gamma;
        }
    }
    return result;
}

}  // namespace cfm
