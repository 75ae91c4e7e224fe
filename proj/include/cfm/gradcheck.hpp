#pragma once

#include "cfm/model.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

namespace cfm {

// Verification harness: analytic gradients of the full dual-path objective
// against central finite differences.
//
// The finite-difference side evaluates an independent re-implementation of
// the objective (naive loops, extended precision). Double-precision loss
// evaluations round at ~1e-16, which caps FD accuracy near 1e-11 per
// coordinate; parameters whose gradients nearly cancel sit below that, so the
// oracle must be computed more precisely than the implementation it checks.
//
// The probe point is sampled so every pre-activation clears the leaky_relu
// kink by a wide multiple of the step h: central differences straddling a
// kink measure the average of two slopes, not the derivative.

namespace refobj {

using ld = long double;

struct RefMatrix {
    int rows = 0, cols = 0;
    std::vector<ld> data;
    RefMatrix() = default;
    explicit RefMatrix(const Matrix& m)
        : rows(m.rows), cols(m.cols), data(m.data.begin(), m.data.end()) {}
    ld operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

inline void softmax_row(std::vector<ld>& v) {
    ld mx = v[0];
    for (ld x : v) mx = std::max(mx, x);
    ld sum = 0;
    for (ld& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (ld& x : v) x /= sum;
}

// Naive-loop dual-path objective in long double. Parameter blocks follow
// CfmModel::parameters() order.
struct ReferenceObjective {
    MaskKind kind = MaskKind::attention;
    std::vector<RefMatrix> params;
    RefMatrix batch;
    RefMatrix dropout_mask;  // empty when dropout is inactive
    std::vector<int> labels;
    std::vector<int> comp_labels;
    ld gamma = 1;
    ld lambda = 0;
    ld leaky_alpha = 0.02;
    int num_classes = 0;

    static ReferenceObjective from_model(CfmModel& model, const Matrix& batch,
                                         const std::vector<int>& labels,
                                         const std::vector<int>& comp_labels, double gamma,
                                         double lambda) {
        ReferenceObjective ref;
        ref.kind = model.kind();
        for (Matrix* p : model.parameters()) ref.params.emplace_back(*p);
        ref.batch = RefMatrix(batch);
        if (model.training && model.dropout.mask.size() > 0)
            ref.dropout_mask = RefMatrix(model.dropout.mask);
        ref.labels = labels;
        ref.comp_labels = comp_labels;
        ref.gamma = gamma;
        ref.lambda = lambda;
        ref.leaky_alpha = model.leaky_alpha;
        ref.num_classes = model.num_classes();
        return ref;
    }

    ld eval() const {
        const int n = batch.rows;
        const int d = batch.cols;
        std::size_t t = 0;
        const RefMatrix* mask_d1w = nullptr;
        const RefMatrix* mask_d1b = nullptr;
        const RefMatrix* mask_d2w = nullptr;
        const RefMatrix* mask_d2b = nullptr;
        const RefMatrix* vec_logits = nullptr;
        if (kind == MaskKind::attention) {
            mask_d1w = &params[t++];
            mask_d1b = &params[t++];
            mask_d2w = &params[t++];
            mask_d2b = &params[t++];
        } else {
            vec_logits = &params[t++];
        }
        const RefMatrix& t1w = params[t++];
        const RefMatrix& t1b = params[t++];
        const RefMatrix& t2w = params[t++];
        const RefMatrix& t2b = params[t++];
        const RefMatrix& hmw = params[t++];
        const RefMatrix& hmb = params[t++];
        const RefMatrix& hcw = params[t++];
        const RefMatrix& hcb = params[t++];

        std::vector<ld> zbar(static_cast<std::size_t>(d), 0);
        if (kind == MaskKind::attention) {
            const int hidden = mask_d1w->cols;
            for (int i = 0; i < n; ++i) {
                std::vector<ld> h(static_cast<std::size_t>(hidden));
                for (int u = 0; u < hidden; ++u) {
                    ld z = (*mask_d1b)(0, u);
                    for (int j = 0; j < d; ++j) z += batch(i, j) * (*mask_d1w)(j, u);
                    h[static_cast<std::size_t>(u)] = std::tanh(z);
                }
                for (int j = 0; j < d; ++j) {
                    ld s = (*mask_d2b)(0, j);
                    for (int u = 0; u < hidden; ++u)
                        s += h[static_cast<std::size_t>(u)] * (*mask_d2w)(u, j);
                    zbar[static_cast<std::size_t>(j)] += s;
                }
            }
            for (ld& z : zbar) z /= n;
        } else {
            for (int j = 0; j < d; ++j) zbar[static_cast<std::size_t>(j)] = (*vec_logits)(0, j);
        }
        std::vector<ld> m = zbar, mc(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) mc[static_cast<std::size_t>(j)] = -zbar[static_cast<std::size_t>(j)];
        softmax_row(m);
        softmax_row(mc);

        auto path_loss = [&](const std::vector<ld>& mask_row, const RefMatrix& hw,
                             const RefMatrix& hb, const std::vector<int>& targets) {
            const int t1 = t1w.cols, t2 = t2w.cols, c = hw.cols;
            ld loss = 0;
            for (int i = 0; i < n; ++i) {
                std::vector<ld> a1(static_cast<std::size_t>(t1));
                for (int u = 0; u < t1; ++u) {
                    ld z = t1b(0, u);
                    for (int j = 0; j < d; ++j)
                        z += batch(i, j) * mask_row[static_cast<std::size_t>(j)] * t1w(j, u);
                    a1[static_cast<std::size_t>(u)] = z >= 0 ? z : leaky_alpha * z;
                }
                std::vector<ld> a2(static_cast<std::size_t>(t2));
                for (int v = 0; v < t2; ++v) {
                    ld z = t2b(0, v);
                    for (int u = 0; u < t1; ++u) z += a1[static_cast<std::size_t>(u)] * t2w(u, v);
                    ld a = z >= 0 ? z : leaky_alpha * z;
                    if (dropout_mask.rows > 0) a *= dropout_mask(i, v);
                    a2[static_cast<std::size_t>(v)] = a;
                }
                std::vector<ld> logits(static_cast<std::size_t>(c));
                for (int k = 0; k < c; ++k) {
                    ld z = hb(0, k);
                    for (int v = 0; v < t2; ++v) z += a2[static_cast<std::size_t>(v)] * hw(v, k);
                    logits[static_cast<std::size_t>(k)] = z;
                }
                softmax_row(logits);
                const int target = targets[static_cast<std::size_t>(i)] - 1;
                ld p = logits[static_cast<std::size_t>(target)];
                if (p < static_cast<ld>(kLogClampEps)) p = static_cast<ld>(kLogClampEps);
                loss -= std::log(p);
            }
            return loss / n;
        };

        ld total = path_loss(m, hmw, hmb, labels) + gamma * path_loss(mc, hcw, hcb, comp_labels);
        if (lambda > 0 && kind == MaskKind::trainable_vector) {
            ld l1 = 0;
            for (ld v : vec_logits->data) l1 += std::fabs(v);
            total += lambda * l1;
        }
        return total;
    }
};

}  // namespace refobj

struct GradCheckConfig {
    int input_dim = 20;
    int num_classes = 3;
    int batch_rows = 4;
    MaskKind kind = MaskKind::attention;
    std::uint64_t seed = 0;
    double h = 1e-5;
    double gamma = 1.0;
    double lambda = 0.0;
    bool train_mode = true;  // frozen dropout mask; false = eval (identity)
    TrainingConfig arch;     // trunk widths, dropout rate, leaky alpha, mask hidden
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    long coords_checked = 0;
    double seconds = 0.0;
};

inline GradCheckResult run_gradcheck(const GradCheckConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng init_rng(derive_seed(cfg.seed, seed_stream::init));
    CfmModel model = CfmModel::make(cfg.input_dim, cfg.num_classes, cfg.kind, init_rng, cfg.arch);
    if (auto* attn = std::get_if<AttentionMaskNet>(&model.mask)) {
        // generic second layer: the zero init used for training would leave
        // dense1 with structurally zero gradients, checking nothing
        attn->dense2 = DenseLayer::glorot(attn->dense2.in_dim(), attn->dense2.out_dim(), init_rng);
    } else {
        for (auto& v : std::get<VectorMask>(model.mask).logits.data) v = init_rng.uniform(-1, 1);
    }

    Rng data_rng(derive_seed(cfg.seed, seed_stream::shuffle));
    if (cfg.train_mode) {
        model.set_training(true);
        Rng drop_rng(derive_seed(cfg.seed, seed_stream::dropout));
        model.dropout.sample_mask(cfg.batch_rows, model.trunk2.out_dim(), drop_rng);
        model.dropout.frozen = true;
    }

    // Probe point: a FD step of h can move a pre-activation by at most
    // h * max(1, |unit input|), so any z within that reach of the leaky_relu
    // kink makes central differences measure a slope average instead of the
    // derivative. Nudge trunk biases until every z on both paths clears the
    // kink by a wide margin; the probe point is arbitrary, its conditioning
    // is not.
    Matrix batch(cfg.batch_rows, cfg.input_dim);
    for (auto& v : batch.data) v = data_rng.uniform(-3.0, 3.0);
    const double clearance = 20.0 * cfg.h;
    MaskPair probe_masks = model.mask_forward(batch);
    for (int round = 0;; ++round) {
        if (round > 100) throw std::runtime_error("gradcheck: could not clear activation kinks");
        bool clean = true;
        for (const Matrix* mask_row : {&probe_masks.m, &probe_masks.m_comp}) {
            Matrix xm = elementwise(batch, *mask_row, ElemOp::mul);
            Matrix z1 = elementwise(matmul(xm, model.trunk1.w), model.trunk1.b, ElemOp::add);
            for (int u = 0; u < z1.cols; ++u)
                for (int i = 0; i < z1.rows; ++i)
                    if (std::fabs(z1(i, u)) <= clearance) {
                        model.trunk1.b(0, u) += 3.0 * clearance;
                        clean = false;
                        break;
                    }
            Matrix z2 = elementwise(matmul(leaky_relu_forward(z1, model.leaky_alpha), model.trunk2.w),
                                    model.trunk2.b, ElemOp::add);
            for (int v = 0; v < z2.cols; ++v)
                for (int i = 0; i < z2.rows; ++i)
                    if (std::fabs(z2(i, v)) <= clearance) {
                        model.trunk2.b(0, v) += 3.0 * clearance;
                        clean = false;
                        break;
                    }
        }
        if (clean) break;
    }

    Rng label_rng(derive_seed(cfg.seed, seed_stream::comp_labels));
    std::vector<int> labels, comp_labels;
    for (int i = 0; i < cfg.batch_rows; ++i) {
        labels.push_back(static_cast<int>(label_rng.uniform_int(1, cfg.num_classes)));
        comp_labels.push_back(static_cast<int>(label_rng.uniform_int(1, cfg.num_classes)));
    }

    model.loss_and_gradients(batch, labels, comp_labels, cfg.gamma, cfg.lambda);
    std::vector<Matrix> analytic;
    for (Matrix* g : model.gradients()) analytic.push_back(*g);

    refobj::ReferenceObjective ref =
        refobj::ReferenceObjective::from_model(model, batch, labels, comp_labels, cfg.gamma,
                                               cfg.lambda);
    const auto names = detail::param_block_names(cfg.kind);

    GradCheckResult result;
    const auto h = static_cast<refobj::ld>(cfg.h);
    for (std::size_t k = 0; k < ref.params.size(); ++k) {
        for (std::size_t i = 0; i < ref.params[k].data.size(); ++i) {
            const refobj::ld saved = ref.params[k].data[i];
            ref.params[k].data[i] = saved + h;
            const refobj::ld lp = ref.eval();
            ref.params[k].data[i] = saved - h;
            const refobj::ld lm = ref.eval();
            ref.params[k].data[i] = saved;
            const double numeric = static_cast<double>((lp - lm) / (2 * h));
            const double a = analytic[k].data[i];
            const double err =
                std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            ++result.coords_checked;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_param = names[k] + "[" + std::to_string(i) + "]";
                result.worst_analytic = a;
                result.worst_numeric = numeric;
            }
        }
    }
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace cfm
