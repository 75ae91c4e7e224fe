#pragma once

#include "cfm/matrix.hpp"
#include "cfm/rng.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace cfm {

constexpr double kLogClampEps = 1e-12;  // floor applied before log in cross-entropy

inline Matrix one_hot(const std::vector<int>& labels, int num_classes) {
    Matrix out(static_cast<int>(labels.size()), num_classes);
    for (int i = 0; i < out.rows; ++i) {
        const int c = labels[static_cast<std::size_t>(i)];
        if (c < 1 || c > num_classes)
            throw std::invalid_argument("one_hot: label " + std::to_string(c) + " outside [1, " +
                                        std::to_string(num_classes) + "]");
        out(i, c - 1) = 1.0;
    }
    return out;
}

// Fully connected layer, y = x W + b. Gradients accumulate across backward
// calls until zero_grad(), which lets shared layers collect contributions
// from several paths within one step.
struct DenseLayer {
    Matrix w;   // in x out
    Matrix b;   // 1 x out
    Matrix gw;
    Matrix gb;
    Matrix input_cache;
    bool has_input = false;

    DenseLayer() = default;
    DenseLayer(int in, int out) : w(in, out), b(1, out), gw(in, out), gb(1, out) {}

    static DenseLayer glorot(int in, int out, Rng& rng) {
        DenseLayer layer(in, out);
        const double limit = std::sqrt(6.0 / (in + out));
        for (auto& v : layer.w.data) v = rng.uniform(-limit, limit);
        return layer;  // bias stays zero
    }

    int in_dim() const { return w.rows; }
    int out_dim() const { return w.cols; }

    Matrix forward(const Matrix& x) {
        if (x.cols != w.rows)
            throw std::invalid_argument("dense forward: input " + x.shape_str() +
                                        " incompatible with weights " + w.shape_str());
        input_cache = x;
        has_input = true;
        Matrix out = matmul(x, w);
        return elementwise(out, b, ElemOp::add);
    }

    // Accumulates parameter gradients for the given cached input; returns the
    // gradient with respect to that input.
    Matrix backward(const Matrix& input, const Matrix& grad_out) {
        if (grad_out.rows != input.rows || grad_out.cols != w.cols)
            throw std::invalid_argument("dense backward: gradient " + grad_out.shape_str() +
                                        " incompatible with weights " + w.shape_str());
        Matrix dw = matmul(transpose(input), grad_out);
        for (std::size_t i = 0; i < gw.size(); ++i) gw.data[i] += dw.data[i];
        Matrix db = col_sum(grad_out);
        for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += db.data[i];
        return matmul(grad_out, transpose(w));
    }

    Matrix backward(const Matrix& grad_out) {
        if (!has_input) throw std::logic_error("dense backward called before forward");
        return backward(input_cache, grad_out);
    }

    void zero_grad() {
        gw.fill(0.0);
        gb.fill(0.0);
    }
};

inline Matrix tanh_forward(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = std::tanh(x.data[i]);
    return out;
}

// Backward from the tanh output: d tanh = 1 - y^2.
inline Matrix tanh_backward(const Matrix& y, const Matrix& grad_out) {
    Matrix out(y.rows, y.cols);
    for (std::size_t i = 0; i < y.size(); ++i)
        out.data[i] = grad_out.data[i] * (1.0 - y.data[i] * y.data[i]);
    return out;
}

inline Matrix leaky_relu_forward(const Matrix& x, double alpha) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data[i];
        out.data[i] = v >= 0.0 ? v : alpha * v;
    }
    return out;
}

// Needs the pre-activation input; slope at exactly zero is taken as 1.
inline Matrix leaky_relu_backward(const Matrix& x, const Matrix& grad_out, double alpha) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i)
        out.data[i] = grad_out.data[i] * (x.data[i] >= 0.0 ? 1.0 : alpha);
    return out;
}

enum class ActivationKind { tanh, leaky_relu, softmax };

inline Matrix activation_forward(const Matrix& x, ActivationKind kind, double alpha = 0.02) {
    switch (kind) {
        case ActivationKind::tanh: return tanh_forward(x);
        case ActivationKind::leaky_relu: return leaky_relu_forward(x, alpha);
        case ActivationKind::softmax: return softmax_rows(x);
    }
    throw std::logic_error("activation_forward: unknown kind");
}

// Inverted dropout: training zeroes each unit with probability `rate` and
// scales survivors by 1/(1-rate); evaluation is the identity. The sampled
// mask is kept so a second apply() within the same step (the complementary
// path) sees the same realization, and so gradient checking can freeze it.
struct DropoutLayer {
    double rate = 0.0;
    bool training = false;
    bool frozen = false;
    Matrix mask;

    DropoutLayer() = default;
    explicit DropoutLayer(double r) : rate(r) {
        if (r < 0.0 || r >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
    }

    void sample_mask(int rows, int cols, Rng& rng) {
        if (!training || frozen) return;
        mask = Matrix(rows, cols);
        const double keep = 1.0 - rate;
        for (auto& v : mask.data) v = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    }

    Matrix apply(const Matrix& x) const {
        if (!training) return x;
        if (!x.same_shape(mask))
            throw std::logic_error("dropout apply: no mask sampled for shape " + x.shape_str());
        return elementwise(x, mask, ElemOp::mul);
    }

    Matrix backward(const Matrix& grad_out) const {
        if (!training) return grad_out;
        return elementwise(grad_out, mask, ElemOp::mul);
    }
};

struct LossGrad {
    double loss = 0.0;
    Matrix grad;  // d loss / d pred
};

// Mean over rows of -sum(onehot * log(pred)), with pred clamped at
// kLogClampEps before the log so an exactly-zero probability at the true
// label stays finite.
inline LossGrad cross_entropy(const Matrix& pred, const Matrix& onehot) {
    if (!pred.same_shape(onehot))
        throw std::invalid_argument("cross_entropy: shapes " + pred.shape_str() + " vs " +
                                    onehot.shape_str());
    LossGrad out;
    out.grad = Matrix(pred.rows, pred.cols);
    const double inv_n = 1.0 / pred.rows;
    for (int i = 0; i < pred.rows; ++i) {
        for (int j = 0; j < pred.cols; ++j) {
            if (onehot(i, j) == 0.0) continue;
            const double p = std::max(pred(i, j), kLogClampEps);
            out.loss -= onehot(i, j) * std::log(p) * inv_n;
            // Inside the clamp the computed loss is locally constant in pred.
            out.grad(i, j) = pred(i, j) > kLogClampEps ? -onehot(i, j) / p * inv_n : 0.0;
        }
    }
    return out;
}

// Gradient of mean cross-entropy with respect to pre-softmax logits when the
// final activation is softmax: (pred - onehot) / N.
inline Matrix softmax_xent_grad(const Matrix& pred, const Matrix& onehot) {
    Matrix out = elementwise(pred, onehot, ElemOp::sub);
    return scale(out, 1.0 / pred.rows);
}

// Jacobian-vector product of a single softmax row:
// d logits_j = m_j * (g_j - sum_k g_k m_k).
inline Matrix softmax_vec_backward(const Matrix& softmax_out, const Matrix& grad_out) {
    if (softmax_out.rows != 1 || !softmax_out.same_shape(grad_out))
        throw std::invalid_argument("softmax_vec_backward expects matching 1xD inputs");
    double dot = 0.0;
    for (int j = 0; j < softmax_out.cols; ++j) dot += grad_out(0, j) * softmax_out(0, j);
    Matrix out(1, softmax_out.cols);
    for (int j = 0; j < softmax_out.cols; ++j)
        out(0, j) = softmax_out(0, j) * (grad_out(0, j) - dot);
    return out;
}

inline std::vector<const Matrix*> const_ptrs(const std::vector<Matrix*>& v) {
    return {v.begin(), v.end()};
}

// Bias-corrected Adam.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;

    void init(const std::vector<Matrix*>& params) {
        m.clear();
        v.clear();
        for (const Matrix* p : params) {
            m.emplace_back(p->rows, p->cols);
            v.emplace_back(p->rows, p->cols);
        }
        step_count = 0;
    }

    void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads) {
        if (params.size() != grads.size() || params.size() != m.size())
            throw std::invalid_argument("adam step: parameter/gradient count mismatch");
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Matrix& p = *params[k];
            const Matrix& g = *grads[k];
            if (!p.same_shape(g))
                throw std::invalid_argument("adam step: shape mismatch " + p.shape_str() + " vs " +
                                            g.shape_str());
            for (std::size_t i = 0; i < p.size(); ++i) {
                double& mi = m[k].data[i];
                double& vi = v[k].data[i];
                const double gi = g.data[i];
                mi = beta1 * mi + (1.0 - beta1) * gi;
                vi = beta2 * vi + (1.0 - beta2) * gi * gi;
                p.data[i] -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
            }
        }
    }
};

// Central finite differences against analytic gradients, reporting
// max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// The loss closure must be deterministic: frozen dropout masks, fixed labels.
inline double grad_check_max_rel_error(const std::vector<Matrix*>& params,
                                       const std::vector<const Matrix*>& analytic,
                                       const std::function<double()>& loss_fn,
                                       double h = 1e-5) {
    if (params.size() != analytic.size())
        throw std::invalid_argument("grad check: parameter/gradient count mismatch");
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p.data[i];
            p.data[i] = saved + h;
            const double lp = loss_fn();
            p.data[i] = saved - h;
            const double lm = loss_fn();
            p.data[i] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[k]->data[i];
            const double err =
                std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace cfm
