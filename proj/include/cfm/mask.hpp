#pragma once

#include "cfm/matrix.hpp"
#include "cfm/nn.hpp"
#include "cfm/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace cfm {

// Coupled importance masks over the D candidate features. m ranks features
// by importance; m_comp is the softmax of the negated logits, so its element
// ranking is exactly the reverse of m's whenever the logits are tie-free.
struct MaskPair {
    Matrix logits;  // 1 x D
    Matrix m;       // softmax(logits)
    Matrix m_comp;  // softmax(-logits)

    static MaskPair from_logits(const Matrix& logits) {
        if (logits.rows != 1) throw std::invalid_argument("MaskPair: logits must be a single row");
        MaskPair pair;
        pair.logits = logits;
        pair.m = softmax_rows(logits);
        pair.m_comp = softmax_rows(scale(logits, -1.0));
        return pair;
    }
};

// Batch-attention mask generator: logits are the batch mean of
// dense2(tanh(dense1(x))), with dense1: D -> H and dense2: H -> D.
// dense2 starts at exactly zero so the initial masks are uniform and both
// paths weight every candidate feature equally.
struct AttentionMaskNet {
    DenseLayer dense1;
    DenseLayer dense2;

    AttentionMaskNet() = default;
    AttentionMaskNet(int input_dim, int hidden, Rng& rng)
        : dense1(DenseLayer::glorot(input_dim, hidden > 0 ? hidden : input_dim, rng)),
          dense2(hidden > 0 ? hidden : input_dim, input_dim) {}

    int input_dim() const { return dense1.in_dim(); }

    MaskPair forward(const Matrix& batch) {
        check_batch(batch);
        Matrix hidden = tanh_forward(dense1.forward(batch));
        Matrix scores = dense2.forward(hidden);  // caches hidden for backward
        return MaskPair::from_logits(col_mean(scores));
    }

    // Inference-only mask over a full dataset, streamed in chunks. Row order
    // and chunking do not change the result beyond fp round-off because each
    // row's score is accumulated in index order.
    MaskPair full_data_mask(const Matrix& data, int chunk_rows = 256) const {
        check_batch(data);
        if (chunk_rows < 1) throw std::invalid_argument("full_data_mask: chunk_rows must be >= 1");
        Matrix sum(1, dense2.out_dim());
        AttentionMaskNet scratch = *this;
        for (int start = 0; start < data.rows; start += chunk_rows) {
            std::vector<int> idx;
            for (int i = start; i < std::min(data.rows, start + chunk_rows); ++i) idx.push_back(i);
            Matrix chunk = take_rows(data, idx);
            Matrix scores = scratch.dense2.forward(tanh_forward(scratch.dense1.forward(chunk)));
            for (int i = 0; i < scores.rows; ++i)
                for (int j = 0; j < scores.cols; ++j) sum(0, j) += scores(i, j);
        }
        for (double& v : sum.data) v /= data.rows;
        return MaskPair::from_logits(sum);
    }

    // Routes gradients arriving at both masks back through the shared logits:
    // d z = J_softmax(m) dm - J_softmax(m_comp) dm_comp, then through the
    // batch mean and both dense layers.
    void backward(const MaskPair& masks, const Matrix& grad_m, const Matrix& grad_m_comp) {
        Matrix dz = elementwise(softmax_vec_backward(masks.m, grad_m),
                                softmax_vec_backward(masks.m_comp, grad_m_comp), ElemOp::sub);
        const int batch_rows = dense1.input_cache.rows;
        Matrix dscores(batch_rows, dz.cols);
        for (int i = 0; i < batch_rows; ++i)
            for (int j = 0; j < dz.cols; ++j) dscores(i, j) = dz(0, j) / batch_rows;
        Matrix dhidden = dense2.backward(dscores);
        Matrix dpre = tanh_backward(dense2.input_cache, dhidden);
        dense1.backward(dpre);
    }

    std::vector<Matrix*> parameters() { return {&dense1.w, &dense1.b, &dense2.w, &dense2.b}; }
    std::vector<Matrix*> gradients() { return {&dense1.gw, &dense1.gb, &dense2.gw, &dense2.gb}; }
    void zero_grad() {
        dense1.zero_grad();
        dense2.zero_grad();
    }

private:
    void check_batch(const Matrix& batch) const {
        if (batch.rows < 1) throw std::invalid_argument("mask net: empty batch");
        if (batch.cols != dense1.in_dim())
            throw std::invalid_argument("mask net: batch has " + std::to_string(batch.cols) +
                                        " columns, expected " + std::to_string(dense1.in_dim()));
    }
};

// Directly trainable mask logits for architectures without an input-dependent
// mask generator. Masks are still the coupled softmax pair.
struct VectorMask {
    Matrix logits;  // 1 x D
    Matrix grad;

    VectorMask() = default;
    VectorMask(int input_dim, Rng& rng) : logits(1, input_dim), grad(1, input_dim) {
        for (auto& v : logits.data) v = rng.normal(0.0, 0.01);
    }

    int input_dim() const { return logits.cols; }

    MaskPair forward() const {
        if (!logits.all_finite()) throw std::invalid_argument("vector mask: non-finite logits");
        return MaskPair::from_logits(logits);
    }

    void backward(const MaskPair& masks, const Matrix& grad_m, const Matrix& grad_m_comp) {
        Matrix dz = elementwise(softmax_vec_backward(masks.m, grad_m),
                                softmax_vec_backward(masks.m_comp, grad_m_comp), ElemOp::sub);
        for (std::size_t i = 0; i < grad.size(); ++i) grad.data[i] += dz.data[i];
    }

    std::vector<Matrix*> parameters() { return {&logits}; }
    std::vector<Matrix*> gradients() { return {&grad}; }
    void zero_grad() { grad.fill(0.0); }
};

inline MaskPair mask_from_vector(const VectorMask& v) { return v.forward(); }

// The (1 - m) / D alternative complementary design. Kept for comparison: its
// entries can differ by at most 1/D, which collapses the score spread on
// trained masks.
inline Matrix mask_alt_design(const Matrix& m) {
    if (m.rows != 1) throw std::invalid_argument("mask_alt_design: expected a single row");
    double sum = 0.0;
    for (double v : m.data) {
        if (v < 0.0 || v > 1.0) throw std::invalid_argument("mask_alt_design: not a probability vector");
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("mask_alt_design: mask entries must sum to 1");
    Matrix out(1, m.cols);
    for (int j = 0; j < m.cols; ++j) out(0, j) = (1.0 - m(0, j)) / m.cols;
    return out;
}

}  // namespace cfm
