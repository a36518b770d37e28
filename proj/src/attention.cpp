#include "s2s/attention.hpp"

#include <algorithm>
#include <cmath>

namespace s2s {

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        double mx = -1e308;
        for (int j = 0; j < logits.cols; ++j) mx = std::max(mx, logits(i, j));
        double sum = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            double e = std::exp(logits(i, j) - mx);
            out(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < logits.cols; ++j) out(i, j) /= sum;
    }
    return out;
}

AttentionResult scaled_attention(const AttentionFeatures& f, const Matrix* logit_bias) {
    if (f.q.cols != f.k.cols)
        throw ShapeError("scaled_attention: query width " + std::to_string(f.q.cols) +
                         " != key width " + std::to_string(f.k.cols));
    if (f.k.rows != f.v.rows)
        throw ShapeError("scaled_attention: key count " + std::to_string(f.k.rows) +
                         " != value count " + std::to_string(f.v.rows));
    if (f.q.cols <= 0)
        throw DomainError("scaled_attention: feature width must be positive");
    if (f.k.rows <= 0)
        throw ShapeError("scaled_attention: key bank is empty");

    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(f.q.cols));
    Matrix logits = matmul_bt(f.q, f.k);
    for (double& v : logits.data) v *= inv_sqrt_d;
    if (logit_bias) {
        if (!logit_bias->same_shape(logits))
            throw ShapeError("scaled_attention: logit bias shape disagrees with Q x K");
        for (size_t i = 0; i < logits.data.size(); ++i) logits.data[i] += logit_bias->data[i];
    }

    AttentionResult r;
    r.map = softmax_rows(logits);
    r.output = matmul(r.map, f.v);
    return r;
}

AttentionFeatures mix_kv(const Matrix& k_ref, const Matrix& v_ref,
                         const Matrix& k_cnt, const Matrix& v_cnt, double alpha) {
    if (!std::isfinite(alpha))
        throw DomainError("mix_kv: alpha must be finite");
    if (!k_ref.same_shape(k_cnt))
        throw ShapeError("mix_kv: key banks differ in shape");
    if (!v_ref.same_shape(v_cnt))
        throw ShapeError("mix_kv: value banks differ in shape");
    if (k_ref.rows != v_ref.rows)
        throw ShapeError("mix_kv: key and value banks differ in row count");

    AttentionFeatures out;
    out.k = k_ref;
    out.v = v_ref;
    for (size_t i = 0; i < out.k.data.size(); ++i) out.k.data[i] += alpha * k_cnt.data[i];
    for (size_t i = 0; i < out.v.data.size(); ++i) out.v.data[i] += alpha * v_cnt.data[i];
    return out;
}

Matrix blend_query(const Matrix& q_cont, const Matrix& q_ske, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw DomainError("blend_query: gamma must lie in [0, 1]");
    if (!q_cont.same_shape(q_ske))
        throw ShapeError("blend_query: query shapes disagree");

    Matrix out(q_cont.rows, q_cont.cols);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = gamma * q_cont.data[i] + (1.0 - gamma) * q_ske.data[i];
    return out;
}

AttentionMap enhance_contrast(const AttentionMap& a, double zeta) {
    if (!std::isfinite(zeta) || zeta <= 0.0)
        throw DomainError("enhance_contrast: zeta must be finite and positive");
    if (a.cols <= 0)
        throw ShapeError("enhance_contrast: map has no columns");
    for (int i = 0; i < a.rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < a.cols; ++j) {
            if (a(i, j) < -1e-9)
                throw DomainError("enhance_contrast: map has negative entries");
            sum += a(i, j);
        }
        if (std::fabs(sum - 1.0) > 1e-6)
            throw DomainError("enhance_contrast: row " + std::to_string(i) +
                              " is not normalized (sum " + std::to_string(sum) + ")");
    }

    Matrix out(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i) {
        double mu = 0.0;
        for (int j = 0; j < a.cols; ++j) mu += a(i, j);
        mu /= a.cols;
        // Stretch about the mean, clip, renormalize. The pre-clip row sum is
        // unchanged by the stretch, so the renormalizer can never divide by 0:
        // at least one entry stays positive.
        double sum = 0.0;
        for (int j = 0; j < a.cols; ++j) {
            double v = (a(i, j) - mu) * zeta + mu;
            if (v < 0.0) v = 0.0;
            out(i, j) = v;
            sum += v;
        }
        for (int j = 0; j < a.cols; ++j) out(i, j) /= sum;
    }
    return out;
}

AttentionFeatures gate_kv_by_mask(const Matrix& k_ske, const Matrix& v_ske,
                                  const Matrix& k_cnt, const Matrix& v_cnt,
                                  const ForegroundMask& mask) {
    if (!k_ske.same_shape(k_cnt) || !v_ske.same_shape(v_cnt))
        throw ShapeError("gate_kv_by_mask: bank shapes disagree");
    if (k_ske.rows != v_ske.rows)
        throw ShapeError("gate_kv_by_mask: key and value banks differ in row count");
    if (mask.resolution * mask.resolution != k_ske.rows)
        throw ShapeError("gate_kv_by_mask: mask covers " +
                         std::to_string(mask.resolution * mask.resolution) +
                         " cells but banks have " + std::to_string(k_ske.rows) + " rows");

    AttentionFeatures out;
    out.k = k_cnt;
    out.v = v_cnt;
    for (int r = 0; r < k_ske.rows; ++r) {
        if (!mask.grid[static_cast<size_t>(r)]) continue;
        for (int c = 0; c < k_ske.cols; ++c) out.k(r, c) = k_ske(r, c);
        for (int c = 0; c < v_ske.cols; ++c) out.v(r, c) = v_ske(r, c);
    }
    return out;
}

} // namespace s2s
