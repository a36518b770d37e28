#ifndef S2S_ATTENTION_HPP
#define S2S_ATTENTION_HPP

#include "s2s/core.hpp"

namespace s2s {

/// Projected features for one attention block. Q rows are query tokens,
/// K/V rows are key/value tokens; all three share the feature width.
struct AttentionFeatures {
    Matrix q;
    Matrix k;
    Matrix v;
};

/// Row-stochastic attention weights: rows = queries, cols = keys.
using AttentionMap = Matrix;

/// Row-wise softmax with max-subtraction, so large-magnitude logits cannot
/// overflow. Rows of the result sum to 1 within 1e-12.
Matrix softmax_rows(const Matrix& logits);

struct AttentionResult {
    AttentionMap map;  // n_q x n_k
    Matrix output;     // n_q x d_v
};

/// A = softmax(Q K^T / sqrt(d)), output = A V.
/// `logit_bias`, when given, is added to the scaled logits before softmax
/// (n_q x n_k); the map stays row-stochastic.
AttentionResult scaled_attention(const AttentionFeatures& f,
                                 const Matrix* logit_bias = nullptr);

/// Stroke bank mixing: K = K_ref + alpha * K_cnt, V = V_ref + alpha * V_cnt.
/// alpha = 0 keeps the pure reference bank; larger alpha re-admits content
/// features. Linear in alpha; alpha must be finite.
AttentionFeatures mix_kv(const Matrix& k_ref, const Matrix& v_ref,
                         const Matrix& k_cnt, const Matrix& v_cnt, double alpha);

/// Contour anchoring: Q = gamma * Q_cont + (1 - gamma) * Q_ske.
/// gamma in [0, 1]; 0 keeps the in-flight queries, 1 replaces them outright.
Matrix blend_query(const Matrix& q_cont, const Matrix& q_ske, double gamma);

/// Per-row contrast stretch about the row mean: a' = (a - mu) * zeta + mu,
/// negatives clipped, row renormalized to sum 1. zeta > 1 sharpens, zeta = 1
/// is the identity, zeta in (0,1) flattens. Input rows must already be
/// row-stochastic (checked to 1e-6).
AttentionMap enhance_contrast(const AttentionMap& a, double zeta);

/// Row-wise bank selection: key/value rows whose grid cell is foreground come
/// from the styled bank, the rest from the content bank. The mask grid must
/// cover the key rows exactly (resolution^2 == rows).
AttentionFeatures gate_kv_by_mask(const Matrix& k_ske, const Matrix& v_ske,
                                  const Matrix& k_cnt, const Matrix& v_cnt,
                                  const ForegroundMask& mask);

} // namespace s2s

#endif
