#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "s2s/attention.hpp"

#include <cmath>

using namespace s2s;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
    return rng.normal_matrix(rows, cols, scale);
}

// Naive double-loop attention, the oracle scaled_attention must match.
AttentionResult brute_force_attention(const AttentionFeatures& f) {
    const int nq = f.q.rows, nk = f.k.rows, d = f.q.cols, dv = f.v.cols;
    AttentionResult r;
    r.map = Matrix(nq, nk);
    r.output = Matrix(nq, dv);
    for (int i = 0; i < nq; ++i) {
        double sum = 0.0;
        for (int j = 0; j < nk; ++j) {
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += f.q(i, k) * f.k(j, k);
            r.map(i, j) = std::exp(dot / std::sqrt(static_cast<double>(d)));
            sum += r.map(i, j);
        }
        for (int j = 0; j < nk; ++j) {
            r.map(i, j) /= sum;
            for (int k = 0; k < dv; ++k) r.output(i, k) += r.map(i, j) * f.v(j, k);
        }
    }
    return r;
}

double row_variance(const Matrix& m, int row) {
    double mu = 0.0;
    for (int j = 0; j < m.cols; ++j) mu += m(row, j);
    mu /= m.cols;
    double var = 0.0;
    for (int j = 0; j < m.cols; ++j) var += (m(row, j) - mu) * (m(row, j) - mu);
    return var / m.cols;
}

} // namespace

TEST_CASE("scaled_attention on the 1x2 hand case") {
    AttentionFeatures f;
    f.q = Matrix(1, 2);
    f.q(0, 0) = 1.0;
    f.k = Matrix::identity(2);
    f.v = Matrix::identity(2);

    AttentionResult r = scaled_attention(f);
    // softmax(1/sqrt(2), 0)
    double e = std::exp(1.0 / std::sqrt(2.0));
    double a0 = e / (e + 1.0);
    CHECK(r.map.rows == 1);
    CHECK(r.map.cols == 2);
    CHECK(r.map(0, 0) == doctest::Approx(a0).epsilon(1e-12));
    CHECK(r.map(0, 1) == doctest::Approx(1.0 - a0).epsilon(1e-12));
    CHECK(r.map(0, 0) == doctest::Approx(0.6698).epsilon(1e-3));
    CHECK(r.map(0, 1) == doctest::Approx(0.3302).epsilon(1e-3));
    // V is the identity, so the attended output equals the map.
    CHECK(max_abs_diff(r.output, r.map) < 1e-15);
}

TEST_CASE("scaled_attention with a single zero key") {
    AttentionFeatures f;
    f.q = Matrix(1, 3);
    f.k = Matrix(1, 3);
    f.v = Matrix(1, 1);
    f.v(0, 0) = 7.0;

    AttentionResult r = scaled_attention(f);
    CHECK(r.map(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.output(0, 0) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("scaled_attention matches the brute-force loop") {
    Rng rng(11);
    AttentionFeatures f;
    f.q = random_matrix(rng, 8, 4);
    f.k = random_matrix(rng, 8, 4);
    f.v = random_matrix(rng, 8, 4);

    AttentionResult fast = scaled_attention(f);
    AttentionResult slow = brute_force_attention(f);
    CHECK(max_abs_diff(fast.map, slow.map) < 1e-6);
    CHECK(max_abs_diff(fast.output, slow.output) < 1e-6);
}

TEST_CASE("scaled_attention rows sum to 1 across random shapes") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        int nq = 1 + static_cast<int>(rng.below(16));
        int nk = 1 + static_cast<int>(rng.below(16));
        int d = 1 + static_cast<int>(rng.below(8));
        AttentionFeatures f;
        f.q = random_matrix(rng, nq, d, 3.0);
        f.k = random_matrix(rng, nk, d, 3.0);
        f.v = random_matrix(rng, nk, 2);
        AttentionResult r = scaled_attention(f);
        for (int i = 0; i < nq; ++i) {
            double sum = 0.0;
            for (int j = 0; j < nk; ++j) {
                CHECK(r.map(i, j) >= 0.0);
                sum += r.map(i, j);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
        }
    }
}

TEST_CASE("scaled_attention rejects bad shapes") {
    Rng rng(5);
    AttentionFeatures f;
    f.q = random_matrix(rng, 2, 3);
    f.k = random_matrix(rng, 4, 2);  // width 2 != query width 3
    f.v = random_matrix(rng, 4, 2);
    CHECK_THROWS_AS(scaled_attention(f), ShapeError);

    f.k = random_matrix(rng, 4, 3);
    f.v = random_matrix(rng, 5, 2);  // 5 values for 4 keys
    CHECK_THROWS_AS(scaled_attention(f), ShapeError);
}

TEST_CASE("scaled_attention logit bias shifts mass but keeps rows stochastic") {
    Rng rng(31);
    AttentionFeatures f;
    f.q = random_matrix(rng, 3, 4);
    f.k = random_matrix(rng, 5, 4);
    f.v = random_matrix(rng, 5, 2);

    Matrix bias(3, 5);
    bias(0, 2) = 4.0;
    AttentionResult plain = scaled_attention(f);
    AttentionResult biased = scaled_attention(f, &bias);
    CHECK(biased.map(0, 2) > plain.map(0, 2));
    for (int i = 0; i < 3; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 5; ++j) sum += biased.map(i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    Matrix bad_bias(2, 5);
    CHECK_THROWS_AS(scaled_attention(f, &bad_bias), ShapeError);
}

TEST_CASE("mix_kv at alpha 0 returns the reference bank exactly") {
    Rng rng(3);
    Matrix k_ref = random_matrix(rng, 4, 4);
    Matrix v_ref = random_matrix(rng, 4, 4);
    Matrix k_cnt = random_matrix(rng, 4, 4);
    Matrix v_cnt = random_matrix(rng, 4, 4);

    AttentionFeatures out = mix_kv(k_ref, v_ref, k_cnt, v_cnt, 0.0);
    CHECK(out.k == k_ref);
    CHECK(out.v == v_ref);
}

TEST_CASE("mix_kv at alpha 1 is the elementwise sum") {
    Matrix k_ref(1, 2), k_cnt(1, 2);
    k_ref(0, 0) = 1;
    k_ref(0, 1) = 2;
    k_cnt(0, 0) = 3;
    k_cnt(0, 1) = 4;
    Matrix v_ref(1, 2), v_cnt(1, 2);

    AttentionFeatures out = mix_kv(k_ref, v_ref, k_cnt, v_cnt, 1.0);
    CHECK(out.k(0, 0) == doctest::Approx(4.0));
    CHECK(out.k(0, 1) == doctest::Approx(6.0));
}

TEST_CASE("mix_kv at alpha 0.5 matches the entrywise oracle") {
    Rng rng(17);
    Matrix k_ref = random_matrix(rng, 4, 4);
    Matrix v_ref = random_matrix(rng, 4, 4);
    Matrix k_cnt = random_matrix(rng, 4, 4);
    Matrix v_cnt = random_matrix(rng, 4, 4);

    AttentionFeatures out = mix_kv(k_ref, v_ref, k_cnt, v_cnt, 0.5);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            CHECK(out.k(i, j) == doctest::Approx(k_ref(i, j) + 0.5 * k_cnt(i, j)).epsilon(1e-12));
            CHECK(out.v(i, j) == doctest::Approx(v_ref(i, j) + 0.5 * v_cnt(i, j)).epsilon(1e-12));
        }
}

TEST_CASE("mix_kv is linear in alpha") {
    Rng rng(29);
    Matrix k_ref = random_matrix(rng, 3, 5);
    Matrix v_ref = random_matrix(rng, 3, 5);
    Matrix k_cnt = random_matrix(rng, 3, 5);
    Matrix v_cnt = random_matrix(rng, 3, 5);

    double a1 = 0.3, a2 = 0.9;
    AttentionFeatures m1 = mix_kv(k_ref, v_ref, k_cnt, v_cnt, a1);
    AttentionFeatures m2 = mix_kv(k_ref, v_ref, k_cnt, v_cnt, a2);
    AttentionFeatures m12 = mix_kv(k_ref, v_ref, k_cnt, v_cnt, a1 + a2);
    // mix(a1) + mix(a2) - K_ref = mix(a1 + a2)
    Matrix lhs = m1.k;
    for (size_t i = 0; i < lhs.data.size(); ++i) lhs.data[i] += m2.k.data[i] - k_ref.data[i];
    CHECK(max_abs_diff(lhs, m12.k) < 1e-12);
}

TEST_CASE("mix_kv rejects bad inputs") {
    Matrix a(2, 2), b(3, 2);
    CHECK_THROWS_AS(mix_kv(a, a, b, a, 0.5), ShapeError);
    CHECK_THROWS_AS(mix_kv(a, a, a, a, std::nan("")), DomainError);
}

TEST_CASE("blend_query endpoints and midpoint") {
    Rng rng(41);
    Matrix q_cont = random_matrix(rng, 4, 4);
    Matrix q_ske = random_matrix(rng, 4, 4);

    CHECK(blend_query(q_cont, q_ske, 0.0) == q_ske);
    CHECK(blend_query(q_cont, q_ske, 1.0) == q_cont);

    Matrix c(1, 1), s(1, 1);
    c(0, 0) = 4.0;
    CHECK(blend_query(c, s, 0.25)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("blend_query stays within the entrywise envelope") {
    Rng rng(43);
    Matrix q_cont = random_matrix(rng, 6, 3);
    Matrix q_ske = random_matrix(rng, 6, 3);
    for (double gamma : {0.1, 0.5, 0.9}) {
        Matrix out = blend_query(q_cont, q_ske, gamma);
        for (size_t i = 0; i < out.data.size(); ++i) {
            double lo = std::min(q_cont.data[i], q_ske.data[i]);
            double hi = std::max(q_cont.data[i], q_ske.data[i]);
            CHECK(out.data[i] >= lo - 1e-12);
            CHECK(out.data[i] <= hi + 1e-12);
        }
    }
}

TEST_CASE("blend_query rejects out-of-range gamma and bad shapes") {
    Matrix a(2, 2), b(2, 2), c(3, 2);
    CHECK_THROWS_AS(blend_query(a, b, -0.1), DomainError);
    CHECK_THROWS_AS(blend_query(a, b, 1.1), DomainError);
    CHECK_THROWS_AS(blend_query(a, b, std::nan("")), DomainError);
    CHECK_THROWS_AS(blend_query(a, c, 0.5), ShapeError);
}

TEST_CASE("enhance_contrast at zeta 1 is the identity") {
    Rng rng(53);
    Matrix logits = random_matrix(rng, 5, 7);
    Matrix a = softmax_rows(logits);
    Matrix out = enhance_contrast(a, 1.0);
    CHECK(max_abs_diff(out, a) < 1e-9);
}

TEST_CASE("enhance_contrast hand cases") {
    Matrix a(1, 2);
    a(0, 0) = 0.25;
    a(0, 1) = 0.75;
    Matrix out = enhance_contrast(a, 1.67);
    // (0.25 - 0.5) * 1.67 + 0.5 = 0.0825; no clipping, sum already 1
    CHECK(out(0, 0) == doctest::Approx(0.0825).epsilon(1e-12));
    CHECK(out(0, 1) == doctest::Approx(0.9175).epsilon(1e-12));

    Matrix b(1, 2);
    b(0, 0) = 0.1;
    b(0, 1) = 0.9;
    Matrix clipped = enhance_contrast(b, 10.0);
    // pre-clip (-3.5, 4.5) -> clip -> renormalize
    CHECK(clipped(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(clipped(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("enhance_contrast rejects bad zeta and non-stochastic rows") {
    Matrix a(1, 2);
    a(0, 0) = 0.25;
    a(0, 1) = 0.75;
    CHECK_THROWS_AS(enhance_contrast(a, 0.0), DomainError);
    CHECK_THROWS_AS(enhance_contrast(a, -1.0), DomainError);

    Matrix bad(1, 2);
    bad(0, 0) = 0.5;
    bad(0, 1) = 0.9;
    CHECK_THROWS_AS(enhance_contrast(bad, 1.5), DomainError);
}

TEST_CASE("enhance_contrast keeps rows stochastic and matches the no-clip formula") {
    Rng rng(59);
    // Near-uniform rows so a moderate stretch never clips.
    Matrix logits = random_matrix(rng, 6, 5, 0.1);
    Matrix a = softmax_rows(logits);
    Matrix out = enhance_contrast(a, 1.5);
    for (int i = 0; i < a.rows; ++i) {
        double mu = 0.0, sum = 0.0;
        for (int j = 0; j < a.cols; ++j) mu += a(i, j);
        mu /= a.cols;
        for (int j = 0; j < a.cols; ++j) {
            double expect = (a(i, j) - mu) * 1.5 + mu;
            CHECK(expect >= 0.0);  // no-clip premise
            CHECK(out(i, j) == doctest::Approx(expect).epsilon(1e-12));
            sum += out(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("enhance_contrast moves row variance in the zeta direction") {
    Rng rng(61);
    Matrix logits = random_matrix(rng, 4, 6, 0.1);
    Matrix a = softmax_rows(logits);
    Matrix sharp = enhance_contrast(a, 1.5);
    Matrix flat = enhance_contrast(a, 0.5);
    for (int i = 0; i < a.rows; ++i) {
        CHECK(row_variance(sharp, i) >= row_variance(a, i) - 1e-12);
        CHECK(row_variance(flat, i) <= row_variance(a, i) + 1e-12);
    }
}

TEST_CASE("enhance_contrast output rows sum to 1 even on clipping inputs") {
    Rng rng(67);
    Matrix logits = random_matrix(rng, 8, 10, 3.0);
    Matrix a = softmax_rows(logits);
    Matrix out = enhance_contrast(a, 4.0);
    for (int i = 0; i < out.rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < out.cols; ++j) {
            CHECK(out(i, j) >= 0.0);
            sum += out(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("gate_kv_by_mask endpoint masks") {
    Rng rng(71);
    Matrix k_ske = random_matrix(rng, 4, 3);
    Matrix v_ske = random_matrix(rng, 4, 3);
    Matrix k_cnt = random_matrix(rng, 4, 3);
    Matrix v_cnt = random_matrix(rng, 4, 3);

    ForegroundMask ones(2, 1);
    AttentionFeatures fg = gate_kv_by_mask(k_ske, v_ske, k_cnt, v_cnt, ones);
    CHECK(fg.k == k_ske);
    CHECK(fg.v == v_ske);

    ForegroundMask zeros(2, 0);
    AttentionFeatures bg = gate_kv_by_mask(k_ske, v_ske, k_cnt, v_cnt, zeros);
    CHECK(bg.k == k_cnt);
    CHECK(bg.v == v_cnt);
}

TEST_CASE("gate_kv_by_mask splits rows on a half mask") {
    Rng rng(73);
    Matrix k_ske = random_matrix(rng, 4, 3);
    Matrix v_ske = random_matrix(rng, 4, 3);
    Matrix k_cnt = random_matrix(rng, 4, 3);
    Matrix v_cnt = random_matrix(rng, 4, 3);

    ForegroundMask half(2, 0);
    half.grid = {1, 1, 0, 0};
    AttentionFeatures out = gate_kv_by_mask(k_ske, v_ske, k_cnt, v_cnt, half);
    for (int c = 0; c < 3; ++c) {
        CHECK(out.k(0, c) == k_ske(0, c));
        CHECK(out.k(1, c) == k_ske(1, c));
        CHECK(out.k(2, c) == k_cnt(2, c));
        CHECK(out.k(3, c) == k_cnt(3, c));
        CHECK(out.v(0, c) == v_ske(0, c));
        CHECK(out.v(3, c) == v_cnt(3, c));
    }
}

TEST_CASE("gate_kv_by_mask is idempotent") {
    Rng rng(79);
    Matrix k_ske = random_matrix(rng, 9, 2);
    Matrix v_ske = random_matrix(rng, 9, 2);
    Matrix k_cnt = random_matrix(rng, 9, 2);
    Matrix v_cnt = random_matrix(rng, 9, 2);

    ForegroundMask m(3, 0);
    m.grid = {1, 0, 1, 0, 1, 0, 1, 0, 1};
    AttentionFeatures once = gate_kv_by_mask(k_ske, v_ske, k_cnt, v_cnt, m);
    AttentionFeatures twice = gate_kv_by_mask(once.k, once.v, k_cnt, v_cnt, m);
    CHECK(twice.k == once.k);
    CHECK(twice.v == once.v);
}

TEST_CASE("gate_kv_by_mask rejects a mismatched mask") {
    Matrix k(4, 3), v(4, 3);
    ForegroundMask m(3, 1);  // 9 cells for 4 rows
    CHECK_THROWS_AS(gate_kv_by_mask(k, v, k, v, m), ShapeError);
}

TEST_CASE("softmax_rows is row-stochastic and shift-invariant") {
    Rng rng(83);
    Matrix logits = random_matrix(rng, 5, 6, 50.0);  // large logits stay finite
    Matrix a = softmax_rows(logits);
    CHECK(a.all_finite());
    for (int i = 0; i < a.rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < a.cols; ++j) sum += a(i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    Matrix shifted = logits;
    for (double& v : shifted.data) v += 123.0;
    CHECK(max_abs_diff(softmax_rows(shifted), a) < 1e-12);
}
