#include "s2s/core.hpp"

#include <algorithm>
#include <cstdio>

namespace s2s {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: inner dimensions disagree (" + std::to_string(a.cols) +
                         " vs " + std::to_string(b.rows) + ")");
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols)
        throw ShapeError("matmul_bt: feature dimensions disagree (" + std::to_string(a.cols) +
                         " vs " + std::to_string(b.cols) + ")");
    Matrix c(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.rows; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += a(i, k) * b(j, k);
            c(i, j) = s;
        }
    }
    return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw ShapeError("max_abs_diff: shapes disagree");
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("max_abs_diff: tensor shapes disagree (" + a.shape_str() + " vs " +
                         b.shape_str() + ")");
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

double mean_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("mean_abs_diff: tensor shapes disagree (" + a.shape_str() + " vs " +
                         b.shape_str() + ")");
    if (a.data.empty()) return 0.0;
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += std::fabs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

uint64_t fnv1a(const void* bytes, size_t n, uint64_t seed) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

std::string to_hex(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

ForegroundMask ForegroundMask::resampled(int new_res) const {
    if (new_res <= 0) throw DomainError("mask resample: resolution must be positive");
    if (resolution <= 0) throw ShapeError("mask resample: source mask is empty");
    ForegroundMask out(new_res, 0);
    for (int y = 0; y < new_res; ++y) {
        int sy = y * resolution / new_res;
        for (int x = 0; x < new_res; ++x) {
            int sx = x * resolution / new_res;
            out.at(y, x) = at(sy, sx);
        }
    }
    return out;
}

} // namespace s2s
