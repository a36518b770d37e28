#ifndef S2S_CORE_HPP
#define S2S_CORE_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2s {

// ---------------------------------------------------------------------------
// Errors. Every throwing site names the offending quantity in the message.
// ---------------------------------------------------------------------------

/// Incompatible matrix/tensor/grid shapes.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Scalar argument outside its valid domain.
class DomainError : public std::invalid_argument {
public:
    explicit DomainError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Non-finite value produced mid-computation; carries the step index.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& msg, int step)
        : std::runtime_error(msg + " (step " + std::to_string(step) + ")"), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

/// A backend was asked for a hook point or feature it does not declare.
class CapabilityError : public std::runtime_error {
public:
    explicit CapabilityError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Failure inside an adapter (decode, scorer, captioner), with context.
class BackendError : public std::runtime_error {
public:
    explicit BackendError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Matrix: dense row-major double matrix. Sizes here are small (a few hundred
// rows), so plain loops beat any BLAS dispatch overhead.
// ---------------------------------------------------------------------------

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {
        if (r < 0 || c < 0) throw ShapeError("matrix dimensions must be non-negative");
    }

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    bool empty() const { return rows == 0 || cols == 0; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

/// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
/// C = A * B^T
Matrix matmul_bt(const Matrix& a, const Matrix& b);

double max_abs_diff(const Matrix& a, const Matrix& b);

// ---------------------------------------------------------------------------
// Tensor: C x H x W double tensor used for latents and decoded images.
// ---------------------------------------------------------------------------

struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c_, int h_, int w_, double fill = 0.0)
        : c(c_), h(h_), w(w_),
          data(static_cast<size_t>(c_) * h_ * w_, fill) {
        if (c_ < 0 || h_ < 0 || w_ < 0) throw ShapeError("tensor dimensions must be non-negative");
    }

    double& at(int ch, int y, int x) {
        return data[(static_cast<size_t>(ch) * h + y) * w + x];
    }
    double at(int ch, int y, int x) const {
        return data[(static_cast<size_t>(ch) * h + y) * w + x];
    }

    size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
};

inline bool operator==(const Tensor& a, const Tensor& b) {
    return a.c == b.c && a.h == b.h && a.w == b.w && a.data == b.data;
}

double max_abs_diff(const Tensor& a, const Tensor& b);
double mean_abs_diff(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Rng: splitmix64 stream with Box-Muller normals. std::normal_distribution is
// implementation-defined, so the generator is hand-rolled to keep every
// "same seed -> same bytes" guarantee platform-independent.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    Tensor normal_tensor(int c, int h, int w) {
        Tensor t(c, h, w);
        for (double& v : t.data) v = normal();
        return t;
    }

    Matrix normal_matrix(int rows, int cols, double scale = 1.0) {
        Matrix m(rows, cols);
        for (double& v : m.data) v = normal() * scale;
        return m;
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// FNV-1a over arbitrary bytes; used for config hashes and fixture ids.
uint64_t fnv1a(const void* bytes, size_t n, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t fnv1a(const std::string& s);

std::string to_hex(uint64_t v);

// ---------------------------------------------------------------------------
// ForegroundMask: binary grid at a working resolution. Produced by the
// segmentation stage, consumed by key/value gating. An all-zero grid is a
// valid (empty) mask; the resolution is always recorded.
// ---------------------------------------------------------------------------

struct ForegroundMask {
    int resolution = 0;            // side length of the square grid
    std::vector<uint8_t> grid;     // entries in {0,1}, row-major

    ForegroundMask() = default;
    ForegroundMask(int res, uint8_t fill)
        : resolution(res), grid(static_cast<size_t>(res) * res, fill) {}

    uint8_t at(int y, int x) const { return grid[static_cast<size_t>(y) * resolution + x]; }
    uint8_t& at(int y, int x) { return grid[static_cast<size_t>(y) * resolution + x]; }

    int count() const {
        int n = 0;
        for (uint8_t v : grid) n += v;
        return n;
    }
    bool all_set() const { return count() == resolution * resolution; }
    bool none_set() const { return count() == 0; }

    /// Nearest-neighbor resample to another square resolution.
    ForegroundMask resampled(int new_res) const;
};

inline bool operator==(const ForegroundMask& a, const ForegroundMask& b) {
    return a.resolution == b.resolution && a.grid == b.grid;
}

} // namespace s2s

#endif
