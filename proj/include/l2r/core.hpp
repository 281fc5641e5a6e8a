#pragma once

// Dense vector/matrix primitives, seeded randomness and a two-component PCA.
// Everything is double precision with fixed sequential accumulation order so
// that identical inputs produce identical bits on every run.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace l2r {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("dot: size mismatch " + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(const Vec& a) {
    double acc = 0.0;
    for (double x : a) acc += x * x;
    return std::sqrt(acc);
}

inline bool all_finite(const Vec& a) {
    for (double x : a)
        if (!std::isfinite(x)) return false;
    return true;
}

/// Row-major dense matrix.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

/// m * v with v.size() == m.cols. Accumulation is strictly left to right.
inline Vec matvec(const Mat& m, const Vec& v) {
    if (v.size() != m.cols)
        throw std::invalid_argument("matvec: matrix is " + std::to_string(m.rows) + "x" +
                                    std::to_string(m.cols) + " but vector has length " +
                                    std::to_string(v.size()));
    Vec out(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double acc = 0.0;
        const double* row = m.data.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) acc += row[j] * v[j];
        out[i] = acc;
    }
    return out;
}

/// v^T * m with v.size() == m.rows (the x·W orientation used by routers).
inline Vec vecmat(const Vec& v, const Mat& m) {
    if (v.size() != m.rows)
        throw std::invalid_argument("vecmat: matrix is " + std::to_string(m.rows) + "x" +
                                    std::to_string(m.cols) + " but vector has length " +
                                    std::to_string(v.size()));
    Vec out(m.cols, 0.0);
    for (std::size_t j = 0; j < m.cols; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m.rows; ++i) acc += v[i] * m.at(i, j);
        out[j] = acc;
    }
    return out;
}

/// x_j * gain_j / sqrt(mean(x^2) + eps)
inline Vec rmsnorm(const Vec& x, const Vec& gain, double eps) {
    if (gain.size() != x.size())
        throw std::invalid_argument("rmsnorm: gain length " + std::to_string(gain.size()) +
                                    " != input length " + std::to_string(x.size()));
    if (!(eps >= 0.0)) throw std::invalid_argument("rmsnorm: eps must be >= 0");
    double ms = 0.0;
    for (double v : x) ms += v * v;
    ms /= static_cast<double>(x.size());
    const double inv = 1.0 / std::sqrt(ms + eps);
    Vec out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] * gain[j] * inv;
    return out;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// SplitMix64 stream. The raw 64-bit stream is bit-identical on every
/// platform; sub-streams are derived from the base seed and a label, so a
/// split is independent of how much the parent has been consumed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; consumes two uniforms per call.
    double normal() {
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Multiply-shift; bias is < 2^-64 and irrelevant at our scales.
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Independent sub-stream for (module, purpose) labels.
    Rng split(std::string_view label) const {
        std::uint64_t s = seed_ ^ fnv1a64(label);
        // one extra mix so that split("") != parent
        s += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = s;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

/// Isotropic unit vector in R^r (Gaussian components, then normalize).
inline Vec sample_unit_sphere(Rng& rng, std::size_t r) {
    if (r == 0) throw std::invalid_argument("sample_unit_sphere: dimension must be >= 1");
    Vec v(r);
    double n = 0.0;
    do {
        for (std::size_t i = 0; i < r; ++i) v[i] = rng.normal();
        n = norm2(v);
    } while (n < 1e-12);
    for (std::size_t i = 0; i < r; ++i) v[i] /= n;
    return v;
}

struct Pca2Result {
    std::vector<Vec> projected;  // one [pc1, pc2] pair per input point
    Vec axis1, axis2;            // orthonormal eigenvectors, sign-normalized
    double var1 = 0.0, var2 = 0.0;
    bool degenerate = false;     // rank-0 covariance; projection is all zeros
};

namespace detail {

inline void sign_normalize(Vec& v) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
    if (v[arg] < 0.0)
        for (double& x : v) x = -x;
}

// Dominant eigenvector of symmetric PSD c, deflated against prev when given.
// Residual magnitudes are judged against scale (the covariance trace) so
// that cancellation noise in a rank-deficient operator is not mistaken for
// an eigenvector direction.
inline bool power_iterate(const Mat& c, const Vec* prev, double scale, Vec& v, double& lambda) {
    const std::size_t d = c.rows;
    const double floor = 1e-14 * scale;
    // start from the largest (deflated) column; below the floor the operator
    // has no mass left in this subspace
    double best = -1.0;
    for (std::size_t j = 0; j < d; ++j) {
        Vec ej(d, 0.0);
        ej[j] = 1.0;
        Vec col = matvec(c, ej);
        if (prev) {
            const double p = dot(col, *prev);
            for (std::size_t i = 0; i < d; ++i) col[i] -= p * (*prev)[i];
        }
        const double n = norm2(col);
        if (n > best) {
            best = n;
            v = col;
        }
    }
    if (best <= floor) return false;
    for (double& x : v) x /= best;

    for (int it = 0; it < 1000; ++it) {
        Vec w = matvec(c, v);
        if (prev) {
            const double p = dot(w, *prev);
            for (std::size_t i = 0; i < d; ++i) w[i] -= p * (*prev)[i];
        }
        const double n = norm2(w);
        if (n <= floor) return false;
        for (double& x : w) x /= n;
        // sign-insensitive convergence check
        double diff_p = 0.0, diff_m = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            diff_p = std::max(diff_p, std::fabs(w[i] - v[i]));
            diff_m = std::max(diff_m, std::fabs(w[i] + v[i]));
        }
        v = w;
        if (std::min(diff_p, diff_m) < 1e-10) break;
    }
    if (prev) {  // pin orthogonality before reading off the eigenvalue
        const double p = dot(v, *prev);
        for (std::size_t i = 0; i < d; ++i) v[i] -= p * (*prev)[i];
        const double n = norm2(v);
        if (n <= 1e-8) return false;
        for (double& x : v) x /= n;
    }
    Vec cv = matvec(c, v);
    lambda = dot(v, cv);
    return true;
}

// Any unit vector orthogonal to u.
inline Vec orthogonal_complement(const Vec& u) {
    const std::size_t d = u.size();
    Vec v(d, 0.0);
    std::size_t jmin = 0;
    for (std::size_t j = 1; j < d; ++j)
        if (std::fabs(u[j]) < std::fabs(u[jmin])) jmin = j;
    v[jmin] = 1.0;
    const double p = dot(v, u);
    for (std::size_t i = 0; i < d; ++i) v[i] -= p * u[i];
    const double n = norm2(v);
    for (double& x : v) x /= n;
    return v;
}

}  // namespace detail

/// Mean-centered projection onto the top-2 covariance eigenvectors
/// (power iteration with deflation). Sign convention: the largest-magnitude
/// coordinate of each eigenvector is positive.
inline Pca2Result pca2(const std::vector<Vec>& points) {
    if (points.size() < 3)
        throw std::invalid_argument("pca2: need at least 3 points, got " +
                                    std::to_string(points.size()));
    const std::size_t d = points[0].size();
    if (d < 2) throw std::invalid_argument("pca2: dimension must be >= 2");
    for (const Vec& p : points)
        if (p.size() != d)
            throw std::invalid_argument("pca2: inconsistent point dimensions");

    const std::size_t n = points.size();
    Vec mean(d, 0.0);
    for (const Vec& p : points)
        for (std::size_t j = 0; j < d; ++j) mean[j] += p[j];
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);

    Mat cov(d, d);
    for (const Vec& p : points) {
        for (std::size_t i = 0; i < d; ++i) {
            const double ci = p[i] - mean[i];
            for (std::size_t j = 0; j < d; ++j) cov.at(i, j) += ci * (p[j] - mean[j]);
        }
    }
    for (double& x : cov.data) x /= static_cast<double>(n);

    Pca2Result res;
    double lam1 = 0.0, lam2 = 0.0;
    Vec v1, v2;
    double tr = 0.0;
    for (std::size_t i = 0; i < d; ++i) tr += cov.at(i, i);
    if (tr < 1e-300 || !detail::power_iterate(cov, nullptr, tr, v1, lam1)) {
        res.degenerate = true;
        res.axis1 = Vec(d, 0.0);
        res.axis2 = Vec(d, 0.0);
        res.projected.assign(n, Vec{0.0, 0.0});
        return res;
    }
    detail::sign_normalize(v1);
    if (!detail::power_iterate(cov, &v1, tr, v2, lam2)) {
        // rank-1 data: any direction orthogonal to v1 carries zero variance
        v2 = detail::orthogonal_complement(v1);
        lam2 = 0.0;
    }
    detail::sign_normalize(v2);

    res.axis1 = v1;
    res.axis2 = v2;
    res.var1 = std::max(lam1, 0.0);
    res.var2 = std::max(lam2, 0.0);
    res.projected.reserve(n);
    for (const Vec& p : points) {
        Vec c(d);
        for (std::size_t j = 0; j < d; ++j) c[j] = p[j] - mean[j];
        res.projected.push_back(Vec{dot(c, v1), dot(c, v2)});
    }
    return res;
}

}  // namespace l2r
