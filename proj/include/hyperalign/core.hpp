#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace hyperalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Deterministic random source. All distributions are derived from raw
// mt19937_64 words with fixed algorithms so that a seed pins every draw
// bit-for-bit regardless of standard-library implementation details.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t word() { return eng_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller, one spare cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t rej = (0ULL - n) % n;  // 2^64 mod n
        for (;;) {
            const std::uint64_t r = eng_();
            if (r >= rej) return r % n;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
        }
    }

    // A uniformly shuffled permutation of {0, ..., n-1}.
    std::vector<Index> permutation(Index n) {
        std::vector<Index> idx(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        shuffle(idx);
        return idx;
    }

    // k distinct indices from {0, ..., n-1} (partial Fisher-Yates).
    std::vector<Index> sample_without_replacement(Index n, Index k) {
        if (k > n) throw std::invalid_argument("Rng::sample_without_replacement: k > n");
        std::vector<Index> idx(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        for (Index i = 0; i < k; ++i) {
            const Index j = i + static_cast<Index>(below(static_cast<std::uint64_t>(n - i)));
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        idx.resize(static_cast<std::size_t>(k));
        return idx;
    }

    // Draw from a categorical distribution given cumulative weights
    // (cdf.back() is the total mass). Inverse-CDF with binary search.
    std::size_t categorical(const std::vector<double>& cdf) {
        if (cdf.empty()) throw std::invalid_argument("Rng::categorical: empty cdf");
        const double u = uniform() * cdf.back();
        std::size_t lo = 0, hi = cdf.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (cdf[mid] <= u) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        return lo;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Gather rows of m listed in idx into a new matrix.
inline Matrix gather_rows(const Matrix& m, const std::vector<Index>& idx,
                          Index count = -1) {
    const Index k = count < 0 ? static_cast<Index>(idx.size()) : count;
    Matrix out(k, m.cols());
    for (Index i = 0; i < k; ++i) out.row(i) = m.row(idx[static_cast<std::size_t>(i)]);
    return out;
}

// Pairwise squared Euclidean distances between rows of a and rows of b.
inline Matrix pairwise_sqdist(const Matrix& a, const Matrix& b) {
    const Vector an = a.rowwise().squaredNorm();
    const Vector bn = b.rowwise().squaredNorm();
    Matrix d = (-2.0 * a * b.transpose());
    d.colwise() += an;
    d.rowwise() += bn.transpose();
    return d.cwiseMax(0.0);
}

inline double orthogonality_error(const Matrix& q) {
    return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols()))
        .cwiseAbs()
        .maxCoeff();
}

}  // namespace hyperalign
