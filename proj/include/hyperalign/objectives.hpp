#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "core.hpp"
#include "transport.hpp"

namespace hyperalign {

// Per-query top-k target indices by dot product, descending, ties toward
// the lower index.
struct NeighborSet {
    std::vector<std::vector<Index>> indices;
};

namespace detail {

// Pin the SVD's sign ambiguity: make the largest-magnitude component of
// each left singular vector positive (flipping the matching right vector),
// so degenerate inputs retract deterministically. U V^T is unchanged in the
// full-rank case.
inline Matrix signed_uv_product(Matrix u, Matrix v) {
    for (Index c = 0; c < u.cols(); ++c) {
        Index arg = 0;
        u.col(c).cwiseAbs().maxCoeff(&arg);
        if (u(arg, c) < 0.0) {
            u.col(c) = -u.col(c);
            v.col(c) = -v.col(c);
        }
    }
    return u * v.transpose();
}

}  // namespace detail

// Q = U V^T from the SVD of X^T Y; minimizes ||XQ - Y||_F over orthogonal Q.
inline Matrix procrustes(const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        throw std::invalid_argument("procrustes: shape mismatch");
    }
    const Matrix m = x.transpose() * y;
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return detail::signed_uv_product(svd.matrixU(), svd.matrixV());
}

// Nearest orthogonal matrix in Frobenius norm (U V^T of the SVD of m).
inline Matrix retract_orthogonal(const Matrix& m) {
    if (!m.allFinite()) throw std::runtime_error("retract_orthogonal: non-finite input");
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return detail::signed_uv_product(svd.matrixU(), svd.matrixV());
}

// ||XQ - PY||_F^2 with P given as an explicit correspondence matrix whose
// rows each sum to 1 (a permutation or a row-rescaled soft plan).
inline double l2_loss(const Matrix& x, const Matrix& q, const Matrix& p, const Matrix& y) {
    if (x.cols() != q.rows() || p.cols() != y.rows() || x.rows() != p.rows() ||
        q.cols() != y.cols()) {
        throw std::invalid_argument("l2_loss: shape mismatch");
    }
    return (x * q - p * y).squaredNorm();
}

inline double l2_loss(const Matrix& x, const Matrix& q, const Assignment& p, const Matrix& y) {
    if (x.cols() != q.rows() || q.cols() != y.cols() || x.rows() != p.size()) {
        throw std::invalid_argument("l2_loss: shape mismatch");
    }
    return (x * q - gather_rows(y, p.targets)).squaredNorm();
}

namespace detail {

// Top-k column indices of each row of score, descending, ties toward the
// lower index. Writes one row of `sums` with the sum of the selected rows
// of `source` when provided.
inline void topk_rows(const Matrix& score, Index k, std::vector<std::vector<Index>>& out) {
    const Index nq = score.rows(), m = score.cols();
    if (k < 1 || k > m) throw std::invalid_argument("knn_dot: k out of range");
    out.assign(static_cast<std::size_t>(nq), {});
    std::vector<Index> order(static_cast<std::size_t>(m));
    for (Index i = 0; i < nq; ++i) {
        std::iota(order.begin(), order.end(), Index{0});
        const auto cmp = [&](Index a, Index b) {
            const double sa = score(i, a), sb = score(i, b);
            if (sa != sb) return sa > sb;
            return a < b;
        };
        std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), cmp);
        std::sort(order.begin(), order.begin() + k, cmp);
        out[static_cast<std::size_t>(i)].assign(order.begin(), order.begin() + k);
    }
}

}  // namespace detail

inline NeighborSet knn_dot(const Matrix& queries, const Matrix& targets, Index k) {
    if (queries.cols() != targets.cols()) throw std::invalid_argument("knn_dot: dim mismatch");
    const Matrix score = queries * targets.transpose();
    NeighborSet ns;
    detail::topk_rows(score, k, ns.indices);
    return ns;
}

// Relaxed-CSLS batch kernel between two mapped sets. The batch rows of the
// source side are paired with pre-gathered target rows (the correspondence
// has already been applied). Neighbor searches run against the given pools
// mapped by the current maps. Loss is normalized by the batch size; the
// gradients treat the neighbor sets as locally constant.
struct RcslsPairResult {
    double loss = 0.0;
    Matrix grad_src;  // d x d
    Matrix grad_tgt;  // d x d
};

inline RcslsPairResult rcsls_pair(const Matrix& batch_src, const Matrix& batch_tgt,
                                  const Matrix& pool_src, const Matrix& pool_tgt,
                                  const Matrix& q_src, const Matrix& q_tgt, Index k) {
    const Index b = batch_src.rows();
    const Index d = batch_src.cols();
    if (batch_tgt.rows() != b) throw std::invalid_argument("rcsls_pair: batch size mismatch");
    if (k < 1 || k > pool_src.rows() || k > pool_tgt.rows()) {
        throw std::invalid_argument("rcsls_pair: k out of range");
    }
    const Matrix a = batch_src * q_src;          // mapped source batch
    const Matrix bt = batch_tgt * q_tgt;         // mapped paired targets
    const Matrix pool_tgt_mapped = pool_tgt * q_tgt;
    const Matrix pool_src_mapped = pool_src * q_src;

    // Neighbors of each mapped source row among the mapped target pool.
    const Matrix s_tgt = a * pool_tgt_mapped.transpose();  // b x st
    std::vector<std::vector<Index>> nn_tgt;
    detail::topk_rows(s_tgt, k, nn_tgt);
    // Neighbors of each mapped target row among the mapped source pool.
    const Matrix s_src = bt * pool_src_mapped.transpose();  // b x ss
    std::vector<std::vector<Index>> nn_src;
    detail::topk_rows(s_src, k, nn_src);

    double neighbor_terms = 0.0;
    Matrix tgt_nbr_sum = Matrix::Zero(b, d);      // pre-map target pool rows
    Matrix src_nbr_sum = Matrix::Zero(b, d);      // mapped source pool rows
    Matrix scatter_src = Matrix::Zero(pool_src.rows(), d);  // receives mapped targets
    for (Index i = 0; i < b; ++i) {
        for (const Index z : nn_tgt[static_cast<std::size_t>(i)]) {
            neighbor_terms += s_tgt(i, z);
            tgt_nbr_sum.row(i) += pool_tgt.row(z);
        }
        for (const Index z : nn_src[static_cast<std::size_t>(i)]) {
            neighbor_terms += s_src(i, z);
            src_nbr_sum.row(i) += pool_src_mapped.row(z);
            scatter_src.row(z) += bt.row(i);
        }
    }
    const double bn = static_cast<double>(b);
    const double kn = static_cast<double>(k);
    RcslsPairResult res;
    res.loss = (-2.0 * (a.array() * bt.array()).sum() + neighbor_terms / kn) / bn;
    res.grad_src = (-2.0 * batch_src.transpose() * bt +
                    (batch_src.transpose() * (tgt_nbr_sum * q_tgt) +
                     pool_src.transpose() * scatter_src) /
                        kn) /
                   bn;
    res.grad_tgt = (-2.0 * batch_tgt.transpose() * a +
                    (tgt_nbr_sum.transpose() * a + batch_tgt.transpose() * src_nbr_sum) / kn) /
                   bn;
    return res;
}

// Relaxed-CSLS loss of mapping X through Q onto the targets selected by the
// assignment. Neighbor pools are the aligned rows themselves: the mapped X
// rows on the source side and the assignment-gathered Y rows on the target
// side. Normalized by the row count.
inline double rcsls_loss(const Matrix& x, const Matrix& q, const Assignment& p,
                         const Matrix& y, Index k) {
    if (p.size() != x.rows()) throw std::invalid_argument("rcsls_loss: assignment size mismatch");
    const Matrix paired = gather_rows(y, p.targets);
    const Matrix id = Matrix::Identity(q.rows(), q.cols());
    return rcsls_pair(x, paired, x, paired, q, id, k).loss;
}

// Gradient of rcsls_loss in Q with neighbor sets held fixed.
inline Matrix rcsls_subgradient(const Matrix& x, const Matrix& q, const Assignment& p,
                                const Matrix& y, Index k) {
    if (p.size() != x.rows()) {
        throw std::invalid_argument("rcsls_subgradient: assignment size mismatch");
    }
    const Matrix paired = gather_rows(y, p.targets);
    const Matrix id = Matrix::Identity(q.rows(), q.cols());
    return rcsls_pair(x, paired, x, paired, q, id, k).grad_src;
}

}  // namespace hyperalign
