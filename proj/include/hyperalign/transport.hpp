#pragma once

#include <limits>
#include <vector>

#include "core.hpp"

namespace hyperalign {

// Nonnegative coupling between two uniform discrete measures.
struct TransportPlan {
    Matrix matrix;        // n x m, rows sum to 1/n, columns to 1/m (within tol)
    bool converged = false;
    int iterations = 0;
};

// Row-to-column assignment; injective only when produced by hungarian().
struct Assignment {
    std::vector<Index> targets;

    Index size() const { return static_cast<Index>(targets.size()); }
};

struct TransportConfig {
    int outer_iter = 50;       // alternating linearization rounds
    double outer_tol = 1e-5;   // plan change, in units of the uniform entry 1/(n*m)
    double inner_tol = 1e-6;   // marginal violation for the inner solver
    int inner_iter = 2000;
};

namespace detail {

// Row-wise log-sum-exp of phi_shift + (-ch), where the shift is broadcast
// along rows: out_i = log sum_j exp(shift_j - ch(i,j)).
inline void lse_rows_shifted(const Matrix& neg_ch, const Vector& shift, Vector& out,
                             Matrix& work) {
    work = neg_ch;
    work.rowwise() += shift.transpose();
    const Vector mx = work.rowwise().maxCoeff();
    work.colwise() -= mx;
    out = (work.array().exp().rowwise().sum().log()).matrix() + mx;
}

// Column-wise variant: out_j = log sum_i exp(shift_i - ch(i,j)).
inline void lse_cols_shifted(const Matrix& neg_ch, const Vector& shift, Vector& out,
                             Matrix& work) {
    work = neg_ch;
    work.colwise() += shift;
    const Eigen::RowVectorXd mx = work.colwise().maxCoeff();
    work.rowwise() -= mx;
    out = (work.array().exp().colwise().sum().log()).matrix().transpose() + mx.transpose();
}

// Log-domain Sinkhorn with uniform marginals and warm-startable scaled
// potentials: plan(i,j) = exp(phi_i + psi_j - cost(i,j)/reg).
inline TransportPlan sinkhorn_core(const Matrix& cost, double reg, double tol,
                                   int max_iter, Vector& phi, Vector& psi) {
    const Index n = cost.rows(), m = cost.cols();
    if (!cost.allFinite()) throw std::runtime_error("sinkhorn: non-finite cost matrix");
    if (reg <= 0.0) throw std::invalid_argument("sinkhorn: reg must be positive");
    const double la = -std::log(static_cast<double>(n));
    const double lb = -std::log(static_cast<double>(m));
    const Matrix neg_ch = -cost / reg;
    if (phi.size() != n) phi = Vector::Zero(n);
    if (psi.size() != m) psi = Vector::Zero(m);

    TransportPlan plan;
    Matrix work(n, m);
    Vector lse(n);
    auto compute_plan = [&](Matrix& out) {
        out = neg_ch;
        out.colwise() += phi;
        out.rowwise() += psi.transpose();
        out = out.array().exp().matrix();
    };
    int it = 0;
    bool converged = false;
    while (it < max_iter) {
        ++it;
        lse_rows_shifted(neg_ch, psi, lse, work);
        phi = Vector::Constant(n, la) - lse;
        lse_cols_shifted(neg_ch, phi, lse, work);
        psi = Vector::Constant(m, lb) - lse;
        if (it % 5 == 0 || it == max_iter) {
            compute_plan(work);
            const double row_err = (work.rowwise().sum().array() - 1.0 / static_cast<double>(n))
                                       .abs()
                                       .maxCoeff();
            const double col_err = (work.colwise().sum().array() - 1.0 / static_cast<double>(m))
                                       .abs()
                                       .maxCoeff();
            if (std::max(row_err, col_err) <= tol) {
                converged = true;
                break;
            }
        }
    }
    compute_plan(plan.matrix);
    plan.converged = converged;
    plan.iterations = it;
    return plan;
}

}  // namespace detail

// Entropically regularized optimal coupling of uniform marginals for the
// given cost matrix, computed in the log domain.
inline TransportPlan sinkhorn(const Matrix& cost, double reg, double tol = 1e-6,
                              int max_iter = 1000) {
    Vector phi, psi;
    return detail::sinkhorn_core(cost, reg, tol, max_iter, phi, psi);
}

// Exact minimum-cost permutation of a square cost matrix (potential-based
// augmenting-path method, O(n^3)). Ties are resolved deterministically,
// preferring the lowest column index during each path search.
inline Assignment hungarian(const Matrix& cost, double* total_cost = nullptr) {
    if (cost.rows() != cost.cols()) {
        throw std::invalid_argument("hungarian: cost matrix must be square");
    }
    if (!cost.allFinite()) throw std::runtime_error("hungarian: non-finite cost matrix");
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    Assignment out;
    out.targets.assign(static_cast<std::size_t>(n), 0);
    double total = 0.0;
    for (int j = 1; j <= n; ++j) {
        out.targets[static_cast<std::size_t>(p[j] - 1)] = j - 1;
        total += cost(p[j] - 1, j - 1);
    }
    if (total_cost) *total_cost = total;
    return out;
}

// Row-wise argmax; ties broken toward the lowest column index. The result
// may assign several rows to one column.
inline Assignment greedy_assign(const Matrix& score) {
    if (!score.allFinite()) throw std::runtime_error("greedy_assign: non-finite score matrix");
    Assignment out;
    out.targets.resize(static_cast<std::size_t>(score.rows()));
    for (Index i = 0; i < score.rows(); ++i) {
        Index best = 0;
        double best_v = score(i, 0);
        for (Index j = 1; j < score.cols(); ++j) {
            if (score(i, j) > best_v) {
                best_v = score(i, j);
                best = j;
            }
        }
        out.targets[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

// Row-wise best dot-product match of a's rows among b's rows, computed in
// row blocks so the full similarity matrix is never materialized. Ties go
// to the lowest index.
inline Assignment greedy_similarity(const Matrix& a, const Matrix& b, Index block = 512) {
    Assignment out;
    out.targets.resize(static_cast<std::size_t>(a.rows()));
    for (Index start = 0; start < a.rows(); start += block) {
        const Index rows = std::min(block, a.rows() - start);
        const Matrix s = a.middleRows(start, rows) * b.transpose();
        for (Index i = 0; i < rows; ++i) {
            Index best = 0;
            double best_v = s(i, 0);
            for (Index j = 1; j < s.cols(); ++j) {
                if (s(i, j) > best_v) {
                    best_v = s(i, j);
                    best = j;
                }
            }
            out.targets[static_cast<std::size_t>(start + i)] = best;
        }
    }
    return out;
}

namespace detail {

inline Matrix euclidean_distances(const Matrix& x) {
    Matrix d = pairwise_sqdist(x, x);
    d.diagonal().setZero();
    return d.cwiseSqrt();
}

}  // namespace detail

// Entropic Gromov-Wasserstein coupling between two point clouds, uniform
// marginals, Euclidean (unsquared) intra-set distances. Alternates between
// linearizing the quartic objective at the current plan and solving the
// linear subproblem with Sinkhorn, starting from the uniform plan. The
// outer stopping rule measures the plan change in units of the uniform
// entry: max|P_next - P| * n * m < outer_tol.
inline TransportPlan gromov_wasserstein(const Matrix& x, const Matrix& y, double eps,
                                        const TransportConfig& cfg = {},
                                        int* inner_iterations = nullptr) {
    if (x.rows() == 0 || y.rows() == 0) {
        throw std::invalid_argument("gromov_wasserstein: empty input");
    }
    if (eps <= 0.0) throw std::invalid_argument("gromov_wasserstein: eps must be positive");
    const Index n = x.rows(), m = y.rows();
    const Matrix dx = detail::euclidean_distances(x);
    const Matrix dy = detail::euclidean_distances(y);
    const Vector cx = dx.array().square().matrix().rowwise().mean();
    const Vector cy = dy.array().square().matrix().rowwise().mean();

    TransportPlan plan;
    plan.matrix = Matrix::Constant(n, m, 1.0 / (static_cast<double>(n) * static_cast<double>(m)));
    plan.converged = false;
    Vector phi, psi;
    Matrix grad(n, m);
    int inner_total = 0;
    const double scale = static_cast<double>(n) * static_cast<double>(m);
    for (int it = 0; it < cfg.outer_iter; ++it) {
        grad.noalias() = dx * (plan.matrix * dy);
        grad = (-4.0 * grad).eval();
        grad.colwise() += 2.0 * cx;
        grad.rowwise() += 2.0 * cy.transpose();
        TransportPlan next =
            detail::sinkhorn_core(grad, eps, cfg.inner_tol, cfg.inner_iter, phi, psi);
        inner_total += next.iterations;
        const double delta = (next.matrix - plan.matrix).cwiseAbs().maxCoeff() * scale;
        plan.matrix.swap(next.matrix);
        plan.iterations = it + 1;
        if (delta < cfg.outer_tol) {
            plan.converged = true;
            break;
        }
    }
    if (inner_iterations) *inner_iterations = inner_total;
    return plan;
}

}  // namespace hyperalign
