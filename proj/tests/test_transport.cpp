#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <hyperalign/core.hpp>
#include <hyperalign/transport.hpp>

using namespace hyperalign;

namespace {

Matrix random_matrix(Index n, Index m, Rng& rng, double scale = 1.0) {
    Matrix a(n, m);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < m; ++j) a(i, j) = scale * rng.gaussian();
    return a;
}

// Exhaustive minimum of sum_i cost(i, sigma(i)) over all permutations.
double brute_force_assignment_cost(const Matrix& cost) {
    const Index n = cost.rows();
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (Index i = 0; i < n; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Exhaustive minimizer of the unregularized structural matching objective
// sum_{i,i'} (dx(i,i') - dy(sigma(i),sigma(i')))^2 over permutations.
std::vector<Index> brute_force_structural_match(const Matrix& dx, const Matrix& dy) {
    const Index n = dx.rows();
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::vector<Index> best_perm = perm;
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
                const double diff =
                    dx(i, j) - dy(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
                total += diff * diff;
            }
        }
        if (total < best) {
            best = total;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best_perm;
}

Matrix euclidean(const Matrix& x) {
    Matrix d = pairwise_sqdist(x, x);
    d.diagonal().setZero();
    return d.cwiseSqrt();
}

// Entropic primal objective <C,P> + reg * sum P log P (0 log 0 = 0).
double primal_objective(const Matrix& cost, const Matrix& plan, double reg) {
    double entropy_term = 0.0;
    for (Index i = 0; i < plan.rows(); ++i) {
        for (Index j = 0; j < plan.cols(); ++j) {
            const double p = plan(i, j);
            if (p > 0.0) entropy_term += p * std::log(p);
        }
    }
    return (cost.array() * plan.array()).sum() + reg * entropy_term;
}

}  // namespace

TEST_CASE("sinkhorn returns the exactly uniform plan for constant cost", "[transport]") {
    const Matrix cost = Matrix::Constant(8, 5, 3.25);
    const TransportPlan plan = sinkhorn(cost, 0.1);
    REQUIRE(plan.converged);
    const double uniform = 1.0 / 40.0;
    REQUIRE((plan.matrix.array() - uniform).abs().maxCoeff() < 1e-12);
}

TEST_CASE("sinkhorn matches the 2x2 closed form", "[transport]") {
    Matrix cost(2, 2);
    cost << 0, 1, 1, 0;
    const double reg = 0.05;
    const TransportPlan plan = sinkhorn(cost, reg, 1e-12, 10000);
    // Symmetric fixed point: diagonal p, off-diagonal q with p+q = 1/2 and
    // q/p = exp(-1/reg).
    const double ratio = std::exp(-1.0 / reg);
    const double p = 0.5 / (1.0 + ratio);
    const double q = 0.5 * ratio / (1.0 + ratio);
    REQUIRE(plan.matrix(0, 0) == Catch::Approx(p).margin(1e-9));
    REQUIRE(plan.matrix(1, 1) == Catch::Approx(p).margin(1e-9));
    REQUIRE(plan.matrix(0, 1) == Catch::Approx(q).margin(1e-9));
    REQUIRE(plan.matrix(1, 0) == Catch::Approx(q).margin(1e-9));
    REQUIRE(plan.matrix(0, 0) >= 0.49);
    REQUIRE(plan.matrix(0, 1) <= 0.01);
}

TEST_CASE("sinkhorn satisfies both marginals within tolerance", "[transport]") {
    Rng rng(101);
    const Index n = 40, m = 60;
    Matrix cost = random_matrix(n, m, rng).cwiseAbs();
    const TransportPlan plan = sinkhorn(cost, 0.1, 1e-6, 5000);
    REQUIRE(plan.converged);
    REQUIRE(plan.matrix.minCoeff() >= 0.0);
    REQUIRE((plan.matrix.rowwise().sum().array() - 1.0 / n).abs().maxCoeff() <= 1e-6);
    REQUIRE((plan.matrix.colwise().sum().array() - 1.0 / m).abs().maxCoeff() <= 1e-6);
}

TEST_CASE("sinkhorn stays finite at small regularization", "[transport]") {
    Rng rng(7);
    Matrix cost = random_matrix(30, 30, rng, 2.0).cwiseAbs();
    const TransportPlan plan = sinkhorn(cost, 0.01, 1e-6, 100000);
    REQUIRE(plan.matrix.allFinite());
    REQUIRE(plan.converged);
    REQUIRE((plan.matrix.rowwise().sum().array() - 1.0 / 30).abs().maxCoeff() <= 1e-6);
}

TEST_CASE("sinkhorn error handling and convergence flag", "[transport]") {
    Matrix bad(2, 2);
    bad << 0, 1, std::numeric_limits<double>::quiet_NaN(), 0;
    REQUIRE_THROWS(sinkhorn(bad, 0.1));
    Matrix cost(2, 2);
    cost << 0, 1, 1, 0;
    REQUIRE_THROWS_AS(sinkhorn(cost, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(sinkhorn(cost, -1.0), std::invalid_argument);
    Rng rng(58);
    const Matrix hard = random_matrix(10, 10, rng).cwiseAbs();
    const TransportPlan truncated = sinkhorn(hard, 0.05, 1e-14, 1);
    REQUIRE_FALSE(truncated.converged);
}

TEST_CASE("sinkhorn iterations ascend the dual objective", "[transport]") {
    // The primal regularized objective of intermediate (infeasible) iterates
    // is not monotone; the solver is exact block-coordinate ascent on the
    // dual, so the dual objective must never decrease.
    Rng rng(55);
    const Index n = 25, m = 35;
    const Matrix cost = random_matrix(n, m, rng).cwiseAbs();
    const double reg = 0.05;
    Vector phi, psi;
    double previous = -std::numeric_limits<double>::infinity();
    for (int step = 0; step < 80; ++step) {
        const TransportPlan plan = detail::sinkhorn_core(cost, reg, 1e-15, 1, phi, psi);
        const double dual =
            reg * (phi.sum() / static_cast<double>(n) + psi.sum() / static_cast<double>(m) -
                   plan.matrix.sum());
        REQUIRE(dual >= previous - 1e-9 * std::max(1.0, std::abs(previous)));
        previous = dual;
    }
}

TEST_CASE("converged sinkhorn plan beats the uniform feasible reference", "[transport]") {
    Rng rng(56);
    const Index n = 20, m = 20;
    const Matrix cost = random_matrix(n, m, rng).cwiseAbs();
    const double reg = 0.1;
    const TransportPlan plan = sinkhorn(cost, reg, 1e-9, 20000);
    REQUIRE(plan.converged);
    const Matrix uniform = Matrix::Constant(n, m, 1.0 / (n * m));
    REQUIRE(primal_objective(cost, plan.matrix, reg) <=
            primal_objective(cost, uniform, reg) + 1e-9);
}

TEST_CASE("sinkhorn warm start does not slow convergence", "[transport]") {
    Rng rng(57);
    const Matrix cost = random_matrix(30, 30, rng).cwiseAbs();
    Vector phi, psi;
    const TransportPlan cold = detail::sinkhorn_core(cost, 0.05, 1e-8, 5000, phi, psi);
    REQUIRE(cold.converged);
    const TransportPlan warm = detail::sinkhorn_core(cost, 0.05, 1e-8, 5000, phi, psi);
    REQUIRE(warm.converged);
    REQUIRE(warm.iterations <= cold.iterations);
}

TEST_CASE("hungarian solves the pinned 3x3 instance", "[transport]") {
    Matrix cost(3, 3);
    cost << 4, 1, 3, 2, 0, 5, 3, 2, 2;
    double total = 0.0;
    const Assignment a = hungarian(cost, &total);
    REQUIRE(a.targets == std::vector<Index>{1, 0, 2});
    REQUIRE(total == Catch::Approx(5.0));
}

TEST_CASE("hungarian prefers the diagonal when it is free", "[transport]") {
    Matrix cost = Matrix::Constant(5, 5, 9.0);
    cost.diagonal().setZero();
    const Assignment a = hungarian(cost);
    for (Index i = 0; i < 5; ++i) REQUIRE(a.targets[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("hungarian ties break toward the lowest column", "[transport]") {
    const Matrix zeros = Matrix::Zero(4, 4);
    const Assignment a = hungarian(zeros);
    for (Index i = 0; i < 4; ++i) REQUIRE(a.targets[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("hungarian equals factorial brute force for n <= 7", "[transport]") {
    Rng rng(202);
    int instances = 0;
    for (Index n = 2; n <= 7; ++n) {
        for (int rep = 0; rep < 20; ++rep) {
            const Matrix cost = random_matrix(n, n, rng);
            double total = 0.0;
            const Assignment a = hungarian(cost, &total);
            // permutation check
            std::vector<Index> sorted = a.targets;
            std::sort(sorted.begin(), sorted.end());
            for (Index i = 0; i < n; ++i) REQUIRE(sorted[static_cast<std::size_t>(i)] == i);
            // recompute the total independently
            double recomputed = 0.0;
            for (Index i = 0; i < n; ++i) recomputed += cost(i, a.targets[static_cast<std::size_t>(i)]);
            REQUIRE(total == Catch::Approx(recomputed).margin(1e-12));
            REQUIRE(total == Catch::Approx(brute_force_assignment_cost(cost)).margin(1e-9));
            ++instances;
        }
    }
    REQUIRE(instances >= 100);
}

TEST_CASE("hungarian rejects invalid input", "[transport]") {
    REQUIRE_THROWS_AS(hungarian(Matrix::Zero(2, 3)), std::invalid_argument);
    Matrix bad = Matrix::Zero(2, 2);
    bad(0, 0) = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS(hungarian(bad));
}

TEST_CASE("greedy_assign takes the row argmax with lowest-index ties", "[transport]") {
    Matrix s1(2, 2);
    s1 << 0.9, 0.1, 0.2, 0.8;
    REQUIRE(greedy_assign(s1).targets == std::vector<Index>{0, 1});
    Matrix s2(2, 2);
    s2 << 0.9, 0.1, 0.8, 0.2;
    REQUIRE(greedy_assign(s2).targets == std::vector<Index>{0, 0});  // non-injective
    Matrix s3(1, 3);
    s3 << 0.5, 0.5, 0.2;
    REQUIRE(greedy_assign(s3).targets == std::vector<Index>{0});

    Rng rng(303);
    const Matrix s = random_matrix(50, 50, rng);
    const Assignment a = greedy_assign(s);
    for (Index i = 0; i < 50; ++i) {
        REQUIRE(s(i, a.targets[static_cast<std::size_t>(i)]) == s.row(i).maxCoeff());
    }
}

TEST_CASE("greedy_similarity equals greedy_assign of the full product", "[transport]") {
    Rng rng(404);
    const Matrix a = random_matrix(600, 17, rng);
    const Matrix b = random_matrix(700, 17, rng);
    const Assignment blocked = greedy_similarity(a, b, 128);
    const Assignment full = greedy_assign(a * b.transpose());
    REQUIRE(blocked.targets == full.targets);
}

TEST_CASE("structural coupling is invariant under orthogonal transforms", "[transport]") {
    Rng rng(505);
    const Matrix x = random_matrix(30, 5, rng);
    Matrix y = gather_rows(x, Rng(99).permutation(30));
    // Haar-ish orthogonal map of the target set
    Matrix g = random_matrix(5, 5, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix r = qr.householderQ();
    TransportConfig cfg;
    const TransportPlan base = gromov_wasserstein(x, y, 0.05, cfg);
    const TransportPlan rotated = gromov_wasserstein(x, y * r, 0.05, cfg);
    REQUIRE((base.matrix - rotated.matrix).cwiseAbs().maxCoeff() <= 1e-8);
    const TransportPlan rotated_src = gromov_wasserstein(x * r, y, 0.05, cfg);
    REQUIRE((base.matrix - rotated_src.matrix).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("structural coupling concentrates on a planted permutation", "[transport]") {
    Rng rng(606);
    const Matrix x = random_matrix(10, 3, rng, 2.0);
    const std::vector<Index> perm = Rng(77).permutation(10);
    const Matrix y = gather_rows(x, perm);  // y.row(r) = x.row(perm[r])
    TransportConfig cfg;
    cfg.outer_iter = 200;
    const TransportPlan plan = gromov_wasserstein(x, y, 0.05, cfg);
    // x row i matches y row sigma(i) with perm[sigma(i)] = i
    std::vector<Index> sigma(10);
    for (Index r = 0; r < 10; ++r) sigma[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])] = r;
    double mass_on_truth = 0.0;
    for (Index i = 0; i < 10; ++i) mass_on_truth += plan.matrix(i, sigma[static_cast<std::size_t>(i)]);
    REQUIRE(mass_on_truth >= 0.8 * plan.matrix.sum());
}

TEST_CASE("structural coupling agrees with exhaustive search at n = 6", "[transport]") {
    Rng rng(707);
    const Matrix x = random_matrix(6, 3, rng, 2.0);
    const std::vector<Index> perm = Rng(88).permutation(6);
    const Matrix y = gather_rows(x, perm);
    const std::vector<Index> best = brute_force_structural_match(euclidean(x), euclidean(y));
    // the planted correspondence achieves objective 0, so it must win
    std::vector<Index> sigma(6);
    for (Index r = 0; r < 6; ++r) sigma[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])] = r;
    REQUIRE(best == sigma);
    TransportConfig cfg;
    cfg.outer_iter = 200;
    const TransportPlan plan = gromov_wasserstein(x, y, 0.02, cfg);
    REQUIRE(greedy_assign(plan.matrix).targets == sigma);
}

TEST_CASE("structural coupling with zero outer iterations is uniform", "[transport]") {
    Rng rng(808);
    const Matrix x = random_matrix(12, 4, rng);
    const Matrix y = random_matrix(9, 4, rng);
    TransportConfig cfg;
    cfg.outer_iter = 0;
    const TransportPlan plan = gromov_wasserstein(x, y, 0.1, cfg);
    REQUIRE_FALSE(plan.converged);
    REQUIRE((plan.matrix.array() - 1.0 / (12.0 * 9.0)).abs().maxCoeff() == 0.0);
}

TEST_CASE("structural coupling validates its inputs", "[transport]") {
    Rng rng(909);
    const Matrix x = random_matrix(5, 3, rng);
    REQUIRE_THROWS_AS(gromov_wasserstein(Matrix(0, 3), x, 0.1), std::invalid_argument);
    REQUIRE_THROWS_AS(gromov_wasserstein(x, x, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(gromov_wasserstein(x, x, -0.5), std::invalid_argument);
}

TEST_CASE("structural coupling keeps marginals within the inner tolerance", "[transport]") {
    Rng rng(111);
    const Matrix x = random_matrix(15, 4, rng);
    const Matrix y = random_matrix(20, 4, rng);
    TransportConfig cfg;
    const TransportPlan plan = gromov_wasserstein(x, y, 0.1, cfg);
    REQUIRE(plan.matrix.minCoeff() >= 0.0);
    REQUIRE((plan.matrix.rowwise().sum().array() - 1.0 / 15).abs().maxCoeff() <= 1e-5);
    REQUIRE((plan.matrix.colwise().sum().array() - 1.0 / 20).abs().maxCoeff() <= 1e-5);
}
