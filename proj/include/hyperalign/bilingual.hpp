#pragma once

#include <string>
#include <vector>

#include "core.hpp"
#include "embeddings.hpp"
#include "objectives.hpp"
#include "transport.hpp"

namespace hyperalign {

struct AlignerConfig {
    Index gw_size = 2000;          // head size for the structural initialization
    double gw_eps = 0.5;           // entropic regularization of the initializer
    Index batch_first = 500;       // batch size for the first l2 epoch
    Index batch_rest = 1000;       // batch size afterwards
    double lr_l2 = 0.1;
    double lr_rcsls_bilingual = 50.0;
    double lr_rcsls_multi = 25.0;
    Index l2_epochs = 5;
    Index rcsls_epochs = 5;
    Index sinkhorn_iters_phase = 2;     // leading assignment rounds solved softly
    double batch_sinkhorn_reg = 0.05;   // regularization for those soft rounds
    Index knn_subsample = 4000;         // neighbor-search pool size
    Index vocab_cap = 20000;
    Index k = 10;                       // neighborhood size of the relaxed loss
    std::uint64_t seed = 0;
    TransportConfig transport;          // initializer solver controls

    void validate() const {
        if (gw_size <= 0 || batch_first <= 0 || batch_rest <= 0 || l2_epochs < 0 ||
            rcsls_epochs < 0 || knn_subsample <= 0 || vocab_cap <= 0 || k <= 0) {
            throw std::invalid_argument("AlignerConfig: sizes must be positive");
        }
        if (gw_size > vocab_cap) {
            throw std::invalid_argument("AlignerConfig: gw_size must not exceed vocab_cap");
        }
    }
};

struct LossTraceEntry {
    Index epoch = 0;        // 1-based within its phase
    std::string phase;      // "l2" or "rcsls"
    double loss = 0.0;
};

inline std::string format_loss_trace(const std::vector<LossTraceEntry>& trace) {
    std::string out;
    char buf[128];
    for (const auto& e : trace) {
        std::snprintf(buf, sizeof(buf), "epoch %lld phase %s loss %.17g\n",
                      static_cast<long long>(e.epoch), e.phase.c_str(), e.loss);
        out += buf;
    }
    return out;
}

struct BilingualModel {
    Matrix q;                        // maps source rows into the target space
    Assignment final_assignment;     // greedy over the full capped vocabularies
    std::vector<LossTraceEntry> loss_trace;
};

// Structural initialization: couple the first gw_size vectors of each set,
// then fit an orthogonal map to the coupling used as a soft correspondence
// (plan rescaled so each row sums to 1).
inline Matrix init_gw(const Matrix& x, const Matrix& y, const AlignerConfig& cfg) {
    const Index g = std::min({cfg.gw_size, x.rows(), y.rows()});
    const Matrix xh = x.topRows(g);
    const Matrix yh = y.topRows(g);
    const TransportPlan plan = gromov_wasserstein(xh, yh, cfg.gw_eps, cfg.transport);
    const Matrix soft = (plan.matrix * static_cast<double>(g)) * yh;
    return procrustes(xh, soft);
}

namespace detail {

// Soft targets from a batch-level entropic coupling (rows rescaled to 1).
inline Matrix soft_targets(const Matrix& mapped, const Matrix& batch_tgt, double reg) {
    const Matrix cost = pairwise_sqdist(mapped, batch_tgt);
    const TransportPlan p = sinkhorn(cost, reg, 1e-3, 300);
    return (p.matrix * static_cast<double>(mapped.rows())) * batch_tgt;
}

// Row indices of an epoch-level shuffled batch.
inline std::vector<Index> epoch_batches(Rng& rng, Index n) { return rng.permutation(n); }

}  // namespace detail

// Alternating batch phase: assign within a batch (softly for the first
// sinkhorn_iters_phase rounds, greedily after), then take one step on the
// linearized squared-distance objective followed by retraction.
inline Matrix align_l2(const Matrix& x, const Matrix& y, const Matrix& q0,
                       const AlignerConfig& cfg, Rng& rng,
                       std::vector<LossTraceEntry>* trace = nullptr) {
    const Index n = std::min(x.rows(), y.rows());
    Matrix q = q0;
    Index step = 0;
    for (Index epoch = 0; epoch < cfg.l2_epochs; ++epoch) {
        const Index b = std::min(epoch == 0 ? cfg.batch_first : cfg.batch_rest, n);
        const auto perm_x = detail::epoch_batches(rng, x.rows());
        const auto perm_y = detail::epoch_batches(rng, y.rows());
        const Index num_batches = n / b;
        double epoch_loss = 0.0;
        for (Index t = 0; t < num_batches; ++t) {
            const Matrix xb = gather_rows(x, {perm_x.begin() + t * b, perm_x.begin() + (t + 1) * b});
            const Matrix yb = gather_rows(y, {perm_y.begin() + t * b, perm_y.begin() + (t + 1) * b});
            const Matrix mapped = xb * q;
            Matrix tgt;
            if (step < cfg.sinkhorn_iters_phase) {
                tgt = detail::soft_targets(mapped, yb, cfg.batch_sinkhorn_reg);
            } else {
                const Assignment a = greedy_assign(mapped * yb.transpose());
                tgt = gather_rows(yb, a.targets);
            }
            epoch_loss += (mapped - tgt).squaredNorm() / static_cast<double>(b);
            const Matrix grad = -2.0 * xb.transpose() * tgt;
            q = retract_orthogonal(q - cfg.lr_l2 * grad);
            ++step;
        }
        if (trace) {
            trace->push_back({epoch + 1, "l2",
                              num_batches > 0 ? epoch_loss / static_cast<double>(num_batches) : 0.0});
        }
    }
    return q;
}

// Refinement phase: minibatch subgradient descent on the relaxed-CSLS loss
// with greedy batch assignment and subsampled neighbor pools.
inline Matrix align_rcsls(const Matrix& x, const Matrix& y, const Matrix& q0,
                          const AlignerConfig& cfg, Rng& rng, double lr,
                          std::vector<LossTraceEntry>* trace = nullptr) {
    const Index n = std::min(x.rows(), y.rows());
    const Index d = x.cols();
    const Matrix id = Matrix::Identity(d, d);
    Matrix q = q0;
    for (Index epoch = 0; epoch < cfg.rcsls_epochs; ++epoch) {
        const Index b = std::min(cfg.batch_rest, n);
        const auto perm_x = detail::epoch_batches(rng, x.rows());
        const auto perm_y = detail::epoch_batches(rng, y.rows());
        const Index num_batches = n / b;
        double epoch_loss = 0.0;
        for (Index t = 0; t < num_batches; ++t) {
            const Matrix xb = gather_rows(x, {perm_x.begin() + t * b, perm_x.begin() + (t + 1) * b});
            const Matrix yb = gather_rows(y, {perm_y.begin() + t * b, perm_y.begin() + (t + 1) * b});
            const Assignment a = greedy_assign((xb * q) * yb.transpose());
            const Matrix paired = gather_rows(yb, a.targets);
            const Index pool_n = std::min(cfg.knn_subsample, n);
            const Matrix pool_x = gather_rows(x, rng.sample_without_replacement(x.rows(), pool_n));
            const Matrix pool_y = gather_rows(y, rng.sample_without_replacement(y.rows(), pool_n));
            const RcslsPairResult r = rcsls_pair(xb, paired, pool_x, pool_y, q, id, cfg.k);
            epoch_loss += r.loss;
            q = retract_orthogonal(q - lr * r.grad_src);
        }
        if (trace) {
            trace->push_back({epoch + 1, "rcsls",
                              num_batches > 0 ? epoch_loss / static_cast<double>(num_batches) : 0.0});
        }
    }
    return q;
}

// Full unsupervised two-language pipeline. Deterministic given the inputs
// and the configuration seed.
inline BilingualModel align_bilingual(const EmbeddingSet& x, const EmbeddingSet& y,
                                      const AlignerConfig& cfg) {
    cfg.validate();
    if (x.dim() != y.dim()) throw std::invalid_argument("align_bilingual: dimension mismatch");
    Rng rng(cfg.seed);
    BilingualModel model;
    Matrix q = init_gw(x.matrix, y.matrix, cfg);
    q = align_l2(x.matrix, y.matrix, q, cfg, rng, &model.loss_trace);
    q = align_rcsls(x.matrix, y.matrix, q, cfg, rng, cfg.lr_rcsls_bilingual, &model.loss_trace);
    model.q = q;
    model.final_assignment = greedy_similarity(x.matrix * q, y.matrix);
    return model;
}

}  // namespace hyperalign
