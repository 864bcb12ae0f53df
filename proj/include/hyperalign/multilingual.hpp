#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bilingual.hpp"
#include "core.hpp"
#include "embeddings.hpp"
#include "objectives.hpp"
#include "transport.hpp"

namespace hyperalign {

// Joint alignment of N+1 languages into the space of the pivot (index 0),
// whose map stays the identity.
struct MultiAlignment {
    std::vector<std::string> languages;
    std::vector<Matrix> maps;
    Matrix weights;

    Index num_langs() const { return static_cast<Index>(maps.size()); }
};

// Pair weights: N on every pair touching the pivot, 1 elsewhere, 0 diagonal.
inline Matrix default_weights(Index num_langs_incl_pivot) {
    if (num_langs_incl_pivot < 2) {
        throw std::invalid_argument("default_weights: need at least 2 languages");
    }
    const Index l = num_langs_incl_pivot;
    const double n = static_cast<double>(l - 1);
    Matrix w = Matrix::Ones(l, l);
    w.row(0).setConstant(n);
    w.col(0).setConstant(n);
    w.diagonal().setZero();
    return w;
}

inline Matrix uniform_weights(Index num_langs_incl_pivot) {
    if (num_langs_incl_pivot < 2) {
        throw std::invalid_argument("uniform_weights: need at least 2 languages");
    }
    Matrix w = Matrix::Ones(num_langs_incl_pivot, num_langs_incl_pivot);
    w.diagonal().setZero();
    return w;
}

namespace detail {

struct PairSampler {
    std::vector<std::pair<Index, Index>> pairs;  // i < j
    std::vector<double> cdf;                     // cumulative weights

    explicit PairSampler(const Matrix& weights) {
        const Index l = weights.rows();
        double acc = 0.0;
        for (Index i = 0; i < l; ++i) {
            for (Index j = i + 1; j < l; ++j) {
                if (weights(i, j) < 0.0) {
                    throw std::invalid_argument("sample_pairs: negative weight");
                }
                if (weights(i, j) == 0.0) continue;
                pairs.emplace_back(i, j);
                acc += weights(i, j);
                cdf.push_back(acc);
            }
        }
        if (pairs.empty()) throw std::invalid_argument("sample_pairs: all weights zero");
    }

    std::pair<Index, Index> draw(Rng& rng) const { return pairs[rng.categorical(cdf)]; }

    // Probability that a drawn pair contains language k.
    double contain_prob(Index k) const {
        const double total = cdf.back();
        double mass = 0.0;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            if (pairs[p].first == k || pairs[p].second == k) {
                mass += cdf[p] - (p == 0 ? 0.0 : cdf[p - 1]);
            }
        }
        return mass / total;
    }
};

}  // namespace detail

// Weighted sampling of unordered language pairs, probability proportional
// to the weight matrix entries.
inline std::vector<std::pair<Index, Index>> sample_pairs(const Matrix& weights, Index count,
                                                         Rng& rng) {
    detail::PairSampler sampler(weights);
    std::vector<std::pair<Index, Index>> out;
    out.reserve(static_cast<std::size_t>(count));
    for (Index c = 0; c < count; ++c) out.push_back(sampler.draw(rng));
    return out;
}

namespace detail {

// Iterations per epoch so that every language's expected number of drawn
// rows reaches its vocabulary size (N pair draws per iteration, batch rows
// per side of each drawn pair).
inline Index epoch_iterations(const PairSampler& sampler, Index num_langs, Index n, Index batch) {
    const double draws_per_iter = static_cast<double>(num_langs - 1);
    double need = 1.0;
    for (Index k = 0; k < num_langs; ++k) {
        const double pk = sampler.contain_prob(k);
        if (pk <= 0.0) continue;
        need = std::max(need, static_cast<double>(n) /
                                  (draws_per_iter * pk * static_cast<double>(batch)));
    }
    return static_cast<Index>(std::ceil(need));
}

inline void check_alignment_health(const MultiAlignment& a) {
    if ((a.maps[0] - Matrix::Identity(a.maps[0].rows(), a.maps[0].cols())).cwiseAbs().maxCoeff() !=
        0.0) {
        throw std::runtime_error("align_multi: pivot map drifted from identity");
    }
    for (const auto& q : a.maps) {
        if (orthogonality_error(q) > 1e-6) {
            throw std::runtime_error("align_multi: map left the orthogonal group");
        }
    }
}

}  // namespace detail

// Joint two-phase optimization over all weighted language pairs. Every
// iteration samples N pairs; each sampled pair contributes one gradient
// step to both of its endpoint maps (pivot excluded) from the same batch
// correspondence, followed by retraction.
inline MultiAlignment align_multi(const std::vector<EmbeddingSet>& sets, const Matrix& weights,
                                  const AlignerConfig& cfg,
                                  std::vector<LossTraceEntry>* trace = nullptr) {
    cfg.validate();
    const Index l = static_cast<Index>(sets.size());
    if (l < 2) throw std::invalid_argument("align_multi: need at least 2 languages");
    if (weights.rows() != l || weights.cols() != l) {
        throw std::invalid_argument("align_multi: weight matrix shape mismatch");
    }
    const Index d = sets[0].dim();
    for (const auto& s : sets) {
        if (s.dim() != d) throw std::invalid_argument("align_multi: dimension mismatch");
    }

    MultiAlignment alignment;
    alignment.weights = weights;
    for (const auto& s : sets) alignment.languages.push_back(s.lang);
    alignment.maps.assign(static_cast<std::size_t>(l), Matrix::Identity(d, d));
    for (Index i = 1; i < l; ++i) {
        alignment.maps[static_cast<std::size_t>(i)] = init_gw(sets[static_cast<std::size_t>(i)].matrix,
                                                              sets[0].matrix, cfg);
    }
    detail::check_alignment_health(alignment);

    Rng rng(cfg.seed);
    const detail::PairSampler sampler(weights);
    const Index n_min = [&] {
        Index m = sets[0].size();
        for (const auto& s : sets) m = std::min(m, s.size());
        return m;
    }();

    const Index draws_per_iter = l - 1;
    for (int phase = 0; phase < 2; ++phase) {
        const bool is_l2 = phase == 0;
        const Index epochs = is_l2 ? cfg.l2_epochs : cfg.rcsls_epochs;
        const double lr = is_l2 ? cfg.lr_l2 : cfg.lr_rcsls_multi;
        Index step = 0;
        for (Index epoch = 0; epoch < epochs; ++epoch) {
            const Index b = std::min(is_l2 && epoch == 0 ? cfg.batch_first : cfg.batch_rest, n_min);
            const Index iters = detail::epoch_iterations(sampler, l, n_min, b);
            double epoch_loss = 0.0;
            Index epoch_steps = 0;
            for (Index it = 0; it < iters; ++it) {
                for (Index dr = 0; dr < draws_per_iter; ++dr) {
                    const auto [i, j] = sampler.draw(rng);
                    const auto& si = sets[static_cast<std::size_t>(i)];
                    const auto& sj = sets[static_cast<std::size_t>(j)];
                    Matrix& qi = alignment.maps[static_cast<std::size_t>(i)];
                    Matrix& qj = alignment.maps[static_cast<std::size_t>(j)];
                    const Matrix xb =
                        gather_rows(si.matrix, rng.sample_without_replacement(si.size(), b));
                    const Matrix yb =
                        gather_rows(sj.matrix, rng.sample_without_replacement(sj.size(), b));
                    const Matrix mapped_i = xb * qi;
                    const Matrix mapped_j = yb * qj;
                    const bool soft = step < cfg.sinkhorn_iters_phase;
                    if (is_l2) {
                        Matrix tgt_pre;  // paired rows of the j side, pre-map
                        if (soft) {
                            const Matrix cost = pairwise_sqdist(mapped_i, mapped_j);
                            const TransportPlan p =
                                sinkhorn(cost, cfg.batch_sinkhorn_reg, 1e-3, 300);
                            tgt_pre = (p.matrix * static_cast<double>(b)) * yb;
                        } else {
                            const Assignment a = greedy_assign(mapped_i * mapped_j.transpose());
                            tgt_pre = gather_rows(yb, a.targets);
                        }
                        epoch_loss += (mapped_i - tgt_pre * qj).squaredNorm() / static_cast<double>(b);
                        ++epoch_steps;
                        const Matrix gi = -2.0 * xb.transpose() * (tgt_pre * qj);
                        const Matrix gj = -2.0 * tgt_pre.transpose() * mapped_i;
                        if (i != 0) qi = retract_orthogonal(qi - lr * gi);
                        if (j != 0) qj = retract_orthogonal(qj - lr * gj);
                    } else {
                        Assignment a;
                        if (soft) {
                            const Matrix cost = pairwise_sqdist(mapped_i, mapped_j);
                            const TransportPlan p =
                                sinkhorn(cost, cfg.batch_sinkhorn_reg, 1e-3, 300);
                            a = greedy_assign(p.matrix);
                        } else {
                            a = greedy_assign(mapped_i * mapped_j.transpose());
                        }
                        const Matrix paired = gather_rows(yb, a.targets);
                        const Index pool_n = std::min(cfg.knn_subsample, n_min);
                        const Matrix pool_i =
                            gather_rows(si.matrix, rng.sample_without_replacement(si.size(), pool_n));
                        const Matrix pool_j =
                            gather_rows(sj.matrix, rng.sample_without_replacement(sj.size(), pool_n));
                        const RcslsPairResult r = rcsls_pair(xb, paired, pool_i, pool_j, qi, qj, cfg.k);
                        epoch_loss += r.loss;
                        ++epoch_steps;
                        if (i != 0) qi = retract_orthogonal(qi - lr * r.grad_src);
                        if (j != 0) qj = retract_orthogonal(qj - lr * r.grad_tgt);
                    }
                    ++step;
                    detail::check_alignment_health(alignment);
                }
            }
            if (trace) {
                trace->push_back({epoch + 1, is_l2 ? "l2" : "rcsls",
                                  epoch_steps > 0 ? epoch_loss / static_cast<double>(epoch_steps)
                                                  : 0.0});
            }
        }
    }
    return alignment;
}

// Symmetric matrix of final per-pair losses between mapped sets under
// greedy assignment (averaged over both directions); diagonal is 0.
inline Matrix pair_loss_matrix(const MultiAlignment& alignment,
                               const std::vector<EmbeddingSet>& sets, bool use_rcsls = true,
                               Index k = 10) {
    const Index l = alignment.num_langs();
    if (static_cast<Index>(sets.size()) != l) {
        throw std::invalid_argument("pair_loss_matrix: set count mismatch");
    }
    for (const auto& q : alignment.maps) {
        if (q.size() == 0) throw std::invalid_argument("pair_loss_matrix: untrained alignment");
    }
    std::vector<Matrix> mapped;
    mapped.reserve(static_cast<std::size_t>(l));
    for (Index i = 0; i < l; ++i) {
        mapped.push_back(sets[static_cast<std::size_t>(i)].matrix *
                         alignment.maps[static_cast<std::size_t>(i)]);
    }
    const Index d = sets[0].dim();
    const Matrix id = Matrix::Identity(d, d);
    Matrix losses = Matrix::Zero(l, l);
    for (Index i = 0; i < l; ++i) {
        for (Index j = i + 1; j < l; ++j) {
            double acc = 0.0;
            for (int dir = 0; dir < 2; ++dir) {
                const Matrix& a = dir == 0 ? mapped[static_cast<std::size_t>(i)]
                                           : mapped[static_cast<std::size_t>(j)];
                const Matrix& bm = dir == 0 ? mapped[static_cast<std::size_t>(j)]
                                            : mapped[static_cast<std::size_t>(i)];
                const Assignment assign = greedy_similarity(a, bm);
                if (use_rcsls) {
                    // Blocked so the neighbor searches never materialize a
                    // full n x n similarity matrix.
                    const Index n = a.rows();
                    const Index block = 512;
                    double total = 0.0;
                    for (Index r0 = 0; r0 < n; r0 += block) {
                        const Index rows = std::min(block, n - r0);
                        const Matrix ab = a.middleRows(r0, rows);
                        Matrix paired(rows, a.cols());
                        for (Index r = 0; r < rows; ++r) {
                            paired.row(r) = bm.row(assign.targets[static_cast<std::size_t>(r0 + r)]);
                        }
                        total += rcsls_pair(ab, paired, a, bm, id, id, k).loss *
                                 static_cast<double>(rows);
                    }
                    acc += total / static_cast<double>(n);
                } else {
                    acc += (a - gather_rows(bm, assign.targets)).squaredNorm() /
                           static_cast<double>(a.rows());
                }
            }
            losses(i, j) = losses(j, i) = acc / 2.0;
        }
    }
    return losses;
}

// Checkpoint: manifest line "<d> <num_langs> <pivot_lang>", then for each
// language its tag on one line followed by d rows of d reals.
inline void save_alignment(const MultiAlignment& alignment, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_alignment: cannot open " + path);
    const Index l = alignment.num_langs();
    const Index d = alignment.maps[0].rows();
    out.precision(17);
    out << d << ' ' << l << ' ' << alignment.languages[0] << '\n';
    for (Index i = 0; i < l; ++i) {
        out << alignment.languages[static_cast<std::size_t>(i)] << '\n';
        const Matrix& q = alignment.maps[static_cast<std::size_t>(i)];
        for (Index r = 0; r < d; ++r) {
            for (Index c = 0; c < d; ++c) {
                if (c) out << ' ';
                out << q(r, c);
            }
            out << '\n';
        }
    }
    if (!out) throw std::runtime_error("save_alignment: write failed for " + path);
}

inline MultiAlignment load_alignment(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_alignment: cannot open " + path);
    Index d = 0, l = 0;
    std::string pivot;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_alignment: empty file " + path);
    {
        std::istringstream hs(line);
        if (!(hs >> d >> l >> pivot) || d <= 0 || l < 2) {
            throw std::runtime_error("load_alignment: malformed manifest in " + path);
        }
    }
    MultiAlignment alignment;
    for (Index i = 0; i < l; ++i) {
        std::string lang;
        if (!std::getline(in, lang) || lang.empty()) {
            throw std::runtime_error("load_alignment: missing language tag in " + path);
        }
        Matrix q(d, d);
        for (Index r = 0; r < d; ++r) {
            for (Index c = 0; c < d; ++c) {
                if (!(in >> q(r, c))) {
                    throw std::runtime_error("load_alignment: truncated matrix block in " + path);
                }
            }
        }
        in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
        alignment.languages.push_back(lang);
        alignment.maps.push_back(q);
    }
    if (alignment.languages[0] != pivot) {
        throw std::runtime_error("load_alignment: pivot mismatch in " + path);
    }
    return alignment;
}

}  // namespace hyperalign
