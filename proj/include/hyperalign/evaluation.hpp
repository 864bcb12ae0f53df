#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "core.hpp"
#include "embeddings.hpp"
#include "multilingual.hpp"

namespace hyperalign {

struct RetrievalCriterion {
    enum class Kind { NN, CSLS };
    Kind kind = Kind::CSLS;
    Index k = 10;  // neighborhood size for the CSLS penalty terms

    static RetrievalCriterion nn() { return {Kind::NN, 10}; }
    static RetrievalCriterion csls(Index k = 10) { return {Kind::CSLS, k}; }

    const char* name() const { return kind == Kind::NN ? "NN" : "CSLS"; }
};

struct EvalReport {
    std::string src;
    std::string tgt;
    std::string pivot;  // empty for direct evaluation
    std::string criterion;
    double precision_at_1 = 0.0;
    Index num_queries = 0;
};

namespace detail {

// Per-row mean of the k largest entries (values only, so ties are free).
inline double mean_of_topk(std::vector<double>& buf, Index k) {
    std::nth_element(buf.begin(), buf.begin() + (k - 1), buf.end(), std::greater<double>());
    double s = 0.0;
    for (Index i = 0; i < k; ++i) s += buf[static_cast<std::size_t>(i)];
    return s / static_cast<double>(k);
}

// For each row r of `rows`: mean dot product with its k nearest rows of
// `against`, computed in row blocks.
inline Vector knn_mean_similarity(const Matrix& rows, const Matrix& against, Index k) {
    if (k < 1 || k > against.rows()) {
        throw std::invalid_argument("csls: k exceeds candidate set size");
    }
    const Index n = rows.rows();
    const Index block = 512;
    Vector out(n);
    std::vector<double> buf(static_cast<std::size_t>(against.rows()));
    Matrix sims;
    for (Index r0 = 0; r0 < n; r0 += block) {
        const Index rows_here = std::min(block, n - r0);
        sims.noalias() = rows.middleRows(r0, rows_here) * against.transpose();
        for (Index r = 0; r < rows_here; ++r) {
            for (Index c = 0; c < against.rows(); ++c) {
                buf[static_cast<std::size_t>(c)] = sims(r, c);
            }
            out(r0 + r) = mean_of_topk(buf, k);
        }
    }
    return out;
}

// Row-wise argmax of (queries * targets^T - penalty broadcast over columns),
// ties toward the lower column index, in row blocks.
inline Assignment argmax_with_penalty(const Matrix& queries, const Matrix& targets,
                                      const Vector* col_penalty, double query_scale) {
    const Index n = queries.rows();
    const Index block = 512;
    Assignment a;
    a.targets.resize(static_cast<std::size_t>(n));
    Matrix scores;
    for (Index r0 = 0; r0 < n; r0 += block) {
        const Index rows_here = std::min(block, n - r0);
        scores.noalias() = (queries.middleRows(r0, rows_here) * targets.transpose()) * query_scale;
        if (col_penalty) scores.rowwise() -= col_penalty->transpose();
        for (Index r = 0; r < rows_here; ++r) {
            Index best = 0;
            scores.row(r).maxCoeff(&best);
            a.targets[static_cast<std::size_t>(r0 + r)] = best;
        }
    }
    return a;
}

}  // namespace detail

// Full CSLS score matrix: score(x,y) = 2 x.y - r_T(x) - r_S(y), where r_T(x)
// is the mean similarity of query x to its k nearest targets and r_S(y) the
// mean similarity of target y to its k nearest queries. Intended for modest
// sizes; retrieval paths below stay blocked instead.
inline Matrix csls_scores(const Matrix& mapped_queries, const Matrix& targets, Index k) {
    if (mapped_queries.cols() != targets.cols()) {
        throw std::invalid_argument("csls_scores: dimension mismatch");
    }
    if (k < 1 || k > targets.rows() || k > mapped_queries.rows()) {
        throw std::invalid_argument("csls_scores: k exceeds set sizes");
    }
    const Vector r_t = detail::knn_mean_similarity(mapped_queries, targets, k);
    const Vector r_s = detail::knn_mean_similarity(targets, mapped_queries, k);
    Matrix score = 2.0 * (mapped_queries * targets.transpose());
    score.colwise() -= r_t;
    score.rowwise() -= r_s.transpose();
    return score;
}

// Retrieve, for every source word, the best target word in the common space.
inline Assignment translate(const EmbeddingSet& src, const EmbeddingSet& tgt,
                            const Matrix& map_src, const Matrix& map_tgt,
                            const RetrievalCriterion& criterion) {
    if (map_src.size() == 0 || map_tgt.size() == 0) {
        throw std::invalid_argument("translate: untrained maps");
    }
    if (src.dim() != map_src.rows() || tgt.dim() != map_tgt.rows() ||
        map_src.cols() != map_tgt.cols()) {
        throw std::invalid_argument("translate: map shape mismatch");
    }
    const Matrix mq = src.matrix * map_src;
    const Matrix mt = tgt.matrix * map_tgt;
    if (criterion.kind == RetrievalCriterion::Kind::NN) {
        return detail::argmax_with_penalty(mq, mt, nullptr, 1.0);
    }
    // CSLS argmax per query: the r_T(x) term is constant per row, so only
    // the target-side penalty r_S(y) matters for retrieval.
    const Vector r_s = detail::knn_mean_similarity(mt, mq, criterion.k);
    return detail::argmax_with_penalty(mq, mt, &r_s, 2.0);
}

// Precision@1 grouped by unique source token: a query is correct when the
// retrieved token is any of its lexicon targets.
inline EvalReport evaluate_direct(const Lexicon& lexicon, const EmbeddingSet& src,
                                  const EmbeddingSet& tgt, const Matrix& map_src,
                                  const Matrix& map_tgt, const RetrievalCriterion& criterion) {
    if (lexicon.pairs.empty()) throw std::invalid_argument("evaluate_direct: empty lexicon");
    const auto src_index = src.word_index();
    const auto tgt_index = tgt.word_index();
    std::map<Index, std::set<Index>> queries;  // src row -> acceptable tgt rows
    for (const auto& [s, t] : lexicon.pairs) {
        const auto si = src_index.find(s);
        const auto ti = tgt_index.find(t);
        if (si == src_index.end()) {
            throw std::invalid_argument("evaluate_direct: source token not in vocabulary: " + s);
        }
        if (ti == tgt_index.end()) {
            throw std::invalid_argument("evaluate_direct: target token not in vocabulary: " + t);
        }
        queries[si->second].insert(ti->second);
    }
    const Assignment assignment = translate(src, tgt, map_src, map_tgt, criterion);
    Index correct = 0;
    for (const auto& [row, accepted] : queries) {
        if (accepted.count(assignment.targets[static_cast<std::size_t>(row)])) ++correct;
    }
    EvalReport report;
    report.src = lexicon.source_lang;
    report.tgt = lexicon.target_lang;
    report.criterion = criterion.name();
    report.num_queries = static_cast<Index>(queries.size());
    report.precision_at_1 = static_cast<double>(correct) / static_cast<double>(queries.size());
    return report;
}

// Indirect (pivot-mediated) translation by vector-space composition: both
// sides are mapped into the pivot's space and one retrieval is performed.
// For two bilingual models trained against the pivot this realizes
// src -> pivot -> tgt as Q_src then Q_tgt^T, since Q_tgt is orthogonal.
inline EvalReport evaluate_indirect(const Lexicon& lexicon, const EmbeddingSet& src,
                                    const EmbeddingSet& tgt, const Matrix& map_src_to_pivot,
                                    const Matrix& map_tgt_to_pivot, const std::string& pivot,
                                    const RetrievalCriterion& criterion) {
    if (map_src_to_pivot.size() == 0 || map_tgt_to_pivot.size() == 0) {
        throw std::invalid_argument("evaluate_indirect: missing maps");
    }
    EvalReport report =
        evaluate_direct(lexicon, src, tgt, map_src_to_pivot, map_tgt_to_pivot, criterion);
    report.pivot = pivot;
    return report;
}

// Convenience form over a joint alignment: maps are looked up by the
// lexicon's language tags; the pivot is the alignment's index 0.
inline EvalReport evaluate_indirect(const Lexicon& lexicon, const EmbeddingSet& src,
                                    const EmbeddingSet& tgt, const MultiAlignment& alignment,
                                    const RetrievalCriterion& criterion) {
    const auto find_lang = [&](const std::string& tag) -> const Matrix& {
        for (std::size_t i = 0; i < alignment.languages.size(); ++i) {
            if (alignment.languages[i] == tag) return alignment.maps[i];
        }
        throw std::invalid_argument("evaluate_indirect: language not in alignment: " + tag);
    };
    return evaluate_indirect(lexicon, src, tgt, find_lang(lexicon.source_lang),
                             find_lang(lexicon.target_lang), alignment.languages[0], criterion);
}

struct TreeEdge {
    Index a = 0;  // indices into the label list passed to language_tree
    Index b = 0;
    double weight = 0.0;
};

// Minimum spanning tree over the loss matrix (Kruskal), deterministic
// tie-break by lexicographically smallest index pair; the excluded label's
// node is dropped before building the tree.
inline std::vector<TreeEdge> language_tree(const Matrix& losses,
                                           const std::vector<std::string>& labels,
                                           const std::string& exclude = "") {
    const Index l = losses.rows();
    if (losses.cols() != l || static_cast<Index>(labels.size()) != l) {
        throw std::invalid_argument("language_tree: shape mismatch");
    }
    std::vector<Index> nodes;
    for (Index i = 0; i < l; ++i) {
        if (labels[static_cast<std::size_t>(i)] != exclude) nodes.push_back(i);
    }
    if (nodes.size() < 2) throw std::invalid_argument("language_tree: fewer than 2 nodes");

    struct Edge {
        double w;
        Index a, b;
    };
    std::vector<Edge> edges;
    for (std::size_t p = 0; p < nodes.size(); ++p) {
        for (std::size_t q = p + 1; q < nodes.size(); ++q) {
            const Index i = nodes[p], j = nodes[q];
            const double scale = std::max({1.0, std::abs(losses(i, j)), std::abs(losses(j, i))});
            if (std::abs(losses(i, j) - losses(j, i)) > 1e-9 * scale) {
                throw std::invalid_argument("language_tree: matrix not symmetric");
            }
            edges.push_back({losses(i, j), i, j});
        }
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
        if (x.w != y.w) return x.w < y.w;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });

    std::unordered_map<Index, Index> parent;
    for (const Index n : nodes) parent[n] = n;
    const auto find = [&](Index x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    std::vector<TreeEdge> tree;
    for (const Edge& e : edges) {
        const Index ra = find(e.a), rb = find(e.b);
        if (ra == rb) continue;
        parent[ra] = rb;
        tree.push_back({e.a, e.b, e.w});
        if (tree.size() + 1 == nodes.size()) break;
    }
    return tree;
}

// One report line: "<src>-<tgt> [via <pivot>] <criterion> <precision> <n>".
inline std::string format_report(const EvalReport& r) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", r.precision_at_1);
    std::string line = r.src + "-" + r.tgt;
    if (!r.pivot.empty()) line += " via " + r.pivot;
    line += " " + r.criterion + " " + buf + " " + std::to_string(r.num_queries);
    return line;
}

}  // namespace hyperalign
