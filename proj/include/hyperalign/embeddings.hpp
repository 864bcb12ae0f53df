#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "core.hpp"

namespace hyperalign {

// One language's vocabulary and vector matrix (one row per word).
struct EmbeddingSet {
    std::string lang;
    std::vector<std::string> words;
    Matrix matrix;  // n x d

    Index size() const { return matrix.rows(); }
    Index dim() const { return matrix.cols(); }

    std::unordered_map<std::string, Index> word_index() const {
        std::unordered_map<std::string, Index> m;
        m.reserve(words.size());
        for (Index i = 0; i < static_cast<Index>(words.size()); ++i) {
            m.emplace(words[static_cast<std::size_t>(i)], i);
        }
        return m;
    }
};

// Many-to-many translation pairs between two languages.
struct Lexicon {
    std::string source_lang;
    std::string target_lang;
    std::set<std::pair<std::string, std::string>> pairs;
};

struct LoadStats {
    Index duplicates_skipped = 0;
};

// Text vector format: header "<n> <d>", then one "<token> <f1> ... <fd>"
// line per word. Duplicate tokens after the first are skipped. Rows are
// returned unnormalized.
inline EmbeddingSet load_embeddings(const std::string& path, Index max_vocab,
                                    LoadStats* stats = nullptr) {
    if (max_vocab <= 0) throw std::invalid_argument("load_embeddings: max_vocab must be positive");
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_embeddings: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_embeddings: empty file " + path);
    Index n = 0, d = 0;
    {
        std::istringstream hs(line);
        if (!(hs >> n >> d) || n <= 0 || d <= 0) {
            throw std::runtime_error("load_embeddings: malformed header in " + path + ": '" + line + "'");
        }
        std::string extra;
        if (hs >> extra) {
            throw std::runtime_error("load_embeddings: malformed header in " + path + ": '" + line + "'");
        }
    }

    const Index capacity = std::min(n, max_vocab);
    EmbeddingSet set;
    set.words.reserve(static_cast<std::size_t>(capacity));
    set.matrix.resize(capacity, d);
    std::unordered_set<std::string> seen;
    seen.reserve(static_cast<std::size_t>(capacity));

    Index kept = 0, duplicates = 0, line_no = 1;
    while (kept < capacity && std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string token;
        if (!(ls >> token)) {
            throw std::runtime_error("load_embeddings: malformed line " + std::to_string(line_no) +
                                     " in " + path);
        }
        Vector row(d);
        for (Index j = 0; j < d; ++j) {
            double v = 0.0;
            if (!(ls >> v)) {
                throw std::runtime_error("load_embeddings: dimension mismatch at line " +
                                         std::to_string(line_no) + " in " + path);
            }
            if (!std::isfinite(v)) {
                throw std::runtime_error("load_embeddings: non-finite value at line " +
                                         std::to_string(line_no) + " in " + path);
            }
            row(j) = v;
        }
        double extra = 0.0;
        if (ls >> extra) {
            throw std::runtime_error("load_embeddings: dimension mismatch at line " +
                                     std::to_string(line_no) + " in " + path);
        }
        if (!seen.insert(token).second) {
            ++duplicates;
            continue;
        }
        set.words.push_back(token);
        set.matrix.row(kept) = row.transpose();
        ++kept;
    }
    set.matrix.conservativeResize(kept, d);
    if (stats) stats->duplicates_skipped = duplicates;
    return set;
}

// Write in the same text format (full double precision round-trip).
inline void save_embeddings(const EmbeddingSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_embeddings: cannot open " + path);
    out.precision(17);
    out << set.size() << ' ' << set.dim() << '\n';
    for (Index i = 0; i < set.size(); ++i) {
        out << set.words[static_cast<std::size_t>(i)];
        for (Index j = 0; j < set.dim(); ++j) out << ' ' << set.matrix(i, j);
        out << '\n';
    }
    if (!out) throw std::runtime_error("save_embeddings: write failed for " + path);
}

// Divide each row by its Euclidean norm; order preserved.
inline EmbeddingSet normalize(const EmbeddingSet& set) {
    EmbeddingSet out = set;
    for (Index i = 0; i < out.size(); ++i) {
        const double norm = out.matrix.row(i).norm();
        if (norm == 0.0) {
            throw std::runtime_error("normalize: zero vector for token '" +
                                     out.words[static_cast<std::size_t>(i)] + "'");
        }
        out.matrix.row(i) /= norm;
    }
    return out;
}

// Keep the first max_vocab rows.
inline EmbeddingSet cap_vocab(const EmbeddingSet& set, Index max_vocab) {
    if (set.size() <= max_vocab) return set;
    EmbeddingSet out;
    out.lang = set.lang;
    out.words.assign(set.words.begin(), set.words.begin() + max_vocab);
    out.matrix = set.matrix.topRows(max_vocab);
    return out;
}

// Load "<src_token> <tgt_token>" lines, keeping only pairs covered by both
// vocabularies. retention reports kept/total.
inline Lexicon load_lexicon(const std::string& path, const EmbeddingSet& src,
                            const EmbeddingSet& tgt, double* retention = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_lexicon: cannot open " + path);
    const auto src_idx = src.word_index();
    const auto tgt_idx = tgt.word_index();
    Lexicon lex;
    lex.source_lang = src.lang;
    lex.target_lang = tgt.lang;
    std::size_t total = 0;
    std::string a, b;
    while (in >> a >> b) {
        ++total;
        if (src_idx.count(a) && tgt_idx.count(b)) lex.pairs.emplace(a, b);
    }
    if (retention) *retention = total == 0 ? 0.0 : static_cast<double>(lex.pairs.size()) / static_cast<double>(total);
    if (lex.pairs.empty()) {
        throw std::runtime_error("load_lexicon: no pairs from " + path +
                                 " survive vocabulary filtering");
    }
    return lex;
}

// Write "<src_token> <tgt_token>" lines (the load_lexicon format).
inline void save_lexicon(const Lexicon& lex, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_lexicon: cannot open " + path);
    for (const auto& [a, b] : lex.pairs) out << a << ' ' << b << '\n';
    if (!out) throw std::runtime_error("save_lexicon: write failed for " + path);
}

// Relational join: {(a, b) : exists p with (a,p) in first and (p,b) in second}.
inline Lexicon compose_lexicons(const Lexicon& a_to_pivot, const Lexicon& pivot_to_b) {
    if (a_to_pivot.target_lang != pivot_to_b.source_lang) {
        throw std::invalid_argument("compose_lexicons: pivot language mismatch ('" +
                                    a_to_pivot.target_lang + "' vs '" +
                                    pivot_to_b.source_lang + "')");
    }
    std::unordered_map<std::string, std::vector<std::string>> via;
    for (const auto& [p, b] : pivot_to_b.pairs) via[p].push_back(b);
    Lexicon out;
    out.source_lang = a_to_pivot.source_lang;
    out.target_lang = pivot_to_b.target_lang;
    for (const auto& [a, p] : a_to_pivot.pairs) {
        const auto it = via.find(p);
        if (it == via.end()) continue;
        for (const auto& b : it->second) out.pairs.emplace(a, b);
    }
    return out;
}

}  // namespace hyperalign
