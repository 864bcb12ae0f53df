#pragma once

#include <string>
#include <vector>

#include "core.hpp"
#include "embeddings.hpp"

namespace hyperalign {

// A family of embedding sets generated from one shared latent matrix, so the
// correct alignment and the correct word correspondences are known exactly.
// Row r of set i is normalize((Z + sigma * noise_i)[perm_i[r]] * map_i);
// the pivot (index 0) uses the identity map, the identity permutation, and
// carries no noise.
struct SyntheticFamily {
    std::vector<EmbeddingSet> sets;
    std::vector<Matrix> true_maps;               // generative maps, identity at 0
    std::vector<std::vector<Index>> true_perms;  // row r of set i <- latent row perm_i[r]
    Matrix latent;                               // n x d, unit rows
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    Index num_langs() const { return static_cast<Index>(sets.size()); }
};

namespace detail {

// Uniform-random orthogonal matrix: QR of a Gaussian matrix with the sign
// of R's diagonal folded into Q so the distribution is uniform.
inline Matrix random_orthogonal(Index d, Rng& rng) {
    Matrix a(d, d);
    for (Index r = 0; r < d; ++r) {
        for (Index c = 0; c < d; ++c) a(r, c) = rng.gaussian();
    }
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index c = 0; c < d; ++c) {
        if (r(c, c) < 0.0) q.col(c) = -q.col(c);
    }
    return q;
}

}  // namespace detail

inline SyntheticFamily generate_family(Index num_langs, Index n, Index d, double sigma,
                                       std::uint64_t seed) {
    if (num_langs < 1 || d < 2 || n < d || sigma < 0.0) {
        throw std::invalid_argument("generate_family: invalid shapes");
    }
    Rng rng(seed);
    SyntheticFamily fam;
    fam.noise_sigma = sigma;
    fam.seed = seed;

    fam.latent.resize(n, d);
    for (Index r = 0; r < n; ++r) {
        for (Index c = 0; c < d; ++c) fam.latent(r, c) = rng.gaussian();
    }
    fam.latent.rowwise().normalize();

    std::vector<Index> identity_perm(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r) identity_perm[static_cast<std::size_t>(r)] = r;

    for (Index i = 0; i < num_langs; ++i) {
        Matrix q;
        std::vector<Index> perm;
        Matrix rows;
        if (i == 0) {
            q = Matrix::Identity(d, d);
            perm = identity_perm;
            rows = fam.latent;
        } else {
            q = detail::random_orthogonal(d, rng);
            perm = rng.permutation(n);
            Matrix noisy = fam.latent;
            for (Index r = 0; r < n; ++r) {
                for (Index c = 0; c < d; ++c) noisy(r, c) += sigma * rng.gaussian();
            }
            rows = gather_rows(noisy, perm) * q;
        }
        EmbeddingSet set;
        set.lang = "lang" + std::to_string(i);
        set.words.reserve(static_cast<std::size_t>(n));
        for (Index r = 0; r < n; ++r) set.words.push_back("w" + std::to_string(r));
        set.matrix = std::move(rows);
        fam.sets.push_back(normalize(set));
        fam.true_maps.push_back(std::move(q));
        fam.true_perms.push_back(std::move(perm));
    }
    return fam;
}

// Ground-truth translation pairs between two family members: rows that
// originate from the same latent row correspond.
inline Lexicon ground_truth_lexicon(const SyntheticFamily& fam, Index i, Index j) {
    const Index l = fam.num_langs();
    if (i < 0 || j < 0 || i >= l || j >= l) {
        throw std::invalid_argument("ground_truth_lexicon: invalid indices");
    }
    const Index n = fam.latent.rows();
    std::vector<Index> latent_to_j(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r) {
        latent_to_j[static_cast<std::size_t>(fam.true_perms[static_cast<std::size_t>(j)]
                                                 [static_cast<std::size_t>(r)])] = r;
    }
    Lexicon lex;
    lex.source_lang = fam.sets[static_cast<std::size_t>(i)].lang;
    lex.target_lang = fam.sets[static_cast<std::size_t>(j)].lang;
    for (Index r = 0; r < n; ++r) {
        const Index latent_row =
            fam.true_perms[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)];
        const Index s = latent_to_j[static_cast<std::size_t>(latent_row)];
        lex.pairs.emplace(fam.sets[static_cast<std::size_t>(i)].words[static_cast<std::size_t>(r)],
                          fam.sets[static_cast<std::size_t>(j)].words[static_cast<std::size_t>(s)]);
    }
    return lex;
}

}  // namespace hyperalign
