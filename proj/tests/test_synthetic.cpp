#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <string>
#include <vector>

#include <hyperalign/core.hpp>
#include <hyperalign/evaluation.hpp>
#include <hyperalign/objectives.hpp>
#include <hyperalign/synthetic.hpp>

using namespace hyperalign;

namespace {

// set-i row index holding latent row t
std::vector<Index> inverse_perm(const std::vector<Index>& perm) {
    std::vector<Index> inv(perm.size());
    for (std::size_t r = 0; r < perm.size(); ++r) inv[static_cast<std::size_t>(perm[r])] =
        static_cast<Index>(r);
    return inv;
}

// rows of set i arranged in latent order
Matrix latent_order(const SyntheticFamily& fam, Index i) {
    const auto inv = inverse_perm(fam.true_perms[static_cast<std::size_t>(i)]);
    return gather_rows(fam.sets[static_cast<std::size_t>(i)].matrix, inv);
}

Index token_row(const std::string& token) {
    return static_cast<Index>(std::strtoll(token.c_str() + 1, nullptr, 10));
}

}  // namespace

TEST_CASE("generate_family validates its parameters", "[synthetic]") {
    REQUIRE_THROWS_AS(generate_family(0, 10, 4, 0.0, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(generate_family(2, 10, 1, 0.0, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(generate_family(2, 3, 4, 0.0, 1), std::invalid_argument);  // n < d
    REQUIRE_THROWS_AS(generate_family(2, 10, 4, -0.1, 1), std::invalid_argument);
    REQUIRE_NOTHROW(generate_family(1, 10, 4, 0.0, 1));  // pivot-only family
}

TEST_CASE("generate_family produces consistent shapes and tokens", "[synthetic]") {
    const SyntheticFamily fam = generate_family(4, 50, 8, 0.1, 7);
    REQUIRE(fam.num_langs() == 4);
    REQUIRE(fam.true_maps.size() == 4);
    REQUIRE(fam.true_perms.size() == 4);
    REQUIRE(fam.latent.rows() == 50);
    REQUIRE(fam.latent.cols() == 8);
    REQUIRE(fam.noise_sigma == 0.1);
    REQUIRE(fam.seed == 7);
    for (Index i = 0; i < 4; ++i) {
        const auto& s = fam.sets[static_cast<std::size_t>(i)];
        REQUIRE(s.lang == "lang" + std::to_string(i));
        REQUIRE(s.size() == 50);
        REQUIRE(s.dim() == 8);
        for (Index r = 0; r < 50; ++r) {
            REQUIRE(s.words[static_cast<std::size_t>(r)] == "w" + std::to_string(r));
            REQUIRE(s.matrix.row(r).norm() == Catch::Approx(1.0).margin(1e-12));
        }
        REQUIRE(orthogonality_error(fam.true_maps[static_cast<std::size_t>(i)]) < 1e-10);
        // valid permutation
        auto sorted = fam.true_perms[static_cast<std::size_t>(i)];
        std::sort(sorted.begin(), sorted.end());
        for (Index r = 0; r < 50; ++r) REQUIRE(sorted[static_cast<std::size_t>(r)] == r);
    }
    // pivot: identity map, identity permutation, rows equal to the latent
    REQUIRE((fam.true_maps[0] - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff() == 0.0);
    for (Index r = 0; r < 50; ++r) REQUIRE(fam.true_perms[0][static_cast<std::size_t>(r)] == r);
    REQUIRE((fam.sets[0].matrix - fam.latent).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("generate_family is deterministic in the seed", "[synthetic]") {
    const SyntheticFamily a = generate_family(3, 40, 6, 0.05, 11);
    const SyntheticFamily b = generate_family(3, 40, 6, 0.05, 11);
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE((a.sets[i].matrix.array() == b.sets[i].matrix.array()).all());
        REQUIRE((a.true_maps[i].array() == b.true_maps[i].array()).all());
        REQUIRE(a.true_perms[i] == b.true_perms[i]);
    }
    const SyntheticFamily c = generate_family(3, 40, 6, 0.05, 12);
    REQUIRE_FALSE((a.latent.array() == c.latent.array()).all());
}

TEST_CASE("noiseless sets follow the generative equation exactly", "[synthetic]") {
    const SyntheticFamily fam = generate_family(3, 60, 7, 0.0, 3);
    for (Index i = 0; i < 3; ++i) {
        EmbeddingSet rebuilt;
        rebuilt.words = fam.sets[static_cast<std::size_t>(i)].words;
        rebuilt.matrix = gather_rows(fam.latent, fam.true_perms[static_cast<std::size_t>(i)]) *
                         fam.true_maps[static_cast<std::size_t>(i)];
        rebuilt = normalize(rebuilt);
        REQUIRE((rebuilt.matrix - fam.sets[static_cast<std::size_t>(i)].matrix)
                    .cwiseAbs()
                    .maxCoeff() < 1e-15);
    }
    // relative map between two members is recovered by orthogonal fitting
    const Matrix xi = latent_order(fam, 1);
    const Matrix xj = latent_order(fam, 2);
    const Matrix relative = procrustes(xi, xj);
    const Matrix truth = fam.true_maps[1].transpose() * fam.true_maps[2];
    REQUIRE((relative - truth).norm() < 1e-6);
}

TEST_CASE("noise is fresh per language and absent from the pivot", "[synthetic]") {
    const SyntheticFamily fam = generate_family(3, 50, 6, 0.3, 19);
    REQUIRE((fam.sets[0].matrix - fam.latent).cwiseAbs().maxCoeff() < 1e-14);
    for (Index i = 1; i < 3; ++i) {
        EmbeddingSet clean;
        clean.words = fam.sets[static_cast<std::size_t>(i)].words;
        clean.matrix = gather_rows(fam.latent, fam.true_perms[static_cast<std::size_t>(i)]) *
                       fam.true_maps[static_cast<std::size_t>(i)];
        clean = normalize(clean);
        REQUIRE((clean.matrix - fam.sets[static_cast<std::size_t>(i)].matrix)
                    .cwiseAbs()
                    .maxCoeff() > 0.01);
    }
    // the two noisy languages received different noise
    const Matrix d1 = latent_order(fam, 1) * fam.true_maps[1].transpose() - fam.latent;
    const Matrix d2 = latent_order(fam, 2) * fam.true_maps[2].transpose() - fam.latent;
    REQUIRE((d1 - d2).cwiseAbs().maxCoeff() > 0.01);
}

TEST_CASE("ground_truth_lexicon pairs rows sharing a latent origin", "[synthetic]") {
    const SyntheticFamily fam = generate_family(3, 40, 5, 0.0, 23);
    const Lexicon self = ground_truth_lexicon(fam, 0, 0);
    REQUIRE(self.pairs.size() == 40);
    for (const auto& [a, b] : self.pairs) REQUIRE(a == b);

    const Lexicon lex = ground_truth_lexicon(fam, 1, 2);
    REQUIRE(lex.source_lang == "lang1");
    REQUIRE(lex.target_lang == "lang2");
    REQUIRE(lex.pairs.size() == 40);
    for (const auto& [a, b] : lex.pairs) {
        const Index r = token_row(a);
        const Index s = token_row(b);
        REQUIRE(fam.true_perms[1][static_cast<std::size_t>(r)] ==
                fam.true_perms[2][static_cast<std::size_t>(s)]);
    }
    REQUIRE_THROWS_AS(ground_truth_lexicon(fam, 0, 3), std::invalid_argument);
    REQUIRE_THROWS_AS(ground_truth_lexicon(fam, -1, 0), std::invalid_argument);
}

TEST_CASE("pivot-composed lexicons equal the direct lexicon", "[synthetic]") {
    const SyntheticFamily fam = generate_family(4, 30, 5, 0.2, 31);
    const Lexicon via_pivot =
        compose_lexicons(ground_truth_lexicon(fam, 1, 0), ground_truth_lexicon(fam, 0, 2));
    const Lexicon direct = ground_truth_lexicon(fam, 1, 2);
    REQUIRE(via_pivot.pairs == direct.pairs);
    REQUIRE(via_pivot.source_lang == direct.source_lang);
    REQUIRE(via_pivot.target_lang == direct.target_lang);
}

TEST_CASE("moderate noise keeps the family learnable by construction", "[synthetic]") {
    const SyntheticFamily fam = generate_family(2, 1500, 40, 0.05, 41);
    // map language 1 back into the latent space with its generative map
    const Matrix back = fam.true_maps[1].transpose();
    const EvalReport rep =
        evaluate_direct(ground_truth_lexicon(fam, 1, 0), fam.sets[1], fam.sets[0], back,
                        Matrix::Identity(40, 40), RetrievalCriterion::nn());
    REQUIRE(rep.num_queries == 1500);
    REQUIRE(rep.precision_at_1 >= 0.99);
}
