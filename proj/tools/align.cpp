// Command-line surface for the alignment pipeline: generate synthetic
// families, train bilingual or joint multilingual maps, evaluate direct and
// pivot-mediated translation, and extract the language tree.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <hyperalign/hyperalign.hpp>

namespace fs = std::filesystem;
using namespace hyperalign;

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

// All resolved flag values, one "key value" line each, sorted by key.
void write_manifest(const fs::path& dir, const std::string& subcommand,
                    const std::map<std::string, std::string>& values) {
    std::string text = "subcommand " + subcommand + "\n";
    for (const auto& [k, v] : values) text += k + " " + v + "\n";
    write_file(dir / "run_manifest.txt", text);
}

struct ConfigFlags {
    AlignerConfig cfg;

    void attach(CLI::App* app) {
        app->add_option("--gw_size", cfg.gw_size, "head size for the structural initialization")
            ->capture_default_str();
        app->add_option("--gw_eps", cfg.gw_eps, "entropic regularization of the initializer")
            ->capture_default_str();
        app->add_option("--batch_first", cfg.batch_first, "batch size for the first l2 epoch")
            ->capture_default_str();
        app->add_option("--batch_rest", cfg.batch_rest, "batch size after the first epoch")
            ->capture_default_str();
        app->add_option("--lr_l2", cfg.lr_l2, "learning rate of the l2 phase")
            ->capture_default_str();
        app->add_option("--lr_rcsls_bilingual", cfg.lr_rcsls_bilingual,
                        "learning rate of the refinement phase (bilingual)")
            ->capture_default_str();
        app->add_option("--lr_rcsls_multi", cfg.lr_rcsls_multi,
                        "learning rate of the refinement phase (multilingual)")
            ->capture_default_str();
        app->add_option("--l2_epochs", cfg.l2_epochs, "epochs of the l2 phase")
            ->capture_default_str();
        app->add_option("--rcsls_epochs", cfg.rcsls_epochs, "epochs of the refinement phase")
            ->capture_default_str();
        app->add_option("--sinkhorn_iters_phase", cfg.sinkhorn_iters_phase,
                        "leading batch rounds per phase solved with the entropic solver")
            ->capture_default_str();
        app->add_option("--batch_sinkhorn_reg", cfg.batch_sinkhorn_reg,
                        "regularization for those soft rounds")
            ->capture_default_str();
        app->add_option("--knn_subsample", cfg.knn_subsample, "neighbor-search pool size")
            ->capture_default_str();
        app->add_option("--vocab_cap", cfg.vocab_cap, "vocabulary cap per language")
            ->capture_default_str();
        app->add_option("--k", cfg.k, "neighborhood size of the relaxed loss")
            ->capture_default_str();
        app->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
        app->add_option("--transport_outer_iter", cfg.transport.outer_iter,
                        "outer rounds of the structural initializer")
            ->capture_default_str();
        app->add_option("--transport_outer_tol", cfg.transport.outer_tol,
                        "outer stopping tolerance (relative plan change)")
            ->capture_default_str();
        app->add_option("--transport_inner_tol", cfg.transport.inner_tol,
                        "marginal tolerance of the inner solver")
            ->capture_default_str();
        app->add_option("--transport_inner_iter", cfg.transport.inner_iter,
                        "iteration cap of the inner solver")
            ->capture_default_str();
    }

    std::map<std::string, std::string> manifest() const {
        return {
            {"gw_size", std::to_string(cfg.gw_size)},
            {"gw_eps", fmt_double(cfg.gw_eps)},
            {"batch_first", std::to_string(cfg.batch_first)},
            {"batch_rest", std::to_string(cfg.batch_rest)},
            {"lr_l2", fmt_double(cfg.lr_l2)},
            {"lr_rcsls_bilingual", fmt_double(cfg.lr_rcsls_bilingual)},
            {"lr_rcsls_multi", fmt_double(cfg.lr_rcsls_multi)},
            {"l2_epochs", std::to_string(cfg.l2_epochs)},
            {"rcsls_epochs", std::to_string(cfg.rcsls_epochs)},
            {"sinkhorn_iters_phase", std::to_string(cfg.sinkhorn_iters_phase)},
            {"batch_sinkhorn_reg", fmt_double(cfg.batch_sinkhorn_reg)},
            {"knn_subsample", std::to_string(cfg.knn_subsample)},
            {"vocab_cap", std::to_string(cfg.vocab_cap)},
            {"k", std::to_string(cfg.k)},
            {"seed", std::to_string(cfg.seed)},
            {"transport_outer_iter", std::to_string(cfg.transport.outer_iter)},
            {"transport_outer_tol", fmt_double(cfg.transport.outer_tol)},
            {"transport_inner_tol", fmt_double(cfg.transport.inner_tol)},
            {"transport_inner_iter", std::to_string(cfg.transport.inner_iter)},
        };
    }
};

EmbeddingSet load_set(const std::string& path, Index vocab_cap) {
    EmbeddingSet set = load_embeddings(path, vocab_cap);
    set.lang = stem_of(path);
    return normalize(set);
}

const Matrix& map_for(const MultiAlignment& a, const std::string& tag) {
    for (std::size_t i = 0; i < a.languages.size(); ++i) {
        if (a.languages[i] == tag) return a.maps[i];
    }
    throw std::runtime_error("checkpoint has no language '" + tag + "'");
}

int run_synth(Index langs, Index n, Index d, double sigma, std::uint64_t seed,
              const std::string& out) {
    const fs::path dir(out);
    fs::create_directories(dir);
    const SyntheticFamily fam = generate_family(langs, n, d, sigma, seed);
    for (const auto& set : fam.sets) save_embeddings(set, (dir / (set.lang + ".vec")).string());
    for (Index i = 0; i < fam.num_langs(); ++i) {
        for (Index j = 0; j < fam.num_langs(); ++j) {
            if (i == j) continue;
            const Lexicon lex = ground_truth_lexicon(fam, i, j);
            save_lexicon(lex,
                         (dir / ("lex_" + lex.source_lang + "_" + lex.target_lang + ".txt")).string());
        }
    }
    write_manifest(dir, "synth",
                   {{"langs", std::to_string(langs)},
                    {"n", std::to_string(n)},
                    {"d", std::to_string(d)},
                    {"sigma", fmt_double(sigma)},
                    {"seed", std::to_string(seed)}});
    std::cout << "wrote " << fam.num_langs() << " languages to " << dir.string() << "\n";
    return 0;
}

int run_align_bi(const std::string& src, const std::string& tgt, const ConfigFlags& flags,
                 const std::string& out) {
    const fs::path dir(out);
    fs::create_directories(dir);
    const EmbeddingSet x = load_set(src, flags.cfg.vocab_cap);
    const EmbeddingSet y = load_set(tgt, flags.cfg.vocab_cap);
    const BilingualModel model = align_bilingual(x, y, flags.cfg);

    MultiAlignment ckpt;
    ckpt.languages = {y.lang, x.lang};
    ckpt.maps = {Matrix::Identity(y.dim(), y.dim()), model.q};
    ckpt.weights = default_weights(2);
    save_alignment(ckpt, (dir / "checkpoint.txt").string());
    write_file(dir / "loss_trace.txt", format_loss_trace(model.loss_trace));
    auto manifest = flags.manifest();
    manifest["src"] = src;
    manifest["tgt"] = tgt;
    write_manifest(dir, "align-bi", manifest);
    std::cout << "aligned " << x.lang << " into the space of " << y.lang << "\n";
    return 0;
}

int run_align_multi(std::vector<std::string> set_paths, const std::string& pivot_tag,
                    const std::string& weights_mode, const ConfigFlags& flags,
                    const std::string& out) {
    const fs::path dir(out);
    fs::create_directories(dir);
    if (!pivot_tag.empty()) {
        const auto it = std::find_if(set_paths.begin(), set_paths.end(), [&](const std::string& p) {
            return stem_of(p) == pivot_tag;
        });
        if (it == set_paths.end()) {
            throw std::runtime_error("no input set has language '" + pivot_tag + "'");
        }
        std::rotate(set_paths.begin(), it, it + 1);
    }
    std::vector<EmbeddingSet> sets;
    sets.reserve(set_paths.size());
    for (const auto& p : set_paths) sets.push_back(load_set(p, flags.cfg.vocab_cap));

    const Index l = static_cast<Index>(sets.size());
    const Matrix w = weights_mode == "uniform" ? uniform_weights(l) : default_weights(l);
    std::vector<LossTraceEntry> trace;
    const MultiAlignment alignment = align_multi(sets, w, flags.cfg, &trace);
    save_alignment(alignment, (dir / "checkpoint.txt").string());
    write_file(dir / "loss_trace.txt", format_loss_trace(trace));
    auto manifest = flags.manifest();
    manifest["weights"] = weights_mode;
    manifest["pivot"] = alignment.languages[0];
    for (std::size_t i = 0; i < set_paths.size(); ++i) {
        manifest["set" + std::to_string(i)] = set_paths[i];
    }
    write_manifest(dir, "align-multi", manifest);
    std::cout << "jointly aligned " << l << " languages (pivot " << alignment.languages[0] << ")\n";
    return 0;
}

int run_eval(const std::string& src, const std::string& tgt, const std::string& lexicon_path,
             const std::string& ckpt_path, const std::string& ckpt2_path, bool indirect,
             const std::string& criterion_name, Index csls_k, Index vocab_cap,
             const std::string& out) {
    const fs::path dir(out);
    fs::create_directories(dir);
    const EmbeddingSet x = load_set(src, vocab_cap);
    const EmbeddingSet y = load_set(tgt, vocab_cap);
    const Lexicon lex = load_lexicon(lexicon_path, x, y);
    const RetrievalCriterion criterion = criterion_name == "nn"
                                             ? RetrievalCriterion::nn()
                                             : RetrievalCriterion::csls(csls_k);
    const MultiAlignment ckpt = load_alignment(ckpt_path);
    EvalReport report;
    if (!ckpt2_path.empty()) {
        const MultiAlignment ckpt2 = load_alignment(ckpt2_path);
        if (ckpt.languages[0] != ckpt2.languages[0]) {
            throw std::runtime_error("checkpoints disagree on the pivot language");
        }
        report = evaluate_indirect(lex, x, y, map_for(ckpt, x.lang), map_for(ckpt2, y.lang),
                                   ckpt.languages[0], criterion);
    } else if (indirect) {
        report = evaluate_indirect(lex, x, y, map_for(ckpt, x.lang), map_for(ckpt, y.lang),
                                   ckpt.languages[0], criterion);
    } else {
        report = evaluate_direct(lex, x, y, map_for(ckpt, x.lang), map_for(ckpt, y.lang), criterion);
    }
    const std::string line = format_report(report) + "\n";
    write_file(dir / "report.txt", line);
    std::cout << line;
    return 0;
}

int run_tree(const std::string& ckpt_path, const std::vector<std::string>& set_paths,
             const std::string& loss_kind, const std::string& exclude, Index k, Index vocab_cap,
             const std::string& out) {
    const fs::path dir(out);
    fs::create_directories(dir);
    const MultiAlignment alignment = load_alignment(ckpt_path);
    std::map<std::string, EmbeddingSet> by_tag;
    for (const auto& p : set_paths) {
        EmbeddingSet s = load_set(p, vocab_cap);
        by_tag[s.lang] = std::move(s);
    }
    std::vector<EmbeddingSet> sets;
    for (const auto& tag : alignment.languages) {
        const auto it = by_tag.find(tag);
        if (it == by_tag.end()) throw std::runtime_error("missing input set for language '" + tag + "'");
        sets.push_back(std::move(it->second));
    }
    const Matrix losses = pair_loss_matrix(alignment, sets, loss_kind == "rcsls", k);
    const auto tree = language_tree(losses, alignment.languages, exclude);
    std::string text;
    for (const auto& e : tree) {
        text += alignment.languages[static_cast<std::size_t>(e.a)] + " " +
                alignment.languages[static_cast<std::size_t>(e.b)] + " " + fmt_double(e.weight) +
                "\n";
    }
    write_file(dir / "tree.txt", text);
    std::cout << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised joint alignment of word-embedding spaces"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads for matrix kernels (0 = machine cores)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic embedding family");
    Index s_langs = 4, s_n = 2000, s_d = 50;
    double s_sigma = 0.0;
    std::uint64_t s_seed = 1;
    std::string s_out = ".";
    synth->add_option("--langs", s_langs, "languages including the pivot")->capture_default_str();
    synth->add_option("--n", s_n, "words per language")->capture_default_str();
    synth->add_option("--d", s_d, "embedding dimension")->capture_default_str();
    synth->add_option("--sigma", s_sigma, "per-language noise level")->capture_default_str();
    synth->add_option("--seed", s_seed, "random seed")->capture_default_str();
    synth->add_option("--out", s_out, "output directory")->capture_default_str();

    auto* bi = app.add_subcommand("align-bi", "align one language into another's space");
    std::string b_src, b_tgt, b_out = ".";
    ConfigFlags b_flags;
    bi->add_option("--src", b_src, "source .vec file")->required()->check(CLI::ExistingFile);
    bi->add_option("--tgt", b_tgt, "target .vec file")->required()->check(CLI::ExistingFile);
    bi->add_option("--out", b_out, "output directory")->capture_default_str();
    b_flags.attach(bi);

    auto* multi = app.add_subcommand("align-multi", "jointly align a family of languages");
    std::vector<std::string> m_sets;
    std::string m_pivot, m_weights = "umh", m_out = ".";
    ConfigFlags m_flags;
    multi->add_option("--sets", m_sets, "input .vec files (first is the pivot unless --pivot)")
        ->required()
        ->expected(-2)
        ->check(CLI::ExistingFile);
    multi->add_option("--pivot", m_pivot, "language tag to use as the pivot");
    multi->add_option("--weights", m_weights, "pair weighting scheme")
        ->check(CLI::IsMember({"umh", "uniform"}))
        ->capture_default_str();
    multi->add_option("--out", m_out, "output directory")->capture_default_str();
    m_flags.attach(multi);

    auto* eval = app.add_subcommand("eval", "word-translation accuracy against a lexicon");
    std::string e_src, e_tgt, e_lex, e_ckpt, e_ckpt2, e_criterion = "csls", e_out = ".";
    bool e_indirect = false;
    Index e_k = 10, e_cap = 20000;
    eval->add_option("--src", e_src, "source .vec file")->required()->check(CLI::ExistingFile);
    eval->add_option("--tgt", e_tgt, "target .vec file")->required()->check(CLI::ExistingFile);
    eval->add_option("--lexicon", e_lex, "ground-truth pairs")->required()->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", e_ckpt, "trained checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--checkpoint2", e_ckpt2,
                     "second checkpoint (compose two bilingual models through their shared pivot)")
        ->check(CLI::ExistingFile);
    eval->add_flag("--indirect", e_indirect, "label the evaluation as pivot-mediated");
    eval->add_option("--criterion", e_criterion, "retrieval criterion")
        ->check(CLI::IsMember({"nn", "csls"}))
        ->capture_default_str();
    eval->add_option("--csls_k", e_k, "neighborhood size of the criterion")->capture_default_str();
    eval->add_option("--vocab_cap", e_cap, "vocabulary cap per language")->capture_default_str();
    eval->add_option("--out", e_out, "output directory")->capture_default_str();

    auto* tree = app.add_subcommand("tree", "minimum spanning tree over pair losses");
    std::string t_ckpt, t_loss = "rcsls", t_exclude, t_out = ".";
    std::vector<std::string> t_sets;
    Index t_k = 10, t_cap = 20000;
    tree->add_option("--checkpoint", t_ckpt, "trained checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    tree->add_option("--sets", t_sets, "input .vec files for every checkpoint language")
        ->required()
        ->expected(-2)
        ->check(CLI::ExistingFile);
    tree->add_option("--loss", t_loss, "pair loss to build the tree on")
        ->check(CLI::IsMember({"rcsls", "l2"}))
        ->capture_default_str();
    tree->add_option("--exclude", t_exclude, "language tag to drop before the tree");
    tree->add_option("--k", t_k, "neighborhood size of the relaxed loss")->capture_default_str();
    tree->add_option("--vocab_cap", t_cap, "vocabulary cap per language")->capture_default_str();
    tree->add_option("--out", t_out, "output directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    Eigen::setNbThreads(threads);

    try {
        if (synth->parsed()) return run_synth(s_langs, s_n, s_d, s_sigma, s_seed, s_out);
        if (bi->parsed()) return run_align_bi(b_src, b_tgt, b_flags, b_out);
        if (multi->parsed()) return run_align_multi(m_sets, m_pivot, m_weights, m_flags, m_out);
        if (eval->parsed()) {
            return run_eval(e_src, e_tgt, e_lex, e_ckpt, e_ckpt2, e_indirect, e_criterion, e_k,
                            e_cap, e_out);
        }
        if (tree->parsed()) return run_tree(t_ckpt, t_sets, t_loss, t_exclude, t_k, t_cap, t_out);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
