#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pstr/corpus.hpp"
#include "pstr/encoder.hpp"
#include "pstr/learning.hpp"
#include "pstr/manifest.hpp"
#include "pstr/retrieval.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct Range {
    int lo = 0;
    int hi = 0;
};

Range parse_range(const std::string& s) {
    const auto pos = s.find("..");
    try {
        if (pos == std::string::npos) {
            const int v = std::stoi(s);
            return {v, v};
        }
        return {std::stoi(s.substr(0, pos)), std::stoi(s.substr(pos + 2))};
    } catch (const std::exception&) {
        throw pstr::ConfigError("bad range: " + s + " (expected LO..HI)");
    }
}

int resolve_threads(int threads_flag) {
    if (threads_flag > 0) return threads_flag;
    if (const char* env = std::getenv("PSTR_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

std::string fmt6(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

pstr::RunManifest make_manifest(const std::string& command, const std::vector<std::string>& raw_args,
                                std::vector<std::uint64_t> seeds,
                                const std::vector<std::string>& inputs) {
    pstr::RunManifest m;
    m.command = command;
    m.args = raw_args;
    m.seeds = std::move(seeds);
    for (const auto& path : inputs) m.input_digests.emplace_back(path, pstr::file_digest(path));
    return m;
}

int cmd_gen(const CLI::App& app, const std::vector<std::string>& raw_args) {
    pstr::CorpusConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(app.get_option("--seed")->as<std::int64_t>());
    cfg.n_scenes = app.get_option("--scenes")->as<int>();
    const Range lines = parse_range(app.get_option("--lines")->as<std::string>());
    const Range wlen = parse_range(app.get_option("--word-len")->as<std::string>());
    cfg.lines_min = lines.lo;
    cfg.lines_max = lines.hi;
    cfg.word_len_min = wlen.lo;
    cfg.word_len_max = wlen.hi;
    cfg.alphabet = app.get_option("--alphabet")->as<std::string>();
    cfg.width_jitter = app.get_option("--jitter")->as<double>();
    const std::string out = app.get_option("--out")->as<std::string>();

    auto [scenes, queries] = pstr::generate_corpus(cfg);
    pstr::save_corpus(scenes, queries, out);
    pstr::write_manifest(make_manifest("gen", raw_args, {cfg.seed}, {}), out);

    std::size_t n_lines = 0;
    for (const auto& s : scenes) n_lines += s.lines.size();
    std::cout << "wrote " << scenes.size() << " scenes (" << n_lines << " lines) to " << out << "\n"
              << "queries: tir=" << queries.tir_queries.size()
              << " cpp=" << queries.ppr_cpp_queries.size()
              << " ncpp=" << queries.ppr_ncpp_queries.size() << " -> "
              << pstr::queries_path(out) << "\n";
    return kExitOk;
}

int cmd_train(const CLI::App& app, const std::vector<std::string>& raw_args) {
    const std::string corpus_path = app.get_option("--corpus")->as<std::string>();
    const std::string out = app.get_option("--out")->as<std::string>();
    pstr::TrainConfig cfg;
    cfg.strategy = pstr::parse_strategy(app.get_option("--strategy")->as<std::string>());
    cfg.epochs = app.get_option("--epochs")->as<int>();
    cfg.learning_rate = app.get_option("--lr")->as<double>();
    cfg.batch = app.get_option("--batch")->as<int>();
    cfg.seed = static_cast<std::uint64_t>(app.get_option("--seed")->as<std::int64_t>());
    cfg.margin = app.get_option("--margin")->as<double>();
    cfg.model.T = app.get_option("--T")->as<int>();
    cfg.model.C = app.get_option("--C")->as<int>();
    cfg.model.alphabet = app.get_option("--model-alphabet")->as<std::string>();
    cfg.model.margin = cfg.margin;
    cfg.model.noise_sigma = app.get_option("--noise-sigma")->as<double>();

    auto [scenes, queries] = pstr::load_corpus(corpus_path);
    auto [params, report] = pstr::train(scenes, cfg);
    pstr::save_checkpoint(params, out);
    pstr::write_manifest(make_manifest("train", raw_args, {cfg.seed}, {corpus_path}), out);

    const std::string log_path = out + ".losslog.jsonl";
    std::ofstream log(log_path, std::ios::binary);
    for (const auto& e : report.epochs) {
        nlohmann::json j = {{"epoch", e.epoch},
                            {"l_cms", e.l_cms},
                            {"l_mil", e.l_mil},
                            {"mil_filtered", e.mil_filtered}};
        log << j.dump() << "\n";
    }
    std::cout << "trained " << pstr::strategy_name(cfg.strategy) << " for " << cfg.epochs
              << " epochs; final l_cms=" << fmt6(report.epochs.back().l_cms)
              << " l_mil=" << fmt6(report.epochs.back().l_mil)
              << " param_norm=" << fmt6(report.final_param_norm) << "\n"
              << "checkpoint: " << out << "\nloss log: " << log_path << "\n";
    return kExitOk;
}

int cmd_eval(const CLI::App& app, const std::vector<std::string>& raw_args, int threads) {
    const std::string corpus_path = app.get_option("--corpus")->as<std::string>();
    const std::string ckpt_path = app.get_option("--ckpt")->as<std::string>();
    const std::string out = app.get_option("--out")->as<std::string>();
    const std::string task = app.get_option("--task")->as<std::string>();
    const pstr::Matcher matcher = pstr::parse_matcher(app.get_option("--matcher")->as<std::string>());

    auto [scenes, queries] = pstr::load_corpus(corpus_path);
    const pstr::ModelParams params = pstr::load_checkpoint(ckpt_path);
    if (task == "tir") {
        queries.ppr_cpp_queries.clear();
        queries.ppr_ncpp_queries.clear();
    } else if (task == "ppr") {
        queries.tir_queries.clear();
    } else if (task != "both") {
        throw pstr::ConfigError("unknown task: " + task);
    }

    const pstr::RetrievalReport report = pstr::evaluate(scenes, queries, params, matcher, threads);
    pstr::save_report(report, out);
    pstr::write_manifest(make_manifest("eval", raw_args, {}, {corpus_path, ckpt_path}), out);
    std::cout << "matcher=" << pstr::matcher_name(matcher) << " mAP_tir=" << fmt6(report.map_tir)
              << " mAP_ppr=" << fmt6(report.map_ppr) << " mAP_cpp=" << fmt6(report.map_cpp)
              << " mAP_ncpp=" << fmt6(report.map_ncpp)
              << " median_query_s=" << fmt6(report.median_query_seconds) << "\n"
              << "report: " << out << "\n";
    return kExitOk;
}

int cmd_query(const CLI::App& app) {
    const std::string corpus_path = app.get_option("--corpus")->as<std::string>();
    const std::string ckpt_path = app.get_option("--ckpt")->as<std::string>();
    const std::string text = app.get_option("--text")->as<std::string>();
    const int topk = app.get_option("--topk")->as<int>();
    const pstr::Matcher matcher = pstr::parse_matcher(app.get_option("--matcher")->as<std::string>());
    if (text.empty()) throw pstr::ArgumentError("--text must be non-empty");
    if (topk < 1) throw pstr::ArgumentError("--topk must be >= 1");

    auto [scenes, queries] = pstr::load_corpus(corpus_path);
    const pstr::ModelParams params = pstr::load_checkpoint(ckpt_path);
    const auto gallery = pstr::precompute_gallery(scenes, params, matcher);
    const pstr::QueryContext q(pstr::encode_query(text, params));

    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t g = 0; g < gallery.size(); ++g)
        scored.emplace_back(pstr::score_scene_features(gallery[g], q, matcher), g);
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return gallery[a.second].scene_id < gallery[b.second].scene_id;
    });

    const int n = std::min<int>(topk, static_cast<int>(scored.size()));
    for (int k = 0; k < n; ++k) {
        const auto& sf = gallery[scored[static_cast<std::size_t>(k)].second];
        std::cout << (k + 1) << ". " << sf.scene_id << " score="
                  << fmt6(scored[static_cast<std::size_t>(k)].first);
        if (matcher == pstr::Matcher::dpma) {
            // matched path of this scene's best line
            double best = -2.0;
            pstr::DpmaResult best_dp;
            for (const auto& lf : sf.line_features) {
                pstr::DpmaResult dp = pstr::dpma(lf, q.f);
                const double s = pstr::cosine(pstr::TanhFlat(dp.matched_feature), q.flat);
                if (s > best) {
                    best = s;
                    best_dp = std::move(dp);
                }
            }
            std::cout << " path=[";
            for (std::size_t i = 0; i < best_dp.path.size(); ++i)
                std::cout << (i ? "," : "") << best_dp.path[i];
            std::cout << "]";
        }
        std::cout << "\n";
    }
    return kExitOk;
}

int cmd_gradcheck(const CLI::App& app) {
    const std::uint64_t seed =
        static_cast<std::uint64_t>(app.get_option("--seed")->as<std::int64_t>());
    const double tol = app.get_option("--tolerance")->as<double>();
    const std::string strategy_arg = app.get_option("--strategy")->as<std::string>();
    const std::string corrupt = app.get_option("--corrupt")->as<std::string>();

    pstr::CorpusConfig ccfg;
    ccfg.seed = seed;
    ccfg.n_scenes = 3;
    ccfg.lines_min = 1;
    ccfg.lines_max = 2;
    ccfg.alphabet = "abcdef";
    ccfg.word_len_min = 3;
    ccfg.word_len_max = 6;
    ccfg.width_jitter = 0.4;
    auto [scenes, queries] = pstr::generate_corpus(ccfg);

    pstr::ModelConfig mcfg;
    mcfg.T = 5;
    mcfg.C = 8;
    mcfg.alphabet = ccfg.alphabet;
    mcfg.noise_sigma = 0.1;
    const pstr::ModelParams params = pstr::init_params(mcfg, seed + 1);
    const auto batch = pstr::collect_lines(scenes);

    std::vector<pstr::Strategy> strategies;
    if (strategy_arg == "all")
        strategies = {pstr::Strategy::cmsl_a, pstr::Strategy::mil, pstr::Strategy::rankmil};
    else
        strategies = {pstr::parse_strategy(strategy_arg)};

    bool ok = true;
    for (const auto strategy : strategies) {
        pstr::TrainLossConfig lcfg{strategy, 0.2, 2, 0};
        const auto results = pstr::gradient_check(params, batch, lcfg, tol, 20, seed, corrupt);
        for (const auto& r : results) {
            std::cout << pstr::strategy_name(strategy) << "  " << r.tensor << "  max_rel_err="
                      << fmt6(r.max_rel_err) << "  " << (r.pass ? "PASS" : "FAIL") << "\n";
            ok = ok && r.pass;
        }
    }
    std::cout << (ok ? "gradcheck: all tensors pass" : "gradcheck: FAILURES above") << "\n";
    return ok ? kExitOk : kExitNumerical;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"partial scene text retrieval over a seeded synthetic corpus"};
    app.require_subcommand(1);
    int threads_flag = 0;
    app.add_option("--threads", threads_flag, "worker thread cap (fallback: PSTR_THREADS)");

    CLI::App* gen = app.add_subcommand("gen", "generate a seeded synthetic corpus");
    gen->add_option("--seed", "PRNG seed")->default_val(0);
    gen->add_option("--scenes", "number of scenes")->default_val(200);
    gen->add_option("--lines", "lines per scene, LO..HI")->default_val("1..3");
    gen->add_option("--alphabet", "corpus alphabet")->default_val("abcdefghijklmnopqrstuvwxyz");
    gen->add_option("--word-len", "transcription length, LO..HI")->default_val("4..10");
    gen->add_option("--jitter", "character width jitter in [0,1)")->default_val(0.5);
    gen->add_option("--out", "corpus output path (.jsonl)")->required();

    CLI::App* train = app.add_subcommand("train", "train a model on a corpus");
    train->add_option("--corpus", "corpus file")->required();
    train->add_option("--out", "checkpoint output path")->required();
    train->add_option("--strategy", "cmsl-a|cmsl-b|cmsl-c|mil|rankmil")->default_val("rankmil");
    train->add_option("--epochs", "training epochs")->default_val(30);
    train->add_option("--lr", "learning rate")->default_val(0.05);
    train->add_option("--batch", "lines per epoch (0 = all)")->default_val(64);
    train->add_option("--seed", "training seed")->default_val(0);
    train->add_option("--margin", "RankMIL margin m")->default_val(0.2);
    train->add_option("--T", "sequence length")->default_val(15);
    train->add_option("--C", "feature dimension")->default_val(128);
    train->add_option("--model-alphabet", "model alphabet")
        ->default_val("abcdefghijklmnopqrstuvwxyz");
    train->add_option("--noise-sigma", "scene encoder noise sigma")->default_val(0.1);

    CLI::App* eval = app.add_subcommand("eval", "evaluate retrieval mAP");
    eval->add_option("--corpus", "corpus file")->required();
    eval->add_option("--ckpt", "checkpoint file")->required();
    eval->add_option("--matcher", "line|bags|dpma")->default_val("dpma");
    eval->add_option("--task", "tir|ppr|both")->default_val("both");
    eval->add_option("--out", "report output path")->required();

    CLI::App* query = app.add_subcommand("query", "rank the gallery for one query");
    query->add_option("--corpus", "corpus file")->required();
    query->add_option("--ckpt", "checkpoint file")->required();
    query->add_option("--text", "query text")->required();
    query->add_option("--topk", "results to print")->default_val(5);
    query->add_option("--matcher", "line|bags|dpma")->default_val("dpma");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gradcheck->add_option("--seed", "seed")->default_val(7);
    gradcheck->add_option("--tolerance", "max relative error")->default_val(1e-4);
    gradcheck->add_option("--strategy", "cmsl-a|mil|rankmil|all")->default_val("all");
    gradcheck->add_option("--corrupt", "test hook: corrupt the named tensor's gradient")
        ->default_val("");

    std::vector<std::string> raw_args(argv + 1, argv + argc);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen(*gen, raw_args);
        if (train->parsed()) return cmd_train(*train, raw_args);
        if (eval->parsed()) return cmd_eval(*eval, raw_args, resolve_threads(threads_flag));
        if (query->parsed()) return cmd_query(*query);
        if (gradcheck->parsed()) return cmd_gradcheck(*gradcheck);
    } catch (const pstr::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const pstr::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const pstr::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const pstr::LoadError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const pstr::NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
