#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pstr/common.hpp"
#include "pstr/corpus.hpp"
#include "pstr/encoder.hpp"
#include "pstr/featsim.hpp"
#include "pstr/learning.hpp"
#include "pstr/mil.hpp"

namespace pstr {

enum class Matcher { line_only, bags, dpma };

inline Matcher parse_matcher(const std::string& s) {
    if (s == "line" || s == "line_only") return Matcher::line_only;
    if (s == "bags") return Matcher::bags;
    if (s == "dpma") return Matcher::dpma;
    throw ConfigError("unknown matcher: " + s);
}

inline const char* matcher_name(Matcher m) {
    switch (m) {
        case Matcher::line_only: return "line";
        case Matcher::bags: return "bags";
        case Matcher::dpma: return "dpma";
    }
    return "?";
}

// Mean over relevant ranks of precision-at-that-rank.
inline double average_precision(const std::vector<bool>& ranked_relevance) {
    int relevant = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
        if (ranked_relevance[k]) {
            ++relevant;
            sum += static_cast<double>(relevant) / static_cast<double>(k + 1);
        }
    }
    if (relevant == 0) throw ArgumentError("average_precision: no relevant item in ranking");
    return sum / relevant;
}

struct QueryResult {
    std::string query;
    std::string task; // tir | cpp | ncpp
    std::vector<std::pair<std::string, double>> ranking; // whole gallery, best first
    double ap = 0.0;
    double scoring_seconds = 0.0; // offline phase only
};

struct RetrievalReport {
    std::vector<QueryResult> per_query;
    double map_tir = 0.0;
    double map_ppr = 0.0;
    double map_cpp = 0.0;
    double map_ncpp = 0.0;
    double median_query_seconds = 0.0;
    Matcher matcher = Matcher::dpma;
};

// Precomputed scene-side features; building them corresponds to the
// untimed "network prediction" phase, scoring against them is the
// offline phase.
struct SceneFeatures {
    std::string scene_id;
    std::vector<SequenceFeature> line_features;     // one per line
    std::vector<TanhFlat> line_flat;
    std::vector<TanhRows> line_rows;                // dpma matcher only
    std::vector<SequenceFeature> proposal_features; // bags matcher only
    std::vector<TanhFlat> proposal_flat;
};

// Query-side caches shared across the whole gallery scan.
struct QueryContext {
    SequenceFeature f;
    TanhFlat flat;
    TanhRows rows;

    explicit QueryContext(SequenceFeature qf) : f(std::move(qf)), flat(f), rows(f) {}
};

// Inference-time bag policy: the character count of a line is estimated
// from its band arc length and the gallery's median character width
// (the transcription length is unknown at test time).
inline double median_char_width(const std::vector<Scene>& scenes) {
    std::vector<double> widths;
    for (const auto& scene : scenes)
        for (const auto& line : scene.lines)
            widths.insert(widths.end(), line.char_widths.begin(), line.char_widths.end());
    if (widths.empty()) throw ArgumentError("median_char_width: empty gallery");
    std::sort(widths.begin(), widths.end());
    return widths[widths.size() / 2];
}

inline std::vector<SceneFeatures> precompute_gallery(const std::vector<Scene>& scenes,
                                                     const ModelParams& params, Matcher matcher) {
    const double med_w = matcher == Matcher::bags ? median_char_width(scenes) : 1.0;
    std::vector<SceneFeatures> gallery;
    gallery.reserve(scenes.size());
    for (const auto& scene : scenes) {
        SceneFeatures sf;
        sf.scene_id = scene.scene_id;
        for (std::size_t li = 0; li < scene.lines.size(); ++li) {
            const auto& line = scene.lines[li];
            const std::uint64_t seed = line_noise_seed(scene.scene_id, li);
            sf.line_features.push_back(encode_scene_span(line, 0.0, 1.0, params, seed));
            sf.line_flat.emplace_back(sf.line_features.back());
            if (matcher == Matcher::dpma) sf.line_rows.emplace_back(sf.line_features.back());
            if (matcher == Matcher::bags) {
                const int est = std::max<int>(
                    2, static_cast<int>(std::llround(arc_length(line.polygon) / med_w)));
                for (int n = 2; n <= est; ++n) {
                    for (int i = 0; i + n <= est; ++i) {
                        const double a = static_cast<double>(i) / est;
                        const double b = static_cast<double>(i + n) / est;
                        sf.proposal_features.push_back(encode_scene_span(line, a, b, params, seed));
                        sf.proposal_flat.emplace_back(sf.proposal_features.back());
                    }
                }
            }
        }
        gallery.push_back(std::move(sf));
    }
    return gallery;
}

// Offline scoring of one scene: the max similarity over the candidate
// features ("highest score among all text regions").
inline double score_scene_features(const SceneFeatures& sf, const QueryContext& query,
                                   Matcher matcher) {
    double best = -2.0;
    for (const auto& lf : sf.line_flat) best = std::max(best, cosine(lf, query.flat));
    if (matcher == Matcher::dpma) {
        for (const auto& lr : sf.line_rows)
            best = std::max(best, dpma_partial_cached(lr, query.rows));
    } else if (matcher == Matcher::bags) {
        for (const auto& pf : sf.proposal_flat) best = std::max(best, cosine(pf, query.flat));
    }
    return best;
}

// Single-scene scoring entry points.
inline double score_scene_dpma(const Scene& scene, const std::string& query,
                               const ModelParams& params) {
    if (query.empty()) throw ArgumentError("score_scene_dpma: empty query");
    std::vector<Scene> one{scene};
    const auto gallery = precompute_gallery(one, params, Matcher::dpma);
    const QueryContext q(encode_query(query, params));
    return score_scene_features(gallery[0], q, Matcher::dpma);
}

inline double score_scene_bags(const Scene& scene, const std::string& query,
                               const ModelParams& params, const std::vector<Scene>& gallery_scenes) {
    if (query.empty()) throw ArgumentError("score_scene_bags: empty query");
    const double med_w = median_char_width(gallery_scenes);
    std::vector<Scene> one{scene};
    // reuse the gallery-wide width estimate
    auto gallery = precompute_gallery(one, params, Matcher::line_only);
    SceneFeatures& sf = gallery[0];
    for (std::size_t li = 0; li < scene.lines.size(); ++li) {
        const auto& line = scene.lines[li];
        const std::uint64_t seed = line_noise_seed(scene.scene_id, li);
        const int est =
            std::max<int>(2, static_cast<int>(std::llround(arc_length(line.polygon) / med_w)));
        for (int n = 2; n <= est; ++n)
            for (int i = 0; i + n <= est; ++i)
                sf.proposal_flat.emplace_back(encode_scene_span(
                    line, static_cast<double>(i) / est, static_cast<double>(i + n) / est, params, seed));
    }
    const QueryContext q(encode_query(query, params));
    return score_scene_features(sf, q, Matcher::bags);
}

namespace detail {

template <typename Fn>
inline void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = std::min<int>(threads, static_cast<int>(n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (std::size_t i = static_cast<std::size_t>(w); i < n;
                 i += static_cast<std::size_t>(workers))
                fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace detail

inline RetrievalReport evaluate(const std::vector<Scene>& scenes, const QuerySet& queries,
                                const ModelParams& params, Matcher matcher, int threads = 1) {
    if (queries.tir_queries.empty() && queries.ppr_cpp_queries.empty() &&
        queries.ppr_ncpp_queries.empty())
        throw ArgumentError("evaluate: empty query set");

    const auto gallery = precompute_gallery(scenes, params, matcher);

    struct Task {
        const std::vector<std::string>* list;
        const char* name;
    };
    std::vector<std::pair<std::string, std::string>> jobs; // (task, query)
    for (const Task& t : {Task{&queries.tir_queries, "tir"},
                          Task{&queries.ppr_cpp_queries, "cpp"},
                          Task{&queries.ppr_ncpp_queries, "ncpp"}})
        for (const auto& q : *t.list) jobs.emplace_back(t.name, q);

    RetrievalReport report;
    report.matcher = matcher;
    report.per_query.resize(jobs.size());

    detail::parallel_for(jobs.size(), threads, [&](std::size_t ji) {
        const auto& [task, query] = jobs[ji];
        QueryResult qr;
        qr.query = query;
        qr.task = task;
        const QueryContext qctx(encode_query(query, params));

        std::vector<double> scores(gallery.size());
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t g = 0; g < gallery.size(); ++g)
            scores[g] = score_scene_features(gallery[g], qctx, matcher);
        const auto t1 = std::chrono::steady_clock::now();
        qr.scoring_seconds = std::chrono::duration<double>(t1 - t0).count();

        std::vector<std::size_t> order(gallery.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return gallery[a].scene_id < gallery[b].scene_id; // deterministic ties
        });
        const auto rel_it = queries.relevance.find(query);
        std::vector<bool> rel_ranked(order.size(), false);
        for (std::size_t k = 0; k < order.size(); ++k) {
            qr.ranking.emplace_back(gallery[order[k]].scene_id, scores[order[k]]);
            if (rel_it != queries.relevance.end())
                rel_ranked[k] = rel_it->second.count(gallery[order[k]].scene_id) > 0;
        }
        qr.ap = average_precision(rel_ranked);
        report.per_query[ji] = std::move(qr);
    });

    auto mean_ap = [&](auto pred) {
        double sum = 0.0;
        int n = 0;
        for (const auto& qr : report.per_query)
            if (pred(qr)) {
                sum += qr.ap;
                ++n;
            }
        return n > 0 ? sum / n : 0.0;
    };
    report.map_tir = mean_ap([](const QueryResult& q) { return q.task == "tir"; });
    report.map_cpp = mean_ap([](const QueryResult& q) { return q.task == "cpp"; });
    report.map_ncpp = mean_ap([](const QueryResult& q) { return q.task == "ncpp"; });
    report.map_ppr = mean_ap([](const QueryResult& q) { return q.task != "tir"; });

    std::vector<double> times;
    for (const auto& qr : report.per_query) times.push_back(qr.scoring_seconds);
    if (!times.empty()) {
        std::sort(times.begin(), times.end());
        report.median_query_seconds = times[times.size() / 2];
    }
    return report;
}

inline nlohmann::json report_to_json(const RetrievalReport& report) {
    nlohmann::json j;
    j["matcher"] = matcher_name(report.matcher);
    j["map_tir"] = report.map_tir;
    j["map_ppr"] = report.map_ppr;
    j["map_cpp"] = report.map_cpp;
    j["map_ncpp"] = report.map_ncpp;
    j["median_query_seconds"] = report.median_query_seconds;
    j["per_query"] = nlohmann::json::array();
    for (const auto& qr : report.per_query) {
        nlohmann::json jq;
        jq["query"] = qr.query;
        jq["task"] = qr.task;
        jq["ap"] = qr.ap;
        jq["scoring_seconds"] = qr.scoring_seconds;
        nlohmann::json ranking = nlohmann::json::array();
        for (const auto& [id, score] : qr.ranking) ranking.push_back({{"scene_id", id}, {"score", score}});
        jq["ranking"] = std::move(ranking);
        j["per_query"].push_back(std::move(jq));
    }
    return j;
}

inline void save_report(const RetrievalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError("cannot open for writing: " + path);
    out << report_to_json(report).dump(2) << "\n";
}

} // namespace pstr
