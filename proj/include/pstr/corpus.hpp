#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pstr/common.hpp"
#include "pstr/geometry.hpp"
#include "pstr/rng.hpp"
#include "pstr/textsim.hpp"
#include "pstr/utf8.hpp"

namespace pstr {

// One scene text instance: a transcription, per-character widths and the
// band polygon. Widths are deliberately non-uniform (jitter), so any
// equal-width assumption over the band misreads character boundaries.
struct TextLine {
    std::string transcription;
    std::vector<double> char_widths;
    BoundaryPolygon polygon;
};

struct Scene {
    std::string scene_id;
    std::vector<TextLine> lines;
};

struct QuerySet {
    std::vector<std::string> tir_queries;
    std::vector<std::string> ppr_cpp_queries;
    std::vector<std::string> ppr_ncpp_queries;
    std::map<std::string, std::set<std::string>> relevance;
};

struct CorpusConfig {
    std::uint64_t seed = 0;
    int n_scenes = 1;
    int lines_min = 1;
    int lines_max = 1;
    std::string alphabet = "abcdefghijklmnopqrstuvwxyz";
    int word_len_min = 4;
    int word_len_max = 10;
    double width_jitter = 0.0;
};

inline void validate_text_line(const TextLine& line, const std::string& where) {
    const auto cps = utf8_decode(line.transcription);
    if (cps.empty()) throw ParseError(where + ": transcription must be non-empty");
    if (cps.size() != line.char_widths.size())
        throw ParseError(where + ": char_widths length must match transcription length");
    for (double w : line.char_widths)
        if (!(w > 0.0)) throw ParseError(where + ": width must be positive");
    if (line.polygon.upper.size() != line.polygon.lower.size())
        throw ParseError(where + ": polygon chains must have equal point counts");
    if (line.polygon.upper.size() < 2)
        throw ParseError(where + ": polygon needs at least 2 point pairs");
}

namespace detail {

// Band polygon walked segment by segment, one vertex per character
// boundary; upper arc length equals the sum of widths exactly.
inline BoundaryPolygon make_band(const std::vector<double>& widths, double x0, double y0,
                                 double bend_total, double height) {
    const int n = static_cast<int>(widths.size());
    BoundaryPolygon poly;
    Point p{x0, y0};
    double theta = -bend_total / 2.0;
    const double dtheta = n > 1 ? bend_total / n : 0.0;
    poly.upper.push_back(p);
    for (int i = 0; i < n; ++i) {
        p.x += widths[static_cast<std::size_t>(i)] * std::cos(theta);
        p.y += widths[static_cast<std::size_t>(i)] * std::sin(theta);
        poly.upper.push_back(p);
        theta += dtheta;
    }
    // lower chain: offset along the local normal of the upper chain
    const std::size_t k = poly.upper.size();
    poly.lower.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        Point a = poly.upper[i > 0 ? i - 1 : 0];
        Point b = poly.upper[i + 1 < k ? i + 1 : k - 1];
        const double len = std::max(dist(a, b), 1e-12);
        const double nx = (b.y - a.y) / len;
        const double ny = -(b.x - a.x) / len;
        poly.lower[i] = {poly.upper[i].x - nx * height, poly.upper[i].y - ny * height};
    }
    return poly;
}

inline std::string random_word(SplitMix64& rng, const std::vector<char32_t>& alpha,
                               int len_min, int len_max) {
    const int len = static_cast<int>(rng.next_int(len_min, len_max));
    std::vector<char32_t> cps(static_cast<std::size_t>(len));
    for (auto& c : cps)
        c = alpha[static_cast<std::size_t>(rng.next_int(0, static_cast<std::int64_t>(alpha.size()) - 1))];
    return utf8_encode(cps);
}

// Deletes 1-2 interior runs from a sampled substring; returns empty on
// failure to produce a genuine non-contiguous subsequence.
inline std::string sample_ncpp(SplitMix64& rng, const std::vector<char32_t>& word) {
    const int n = static_cast<int>(word.size());
    if (n < 4) return {};
    const int sub_len = static_cast<int>(rng.next_int(4, n));
    const int start = static_cast<int>(rng.next_int(0, n - sub_len));
    std::vector<char32_t> sub(word.begin() + start, word.begin() + start + sub_len);

    const int n_runs = static_cast<int>(rng.next_int(1, 2));
    std::vector<bool> keep(sub.size(), true);
    for (int r = 0; r < n_runs; ++r) {
        // interior positions only: the first and last characters stay
        const int max_run = std::max(1, (sub_len - 2) / 2);
        const int run_len = static_cast<int>(rng.next_int(1, max_run));
        if (run_len > sub_len - 2) continue;
        const int pos = static_cast<int>(rng.next_int(1, sub_len - 1 - run_len));
        for (int k = 0; k < run_len; ++k) keep[static_cast<std::size_t>(pos + k)] = false;
    }
    std::vector<char32_t> out;
    for (std::size_t i = 0; i < sub.size(); ++i)
        if (keep[i]) out.push_back(sub[i]);
    if (out.size() < 2) return {};
    if (is_substring(out, word)) return {};
    return utf8_encode(out);
}

} // namespace detail

inline std::pair<std::vector<Scene>, QuerySet> generate_corpus(const CorpusConfig& cfg) {
    if (cfg.alphabet.empty()) throw ConfigError("alphabet must be non-empty");
    if (cfg.word_len_min < 2)
        throw ConfigError("word_length min must be >= 2 (a 1-char query has no proper partial patch)");
    if (cfg.n_scenes < 1) throw ConfigError("n_scenes must be >= 1");
    if (cfg.lines_min < 1 || cfg.lines_max < cfg.lines_min)
        throw ConfigError("invalid lines_per_scene range");
    if (cfg.word_len_max < cfg.word_len_min) throw ConfigError("invalid word_length range");
    if (!(cfg.width_jitter >= 0.0 && cfg.width_jitter < 1.0))
        throw ConfigError("width_jitter must be in [0,1)");

    const auto alpha = utf8_decode(cfg.alphabet);
    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(cfg.n_scenes));
    for (int si = 0; si < cfg.n_scenes; ++si) {
        SplitMix64 rng = SplitMix64::stream(cfg.seed, static_cast<std::uint64_t>(si));
        Scene scene;
        {
            std::ostringstream id;
            id << "s";
            id.width(5);
            id.fill('0');
            id << si;
            scene.scene_id = id.str();
        }
        const int n_lines = static_cast<int>(rng.next_int(cfg.lines_min, cfg.lines_max));
        for (int li = 0; li < n_lines; ++li) {
            TextLine line;
            line.transcription = detail::random_word(rng, alpha, cfg.word_len_min, cfg.word_len_max);
            const std::size_t n = utf8_decode(line.transcription).size();
            line.char_widths.resize(n);
            for (auto& w : line.char_widths)
                w = 1.0 * (1.0 + rng.uniform(-cfg.width_jitter, cfg.width_jitter));
            const double bend = rng.uniform(-0.04, 0.04) * static_cast<double>(n);
            line.polygon = detail::make_band(line.char_widths, 0.0, 2.0 * li, bend, 1.0);
            scene.lines.push_back(std::move(line));
        }
        scenes.push_back(std::move(scene));
    }

    // Query sampling happens on a separate stream so scene content is
    // unaffected by it.
    SplitMix64 qrng = SplitMix64::stream(cfg.seed, 0x71757279ULL);
    QuerySet queries;

    std::vector<std::pair<std::size_t, std::size_t>> all_lines; // (scene idx, line idx)
    for (std::size_t s = 0; s < scenes.size(); ++s)
        for (std::size_t l = 0; l < scenes[s].lines.size(); ++l) all_lines.emplace_back(s, l);

    auto pick_line = [&]() -> const TextLine& {
        const auto& ref = all_lines[static_cast<std::size_t>(
            qrng.next_int(0, static_cast<std::int64_t>(all_lines.size()) - 1))];
        return scenes[ref.first].lines[ref.second];
    };

    const int want = std::min<int>(30, cfg.n_scenes);
    std::set<std::string> seen;

    // TIR: whole transcriptions
    for (int tries = 0; static_cast<int>(queries.tir_queries.size()) < want && tries < want * 20; ++tries) {
        const std::string& t = pick_line().transcription;
        if (seen.insert("T" + t).second) queries.tir_queries.push_back(t);
    }
    // CPP: proper contiguous substrings of length >= 2
    for (int tries = 0; static_cast<int>(queries.ppr_cpp_queries.size()) < want && tries < want * 40; ++tries) {
        const auto cps = utf8_decode(pick_line().transcription);
        const int n = static_cast<int>(cps.size());
        if (n < 3) continue;
        const int len = static_cast<int>(qrng.next_int(2, n - 1));
        const int start = static_cast<int>(qrng.next_int(0, n - len));
        const std::string q =
            utf8_encode(std::vector<char32_t>(cps.begin() + start, cps.begin() + start + len));
        if (seen.insert("C" + q).second) queries.ppr_cpp_queries.push_back(q);
    }
    // NCPP: gap-containing subsequences
    for (int tries = 0; static_cast<int>(queries.ppr_ncpp_queries.size()) < want && tries < want * 60; ++tries) {
        const auto cps = utf8_decode(pick_line().transcription);
        const std::string q = detail::sample_ncpp(qrng, cps);
        if (q.empty()) continue;
        if (seen.insert("N" + q).second) queries.ppr_ncpp_queries.push_back(q);
    }

    // Relevance, computed exhaustively: containment for TIR/CPP, order
    // preserving subsequence for NCPP. A scene counts as relevant if ANY
    // of its lines matches.
    auto fill_relevance = [&](const std::vector<std::string>& qs, bool subsequence) {
        for (const auto& q : qs) {
            const auto qcps = utf8_decode(q);
            auto& rel = queries.relevance[q];
            for (const auto& scene : scenes) {
                for (const auto& line : scene.lines) {
                    const auto tcps = utf8_decode(line.transcription);
                    const bool hit =
                        subsequence ? is_subsequence(qcps, tcps) : is_substring(qcps, tcps);
                    if (hit) {
                        rel.insert(scene.scene_id);
                        break;
                    }
                }
            }
        }
    };
    fill_relevance(queries.tir_queries, false);
    fill_relevance(queries.ppr_cpp_queries, false);
    fill_relevance(queries.ppr_ncpp_queries, true);

    return {std::move(scenes), std::move(queries)};
}

// ---------------------------------------------------------------------
// Serialization. Corpus file: one JSON record per line (one scene per
// line, UTF-8). Query file: a single JSON object.

inline std::string queries_path(const std::string& corpus_path) {
    const auto dot = corpus_path.find_last_of('.');
    const auto slash = corpus_path.find_last_of('/');
    const std::string stem =
        (dot != std::string::npos && (slash == std::string::npos || dot > slash))
            ? corpus_path.substr(0, dot)
            : corpus_path;
    return stem + ".queries.json";
}

namespace detail {

inline nlohmann::json chain_to_json(const std::vector<Point>& chain) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : chain) arr.push_back({p.x, p.y});
    return arr;
}

inline std::vector<Point> chain_from_json(const nlohmann::json& arr) {
    std::vector<Point> chain;
    for (const auto& p : arr) chain.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return chain;
}

} // namespace detail

inline nlohmann::json scene_to_json(const Scene& scene) {
    nlohmann::json j;
    j["scene_id"] = scene.scene_id;
    j["lines"] = nlohmann::json::array();
    for (const auto& line : scene.lines) {
        nlohmann::json jl;
        jl["transcription"] = line.transcription;
        jl["char_widths"] = line.char_widths;
        jl["polygon"] = {{"upper", detail::chain_to_json(line.polygon.upper)},
                         {"lower", detail::chain_to_json(line.polygon.lower)}};
        j["lines"].push_back(std::move(jl));
    }
    return j;
}

inline void save_corpus(const std::vector<Scene>& scenes, const QuerySet& queries,
                        const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError("cannot open for writing: " + path);
    for (const auto& scene : scenes) out << scene_to_json(scene).dump() << "\n";
    out.close();
    if (!out) throw ArgumentError("write failed: " + path);

    nlohmann::json jq;
    jq["tir"] = queries.tir_queries;
    jq["ppr_cpp"] = queries.ppr_cpp_queries;
    jq["ppr_ncpp"] = queries.ppr_ncpp_queries;
    nlohmann::json rel = nlohmann::json::object();
    for (const auto& [q, ids] : queries.relevance)
        rel[q] = std::vector<std::string>(ids.begin(), ids.end());
    jq["relevance"] = std::move(rel);
    std::ofstream qout(queries_path(path), std::ios::binary);
    if (!qout) throw ArgumentError("cannot open for writing: " + queries_path(path));
    qout << jq.dump(2) << "\n";
}

inline std::pair<std::vector<Scene>, QuerySet> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open corpus file: " + path);
    std::vector<Scene> scenes;
    std::set<std::string> ids;
    std::string text;
    int line_no = 0;
    while (std::getline(in, text)) {
        ++line_no;
        if (text.empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": malformed scene record: " + e.what());
        }
        Scene scene;
        try {
            scene.scene_id = j.at("scene_id").get<std::string>();
            for (const auto& jl : j.at("lines")) {
                TextLine line;
                line.transcription = jl.at("transcription").get<std::string>();
                line.char_widths = jl.at("char_widths").get<std::vector<double>>();
                line.polygon.upper = detail::chain_from_json(jl.at("polygon").at("upper"));
                line.polygon.lower = detail::chain_from_json(jl.at("polygon").at("lower"));
                validate_text_line(line, where + ", field lines");
                scene.lines.push_back(std::move(line));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (scene.lines.empty()) throw ParseError(where + ": scene has no lines");
        if (!ids.insert(scene.scene_id).second)
            throw ParseError(where + ": duplicate scene_id " + scene.scene_id);
        scenes.push_back(std::move(scene));
    }

    QuerySet queries;
    std::ifstream qin(queries_path(path), std::ios::binary);
    if (!qin) throw LoadError("cannot open query file: " + queries_path(path));
    nlohmann::json jq;
    try {
        qin >> jq;
        queries.tir_queries = jq.at("tir").get<std::vector<std::string>>();
        queries.ppr_cpp_queries = jq.at("ppr_cpp").get<std::vector<std::string>>();
        queries.ppr_ncpp_queries = jq.at("ppr_ncpp").get<std::vector<std::string>>();
        for (const auto& [q, ids_json] : jq.at("relevance").items()) {
            auto& rel = queries.relevance[q];
            for (const auto& id : ids_json) rel.insert(id.get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("query file: ") + e.what());
    }
    return {std::move(scenes), std::move(queries)};
}

inline bool corpora_equal(const std::vector<Scene>& a, const std::vector<Scene>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].scene_id != b[i].scene_id || a[i].lines.size() != b[i].lines.size()) return false;
        for (std::size_t l = 0; l < a[i].lines.size(); ++l) {
            const auto& la = a[i].lines[l];
            const auto& lb = b[i].lines[l];
            if (la.transcription != lb.transcription || la.char_widths != lb.char_widths)
                return false;
            if (la.polygon.upper.size() != lb.polygon.upper.size()) return false;
            for (std::size_t k = 0; k < la.polygon.upper.size(); ++k) {
                if (la.polygon.upper[k].x != lb.polygon.upper[k].x ||
                    la.polygon.upper[k].y != lb.polygon.upper[k].y ||
                    la.polygon.lower[k].x != lb.polygon.lower[k].x ||
                    la.polygon.lower[k].y != lb.polygon.lower[k].y)
                    return false;
            }
        }
    }
    return true;
}

} // namespace pstr
