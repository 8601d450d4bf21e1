#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pstr/common.hpp"
#include "pstr/corpus.hpp"
#include "pstr/matrix.hpp"
#include "pstr/rng.hpp"
#include "pstr/utf8.hpp"

namespace pstr {

// T x C sequence feature; the unit of all similarity computation.
using SequenceFeature = Matrix;

struct ModelConfig {
    int T = 15;
    int C = 128;
    std::string alphabet = "abcdefghijklmnopqrstuvwxyz";
    double margin = 0.2;
    double noise_sigma = 0.1;
};

// Bidirectional single-layer tanh recurrence, one set per direction:
// h_t = tanh(W x_t + U h_{t-1} + b), direction outputs summed.
struct MixParams {
    Matrix w_fwd, u_fwd, b_fwd; // CxC, CxC, 1xC
    Matrix w_bwd, u_bwd, b_bwd;
};

// Query-side and scene-side encoders share no parameters.
struct ModelParams {
    ModelConfig config;
    Matrix query_embed; // (|alphabet|+1) x C, row 0 = UNK
    Matrix scene_embed;
    MixParams query_mix;
    MixParams scene_mix;

    std::vector<std::pair<std::string, Matrix*>> tensors() {
        return {{"query_embed", &query_embed},
                {"scene_embed", &scene_embed},
                {"query_mix.w_fwd", &query_mix.w_fwd},
                {"query_mix.u_fwd", &query_mix.u_fwd},
                {"query_mix.b_fwd", &query_mix.b_fwd},
                {"query_mix.w_bwd", &query_mix.w_bwd},
                {"query_mix.u_bwd", &query_mix.u_bwd},
                {"query_mix.b_bwd", &query_mix.b_bwd},
                {"scene_mix.w_fwd", &scene_mix.w_fwd},
                {"scene_mix.u_fwd", &scene_mix.u_fwd},
                {"scene_mix.b_fwd", &scene_mix.b_fwd},
                {"scene_mix.w_bwd", &scene_mix.w_bwd},
                {"scene_mix.u_bwd", &scene_mix.u_bwd},
                {"scene_mix.b_bwd", &scene_mix.b_bwd}};
    }
    std::vector<std::pair<std::string, const Matrix*>> tensors() const {
        auto named = const_cast<ModelParams*>(this)->tensors();
        std::vector<std::pair<std::string, const Matrix*>> out;
        out.reserve(named.size());
        for (auto& [n, m] : named) out.emplace_back(n, m);
        return out;
    }

    std::map<char32_t, int> char_index() const {
        std::map<char32_t, int> idx;
        int row = 1; // row 0 is UNK
        for (char32_t c : utf8_decode(config.alphabet))
            if (idx.emplace(c, row).second) ++row;
        return idx;
    }
};

inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.T < 2 || cfg.C < 1) throw ConfigError("model config: need T >= 2, C >= 1");
    if (cfg.alphabet.empty()) throw ConfigError("model config: alphabet must be non-empty");
    ModelParams p;
    p.config = cfg;
    const int v = static_cast<int>(utf8_decode(cfg.alphabet).size()) + 1;
    p.query_embed = Matrix(v, cfg.C);
    p.scene_embed = Matrix(v, cfg.C);
    for (MixParams* mix : {&p.query_mix, &p.scene_mix}) {
        mix->w_fwd = Matrix(cfg.C, cfg.C);
        mix->u_fwd = Matrix(cfg.C, cfg.C);
        mix->b_fwd = Matrix(1, cfg.C);
        mix->w_bwd = Matrix(cfg.C, cfg.C);
        mix->u_bwd = Matrix(cfg.C, cfg.C);
        mix->b_bwd = Matrix(1, cfg.C);
    }
    const double scale = 0.5 / std::sqrt(static_cast<double>(cfg.C));
    std::uint64_t stream = 0;
    for (auto& [name, tensor] : p.tensors()) {
        SplitMix64 rng = SplitMix64::stream(seed, stream++);
        for (double& x : tensor->v) x = rng.uniform(-scale, scale);
    }
    return p;
}

// ---------------------------------------------------------------------
// Forward passes. Traces keep every intermediate needed by the backward
// pass in the learning module.

inline Matrix embed_chars(const std::vector<char32_t>& word, const Matrix& table,
                          const std::map<char32_t, int>& index, std::vector<int>* rows_out = nullptr) {
    if (word.empty()) throw ArgumentError("embed_chars: word must be non-empty");
    Matrix x(static_cast<int>(word.size()), table.cols);
    for (int i = 0; i < x.rows; ++i) {
        auto it = index.find(word[static_cast<std::size_t>(i)]);
        const int row = it == index.end() ? 0 : it->second;
        if (rows_out) rows_out->push_back(row);
        std::memcpy(x.row(i), table.row(row), sizeof(double) * static_cast<std::size_t>(table.cols));
    }
    return x;
}

// Linear interpolation along the length axis, endpoints aligned. Row t
// of the output samples position t*(L-1)/(T-1); a single input row is
// replicated.
inline Matrix interpolate_to_T(const Matrix& m, int t_out) {
    if (m.rows < 1) throw ArgumentError("interpolate_to_T: need at least one row");
    Matrix out(t_out, m.cols);
    for (int t = 0; t < t_out; ++t) {
        if (m.rows == 1) {
            std::memcpy(out.row(t), m.row(0), sizeof(double) * static_cast<std::size_t>(m.cols));
            continue;
        }
        const double pos = t_out == 1 ? 0.0
                                      : static_cast<double>(t) * (m.rows - 1) / (t_out - 1);
        int i0 = static_cast<int>(std::floor(pos));
        if (i0 >= m.rows - 1) i0 = m.rows - 2;
        const double w = pos - i0;
        const double* a = m.row(i0);
        const double* b = m.row(i0 + 1);
        double* o = out.row(t);
        for (int c = 0; c < m.cols; ++c) o[c] = (1.0 - w) * a[c] + w * b[c];
    }
    return out;
}

struct EncodeTrace {
    std::vector<char32_t> chars;
    bool scene_side = false;
    std::vector<int> embed_rows; // one table row index per character
    Matrix x_embed;              // L x C
    Matrix x_interp;             // T x C
    Matrix h_fwd, h_bwd;         // T x C per-direction activations
    SequenceFeature feature;     // T x C output (sum + optional noise)
};

namespace detail {

inline void run_direction(const Matrix& x, const Matrix& w, const Matrix& u, const Matrix& b,
                          bool reverse, Matrix& h_out) {
    const int t_len = x.rows;
    const int c = x.cols;
    h_out = Matrix(t_len, c);
    std::vector<double> pre(static_cast<std::size_t>(c));
    const double* h_prev = nullptr;
    for (int step = 0; step < t_len; ++step) {
        const int t = reverse ? t_len - 1 - step : step;
        matvec(w, x.row(t), pre.data());
        if (h_prev) {
            std::vector<double> rec(static_cast<std::size_t>(c));
            matvec(u, h_prev, rec.data());
            for (int k = 0; k < c; ++k) pre[static_cast<std::size_t>(k)] += rec[static_cast<std::size_t>(k)];
        }
        double* h = h_out.row(t);
        for (int k = 0; k < c; ++k) h[k] = std::tanh(pre[static_cast<std::size_t>(k)] + b(0, k));
        h_prev = h;
    }
}

} // namespace detail

inline EncodeTrace encode_chars_trace(const std::vector<char32_t>& word, const Matrix& table,
                                      const MixParams& mix, const std::map<char32_t, int>& index,
                                      int t_out) {
    EncodeTrace tr;
    tr.chars = word;
    tr.x_embed = embed_chars(word, table, index, &tr.embed_rows);
    tr.x_interp = interpolate_to_T(tr.x_embed, t_out);
    detail::run_direction(tr.x_interp, mix.w_fwd, mix.u_fwd, mix.b_fwd, false, tr.h_fwd);
    detail::run_direction(tr.x_interp, mix.w_bwd, mix.u_bwd, mix.b_bwd, true, tr.h_bwd);
    tr.feature = Matrix(t_out, table.cols);
    for (std::size_t i = 0; i < tr.feature.v.size(); ++i)
        tr.feature.v[i] = tr.h_fwd.v[i] + tr.h_bwd.v[i];
    return tr;
}

inline EncodeTrace encode_query_trace(const std::string& word, const ModelParams& params) {
    if (word.empty()) throw ArgumentError("encode_query: word must be non-empty");
    return encode_chars_trace(utf8_decode(word), params.query_embed, params.query_mix,
                              params.char_index(), params.config.T);
}

inline SequenceFeature encode_query(const std::string& word, const ModelParams& params) {
    return encode_query_trace(word, params).feature;
}

// Characters whose width-weighted centers fall inside the span; an empty
// span resolves to the character whose cell contains the span midpoint.
inline std::vector<char32_t> covered_chars(const TextLine& line, double start_frac, double end_frac) {
    const auto cps = utf8_decode(line.transcription);
    if (cps.size() != line.char_widths.size())
        throw ArgumentError("covered_chars: char_widths length mismatch");
    double total = 0.0;
    for (double w : line.char_widths) total += w;
    const double s = start_frac * total;
    const double e = end_frac * total;
    std::vector<char32_t> out;
    double prefix = 0.0;
    for (std::size_t i = 0; i < cps.size(); ++i) {
        const double center = prefix + line.char_widths[i] / 2.0;
        if (center >= s && center <= e) out.push_back(cps[i]);
        prefix += line.char_widths[i];
    }
    if (out.empty()) {
        const double mid = (s + e) / 2.0;
        prefix = 0.0;
        for (std::size_t i = 0; i < cps.size(); ++i) {
            const double next = prefix + line.char_widths[i];
            if (mid < next || i + 1 == cps.size()) {
                out.push_back(cps[i]);
                break;
            }
            prefix = next;
        }
    }
    return out;
}

inline EncodeTrace encode_scene_span_trace(const TextLine& line, double start_frac, double end_frac,
                                           const ModelParams& params, std::uint64_t seed) {
    if (!(start_frac >= 0.0 && start_frac < end_frac && end_frac <= 1.0))
        throw ArgumentError("encode_scene_span: need 0 <= start_frac < end_frac <= 1");
    const auto chars = covered_chars(line, start_frac, end_frac);
    EncodeTrace tr = encode_chars_trace(chars, params.scene_embed, params.scene_mix,
                                        params.char_index(), params.config.T);
    tr.scene_side = true;
    if (params.config.noise_sigma > 0.0) {
        // deterministic per (seed, covered content); additive, so it does
        // not interact with parameter gradients
        SplitMix64 rng = SplitMix64::stream(seed, fnv1a(utf8_encode(chars)));
        for (double& x : tr.feature.v) x += params.config.noise_sigma * rng.gaussian();
    }
    return tr;
}

inline SequenceFeature encode_scene_span(const TextLine& line, double start_frac, double end_frac,
                                         const ModelParams& params, std::uint64_t seed) {
    return encode_scene_span_trace(line, start_frac, end_frac, params, seed).feature;
}

// ---------------------------------------------------------------------
// Checkpoints: versioned header + named little-endian float64 tensors.

inline constexpr const char* kCheckpointMagic = "PSTRCKPT1\n";

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError("cannot open for writing: " + path);
    out.write(kCheckpointMagic, static_cast<std::streamsize>(std::strlen(kCheckpointMagic)));
    nlohmann::json cfg = {{"T", params.config.T},
                          {"C", params.config.C},
                          {"alphabet", params.config.alphabet},
                          {"margin", params.config.margin},
                          {"noise_sigma", params.config.noise_sigma}};
    const std::string header = cfg.dump();
    const std::uint32_t hlen = static_cast<std::uint32_t>(header.size());
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    const auto named = params.tensors();
    const std::uint32_t n = static_cast<std::uint32_t>(named.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    for (const auto& [name, tensor] : named) {
        const std::uint32_t nlen = static_cast<std::uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&nlen), 4);
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        const std::uint32_t r = static_cast<std::uint32_t>(tensor->rows);
        const std::uint32_t c = static_cast<std::uint32_t>(tensor->cols);
        out.write(reinterpret_cast<const char*>(&r), 4);
        out.write(reinterpret_cast<const char*>(&c), 4);
        out.write(reinterpret_cast<const char*>(tensor->v.data()),
                  static_cast<std::streamsize>(tensor->v.size() * sizeof(double)));
    }
    if (!out) throw ArgumentError("write failed: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint: " + path);
    std::string magic(std::strlen(kCheckpointMagic), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (!in || magic != kCheckpointMagic)
        throw LoadError("checkpoint version tag mismatch in " + path);
    std::uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 4);
    std::string header(hlen, '\0');
    in.read(header.data(), hlen);
    if (!in) throw LoadError("truncated checkpoint header in " + path);
    ModelConfig cfg;
    try {
        const nlohmann::json j = nlohmann::json::parse(header);
        cfg.T = j.at("T").get<int>();
        cfg.C = j.at("C").get<int>();
        cfg.alphabet = j.at("alphabet").get<std::string>();
        cfg.margin = j.at("margin").get<double>();
        cfg.noise_sigma = j.at("noise_sigma").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("bad checkpoint config: ") + e.what());
    }
    ModelParams params = init_params(cfg, 0);
    std::uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    auto named = params.tensors();
    if (n != named.size()) throw LoadError("checkpoint tensor count mismatch");
    for (auto& [expected_name, tensor] : named) {
        std::uint32_t nlen = 0;
        in.read(reinterpret_cast<char*>(&nlen), 4);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        std::uint32_t r = 0, c = 0;
        in.read(reinterpret_cast<char*>(&r), 4);
        in.read(reinterpret_cast<char*>(&c), 4);
        if (!in || name != expected_name)
            throw LoadError("unexpected tensor '" + name + "', wanted '" + expected_name + "'");
        if (static_cast<int>(r) != tensor->rows || static_cast<int>(c) != tensor->cols)
            throw LoadError("tensor " + name + " shape mismatch with declared config");
        in.read(reinterpret_cast<char*>(tensor->v.data()),
                static_cast<std::streamsize>(tensor->v.size() * sizeof(double)));
        if (!in) throw LoadError("truncated tensor data for " + name);
    }
    return params;
}

} // namespace pstr
