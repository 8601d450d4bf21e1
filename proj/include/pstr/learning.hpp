#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "pstr/common.hpp"
#include "pstr/corpus.hpp"
#include "pstr/encoder.hpp"
#include "pstr/featsim.hpp"
#include "pstr/mil.hpp"
#include "pstr/rng.hpp"
#include "pstr/textsim.hpp"

namespace pstr {

// Deterministic noise stream id for a line's scene-side feature; shared
// between training and retrieval so both see the same features.
inline std::uint64_t line_noise_seed(const std::string& scene_id, std::size_t line_idx) {
    return fnv1a(scene_id) + 0x9e3779b97f4a7c15ULL * (line_idx + 1);
}

struct TrainLossConfig {
    Strategy strategy = Strategy::cmsl_a;
    double margin = 0.2;
    int n_min = 2;
    int n_max = 0; // 0 means |transcription|
};

struct BatchLine {
    const TextLine* line = nullptr;
    std::string scene_id;
    std::uint64_t noise_seed = 0;
};

struct LossBreakdown {
    double l_sim_qp = 0.0;
    double l_sim_pp = 0.0;
    double l_sim_qq = 0.0;
    double l_mil = 0.0;
    double l_cms() const { return l_sim_qp + l_sim_pp + l_sim_qq; }
    double total() const { return l_cms() + l_mil; }
};

struct GradResult {
    LossBreakdown loss;
    ModelParams grads; // same shapes as the params, tensors hold dL/dp
    // active-branch fingerprint (argmax picks, hinge/indicator states);
    // identical fingerprints at perturbed points mean no kink crossed
    std::vector<long long> branch_signature;
    long mil_pairs = 0;
    long mil_filtered = 0; // rankmil samples dropped by the noise filter
};

namespace detail {

struct FeatureNode {
    EncodeTrace trace;
    TanhFlat flat;
    Matrix grad; // dL/dFeature, accumulated
    std::string text;

    explicit FeatureNode(EncodeTrace tr, std::string txt)
        : trace(std::move(tr)), flat(trace.feature),
          grad(trace.feature.rows, trace.feature.cols), text(std::move(txt)) {}
};

inline double node_sim(const FeatureNode& a, const FeatureNode& b) {
    return cosine(a.flat, b.flat);
}

// dL/d(cos) = g; pushes through the cosine and the elementwise tanh of
// both operands.
inline void accumulate_sim_grad(FeatureNode& a, FeatureNode& b, double s, double g) {
    if (a.flat.degenerate() || b.flat.degenerate()) return;
    const double inv_ab = 1.0 / (a.flat.norm * b.flat.norm);
    const double inv_aa = 1.0 / (a.flat.norm * a.flat.norm);
    const double inv_bb = 1.0 / (b.flat.norm * b.flat.norm);
    for (std::size_t k = 0; k < a.flat.u.size(); ++k) {
        const double ua = a.flat.u[k];
        const double ub = b.flat.u[k];
        a.grad.v[k] += g * (ub * inv_ab - s * ua * inv_aa) * (1.0 - ua * ua);
        b.grad.v[k] += g * (ua * inv_ab - s * ub * inv_bb) * (1.0 - ub * ub);
    }
}

inline Matrix interp_backward(const Matrix& d_out, int in_rows) {
    Matrix dx(in_rows, d_out.cols);
    for (int t = 0; t < d_out.rows; ++t) {
        if (in_rows == 1) {
            for (int c = 0; c < d_out.cols; ++c) dx(0, c) += d_out(t, c);
            continue;
        }
        const double pos = d_out.rows == 1 ? 0.0
                                           : static_cast<double>(t) * (in_rows - 1) / (d_out.rows - 1);
        int i0 = static_cast<int>(std::floor(pos));
        if (i0 >= in_rows - 1) i0 = in_rows - 2;
        const double w = pos - i0;
        for (int c = 0; c < d_out.cols; ++c) {
            dx(i0, c) += (1.0 - w) * d_out(t, c);
            dx(i0 + 1, c) += w * d_out(t, c);
        }
    }
    return dx;
}

// BPTT for one direction. h rows are the stored activations; dh flows
// backward along the recurrence (forward direction: from t to t-1).
inline void direction_backward(const Matrix& x, const Matrix& h, const Matrix& d_out,
                               const Matrix& u_param, const Matrix& w_param, bool reverse,
                               Matrix& dw, Matrix& du, Matrix& db, Matrix& dx) {
    const int t_len = x.rows;
    const int c = x.cols;
    std::vector<double> carry(static_cast<std::size_t>(c), 0.0);
    std::vector<double> dpre(static_cast<std::size_t>(c));
    for (int step = 0; step < t_len; ++step) {
        // last computed state first
        const int t = reverse ? step : t_len - 1 - step;
        const double* ht = h.row(t);
        for (int k = 0; k < c; ++k) {
            const double dh = d_out(t, k) + carry[static_cast<std::size_t>(k)];
            dpre[static_cast<std::size_t>(k)] = dh * (1.0 - ht[k] * ht[k]);
        }
        outer_add(dw, dpre.data(), x.row(t));
        const int t_prev = reverse ? t + 1 : t - 1;
        const bool has_prev = reverse ? (t_prev < t_len) : (t_prev >= 0);
        if (has_prev) outer_add(du, dpre.data(), h.row(t_prev));
        for (int k = 0; k < c; ++k) db(0, k) += dpre[static_cast<std::size_t>(k)];
        matvec_transpose_add(w_param, dpre.data(), dx.row(t));
        std::fill(carry.begin(), carry.end(), 0.0);
        if (has_prev) matvec_transpose_add(u_param, dpre.data(), carry.data());
    }
}

inline void backward_node(const FeatureNode& node, const ModelParams& params, ModelParams& grads) {
    if (node.grad.max_abs() == 0.0) return;
    const EncodeTrace& tr = node.trace;
    const MixParams& mix = tr.scene_side ? params.scene_mix : params.query_mix;
    MixParams& dmix = tr.scene_side ? grads.scene_mix : grads.query_mix;
    Matrix& dtable = tr.scene_side ? grads.scene_embed : grads.query_embed;

    // additive noise: dF passes straight to the direction sums
    Matrix dxi(tr.x_interp.rows, tr.x_interp.cols);
    direction_backward(tr.x_interp, tr.h_fwd, node.grad, mix.u_fwd, mix.w_fwd, false,
                       dmix.w_fwd, dmix.u_fwd, dmix.b_fwd, dxi);
    direction_backward(tr.x_interp, tr.h_bwd, node.grad, mix.u_bwd, mix.w_bwd, true,
                       dmix.w_bwd, dmix.u_bwd, dmix.b_bwd, dxi);
    const Matrix dx = interp_backward(dxi, tr.x_embed.rows);
    for (int i = 0; i < dx.rows; ++i) {
        double* trow = dtable.row(node.trace.embed_rows[static_cast<std::size_t>(i)]);
        const double* g = dx.row(i);
        for (int c = 0; c < dx.cols; ++c) trow[c] += g[c];
    }
}

// Hard-mined similarity loss: per query, the worst |sim_f - sim_t|
// mismatch over the other list. Returns the summed loss and routes
// subgradients through the selected pair.
inline double l_sim_nodes(std::vector<FeatureNode>& queries, std::vector<FeatureNode>& lines,
                          std::vector<long long>& signature) {
    double total = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        double worst = -1.0;
        std::size_t worst_j = 0;
        double worst_e = 0.0;
        double worst_s = 0.0;
        for (std::size_t j = 0; j < lines.size(); ++j) {
            const double s = node_sim(queries[i], lines[j]);
            const double e = s - sim_t(queries[i].text, lines[j].text);
            if (std::abs(e) > worst) {
                worst = std::abs(e);
                worst_j = j;
                worst_e = e;
                worst_s = s;
            }
        }
        total += worst;
        const int sgn = worst_e > 0.0 ? 1 : (worst_e < 0.0 ? -1 : 0);
        signature.push_back(static_cast<long long>(worst_j) * 4 + (sgn + 1));
        if (sgn != 0) accumulate_sim_grad(queries[i], lines[worst_j], worst_s, sgn);
    }
    return total;
}

} // namespace detail

// Standalone loss values matching the training objective, for oracle
// tests. Features are paired with their translations.
inline double l_sim(const std::vector<std::pair<std::string, SequenceFeature>>& queries,
                    const std::vector<std::pair<std::string, SequenceFeature>>& lines) {
    if (queries.empty() || lines.empty()) throw ArgumentError("l_sim: empty input");
    double total = 0.0;
    for (const auto& [qt, qf] : queries) {
        double worst = -1.0;
        for (const auto& [lt, lf] : lines)
            worst = std::max(worst, std::abs(sim_f(qf, lf) - sim_t(qt, lt)));
        total += worst;
    }
    return total;
}

inline double l_cms(const std::vector<std::pair<std::string, SequenceFeature>>& queries,
                    const std::vector<std::pair<std::string, SequenceFeature>>& lines) {
    return l_sim(queries, lines) + l_sim(lines, lines) + l_sim(queries, queries);
}

// Forward + reverse accumulation over one batch. Returns analytic
// gradients of L = L_cms + L_mil for every parameter tensor.
inline GradResult grad_total(const ModelParams& params, const std::vector<BatchLine>& batch,
                             const TrainLossConfig& cfg) {
    if (batch.empty()) throw ArgumentError("grad_total: empty batch");
    const auto index = params.char_index();
    const bool wants_bags = cfg.strategy != Strategy::cmsl_a;
    const bool mil_like = cfg.strategy == Strategy::mil || cfg.strategy == Strategy::rankmil;

    std::vector<Bag> bags;
    if (wants_bags) {
        bags.reserve(batch.size());
        for (const auto& bl : batch) {
            const int len = static_cast<int>(utf8_length(bl.line->transcription));
            const int n_max = cfg.n_max > 0 ? std::min(cfg.n_max, len) : len;
            bags.push_back(construct_bag(*bl.line, std::min(cfg.n_min, n_max), n_max));
        }
    }

    // query pool: line transcriptions, deduplicated in first-seen order
    std::vector<std::string> pool;
    std::set<std::string> seen;
    auto add_query = [&](const std::string& s) {
        if (seen.insert(s).second) pool.push_back(s);
    };
    for (const auto& bl : batch) add_query(bl.line->transcription);
    const std::size_t n_transcription_queries = pool.size();
    if (cfg.strategy == Strategy::cmsl_b || cfg.strategy == Strategy::cmsl_c)
        for (const auto& bag : bags)
            for (const auto& label : bag.pseudo_labels) add_query(label);

    std::vector<detail::FeatureNode> qnodes;
    qnodes.reserve(pool.size());
    for (const auto& q : pool)
        qnodes.emplace_back(encode_chars_trace(utf8_decode(q), params.query_embed,
                                               params.query_mix, index, params.config.T),
                            q);

    std::vector<detail::FeatureNode> pnodes;
    std::vector<std::size_t> line_node_idx(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        line_node_idx[i] = pnodes.size();
        pnodes.emplace_back(
            encode_scene_span_trace(*batch[i].line, 0.0, 1.0, params, batch[i].noise_seed),
            batch[i].line->transcription);
    }
    // cmsl-c: pseudo-labeled proposals join the line list
    if (cfg.strategy == Strategy::cmsl_c) {
        for (std::size_t i = 0; i < batch.size(); ++i)
            for (std::size_t k = 0; k < bags[i].proposals.size(); ++k)
                pnodes.emplace_back(
                    encode_scene_span_trace(*batch[i].line, bags[i].proposals[k].start_frac,
                                            bags[i].proposals[k].end_frac, params,
                                            batch[i].noise_seed),
                    bags[i].pseudo_labels[k]);
    }

    // proposal nodes per bag for the MIL losses
    std::vector<std::vector<detail::FeatureNode>> bag_nodes;
    if (mil_like) {
        bag_nodes.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            bag_nodes[i].reserve(bags[i].proposals.size());
            for (std::size_t k = 0; k < bags[i].proposals.size(); ++k)
                bag_nodes[i].emplace_back(
                    encode_scene_span_trace(*batch[i].line, bags[i].proposals[k].start_frac,
                                            bags[i].proposals[k].end_frac, params,
                                            batch[i].noise_seed),
                    bags[i].pseudo_labels[k]);
        }
    }

    GradResult res;
    res.grads = init_params(params.config, 0);
    for (auto& [name, tensor] : res.grads.tensors()) tensor->fill(0.0);

    res.loss.l_sim_qp = detail::l_sim_nodes(qnodes, pnodes, res.branch_signature);
    res.loss.l_sim_pp = detail::l_sim_nodes(pnodes, pnodes, res.branch_signature);
    res.loss.l_sim_qq = detail::l_sim_nodes(qnodes, qnodes, res.branch_signature);

    if (mil_like) {
        for (std::size_t i = 0; i < batch.size(); ++i) {
            if (bag_nodes[i].empty()) continue;
            auto& line_node = pnodes[line_node_idx[i]];
            for (std::size_t qi = 0; qi < n_transcription_queries; ++qi) {
                auto& qn = qnodes[qi];
                int theta = 0;
                double sim_theta = detail::node_sim(qn, bag_nodes[i][0]);
                for (std::size_t k = 1; k < bag_nodes[i].size(); ++k) {
                    const double s = detail::node_sim(qn, bag_nodes[i][k]);
                    if (s > sim_theta) {
                        sim_theta = s;
                        theta = static_cast<int>(k);
                    }
                }
                const bool contained = bag_contains(qn.text, bags[i]);
                ++res.mil_pairs;
                if (cfg.strategy == Strategy::mil) {
                    const auto t = mil_loss_from_sims(contained, theta, sim_theta);
                    res.loss.l_mil += t.loss;
                    const double target = contained ? 1.0 : 0.0;
                    const int sgn = sim_theta > target ? 1 : (sim_theta < target ? -1 : 0);
                    res.branch_signature.push_back(theta * 8 + (sgn + 1) * 2 + (contained ? 1 : 0));
                    if (sgn != 0)
                        detail::accumulate_sim_grad(qn, bag_nodes[i][static_cast<std::size_t>(theta)],
                                                    sim_theta, sgn);
                } else {
                    const double sim_line = detail::node_sim(qn, line_node);
                    const auto t = rankmil_loss_from_sims(contained, theta, sim_theta, sim_line,
                                                          cfg.margin);
                    res.loss.l_mil += t.loss;
                    if (contained && t.delta_s <= 0.0) ++res.mil_filtered;
                    res.branch_signature.push_back(theta * 8 + (t.active ? 4 : 0) +
                                                   (contained ? 1 : 0));
                    if (t.active) {
                        detail::accumulate_sim_grad(qn, bag_nodes[i][static_cast<std::size_t>(theta)],
                                                    sim_theta, -1.0);
                        detail::accumulate_sim_grad(qn, line_node, sim_line, 1.0);
                    }
                }
            }
        }
    }

    if (!std::isfinite(res.loss.total())) {
        std::string worst = batch.front().scene_id + "/" + batch.front().line->transcription;
        throw NumericalError("non-finite loss on batch containing " + worst);
    }

    for (auto& n : qnodes) detail::backward_node(n, params, res.grads);
    for (auto& n : pnodes) detail::backward_node(n, params, res.grads);
    for (auto& bn : bag_nodes)
        for (auto& n : bn) detail::backward_node(n, params, res.grads);
    return res;
}

// ---------------------------------------------------------------------
// Training loop.

struct TrainConfig {
    Strategy strategy = Strategy::rankmil;
    int epochs = 30;
    double learning_rate = 0.05;
    int batch = 4;
    std::uint64_t seed = 0;
    double margin = 0.2;
    int n_min = 2;
    int n_max = 0; // 0 = |transcription|
    ModelConfig model;
};

struct EpochStats {
    int epoch = 0;
    double l_cms = 0.0; // per-query means
    double l_mil = 0.0; // per-pair mean
    long mil_filtered = 0;
};

struct LossReport {
    std::vector<EpochStats> epochs;
    double final_param_norm = 0.0;
};

inline std::vector<BatchLine> collect_lines(const std::vector<Scene>& scenes) {
    std::vector<BatchLine> lines;
    for (const auto& scene : scenes)
        for (std::size_t li = 0; li < scene.lines.size(); ++li)
            lines.push_back({&scene.lines[li], scene.scene_id,
                             line_noise_seed(scene.scene_id, li)});
    return lines;
}

inline std::pair<ModelParams, LossReport> train(const std::vector<Scene>& scenes,
                                                const TrainConfig& cfg) {
    if (scenes.empty()) throw ArgumentError("train: empty corpus");
    if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");

    ModelParams params = init_params(cfg.model, cfg.seed);
    const std::vector<BatchLine> all_lines = collect_lines(scenes);
    TrainLossConfig loss_cfg{cfg.strategy, cfg.margin, cfg.n_min, cfg.n_max};

    LossReport report;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // deterministic shuffle, then one SGD step per minibatch
        std::vector<std::size_t> order(all_lines.size());
        std::iota(order.begin(), order.end(), 0);
        SplitMix64 rng = SplitMix64::stream(cfg.seed, 0xe70c000ULL + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<std::size_t>(rng.next_int(0, static_cast<std::int64_t>(i) - 1))]);
        const std::size_t bsz = std::min<std::size_t>(
            cfg.batch > 0 ? static_cast<std::size_t>(cfg.batch) : all_lines.size(), all_lines.size());

        EpochStats st;
        st.epoch = epoch;
        double cms_sum = 0.0, mil_sum = 0.0;
        std::size_t n_queries = 0, n_mil_pairs = 0;
        for (std::size_t off = 0; off < all_lines.size(); off += bsz) {
            const std::size_t take = std::min(bsz, all_lines.size() - off);
            std::vector<BatchLine> batch;
            batch.reserve(take);
            for (std::size_t i = 0; i < take; ++i) batch.push_back(all_lines[order[off + i]]);

            GradResult g = grad_total(params, batch, loss_cfg);
            auto param_tensors = params.tensors();
            auto grad_tensors = g.grads.tensors();
            for (std::size_t i = 0; i < param_tensors.size(); ++i)
                axpy(*param_tensors[i].second, -cfg.learning_rate, *grad_tensors[i].second);

            cms_sum += g.loss.l_cms();
            mil_sum += g.loss.l_mil;
            n_queries += batch.size();
            n_mil_pairs += static_cast<std::size_t>(g.mil_pairs);
            st.mil_filtered += g.mil_filtered;
        }
        st.l_cms = cms_sum / static_cast<double>(n_queries);
        st.l_mil = n_mil_pairs > 0 ? mil_sum / static_cast<double>(n_mil_pairs) : 0.0;
        report.epochs.push_back(st);
    }
    double norm_sq = 0.0;
    for (const auto& [name, tensor] : std::as_const(params).tensors()) {
        const double n = tensor->norm();
        norm_sq += n * n;
    }
    report.final_param_norm = std::sqrt(norm_sq);
    return {std::move(params), std::move(report)};
}

// ---------------------------------------------------------------------
// Finite-difference verification of grad_total.

struct GradCheckResult {
    std::string tensor;
    double max_rel_err = 0.0;
    int points_checked = 0;
    bool pass = false;
};

inline std::vector<GradCheckResult> gradient_check(ModelParams params,
                                                   const std::vector<BatchLine>& batch,
                                                   const TrainLossConfig& cfg, double tol,
                                                   int n_points, std::uint64_t seed,
                                                   const std::string& corrupt_tensor = {}) {
    const double h = 1e-5;
    GradResult base = grad_total(params, batch, cfg);
    std::vector<GradCheckResult> results;
    SplitMix64 rng = SplitMix64::stream(seed, 0x66d0ULL);

    auto named = params.tensors();
    auto grads_named = base.grads.tensors();
    for (std::size_t ti = 0; ti < named.size(); ++ti) {
        auto& [name, tensor] = named[ti];
        const Matrix& g = *grads_named[ti].second;
        GradCheckResult r;
        r.tensor = name;

        // prefer entries that actually carry gradient
        std::vector<std::size_t> candidates;
        for (std::size_t k = 0; k < g.v.size(); ++k)
            if (std::abs(g.v[k]) > 1e-7) candidates.push_back(k);
        const bool any_signal = !candidates.empty();

        for (int p = 0; p < n_points; ++p) {
            bool checked = false;
            for (int attempt = 0; attempt < 50 && !checked; ++attempt) {
                const std::size_t k =
                    any_signal
                        ? candidates[static_cast<std::size_t>(rng.next_int(
                              0, static_cast<std::int64_t>(candidates.size()) - 1))]
                        : static_cast<std::size_t>(
                              rng.next_int(0, static_cast<std::int64_t>(g.v.size()) - 1));
                const double saved = tensor->v[k];
                tensor->v[k] = saved + h;
                const GradResult plus = grad_total(params, batch, cfg);
                tensor->v[k] = saved - h;
                const GradResult minus = grad_total(params, batch, cfg);
                tensor->v[k] = saved;
                // resample if the perturbation crossed a kink
                if (plus.branch_signature != base.branch_signature ||
                    minus.branch_signature != base.branch_signature)
                    continue;
                const double fd = (plus.loss.total() - minus.loss.total()) / (2.0 * h);
                double analytic = g.v[k];
                if (name == corrupt_tensor) analytic += 1e-3; // negative-control hook
                if (std::abs(fd) < 1e-8 && std::abs(analytic) < 1e-8) {
                    checked = true;
                    break;
                }
                const double rel =
                    std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-4});
                r.max_rel_err = std::max(r.max_rel_err, rel);
                checked = true;
            }
            if (checked) ++r.points_checked;
        }
        r.pass = r.max_rel_err <= tol;
        results.push_back(std::move(r));
    }
    return results;
}

} // namespace pstr
