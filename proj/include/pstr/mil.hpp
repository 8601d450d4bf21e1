#pragma once

#include <string>
#include <vector>

#include "pstr/common.hpp"
#include "pstr/corpus.hpp"
#include "pstr/featsim.hpp"
#include "pstr/geometry.hpp"
#include "pstr/textsim.hpp"

namespace pstr {

enum class Strategy { cmsl_a, cmsl_b, cmsl_c, mil, rankmil };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::cmsl_a: return "cmsl-a";
        case Strategy::cmsl_b: return "cmsl-b";
        case Strategy::cmsl_c: return "cmsl-c";
        case Strategy::mil: return "mil";
        case Strategy::rankmil: return "rankmil";
    }
    return "?";
}

inline Strategy parse_strategy(const std::string& s) {
    if (s == "cmsl-a" || s == "cmsl_a") return Strategy::cmsl_a;
    if (s == "cmsl-b" || s == "cmsl_b") return Strategy::cmsl_b;
    if (s == "cmsl-c" || s == "cmsl_c") return Strategy::cmsl_c;
    if (s == "mil") return Strategy::mil;
    if (s == "rankmil") return Strategy::rankmil;
    throw ConfigError("unknown strategy: " + s);
}

struct RankMilConfig {
    double margin = 0.2;
    Strategy strategy = Strategy::rankmil;
};

struct BagProposal {
    BoundaryPolygon polygon;
    double start_frac = 0.0;
    double end_frac = 1.0;
};

// Sliding-window partial proposals of one text line with pseudo-label
// substrings under the equal-character-width assumption.
struct Bag {
    std::vector<BagProposal> proposals;
    std::vector<std::string> pseudo_labels;
    const TextLine* source_line = nullptr;
};

// Bag Constructing Algorithm: for every window size n in [n_min, n_max]
// slide over all start indices 0..|t|-n inclusive. Window geometry spans
// fractions [i/|t|, (i+n)/|t|] of the band regardless of actual widths,
// which is exactly where the pseudo-label noise comes from.
inline Bag construct_bag(const TextLine& line, int n_min, int n_max) {
    const auto cps = utf8_decode(line.transcription);
    const int len = static_cast<int>(cps.size());
    if (len < 2) throw ArgumentError("construct_bag: transcription must have >= 2 characters");
    if (n_min < 2) throw ArgumentError("construct_bag: n_min must be >= 2");
    if (n_max > len) throw ArgumentError("construct_bag: n_max must be <= |transcription|");
    if (n_max < n_min) throw ArgumentError("construct_bag: n_max must be >= n_min");
    Bag bag;
    bag.source_line = &line;
    for (int n = n_min; n <= n_max; ++n) {
        for (int i = 0; i + n <= len; ++i) {
            BagProposal prop;
            prop.start_frac = static_cast<double>(i) / len;
            prop.end_frac = static_cast<double>(i + n) / len;
            prop.polygon = slice_window(line.polygon, prop.start_frac, prop.end_frac);
            bag.proposals.push_back(std::move(prop));
            bag.pseudo_labels.push_back(
                utf8_encode(std::vector<char32_t>(cps.begin() + i, cps.begin() + i + n)));
        }
    }
    return bag;
}

// Number of proposals the BCA emits: sum over n of (|t| - n + 1).
inline int bag_proposal_count(int transcription_len, int n_min, int n_max) {
    int count = 0;
    for (int n = n_min; n <= n_max; ++n) count += transcription_len - n + 1;
    return count;
}

// Index of the bag feature most similar to the query (smallest index on
// ties), with its similarity.
inline std::pair<int, double> aggregate(const std::vector<SequenceFeature>& bag_features,
                                        const SequenceFeature& query_f) {
    if (bag_features.empty()) throw ArgumentError("aggregate: empty bag");
    const TanhFlat q(query_f);
    int best = 0;
    double best_sim = cosine(TanhFlat(bag_features[0]), q);
    for (std::size_t i = 1; i < bag_features.size(); ++i) {
        const double s = cosine(TanhFlat(bag_features[i]), q);
        if (s > best_sim) {
            best_sim = s;
            best = static_cast<int>(i);
        }
    }
    return {best, best_sim};
}

inline bool bag_contains(const std::string& query, const Bag& bag) {
    for (const auto& label : bag.pseudo_labels)
        if (is_substring(query, label)) return true;
    return false;
}

// Loss evaluations on precomputed similarities; the learning module
// routes gradients through the reported branch.
struct MilLossTerms {
    double loss = 0.0;
    int theta = -1;          // selected proposal index
    double delta_s = 0.0;    // rankmil only
    bool contained = false;
    bool active = false;     // nonzero subgradient w.r.t. the similarities
};

// RankMIL: hinge on delta_s = sim(query, best patch) - sim(query, line),
// gated by containment AND delta_s > 0 (noisy samples filtered), dead
// beyond the margin.
inline MilLossTerms rankmil_loss_from_sims(bool contained, int theta, double sim_theta,
                                           double sim_line, double margin) {
    MilLossTerms t;
    t.theta = theta;
    t.contained = contained;
    t.delta_s = sim_theta - sim_line;
    const bool indicator = contained && t.delta_s > 0.0;
    if (indicator && t.delta_s < margin) {
        t.loss = margin - t.delta_s;
        t.active = true;
    }
    return t;
}

// Conventional MIL: |sim(query, aggregated patch) - I(contained)|.
inline MilLossTerms mil_loss_from_sims(bool contained, int theta, double sim_theta) {
    MilLossTerms t;
    t.theta = theta;
    t.contained = contained;
    const double target = contained ? 1.0 : 0.0;
    t.loss = std::abs(sim_theta - target);
    t.active = t.loss > 0.0;
    return t;
}

inline MilLossTerms rankmil_loss(const std::string& query, const SequenceFeature& query_f,
                                 const SequenceFeature& line_f, const Bag& bag,
                                 const std::vector<SequenceFeature>& bag_features,
                                 const RankMilConfig& config) {
    const auto [theta, sim_theta] = aggregate(bag_features, query_f);
    return rankmil_loss_from_sims(bag_contains(query, bag), theta, sim_theta,
                                  sim_f(query_f, line_f), config.margin);
}

inline MilLossTerms mil_loss(const std::string& query, const SequenceFeature& query_f,
                             const SequenceFeature& /*line_f*/, const Bag& bag,
                             const std::vector<SequenceFeature>& bag_features) {
    const auto [theta, sim_theta] = aggregate(bag_features, query_f);
    return mil_loss_from_sims(bag_contains(query, bag), theta, sim_theta);
}

} // namespace pstr
