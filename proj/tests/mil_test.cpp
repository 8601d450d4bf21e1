#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pstr/encoder.hpp"
#include "pstr/mil.hpp"
#include "pstr/rng.hpp"

namespace {

pstr::TextLine straight_line(const std::string& text) {
    pstr::TextLine line;
    line.transcription = text;
    line.char_widths.assign(pstr::utf8_length(text), 1.0);
    double x = 0.0;
    line.polygon.upper.push_back({x, 0.0});
    line.polygon.lower.push_back({x, -1.0});
    for (double w : line.char_widths) {
        x += w;
        line.polygon.upper.push_back({x, 0.0});
        line.polygon.lower.push_back({x, -1.0});
    }
    return line;
}

} // namespace

TEST_CASE("strategy names round trip") {
    for (const char* name : {"cmsl-a", "cmsl-b", "cmsl-c", "mil", "rankmil"})
        CHECK(pstr::strategy_name(pstr::parse_strategy(name)) == std::string(name));
    CHECK(pstr::parse_strategy("cmsl_a") == pstr::Strategy::cmsl_a);
    CHECK_THROWS_AS(pstr::parse_strategy("bogus"), pstr::ConfigError);
}

TEST_CASE("bag size follows the count formula") {
    for (int len : {2, 3, 5, 8, 10}) {
        const auto line = straight_line(std::string(static_cast<std::size_t>(len), 'a'));
        for (int n_min = 2; n_min <= len; ++n_min) {
            const auto bag = pstr::construct_bag(line, n_min, len);
            // independent count: one window per (n, start) pair
            int expected = 0;
            for (int n = n_min; n <= len; ++n) expected += len - n + 1;
            CHECK(static_cast<int>(bag.proposals.size()) == expected);
            CHECK(pstr::bag_proposal_count(len, n_min, len) == expected);
            CHECK(bag.pseudo_labels.size() == bag.proposals.size());
        }
    }
}

TEST_CASE("bag windows carry equal-width fractions and substring labels") {
    const auto line = straight_line("abcde");
    const auto bag = pstr::construct_bag(line, 2, 5);
    REQUIRE(bag.proposals.size() == 10);
    // first window: n=2, i=0
    CHECK(bag.proposals[0].start_frac == doctest::Approx(0.0));
    CHECK(bag.proposals[0].end_frac == doctest::Approx(0.4));
    CHECK(bag.pseudo_labels[0] == "ab");
    CHECK(bag.pseudo_labels[3] == "de");
    // last window: the whole line
    CHECK(bag.pseudo_labels.back() == "abcde");
    CHECK(bag.proposals.back().end_frac == doctest::Approx(1.0));
    for (std::size_t i = 0; i < bag.proposals.size(); ++i) {
        CHECK(pstr::is_substring(bag.pseudo_labels[i], line.transcription));
        CHECK(bag.proposals[i].polygon.upper.size() == line.polygon.upper.size());
        const double expected_len =
            (bag.proposals[i].end_frac - bag.proposals[i].start_frac) * 5.0;
        CHECK(pstr::arc_length(bag.proposals[i].polygon) ==
              doctest::Approx(expected_len).epsilon(1e-9));
    }
    CHECK(bag.source_line == &line);
}

TEST_CASE("construct_bag argument validation") {
    const auto line = straight_line("abc");
    CHECK_THROWS_AS(pstr::construct_bag(line, 1, 3), pstr::ArgumentError);
    CHECK_THROWS_AS(pstr::construct_bag(line, 2, 4), pstr::ArgumentError);
    CHECK_THROWS_AS(pstr::construct_bag(line, 3, 2), pstr::ArgumentError);
    CHECK_THROWS_AS(pstr::construct_bag(straight_line("a"), 2, 2), pstr::ArgumentError);
    // length-2 line: exactly one proposal
    CHECK(pstr::construct_bag(straight_line("ab"), 2, 2).proposals.size() == 1);
}

TEST_CASE("aggregate is a linear-scan argmax with smallest-index ties") {
    pstr::ModelConfig cfg;
    cfg.T = 4;
    cfg.C = 3;
    cfg.alphabet = "ab";
    const auto p = pstr::init_params(cfg, 6);
    const auto qf = pstr::encode_query("ab", p);

    pstr::SplitMix64 rng(40);
    std::vector<pstr::SequenceFeature> feats;
    for (int i = 0; i < 7; ++i) {
        pstr::Matrix m(4, 3);
        for (double& x : m.v) x = rng.uniform(-1.0, 1.0);
        feats.push_back(m);
    }
    const auto [idx, sim] = pstr::aggregate(feats, qf);
    int best = 0;
    for (int i = 1; i < 7; ++i)
        if (pstr::sim_f(feats[static_cast<std::size_t>(i)], qf) >
            pstr::sim_f(feats[static_cast<std::size_t>(best)], qf))
            best = i;
    CHECK(idx == best);
    CHECK(sim == doctest::Approx(pstr::sim_f(feats[static_cast<std::size_t>(best)], qf)));

    // duplicate of the best feature later in the list: index stays
    feats.push_back(feats[static_cast<std::size_t>(best)]);
    CHECK(pstr::aggregate(feats, qf).first == best);
    CHECK_THROWS_AS(pstr::aggregate({}, qf), pstr::ArgumentError);
}

TEST_CASE("bag_contains checks substring against any pseudo label") {
    const auto line = straight_line("abcde");
    const auto bag = pstr::construct_bag(line, 2, 5);
    CHECK(pstr::bag_contains("bc", bag));
    CHECK(pstr::bag_contains("abcde", bag));
    CHECK_FALSE(pstr::bag_contains("ce", bag));   // subsequence, not substring
    CHECK_FALSE(pstr::bag_contains("xyz", bag));
}

TEST_CASE("rankmil loss sweep over delta_s") {
    const double m = 0.2;
    // not contained: always zero
    CHECK(pstr::rankmil_loss_from_sims(false, 0, 0.9, 0.1, m).loss == 0.0);
    // contained but delta_s <= 0: filtered out
    auto t = pstr::rankmil_loss_from_sims(true, 1, 0.3, 0.5, m);
    CHECK(t.loss == 0.0);
    CHECK_FALSE(t.active);
    CHECK(t.delta_s == doctest::Approx(-0.2));
    // inside the margin: linear hinge
    t = pstr::rankmil_loss_from_sims(true, 2, 0.55, 0.5, m);
    CHECK(t.active);
    CHECK(t.loss == doctest::Approx(m - 0.05));
    // beyond the margin: dead zone
    t = pstr::rankmil_loss_from_sims(true, 0, 0.9, 0.5, m);
    CHECK(t.loss == 0.0);
    CHECK_FALSE(t.active);
    // margin 0: the hinge vanishes everywhere (boundary behavior)
    CHECK(pstr::rankmil_loss_from_sims(true, 0, 0.6, 0.5, 0.0).loss == 0.0);
    // dense sweep: loss equals max(0, filtered hinge) everywhere
    for (double ds = -0.5; ds <= 0.5; ds += 0.01) {
        const auto r = pstr::rankmil_loss_from_sims(true, 0, 0.5 + ds, 0.5, m);
        const double expected = (ds > 0.0 && ds < m) ? m - ds : 0.0;
        CHECK(r.loss == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("mil loss targets the containment indicator") {
    auto t = pstr::mil_loss_from_sims(true, 3, 0.7);
    CHECK(t.loss == doctest::Approx(0.3));
    CHECK(t.theta == 3);
    t = pstr::mil_loss_from_sims(false, 0, 0.7);
    CHECK(t.loss == doctest::Approx(0.7));
    t = pstr::mil_loss_from_sims(true, 0, 1.0);
    CHECK(t.loss == 0.0);
    CHECK_FALSE(t.active);
}

TEST_CASE("full-loss wrappers agree with the _from_sims forms") {
    pstr::ModelConfig cfg;
    cfg.T = 4;
    cfg.C = 3;
    cfg.alphabet = "abcde";
    cfg.noise_sigma = 0.0;
    const auto p = pstr::init_params(cfg, 13);
    const auto line = straight_line("abcde");
    const auto bag = pstr::construct_bag(line, 2, 5);
    std::vector<pstr::SequenceFeature> feats;
    for (const auto& prop : bag.proposals)
        feats.push_back(pstr::encode_scene_span(line, prop.start_frac, prop.end_frac, p, 1));
    const auto line_f = pstr::encode_scene_span(line, 0.0, 1.0, p, 1);
    const auto qf = pstr::encode_query("bcd", p);

    const auto [theta, sim_theta] = pstr::aggregate(feats, qf);
    pstr::RankMilConfig rc;
    const auto r = pstr::rankmil_loss("bcd", qf, line_f, bag, feats, rc);
    const auto expect = pstr::rankmil_loss_from_sims(true, theta, sim_theta,
                                                     pstr::sim_f(qf, line_f), rc.margin);
    CHECK(r.loss == doctest::Approx(expect.loss));
    CHECK(r.theta == expect.theta);
    const auto ml = pstr::mil_loss("bcd", qf, line_f, bag, feats);
    CHECK(ml.loss == doctest::Approx(pstr::mil_loss_from_sims(true, theta, sim_theta).loss));
}
