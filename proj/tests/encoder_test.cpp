#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "pstr/encoder.hpp"

namespace {

pstr::ModelConfig tiny_config() {
    pstr::ModelConfig cfg;
    cfg.T = 5;
    cfg.C = 4;
    cfg.alphabet = "abcd";
    cfg.noise_sigma = 0.1;
    return cfg;
}

pstr::TextLine straight_line(const std::string& text, const std::vector<double>& widths) {
    pstr::TextLine line;
    line.transcription = text;
    line.char_widths = widths;
    double x = 0.0;
    line.polygon.upper.push_back({x, 0.0});
    line.polygon.lower.push_back({x, -1.0});
    for (double w : widths) {
        x += w;
        line.polygon.upper.push_back({x, 0.0});
        line.polygon.lower.push_back({x, -1.0});
    }
    return line;
}

} // namespace

TEST_CASE("init_params shapes, determinism and scale") {
    const auto cfg = tiny_config();
    pstr::ModelParams p = pstr::init_params(cfg, 3);
    CHECK(p.query_embed.rows == 5); // 4 chars + UNK
    CHECK(p.query_embed.cols == 4);
    CHECK(p.query_mix.w_fwd.rows == 4);
    CHECK(p.query_mix.b_fwd.rows == 1);
    const double bound = 0.5 / 2.0; // 0.5 / sqrt(C)
    for (const auto& [name, t] : std::as_const(p).tensors()) {
        CHECK(t->max_abs() <= bound);
        CHECK(t->max_abs() > 0.0);
    }
    pstr::ModelParams q = pstr::init_params(cfg, 3);
    CHECK(p.query_embed == q.query_embed);
    CHECK(p.scene_mix.u_bwd == q.scene_mix.u_bwd);
    pstr::ModelParams r = pstr::init_params(cfg, 4);
    CHECK_FALSE(p.query_embed == r.query_embed);
    // query and scene sides draw from distinct streams
    CHECK_FALSE(p.query_embed == p.scene_embed);

    pstr::ModelConfig bad = cfg;
    bad.T = 1;
    CHECK_THROWS_AS(pstr::init_params(bad, 0), pstr::ConfigError);
    bad = cfg;
    bad.alphabet = "";
    CHECK_THROWS_AS(pstr::init_params(bad, 0), pstr::ConfigError);
}

TEST_CASE("char_index maps alphabet order, row 0 reserved") {
    const auto p = pstr::init_params(tiny_config(), 0);
    const auto idx = p.char_index();
    CHECK(idx.at(U'a') == 1);
    CHECK(idx.at(U'd') == 4);
    CHECK(idx.count(U'z') == 0);
}

TEST_CASE("embed_chars copies table rows, unknown chars hit row 0") {
    const auto p = pstr::init_params(tiny_config(), 1);
    std::vector<int> rows;
    const pstr::Matrix x = pstr::embed_chars({U'b', U'z', U'a'}, p.query_embed, p.char_index(), &rows);
    CHECK(rows == std::vector<int>{2, 0, 1});
    for (int c = 0; c < 4; ++c) {
        CHECK(x(0, c) == p.query_embed(2, c));
        CHECK(x(1, c) == p.query_embed(0, c));
        CHECK(x(2, c) == p.query_embed(1, c));
    }
    CHECK_THROWS_AS(pstr::embed_chars({}, p.query_embed, p.char_index()), pstr::ArgumentError);
}

TEST_CASE("interpolation has closed-form weights") {
    pstr::Matrix m(3, 2);
    for (int i = 0; i < 6; ++i) m.v[static_cast<std::size_t>(i)] = i; // rows: [0,1],[2,3],[4,5]
    const pstr::Matrix out = pstr::interpolate_to_T(m, 5);
    // positions: 0, .5, 1, 1.5, 2 over input rows
    CHECK(out(0, 0) == doctest::Approx(0.0));
    CHECK(out(1, 0) == doctest::Approx(1.0)); // 0.5*0 + 0.5*2
    CHECK(out(2, 1) == doctest::Approx(3.0));
    CHECK(out(3, 0) == doctest::Approx(3.0)); // 0.5*2 + 0.5*4
    CHECK(out(4, 1) == doctest::Approx(5.0));
}

TEST_CASE("interpolation edge cases") {
    pstr::Matrix one(1, 3);
    one(0, 0) = 7.0;
    const pstr::Matrix rep = pstr::interpolate_to_T(one, 4);
    for (int t = 0; t < 4; ++t) CHECK(rep(t, 0) == 7.0);

    pstr::Matrix same(4, 2);
    for (int i = 0; i < 8; ++i) same.v[static_cast<std::size_t>(i)] = i * 0.25;
    const pstr::Matrix id = pstr::interpolate_to_T(same, 4);
    CHECK(id == same); // L == T is the identity
}

TEST_CASE("encode_query is deterministic and rejects empty input") {
    const auto p = pstr::init_params(tiny_config(), 9);
    const auto f1 = pstr::encode_query("abca", p);
    const auto f2 = pstr::encode_query("abca", p);
    CHECK(f1 == f2);
    CHECK(f1.rows == 5);
    CHECK(f1.cols == 4);
    CHECK(f1.all_finite());
    CHECK_FALSE(f1 == pstr::encode_query("abcb", p));
    CHECK_THROWS_AS(pstr::encode_query("", p), pstr::ArgumentError);
}

TEST_CASE("feature is the sum of both direction activations") {
    const auto p = pstr::init_params(tiny_config(), 2);
    const auto tr = pstr::encode_query_trace("dcba", p);
    for (std::size_t i = 0; i < tr.feature.v.size(); ++i)
        CHECK(tr.feature.v[i] == doctest::Approx(tr.h_fwd.v[i] + tr.h_bwd.v[i]));
    // all tanh outputs bounded
    CHECK(tr.h_fwd.max_abs() <= 1.0);
    CHECK(tr.h_bwd.max_abs() <= 1.0);
}

TEST_CASE("covered_chars width-center rule") {
    const auto line = straight_line("abcd", {3.0, 1.0, 1.0, 3.0});
    // total 8; span [2, 4]; centers 1.5, 3.5, 4.5, 6.5 -> only 'b'
    CHECK(pstr::covered_chars(line, 0.25, 0.5) == std::vector<char32_t>{U'b'});
    CHECK(pstr::covered_chars(line, 0.0, 1.0) == std::vector<char32_t>{U'a', U'b', U'c', U'd'});
    CHECK(pstr::covered_chars(line, 0.0, 0.25) == std::vector<char32_t>{U'a'});
}

TEST_CASE("covered_chars empty span falls back to the midpoint cell") {
    const auto line = straight_line("abcd", {1.0, 1.0, 1.0, 1.0});
    // span [1.6, 1.8]: no center inside, midpoint 1.7 lies in cell of 'b'
    CHECK(pstr::covered_chars(line, 0.4, 0.45) == std::vector<char32_t>{U'b'});
    // midpoint in the last cell
    CHECK(pstr::covered_chars(line, 0.95, 0.975) == std::vector<char32_t>{U'd'});
}

TEST_CASE("scene encoding noise is deterministic and content-keyed") {
    const auto p = pstr::init_params(tiny_config(), 5);
    const auto line = straight_line("abcd", {1.0, 1.0, 1.0, 1.0});
    const auto f1 = pstr::encode_scene_span(line, 0.0, 1.0, p, 42);
    const auto f2 = pstr::encode_scene_span(line, 0.0, 1.0, p, 42);
    CHECK(f1 == f2);
    const auto f3 = pstr::encode_scene_span(line, 0.0, 1.0, p, 43);
    CHECK_FALSE(f1 == f3);

    // sigma 0 reproduces the clean scene-side encoding of the covered chars
    pstr::ModelParams clean = p;
    clean.config.noise_sigma = 0.0;
    const auto f0 = pstr::encode_scene_span(line, 0.0, 0.5, clean, 42);
    const auto ref = pstr::encode_chars_trace({U'a', U'b'}, clean.scene_embed, clean.scene_mix,
                                              clean.char_index(), clean.config.T);
    CHECK(f0 == ref.feature);
    CHECK(pstr::encode_scene_span_trace(line, 0.0, 1.0, p, 1).scene_side);
    CHECK_THROWS_AS(pstr::encode_scene_span(line, 0.5, 0.5, p, 1), pstr::ArgumentError);
    CHECK_THROWS_AS(pstr::encode_scene_span(line, -0.1, 0.5, p, 1), pstr::ArgumentError);
}

TEST_CASE("checkpoint round trip") {
    const auto p = pstr::init_params(tiny_config(), 17);
    const std::string path = "encoder_test_ckpt.bin";
    pstr::save_checkpoint(p, path);
    const auto q = pstr::load_checkpoint(path);
    CHECK(q.config.T == p.config.T);
    CHECK(q.config.C == p.config.C);
    CHECK(q.config.alphabet == p.config.alphabet);
    CHECK(q.config.noise_sigma == p.config.noise_sigma);
    const auto pa = std::as_const(p).tensors();
    const auto qa = std::as_const(q).tensors();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].second == *qa[i].second);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint load failures") {
    CHECK_THROWS_AS(pstr::load_checkpoint("missing_ckpt.bin"), pstr::LoadError);

    const std::string path = "encoder_test_bad.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPT1\nxxxx";
    }
    CHECK_THROWS_AS(pstr::load_checkpoint(path), pstr::LoadError);

    // valid file, tensor name tampered
    const auto p = pstr::init_params(tiny_config(), 17);
    pstr::save_checkpoint(p, path);
    std::string blob;
    {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        blob = ss.str();
    }
    const auto pos = blob.find("query_embed");
    REQUIRE(pos != std::string::npos);
    blob[pos] = 'x';
    {
        std::ofstream out(path, std::ios::binary);
        out << blob;
    }
    CHECK_THROWS_AS(pstr::load_checkpoint(path), pstr::LoadError);

    // truncated tensor data
    pstr::save_checkpoint(p, path);
    {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        blob = ss.str();
    }
    {
        std::ofstream out(path, std::ios::binary);
        out << blob.substr(0, blob.size() / 2);
    }
    CHECK_THROWS_AS(pstr::load_checkpoint(path), pstr::LoadError);
    std::remove(path.c_str());
}
