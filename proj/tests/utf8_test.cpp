#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pstr/utf8.hpp"

using pstr::utf8_decode;
using pstr::utf8_encode;

TEST_CASE("ascii round trip") {
    const std::string s = "hello world";
    const auto cps = utf8_decode(s);
    CHECK(cps.size() == s.size());
    CHECK(utf8_encode(cps) == s);
}

TEST_CASE("multi-byte scalars decode to one element each") {
    // U+00E9, U+4E2D, U+1F600
    const std::string s = "\xc3\xa9\xe4\xb8\xad\xf0\x9f\x98\x80";
    const auto cps = utf8_decode(s);
    REQUIRE(cps.size() == 3);
    CHECK(cps[0] == char32_t{0xE9});
    CHECK(cps[1] == char32_t{0x4E2D});
    CHECK(cps[2] == char32_t{0x1F600});
    CHECK(utf8_encode(cps) == s);
}

TEST_CASE("utf8_length counts scalars not bytes") {
    CHECK(pstr::utf8_length("abc") == 3);
    CHECK(pstr::utf8_length("\xc3\xa9x") == 2);
    CHECK(pstr::utf8_length("") == 0);
}

TEST_CASE("invalid sequences throw ParseError") {
    CHECK_THROWS_AS(utf8_decode("\xff"), pstr::ParseError);          // bad lead
    CHECK_THROWS_AS(utf8_decode("\xc3"), pstr::ParseError);          // truncated
    CHECK_THROWS_AS(utf8_decode("\xc3\x28"), pstr::ParseError);      // bad continuation
    CHECK_THROWS_AS(utf8_decode("\xe4\xb8"), pstr::ParseError);      // truncated 3-byte
    CHECK_THROWS_AS(utf8_decode("\x80"), pstr::ParseError);          // lone continuation
}
