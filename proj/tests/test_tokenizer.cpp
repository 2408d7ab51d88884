#include "doctest.h"
#include "test_support.hpp"
#include "traceprobe/util.hpp"

using namespace traceprobe;

TEST_CASE("encode basics") {
    const Tokenizer tok = tptest::ascii_tokenizer();
    CHECK(tok.encode("").empty());
    CHECK(tok.encode("abc").size() == 3);  // char-level fixture
    CHECK(tok.count_tokens("hello world") == 11);

    SUBCASE("special tokens are atomic") {
        const auto ids = tok.encode("a<think>b");
        REQUIRE(ids.size() == 3);
        CHECK(tok.is_special(ids[1]));
    }
    SUBCASE("determinism") {
        CHECK(tok.encode("some text 123") == tok.encode("some text 123"));
    }
    SUBCASE("unknown unit carries the tokenizer id") {
        try {
            tok.encode("caf\xC3\xA9");  // é is not in the ASCII fixture vocab
            FAIL("expected encode error");
        } catch (const TokenizerError& e) {
            CHECK(e.tokenizer_id == "ascii-test");
        }
    }
}

TEST_CASE("missing artifact errors carry the origin") {
    CHECK_THROWS_AS(Tokenizer::load("/nonexistent/tok.json"), TokenizerError);
}

TEST_CASE("bpe merges") {
    json artifact{{"tokenizer_id", "bpe-test"},
                  {"vocab", json::array({"a", "b", "c", "ab", "abc", " "})},
                  {"merges", json::array({"a b", "ab c"})},
                  {"pretokenizer", "whitespace"}};
    const Tokenizer tok = Tokenizer::from_json(artifact, "inline");
    CHECK(tok.encode("abc") == std::vector<int>{4});
    CHECK(tok.encode("ab") == std::vector<int>{3});
    CHECK(tok.encode("ba").size() == 2);  // no merge applies
    CHECK(tok.decode(tok.encode("abc")).text == "abc");
}

TEST_CASE("byte-level round trip and lossy prefix decode") {
    json vocab = json::array();
    // Initial byte alphabet in the gpt2 mapped space, no merges.
    for (int b = 0; b < 256; ++b) {
        // The mapping is internal; give the vocab every single mapped byte by
        // encoding a probe string lazily below instead of precomputing.
        (void)b;
    }
    // Simpler: vocab built from the mapped forms of bytes 0..255 via a
    // generator tokenizer is overkill; use explicit two-entry checks.
    json artifact{{"tokenizer_id", "bytes"},
                  {"vocab", json::array()},
                  {"byte_level", true}};
    // Build the vocab as the mapped single-byte strings, exactly what the
    // encoder produces for raw bytes.
    std::vector<std::string> mapped;
    {
        // reproduce the printable-range mapping: printable bytes map to
        // themselves, the rest to U+0100.. in order
        auto printable = [](int b) {
            return (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) ||
                   (b >= 0xAE && b <= 0xFF);
        };
        int extra = 0;
        for (int b = 0; b < 256; ++b) {
            int cp = printable(b) ? b : 256 + extra++;
            std::string s;
            if (cp < 0x80) {
                s.push_back(static_cast<char>(cp));
            } else {
                s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
                s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
            }
            mapped.push_back(s);
        }
    }
    for (const auto& s : mapped) artifact["vocab"].push_back(s);
    const Tokenizer tok = Tokenizer::from_json(artifact, "inline");

    const std::string text = "caf\xC3\xA9!";  // 6 bytes, é is two
    const auto ids = tok.encode(text);
    CHECK(ids.size() == 6);
    CHECK(tok.decode(ids).text == text);
    CHECK_FALSE(tok.decode(ids).lossy);

    // Cutting between the two bytes of é forces the replacement character.
    const auto cut = tok.decode(std::span<const int>(ids.data(), 4));
    CHECK(cut.lossy);
    CHECK(cut.text == "caf\xEF\xBF\xBD");
}

TEST_CASE("slice_prefix decile arithmetic") {
    const Tokenizer tok = tptest::ascii_tokenizer();

    SUBCASE("exact division") {
        const auto trace = tptest::make_trace("q", "m", 1, std::string(10, 'x'), tok);
        CHECK(slice_prefix(trace, tok, 50).token_len == 5);
    }
    SUBCASE("ceiling on a long trace length") {
        CHECK(decile_token_count(10, 7639) == 764);  // ceil(763.9)
    }
    SUBCASE("decile 0 is the empty no-reasoning slice") {
        const auto trace = tptest::make_trace("q", "m", 1, "any text at all", tok);
        const auto slice = slice_prefix(trace, tok, 0);
        CHECK(slice.token_len == 0);
        CHECK(slice.text.empty());
    }
    SUBCASE("decile 100 reproduces the trace") {
        const auto trace = tptest::make_trace("q", "m", 1, "the whole trace", tok);
        const auto slice = slice_prefix(trace, tok, 100);
        CHECK(slice.token_len == trace.token_len);
        CHECK(slice.text == trace.text);
    }
    SUBCASE("off-grid deciles rejected") {
        const auto trace = tptest::make_trace("q", "m", 1, "text", tok);
        CHECK_THROWS(slice_prefix(trace, tok, 55));
        CHECK_THROWS(slice_prefix(trace, tok, -10));
        CHECK_THROWS(slice_prefix(trace, tok, 110));
    }
}

TEST_CASE("slice_grid produces nested prefixes") {
    const Tokenizer tok = tptest::ascii_tokenizer();
    const auto trace =
        tptest::make_trace("q", "m", 1, "First consider the problem, then solve it.", tok);

    const std::vector<int> all = {0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    const auto slices = slice_grid(trace, tok, all);
    REQUIRE(slices.size() == 11);
    CHECK(slices.front().text.empty());
    CHECK(slices.back().text == trace.text);
    for (size_t i = 1; i < slices.size(); ++i) {
        CHECK(slices[i].token_len >= slices[i - 1].token_len);
        CHECK(starts_with(slices[i].text, slices[i - 1].text));
    }

    SUBCASE("transfer grid") {
        CHECK(slice_grid(trace, tok, {20, 40, 60, 80}).size() == 4);
    }
    SUBCASE("single full decile") {
        const auto single = slice_grid(trace, tok, {100});
        REQUIRE(single.size() == 1);
        CHECK(single[0].text == trace.text);
    }
    SUBCASE("unsorted grid rejected") {
        CHECK_THROWS(slice_grid(trace, tok, {20, 10}));
    }
}

TEST_CASE("ceiling formula matches brute force over a wide range") {
    for (int len = 0; len <= 10000; ++len) {
        for (int d = 0; d <= 100; d += 10) {
            const double exact = std::ceil(static_cast<double>(d) * len / 100.0);
            REQUIRE(decile_token_count(d, len) == static_cast<int>(exact));
        }
    }
}

TEST_CASE("prefix property: slice text re-encodes to the prefix ids") {
    const Tokenizer tok = tptest::ascii_tokenizer();
    Rng rng(7);
    for (int round = 0; round < 50; ++round) {
        std::string text;
        const size_t len = rng.below(400) + 1;
        for (size_t i = 0; i < len; ++i) text.push_back(static_cast<char>(32 + rng.below(95)));
        const auto trace = tptest::make_trace("q", "m", 1, text, tok);
        const auto full = tok.encode(trace.text);
        for (int d = 10; d <= 100; d += 30) {
            const auto slice = slice_prefix(trace, tok, d);
            const auto again = tok.encode(slice.text);
            REQUIRE(again.size() == static_cast<size_t>(slice.token_len));
            for (size_t i = 0; i < again.size(); ++i) REQUIRE(again[i] == full[i]);
        }
    }
}

TEST_CASE("round-trip stability check") {
    const Tokenizer tok = tptest::ascii_tokenizer();
    CHECK(slicing_roundtrip_stable(tok, "plain ascii reasoning"));
}
