#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "traceprobe/core.hpp"

namespace traceprobe {

struct TokenizerError : std::runtime_error {
    explicit TokenizerError(const std::string& tokenizer_id, const std::string& message)
        : std::runtime_error("tokenizer " + tokenizer_id + ": " + message),
          tokenizer_id(tokenizer_id) {}
    std::string tokenizer_id;
};

struct TokenizerRef {
    std::string tokenizer_id;
    int vocab_size = 0;
    std::set<int> special_token_ids;
};

struct DecodeResult {
    std::string text;
    bool lossy = false;  // a token boundary cut through a multi-byte character
};

/// Merge-list BPE over a vocabulary loaded from a local JSON artifact.
///
/// Artifact fields: tokenizer_id, vocab (array of token strings, index =
/// token id), merges (array of "left right" pairs, rank = position),
/// special_tokens (array of vocab strings matched atomically before
/// anything else), byte_level (bool; tokens live in the byte-to-unicode
/// mapped space), pretokenizer ("none" or "whitespace").
class Tokenizer {
public:
    static Tokenizer load(const std::string& path);
    static Tokenizer from_json(const json& artifact, const std::string& origin);

    const TokenizerRef& ref() const { return ref_; }
    const std::string& id() const { return ref_.tokenizer_id; }
    int vocab_size() const { return ref_.vocab_size; }
    bool is_special(int id) const { return ref_.special_token_ids.count(id) > 0; }

    std::vector<int> encode(std::string_view text) const;
    DecodeResult decode(std::span<const int> ids) const;
    int count_tokens(std::string_view text) const { return static_cast<int>(encode(text).size()); }

private:
    Tokenizer() = default;

    std::vector<int> encode_pretoken(std::string_view piece) const;

    TokenizerRef ref_;
    std::vector<std::string> vocab_;
    std::map<std::string, int> token_ids_;
    std::map<std::pair<std::string, std::string>, int> merge_ranks_;
    std::vector<std::string> special_tokens_;  // longest first
    bool byte_level_ = false;
    bool whitespace_pretok_ = false;
};

/// Exact prefix length for decile d of an L-token trace.
inline int decile_token_count(int decile, int token_len) {
    return static_cast<int>(
        (static_cast<int64_t>(decile) * token_len + 99) / 100);
}

bool is_valid_decile(int decile);

/// Slices the first ceil(d/100 * L) tokens of the trace and decodes them.
/// Decile 0 yields an empty slice; decile 100 the full trace text.
TraceSlice slice_prefix(const ReasoningTrace& trace, const Tokenizer& tokenizer, int decile);

/// All requested deciles in one pass over the trace's token ids. Deciles
/// must be ascending grid values; resulting slices are nested prefixes.
std::vector<TraceSlice> slice_grid(const ReasoningTrace& trace, const Tokenizer& tokenizer,
                                   const std::vector<int>& deciles);

/// encode(decode(encode(text))) == encode(text); required of any trace
/// that will be sliced (re-encoding the decoded ids must be stable).
bool slicing_roundtrip_stable(const Tokenizer& tokenizer, const std::string& text);

}  // namespace traceprobe
