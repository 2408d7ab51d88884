#include "traceprobe/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include "traceprobe/util.hpp"

namespace traceprobe {

namespace {

// GPT-2 style byte <-> printable-unicode mapping for byte-level vocabularies.
struct ByteUnicodeMap {
    std::array<std::string, 256> byte_to_str;
    std::map<std::string, unsigned char> str_to_byte;

    ByteUnicodeMap() {
        std::vector<int> cps(256, -1);
        auto printable = [](int b) {
            return (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
        };
        int extra = 0;
        for (int b = 0; b < 256; ++b) {
            cps[b] = printable(b) ? b : 256 + extra++;
        }
        for (int b = 0; b < 256; ++b) {
            const int cp = cps[b];
            std::string s;
            if (cp < 0x80) {
                s.push_back(static_cast<char>(cp));
            } else {
                s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
                s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
            }
            byte_to_str[static_cast<size_t>(b)] = s;
            str_to_byte[s] = static_cast<unsigned char>(b);
        }
    }
};

const ByteUnicodeMap& byte_map() {
    static const ByteUnicodeMap map;
    return map;
}

// Splits a string into UTF-8 codepoint units; invalid bytes become
// single-byte units.
std::vector<std::string> split_codepoints(std::string_view text) {
    std::vector<std::string> units;
    size_t i = 0;
    while (i < text.size()) {
        const unsigned char lead = static_cast<unsigned char>(text[i]);
        size_t len = 1;
        if ((lead & 0xE0) == 0xC0) len = 2;
        else if ((lead & 0xF0) == 0xE0) len = 3;
        else if ((lead & 0xF8) == 0xF0) len = 4;
        if (i + len > text.size()) len = 1;
        units.emplace_back(text.substr(i, len));
        i += len;
    }
    return units;
}

}  // namespace

Tokenizer Tokenizer::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TokenizerError(path, "artifact file not found");
    json artifact;
    try {
        in >> artifact;
    } catch (const std::exception& e) {
        throw TokenizerError(path, std::string("artifact parse failure: ") + e.what());
    }
    return from_json(artifact, path);
}

Tokenizer Tokenizer::from_json(const json& artifact, const std::string& origin) {
    Tokenizer t;
    try {
        t.ref_.tokenizer_id = artifact.at("tokenizer_id").get<std::string>();
        t.vocab_ = artifact.at("vocab").get<std::vector<std::string>>();
        t.ref_.vocab_size = static_cast<int>(t.vocab_.size());
        for (int id = 0; id < t.ref_.vocab_size; ++id) {
            t.token_ids_.emplace(t.vocab_[static_cast<size_t>(id)], id);
        }
        if (artifact.contains("merges")) {
            int rank = 0;
            for (const auto& entry : artifact.at("merges")) {
                const auto merge = entry.get<std::string>();
                const size_t space = merge.find(' ');
                if (space == std::string::npos) {
                    throw std::runtime_error("merge entry missing separator: " + merge);
                }
                t.merge_ranks_[{merge.substr(0, space), merge.substr(space + 1)}] = rank++;
            }
        }
        if (artifact.contains("special_tokens")) {
            for (const auto& entry : artifact.at("special_tokens")) {
                const auto token = entry.get<std::string>();
                const auto it = t.token_ids_.find(token);
                if (it == t.token_ids_.end()) {
                    throw std::runtime_error("special token not in vocab: " + token);
                }
                t.ref_.special_token_ids.insert(it->second);
                t.special_tokens_.push_back(token);
            }
            std::sort(t.special_tokens_.begin(), t.special_tokens_.end(),
                      [](const std::string& a, const std::string& b) {
                          return a.size() > b.size() || (a.size() == b.size() && a < b);
                      });
        }
        t.byte_level_ = artifact.value("byte_level", false);
        const auto pretok = artifact.value("pretokenizer", "none");
        if (pretok == "whitespace") t.whitespace_pretok_ = true;
        else if (pretok != "none") throw std::runtime_error("unknown pretokenizer: " + pretok);
    } catch (const TokenizerError&) {
        throw;
    } catch (const std::exception& e) {
        throw TokenizerError(origin, e.what());
    }
    return t;
}

std::vector<int> Tokenizer::encode_pretoken(std::string_view piece) const {
    if (piece.empty()) return {};
    std::string mapped;
    if (byte_level_) {
        for (unsigned char b : piece) mapped += byte_map().byte_to_str[b];
        piece = mapped;
    }

    // Whole-piece hit avoids the merge loop for word-style vocabularies.
    if (auto it = token_ids_.find(std::string(piece)); it != token_ids_.end()) {
        return {it->second};
    }

    std::vector<std::string> units = split_codepoints(piece);
    while (units.size() > 1) {
        int best_rank = INT32_MAX;
        size_t best_pos = 0;
        for (size_t i = 0; i + 1 < units.size(); ++i) {
            const auto it = merge_ranks_.find({units[i], units[i + 1]});
            if (it != merge_ranks_.end() && it->second < best_rank) {
                best_rank = it->second;
                best_pos = i;
            }
        }
        if (best_rank == INT32_MAX) break;
        units[best_pos] += units[best_pos + 1];
        units.erase(units.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    }

    std::vector<int> ids;
    ids.reserve(units.size());
    for (const auto& unit : units) {
        const auto it = token_ids_.find(unit);
        if (it == token_ids_.end()) {
            throw TokenizerError(ref_.tokenizer_id, "no vocab entry for unit '" + unit + "'");
        }
        ids.push_back(it->second);
    }
    return ids;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
    std::vector<int> ids;
    size_t pos = 0;
    auto emit_plain = [&](std::string_view segment) {
        if (segment.empty()) return;
        if (!whitespace_pretok_) {
            const auto piece = encode_pretoken(segment);
            ids.insert(ids.end(), piece.begin(), piece.end());
            return;
        }
        // Whitespace pretokenizer: split before each space so tokens carry
        // their leading space, BPE-style.
        size_t start = 0;
        for (size_t i = 1; i <= segment.size(); ++i) {
            if (i == segment.size() || segment[i] == ' ') {
                if (i > start) {
                    const auto piece = encode_pretoken(segment.substr(start, i - start));
                    ids.insert(ids.end(), piece.begin(), piece.end());
                }
                start = i;
            }
        }
    };

    while (pos < text.size()) {
        size_t next_special = std::string_view::npos;
        const std::string* matched = nullptr;
        for (const auto& special : special_tokens_) {
            const size_t found = text.find(special, pos);
            if (found < next_special) {
                next_special = found;
                matched = &special;
            }
        }
        if (matched == nullptr) {
            emit_plain(text.substr(pos));
            break;
        }
        emit_plain(text.substr(pos, next_special - pos));
        ids.push_back(token_ids_.at(*matched));
        pos = next_special + matched->size();
    }
    return ids;
}

DecodeResult Tokenizer::decode(std::span<const int> ids) const {
    std::string raw;
    for (int id : ids) {
        if (id < 0 || id >= ref_.vocab_size) {
            throw TokenizerError(ref_.tokenizer_id, "token id out of range: " + std::to_string(id));
        }
        raw += vocab_[static_cast<size_t>(id)];
    }
    if (byte_level_) {
        std::string bytes;
        bytes.reserve(raw.size());
        for (const auto& unit : split_codepoints(raw)) {
            const auto it = byte_map().str_to_byte.find(unit);
            if (it != byte_map().str_to_byte.end()) {
                bytes.push_back(static_cast<char>(it->second));
            } else {
                bytes += unit;  // special-token text passes through unmapped
            }
        }
        raw = std::move(bytes);
    }
    DecodeResult result;
    result.text = sanitize_utf8(raw, result.lossy);
    return result;
}

bool is_valid_decile(int decile) {
    return decile >= 0 && decile <= 100 && decile % 10 == 0;
}

TraceSlice slice_prefix(const ReasoningTrace& trace, const Tokenizer& tokenizer, int decile) {
    return slice_grid(trace, tokenizer, {decile}).front();
}

std::vector<TraceSlice> slice_grid(const ReasoningTrace& trace, const Tokenizer& tokenizer,
                                   const std::vector<int>& deciles) {
    for (size_t i = 0; i < deciles.size(); ++i) {
        if (!is_valid_decile(deciles[i])) {
            throw std::runtime_error("decile outside the grid: " + std::to_string(deciles[i]));
        }
        if (i > 0 && deciles[i] <= deciles[i - 1]) {
            throw std::runtime_error("deciles must be strictly ascending");
        }
    }
    const std::vector<int> ids = tokenizer.encode(trace.text);
    const int total = static_cast<int>(ids.size());

    std::vector<TraceSlice> slices;
    slices.reserve(deciles.size());
    for (int decile : deciles) {
        TraceSlice slice;
        slice.item_id = trace.item_id;
        slice.model_id = trace.model_id;
        slice.decile = decile;
        slice.condition = Condition::original;
        slice.token_len = decile_token_count(decile, total);
        if (slice.token_len > 0) {
            const auto decoded =
                tokenizer.decode(std::span<const int>(ids.data(), static_cast<size_t>(slice.token_len)));
            slice.text = decoded.text;
            slice.lossy_decode = decoded.lossy;
        }
        slices.push_back(std::move(slice));
    }
    return slices;
}

bool slicing_roundtrip_stable(const Tokenizer& tokenizer, const std::string& text) {
    const auto once = tokenizer.encode(text);
    const auto decoded = tokenizer.decode(once);
    if (decoded.lossy) return false;
    return tokenizer.encode(decoded.text) == once;
}

}  // namespace traceprobe
