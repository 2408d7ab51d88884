#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace traceprobe {

/// Configuration problems map to CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 64-bit FNV-1a. Used for config digests and per-cell seed derivation;
// the exact constants are part of the record-file contract (seeds are
// reproduced from them on resume).
inline uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(uint64_t v);

/// Stable per-cell seed: identical across runs, platforms and thread schedules.
uint64_t cell_seed(uint64_t run_seed, std::string_view item_id, int decile,
                   std::string_view condition);

// splitmix64: tiny, fully specified generator. std::uniform_int_distribution
// is implementation-defined, so bounded draws are done by rejection here.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform draw in [0, n). n must be positive.
    uint64_t below(uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below(0)");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = next();
        while (v >= limit) v = next();
        return v % n;
    }

    /// Fisher-Yates, in place.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    uint64_t state_;
};

/// Replaces ill-formed UTF-8 with U+FFFD. Sets `lossy` when a replacement
/// happened (e.g. a token-boundary cut through a multi-byte character).
std::string sanitize_utf8(std::string_view bytes, bool& lossy);

bool starts_with(std::string_view s, std::string_view prefix);

/// Replaces every occurrence of `from` (non-empty) with `to`; returns the
/// number of replacements.
size_t replace_all(std::string& s, std::string_view from, std::string_view to);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace traceprobe
