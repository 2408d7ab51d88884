#include "traceprobe/util.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace traceprobe {

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

uint64_t cell_seed(uint64_t run_seed, std::string_view item_id, int decile,
                   std::string_view condition) {
    std::string key;
    key.reserve(item_id.size() + condition.size() + 32);
    key += "run:";
    key += std::to_string(run_seed);
    key += "|item:";
    key += item_id;
    key += "|d:";
    key += std::to_string(decile);
    key += "|cond:";
    key += condition;
    return fnv1a64(key);
}

namespace {

// Length of the UTF-8 sequence implied by a lead byte, 0 if invalid.
int utf8_seq_len(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead & 0xE0) == 0xC0) return 2;
    if ((lead & 0xF0) == 0xE0) return 3;
    if ((lead & 0xF8) == 0xF0) return 4;
    return 0;
}

}  // namespace

std::string sanitize_utf8(std::string_view bytes, bool& lossy) {
    static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";  // U+FFFD
    lossy = false;
    std::string out;
    out.reserve(bytes.size());
    size_t i = 0;
    while (i < bytes.size()) {
        const unsigned char lead = static_cast<unsigned char>(bytes[i]);
        const int len = utf8_seq_len(lead);
        if (len == 1) {
            out.push_back(static_cast<char>(lead));
            ++i;
            continue;
        }
        bool ok = len > 0 && i + static_cast<size_t>(len) <= bytes.size();
        if (ok) {
            for (int k = 1; k < len; ++k) {
                if ((static_cast<unsigned char>(bytes[i + k]) & 0xC0) != 0x80) {
                    ok = false;
                    break;
                }
            }
        }
        if (ok) {
            // Reject overlong encodings and surrogate/out-of-range values.
            const unsigned char b1 = static_cast<unsigned char>(bytes[i + 1]);
            if ((len == 2 && lead < 0xC2) ||
                (len == 3 && lead == 0xE0 && b1 < 0xA0) ||
                (len == 3 && lead == 0xED && b1 >= 0xA0) ||
                (len == 4 && lead == 0xF0 && b1 < 0x90) ||
                (len == 4 && lead == 0xF4 && b1 >= 0x90) || (len == 4 && lead > 0xF4)) {
                ok = false;
            }
        }
        if (ok) {
            out.append(bytes.substr(i, static_cast<size_t>(len)));
            i += static_cast<size_t>(len);
        } else {
            out.append(kReplacement);
            lossy = true;
            ++i;
        }
    }
    return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

size_t replace_all(std::string& s, std::string_view from, std::string_view to) {
    if (from.empty()) return 0;
    size_t count = 0;
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
        ++count;
    }
    return count;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write: " + path);
}

}  // namespace traceprobe
