#include "traceprobe/records.hpp"

#include <system_error>

#include "traceprobe/util.hpp"

namespace traceprobe {

json FileHeader::to_json() const {
    return json{{"type", "header"},
                {"schema_version", schema_version},
                {"tool_version", tool_version},
                {"config_digest", config_digest},
                {"kind", kind}};
}

FileHeader FileHeader::from_json(const json& j) {
    FileHeader h;
    h.schema_version = j.at("schema_version").get<int>();
    h.tool_version = j.at("tool_version").get<std::string>();
    h.config_digest = j.at("config_digest").get<std::string>();
    h.kind = j.at("kind").get<std::string>();
    return h;
}

std::string dump_record(const json& record) {
    return record.dump();
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path, const FileHeader& header)
    : path_(path) {
    std::filesystem::create_directories(path.parent_path());
    const bool exists = std::filesystem::exists(path) && std::filesystem::file_size(path) > 0;
    if (exists) {
        trim_truncated_tail(path);
        const JsonlFile existing = read_jsonl(path);
        if (existing.header.config_digest != header.config_digest) {
            throw ConfigError("config digest mismatch for " + path.string() + " (file " +
                              existing.header.config_digest + ", run " + header.config_digest +
                              ")");
        }
        if (existing.header.schema_version != header.schema_version) {
            throw ConfigError("schema version mismatch for " + path.string());
        }
        out_.open(path, std::ios::binary | std::ios::app);
    } else {
        out_.open(path, std::ios::binary | std::ios::trunc);
        if (out_) {
            out_ << dump_record(header.to_json()) << '\n';
            out_.flush();
        }
    }
    if (!out_) throw std::runtime_error("cannot open for writing: " + path.string());
}

void JsonlWriter::write(const json& record) {
    out_ << dump_record(record) << '\n';
    out_.flush();
    if (!out_) throw std::runtime_error("write failed: " + path_.string());
}

JsonlFile read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open record file: " + path.string());
    JsonlFile file;
    std::string line;
    size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            if (in.eof()) break;  // interrupted final write
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                                     e.what());
        }
        if (!have_header) {
            if (j.value("type", "") != "header") {
                throw std::runtime_error(path.string() + ": missing header record");
            }
            file.header = FileHeader::from_json(j);
            have_header = true;
        } else {
            file.records.push_back(std::move(j));
        }
    }
    if (!have_header) throw std::runtime_error(path.string() + ": empty record file");
    return file;
}

bool trim_truncated_tail(const std::filesystem::path& path) {
    std::string content = read_text_file(path.string());
    if (content.empty() || content.back() == '\n') return false;
    const size_t cut = content.find_last_of('\n');
    content.resize(cut == std::string::npos ? 0 : cut + 1);
    write_text_file(path.string(), content);
    return true;
}

}  // namespace traceprobe
