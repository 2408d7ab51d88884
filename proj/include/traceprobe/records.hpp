#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "traceprobe/core.hpp"

namespace traceprobe {

/// First line of every record file. Carries enough to refuse
/// mixed-configuration inputs at analysis time.
struct FileHeader {
    int schema_version = kSchemaVersion;
    std::string tool_version = kToolVersion;
    std::string config_digest;
    std::string kind;  // traces | slices | probes | transfers | metrics | dataset

    json to_json() const;
    static FileHeader from_json(const json& j);
};

/// Append-only JSONL writer. Writes the header when creating a new file;
/// when opening an existing file the header must match (resume path).
/// Each record is one line, flushed immediately.
class JsonlWriter {
public:
    JsonlWriter(const std::filesystem::path& path, const FileHeader& header);

    void write(const json& record);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

struct JsonlFile {
    FileHeader header;
    std::vector<json> records;
};

/// Reads a whole record file. A trailing truncated line (interrupted write)
/// is dropped; any other parse failure throws with the line number.
JsonlFile read_jsonl(const std::filesystem::path& path);

/// Repairs a file whose last line was cut short by an interrupt, so a
/// subsequent append produces valid JSONL. Returns true if a line was cut.
bool trim_truncated_tail(const std::filesystem::path& path);

std::string dump_record(const json& record);

}  // namespace traceprobe
