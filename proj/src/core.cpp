#include "traceprobe/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "traceprobe/util.hpp"

namespace traceprobe {

std::string to_string(Family f) {
    return f == Family::think_tag ? "think-tag" : "channel";
}

std::string to_string(FinishReason r) {
    return r == FinishReason::closed ? "closed" : "budget_exhausted";
}

std::string to_string(Condition c) {
    switch (c) {
        case Condition::original: return "original";
        case Condition::random: return "random";
        case Condition::swap: return "swap";
        case Condition::shuffle: return "shuffle";
    }
    return "original";
}

std::string to_string(ProbeMode m) {
    switch (m) {
        case ProbeMode::standard: return "standard";
        case ProbeMode::transfer_base: return "transfer_base";
        case ProbeMode::transfer_free: return "transfer_free";
    }
    return "standard";
}

std::string to_string(SuffixKind s) {
    switch (s) {
        case SuffixKind::full: return "full";
        case SuffixKind::minimal: return "minimal";
        case SuffixKind::channel_close: return "channel_close";
    }
    return "full";
}

Family family_from_string(const std::string& s) {
    if (s == "think-tag") return Family::think_tag;
    if (s == "channel") return Family::channel;
    throw ConfigError("unknown model family: " + s);
}

FinishReason finish_reason_from_string(const std::string& s) {
    if (s == "closed") return FinishReason::closed;
    if (s == "budget_exhausted") return FinishReason::budget_exhausted;
    throw std::runtime_error("unknown finish_reason: " + s);
}

Condition condition_from_string(const std::string& s) {
    if (s == "original") return Condition::original;
    if (s == "random") return Condition::random;
    if (s == "swap") return Condition::swap;
    if (s == "shuffle") return Condition::shuffle;
    throw std::runtime_error("unknown condition: " + s);
}

ProbeMode probe_mode_from_string(const std::string& s) {
    if (s == "standard") return ProbeMode::standard;
    if (s == "transfer_base") return ProbeMode::transfer_base;
    if (s == "transfer_free") return ProbeMode::transfer_free;
    throw std::runtime_error("unknown probe mode: " + s);
}

SuffixKind suffix_kind_from_string(const std::string& s) {
    if (s == "full") return SuffixKind::full;
    if (s == "minimal") return SuffixKind::minimal;
    if (s == "channel_close") return SuffixKind::channel_close;
    throw std::runtime_error("unknown suffix variant: " + s);
}

void BenchmarkItem::validate() const {
    if (item_id.empty()) throw std::runtime_error("item with empty item_id");
    if (options.size() != choice_set.size()) {
        throw std::runtime_error("item " + item_id + ": option count " +
                                 std::to_string(options.size()) + " != choice count " +
                                 std::to_string(choice_set.size()));
    }
    if (choice_set.empty()) throw std::runtime_error("item " + item_id + ": empty choice set");
    for (size_t i = 0; i < choice_set.size(); ++i) {
        if (choice_set[i] != static_cast<Letter>('A' + i)) {
            throw std::runtime_error("item " + item_id +
                                     ": choice set must be A.. in order, got " +
                                     std::string(1, choice_set[i]) + " at index " +
                                     std::to_string(i));
        }
    }
    if (std::find(choice_set.begin(), choice_set.end(), gold_letter) == choice_set.end()) {
        throw std::runtime_error("item " + item_id + ": gold letter " +
                                 std::string(1, gold_letter) + " outside choice set");
    }
}

std::string ProbeRecord::idempotency_key() const {
    std::string key = item_id + "|" + probe_model_id + "|" + source_model_id + "|" +
                      std::to_string(decile) + "|" + to_string(condition) + "|" +
                      to_string(mode) + "|" + std::to_string(run_seed) + "|" +
                      to_string(suffix_variant);
    return hex64(fnv1a64(key));
}

Letter argmax_answer(const AnswerDistribution& dist, const std::vector<Letter>& choice_set,
                     bool& tie) {
    if (choice_set.empty()) throw std::runtime_error("argmax over empty choice set");
    Letter best = 0;
    double best_p = -1.0;
    tie = false;
    for (Letter letter : choice_set) {  // choice sets are ordered A.., so first max wins
        const auto it = dist.choice_probs.find(letter);
        const double p = it == dist.choice_probs.end() ? 0.0 : it->second;
        if (p > best_p) {
            best = letter;
            best_p = p;
            tie = false;
        } else if (p == best_p) {
            tie = true;
        }
    }
    return best;
}

namespace {

std::string letters_to_string(const std::vector<Letter>& letters) {
    return std::string(letters.begin(), letters.end());
}

std::vector<Letter> letters_from_string(const std::string& s) {
    return std::vector<Letter>(s.begin(), s.end());
}

}  // namespace

json to_json(const BenchmarkItem& item) {
    json j{{"type", "item"},
           {"item_id", item.item_id},
           {"question", item.question_text},
           {"options", item.options},
           {"choices", letters_to_string(item.choice_set)},
           {"gold", std::string(1, item.gold_letter)}};
    if (!item.category.empty()) j["category"] = item.category;
    return j;
}

BenchmarkItem item_from_json(const json& j) {
    BenchmarkItem item;
    item.item_id = j.at("item_id").get<std::string>();
    item.question_text = j.at("question").get<std::string>();
    item.options = j.at("options").get<std::vector<std::string>>();
    item.choice_set = letters_from_string(j.at("choices").get<std::string>());
    const auto gold = j.at("gold").get<std::string>();
    if (gold.size() != 1) throw std::runtime_error("gold must be a single letter");
    item.gold_letter = gold[0];
    if (j.contains("category")) item.category = j.at("category").get<std::string>();
    item.validate();
    return item;
}

json to_json(const ReasoningTrace& trace) {
    json j{{"type", "trace"},
           {"item_id", trace.item_id},
           {"model_id", trace.model_id},
           {"run_seed", trace.run_seed},
           {"text", trace.text},
           {"token_len", trace.token_len},
           {"finish_reason", to_string(trace.finish_reason)}};
    if (trace.final_letter_raw) j["final_letter_raw"] = std::string(1, *trace.final_letter_raw);
    return j;
}

ReasoningTrace trace_from_json(const json& j) {
    ReasoningTrace t;
    t.item_id = j.at("item_id").get<std::string>();
    t.model_id = j.at("model_id").get<std::string>();
    t.run_seed = j.at("run_seed").get<uint64_t>();
    t.text = j.at("text").get<std::string>();
    t.token_len = j.at("token_len").get<int>();
    t.finish_reason = finish_reason_from_string(j.at("finish_reason").get<std::string>());
    if (j.contains("final_letter_raw")) {
        const auto s = j.at("final_letter_raw").get<std::string>();
        if (!s.empty()) t.final_letter_raw = s[0];
    }
    return t;
}

json to_json(const TraceSlice& slice) {
    json j{{"type", "slice"},
           {"item_id", slice.item_id},
           {"model_id", slice.model_id},
           {"run_seed", slice.run_seed},
           {"decile", slice.decile},
           {"token_len", slice.token_len},
           {"text", slice.text},
           {"condition", to_string(slice.condition)}};
    if (slice.donor_item_id) j["donor_item_id"] = *slice.donor_item_id;
    if (slice.seed) j["seed"] = *slice.seed;
    if (slice.lossy_decode) j["lossy_decode"] = true;
    if (slice.swap_padded) j["swap_padded"] = true;
    return j;
}

TraceSlice slice_from_json(const json& j) {
    TraceSlice s;
    s.item_id = j.at("item_id").get<std::string>();
    s.model_id = j.at("model_id").get<std::string>();
    if (j.contains("run_seed")) s.run_seed = j.at("run_seed").get<uint64_t>();
    s.decile = j.at("decile").get<int>();
    s.token_len = j.at("token_len").get<int>();
    s.text = j.at("text").get<std::string>();
    s.condition = condition_from_string(j.at("condition").get<std::string>());
    if (j.contains("donor_item_id")) s.donor_item_id = j.at("donor_item_id").get<std::string>();
    if (j.contains("seed")) s.seed = j.at("seed").get<uint64_t>();
    if (j.contains("lossy_decode")) s.lossy_decode = j.at("lossy_decode").get<bool>();
    if (j.contains("swap_padded")) s.swap_padded = j.at("swap_padded").get<bool>();
    return s;
}

json to_json(const AnswerDistribution& dist) {
    json probs = json::object();
    for (const auto& [letter, p] : dist.choice_probs) probs[std::string(1, letter)] = p;
    json top = json::array();
    for (const auto& [token, p] : dist.non_choice_top) top.push_back(json::array({token, p}));
    json j{{"choice_probs", probs}, {"non_choice_top", top},
           {"non_choice_mass", dist.non_choice_mass}};
    if (!dist.below_topk.empty()) j["below_topk"] = letters_to_string(dist.below_topk);
    return j;
}

AnswerDistribution distribution_from_json(const json& j) {
    AnswerDistribution d;
    for (const auto& [key, value] : j.at("choice_probs").items()) {
        if (key.size() != 1) throw std::runtime_error("choice key must be a single letter");
        d.choice_probs[key[0]] = value.get<double>();
    }
    for (const auto& entry : j.at("non_choice_top")) {
        d.non_choice_top.emplace_back(entry.at(0).get<std::string>(), entry.at(1).get<double>());
    }
    d.non_choice_mass = j.at("non_choice_mass").get<double>();
    if (j.contains("below_topk")) d.below_topk = letters_from_string(j.at("below_topk").get<std::string>());
    return d;
}

json to_json(const ProbeRecord& record) {
    json j{{"type", "probe"},
           {"item_id", record.item_id},
           {"probe_model_id", record.probe_model_id},
           {"source_model_id", record.source_model_id},
           {"decile", record.decile},
           {"condition", to_string(record.condition)},
           {"mode", to_string(record.mode)},
           {"run_seed", record.run_seed},
           {"distribution", to_json(record.distribution)},
           {"argmax_letter", std::string(1, record.argmax_letter)},
           {"correct", record.correct},
           {"suffix_variant", to_string(record.suffix_variant)},
           {"idem", record.idempotency_key()}};
    if (record.argmax_tie) j["argmax_tie"] = true;
    if (record.continuation_tokens > 0) j["continuation_tokens"] = record.continuation_tokens;
    if (!record.flags.empty()) j["flags"] = record.flags;
    return j;
}

ProbeRecord probe_from_json(const json& j) {
    ProbeRecord r;
    r.item_id = j.at("item_id").get<std::string>();
    r.probe_model_id = j.at("probe_model_id").get<std::string>();
    r.source_model_id = j.at("source_model_id").get<std::string>();
    r.decile = j.at("decile").get<int>();
    r.condition = condition_from_string(j.at("condition").get<std::string>());
    r.mode = probe_mode_from_string(j.at("mode").get<std::string>());
    r.run_seed = j.at("run_seed").get<uint64_t>();
    r.distribution = distribution_from_json(j.at("distribution"));
    const auto argmax = j.at("argmax_letter").get<std::string>();
    if (argmax.size() != 1) throw std::runtime_error("argmax_letter must be a single letter");
    r.argmax_letter = argmax[0];
    r.correct = j.at("correct").get<bool>();
    r.suffix_variant = suffix_kind_from_string(j.at("suffix_variant").get<std::string>());
    if (j.contains("argmax_tie")) r.argmax_tie = j.at("argmax_tie").get<bool>();
    if (j.contains("continuation_tokens")) r.continuation_tokens = j.at("continuation_tokens").get<int>();
    if (j.contains("flags")) r.flags = j.at("flags").get<std::vector<std::string>>();
    return r;
}

namespace {

std::vector<std::string> parse_csv_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool in_quotes = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '"') {
            if (in_quotes && i + 1 < line.size() && line[i + 1] == '"') {
                cell.push_back('"');
                ++i;
            } else {
                in_quotes = !in_quotes;
            }
        } else if (c == ',' && !in_quotes) {
            cells.push_back(cell);
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    cells.push_back(cell);
    return cells;
}

// CSV columns: item_id,question,options,answer[,category]; options are
// '|'-separated in file order.
BenchmarkItem item_from_csv_cells(const std::vector<std::string>& cells) {
    if (cells.size() < 4) throw std::runtime_error("expected at least 4 columns");
    BenchmarkItem item;
    item.item_id = cells[0];
    item.question_text = cells[1];
    std::stringstream opts(cells[2]);
    std::string opt;
    while (std::getline(opts, opt, '|')) item.options.push_back(opt);
    for (size_t i = 0; i < item.options.size(); ++i) {
        item.choice_set.push_back(static_cast<Letter>('A' + i));
    }
    if (cells[3].size() != 1) throw std::runtime_error("answer must be a single letter");
    item.gold_letter = cells[3][0];
    if (cells.size() > 4) item.category = cells[4];
    item.validate();
    return item;
}

DatasetFormat detect_format(const std::string& path) {
    if (path.ends_with(".csv")) return DatasetFormat::csv;
    return DatasetFormat::jsonl;
}

}  // namespace

std::vector<BenchmarkItem> load_dataset(const std::string& path, DatasetFormat format) {
    if (format == DatasetFormat::auto_detect) format = detect_format(path);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);

    std::vector<BenchmarkItem> items;
    std::set<std::string> seen_ids;
    std::string line;
    size_t line_no = 0;
    bool csv_header_skipped = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            BenchmarkItem item;
            if (format == DatasetFormat::csv) {
                if (!csv_header_skipped) {
                    csv_header_skipped = true;
                    continue;
                }
                item = item_from_csv_cells(parse_csv_row(line));
            } else {
                const json j = json::parse(line);
                if (j.value("type", "item") == "header") continue;
                item = item_from_json(j);
            }
            if (!seen_ids.insert(item.item_id).second) {
                throw std::runtime_error("duplicate item_id " + item.item_id);
            }
            items.push_back(std::move(item));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return items;
}

std::vector<std::string> validate_record(const ProbeRecord& record, const BenchmarkItem& item) {
    std::vector<std::string> violations;
    if (record.item_id != item.item_id) {
        violations.push_back("record item_id " + record.item_id + " does not match item " +
                             item.item_id);
        return violations;
    }

    const auto& dist = record.distribution;
    double choice_sum = 0.0;
    for (const auto& [letter, p] : dist.choice_probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            violations.push_back("probability out of range for choice " + std::string(1, letter));
        }
        choice_sum += p;
    }
    for (Letter letter : item.choice_set) {
        if (!dist.choice_probs.count(letter)) {
            violations.push_back("missing choice " + std::string(1, letter));
        }
    }
    if (!(dist.non_choice_mass >= 0.0 && dist.non_choice_mass <= 1.0)) {
        violations.push_back("non_choice_mass out of range");
    }
    for (const auto& [token, p] : dist.non_choice_top) {
        if (!(p >= 0.0 && p <= 1.0)) {
            violations.push_back("probability out of range for non-choice token '" + token + "'");
        }
    }
    if (choice_sum + dist.non_choice_mass > 1.0 + 1e-6) {
        violations.push_back("total probability mass exceeds 1");
    }

    bool tie = false;
    const Letter expected = argmax_answer(dist, item.choice_set, tie);
    if (record.argmax_letter != expected) violations.push_back("argmax mismatch");
    if (record.correct != (record.argmax_letter == item.gold_letter)) {
        violations.push_back("correct flag inconsistent with gold letter");
    }
    return violations;
}

}  // namespace traceprobe
