#pragma once

// Canonical data model for classifier outputs: per-sample records, per-model
// prediction sets, and multi-model panels aligned on a shared sample roster.
// Sets are immutable values once loaded; loading either yields a fully
// validated set or throws a ValidationError naming the offending row.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"

namespace fusecal {

struct PredictionRecord {
    std::string sample_id;
    int label = 0;      // 1 = positive class
    double prob = 0.0;  // probability of the positive class

    bool operator==(const PredictionRecord&) const = default;
};

struct PredictionSet {
    std::string model_name;
    std::vector<PredictionRecord> records;

    bool operator==(const PredictionSet&) const = default;

    std::vector<double> probs() const {
        std::vector<double> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back(r.prob);
        return out;
    }

    std::vector<int> labels() const {
        std::vector<int> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back(r.label);
        return out;
    }
};

// All member sets share the same sample roster in canonical (lexicographic
// sample_id) order, with agreeing labels. Build one through align_panel.
struct PredictionPanel {
    std::vector<PredictionSet> models;

    std::size_t n_models() const { return models.size(); }
    std::size_t n_samples() const { return models.empty() ? 0 : models.front().records.size(); }

    std::vector<int> labels() const { return models.front().labels(); }

    std::vector<std::string> model_names() const {
        std::vector<std::string> out;
        out.reserve(models.size());
        for (const auto& m : models) out.push_back(m.model_name);
        return out;
    }

    std::vector<std::string> sample_ids() const {
        std::vector<std::string> out;
        out.reserve(n_samples());
        for (const auto& r : models.front().records) out.push_back(r.sample_id);
        return out;
    }

    // Member probabilities of sample i, in model order.
    std::vector<double> sample_inputs(std::size_t i) const {
        std::vector<double> out;
        out.reserve(models.size());
        for (const auto& m : models) out.push_back(m.records[i].prob);
        return out;
    }

    PredictionPanel subset(std::span<const std::size_t> indices) const {
        PredictionPanel out;
        out.models.reserve(models.size());
        for (const auto& m : models) {
            PredictionSet s;
            s.model_name = m.model_name;
            s.records.reserve(indices.size());
            for (std::size_t i : indices) s.records.push_back(m.records[i]);
            out.models.push_back(std::move(s));
        }
        return out;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_csv_row(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return fields;
}

// Locale-independent; "." decimal separator only.
inline bool parse_double(std::string_view s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last && !s.empty();
}

inline bool parse_label(std::string_view s, int& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

inline std::string shortest_double(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline void check_record(const PredictionRecord& rec, std::size_t row) {
    if (rec.sample_id.empty())
        throw ValidationError("empty sample_id at row " + std::to_string(row));
    if (rec.sample_id.find_first_of(",\n\r") != std::string::npos)
        throw ValidationError("invalid sample_id at row " + std::to_string(row));
    if (rec.label != 0 && rec.label != 1)
        throw ValidationError("label out of range at row " + std::to_string(row));
    if (!(rec.prob >= 0.0 && rec.prob <= 1.0))
        throw ValidationError("prob out of range at row " + std::to_string(row));
}

inline void check_unique_ids(const PredictionSet& set) {
    std::unordered_set<std::string_view> seen;
    seen.reserve(set.records.size());
    for (const auto& r : set.records) {
        if (!seen.insert(r.sample_id).second)
            throw ValidationError("duplicate sample_id " + r.sample_id);
    }
}

}  // namespace detail

// CSV body: header `sample_id,label,prob`, or the two-column softmax variant
// `sample_id,label,prob0,prob1` which is normalized to the positive column.
// Row numbers in error messages are 1-based over data rows.
inline PredictionSet parse_prediction_csv(std::string_view text, std::string model_name) {
    PredictionSet set;
    set.model_name = std::move(model_name);

    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);  // UTF-8 BOM
    std::size_t offset = 0;
    auto next_line = [&](std::string_view& line) {
        if (offset >= text.size()) return false;
        std::size_t end = text.find('\n', offset);
        if (end == std::string_view::npos) end = text.size();
        line = text.substr(offset, end - offset);
        offset = end + 1;
        return true;
    };

    std::string_view header;
    if (!next_line(header)) throw ValidationError("missing header row");
    auto head = detail::split_csv_row(header);
    bool softmax = false;
    if (head.size() == 3 && head[0] == "sample_id" && head[1] == "label" && head[2] == "prob") {
        softmax = false;
    } else if (head.size() == 4 && head[0] == "sample_id" && head[1] == "label" &&
               head[2] == "prob0" && head[3] == "prob1") {
        softmax = true;
    } else {
        throw ValidationError("unexpected header row '" + std::string(detail::trim(header)) + "'");
    }

    std::string_view line;
    std::size_t row = 0;
    while (next_line(line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        auto fields = detail::split_csv_row(line);
        if (fields.size() != (softmax ? 4u : 3u))
            throw ValidationError("cannot parse row " + std::to_string(row));

        PredictionRecord rec;
        rec.sample_id = std::string(fields[0]);
        if (!detail::parse_label(fields[1], rec.label))
            throw ValidationError("cannot parse row " + std::to_string(row));
        if (softmax) {
            double p0 = 0.0, p1 = 0.0;
            if (!detail::parse_double(fields[2], p0) || !detail::parse_double(fields[3], p1))
                throw ValidationError("cannot parse row " + std::to_string(row));
            if (!(p0 >= 0.0) || !(p1 >= 0.0) || p0 + p1 <= 0.0)
                throw ValidationError("prob out of range at row " + std::to_string(row));
            rec.prob = p1 / (p0 + p1);
        } else {
            if (!detail::parse_double(fields[2], rec.prob))
                throw ValidationError("cannot parse row " + std::to_string(row));
        }
        detail::check_record(rec, row);
        set.records.push_back(std::move(rec));
    }

    if (set.records.empty()) throw ValidationError("no data rows");
    detail::check_unique_ids(set);
    return set;
}

// JSON form: array of objects with keys sample_id (string), label (integer),
// prob (number).
inline PredictionSet parse_prediction_json(std::string_view text, std::string model_name) {
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_array())
        throw ValidationError("expected a JSON array of prediction objects");

    PredictionSet set;
    set.model_name = std::move(model_name);
    std::size_t row = 0;
    for (const auto& item : doc) {
        ++row;
        if (!item.is_object() || !item.contains("sample_id") || !item.contains("label") ||
            !item.contains("prob") || !item["sample_id"].is_string() ||
            !item["label"].is_number_integer() || !item["prob"].is_number())
            throw ValidationError("cannot parse row " + std::to_string(row));
        PredictionRecord rec;
        rec.sample_id = item["sample_id"].get<std::string>();
        rec.label = item["label"].get<int>();
        rec.prob = item["prob"].get<double>();
        detail::check_record(rec, row);
        set.records.push_back(std::move(rec));
    }
    if (set.records.empty()) throw ValidationError("no data rows");
    detail::check_unique_ids(set);
    return set;
}

inline PredictionSet load_prediction_set(const std::filesystem::path& path, std::string model_name) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    std::size_t first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[')
        return parse_prediction_json(text, std::move(model_name));
    return parse_prediction_csv(text, std::move(model_name));
}

inline std::string to_csv(const PredictionSet& set) {
    std::string out = "sample_id,label,prob\n";
    for (const auto& r : set.records) {
        out += r.sample_id;
        out += ',';
        out += std::to_string(r.label);
        out += ',';
        out += detail::shortest_double(r.prob);
        out += '\n';
    }
    return out;
}

inline nlohmann::json to_json(const PredictionSet& set) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : set.records)
        arr.push_back({{"sample_id", r.sample_id}, {"label", r.label}, {"prob", r.prob}});
    return arr;
}

// Extension picks the format: .json writes the JSON array, anything else CSV.
inline void save_prediction_set(const PredictionSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    if (path.extension() == ".json")
        out << to_json(set).dump(2) << '\n';
    else
        out << to_csv(set);
    if (!out) throw IoError("cannot write " + path.string());
}

// Reorders every set to canonical (lexicographic sample_id) order and checks
// the panel invariants: identical rosters, agreeing labels. Idempotent.
inline PredictionPanel align_panel(std::vector<PredictionSet> sets) {
    if (sets.empty()) throw ValidationError("no prediction sets");

    for (auto& set : sets) {
        std::sort(set.records.begin(), set.records.end(),
                  [](const PredictionRecord& a, const PredictionRecord& b) {
                      return a.sample_id < b.sample_id;
                  });
    }

    const PredictionSet& ref = sets.front();
    for (std::size_t m = 1; m < sets.size(); ++m) {
        const PredictionSet& cur = sets[m];
        if (cur.records.size() != ref.records.size())
            throw ValidationError("sample sets differ (model '" + ref.model_name + "' vs '" +
                                  cur.model_name + "')");
        for (std::size_t i = 0; i < ref.records.size(); ++i) {
            if (cur.records[i].sample_id != ref.records[i].sample_id)
                throw ValidationError("sample sets differ (model '" + ref.model_name + "' vs '" +
                                      cur.model_name + "')");
            if (cur.records[i].label != ref.records[i].label)
                throw ValidationError("label conflict for sample_id " + ref.records[i].sample_id +
                                      " (model '" + ref.model_name + "' vs '" + cur.model_name +
                                      "')");
        }
    }

    PredictionPanel panel;
    panel.models = std::move(sets);
    return panel;
}

}  // namespace fusecal
