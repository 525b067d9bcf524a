#pragma once

// Orchestration and reporting: evaluate a panel of prediction sources plus
// all three ensemble strategies on a shared validation split, rank everything
// by the composite score, and render the result table. Also checks externally
// published table rows for arithmetic consistency with the score formula,
// flagging rows whose printed overall score disagrees with the recomputation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ensemble.hpp"
#include "errors.hpp"
#include "fusionnet.hpp"
#include "metrics.hpp"
#include "predictions.hpp"

namespace fusecal {

constexpr double kRowFlagTolerance = 5e-4;  // matches 4-decimal rounding

struct RunConfig {
    std::vector<std::pair<std::string, std::string>> inputs;  // (path, model name)
    int ece_bins = 10;
    std::uint64_t seed = 0;  // threaded into the fusion TrainConfig
    double vote_threshold = 0.5;
    std::string output_dir = "out";
    std::vector<std::string> formats{"markdown", "csv", "json"};
    TrainConfig fusion;
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    if (!j.contains("inputs") || !j["inputs"].is_array() || j["inputs"].empty())
        throw ValidationError("run config needs a nonempty 'inputs' array");
    for (const auto& item : j["inputs"]) {
        const std::string path = item.at("path").get<std::string>();
        std::string name = item.value("name", std::string{});
        if (name.empty()) name = std::filesystem::path(path).stem().string();
        cfg.inputs.emplace_back(path, std::move(name));
    }
    cfg.ece_bins = j.value("ece_bins", cfg.ece_bins);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.vote_threshold = j.value("vote_threshold", cfg.vote_threshold);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.formats = j.value("formats", cfg.formats);
    if (j.contains("fusion")) cfg.fusion = train_config_from_json(j["fusion"]);
    return cfg;
}

struct RowFlag {
    std::string name;
    double printed = 0;
    double recomputed = 0;

    bool operator==(const RowFlag&) const = default;
};

struct RankedReport {
    std::vector<MetricsReport> rows;  // sorted by overall score, descending, stable
    std::vector<RowFlag> flags;

    bool operator==(const RankedReport&) const = default;
};

struct PublishedRow {
    std::string name;
    double auc = 0;
    double f1 = 0;
    double ece = 0;
    double printed_overall = 0;
};

// Recomputes S = auc + 0.5*f1 + 0.5*(1-ece) per row and flags disagreements
// beyond the tolerance.
inline std::vector<RowFlag> check_published_rows(const std::vector<PublishedRow>& rows,
                                                 double tolerance = kRowFlagTolerance) {
    std::vector<RowFlag> flags;
    for (const auto& r : rows) {
        const double recomputed = overall_score(r.auc, r.f1, r.ece);
        if (std::abs(recomputed - r.printed_overall) > tolerance)
            flags.push_back({r.name, r.printed_overall, recomputed});
    }
    return flags;
}

// CSV with header `name,auc,f1,ece,overall`.
inline std::vector<PublishedRow> load_published_rows(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    std::vector<PublishedRow> rows;
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("missing header row");
    if (std::string(detail::trim(line)) != "name,auc,f1,ece,overall")
        throw ValidationError("unexpected header row '" + std::string(detail::trim(line)) + "'");

    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++n;
        const auto fields = detail::split_csv_row(line);
        if (fields.size() != 5) throw ValidationError("cannot parse row " + std::to_string(n));
        PublishedRow row;
        row.name = std::string(fields[0]);
        if (!detail::parse_double(fields[1], row.auc) || !detail::parse_double(fields[2], row.f1) ||
            !detail::parse_double(fields[3], row.ece) ||
            !detail::parse_double(fields[4], row.printed_overall))
            throw ValidationError("cannot parse row " + std::to_string(n));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError("no data rows");
    return rows;
}

struct RunOutput {
    RankedReport report;
    FusionNetwork network;
    std::vector<EpochLog> log;
    std::vector<std::size_t> val_indices;
};

// Loads and aligns all inputs, trains the fusion network, then evaluates
// every base model and all three ensemble strategies on the fusion validation
// split (base models included so the rows are comparable). Deterministic
// under a fixed seed.
inline RunOutput run_evaluation(const RunConfig& cfg) {
    if (cfg.inputs.empty()) throw ValidationError("run config needs at least one input");
    if (cfg.ece_bins < 1) throw ValidationError("ece_bins must be >= 1");

    std::vector<PredictionSet> sets;
    sets.reserve(cfg.inputs.size());
    for (const auto& [path, name] : cfg.inputs)
        sets.push_back(load_prediction_set(path, name));
    PredictionPanel panel = align_panel(std::move(sets));

    TrainConfig fusion_cfg = cfg.fusion;
    fusion_cfg.seed = cfg.seed;
    fusion_cfg.ece_bins = cfg.ece_bins;
    TrainResult trained = train(panel, fusion_cfg);

    const PredictionPanel val_panel = panel.subset(trained.val_indices);

    RunOutput out;
    out.network = trained.network;
    out.log = trained.log;
    out.val_indices = trained.val_indices;

    for (const auto& m : val_panel.models)
        out.report.rows.push_back(evaluate(m, cfg.ece_bins));
    out.report.rows.push_back(
        evaluate(plurality_vote(val_panel, cfg.vote_threshold).fused, cfg.ece_bins));
    out.report.rows.push_back(evaluate(average_probs(val_panel).fused, cfg.ece_bins));
    out.report.rows.push_back(
        evaluate(label_fusion_predict(trained.network, val_panel).fused, cfg.ece_bins));

    std::stable_sort(out.report.rows.begin(), out.report.rows.end(),
                     [](const MetricsReport& a, const MetricsReport& b) { return a.overall > b.overall; });
    return out;
}

enum class ReportFormat { text, csv, json, markdown };

inline ReportFormat report_format_from_name(const std::string& name) {
    if (name == "text") return ReportFormat::text;
    if (name == "csv") return ReportFormat::csv;
    if (name == "json") return ReportFormat::json;
    if (name == "markdown") return ReportFormat::markdown;
    throw ValidationError("unknown report format '" + name + "'");
}

// Component metrics print with 4 decimals.
inline std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// Overall scores print with 5 decimals, trimmed to 4 when the fifth is zero,
// matching the mixed precision of the published tables.
inline std::string format_overall(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.5f", v);
    std::string s = buf;
    if (s.back() == '0') s.pop_back();
    return s;
}

namespace detail {

inline std::string flag_footnotes(const std::vector<RowFlag>& flags) {
    std::string out;
    for (const auto& f : flags)
        out += "[flag] " + f.name + ": printed " + format_overall(f.printed) + ", recomputed " +
               format_overall(f.recomputed) + "\n";
    return out;
}

}  // namespace detail

inline nlohmann::json to_json(const RankedReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) rows.push_back(to_json(r));
    nlohmann::json flags = nlohmann::json::array();
    for (const auto& f : report.flags)
        flags.push_back({{"name", f.name}, {"printed", f.printed}, {"recomputed", f.recomputed}});
    return {{"rows", rows}, {"flags", flags}};
}

inline RankedReport report_from_json(const nlohmann::json& j) {
    RankedReport report;
    for (const auto& r : j.at("rows")) report.rows.push_back(metrics_report_from_json(r));
    for (const auto& f : j.at("flags"))
        report.flags.push_back({f.at("name").get<std::string>(), f.at("printed").get<double>(),
                                f.at("recomputed").get<double>()});
    return report;
}

// Columns follow the published table order:
// Network | AUC | F1 Score | ECE | Overall Score.
inline std::string emit_report(const RankedReport& report, ReportFormat format) {
    switch (format) {
        case ReportFormat::json:
            return to_json(report).dump(2) + "\n";
        case ReportFormat::csv: {
            std::string out = "network,auc,f1,ece,overall\n";
            for (const auto& r : report.rows)
                out += r.model_name + "," + format_metric(r.auc) + "," + format_metric(r.f1) +
                       "," + format_metric(r.ece) + "," + format_overall(r.overall) + "\n";
            if (!report.flags.empty()) out += detail::flag_footnotes(report.flags);
            return out;
        }
        case ReportFormat::markdown: {
            std::string out = "| Network | AUC | F1 Score | ECE | Overall Score |\n";
            out += "|---|---|---|---|---|\n";
            for (const auto& r : report.rows)
                out += "| " + r.model_name + " | " + format_metric(r.auc) + " | " +
                       format_metric(r.f1) + " | " + format_metric(r.ece) + " | " +
                       format_overall(r.overall) + " |\n";
            if (!report.flags.empty()) out += "\n" + detail::flag_footnotes(report.flags);
            return out;
        }
        case ReportFormat::text: {
            std::size_t name_width = 7;  // "Network"
            for (const auto& r : report.rows) name_width = std::max(name_width, r.model_name.size());
            std::string out;
            char buf[160];
            std::snprintf(buf, sizeof buf, "%-*s  %-7s  %-8s  %-7s  %s\n",
                          static_cast<int>(name_width), "Network", "AUC", "F1 Score", "ECE",
                          "Overall Score");
            out += buf;
            for (const auto& r : report.rows) {
                std::snprintf(buf, sizeof buf, "%-*s  %-7s  %-8s  %-7s  %s\n",
                              static_cast<int>(name_width), r.model_name.c_str(),
                              format_metric(r.auc).c_str(), format_metric(r.f1).c_str(),
                              format_metric(r.ece).c_str(), format_overall(r.overall).c_str());
                out += buf;
            }
            if (!report.flags.empty()) out += detail::flag_footnotes(report.flags);
            return out;
        }
    }
    throw ValidationError("unknown report format");
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("cannot write " + path.string());
}

// Fixed output names under cfg.output_dir: report.md / report.csv /
// report.json per the configured formats, plus fusion_net.json and
// training_log.csv.
inline void write_run_outputs(const RunConfig& cfg, const RunOutput& out) {
    const std::filesystem::path dir(cfg.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string());

    for (const auto& fmt : cfg.formats) {
        const ReportFormat f = report_format_from_name(fmt);
        const char* name = nullptr;
        switch (f) {
            case ReportFormat::markdown: name = "report.md"; break;
            case ReportFormat::csv: name = "report.csv"; break;
            case ReportFormat::json: name = "report.json"; break;
            case ReportFormat::text: name = "report.txt"; break;
        }
        write_text_file(dir / name, emit_report(out.report, f));
    }

    TrainConfig used = cfg.fusion;
    used.seed = cfg.seed;
    used.ece_bins = cfg.ece_bins;
    save_network(out.network, dir / "fusion_net.json", &used);
    write_text_file(dir / "training_log.csv", training_log_csv(out.log));
}

}  // namespace fusecal
