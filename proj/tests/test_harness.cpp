#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "fusecal/harness.hpp"
#include "fusecal/synthgen.hpp"
#include "test_util.hpp"

using namespace fusecal;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

TEST_CASE("check_published_rows flags exactly the two inconsistent rows") {
    const auto rows = load_published_rows(testutil::data_dir() / "published_rows.csv");
    REQUIRE(rows.size() == 8);

    const auto flags = check_published_rows(rows);
    REQUIRE(flags.size() == 2);
    CHECK(flags[0].name == "VGG-19");
    CHECK_THAT(flags[0].recomputed, WithinAbs(1.3731, 5e-5));
    CHECK_THAT(flags[0].printed, WithinAbs(1.4231, 1e-12));
    CHECK(flags[1].name == "Label Fusion");
    CHECK_THAT(flags[1].recomputed, WithinAbs(1.3843, 5e-5));
    CHECK_THAT(flags[1].printed, WithinAbs(1.4343, 1e-12));
}

TEST_CASE("flagging respects the tolerance boundary") {
    // Within the tolerance is consistent; beyond it is flagged.
    const double s = overall_score(0.7, 0.6, 0.2);
    CHECK(check_published_rows({{"near", 0.7, 0.6, 0.2, s + 4.9e-4}}, 5e-4).empty());
    CHECK(check_published_rows({{"past", 0.7, 0.6, 0.2, s + 6.1e-4}}, 5e-4).size() == 1);
}

TEST_CASE("published row parsing rejects malformed files") {
    testutil::TempDir tmp;
    testutil::spit(tmp.file("bad.csv"), "name,auc\nX,0.5\n");
    CHECK_THROWS_WITH(load_published_rows(tmp.file("bad.csv")), ContainsSubstring("unexpected header"));
    testutil::spit(tmp.file("bad2.csv"), "name,auc,f1,ece,overall\nX,zero,0.5,0.5,1.0\n");
    CHECK_THROWS_WITH(load_published_rows(tmp.file("bad2.csv")), ContainsSubstring("cannot parse row 1"));
    CHECK_THROWS_AS(load_published_rows(tmp.file("absent.csv")), IoError);
}

namespace {

RankedReport sample_report() {
    RankedReport report;
    report.rows.push_back({"Densenet-121", 0.7617, 0.7347, 0.2057, overall_score(0.7617, 0.7347, 0.2057)});
    report.rows.push_back({"Resnet-152", 0.7633, 0.6275, 0.1966, overall_score(0.7633, 0.6275, 0.1966)});
    report.flags.push_back({"VGG-19", 1.4231, 1.3731});
    return report;
}

}  // namespace

TEST_CASE("markdown report matches the published table layout") {
    const auto md = emit_report(sample_report(), ReportFormat::markdown);
    CHECK(md.rfind("| Network | AUC | F1 Score | ECE | Overall Score |\n", 0) == 0);
    CHECK_THAT(md, ContainsSubstring("| Densenet-121 | 0.7617 | 0.7347 | 0.2057 | 1.5262 |"));
    CHECK_THAT(md, ContainsSubstring("| Resnet-152 | 0.7633 | 0.6275 | 0.1966 | 1.47875 |"));
    CHECK_THAT(md, ContainsSubstring("[flag] VGG-19: printed 1.4231, recomputed 1.3731"));

    RankedReport clean = sample_report();
    clean.flags.clear();
    CHECK_THAT(emit_report(clean, ReportFormat::markdown),
               !ContainsSubstring("[flag]"));
}

TEST_CASE("csv and text reports carry the same rows") {
    const auto csv = emit_report(sample_report(), ReportFormat::csv);
    CHECK(csv.rfind("network,auc,f1,ece,overall\n", 0) == 0);
    CHECK_THAT(csv, ContainsSubstring("Densenet-121,0.7617,0.7347,0.2057,1.5262"));

    const auto text = emit_report(sample_report(), ReportFormat::text);
    CHECK_THAT(text, ContainsSubstring("Network"));
    CHECK_THAT(text, ContainsSubstring("Overall Score"));
    CHECK_THAT(text, ContainsSubstring("1.47875"));
}

TEST_CASE("report JSON round trip is lossless") {
    RankedReport report;
    Rng rng(55);
    for (int i = 0; i < 6; ++i) {
        const double auc = rng.next_double();
        const double f1 = rng.next_double();
        const double ece = rng.next_double();
        report.rows.push_back({"model_" + std::to_string(i), auc, f1, ece,
                               overall_score(auc, f1, ece)});
    }
    report.flags.push_back({"model_0", 1.23456789, rng.next_double()});

    CHECK(report_from_json(to_json(report)) == report);
    CHECK(report_from_json(nlohmann::json::parse(emit_report(report, ReportFormat::json))) == report);
}

TEST_CASE("every emitted row satisfies the score identity") {
    const auto report = sample_report();
    for (const auto& r : report.rows)
        CHECK_THAT(r.overall, WithinAbs(r.auc + 0.5 * r.f1 + 0.5 * (1.0 - r.ece), 1e-12));
}

TEST_CASE("overall score formatting uses four or five decimals") {
    CHECK(format_overall(1.5262) == "1.5262");
    CHECK(format_overall(1.47875) == "1.47875");
    CHECK(format_overall(2.0) == "2.0000");
    CHECK(format_overall(1.38625) == "1.38625");
    CHECK(format_metric(0.7617) == "0.7617");
}

namespace {

// Deterministic synthetic panel written to disk as CSV inputs.
std::vector<std::pair<std::string, std::string>> write_panel_files(
    const testutil::TempDir& tmp, const SyntheticSpec& spec) {
    const auto panel = generate_panel(spec);
    std::vector<std::pair<std::string, std::string>> inputs;
    for (const auto& m : panel.models) {
        const auto path = tmp.file(m.model_name + ".csv");
        save_prediction_set(m, path);
        inputs.emplace_back(path.string(), m.model_name);
    }
    return inputs;
}

}  // namespace

TEST_CASE("run_evaluation produces one row per source and ensemble") {
    testutil::TempDir tmp;
    RunConfig cfg;
    cfg.inputs = write_panel_files(tmp, {80, 80, 2.0, {1.0, 30.0, 30.0, 30.0, 30.0}, 5, 0.0, 3});
    cfg.seed = 3;
    cfg.fusion.epochs = 10;
    cfg.output_dir = tmp.file("out").string();

    const auto out = run_evaluation(cfg);
    REQUIRE(out.report.rows.size() == 8);  // 5 base + 3 ensembles
    CHECK(out.report.flags.empty());

    // Ranked by overall score, descending.
    for (std::size_t i = 1; i < out.report.rows.size(); ++i)
        CHECK(out.report.rows[i - 1].overall >= out.report.rows[i].overall);

    std::vector<std::string> names;
    for (const auto& r : out.report.rows) names.push_back(r.model_name);
    for (const char* expect : {"model_1", "model_5", "plurality", "averaging", "label_fusion"})
        CHECK(std::find(names.begin(), names.end(), expect) != names.end());
}

TEST_CASE("run_evaluation is deterministic") {
    testutil::TempDir tmp;
    RunConfig cfg;
    cfg.inputs = write_panel_files(tmp, {40, 40, 1.5, {1.0, 5.0}, 2, 0.0, 11});
    cfg.seed = 11;
    cfg.fusion.epochs = 6;

    const auto a = run_evaluation(cfg);
    const auto b = run_evaluation(cfg);
    CHECK(a.report == b.report);
    CHECK(emit_report(a.report, ReportFormat::json) == emit_report(b.report, ReportFormat::json));
    CHECK(a.network == b.network);
}

TEST_CASE("averaging over identical inputs matches the base model row") {
    testutil::TempDir tmp;
    const auto panel = generate_panel({60, 60, 1.0, {1.0}, 1, 0.0, 9});
    for (const char* name : {"m1", "m2", "m3", "m4"}) {
        auto copy = panel.models[0];
        copy.model_name = name;
        save_prediction_set(copy, tmp.file(std::string(name) + ".csv"));
    }

    RunConfig cfg;
    for (const char* name : {"m1", "m2", "m3", "m4"})
        cfg.inputs.emplace_back(tmp.file(std::string(name) + ".csv").string(), name);
    cfg.seed = 4;
    cfg.fusion.epochs = 4;

    const auto out = run_evaluation(cfg);
    const MetricsReport* averaging = nullptr;
    const MetricsReport* base = nullptr;
    for (const auto& r : out.report.rows) {
        if (r.model_name == "averaging") averaging = &r;
        if (r.model_name == "m1") base = &r;
    }
    REQUIRE(averaging != nullptr);
    REQUIRE(base != nullptr);
    CHECK_THAT(averaging->auc, WithinAbs(base->auc, 1e-12));
    CHECK_THAT(averaging->f1, WithinAbs(base->f1, 1e-12));
    CHECK_THAT(averaging->ece, WithinAbs(base->ece, 1e-12));
}

TEST_CASE("full pipeline on the bundled fixture is deterministic") {
    RunConfig cfg;
    for (const char* n : {"panel_a", "panel_b", "panel_c"})
        cfg.inputs.emplace_back((testutil::data_dir() / (std::string(n) + ".csv")).string(), n);
    cfg.seed = 5;
    cfg.fusion.epochs = 5;
    cfg.fusion.validation_fraction = 0.5;

    const auto a = run_evaluation(cfg);
    const auto b = run_evaluation(cfg);
    CHECK(a.report == b.report);
    CHECK(a.report.rows.size() == 6);  // 3 base + 3 ensembles
    CHECK(emit_report(a.report, ReportFormat::markdown) ==
          emit_report(b.report, ReportFormat::markdown));
}

TEST_CASE("ranking is stable for equal scores") {
    RankedReport report;
    report.rows.push_back({"first", 0.6, 0.5, 0.2, overall_score(0.6, 0.5, 0.2)});
    report.rows.push_back({"second", 0.6, 0.5, 0.2, overall_score(0.6, 0.5, 0.2)});
    report.rows.push_back({"best", 0.9, 0.9, 0.1, overall_score(0.9, 0.9, 0.1)});
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const MetricsReport& a, const MetricsReport& b) { return a.overall > b.overall; });
    CHECK(report.rows[0].model_name == "best");
    CHECK(report.rows[1].model_name == "first");
    CHECK(report.rows[2].model_name == "second");
}

TEST_CASE("write_run_outputs emits the fixed file set") {
    testutil::TempDir tmp;
    RunConfig cfg;
    cfg.inputs = write_panel_files(tmp, {30, 30, 1.0, {1.0, 2.0}, 2, 0.0, 21});
    cfg.seed = 21;
    cfg.fusion.epochs = 3;
    cfg.output_dir = tmp.file("out").string();

    const auto out = run_evaluation(cfg);
    write_run_outputs(cfg, out);

    namespace fs = std::filesystem;
    for (const char* name : {"report.md", "report.csv", "report.json", "fusion_net.json",
                             "training_log.csv"})
        CHECK(fs::exists(fs::path(cfg.output_dir) / name));

    const auto parsed = nlohmann::json::parse(testutil::slurp(fs::path(cfg.output_dir) / "report.json"));
    CHECK(report_from_json(parsed) == out.report);

    const auto net = load_network(fs::path(cfg.output_dir) / "fusion_net.json");
    CHECK(net == out.network);
}

TEST_CASE("run config JSON parsing") {
    const auto j = nlohmann::json::parse(R"({
        "inputs": [{"path": "/tmp/resnet.csv"}, {"path": "/tmp/x.csv", "name": "custom"}],
        "ece_bins": 15,
        "seed": 12,
        "output_dir": "results",
        "fusion": {"epochs": 50, "hidden1": 4}
    })");
    const auto cfg = run_config_from_json(j);
    REQUIRE(cfg.inputs.size() == 2);
    CHECK(cfg.inputs[0].second == "resnet");  // stem default
    CHECK(cfg.inputs[1].second == "custom");
    CHECK(cfg.ece_bins == 15);
    CHECK(cfg.seed == 12);
    CHECK(cfg.output_dir == "results");
    CHECK(cfg.fusion.epochs == 50);
    CHECK(cfg.fusion.hidden1 == 4);
    CHECK(cfg.fusion.hidden2 == 8);  // untouched default

    CHECK_THROWS_AS(run_config_from_json(nlohmann::json::parse("{}")), ValidationError);
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json::parse(R"({"inputs": []})")),
                    ValidationError);
}
