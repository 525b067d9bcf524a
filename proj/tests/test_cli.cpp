#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "fusecal/image_io.hpp"
#include "fusecal/predictions.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

fs::path cli_bin() {
    const char* env = std::getenv("FUSECAL_BIN");
    REQUIRE(env != nullptr);
    return fs::path(env);
}

fs::path golden_dir() {
    const char* env = std::getenv("FUSECAL_GOLDEN");
    REQUIRE(env != nullptr);
    return fs::path(env);
}

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    testutil::TempDir tmp;
    const auto out_path = tmp.file("stdout.txt");
    const auto err_path = tmp.file("stderr.txt");
    // FUSECAL_OUT_DIR is cleared so ambient environments cannot change defaults.
    const std::string cmd = "env -u FUSECAL_OUT_DIR " + env_prefix + " " + cli_bin().string() +
                            " " + args + " >" + out_path.string() + " 2>" + err_path.string();
    const int status = std::system(cmd.c_str());
    CliResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    res.out = testutil::slurp(out_path);
    res.err = testutil::slurp(err_path);
    return res;
}

}  // namespace

TEST_CASE("metrics on the perfect fixture") {
    const auto res = run_cli("metrics " + (testutil::data_dir() / "perfect.csv").string());
    CHECK(res.exit_code == 0);
    CHECK(res.out.rfind("seed: 0\n", 0) == 0);
    CHECK(res.out.find("perfect: auc=1.0000 f1=1.0000 ece=0.0000 S=2.0000") != std::string::npos);
}

TEST_CASE("metrics on a malformed file names the row and exits 2") {
    testutil::TempDir tmp;
    testutil::spit(tmp.file("bad.csv"), "sample_id,label,prob\ns1,1,1.20\n");
    const auto res = run_cli("metrics " + tmp.file("bad.csv").string());
    CHECK(res.exit_code == 2);
    CHECK(res.err.find("prob out of range at row 1") != std::string::npos);
}

TEST_CASE("metrics json format and reliability output") {
    testutil::TempDir tmp;
    const auto res = run_cli("metrics --format json --reliability " +
                             tmp.file("bins.json").string() + " " +
                             (testutil::data_dir() / "perfect.csv").string());
    CHECK(res.exit_code == 0);
    const auto payload = res.out.substr(res.out.find('\n') + 1);  // strip the seed line
    const auto parsed = nlohmann::json::parse(payload);
    CHECK(parsed["rows"][0]["auc"].get<double>() == 1.0);

    const auto bins = nlohmann::json::parse(testutil::slurp(tmp.file("bins.json")));
    CHECK(bins[0]["model_name"] == "perfect");
    CHECK(bins[0]["bins"].size() == 10);
}

TEST_CASE("ensemble averaging writes the mean probabilities") {
    testutil::TempDir tmp;
    const auto out_file = tmp.file("fused.csv");
    const std::string files = (testutil::data_dir() / "panel_a.csv").string() + " " +
                              (testutil::data_dir() / "panel_b.csv").string() + " " +
                              (testutil::data_dir() / "panel_c.csv").string();
    const auto res = run_cli("ensemble --strategy averaging --out " + out_file.string() + " " + files);
    CHECK(res.exit_code == 0);

    const auto fused = fusecal::load_prediction_set(out_file, "averaging");
    REQUIRE(fused.records.size() == 4);
    CHECK(fused.model_name == "averaging");
    const double expect_s1 = (0.9 + 0.8 + 0.7) / 3.0;
    CHECK(fused.records[0].sample_id == "s1");
    CHECK(fused.records[0].prob == expect_s1);
    CHECK(fused.records[3].prob == (0.1 + 0.2 + 0.3) / 3.0);
}

TEST_CASE("ensemble plurality respects the tie rule") {
    testutil::TempDir tmp;
    const auto out_file = tmp.file("voted.csv");
    const std::string files = (testutil::data_dir() / "panel_a.csv").string() + " " +
                              (testutil::data_dir() / "panel_b.csv").string();
    const auto res =
        run_cli("ensemble --strategy plurality --out " + out_file.string() + " " + files);
    CHECK(res.exit_code == 0);
    const auto fused = fusecal::load_prediction_set(out_file, "plurality");
    // s2: probs 0.6 and 0.5, both votes 1. s3: 0.4/0.3, both 0.
    CHECK(fused.records[1].prob == 1.0);
    CHECK(fused.records[2].prob == 0.0);
}

TEST_CASE("check-tables flags exactly the two inconsistent rows") {
    const auto res =
        run_cli("check-tables --rows " + (testutil::data_dir() / "published_rows.csv").string());
    CHECK(res.exit_code == 0);
    CHECK(res.out.find("VGG-19: printed=1.4231 recomputed=1.3731 [FLAG]") != std::string::npos);
    CHECK(res.out.find("Label Fusion: printed=1.4343 recomputed=1.3843 [FLAG]") != std::string::npos);
    CHECK(res.out.find("Densenet-121: printed=1.5262 recomputed=1.5262 [OK]") != std::string::npos);
    CHECK(res.out.find("Resnet-152: printed=1.47875 recomputed=1.47875 [OK]") != std::string::npos);
    CHECK(res.out.find("flagged 2 of 8 rows") != std::string::npos);
}

TEST_CASE("augment runs are byte-identical under a fixed seed") {
    testutil::TempDir tmp;
    fusecal::Rng rng(88);
    fusecal::Image img = fusecal::Image::make(48, 40, 3);
    for (double& p : img.pixels) p = std::round(rng.next_double() * 255.0) / 255.0;
    fusecal::write_image(tmp.file("in.ppm"), img);

    const std::string base = "augment " + tmp.file("in.ppm").string() + " ";
    const auto r1 = run_cli(base + tmp.file("a.raw").string() + " --seed 7 --width 32 --height 32");
    const auto r2 = run_cli(base + tmp.file("b.raw").string() + " --seed 7 --width 32 --height 32");
    CHECK(r1.exit_code == 0);
    CHECK(r2.exit_code == 0);
    CHECK(r1.out.find("seed: 7") != std::string::npos);
    const auto a = testutil::slurp(tmp.file("a.raw"));
    CHECK_FALSE(a.empty());
    CHECK(a == testutil::slurp(tmp.file("b.raw")));

    const auto r3 = run_cli(base + tmp.file("c.raw").string() + " --seed 8 --width 32 --height 32");
    CHECK(r3.exit_code == 0);
    CHECK(testutil::slurp(tmp.file("c.raw")) != a);
}

TEST_CASE("augment can write 8-bit output when normalization is identity") {
    testutil::TempDir tmp;
    fusecal::Image img = fusecal::Image::make(16, 16, 3, 0.5);
    fusecal::write_image(tmp.file("in.ppm"), img);
    const auto res = run_cli("augment " + tmp.file("in.ppm").string() + " " +
                             tmp.file("out.pgm").string() +
                             " --mean 0 --std 1 --width 8 --height 8 --seed 3");
    CHECK(res.exit_code == 0);
    const auto out = fusecal::read_image(tmp.file("out.pgm"));
    CHECK(out.width == 8);
    CHECK(out.channels == 1);
}

TEST_CASE("synth panel generation is reproducible and self-describing") {
    testutil::TempDir tmp;
    const std::string cmd = "synth --out-dir " + tmp.file("panel").string() +
                            " --n-pos 50 --n-neg 50 --separation 2 --models 2 --sigma 1 --sigma 5"
                            " --seed 13";
    const auto r1 = run_cli(cmd);
    CHECK(r1.exit_code == 0);
    CHECK(fs::exists(tmp.file("panel") / "model_1.csv"));
    CHECK(fs::exists(tmp.file("panel") / "model_2.csv"));

    const auto meta = nlohmann::json::parse(testutil::slurp(tmp.file("panel") / "meta.json"));
    CHECK(meta["spec"]["seed"].get<std::uint64_t>() == 13);
    CHECK(meta["theoretical_auc"].size() == 2);
    CHECK(meta["theoretical_auc"][0].get<double>() > meta["theoretical_auc"][1].get<double>());

    const auto first = testutil::slurp(tmp.file("panel") / "model_1.csv");
    const auto r2 = run_cli("synth --out-dir " + tmp.file("again").string() +
                            " --n-pos 50 --n-neg 50 --separation 2 --models 2 --sigma 1 --sigma 5"
                            " --seed 13");
    CHECK(r2.exit_code == 0);
    CHECK(testutil::slurp(tmp.file("again") / "model_1.csv") == first);
}

TEST_CASE("synth calibrated mode writes a deterministic set") {
    testutil::TempDir tmp;
    const auto r1 = run_cli("synth --calibrated 500 --out " + tmp.file("cal.csv").string() +
                            " --seed 5");
    CHECK(r1.exit_code == 0);
    const auto r2 = run_cli("synth --calibrated 500 --out " + tmp.file("cal2.csv").string() +
                            " --seed 5");
    CHECK(r2.exit_code == 0);
    CHECK(testutil::slurp(tmp.file("cal.csv")) == testutil::slurp(tmp.file("cal2.csv")));

    const auto set = fusecal::load_prediction_set(tmp.file("cal.csv"), "cal");
    CHECK(set.records.size() == 500);
}

TEST_CASE("metrics on the bundled binormal fixture recovers the recorded AUC") {
    const auto meta = nlohmann::json::parse(
        testutil::slurp(testutil::data_dir() / "binormal_panel.meta.json"));
    const double theoretical = meta["theoretical_auc"].get<double>();

    const auto res =
        run_cli("metrics " + (testutil::data_dir() / "binormal_panel.csv").string());
    CHECK(res.exit_code == 0);
    const auto pos = res.out.find("auc=");
    REQUIRE(pos != std::string::npos);
    const double printed_auc = std::stod(res.out.substr(pos + 4));
    CHECK(std::abs(printed_auc - theoretical) < 0.005);
}

TEST_CASE("fuse-train then label_fusion ensemble round trip") {
    testutil::TempDir tmp;
    const auto gen = run_cli("synth --out-dir " + tmp.file("panel").string() +
                             " --n-pos 80 --n-neg 80 --separation 2 --models 2 --sigma 1 --sigma 50"
                             " --seed 2");
    REQUIRE(gen.exit_code == 0);
    const std::string files = (tmp.file("panel") / "model_1.csv").string() + " " +
                              (tmp.file("panel") / "model_2.csv").string();

    const auto trained = run_cli("fuse-train " + files + " --out-dir " + tmp.file("run").string() +
                                 " --epochs 8 --seed 2");
    CHECK(trained.exit_code == 0);
    CHECK(fs::exists(tmp.file("run") / "fusion_net.json"));
    CHECK(fs::exists(tmp.file("run") / "training_log.csv"));
    CHECK(trained.out.find("best epoch:") != std::string::npos);

    const auto fused = run_cli("ensemble --strategy label_fusion --net " +
                               (tmp.file("run") / "fusion_net.json").string() + " --out " +
                               tmp.file("fused.csv").string() + " " + files);
    CHECK(fused.exit_code == 0);
    const auto set = fusecal::load_prediction_set(tmp.file("fused.csv"), "f");
    CHECK(set.records.size() == 160);
}

TEST_CASE("report command writes the full output set deterministically") {
    testutil::TempDir tmp;
    const auto gen = run_cli("synth --out-dir " + tmp.file("panel").string() +
                             " --n-pos 60 --n-neg 60 --separation 1.5 --models 3 --seed 31");
    REQUIRE(gen.exit_code == 0);

    nlohmann::json cfg = {
        {"inputs", nlohmann::json::array()},
        {"seed", 31},
        {"output_dir", tmp.file("out1").string()},
        {"fusion", {{"epochs", 5}}},
    };
    for (int m = 1; m <= 3; ++m)
        cfg["inputs"].push_back({{"path", (tmp.file("panel") / ("model_" + std::to_string(m) + ".csv")).string()}});
    testutil::spit(tmp.file("run.json"), cfg.dump(2));

    const auto r1 = run_cli("report --config " + tmp.file("run.json").string());
    CHECK(r1.exit_code == 0);
    CHECK(r1.out.rfind("seed: 31\n", 0) == 0);
    for (const char* name : {"report.md", "report.csv", "report.json", "fusion_net.json",
                             "training_log.csv"})
        CHECK(fs::exists(tmp.file("out1") / name));

    const auto r2 = run_cli("report --config " + tmp.file("run.json").string() + " --out-dir " +
                            tmp.file("out2").string());
    CHECK(r2.exit_code == 0);
    for (const char* name : {"report.json", "training_log.csv", "report.md"})
        CHECK(testutil::slurp(tmp.file("out1") / name) == testutil::slurp(tmp.file("out2") / name));
}

TEST_CASE("FUSECAL_OUT_DIR provides the default output directory") {
    testutil::TempDir tmp;
    const auto res = run_cli("synth --n-pos 10 --n-neg 10 --models 1 --seed 1",
                             "FUSECAL_OUT_DIR=" + tmp.file("from_env").string());
    CHECK(res.exit_code == 0);
    CHECK(fs::exists(tmp.file("from_env") / "model_1.csv"));

    const auto trained =
        run_cli("fuse-train " + (testutil::data_dir() / "panel_a.csv").string() + " " +
                    (testutil::data_dir() / "panel_b.csv").string() +
                    " --epochs 2 --val-fraction 0.5 --seed 1",
                "FUSECAL_OUT_DIR=" + tmp.file("train_env").string());
    CHECK(trained.exit_code == 0);
    CHECK(fs::exists(tmp.file("train_env") / "fusion_net.json"));
}

TEST_CASE("unknown flags are rejected with exit code 2") {
    const auto res = run_cli("metrics --definitely-not-a-flag x.csv");
    CHECK(res.exit_code == 2);
    CHECK_FALSE(res.err.empty());
}

TEST_CASE("missing subcommand is an input error") {
    const auto res = run_cli("");
    CHECK(res.exit_code == 2);
}

TEST_CASE("help output is golden") {
    const auto top = run_cli("--help");
    CHECK(top.exit_code == 0);
    CHECK(top.out == testutil::slurp(golden_dir() / "help_top.txt"));

    const std::vector<std::pair<std::string, std::string>> subs = {
        {"metrics", "help_metrics.txt"},       {"ensemble", "help_ensemble.txt"},
        {"fuse-train", "help_fuse_train.txt"}, {"augment", "help_augment.txt"},
        {"synth", "help_synth.txt"},           {"report", "help_report.txt"},
        {"check-tables", "help_check_tables.txt"},
    };
    for (const auto& [sub, golden] : subs) {
        const auto res = run_cli(sub + " --help");
        CHECK(res.exit_code == 0);
        CHECK(res.out == testutil::slurp(golden_dir() / golden));
    }
}

TEST_CASE("help enumerates every documented flag") {
    CHECK(run_cli("metrics --help").out.find("--bins") != std::string::npos);
    CHECK(run_cli("metrics --help").out.find("--reliability") != std::string::npos);
    CHECK(run_cli("ensemble --help").out.find("--strategy") != std::string::npos);
    CHECK(run_cli("ensemble --help").out.find("--net") != std::string::npos);
    CHECK(run_cli("fuse-train --help").out.find("--lr-decay") != std::string::npos);
    CHECK(run_cli("augment --help").out.find("--max-rotation") != std::string::npos);
    CHECK(run_cli("synth --help").out.find("--calibrated") != std::string::npos);
    CHECK(run_cli("report --help").out.find("--config") != std::string::npos);
    CHECK(run_cli("check-tables --help").out.find("--tolerance") != std::string::npos);
}
