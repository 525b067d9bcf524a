// fusecal: evaluate, fuse, and calibrate binary classifier predictions.
//
// Exit codes: 0 success, 1 internal error, 2 input/validation error.
// Every subcommand prints the seed in effect so runs can be reproduced.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fusecal/fusecal.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;

struct SeedOpt {
    std::uint64_t value = 0;
};

void add_seed(CLI::App* cmd, SeedOpt& seed) {
    cmd->add_option("--seed", seed.value, "Seed for all stochastic steps")->capture_default_str();
}

void print_seed(std::uint64_t seed) { std::cout << "seed: " << seed << "\n"; }

std::string default_name(const std::string& path, const std::string& given) {
    return given.empty() ? fs::path(path).stem().string() : given;
}

// Output-directory precedence: explicit flag, then FUSECAL_OUT_DIR, then "out".
std::string resolve_out_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("FUSECAL_OUT_DIR"); env && *env) return env;
    return "out";
}

nlohmann::json load_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw fusecal::IoError("cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw fusecal::ValidationError("invalid JSON in " + path.string());
    return j;
}

// --- metrics ---------------------------------------------------------------

struct MetricsArgs {
    std::vector<std::string> files;
    std::vector<std::string> names;
    int bins = 10;
    std::string format = "text";
    std::string reliability_out;
    SeedOpt seed;
};

int run_metrics(const MetricsArgs& a) {
    print_seed(a.seed.value);
    fusecal::RankedReport report;
    std::vector<nlohmann::json> reliability;
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        const std::string name =
            default_name(a.files[i], i < a.names.size() ? a.names[i] : std::string{});
        const auto set = fusecal::load_prediction_set(a.files[i], name);
        report.rows.push_back(fusecal::evaluate(set, a.bins));
        if (!a.reliability_out.empty()) {
            nlohmann::json bins = nlohmann::json::array();
            for (const auto& b : fusecal::ece_bins(set.probs(), set.labels(), a.bins))
                bins.push_back(fusecal::to_json(b));
            reliability.push_back({{"model_name", name}, {"bins", bins}});
        }
    }

    if (a.format == "text") {
        for (const auto& r : report.rows)
            std::cout << r.model_name << ": auc=" << fusecal::format_metric(r.auc)
                      << " f1=" << fusecal::format_metric(r.f1)
                      << " ece=" << fusecal::format_metric(r.ece)
                      << " S=" << fusecal::format_overall(r.overall) << "\n";
    } else {
        std::cout << fusecal::emit_report(report, fusecal::report_format_from_name(a.format));
    }

    if (!a.reliability_out.empty())
        fusecal::write_text_file(a.reliability_out, nlohmann::json(reliability).dump(2) + "\n");
    return kExitOk;
}

// --- ensemble --------------------------------------------------------------

struct EnsembleArgs {
    std::vector<std::string> files;
    std::string strategy = "averaging";
    std::string net_path;
    std::string out_path;
    double threshold = 0.5;
    SeedOpt seed;
};

int run_ensemble(const EnsembleArgs& a) {
    print_seed(a.seed.value);
    std::vector<fusecal::PredictionSet> sets;
    for (const auto& f : a.files)
        sets.push_back(fusecal::load_prediction_set(f, default_name(f, {})));
    const auto panel = fusecal::align_panel(std::move(sets));

    const auto strategy = fusecal::strategy_from_name(a.strategy);
    fusecal::EnsembleOutput fused{strategy, {}};
    switch (strategy) {
        case fusecal::EnsembleStrategy::plurality:
            fused = fusecal::plurality_vote(panel, a.threshold);
            break;
        case fusecal::EnsembleStrategy::averaging:
            fused = fusecal::average_probs(panel);
            break;
        case fusecal::EnsembleStrategy::label_fusion: {
            if (a.net_path.empty())
                throw fusecal::ValidationError("--net is required for the label_fusion strategy");
            const auto net = fusecal::load_network(a.net_path);
            fused = fusecal::label_fusion_predict(net, panel);
            break;
        }
    }
    fusecal::save_prediction_set(fused.fused, a.out_path);
    std::cout << "wrote " << a.out_path << " (" << fused.fused.records.size() << " samples, strategy "
              << fusecal::strategy_name(strategy) << ")\n";
    return kExitOk;
}

// --- fuse-train ------------------------------------------------------------

struct FuseTrainArgs {
    std::vector<std::string> files;
    std::string out_dir;
    std::string config_path;
    fusecal::TrainConfig cfg;
    SeedOpt seed;
};

int run_fuse_train(const FuseTrainArgs& a) {
    print_seed(a.seed.value);
    fusecal::TrainConfig cfg = a.cfg;
    if (!a.config_path.empty()) cfg = fusecal::train_config_from_json(load_json_file(a.config_path));
    cfg.seed = a.seed.value;
    const std::string out_dir = resolve_out_dir(a.out_dir);

    std::vector<fusecal::PredictionSet> sets;
    for (const auto& f : a.files)
        sets.push_back(fusecal::load_prediction_set(f, default_name(f, {})));
    const auto panel = fusecal::align_panel(std::move(sets));

    const auto result = fusecal::train(panel, cfg);

    fs::create_directories(out_dir);
    fusecal::save_network(result.network, fs::path(out_dir) / "fusion_net.json", &cfg);
    fusecal::write_text_file(fs::path(out_dir) / "training_log.csv",
                             fusecal::training_log_csv(result.log));
    std::cout << "best epoch: " << result.best_epoch
              << " (validation S=" << fusecal::format_overall(result.best_overall) << ")\n"
              << "wrote " << (fs::path(out_dir) / "fusion_net.json").string() << "\n"
              << "wrote " << (fs::path(out_dir) / "training_log.csv").string() << "\n";
    return kExitOk;
}

// --- augment ---------------------------------------------------------------

struct AugmentArgs {
    std::string input;
    std::string output;
    fusecal::AugmentConfig cfg;
    SeedOpt seed;
};

int run_augment(const AugmentArgs& a) {
    print_seed(a.seed.value);
    fusecal::AugmentConfig cfg = a.cfg;
    cfg.seed = a.seed.value;
    const auto img = fusecal::read_image(a.input);
    const auto out = fusecal::apply_pipeline(img, cfg);
    fusecal::write_image(a.output, out);
    std::cout << "wrote " << a.output << " (" << out.width << "x" << out.height << "x"
              << out.channels << ")\n";
    return kExitOk;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
    std::string out_dir;
    std::string calibrated_out;
    std::size_t calibrated_n = 0;
    std::string spec_path;
    fusecal::SyntheticSpec spec;
    std::vector<double> sigma;
    SeedOpt seed;
};

int run_synth(const SynthArgs& a) {
    print_seed(a.seed.value);
    if (a.calibrated_n > 0) {
        if (a.calibrated_out.empty())
            throw fusecal::ValidationError("--out is required with --calibrated");
        const auto set = fusecal::generate_calibrated_set(a.calibrated_n, a.seed.value);
        fusecal::save_prediction_set(set, a.calibrated_out);
        std::cout << "wrote " << a.calibrated_out << " (" << set.records.size() << " samples)\n";
        return kExitOk;
    }

    const std::string out_dir = resolve_out_dir(a.out_dir);
    fusecal::SyntheticSpec spec = a.spec;
    if (!a.spec_path.empty()) spec = fusecal::synthetic_spec_from_json(load_json_file(a.spec_path));
    if (!a.sigma.empty()) spec.sigma = a.sigma;
    spec.seed = a.seed.value;
    fusecal::validate(spec);

    const auto panel = fusecal::generate_panel(spec);
    fs::create_directories(out_dir);
    nlohmann::json meta = {{"spec", fusecal::to_json(spec)},
                           {"theoretical_auc", nlohmann::json::array()}};
    for (std::size_t m = 0; m < panel.n_models(); ++m) {
        const auto path = fs::path(out_dir) / (panel.models[m].model_name + ".csv");
        fusecal::save_prediction_set(panel.models[m], path);
        meta["theoretical_auc"].push_back(fusecal::theoretical_auc(spec, static_cast<int>(m)));
        std::cout << "wrote " << path.string() << "\n";
    }
    fusecal::write_text_file(fs::path(out_dir) / "meta.json", meta.dump(2) + "\n");
    std::cout << "wrote " << (fs::path(out_dir) / "meta.json").string() << "\n";
    return kExitOk;
}

// --- report ----------------------------------------------------------------

struct ReportArgs {
    std::string config_path;
    std::string out_dir_override;
    bool seed_given = false;
    SeedOpt seed;
};

int run_report(const ReportArgs& a) {
    const auto raw = load_json_file(a.config_path);
    auto cfg = fusecal::run_config_from_json(raw);
    if (a.seed_given) cfg.seed = a.seed.value;
    if (!a.out_dir_override.empty())
        cfg.output_dir = a.out_dir_override;
    else if (!raw.contains("output_dir"))
        cfg.output_dir = resolve_out_dir({});
    print_seed(cfg.seed);

    const auto out = fusecal::run_evaluation(cfg);
    fusecal::write_run_outputs(cfg, out);
    std::cout << fusecal::emit_report(out.report, fusecal::ReportFormat::text);
    std::cout << "outputs in " << cfg.output_dir << "\n";
    return kExitOk;
}

// --- check-tables ----------------------------------------------------------

struct CheckTablesArgs {
    std::string rows_path;
    double tolerance = fusecal::kRowFlagTolerance;
    SeedOpt seed;
};

int run_check_tables(const CheckTablesArgs& a) {
    print_seed(a.seed.value);
    const auto rows = fusecal::load_published_rows(a.rows_path);
    const auto flags = fusecal::check_published_rows(rows, a.tolerance);
    for (const auto& r : rows) {
        const double recomputed = fusecal::overall_score(r.auc, r.f1, r.ece);
        const bool flagged =
            std::abs(recomputed - r.printed_overall) > a.tolerance;
        std::cout << r.name << ": printed=" << fusecal::format_overall(r.printed_overall)
                  << " recomputed=" << fusecal::format_overall(recomputed)
                  << (flagged ? " [FLAG]" : " [OK]") << "\n";
    }
    std::cout << "flagged " << flags.size() << " of " << rows.size() << " rows\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prediction fusion, evaluation, and calibration toolkit"};
    app.name("fusecal");  // stable usage lines regardless of the invocation path
    app.require_subcommand(1);

    MetricsArgs metrics_args;
    auto* metrics = app.add_subcommand("metrics", "Evaluate prediction files (AUC, F1, ECE, S)");
    metrics->add_option("files", metrics_args.files, "Prediction files (CSV or JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    metrics->add_option("--bins", metrics_args.bins, "Number of ECE confidence bins")
        ->capture_default_str();
    metrics->add_option("--format", metrics_args.format, "Output format")
        ->check(CLI::IsMember({"text", "csv", "json", "markdown"}))
        ->capture_default_str();
    metrics->add_option("--names", metrics_args.names, "Model names (default: file stems)");
    metrics->add_option("--reliability", metrics_args.reliability_out,
                        "Write per-bin calibration stats to this JSON file");
    add_seed(metrics, metrics_args.seed);

    EnsembleArgs ensemble_args;
    auto* ensemble = app.add_subcommand("ensemble", "Fuse a panel of prediction files");
    ensemble->add_option("files", ensemble_args.files, "Prediction files (one per model)")
        ->required()
        ->check(CLI::ExistingFile);
    ensemble->add_option("--strategy", ensemble_args.strategy, "Fusion strategy")
        ->check(CLI::IsMember({"plurality", "averaging", "label_fusion"}))
        ->capture_default_str();
    ensemble->add_option("--net", ensemble_args.net_path, "Trained fusion network (label_fusion)");
    ensemble->add_option("--threshold", ensemble_args.threshold, "Voting threshold")
        ->capture_default_str();
    ensemble->add_option("--out", ensemble_args.out_path, "Output prediction file")->required();
    add_seed(ensemble, ensemble_args.seed);

    FuseTrainArgs fuse_args;
    auto* fuse = app.add_subcommand("fuse-train", "Train the label-fusion network");
    fuse->add_option("files", fuse_args.files, "Prediction files (one per model)")
        ->required()
        ->check(CLI::ExistingFile);
    fuse->add_option("--out-dir", fuse_args.out_dir,
                     "Output directory (default: $FUSECAL_OUT_DIR or 'out')");
    fuse->add_option("--config", fuse_args.config_path, "Training config JSON (flags override)");
    fuse->add_option("--epochs", fuse_args.cfg.epochs, "Training epochs")->capture_default_str();
    fuse->add_option("--batch-size", fuse_args.cfg.batch_size, "Minibatch size")
        ->capture_default_str();
    fuse->add_option("--lr", fuse_args.cfg.base_lr, "Base learning rate")->capture_default_str();
    fuse->add_option("--lr-decay", fuse_args.cfg.lr_decay, "Per-epoch exponential decay factor")
        ->capture_default_str();
    fuse->add_option("--val-fraction", fuse_args.cfg.validation_fraction,
                     "Held-out validation fraction")
        ->capture_default_str();
    fuse->add_option("--hidden1", fuse_args.cfg.hidden1, "First hidden layer width")
        ->capture_default_str();
    fuse->add_option("--hidden2", fuse_args.cfg.hidden2, "Second hidden layer width")
        ->capture_default_str();
    fuse->add_option("--bins", fuse_args.cfg.ece_bins, "ECE bins for validation scoring")
        ->capture_default_str();
    add_seed(fuse, fuse_args.seed);

    AugmentArgs augment_args;
    auto* augment = app.add_subcommand("augment", "Run the image preprocessing pipeline");
    augment->add_option("input", augment_args.input, "Input image (PPM/PGM/float dump)")
        ->required()
        ->check(CLI::ExistingFile);
    augment->add_option("output", augment_args.output, "Output image (.ppm/.pgm/.raw)")->required();
    augment->add_option("--width", augment_args.cfg.target_width, "Target width")
        ->capture_default_str();
    augment->add_option("--height", augment_args.cfg.target_height, "Target height")
        ->capture_default_str();
    augment->add_option("--flip-h", augment_args.cfg.flip_h_prob, "Horizontal flip probability")
        ->capture_default_str();
    augment->add_option("--flip-v", augment_args.cfg.flip_v_prob, "Vertical flip probability")
        ->capture_default_str();
    augment->add_option("--max-rotation", augment_args.cfg.max_rotation_deg,
                        "Max rotation magnitude in degrees")
        ->capture_default_str();
    augment->add_flag("--greyscale,!--no-greyscale", augment_args.cfg.to_greyscale,
                      "Convert RGB input to greyscale")
        ->capture_default_str();
    augment->add_option("--mean", augment_args.cfg.norm_mean,
                        "Normalization mean (one value or one per channel)")
        ->capture_default_str();
    augment->add_option("--std", augment_args.cfg.norm_std,
                        "Normalization std (one value or one per channel)")
        ->capture_default_str();
    add_seed(augment, augment_args.seed);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate synthetic prediction fixtures");
    synth->add_option("--out-dir", synth_args.out_dir,
                      "Panel output directory (default: $FUSECAL_OUT_DIR or 'out')");
    synth->add_option("--out", synth_args.calibrated_out, "Output file for --calibrated");
    synth->add_option("--calibrated", synth_args.calibrated_n,
                      "Generate a perfectly calibrated set of this size instead of a panel");
    synth->add_option("--spec", synth_args.spec_path, "Spec JSON (flags override sigma/seed)");
    synth->add_option("--n-pos", synth_args.spec.n_pos, "Positive samples")->capture_default_str();
    synth->add_option("--n-neg", synth_args.spec.n_neg, "Negative samples")->capture_default_str();
    synth->add_option("--separation", synth_args.spec.separation, "Latent class-mean gap d")
        ->capture_default_str();
    synth->add_option("--sigma", synth_args.sigma, "Per-model noise (one value or one per model)");
    synth->add_option("--models", synth_args.spec.n_models, "Number of models")
        ->capture_default_str();
    synth->add_option("--rho", synth_args.spec.rho, "Inter-model noise correlation")
        ->capture_default_str();
    add_seed(synth, synth_args.seed);

    ReportArgs report_args;
    auto* report = app.add_subcommand("report", "Full evaluation run from a config file");
    report->add_option("--config", report_args.config_path, "Run config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    report->add_option("--out-dir", report_args.out_dir_override, "Override the output directory");
    report->add_option("--seed", report_args.seed.value, "Override the config seed")
        ->capture_default_str();

    CheckTablesArgs check_args;
    auto* check = app.add_subcommand("check-tables", "Recompute published overall scores");
    check->add_option("--rows", check_args.rows_path, "CSV of rows: name,auc,f1,ece,overall")
        ->required()
        ->check(CLI::ExistingFile);
    check->add_option("--tolerance", check_args.tolerance, "Flagging tolerance")
        ->capture_default_str();
    add_seed(check, check_args.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (*metrics) return run_metrics(metrics_args);
        if (*ensemble) return run_ensemble(ensemble_args);
        if (*fuse) return run_fuse_train(fuse_args);
        if (*augment) return run_augment(augment_args);
        if (*synth) return run_synth(synth_args);
        if (*report) {
            report_args.seed_given = report->count("--seed") > 0;
            return run_report(report_args);
        }
        if (*check) return run_check_tables(check_args);
    } catch (const fusecal::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const fusecal::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
