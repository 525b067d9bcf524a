#pragma once

// Synthetic prediction generator with analytically known AUC, used as the
// test oracle for the metrics and ensemble code. Scores follow a binormal
// model: class means 0 and d, per-model noise sigma_m, optional correlation
// rho shared across models; probabilities come from a logistic squash, which
// preserves AUC. The closed form Phi(d / (sigma * sqrt(2))) is the marginal
// AUC of a single model.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "predictions.hpp"
#include "prng.hpp"

namespace fusecal {

struct SyntheticSpec {
    std::size_t n_pos = 1;
    std::size_t n_neg = 1;
    double separation = 1.0;          // latent mean gap d
    std::vector<double> sigma{1.0};   // per-model noise; size 1 broadcasts
    int n_models = 1;
    double rho = 0.0;                 // inter-model noise correlation, [0,1)
    std::uint64_t seed = 0;
};

inline void validate(const SyntheticSpec& spec) {
    if (spec.n_pos < 1 || spec.n_neg < 1) throw ValidationError("need at least one sample per class");
    if (spec.n_models < 1) throw ValidationError("n_models must be >= 1");
    if (spec.sigma.size() != 1 && spec.sigma.size() != static_cast<std::size_t>(spec.n_models))
        throw ValidationError("sigma must have one entry or one per model");
    for (double s : spec.sigma)
        if (!(s > 0.0)) throw ValidationError("sigma must be positive");
    if (!(spec.rho >= 0.0 && spec.rho < 1.0)) throw ValidationError("rho must be in [0,1)");
    if (!std::isfinite(spec.separation)) throw ValidationError("separation must be finite");
}

inline double model_sigma(const SyntheticSpec& spec, int model) {
    return spec.sigma[spec.sigma.size() == 1 ? 0 : static_cast<std::size_t>(model)];
}

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Marginal AUC of one model under the binormal construction.
inline double theoretical_auc(const SyntheticSpec& spec, int model = 0) {
    validate(spec);
    return standard_normal_cdf(spec.separation / (model_sigma(spec, model) * std::numbers::sqrt2));
}

namespace detail {

inline std::string sample_id_for(std::size_t index, int width) {
    std::string digits = std::to_string(index + 1);
    std::string id = "s";
    id.append(static_cast<std::size_t>(width) - std::min<std::size_t>(digits.size(), width), '0');
    id += digits;
    return id;
}

}  // namespace detail

// Latent score for sample i, model m:
//   (label ? d : 0) + sigma_m * (sqrt(rho) * z_i + sqrt(1 - rho) * z_im)
// with all z standard normal from the seeded generator; prob = logistic of
// the latent. The first n_pos samples are the positives; ids are zero-padded
// so the generation order is already canonical.
inline PredictionPanel generate_panel(const SyntheticSpec& spec) {
    validate(spec);
    Rng rng(spec.seed);

    const std::size_t n = spec.n_pos + spec.n_neg;
    const int id_width = std::max<int>(6, static_cast<int>(std::to_string(n).size()));
    const double shared_scale = std::sqrt(spec.rho);
    const double private_scale = std::sqrt(1.0 - spec.rho);

    std::vector<PredictionSet> sets(static_cast<std::size_t>(spec.n_models));
    for (int m = 0; m < spec.n_models; ++m) {
        sets[m].model_name = "model_" + std::to_string(m + 1);
        sets[m].records.resize(n);
    }

    for (std::size_t i = 0; i < n; ++i) {
        const int label = i < spec.n_pos ? 1 : 0;
        const std::string id = detail::sample_id_for(i, id_width);
        const double mean = label ? spec.separation : 0.0;
        const double z_shared = rng.normal();
        for (int m = 0; m < spec.n_models; ++m) {
            const double z_private = rng.normal();
            const double latent =
                mean + model_sigma(spec, m) * (shared_scale * z_shared + private_scale * z_private);
            auto& rec = sets[m].records[i];
            rec.sample_id = id;
            rec.label = label;
            rec.prob = 1.0 / (1.0 + std::exp(-latent));
        }
    }
    return align_panel(std::move(sets));
}

// Perfectly calibrated in expectation: prob uniform in (0,1), label Bernoulli(prob).
inline PredictionSet generate_calibrated_set(std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ValidationError("n must be >= 1");
    Rng rng(seed);
    PredictionSet set;
    set.model_name = "calibrated";
    set.records.resize(n);
    const int id_width = std::max<int>(6, static_cast<int>(std::to_string(n).size()));
    for (std::size_t i = 0; i < n; ++i) {
        auto& rec = set.records[i];
        rec.sample_id = detail::sample_id_for(i, id_width);
        rec.prob = rng.next_double();
        rec.label = rng.bernoulli(rec.prob) ? 1 : 0;
    }
    return set;
}

inline nlohmann::json to_json(const SyntheticSpec& spec) {
    return {{"n_pos", spec.n_pos},       {"n_neg", spec.n_neg}, {"separation", spec.separation},
            {"sigma", spec.sigma},       {"n_models", spec.n_models},
            {"rho", spec.rho},           {"seed", spec.seed}};
}

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
    SyntheticSpec spec;
    spec.n_pos = j.value("n_pos", spec.n_pos);
    spec.n_neg = j.value("n_neg", spec.n_neg);
    spec.separation = j.value("separation", spec.separation);
    if (j.contains("sigma")) {
        if (j["sigma"].is_number())
            spec.sigma = {j["sigma"].get<double>()};
        else
            spec.sigma = j["sigma"].get<std::vector<double>>();
    }
    spec.n_models = j.value("n_models", spec.n_models);
    spec.rho = j.value("rho", spec.rho);
    spec.seed = j.value("seed", spec.seed);
    validate(spec);
    return spec;
}

}  // namespace fusecal
