#pragma once

// Binary-classifier evaluation from scratch: ROC-AUC via the rank statistic
// with tie correction, F1 at a fixed cutoff, expected calibration error over
// equal-width confidence bins, and the composite score
//
//     S = AUC + 0.5 * F1 + 0.5 * (1 - ECE)
//
// used for model selection and ranking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "predictions.hpp"

namespace fusecal {

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    bool operator==(const ConfusionCounts&) const = default;
    std::size_t total() const { return tp + fp + fn + tn; }
};

struct BinStats {
    int bin = 0;                 // index in [0, n_bins)
    std::size_t count = 0;       // samples assigned to the bin
    double mean_confidence = 0;  // 0 for empty bins
    double accuracy = 0;         // 0 for empty bins
};

struct MetricsReport {
    std::string model_name;
    double auc = 0;
    double f1 = 0;
    double ece = 0;
    double overall = 0;  // auc + 0.5*f1 + 0.5*(1-ece)

    bool operator==(const MetricsReport&) const = default;
};

namespace detail {

inline void check_lengths(std::span<const double> probs, std::span<const int> labels) {
    if (probs.size() != labels.size())
        throw ValidationError("probs and labels differ in length");
    if (probs.empty()) throw ValidationError("empty input");
}

}  // namespace detail

// Mann-Whitney statistic: over all (positive, negative) pairs, the fraction
// where prob_pos > prob_neg, with ties counted 1/2. Computed through average
// ranks, so it is O(n log n) and exactly equal to the pairwise count.
inline double compute_auc(std::span<const double> probs, std::span<const int> labels) {
    detail::check_lengths(probs, labels);

    const std::size_t n = probs.size();
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += static_cast<std::size_t>(y == 1);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw ValidationError("AUC undefined: labels contain a single class");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });

    // Average 1-based ranks over tied groups, summed for the positives.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && probs[order[j + 1]] == probs[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }

    const double np = static_cast<double>(n_pos);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

// Predicted class is 1 iff prob >= threshold (inclusive boundary).
inline ConfusionCounts compute_confusion(std::span<const double> probs, std::span<const int> labels,
                                         double threshold) {
    detail::check_lengths(probs, labels);
    ConfusionCounts c;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool pred = probs[i] >= threshold;
        const bool truth = labels[i] == 1;
        if (pred && truth) ++c.tp;
        else if (pred && !truth) ++c.fp;
        else if (!pred && truth) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// F1 = 2*tp / (2*tp + fp + fn); 0 by convention when the denominator is 0.
inline double compute_f1(const ConfusionCounts& c) {
    const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
    if (denom == 0.0) return 0.0;
    return 2.0 * static_cast<double>(c.tp) / denom;
}

// Per sample the confidence is max(p, 1-p) and the predicted class is
// 1 iff p >= 0.5. Confidences live in [0.5, 1]; that interval is cut into
// n_bins equal-width bins, left-open right-closed, with the lowest bin closed
// at 0.5.
inline std::vector<BinStats> ece_bins(std::span<const double> probs, std::span<const int> labels,
                                      int n_bins) {
    detail::check_lengths(probs, labels);
    if (n_bins < 1) throw ValidationError("n_bins must be >= 1");

    std::vector<double> edges(static_cast<std::size_t>(n_bins) + 1);
    const double width = 0.5 / n_bins;
    for (int b = 0; b <= n_bins; ++b) edges[b] = 0.5 + b * width;
    edges[n_bins] = 1.0;

    std::vector<std::size_t> count(n_bins, 0);
    std::vector<double> conf_sum(n_bins, 0.0);
    std::vector<std::size_t> correct(n_bins, 0);

    for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool pred = probs[i] >= 0.5;
        const double conf = pred ? probs[i] : 1.0 - probs[i];
        int b = 0;
        while (b + 1 < n_bins && conf > edges[b + 1]) ++b;
        ++count[b];
        conf_sum[b] += conf;
        if (pred == (labels[i] == 1)) ++correct[b];
    }

    std::vector<BinStats> bins(n_bins);
    for (int b = 0; b < n_bins; ++b) {
        bins[b].bin = b;
        bins[b].count = count[b];
        if (count[b] > 0) {
            bins[b].mean_confidence = conf_sum[b] / static_cast<double>(count[b]);
            bins[b].accuracy = static_cast<double>(correct[b]) / static_cast<double>(count[b]);
        }
    }
    return bins;
}

// ECE = sum_b (n_b / N) * |acc_b - conf_b|.
inline double compute_ece(std::span<const double> probs, std::span<const int> labels, int n_bins) {
    const auto bins = ece_bins(probs, labels, n_bins);
    const double n = static_cast<double>(probs.size());
    double ece = 0.0;
    for (const auto& b : bins) {
        if (b.count == 0) continue;
        ece += (static_cast<double>(b.count) / n) * std::abs(b.accuracy - b.mean_confidence);
    }
    return ece;
}

inline double overall_score(double auc, double f1, double ece) {
    return auc + 0.5 * f1 + 0.5 * (1.0 - ece);
}

inline MetricsReport evaluate(std::span<const double> probs, std::span<const int> labels,
                              int n_bins, std::string model_name) {
    MetricsReport rep;
    rep.model_name = std::move(model_name);
    rep.auc = compute_auc(probs, labels);
    rep.f1 = compute_f1(compute_confusion(probs, labels, 0.5));
    rep.ece = compute_ece(probs, labels, n_bins);
    rep.overall = overall_score(rep.auc, rep.f1, rep.ece);
    return rep;
}

inline MetricsReport evaluate(const PredictionSet& set, int n_bins = 10) {
    return evaluate(set.probs(), set.labels(), n_bins, set.model_name);
}

inline nlohmann::json to_json(const MetricsReport& rep) {
    return {{"model_name", rep.model_name},
            {"auc", rep.auc},
            {"f1", rep.f1},
            {"ece", rep.ece},
            {"overall", rep.overall}};
}

inline MetricsReport metrics_report_from_json(const nlohmann::json& j) {
    MetricsReport rep;
    rep.model_name = j.at("model_name").get<std::string>();
    rep.auc = j.at("auc").get<double>();
    rep.f1 = j.at("f1").get<double>();
    rep.ece = j.at("ece").get<double>();
    rep.overall = j.at("overall").get<double>();
    return rep;
}

inline nlohmann::json to_json(const BinStats& b) {
    return {{"bin", b.bin},
            {"count", b.count},
            {"mean_confidence", b.mean_confidence},
            {"accuracy", b.accuracy}};
}

}  // namespace fusecal
