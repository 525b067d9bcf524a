#pragma once

// The three fusion strategies: plurality voting, unweighted probability
// averaging, and the learned label-fusion network. Each maps an aligned
// PredictionPanel to a fused PredictionSet over the same sample roster.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fusionnet.hpp"
#include "predictions.hpp"

namespace fusecal {

enum class EnsembleStrategy { plurality, averaging, label_fusion };

inline const char* strategy_name(EnsembleStrategy s) {
    switch (s) {
        case EnsembleStrategy::plurality: return "plurality";
        case EnsembleStrategy::averaging: return "averaging";
        case EnsembleStrategy::label_fusion: return "label_fusion";
    }
    return "unknown";
}

inline EnsembleStrategy strategy_from_name(const std::string& name) {
    if (name == "plurality") return EnsembleStrategy::plurality;
    if (name == "averaging") return EnsembleStrategy::averaging;
    if (name == "label_fusion") return EnsembleStrategy::label_fusion;
    throw ValidationError("unknown ensemble strategy '" + name + "'");
}

struct EnsembleOutput {
    EnsembleStrategy strategy;
    PredictionSet fused;  // model_name = strategy name
};

namespace detail {

inline PredictionSet fused_skeleton(const PredictionPanel& panel, EnsembleStrategy s) {
    if (panel.n_models() == 0) throw ValidationError("empty panel");
    PredictionSet out;
    out.model_name = strategy_name(s);
    out.records = panel.models.front().records;  // ids and labels; probs rewritten
    return out;
}

}  // namespace detail

// Each model votes 1 iff its prob >= threshold; the fused prob is the vote
// fraction, so the implied class (prob >= 0.5) is the majority and an exact
// tie lands on 0.5, which the inclusive threshold resolves to class 1.
inline EnsembleOutput plurality_vote(const PredictionPanel& panel, double threshold = 0.5) {
    EnsembleOutput out{EnsembleStrategy::plurality, detail::fused_skeleton(panel, EnsembleStrategy::plurality)};
    const double n_models = static_cast<double>(panel.n_models());
    for (std::size_t i = 0; i < panel.n_samples(); ++i) {
        std::size_t votes = 0;
        for (const auto& m : panel.models) votes += static_cast<std::size_t>(m.records[i].prob >= threshold);
        out.fused.records[i].prob = static_cast<double>(votes) / n_models;
    }
    return out;
}

inline EnsembleOutput average_probs(const PredictionPanel& panel) {
    EnsembleOutput out{EnsembleStrategy::averaging, detail::fused_skeleton(panel, EnsembleStrategy::averaging)};
    const double n_models = static_cast<double>(panel.n_models());
    for (std::size_t i = 0; i < panel.n_samples(); ++i) {
        double sum = 0.0;
        for (const auto& m : panel.models) sum += m.records[i].prob;
        out.fused.records[i].prob = sum / n_models;
    }
    return out;
}

// Order-sensitive: inputs are fed in the model order recorded on the network.
// When the network carries model names, the panel must provide exactly those
// models (any order); without names the panel order is used as-is.
inline EnsembleOutput label_fusion_predict(const FusionNetwork& net, const PredictionPanel& panel) {
    if (static_cast<std::size_t>(net.input_dim()) != panel.n_models())
        throw ValidationError("panel model count does not match fusion network input dimension");

    std::vector<std::size_t> order(panel.n_models());
    if (!net.model_names.empty()) {
        const auto names = panel.model_names();
        for (std::size_t k = 0; k < net.model_names.size(); ++k) {
            auto it = std::find(names.begin(), names.end(), net.model_names[k]);
            if (it == names.end())
                throw ValidationError("panel is missing model '" + net.model_names[k] +
                                      "' required by the fusion network");
            order[k] = static_cast<std::size_t>(it - names.begin());
        }
    } else {
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    }

    EnsembleOutput out{EnsembleStrategy::label_fusion,
                       detail::fused_skeleton(panel, EnsembleStrategy::label_fusion)};
    std::vector<double> input(panel.n_models());
    for (std::size_t i = 0; i < panel.n_samples(); ++i) {
        for (std::size_t k = 0; k < order.size(); ++k)
            input[k] = panel.models[order[k]].records[i].prob;
        out.fused.records[i].prob = forward(net, input);
    }
    return out;
}

}  // namespace fusecal
