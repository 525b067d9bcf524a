#pragma once

// The label-fusion network: a small MLP (M -> H1 -> H2 -> 1) with ReLU hidden
// activations and a sigmoid output, trained from scratch with analytic
// binary-cross-entropy gradients and Adam under a per-epoch exponential
// learning-rate schedule. Checkpointing keeps the epoch that maximizes the
// composite score S on a held-out validation split, including the untrained
// epoch-0 network as a baseline candidate.
//
// Training is sequential and free of nondeterministic reductions, so a fixed
// seed reproduces the returned network bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "metrics.hpp"
#include "predictions.hpp"
#include "prng.hpp"

namespace fusecal {

struct TrainConfig {
    int epochs = 200;
    int batch_size = 16;
    std::uint64_t seed = 0;
    double validation_fraction = 0.2;
    double base_lr = 1e-3;   // eta0
    double lr_decay = 0.99;  // gamma; lr after e completed epochs is eta0 * gamma^e
    int hidden1 = 16;
    int hidden2 = 8;
    int ece_bins = 10;
};

inline void validate(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0))
        throw ValidationError("validation_fraction must be in (0,1)");
    if (!(cfg.base_lr > 0.0)) throw ValidationError("base_lr must be positive");
    if (!(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0))
        throw ValidationError("lr_decay must be in (0,1]");
    if (cfg.hidden1 < 1 || cfg.hidden2 < 1) throw ValidationError("hidden sizes must be >= 1");
    if (cfg.ece_bins < 1) throw ValidationError("ece_bins must be >= 1");
}

inline nlohmann::json to_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"seed", cfg.seed},
            {"validation_fraction", cfg.validation_fraction},
            {"base_lr", cfg.base_lr},
            {"lr_decay", cfg.lr_decay},
            {"hidden1", cfg.hidden1},
            {"hidden2", cfg.hidden2},
            {"ece_bins", cfg.ece_bins}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.validation_fraction = j.value("validation_fraction", cfg.validation_fraction);
    cfg.base_lr = j.value("base_lr", cfg.base_lr);
    cfg.lr_decay = j.value("lr_decay", cfg.lr_decay);
    cfg.hidden1 = j.value("hidden1", cfg.hidden1);
    cfg.hidden2 = j.value("hidden2", cfg.hidden2);
    cfg.ece_bins = j.value("ece_bins", cfg.ece_bins);
    validate(cfg);
    return cfg;
}

struct FusionNetwork {
    std::vector<int> layer_dims;               // {M, H1, H2, 1}
    std::vector<std::vector<double>> weights;  // per layer, row-major (out x in)
    std::vector<std::vector<double>> biases;   // per layer
    std::vector<std::string> model_names;      // canonical input order

    bool operator==(const FusionNetwork&) const = default;

    int input_dim() const { return layer_dims.front(); }
    std::size_t n_layers() const { return weights.size(); }
};

// Parameter-shaped gradient accumulator.
struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
};

struct AdamState {
    std::vector<std::vector<double>> m_w, v_w;  // first/second moments, weights
    std::vector<std::vector<double>> m_b, v_b;  // first/second moments, biases
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double base_lr = 1e-3;
    double lr_decay = 0.99;
};

// Glorot-uniform weights from the given generator, zero biases. Draw order is
// layer by layer, row-major, so identical seeds give identical networks.
inline FusionNetwork init_network(int n_models, const TrainConfig& cfg, Rng& rng) {
    if (n_models < 1) throw ValidationError("n_models must be >= 1");
    validate(cfg);

    FusionNetwork net;
    net.layer_dims = {n_models, cfg.hidden1, cfg.hidden2, 1};
    for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
        const int fan_in = net.layer_dims[l];
        const int fan_out = net.layer_dims[l + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
        for (double& x : w) x = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }
    return net;
}

inline FusionNetwork init_network(int n_models, const TrainConfig& cfg) {
    Rng rng(cfg.seed);
    return init_network(n_models, cfg, rng);
}

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr double kProbClamp = 1e-7;

// Activations per layer, kept for backprop.
struct ForwardTrace {
    std::vector<std::vector<double>> acts;  // acts[0] = input, hidden post-ReLU
    double pre_sigmoid = 0.0;
    double prob = 0.0;  // unclamped sigmoid output
};

inline ForwardTrace forward_trace(const FusionNetwork& net, std::span<const double> input) {
    if (static_cast<int>(input.size()) != net.input_dim())
        throw ValidationError("input length does not match network input dimension");

    ForwardTrace tr;
    tr.acts.resize(net.n_layers());
    tr.acts[0].assign(input.begin(), input.end());

    const std::vector<double>* prev = &tr.acts[0];
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        const int out_dim = net.layer_dims[l + 1];
        const int in_dim = net.layer_dims[l];
        std::vector<double> z(out_dim);
        for (int o = 0; o < out_dim; ++o) {
            double acc = net.biases[l][o];
            const double* wrow = net.weights[l].data() + static_cast<std::size_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) acc += wrow[i] * (*prev)[i];
            z[o] = acc;
        }
        if (l + 1 == net.n_layers()) {
            tr.pre_sigmoid = z[0];
            tr.prob = sigmoid(z[0]);
        } else {
            for (double& v : z) v = std::max(0.0, v);  // ReLU
            tr.acts[l + 1] = std::move(z);
            prev = &tr.acts[l + 1];
        }
    }
    return tr;
}

}  // namespace detail

// sigmoid(W3 . relu(W2 . relu(W1 . x + b1) + b2) + b3)
inline double forward(const FusionNetwork& net, std::span<const double> input) {
    return detail::forward_trace(net, input).prob;
}

inline Gradients zero_gradients(const FusionNetwork& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        g.weights.emplace_back(net.weights[l].size(), 0.0);
        g.biases.emplace_back(net.biases[l].size(), 0.0);
    }
    return g;
}

// Mean binary cross-entropy over the batch, with the sigmoid output clamped to
// [1e-7, 1 - 1e-7] before the log. Gradients are the exact derivatives of the
// clamped composition: a sample pinned at the clamp boundary contributes zero.
inline std::pair<double, Gradients> loss_and_gradient(const FusionNetwork& net,
                                                      const std::vector<std::vector<double>>& inputs,
                                                      std::span<const int> labels) {
    if (inputs.empty()) throw ValidationError("empty batch");
    if (inputs.size() != labels.size())
        throw ValidationError("batch inputs and labels differ in length");

    Gradients grads = zero_gradients(net);
    const std::size_t batch = inputs.size();
    double loss_sum = 0.0;

    std::vector<std::vector<double>> delta(net.n_layers());

    for (std::size_t s = 0; s < batch; ++s) {
        const auto tr = detail::forward_trace(net, inputs[s]);
        const double y = static_cast<double>(labels[s]);
        const double p_hat =
            std::clamp(tr.prob, detail::kProbClamp, 1.0 - detail::kProbClamp);
        loss_sum += -(y * std::log(p_hat) + (1.0 - y) * std::log(1.0 - p_hat));

        // dL/dz at the output; zero where the clamp is active.
        const bool clamped = tr.prob < detail::kProbClamp || tr.prob > 1.0 - detail::kProbClamp;
        const double dz_out = clamped ? 0.0 : (tr.prob - y);

        const std::size_t last = net.n_layers() - 1;
        delta[last].assign(1, dz_out);

        for (std::size_t l = last + 1; l-- > 0;) {
            const int out_dim = net.layer_dims[l + 1];
            const int in_dim = net.layer_dims[l];
            const std::vector<double>& act_in = tr.acts[l];

            for (int o = 0; o < out_dim; ++o) {
                const double d = delta[l][o];
                if (d == 0.0) continue;
                double* gw = grads.weights[l].data() + static_cast<std::size_t>(o) * in_dim;
                for (int i = 0; i < in_dim; ++i) gw[i] += d * act_in[i];
                grads.biases[l][o] += d;
            }

            if (l == 0) break;
            // Backpropagate through the ReLU of layer l-1: active iff act > 0.
            delta[l - 1].assign(in_dim, 0.0);
            for (int i = 0; i < in_dim; ++i) {
                if (act_in[i] <= 0.0) continue;
                double acc = 0.0;
                for (int o = 0; o < out_dim; ++o)
                    acc += net.weights[l][static_cast<std::size_t>(o) * in_dim + i] * delta[l][o];
                delta[l - 1][i] = acc;
            }
        }
    }

    const double inv = 1.0 / static_cast<double>(batch);
    for (auto& w : grads.weights)
        for (double& v : w) v *= inv;
    for (auto& b : grads.biases)
        for (double& v : b) v *= inv;
    return {loss_sum * inv, grads};
}

inline AdamState init_adam(const FusionNetwork& net, const TrainConfig& cfg) {
    AdamState st;
    st.base_lr = cfg.base_lr;
    st.lr_decay = cfg.lr_decay;
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        st.m_w.emplace_back(net.weights[l].size(), 0.0);
        st.v_w.emplace_back(net.weights[l].size(), 0.0);
        st.m_b.emplace_back(net.biases[l].size(), 0.0);
        st.v_b.emplace_back(net.biases[l].size(), 0.0);
    }
    return st;
}

// Learning rate after `completed_epochs` epochs: eta0 * gamma^e.
inline double scheduled_lr(const AdamState& st, int completed_epochs) {
    return st.base_lr * std::pow(st.lr_decay, completed_epochs);
}

// One Adam update with bias correction. Non-finite gradients abort training
// rather than letting the parameters diverge silently.
inline void adam_step(FusionNetwork& net, const Gradients& grads, AdamState& st, double lr) {
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        if (grads.weights[l].size() != net.weights[l].size() ||
            grads.biases[l].size() != net.biases[l].size())
            throw ValidationError("gradient shape does not match network");
        for (double g : grads.weights[l])
            if (!std::isfinite(g)) throw ValidationError("non-finite gradient");
        for (double g : grads.biases[l])
            if (!std::isfinite(g)) throw ValidationError("non-finite gradient");
    }

    st.t += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));

    auto update = [&](std::vector<double>& param, const std::vector<double>& grad,
                      std::vector<double>& m, std::vector<double>& v) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double g = grad[i];
            m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g;
            v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            param[i] -= lr * m_hat / (std::sqrt(v_hat) + st.epsilon);
        }
    };

    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        update(net.weights[l], grads.weights[l], st.m_w[l], st.v_w[l]);
        update(net.biases[l], grads.biases[l], st.m_b[l], st.v_b[l]);
    }
}

// Seeded stratified split: per class, a shuffled slice of round(frac * n_c)
// samples (at least 1, at most n_c - 1) goes to validation. Both partitions
// end up with both classes or a ValidationError is raised.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    std::span<const int> labels, double fraction, Rng& rng) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] == 1 ? pos : neg).push_back(i);
    if (pos.size() < 2 || neg.size() < 2)
        throw ValidationError("degenerate split: need at least 2 samples of each class");

    std::vector<std::size_t> train, val;
    for (auto* cls : {&pos, &neg}) {
        rng.shuffle(*cls);
        const auto n = cls->size();
        auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
        k = std::clamp<std::size_t>(k, 1, n - 1);
        val.insert(val.end(), cls->begin(), cls->begin() + static_cast<std::ptrdiff_t>(k));
        train.insert(train.end(), cls->begin() + static_cast<std::ptrdiff_t>(k), cls->end());
    }
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
    return {std::move(train), std::move(val)};
}

struct EpochLog {
    int epoch = 0;  // 0 = untrained baseline evaluation
    double loss = 0;
    double val_auc = 0;
    double val_f1 = 0;
    double val_ece = 0;
    double val_overall = 0;
    double lr = 0;
};

struct TrainResult {
    FusionNetwork network;  // checkpoint with the best validation S
    std::vector<EpochLog> log;
    std::vector<std::size_t> train_indices;  // into the panel's canonical order
    std::vector<std::size_t> val_indices;
    int best_epoch = 0;
    double best_overall = 0;
};

namespace detail {

struct SplitData {
    std::vector<std::vector<double>> inputs;
    std::vector<int> labels;
};

inline SplitData gather_split(const PredictionPanel& panel, std::span<const std::size_t> idx) {
    SplitData d;
    d.inputs.reserve(idx.size());
    d.labels.reserve(idx.size());
    const auto labels = panel.labels();
    for (std::size_t i : idx) {
        d.inputs.push_back(panel.sample_inputs(i));
        d.labels.push_back(labels[i]);
    }
    return d;
}

inline MetricsReport eval_network(const FusionNetwork& net, const SplitData& d, int ece_bins) {
    std::vector<double> probs;
    probs.reserve(d.inputs.size());
    for (const auto& x : d.inputs) probs.push_back(forward(net, x));
    return evaluate(probs, d.labels, ece_bins, "fusion");
}

}  // namespace detail

inline TrainResult train(const PredictionPanel& panel, const TrainConfig& cfg) {
    validate(cfg);
    if (panel.n_models() == 0 || panel.n_samples() == 0)
        throw ValidationError("empty panel");

    Rng rng(cfg.seed);
    const auto labels = panel.labels();
    auto [train_idx, val_idx] = stratified_split(labels, cfg.validation_fraction, rng);

    FusionNetwork net = init_network(static_cast<int>(panel.n_models()), cfg, rng);
    net.model_names = panel.model_names();
    AdamState state = init_adam(net, cfg);

    const auto train_data = detail::gather_split(panel, train_idx);
    const auto val_data = detail::gather_split(panel, val_idx);

    TrainResult res;
    res.train_indices = train_idx;
    res.val_indices = val_idx;

    // Epoch 0: the untrained network is a checkpoint candidate.
    {
        const double loss0 = loss_and_gradient(net, train_data.inputs, train_data.labels).first;
        const auto m = detail::eval_network(net, val_data, cfg.ece_bins);
        res.log.push_back({0, loss0, m.auc, m.f1, m.ece, m.overall, scheduled_lr(state, 0)});
        res.network = net;
        res.best_epoch = 0;
        res.best_overall = m.overall;
    }

    std::vector<std::size_t> order(train_data.inputs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = scheduled_lr(state, epoch - 1);
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            std::vector<std::vector<double>> bx;
            std::vector<int> by;
            bx.reserve(end - start);
            by.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                bx.push_back(train_data.inputs[order[k]]);
                by.push_back(train_data.labels[order[k]]);
            }
            auto [bl, grads] = loss_and_gradient(net, bx, by);
            adam_step(net, grads, state, lr);
            loss_sum += bl * static_cast<double>(end - start);
            seen += end - start;
        }

        const auto m = detail::eval_network(net, val_data, cfg.ece_bins);
        res.log.push_back({epoch, loss_sum / static_cast<double>(seen), m.auc, m.f1, m.ece,
                           m.overall, lr});
        if (m.overall > res.best_overall) {
            res.network = net;
            res.best_epoch = epoch;
            res.best_overall = m.overall;
        }
    }
    return res;
}

inline nlohmann::json to_json(const FusionNetwork& net) {
    return {{"layer_dims", net.layer_dims},
            {"model_names", net.model_names},
            {"weights", net.weights},
            {"biases", net.biases}};
}

inline FusionNetwork network_from_json(const nlohmann::json& j) {
    FusionNetwork net;
    net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    net.model_names = j.value("model_names", std::vector<std::string>{});
    net.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    net.biases = j.at("biases").get<std::vector<std::vector<double>>>();

    if (net.layer_dims.size() < 2 || net.weights.size() != net.layer_dims.size() - 1 ||
        net.biases.size() != net.weights.size())
        throw ValidationError("inconsistent network serialization");
    for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
        const auto expect_w =
            static_cast<std::size_t>(net.layer_dims[l]) * static_cast<std::size_t>(net.layer_dims[l + 1]);
        if (net.weights[l].size() != expect_w ||
            net.biases[l].size() != static_cast<std::size_t>(net.layer_dims[l + 1]))
            throw ValidationError("inconsistent network serialization");
        for (double v : net.weights[l])
            if (!std::isfinite(v)) throw ValidationError("non-finite network parameter");
        for (double v : net.biases[l])
            if (!std::isfinite(v)) throw ValidationError("non-finite network parameter");
    }
    return net;
}

// The config that produced the network rides along for provenance.
inline void save_network(const FusionNetwork& net, const std::filesystem::path& path,
                         const TrainConfig* cfg = nullptr) {
    nlohmann::json j = to_json(net);
    if (cfg) j["config"] = to_json(*cfg);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("cannot write " + path.string());
}

inline FusionNetwork load_network(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ValidationError("invalid network file " + path.string());
    return network_from_json(j);
}

inline std::string training_log_csv(const std::vector<EpochLog>& log) {
    std::string out = "epoch,loss,val_auc,val_f1,val_ece,val_S,lr\n";
    for (const auto& e : log) {
        out += std::to_string(e.epoch);
        for (double v : {e.loss, e.val_auc, e.val_f1, e.val_ece, e.val_overall, e.lr}) {
            out += ',';
            out += detail::shortest_double(v);
        }
        out += '\n';
    }
    return out;
}

}  // namespace fusecal
