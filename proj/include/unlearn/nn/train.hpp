#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "unlearn/data/dataset.hpp"
#include "unlearn/error.hpp"
#include "unlearn/nn/model.hpp"
#include "unlearn/rng.hpp"

namespace unlearn {

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.0;
    bool nesterov = false;
    double weight_decay = 0.0;
    std::size_t batch_size = 512;
    std::size_t epochs = 0;
    double plateau_decay = 0.7;
    std::size_t plateau_patience = 5;
    double plateau_min_improvement = 1e-4;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(lr > 0.0)) throw ValidationError("train config: learning rate must be > 0");
        if (!(plateau_decay > 0.0 && plateau_decay < 1.0))
            throw ValidationError("train config: plateau decay must lie in (0,1)");
        if (batch_size < 1) throw ValidationError("train config: batch size must be >= 1");
        if (momentum < 0.0 || momentum >= 1.0)
            throw ValidationError("train config: momentum must lie in [0,1)");
        if (weight_decay < 0.0) throw ValidationError("train config: weight decay must be >= 0");
    }
};

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
    double lr = 0.0;
};

using History = std::vector<EpochStats>;

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
};

/// Fan-in scaled uniform init for dense/conv weights; biases zero; batchnorm
/// reset to identity with unit running variance. Deterministic given seed.
inline void init_weights(Model& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (Layer& l : model.layers) {
        switch (l.kind) {
            case Layer::Kind::Dense:
            case Layer::Kind::Conv2d: {
                const double lim = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
                for (double& w : l.weight.data()) w = uniform(rng, -lim, lim);
                std::fill(l.bias.begin(), l.bias.end(), 0.0);
                break;
            }
            case Layer::Kind::BatchNorm:
                std::fill(l.gamma.begin(), l.gamma.end(), 1.0);
                std::fill(l.beta.begin(), l.beta.end(), 0.0);
                std::fill(l.run_mean.begin(), l.run_mean.end(), 0.0);
                std::fill(l.run_var.begin(), l.run_var.end(), 1.0);
                break;
            case Layer::Kind::Relu:
                break;
        }
    }
}

namespace detail {

inline double row_cross_entropy(const double* z, std::size_t k, int label) {
    double zmax = z[0];
    for (std::size_t j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - zmax);
    return std::log(sum) - (z[label] - zmax);
}

inline std::size_t row_argmax(const double* z, std::size_t k) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
        if (z[j] > z[best]) best = j;
    return best;
}

inline void sgd_update(std::vector<double>& p, const std::vector<double>& g,
                       std::vector<double>& v, double lr, double mu, bool nesterov, double wd) {
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        double d = g[i] + wd * p[i];
        v[i] = mu * v[i] + d;
        if (nesterov) d += mu * v[i];
        else d = v[i];
        p[i] -= lr * d;
    }
}

inline Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& order,
                          std::size_t begin, std::size_t end) {
    Matrix out(end - begin, src.cols());
    for (std::size_t i = begin; i < end; ++i) {
        const double* r = src.row(order[i]);
        std::copy(r, r + src.cols(), out.row(i - begin));
    }
    return out;
}

}  // namespace detail

/// SGD with momentum and a reduce-on-plateau schedule. Deterministic given
/// the config seed: one shuffle per epoch from a single engine, batches taken
/// in order. Weight decay applies to dense/conv weight matrices only.
/// Batchnorm running statistics are updated once per batch from the batch
/// statistics captured in the forward trace.
inline std::pair<Model, History> train(Model model, const LabeledDataset& data,
                                       const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    data.validate();
    if (data.size() == 0) throw ValidationError("train: empty dataset");

    History history;
    history.reserve(cfg.epochs);
    if (cfg.epochs == 0) return {std::move(model), history};

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    Grads velocity(model.layers.size());
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const Layer& l = model.layers[li];
        if (l.has_weight()) {
            velocity[li].weight = Matrix(l.weight.rows(), l.weight.cols());
            velocity[li].bias.assign(l.bias.size(), 0.0);
        } else if (l.kind == Layer::Kind::BatchNorm) {
            velocity[li].gamma.assign(l.gamma.size(), 0.0);
            velocity[li].beta.assign(l.beta.size(), 0.0);
        }
    }
    double lr = cfg.lr;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < data.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, data.size());
            const Matrix xb = detail::gather_rows(data.samples, order, start, end);
            std::vector<int> yb(end - start);
            for (std::size_t i = start; i < end; ++i) yb[i - start] = data.labels[order[i]];

            const ForwardTrace trace = forward_trace(model, xb, Mode::Train);
            Matrix dlogits;
            const double loss = softmax_cross_entropy(trace.logits, yb, &dlogits);
            if (!std::isfinite(loss))
                throw TrainingError("training diverged (non-finite loss)",
                                    static_cast<int>(epoch));
            const Grads grads = backward(model, trace, dlogits);

            loss_sum += loss * static_cast<double>(end - start);
            for (std::size_t i = 0; i < trace.logits.rows(); ++i)
                if (detail::row_argmax(trace.logits.row(i), trace.logits.cols()) ==
                    static_cast<std::size_t>(yb[i]))
                    ++correct;

            for (std::size_t li = 0; li < model.layers.size(); ++li) {
                Layer& l = model.layers[li];
                const LayerGrads& g = grads[li];
                LayerGrads& v = velocity[li];
                switch (l.kind) {
                    case Layer::Kind::Dense:
                    case Layer::Kind::Conv2d:
                        detail::sgd_update(l.weight.data(), g.weight.data(), v.weight.data(), lr,
                                           cfg.momentum, cfg.nesterov, cfg.weight_decay);
                        detail::sgd_update(l.bias, g.bias, v.bias, lr, cfg.momentum, cfg.nesterov,
                                           0.0);
                        break;
                    case Layer::Kind::BatchNorm:
                        detail::sgd_update(l.gamma, g.gamma, v.gamma, lr, cfg.momentum,
                                           cfg.nesterov, 0.0);
                        detail::sgd_update(l.beta, g.beta, v.beta, lr, cfg.momentum, cfg.nesterov,
                                           0.0);
                        for (std::size_t j = 0; j < l.run_mean.size(); ++j) {
                            l.run_mean[j] = (1.0 - kBnMomentum) * l.run_mean[j] +
                                            kBnMomentum * trace.bn_mean[li][j];
                            l.run_var[j] = (1.0 - kBnMomentum) * l.run_var[j] +
                                           kBnMomentum * trace.bn_var[li][j];
                        }
                        break;
                    case Layer::Kind::Relu:
                        break;
                }
            }
        }
        const double epoch_loss = loss_sum / static_cast<double>(data.size());
        history.push_back({epoch_loss, static_cast<double>(correct) / static_cast<double>(data.size()), lr});

        if (epoch_loss < best_loss * (1.0 - cfg.plateau_min_improvement)) {
            best_loss = epoch_loss;
            bad_epochs = 0;
        } else if (++bad_epochs >= cfg.plateau_patience) {
            lr *= cfg.plateau_decay;
            bad_epochs = 0;
        }
    }
    return {std::move(model), history};
}

/// The finetune baseline: continue SGD from the given weights on a retain
/// set. Identical contracts to train.
inline std::pair<Model, History> finetune(Model model, const LabeledDataset& retain,
                                          const TrainConfig& cfg) {
    return train(std::move(model), retain, cfg);
}

/// Inference-mode accuracy and mean loss. Argmax ties break toward the lowest
/// class index. Results are independent of the internal chunk size because
/// every per-row computation is row-local in Eval mode.
inline EvalResult evaluate(const Model& model, const LabeledDataset& data) {
    model.validate();
    data.validate();
    if (data.size() == 0) throw ValidationError("evaluate: empty dataset");
    constexpr std::size_t kChunk = 512;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> ids(data.size());
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        const std::size_t end = std::min(start + kChunk, data.size());
        const Matrix xb = detail::gather_rows(data.samples, ids, start, end);
        const Matrix logits = forward(model, xb, Mode::Eval);
        for (std::size_t i = 0; i < logits.rows(); ++i) {
            const double* z = logits.row(i);
            loss_sum += detail::row_cross_entropy(z, logits.cols(), data.labels[start + i]);
            if (detail::row_argmax(z, logits.cols()) ==
                static_cast<std::size_t>(data.labels[start + i]))
                ++correct;
        }
    }
    return {static_cast<double>(correct) / static_cast<double>(data.size()),
            loss_sum / static_cast<double>(data.size())};
}

/// Cross-entropy of each sample alone, in inference mode. Batchnorm uses
/// running statistics, so the result does not depend on how samples are
/// batched.
inline std::vector<double> per_sample_losses(const Model& model, const LabeledDataset& data) {
    model.validate();
    data.validate();
    constexpr std::size_t kChunk = 512;
    std::vector<double> losses(data.size());
    std::vector<std::size_t> ids(data.size());
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        const std::size_t end = std::min(start + kChunk, data.size());
        if (start == end) break;
        const Matrix xb = detail::gather_rows(data.samples, ids, start, end);
        const Matrix logits = forward(model, xb, Mode::Eval);
        for (std::size_t i = 0; i < logits.rows(); ++i)
            losses[start + i] =
                detail::row_cross_entropy(logits.row(i), logits.cols(), data.labels[start + i]);
    }
    return losses;
}

}  // namespace unlearn
