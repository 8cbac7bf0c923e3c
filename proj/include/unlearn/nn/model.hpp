#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "unlearn/error.hpp"
#include "unlearn/linalg/conv.hpp"
#include "unlearn/linalg/matrix.hpp"
#include "unlearn/nn/layer.hpp"

namespace unlearn {

/// Feed-forward stack. Batches are (samples x features) matrices; image
/// inputs are flattened channel-major rows.
struct Model {
    std::vector<Layer> layers;
    std::size_t input_dim = 0;
    std::size_t classes = 0;

    void validate() const {
        if (input_dim == 0 || classes == 0) throw ShapeError("model: zero input or class count");
        std::size_t cur = input_dim;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].validate();
            const std::size_t want = layers[i].in_features();
            if (want != 0 && want != cur)
                throw ShapeError("model: layer " + std::to_string(i) + " expects " +
                                 std::to_string(want) + " features, gets " + std::to_string(cur));
            const std::size_t out = layers[i].out_features();
            if (out != 0) cur = out;
        }
        if (cur != classes) throw ShapeError("model: final width does not equal class count");
    }
};

enum class Mode { Train, Eval };

/// Per-layer record of a forward pass: inputs[l] is the activation batch that
/// layer l consumed (pre-unfold for conv layers). Batchnorm batch statistics
/// are captured in Train mode so the trainer can update running stats without
/// a second pass.
struct ForwardTrace {
    std::vector<Matrix> inputs;
    std::vector<std::vector<double>> bn_mean, bn_var;
    Matrix logits;
};

namespace detail {

inline Matrix dense_forward(const Layer& l, const Matrix& x) {
    Matrix y = matmul_trans_b(x, l.weight);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double* yi = y.row(i);
        for (std::size_t j = 0; j < y.cols(); ++j) yi[j] += l.bias[j];
    }
    return y;
}

inline Matrix conv_forward(const Layer& l, const Matrix& x) {
    const ConvGeometry& g = l.geom;
    const std::size_t np = g.patch_count();
    Matrix y(x.rows(), g.output_len());
    for (std::size_t s = 0; s < x.rows(); ++s) {
        const Matrix patches = unfold({x.row(s), g.input_len()}, g);
        const Matrix out = matmul_trans_b(patches, l.weight);
        double* ys = y.row(s);
        for (std::size_t co = 0; co < g.out_channels; ++co)
            for (std::size_t p = 0; p < np; ++p) ys[co * np + p] = out(p, co) + l.bias[co];
    }
    return y;
}

inline void bn_batch_stats(const Matrix& x, std::vector<double>& mean, std::vector<double>& var) {
    const std::size_t m = x.rows(), n = x.cols();
    mean.assign(n, 0.0);
    var.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.row(i);
        for (std::size_t j = 0; j < n; ++j) mean[j] += xi[j];
    }
    for (std::size_t j = 0; j < n; ++j) mean[j] /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xi[j] - mean[j];
            var[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < n; ++j) var[j] /= static_cast<double>(m);
}

inline Matrix bn_forward(const Layer& l, const Matrix& x, const std::vector<double>& mean,
                         const std::vector<double>& var) {
    Matrix y(x.rows(), x.cols());
    std::vector<double> scale(x.cols()), shift(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) {
        scale[j] = l.gamma[j] / std::sqrt(var[j] + kBnEps);
        shift[j] = l.beta[j] - mean[j] * scale[j];
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.row(i);
        double* yi = y.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) yi[j] = xi[j] * scale[j] + shift[j];
    }
    return y;
}

inline Matrix relu_forward(const Matrix& x) {
    Matrix y = x;
    for (double& v : y.data())
        if (v < 0.0) v = 0.0;
    return y;
}

}  // namespace detail

inline ForwardTrace forward_trace(const Model& model, const Matrix& batch, Mode mode) {
    if (batch.cols() != model.input_dim)
        throw ShapeError("forward: batch feature width " + std::to_string(batch.cols()) +
                         " does not match model input " + std::to_string(model.input_dim));
    ForwardTrace t;
    t.inputs.reserve(model.layers.size());
    t.bn_mean.resize(model.layers.size());
    t.bn_var.resize(model.layers.size());
    Matrix cur = batch;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const Layer& l = model.layers[li];
        t.inputs.push_back(cur);
        switch (l.kind) {
            case Layer::Kind::Dense:
                cur = detail::dense_forward(l, cur);
                break;
            case Layer::Kind::Conv2d:
                if (cur.cols() != l.geom.input_len())
                    throw ShapeError("forward: conv input width mismatch at layer " +
                                     std::to_string(li));
                cur = detail::conv_forward(l, cur);
                break;
            case Layer::Kind::BatchNorm:
                if (cur.cols() != l.gamma.size())
                    throw ShapeError("forward: batchnorm width mismatch at layer " +
                                     std::to_string(li));
                if (mode == Mode::Train) {
                    if (cur.rows() == 0) throw ShapeError("forward: empty batch");
                    detail::bn_batch_stats(cur, t.bn_mean[li], t.bn_var[li]);
                    cur = detail::bn_forward(l, cur, t.bn_mean[li], t.bn_var[li]);
                } else {
                    cur = detail::bn_forward(l, cur, l.run_mean, l.run_var);
                }
                break;
            case Layer::Kind::Relu:
                cur = detail::relu_forward(cur);
                break;
        }
    }
    if (cur.cols() != model.classes)
        throw ShapeError("forward: output width does not equal class count");
    t.logits = std::move(cur);
    return t;
}

inline Matrix forward(const Model& model, const Matrix& batch, Mode mode = Mode::Eval) {
    return forward_trace(model, batch, mode).logits;
}

/// Mean cross-entropy of softmax(logits) against integer labels. When
/// `dlogits` is given it receives d(loss)/d(logits) for the mean loss.
/// Numerically shift-invariant (row max subtracted).
inline double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                                    Matrix* dlogits = nullptr) {
    const std::size_t m = logits.rows(), k = logits.cols();
    if (labels.size() != m) throw ShapeError("cross entropy: label count mismatch");
    if (m == 0) throw ValidationError("cross entropy: empty batch");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= k)
            throw ValidationError("cross entropy: label out of range");
    if (dlogits) *dlogits = Matrix(m, k);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double* z = logits.row(i);
        double zmax = z[0];
        for (std::size_t j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - zmax);
        const double logsum = std::log(sum);
        total += logsum - (z[labels[i]] - zmax);
        if (dlogits) {
            double* d = dlogits->row(i);
            const double inv = 1.0 / (sum * static_cast<double>(m));
            for (std::size_t j = 0; j < k; ++j) d[j] = std::exp(z[j] - zmax) * inv;
            d[labels[i]] -= 1.0 / static_cast<double>(m);
        }
    }
    return total / static_cast<double>(m);
}

namespace detail {

inline void dense_backward(const Layer& l, const Matrix& x, const Matrix& dy, LayerGrads& g,
                           Matrix& dx) {
    g.weight = matmul_trans_a(dy, x);
    g.bias.assign(l.bias.size(), 0.0);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        const double* di = dy.row(i);
        for (std::size_t j = 0; j < dy.cols(); ++j) g.bias[j] += di[j];
    }
    dx = matmul(dy, l.weight);
}

inline void conv_backward(const Layer& l, const Matrix& x, const Matrix& dy, LayerGrads& g,
                          Matrix& dx) {
    const ConvGeometry& geo = l.geom;
    const std::size_t np = geo.patch_count();
    g.weight = Matrix(l.weight.rows(), l.weight.cols());
    g.bias.assign(l.bias.size(), 0.0);
    dx = Matrix(x.rows(), x.cols());
    Matrix dys(np, geo.out_channels);
    for (std::size_t s = 0; s < x.rows(); ++s) {
        const double* drow = dy.row(s);
        for (std::size_t co = 0; co < geo.out_channels; ++co)
            for (std::size_t p = 0; p < np; ++p) dys(p, co) = drow[co * np + p];
        const Matrix patches = unfold({x.row(s), geo.input_len()}, geo);
        const Matrix dw = matmul_trans_a(dys, patches);
        for (std::size_t i = 0; i < dw.size(); ++i) g.weight.data()[i] += dw.data()[i];
        for (std::size_t co = 0; co < geo.out_channels; ++co)
            for (std::size_t p = 0; p < np; ++p) g.bias[co] += dys(p, co);
        const Matrix dpatches = matmul(dys, l.weight);
        fold_accumulate(dpatches, geo, {dx.row(s), geo.input_len()});
    }
}

inline void bn_backward(const Layer& l, const Matrix& x, const std::vector<double>& mean,
                        const std::vector<double>& var, const Matrix& dy, LayerGrads& g,
                        Matrix& dx) {
    const std::size_t m = x.rows(), n = x.cols();
    g.gamma.assign(n, 0.0);
    g.beta.assign(n, 0.0);
    std::vector<double> inv(n);
    for (std::size_t j = 0; j < n; ++j) inv[j] = 1.0 / std::sqrt(var[j] + kBnEps);
    // Accumulate per-feature sums of dxhat and dxhat*xhat; dxhat = dy*gamma.
    std::vector<double> sum_d(n, 0.0), sum_dx(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.row(i);
        const double* di = dy.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double xhat = (xi[j] - mean[j]) * inv[j];
            const double dxh = di[j] * l.gamma[j];
            g.gamma[j] += di[j] * xhat;
            g.beta[j] += di[j];
            sum_d[j] += dxh;
            sum_dx[j] += dxh * xhat;
        }
    }
    dx = Matrix(m, n);
    const double mf = static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.row(i);
        const double* di = dy.row(i);
        double* oi = dx.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double xhat = (xi[j] - mean[j]) * inv[j];
            const double dxh = di[j] * l.gamma[j];
            oi[j] = inv[j] / mf * (mf * dxh - sum_d[j] - xhat * sum_dx[j]);
        }
    }
}

inline void relu_backward(const Matrix& x, const Matrix& dy, Matrix& dx) {
    dx = Matrix(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i)
        dx.data()[i] = x.data()[i] > 0.0 ? dy.data()[i] : 0.0;
}

}  // namespace detail

/// Exact gradients for a Train-mode trace and a loss gradient w.r.t. logits.
inline Grads backward(const Model& model, const ForwardTrace& trace, const Matrix& dlogits) {
    if (trace.inputs.size() != model.layers.size())
        throw ShapeError("backward: trace does not match model");
    Grads grads(model.layers.size());
    Matrix dy = dlogits;
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const Layer& l = model.layers[li];
        const Matrix& x = trace.inputs[li];
        Matrix dx;
        switch (l.kind) {
            case Layer::Kind::Dense:
                detail::dense_backward(l, x, dy, grads[li], dx);
                break;
            case Layer::Kind::Conv2d:
                detail::conv_backward(l, x, dy, grads[li], dx);
                break;
            case Layer::Kind::BatchNorm:
                if (trace.bn_mean[li].empty())
                    throw ShapeError("backward: trace lacks batch statistics (not a Train trace)");
                detail::bn_backward(l, x, trace.bn_mean[li], trace.bn_var[li], dy, grads[li], dx);
                break;
            case Layer::Kind::Relu:
                detail::relu_backward(x, dy, dx);
                break;
        }
        dy = std::move(dx);
    }
    return grads;
}

/// Mean cross-entropy and exact parameter gradients. Pure: running batchnorm
/// statistics are read if the model is in the graph but never written.
inline std::pair<double, Grads> loss_and_grads(const Model& model, const Matrix& batch,
                                               const std::vector<int>& labels) {
    const ForwardTrace trace = forward_trace(model, batch, Mode::Train);
    Matrix dlogits;
    const double loss = softmax_cross_entropy(trace.logits, labels, &dlogits);
    return {loss, backward(model, trace, dlogits)};
}

}  // namespace unlearn
