#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "unlearn/error.hpp"
#include "unlearn/linalg/conv.hpp"
#include "unlearn/linalg/matrix.hpp"

namespace unlearn {

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

/// One network layer. Dense and conv layers own a weight matrix and a bias
/// vector; conv weights are stored in the canonical reshaped form
/// (C_out x C_in*k*k) that matches unfold's patch layout. Batchnorm owns the
/// affine parameters and running statistics. ReLU owns nothing.
struct Layer {
    enum class Kind { Dense, Conv2d, BatchNorm, Relu };

    Kind kind = Kind::Relu;
    Matrix weight;
    std::vector<double> bias;
    std::vector<double> gamma, beta;
    std::vector<double> run_mean, run_var;
    ConvGeometry geom;

    bool has_weight() const { return kind == Kind::Dense || kind == Kind::Conv2d; }

    /// 0 means "any width" (shape-preserving layer without parameters).
    std::size_t in_features() const {
        switch (kind) {
            case Kind::Dense: return weight.cols();
            case Kind::Conv2d: return geom.input_len();
            case Kind::BatchNorm: return gamma.size();
            case Kind::Relu: return 0;
        }
        return 0;
    }

    std::size_t out_features() const {
        switch (kind) {
            case Kind::Dense: return weight.rows();
            case Kind::Conv2d: return geom.output_len();
            case Kind::BatchNorm: return gamma.size();
            case Kind::Relu: return 0;
        }
        return 0;
    }

    void validate() const {
        switch (kind) {
            case Kind::Dense:
                if (weight.empty()) throw ShapeError("dense layer: empty weight");
                if (bias.size() != weight.rows())
                    throw ShapeError("dense layer: bias length does not match output width");
                break;
            case Kind::Conv2d:
                geom.validate();
                if (weight.rows() != geom.out_channels || weight.cols() != geom.patch_len())
                    throw ShapeError("conv layer: weight shape does not match geometry");
                if (bias.size() != geom.out_channels)
                    throw ShapeError("conv layer: bias length does not match channel count");
                break;
            case Kind::BatchNorm: {
                const std::size_t n = gamma.size();
                if (n == 0) throw ShapeError("batchnorm layer: zero width");
                if (beta.size() != n || run_mean.size() != n || run_var.size() != n)
                    throw ShapeError("batchnorm layer: parameter lengths disagree");
                for (double v : run_var)
                    if (!(v > 0.0)) throw NumericError("batchnorm layer: running variance not positive");
                break;
            }
            case Kind::Relu: break;
        }
    }
};

inline Layer make_dense(std::size_t f_in, std::size_t f_out) {
    Layer l;
    l.kind = Layer::Kind::Dense;
    l.weight = Matrix(f_out, f_in);
    l.bias.assign(f_out, 0.0);
    return l;
}

inline Layer make_conv2d(const ConvGeometry& g) {
    g.validate();
    Layer l;
    l.kind = Layer::Kind::Conv2d;
    l.geom = g;
    l.weight = Matrix(g.out_channels, g.patch_len());
    l.bias.assign(g.out_channels, 0.0);
    return l;
}

inline Layer make_batchnorm(std::size_t width) {
    Layer l;
    l.kind = Layer::Kind::BatchNorm;
    l.gamma.assign(width, 1.0);
    l.beta.assign(width, 0.0);
    l.run_mean.assign(width, 0.0);
    l.run_var.assign(width, 1.0);
    return l;
}

inline Layer make_relu() {
    Layer l;
    l.kind = Layer::Kind::Relu;
    return l;
}

/// Gradient slots mirroring one layer's parameters; unused slots stay empty.
struct LayerGrads {
    Matrix weight;
    std::vector<double> bias;
    std::vector<double> gamma, beta;
};

using Grads = std::vector<LayerGrads>;

}  // namespace unlearn
