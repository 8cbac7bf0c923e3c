#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "unlearn/error.hpp"
#include "unlearn/linalg/matrix.hpp"

namespace unlearn {

/// Geometry of a 2-D convolution with a square kernel, zero padding and no
/// dilation. Input spatial size is part of the geometry so output dimensions
/// are fixed at construction.
struct ConvGeometry {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t in_h = 0;
    std::size_t in_w = 0;

    std::size_t out_h() const {
        return (in_h + 2 * pad - kernel) / stride + 1;
    }
    std::size_t out_w() const {
        return (in_w + 2 * pad - kernel) / stride + 1;
    }
    std::size_t patch_count() const { return out_h() * out_w(); }
    std::size_t patch_len() const { return in_channels * kernel * kernel; }
    std::size_t input_len() const { return in_channels * in_h * in_w; }
    std::size_t output_len() const { return out_channels * patch_count(); }

    void validate() const {
        if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0)
            throw ShapeError("ConvGeometry: zero dimension");
        if (in_h + 2 * pad < kernel || in_w + 2 * pad < kernel)
            throw ShapeError("ConvGeometry: kernel does not fit padded input");
    }
};

/// Rearranges one C x H x W activation into an (n_p x C*k*k) matrix whose
/// row p is the flattened receptive field of output pixel p. Output pixels
/// are scanned row-major; within a patch the order is channel, then kernel
/// row, then kernel column. Out-of-bounds taps read as zero. This is the one
/// canonical patch layout in the library; reshape_conv_weights matches it.
inline Matrix unfold(std::span<const double> activation, const ConvGeometry& g) {
    g.validate();
    if (activation.size() != g.input_len())
        throw ShapeError("unfold: activation length " + std::to_string(activation.size()) +
                         " does not match geometry (" + std::to_string(g.input_len()) + ")");
    const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel;
    Matrix out(oh * ow, g.patch_len());
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double* row = out.row(oy * ow + ox);
            std::size_t col = 0;
            for (std::size_t c = 0; c < g.in_channels; ++c) {
                const double* plane = activation.data() + c * g.in_h * g.in_w;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                        static_cast<std::ptrdiff_t>(g.pad);
                    for (std::size_t kx = 0; kx < k; ++kx, ++col) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
                        const bool inside = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.in_h) &&
                                            ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w);
                        row[col] = inside ? plane[iy * g.in_w + ix] : 0.0;
                    }
                }
            }
        }
    }
    return out;
}

/// Adjoint of unfold: scatter-adds an (n_p x C*k*k) patch-gradient matrix
/// back onto a C x H x W input gradient. Taps that fell on padding are
/// dropped.
inline void fold_accumulate(const Matrix& patches, const ConvGeometry& g,
                            std::span<double> grad_activation) {
    if (patches.rows() != g.patch_count() || patches.cols() != g.patch_len())
        throw ShapeError("fold_accumulate: patch matrix does not match geometry");
    if (grad_activation.size() != g.input_len())
        throw ShapeError("fold_accumulate: activation gradient length mismatch");
    const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel;
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const double* row = patches.row(oy * ow + ox);
            std::size_t col = 0;
            for (std::size_t c = 0; c < g.in_channels; ++c) {
                double* plane = grad_activation.data() + c * g.in_h * g.in_w;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                        static_cast<std::ptrdiff_t>(g.pad);
                    for (std::size_t kx = 0; kx < k; ++kx, ++col) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
                        if (iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.in_h) &&
                            ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w))
                            plane[iy * g.in_w + ix] += row[col];
                    }
                }
            }
        }
    }
}

/// Flattens a C_out x C_in x k x k kernel into its canonical (C_out x C_in*k*k)
/// matrix form. Row i is kernel i in the same channel/row/column order that
/// unfold emits, so convolution is unfold(x) * w^T.
inline Matrix reshape_conv_weights(std::span<const double> kernel, std::size_t c_out,
                                   std::size_t c_in, std::size_t k) {
    const std::size_t want = c_out * c_in * k * k;
    if (kernel.size() != want)
        throw ShapeError("reshape_conv_weights: kernel length mismatch");
    Matrix m(c_out, c_in * k * k);
    std::copy(kernel.begin(), kernel.end(), m.data().begin());
    return m;
}

/// Inverse of reshape_conv_weights; round-trips bit-exactly.
inline std::vector<double> conv_weights_from_matrix(const Matrix& m, std::size_t c_in,
                                                    std::size_t k) {
    if (m.cols() != c_in * k * k)
        throw ShapeError("conv_weights_from_matrix: column count mismatch");
    return m.data();
}

}  // namespace unlearn
