#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "unlearn/data/dataset.hpp"
#include "unlearn/error.hpp"
#include "unlearn/rng.hpp"

namespace unlearn {

/// Two interleaved 2-D spirals, one per class. Point i of class c sits at
/// radius t and angle t*3pi/2 + c*pi with t evenly spaced over [0.25, 1],
/// plus Gaussian coordinate jitter of the given standard deviation. Samples
/// are ordered class 0 first, then class 1; jitter is drawn in that order
/// from a single engine, so the dataset is a pure function of (n, std, seed).
inline LabeledDataset spiral(std::size_t n_per_class, double noise_std, std::uint64_t seed) {
    if (n_per_class < 1) throw ValidationError("spiral: n_per_class must be >= 1");
    std::mt19937_64 rng(seed);
    LabeledDataset d;
    d.samples = Matrix(2 * n_per_class, 2);
    d.labels.reserve(2 * n_per_class);
    d.classes = 2;
    for (int cls = 0; cls < 2; ++cls) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            const double frac =
                n_per_class == 1 ? 0.0
                                 : static_cast<double>(i) / static_cast<double>(n_per_class - 1);
            const double t = 0.25 + 0.75 * frac;
            const double theta = t * 3.0 * std::numbers::pi / 2.0 +
                                 static_cast<double>(cls) * std::numbers::pi;
            const std::size_t row = static_cast<std::size_t>(cls) * n_per_class + i;
            d.samples(row, 0) = t * std::cos(theta) + noise_std * gaussian(rng);
            d.samples(row, 1) = t * std::sin(theta) + noise_std * gaussian(rng);
            d.labels.push_back(cls);
        }
    }
    return d;
}

}  // namespace unlearn
