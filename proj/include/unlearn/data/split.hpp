#pragma once

#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "unlearn/data/dataset.hpp"
#include "unlearn/error.hpp"
#include "unlearn/rng.hpp"

namespace unlearn {

/// Deterministic shuffled partition into (train, validation). The first
/// floor(fraction*N) shuffled rows become the training part, the remainder
/// the validation part. Labels, true labels and shape metadata follow rows.
inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data,
                                                       double train_fraction,
                                                       std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("split: train fraction must lie in (0,1)");
    data.validate();
    const std::size_t n = data.size();
    const std::size_t n_train =
        static_cast<std::size_t>(train_fraction * static_cast<double>(n));
    if (n_train == 0 || n_train == n)
        throw ValidationError("split: fraction yields an empty part");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    shuffle(order, rng);
    const std::vector<std::size_t> head(order.begin(), order.begin() + n_train);
    const std::vector<std::size_t> tail(order.begin() + n_train, order.end());
    return {data.subset(head), data.subset(tail)};
}

}  // namespace unlearn
