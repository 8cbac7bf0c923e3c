#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "unlearn/data/dataset.hpp"
#include "unlearn/error.hpp"
#include "unlearn/linalg/matrix.hpp"
#include "unlearn/rng.hpp"

namespace unlearn {

/// Row-stochastic K x K label transition matrix: entry (i, j) is the
/// probability that a clean label i is observed as j.
struct TransitionMatrix {
    std::size_t k = 0;
    Matrix t;

    void validate() const {
        if (k < 2 || t.rows() != k || t.cols() != k)
            throw ValidationError("transition matrix: bad shape");
        for (std::size_t i = 0; i < k; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                const double p = t(i, j);
                if (!(p >= 0.0 && p <= 1.0))
                    throw ValidationError("transition matrix: entry outside [0,1] in row " +
                                          std::to_string(i));
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-12)
                throw ValidationError("transition matrix: row " + std::to_string(i) +
                                      " does not sum to 1");
        }
    }
};

/// Per-class sets of hierarchically confusable classes; g[i] never contains i.
struct HierarchyGroups {
    std::vector<std::vector<int>> groups;

    void validate(std::size_t k) const {
        if (groups.size() != k) throw ValidationError("hierarchy groups: need one set per class");
        for (std::size_t i = 0; i < k; ++i) {
            std::vector<bool> seen(k, false);
            for (int j : groups[i]) {
                if (j < 0 || static_cast<std::size_t>(j) >= k)
                    throw ValidationError("hierarchy groups: class index out of range in group " +
                                          std::to_string(i));
                if (static_cast<std::size_t>(j) == i)
                    throw ValidationError("hierarchy groups: class " + std::to_string(i) +
                                          " lists itself");
                if (seen[j])
                    throw ValidationError("hierarchy groups: duplicate member in group " +
                                          std::to_string(i));
                seen[j] = true;
            }
        }
    }
};

namespace detail {
inline void check_noise_args(std::size_t k, double eta) {
    if (k < 2) throw ValidationError("noise: need at least 2 classes");
    if (!(eta >= 0.0 && eta < 1.0)) throw ValidationError("noise: eta must lie in [0,1)");
}
}  // namespace detail

/// Uniform label noise: stay with probability 1-eta, flip to each other class
/// with probability eta/(K-1).
inline TransitionMatrix symmetric(std::size_t k, double eta) {
    detail::check_noise_args(k, eta);
    TransitionMatrix m{k, Matrix(k, k)};
    const double off = eta / static_cast<double>(k - 1);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) m.t(i, j) = i == j ? 1.0 - eta : off;
    return m;
}

/// Random pairwise flip rates: off-diagonals i.i.d. uniform on [0, 2eta/(K-1)]
/// (row-major draw order), diagonal closing each row to 1. Rows whose
/// off-diagonal mass exceeds 1 are rejected rather than renormalized.
inline TransitionMatrix asymmetric(std::size_t k, double eta, std::uint64_t seed) {
    detail::check_noise_args(k, eta);
    std::mt19937_64 rng(seed);
    const double hi = 2.0 * eta / static_cast<double>(k - 1);
    TransitionMatrix m{k, Matrix(k, k)};
    for (std::size_t i = 0; i < k; ++i) {
        double off_sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            m.t(i, j) = uniform(rng, 0.0, hi);
            off_sum += m.t(i, j);
        }
        if (off_sum > 1.0)
            throw ValidationError("asymmetric noise: row " + std::to_string(i) +
                                  " off-diagonal mass exceeds 1; lower eta");
        m.t(i, i) = 1.0 - off_sum;
    }
    return m;
}

/// Hierarchy-confined noise: class i flips only within its confusable group,
/// with probability eta split evenly across the group. Classes with an empty
/// group keep their labels.
inline TransitionMatrix hierarchical(std::size_t k, double eta, const HierarchyGroups& groups) {
    detail::check_noise_args(k, eta);
    groups.validate(k);
    TransitionMatrix m{k, Matrix(k, k)};
    for (std::size_t i = 0; i < k; ++i) {
        const auto& g = groups.groups[i];
        if (g.empty()) {
            m.t(i, i) = 1.0;
            continue;
        }
        const double p = eta / static_cast<double>(g.size());
        for (int j : g) m.t(i, static_cast<std::size_t>(j)) = p;
        m.t(i, i) = 1.0 - eta;
    }
    return m;
}

/// Resamples each observed label from its transition row. Sample i consumes
/// one counter-based stream seeded by (seed, i), so the outcome for a sample
/// does not depend on dataset ordering or on other samples. Original labels
/// are kept in the true-label channel; feature tensors are untouched.
inline LabeledDataset corrupt(const LabeledDataset& data, const TransitionMatrix& t,
                              std::uint64_t seed) {
    data.validate();
    t.validate();
    if (t.k != data.classes)
        throw ValidationError("corrupt: transition matrix class count does not match dataset");
    LabeledDataset out = data;
    if (!out.has_true_labels()) out.true_labels = data.labels;
    for (std::size_t i = 0; i < out.size(); ++i) {
        SampleStream stream(seed, i);
        const double u = stream.next_uniform01();
        const double* row = t.t.row(out.labels[i]);
        double cum = 0.0;
        std::size_t pick = t.k - 1;
        for (std::size_t j = 0; j < t.k; ++j) {
            cum += row[j];
            if (u < cum) {
                pick = j;
                break;
            }
        }
        out.labels[i] = static_cast<int>(pick);
    }
    return out;
}

}  // namespace unlearn
