#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "unlearn/error.hpp"
#include "unlearn/linalg/matrix.hpp"

namespace unlearn {

/// A labeled dataset. Rows of `samples` are flattened feature vectors.
/// `true_labels` is kept alongside the observed labels when the dataset has
/// been synthetically corrupted; it is empty otherwise and never consumed by
/// training code.
struct LabeledDataset {
    Matrix samples;
    std::vector<int> labels;
    std::vector<int> true_labels;
    std::size_t classes = 0;
    // Image shape metadata; all zero for flat feature vectors.
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const { return samples.rows(); }
    std::size_t feature_dim() const { return samples.cols(); }
    bool has_true_labels() const { return !true_labels.empty(); }

    void validate() const {
        if (labels.size() != size())
            throw ValidationError("dataset: label count does not match sample count");
        if (!true_labels.empty() && true_labels.size() != size())
            throw ValidationError("dataset: true-label count does not match sample count");
        if (classes == 0) throw ValidationError("dataset: class count is zero");
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
                throw ValidationError("dataset: label out of range at sample " + std::to_string(i));
        for (std::size_t i = 0; i < true_labels.size(); ++i)
            if (true_labels[i] < 0 || static_cast<std::size_t>(true_labels[i]) >= classes)
                throw ValidationError("dataset: true label out of range at sample " +
                                      std::to_string(i));
        if (!samples.all_finite()) throw ValidationError("dataset: non-finite sample values");
        if (channels != 0 && channels * height * width != feature_dim())
            throw ValidationError("dataset: image shape does not match feature length");
    }

    /// Copies the listed rows into a new dataset (labels follow).
    LabeledDataset subset(const std::vector<std::size_t>& rows) const {
        LabeledDataset out;
        out.samples = Matrix(rows.size(), feature_dim());
        out.labels.reserve(rows.size());
        if (has_true_labels()) out.true_labels.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i] >= size()) throw ValidationError("dataset subset: row index out of range");
            const double* src = samples.row(rows[i]);
            std::copy(src, src + feature_dim(), out.samples.row(i));
            out.labels.push_back(labels[rows[i]]);
            if (has_true_labels()) out.true_labels.push_back(true_labels[rows[i]]);
        }
        out.classes = classes;
        out.channels = channels;
        out.height = height;
        out.width = width;
        return out;
    }
};

}  // namespace unlearn
