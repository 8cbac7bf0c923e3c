#pragma once

#include <fstream>
#include <string>

#include "unlearn/data/dataset.hpp"
#include "unlearn/io/csv.hpp"

namespace unlearn {

/// Writes samples as rows `x0,...,x{D-1},label,true_label`. Datasets without
/// a separate true-label channel repeat the observed label, keeping the
/// header shape fixed for downstream tooling.
inline std::string dataset_csv(const LabeledDataset& data) {
    data.validate();
    CsvWriter csv;
    for (std::size_t j = 0; j < data.feature_dim(); ++j) csv.field("x" + std::to_string(j));
    csv.field("label");
    csv.field("true_label");
    csv.end_row();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double* row = data.samples.row(i);
        for (std::size_t j = 0; j < data.feature_dim(); ++j) csv.field(row[j]);
        csv.field(data.labels[i]);
        csv.field(data.has_true_labels() ? data.true_labels[i] : data.labels[i]);
        csv.end_row();
    }
    return csv.str();
}

inline void export_dataset_csv(const LabeledDataset& data, const std::string& path) {
    const std::string body = dataset_csv(data);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("dataset csv: cannot open " + path + " for writing");
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) throw FormatError("dataset csv: write failed for " + path);
}

}  // namespace unlearn
