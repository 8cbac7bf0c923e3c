#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "unlearn/data/dataset.hpp"
#include "unlearn/error.hpp"

namespace unlearn {

/// Optional per-channel affine normalization applied after pixels are scaled
/// to [0,1]: value = (pixel - mean[c]) / stddev[c].
struct ChannelNorm {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> stddev{1.0, 1.0, 1.0};
};

/// Reads a file of CIFAR-10 binary records: 3073 bytes each, one label byte
/// followed by 3072 pixel bytes (red, green, blue planes, each 32x32
/// row-major). Produces rows of 3072 features in the same channel-major
/// order with shape metadata 3x32x32.
inline LabeledDataset load_cifar10(const std::string& path, const ChannelNorm& norm = {}) {
    constexpr std::size_t kRecord = 3073;
    constexpr std::size_t kPixels = 3072;
    constexpr std::size_t kPlane = 1024;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cifar10: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    if (bytes.empty() || bytes.size() % kRecord != 0)
        throw FormatError("cifar10: file size " + std::to_string(bytes.size()) +
                          " is not a positive multiple of 3073");
    const std::size_t n = bytes.size() / kRecord;
    LabeledDataset d;
    d.samples = Matrix(n, kPixels);
    d.labels.reserve(n);
    d.classes = 10;
    d.channels = 3;
    d.height = 32;
    d.width = 32;
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec = bytes.data() + i * kRecord;
        if (rec[0] >= 10)
            throw FormatError("cifar10: label byte " + std::to_string(rec[0]) + " in record " +
                              std::to_string(i));
        d.labels.push_back(rec[0]);
        double* row = d.samples.row(i);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < kPlane; ++p)
                row[c * kPlane + p] =
                    (static_cast<double>(rec[1 + c * kPlane + p]) / 255.0 - norm.mean[c]) /
                    norm.stddev[c];
    }
    return d;
}

}  // namespace unlearn
