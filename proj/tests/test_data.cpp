#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "unlearn/data/checkpoint.hpp"
#include "unlearn/data/cifar10.hpp"
#include "unlearn/data/export.hpp"
#include "unlearn/data/spiral.hpp"
#include "unlearn/data/split.hpp"
#include "unlearn/io/csv.hpp"
#include "unlearn/nn/train.hpp"

using unlearn::LabeledDataset;
using unlearn::Matrix;
using unlearn::Model;

namespace {

std::string temp_path(const std::string& name) {
    return std::string(::testing::TempDir()) + "/" + name;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Model small_mixed_model() {
    unlearn::ConvGeometry g{.in_channels = 1, .out_channels = 2, .kernel = 2, .stride = 1,
                            .pad = 0, .in_h = 3, .in_w = 3};
    Model m;
    m.input_dim = 9;
    m.classes = 2;
    m.layers.push_back(unlearn::make_conv2d(g));
    m.layers.push_back(unlearn::make_batchnorm(8));
    m.layers.push_back(unlearn::make_relu());
    m.layers.push_back(unlearn::make_dense(8, 2));
    unlearn::init_weights(m, 5);
    return m;
}

}  // namespace

TEST(Spiral, CountsAndBalance) {
    LabeledDataset d = unlearn::spiral(250, 0.05, 1);
    EXPECT_EQ(d.size(), 500u);
    EXPECT_EQ(d.classes, 2u);
    EXPECT_EQ(d.feature_dim(), 2u);
    std::size_t zeros = 0;
    for (int l : d.labels) zeros += l == 0;
    EXPECT_EQ(zeros, 250u);
    EXPECT_FALSE(d.has_true_labels());
}

TEST(Spiral, ZeroJitterLiesOnCurve) {
    const std::size_t n = 40;
    LabeledDataset d = unlearn::spiral(n, 0.0, 7);
    for (std::size_t i = 0; i < 2 * n; ++i) {
        const std::size_t k = i % n;
        const double t = 0.25 + 0.75 * static_cast<double>(k) / static_cast<double>(n - 1);
        const double r = std::hypot(d.samples(i, 0), d.samples(i, 1));
        EXPECT_NEAR(r, t, 1e-12);
    }
    // The class-1 spiral is the class-0 spiral rotated by pi.
    for (std::size_t k = 0; k < n; ++k) {
        EXPECT_NEAR(d.samples(n + k, 0), -d.samples(k, 0), 1e-12);
        EXPECT_NEAR(d.samples(n + k, 1), -d.samples(k, 1), 1e-12);
    }
}

TEST(Spiral, DeterministicAndSeedSensitive) {
    LabeledDataset a = unlearn::spiral(50, 0.1, 3);
    LabeledDataset b = unlearn::spiral(50, 0.1, 3);
    LabeledDataset c = unlearn::spiral(50, 0.1, 4);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_NE(a.samples, c.samples);
}

TEST(Spiral, SinglePointPerClass) {
    LabeledDataset d = unlearn::spiral(1, 0.0, 1);
    EXPECT_EQ(d.size(), 2u);
    EXPECT_NEAR(std::hypot(d.samples(0, 0), d.samples(0, 1)), 0.25, 1e-12);
}

TEST(Split, SizesAndDeterminism) {
    LabeledDataset d;
    d.samples = Matrix(1000, 1);
    for (std::size_t i = 0; i < 1000; ++i) d.samples(i, 0) = static_cast<double>(i);
    d.labels.assign(1000, 0);
    d.classes = 2;
    auto [tr1, va1] = unlearn::split(d, 0.95, 9);
    auto [tr2, va2] = unlearn::split(d, 0.95, 9);
    EXPECT_EQ(tr1.size(), 950u);
    EXPECT_EQ(va1.size(), 50u);
    EXPECT_EQ(tr1.samples, tr2.samples);
    EXPECT_EQ(va1.samples, va2.samples);

    std::set<double> seen;
    for (std::size_t i = 0; i < tr1.size(); ++i) seen.insert(tr1.samples(i, 0));
    for (std::size_t i = 0; i < va1.size(); ++i) seen.insert(va1.samples(i, 0));
    EXPECT_EQ(seen.size(), 1000u);
}

TEST(Split, CarriesLabelsAndTrueLabels) {
    LabeledDataset d;
    d.samples = Matrix(10, 1);
    for (std::size_t i = 0; i < 10; ++i) {
        d.samples(i, 0) = static_cast<double>(i);
        d.labels.push_back(static_cast<int>(i % 2));
        d.true_labels.push_back(static_cast<int>((i + 1) % 2));
    }
    d.classes = 2;
    auto [tr, va] = unlearn::split(d, 0.7, 3);
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const auto orig = static_cast<std::size_t>(tr.samples(i, 0));
        EXPECT_EQ(tr.labels[i], d.labels[orig]);
        EXPECT_EQ(tr.true_labels[i], d.true_labels[orig]);
    }
}

TEST(Split, RejectsDegenerateFractions) {
    LabeledDataset d;
    d.samples = Matrix(10, 1);
    d.labels.assign(10, 0);
    d.classes = 2;
    EXPECT_THROW(unlearn::split(d, 0.05, 1), unlearn::ValidationError);
    EXPECT_THROW(unlearn::split(d, 1.0, 1), unlearn::ValidationError);
    EXPECT_THROW(unlearn::split(d, 0.0, 1), unlearn::ValidationError);
}

TEST(Cifar10, DecodesHandBuiltRecord) {
    std::string rec(3073, '\0');
    rec[0] = 7;
    // Red plane pixel (row 1, col 2), green plane pixel 0, blue plane last.
    rec[1 + 1 * 32 + 2] = static_cast<char>(255);
    rec[1 + 1024] = static_cast<char>(51);
    rec[1 + 3071] = static_cast<char>(102);
    const std::string path = temp_path("one_record.bin");
    write_file(path, rec);
    LabeledDataset d = unlearn::load_cifar10(path);
    EXPECT_EQ(d.size(), 1u);
    EXPECT_EQ(d.labels[0], 7);
    EXPECT_EQ(d.channels, 3u);
    EXPECT_EQ(d.height, 32u);
    EXPECT_EQ(d.width, 32u);
    EXPECT_DOUBLE_EQ(d.samples(0, 34), 1.0);
    EXPECT_DOUBLE_EQ(d.samples(0, 1024), 0.2);
    EXPECT_DOUBLE_EQ(d.samples(0, 3071), 0.4);
    double sum = 0.0;
    for (double v : d.samples.data()) sum += v;
    EXPECT_DOUBLE_EQ(sum, 1.6);
}

TEST(Cifar10, TwoRecordFileAndNormalization) {
    std::string bytes(2 * 3073, '\0');
    bytes[0] = 1;
    bytes[3073] = 9;
    const std::string path = temp_path("two_records.bin");
    write_file(path, bytes);
    unlearn::ChannelNorm norm;
    norm.mean = {0.5, 0.5, 0.5};
    norm.stddev = {0.25, 0.25, 0.25};
    LabeledDataset d = unlearn::load_cifar10(path, norm);
    EXPECT_EQ(d.size(), 2u);
    EXPECT_EQ(d.labels[0], 1);
    EXPECT_EQ(d.labels[1], 9);
    EXPECT_DOUBLE_EQ(d.samples(0, 0), -2.0);
}

TEST(Cifar10, RejectsBadSizeAndBadLabel) {
    const std::string bad_size = temp_path("bad_size.bin");
    write_file(bad_size, std::string(3072, '\0'));
    EXPECT_THROW(unlearn::load_cifar10(bad_size), unlearn::FormatError);

    std::string bytes(3073 * 2, '\0');
    bytes[3073] = 10;
    const std::string bad_label = temp_path("bad_label.bin");
    write_file(bad_label, bytes);
    try {
        unlearn::load_cifar10(bad_label);
        FAIL() << "expected format error";
    } catch (const unlearn::FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos);
    }
    EXPECT_THROW(unlearn::load_cifar10(temp_path("missing.bin")), unlearn::FormatError);
}

TEST(Checkpoint, SaveLoadSaveIsBitIdentical) {
    // Touch the running stats so they differ from the factory defaults.
    Model m = small_mixed_model();
    LabeledDataset d;
    d.samples = Matrix(8, 9);
    std::mt19937_64 rng(2);
    for (double& v : d.samples.data()) v = unlearn::uniform(rng, -1.0, 1.0);
    d.labels = {0, 1, 0, 1, 0, 1, 0, 1};
    d.classes = 2;
    unlearn::TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.batch_size = 4;
    cfg.epochs = 3;
    auto [trained, hist] = unlearn::train(m, d, cfg);

    unlearn::Provenance prov{1234, "deadbeef"};
    const std::string bytes1 = unlearn::checkpoint_bytes(trained, prov);
    unlearn::Checkpoint loaded = unlearn::parse_checkpoint(bytes1);
    EXPECT_EQ(loaded.provenance.seed, 1234u);
    EXPECT_EQ(loaded.provenance.config_digest, "deadbeef");
    const std::string bytes2 = unlearn::checkpoint_bytes(loaded.model, loaded.provenance);
    EXPECT_EQ(bytes1, bytes2);

    const auto before = unlearn::evaluate(trained, d);
    const auto after = unlearn::evaluate(loaded.model, d);
    EXPECT_EQ(before.accuracy, after.accuracy);
    EXPECT_EQ(before.mean_loss, after.mean_loss);
}

TEST(Checkpoint, FileRoundTrip) {
    Model m = small_mixed_model();
    const std::string path = temp_path("model.ckpt");
    unlearn::save_checkpoint(m, path, {42, "cafe"});
    unlearn::Checkpoint c = unlearn::load_checkpoint(path);
    EXPECT_EQ(c.provenance.seed, 42u);
    EXPECT_EQ(unlearn::checkpoint_bytes(c.model, c.provenance),
              unlearn::checkpoint_bytes(m, {42, "cafe"}));
}

TEST(Checkpoint, RejectsCorruptInput) {
    Model m = small_mixed_model();
    const std::string good = unlearn::checkpoint_bytes(m);

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_THROW(unlearn::parse_checkpoint(bad_magic), unlearn::FormatError);

    std::string bad_version = good;
    bad_version[8] = 99;
    EXPECT_THROW(unlearn::parse_checkpoint(bad_version), unlearn::FormatError);

    EXPECT_THROW(unlearn::parse_checkpoint(good.substr(0, good.size() - 9)),
                 unlearn::FormatError);
    EXPECT_THROW(unlearn::parse_checkpoint(good + "zz"), unlearn::FormatError);
    EXPECT_THROW(unlearn::parse_checkpoint(good.substr(0, 10)), unlearn::FormatError);
}

TEST(Csv, DatasetExportShapeAndPrecision) {
    LabeledDataset d;
    d.samples = Matrix(2, 2, {0.1, -1.0 / 3.0, 2.5, 1e-17});
    d.labels = {1, 0};
    d.true_labels = {0, 0};
    d.classes = 2;
    const std::string csv = unlearn::dataset_csv(d);
    EXPECT_NE(csv.find("x0,x1,label,true_label\r\n"), std::string::npos);
    EXPECT_NE(csv.find("1,0\r\n"), std::string::npos);
    // %.17g keeps enough digits to round-trip the double exactly.
    const std::string third = csv.substr(csv.find("\r\n") + 2);
    const std::size_t comma = third.find(',');
    const double back = std::strtod(third.substr(comma + 1).c_str(), nullptr);
    EXPECT_EQ(back, -1.0 / 3.0);
}

TEST(Csv, QuotesFieldsWithSeparators) {
    unlearn::CsvWriter w;
    w.field(std::string("плain"));
    w.field(std::string("with,comma"));
    w.field(std::string("with\"quote"));
    w.end_row();
    EXPECT_EQ(w.str(), "плain,\"with,comma\",\"with\"\"quote\"\r\n");
}
