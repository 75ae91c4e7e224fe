#include "cfm/dataset.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace cfm;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

void write_be_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(buf), 4);
}

// 4 images of 2x3 pixels, labels 0..3
void write_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                    int n = 4, bool truncate_images = false) {
    {
        std::ofstream out(images, std::ios::binary);
        write_be_u32(out, 0x00000803u);
        write_be_u32(out, static_cast<std::uint32_t>(n));
        write_be_u32(out, 2);
        write_be_u32(out, 3);
        const int pixels = truncate_images ? n * 6 - 2 : n * 6;
        for (int i = 0; i < pixels; ++i) out.put(static_cast<char>(i * 7 % 256));
    }
    {
        std::ofstream out(labels, std::ios::binary);
        write_be_u32(out, 0x00000801u);
        write_be_u32(out, static_cast<std::uint32_t>(n));
        for (int i = 0; i < n; ++i) out.put(static_cast<char>(i % 4));
    }
}

}  // namespace

TEST(LoadCsv, StringLabelsRemapToContiguousIds) {
    auto path = temp_file("cfm_small.csv");
    write_file(path, "1.5,2.0,b\n0.5,1.0,a\n2.5,3.0,b\n");
    Dataset ds = load_csv(path.string());
    EXPECT_EQ(ds.rows(), 3);
    EXPECT_EQ(ds.dims(), 2);
    EXPECT_EQ(ds.num_classes, 2);
    EXPECT_EQ(ds.y, (std::vector<int>{2, 1, 2}));
    EXPECT_EQ(ds.label_names, (std::vector<std::string>{"a", "b"}));
}

TEST(LoadCsv, HeaderRowIsSkipped) {
    auto path = temp_file("cfm_header.csv");
    write_file(path, "x0,x1,label\n1,2,0\n3,4,1\n");
    Dataset ds = load_csv(path.string(), -1, true);
    EXPECT_EQ(ds.rows(), 2);
    EXPECT_EQ(ds.dims(), 2);
    EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"x0", "x1"}));
}

TEST(LoadCsv, NonNumericCellCitesLine) {
    auto path = temp_file("cfm_bad_cell.csv");
    write_file(path, "1,2,0\n1,x,1\n");
    try {
        load_csv(path.string());
        FAIL() << "expected parse error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(LoadCsv, RaggedRowCitesLine) {
    auto path = temp_file("cfm_ragged.csv");
    write_file(path, "1,2,0\n1,2\n");
    try {
        load_csv(path.string());
        FAIL() << "expected parse error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(LoadCsv, LabelColumnOutOfRange) {
    auto path = temp_file("cfm_label_col.csv");
    write_file(path, "1,2,0\n");
    EXPECT_THROW(load_csv(path.string(), 5), std::runtime_error);
}

TEST(LoadCsv, NumericLabelsSortNumerically) {
    auto path = temp_file("cfm_numlab.csv");
    write_file(path, "1,10\n2,2\n3,10\n");
    Dataset ds = load_csv(path.string());
    EXPECT_EQ(ds.label_names, (std::vector<std::string>{"2", "10"}));
    EXPECT_EQ(ds.y, (std::vector<int>{2, 1, 2}));
}

TEST(CsvRoundTrip, BitExactThroughSaveAndLoad) {
    Dataset ds = make_madelon_like(30, 3, 2, 5, 2.0, 0.1, 99).dataset;
    auto path = temp_file("cfm_roundtrip.csv");
    save_csv(ds, path.string());
    Dataset back = load_csv(path.string(), -1, true);
    ASSERT_EQ(back.rows(), ds.rows());
    ASSERT_EQ(back.dims(), ds.dims());
    for (std::size_t i = 0; i < ds.X.size(); ++i) ASSERT_EQ(back.X.data[i], ds.X.data[i]);
    ASSERT_EQ(back.y, ds.y);

    auto path2 = temp_file("cfm_roundtrip2.csv");
    save_csv(back, path2.string());
    Dataset again = load_csv(path2.string(), -1, true);
    for (std::size_t i = 0; i < ds.X.size(); ++i) ASSERT_EQ(again.X.data[i], ds.X.data[i]);
}

TEST(LoadIdx, ParsesShapeAndScalesPixels) {
    auto img = temp_file("cfm_images.idx"), lab = temp_file("cfm_labels.idx");
    write_idx_pair(img, lab);
    Dataset ds = load_idx(img.string(), lab.string());
    EXPECT_EQ(ds.rows(), 4);
    EXPECT_EQ(ds.dims(), 6);
    EXPECT_EQ(ds.num_classes, 4);
    ASSERT_TRUE(ds.image_shape.has_value());
    EXPECT_EQ(ds.image_shape->first, 2);
    EXPECT_EQ(ds.image_shape->second, 3);
    for (double v : ds.X.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_DOUBLE_EQ(ds.X(0, 1), 7.0 / 255.0);
    EXPECT_EQ(ds.y, (std::vector<int>{1, 2, 3, 4}));  // raw 0..3 -> ids 1..4
}

TEST(LoadIdx, TruncatedPayloadNamesByteCounts) {
    auto img = temp_file("cfm_trunc.idx"), lab = temp_file("cfm_trunc_lab.idx");
    write_idx_pair(img, lab, 4, true);
    try {
        load_idx(img.string(), lab.string());
        FAIL() << "expected truncation error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("24"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("22"), std::string::npos);
    }
}

TEST(LoadIdx, BadMagicRejected) {
    auto img = temp_file("cfm_badmagic.idx"), lab = temp_file("cfm_badmagic_lab.idx");
    write_idx_pair(img, lab);
    {
        std::ofstream out(img, std::ios::binary);
        write_be_u32(out, 0x12345678u);
    }
    EXPECT_THROW(load_idx(img.string(), lab.string()), std::runtime_error);
}

TEST(LoadIdx, CountMismatchRejected) {
    auto img = temp_file("cfm_mismatch.idx"), lab = temp_file("cfm_mismatch_lab.idx");
    write_idx_pair(img, lab);
    {
        std::ofstream out(lab, std::ios::binary);
        write_be_u32(out, 0x00000801u);
        write_be_u32(out, 7);
        for (int i = 0; i < 7; ++i) out.put(0);
    }
    EXPECT_THROW(load_idx(img.string(), lab.string()), std::runtime_error);
}

TEST(Normalize, MinmaxMapsTrainRangeToUnitInterval) {
    Dataset ds;
    ds.X = Matrix::from_rows({{0, 10}, {1, 30}, {0.5, 20}});
    ds.y = {1, 2, 1};
    ds.num_classes = 2;
    auto [out, transform] = normalize(ds, NormScheme::minmax);
    EXPECT_DOUBLE_EQ(out.X(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(out.X(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.X(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(out.X(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(out.X(2, 1), 0.5);
    // already-[0,1] columns with min 0 and max 1 stay put
    auto [out2, t2] = normalize(out, NormScheme::minmax);
    for (std::size_t i = 0; i < out.X.size(); ++i) EXPECT_DOUBLE_EQ(out2.X.data[i], out.X.data[i]);
}

TEST(Normalize, ConstantFeatureBecomesZeroWithoutDivisionError) {
    Dataset ds;
    ds.X = Matrix::from_rows({{5, 1}, {5, 2}});
    ds.y = {1, 2};
    ds.num_classes = 2;
    for (auto scheme : {NormScheme::minmax, NormScheme::zscore}) {
        auto [out, transform] = normalize(ds, scheme);
        EXPECT_DOUBLE_EQ(out.X(0, 0), 0.0);
        EXPECT_DOUBLE_EQ(out.X(1, 0), 0.0);
        EXPECT_TRUE(out.X.all_finite());
    }
}

TEST(Normalize, ZscoreStandardizesKnownColumn) {
    Dataset ds;
    ds.X = Matrix::from_rows({{0.0}, {2.0}});  // mean 1, population std 1
    ds.y = {1, 2};
    ds.num_classes = 2;
    auto [out, transform] = normalize(ds, NormScheme::zscore);
    EXPECT_DOUBLE_EQ(out.X(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(out.X(1, 0), 1.0);
}

TEST(Normalize, TestValuesOutsideTrainRangeAreNotClamped) {
    Dataset train;
    train.X = Matrix::from_rows({{0.0}, {2.0}});
    train.y = {1, 2};
    train.num_classes = 2;
    auto [out, transform] = normalize(train, NormScheme::minmax);
    Matrix test = Matrix::from_rows({{-1.0}, {3.0}});
    Matrix mapped = transform.apply(test);
    EXPECT_DOUBLE_EQ(mapped(0, 0), -0.5);
    EXPECT_DOUBLE_EQ(mapped(1, 0), 1.5);
}

TEST(Normalize, TransformNeverReadsTestStatistics) {
    Dataset train;
    train.X = Matrix::from_rows({{0.0, 1.0}, {4.0, 3.0}});
    train.y = {1, 2};
    train.num_classes = 2;
    Normalizer fitted = Normalizer::fit(train.X, NormScheme::minmax);
    Matrix offset = fitted.offset, denom = fitted.denom;
    // poisoned test rows must flow through the fitted parameters untouched
    Matrix poisoned = Matrix::from_rows({{1e9, -1e9}});
    Matrix mapped = fitted.apply(poisoned);
    for (int j = 0; j < 2; ++j) {
        EXPECT_EQ(fitted.offset(0, j), offset(0, j));
        EXPECT_EQ(fitted.denom(0, j), denom(0, j));
    }
    EXPECT_DOUBLE_EQ(mapped(0, 0), (1e9 - 0.0) / 4.0);
}

TEST(Madelon, ReproducesBenchmarkShape) {
    MadelonResult r = make_madelon_like(2600, 5, 15, 480, 3.0, 0.1, 0);
    EXPECT_EQ(r.dataset.dims(), 500);
    EXPECT_EQ(r.dataset.rows(), 2600);
    EXPECT_EQ(r.dataset.num_classes, 2);
    ASSERT_TRUE(r.dataset.ground_truth.has_value());
    EXPECT_EQ(r.dataset.ground_truth->informative.size(), 5u);
    EXPECT_EQ(r.dataset.ground_truth->redundant.size(), 15u);
    EXPECT_EQ(r.dataset.ground_truth->distractor.size(), 480u);
    EXPECT_EQ(r.redundant_coeffs.rows, 5);
    EXPECT_EQ(r.redundant_coeffs.cols, 15);
}

TEST(Madelon, PartitionIsDisjointAndExhaustive) {
    Dataset ds = make_madelon_like(50, 4, 3, 7, 2.0, 0.2, 5).dataset;
    const auto& part = *ds.ground_truth;
    std::vector<int> all;
    all.insert(all.end(), part.informative.begin(), part.informative.end());
    all.insert(all.end(), part.redundant.begin(), part.redundant.end());
    all.insert(all.end(), part.distractor.begin(), part.distractor.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), 14u);
    for (int j = 0; j < 14; ++j) EXPECT_EQ(all[static_cast<std::size_t>(j)], j);
}

TEST(Madelon, InformativeOnlyDataIsLinearlySeparable) {
    // Oracle: logistic regression written against plain arrays.
    Dataset ds = make_madelon_like(600, 5, 0, 0, 3.0, 0.0, 11).dataset;
    const int n = ds.rows(), d = ds.dims();
    std::vector<double> w(static_cast<std::size_t>(d), 0.0);
    double b = 0.0;
    for (int it = 0; it < 400; ++it) {
        std::vector<double> gw(static_cast<std::size_t>(d), 0.0);
        double gb = 0;
        for (int i = 0; i < n; ++i) {
            double z = b;
            for (int j = 0; j < d; ++j) z += w[static_cast<std::size_t>(j)] * ds.X(i, j);
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double target = ds.y[static_cast<std::size_t>(i)] == 2 ? 1.0 : 0.0;
            for (int j = 0; j < d; ++j)
                gw[static_cast<std::size_t>(j)] += (p - target) * ds.X(i, j) / n;
            gb += (p - target) / n;
        }
        for (int j = 0; j < d; ++j) w[static_cast<std::size_t>(j)] -= 0.5 * gw[static_cast<std::size_t>(j)];
        b -= 0.5 * gb;
    }
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        double z = b;
        for (int j = 0; j < d; ++j) z += w[static_cast<std::size_t>(j)] * ds.X(i, j);
        if ((z > 0 ? 2 : 1) == ds.y[static_cast<std::size_t>(i)]) ++hits;
    }
    EXPECT_GT(static_cast<double>(hits) / n, 0.95);
}

TEST(Madelon, DistractorsAreUncorrelatedWithLabels) {
    Dataset ds = make_madelon_like(5000, 3, 0, 10, 3.0, 0.0, 17).dataset;
    for (int j : ds.ground_truth->distractor) {
        double mx = 0, my = 0;
        for (int i = 0; i < ds.rows(); ++i) {
            mx += ds.X(i, j);
            my += ds.y[static_cast<std::size_t>(i)];
        }
        mx /= ds.rows();
        my /= ds.rows();
        double sxy = 0, sxx = 0, syy = 0;
        for (int i = 0; i < ds.rows(); ++i) {
            const double dx = ds.X(i, j) - mx;
            const double dy = ds.y[static_cast<std::size_t>(i)] - my;
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        EXPECT_LT(std::fabs(sxy / std::sqrt(sxx * syy)), 0.1) << "distractor column " << j;
    }
}

TEST(Madelon, InvalidCountsRejected) {
    EXPECT_THROW(make_madelon_like(10, 0, 1, 1, 1.0, 0.1, 0), std::invalid_argument);
    EXPECT_THROW(make_madelon_like(0, 1, 1, 1, 1.0, 0.1, 0), std::invalid_argument);
    EXPECT_THROW(make_madelon_like(10, 1, -1, 1, 1.0, 0.1, 0), std::invalid_argument);
    EXPECT_THROW(make_madelon_like(10, 1, 1, 1, 1.0, 0.1, 0, 1), std::invalid_argument);
}

TEST(Madelon, SameSeedBitIdentical) {
    Dataset a = make_madelon_like(40, 3, 2, 5, 2.0, 0.3, 123).dataset;
    Dataset b = make_madelon_like(40, 3, 2, 5, 2.0, 0.3, 123).dataset;
    for (std::size_t i = 0; i < a.X.size(); ++i) ASSERT_EQ(a.X.data[i], b.X.data[i]);
    ASSERT_EQ(a.y, b.y);
}

TEST(Split, NinetyTenIsDisjointAndSized) {
    Dataset ds = make_madelon_like(100, 2, 0, 2, 2.0, 0.0, 1).dataset;
    SplitSpec spec = split(ds, {0.9, 0.1}, 7);
    EXPECT_EQ(spec.parts[0].size(), 90u);
    EXPECT_EQ(spec.parts[1].size(), 10u);
    std::vector<bool> seen(100, false);
    for (const auto& part : spec.parts)
        for (int r : part) {
            EXPECT_FALSE(seen[static_cast<std::size_t>(r)]);
            seen[static_cast<std::size_t>(r)] = true;
        }
}

TEST(Split, SameSeedSameSplit) {
    Dataset ds = make_madelon_like(50, 2, 0, 2, 2.0, 0.0, 1).dataset;
    SplitSpec a = split(ds, {0.7, 0.3}, 9);
    SplitSpec b = split(ds, {0.7, 0.3}, 9);
    EXPECT_EQ(a.parts[0], b.parts[0]);
    EXPECT_EQ(a.parts[1], b.parts[1]);
}

TEST(Split, SinglePartTakesAllRows) {
    Dataset ds = make_madelon_like(20, 2, 0, 2, 2.0, 0.0, 1).dataset;
    SplitSpec spec = split(ds, {1.0}, 0);
    EXPECT_EQ(spec.parts.size(), 1u);
    EXPECT_EQ(spec.parts[0].size(), 20u);
}

TEST(Split, BadFractionsRejected) {
    Dataset ds = make_madelon_like(20, 2, 0, 2, 2.0, 0.0, 1).dataset;
    EXPECT_THROW(split(ds, {0.5, 0.4}, 0), std::invalid_argument);
}
