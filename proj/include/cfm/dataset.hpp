#pragma once

#include "cfm/matrix.hpp"
#include "cfm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cfm {

// Generator-known column roles: directly label-determining features, linear
// combinations of those, and pure noise.
struct FeaturePartition {
    std::vector<int> informative;
    std::vector<int> redundant;
    std::vector<int> distractor;
};

struct Dataset {
    Matrix X;                // N x D
    std::vector<int> y;      // labels in [1, C]
    int num_classes = 0;
    std::vector<std::string> feature_names;            // empty = unnamed
    std::vector<std::string> label_names;               // class id-1 -> original label text
    std::optional<std::pair<int, int>> image_shape;     // (height, width)
    std::optional<FeaturePartition> ground_truth;

    int rows() const { return X.rows; }
    int dims() const { return X.cols; }
};

struct SplitSpec {
    std::vector<std::vector<int>> parts;  // disjoint row index lists
    std::uint64_t seed = 0;
};

namespace detail {

// Maps arbitrary label strings onto contiguous [1, C]. Numeric labels sort
// numerically, anything else lexicographically.
inline std::pair<std::vector<int>, std::vector<std::string>> remap_labels(
    const std::vector<std::string>& raw) {
    bool all_numeric = true;
    std::vector<double> numeric(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        try {
            std::size_t pos = 0;
            numeric[i] = std::stod(raw[i], &pos);
            if (pos != raw[i].size()) all_numeric = false;
        } catch (...) {
            all_numeric = false;
        }
        if (!all_numeric) break;
    }
    std::vector<std::string> distinct = raw;
    std::sort(distinct.begin(), distinct.end(), [&](const std::string& a, const std::string& b) {
        if (all_numeric) return std::stod(a) < std::stod(b);
        return a < b;
    });
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::map<std::string, int> to_id;
    for (std::size_t i = 0; i < distinct.size(); ++i) to_id[distinct[i]] = static_cast<int>(i) + 1;
    std::vector<int> ids(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) ids[i] = to_id[raw[i]];
    return {ids, distinct};
}

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::uint32_t read_be_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw std::runtime_error("idx: truncated header");
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace detail

// Plain numeric CSV; the label column may hold arbitrary text and is remapped
// to contiguous class ids [1, C]. label_column < 0 counts from the end.
inline Dataset load_csv(const std::string& path, int label_column = -1, bool has_header = false) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);
    std::string line;
    std::vector<std::string> header;
    std::vector<std::vector<double>> features;
    std::vector<std::string> labels_raw;
    int line_no = 0;
    int width = -1;
    int label_idx = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = detail::split_line(line);
        if (line_no == 1 && has_header) {
            header = cells;
            continue;
        }
        if (width < 0) {
            width = static_cast<int>(cells.size());
            label_idx = label_column < 0 ? width + label_column : label_column;
            if (label_idx < 0 || label_idx >= width)
                throw std::runtime_error("load_csv: label column " + std::to_string(label_column) +
                                         " outside row of width " + std::to_string(width));
        }
        if (static_cast<int>(cells.size()) != width)
            throw std::runtime_error("load_csv: line " + std::to_string(line_no) + " has " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(width));
        std::vector<double> row;
        row.reserve(width - 1);
        for (int j = 0; j < width; ++j) {
            if (j == label_idx) {
                labels_raw.push_back(cells[j]);
                continue;
            }
            try {
                std::size_t pos = 0;
                row.push_back(std::stod(cells[j], &pos));
                if (pos != cells[j].size()) throw std::invalid_argument("trailing junk");
            } catch (...) {
                throw std::runtime_error("load_csv: non-numeric cell '" + cells[j] + "' at line " +
                                         std::to_string(line_no) + ", column " + std::to_string(j));
            }
        }
        features.push_back(std::move(row));
    }
    if (features.empty()) throw std::runtime_error("load_csv: no data rows in " + path);

    Dataset ds;
    ds.X = Matrix::from_rows(features);
    auto [ids, names] = detail::remap_labels(labels_raw);
    ds.y = std::move(ids);
    ds.label_names = std::move(names);
    ds.num_classes = static_cast<int>(ds.label_names.size());
    if (!header.empty()) {
        for (int j = 0; j < width; ++j)
            if (j != label_idx) ds.feature_names.push_back(header[j]);
    }
    return ds;
}

// Writes features with %.17g so a reload reproduces every double bit-exactly.
// Label goes last, as the original label text.
inline void save_csv(const Dataset& ds, const std::string& path, bool with_header = true) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_csv: cannot open " + path + " for writing");
    char buf[40];
    if (with_header) {
        for (int j = 0; j < ds.dims(); ++j) {
            if (!ds.feature_names.empty())
                out << ds.feature_names[j];
            else
                out << "f" << j;
            out << ',';
        }
        out << "label\n";
    }
    for (int i = 0; i < ds.rows(); ++i) {
        for (int j = 0; j < ds.dims(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.X(i, j));
            out << buf << ',';
        }
        const int cls = ds.y[static_cast<std::size_t>(i)];
        if (!ds.label_names.empty())
            out << ds.label_names[cls - 1];
        else
            out << cls;
        out << '\n';
    }
    if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

// IDX image/label pair (the de-facto MNIST byte format): big-endian magics
// 0x00000803 / 0x00000801, pixels scaled into [0, 1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("load_idx: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("load_idx: cannot open " + labels_path);

    const std::uint32_t img_magic = detail::read_be_u32(img);
    if (img_magic != 0x00000803u)
        throw std::runtime_error("load_idx: bad image magic " + std::to_string(img_magic));
    const std::uint32_t n_images = detail::read_be_u32(img);
    const std::uint32_t height = detail::read_be_u32(img);
    const std::uint32_t width = detail::read_be_u32(img);

    const std::uint32_t lab_magic = detail::read_be_u32(lab);
    if (lab_magic != 0x00000801u)
        throw std::runtime_error("load_idx: bad label magic " + std::to_string(lab_magic));
    const std::uint32_t n_labels = detail::read_be_u32(lab);
    if (n_images != n_labels)
        throw std::runtime_error("load_idx: " + std::to_string(n_images) + " images but " +
                                 std::to_string(n_labels) + " labels");

    const std::size_t pixel_count = std::size_t(n_images) * height * width;
    std::vector<unsigned char> pixels(pixel_count);
    img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixel_count));
    if (static_cast<std::size_t>(img.gcount()) != pixel_count)
        throw std::runtime_error("load_idx: truncated image payload, expected " +
                                 std::to_string(pixel_count) + " bytes, got " +
                                 std::to_string(img.gcount()));
    std::vector<unsigned char> raw_labels(n_images);
    lab.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(n_images));
    if (static_cast<std::size_t>(lab.gcount()) != n_images)
        throw std::runtime_error("load_idx: truncated label payload, expected " +
                                 std::to_string(n_images) + " bytes, got " +
                                 std::to_string(lab.gcount()));

    Dataset ds;
    ds.X = Matrix(static_cast<int>(n_images), static_cast<int>(height * width));
    for (std::size_t i = 0; i < pixel_count; ++i) ds.X.data[i] = pixels[i] / 255.0;
    std::vector<std::string> raw(n_images);
    for (std::uint32_t i = 0; i < n_images; ++i) raw[i] = std::to_string(int(raw_labels[i]));
    auto [ids, names] = detail::remap_labels(raw);
    ds.y = std::move(ids);
    ds.label_names = std::move(names);
    ds.num_classes = static_cast<int>(ds.label_names.size());
    ds.image_shape = {static_cast<int>(height), static_cast<int>(width)};
    return ds;
}

enum class NormScheme { minmax, zscore, none };

// Per-feature transform fitted on training rows only; reapply to test rows
// with apply(). Values outside the fitted range map outside [0, 1] and are
// deliberately not clamped.
struct Normalizer {
    NormScheme scheme = NormScheme::none;
    Matrix offset;  // 1 x D: min (minmax) or mean (zscore)
    Matrix denom;   // 1 x D: range or stddev; 0 marks a constant feature

    static Normalizer fit(const Matrix& X, NormScheme scheme) {
        Normalizer n;
        n.scheme = scheme;
        if (scheme == NormScheme::none) return n;
        n.offset = Matrix(1, X.cols);
        n.denom = Matrix(1, X.cols);
        if (X.rows == 0) throw std::invalid_argument("normalizer: empty training data");
        for (int j = 0; j < X.cols; ++j) {
            if (scheme == NormScheme::minmax) {
                double lo = X(0, j), hi = X(0, j);
                for (int i = 1; i < X.rows; ++i) {
                    lo = std::min(lo, X(i, j));
                    hi = std::max(hi, X(i, j));
                }
                n.offset(0, j) = lo;
                n.denom(0, j) = hi - lo;
            } else {
                double mean = 0.0;
                for (int i = 0; i < X.rows; ++i) mean += X(i, j);
                mean /= X.rows;
                double var = 0.0;
                for (int i = 0; i < X.rows; ++i) {
                    const double d = X(i, j) - mean;
                    var += d * d;
                }
                n.offset(0, j) = mean;
                n.denom(0, j) = std::sqrt(var / X.rows);
            }
        }
        return n;
    }

    Matrix apply(const Matrix& X) const {
        if (scheme == NormScheme::none) return X;
        if (X.cols != offset.cols)
            throw std::invalid_argument("normalizer: fitted on " + std::to_string(offset.cols) +
                                        " features, got " + std::to_string(X.cols));
        Matrix out(X.rows, X.cols);
        for (int i = 0; i < X.rows; ++i)
            for (int j = 0; j < X.cols; ++j) {
                const double d = denom(0, j);
                out(i, j) = d == 0.0 ? 0.0 : (X(i, j) - offset(0, j)) / d;  // constant feature -> 0
            }
        return out;
    }
};

inline std::pair<Dataset, Normalizer> normalize(const Dataset& ds, NormScheme scheme) {
    Normalizer n = Normalizer::fit(ds.X, scheme);
    Dataset out = ds;
    out.X = n.apply(ds.X);
    return {std::move(out), std::move(n)};
}

struct MadelonResult {
    Dataset dataset;
    Matrix redundant_coeffs;  // n_informative x n_redundant, fixed by seed
};

// Synthetic classification data with a known feature partition. Informative
// columns are unit-variance Gaussian clusters whose class centers sit at
// +-class_sep/2 per coordinate (binary) or at class_sep-scaled basis vectors
// (multi-class). Redundant columns are fixed random linear combinations of
// the informative block plus N(0, noise_std^2); distractors are pure N(0, 1).
// Column order is shuffled by the seed and recorded in ground_truth.
inline MadelonResult make_madelon_like(int n_samples, int n_informative, int n_redundant,
                                       int n_distractor, double class_sep, double noise_std,
                                       std::uint64_t seed, int n_classes = 2) {
    if (n_samples < 1) throw std::invalid_argument("make_madelon_like: n_samples must be >= 1");
    if (n_informative < 1)
        throw std::invalid_argument("make_madelon_like: n_informative must be >= 1");
    if (n_redundant < 0 || n_distractor < 0)
        throw std::invalid_argument("make_madelon_like: negative feature counts");
    if (n_classes < 2) throw std::invalid_argument("make_madelon_like: need at least 2 classes");
    if (noise_std < 0) throw std::invalid_argument("make_madelon_like: negative noise_std");

    Rng label_rng(derive_seed(seed, 0));
    Rng value_rng(derive_seed(seed, 1));
    Rng coeff_rng(derive_seed(seed, 2));
    Rng shuffle_rng(derive_seed(seed, 3));

    const int d = n_informative + n_redundant + n_distractor;
    Dataset ds;
    ds.num_classes = n_classes;
    ds.y.resize(static_cast<std::size_t>(n_samples));
    for (auto& label : ds.y) label = static_cast<int>(label_rng.uniform_int(1, n_classes));
    ds.label_names.resize(static_cast<std::size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c) ds.label_names[c] = std::to_string(c + 1);

    // class centers in the informative subspace
    Matrix centers(n_classes, n_informative);
    for (int c = 0; c < n_classes; ++c)
        for (int j = 0; j < n_informative; ++j) {
            if (n_classes == 2)
                centers(c, j) = (c == 0 ? -0.5 : 0.5) * class_sep;
            else
                centers(c, j) = (c % n_informative == j)
                                    ? class_sep * (1.0 + c / n_informative)
                                    : 0.0;
        }

    Matrix informative(n_samples, n_informative);
    for (int i = 0; i < n_samples; ++i)
        for (int j = 0; j < n_informative; ++j)
            informative(i, j) = centers(ds.y[i] - 1, j) + value_rng.normal();

    Matrix coeffs(n_informative, n_redundant);
    for (auto& v : coeffs.data) v = coeff_rng.uniform(-1, 1);
    Matrix redundant = n_redundant > 0 ? matmul(informative, coeffs) : Matrix(n_samples, 0);
    for (auto& v : redundant.data) v += value_rng.normal(0.0, noise_std);

    Matrix full(n_samples, d);
    for (int i = 0; i < n_samples; ++i) {
        double* row = full.row_ptr(i);
        for (int j = 0; j < n_informative; ++j) row[j] = informative(i, j);
        for (int j = 0; j < n_redundant; ++j) row[n_informative + j] = redundant(i, j);
        for (int j = 0; j < n_distractor; ++j)
            row[n_informative + n_redundant + j] = value_rng.normal();
    }

    std::vector<int> column_of(d);  // original block position -> shuffled column
    std::iota(column_of.begin(), column_of.end(), 0);
    shuffle_rng.shuffle(column_of);

    ds.X = Matrix(n_samples, d);
    for (int i = 0; i < n_samples; ++i)
        for (int j = 0; j < d; ++j) ds.X(i, column_of[j]) = full(i, j);
    ds.feature_names.resize(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) ds.feature_names[j] = "f" + std::to_string(j);

    FeaturePartition part;
    for (int j = 0; j < n_informative; ++j) part.informative.push_back(column_of[j]);
    for (int j = 0; j < n_redundant; ++j) part.redundant.push_back(column_of[n_informative + j]);
    for (int j = 0; j < n_distractor; ++j)
        part.distractor.push_back(column_of[n_informative + n_redundant + j]);
    std::sort(part.informative.begin(), part.informative.end());
    std::sort(part.redundant.begin(), part.redundant.end());
    std::sort(part.distractor.begin(), part.distractor.end());
    // partition must be disjoint and exhaustive
    std::vector<bool> seen(static_cast<std::size_t>(d), false);
    for (const auto* group : {&part.informative, &part.redundant, &part.distractor})
        for (int j : *group) {
            if (seen[static_cast<std::size_t>(j)])
                throw std::logic_error("make_madelon_like: partition not disjoint");
            seen[static_cast<std::size_t>(j)] = true;
        }
    for (bool s : seen)
        if (!s) throw std::logic_error("make_madelon_like: partition not exhaustive");
    ds.ground_truth = std::move(part);

    return {std::move(ds), std::move(coeffs)};
}

// Seeded shuffle, then contiguous assignment by cumulative fraction.
inline SplitSpec split(const Dataset& ds, const std::vector<double>& fractions,
                       std::uint64_t seed) {
    double total = std::accumulate(fractions.begin(), fractions.end(), 0.0);
    if (std::fabs(total - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions sum to " + std::to_string(total) +
                                    ", expected 1");
    std::vector<int> idx(static_cast<std::size_t>(ds.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);

    SplitSpec spec;
    spec.seed = seed;
    double cum = 0.0;
    int start = 0;
    for (std::size_t p = 0; p < fractions.size(); ++p) {
        cum += fractions[p];
        int end = p + 1 == fractions.size()
                      ? ds.rows()
                      : static_cast<int>(std::lround(cum * ds.rows()));
        end = std::clamp(end, start, ds.rows());
        spec.parts.emplace_back(idx.begin() + start, idx.begin() + end);
        start = end;
    }
    return spec;
}

inline Dataset take(const Dataset& ds, const std::vector<int>& rows) {
    Dataset out;
    out.X = take_rows(ds.X, rows);
    out.y.reserve(rows.size());
    for (int r : rows) out.y.push_back(ds.y[static_cast<std::size_t>(r)]);
    out.num_classes = ds.num_classes;
    out.feature_names = ds.feature_names;
    out.label_names = ds.label_names;
    out.image_shape = ds.image_shape;
    out.ground_truth = ds.ground_truth;
    return out;
}

}  // namespace cfm
