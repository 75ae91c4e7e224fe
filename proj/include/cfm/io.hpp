#pragma once

#include "cfm/mask.hpp"
#include "cfm/model.hpp"
#include "cfm/selection.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace cfm {

using nlohmann::json;

namespace detail {

inline json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
    const auto& data = j.at("data");
    if (data.size() != m.size())
        throw std::runtime_error("checkpoint: matrix payload size mismatch");
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = data[i].get<double>();
    return m;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace detail

// Checkpoint: one self-describing JSON file with the architecture descriptor
// and every parameter matrix. Doubles are serialized with shortest
// round-trip formatting, so save -> load reproduces each value bit-exactly.
inline constexpr int kCheckpointVersion = 1;

inline json checkpoint_to_json(CfmModel& model) {
    json arch{{"mask_kind", to_string(model.kind())},
              {"input_dim", model.input_dim()},
              {"num_classes", model.num_classes()},
              {"trunk", {model.trunk1.out_dim(), model.trunk2.out_dim()}},
              {"dropout_rate", model.dropout.rate},
              {"leaky_alpha", model.leaky_alpha}};
    if (model.kind() == MaskKind::attention)
        arch["mask_hidden"] = std::get<AttentionMaskNet>(model.mask).dense1.out_dim();

    json params;
    const auto names = detail::param_block_names(model.kind());
    auto ptrs = model.parameters();
    for (std::size_t k = 0; k < ptrs.size(); ++k)
        params[names[k]] = detail::matrix_to_json(*ptrs[k]);

    return json{{"format", "cfm-checkpoint"},
                {"version", kCheckpointVersion},
                {"architecture", arch},
                {"parameters", params}};
}

inline void save_checkpoint(CfmModel& model, const std::string& path) {
    detail::write_text_file(path, checkpoint_to_json(model).dump(2) + "\n");
}

inline CfmModel checkpoint_from_json(const json& j) {
    if (j.value("format", "") != "cfm-checkpoint")
        throw std::runtime_error("checkpoint: unrecognized format field");
    if (j.value("version", -1) != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version");
    const json& arch = j.at("architecture");
    TrainingConfig cfg;
    cfg.trunk1_width = arch.at("trunk")[0].get<int>();
    cfg.trunk2_width = arch.at("trunk")[1].get<int>();
    cfg.dropout_rate = arch.at("dropout_rate").get<double>();
    cfg.leaky_alpha = arch.at("leaky_alpha").get<double>();
    cfg.mask_hidden = arch.value("mask_hidden", 0);
    const MaskKind kind =
        arch.at("mask_kind").get<std::string>() == "attention" ? MaskKind::attention
                                                               : MaskKind::trainable_vector;
    Rng scratch(0);  // every parameter is overwritten below
    CfmModel model = CfmModel::make(arch.at("input_dim").get<int>(),
                                    arch.at("num_classes").get<int>(), kind, scratch, cfg);
    const auto names = detail::param_block_names(kind);
    auto ptrs = model.parameters();
    for (std::size_t k = 0; k < ptrs.size(); ++k) {
        Matrix loaded = detail::matrix_from_json(j.at("parameters").at(names[k]));
        if (!loaded.same_shape(*ptrs[k]))
            throw std::runtime_error("checkpoint: shape mismatch for " + names[k]);
        *ptrs[k] = std::move(loaded);
    }
    return model;
}

inline CfmModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    json j;
    in >> j;
    return checkpoint_from_json(j);
}

// Mask CSV: one row per feature, index then both importance scores, printed
// with %.17g so reruns byte-compare equal.
inline std::string mask_csv_string(const MaskPair& masks) {
    std::string out = "index,m,m_comp\n";
    for (int j = 0; j < masks.m.cols; ++j) {
        out += std::to_string(j);
        out += ',';
        out += detail::format_double(masks.m(0, j));
        out += ',';
        out += detail::format_double(masks.m_comp(0, j));
        out += '\n';
    }
    return out;
}

inline void save_mask_csv(const MaskPair& masks, const std::string& path) {
    detail::write_text_file(path, mask_csv_string(masks));
}

struct MaskCsv {
    Matrix m;
    Matrix m_comp;
};

inline MaskCsv load_mask_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mask csv " + path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> m, mc;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string idx, a, b;
        if (!std::getline(ss, idx, ',') || !std::getline(ss, a, ',') || !std::getline(ss, b, ','))
            throw std::runtime_error("mask csv: malformed line " + std::to_string(line_no));
        m.push_back(std::stod(a));
        mc.push_back(std::stod(b));
    }
    if (m.empty()) throw std::runtime_error("mask csv: no rows in " + path);
    MaskCsv out;
    out.m = Matrix(1, static_cast<int>(m.size()));
    out.m_comp = Matrix(1, static_cast<int>(m.size()));
    std::copy(m.begin(), m.end(), out.m.data.begin());
    std::copy(mc.begin(), mc.end(), out.m_comp.data.begin());
    return out;
}

// Binary PGM (P5) of the value row min-max normalized to [0, 255]; a constant
// row renders as all zeros.
inline void save_pgm(const Matrix& values, int height, int width, const std::string& path) {
    if (values.rows != 1) throw std::invalid_argument("pgm: expected a single row of values");
    if (height < 1 || width < 1 || height * width != values.cols)
        throw std::invalid_argument("pgm: " + std::to_string(height) + "x" +
                                    std::to_string(width) + " does not match " +
                                    std::to_string(values.cols) + " values");
    double lo = values.data[0], hi = values.data[0];
    for (double v : values.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double range = hi - lo;
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    for (double v : values.data) {
        const double scaled = range == 0.0 ? 0.0 : (v - lo) / range * 255.0;
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(scaled))));
    }
    detail::write_text_file(path, out);
}

inline json train_report_to_json(const TrainReport& report) {
    json epochs = json::array();
    for (const auto& e : report.epochs) {
        json rec{{"main_loss", e.main_loss},
                 {"comp_loss", e.comp_loss},
                 {"total_loss", e.total_loss}};
        if (e.val_accuracy.has_value())
            rec["val_accuracy"] = *e.val_accuracy;
        else
            rec["val_accuracy"] = nullptr;
        epochs.push_back(std::move(rec));
    }
    return json{{"seed", report.seed},
                {"gamma", report.gamma},
                {"wall_seconds", report.wall_seconds},
                {"epochs", epochs}};
}

// Long-format sweep CSV: one row per (method, classifier, rho, seed) cell.
inline std::string sweep_csv_string(const EvalReport& report) {
    std::string out = "method,classifier,rho,seed,gamma,accuracy,ok,error\n";
    for (const auto& c : report.cells) {
        std::string error = c.error;
        for (char& ch : error)
            if (ch == ',' || ch == '\n') ch = ';';
        out += c.method + ',' + c.classifier + ',' + detail::format_double(c.rho) + ',' +
               std::to_string(c.seed) + ',' + detail::format_double(c.gamma) + ',' +
               detail::format_double(c.accuracy) + ',' + (c.ok ? "1" : "0") + ',' + error + '\n';
    }
    return out;
}

inline void save_sweep_csv(const EvalReport& report, const std::string& path) {
    detail::write_text_file(path, sweep_csv_string(report));
}

inline json sweep_summary_json(const EvalReport& report) {
    json out = json::array();
    for (const auto& a : report.aggregate()) {
        json cell{{"method", a.method}, {"classifier", a.classifier}, {"rho", a.rho},
                  {"mean", a.mean},     {"n", a.n}};
        if (a.has_stddev)
            cell["stddev"] = a.stddev;
        else
            cell["stddev"] = nullptr;
        out.push_back(std::move(cell));
    }
    return out;
}

}  // namespace cfm
