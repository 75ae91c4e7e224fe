// cfm: feature selection with coupled complementary importance masks.
// Subcommands: train, sweep, generate, heatmap, gradcheck.

#include "cfm/gradcheck.hpp"
#include "cfm/io.hpp"
#include "cfm/selection.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using cfm::json;

namespace {

// Flat JSON config files, applied to the invoked subcommand's options;
// command-line flags override file values.
class ConfigJson : public CLI::Config {
public:
    explicit ConfigJson(const CLI::App* root) : root_(root) {}

    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        json j;
        for (const CLI::Option* opt : app->get_options({})) {
            if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
            const std::string name = opt->get_lnames()[0];
            if (opt->get_type_size() != 0) {
                if (opt->count() == 1)
                    j[name] = opt->results().at(0);
                else if (opt->count() > 1)
                    j[name] = opt->results();
                else if (default_also && !opt->get_default_str().empty())
                    j[name] = opt->get_default_str();
            } else if (opt->count() >= 1) {
                j[name] = true;
            }
        }
        return j.dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        input >> j;
        if (!j.is_object())
            throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<std::string> parents;
        for (const CLI::App* sub : root_->get_subcommands(nullptr))
            if (sub->parsed()) {
                parents = {sub->get_name()};
                break;
            }
        std::vector<CLI::ConfigItem> items;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!it.key().empty() && it.key()[0] == '_') continue;  // informational
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = it.key();
            item.inputs = to_inputs(*it);
            items.push_back(std::move(item));
        }
        return items;
    }

private:
    const CLI::App* root_;

    static std::string scalar_to_string(const json& v) {
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
        if (v.is_number_integer()) return std::to_string(v.get<long long>());
        if (v.is_number_float()) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
            return buf;
        }
        if (v.is_string()) return v.get<std::string>();
        throw CLI::ConversionError("unsupported config value type");
    }
    static std::vector<std::string> to_inputs(const json& v) {
        std::vector<std::string> out;
        if (v.is_array())
            for (const auto& e : v) out.push_back(scalar_to_string(e));
        else
            out.push_back(scalar_to_string(v));
        return out;
    }
};

// Failed commands must not leave partial outputs behind.
class OutputTracker {
public:
    void track(const fs::path& p) { paths_.push_back(p); }
    void keep() { paths_.clear(); }
    ~OutputTracker() {
        std::error_code ec;
        for (const auto& p : paths_) fs::remove(p, ec);
    }

private:
    std::vector<fs::path> paths_;
};

struct DatasetArgs {
    std::string csv_path;
    int label_column = -1;
    bool has_header = false;
    std::string idx_images;
    std::string idx_labels;
    std::string normalize = "auto";  // minmax for csv, none for idx
};

void add_dataset_options(CLI::App* cmd, DatasetArgs& args, const std::string& prefix = "") {
    const std::string dash = "--" + prefix;
    cmd->add_option(dash + "dataset", args.csv_path, "CSV dataset path");
    cmd->add_option(dash + "label-column", args.label_column,
                    "label column index, negative counts from the end")
        ->capture_default_str();
    cmd->add_flag(dash + "header", args.has_header, "CSV has a header row");
    cmd->add_option(dash + "idx-images", args.idx_images, "IDX image file (MNIST-style)");
    cmd->add_option(dash + "idx-labels", args.idx_labels, "IDX label file");
    cmd->add_option(dash + "normalize", args.normalize, "minmax, zscore, none or auto")
        ->check(CLI::IsMember({"minmax", "zscore", "none", "auto"}))
        ->capture_default_str();
}

cfm::NormScheme resolve_scheme(const DatasetArgs& args, bool is_idx) {
    if (args.normalize == "minmax") return cfm::NormScheme::minmax;
    if (args.normalize == "zscore") return cfm::NormScheme::zscore;
    if (args.normalize == "none") return cfm::NormScheme::none;
    return is_idx ? cfm::NormScheme::none : cfm::NormScheme::minmax;  // auto
}

// Loads and normalizes; returns the fitted transform so test rows can reuse it.
std::pair<cfm::Dataset, cfm::Normalizer> load_dataset(const DatasetArgs& args) {
    const bool use_idx = !args.idx_images.empty();
    if (use_idx && args.idx_labels.empty())
        throw CLI::ValidationError("--idx-images requires --idx-labels");
    if (!use_idx && args.csv_path.empty())
        throw CLI::ValidationError("no dataset given (--dataset or --idx-images/--idx-labels)");
    cfm::Dataset ds = use_idx ? cfm::load_idx(args.idx_images, args.idx_labels)
                              : cfm::load_csv(args.csv_path, args.label_column, args.has_header);
    return cfm::normalize(ds, resolve_scheme(args, use_idx));
}

struct TrainArgs {
    std::string method = "cfm";
    double gamma = 1.0;
    double lambda = 0.0;
    bool gamma_search = false;
    std::vector<double> gamma_grid = {0.001, 0.01, 0.1, 1.0, 10.0, 100.0};
    double val_fraction = 0.10;
    int epochs = 100;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    int mask_hidden = 0;
    int workers = 0;  // 0 = hardware concurrency
};

void add_train_options(CLI::App* cmd, TrainArgs& args) {
    cmd->add_option("--method", args.method, "cfm, fm or dfs-cfm")
        ->check(CLI::IsMember({"cfm", "fm", "dfs-cfm"}))
        ->capture_default_str();
    cmd->add_option("--gamma", args.gamma, "complementary loss weight")->capture_default_str();
    cmd->add_option("--lambda", args.lambda, "sparsity weight (dfs-cfm only)")
        ->capture_default_str();
    cmd->add_flag("--gamma-search", args.gamma_search,
                  "grid-search gamma on a validation split, then retrain on all rows");
    cmd->add_option("--gamma-grid", args.gamma_grid, "gamma grid for --gamma-search")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--val-fraction", args.val_fraction, "validation fraction for --gamma-search")
        ->capture_default_str();
    cmd->add_option("--epochs", args.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--batch-size", args.batch_size, "minibatch size")->capture_default_str();
    cmd->add_option("--lr", args.learning_rate, "Adam learning rate")->capture_default_str();
    cmd->add_option("--seed", args.seed, "random seed")->capture_default_str();
    cmd->add_option("--mask-hidden", args.mask_hidden,
                    "hidden width of the attention mask net (0 = input dim)")
        ->capture_default_str();
    cmd->add_option("--workers", args.workers, "worker threads (0 = available cores)")
        ->capture_default_str();
}

cfm::TrainingConfig to_config(const TrainArgs& args) {
    cfm::TrainingConfig cfg;
    cfg.gamma = args.gamma;
    cfg.lambda = args.lambda;
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch_size;
    cfg.learning_rate = args.learning_rate;
    cfg.seed = args.seed;
    cfg.gamma_grid = args.gamma_grid;
    cfg.validation_fraction = args.val_fraction;
    cfg.mask_hidden = args.mask_hidden;
    return cfg;
}

int resolve_workers(int workers) { return workers > 0 ? workers : cfm::default_workers(); }

// Config echoes are flat option-name maps: feeding one back through --config
// reproduces the run. Keys starting with '_' are informational and ignored
// by the parser.
void echo_dataset_options(json& j, const DatasetArgs& args, const std::string& prefix = "") {
    j[prefix + "dataset"] = args.csv_path;
    j[prefix + "label-column"] = args.label_column;
    j[prefix + "header"] = args.has_header;
    j[prefix + "idx-images"] = args.idx_images;
    j[prefix + "idx-labels"] = args.idx_labels;
    j[prefix + "normalize"] = args.normalize;
}

void echo_train_options(json& j, const TrainArgs& args) {
    j["method"] = args.method;
    j["gamma"] = args.gamma;
    j["lambda"] = args.lambda;
    j["gamma-search"] = args.gamma_search;
    j["gamma-grid"] = args.gamma_grid;
    j["val-fraction"] = args.val_fraction;
    j["epochs"] = args.epochs;
    j["batch-size"] = args.batch_size;
    j["lr"] = args.learning_rate;
    j["seed"] = args.seed;
    j["mask-hidden"] = args.mask_hidden;
    j["workers"] = args.workers;
}

void write_json(const fs::path& path, const json& j, OutputTracker& tracker) {
    tracker.track(path);
    cfm::detail::write_text_file(path.string(), j.dump(2) + "\n");
}

int cmd_train(const DatasetArgs& data_args, const TrainArgs& args, const std::string& out_dir) {
    auto [ds, transform] = load_dataset(data_args);
    fs::create_directories(out_dir);
    OutputTracker tracker;

    cfm::MethodSpec method =
        cfm::MethodSpec::from_name(args.method, args.gamma, args.lambda, args.gamma_search);
    cfm::TrainingConfig cfg = to_config(args);
    cfg.gamma = method.gamma;
    cfg.lambda = method.lambda;

    json gamma_search_log;
    if (method.gamma_search) {
        cfm::GammaSearchResult search =
            cfm::select_gamma(ds, cfg, method.kind, resolve_workers(args.workers));
        cfg.gamma = search.best_gamma;
        gamma_search_log = json::array();
        for (auto [gamma, acc] : search.accuracies)
            gamma_search_log.push_back(json{{"gamma", gamma}, {"val_accuracy", acc}});
        std::cout << "selected gamma " << cfg.gamma << " by validation accuracy\n";
    }

    cfm::TrainOutcome outcome = cfm::train_cfm(ds, cfg, method.kind);

    json config_echo;
    config_echo["_command"] = "train";
    echo_dataset_options(config_echo, data_args);
    TrainArgs resolved = args;
    if (method.gamma_search) {
        // fold the search result in: re-running this echo skips the grid
        // search and reproduces the final model directly
        resolved.gamma = cfg.gamma;
        resolved.gamma_search = false;
        config_echo["_gamma_search_log"] = gamma_search_log;
        config_echo["_requested_gamma"] = args.gamma;
    }
    if (method.name == "fm") resolved.gamma = 0.0;
    echo_train_options(config_echo, resolved);
    config_echo["out"] = out_dir;
    write_json(fs::path(out_dir) / "config.json", config_echo, tracker);

    tracker.track(fs::path(out_dir) / "checkpoint.json");
    cfm::save_checkpoint(outcome.model, (fs::path(out_dir) / "checkpoint.json").string());
    write_json(fs::path(out_dir) / "report.json", cfm::train_report_to_json(outcome.report),
               tracker);
    tracker.track(fs::path(out_dir) / "mask.csv");
    cfm::save_mask_csv(outcome.report.final_masks, (fs::path(out_dir) / "mask.csv").string());
    if (ds.image_shape.has_value()) {
        tracker.track(fs::path(out_dir) / "mask.pgm");
        cfm::save_pgm(outcome.report.final_masks.m, ds.image_shape->first,
                      ds.image_shape->second, (fs::path(out_dir) / "mask.pgm").string());
    }

    const auto& last = outcome.report.epochs;
    if (!last.empty())
        std::cout << "final losses: main " << last.back().main_loss << ", complementary "
                  << last.back().comp_loss << "\n";
    std::cout << "wrote " << out_dir << "/{config.json,checkpoint.json,report.json,mask.csv"
              << (ds.image_shape ? ",mask.pgm}" : "}") << "\n";
    tracker.keep();
    return 0;
}

struct SweepArgs {
    std::vector<std::string> methods = {"cfm", "fm"};
    std::vector<double> rhos = {0.01, 0.015, 0.02, 0.025, 0.05, 0.075, 0.10};
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::vector<std::string> classifiers = {"knn", "ert"};
    int knn_k = 5;
    int ert_trees = 100;
    double test_fraction = 0.2;
};

int cmd_sweep(const DatasetArgs& data_args, const DatasetArgs& test_args, const TrainArgs& targs,
              const SweepArgs& sargs, const std::string& out_dir) {
    auto [train_set, transform] = load_dataset(data_args);
    cfm::Dataset test_set;
    const bool external_test = !test_args.csv_path.empty() || !test_args.idx_images.empty();
    if (external_test) {
        DatasetArgs raw = test_args;
        raw.normalize = "none";  // reuse the transform fitted on training rows
        test_set = load_dataset(raw).first;
        test_set.X = transform.apply(test_set.X);
        // test labels must map onto the training label ids
        for (auto& label : test_set.y) {
            const std::string& name = test_set.label_names[static_cast<std::size_t>(label - 1)];
            auto it = std::find(train_set.label_names.begin(), train_set.label_names.end(), name);
            if (it == train_set.label_names.end())
                throw std::runtime_error("test label '" + name + "' never seen in training data");
            label = static_cast<int>(it - train_set.label_names.begin()) + 1;
        }
        test_set.label_names = train_set.label_names;
        test_set.num_classes = train_set.num_classes;
    } else {
        cfm::SplitSpec spec = cfm::split(train_set, {1.0 - sargs.test_fraction, sargs.test_fraction},
                                         cfm::derive_seed(targs.seed, 0x7e57));
        cfm::Dataset full = std::move(train_set);
        train_set = cfm::take(full, spec.parts[0]);
        test_set = cfm::take(full, spec.parts[1]);
    }

    std::vector<cfm::MethodSpec> methods;
    for (const auto& name : sargs.methods)
        methods.push_back(
            cfm::MethodSpec::from_name(name, targs.gamma, targs.lambda, targs.gamma_search));

    cfm::SweepOptions opt;
    opt.rhos = sargs.rhos;
    opt.seeds = sargs.seeds;
    opt.classifiers.clear();
    for (const auto& name : sargs.classifiers) {
        if (name == "knn")
            opt.classifiers.push_back(cfm::ClassifierKind::knn);
        else if (name == "ert")
            opt.classifiers.push_back(cfm::ClassifierKind::ert);
        else
            throw CLI::ValidationError("unknown classifier '" + name + "'");
    }
    opt.knn_k = sargs.knn_k;
    opt.ert.n_trees = sargs.ert_trees;
    opt.workers = resolve_workers(targs.workers);
    opt.base = to_config(targs);

    cfm::EvalReport report = cfm::evaluate_sweep(methods, train_set, test_set, opt);

    fs::create_directories(out_dir);
    OutputTracker tracker;
    json config_echo;
    config_echo["_command"] = "sweep";
    echo_dataset_options(config_echo, data_args);
    echo_dataset_options(config_echo, test_args, "test-");
    config_echo["test-fraction"] = sargs.test_fraction;
    echo_train_options(config_echo, targs);
    config_echo["methods"] = sargs.methods;
    config_echo["rhos"] = sargs.rhos;
    config_echo["seeds"] = sargs.seeds;
    config_echo["classifiers"] = sargs.classifiers;
    config_echo["knn-k"] = sargs.knn_k;
    config_echo["ert-trees"] = sargs.ert_trees;
    config_echo["out"] = out_dir;
    write_json(fs::path(out_dir) / "config.json", config_echo, tracker);
    tracker.track(fs::path(out_dir) / "sweep.csv");
    cfm::save_sweep_csv(report, (fs::path(out_dir) / "sweep.csv").string());
    write_json(fs::path(out_dir) / "summary.json", cfm::sweep_summary_json(report), tracker);

    int failed = 0;
    for (const auto& cell : report.cells)
        if (!cell.ok) ++failed;
    std::cout << report.cells.size() << " cells, " << failed << " failed; wrote " << out_dir
              << "/{config.json,sweep.csv,summary.json}\n";
    if (failed > 0) {
        for (const auto& cell : report.cells)
            if (!cell.ok)
                std::cerr << "failed: " << cell.method << "/" << cell.classifier << " rho "
                          << cell.rho << " seed " << cell.seed << ": " << cell.error << "\n";
    }
    tracker.keep();
    return failed > 0 ? 1 : 0;
}

struct GenerateArgs {
    int samples = 2600;
    int informative = 5;
    int redundant = 15;
    int distractors = 480;
    double class_sep = 3.0;
    double noise_std = 0.1;
    int classes = 2;
    std::uint64_t seed = 0;
};

int cmd_generate(const GenerateArgs& args, const std::string& out_prefix) {
    cfm::MadelonResult result = cfm::make_madelon_like(
        args.samples, args.informative, args.redundant, args.distractors, args.class_sep,
        args.noise_std, args.seed, args.classes);

    const fs::path csv_path = out_prefix + ".csv";
    const fs::path json_path = out_prefix + ".json";
    if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
    OutputTracker tracker;
    tracker.track(csv_path);
    cfm::save_csv(result.dataset, csv_path.string());

    const auto& part = *result.dataset.ground_truth;
    json sidecar{{"generator",
                  json{{"samples", args.samples},
                       {"informative", args.informative},
                       {"redundant", args.redundant},
                       {"distractors", args.distractors},
                       {"class_sep", args.class_sep},
                       {"noise_std", args.noise_std},
                       {"classes", args.classes},
                       {"seed", args.seed}}},
                 {"ground_truth",
                  json{{"informative", part.informative},
                       {"redundant", part.redundant},
                       {"distractor", part.distractor}}},
                 {"redundant_coeffs", cfm::detail::matrix_to_json(result.redundant_coeffs)}};
    write_json(json_path, sidecar, tracker);

    std::cout << "wrote " << csv_path.string() << " (" << result.dataset.rows() << " rows, "
              << result.dataset.dims() << " features) and " << json_path.string() << "\n";
    tracker.keep();
    return 0;
}

int cmd_heatmap(const std::string& mask_path, int height, int width, const std::string& column,
                const std::string& out_path) {
    cfm::MaskCsv mask = cfm::load_mask_csv(mask_path);
    const cfm::Matrix& values = column == "m_comp" ? mask.m_comp : mask.m;
    if (fs::path(out_path).has_parent_path())
        fs::create_directories(fs::path(out_path).parent_path());
    cfm::save_pgm(values, height, width, out_path);
    std::cout << "wrote " << out_path << " (" << width << "x" << height << ")\n";
    return 0;
}

struct GradcheckArgs {
    int features = 20;
    int classes = 3;
    int batch = 4;
    std::uint64_t seed = 0;
    double tolerance = 1e-5;
    double step = 1e-5;
    double gamma = 1.0;
    double lambda = 0.05;
};

int cmd_gradcheck(const GradcheckArgs& args) {
    bool all_ok = true;
    double overall = 0.0;
    for (cfm::MaskKind kind : {cfm::MaskKind::attention, cfm::MaskKind::trainable_vector}) {
        for (bool train_mode : {false, true}) {
            cfm::GradCheckConfig cfg;
            cfg.input_dim = args.features;
            cfg.num_classes = args.classes;
            cfg.batch_rows = args.batch;
            cfg.kind = kind;
            cfg.seed = args.seed;
            cfg.h = args.step;
            cfg.gamma = args.gamma;
            cfg.lambda = kind == cfm::MaskKind::trainable_vector ? args.lambda : 0.0;
            cfg.train_mode = train_mode;
            cfm::GradCheckResult result = cfm::run_gradcheck(cfg);
            const bool ok = result.max_rel_error < args.tolerance;
            all_ok = all_ok && ok;
            overall = std::max(overall, result.max_rel_error);
            std::printf("%-9s mask, %-19s: max relative error %.3e over %ld coords (%.1fs) %s\n",
                        cfm::to_string(kind).c_str(),
                        train_mode ? "frozen-dropout train" : "eval mode", result.max_rel_error,
                        result.coords_checked, result.seconds, ok ? "OK" : "FAIL");
            if (!ok)
                std::printf("  worst %s: analytic %.9e vs numeric %.9e\n",
                            result.worst_param.c_str(), result.worst_analytic,
                            result.worst_numeric);
        }
    }
    std::printf("max relative error %.3e (tolerance %.1e): %s\n", overall, args.tolerance,
                all_ok ? "PASS" : "FAIL");
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feature selection with coupled complementary importance masks"};
    app.require_subcommand(1);
    app.fallthrough();
    app.config_formatter(std::make_shared<ConfigJson>(&app));
    app.set_config("--config", "", "JSON config file (flags override file values)");

    DatasetArgs train_data, sweep_data, sweep_test_data;
    TrainArgs train_args, sweep_train_args;
    SweepArgs sweep_args;
    GenerateArgs gen_args;
    GradcheckArgs gc_args;
    std::string train_out, sweep_out, gen_out, heatmap_mask, heatmap_col = "m", heatmap_out;
    int heatmap_h = 0, heatmap_w = 0;

    CLI::App* train_cmd = app.add_subcommand("train", "train a selection method, export the mask");
    add_dataset_options(train_cmd, train_data);
    add_train_options(train_cmd, train_args);
    train_cmd->add_option("--out", train_out, "output directory")->required();

    CLI::App* sweep_cmd =
        app.add_subcommand("sweep", "accuracy of selected subsets across rho, seeds, classifiers");
    add_dataset_options(sweep_cmd, sweep_data);
    add_dataset_options(sweep_cmd, sweep_test_data, "test-");
    sweep_cmd->add_option("--test-fraction", sweep_args.test_fraction,
                          "held-out fraction when no test dataset is given")
        ->capture_default_str();
    add_train_options(sweep_cmd, sweep_train_args);
    sweep_cmd->add_option("--methods", sweep_args.methods, "methods to compare")
        ->delimiter(',')
        ->capture_default_str();
    sweep_cmd->add_option("--rhos", sweep_args.rhos, "selected-feature proportions")
        ->delimiter(',')
        ->capture_default_str();
    sweep_cmd->add_option("--seeds", sweep_args.seeds, "seeds to average over")
        ->delimiter(',')
        ->capture_default_str();
    sweep_cmd->add_option("--classifiers", sweep_args.classifiers, "downstream classifiers")
        ->delimiter(',')
        ->capture_default_str();
    sweep_cmd->add_option("--knn-k", sweep_args.knn_k, "kNN neighbour count")
        ->capture_default_str();
    sweep_cmd->add_option("--ert-trees", sweep_args.ert_trees, "tree count for ert")
        ->capture_default_str();
    sweep_cmd->add_option("--out", sweep_out, "output directory")->required();

    CLI::App* gen_cmd =
        app.add_subcommand("generate", "synthetic dataset with a known feature partition");
    gen_cmd->add_option("--samples", gen_args.samples)
        ->check(CLI::Range(1, 1 << 26))
        ->capture_default_str();
    gen_cmd->add_option("--informative", gen_args.informative)
        ->check(CLI::Range(1, 1 << 20))
        ->capture_default_str();
    gen_cmd->add_option("--redundant", gen_args.redundant)
        ->check(CLI::Range(0, 1 << 20))
        ->capture_default_str();
    gen_cmd->add_option("--distractors", gen_args.distractors)
        ->check(CLI::Range(0, 1 << 20))
        ->capture_default_str();
    gen_cmd->add_option("--class-sep", gen_args.class_sep)->capture_default_str();
    gen_cmd->add_option("--noise-std", gen_args.noise_std)->capture_default_str();
    gen_cmd->add_option("--classes", gen_args.classes)->capture_default_str();
    gen_cmd->add_option("--seed", gen_args.seed)->capture_default_str();
    gen_cmd->add_option("--out", gen_out, "output prefix (.csv and .json are appended)")
        ->required();

    CLI::App* heat_cmd = app.add_subcommand("heatmap", "render a mask CSV as a PGM image");
    heat_cmd->add_option("--mask", heatmap_mask, "mask CSV path")->required();
    heat_cmd->add_option("--height", heatmap_h)->required();
    heat_cmd->add_option("--width", heatmap_w)->required();
    heat_cmd->add_option("--column", heatmap_col, "m or m_comp")
        ->check(CLI::IsMember({"m", "m_comp"}))
        ->capture_default_str();
    heat_cmd->add_option("--out", heatmap_out, "output PGM path")->required();

    CLI::App* gc_cmd =
        app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
    gc_cmd->add_option("--features", gc_args.features)->capture_default_str();
    gc_cmd->add_option("--classes", gc_args.classes)->capture_default_str();
    gc_cmd->add_option("--batch", gc_args.batch)->capture_default_str();
    gc_cmd->add_option("--seed", gc_args.seed)->capture_default_str();
    gc_cmd->add_option("--tolerance", gc_args.tolerance)->capture_default_str();
    gc_cmd->add_option("--step", gc_args.step)->capture_default_str();
    gc_cmd->add_option("--gamma", gc_args.gamma)->capture_default_str();
    gc_cmd->add_option("--lambda", gc_args.lambda)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_data, train_args, train_out);
        if (sweep_cmd->parsed())
            return cmd_sweep(sweep_data, sweep_test_data, sweep_train_args, sweep_args, sweep_out);
        if (gen_cmd->parsed()) return cmd_generate(gen_args, gen_out);
        if (heat_cmd->parsed())
            return cmd_heatmap(heatmap_mask, heatmap_h, heatmap_w, heatmap_col, heatmap_out);
        if (gc_cmd->parsed()) return cmd_gradcheck(gc_args);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
