#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "egnn/architecture.hpp"
#include "egnn/config.hpp"
#include "egnn/error.hpp"
#include "egnn/gradcheck.hpp"
#include "egnn/model.hpp"
#include "egnn/training.hpp"
#include "egnn/tu_format.hpp"

namespace egnn {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitNumerical = 3,
};

namespace cli_detail {

inline std::string optional_dim(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "var"; }

/// Loads a dataset from a TU directory, or from an EGNN cache when given
/// (the cache is written after the first TU load).
inline Dataset load_dataset(const std::string& dir, const std::string& name, const std::string& cache,
                            bool normalize_edges)
{
    if (!cache.empty() && std::filesystem::exists(cache)) {
        Dataset ds = load_cache(cache);
        if (normalize_edges) normalize_edge_channels(ds);
        return ds;
    }
    if (dir.empty()) throw UsageError("no dataset directory given (use --dataset-dir or EGNN_DATA_DIR)");
    TuLoadOptions opts;
    Dataset ds = name.empty() ? load_tu_dataset(dir, opts) : load_tu_dataset(dir, name, opts);
    if (!cache.empty()) save_cache(ds, cache);
    if (normalize_edges) normalize_edge_channels(ds);
    return ds;
}

inline std::string env_data_dir()
{
    const char* v = std::getenv("EGNN_DATA_DIR");
    return v ? std::string(v) : std::string{};
}

/// Smallest input channel count (up to 64) for which every EFC width checks
/// out, or nullopt if none does.
inline std::optional<std::size_t> infer_channels(const Architecture& arch, InputShape shape)
{
    for (std::size_t l = 1; l <= 64; ++l) {
        shape.channels = l;
        try {
            shape_flow(arch, shape);
            return l;
        } catch (const ArchitectureError&) {
        }
    }
    return std::nullopt;
}

inline void print_layer_table(const Model& model, std::ostream& out)
{
    const auto& shapes = model.shapes();
    const auto& info = model.layer_info();
    out << std::left << std::setw(4) << "#" << std::setw(18) << "layer" << std::setw(6) << "N" << std::setw(6) << "F"
        << std::setw(6) << "L" << std::setw(8) << "width" << "params\n";
    const InputShape& in = model.input_shape();
    out << std::setw(4) << "-" << std::setw(18) << "input" << std::setw(6) << optional_dim(in.vertices) << std::setw(6)
        << in.features << std::setw(6) << in.channels << std::setw(8) << "-" << "0\n";
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const auto& s = shapes[i];
        out << std::setw(4) << i << std::setw(18) << s.token << std::setw(6) << optional_dim(s.vertices) << std::setw(6)
            << optional_dim(s.features) << std::setw(6) << optional_dim(s.channels) << std::setw(8)
            << (s.width ? std::to_string(*s.width) : "-") << info[i].parameters << '\n';
    }
    out << std::setw(4) << "-" << std::setw(18) << info.back().token << std::setw(6) << "-" << std::setw(6) << "-"
        << std::setw(6) << "-" << std::setw(8) << in.classes << info.back().parameters << '\n';
    out << std::right;
}

} // namespace cli_detail

/// Entry point of the `egnn` tool. Returns the process exit code.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Edge-aware graph convolutional networks: train, inspect, data, gradcheck"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "k-fold cross-validation on a TU dataset");
    std::string config_path, dataset_dir, dataset_name, arch, out_path, csv_path, cache_path, optimizer;
    std::size_t folds = 0, limit = 0, epochs = 0, batch_size = 0, patience = 0;
    std::uint64_t seed = 0;
    double lr = 0.0;
    bool timing = false, normalize = false;
    train->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
    auto* o_dir = train->add_option("--dataset-dir", dataset_dir, "TU dataset directory (default $EGNN_DATA_DIR)");
    auto* o_name = train->add_option("--dataset", dataset_name, "dataset name prefix (default: inferred)");
    auto* o_arch = train->add_option("--arch", arch, "architecture, e.g. 2F-3EF-P4-EFC56");
    auto* o_folds = train->add_option("--folds", folds, "number of cross-validation folds");
    auto* o_seed = train->add_option("--seed", seed, "random seed");
    auto* o_limit = train->add_option("--limit", limit, "stratified subsample size (0 = all)");
    auto* o_epochs = train->add_option("--epochs", epochs, "training epochs per fold");
    auto* o_bs = train->add_option("--batch-size", batch_size, "graphs per batch");
    auto* o_lr = train->add_option("--lr", lr, "learning rate");
    auto* o_opt = train->add_option("--optimizer", optimizer, "adam or sgd");
    auto* o_pat = train->add_option("--patience", patience, "early stopping patience in epochs (0 = off)");
    auto* o_norm = train->add_flag("--normalize-edges", normalize, "scale each edge channel by its max |value|");
    auto* o_out = train->add_option("--out", out_path, "write the JSON report here");
    auto* o_csv = train->add_option("--csv", csv_path, "write per-epoch metrics as CSV here");
    auto* o_time = train->add_flag("--timing", timing, "include wall-clock time in the JSON report");
    train->add_option("--cache", cache_path, "binary dataset cache (read if present, written otherwise)");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "print the parsed architecture, shapes and parameter count");
    std::string inspect_arch, expect_band;
    std::size_t in_f = 1, in_l = 1, in_classes = 2, in_n = 0;
    inspect->add_option("--arch", inspect_arch, "architecture string")->required();
    inspect->add_option("--f", in_f, "input vertex features")->check(CLI::PositiveNumber);
    auto* o_l = inspect->add_option("--l", in_l, "input edge channels (default: inferred from EFC width, else 1)")
                    ->check(CLI::PositiveNumber);
    inspect->add_option("--n", in_n, "fixed input vertex count (default: variable)");
    inspect->add_option("--classes", in_classes, "number of classes")->check(CLI::PositiveNumber);
    inspect->add_option("--expect-params", expect_band, "reference parameter band LO:HI to compare against");

    // data
    auto* data = app.add_subcommand("data", "dataset statistics");
    std::string data_dir, data_name;
    data->add_option("--dataset-dir", data_dir, "TU dataset directory (default $EGNN_DATA_DIR)");
    data->add_option("--dataset", data_name, "dataset name prefix (default: inferred)");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "verify every layer's gradients against finite differences");
    std::uint64_t gc_seed = 0;
    std::size_t gc_configs = 20;
    gradcheck->add_option("--seed", gc_seed, "random seed");
    gradcheck->add_option("--configs", gc_configs, "random configurations per layer")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train) {
            TrainConfig cfg;
            ConfigMap file_values;
            if (!config_path.empty()) {
                file_values = read_config_file(config_path);
                apply_config(cfg, file_values);
            }
            if (cfg.dataset_dir.empty()) cfg.dataset_dir = cli_detail::env_data_dir();
            auto from_file = [&](const char* key) -> std::string {
                auto it = file_values.find(key);
                return it == file_values.end() ? std::string{} : it->second;
            };
            if (o_dir->count()) cfg.dataset_dir = dataset_dir;
            if (o_name->count()) cfg.dataset_name = dataset_name;
            if (o_arch->count()) cfg.architecture = arch;
            if (o_folds->count()) cfg.folds = folds;
            if (o_seed->count()) cfg.seed = seed;
            if (o_limit->count()) cfg.limit = limit;
            if (o_epochs->count()) cfg.epochs = epochs;
            if (o_bs->count()) cfg.batch_size = batch_size;
            if (o_lr->count()) cfg.optimizer.learning_rate = lr;
            if (o_opt->count()) cfg.optimizer.kind = parse_optimizer(optimizer);
            if (o_pat->count()) cfg.patience = patience;
            if (o_norm->count()) cfg.normalize_edges = true;
            if (!o_out->count()) out_path = from_file("out");
            if (!o_csv->count()) csv_path = from_file("csv");
            if (!o_time->count() && !from_file("timing").empty()) timing = config_detail::parse_bool("timing", from_file("timing"));
            cfg.validate();
            parse_architecture(cfg.architecture);

            const Dataset ds = cli_detail::load_dataset(cfg.dataset_dir, cfg.dataset_name, cache_path, cfg.normalize_edges);
            if (cfg.dataset_name.empty()) cfg.dataset_name = ds.name;
            const RunReport report = cross_validate(cfg, ds, timing);

            out << "dataset " << report.dataset << ": " << report.graphs << " graphs, " << report.classes
                << " classes, F=" << report.features << ", L=" << report.channels << '\n';
            out << "architecture " << report.architecture << " (" << report.parameters << " parameters)\n";
            for (const auto& f : report.folds) {
                out << "fold " << f.fold << ": test accuracy " << std::fixed << std::setprecision(4) << f.test_accuracy
                    << " (" << f.test_size << " graphs)\n" << std::defaultfloat;
            }
            out << "accuracy " << std::fixed << std::setprecision(2) << 100.0 * report.mean_accuracy << " +- "
                << 100.0 * report.std_accuracy << " %\n" << std::defaultfloat;
            if (!report.stratified) out << "warning: a class has fewer members than folds; split was not stratified\n";
            if (!out_path.empty()) {
                std::ofstream f(out_path);
                if (!f) throw UsageError("cannot write report to " + out_path);
                f << to_json(report).dump(2) << '\n';
            }
            if (!csv_path.empty()) {
                std::ofstream f(csv_path);
                if (!f) throw UsageError("cannot write CSV to " + csv_path);
                write_csv(report, f);
            }
            return kExitOk;
        }

        if (*inspect) {
            const Architecture a = parse_architecture(inspect_arch);
            InputShape shape{in_f, in_l, in_classes, in_n ? std::optional<std::size_t>(in_n) : std::nullopt};
            std::optional<std::size_t> inferred_l;
            if (!o_l->count()) inferred_l = cli_detail::infer_channels(a, shape);
            if (inferred_l) shape.channels = *inferred_l;
            const Model model(a, shape, 0);
            out << "architecture " << to_string(a) << '\n';
            if (inferred_l && *inferred_l != 1) out << "input edge channels L=" << *inferred_l << " inferred from EFC width\n";
            cli_detail::print_layer_table(model, out);
            const std::size_t total = count_parameters(model);
            out << "total parameters " << total << '\n';
            if (!expect_band.empty()) {
                const auto colon = expect_band.find(':');
                if (colon == std::string::npos) throw UsageError("--expect-params wants LO:HI");
                const std::size_t lo = config_detail::parse_uint("expect-params", expect_band.substr(0, colon));
                const std::size_t hi = config_detail::parse_uint("expect-params", expect_band.substr(colon + 1));
                if (total >= lo && total <= hi) {
                    out << "parameter count within reference band [" << lo << ", " << hi << "]\n";
                } else {
                    out << "reconstruction discrepancy: parameter count " << total << " outside reference band [" << lo
                        << ", " << hi << "]\n";
                }
            }
            return kExitOk;
        }

        if (*data) {
            if (data_dir.empty()) data_dir = cli_detail::env_data_dir();
            const Dataset ds = cli_detail::load_dataset(data_dir, data_name, "", false);
            std::size_t nmin = SIZE_MAX, nmax = 0, ntotal = 0;
            for (const auto& g : ds.graphs) {
                nmin = std::min(nmin, g.num_vertices());
                nmax = std::max(nmax, g.num_vertices());
                ntotal += g.num_vertices();
            }
            out << "dataset " << ds.name << '\n';
            out << "graphs " << ds.size() << '\n';
            out << "vertices min " << nmin << " max " << nmax << " mean " << std::fixed << std::setprecision(2)
                << static_cast<double>(ntotal) / static_cast<double>(ds.size()) << std::defaultfloat << '\n';
            out << "vertex features F " << ds.num_features << (ds.vertex_labels_one_hot ? " (one-hot labels)" : "") << '\n';
            out << "edge channels L " << ds.num_channels << (ds.edge_labels_one_hot ? " (one-hot labels)" : "") << '\n';
            out << "classes " << ds.num_classes << '\n';
            const auto counts = ds.class_counts();
            for (std::size_t c = 0; c < counts.size(); ++c) out << "  class " << c << ": " << counts[c] << '\n';
            return kExitOk;
        }

        if (*gradcheck) {
            const auto results = run_gradcheck({gc_seed, gc_configs});
            bool ok = true;
            for (const auto& r : results) {
                out << std::left << std::setw(14) << r.layer << std::right << " max rel err " << std::scientific
                    << std::setprecision(3) << r.max_rel_error << " (tol " << r.tolerance << ", " << r.configs
                    << " configs) " << (r.passed() ? "ok" : "FAIL") << '\n'
                    << std::defaultfloat;
                ok = ok && r.passed();
            }
            return ok ? kExitOk : kExitNumerical;
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const OracleError& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

} // namespace egnn
