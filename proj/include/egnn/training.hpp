#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "egnn/architecture.hpp"
#include "egnn/error.hpp"
#include "egnn/graph.hpp"
#include "egnn/layers.hpp"
#include "egnn/model.hpp"
#include "egnn/optim.hpp"

namespace egnn {

struct TrainConfig {
    std::string architecture = "2F-3EF-P4-EFC56";
    OptimizerConfig optimizer;
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    std::size_t folds = 5;
    /// Stop when the epoch training loss has not improved for this many epochs; 0 disables.
    std::size_t patience = 0;
    /// Stratified subsample of the dataset before splitting; 0 keeps everything.
    std::size_t limit = 0;
    std::string dataset_dir;
    std::string dataset_name;
    bool normalize_edges = false;
    ModelOptions model;

    void validate() const
    {
        if (!(optimizer.learning_rate >= 0.0) || !std::isfinite(optimizer.learning_rate))
            throw UsageError("learning rate must be a finite non-negative number");
        if (epochs == 0) throw UsageError("epochs must be positive");
        if (batch_size == 0) throw UsageError("batch_size must be positive");
        if (folds < 2) throw UsageError("folds must be at least 2 for cross-validation");
        if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
            throw UsageError("Adam betas must lie in [0, 1)");
        if (!(optimizer.epsilon > 0.0)) throw UsageError("Adam epsilon must be positive");
    }

    /// Every setting as text, for echoing into reports.
    std::map<std::string, std::string> echo() const
    {
        auto num = [](double v) {
            std::ostringstream os;
            os.precision(17);
            os << v;
            return os.str();
        };
        return {
            {"arch", architecture},
            {"optimizer", to_string(optimizer.kind)},
            {"lr", num(optimizer.learning_rate)},
            {"beta1", num(optimizer.beta1)},
            {"beta2", num(optimizer.beta2)},
            {"epsilon", num(optimizer.epsilon)},
            {"epochs", std::to_string(epochs)},
            {"batch_size", std::to_string(batch_size)},
            {"seed", std::to_string(seed)},
            {"folds", std::to_string(folds)},
            {"patience", std::to_string(patience)},
            {"limit", std::to_string(limit)},
            {"dataset", dataset_name},
            {"normalize_edges", normalize_edges ? "true" : "false"},
            {"edge_bias", model.edge.bias ? "true" : "false"},
            {"edges_only", model.edge.existing_edges_only ? "true" : "false"},
        };
    }
};

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
    double max_batch_loss = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
};

/// Dataset dimensions a model must be built for.
inline InputShape input_shape_of(const Dataset& ds)
{
    return InputShape{ds.num_features, ds.num_channels, ds.num_classes, std::nullopt};
}

/// Runs the optimizer over `train` for cfg.epochs epochs.
///
/// Epoch e shuffles with seed (shuffle_seed + e), so a given (model init,
/// config, seed) reproduces bit-identical results.
inline TrainHistory train_one(Model& model, const Dataset& train, const TrainConfig& cfg, std::uint64_t shuffle_seed)
{
    if (train.size() == 0) throw UsageError("training set is empty");
    Optimizer opt(cfg.optimizer);
    TrainHistory history;
    double best = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches = make_batches(train, cfg.batch_size, shuffle_seed + epoch);
        EpochStats stats;
        std::size_t correct = 0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const Batch& batch = batches[bi];
            model.params().zero_grad();
            const Tensor logits = model.forward(batch);
            const LossResult lr = softmax_cross_entropy(logits, batch.labels);
            if (!std::isfinite(lr.loss)) {
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                          std::to_string(bi),
                                      epoch, bi);
            }
            for (std::size_t b = 0; b < batch.batch_size(); ++b) correct += argmax_row(logits, b) == batch.labels[b];
            stats.loss += lr.loss * static_cast<double>(batch.batch_size());
            stats.max_batch_loss = std::max(stats.max_batch_loss, lr.loss);
            model.backward(lr.grad);
            opt.step(model.params());
        }
        stats.loss /= static_cast<double>(train.size());
        stats.accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
        history.epochs.push_back(stats);
        if (cfg.patience > 0) {
            if (stats.loss < best) {
                best = stats.loss;
                stale = 0;
            } else if (++stale >= cfg.patience) {
                break;
            }
        }
    }
    return history;
}

/// Accuracy (argmax, ties to the lowest class) and mean loss over the batches.
inline EvalResult evaluate(Model& model, const std::vector<Batch>& batches)
{
    if (batches.empty()) throw UsageError("evaluate: no batches");
    std::size_t total = 0, correct = 0;
    double loss = 0.0;
    for (const Batch& batch : batches) {
        const Tensor logits = model.forward(batch);
        loss += softmax_cross_entropy(logits, batch.labels).loss * static_cast<double>(batch.batch_size());
        for (std::size_t b = 0; b < batch.batch_size(); ++b) correct += argmax_row(logits, b) == batch.labels[b];
        total += batch.batch_size();
    }
    return {static_cast<double>(correct) / static_cast<double>(total), loss / static_cast<double>(total)};
}

struct FoldReport {
    std::size_t fold = 0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    double test_accuracy = 0.0;
    double test_loss = 0.0;
    TrainHistory history;
};

struct RunReport {
    std::map<std::string, std::string> config;
    std::string dataset;
    std::size_t graphs = 0;
    std::size_t classes = 0;
    std::size_t features = 0;
    std::size_t channels = 0;
    std::string architecture;
    std::size_t parameters = 0;
    bool stratified = true;
    std::vector<FoldReport> folds;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    std::optional<double> wall_clock_seconds;
};

/// Mean and sample standard deviation (n - 1) of the fold accuracies.
inline std::pair<double, double> mean_and_std(const std::vector<double>& xs)
{
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

/// Seed for fold f's model initialization.
inline std::uint64_t fold_init_seed(std::uint64_t seed, std::size_t fold) { return seed * 1000003ULL + 2 * fold + 1; }

/// k-fold cross-validation with a freshly initialized model per fold.
inline RunReport cross_validate(const TrainConfig& cfg, const Dataset& full, bool timing = false)
{
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const Dataset ds = cfg.limit > 0 ? stratified_subsample(full, cfg.limit, cfg.seed) : full;
    const Architecture arch = parse_architecture(cfg.architecture);
    if (cfg.folds > ds.size()) {
        throw UsageError("cannot run " + std::to_string(cfg.folds) + "-fold cross-validation on " +
                         std::to_string(ds.size()) + " graphs");
    }

    RunReport report;
    report.config = cfg.echo();
    report.dataset = ds.name;
    report.graphs = ds.size();
    report.classes = ds.num_classes;
    report.features = ds.num_features;
    report.channels = ds.num_channels;
    report.architecture = to_string(arch);

    std::vector<double> accuracies;
    for (std::size_t fold = 0; fold < cfg.folds; ++fold) {
        FoldSplit split = kfold_split(ds, cfg.folds, fold, cfg.seed);
        report.stratified = split.stratified;
        Model model(arch, input_shape_of(ds), fold_init_seed(cfg.seed, fold), cfg.model);
        report.parameters = count_parameters(model);
        FoldReport fr;
        fr.fold = fold;
        fr.train_size = split.train.size();
        fr.test_size = split.test.size();
        fr.history = train_one(model, split.train, cfg, fold_init_seed(cfg.seed, fold) ^ 0x5eedULL);
        const EvalResult ev = evaluate(model, make_ordered_batches(split.test, cfg.batch_size));
        fr.test_accuracy = ev.accuracy;
        fr.test_loss = ev.loss;
        accuracies.push_back(ev.accuracy);
        report.folds.push_back(std::move(fr));
    }
    std::tie(report.mean_accuracy, report.std_accuracy) = mean_and_std(accuracies);
    if (timing) {
        report.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return report;
}

inline nlohmann::ordered_json to_json(const RunReport& r)
{
    nlohmann::ordered_json j;
    j["config"] = r.config;
    j["dataset"] = {{"name", r.dataset},
                    {"graphs", r.graphs},
                    {"classes", r.classes},
                    {"features", r.features},
                    {"channels", r.channels}};
    j["architecture"] = r.architecture;
    j["parameters"] = r.parameters;
    j["stratified"] = r.stratified;
    auto folds = nlohmann::ordered_json::array();
    for (const auto& f : r.folds) {
        nlohmann::ordered_json fj;
        fj["fold"] = f.fold;
        fj["train_size"] = f.train_size;
        fj["test_size"] = f.test_size;
        fj["test_accuracy"] = f.test_accuracy;
        fj["test_loss"] = f.test_loss;
        std::vector<double> loss, acc, peak;
        for (const auto& e : f.history.epochs) {
            loss.push_back(e.loss);
            acc.push_back(e.accuracy);
            peak.push_back(e.max_batch_loss);
        }
        fj["epochs"] = {{"train_loss", loss}, {"train_accuracy", acc}, {"max_batch_loss", peak}};
        folds.push_back(std::move(fj));
    }
    j["folds"] = std::move(folds);
    j["summary"] = {{"folds", r.folds.size()}, {"mean_accuracy", r.mean_accuracy}, {"std_accuracy", r.std_accuracy}};
    if (r.wall_clock_seconds) j["wall_clock_seconds"] = *r.wall_clock_seconds;
    return j;
}

/// One row per (fold, epoch).
inline void write_csv(const RunReport& r, std::ostream& out)
{
    out.precision(17);
    out << "fold,epoch,train_loss,train_accuracy,max_batch_loss\n";
    for (const auto& f : r.folds)
        for (std::size_t e = 0; e < f.history.epochs.size(); ++e) {
            const auto& s = f.history.epochs[e];
            out << f.fold << ',' << e << ',' << s.loss << ',' << s.accuracy << ',' << s.max_batch_loss << '\n';
        }
}

} // namespace egnn
