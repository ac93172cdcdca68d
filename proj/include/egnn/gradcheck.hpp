#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "egnn/layers.hpp"
#include "egnn/random_graphs.hpp"
#include "egnn/tensor.hpp"

namespace egnn {

/// |a - n| / max(|a|, |n|); zero when both magnitudes are below `floor`.
inline double relative_error(double analytic, double numeric, double floor = 1e-8)
{
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < floor) return 0.0;
    return std::abs(analytic - numeric) / scale;
}

inline double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-8)
{
    if (analytic.shape() != numeric.shape()) {
        throw DimensionError("gradient shapes differ: " + shape_string(analytic.shape()) + " vs " +
                             shape_string(numeric.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) m = std::max(m, relative_error(analytic[i], numeric[i], floor));
    return m;
}

/// A scalar objective over some tensors whose analytic gradient is known.
///
/// `run` evaluates the objective from the current contents of the targets
/// and, when asked, fills `analytic` with its gradient for each target.
struct GradientProbe {
    std::vector<Tensor*> targets;
    std::function<double(std::vector<Tensor>* analytic)> run;
};

struct ProbeResult {
    double max_rel_error = 0.0;
    std::size_t elements = 0;
};

/// Compares the probe's analytic gradients with central differences.
inline ProbeResult check_probe(GradientProbe& probe, double eps = 1e-5)
{
    std::vector<Tensor> analytic;
    probe.run(&analytic);
    ProbeResult result;
    for (std::size_t t = 0; t < probe.targets.size(); ++t) {
        Tensor& target = *probe.targets[t];
        const Tensor saved = target;
        const Tensor numeric = finite_difference_grad(
            [&](const Tensor& x) {
                target = x;
                return probe.run(nullptr);
            },
            saved, eps);
        target = saved;
        result.max_rel_error = std::max(result.max_rel_error, max_relative_error(analytic.at(t), numeric));
        result.elements += numeric.size();
    }
    return result;
}

struct GradCheckResult {
    std::string layer;
    std::size_t configs = 0;
    std::size_t elements = 0;
    double max_rel_error = 0.0;
    double tolerance = 1e-4;

    bool passed() const { return max_rel_error < tolerance; }
};

struct GradCheckOptions {
    std::uint64_t seed = 0;
    std::size_t configs = 20;
    double eps = 1e-5;
};

namespace gradcheck_detail {

inline double project(const Tensor& x, const Tensor& weights)
{
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * weights[i];
    return s;
}

inline Tensor random_like(Rng& rng, const Shape& shape)
{
    Tensor t(shape);
    for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
    return t;
}

/// Probe for a graph layer under the objective <R_V, V_out> + <R_A, A_out>,
/// targeting every parameter plus the input vertices and adjacency.
struct LayerHarness {
    ParamStore params;
    std::unique_ptr<GraphLayer> layer;
    LayerIO input;
    Tensor weight_v, weight_a;

    GradientProbe probe()
    {
        GradientProbe p;
        for (auto& prm : params) p.targets.push_back(&prm.value);
        p.targets.push_back(&input.vertices);
        p.targets.push_back(&input.adjacency);
        p.run = [this](std::vector<Tensor>* analytic) {
            const LayerIO out = layer->forward(input, params);
            const double value = project(out.vertices, weight_v) + project(out.adjacency, weight_a);
            if (analytic) {
                params.zero_grad();
                const GraphGrad din = layer->backward({weight_v, weight_a}, params);
                analytic->clear();
                for (auto& prm : params) analytic->push_back(prm.grad);
                analytic->push_back(din.vertices);
                analytic->push_back(din.adjacency);
            }
            return value;
        };
        return p;
    }

    void draw_weights(Rng& rng)
    {
        const LayerIO out = layer->forward(input, params);
        weight_v = random_like(rng, out.vertices.shape());
        weight_a = random_like(rng, out.adjacency.shape());
    }
};

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

} // namespace gradcheck_detail

/// Layer kinds covered by the gradient suite.
inline const std::vector<std::string>& gradcheck_layers()
{
    static const std::vector<std::string> names = {
        "vertex_filter", "edge_conv", "gep_original", "gep_sym", "gep_asym",
        "glp_original",  "glp_sym",   "glp_asym",     "efc_dense", "loss",
    };
    return names;
}

/// One random configuration of a named layer: N in [2, 6], F, L, F', L' in
/// [1, 3], two graphs per batch (of different sizes unless the layer needs a
/// fixed size).
inline ProbeResult gradcheck_config(const std::string& name, Rng& rng, double eps)
{
    using namespace gradcheck_detail;
    const std::size_t f = pick(rng, 1, 3), l = pick(rng, 1, 3), out = pick(rng, 1, 3);
    const std::size_t n1 = pick(rng, 2, 6), n2 = pick(rng, 2, 6);

    if (name == "loss") {
        const std::size_t batch = pick(rng, 1, 4), classes = pick(rng, 2, 4);
        Tensor logits = random_like(rng, {batch, classes});
        logits *= 3.0;
        std::vector<std::size_t> labels;
        for (std::size_t b = 0; b < batch; ++b) labels.push_back(rng.below(classes));
        GradientProbe p;
        p.targets.push_back(&logits);
        p.run = [&](std::vector<Tensor>* analytic) {
            auto r = softmax_cross_entropy(logits, labels);
            if (analytic) *analytic = {r.grad};
            return r.loss;
        };
        return check_probe(p, eps);
    }

    if (name == "efc_dense") {
        const std::size_t n = n1, hidden = pick(rng, 1, 4), classes = pick(rng, 2, 3);
        ParamStore params;
        Flatten flat(n, true);
        Dense d1(params, "d1.", Flatten::width(n, f, l, true), hidden, true, rng);
        Dense d2(params, "d2.", hidden, classes, false, rng);
        randomize_params(params, rng);
        LayerIO input = random_layer_io(rng, {n, n}, f, l);
        const Tensor weights = random_like(rng, {2, classes});
        GradientProbe p;
        for (auto& prm : params) p.targets.push_back(&prm.value);
        p.targets.push_back(&input.vertices);
        p.targets.push_back(&input.adjacency);
        p.run = [&](std::vector<Tensor>* analytic) {
            const Tensor y = d2.forward(d1.forward(flat.forward(input), params), params);
            if (analytic) {
                params.zero_grad();
                const GraphGrad din = flat.backward(d1.backward(d2.backward(weights, params), params));
                analytic->clear();
                for (auto& prm : params) analytic->push_back(prm.grad);
                analytic->push_back(din.vertices);
                analytic->push_back(din.adjacency);
            }
            return project(y, weights);
        };
        return check_probe(p, eps);
    }

    LayerHarness h;
    if (name == "vertex_filter") {
        h.layer = std::make_unique<VertexFilter>(h.params, "vf.", f, l, out, rng);
        h.input = random_layer_io(rng, {n1, n2}, f, l);
    } else if (name == "edge_conv") {
        h.layer = std::make_unique<EdgeConv>(h.params, "ec.", f, l, out, rng, EdgeConvOptions{true, false});
        h.input = random_layer_io(rng, {n1, n2}, f, l);
    } else if (name.starts_with("gep_")) {
        const PoolVariant v = name == "gep_original" ? PoolVariant::Original
                              : name == "gep_sym"    ? PoolVariant::Sym
                                                     : PoolVariant::Asym;
        h.layer = std::make_unique<GepPool>(h.params, "gep.", f, l, out, v, rng);
        h.input = random_layer_io(rng, {n1, n2}, f, l);
    } else if (name.starts_with("glp_")) {
        const PoolVariant v = name == "glp_original" ? PoolVariant::Original
                              : name == "glp_sym"    ? PoolVariant::Sym
                                                     : PoolVariant::Asym;
        h.layer = std::make_unique<GlpPool>(h.params, "glp.", n1, out, v, rng);
        h.input = random_layer_io(rng, {n1, n1}, f, l);
    } else {
        throw UsageError("unknown gradcheck layer '" + name + "'");
    }
    randomize_params(h.params, rng);
    h.draw_weights(rng);
    GradientProbe p = h.probe();
    return check_probe(p, eps);
}

/// Runs the whole gradient suite; the loss is held to 1e-6, every layer to 1e-4.
inline std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options = {})
{
    std::vector<GradCheckResult> results;
    Rng rng(options.seed);
    for (const auto& name : gradcheck_layers()) {
        GradCheckResult r;
        r.layer = name;
        r.tolerance = name == "loss" ? 1e-6 : 1e-4;
        for (std::size_t c = 0; c < options.configs; ++c) {
            const ProbeResult pr = gradcheck_config(name, rng, options.eps);
            r.max_rel_error = std::max(r.max_rel_error, pr.max_rel_error);
            r.elements += pr.elements;
            ++r.configs;
        }
        results.push_back(r);
    }
    return results;
}

} // namespace egnn
