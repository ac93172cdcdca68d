#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "egnn/architecture.hpp"
#include "egnn/graph.hpp"
#include "egnn/layers.hpp"
#include "egnn/params.hpp"
#include "egnn/rng.hpp"

namespace egnn {

struct ModelOptions {
    EdgeConvOptions edge;
};

/// A classifier instantiated from an Architecture.
///
/// Graph layers run first, then one flatten (EFC when requested, otherwise
/// vertices only), the FC layers with ReLU, and a final linear layer to the
/// class logits.
class Model {
public:
    struct LayerInfo {
        std::string token;
        std::size_t parameters = 0;
    };

    Model(const Architecture& arch, const InputShape& input, std::uint64_t seed, ModelOptions options = {})
        : arch_(arch), input_(input)
    {
        shapes_ = shape_flow(arch, input);
        Rng rng(seed);
        std::optional<std::size_t> n = input.vertices;
        std::size_t f = input.features, l = input.channels, width = 0;
        auto record = [&](const std::string& token, std::size_t before) {
            info_.push_back({token, params_.count() - before});
        };
        for (const auto& s : arch.layers) {
            const std::string prefix = "layer" + std::to_string(s.position) + ".";
            const std::size_t before = params_.count();
            switch (s.kind) {
            case LayerKind::VertexFilter:
                graph_layers_.push_back(std::make_unique<VertexFilter>(params_, prefix, f, l, s.n, rng));
                f = s.n;
                break;
            case LayerKind::EdgeConv:
                graph_layers_.push_back(std::make_unique<EdgeConv>(params_, prefix, f, l, s.n, rng, options.edge));
                l = s.n;
                break;
            case LayerKind::Pool:
                if (s.method == PoolMethod::GEP) {
                    graph_layers_.push_back(std::make_unique<GepPool>(params_, prefix, f, l, s.n, s.variant, rng));
                } else {
                    graph_layers_.push_back(std::make_unique<GlpPool>(params_, prefix, *n, s.n, s.variant, rng));
                }
                n = s.n;
                break;
            case LayerKind::EFC:
                flatten_.emplace(*n, true);
                width = Flatten::width(*n, f, l, true);
                break;
            case LayerKind::FC:
                if (!flatten_) {
                    flatten_.emplace(*n, false);
                    width = Flatten::width(*n, f, l, false);
                }
                dense_.emplace_back(params_, prefix, width, s.n, true, rng);
                width = s.n;
                break;
            }
            record(to_string(s), before);
        }
        if (!flatten_) {
            flatten_.emplace(*n, false);
            width = Flatten::width(*n, f, l, false);
        }
        const std::size_t before = params_.count();
        dense_.emplace_back(params_, "output.", width, input.classes, false, rng);
        record("output(" + std::to_string(input.classes) + ")", before);
    }

    Tensor forward(const LayerIO& in)
    {
        if (in.features() != input_.features || in.channels() != input_.channels) {
            throw DimensionError("model built for F=" + std::to_string(input_.features) + ", L=" +
                                 std::to_string(input_.channels) + " but got F=" + std::to_string(in.features()) +
                                 ", L=" + std::to_string(in.channels()));
        }
        LayerIO io = in;
        for (auto& layer : graph_layers_) io = layer->forward(io, params_);
        Tensor x = flatten_->forward(io);
        for (auto& d : dense_) x = d.forward(x, params_);
        return x;
    }

    Tensor forward(const Batch& batch) { return forward(LayerIO::from_batch(batch)); }

    /// Backpropagates d loss / d logits through the last forward pass;
    /// parameter gradients accumulate in params().
    GraphGrad backward(const Tensor& dlogits)
    {
        Tensor g = dlogits;
        for (auto it = dense_.rbegin(); it != dense_.rend(); ++it) g = it->backward(g, params_);
        GraphGrad gg = flatten_->backward(g);
        for (auto it = graph_layers_.rbegin(); it != graph_layers_.rend(); ++it) gg = (*it)->backward(gg, params_);
        return gg;
    }

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Architecture& architecture() const { return arch_; }
    const InputShape& input_shape() const { return input_; }
    const std::vector<ShapeStep>& shapes() const { return shapes_; }
    const std::vector<LayerInfo>& layer_info() const { return info_; }

private:
    Architecture arch_;
    InputShape input_;
    ParamStore params_;
    std::vector<ShapeStep> shapes_;
    std::vector<std::unique_ptr<GraphLayer>> graph_layers_;
    std::optional<Flatten> flatten_;
    std::vector<Dense> dense_;
    std::vector<LayerInfo> info_;
};

/// Number of trainable scalars.
inline std::size_t count_parameters(const Model& model) { return model.params().count(); }

/// Class with the largest logit; ties go to the lowest index.
inline std::size_t argmax_row(const Tensor& logits, std::size_t b)
{
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.dim(1); ++c)
        if (logits(b, c) > logits(b, best)) best = c;
    return best;
}

} // namespace egnn
