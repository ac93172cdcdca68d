#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "egnn/error.hpp"
#include "egnn/graph.hpp"
#include "egnn/params.hpp"
#include "egnn/rng.hpp"
#include "egnn/tensor.hpp"

namespace egnn {

/// Batched graph signal flowing between graph layers.
///
/// vertices is [B x N x F], adjacency [B x N x N x L]. Graph b holds real
/// vertices 0..sizes[b]-1; every entry outside that block is exactly zero.
struct LayerIO {
    Tensor vertices;
    Tensor adjacency;
    std::vector<std::size_t> sizes;

    std::size_t batch() const { return vertices.dim(0); }
    std::size_t max_vertices() const { return vertices.dim(1); }
    std::size_t features() const { return vertices.dim(2); }
    std::size_t channels() const { return adjacency.dim(3); }

    Mask mask(std::size_t b) const
    {
        Mask m(max_vertices(), 0);
        for (std::size_t i = 0; i < sizes.at(b); ++i) m[i] = 1;
        return m;
    }

    static LayerIO from_batch(const Batch& batch)
    {
        return LayerIO{batch.vertex_features, batch.adjacency, batch.sizes};
    }

    void check() const
    {
        if (vertices.rank() != 3 || adjacency.rank() != 4 || adjacency.dim(0) != batch() ||
            adjacency.dim(1) != max_vertices() || adjacency.dim(2) != max_vertices() || sizes.size() != batch()) {
            throw DimensionError("inconsistent layer input: vertices " + shape_string(vertices.shape()) +
                                 ", adjacency " + shape_string(adjacency.shape()));
        }
        for (std::size_t n : sizes) {
            if (n == 0 || n > max_vertices()) throw DimensionError("graph size outside 1..N in layer input");
        }
    }
};

/// Gradient with respect to a LayerIO's two tensors.
struct GraphGrad {
    Tensor vertices;
    Tensor adjacency;

    static GraphGrad zeros_like(const LayerIO& io) { return {Tensor(io.vertices.shape()), Tensor(io.adjacency.shape())}; }
};

enum class PoolMethod { GEP, GLP };

/// How the left/right adjacency maps and the vertex map are tied.
enum class PoolVariant { Original, Sym, Asym, AsymSymInit };

inline const char* to_string(PoolMethod m) { return m == PoolMethod::GEP ? "GEP" : "GLP"; }

inline const char* to_string(PoolVariant v)
{
    switch (v) {
    case PoolVariant::Original: return "Original";
    case PoolVariant::Sym: return "Sym";
    case PoolVariant::Asym: return "Asym";
    case PoolVariant::AsymSymInit: return "AsymSymInit";
    }
    return "?";
}

/// Parameter-set index used for the (left adjacency, right adjacency, vertex) roles.
inline std::array<std::size_t, 3> pool_roles(PoolVariant v)
{
    switch (v) {
    case PoolVariant::Original: return {0, 0, 0};
    case PoolVariant::Sym: return {0, 0, 1};
    default: return {0, 1, 2};
    }
}

inline std::size_t pool_param_sets(PoolVariant v) { return pool_roles(v)[2] + 1; }

// ---------------------------------------------------------------------------
// Graph filter kernel: the linear part of the vertex filter, shared with the
// GEP embedding branches.
//
//   pre(i, f') = bias(f') + sum_f taps(f', f, 0) V(i, f)
//                         + sum_l sum_f taps(f', f, l + 1) (A_l V)(i, f)
//
// for real vertices i; padded rows stay zero.

namespace kernel {

/// (A_l V) for every channel: [B x N x L x F], zero outside real vertices.
inline Tensor propagate(const LayerIO& io)
{
    const std::size_t nb = io.batch(), nmax = io.max_vertices(), f = io.features(), l = io.channels();
    Tensor av({nb, nmax, l, f});
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t n = io.sizes[b];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < l; ++c) {
                    const double a = io.adjacency(b, i, j, c);
                    if (a == 0.0) continue;
                    for (std::size_t k = 0; k < f; ++k) av(b, i, c, k) += a * io.vertices(b, j, k);
                }
    }
    return av;
}

inline Tensor graph_filter(const LayerIO& io, const Tensor& taps, const Tensor& bias)
{
    const std::size_t f = io.features(), l = io.channels();
    if (taps.rank() != 3 || taps.dim(1) != f || taps.dim(2) != l + 1 || bias.rank() != 1 || bias.dim(0) != taps.dim(0)) {
        throw DimensionError("graph filter taps " + shape_string(taps.shape()) + " / bias " +
                             shape_string(bias.shape()) + " do not fit input with F=" + std::to_string(f) +
                             ", L=" + std::to_string(l));
    }
    const std::size_t nb = io.batch(), nmax = io.max_vertices(), fo = taps.dim(0);
    const Tensor av = propagate(io);
    Tensor out({nb, nmax, fo});
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t i = 0; i < io.sizes[b]; ++i)
            for (std::size_t o = 0; o < fo; ++o) {
                double s = bias(o);
                for (std::size_t k = 0; k < f; ++k) {
                    s += taps(o, k, 0) * io.vertices(b, i, k);
                    for (std::size_t c = 0; c < l; ++c) s += taps(o, k, c + 1) * av(b, i, c, k);
                }
                out(b, i, o) = s;
            }
    return out;
}

/// Accumulates gradients of the linear filter given d(pre) on real rows.
inline void graph_filter_backward(const LayerIO& io, const Tensor& taps, const Tensor& dpre, GraphGrad& din,
                                  Tensor& dtaps, Tensor& dbias)
{
    const std::size_t nb = io.batch(), nmax = io.max_vertices(), f = io.features(), l = io.channels();
    const std::size_t fo = taps.dim(0);
    const Tensor av = propagate(io);
    // mixed(i, c, k) = sum_o dpre(i, o) taps(o, k, c + 1)
    Tensor mixed({nmax, l, f});
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t n = io.sizes[b];
        mixed.fill(0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < fo; ++o) {
                const double g = dpre(b, i, o);
                if (g == 0.0) continue;
                dbias(o) += g;
                for (std::size_t k = 0; k < f; ++k) {
                    dtaps(o, k, 0) += g * io.vertices(b, i, k);
                    din.vertices(b, i, k) += g * taps(o, k, 0);
                    for (std::size_t c = 0; c < l; ++c) {
                        dtaps(o, k, c + 1) += g * av(b, i, c, k);
                        mixed(i, c, k) += g * taps(o, k, c + 1);
                    }
                }
            }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < l; ++c) {
                    const double a = io.adjacency(b, i, j, c);
                    double da = 0.0;
                    for (std::size_t k = 0; k < f; ++k) {
                        da += mixed(i, c, k) * io.vertices(b, j, k);
                        din.vertices(b, j, k) += a * mixed(i, c, k);
                    }
                    din.adjacency(b, i, j, c) += da;
                }
    }
}

/// Column softmax of graph b's real rows of x [B x N x M], written into out.
inline void masked_softmax(const Tensor& x, const LayerIO& io, std::size_t b, Tensor& out)
{
    const std::size_t nmax = x.dim(1), m = x.dim(2);
    Tensor slice({nmax, m});
    for (std::size_t i = 0; i < nmax; ++i)
        for (std::size_t p = 0; p < m; ++p) slice(i, p) = x(b, i, p);
    const Mask mask = io.mask(b);
    const Tensor s = softmax_columns(slice, std::span<const std::uint8_t>(mask));
    for (std::size_t i = 0; i < nmax; ++i)
        for (std::size_t p = 0; p < m; ++p) out(b, i, p) = s(i, p);
}

/// Bilinear pooling for one graph:
///   V_out = R^T V,  A_out(:, :, l) = P^T A_l Q
/// with P, Q, R the [n x n'] left, right and vertex maps.
struct PoolMaps {
    const Tensor& left;   // [B x N x N'] or [N x N'] when shared
    const Tensor& right;
    const Tensor& vertex;
    bool batched;

    double get(const Tensor& t, std::size_t b, std::size_t i, std::size_t p) const
    {
        return batched ? t(b, i, p) : t(i, p);
    }
};

inline LayerIO bilinear_pool(const LayerIO& in, const PoolMaps& maps, std::size_t n_out)
{
    const std::size_t nb = in.batch(), f = in.features(), l = in.channels();
    LayerIO out{Tensor({nb, n_out, f}), Tensor({nb, n_out, n_out, l}), std::vector<std::size_t>(nb, n_out)};
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t n = in.sizes[b];
        for (std::size_t p = 0; p < n_out; ++p)
            for (std::size_t k = 0; k < f; ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += maps.get(maps.vertex, b, i, p) * in.vertices(b, i, k);
                out.vertices(b, p, k) = s;
            }
        // t(i, q, c) = sum_j A(i, j, c) Q(j, q)
        Tensor t({n, n_out, l});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < l; ++c) {
                    const double a = in.adjacency(b, i, j, c);
                    if (a == 0.0) continue;
                    for (std::size_t q = 0; q < n_out; ++q) t(i, q, c) += a * maps.get(maps.right, b, j, q);
                }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < n_out; ++p) {
                const double w = maps.get(maps.left, b, i, p);
                for (std::size_t q = 0; q < n_out; ++q)
                    for (std::size_t c = 0; c < l; ++c) out.adjacency(b, p, q, c) += w * t(i, q, c);
            }
    }
    return out;
}

/// Gradients of bilinear_pool with respect to its input and the three maps.
/// dleft/dright/dvertex have the maps' own layout and are accumulated.
inline void bilinear_pool_backward(const LayerIO& in, const PoolMaps& maps, std::size_t n_out, const GraphGrad& up,
                                   GraphGrad& din, Tensor& dleft, Tensor& dright, Tensor& dvertex)
{
    const std::size_t nb = in.batch(), f = in.features(), l = in.channels();
    auto acc = [&](Tensor& t, std::size_t b, std::size_t i, std::size_t p) -> double& {
        return maps.batched ? t(b, i, p) : t(i, p);
    };
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t n = in.sizes[b];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < n_out; ++p) {
                const double r = maps.get(maps.vertex, b, i, p);
                double dr = 0.0;
                for (std::size_t k = 0; k < f; ++k) {
                    dr += in.vertices(b, i, k) * up.vertices(b, p, k);
                    din.vertices(b, i, k) += r * up.vertices(b, p, k);
                }
                acc(dvertex, b, i, p) += dr;
            }
        // t(i, q, c) = (A_c Q)(i, q);  u(i, q, c) = (P up_c)(i, q)
        Tensor t({n, n_out, l}), u({n, n_out, l});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < l; ++c) {
                    const double a = in.adjacency(b, i, j, c);
                    if (a == 0.0) continue;
                    for (std::size_t q = 0; q < n_out; ++q) t(i, q, c) += a * maps.get(maps.right, b, j, q);
                }
            for (std::size_t p = 0; p < n_out; ++p) {
                const double w = maps.get(maps.left, b, i, p);
                for (std::size_t q = 0; q < n_out; ++q)
                    for (std::size_t c = 0; c < l; ++c) u(i, q, c) += w * up.adjacency(b, p, q, c);
            }
        }
        // dP(i, p) = sum_{q,c} t(i, q, c) up(p, q, c)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < n_out; ++p) {
                double s = 0.0;
                for (std::size_t q = 0; q < n_out; ++q)
                    for (std::size_t c = 0; c < l; ++c) s += t(i, q, c) * up.adjacency(b, p, q, c);
                acc(dleft, b, i, p) += s;
            }
        // dQ(j, q) = sum_{i,c} A(i, j, c) u(i, q, c);  dA(i, j, c) = sum_q u(i, q, c) Q(j, q)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < l; ++c) {
                    const double a = in.adjacency(b, i, j, c);
                    double da = 0.0;
                    for (std::size_t q = 0; q < n_out; ++q) {
                        if (a != 0.0) acc(dright, b, j, q) += a * u(i, q, c);
                        da += u(i, q, c) * maps.get(maps.right, b, j, q);
                    }
                    din.adjacency(b, i, j, c) += da;
                }
    }
}

} // namespace kernel

/// A layer mapping (V, A) to (V', A'). forward() caches what backward() needs.
class GraphLayer {
public:
    virtual ~GraphLayer() = default;

    virtual LayerIO forward(const LayerIO& in, const ParamStore& params) = 0;

    /// Accumulates parameter gradients into the store and returns input gradients.
    virtual GraphGrad backward(const GraphGrad& up, ParamStore& params) = 0;

    virtual std::string describe() const = 0;
};

/// Graph filter with F' output vertex features followed by ReLU.
/// taps [F' x F x (L+1)] (slot 0 is the identity coefficient), bias [F'].
class VertexFilter final : public GraphLayer {
public:
    VertexFilter(ParamStore& params, const std::string& prefix, std::size_t in_features, std::size_t channels,
                 std::size_t out_features, Rng& rng)
        : out_features_(out_features)
    {
        taps_ = params.add(prefix + "taps",
                           glorot_uniform(rng, {out_features, in_features, channels + 1},
                                          in_features * (channels + 1), out_features));
        bias_ = params.add(prefix + "bias", Tensor({out_features}));
    }

    ParamId taps() const { return taps_; }
    ParamId bias() const { return bias_; }

    LayerIO forward(const LayerIO& in, const ParamStore& params) override
    {
        in.check();
        input_ = in;
        pre_ = kernel::graph_filter(in, params.value(taps_), params.value(bias_));
        LayerIO out{act_relu(pre_), pass_adjacency(in), in.sizes};
        return out;
    }

    GraphGrad backward(const GraphGrad& up, ParamStore& params) override
    {
        Tensor dpre(pre_.shape());
        for (std::size_t k = 0; k < dpre.size(); ++k) dpre[k] = up.vertices[k] * relu_grad(pre_[k]);
        GraphGrad din = GraphGrad::zeros_like(input_);
        copy_real_adjacency(input_, up.adjacency, din.adjacency);
        kernel::graph_filter_backward(input_, params.value(taps_), dpre, din, params.grad(taps_), params.grad(bias_));
        return din;
    }

    std::string describe() const override { return std::to_string(out_features_) + "F"; }

    /// Adjacency restricted to real vertex pairs.
    static Tensor pass_adjacency(const LayerIO& in)
    {
        Tensor a(in.adjacency.shape());
        copy_real_adjacency(in, in.adjacency, a);
        return a;
    }

    static void copy_real_adjacency(const LayerIO& io, const Tensor& src, Tensor& dst)
    {
        for (std::size_t b = 0; b < io.batch(); ++b)
            for (std::size_t i = 0; i < io.sizes[b]; ++i)
                for (std::size_t j = 0; j < io.sizes[b]; ++j)
                    for (std::size_t c = 0; c < io.channels(); ++c) dst(b, i, j, c) += src(b, i, j, c);
    }

private:
    std::size_t out_features_;
    ParamId taps_{};
    ParamId bias_{};
    LayerIO input_;
    Tensor pre_;
};

struct EdgeConvOptions {
    bool bias = false;
    /// Only pairs with some nonzero input channel produce output.
    bool existing_edges_only = false;
};

/// Edge convolution with L' output channels:
///   A_out(i, j, :) = tanh_relu(W [A(i, j, :); V(i, :); V(j, :)] + bias)
/// for every ordered pair of real vertices, the diagonal included.
/// W is [L' x (L + 2F)]; the bias is optional.
class EdgeConv final : public GraphLayer {
public:
    using Options = EdgeConvOptions;

    EdgeConv(ParamStore& params, const std::string& prefix, std::size_t in_features, std::size_t in_channels,
             std::size_t out_channels, Rng& rng, Options options = {})
        : in_features_(in_features), in_channels_(in_channels), out_channels_(out_channels), options_(options)
    {
        const std::size_t width = in_channels + 2 * in_features;
        weight_ = params.add(prefix + "weight", glorot_uniform(rng, {out_channels, width}, width, out_channels));
        if (options.bias) bias_ = params.add(prefix + "bias", Tensor({out_channels}));
    }

    ParamId weight() const { return weight_; }

    LayerIO forward(const LayerIO& in, const ParamStore& params) override
    {
        in.check();
        if (in.features() != in_features_ || in.channels() != in_channels_) {
            throw DimensionError("edge conv expects F=" + std::to_string(in_features_) + ", L=" +
                                 std::to_string(in_channels_) + ", got F=" + std::to_string(in.features()) +
                                 ", L=" + std::to_string(in.channels()));
        }
        input_ = in;
        const Tensor& w = params.value(weight_);
        const std::size_t nb = in.batch(), nmax = in.max_vertices(), f = in_features_, l = in_channels_;
        const std::size_t lo = out_channels_;
        pre_ = Tensor({nb, nmax, nmax, lo});
        LayerIO out{Tensor(in.vertices.shape()), Tensor({nb, nmax, nmax, lo}), in.sizes};
        for (std::size_t b = 0; b < nb; ++b) {
            const std::size_t n = in.sizes[b];
            // source and target vertex contributions
            Tensor src({n, lo}), dst({n, lo});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < lo; ++k)
                    for (std::size_t c = 0; c < f; ++c) {
                        src(i, k) += w(k, l + c) * in.vertices(b, i, c);
                        dst(i, k) += w(k, l + f + c) * in.vertices(b, i, c);
                    }
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t c = 0; c < f; ++c) out.vertices(b, i, c) = in.vertices(b, i, c);
                for (std::size_t j = 0; j < n; ++j) {
                    if (options_.existing_edges_only && !has_edge(in, b, i, j)) continue;
                    for (std::size_t k = 0; k < lo; ++k) {
                        double z = src(i, k) + dst(j, k);
                        if (options_.bias) z += params.value(bias_)(k);
                        for (std::size_t c = 0; c < l; ++c) z += w(k, c) * in.adjacency(b, i, j, c);
                        pre_(b, i, j, k) = z;
                        out.adjacency(b, i, j, k) = tanh_relu(z);
                    }
                }
            }
        }
        return out;
    }

    GraphGrad backward(const GraphGrad& up, ParamStore& params) override
    {
        const LayerIO& in = input_;
        const Tensor& w = params.value(weight_);
        Tensor& dw = params.grad(weight_);
        const std::size_t nb = in.batch(), f = in_features_, l = in_channels_, lo = out_channels_;
        GraphGrad din = GraphGrad::zeros_like(in);
        for (std::size_t b = 0; b < nb; ++b) {
            const std::size_t n = in.sizes[b];
            // summed pre-activation gradients per source / target vertex
            Tensor gsrc({n, lo}), gdst({n, lo});
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t c = 0; c < f; ++c) din.vertices(b, i, c) += up.vertices(b, i, c);
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t k = 0; k < lo; ++k) {
                        const double g = up.adjacency(b, i, j, k) * tanh_relu_grad(pre_(b, i, j, k));
                        if (g == 0.0) continue;
                        gsrc(i, k) += g;
                        gdst(j, k) += g;
                        if (options_.bias) params.grad(bias_)(k) += g;
                        for (std::size_t c = 0; c < l; ++c) {
                            dw(k, c) += g * in.adjacency(b, i, j, c);
                            din.adjacency(b, i, j, c) += g * w(k, c);
                        }
                    }
            }
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < lo; ++k)
                    for (std::size_t c = 0; c < f; ++c) {
                        const double v = in.vertices(b, i, c);
                        dw(k, l + c) += gsrc(i, k) * v;
                        dw(k, l + f + c) += gdst(i, k) * v;
                        din.vertices(b, i, c) += gsrc(i, k) * w(k, l + c) + gdst(i, k) * w(k, l + f + c);
                    }
        }
        return din;
    }

    std::string describe() const override { return std::to_string(out_channels_) + "EF"; }

private:
    static bool has_edge(const LayerIO& in, std::size_t b, std::size_t i, std::size_t j)
    {
        for (std::size_t c = 0; c < in.channels(); ++c)
            if (in.adjacency(b, i, j, c) != 0.0) return true;
        return false;
    }

    std::size_t in_features_, in_channels_, out_channels_;
    Options options_;
    ParamId weight_{};
    ParamId bias_{};
    LayerIO input_;
    Tensor pre_;
};

/// Graph embed pooling to a fixed n_out vertices.
///
/// Each embedding S_k = masked column softmax of a linear graph filter with
/// n_out outputs. Original ties all three roles to one filter; Sym ties the
/// two adjacency sides; Asym keeps three filters (AsymSymInit starts the two
/// adjacency filters from identical values).
class GepPool final : public GraphLayer {
public:
    /// Scale of the uniform init of the embedding filters, small so the
    /// initial assignment is close to uniform.
    static constexpr double kEmbedInitScale = 0.1;

    GepPool(ParamStore& params, const std::string& prefix, std::size_t in_features, std::size_t channels,
            std::size_t n_out, PoolVariant variant, Rng& rng)
        : n_out_(n_out), variant_(variant), roles_(pool_roles(variant))
    {
        if (n_out == 0) throw DimensionError("pooling output size must be at least 1");
        static const char* names[] = {"embed_left", "embed_right", "embed_vertex"};
        const std::size_t sets = pool_param_sets(variant);
        for (std::size_t s = 0; s < sets; ++s) {
            const std::string tag = sets == 1 ? std::string("embed") : sets == 2 ? (s == 0 ? "embed_adj" : "embed_vertex")
                                                                                   : names[s];
            Tensor taps = uniform_tensor(rng, {n_out, in_features, channels + 1}, kEmbedInitScale);
            if (variant == PoolVariant::AsymSymInit && s == 1) taps = params.value(filters_[0].taps);
            filters_.push_back({params.add(prefix + tag + ".taps", std::move(taps)),
                                params.add(prefix + tag + ".bias", Tensor({n_out}))});
        }
    }

    struct Filter {
        ParamId taps;
        ParamId bias;
    };

    const std::vector<Filter>& filters() const { return filters_; }

    LayerIO forward(const LayerIO& in, const ParamStore& params) override
    {
        in.check();
        input_ = in;
        embeddings_.clear();
        for (const auto& flt : filters_) {
            const Tensor pre = kernel::graph_filter(in, params.value(flt.taps), params.value(flt.bias));
            Tensor s(pre.shape());
            for (std::size_t b = 0; b < in.batch(); ++b) kernel::masked_softmax(pre, in, b, s);
            embeddings_.push_back(std::move(s));
        }
        return kernel::bilinear_pool(in, maps(), n_out_);
    }

    GraphGrad backward(const GraphGrad& up, ParamStore& params) override
    {
        const LayerIO& in = input_;
        GraphGrad din = GraphGrad::zeros_like(in);
        std::vector<Tensor> dembed;
        for (const auto& e : embeddings_) dembed.emplace_back(e.shape());
        kernel::bilinear_pool_backward(in, maps(), n_out_, up, din, dembed[roles_[0]], dembed[roles_[1]],
                                       dembed[roles_[2]]);
        for (std::size_t s = 0; s < filters_.size(); ++s) {
            const Tensor& emb = embeddings_[s];
            const Tensor& ds = dembed[s];
            // softmax Jacobian per column over real rows
            Tensor dpre(emb.shape());
            for (std::size_t b = 0; b < in.batch(); ++b) {
                const std::size_t n = in.sizes[b];
                for (std::size_t p = 0; p < n_out_; ++p) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < n; ++i) dot += emb(b, i, p) * ds(b, i, p);
                    for (std::size_t i = 0; i < n; ++i) dpre(b, i, p) = emb(b, i, p) * (ds(b, i, p) - dot);
                }
            }
            kernel::graph_filter_backward(in, params.value(filters_[s].taps), dpre, din, params.grad(filters_[s].taps),
                                          params.grad(filters_[s].bias));
        }
        return din;
    }

    std::string describe() const override
    {
        return "P" + std::to_string(n_out_) + ":GEP:" + to_string(variant_);
    }

    /// Embedding matrices from the last forward pass, one per parameter set.
    const std::vector<Tensor>& embeddings() const { return embeddings_; }

private:
    kernel::PoolMaps maps() const
    {
        return {embeddings_[roles_[0]], embeddings_[roles_[1]], embeddings_[roles_[2]], true};
    }

    std::size_t n_out_;
    PoolVariant variant_;
    std::array<std::size_t, 3> roles_;
    std::vector<Filter> filters_;
    LayerIO input_;
    std::vector<Tensor> embeddings_;
};

/// Global level pooling with learned [N x N'] maps; input size must be exactly N.
///   A_out(:, :, l) = K1^T A_l K2,  V_out = K3^T V
class GlpPool final : public GraphLayer {
public:
    GlpPool(ParamStore& params, const std::string& prefix, std::size_t n_in, std::size_t n_out, PoolVariant variant,
            Rng& rng)
        : n_in_(n_in), n_out_(n_out), variant_(variant), roles_(pool_roles(variant))
    {
        if (n_in == 0 || n_out == 0) throw DimensionError("GLP sizes must be at least 1");
        const std::size_t sets = pool_param_sets(variant);
        static const char* names[] = {"k_left", "k_right", "k_vertex"};
        for (std::size_t s = 0; s < sets; ++s) {
            const std::string tag = sets == 1 ? std::string("k") : sets == 2 ? (s == 0 ? "k_adj" : "k_vertex") : names[s];
            Tensor k = glorot_uniform(rng, {n_in, n_out}, n_in, n_out);
            if (variant == PoolVariant::AsymSymInit && s == 1) k = params.value(maps_[0]);
            maps_.push_back(params.add(prefix + tag, std::move(k)));
        }
    }

    const std::vector<ParamId>& maps() const { return maps_; }

    LayerIO forward(const LayerIO& in, const ParamStore& params) override
    {
        in.check();
        for (std::size_t b = 0; b < in.batch(); ++b) {
            if (in.sizes[b] != n_in_ || in.max_vertices() != n_in_) {
                throw FixedSizeError("GLP pooling needs exactly " + std::to_string(n_in_) + " vertices but graph " +
                                     std::to_string(b) + " of the batch has " + std::to_string(in.sizes[b]));
            }
        }
        input_ = in;
        return kernel::bilinear_pool(in, pool_maps(params), n_out_);
    }

    GraphGrad backward(const GraphGrad& up, ParamStore& params) override
    {
        GraphGrad din = GraphGrad::zeros_like(input_);
        std::vector<Tensor> dk;
        for (ParamId id : maps_) dk.emplace_back(params.value(id).shape());
        kernel::bilinear_pool_backward(input_, pool_maps(params), n_out_, up, din, dk[roles_[0]], dk[roles_[1]],
                                       dk[roles_[2]]);
        for (std::size_t s = 0; s < maps_.size(); ++s) params.grad(maps_[s]) += dk[s];
        return din;
    }

    std::string describe() const override
    {
        return "P" + std::to_string(n_out_) + ":GLP:" + to_string(variant_);
    }

private:
    kernel::PoolMaps pool_maps(const ParamStore& params) const
    {
        return {params.value(maps_[roles_[0]]), params.value(maps_[roles_[1]]), params.value(maps_[roles_[2]]), false};
    }

    std::size_t n_in_, n_out_;
    PoolVariant variant_;
    std::array<std::size_t, 3> roles_;
    std::vector<ParamId> maps_;
    LayerIO input_;
};

/// Flattens a fixed-size graph into one feature vector per graph.
///
/// With edges, each vertex row i becomes [V(i, :), A(i, 0, 0..L-1), ...,
/// A(i, N-1, 0..L-1)] (channel index fastest) and the rows are concatenated,
/// giving N * (F + N * L) values. Without edges only V is flattened.
class Flatten {
public:
    Flatten(std::size_t n, bool with_edges) : n_(n), with_edges_(with_edges) {}

    static std::size_t width(std::size_t n, std::size_t f, std::size_t l, bool with_edges)
    {
        return with_edges ? n * (f + n * l) : n * f;
    }

    Tensor forward(const LayerIO& in)
    {
        in.check();
        for (std::size_t b = 0; b < in.batch(); ++b) {
            if (in.sizes[b] != n_ || in.max_vertices() != n_) {
                throw FixedSizeError("flatten needs exactly " + std::to_string(n_) + " vertices but graph " +
                                     std::to_string(b) + " of the batch has " + std::to_string(in.sizes[b]));
            }
        }
        input_shape_v_ = in.vertices.shape();
        input_shape_a_ = in.adjacency.shape();
        const std::size_t nb = in.batch(), f = in.features(), l = in.channels();
        const std::size_t row = with_edges_ ? f + n_ * l : f;
        Tensor out({nb, n_ * row});
        for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t i = 0; i < n_; ++i) {
                for (std::size_t c = 0; c < f; ++c) out(b, i * row + c) = in.vertices(b, i, c);
                if (!with_edges_) continue;
                for (std::size_t j = 0; j < n_; ++j)
                    for (std::size_t c = 0; c < l; ++c) out(b, i * row + f + j * l + c) = in.adjacency(b, i, j, c);
            }
        return out;
    }

    GraphGrad backward(const Tensor& up) const
    {
        GraphGrad din{Tensor(input_shape_v_), Tensor(input_shape_a_)};
        const std::size_t nb = input_shape_v_[0], f = input_shape_v_[2], l = input_shape_a_[3];
        const std::size_t row = with_edges_ ? f + n_ * l : f;
        for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t i = 0; i < n_; ++i) {
                for (std::size_t c = 0; c < f; ++c) din.vertices(b, i, c) = up(b, i * row + c);
                if (!with_edges_) continue;
                for (std::size_t j = 0; j < n_; ++j)
                    for (std::size_t c = 0; c < l; ++c) din.adjacency(b, i, j, c) = up(b, i * row + f + j * l + c);
            }
        return din;
    }

    bool with_edges() const { return with_edges_; }

private:
    std::size_t n_;
    bool with_edges_;
    Shape input_shape_v_, input_shape_a_;
};

/// Affine map x W^T + b with optional ReLU. W is [D' x D].
class Dense {
public:
    Dense(ParamStore& params, const std::string& prefix, std::size_t in, std::size_t out, bool relu, Rng& rng)
        : in_(in), out_(out), relu_(relu)
    {
        weight_ = params.add(prefix + "weight", glorot_uniform(rng, {out, in}, in, out));
        bias_ = params.add(prefix + "bias", Tensor({out}));
    }

    ParamId weight() const { return weight_; }
    ParamId bias() const { return bias_; }
    std::size_t in_width() const { return in_; }
    std::size_t out_width() const { return out_; }

    Tensor forward(const Tensor& x, const ParamStore& params)
    {
        if (x.rank() != 2 || x.dim(1) != in_) {
            throw DimensionError("dense layer expects [B x " + std::to_string(in_) + "], got " + shape_string(x.shape()));
        }
        input_ = x;
        const Tensor& w = params.value(weight_);
        const Tensor& bias = params.value(bias_);
        pre_ = Tensor({x.dim(0), out_});
        for (std::size_t b = 0; b < x.dim(0); ++b)
            for (std::size_t o = 0; o < out_; ++o) {
                double s = bias(o);
                for (std::size_t k = 0; k < in_; ++k) s += w(o, k) * x(b, k);
                pre_(b, o) = s;
            }
        return relu_ ? act_relu(pre_) : pre_;
    }

    Tensor backward(const Tensor& up, ParamStore& params) const
    {
        const Tensor& w = params.value(weight_);
        Tensor& dw = params.grad(weight_);
        Tensor& db = params.grad(bias_);
        Tensor dx(input_.shape());
        for (std::size_t b = 0; b < input_.dim(0); ++b)
            for (std::size_t o = 0; o < out_; ++o) {
                const double g = relu_ ? up(b, o) * relu_grad(pre_(b, o)) : up(b, o);
                if (g == 0.0) continue;
                db(o) += g;
                for (std::size_t k = 0; k < in_; ++k) {
                    dw(o, k) += g * input_(b, k);
                    dx(b, k) += g * w(o, k);
                }
            }
        return dx;
    }

private:
    std::size_t in_, out_;
    bool relu_;
    ParamId weight_{};
    ParamId bias_{};
    Tensor input_;
    Tensor pre_;
};

struct LossResult {
    double loss = 0.0;
    Tensor grad; // d loss / d logits
};

/// Mean over the batch of -log softmax(logits)[label].
inline LossResult softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels)
{
    if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
        throw DimensionError("cross entropy: logits " + shape_string(logits.shape()) + " vs " +
                             std::to_string(labels.size()) + " labels");
    }
    const std::size_t nb = logits.dim(0), nc = logits.dim(1);
    LossResult r{0.0, Tensor(logits.shape())};
    for (std::size_t b = 0; b < nb; ++b) {
        if (labels[b] >= nc) throw DimensionError("label " + std::to_string(labels[b]) + " outside 0.." + std::to_string(nc - 1));
        double mx = logits(b, 0);
        for (std::size_t c = 1; c < nc; ++c) mx = std::max(mx, logits(b, c));
        double total = 0.0;
        for (std::size_t c = 0; c < nc; ++c) total += std::exp(logits(b, c) - mx);
        const double log_z = mx + std::log(total);
        r.loss += log_z - logits(b, labels[b]);
        for (std::size_t c = 0; c < nc; ++c) {
            const double p = std::exp(logits(b, c) - log_z);
            r.grad(b, c) = (p - (c == labels[b] ? 1.0 : 0.0)) / static_cast<double>(nb);
        }
    }
    r.loss /= static_cast<double>(nb);
    return r;
}

} // namespace egnn
