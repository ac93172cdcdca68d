#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "egnn/graph.hpp"
#include "egnn/layers.hpp"
#include "egnn/rng.hpp"

namespace egnn {

/// Random graph with U(-1, 1) vertex features and an adjacency whose entries
/// are nonzero with probability `density` (values U(lo, hi)).
inline Graph random_graph(Rng& rng, std::size_t n, std::size_t f, std::size_t l, double density = 0.5,
                          double lo = -1.0, double hi = 1.0, std::size_t label = 0)
{
    Graph g{Tensor({n, f}), Tensor({n, n, l}), label};
    for (double& v : g.vertex_features.data()) v = rng.uniform(-1.0, 1.0);
    for (double& v : g.adjacency.data())
        if (rng.uniform() < density) v = rng.uniform(lo, hi);
    return g;
}

/// Makes every adjacency channel symmetric by mirroring the upper triangle.
inline void symmetrize(Graph& g)
{
    const std::size_t n = g.num_vertices();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (std::size_t c = 0; c < g.num_channels(); ++c) g.adjacency(j, i, c) = g.adjacency(i, j, c);
}

/// Relabels vertices: vertex i of g becomes vertex perm[i] of the result.
inline Graph permute_graph(const Graph& g, const std::vector<std::size_t>& perm)
{
    const std::size_t n = g.num_vertices();
    Graph out{Tensor(g.vertex_features.shape()), Tensor(g.adjacency.shape()), g.label};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < g.num_features(); ++c) out.vertex_features(perm[i], c) = g.vertex_features(i, c);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < g.num_channels(); ++c)
                out.adjacency(perm[i], perm[j], c) = g.adjacency(i, j, c);
    }
    return out;
}

inline LayerIO single_graph_io(const Graph& g)
{
    const Graph* ptr = &g;
    return LayerIO::from_batch(pad_graphs(std::span<const Graph* const>(&ptr, 1)));
}

inline LayerIO graphs_io(const std::vector<Graph>& graphs, std::size_t min_vertices = 1)
{
    std::vector<const Graph*> ptrs;
    for (const auto& g : graphs) ptrs.push_back(&g);
    return LayerIO::from_batch(pad_graphs(ptrs, min_vertices));
}

/// Random batch of graphs with the given vertex counts, zero padded.
inline LayerIO random_layer_io(Rng& rng, const std::vector<std::size_t>& sizes, std::size_t f, std::size_t l,
                               double density = 0.5)
{
    std::vector<Graph> graphs;
    for (std::size_t n : sizes) graphs.push_back(random_graph(rng, n, f, l, density));
    return graphs_io(graphs);
}

/// Overwrites every parameter with U(-scale, scale).
inline void randomize_params(ParamStore& params, Rng& rng, double scale = 1.0)
{
    for (auto& p : params)
        for (double& v : p.value.data()) v = rng.uniform(-scale, scale);
}

} // namespace egnn
