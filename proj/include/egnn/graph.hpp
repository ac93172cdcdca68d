#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "egnn/error.hpp"
#include "egnn/rng.hpp"
#include "egnn/tensor.hpp"

namespace egnn {

/// One attributed graph: vertex features [N x F], adjacency [N x N x L], class label.
///
/// adjacency(i, j, l) == 0 means there is no edge i -> j in channel l. Input
/// adjacency is stored as given, never symmetrized.
struct Graph {
    Tensor vertex_features;
    Tensor adjacency;
    std::size_t label = 0;

    std::size_t num_vertices() const { return vertex_features.dim(0); }
    std::size_t num_features() const { return vertex_features.dim(1); }
    std::size_t num_channels() const { return adjacency.dim(2); }

    friend bool operator==(const Graph&, const Graph&) = default;
};

struct Dataset {
    std::string name;
    std::vector<Graph> graphs;
    std::size_t num_classes = 0;
    std::size_t num_features = 0;
    std::size_t num_channels = 0;
    bool vertex_labels_one_hot = false;
    bool edge_labels_one_hot = false;

    std::size_t size() const { return graphs.size(); }

    std::vector<std::size_t> class_counts() const
    {
        std::vector<std::size_t> counts(num_classes, 0);
        for (const auto& g : graphs) ++counts.at(g.label);
        return counts;
    }

    /// Copy holding only the given graphs, same metadata.
    Dataset subset(std::span<const std::size_t> indices) const
    {
        Dataset out = metadata_copy();
        out.graphs.reserve(indices.size());
        for (std::size_t i : indices) out.graphs.push_back(graphs.at(i));
        return out;
    }

    Dataset metadata_copy() const
    {
        Dataset out;
        out.name = name;
        out.num_classes = num_classes;
        out.num_features = num_features;
        out.num_channels = num_channels;
        out.vertex_labels_one_hot = vertex_labels_one_hot;
        out.edge_labels_one_hot = edge_labels_one_hot;
        return out;
    }

    /// Checks the shared-shape and label-range invariants.
    void validate() const
    {
        if (num_classes == 0) throw ConsistencyError("dataset '" + name + "' has no classes");
        for (std::size_t g = 0; g < graphs.size(); ++g) {
            const Graph& gr = graphs[g];
            const std::size_t n = gr.num_vertices();
            if (gr.vertex_features.rank() != 2 || gr.adjacency.rank() != 3 || gr.adjacency.dim(0) != n ||
                gr.adjacency.dim(1) != n) {
                throw ConsistencyError("graph " + std::to_string(g) + " has inconsistent tensor shapes");
            }
            if (gr.num_features() != num_features || gr.num_channels() != num_channels) {
                throw ConsistencyError("graph " + std::to_string(g) + " has F=" +
                                       std::to_string(gr.num_features()) + ", L=" +
                                       std::to_string(gr.num_channels()) + " but the dataset has F=" +
                                       std::to_string(num_features) + ", L=" + std::to_string(num_channels));
            }
            if (gr.label >= num_classes) {
                throw ConsistencyError("graph " + std::to_string(g) + " label out of range");
            }
        }
    }
};

/// Scales each adjacency channel by its largest absolute value over the
/// whole dataset. Zero stays zero, so edge absence is preserved.
inline void normalize_edge_channels(Dataset& ds)
{
    std::vector<double> scale(ds.num_channels, 0.0);
    for (const auto& g : ds.graphs) {
        const auto& a = g.adjacency;
        for (std::size_t k = 0; k < a.size(); ++k) {
            auto& s = scale[k % ds.num_channels];
            s = std::max(s, std::abs(a[k]));
        }
    }
    for (auto& g : ds.graphs) {
        auto& a = g.adjacency;
        for (std::size_t k = 0; k < a.size(); ++k) {
            const double s = scale[k % ds.num_channels];
            if (s > 0.0) a[k] /= s;
        }
    }
}

/// Fixed-size stack of zero-padded graphs.
///
/// Padded rows and columns are exactly zero and mask(b, i) is true iff
/// i < sizes[b].
struct Batch {
    Tensor vertex_features; // B x Nmax x F
    Tensor adjacency;       // B x Nmax x Nmax x L
    Mask mask;              // B * Nmax, row-major
    std::vector<std::size_t> labels;
    std::vector<std::size_t> sizes;
    std::vector<std::size_t> indices; // positions in the source dataset

    std::size_t batch_size() const { return labels.size(); }
    std::size_t max_vertices() const { return vertex_features.dim(1); }
    bool valid(std::size_t b, std::size_t i) const { return mask[b * max_vertices() + i] != 0; }
};

/// Pads the given graphs to their common maximum vertex count.
inline Batch pad_graphs(std::span<const Graph* const> graphs, std::size_t min_vertices = 1)
{
    if (graphs.empty()) throw DimensionError("pad_graphs: no graphs");
    const std::size_t f = graphs.front()->num_features();
    const std::size_t l = graphs.front()->num_channels();
    std::size_t nmax = min_vertices;
    for (const Graph* g : graphs) {
        if (g->num_features() != f || g->num_channels() != l) {
            throw DimensionError("pad_graphs: graphs disagree on F or L");
        }
        nmax = std::max(nmax, g->num_vertices());
    }
    const std::size_t bsz = graphs.size();
    Batch batch;
    batch.vertex_features = Tensor({bsz, nmax, f});
    batch.adjacency = Tensor({bsz, nmax, nmax, l});
    batch.mask.assign(bsz * nmax, 0);
    for (std::size_t b = 0; b < bsz; ++b) {
        const Graph& g = *graphs[b];
        const std::size_t n = g.num_vertices();
        for (std::size_t i = 0; i < n; ++i) {
            batch.mask[b * nmax + i] = 1;
            for (std::size_t c = 0; c < f; ++c) batch.vertex_features(b, i, c) = g.vertex_features(i, c);
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < l; ++c) batch.adjacency(b, i, j, c) = g.adjacency(i, j, c);
        }
        batch.labels.push_back(g.label);
        batch.sizes.push_back(n);
    }
    return batch;
}

/// Recovers graph b from a batch by slicing off its padding.
inline Graph unpad_graph(const Batch& batch, std::size_t b)
{
    const std::size_t n = batch.sizes.at(b);
    const std::size_t f = batch.vertex_features.dim(2);
    const std::size_t l = batch.adjacency.dim(3);
    Graph g{Tensor({n, f}), Tensor({n, n, l}), batch.labels.at(b)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < f; ++c) g.vertex_features(i, c) = batch.vertex_features(b, i, c);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < l; ++c) g.adjacency(i, j, c) = batch.adjacency(b, i, j, c);
    }
    return g;
}

/// Batches in the given order, each padded to its own maximum size.
inline std::vector<Batch> make_ordered_batches(const Dataset& ds, std::span<const std::size_t> order,
                                               std::size_t batch_size)
{
    if (batch_size == 0) throw UsageError("batch_size must be at least 1");
    std::vector<Batch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t stop = std::min(order.size(), start + batch_size);
        std::vector<const Graph*> members;
        for (std::size_t k = start; k < stop; ++k) members.push_back(&ds.graphs.at(order[k]));
        Batch b = pad_graphs(members);
        b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
        out.push_back(std::move(b));
    }
    return out;
}

inline std::vector<Batch> make_ordered_batches(const Dataset& ds, std::size_t batch_size)
{
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    return make_ordered_batches(ds, order, batch_size);
}

/// Shuffles deterministically under the seed, then batches.
inline std::vector<Batch> make_batches(const Dataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed)
{
    Rng rng(shuffle_seed);
    const auto order = rng.permutation(ds.size());
    return make_ordered_batches(ds, order, batch_size);
}

struct FoldSplit {
    Dataset train;
    Dataset test;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    bool stratified = true; // false when some class had fewer than k members
};

namespace detail {

/// Per-class shuffled index lists, classes in ascending order.
inline std::vector<std::vector<std::size_t>> shuffled_by_class(const Dataset& ds, Rng& rng)
{
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class.at(ds.graphs[i].label).push_back(i);
    for (auto& members : by_class) rng.shuffle(members);
    return by_class;
}

/// Fold id of every graph; with stratification the class-sorted order is dealt round-robin.
inline std::vector<std::size_t> fold_assignment(const Dataset& ds, std::size_t k, std::uint64_t seed,
                                                bool& stratified)
{
    Rng rng(seed);
    const auto counts = ds.class_counts();
    stratified = std::all_of(counts.begin(), counts.end(), [k](std::size_t c) { return c == 0 || c >= k; });
    std::vector<std::size_t> dealt;
    if (stratified) {
        for (const auto& members : shuffled_by_class(ds, rng)) dealt.insert(dealt.end(), members.begin(), members.end());
    } else {
        dealt = rng.permutation(ds.size());
    }
    std::vector<std::size_t> fold(ds.size());
    for (std::size_t p = 0; p < dealt.size(); ++p) fold[dealt[p]] = p % k;
    return fold;
}

} // namespace detail

/// Stratified k-fold split; test folds over fold = 0..k-1 partition the dataset.
inline FoldSplit kfold_split(const Dataset& ds, std::size_t k, std::size_t fold, std::uint64_t seed)
{
    if (k < 2 || k > ds.size()) {
        throw UsageError("kfold_split: need 2 <= k <= " + std::to_string(ds.size()) + ", got k=" + std::to_string(k));
    }
    if (fold >= k) throw UsageError("kfold_split: fold " + std::to_string(fold) + " out of range for k=" + std::to_string(k));
    FoldSplit split;
    const auto assignment = detail::fold_assignment(ds, k, seed, split.stratified);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        (assignment[i] == fold ? split.test_indices : split.train_indices).push_back(i);
    }
    split.train = ds.subset(split.train_indices);
    split.test = ds.subset(split.test_indices);
    return split;
}

/// Class-proportional subsample of at most `limit` graphs, original order kept.
inline Dataset stratified_subsample(const Dataset& ds, std::size_t limit, std::uint64_t seed)
{
    if (limit >= ds.size()) return ds;
    Rng rng(seed);
    const auto by_class = detail::shuffled_by_class(ds, rng);
    const std::size_t total = ds.size();
    std::vector<std::size_t> quota(by_class.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const double exact = static_cast<double>(limit) * static_cast<double>(by_class[c].size()) /
                             static_cast<double>(total);
        quota[c] = static_cast<std::size_t>(exact);
        assigned += quota[c];
        remainders.emplace_back(exact - static_cast<double>(quota[c]), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < limit && r < remainders.size(); ++r) {
        const std::size_t c = remainders[r].second;
        if (quota[c] < by_class[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }
    std::vector<std::size_t> picked;
    for (std::size_t c = 0; c < by_class.size(); ++c)
        picked.insert(picked.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
    std::sort(picked.begin(), picked.end());
    return ds.subset(picked);
}

} // namespace egnn
