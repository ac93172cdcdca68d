#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "egnn/error.hpp"
#include "egnn/graph.hpp"

namespace egnn {

/// Malformed token in a dataset file; carries the 1-based line number.
class ParseError : public DatasetFormatError {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : DatasetFormatError(file + ":" + std::to_string(line) + ": parse error: " + what), line_(line)
    {
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct TuLoadOptions {
    /// Divide each adjacency channel by its maximum absolute value.
    bool normalize_edges = false;
};

namespace tu {

inline std::string_view trim(std::string_view s)
{
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

/// Non-empty lines of a file, each split on commas. Line numbers are kept.
struct TextTable {
    std::string path;
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;

    std::size_t size() const { return rows.size(); }
};

inline TextTable read_table(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DatasetFormatError("cannot open dataset file " + path.string());
    TextTable table;
    table.path = path.filename().string();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = t.find(',', start);
            fields.emplace_back(trim(t.substr(start, comma == std::string_view::npos ? t.npos : comma - start)));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        table.rows.emplace_back(lineno, std::move(fields));
    }
    return table;
}

inline long long parse_int(const TextTable& t, std::size_t row, std::size_t col)
{
    const auto& [lineno, fields] = t.rows[row];
    if (col >= fields.size()) throw ParseError(t.path, lineno, "expected at least " + std::to_string(col + 1) + " fields");
    const std::string& tok = fields[col];
    long long v = 0;
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc{} || ptr != end) throw ParseError(t.path, lineno, "non-integer token '" + tok + "'");
    return v;
}

inline double parse_double(const TextTable& t, std::size_t row, std::size_t col)
{
    const auto& [lineno, fields] = t.rows[row];
    if (col >= fields.size()) throw ParseError(t.path, lineno, "expected at least " + std::to_string(col + 1) + " fields");
    const std::string& tok = fields[col];
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError(t.path, lineno, "non-numeric token '" + tok + "'");
    }
}

/// Integer categorical columns one-hot encoded, categories sorted per column.
struct OneHot {
    std::vector<std::map<long long, std::size_t>> categories; // per column
    std::size_t width = 0;

    static OneHot fit(const TextTable& t)
    {
        OneHot oh;
        const std::size_t cols = t.rows.empty() ? 0 : t.rows.front().second.size();
        std::vector<std::set<long long>> seen(cols);
        for (std::size_t r = 0; r < t.size(); ++r) {
            if (t.rows[r].second.size() != cols) {
                throw ParseError(t.path, t.rows[r].first, "inconsistent column count");
            }
            for (std::size_t c = 0; c < cols; ++c) seen[c].insert(parse_int(t, r, c));
        }
        for (const auto& s : seen) {
            std::map<long long, std::size_t> m;
            for (long long v : s) m.emplace(v, oh.width++);
            oh.categories.push_back(std::move(m));
        }
        return oh;
    }

    /// Column indices set to one for a row.
    std::vector<std::size_t> hot(const TextTable& t, std::size_t row) const
    {
        std::vector<std::size_t> out;
        for (std::size_t c = 0; c < categories.size(); ++c) out.push_back(categories[c].at(parse_int(t, row, c)));
        return out;
    }
};

inline std::size_t column_count(const TextTable& t)
{
    const std::size_t cols = t.rows.empty() ? 0 : t.rows.front().second.size();
    for (const auto& [lineno, fields] : t.rows) {
        if (fields.size() != cols) throw ParseError(t.path, lineno, "inconsistent column count");
    }
    return cols;
}

} // namespace tu

/// Finds the dataset name from the single `<name>_A.txt` file in a directory.
inline std::string infer_tu_name(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir)) throw DatasetFormatError("dataset directory not found: " + dir.string());
    std::vector<std::string> names;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string f = entry.path().filename().string();
        if (f.size() > 6 && f.ends_with("_A.txt")) names.push_back(f.substr(0, f.size() - 6));
    }
    if (names.size() != 1) {
        throw DatasetFormatError("expected exactly one *_A.txt file in " + dir.string() + ", found " +
                                 std::to_string(names.size()));
    }
    return names.front();
}

/// Reads a TU-format graph classification dataset.
///
/// Node ids are 1-based in the files and become per-graph 0-based indices.
/// Categorical node/edge labels are one-hot encoded (vertex columns,
/// adjacency channels); real-valued attributes are appended after them.
/// Without any edge file the adjacency is a single binary channel. Graph
/// labels are remapped to 0..C-1 in ascending order of their raw value.
inline Dataset load_tu_dataset(const std::filesystem::path& dir, const std::string& name,
                               const TuLoadOptions& options = {})
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DatasetFormatError("dataset directory not found: " + dir.string());
    auto file = [&](const char* suffix) { return dir / (name + suffix); };
    auto required = [&](const char* suffix) {
        const auto p = file(suffix);
        if (!fs::exists(p)) throw DatasetFormatError("missing mandatory dataset file " + p.string());
        return tu::read_table(p);
    };
    auto optional = [&](const char* suffix) -> std::optional<tu::TextTable> {
        const auto p = file(suffix);
        if (!fs::exists(p)) return std::nullopt;
        return tu::read_table(p);
    };

    const auto edges = required("_A.txt");
    const auto indicator = required("_graph_indicator.txt");
    const auto graph_labels = required("_graph_labels.txt");
    const auto node_labels = optional("_node_labels.txt");
    const auto node_attrs = optional("_node_attributes.txt");
    const auto edge_labels = optional("_edge_labels.txt");
    const auto edge_attrs = optional("_edge_attributes.txt");

    const std::size_t num_graphs = graph_labels.size();
    const std::size_t num_nodes = indicator.size();
    if (num_graphs == 0) throw DatasetFormatError(graph_labels.path + " is empty");

    // node -> (graph, local index)
    std::vector<std::size_t> node_graph(num_nodes), node_local(num_nodes);
    std::vector<std::size_t> graph_size(num_graphs, 0);
    for (std::size_t v = 0; v < num_nodes; ++v) {
        const long long gid = tu::parse_int(indicator, v, 0);
        if (gid < 1 || static_cast<std::size_t>(gid) > num_graphs) {
            throw ConsistencyError(indicator.path + ":" + std::to_string(indicator.rows[v].first) + ": graph id " +
                                   std::to_string(gid) + " outside 1.." + std::to_string(num_graphs));
        }
        node_graph[v] = static_cast<std::size_t>(gid - 1);
        node_local[v] = graph_size[node_graph[v]]++;
    }
    for (std::size_t g = 0; g < num_graphs; ++g) {
        if (graph_size[g] == 0) throw ConsistencyError("graph " + std::to_string(g + 1) + " has no vertices");
    }

    auto check_rows = [](const tu::TextTable& t, std::size_t expected, const char* what) {
        if (t.size() != expected) {
            throw ConsistencyError(t.path + " has " + std::to_string(t.size()) + " lines but there are " +
                                   std::to_string(expected) + " " + what);
        }
    };

    // vertex feature layout: one-hot label columns, then attribute columns
    tu::OneHot vertex_onehot;
    std::size_t vertex_attr_cols = 0;
    if (node_labels) {
        check_rows(*node_labels, num_nodes, "nodes");
        vertex_onehot = tu::OneHot::fit(*node_labels);
    }
    if (node_attrs) {
        check_rows(*node_attrs, num_nodes, "nodes");
        vertex_attr_cols = tu::column_count(*node_attrs);
    }
    std::size_t num_features = vertex_onehot.width + vertex_attr_cols;
    const bool constant_vertex_feature = num_features == 0;
    if (constant_vertex_feature) num_features = 1;

    // channel layout: one-hot edge labels, then attribute channels; binary if neither
    tu::OneHot edge_onehot;
    std::size_t edge_attr_channels = 0;
    if (edge_labels) {
        check_rows(*edge_labels, edges.size(), "edges");
        edge_onehot = tu::OneHot::fit(*edge_labels);
    }
    if (edge_attrs) {
        check_rows(*edge_attrs, edges.size(), "edges");
        edge_attr_channels = tu::column_count(*edge_attrs);
    }
    std::size_t num_channels = edge_onehot.width + edge_attr_channels;
    const bool binary_adjacency = num_channels == 0;
    if (binary_adjacency) num_channels = 1;

    std::set<long long> raw_labels;
    for (std::size_t g = 0; g < num_graphs; ++g) raw_labels.insert(tu::parse_int(graph_labels, g, 0));
    std::map<long long, std::size_t> label_index;
    for (long long v : raw_labels) label_index.emplace(v, label_index.size());

    Dataset ds;
    ds.name = name;
    ds.num_classes = label_index.size();
    ds.num_features = num_features;
    ds.num_channels = num_channels;
    ds.vertex_labels_one_hot = vertex_onehot.width > 0;
    ds.edge_labels_one_hot = edge_onehot.width > 0;
    ds.graphs.reserve(num_graphs);
    for (std::size_t g = 0; g < num_graphs; ++g) {
        const std::size_t n = graph_size[g];
        ds.graphs.push_back(Graph{Tensor({n, num_features}), Tensor({n, n, num_channels}),
                                  label_index.at(tu::parse_int(graph_labels, g, 0))});
    }

    for (std::size_t v = 0; v < num_nodes; ++v) {
        Tensor& vf = ds.graphs[node_graph[v]].vertex_features;
        const std::size_t i = node_local[v];
        if (constant_vertex_feature) vf(i, 0) = 1.0;
        if (node_labels)
            for (std::size_t c : vertex_onehot.hot(*node_labels, v)) vf(i, c) = 1.0;
        for (std::size_t c = 0; c < vertex_attr_cols; ++c)
            vf(i, vertex_onehot.width + c) = tu::parse_double(*node_attrs, v, c);
    }

    for (std::size_t e = 0; e < edges.size(); ++e) {
        if (edges.rows[e].second.size() != 2) throw ParseError(edges.path, edges.rows[e].first, "expected two node ids");
        const long long src = tu::parse_int(edges, e, 0);
        const long long dst = tu::parse_int(edges, e, 1);
        auto where = [&] { return edges.path + ":" + std::to_string(edges.rows[e].first); };
        if (src < 1 || dst < 1 || static_cast<std::size_t>(src) > num_nodes || static_cast<std::size_t>(dst) > num_nodes) {
            throw ConsistencyError(where() + ": node id out of range 1.." + std::to_string(num_nodes));
        }
        const std::size_t u = static_cast<std::size_t>(src - 1), w = static_cast<std::size_t>(dst - 1);
        if (node_graph[u] != node_graph[w]) {
            throw ConsistencyError(where() + ": edge joins nodes of graphs " + std::to_string(node_graph[u] + 1) +
                                   " and " + std::to_string(node_graph[w] + 1));
        }
        Tensor& adj = ds.graphs[node_graph[u]].adjacency;
        const std::size_t i = node_local[u], j = node_local[w];
        if (binary_adjacency) adj(i, j, 0) = 1.0;
        if (edge_labels)
            for (std::size_t c : edge_onehot.hot(*edge_labels, e)) adj(i, j, c) = 1.0;
        for (std::size_t c = 0; c < edge_attr_channels; ++c)
            adj(i, j, edge_onehot.width + c) = tu::parse_double(*edge_attrs, e, c);
    }

    if (options.normalize_edges) normalize_edge_channels(ds);
    ds.validate();
    return ds;
}

inline Dataset load_tu_dataset(const std::filesystem::path& dir, const TuLoadOptions& options = {})
{
    return load_tu_dataset(dir, infer_tu_name(dir), options);
}

/// Writes a dataset back out in TU text format. Vertex features go to
/// node_attributes and adjacency channels to edge_attributes, so a reload
/// reproduces the tensors whenever every stored edge has a nonzero channel.
inline void write_tu_dataset(const Dataset& ds, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    auto open = [&](const char* suffix) {
        std::ofstream out(dir / (ds.name + suffix));
        if (!out) throw DatasetFormatError("cannot write " + (dir / (ds.name + suffix)).string());
        out.precision(17);
        return out;
    };
    auto a = open("_A.txt");
    auto ind = open("_graph_indicator.txt");
    auto gl = open("_graph_labels.txt");
    auto na = open("_node_attributes.txt");
    auto ea = open("_edge_attributes.txt");
    std::size_t base = 0;
    for (std::size_t g = 0; g < ds.size(); ++g) {
        const Graph& gr = ds.graphs[g];
        const std::size_t n = gr.num_vertices();
        gl << gr.label << '\n';
        for (std::size_t i = 0; i < n; ++i) {
            ind << g + 1 << '\n';
            for (std::size_t c = 0; c < gr.num_features(); ++c) na << (c ? ", " : "") << gr.vertex_features(i, c);
            na << '\n';
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                bool present = false;
                for (std::size_t c = 0; c < gr.num_channels(); ++c) present |= gr.adjacency(i, j, c) != 0.0;
                if (!present) continue;
                a << base + i + 1 << ", " << base + j + 1 << '\n';
                for (std::size_t c = 0; c < gr.num_channels(); ++c) ea << (c ? ", " : "") << gr.adjacency(i, j, c);
                ea << '\n';
            }
        }
        base += n;
    }
}

// ---------------------------------------------------------------------------
// Binary cache: "EGNN", u32 version, then metadata and per-graph records
// (n, F, L, label, vertex payload, adjacency payload). All integers and
// doubles little-endian.

inline constexpr std::uint32_t kCacheVersion = 1;

namespace cache_detail {

template <typename T>
void put(std::ostream& out, T v)
{
    static_assert(std::endian::native == std::endian::little, "cache writer assumes a little-endian host");
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path)
{
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DatasetFormatError("truncated cache file " + path);
    return v;
}

} // namespace cache_detail

inline void save_cache(const Dataset& ds, const std::filesystem::path& path)
{
    using cache_detail::put;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetFormatError("cannot write cache " + path.string());
    out.write("EGNN", 4);
    put<std::uint32_t>(out, kCacheVersion);
    put<std::uint64_t>(out, ds.name.size());
    out.write(ds.name.data(), static_cast<std::streamsize>(ds.name.size()));
    put<std::uint64_t>(out, ds.num_classes);
    put<std::uint64_t>(out, ds.num_features);
    put<std::uint64_t>(out, ds.num_channels);
    put<std::uint8_t>(out, ds.vertex_labels_one_hot);
    put<std::uint8_t>(out, ds.edge_labels_one_hot);
    put<std::uint64_t>(out, ds.size());
    for (const Graph& g : ds.graphs) {
        put<std::uint64_t>(out, g.num_vertices());
        put<std::uint64_t>(out, g.num_features());
        put<std::uint64_t>(out, g.num_channels());
        put<std::uint64_t>(out, g.label);
        for (double v : g.vertex_features.data()) put<double>(out, v);
        for (double v : g.adjacency.data()) put<double>(out, v);
    }
    if (!out) throw DatasetFormatError("failed writing cache " + path.string());
}

inline Dataset load_cache(const std::filesystem::path& path)
{
    using cache_detail::get;
    std::ifstream in(path, std::ios::binary);
    const std::string p = path.string();
    if (!in) throw DatasetFormatError("cannot open cache " + p);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "EGNN", 4) != 0) throw DatasetFormatError(p + " is not an EGNN cache file");
    const auto version = get<std::uint32_t>(in, p);
    if (version != kCacheVersion) {
        throw DatasetFormatError(p + ": unsupported cache version " + std::to_string(version));
    }
    Dataset ds;
    ds.name.resize(get<std::uint64_t>(in, p));
    in.read(ds.name.data(), static_cast<std::streamsize>(ds.name.size()));
    ds.num_classes = get<std::uint64_t>(in, p);
    ds.num_features = get<std::uint64_t>(in, p);
    ds.num_channels = get<std::uint64_t>(in, p);
    ds.vertex_labels_one_hot = get<std::uint8_t>(in, p) != 0;
    ds.edge_labels_one_hot = get<std::uint8_t>(in, p) != 0;
    const auto count = get<std::uint64_t>(in, p);
    for (std::uint64_t g = 0; g < count; ++g) {
        const auto n = get<std::uint64_t>(in, p);
        const auto f = get<std::uint64_t>(in, p);
        const auto l = get<std::uint64_t>(in, p);
        const auto label = get<std::uint64_t>(in, p);
        if (n == 0 || f == 0 || l == 0 || n > (1u << 16)) throw DatasetFormatError(p + ": corrupt graph record");
        Graph gr{Tensor({n, f}), Tensor({n, n, l}), label};
        for (double& v : gr.vertex_features.data()) v = get<double>(in, p);
        for (double& v : gr.adjacency.data()) v = get<double>(in, p);
        ds.graphs.push_back(std::move(gr));
    }
    ds.validate();
    return ds;
}

} // namespace egnn
