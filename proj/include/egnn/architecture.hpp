#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "egnn/error.hpp"
#include "egnn/layers.hpp"

namespace egnn {

enum class LayerKind { VertexFilter, EdgeConv, Pool, EFC, FC };

/// One token of the layer notation, e.g. 64F, 7EF, P32:GLP:Asym, EFC280, FC256.
struct LayerSpec {
    LayerKind kind = LayerKind::VertexFilter;
    std::size_t n = 1;
    PoolMethod method = PoolMethod::GEP;
    PoolVariant variant = PoolVariant::Original;
    std::size_t position = 0;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Architecture {
    std::vector<LayerSpec> layers;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Canonical token: pools drop ":GEP:Original" when both are the default.
inline std::string to_string(const LayerSpec& s)
{
    switch (s.kind) {
    case LayerKind::VertexFilter: return std::to_string(s.n) + "F";
    case LayerKind::EdgeConv: return std::to_string(s.n) + "EF";
    case LayerKind::EFC: return "EFC" + std::to_string(s.n);
    case LayerKind::FC: return "FC" + std::to_string(s.n);
    case LayerKind::Pool: {
        std::string t = "P" + std::to_string(s.n);
        if (s.method != PoolMethod::GEP || s.variant != PoolVariant::Original) {
            t += std::string(":") + egnn::to_string(s.method) + ":" + egnn::to_string(s.variant);
        }
        return t;
    }
    }
    return "?";
}

inline std::string to_string(const Architecture& arch)
{
    std::string out;
    for (const auto& s : arch.layers) {
        if (!out.empty()) out += '-';
        out += to_string(s);
    }
    return out;
}

/// Input dimensions an architecture is instantiated against.
struct InputShape {
    std::size_t features = 1;
    std::size_t channels = 1;
    std::size_t classes = 2;
    /// Set when every input graph has exactly this many vertices.
    std::optional<std::size_t> vertices;
};

/// Shapes after one layer. Unknown entries are input-dependent.
struct ShapeStep {
    std::string token;
    std::optional<std::size_t> vertices;
    std::optional<std::size_t> features;
    std::optional<std::size_t> channels;
    std::optional<std::size_t> width; // set once the graph has been flattened
};

namespace arch_detail {

inline bool iequals(std::string_view a, std::string_view b)
{
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

[[noreturn]] inline void fail(std::string_view token, std::size_t pos, const std::string& why)
{
    throw ArchitectureError("cannot parse token '" + std::string(token) + "' at position " + std::to_string(pos) +
                            ": " + why);
}

/// Leading decimal number; advances `s`.
inline std::optional<std::size_t> take_number(std::string_view& s)
{
    std::size_t k = 0;
    while (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) ++k;
    if (k == 0 || k > 9) return std::nullopt;
    const std::size_t v = std::stoul(std::string(s.substr(0, k)));
    s.remove_prefix(k);
    return v;
}

inline LayerSpec parse_token(std::string_view tok, std::size_t pos)
{
    LayerSpec spec;
    spec.position = pos;
    std::string_view s = tok;
    auto need_positive = [&](std::optional<std::size_t> n) {
        if (!n) fail(tok, pos, "expected a size");
        if (*n == 0) fail(tok, pos, "size must be at least 1");
        return *n;
    };
    if (s.starts_with("EFC")) {
        s.remove_prefix(3);
        spec.kind = LayerKind::EFC;
        spec.n = need_positive(take_number(s));
    } else if (s.starts_with("FC")) {
        s.remove_prefix(2);
        spec.kind = LayerKind::FC;
        spec.n = need_positive(take_number(s));
    } else if (s.starts_with("Pool") || s.starts_with("P")) {
        s.remove_prefix(s.starts_with("Pool") ? 4 : 1);
        spec.kind = LayerKind::Pool;
        spec.n = need_positive(take_number(s));
        if (!s.empty()) {
            if (s.front() != ':') fail(tok, pos, "unexpected trailing text");
            s.remove_prefix(1);
            const auto colon = s.find(':');
            const auto method = s.substr(0, colon);
            if (iequals(method, "GEP")) spec.method = PoolMethod::GEP;
            else if (iequals(method, "GLP")) spec.method = PoolMethod::GLP;
            else fail(tok, pos, "unknown pooling method '" + std::string(method) + "'");
            if (colon != std::string_view::npos) {
                const auto variant = s.substr(colon + 1);
                if (iequals(variant, "Original")) spec.variant = PoolVariant::Original;
                else if (iequals(variant, "Sym")) spec.variant = PoolVariant::Sym;
                else if (iequals(variant, "Asym")) spec.variant = PoolVariant::Asym;
                else if (iequals(variant, "AsymSymInit")) spec.variant = PoolVariant::AsymSymInit;
                else fail(tok, pos, "unknown pooling variant '" + std::string(variant) + "'");
            }
            s = {};
        }
    } else {
        spec.n = need_positive(take_number(s));
        if (s == "F") spec.kind = LayerKind::VertexFilter;
        else if (s == "EF") spec.kind = LayerKind::EdgeConv;
        else fail(tok, pos, "unknown layer type");
        s = {};
    }
    if (!s.empty()) fail(tok, pos, "unexpected trailing text");
    return spec;
}

/// Splits "k×" / "kx" / "k*" repetition prefixes off a token.
inline std::size_t take_repetition(std::string_view& tok, std::size_t pos)
{
    static constexpr std::string_view kTimes[] = {"\xC3\x97", "x", "X", "*"};
    std::string_view s = tok;
    const auto k = take_number(s);
    if (!k) return 1;
    for (auto sep : kTimes) {
        if (s.starts_with(sep)) {
            s.remove_prefix(sep.size());
            if (*k == 0) fail(tok, pos, "repetition count must be at least 1");
            tok = s;
            return *k;
        }
    }
    return 1;
}

} // namespace arch_detail

/// Symbolic shape flow. Throws ArchitectureError when a layer's structural
/// precondition cannot hold; unknown input dimensions are left open.
inline std::vector<ShapeStep> shape_flow(const Architecture& arch, const std::optional<InputShape>& input = std::nullopt)
{
    std::vector<ShapeStep> steps;
    std::optional<std::size_t> n, f, l, width;
    if (input) {
        n = input->vertices;
        f = input->features;
        l = input->channels;
    }
    bool flattened = false;
    for (const auto& s : arch.layers) {
        const std::string tok = to_string(s);
        const std::string where = "layer " + std::to_string(s.position) + " (" + tok + ")";
        const bool graph_layer = s.kind == LayerKind::VertexFilter || s.kind == LayerKind::EdgeConv || s.kind == LayerKind::Pool;
        if (graph_layer && flattened) throw ArchitectureError(where + " follows a fully connected layer");
        switch (s.kind) {
        case LayerKind::VertexFilter: f = s.n; break;
        case LayerKind::EdgeConv: l = s.n; break;
        case LayerKind::Pool:
            if (s.method == PoolMethod::GLP && !n) {
                throw ArchitectureError(where + ": GLP needs a fixed input size; put a GEP pooling layer before it");
            }
            n = s.n;
            break;
        case LayerKind::EFC: {
            if (flattened) throw ArchitectureError(where + " must come before any fully connected layer");
            if (!n) throw ArchitectureError(where + ": EFC needs a fixed vertex count; put a pooling layer before it");
            if (f && l) {
                const std::size_t expected = Flatten::width(*n, *f, *l, true);
                if (expected != s.n) {
                    throw ArchitectureError(where + ": EFC width mismatch, declared " + std::to_string(s.n) +
                                            " but N*F + N^2*L = " + std::to_string(expected));
                }
            }
            width = s.n;
            flattened = true;
            break;
        }
        case LayerKind::FC:
            if (!flattened) {
                if (!n) throw ArchitectureError(where + ": FC needs a fixed vertex count; put a pooling layer before it");
                flattened = true;
            }
            width = s.n;
            break;
        }
        steps.push_back({tok, n, f, l, width});
    }
    if (!flattened && !n) {
        throw ArchitectureError("architecture '" + to_string(arch) +
                                "' has no pooling layer, so graphs cannot be flattened for classification");
    }
    return steps;
}

/// Parses the dash-separated layer notation, expanding k× repetitions.
/// Bare "Pn" (or "Pooln") is GEP with the Original variant.
inline Architecture parse_architecture(std::string_view text)
{
    Architecture arch;
    std::size_t pos = 0;
    std::size_t start = 0;
    const auto trimmed = [](std::string_view t) {
        while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.remove_prefix(1);
        while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.remove_suffix(1);
        return t;
    };
    if (trimmed(text).empty()) throw ArchitectureError("empty architecture string");
    while (start <= text.size()) {
        const auto dash = text.find('-', start);
        std::string_view tok = trimmed(text.substr(start, dash == std::string_view::npos ? text.npos : dash - start));
        if (tok.empty()) arch_detail::fail(tok, pos, "empty token");
        const std::size_t reps = arch_detail::take_repetition(tok, pos);
        const LayerSpec spec = arch_detail::parse_token(tok, pos);
        for (std::size_t r = 0; r < reps; ++r) {
            arch.layers.push_back(spec);
            arch.layers.back().position = arch.layers.size() - 1;
        }
        ++pos;
        if (dash == std::string_view::npos) break;
        start = dash + 1;
    }
    shape_flow(arch);
    return arch;
}

} // namespace egnn
