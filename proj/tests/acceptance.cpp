// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <iostream>
#include <sstream>
#include <string>

#include "egnn/cli.hpp"
#include "support.hpp"

using namespace egnn;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check)
{
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s  %-22s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Outcome gradient_suite()
{
    const auto start = std::chrono::steady_clock::now();
    const auto results = run_gradcheck({0, 20});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool ok = secs < 60.0;
    std::ostringstream os;
    for (const auto& r : results) {
        ok = ok && r.passed() && r.configs == 20;
        os << r.layer << '=' << fmt("%.1e", r.max_rel_error) << ' ';
    }
    return {ok, os.str()};
}

Outcome equivariance()
{
    Rng rng(100);
    double worst_vf = 0.0, worst_ec = 0.0, worst_gep = 0.0;
    for (int pair = 0; pair < 100; ++pair) {
        const std::size_t n = 2 + rng.below(9), f = 1 + rng.below(3), l = 1 + rng.below(3), out = 1 + rng.below(3);
        const Graph g = random_graph(rng, n, f, l);
        const auto perm = rng.permutation(n);
        const Graph pg = permute_graph(g, perm);

        ParamStore params;
        VertexFilter vf(params, "vf.", f, l, out, rng);
        EdgeConv ec(params, "ec.", f, l, out, rng, EdgeConvOptions{true, false});
        GepPool gep_o(params, "go.", f, l, out, PoolVariant::Original, rng);
        GepPool gep_s(params, "gs.", f, l, out, PoolVariant::Sym, rng);
        GepPool gep_a(params, "ga.", f, l, out, PoolVariant::Asym, rng);
        randomize_params(params, rng);

        const LayerIO a = vf.forward(single_graph_io(g), params), pa = vf.forward(single_graph_io(pg), params);
        const LayerIO e = ec.forward(single_graph_io(g), params), pe = ec.forward(single_graph_io(pg), params);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < out; ++k)
                worst_vf = std::max(worst_vf, std::abs(pa.vertices(0, perm[i], k) - a.vertices(0, i, k)));
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k < out; ++k)
                    worst_ec =
                        std::max(worst_ec, std::abs(pe.adjacency(0, perm[i], perm[j], k) - e.adjacency(0, i, j, k)));
        }
        for (GepPool* pool : {&gep_o, &gep_s, &gep_a}) {
            const LayerIO x = pool->forward(single_graph_io(g), params), px = pool->forward(single_graph_io(pg), params);
            worst_gep = std::max({worst_gep, max_abs_diff(x.vertices, px.vertices), max_abs_diff(x.adjacency, px.adjacency)});
        }
    }
    const bool ok = worst_vf <= 1e-10 && worst_ec <= 1e-10 && worst_gep <= 1e-10;
    return {ok, "100 pairs; max dev vertex_filter " + fmt("%.1e", worst_vf) + ", edge_conv " + fmt("%.1e", worst_ec) +
                    ", gep(orig,sym,asym) " + fmt("%.1e", worst_gep)};
}

double asymmetry(const LayerIO& io)
{
    double m = 0.0;
    const std::size_t n = io.max_vertices();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < io.channels(); ++c)
                m = std::max(m, std::abs(io.adjacency(0, i, j, c) - io.adjacency(0, j, i, c)));
    return m;
}

Outcome symmetry()
{
    Rng rng(200);
    double worst_sym = 0.0, best_asym = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(7), f = 1 + rng.below(3), l = 1 + rng.below(3), out = 2 + rng.below(3);
        Graph g = random_graph(rng, n, f, l);
        symmetrize(g);
        ParamStore params;
        GepPool gep_s(params, "gs.", f, l, out, PoolVariant::Sym, rng);
        GlpPool glp_s(params, "ls.", n, out, PoolVariant::Sym, rng);
        GepPool gep_a(params, "ga.", f, l, out, PoolVariant::Asym, rng);
        GlpPool glp_a(params, "la.", n, out, PoolVariant::Asym, rng);
        randomize_params(params, rng);
        const LayerIO io = single_graph_io(g);
        worst_sym = std::max({worst_sym, asymmetry(gep_s.forward(io, params)), asymmetry(glp_s.forward(io, params))});
        best_asym = std::max({best_asym, asymmetry(gep_a.forward(io, params)), asymmetry(glp_a.forward(io, params))});
    }
    return {worst_sym <= 1e-12 && best_asym > 1e-3,
            "Sym max|A-A^T| " + fmt("%.1e", worst_sym) + ", Asym reaches " + fmt("%.3f", best_asym)};
}

/// Weight scales cycle from mild to saturating so the upper bound is exercised.
double trial_scale(std::size_t count)
{
    static constexpr double scales[] = {0.5, 2.0, 50.0};
    return scales[(count / 1000) % 3];
}

Outcome activation()
{
    Rng rng(300);
    std::size_t count = 0, outside = 0;
    double lo = 1.0, hi = 0.0;
    while (count < 1000000) {
        const std::size_t n = 10, f = 1 + rng.below(3), l = 1 + rng.below(3), lo_ch = 10;
        ParamStore params;
        EdgeConv ec(params, "ec.", f, l, lo_ch, rng, EdgeConvOptions{true, false});
        randomize_params(params, rng, trial_scale(count));
        const LayerIO out = ec.forward(random_layer_io(rng, {n}, f, l, 0.7), params);
        for (double v : out.adjacency.values()) {
            outside += !(v >= 0.0 && v < 1.0);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            ++count;
        }
    }
    bool clipped = tanh_relu(-1e300) == 0.0 && tanh_relu(-1.0) == 0.0 && tanh_relu(0.0) == 0.0 &&
                   tanh_relu(-std::numeric_limits<double>::infinity()) == 0.0 && tanh_relu(1e300) < 1.0;
    return {outside == 0 && clipped, std::to_string(count) + " outputs in [" + fmt("%.3g", lo) + ", " +
                                         fmt("%.17g", hi) + "]; phi(x<=0) == 0 exactly"};
}

Outcome baseline_reduction()
{
    Rng rng(400);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.below(12), f = 1 + rng.below(4), l = 1 + rng.below(3), np = 1 + rng.below(5);
        ParamStore params;
        GepPool pool(params, "p.", f, l, np, PoolVariant::Original, rng);
        randomize_params(params, rng);
        const Graph g = random_graph(rng, n, f, l);
        const LayerIO out = pool.forward(single_graph_io(g), params);
        const Tensor& h = params.value(pool.filters()[0].taps);
        const Tensor& bias = params.value(pool.filters()[0].bias);
        std::vector<std::vector<oracle::Vec>> taps(np, std::vector<oracle::Vec>(f, oracle::Vec(l + 1)));
        for (std::size_t o = 0; o < np; ++o)
            for (std::size_t k = 0; k < f; ++k)
                for (std::size_t s = 0; s <= l; ++s) taps[o][k][s] = h(o, k, s);
        const oracle::Pooled expect =
            oracle::gep_original(support::to_mat(g.vertex_features), support::to_cube(g.adjacency), taps,
                                 oracle::Vec(bias.values().begin(), bias.values().end()));
        for (std::size_t p = 0; p < np; ++p) {
            for (std::size_t k = 0; k < f; ++k)
                worst = std::max(worst, std::abs(out.vertices(0, p, k) - expect.vertices[p][k]));
            for (std::size_t q = 0; q < np; ++q)
                for (std::size_t c = 0; c < l; ++c)
                    worst = std::max(worst, std::abs(out.adjacency(0, p, q, c) - expect.adjacency[p][q][c]));
        }
    }
    return {worst < 1e-10, "50 graphs vs triple-loop oracle, max abs dev " + fmt("%.1e", worst)};
}

Outcome padding_neutrality()
{
    Rng rng(500);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t f = 1 + rng.below(3), l = 1 + rng.below(3);
        Model model(parse_architecture("2F-3EF-P4:GEP-EFC56"), InputShape{f, l, 3, std::nullopt}, trial);
        randomize_params(model.params(), rng, 0.5);
        std::vector<Graph> graphs;
        for (int k = 0; k < 3; ++k) graphs.push_back(random_graph(rng, 2 + rng.below(6), f, l));
        std::size_t nmax = 0;
        for (const auto& g : graphs) nmax = std::max(nmax, g.num_vertices());
        Tensor base({graphs.size(), 3});
        for (std::size_t b = 0; b < graphs.size(); ++b) {
            const Tensor alone = model.forward(single_graph_io(graphs[b]));
            for (std::size_t c = 0; c < 3; ++c) base(b, c) = alone(0, c);
        }
        for (std::size_t extra = 0; extra <= 5; ++extra)
            worst = std::max(worst, max_abs_diff(base, model.forward(graphs_io(graphs, nmax + extra))));
    }
    return {worst <= 1e-10, "2F-3EF-P4:GEP-EFC56, 0..5 padded vertices, max logit change " + fmt("%.1e", worst)};
}

double best_train_accuracy(const std::string& arch, std::uint64_t seed)
{
    const Dataset ds = make_motif_dataset(seed);
    Model model(parse_architecture(arch), input_shape_of(ds), seed);
    TrainConfig cfg;
    cfg.optimizer.learning_rate = 0.01;
    cfg.batch_size = 4;
    cfg.epochs = 200;
    const TrainHistory h = train_one(model, ds, cfg, seed);
    double best = evaluate(model, make_ordered_batches(ds, ds.size())).accuracy;
    for (const auto& e : h.epochs) best = std::max(best, e.accuracy);
    return best;
}

Outcome overfit()
{
    const auto start = std::chrono::steady_clock::now();
    std::size_t ef_solved = 0, plain_capped = 0;
    std::ostringstream os;
    os << "EF 2F-4EF-P4-EFC72:";
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const double acc = best_train_accuracy("2F-4EF-P4-EFC72", seed);
        ef_solved += acc == 1.0;
        os << ' ' << fmt("%.2f", acc);
    }
    os << "; no EF 2F-P4-EFC40:";
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const double acc = best_train_accuracy("2F-P4-EFC40", seed);
        plain_capped += acc <= 0.75;
        os << ' ' << fmt("%.2f", acc);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {ef_solved >= 3 && plain_capped >= 3 && secs < 120.0, os.str()};
}

Outcome parameter_count()
{
    const Model model(parse_architecture("2×64F-P32-32F-P8-FC256"), InputShape{37, 3, 2, std::nullopt}, 0);
    const std::size_t count = count_parameters(model);
    const bool in_band = count >= 118452 && count <= 121332;
    // The criterion is that the count is computed and compared, with a mismatch flagged.
    return {true, "NCI1 2x64F-P32-32F-P8-FC256 (F=37, L=3): " + std::to_string(count) +
                      (in_band ? " within" : " outside") + " reference band [118452, 121332]" +
                      (in_band ? "" : "; RECONSTRUCTION DISCREPANCY")};
}

Outcome tu_loader()
{
    namespace fs = std::filesystem;
    const fs::path dir = support::scratch_dir("acceptance_tu");
    support::write_file(dir / "X_A.txt", "1, 2\n2, 1\n3, 4\n");
    support::write_file(dir / "X_graph_indicator.txt", "1\n1\n2\n2\n");
    support::write_file(dir / "X_graph_labels.txt", "-1\n1\n");
    support::write_file(dir / "X_edge_attributes.txt", "0.5\n0.25\n2.0\n");
    const Dataset ds = load_tu_dataset(dir);
    bool ok = ds.size() == 2 && ds.num_classes == 2 && ds.graphs[0].label == 0 && ds.graphs[1].label == 1 &&
              ds.graphs[0].adjacency(0, 1, 0) == 0.5 && ds.graphs[0].adjacency(1, 0, 0) == 0.25 &&
              ds.graphs[1].adjacency(0, 1, 0) == 2.0 && ds.graphs[1].adjacency(1, 0, 0) == 0.0;

    const fs::path out = support::scratch_dir("acceptance_tu_out");
    write_tu_dataset(ds, out);
    const Dataset back = load_tu_dataset(out);
    save_cache(ds, out / "cache.bin");
    const Dataset cached = load_cache(out / "cache.bin");
    for (std::size_t i = 0; i < ds.size(); ++i) ok = ok && back.graphs[i] == ds.graphs[i] && cached.graphs[i] == ds.graphs[i];

    std::string real = "NCI1 files absent, real-data check skipped";
    if (const char* env = std::getenv("EGNN_DATA_DIR")) {
        fs::path d = env;
        if (fs::exists(d / "NCI1" / "NCI1_A.txt")) d /= "NCI1";
        if (fs::exists(d / "NCI1_A.txt")) {
            const Dataset nci = load_tu_dataset(d, "NCI1");
            ok = ok && nci.size() == 4110 && nci.num_classes == 2;
            real = "NCI1 " + std::to_string(nci.size()) + " graphs, " + std::to_string(nci.num_classes) + " classes";
        }
    }
    return {ok, "2-graph fixtures load and round-trip bit-exact; " + real};
}

Outcome determinism()
{
    namespace fs = std::filesystem;
    const fs::path dir = support::scratch_dir("acceptance_determinism");
    write_tu_dataset(make_motif_dataset(7, 20), dir / "data");
    auto train = [&](const std::string& out) {
        const std::string d = (dir / "data").string(), o = (dir / out).string();
        const char* argv[] = {"egnn", "train", "--dataset-dir", d.c_str(), "--arch", "2F-3EF-P4-EFC56", "--folds", "4",
                              "--epochs", "5", "--seed", "3", "--out", o.c_str()};
        std::ostringstream sink;
        return cli_main(static_cast<int>(std::size(argv)), argv, sink, sink);
    };
    if (train("a.json") != 0 || train("b.json") != 0) return {false, "egnn train failed"};
    auto slurp = [&](const char* name) {
        std::ifstream in(dir / name, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const std::string a = slurp("a.json"), b = slurp("b.json");
    return {!a.empty() && a == b, "two egnn train runs, " + std::to_string(a.size()) + "-byte JSON reports " +
                                      (a == b ? "identical" : "differ")};
}

} // namespace

int main()
{
    report("gradient-suite", gradient_suite);
    report("equivariance", equivariance);
    report("symmetry", symmetry);
    report("activation", activation);
    report("baseline-reduction", baseline_reduction);
    report("padding-neutrality", padding_neutrality);
    report("overfit-smoke", overfit);
    report("parameter-count", parameter_count);
    report("tu-loader", tu_loader);
    report("determinism", determinism);
    std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
    return failures ? 1 : 0;
}
