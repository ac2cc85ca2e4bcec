// Acceptance suite: one pass/fail line per criterion. Exits nonzero if
// any criterion fails. argv[1] is the path to the CLI binary, used by
// the determinism criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lgrad/config.hpp"
#include "lgrad/graph.hpp"
#include "lgrad/meta.hpp"
#include "lgrad/metrics.hpp"
#include "lgrad/pipeline.hpp"

using namespace lgrad;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << id << ". " << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << std::endl;
    if (!ok) ++g_failures;
}

// ---- shared helpers -------------------------------------------------

double brute_force_mst_weight(const ModelGraph& g) {
    const int m = static_cast<int>(g.edges.size());
    const int need = g.n - 1;
    double best = -1.0;
    for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
        if (__builtin_popcount(mask) != need) continue;
        std::vector<int> parent(g.n);
        for (int i = 0; i < g.n; ++i) parent[i] = i;
        auto find = [&](int x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        double total = 0.0;
        int joined = 0;
        for (int e = 0; e < m; ++e) {
            if (!(mask & (1u << e))) continue;
            const int a = find(g.edges[e].i), b = find(g.edges[e].j);
            if (a != b) {
                parent[a] = b;
                ++joined;
            }
            total += g.edges[e].weight;
        }
        if (joined == need && total > best) best = total;
    }
    return best;
}

ModelGraph random_connected_graph(Rng& rng) {
    ModelGraph g;
    g.n = 2 + static_cast<int>(rng.uniform_int(5));  // 2..6
    for (int i = 0; i + 1 < g.n; ++i) {
        g.edges.push_back({i, i + 1, 0.25 * (1.0 + rng.uniform_int(40))});
    }
    for (int i = 0; i < g.n; ++i) {
        for (int j = i + 2; j < g.n; ++j) {
            if (rng.uniform() < 0.6) {
                g.edges.push_back({i, j, 0.25 * (1.0 + rng.uniform_int(40))});
            }
        }
    }
    return g;
}

Eigen::MatrixXd random_tree(int n, Rng& rng) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        const int j = static_cast<int>(rng.uniform_int(i));
        const double w = 0.5 + rng.uniform();
        A(i, j) = A(j, i) = w;
    }
    return A;
}

struct GradSetup {
    MetaModel model;
    Eigen::MatrixXd A;
    Eigen::MatrixXd H0;
    std::vector<std::vector<double>> preds;
    std::vector<double> x_ref;
};

GradSetup make_grad_setup(int n, int L, Rng& rng) {
    GradSetup s;
    std::vector<int> dims = {kFeatureDim};
    for (int l = 0; l < L; ++l) dims.push_back(l + 1 == L ? 6 : 10);
    s.model = make_meta_model(dims, 0.3, 0.05, 1, rng);
    s.A = random_tree(n, rng);
    s.H0 = Eigen::MatrixXd(n, kFeatureDim);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < kFeatureDim; ++j) s.H0(i, j) = rng.uniform();
    }
    const int d = 12;
    s.preds.assign(n, std::vector<double>(d));
    for (auto& row : s.preds) {
        for (double& v : row) v = 0.05 + 0.9 * rng.uniform();
    }
    s.x_ref.resize(d);
    for (double& v : s.x_ref) v = rng.uniform();
    return s;
}

double min_abs_preact(const GradSetup& s) {
    const GcnnCache c = gcnn_forward(normalize_adjacency(s.A), s.H0, s.model);
    double m = 1e9;
    for (const auto& Z : c.Z) m = std::min(m, Z.array().abs().minCoeff());
    return m;
}

// ---- criteria -------------------------------------------------------

void criterion_mst_oracle() {
    Rng rng(1001);
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    for (int trial = 0; trial < 100 && ok; ++trial) {
        const ModelGraph g = random_connected_graph(rng);
        const double kruskal = maximum_spanning_tree(g).total_weight;
        const double brute = brute_force_mst_weight(g);
        if (kruskal != brute) {
            ok = false;
            detail = "trial " + std::to_string(trial) + ": kruskal " +
                     std::to_string(kruskal) + " != brute " + std::to_string(brute);
        }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (ok && secs >= 10.0) {
        ok = false;
        detail = "took " + std::to_string(secs) + " s";
    }
    if (ok) {
        std::ostringstream d;
        d << "100 graphs, " << secs << " s";
        detail = d.str();
    }
    report(1, "maximum spanning tree matches brute-force enumeration", ok, detail);
}

void criterion_gradient_oracle() {
    Rng rng(2002);
    bool ok = true;
    std::string detail;
    int configs = 0;
    double worst = 0.0;
    for (int n : {3, 4, 6}) {
        for (int L : {1, 2}) {
            GradSetup s = make_grad_setup(n, L, rng);
            int guard = 0;
            while (min_abs_preact(s) < 1e-3 && guard++ < 50) {
                s = make_grad_setup(n, L, rng);
            }
            const MetaForward fwd =
                meta_forward(s.model, s.A, s.H0, s.preds, s.x_ref);
            const MetaGradients g =
                meta_backward(s.model, fwd, s.A, s.preds, s.x_ref);
            const double h = 1e-5;
            auto probe = [&](double& ref, double analytic) {
                const double saved = ref;
                ref = saved + h;
                const double fp =
                    meta_forward(s.model, s.A, s.H0, s.preds, s.x_ref).loss.total;
                ref = saved - h;
                const double fm =
                    meta_forward(s.model, s.A, s.H0, s.preds, s.x_ref).loss.total;
                ref = saved;
                const double fd = (fp - fm) / (2.0 * h);
                const double denom =
                    std::max({std::abs(fd), std::abs(analytic), 1e-6});
                worst = std::max(worst, std::abs(fd - analytic) / denom);
            };
            for (int l = 0; l < s.model.n_layers(); ++l) {
                auto& W = s.model.layer_weights[l];
                for (int r = 0; r < W.rows(); r += 3) {
                    for (int c = 0; c < W.cols(); c += 2) {
                        probe(W(r, c), g.layer_weights[l](r, c));
                    }
                }
            }
            for (int i = 0; i < s.model.readout_weight.size(); ++i) {
                probe(s.model.readout_weight(i), g.readout_weight(i));
            }
            probe(s.model.readout_bias, g.readout_bias);
            ++configs;
        }
    }
    ok = configs >= 5 && worst < 1e-4;
    {
        std::ostringstream d;
        d << configs << " configs, worst rel err " << worst;
        detail = d.str();
    }
    report(2, "analytic composite-loss gradients match finite differences", ok,
           detail);
}

void criterion_laplacian_invariants() {
    bool ok = true;
    std::string detail;

    Eigen::MatrixXd A(2, 2);
    A << 0, 2, 2, 0;
    Eigen::MatrixXd H(2, 1);
    H << 0, 1;
    if (laplacian_loss(A, H) != 2.0) {
        ok = false;
        detail = "hand case != 2";
    }

    Rng rng(3003);
    for (int trial = 0; trial < 10 && ok; ++trial) {
        const int n = 3 + static_cast<int>(rng.uniform_int(5));
        const Eigen::MatrixXd T = random_tree(n, rng);
        Eigen::MatrixXd emb(n, 4);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < 4; ++j) emb(i, j) = rng.normal();
        }
        Eigen::MatrixXd constant(n, 4);
        constant.setConstant(0.37);
        if (laplacian_loss(T, constant) != 0.0) {
            ok = false;
            detail = "constant embeddings give nonzero value";
            break;
        }
        const Eigen::MatrixXd shifted = emb.array() + 5.0;
        if (std::abs(laplacian_loss(T, shifted) - laplacian_loss(T, emb)) >
            1e-12 * std::max(1.0, laplacian_loss(T, emb))) {
            ok = false;
            detail = "translation invariance violated";
            break;
        }
    }
    report(3, "graph regularizer invariants hold", ok, detail);
}

void criterion_loss_reduction() {
    bool ok = true;
    std::string detail;

    Rng rng(4004);
    for (int trial = 0; trial < 10 && ok; ++trial) {
        GradSetup s = make_grad_setup(4, 2, rng);
        s.model.lambda = 0.0;
        s.model.gamma = 0.0;
        const MetaForward fwd =
            meta_forward(s.model, s.A, s.H0, s.preds, s.x_ref);
        if (fwd.loss.total != fwd.loss.C) {
            ok = false;
            detail = "lambda = gamma = 0 total differs from cross-entropy";
        }
    }

    if (ok) {
        ExperimentConfig cfg = default_config();
        cfg.dataset.n_per_class = 2;
        cfg.agents.resize(3);
        for (auto& a : cfg.agents) a.epochs = 30;
        cfg.meta.epochs = 10;
        const TrainedPool pool = train_pool(cfg);
        const MetaContext ctx = make_meta_context(
            pool.kb, GraphMode::PER_SAMPLE, {cfg.graph.tau, cfg.graph.sigma});
        std::vector<LossBreakdown> hist;
        Rng mr = Rng::for_role(cfg.seed, rng_role::meta_train);
        train_meta(ctx, pool.agents, pool.dataset, pool.sched, cfg.meta, mr,
                   &hist);
        for (const auto& b : hist) {
            const double expect =
                b.C + cfg.meta.lambda * b.D + cfg.meta.gamma * b.L_laplace;
            if (std::abs(b.total - expect) > 1e-12 * std::max(1.0, std::abs(expect))) {
                ok = false;
                detail = "decomposition identity violated in training log";
                break;
            }
        }
    }
    report(4, "composite loss reduces and decomposes exactly", ok, detail);
}

void criterion_forward_stats() {
    const NoiseSchedule s = make_schedule(50, 1e-4, 0.02);
    const int N = 100000;
    Rng rng(5005);
    const double x0v = 0.8;
    std::vector<double> x0(1, x0v);
    bool ok = true;
    std::string detail;
    for (int t : {1, 25, 50}) {
        double sum = 0.0, sum2 = 0.0;
        for (int i = 0; i < N; ++i) {
            auto [xt, eps] = forward_noise(x0, t, s, rng);
            sum += xt[0];
            sum2 += xt[0] * xt[0];
        }
        const double mean = sum / N;
        const double var = sum2 / N - mean * mean;
        const double ab = s.alpha_bar[t - 1];
        const double em = std::sqrt(ab) * x0v;
        const double ev = 1.0 - ab;
        const double se_mean = std::sqrt(ev / N);
        const double se_var = ev * std::sqrt(2.0 / (N - 1));
        if (std::abs(mean - em) > 3.0 * se_mean ||
            std::abs(var - ev) > 3.0 * se_var) {
            ok = false;
            detail = "t = " + std::to_string(t) + " out of 3 SE";
            break;
        }
    }
    report(5, "forward-process marginals match the closed form", ok, detail);
}

void criterion_normalization_invariants() {
    Rng rng(6006);
    bool ok = true;
    std::string detail;
    for (int trial = 0; trial < 20 && ok; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(7));  // 2..8
        const Eigen::MatrixXd A = random_tree(n, rng);
        const Eigen::MatrixXd Mn = normalize_adjacency(A);
        if (!Mn.isApprox(Mn.transpose(), 1e-12)) {
            ok = false;
            detail = "not symmetric";
            break;
        }
        const double c = 0.1 + 10.0 * rng.uniform();
        if (!normalize_adjacency(c * A).isApprox(Mn, 1e-10)) {
            ok = false;
            detail = "not scale invariant";
            break;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Mn);
        if (es.eigenvalues().minCoeff() < -1.0 - 1e-8 ||
            es.eigenvalues().maxCoeff() > 1.0 + 1e-8) {
            ok = false;
            detail = "eigenvalue outside [-1, 1]";
            break;
        }
    }
    report(6, "normalized adjacency invariants hold on random trees", ok, detail);
}

ExperimentConfig trend_config() {
    ExperimentConfig cfg = default_config();
    cfg.dataset.n_per_class = 4;
    cfg.meta.epochs = 1000;
    cfg.meta.eta = 0.2;
    cfg.eval.n_generated = 12;
    cfg.eval.seeds_for_trends = 5;
    return cfg;
}

void criterion_ensemble_trend() {
    const ExperimentConfig cfg = trend_config();
    const auto rows = run_ablate_models(cfg);
    // rows: one entry per (subset, seed). Subsets are grouped by size as
    // in the ablation table (pairs row, triples row, full-pool row); per
    // seed the full pool must attain the lowest mean toy-Frechet among
    // the size rows.
    struct Acc {
        double sum2 = 0, sum3 = 0, full = 1e300;
        int n2 = 0, n3 = 0;
    };
    std::map<std::uint64_t, Acc> per_seed;
    for (const auto& r : rows) {
        const int size =
            1 + static_cast<int>(std::count(r.key.begin(), r.key.end(), '+'));
        Acc& a = per_seed[r.seed];
        if (size == 2) {
            a.sum2 += r.result.toy_frechet;
            ++a.n2;
        } else if (size == 3) {
            a.sum3 += r.result.toy_frechet;
            ++a.n3;
        } else {
            a.full = r.result.toy_frechet;
        }
    }
    int wins = 0, seeds = 0;
    for (const auto& [seed, a] : per_seed) {
        ++seeds;
        const double floor = std::min(a.sum2 / a.n2, a.sum3 / a.n3);
        if (a.full <= floor + 1e-12) ++wins;
    }
    const bool ok = seeds == 5 && wins >= 4;
    std::ostringstream d;
    d << "full ensemble row lowest in " << wins << "/" << seeds << " seeds";
    report(7, "full ensemble beats the subset-size averages on toy-Frechet",
           ok, d.str());
}

void criterion_connectivity_trend() {
    const ExperimentConfig cfg = trend_config();
    const auto rows = run_ablate_connectivity(cfg);
    std::map<std::uint64_t, std::map<std::string, double>> per_seed;
    for (const auto& r : rows) per_seed[r.seed][r.key] = r.result.toy_frechet;
    int wins = 0, seeds = 0;
    for (const auto& [seed, by_mode] : per_seed) {
        ++seeds;
        const double hybrid = by_mode.at("HYBRID");
        const double floor = std::min(by_mode.at("CCF"), by_mode.at("PCF"));
        if (hybrid <= floor + 1e-12) ++wins;
    }
    const bool ok = seeds == 5 && wins >= 3;
    std::ostringstream d;
    d << "hybrid at or below best single mode in " << wins << "/" << seeds
      << " seeds";
    report(8, "hybrid connectivity matches or beats CCF/PCF alone", ok, d.str());
}

void criterion_diversity_behavior() {
    bool ok = true;
    std::string detail;

    // Identical samples have diversity exactly 0.
    SampleSet same;
    same.embeddings.assign(5, std::vector<double>(16, 0.42));
    if (diversity(same) != 0.0) {
        ok = false;
        detail = "identical samples give nonzero diversity";
    }

    if (ok) {
        ExperimentConfig cfg = trend_config();
        double mean0 = 0.0, mean1 = 0.0;
        for (int s = 0; s < 5; ++s) {
            ExperimentConfig c = cfg;
            c.seed = cfg.seed + static_cast<std::uint64_t>(s);
            const TrainedPool pool = train_pool(c);
            const MetaContext ctx = make_meta_context(
                pool.kb, GraphMode::PER_SAMPLE, {c.graph.tau, c.graph.sigma});
            for (double lambda : {0.0, 1.0}) {
                MetaTrainConfig mc = c.meta;
                mc.lambda = lambda;
                Rng mr = Rng::for_role(c.seed, rng_role::meta_train);
                const MetaModel model = train_meta(ctx, pool.agents, pool.dataset,
                                                   pool.sched, mc, mr);
                const EvalResult ev =
                    evaluate_pool(pool, model, ctx, c, c.seed);
                (lambda == 0.0 ? mean0 : mean1) += ev.diversity / 5.0;
            }
        }
        if (mean1 < mean0 - 1e-12) {
            ok = false;
            std::ostringstream d;
            d << "diversity fell from " << mean0 << " to " << mean1;
            detail = d.str();
        } else {
            std::ostringstream d;
            d << "mean diversity " << mean0 << " (lambda 0) vs " << mean1
              << " (lambda 1)";
            detail = d.str();
        }
    }
    report(9, "raising the diversity weight never reduces measured diversity",
           ok, detail);
}

void criterion_complexity_smoke() {
    Rng rng(7007);
    const int d = 64;
    auto run_case = [&](int n) {
        std::vector<std::vector<double>> preds(n, std::vector<double>(d));
        for (auto& row : preds) {
            for (double& v : row) v = rng.uniform();
        }
        // Warm-up.
        maximum_spanning_tree(build_per_sample_graph(preds, 0.25));
        const auto t0 = std::chrono::steady_clock::now();
        double sink = 0.0;
        for (int it = 0; it < 1000; ++it) {
            const ModelGraph g = build_per_sample_graph(preds, 0.25);
            sink += maximum_spanning_tree(g).total_weight;
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        if (sink < 0) std::cout << "";  // keep the loop live
        return secs;
    };
    const double t4 = run_case(4);
    const double t8 = run_case(8);
    const double measured = t8 / t4;
    const double predicted =
        (28.0 * std::log(8.0)) / (6.0 * std::log(4.0));  // m log n
    const bool ok =
        measured >= predicted / 2.5 && measured <= predicted * 2.5;
    std::ostringstream det;
    det << "measured ratio " << measured << ", m log n ratio " << predicted;
    report(10, "graph + tree cost scales like m log n", ok, det.str());
}

bool same_tree_bytes(const fs::path& a, const fs::path& b, std::string& why) {
    std::vector<std::string> ra, rb;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (e.is_regular_file()) ra.push_back(fs::relative(e.path(), a).string());
    }
    for (const auto& e : fs::recursive_directory_iterator(b)) {
        if (e.is_regular_file()) rb.push_back(fs::relative(e.path(), b).string());
    }
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    if (ra != rb) {
        why = "different file sets";
        return false;
    }
    for (const auto& rel : ra) {
        std::ifstream fa(a / rel, std::ios::binary);
        std::ifstream fb(b / rel, std::ios::binary);
        std::stringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        if (sa.str() != sb.str()) {
            why = rel + " differs";
            return false;
        }
    }
    return true;
}

void criterion_cli_determinism(const std::string& cli) {
    const fs::path base = fs::temp_directory_path() / "lgrad_accept_cli";
    std::error_code ec;
    fs::remove_all(base, ec);
    fs::create_directories(base);
    const fs::path cfg_path = base / "exp.ini";
    {
        std::ofstream cfg(cfg_path);
        cfg << "seed = 3\n"
               "[dataset]\nn_per_class = 2\n"
               "[agent]\nspec = 11001010\nepochs = 40\n"
               "[agent]\nspec = 10010101\nepochs = 40\n"
               "[agent]\nspec = 01100111\nepochs = 40\n"
               "[graph]\nmode = hybrid\n"
               "[meta]\nepochs = 6\n"
               "[eval]\nn_generated = 4\nseeds_for_trends = 2\n";
    }
    const std::vector<std::string> commands = {
        "train-agents", "build-graph",          "train-meta", "generate --label 1 --count 3",
        "metrics",      "ablate-models",        "ablate-connectivity"};
    bool ok = true;
    std::string detail;
    for (const char rep : {'a', 'b'}) {
        const fs::path out = base / std::string(1, rep);
        fs::create_directories(out);
        for (const auto& sub : commands) {
            const std::string cmd = cli + " " + sub + " --config " +
                                    cfg_path.string() + " --out " + out.string() +
                                    " >/dev/null 2>&1";
            if (std::system(cmd.c_str()) != 0) {
                ok = false;
                detail = "command failed: " + sub;
                break;
            }
        }
        if (!ok) break;
    }
    if (ok) {
        std::string why;
        if (!same_tree_bytes(base / "a", base / "b", why)) {
            ok = false;
            detail = why;
        } else {
            detail = std::to_string(commands.size()) + " subcommands byte-identical";
        }
    }
    fs::remove_all(base, ec);
    report(11, "CLI reruns are byte-identical", ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <path-to-cli-binary>\n";
        return 2;
    }
    criterion_mst_oracle();
    criterion_gradient_oracle();
    criterion_laplacian_invariants();
    criterion_loss_reduction();
    criterion_forward_stats();
    criterion_normalization_invariants();
    criterion_ensemble_trend();
    criterion_connectivity_trend();
    criterion_diversity_behavior();
    criterion_complexity_smoke();
    criterion_cli_determinism(argv[1]);
    std::cout << (g_failures == 0 ? "all criteria passed"
                                  : std::to_string(g_failures) +
                                        " criteria failed")
              << std::endl;
    return g_failures == 0 ? 0 : 1;
}
