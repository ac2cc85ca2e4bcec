#include "lgrad/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lgrad/text_io.hpp"

namespace lgrad {

std::string to_string(GraphMode mode) {
    switch (mode) {
        case GraphMode::CCF: return "CCF";
        case GraphMode::PCF: return "PCF";
        case GraphMode::HYBRID: return "HYBRID";
        case GraphMode::PER_SAMPLE: return "PER_SAMPLE";
    }
    return "?";
}

GraphMode graph_mode_from_string(const std::string& s) {
    if (s == "CCF" || s == "ccf") return GraphMode::CCF;
    if (s == "PCF" || s == "pcf") return GraphMode::PCF;
    if (s == "HYBRID" || s == "hybrid") return GraphMode::HYBRID;
    if (s == "PER_SAMPLE" || s == "per_sample") return GraphMode::PER_SAMPLE;
    throw std::invalid_argument("unknown graph mode '" + s + "'");
}

int ccf(const AgentSpec& a, const AgentSpec& b) {
    // Matching 0s count too: shared absence is a shared characteristic.
    int count = 0;
    for (int i = 0; i < kNumTraits; ++i) {
        if (a.bit(i) == b.bit(i)) ++count;
    }
    return count;
}

int pcf(const KnowledgeRecord& a, const KnowledgeRecord& b, double tau) {
    if (a.outputs.size() != b.outputs.size()) {
        throw std::invalid_argument("records cover different sample sets");
    }
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
    int count = 0;
    for (std::size_t s = 0; s < a.outputs.size(); ++s) {
        const auto& ya = a.outputs[s];
        const auto& yb = b.outputs[s];
        if (ya.size() != yb.size()) {
            throw std::invalid_argument("output dimension mismatch at sample " +
                                        std::to_string(s));
        }
        double mse = 0.0;
        for (std::size_t i = 0; i < ya.size(); ++i) {
            const double d = ya[i] - yb[i];
            mse += d * d;
        }
        mse /= static_cast<double>(ya.size());
        if (mse < tau) ++count;
    }
    return count;
}

double hybrid_weight(int ccf_val, int pcf_val, int n_traits, int n_samples) {
    if (n_traits <= 0 || n_samples <= 0) {
        throw std::invalid_argument("denominators must be positive");
    }
    return static_cast<double>(ccf_val) / n_traits +
           static_cast<double>(pcf_val) / n_samples;
}

double per_sample_weight(const std::vector<double>& y_i,
                         const std::vector<double>& y_j, double sigma) {
    if (y_i.size() != y_j.size()) {
        throw std::invalid_argument("prediction length mismatch");
    }
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
    double mse = 0.0;
    for (std::size_t k = 0; k < y_i.size(); ++k) {
        const double d = y_i[k] - y_j[k];
        mse += d * d;
    }
    mse /= static_cast<double>(y_i.size());
    return std::exp(-mse / (sigma * sigma));
}

ModelGraph build_graph(const KnowledgeBase& kb, GraphMode mode,
                       const GraphParams& params) {
    const int n = static_cast<int>(kb.records.size());
    if (n < 2) throw std::invalid_argument("need at least 2 agents to build a graph");
    if (mode == GraphMode::PER_SAMPLE) {
        throw std::invalid_argument(
            "PER_SAMPLE graphs are built from live predictions, not the kb");
    }
    const int n_samples = kb.n_samples();
    ModelGraph g;
    g.n = n;
    g.mode = mode;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double w = 0.0;
            switch (mode) {
                case GraphMode::CCF:
                    w = ccf(kb.records[i].spec, kb.records[j].spec);
                    break;
                case GraphMode::PCF:
                    w = pcf(kb.records[i], kb.records[j], params.tau);
                    break;
                case GraphMode::HYBRID:
                    w = hybrid_weight(ccf(kb.records[i].spec, kb.records[j].spec),
                                      pcf(kb.records[i], kb.records[j], params.tau),
                                      kNumTraits, n_samples);
                    break;
                default: break;
            }
            if (w != 0.0) g.edges.push_back({i, j, w});
        }
    }
    return g;
}

ModelGraph build_per_sample_graph(
    const std::vector<std::vector<double>>& predictions, double sigma) {
    const int n = static_cast<int>(predictions.size());
    if (n < 2) throw std::invalid_argument("need at least 2 agents");
    ModelGraph g;
    g.n = n;
    g.mode = GraphMode::PER_SAMPLE;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double w = per_sample_weight(predictions[i], predictions[j], sigma);
            if (w != 0.0) g.edges.push_back({i, j, w});
        }
    }
    return g;
}

namespace {

struct Dsu {
    std::vector<int> parent;
    explicit Dsu(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(int a, int b) {
        a = find(a); b = find(b);
        if (a == b) return false;
        if (a > b) std::swap(a, b);  // keep the smaller index as root
        parent[b] = a;
        return true;
    }
};

std::vector<Edge> sorted_desc(std::vector<Edge> edges) {
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        if (a.weight != b.weight) return a.weight > b.weight;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    return edges;
}

SpanningTree finish_tree(int n, std::vector<Edge> tree_edges) {
    SpanningTree t;
    t.n = n;
    t.edges = sorted_desc(std::move(tree_edges));
    t.adjacency.assign(n, std::vector<double>(n, 0.0));
    for (const auto& e : t.edges) {
        t.adjacency[e.i][e.j] = e.weight;
        t.adjacency[e.j][e.i] = e.weight;
        t.total_weight += e.weight;
    }
    return t;
}

}  // namespace

SpanningTree maximum_spanning_tree(const ModelGraph& g) {
    if (g.n < 1) throw std::invalid_argument("empty graph");
    const std::vector<Edge> order = sorted_desc(g.edges);
    Dsu dsu(g.n);
    std::vector<Edge> chosen;
    for (const auto& e : order) {
        if (e.i == e.j || e.i < 0 || e.j >= g.n) {
            throw std::invalid_argument("invalid edge in graph");
        }
        if (dsu.unite(e.i, e.j)) chosen.push_back(e);
    }
    if (static_cast<int>(chosen.size()) != g.n - 1) {
        std::vector<std::vector<int>> comps(g.n);
        for (int v = 0; v < g.n; ++v) comps[dsu.find(v)].push_back(v);
        std::string msg = "graph is disconnected; components:";
        for (const auto& c : comps) {
            if (c.empty()) continue;
            msg += " {";
            for (std::size_t k = 0; k < c.size(); ++k) {
                msg += (k ? "," : "") + std::to_string(c[k]);
            }
            msg += "}";
        }
        throw std::runtime_error(msg);
    }
    return finish_tree(g.n, std::move(chosen));
}

std::vector<SpanningTree> k_maximum_spanning_trees(const ModelGraph& g, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    std::vector<SpanningTree> out;
    out.push_back(maximum_spanning_tree(g));
    if (k == 1) return out;

    // Next-best trees by single-edge swap against the best tree: insert
    // a non-tree edge and drop the lightest tree edge on the induced
    // cycle. Enough alternatives for desk-scale k.
    const SpanningTree& best = out[0];
    auto in_tree = [&](const Edge& e) {
        return std::any_of(best.edges.begin(), best.edges.end(), [&](const Edge& t) {
            return t.i == e.i && t.j == e.j;
        });
    };
    struct Cand {
        double weight;
        std::vector<Edge> edges;
    };
    std::vector<Cand> cands;
    for (const auto& e : g.edges) {
        if (in_tree(e)) continue;
        // Path e.i -> e.j in the tree.
        std::vector<std::vector<std::pair<int, double>>> adj(best.n);
        for (const auto& te : best.edges) {
            adj[te.i].push_back({te.j, te.weight});
            adj[te.j].push_back({te.i, te.weight});
        }
        std::vector<int> prev(best.n, -1);
        std::vector<int> stack = {e.i};
        prev[e.i] = e.i;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (auto [u, w] : adj[v]) {
                if (prev[u] < 0) {
                    prev[u] = v;
                    stack.push_back(u);
                }
            }
        }
        // Lightest edge on the cycle (excluding e itself).
        int drop_i = -1, drop_j = -1;
        double drop_w = 0.0;
        for (int v = e.j; v != e.i; v = prev[v]) {
            const int u = prev[v];
            const double w = best.adjacency[u][v];
            if (drop_i < 0 || w < drop_w) {
                drop_i = std::min(u, v);
                drop_j = std::max(u, v);
                drop_w = w;
            }
        }
        std::vector<Edge> edges;
        for (const auto& te : best.edges) {
            if (te.i == drop_i && te.j == drop_j) continue;
            edges.push_back(te);
        }
        edges.push_back(e);
        cands.push_back({best.total_weight - drop_w + e.weight, std::move(edges)});
    }
    std::sort(cands.begin(), cands.end(),
              [](const Cand& a, const Cand& b) { return a.weight > b.weight; });
    for (const auto& c : cands) {
        if (static_cast<int>(out.size()) >= k) break;
        out.push_back(finish_tree(g.n, c.edges));
    }
    return out;
}

int default_root(const SpanningTree& t) {
    int root = 0;
    double best = -1.0;
    for (int i = 0; i < t.n; ++i) {
        double inc = 0.0;
        for (int j = 0; j < t.n; ++j) inc += t.adjacency[i][j];
        if (inc > best) {
            best = inc;
            root = i;
        }
    }
    return root;
}

std::vector<double> node_depth(const SpanningTree& t, int root) {
    if (root < 0 || root >= t.n) throw std::invalid_argument("root out of range");
    std::vector<double> depth(t.n, 0.0);
    std::vector<bool> seen(t.n, false);
    std::vector<int> stack = {root};
    seen[root] = true;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int u = 0; u < t.n; ++u) {
            if (!seen[u] && t.adjacency[v][u] != 0.0) {
                seen[u] = true;
                depth[u] = depth[v] + t.adjacency[v][u];
                stack.push_back(u);
            }
        }
    }
    return depth;
}

std::set<int> ensemble_members(const SpanningTree& t, double min_incident_weight) {
    if (min_incident_weight < 0.0) {
        throw std::invalid_argument("threshold must be >= 0");
    }
    std::set<int> members;
    for (int i = 0; i < t.n; ++i) members.insert(i);
    if (min_incident_weight == 0.0) return members;

    std::vector<std::vector<double>> adj = t.adjacency;
    bool changed = true;
    while (changed && members.size() > 1) {
        changed = false;
        for (auto it = members.begin(); it != members.end();) {
            const int v = *it;
            int degree = 0;
            double incident = 0.0;
            for (int u : members) {
                if (u != v && adj[v][u] != 0.0) {
                    ++degree;
                    incident = adj[v][u];
                }
            }
            if (degree == 1 && incident < min_incident_weight &&
                members.size() > 1) {
                for (int u : members) {
                    adj[v][u] = adj[u][v] = 0.0;
                }
                it = members.erase(it);
                changed = true;
            } else {
                ++it;
            }
        }
    }
    return members;
}

void save_graph(const ModelGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "LGRAD-G v1 " << g.n << ' ' << to_string(g.mode) << '\n';
    for (const auto& e : g.edges) {
        out << e.i << ' ' << e.j << ' ' << to_hexfloat(e.weight) << '\n';
    }
}

ModelGraph load_graph(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ":1: empty file");
    std::istringstream header(line);
    std::string magic, ver, mode;
    ModelGraph g;
    if (!(header >> magic >> ver >> g.n >> mode) || magic != "LGRAD-G" ||
        ver != "v1") {
        throw std::runtime_error(path + ":1: parse error: expected LGRAD-G v1");
    }
    g.mode = graph_mode_from_string(mode);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        Edge e;
        std::string w;
        if (!(ls >> e.i >> e.j >> w)) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": parse error: expected '<i> <j> <weight>'");
        }
        e.weight = parse_double(w);
        g.edges.push_back(e);
    }
    return g;
}

}  // namespace lgrad
