#pragma once

#include <set>
#include <string>
#include <vector>

#include "lgrad/knowledge_base.hpp"

namespace lgrad {

enum class GraphMode { CCF, PCF, HYBRID, PER_SAMPLE };

std::string to_string(GraphMode mode);
GraphMode graph_mode_from_string(const std::string& s);

struct Edge {
    int i = 0, j = 0;  // i < j
    double weight = 0.0;
    bool operator==(const Edge&) const = default;
};

// Weighted undirected graph over agents. An edge is present iff its
// weight is nonzero.
struct ModelGraph {
    int n = 0;
    std::vector<Edge> edges;
    GraphMode mode = GraphMode::PER_SAMPLE;
};

struct SpanningTree {
    int n = 0;
    std::vector<Edge> edges;  // exactly n-1
    std::vector<std::vector<double>> adjacency;  // symmetric, weights on edges
    double total_weight = 0.0;
};

// Count of traits with equal values in both specs.
int ccf(const AgentSpec& a, const AgentSpec& b);

// Count of sample ids where the mean squared difference between the two
// agents' cached outputs is below tau.
int pcf(const KnowledgeRecord& a, const KnowledgeRecord& b, double tau);

// Range-normalized sum of CCF and PCF; in [0, 2].
double hybrid_weight(int ccf_val, int pcf_val, int n_traits, int n_samples);

// exp(-mse / sigma^2); in (0, 1].
double per_sample_weight(const std::vector<double>& y_i,
                         const std::vector<double>& y_j, double sigma);

struct GraphParams {
    double tau = 0.01;    // PCF agreement threshold
    double sigma = 0.25;  // per-sample kernel bandwidth
};

ModelGraph build_graph(const KnowledgeBase& kb, GraphMode mode,
                       const GraphParams& params);

// Complete per-sample graph from the agents' current predictions.
ModelGraph build_per_sample_graph(
    const std::vector<std::vector<double>>& predictions, double sigma);

// Kruskal over edges sorted by weight descending, ties broken by
// smaller (i, j). Throws on disconnected input, listing the components.
SpanningTree maximum_spanning_tree(const ModelGraph& g);

// Up to k trees: the maximum tree first, then next-best trees found by
// single-edge swaps, by total weight descending.
std::vector<SpanningTree> k_maximum_spanning_trees(const ModelGraph& g, int k);

// Weighted path length from root to every node; root defaults to the
// node of maximum total incident weight (tie: smallest index).
std::vector<double> node_depth(const SpanningTree& t, int root);
int default_root(const SpanningTree& t);

// All nodes at threshold 0; positive thresholds iteratively prune
// leaves whose single incident weight is below the threshold. Never
// drops below one node.
std::set<int> ensemble_members(const SpanningTree& t, double min_incident_weight);

// Edge-list text export, header `LGRAD-G v1 <n> <mode>`.
void save_graph(const ModelGraph& g, const std::string& path);
ModelGraph load_graph(const std::string& path);

}  // namespace lgrad
