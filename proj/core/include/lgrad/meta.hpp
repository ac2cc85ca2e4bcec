#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "lgrad/diffusion.hpp"
#include "lgrad/graph.hpp"
#include "lgrad/knowledge_base.hpp"
#include "lgrad/rng.hpp"

namespace lgrad {

inline constexpr double kProbClamp = 1e-6;
inline constexpr int kFeatureDim = 17;  // 8 spec bits + mean loss + 8-bin histogram

// How the diversity term relates to the meta parameters. Literal keeps
// D a function of the agents' raw predictions only (constant w.r.t.
// theta); Weighted measures diversity of the pi-weighted pairs so the
// term carries gradient through the readout.
enum class DiversityGradMode { Literal, Weighted };

struct MetaModel {
    std::vector<Eigen::MatrixXd> layer_weights;  // W^(l): d_l x d_{l+1}
    Eigen::VectorXd readout_weight;              // d_L
    double readout_bias = 0.0;
    double lambda = 0.1;
    double gamma = 0.01;
    int k_mst = 1;
    DiversityGradMode diversity_grad = DiversityGradMode::Literal;

    int n_layers() const { return static_cast<int>(layer_weights.size()); }
    int input_dim() const { return static_cast<int>(layer_weights.front().rows()); }
    int output_dim() const { return static_cast<int>(layer_weights.back().cols()); }
};

MetaModel make_meta_model(const std::vector<int>& layer_dims, double lambda,
                          double gamma, int k_mst, Rng& rng);

struct LossBreakdown {
    double C = 0.0;
    double D = 0.0;
    double L_laplace = 0.0;
    double total = 0.0;
};

// M~ = D^-1/2 A D^-1/2. Throws on zero-degree rows.
Eigen::MatrixXd normalize_adjacency(const Eigen::MatrixXd& A);

// Node feature rows: [8 spec bits | mean of last 10 training losses |
// 8-bin intensity histogram of the agent's current prediction].
Eigen::MatrixXd node_features(const std::vector<AgentSpec>& specs,
                              const std::vector<double>& mean_losses,
                              const std::vector<std::vector<double>>& predictions);

struct GcnnCache {
    Eigen::MatrixXd Mn;                  // normalized adjacency used
    std::vector<Eigen::MatrixXd> H;      // H^(0) .. H^(L), post-activation
    std::vector<Eigen::MatrixXd> Z;      // pre-activations per layer
};

// L layers of H <- relu(Mn H W).
GcnnCache gcnn_forward(const Eigen::MatrixXd& Mn, const Eigen::MatrixXd& H0,
                       const MetaModel& model);

// Softmax over per-agent readout scores; sums to 1.
Eigen::VectorXd head_weights(const Eigen::MatrixXd& HL, const MetaModel& model);

// Convex combination of agent predictions.
std::vector<double> blend(const Eigen::VectorXd& pi,
                          const std::vector<std::vector<double>>& predictions);

// Mean per-pixel Bernoulli cross-entropy.
double cross_entropy(const std::vector<double>& x_hat,
                     const std::vector<double>& x_ref);

// Negated mean pairwise symmetric Bernoulli KL; <= 0. Optionally
// returns the pairwise symKL matrix.
double kl_diversity(const std::vector<std::vector<double>>& predictions,
                    Eigen::MatrixXd* pairwise = nullptr);

// (1/2) sum_ij A_ij ||h_i - h_j||^2 over ordered pairs.
double laplacian_loss(const Eigen::MatrixXd& A, const Eigen::MatrixXd& H);

LossBreakdown composite_loss(double C, double D, double L_laplace,
                             double lambda, double gamma);

struct MetaForward {
    GcnnCache cache;
    Eigen::VectorXd scores;
    Eigen::VectorXd pi;
    std::vector<double> blended;
    Eigen::MatrixXd symkl;  // pairwise divergence between agent predictions
    LossBreakdown loss;
};

// Full forward for one training sample. A is the (unnormalized) MST
// adjacency; predictions must already be clamped into (0, 1).
MetaForward meta_forward(const MetaModel& model, const Eigen::MatrixXd& A,
                         const Eigen::MatrixXd& H0,
                         const std::vector<std::vector<double>>& predictions,
                         const std::vector<double>& x_ref);

struct MetaGradients {
    std::vector<Eigen::MatrixXd> layer_weights;
    Eigen::VectorXd readout_weight;
    double readout_bias = 0.0;

    void add_scaled(const MetaGradients& other, double scale);
};

// Analytic gradients of the composite loss for every meta parameter.
MetaGradients meta_backward(const MetaModel& model, const MetaForward& fwd,
                            const Eigen::MatrixXd& A,
                            const std::vector<std::vector<double>>& predictions,
                            const std::vector<double>& x_ref);

// Per-agent state the meta model needs beyond live predictions, plus
// the graph-construction policy for training and generation.
struct MetaContext {
    std::vector<AgentSpec> specs;
    std::vector<double> mean_losses;
    GraphMode mode = GraphMode::PER_SAMPLE;
    double sigma = 0.25;
    Eigen::MatrixXd fixed_adjacency;  // MST adjacency for non-PER_SAMPLE modes
};

MetaContext make_meta_context(const KnowledgeBase& kb, GraphMode mode,
                              const GraphParams& params);

struct MetaTrainConfig {
    double lambda = 0.1;
    double gamma = 0.01;
    double eta = 0.01;
    int epochs = 50;
    int k_mst = 1;
    std::vector<int> layer_dims = {kFeatureDim, 16, 8};
    DiversityGradMode diversity_grad = DiversityGradMode::Literal;
};

// Algorithm: per epoch, per sample: noise to a random step, collect
// each agent's one-shot denoised prediction, build the graph, extract
// k maximum spanning trees, propagate, blend, and descend on the
// composite loss.
MetaModel train_meta(const MetaContext& ctx, const std::vector<ToyAgent>& agents,
                     const ToyDataset& dataset, const NoiseSchedule& sched,
                     const MetaTrainConfig& cfg, Rng& rng,
                     std::vector<LossBreakdown>* history = nullptr);

// Full reverse chain with the blended noise prediction; pi is
// recomputed at every step from the current per-sample graph.
std::vector<double> generate(const MetaModel& model, const MetaContext& ctx,
                             const std::vector<ToyAgent>& agents, int label,
                             const NoiseSchedule& sched, Rng& rng);

// LGRAD-M v1 checkpoint.
void save_meta(const MetaModel& model, const std::string& path);
MetaModel load_meta(const std::string& path);

}  // namespace lgrad
