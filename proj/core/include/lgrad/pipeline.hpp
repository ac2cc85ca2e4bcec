#pragma once

#include <string>
#include <vector>

#include "lgrad/config.hpp"
#include "lgrad/diffusion.hpp"
#include "lgrad/knowledge_base.hpp"
#include "lgrad/meta.hpp"
#include "lgrad/metrics.hpp"

namespace lgrad {

// Everything produced by the agent-training stage.
struct TrainedPool {
    ToyDataset dataset;
    NoiseSchedule sched;
    std::vector<ToyAgent> agents;
    KnowledgeBase kb;
};

// Deterministic per cfg.seed: dataset, every agent, and the cached
// knowledge-base outputs.
TrainedPool train_pool(const ExperimentConfig& cfg);

// Restricted pool over the given agent ids (kb ids are renumbered 0..k-1).
TrainedPool pool_subset(const TrainedPool& pool, const std::vector<int>& ids);

struct EvalResult {
    double toy_frechet = 0.0;
    double diversity = 0.0;
    double recon_mse = 0.0;
};

// Generates cfg.eval.n_generated images (labels cycling through the
// classes), then scores them against the training images. recon_mse is
// the blended one-shot reconstruction error on the training set.
EvalResult evaluate_pool(const TrainedPool& pool, const MetaModel& model,
                         const MetaContext& ctx, const ExperimentConfig& cfg,
                         std::uint64_t eval_seed,
                         std::vector<std::vector<double>>* generated = nullptr);

// CLI entry points. Each writes its outputs under out_dir and is
// byte-deterministic for a fixed config.
void cmd_train_agents(const ExperimentConfig& cfg, const std::string& out_dir);
void cmd_build_graph(const ExperimentConfig& cfg, const std::string& out_dir);
void cmd_train_meta(const ExperimentConfig& cfg, const std::string& out_dir);
void cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir,
                  int label, int count);
void cmd_ablate_models(const ExperimentConfig& cfg, const std::string& out_dir);
void cmd_ablate_connectivity(const ExperimentConfig& cfg,
                             const std::string& out_dir);
void cmd_metrics(const ExperimentConfig& cfg, const std::string& out_dir);

// Ablation grids, exposed for tests.
struct AblationRow {
    std::string key;  // subset like "0+1+2", or mode name
    std::uint64_t seed = 0;
    EvalResult result;
};
std::vector<AblationRow> run_ablate_models(const ExperimentConfig& cfg);
std::vector<AblationRow> run_ablate_connectivity(const ExperimentConfig& cfg);

// All agent-id subsets of size >= 2, by size then lexicographic order.
std::vector<std::vector<int>> agent_subsets(int n);

}  // namespace lgrad
