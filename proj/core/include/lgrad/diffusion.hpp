#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lgrad/agent_spec.hpp"
#include "lgrad/rng.hpp"

namespace lgrad {

// Per-step variance parameters of the forward process.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // size T, entries in (0,1)
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // cumulative products, strictly decreasing
};

NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

struct ToySample {
    int sample_id = 0;
    std::vector<double> image;  // length d_img, values in [0,1]
    int label = 0;
};

struct ToyDataset {
    std::vector<ToySample> samples;
    int n_classes = 0;
    int d_img = 0;

    std::uint64_t fingerprint() const;
};

// 4 classes of jittered grayscale sprites: circle, square, plus-cross,
// diagonal stripes. d_side >= 8.
ToyDataset make_sprite_dataset(int n_per_class, int d_side, Rng& rng);

void save_dataset(const ToyDataset& ds, const std::string& path);
ToyDataset load_dataset(const std::string& path);

// Small fully connected noise-prediction network. Width, depth and the
// residual path are fixed by the spec bits (wide, deep, skip); the dr
// bit enables train-time dropout noise. The remaining trait bits are
// descriptive only at this scale.
struct ToyAgent {
    AgentSpec spec;
    std::vector<double> parameters;
    int conditioning_dim = 0;  // number of label categories
    int d_img = 0;

    int hidden_width() const { return spec.get("wide") ? 24 : 12; }
    int hidden_depth() const { return spec.get("deep") ? 2 : 1; }
    bool has_skip() const { return spec.get("skip") != 0; }
    bool has_dropout() const { return spec.get("dr") != 0; }
    int input_dim() const { return d_img + 1 + conditioning_dim; }
    int param_count() const;
};

// Deterministic zero-initialized agent shell; parameters sized for the
// architecture implied by spec.
ToyAgent make_agent(const AgentSpec& spec, int d_img, int n_classes);

// xt = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, eps ~ N(0, I). t is 1-based.
std::pair<std::vector<double>, std::vector<double>> forward_noise(
    const std::vector<double>& x0, int t, const NoiseSchedule& sched, Rng& rng);

// Deterministic function of (parameters, xt, t/T, one-hot label).
std::vector<double> predict_noise(const ToyAgent& agent,
                                  const std::vector<double>& xt, int t,
                                  int label);

// Mean-squared noise-prediction loss and its analytic parameter
// gradient. dropout_mask, when non-null, zeroes hidden units (one entry
// per hidden unit across all hidden layers).
struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};
LossGrad agent_loss_grad(const ToyAgent& agent, const std::vector<double>& xt,
                         int t, int label, const std::vector<double>& eps_target,
                         const std::vector<std::uint8_t>* dropout_mask = nullptr);

// Plain gradient descent on a fixed finite-sum objective: each sample
// gets a few frozen (t, eps) draws so the loss is deterministic per
// seed. Uses the default schedule unless one is supplied.
ToyAgent train_agent(const ToyDataset& dataset, const AgentSpec& spec,
                     int epochs, double lr, Rng& rng,
                     std::vector<double>* loss_history = nullptr,
                     const NoiseSchedule* sched = nullptr);

// One ancestral step of the reverse chain. z = 0 at t = 1.
std::vector<double> reverse_step(const std::vector<double>& xt,
                                 const std::vector<double>& eps_hat, int t,
                                 const NoiseSchedule& sched, Rng& rng);

// Noise-prediction callback: (x, t) -> eps_hat.
using PredictFn =
    std::function<std::vector<double>(const std::vector<double>&, int)>;

// Full reverse chain from x_T ~ N(0, I); final output clamped to [0,1].
std::vector<double> sample(const PredictFn& predict, const NoiseSchedule& sched,
                           int d_img, Rng& rng);

// Algebraic one-shot denoise: x0_hat = (xt - sqrt(1-abar_t) eps_hat)/sqrt(abar_t).
std::vector<double> denoise_estimate(const std::vector<double>& xt,
                                     const std::vector<double>& eps_hat, int t,
                                     const NoiseSchedule& sched);

}  // namespace lgrad
