#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgrad/agent_spec.hpp"
#include "lgrad/graph.hpp"
#include "lgrad/meta.hpp"

namespace lgrad {

// Configuration errors map to CLI exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AgentConfig {
    AgentSpec spec;
    int epochs = 2000;
    double lr = 0.05;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    bool seed_set = false;

    struct {
        int n_per_class = 8;
        int d_side = 8;
    } dataset;

    std::vector<AgentConfig> agents;

    struct {
        int T = 50;
        double beta_start = 1e-4;
        double beta_end = 0.02;
    } schedule;

    struct {
        GraphMode mode = GraphMode::PER_SAMPLE;
        double tau = 0.01;
        double sigma = 0.25;
    } graph;

    MetaTrainConfig meta;

    struct {
        int n_generated = 16;
        int seeds_for_trends = 5;
    } eval;
};

// Four heterogeneous default agents (wide/deep/skip/dropout spread).
ExperimentConfig default_config();

// Strict key-value parser: [section] headers, key = value lines,
// '#' comments. Unknown sections or keys are hard errors.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin = "<config>");

}  // namespace lgrad
