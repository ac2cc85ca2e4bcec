#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lgrad/agent_spec.hpp"

namespace lgrad {

// One agent's identity, spec, training stats, and cached per-sample
// outputs on the training set.
struct KnowledgeRecord {
    int agent_id = -1;
    AgentSpec spec;
    std::vector<std::vector<double>> outputs;  // indexed by sample_id
    std::vector<double> sample_errors;         // per-sample reconstruction MSE
    std::vector<double> loss_history;

    bool operator==(const KnowledgeRecord&) const = default;
};

// Durable store of agent records; the substrate the model graph is
// built from. Immutable once saved/loaded.
struct KnowledgeBase {
    std::vector<KnowledgeRecord> records;
    std::uint64_t dataset_fingerprint = 0;
    int d_img = 0;

    bool operator==(const KnowledgeBase&) const = default;
    int n_samples() const {
        return records.empty() ? 0 : static_cast<int>(records[0].outputs.size());
    }
};

// FNV-1a over raw sample bytes in sample_id order.
std::uint64_t fnv1a64(const unsigned char* data, std::size_t len,
                      std::uint64_t h = 0xCBF29CE484222325ULL);
std::uint64_t dataset_fingerprint(const std::vector<std::vector<double>>& images);

// Appends a record and returns the fresh sequential agent_id.
int record_agent(KnowledgeBase& kb, const AgentSpec& spec,
                 std::vector<std::vector<double>> outputs,
                 std::vector<double> errors,
                 std::vector<double> loss_history = {});

// LGRAD-KB v1 text format; load(save(kb)) is bit-exact.
void save_kb(const KnowledgeBase& kb, const std::string& path);
KnowledgeBase load_kb(const std::string& path);

}  // namespace lgrad
