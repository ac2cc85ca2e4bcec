#pragma once

#include <optional>
#include <vector>

namespace lgrad {

struct SampleSet {
    std::vector<std::vector<double>> embeddings;  // equal lengths, non-empty
    std::optional<int> label;
};

// Mean Euclidean distance over all unordered pairs.
double diversity(const SampleSet& s);

// Frechet distance between Gaussian fits of the two sets:
// ||mu_a - mu_b||^2 + Tr(Ca + Cb - 2 (Ca^1/2 Cb Ca^1/2)^1/2).
// Falls back to diagonal covariances when a set has no more samples
// than the feature dimension.
double frechet_distance(const SampleSet& a, const SampleSet& b);

// Mean squared error.
double reconstruction_error(const std::vector<double>& x_hat,
                            const std::vector<double>& x_ref);

}  // namespace lgrad
