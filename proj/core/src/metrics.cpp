#include "lgrad/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace lgrad {

namespace {

void check_set(const SampleSet& s, const char* name) {
    if (s.embeddings.empty()) {
        throw std::invalid_argument(std::string(name) + " is empty");
    }
    const std::size_t d = s.embeddings[0].size();
    for (const auto& e : s.embeddings) {
        if (e.size() != d) {
            throw std::invalid_argument(std::string(name) +
                                        " has embeddings of unequal length");
        }
    }
}

Eigen::MatrixXd as_matrix(const SampleSet& s) {
    const int n = static_cast<int>(s.embeddings.size());
    const int d = static_cast<int>(s.embeddings[0].size());
    Eigen::MatrixXd m(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) m(i, j) = s.embeddings[i][j];
    }
    return m;
}

// Symmetric PSD square root; negative eigenvalues clamped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) {
        throw std::runtime_error("eigendecomposition failed");
    }
    if (es.eigenvalues().minCoeff() < -1e-8) {
        throw std::runtime_error("matrix is not PSD within tolerance");
    }
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double diversity(const SampleSet& s) {
    check_set(s, "sample set");
    const int n = static_cast<int>(s.embeddings.size());
    if (n < 2) throw std::invalid_argument("diversity needs >= 2 embeddings");
    double sum = 0.0;
    int pairs = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < s.embeddings[i].size(); ++k) {
                const double d = s.embeddings[i][k] - s.embeddings[j][k];
                d2 += d * d;
            }
            sum += std::sqrt(d2);
            ++pairs;
        }
    }
    return sum / pairs;
}

double frechet_distance(const SampleSet& a, const SampleSet& b) {
    check_set(a, "set a");
    check_set(b, "set b");
    if (a.embeddings[0].size() != b.embeddings[0].size()) {
        throw std::invalid_argument("sets have different embedding dimensions");
    }
    const Eigen::MatrixXd ma = as_matrix(a);
    const Eigen::MatrixXd mb = as_matrix(b);
    const int d = static_cast<int>(ma.cols());
    const int na = static_cast<int>(ma.rows());
    const int nb = static_cast<int>(mb.rows());

    const Eigen::VectorXd mu_a = ma.colwise().mean();
    const Eigen::VectorXd mu_b = mb.colwise().mean();
    const double mean_term = (mu_a - mu_b).squaredNorm();

    const bool diagonal = na <= d || nb <= d;
    if (diagonal) {
        // Full covariance is singular at this sample count.
        double trace = 0.0;
        for (int k = 0; k < d; ++k) {
            double va = 0.0, vb = 0.0;
            for (int i = 0; i < na; ++i) {
                const double dd = ma(i, k) - mu_a(k);
                va += dd * dd;
            }
            for (int i = 0; i < nb; ++i) {
                const double dd = mb(i, k) - mu_b(k);
                vb += dd * dd;
            }
            va /= std::max(1, na - 1);
            vb /= std::max(1, nb - 1);
            trace += va + vb - 2.0 * std::sqrt(va * vb);
        }
        return mean_term + trace;
    }

    const Eigen::MatrixXd ca =
        (ma.rowwise() - mu_a.transpose()).transpose() *
        (ma.rowwise() - mu_a.transpose()) / (na - 1);
    const Eigen::MatrixXd cb =
        (mb.rowwise() - mu_b.transpose()).transpose() *
        (mb.rowwise() - mu_b.transpose()) / (nb - 1);

    const Eigen::MatrixXd sa = psd_sqrt(ca);
    const Eigen::MatrixXd cross = psd_sqrt(sa * cb * sa);
    const double trace = ca.trace() + cb.trace() - 2.0 * cross.trace();
    return mean_term + trace;
}

double reconstruction_error(const std::vector<double>& x_hat,
                            const std::vector<double>& x_ref) {
    if (x_hat.size() != x_ref.size()) {
        throw std::invalid_argument("length mismatch");
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < x_hat.size(); ++i) {
        const double d = x_hat[i] - x_ref[i];
        mse += d * d;
    }
    return mse / static_cast<double>(x_hat.size());
}

}  // namespace lgrad
