#include "lgrad/meta.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lgrad/text_io.hpp"

namespace lgrad {

MetaModel make_meta_model(const std::vector<int>& layer_dims, double lambda,
                          double gamma, int k_mst, Rng& rng) {
    if (layer_dims.size() < 2) {
        throw std::invalid_argument("need at least one layer (two dims)");
    }
    if (lambda < 0.0 || gamma < 0.0) {
        throw std::invalid_argument("lambda and gamma must be >= 0");
    }
    if (k_mst < 1) throw std::invalid_argument("k_mst must be >= 1");
    MetaModel m;
    m.lambda = lambda;
    m.gamma = gamma;
    m.k_mst = k_mst;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        Eigen::MatrixXd w(layer_dims[l], layer_dims[l + 1]);
        const double scale = 1.0 / std::sqrt(static_cast<double>(layer_dims[l]));
        for (int r = 0; r < w.rows(); ++r) {
            for (int c = 0; c < w.cols(); ++c) w(r, c) = scale * rng.normal();
        }
        m.layer_weights.push_back(std::move(w));
    }
    m.readout_weight.resize(layer_dims.back());
    const double rs = 1.0 / std::sqrt(static_cast<double>(layer_dims.back()));
    for (int i = 0; i < m.readout_weight.size(); ++i) {
        m.readout_weight(i) = rs * rng.normal();
    }
    m.readout_bias = 0.0;
    return m;
}

Eigen::MatrixXd normalize_adjacency(const Eigen::MatrixXd& A) {
    const int n = static_cast<int>(A.rows());
    if (A.cols() != n) throw std::invalid_argument("adjacency must be square");
    if (!A.isApprox(A.transpose(), 1e-12)) {
        throw std::invalid_argument("adjacency must be symmetric");
    }
    if (A.minCoeff() < 0.0) {
        throw std::invalid_argument("adjacency weights must be non-negative");
    }
    Eigen::VectorXd deg = A.rowwise().sum();
    for (int i = 0; i < n; ++i) {
        if (!(deg(i) > 0.0)) {
            throw std::invalid_argument("node " + std::to_string(i) +
                                        " has zero degree; cannot normalize");
        }
    }
    const Eigen::VectorXd inv_sqrt = deg.cwiseSqrt().cwiseInverse();
    return inv_sqrt.asDiagonal() * A * inv_sqrt.asDiagonal();
}

Eigen::MatrixXd node_features(const std::vector<AgentSpec>& specs,
                              const std::vector<double>& mean_losses,
                              const std::vector<std::vector<double>>& predictions) {
    const int n = static_cast<int>(specs.size());
    if (static_cast<int>(mean_losses.size()) != n ||
        static_cast<int>(predictions.size()) != n) {
        throw std::invalid_argument("feature input lengths disagree");
    }
    Eigen::MatrixXd H0(n, kFeatureDim);
    for (int i = 0; i < n; ++i) {
        for (int b = 0; b < kNumTraits; ++b) {
            H0(i, b) = static_cast<double>(specs[i].bit(b));
        }
        H0(i, kNumTraits) = mean_losses[i];
        double hist[8] = {};
        for (double v : predictions[i]) {
            const int bin = std::clamp(static_cast<int>(v * 8.0), 0, 7);
            hist[bin] += 1.0;
        }
        const double denom = std::max<std::size_t>(1, predictions[i].size());
        for (int b = 0; b < 8; ++b) {
            H0(i, kNumTraits + 1 + b) = hist[b] / denom;
        }
    }
    if (!H0.allFinite()) throw std::invalid_argument("non-finite node features");
    return H0;
}

GcnnCache gcnn_forward(const Eigen::MatrixXd& Mn, const Eigen::MatrixXd& H0,
                       const MetaModel& model) {
    if (H0.cols() != model.layer_weights.front().rows()) {
        throw std::invalid_argument("feature dimension does not match W^(0)");
    }
    if (Mn.rows() != H0.rows() || Mn.cols() != H0.rows()) {
        throw std::invalid_argument("adjacency/feature shape mismatch");
    }
    GcnnCache cache;
    cache.Mn = Mn;
    cache.H.push_back(H0);
    for (const auto& W : model.layer_weights) {
        if (cache.H.back().cols() != W.rows()) {
            throw std::invalid_argument("layer dimension chain broken");
        }
        Eigen::MatrixXd Z = Mn * cache.H.back() * W;
        cache.Z.push_back(Z);
        cache.H.push_back(Z.cwiseMax(0.0));
    }
    return cache;
}

Eigen::VectorXd head_weights(const Eigen::MatrixXd& HL, const MetaModel& model) {
    if (HL.cols() != model.readout_weight.size()) {
        throw std::invalid_argument("readout dimension mismatch");
    }
    Eigen::VectorXd s = HL * model.readout_weight;
    s.array() += model.readout_bias;
    const double m = s.maxCoeff();
    Eigen::VectorXd e = (s.array() - m).exp();
    return e / e.sum();
}

std::vector<double> blend(const Eigen::VectorXd& pi,
                          const std::vector<std::vector<double>>& predictions) {
    if (pi.size() != static_cast<Eigen::Index>(predictions.size())) {
        throw std::invalid_argument("pi length does not match prediction count");
    }
    const std::size_t d = predictions.front().size();
    std::vector<double> out(d, 0.0);
    for (Eigen::Index i = 0; i < pi.size(); ++i) {
        if (predictions[i].size() != d) {
            throw std::invalid_argument("prediction length mismatch");
        }
        for (std::size_t k = 0; k < d; ++k) out[k] += pi(i) * predictions[i][k];
    }
    return out;
}

double cross_entropy(const std::vector<double>& x_hat,
                     const std::vector<double>& x_ref) {
    if (x_hat.size() != x_ref.size()) {
        throw std::invalid_argument("length mismatch");
    }
    double c = 0.0;
    for (std::size_t k = 0; k < x_hat.size(); ++k) {
        if (!std::isfinite(x_hat[k]) || !std::isfinite(x_ref[k])) {
            throw std::invalid_argument("non-finite input to cross_entropy");
        }
        const double p = std::clamp(x_hat[k], kProbClamp, 1.0 - kProbClamp);
        c -= x_ref[k] * std::log(p) + (1.0 - x_ref[k]) * std::log(1.0 - p);
    }
    return c / static_cast<double>(x_hat.size());
}

namespace {

double sym_kl_bernoulli(double p, double q) {
    return (p - q) * (std::log(p / q) - std::log((1.0 - p) / (1.0 - q)));
}

}  // namespace

double kl_diversity(const std::vector<std::vector<double>>& predictions,
                    Eigen::MatrixXd* pairwise) {
    const int n = static_cast<int>(predictions.size());
    if (n < 2) throw std::invalid_argument("diversity needs >= 2 agents");
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const auto& a = predictions[i];
            const auto& b = predictions[j];
            if (a.size() != b.size()) {
                throw std::invalid_argument("prediction length mismatch");
            }
            double kl = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) {
                const double p = std::clamp(a[k], kProbClamp, 1.0 - kProbClamp);
                const double q = std::clamp(b[k], kProbClamp, 1.0 - kProbClamp);
                kl += sym_kl_bernoulli(p, q);
            }
            kl /= static_cast<double>(a.size());
            K(i, j) = K(j, i) = kl;
            sum += kl;
        }
    }
    if (pairwise) *pairwise = K;
    return -2.0 * sum / (static_cast<double>(n) * (n - 1));
}

double laplacian_loss(const Eigen::MatrixXd& A, const Eigen::MatrixXd& H) {
    if (A.rows() != H.rows() || A.cols() != H.rows()) {
        throw std::invalid_argument("adjacency/embedding shape mismatch");
    }
    double sum = 0.0;
    for (int i = 0; i < A.rows(); ++i) {
        for (int j = 0; j < A.cols(); ++j) {
            if (A(i, j) != 0.0) {
                sum += A(i, j) * (H.row(i) - H.row(j)).squaredNorm();
            }
        }
    }
    return 0.5 * sum;
}

LossBreakdown composite_loss(double C, double D, double L_laplace,
                             double lambda, double gamma) {
    if (lambda < 0.0 || gamma < 0.0) {
        throw std::invalid_argument("lambda and gamma must be >= 0");
    }
    LossBreakdown b;
    b.C = C;
    b.D = D;
    b.L_laplace = L_laplace;
    b.total = C + lambda * D + gamma * L_laplace;
    return b;
}

MetaForward meta_forward(const MetaModel& model, const Eigen::MatrixXd& A,
                         const Eigen::MatrixXd& H0,
                         const std::vector<std::vector<double>>& predictions,
                         const std::vector<double>& x_ref) {
    MetaForward f;
    f.cache = gcnn_forward(normalize_adjacency(A), H0, model);
    const Eigen::MatrixXd& HL = f.cache.H.back();
    f.scores = HL * model.readout_weight;
    f.scores.array() += model.readout_bias;
    f.pi = head_weights(HL, model);
    f.blended = blend(f.pi, predictions);

    const double C = cross_entropy(f.blended, x_ref);
    double D = kl_diversity(predictions, &f.symkl);
    if (model.diversity_grad == DiversityGradMode::Weighted) {
        // Diversity of the pi-weighted pairs; carries gradient via pi.
        double s = 0.0;
        const int n = static_cast<int>(predictions.size());
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                s += f.pi(i) * f.pi(j) * f.symkl(i, j);
            }
        }
        D = -2.0 * s;
    }
    const double L_lap = laplacian_loss(A, HL);
    f.loss = composite_loss(C, D, L_lap, model.lambda, model.gamma);
    return f;
}

void MetaGradients::add_scaled(const MetaGradients& other, double scale) {
    if (layer_weights.empty()) {
        for (const auto& w : other.layer_weights) {
            layer_weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        }
        readout_weight = Eigen::VectorXd::Zero(other.readout_weight.size());
        readout_bias = 0.0;
    }
    for (std::size_t l = 0; l < layer_weights.size(); ++l) {
        layer_weights[l] += scale * other.layer_weights[l];
    }
    readout_weight += scale * other.readout_weight;
    readout_bias += scale * other.readout_bias;
}

MetaGradients meta_backward(const MetaModel& model, const MetaForward& fwd,
                            const Eigen::MatrixXd& A,
                            const std::vector<std::vector<double>>& predictions,
                            const std::vector<double>& x_ref) {
    const int n = static_cast<int>(predictions.size());
    const int d = static_cast<int>(x_ref.size());
    const Eigen::MatrixXd& HL = fwd.cache.H.back();

    // dC/d(blend)
    Eigen::VectorXd dblend(d);
    for (int k = 0; k < d; ++k) {
        const double p = std::clamp(fwd.blended[k], kProbClamp, 1.0 - kProbClamp);
        dblend(k) = (p - x_ref[k]) / (p * (1.0 - p)) / d;
    }

    // dC/dpi, plus the diversity path when it flows through pi.
    Eigen::VectorXd gpi(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += dblend(k) * predictions[i][k];
        gpi(i) = s;
    }
    if (model.diversity_grad == DiversityGradMode::Weighted) {
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j != i) s += fwd.pi(j) * fwd.symkl(i, j);
            }
            gpi(i) += model.lambda * (-2.0 * s);
        }
    }

    // Softmax jacobian: ds = pi .* (gpi - pi . gpi)
    const double dot = fwd.pi.dot(gpi);
    const Eigen::VectorXd ds = (fwd.pi.array() * (gpi.array() - dot)).matrix();

    MetaGradients g;
    g.readout_weight = HL.transpose() * ds;
    g.readout_bias = ds.sum();

    // dL/dHL: readout path plus the laplacian smoothness term.
    Eigen::MatrixXd GH = ds * model.readout_weight.transpose();
    const Eigen::VectorXd deg = A.rowwise().sum();
    GH += model.gamma * 2.0 *
          (deg.asDiagonal() * HL - A * HL);  // grad of 1/2 sum A_ij ||h_i-h_j||^2

    const int L = model.n_layers();
    g.layer_weights.resize(L);
    for (int l = L - 1; l >= 0; --l) {
        const Eigen::MatrixXd GZ =
            ((fwd.cache.Z[l].array() > 0.0).cast<double>() * GH.array()).matrix();
        const Eigen::MatrixXd MH = fwd.cache.Mn * fwd.cache.H[l];
        g.layer_weights[l] = MH.transpose() * GZ;
        if (l > 0) {
            GH = fwd.cache.Mn * GZ * model.layer_weights[l].transpose();
        }
    }
    return g;
}

MetaContext make_meta_context(const KnowledgeBase& kb, GraphMode mode,
                              const GraphParams& params) {
    MetaContext ctx;
    ctx.mode = mode;
    ctx.sigma = params.sigma;
    for (const auto& rec : kb.records) {
        ctx.specs.push_back(rec.spec);
        const auto& hist = rec.loss_history;
        const std::size_t take = std::min<std::size_t>(10, hist.size());
        double mean = 0.0;
        for (std::size_t i = hist.size() - take; i < hist.size(); ++i) {
            mean += hist[i];
        }
        ctx.mean_losses.push_back(take ? mean / take : 0.0);
    }
    if (mode != GraphMode::PER_SAMPLE) {
        const ModelGraph g = build_graph(kb, mode, params);
        const SpanningTree t = maximum_spanning_tree(g);
        ctx.fixed_adjacency = Eigen::MatrixXd::Zero(t.n, t.n);
        for (int i = 0; i < t.n; ++i) {
            for (int j = 0; j < t.n; ++j) {
                ctx.fixed_adjacency(i, j) = t.adjacency[i][j];
            }
        }
    }
    return ctx;
}

namespace {

std::vector<double> clamp_unit(std::vector<double> v) {
    for (double& x : v) x = std::clamp(x, kProbClamp, 1.0 - kProbClamp);
    return v;
}

Eigen::MatrixXd tree_adjacency(const SpanningTree& t) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(t.n, t.n);
    for (int i = 0; i < t.n; ++i) {
        for (int j = 0; j < t.n; ++j) A(i, j) = t.adjacency[i][j];
    }
    return A;
}

}  // namespace

MetaModel train_meta(const MetaContext& ctx, const std::vector<ToyAgent>& agents,
                     const ToyDataset& dataset, const NoiseSchedule& sched,
                     const MetaTrainConfig& cfg, Rng& rng,
                     std::vector<LossBreakdown>* history) {
    const int n = static_cast<int>(agents.size());
    if (n < 2) throw std::invalid_argument("need at least 2 agents");
    if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(cfg.eta > 0.0)) throw std::invalid_argument("eta must be > 0");

    MetaModel model = make_meta_model(cfg.layer_dims, cfg.lambda, cfg.gamma,
                                      cfg.k_mst, rng);
    model.diversity_grad = cfg.diversity_grad;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        LossBreakdown mean;
        for (std::size_t s = 0; s < dataset.samples.size(); ++s) {
            const auto& sample = dataset.samples[s];
            const int t = 1 + static_cast<int>(rng.uniform_int(sched.T));
            auto [xt, eps] = forward_noise(sample.image, t, sched, rng);

            std::vector<std::vector<double>> preds(n);
            for (int i = 0; i < n; ++i) {
                preds[i] = clamp_unit(denoise_estimate(
                    xt, predict_noise(agents[i], xt, t, sample.label), t, sched));
            }

            std::vector<Eigen::MatrixXd> adjacencies;
            if (ctx.mode == GraphMode::PER_SAMPLE) {
                const ModelGraph g = build_per_sample_graph(preds, ctx.sigma);
                for (const auto& tree : k_maximum_spanning_trees(g, cfg.k_mst)) {
                    adjacencies.push_back(tree_adjacency(tree));
                }
            } else {
                adjacencies.push_back(ctx.fixed_adjacency);
            }

            const Eigen::MatrixXd H0 =
                node_features(ctx.specs, ctx.mean_losses, preds);

            MetaGradients acc;
            LossBreakdown loss;
            const double inv_k = 1.0 / static_cast<double>(adjacencies.size());
            for (const auto& A : adjacencies) {
                const MetaForward fwd =
                    meta_forward(model, A, H0, preds, sample.image);
                acc.add_scaled(meta_backward(model, fwd, A, preds, sample.image),
                               inv_k);
                loss.C += inv_k * fwd.loss.C;
                loss.D += inv_k * fwd.loss.D;
                loss.L_laplace += inv_k * fwd.loss.L_laplace;
                loss.total += inv_k * fwd.loss.total;
            }
            if (!std::isfinite(loss.total)) {
                throw std::runtime_error("non-finite loss at epoch " +
                                         std::to_string(epoch) + ", sample " +
                                         std::to_string(s));
            }

            for (int l = 0; l < model.n_layers(); ++l) {
                model.layer_weights[l] -= cfg.eta * acc.layer_weights[l];
            }
            model.readout_weight -= cfg.eta * acc.readout_weight;
            model.readout_bias -= cfg.eta * acc.readout_bias;

            mean.C += loss.C;
            mean.D += loss.D;
            mean.L_laplace += loss.L_laplace;
            mean.total += loss.total;
        }
        const double inv = 1.0 / static_cast<double>(dataset.samples.size());
        mean.C *= inv;
        mean.D *= inv;
        mean.L_laplace *= inv;
        mean.total *= inv;
        if (history) history->push_back(mean);
    }
    return model;
}

std::vector<double> generate(const MetaModel& model, const MetaContext& ctx,
                             const std::vector<ToyAgent>& agents, int label,
                             const NoiseSchedule& sched, Rng& rng) {
    const int n = static_cast<int>(agents.size());
    if (n == 0) throw std::invalid_argument("empty agent pool");
    const int d_img = agents[0].d_img;

    std::vector<double> x(d_img);
    for (double& v : x) v = rng.normal();

    for (int t = sched.T; t >= 1; --t) {
        std::vector<std::vector<double>> eps_hats(n);
        for (int i = 0; i < n; ++i) {
            eps_hats[i] = predict_noise(agents[i], x, t, label);
        }
        std::vector<double> blended_eps;
        if (n == 1) {
            blended_eps = eps_hats[0];  // degenerate pool: pi = [1]
        } else {
            std::vector<std::vector<double>> preds(n);
            for (int i = 0; i < n; ++i) {
                preds[i] = clamp_unit(denoise_estimate(x, eps_hats[i], t, sched));
            }
            Eigen::MatrixXd A;
            if (ctx.mode == GraphMode::PER_SAMPLE) {
                A = tree_adjacency(maximum_spanning_tree(
                    build_per_sample_graph(preds, ctx.sigma)));
            } else {
                A = ctx.fixed_adjacency;
            }
            const Eigen::MatrixXd H0 =
                node_features(ctx.specs, ctx.mean_losses, preds);
            const GcnnCache cache =
                gcnn_forward(normalize_adjacency(A), H0, model);
            const Eigen::VectorXd pi = head_weights(cache.H.back(), model);
            blended_eps = blend(pi, eps_hats);
        }
        x = reverse_step(x, blended_eps, t, sched, rng);
    }
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
    return x;
}

void save_meta(const MetaModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "LGRAD-M v1\n";
    out << "layers " << model.n_layers() << '\n';
    out << "dims";
    out << ' ' << model.layer_weights[0].rows();
    for (const auto& w : model.layer_weights) out << ' ' << w.cols();
    out << '\n';
    out << "hyper " << to_hexfloat(model.lambda) << ' ' << to_hexfloat(model.gamma)
        << ' ' << model.k_mst << ' '
        << (model.diversity_grad == DiversityGradMode::Weighted ? "weighted"
                                                                : "literal")
        << '\n';
    for (int l = 0; l < model.n_layers(); ++l) {
        const auto& w = model.layer_weights[l];
        for (int r = 0; r < w.rows(); ++r) {
            out << "w " << l << ' ' << r;
            for (int c = 0; c < w.cols(); ++c) out << ' ' << to_hexfloat(w(r, c));
            out << '\n';
        }
    }
    out << "readout";
    for (int i = 0; i < model.readout_weight.size(); ++i) {
        out << ' ' << to_hexfloat(model.readout_weight(i));
    }
    out << '\n';
    out << "bias " << to_hexfloat(model.readout_bias) << '\n';
}

MetaModel load_meta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    auto next = [&](const char* what) -> std::string {
        if (!std::getline(in, line)) {
            throw std::runtime_error(path + ": parse error: missing " +
                                     std::string(what));
        }
        return line;
    };
    if (next("header") != "LGRAD-M v1") {
        throw std::runtime_error(path + ":1: parse error: expected LGRAD-M v1");
    }
    MetaModel m;
    int L = 0;
    {
        std::istringstream ls(next("layer count"));
        std::string kw;
        if (!(ls >> kw >> L) || kw != "layers" || L < 1) {
            throw std::runtime_error(path + ": parse error: bad layers line");
        }
    }
    std::vector<int> dims(L + 1);
    {
        std::istringstream ls(next("dims"));
        std::string kw;
        ls >> kw;
        for (int i = 0; i <= L; ++i) {
            if (!(ls >> dims[i])) {
                throw std::runtime_error(path + ": parse error: bad dims line");
            }
        }
    }
    {
        std::istringstream ls(next("hyper"));
        std::string kw, lam, gam, div;
        if (!(ls >> kw >> lam >> gam >> m.k_mst >> div) || kw != "hyper") {
            throw std::runtime_error(path + ": parse error: bad hyper line");
        }
        m.lambda = parse_double(lam);
        m.gamma = parse_double(gam);
        m.diversity_grad = div == "weighted" ? DiversityGradMode::Weighted
                                             : DiversityGradMode::Literal;
    }
    for (int l = 0; l < L; ++l) {
        m.layer_weights.emplace_back(dims[l], dims[l + 1]);
    }
    for (int l = 0; l < L; ++l) {
        for (int r = 0; r < dims[l]; ++r) {
            std::istringstream ls(next("weight row"));
            std::string kw, num;
            int ll = 0, rr = 0;
            if (!(ls >> kw >> ll >> rr) || kw != "w" || ll != l || rr != r) {
                throw std::runtime_error(path + ": parse error: bad weight row");
            }
            for (int c = 0; c < dims[l + 1]; ++c) {
                if (!(ls >> num)) {
                    throw std::runtime_error(path +
                                             ": parse error: short weight row");
                }
                m.layer_weights[l](r, c) = parse_double(num);
            }
        }
    }
    {
        std::istringstream ls(next("readout"));
        std::string kw, num;
        ls >> kw;
        m.readout_weight.resize(dims[L]);
        for (int i = 0; i < dims[L]; ++i) {
            if (!(ls >> num)) {
                throw std::runtime_error(path + ": parse error: short readout");
            }
            m.readout_weight(i) = parse_double(num);
        }
    }
    {
        std::istringstream ls(next("bias"));
        std::string kw, num;
        if (!(ls >> kw >> num) || kw != "bias") {
            throw std::runtime_error(path + ": parse error: bad bias line");
        }
        m.readout_bias = parse_double(num);
    }
    return m;
}

}  // namespace lgrad
