#include "lgrad/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lgrad/knowledge_base.hpp"
#include "lgrad/text_io.hpp"

namespace lgrad {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw std::invalid_argument("T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw std::invalid_argument("require 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        s.beta[i] = T == 1 ? beta_start
                           : beta_start + (beta_end - beta_start) * i / (T - 1);
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

std::uint64_t ToyDataset::fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& s : samples) {
        h = fnv1a64(reinterpret_cast<const unsigned char*>(s.image.data()),
                    s.image.size() * sizeof(double), h);
    }
    return h;
}

ToyDataset make_sprite_dataset(int n_per_class, int d_side, Rng& rng) {
    if (d_side < 8) throw std::invalid_argument("d_side must be >= 8");
    ToyDataset ds;
    ds.n_classes = 4;
    ds.d_img = d_side * d_side;
    const double c = (d_side - 1) / 2.0;
    int id = 0;
    for (int cls = 0; cls < 4; ++cls) {
        for (int k = 0; k < n_per_class; ++k) {
            const int dx = static_cast<int>(rng.uniform_int(3)) - 1;
            const int dy = static_cast<int>(rng.uniform_int(3)) - 1;
            const double intensity = 0.9 + (rng.uniform() * 0.2 - 0.1);
            ToySample s;
            s.sample_id = id++;
            s.label = cls;
            s.image.assign(ds.d_img, 0.0);
            const double cx = c + dx, cy = c + dy;
            for (int y = 0; y < d_side; ++y) {
                for (int x = 0; x < d_side; ++x) {
                    bool on = false;
                    switch (cls) {
                        case 0: {  // filled circle
                            const double r = 0.3 * d_side;
                            const double ddx = x - cx, ddy = y - cy;
                            on = ddx * ddx + ddy * ddy <= r * r;
                            break;
                        }
                        case 1: {  // filled square
                            const double h = d_side / 4.0;
                            on = std::abs(x - cx) <= h && std::abs(y - cy) <= h;
                            break;
                        }
                        case 2: {  // plus-cross
                            const double b = std::max(1.0, d_side / 8.0);
                            on = std::abs(x - cx) <= b || std::abs(y - cy) <= b;
                            break;
                        }
                        case 3:  // diagonal stripes, phase jittered
                            on = ((x + y + dx + 400) % 4) < 2;
                            break;
                    }
                    if (on) {
                        s.image[y * d_side + x] =
                            std::clamp(intensity, 0.0, 1.0);
                    }
                }
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

namespace {

std::string to_hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void save_dataset(const ToyDataset& ds, const std::string& path) {
    std::ostringstream body;
    body << "LGRAD-DS v1 " << to_hex64(ds.fingerprint()) << ' '
         << ds.samples.size() << ' ' << ds.d_img << ' ' << ds.n_classes << '\n';
    for (const auto& s : ds.samples) {
        body << "img " << s.sample_id << ' ' << s.label;
        for (double v : s.image) body << ' ' << to_hexfloat(v);
        body << '\n';
    }
    const std::string text = body.str();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text << "check "
        << to_hex64(fnv1a64(reinterpret_cast<const unsigned char*>(text.data()),
                            text.size()))
        << '\n';
}

ToyDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ":1: empty file");
    std::istringstream header(line);
    std::string magic, ver, fp;
    ToyDataset ds;
    std::size_t n = 0;
    if (!(header >> magic >> ver >> fp >> n >> ds.d_img >> ds.n_classes) ||
        magic != "LGRAD-DS" || ver != "v1") {
        throw std::runtime_error(path + ":1: parse error: expected LGRAD-DS v1");
    }
    std::size_t lineno = 1;
    for (std::size_t i = 0; i < n; ++i) {
        ++lineno;
        if (!std::getline(in, line)) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": parse error: truncated file");
        }
        std::istringstream ls(line);
        std::string kw, num;
        ToySample s;
        if (!(ls >> kw >> s.sample_id >> s.label) || kw != "img") {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": parse error: expected img line");
        }
        while (ls >> num) s.image.push_back(parse_double(num));
        if (s.image.size() != static_cast<std::size_t>(ds.d_img)) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": parse error: wrong image length");
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

int ToyAgent::param_count() const {
    const int w = hidden_width();
    const int depth = hidden_depth();
    int n = w * input_dim() + w;               // first hidden layer
    if (depth == 2) n += w * w + w;            // second hidden layer
    n += d_img * w + d_img;                    // output layer
    if (has_skip()) n += d_img;                // elementwise residual gain
    return n;
}

ToyAgent make_agent(const AgentSpec& spec, int d_img, int n_classes) {
    ToyAgent a;
    a.spec = spec;
    a.d_img = d_img;
    a.conditioning_dim = n_classes;
    a.parameters.assign(a.param_count(), 0.0);
    return a;
}

std::pair<std::vector<double>, std::vector<double>> forward_noise(
    const std::vector<double>& x0, int t, const NoiseSchedule& sched, Rng& rng) {
    if (t < 1 || t > sched.T) throw std::invalid_argument("t out of range");
    const double ab = sched.alpha_bar[t - 1];
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    std::vector<double> xt(x0.size()), eps(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        eps[i] = rng.normal();
        xt[i] = sa * x0[i] + sb * eps[i];
    }
    return {std::move(xt), std::move(eps)};
}

namespace {

struct MlpLayout {
    int w, depth, d_in, d_img;
    int w1, b1, w2, b2, wo, bo, g;  // offsets into the flat parameter vector
};

MlpLayout layout_of(const ToyAgent& a) {
    MlpLayout L;
    L.w = a.hidden_width();
    L.depth = a.hidden_depth();
    L.d_in = a.input_dim();
    L.d_img = a.d_img;
    int off = 0;
    L.w1 = off; off += L.w * L.d_in;
    L.b1 = off; off += L.w;
    if (L.depth == 2) {
        L.w2 = off; off += L.w * L.w;
        L.b2 = off; off += L.w;
    } else {
        L.w2 = L.b2 = -1;
    }
    L.wo = off; off += L.d_img * L.w;
    L.bo = off; off += L.d_img;
    L.g = a.has_skip() ? off : -1;
    return L;
}

std::vector<double> build_input(const ToyAgent& a, const std::vector<double>& xt,
                                int t, int label) {
    if (label < 0 || label >= a.conditioning_dim) {
        throw std::invalid_argument("label out of range");
    }
    if (static_cast<int>(xt.size()) != a.d_img) {
        throw std::invalid_argument("xt length does not match d_img");
    }
    std::vector<double> u;
    u.reserve(a.input_dim());
    u.insert(u.end(), xt.begin(), xt.end());
    // Step feature is t scaled to (0, 1]; agents are trained with the
    // same normalization (t / 64 keeps it schedule independent).
    u.push_back(static_cast<double>(t) / 64.0);
    for (int c = 0; c < a.conditioning_dim; ++c) {
        u.push_back(c == label ? 1.0 : 0.0);
    }
    return u;
}

struct FullForward {
    std::vector<double> u;
    std::vector<std::vector<double>> h;      // masked activations per layer
    std::vector<std::vector<double>> h_raw;  // tanh outputs before mask
    std::vector<double> out;
};

FullForward run_forward(const ToyAgent& a, const MlpLayout& L,
                        const std::vector<double>& xt, int t, int label,
                        const std::vector<std::uint8_t>* mask) {
    FullForward f;
    f.u = build_input(a, xt, t, label);
    const double* p = a.parameters.data();

    std::vector<double> cur = f.u;
    for (int layer = 0; layer < L.depth; ++layer) {
        const int in_dim = layer == 0 ? L.d_in : L.w;
        const int woff = layer == 0 ? L.w1 : L.w2;
        const int boff = layer == 0 ? L.b1 : L.b2;
        std::vector<double> h(L.w), hm(L.w);
        for (int j = 0; j < L.w; ++j) {
            double z = p[boff + j];
            const double* row = p + woff + j * in_dim;
            for (int i = 0; i < in_dim; ++i) z += row[i] * cur[i];
            h[j] = std::tanh(z);
            const bool keep = mask == nullptr || (*mask)[layer * L.w + j] != 0;
            hm[j] = keep ? h[j] : 0.0;
        }
        f.h_raw.push_back(std::move(h));
        f.h.push_back(hm);
        cur = std::move(hm);
    }

    f.out.resize(L.d_img);
    const std::vector<double>& hl = f.h.back();
    for (int k = 0; k < L.d_img; ++k) {
        double z = p[L.bo + k];
        const double* row = p + L.wo + k * L.w;
        for (int i = 0; i < L.w; ++i) z += row[i] * hl[i];
        if (L.g >= 0) z += p[L.g + k] * xt[k];
        f.out[k] = z;
    }
    return f;
}

}  // namespace

std::vector<double> predict_noise(const ToyAgent& agent,
                                  const std::vector<double>& xt, int t,
                                  int label) {
    const MlpLayout L = layout_of(agent);
    return run_forward(agent, L, xt, t, label, nullptr).out;
}

LossGrad agent_loss_grad(const ToyAgent& agent, const std::vector<double>& xt,
                         int t, int label, const std::vector<double>& eps_target,
                         const std::vector<std::uint8_t>* dropout_mask) {
    const MlpLayout L = layout_of(agent);
    FullForward f = run_forward(agent, L, xt, t, label, dropout_mask);
    const int d = L.d_img;
    if (static_cast<int>(eps_target.size()) != d) {
        throw std::invalid_argument("eps target length mismatch");
    }

    LossGrad lg;
    lg.grad.assign(agent.parameters.size(), 0.0);
    std::vector<double> r(d);
    for (int k = 0; k < d; ++k) {
        const double diff = f.out[k] - eps_target[k];
        lg.loss += diff * diff;
        r[k] = 2.0 * diff / d;
    }
    lg.loss /= d;

    const double* p = agent.parameters.data();
    double* g = lg.grad.data();

    // Output layer.
    const std::vector<double>& hl = f.h.back();
    std::vector<double> dh(L.w, 0.0);
    for (int k = 0; k < d; ++k) {
        g[L.bo + k] = r[k];
        double* grow = g + L.wo + k * L.w;
        const double* prow = p + L.wo + k * L.w;
        for (int i = 0; i < L.w; ++i) {
            grow[i] = r[k] * hl[i];
            dh[i] += r[k] * prow[i];
        }
        if (L.g >= 0) g[L.g + k] = r[k] * xt[k];
    }

    // Hidden layers, last to first.
    for (int layer = L.depth - 1; layer >= 0; --layer) {
        const int in_dim = layer == 0 ? L.d_in : L.w;
        const int woff = layer == 0 ? L.w1 : L.w2;
        const int boff = layer == 0 ? L.b1 : L.b2;
        const std::vector<double>& in_vec = layer == 0 ? f.u : f.h[layer - 1];
        std::vector<double> dprev(in_dim, 0.0);
        for (int j = 0; j < L.w; ++j) {
            const bool keep = dropout_mask == nullptr ||
                              (*dropout_mask)[layer * L.w + j] != 0;
            const double hj = f.h_raw[layer][j];
            const double dz = keep ? dh[j] * (1.0 - hj * hj) : 0.0;
            g[boff + j] = dz;
            double* grow = g + woff + j * in_dim;
            const double* prow = p + woff + j * in_dim;
            for (int i = 0; i < in_dim; ++i) {
                grow[i] = dz * in_vec[i];
                dprev[i] += dz * prow[i];
            }
        }
        if (layer > 0) dh = std::move(dprev);
    }
    return lg;
}

ToyAgent train_agent(const ToyDataset& dataset, const AgentSpec& spec,
                     int epochs, double lr, Rng& rng,
                     std::vector<double>* loss_history,
                     const NoiseSchedule* sched) {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    NoiseSchedule default_sched;
    if (sched == nullptr) {
        default_sched = make_schedule(50, 1e-4, 0.02);
        sched = &default_sched;
    }

    ToyAgent agent = make_agent(spec, dataset.d_img, dataset.n_classes);
    for (double& v : agent.parameters) v = 0.05 * rng.normal();

    // Frozen noise draws make the objective a fixed finite sum. Each
    // agent concentrates most of its draws on a contiguous band of noise
    // levels chosen from its own stream, so a pool of agents ends up with
    // complementary strengths along the reverse chain; one draw per
    // sample stays uniform so every agent remains usable at every step.
    constexpr int kDraws = 4;
    const int band_w = std::max(1, sched->T / 2);
    const int band_lo =
        1 + static_cast<int>(rng.uniform_int(sched->T - band_w + 1));
    struct Draw {
        int t;
        std::vector<double> xt, eps;
    };
    std::vector<std::vector<Draw>> draws(dataset.samples.size());
    for (std::size_t s = 0; s < dataset.samples.size(); ++s) {
        for (int k = 0; k < kDraws; ++k) {
            const int t =
                k + 1 < kDraws
                    ? band_lo + static_cast<int>(rng.uniform_int(band_w))
                    : 1 + static_cast<int>(rng.uniform_int(sched->T));
            auto [xt, eps] = forward_noise(dataset.samples[s].image, t, *sched, rng);
            draws[s].push_back({t, std::move(xt), std::move(eps)});
        }
    }

    const int w = agent.hidden_width();
    const int n_hidden = w * agent.hidden_depth();
    const double total = static_cast<double>(dataset.samples.size() * kDraws);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<std::uint8_t> mask;
        const std::vector<std::uint8_t>* mask_ptr = nullptr;
        if (agent.has_dropout()) {
            mask.resize(n_hidden);
            for (auto& m : mask) m = rng.uniform() < 0.1 ? 0 : 1;
            mask_ptr = &mask;
        }
        std::vector<double> acc(agent.parameters.size(), 0.0);
        double loss = 0.0;
        for (std::size_t s = 0; s < dataset.samples.size(); ++s) {
            for (const auto& d : draws[s]) {
                LossGrad lg = agent_loss_grad(agent, d.xt, d.t,
                                              dataset.samples[s].label, d.eps,
                                              mask_ptr);
                loss += lg.loss;
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += lg.grad[i];
            }
        }
        loss /= total;
        if (!std::isfinite(loss)) {
            throw std::runtime_error("non-finite training loss at epoch " +
                                     std::to_string(epoch));
        }
        if (loss_history) loss_history->push_back(loss);
        for (std::size_t i = 0; i < acc.size(); ++i) {
            agent.parameters[i] -= lr * acc[i] / total;
        }
    }
    return agent;
}

std::vector<double> reverse_step(const std::vector<double>& xt,
                                 const std::vector<double>& eps_hat, int t,
                                 const NoiseSchedule& sched, Rng& rng) {
    if (t < 1 || t > sched.T) throw std::invalid_argument("t out of range");
    if (xt.size() != eps_hat.size()) {
        throw std::invalid_argument("xt/eps_hat length mismatch");
    }
    const double beta = sched.beta[t - 1];
    const double alpha = sched.alpha[t - 1];
    const double ab = sched.alpha_bar[t - 1];
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    const double coef = beta / std::sqrt(1.0 - ab);
    const double sigma = std::sqrt(beta);
    std::vector<double> prev(xt.size());
    for (std::size_t i = 0; i < xt.size(); ++i) {
        double v = inv_sqrt_alpha * (xt[i] - coef * eps_hat[i]);
        if (t > 1) v += sigma * rng.normal();
        prev[i] = v;
    }
    return prev;
}

std::vector<double> sample(const PredictFn& predict, const NoiseSchedule& sched,
                           int d_img, Rng& rng) {
    std::vector<double> x(d_img);
    for (double& v : x) v = rng.normal();
    for (int t = sched.T; t >= 1; --t) {
        x = reverse_step(x, predict(x, t), t, sched, rng);
    }
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
    return x;
}

std::vector<double> denoise_estimate(const std::vector<double>& xt,
                                     const std::vector<double>& eps_hat, int t,
                                     const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw std::invalid_argument("t out of range");
    const double ab = sched.alpha_bar[t - 1];
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    std::vector<double> x0(xt.size());
    for (std::size_t i = 0; i < xt.size(); ++i) {
        x0[i] = (xt[i] - sb * eps_hat[i]) / sa;
    }
    return x0;
}

}  // namespace lgrad
