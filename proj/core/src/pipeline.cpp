#include "lgrad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lgrad/text_io.hpp"

namespace lgrad {

namespace fs = std::filesystem;

namespace {

std::vector<double> clamp01(std::vector<double> v) {
    for (double& x : v) x = std::clamp(x, 0.0, 1.0);
    return v;
}

std::vector<double> clamp_prob(std::vector<double> v) {
    for (double& x : v) x = std::clamp(x, kProbClamp, 1.0 - kProbClamp);
    return v;
}

int reference_step(const NoiseSchedule& sched) {
    return std::max(1, sched.T / 2);
}

// Blending weights for one set of live predictions, mirroring the
// per-step computation inside generate().
Eigen::VectorXd compute_pi(const MetaModel& model, const MetaContext& ctx,
                           const std::vector<std::vector<double>>& preds) {
    const int n = static_cast<int>(preds.size());
    if (n == 1) return Eigen::VectorXd::Ones(1);
    Eigen::MatrixXd A;
    if (ctx.mode == GraphMode::PER_SAMPLE) {
        const SpanningTree t =
            maximum_spanning_tree(build_per_sample_graph(preds, ctx.sigma));
        A = Eigen::MatrixXd::Zero(t.n, t.n);
        for (int i = 0; i < t.n; ++i) {
            for (int j = 0; j < t.n; ++j) A(i, j) = t.adjacency[i][j];
        }
    } else {
        A = ctx.fixed_adjacency;
    }
    const Eigen::MatrixXd H0 = node_features(ctx.specs, ctx.mean_losses, preds);
    const GcnnCache cache = gcnn_forward(normalize_adjacency(A), H0, model);
    return head_weights(cache.H.back(), model);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << content;
}

void require_kb(const ExperimentConfig& cfg, const std::string& out_dir,
                const TrainedPool& pool) {
    const std::string path = out_dir + "/kb.lgkb";
    if (!fs::exists(path)) {
        throw std::runtime_error("no knowledge base at '" + path +
                                 "'; run train-agents first");
    }
    const KnowledgeBase stored = load_kb(path);
    if (!(stored == pool.kb)) {
        throw std::runtime_error("knowledge base at '" + path +
                                 "' does not match this config; rerun train-agents");
    }
    (void)cfg;
}

}  // namespace

TrainedPool train_pool(const ExperimentConfig& cfg) {
    if (!cfg.seed_set) throw ConfigError("config has no seed");
    TrainedPool pool;
    Rng ds_rng = Rng::for_role(cfg.seed, rng_role::dataset);
    pool.dataset =
        make_sprite_dataset(cfg.dataset.n_per_class, cfg.dataset.d_side, ds_rng);
    pool.sched = make_schedule(cfg.schedule.T, cfg.schedule.beta_start,
                               cfg.schedule.beta_end);
    pool.kb.dataset_fingerprint = pool.dataset.fingerprint();
    pool.kb.d_img = pool.dataset.d_img;

    // All agents denoise the same noised views so PCF compares like with
    // like.
    const int t_ref = reference_step(pool.sched);
    Rng eval_rng = Rng::for_role(cfg.seed, rng_role::eval);
    std::vector<std::vector<double>> noised;
    for (const auto& s : pool.dataset.samples) {
        noised.push_back(forward_noise(s.image, t_ref, pool.sched, eval_rng).first);
    }

    for (std::size_t i = 0; i < cfg.agents.size(); ++i) {
        const AgentConfig& ac = cfg.agents[i];
        Rng rng = Rng::for_role(cfg.seed, rng_role::agent_base + i);
        std::vector<double> history;
        ToyAgent agent = train_agent(pool.dataset, ac.spec, ac.epochs, ac.lr,
                                     rng, &history, &pool.sched);
        std::vector<std::vector<double>> outputs;
        std::vector<double> errors;
        for (std::size_t s = 0; s < pool.dataset.samples.size(); ++s) {
            const auto& sample = pool.dataset.samples[s];
            std::vector<double> x0_hat = clamp01(denoise_estimate(
                noised[s], predict_noise(agent, noised[s], t_ref, sample.label),
                t_ref, pool.sched));
            errors.push_back(reconstruction_error(x0_hat, sample.image));
            outputs.push_back(std::move(x0_hat));
        }
        record_agent(pool.kb, ac.spec, std::move(outputs), std::move(errors),
                     history);
        pool.agents.push_back(std::move(agent));
    }
    return pool;
}

TrainedPool pool_subset(const TrainedPool& pool, const std::vector<int>& ids) {
    TrainedPool sub;
    sub.dataset = pool.dataset;
    sub.sched = pool.sched;
    sub.kb.dataset_fingerprint = pool.kb.dataset_fingerprint;
    sub.kb.d_img = pool.kb.d_img;
    for (int id : ids) {
        const KnowledgeRecord& rec = pool.kb.records.at(id);
        record_agent(sub.kb, rec.spec, rec.outputs, rec.sample_errors,
                     rec.loss_history);
        sub.agents.push_back(pool.agents.at(id));
    }
    return sub;
}

EvalResult evaluate_pool(const TrainedPool& pool, const MetaModel& model,
                         const MetaContext& ctx, const ExperimentConfig& cfg,
                         std::uint64_t eval_seed,
                         std::vector<std::vector<double>>* generated_out) {
    EvalResult res;
    Rng gen_rng = Rng::for_role(eval_seed, rng_role::generate);
    SampleSet generated;
    for (int i = 0; i < cfg.eval.n_generated; ++i) {
        const int label = i % pool.dataset.n_classes;
        generated.embeddings.push_back(
            generate(model, ctx, pool.agents, label, pool.sched, gen_rng));
    }
    SampleSet reference;
    for (const auto& s : pool.dataset.samples) {
        reference.embeddings.push_back(s.image);
    }
    res.toy_frechet = frechet_distance(generated, reference);
    res.diversity = diversity(generated);

    // Blended one-shot reconstruction error on the training set.
    Rng rec_rng = Rng::for_role(eval_seed, rng_role::eval);
    const int t_ref = reference_step(pool.sched);
    double mse = 0.0;
    for (const auto& s : pool.dataset.samples) {
        const auto xt = forward_noise(s.image, t_ref, pool.sched, rec_rng).first;
        std::vector<std::vector<double>> preds(pool.agents.size());
        for (std::size_t i = 0; i < pool.agents.size(); ++i) {
            preds[i] = clamp_prob(denoise_estimate(
                xt, predict_noise(pool.agents[i], xt, t_ref, s.label), t_ref,
                pool.sched));
        }
        const Eigen::VectorXd pi = compute_pi(model, ctx, preds);
        mse += reconstruction_error(blend(pi, preds), s.image);
    }
    res.recon_mse = mse / static_cast<double>(pool.dataset.samples.size());

    if (generated_out) *generated_out = generated.embeddings;
    return res;
}

void cmd_train_agents(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const TrainedPool pool = train_pool(cfg);
    save_dataset(pool.dataset, out_dir + "/dataset.lgds");
    save_kb(pool.kb, out_dir + "/kb.lgkb");
}

void cmd_build_graph(const ExperimentConfig& cfg, const std::string& out_dir) {
    if (cfg.graph.mode == GraphMode::PER_SAMPLE) {
        throw ConfigError(
            "build-graph needs a dataset-level mode (ccf, pcf or hybrid)");
    }
    fs::create_directories(out_dir);
    const TrainedPool pool = train_pool(cfg);
    require_kb(cfg, out_dir, pool);
    const GraphParams params{cfg.graph.tau, cfg.graph.sigma};
    const ModelGraph g = build_graph(pool.kb, cfg.graph.mode, params);
    save_graph(g, out_dir + "/graph.lgg");
    const SpanningTree t = maximum_spanning_tree(g);
    ModelGraph mst;
    mst.n = t.n;
    mst.mode = cfg.graph.mode;
    mst.edges = t.edges;
    save_graph(mst, out_dir + "/mst.lgg");
}

void cmd_train_meta(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const TrainedPool pool = train_pool(cfg);
    require_kb(cfg, out_dir, pool);
    const GraphParams params{cfg.graph.tau, cfg.graph.sigma};
    const MetaContext ctx = make_meta_context(pool.kb, cfg.graph.mode, params);
    Rng rng = Rng::for_role(cfg.seed, rng_role::meta_train);
    std::vector<LossBreakdown> history;
    const MetaModel model = train_meta(ctx, pool.agents, pool.dataset,
                                       pool.sched, cfg.meta, rng, &history);
    save_meta(model, out_dir + "/meta.lgm");

    std::ostringstream csv;
    csv << "epoch,C,D,Llap,total\n";
    for (std::size_t e = 0; e < history.size(); ++e) {
        csv << (e + 1) << ',' << to_decimal(history[e].C) << ','
            << to_decimal(history[e].D) << ','
            << to_decimal(history[e].L_laplace) << ','
            << to_decimal(history[e].total) << '\n';
    }
    write_file(out_dir + "/losses.csv", csv.str());
}

void cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir,
                  int label, int count) {
    if (label < 0 || label >= 4) {
        throw ConfigError("label must be in [0, 4)");
    }
    if (count < 0) throw ConfigError("count must be >= 0");
    fs::create_directories(out_dir);
    const TrainedPool pool = train_pool(cfg);
    require_kb(cfg, out_dir, pool);
    const std::string meta_path = out_dir + "/meta.lgm";
    if (!fs::exists(meta_path)) {
        throw std::runtime_error("no checkpoint at '" + meta_path +
                                 "'; run train-meta first");
    }
    const MetaModel model = load_meta(meta_path);
    const GraphParams params{cfg.graph.tau, cfg.graph.sigma};
    const MetaContext ctx = make_meta_context(pool.kb, cfg.graph.mode, params);

    Rng rng = Rng::for_role(cfg.seed, rng_role::generate);
    const int d_side = cfg.dataset.d_side;
    SampleSet generated;
    std::ostringstream dump;
    for (int i = 0; i < count; ++i) {
        const std::vector<double> img =
            generate(model, ctx, pool.agents, label, pool.sched, rng);
        dump << "image " << i << " label " << label << '\n';
        for (int y = 0; y < d_side; ++y) {
            for (int x = 0; x < d_side; ++x) {
                if (x) dump << ' ';
                dump << to_decimal(img[y * d_side + x]);
            }
            dump << '\n';
        }
        dump << '\n';
        generated.embeddings.push_back(img);
    }
    write_file(out_dir + "/images.txt", dump.str());

    if (count >= 2) {
        SampleSet reference;
        for (const auto& s : pool.dataset.samples) {
            if (s.label == label) reference.embeddings.push_back(s.image);
        }
        std::ostringstream csv;
        csv << "label,count,toy_frechet,diversity\n";
        csv << label << ',' << count << ','
            << to_decimal(frechet_distance(generated, reference)) << ','
            << to_decimal(diversity(generated)) << '\n';
        write_file(out_dir + "/gen_metrics.csv", csv.str());
    }
}

std::vector<std::vector<int>> agent_subsets(int n) {
    std::vector<std::vector<int>> out;
    for (int size = 2; size <= n; ++size) {
        std::vector<int> idx(size);
        for (int i = 0; i < size; ++i) idx[i] = i;
        while (true) {
            out.push_back(idx);
            int i = size - 1;
            while (i >= 0 && idx[i] == n - size + i) --i;
            if (i < 0) break;
            ++idx[i];
            for (int j = i + 1; j < size; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    return out;
}

std::vector<AblationRow> run_ablate_models(const ExperimentConfig& cfg) {
    const GraphParams params{cfg.graph.tau, cfg.graph.sigma};
    std::vector<AblationRow> rows;
    // Each trend seed is a full replication: new dataset jitter, new
    // agent pool, new meta model.
    for (int s = 0; s < cfg.eval.seeds_for_trends; ++s) {
        ExperimentConfig run = cfg;
        run.seed = cfg.seed + static_cast<std::uint64_t>(s);
        const TrainedPool pool = train_pool(run);
        for (const auto& subset :
             agent_subsets(static_cast<int>(pool.agents.size()))) {
            const TrainedPool sub = pool_subset(pool, subset);
            std::string key;
            for (std::size_t i = 0; i < subset.size(); ++i) {
                key += (i ? "+" : "") + std::to_string(subset[i]);
            }
            const MetaContext ctx =
                make_meta_context(sub.kb, cfg.graph.mode, params);
            Rng rng = Rng::for_role(run.seed, rng_role::meta_train);
            const MetaModel model =
                train_meta(ctx, sub.agents, sub.dataset, sub.sched, cfg.meta, rng);
            rows.push_back({key, run.seed,
                            evaluate_pool(sub, model, ctx, cfg, run.seed)});
        }
    }
    return rows;
}

std::vector<AblationRow> run_ablate_connectivity(const ExperimentConfig& cfg) {
    const GraphParams params{cfg.graph.tau, cfg.graph.sigma};
    std::vector<AblationRow> rows;
    for (int s = 0; s < cfg.eval.seeds_for_trends; ++s) {
        ExperimentConfig run = cfg;
        run.seed = cfg.seed + static_cast<std::uint64_t>(s);
        const TrainedPool pool = train_pool(run);
        for (GraphMode mode : {GraphMode::CCF, GraphMode::PCF, GraphMode::HYBRID}) {
            const MetaContext ctx = make_meta_context(pool.kb, mode, params);
            Rng rng = Rng::for_role(run.seed, rng_role::meta_train);
            const MetaModel model = train_meta(ctx, pool.agents, pool.dataset,
                                               pool.sched, cfg.meta, rng);
            rows.push_back({to_string(mode), run.seed,
                            evaluate_pool(pool, model, ctx, cfg, run.seed)});
        }
    }
    return rows;
}

namespace {

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::string& key_name, const std::string& path) {
    std::ostringstream csv;
    csv << key_name << ",seed,toy_frechet,diversity,recon_mse\n";
    for (const auto& r : rows) {
        csv << r.key << ',' << r.seed << ',' << to_decimal(r.result.toy_frechet)
            << ',' << to_decimal(r.result.diversity) << ','
            << to_decimal(r.result.recon_mse) << '\n';
    }
    write_file(path, csv.str());
}

}  // namespace

void cmd_ablate_models(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const TrainedPool pool = train_pool(cfg);
    require_kb(cfg, out_dir, pool);
    write_ablation_csv(run_ablate_models(cfg), "subset",
                       out_dir + "/ablate_models.csv");
}

void cmd_ablate_connectivity(const ExperimentConfig& cfg,
                             const std::string& out_dir) {
    fs::create_directories(out_dir);
    const TrainedPool pool = train_pool(cfg);
    require_kb(cfg, out_dir, pool);
    write_ablation_csv(run_ablate_connectivity(cfg), "mode",
                       out_dir + "/ablate_connectivity.csv");
}

void cmd_metrics(const ExperimentConfig& cfg, const std::string& out_dir) {
    const std::string img_path = out_dir + "/images.txt";
    const std::string ds_path = out_dir + "/dataset.lgds";
    if (!fs::exists(img_path)) {
        throw std::runtime_error("no '" + img_path + "'; run generate first");
    }
    if (!fs::exists(ds_path)) {
        throw std::runtime_error("no '" + ds_path + "'; run train-agents first");
    }
    const ToyDataset ds = load_dataset(ds_path);

    std::ifstream in(img_path, std::ios::binary);
    SampleSet generated;
    int label = -1;
    std::string line;
    std::vector<double> img;
    auto flush = [&]() {
        if (!img.empty()) {
            generated.embeddings.push_back(img);
            img.clear();
        }
    };
    while (std::getline(in, line)) {
        if (line.rfind("image ", 0) == 0) {
            flush();
            std::istringstream ls(line);
            std::string kw1, kw2;
            int idx;
            ls >> kw1 >> idx >> kw2 >> label;
        } else if (!line.empty()) {
            std::istringstream ls(line);
            std::string num;
            while (ls >> num) img.push_back(parse_double(num));
        }
    }
    flush();
    if (generated.embeddings.size() < 2) {
        throw std::runtime_error("need at least 2 generated images for metrics");
    }

    SampleSet reference;
    for (const auto& s : ds.samples) {
        if (label < 0 || s.label == label) reference.embeddings.push_back(s.image);
    }
    std::ostringstream csv;
    csv << "label,count,toy_frechet,diversity\n";
    csv << label << ',' << generated.embeddings.size() << ','
        << to_decimal(frechet_distance(generated, reference)) << ','
        << to_decimal(diversity(generated)) << '\n';
    write_file(out_dir + "/metrics.csv", csv.str());
    (void)cfg;
}

}  // namespace lgrad
