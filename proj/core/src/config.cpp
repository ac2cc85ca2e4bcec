#include "lgrad/config.hpp"

#include <fstream>
#include <sstream>

#include "lgrad/text_io.hpp"

namespace lgrad {

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.seed = 7;
    cfg.seed_set = true;
    const char* specs[4] = {
        "conv:1,pool:1,att:0,bn:0,dr:1,skip:0,wide:1,deep:0",
        "conv:1,pool:0,att:0,bn:1,dr:0,skip:1,wide:0,deep:1",
        "conv:0,pool:1,att:1,bn:0,dr:0,skip:1,wide:1,deep:1",
        "conv:1,pool:1,att:1,bn:1,dr:1,skip:0,wide:0,deep:0",
    };
    for (const char* s : specs) {
        AgentConfig a;
        a.spec = AgentSpec::parse(s);
        cfg.agents.push_back(a);
    }
    return cfg;
}

namespace {

struct Parser {
    std::string origin;
    std::size_t lineno = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + msg);
    }

    long long integer(const std::string& v) const {
        try {
            std::size_t pos = 0;
            const long long x = std::stoll(v, &pos);
            if (pos != v.size()) fail("'" + v + "' is not an integer");
            return x;
        } catch (const ConfigError&) {
            throw;
        } catch (...) {
            fail("'" + v + "' is not an integer");
        }
    }

    double real(const std::string& v) const {
        try {
            return parse_double(v);
        } catch (...) {
            fail("'" + v + "' is not a number");
        }
    }
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin) {
    ExperimentConfig cfg;
    Parser p{origin};
    std::istringstream in(text);
    std::string line, section;
    AgentConfig* agent = nullptr;

    while (std::getline(in, line)) {
        ++p.lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') p.fail("unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section == "agent") {
                cfg.agents.emplace_back();
                agent = &cfg.agents.back();
            } else if (section != "dataset" && section != "schedule" &&
                       section != "graph" && section != "meta" &&
                       section != "eval") {
                p.fail("unknown section '" + section + "'");
            }
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) p.fail("expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty()) p.fail("expected 'key = value'");

        if (section.empty()) {
            if (key == "seed") {
                cfg.seed = static_cast<std::uint64_t>(p.integer(val));
                cfg.seed_set = true;
            } else {
                p.fail("unknown key '" + key + "'");
            }
        } else if (section == "dataset") {
            if (key == "n_per_class") cfg.dataset.n_per_class = static_cast<int>(p.integer(val));
            else if (key == "d_side") cfg.dataset.d_side = static_cast<int>(p.integer(val));
            else p.fail("unknown key '" + key + "' in [dataset]");
        } else if (section == "schedule") {
            if (key == "T") cfg.schedule.T = static_cast<int>(p.integer(val));
            else if (key == "beta_start") cfg.schedule.beta_start = p.real(val);
            else if (key == "beta_end") cfg.schedule.beta_end = p.real(val);
            else p.fail("unknown key '" + key + "' in [schedule]");
        } else if (section == "agent") {
            if (key == "spec") {
                try {
                    agent->spec = AgentSpec::parse(val);
                } catch (const std::exception& e) {
                    p.fail(e.what());
                }
            } else if (key == "epochs") {
                agent->epochs = static_cast<int>(p.integer(val));
            } else if (key == "lr") {
                agent->lr = p.real(val);
            } else {
                p.fail("unknown key '" + key + "' in [agent]");
            }
        } else if (section == "graph") {
            if (key == "mode") {
                try {
                    cfg.graph.mode = graph_mode_from_string(val);
                } catch (const std::exception& e) {
                    p.fail(e.what());
                }
            } else if (key == "tau") {
                cfg.graph.tau = p.real(val);
            } else if (key == "sigma") {
                cfg.graph.sigma = p.real(val);
            } else {
                p.fail("unknown key '" + key + "' in [graph]");
            }
        } else if (section == "meta") {
            if (key == "lambda") cfg.meta.lambda = p.real(val);
            else if (key == "gamma") cfg.meta.gamma = p.real(val);
            else if (key == "eta") cfg.meta.eta = p.real(val);
            else if (key == "epochs") cfg.meta.epochs = static_cast<int>(p.integer(val));
            else if (key == "k_mst") cfg.meta.k_mst = static_cast<int>(p.integer(val));
            else if (key == "layer_dims") {
                std::vector<int> dims;
                std::istringstream ds(val);
                std::string item;
                while (std::getline(ds, item, ',')) {
                    dims.push_back(static_cast<int>(p.integer(trim(item))));
                }
                if (dims.size() < 2) p.fail("layer_dims needs at least two entries");
                if (dims.front() != kFeatureDim) {
                    p.fail("layer_dims must start at the node feature width " +
                           std::to_string(kFeatureDim));
                }
                cfg.meta.layer_dims = dims;
            } else if (key == "diversity_grad") {
                if (val == "literal") cfg.meta.diversity_grad = DiversityGradMode::Literal;
                else if (val == "weighted") cfg.meta.diversity_grad = DiversityGradMode::Weighted;
                else p.fail("diversity_grad must be literal or weighted");
            } else {
                p.fail("unknown key '" + key + "' in [meta]");
            }
        } else if (section == "eval") {
            if (key == "n_generated") cfg.eval.n_generated = static_cast<int>(p.integer(val));
            else if (key == "seeds_for_trends") cfg.eval.seeds_for_trends = static_cast<int>(p.integer(val));
            else p.fail("unknown key '" + key + "' in [eval]");
        }
    }

    if (!cfg.seed_set) {
        throw ConfigError(origin + ": missing required top-level 'seed'");
    }
    if (cfg.agents.empty()) {
        // A config without [agent] sections gets the default pool.
        cfg.agents = default_config().agents;
    }
    return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

}  // namespace lgrad
