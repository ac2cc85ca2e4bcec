#include "lgrad/knowledge_base.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lgrad/text_io.hpp"

namespace lgrad {

std::uint64_t fnv1a64(const unsigned char* data, std::size_t len, std::uint64_t h) {
    for (std::size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t dataset_fingerprint(const std::vector<std::vector<double>>& images) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& img : images) {
        h = fnv1a64(reinterpret_cast<const unsigned char*>(img.data()),
                    img.size() * sizeof(double), h);
    }
    return h;
}

int record_agent(KnowledgeBase& kb, const AgentSpec& spec,
                 std::vector<std::vector<double>> outputs,
                 std::vector<double> errors,
                 std::vector<double> loss_history) {
    if (!kb.records.empty() &&
        outputs.size() != kb.records[0].outputs.size()) {
        throw std::invalid_argument("output count does not match training-set size");
    }
    const std::size_t d = outputs.empty() ? 0 : outputs[0].size();
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        if (outputs[i].size() != d) {
            throw std::invalid_argument("dimension mismatch at index " +
                                        std::to_string(i));
        }
    }
    if (kb.d_img > 0 && d != static_cast<std::size_t>(kb.d_img)) {
        throw std::invalid_argument("output dimension does not match kb d_img");
    }
    if (errors.size() != outputs.size()) {
        throw std::invalid_argument("error count does not match output count");
    }
    KnowledgeRecord rec;
    rec.agent_id = static_cast<int>(kb.records.size());
    rec.spec = spec;
    rec.outputs = std::move(outputs);
    rec.sample_errors = std::move(errors);
    rec.loss_history = std::move(loss_history);
    if (kb.d_img == 0) kb.d_img = static_cast<int>(d);
    kb.records.push_back(std::move(rec));
    return kb.records.back().agent_id;
}

namespace {

char hexdigit(std::uint64_t v) {
    return static_cast<char>(v < 10 ? '0' + v : 'a' + (v - 10));
}

std::string to_hex64(std::uint64_t v) {
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = hexdigit(v & 0xF);
        v >>= 4;
    }
    return s;
}

std::uint64_t parse_hex64(const std::string& s) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw std::runtime_error("malformed hex value '" + s + "'");
    }
    return v;
}

}  // namespace

void save_kb(const KnowledgeBase& kb, const std::string& path) {
    std::ostringstream body;
    body << "LGRAD-KB v1 " << to_hex64(kb.dataset_fingerprint) << ' '
         << kb.records.size() << ' ' << kb.d_img << '\n';
    for (const auto& rec : kb.records) {
        body << "agent " << rec.agent_id << " spec " << rec.spec.to_bits()
             << " loss " << rec.loss_history.size();
        for (double v : rec.loss_history) body << ' ' << to_hexfloat(v);
        body << '\n';
        body << "err " << rec.sample_errors.size();
        for (double v : rec.sample_errors) body << ' ' << to_hexfloat(v);
        body << '\n';
        for (std::size_t s = 0; s < rec.outputs.size(); ++s) {
            body << "out " << s;
            for (double v : rec.outputs[s]) body << ' ' << to_hexfloat(v);
            body << '\n';
        }
    }
    const std::string text = body.str();
    const std::uint64_t check = fnv1a64(
        reinterpret_cast<const unsigned char*>(text.data()), text.size());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text << "check " << to_hex64(check) << '\n';
}

KnowledgeBase load_kb(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    if (lines.empty()) throw std::runtime_error(path + ":1: empty file");

    auto fail = [&](std::size_t lineno, const std::string& msg) -> void {
        throw std::runtime_error(path + ":" + std::to_string(lineno + 1) +
                                 ": " + msg);
    };

    // Trailing integrity line covers every preceding byte.
    if (lines.back().rfind("check ", 0) != 0) {
        fail(lines.size() - 1, "missing check line (truncated file?)");
    }
    const std::uint64_t stored = parse_hex64(lines.back().substr(6));
    std::string covered;
    for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
        covered += lines[i];
        covered += '\n';
    }
    const std::uint64_t recomputed = fnv1a64(
        reinterpret_cast<const unsigned char*>(covered.data()), covered.size());
    if (stored != recomputed) {
        throw std::runtime_error(path + ": integrity error: stored checksum " +
                                 to_hex64(stored) + " != recomputed " +
                                 to_hex64(recomputed));
    }

    std::istringstream header(lines[0]);
    std::string magic, ver, fp;
    KnowledgeBase kb;
    std::size_t n_agents = 0;
    if (!(header >> magic >> ver >> fp >> n_agents >> kb.d_img) ||
        magic != "LGRAD-KB" || ver != "v1") {
        fail(0, "parse error: expected 'LGRAD-KB v1' header");
    }
    kb.dataset_fingerprint = parse_hex64(fp);

    std::size_t ln = 1;
    for (std::size_t a = 0; a < n_agents; ++a) {
        if (ln >= lines.size() - 1) fail(ln, "parse error: truncated agent block");
        std::istringstream ls(lines[ln]);
        std::string kw, spec_bits, losskw;
        KnowledgeRecord rec;
        std::size_t n_loss = 0;
        // token order: agent <id> spec <bits> loss <count> <vals...>
        std::string tok;
        if (!(ls >> kw >> rec.agent_id >> tok) || kw != "agent" || tok != "spec") {
            fail(ln, "parse error: expected agent line");
        }
        if (!(ls >> spec_bits >> losskw >> n_loss) || losskw != "loss") {
            fail(ln, "parse error: malformed agent line");
        }
        rec.spec = AgentSpec::parse(spec_bits);
        std::string num;
        for (std::size_t i = 0; i < n_loss; ++i) {
            if (!(ls >> num)) fail(ln, "parse error: missing loss value");
            rec.loss_history.push_back(parse_double(num));
        }
        ++ln;

        std::istringstream es(lines[ln]);
        std::size_t n_err = 0;
        if (!(es >> kw >> n_err) || kw != "err") {
            fail(ln, "parse error: expected err line");
        }
        for (std::size_t i = 0; i < n_err; ++i) {
            if (!(es >> num)) fail(ln, "parse error: missing err value");
            rec.sample_errors.push_back(parse_double(num));
        }
        ++ln;

        rec.outputs.resize(n_err);
        for (std::size_t s = 0; s < n_err; ++s, ++ln) {
            if (ln >= lines.size() - 1) fail(ln, "parse error: truncated outputs");
            std::istringstream os(lines[ln]);
            std::size_t sid = 0;
            if (!(os >> kw >> sid) || kw != "out" || sid != s) {
                fail(ln, "parse error: expected out line for sample " +
                             std::to_string(s));
            }
            auto& row = rec.outputs[s];
            row.reserve(kb.d_img);
            while (os >> num) row.push_back(parse_double(num));
            if (row.size() != static_cast<std::size_t>(kb.d_img)) {
                fail(ln, "parse error: expected " + std::to_string(kb.d_img) +
                             " values, got " + std::to_string(row.size()));
            }
        }
        kb.records.push_back(std::move(rec));
    }
    return kb;
}

}  // namespace lgrad
