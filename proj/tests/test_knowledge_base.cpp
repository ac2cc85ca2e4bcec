#include <doctest.h>

#include <stdexcept>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lgrad/knowledge_base.hpp"
#include "lgrad/rng.hpp"

using namespace lgrad;

namespace {

AgentSpec spec_a() { return AgentSpec::parse("11001010"); }

std::vector<std::vector<double>> outputs(int n, int d, double base) {
    std::vector<std::vector<double>> out(n, std::vector<double>(d));
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) out[i][k] = base + 0.001 * i + 0.0001 * k;
    }
    return out;
}

std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("record_agent allocates sequential ids") {
    KnowledgeBase kb;
    CHECK(record_agent(kb, spec_a(), outputs(4, 64, 0.1), std::vector<double>(4, 0.0)) == 0);
    CHECK(record_agent(kb, spec_a(), outputs(4, 64, 0.2), std::vector<double>(4, 0.0)) == 1);
    CHECK(record_agent(kb, spec_a(), outputs(4, 64, 0.3), std::vector<double>(4, 0.0)) == 2);
    for (int i = 0; i < 3; ++i) CHECK(kb.records[i].agent_id == i);
}

TEST_CASE("record_agent rejects mixed output dimensions") {
    KnowledgeBase kb;
    auto out = outputs(2, 64, 0.1);
    out[1].resize(63);
    CHECK_THROWS_WITH_AS(
        record_agent(kb, spec_a(), out, std::vector<double>(2, 0.0)),
        "dimension mismatch at index 1", std::invalid_argument);
}

TEST_CASE("save/load round-trips bit-exactly") {
    KnowledgeBase kb;
    kb.dataset_fingerprint = 0xDEADBEEFCAFE1234ULL;
    Rng rng(99);
    for (int a = 0; a < 2; ++a) {
        std::vector<std::vector<double>> out(3, std::vector<double>(5));
        std::vector<double> errs(3);
        for (auto& row : out) {
            for (double& v : row) v = rng.uniform();
        }
        for (double& e : errs) e = rng.uniform();
        record_agent(kb, spec_a(), out, errs, {0.5, 0.25, 0.125});
    }
    const std::string path = tmp_path("kb_roundtrip.lgkb");
    save_kb(kb, path);
    const KnowledgeBase loaded = load_kb(path);
    CHECK(loaded == kb);
    std::remove(path.c_str());
}

TEST_CASE("truncated file is a parse error") {
    KnowledgeBase kb;
    record_agent(kb, spec_a(), outputs(2, 4, 0.5), {0.1, 0.2});
    const std::string path = tmp_path("kb_trunc.lgkb");
    save_kb(kb, path);
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    in.close();
    std::string text = ss.str();
    text.resize(text.size() / 2);
    std::ofstream(path, std::ios::binary) << text;
    CHECK_THROWS_AS(load_kb(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("tampered checksum is an integrity error") {
    KnowledgeBase kb;
    record_agent(kb, spec_a(), outputs(2, 4, 0.5), {0.1, 0.2});
    const std::string path = tmp_path("kb_tamper.lgkb");
    save_kb(kb, path);
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    in.close();
    std::string text = ss.str();
    // Flip one data character; the stored checksum no longer matches.
    const auto pos = text.find("agent 0");
    REQUIRE(pos != std::string::npos);
    text[pos + 6] = '7';
    std::ofstream(path, std::ios::binary) << text;
    try {
        load_kb(path);
        FAIL("expected integrity error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("integrity") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("round-trip property over random knowledge bases") {
    Rng rng(1234);
    for (int trial = 0; trial < 10; ++trial) {
        KnowledgeBase kb;
        kb.dataset_fingerprint = rng.uniform_int(UINT64_MAX);
        const int n_agents = 1 + static_cast<int>(rng.uniform_int(4));
        const int n_samples = 1 + static_cast<int>(rng.uniform_int(5));
        const int d = 1 + static_cast<int>(rng.uniform_int(8));
        for (int a = 0; a < n_agents; ++a) {
            std::array<std::uint8_t, kNumTraits> bits{};
            for (auto& b : bits) b = static_cast<std::uint8_t>(rng.uniform_int(2));
            std::vector<std::vector<double>> out(n_samples, std::vector<double>(d));
            std::vector<double> errs(n_samples);
            std::vector<double> hist(1 + rng.uniform_int(6));
            for (auto& row : out) {
                for (double& v : row) v = rng.normal();
            }
            for (double& e : errs) e = rng.uniform();
            for (double& h : hist) h = rng.normal();
            record_agent(kb, AgentSpec(bits), out, errs, hist);
        }
        const std::string path = tmp_path("kb_prop.lgkb");
        save_kb(kb, path);
        CHECK(load_kb(path) == kb);
        std::remove(path.c_str());
    }
}

TEST_CASE("spec parsing validates traits") {
    CHECK_THROWS_AS(AgentSpec::parse("conv:1,pool:1"), std::invalid_argument);
    CHECK_THROWS_AS(AgentSpec::parse("conv:2,pool:1,att:0,bn:0,dr:1,skip:0,wide:0,deep:0"),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        AgentSpec::parse("wat:1,pool:1,att:0,bn:0,dr:1,skip:0,wide:0,deep:0"),
        std::invalid_argument);
    const AgentSpec s =
        AgentSpec::parse("conv:1,pool:1,att:0,bn:0,dr:1,skip:0,wide:1,deep:0");
    CHECK(s.to_bits() == "11001010");
}
