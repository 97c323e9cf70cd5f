#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qnet/cli.hpp"

using namespace qnet;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result qnd(std::vector<std::string> args) {
    args.insert(args.begin(), "qnd");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string sample(const std::string& name) { return std::string(QND_SAMPLES) + "/" + name; }

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        bool quoted = false;
        for (char c : line) {
            if (c == '"') quoted = !quoted;
            else if (c == ',' && !quoted) {
                cells.push_back(cell);
                cell.clear();
            } else {
                cell += c;
            }
        }
        cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::string column(const std::vector<std::vector<std::string>>& t, std::size_t row, const std::string& name) {
    const auto& h = t.at(0);
    const auto it = std::find(h.begin(), h.end(), name);
    if (it == h.end()) throw std::runtime_error("no column " + name);
    return t.at(row).at(static_cast<std::size_t>(it - h.begin()));
}

double num(const std::vector<std::vector<std::string>>& t, std::size_t row, const std::string& name) {
    return std::stod(column(t, row, name));
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("qnd_test_" + name)).string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

int run_binary(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + QND_BINARY + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(CliChain, AnalyticSingleRepeater) {
    const auto r = qnd({"chain", "analytic", "--n", "1", "--pg", "0.5", "--ps", "0.5"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto t = parse_csv(r.out);
    ASSERT_EQ(t.size(), 2u);
    EXPECT_NEAR(num(t, 1, "mean_t"), 16.0 / 3.0, 1e-12);
    EXPECT_EQ(column(t, 1, "method"), "closed-form");
}

TEST(CliChain, StableHeader) {
    const auto r = qnd({"chain", "analytic"});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')),
              "engine,method,n,p_g,p_s,t_coh,tau,protocol,mean_t,stddev_t,mean_w,mean_F,captured_mass,stderr_t,"
              "n_samples,seed");
    const auto timed = qnd({"chain", "analytic", "--timing"});
    EXPECT_NE(timed.out.substr(0, timed.out.find('\n')).find(",wall_ms"), std::string::npos);
}

TEST(CliChain, TrackWithTruncation) {
    const auto r = qnd({"chain", "track", "--n", "2", "--pg", "0.5", "--ps", "0.5", "--trunc", "2000"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto t = parse_csv(r.out);
    EXPECT_GE(num(t, 1, "captured_mass"), 1.0 - 1e-6);
    EXPECT_NEAR(num(t, 1, "mean_t"), exact_mean([] {
                    ChainParams p;
                    p.n = 2;
                    p.p_g = 0.5;
                    p.p_s = 0.5;
                    return p;
                }()).mean,
                1e-8);
    EXPECT_GT(num(t, 1, "stddev_t"), 0.0);
}

TEST(CliChain, MarkovOneStep) {
    const auto r = qnd({"chain", "markov", "--n", "1", "--pg", "0.5", "--ps", "0.5", "--swap-time", "one-step"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NEAR(num(parse_csv(r.out), 1, "mean_t"), 16.0 / 3.0 + 2.0, 1e-9);
}

TEST(CliChain, SamplingEngines) {
    for (std::string engine : {"mc", "des"}) {
        const auto r = qnd({"chain", engine, "--n", "1", "--pg", "0.5", "--ps", "0.5", "--samples", "20000"});
        ASSERT_EQ(r.code, 0) << r.err;
        const auto t = parse_csv(r.out);
        EXPECT_LT(std::abs(num(t, 1, "mean_t") - 16.0 / 3.0), 4.0 * num(t, 1, "stderr_t")) << engine;
        EXPECT_EQ(column(t, 1, "n_samples"), "20000");
        EXPECT_EQ(column(t, 1, "seed"), "1");
    }
}

TEST(CliChain, GridOrderIsPreserved) {
    const auto r = qnd({"chain", "analytic", "--n", "1,2", "--pg", "0.5,0.9", "--ps", "0.7"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto t = parse_csv(r.out);
    ASSERT_EQ(t.size(), 5u);
    EXPECT_EQ(column(t, 1, "n") + column(t, 1, "p_g"), "10.5");
    EXPECT_EQ(column(t, 2, "n") + column(t, 2, "p_g"), "10.9");
    EXPECT_EQ(column(t, 3, "n") + column(t, 3, "p_g"), "20.5");
    EXPECT_EQ(column(t, 4, "n") + column(t, 4, "p_g"), "20.9");
}

TEST(CliChain, FeatureMismatch) {
    auto r = qnd({"chain", "markov", "--cutoff", "3"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("markov"), std::string::npos);
    EXPECT_NE(r.err.find("cut-off"), std::string::npos);
    r = qnd({"chain", "markov", "--distill", "1"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("distillation"), std::string::npos);
    r = qnd({"chain", "analytic", "--distill", "1"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("analytic"), std::string::npos);
    // supported combinations run
    EXPECT_EQ(qnd({"chain", "track", "--distill", "1", "--tcoh", "20", "--w0", "0.9"}).code, 0);
    EXPECT_EQ(qnd({"chain", "analytic", "--cutoff", "2"}).code, 0);
}

TEST(CliChain, InputErrors) {
    EXPECT_EQ(qnd({"chain", "analytic", "--pg", "1.5"}).code, 2);
    EXPECT_EQ(qnd({"chain", "track", "--protocol", "SX"}).code, 2);
    EXPECT_EQ(qnd({"chain", "mc", "--samples", "0"}).code, 2);
}

TEST(CliChain, EngineErrors) {
    // horizon too short for the requested mass
    EXPECT_EQ(qnd({"chain", "track", "--n", "2", "--pg", "0.1", "--ps", "0.5", "--trunc", "10"}).code, 3);
    EXPECT_EQ(qnd({"chain", "markov", "--n", "6"}).code, 3);
}

TEST(CliChain, DistributionExport) {
    const auto path = temp_path("dist.csv");
    const auto r = qnd({"chain", "track", "--n", "1", "--trunc", "80", "--dist-out", path});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto t = parse_csv(slurp(path));
    ASSERT_EQ(t.size(), 81u);
    EXPECT_EQ(t[0][0], "t");
    EXPECT_EQ(qnd({"chain", "track", "--n", "1,2", "--dist-out", path}).code, 64);
    const auto dot = temp_path("chain.dot");
    ASSERT_EQ(qnd({"chain", "markov", "--n", "1", "--dot-out", dot}).code, 0);
    EXPECT_NE(slurp(dot).find("digraph"), std::string::npos);
}

TEST(CliUsage, ExitCodes) {
    EXPECT_EQ(qnd({}).code, 64);
    EXPECT_EQ(qnd({"chain"}).code, 64);
    EXPECT_EQ(qnd({"chain", "quantum"}).code, 64);
    EXPECT_EQ(qnd({"chain", "analytic", "--bogus"}).code, 64);
    EXPECT_EQ(qnd({"chain", "analytic", "--format", "xml"}).code, 64);
    EXPECT_EQ(qnd({"chain", "analytic", "--delay", "2"}).code, 64);
    EXPECT_EQ(qnd({"--help"}).code, 0);
}

TEST(CliBounds, TwoLossyChain) {
    const auto r = qnd({"bounds", sample("two_lossy_chain.json"), "--bipartite", "A", "B", "--unit", "network-use"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto t = parse_csv(r.out);
    EXPECT_NEAR(num(t, 1, "lower"), 1.0, 1e-9);
    EXPECT_NEAR(num(t, 1, "upper"), 1.0, 1e-9);
}

TEST(CliBounds, ChannelUseReportsUsage) {
    const auto r = qnd({"bounds", sample("three_lossy_chain.json"), "--bipartite", "A", "B", "--unit",
                        "channel-use", "--format", "json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_NEAR(j["lower"].get<double>(), 1.0 / 3.0, 1e-9);
    EXPECT_NEAR(j["upper"].get<double>(), 1.0 / 3.0, 1e-9);
    ASSERT_EQ(j["q_opt_lower"].size(), 3u);
    for (const auto& q : j["q_opt_lower"]) EXPECT_NEAR(q.get<double>(), 1.0 / 3.0, 1e-9);
}

TEST(CliBounds, MultipairWorstAnnotation) {
    const auto r = qnd({"bounds", sample("mixed_network.json"), "--multipair", "--objective", "worst"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("g2"), std::string::npos);
    const auto t = parse_csv(r.out);
    EXPECT_LE(num(t, 1, "lower"), num(t, 1, "upper"));
    const auto explicit_pairs =
        qnd({"bounds", sample("mixed_network.json"), "--multipair", "--pairs", "A:C,B:D", "--objective", "worst"});
    EXPECT_EQ(explicit_pairs.out, r.out);
}

TEST(CliBounds, Multipartite) {
    const auto r = qnd({"bounds", sample("mixed_network.json"), "--multipartite", "--format", "json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["terminals"].size(), 3u);
    EXPECT_LE(j["lower"].get<double>(), j["upper"].get<double>());
}

TEST(CliBounds, Errors) {
    EXPECT_EQ(qnd({"bounds", sample("two_lossy_chain.json"), "--bipartite", "A"}).code, 64);
    EXPECT_EQ(qnd({"bounds", sample("two_lossy_chain.json")}).code, 64);
    EXPECT_EQ(qnd({"bounds", sample("two_lossy_chain.json"), "--bipartite", "A", "Z"}).code, 2);
    EXPECT_EQ(qnd({"bounds", sample("three_lossy_chain.json"), "--multipair"}).code, 2);
    const auto bad = temp_path("bad.json");
    std::ofstream(bad) << "{\"nodes\": [\"A\"], \"edges\": [}";
    const auto r = qnd({"bounds", bad, "--bipartite", "A", "B"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("parse error"), std::string::npos);
    EXPECT_EQ(qnd({"bounds", temp_path("missing.json"), "--bipartite", "A", "B"}).code, 2);
}

TEST(CliCompare, ErrorTableProperties) {
    const auto r = qnd({"compare", "--n", "1,2", "--pg", "0.1", "--ps", "0.1,0.5,0.9"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto t = parse_csv(r.out);
    ASSERT_EQ(t.size(), 7u);
    for (std::size_t i = 1; i < t.size(); ++i) {
        EXPECT_LE(num(t, i, "det_swap"), num(t, i, "exact_mean") * (1.0 + 1e-12));  // equal at n = 1
        if (column(t, i, "n") == "1") {
            EXPECT_LT(num(t, i, "err_geometric_level"), 1e-9);
        }
    }
    // n = 2 rows: p_s = 0.1 then 0.9
    EXPECT_LT(num(t, 4, "err_geometric_level"), num(t, 6, "err_geometric_level"));
}

TEST(CliCompare, PmfExport) {
    const auto path = temp_path("pmf.csv");
    const auto r = qnd({"compare", "--n", "2", "--pg", "0.5", "--ps", "0.5", "--trunc", "300", "--pmf-out", path});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto t = parse_csv(slurp(path));
    ASSERT_EQ(t.size(), 301u);
    EXPECT_EQ(t[0], (std::vector<std::string>{"t", "exact_pmf", "geometric_pmf"}));
}

TEST(CliSimulate, TraceAndSummary) {
    const auto trace = temp_path("trace.txt");
    const auto r = qnd({"simulate", "--n", "2", "--pg", "0.5", "--ps", "0.8", "--cutoff", "3", "--samples", "500",
                        "--seed", "9", "--format", "json", "--trace", trace});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    Fnv1a h;
    h.update(slurp(trace));
    EXPECT_EQ(j["trace_hash"].get<std::string>(), hex64(h.digest()));
    EXPECT_EQ(j["n_samples"].get<std::size_t>(), 500u);
    EXPECT_EQ(qnd({"simulate", "--n", "1,2"}).code, 64);
}

TEST(CliSimulate, DelayShiftsMean) {
    const auto a = qnd({"simulate", "--n", "1", "--ps", "1", "--samples", "20000", "--format", "json"});
    const auto b = qnd({"simulate", "--n", "1", "--ps", "1", "--samples", "20000", "--format", "json", "--delay", "4"});
    ASSERT_EQ(b.code, 0) << b.err;
    // same seeds, same draws: every sample moves by exactly the delay
    EXPECT_NEAR(nlohmann::json::parse(b.out)["mean"].get<double>() - nlohmann::json::parse(a.out)["mean"].get<double>(),
                4.0, 1e-9);
}

TEST(CliDeterminism, RepeatedRunsAreByteIdentical) {
    const std::vector<std::vector<std::string>> commands = {
        {"chain", "mc", "--n", "1,2", "--pg", "0.4", "--ps", "0.6", "--tcoh", "30", "--samples", "3000", "--seed", "4"},
        {"chain", "des", "--n", "2", "--pg", "0.4", "--ps", "0.6", "--cutoff", "2", "--samples", "3000", "--format",
         "json"},
        {"chain", "track", "--n", "2", "--tcoh", "10", "--cutoff", "2", "--trunc", "400"},
        {"simulate", "--n", "2", "--samples", "2000", "--seed", "11", "--format", "json"},
        {"bounds", sample("mixed_network.json"), "--multipair", "--unit", "channel-use"},
    };
    for (const auto& c : commands) {
        const auto a = qnd(c), b = qnd(c);
        ASSERT_EQ(a.code, 0) << a.err;
        EXPECT_EQ(a.out, b.out) << c[0] << ' ' << c[1];
    }
}

TEST(CliBinary, ExitCodesAndEnvironment) {
    EXPECT_EQ(run_binary("chain analytic --n 1"), 0);
    EXPECT_EQ(run_binary("chain analytic --pg 2"), 2);
    EXPECT_EQ(run_binary("chain markov --n 7"), 3);
    EXPECT_EQ(run_binary("frobnicate"), 64);
    EXPECT_EQ(run_binary("chain mc --samples 100", "QND_THREADS=abc"), 2);

    const auto a = temp_path("bin_a.csv"), b = temp_path("bin_b.csv");
    ASSERT_EQ(run_binary("chain mc --n 2 --samples 2000 --out " + a, "QND_THREADS=1"), 0);
    ASSERT_EQ(run_binary("chain mc --n 2 --samples 2000 --out " + b, "QND_THREADS=4"), 0);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_FALSE(slurp(a).empty());
}
