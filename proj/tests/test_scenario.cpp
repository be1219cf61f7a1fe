#include "cpf/scenario.hpp"

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

using namespace cpf;

namespace {

std::string scenario_dir() { return CPF_SCENARIO_DIR; }

std::string read_file(const std::string& path)
{
    std::ifstream f(path);
    EXPECT_TRUE(f.good()) << path;
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST(ParseScenario, BundledQ100)
{
    const Scenario sc = load_scenario(scenario_dir() + "/paper_q100.json");
    EXPECT_EQ(sc.name, "paper_q100");
    ASSERT_EQ(sc.agents.size(), 3u);
    EXPECT_EQ(sc.graph.size(), 3);
    EXPECT_DOUBLE_EQ(sc.gain.eps_bar, 0.0125);

    for (const AgentSpec& a : sc.agents) {
        EXPECT_DOUBLE_EQ(a.gamma0, 15.0);
        EXPECT_DOUBLE_EQ(a.eta0, 0.0);
        EXPECT_DOUBLE_EQ(a.model.weights.T, 0.4);
        EXPECT_LT((a.model.weights.Q - 100.0 * Eigen::Matrix3d::Identity()).norm(), 1e-15);
        EXPECT_LT((a.model.offset.eps - Eigen::Vector3d(-0.5, 0, 0)).norm(), 1e-15);
    }
    // 40 s at 0.1 s sampling: 400 solves.
    EXPECT_EQ(sc.sample_times().size(), 400u);

    // The middle vehicle talks to both others, the outer ones only to it.
    EXPECT_EQ(sc.graph.neighbors(1), (std::vector<int>{0, 2}));
    EXPECT_EQ(sc.graph.neighbors(0), (std::vector<int>{1}));
    EXPECT_TRUE(sc.graph.is_balanced());
    EXPECT_TRUE(sc.graph.is_strongly_connected());
}

TEST(ParseScenario, BundledVariantsValidate)
{
    EXPECT_NO_THROW(load_scenario(scenario_dir() + "/paper_q01.json"));
    EXPECT_NO_THROW(load_scenario(scenario_dir() + "/fixed_point.json"));
    EXPECT_NO_THROW(load_scenario(scenario_dir() + "/consensus_spread.json"));

    const Scenario q01 = load_scenario(scenario_dir() + "/paper_q01.json");
    EXPECT_LT((q01.agents[0].model.weights.Q - 0.1 * Eigen::Matrix3d::Identity()).norm(), 1e-15);

    const Scenario fp = load_scenario(scenario_dir() + "/fixed_point.json");
    EXPECT_EQ(fp.agents[0].model.path.kind, PathKind::Line);
    EXPECT_TRUE(fp.agents[0].model.path.allow_unbounded);
}

TEST(ParseScenario, GainOutOfRangeRejected)
{
    std::string text = read_file(scenario_dir() + "/paper_q100.json");
    const auto pos = text.find("0.0125");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 6, "0.6000");  // >= 1/max_degree = 0.5
    try {
        parse_scenario(text);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("eps_bar"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("max_degree"), std::string::npos);
    }
}

TEST(ParseScenario, MissingDeltaLbRejected)
{
    std::string text = read_file(scenario_dir() + "/paper_q100.json");
    const auto pos = text.find("\"delta_lb\": 0.01,");
    ASSERT_NE(pos, std::string::npos);
    text.erase(pos, std::string("\"delta_lb\": 0.01,").size());
    try {
        parse_scenario(text);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("delta_lb"), std::string::npos);
    }
}

TEST(ParseScenario, MalformedJsonRejected)
{
    EXPECT_THROW(parse_scenario("{ not json"), ValidationError);
    EXPECT_THROW(parse_scenario("{}"), ValidationError);
}

TEST(ParseScenario, UnboundedLineNeedsOptIn)
{
    std::string text = read_file(scenario_dir() + "/fixed_point.json");
    const std::string flag = "\"allow_unbounded\": true";
    auto pos = text.find(flag);
    ASSERT_NE(pos, std::string::npos);
    while ((pos = text.find(flag)) != std::string::npos) {
        text.replace(pos, flag.size(), "\"allow_unbounded\": false");
    }
    EXPECT_THROW(parse_scenario(text), ValidationError);
}

TEST(ParseScenario, SamplingIntervalBounds)
{
    std::string text = read_file(scenario_dir() + "/paper_q100.json");
    // delta above the horizon length T = 0.4 breaks the sampled-data premise.
    const auto pos = text.find("\"delta\": 0.1");
    ASSERT_NE(pos, std::string::npos);
    std::string bad = text;
    bad.replace(pos, std::string("\"delta\": 0.1").size(), "\"delta\": 0.5");
    EXPECT_THROW(parse_scenario(bad), ValidationError);

    // delta below delta_lb is rejected as well.
    bad = text;
    bad.replace(pos, std::string("\"delta\": 0.1").size(), "\"delta\": 0.005");
    EXPECT_THROW(parse_scenario(bad), ValidationError);
}

TEST(ParseScenario, ExplicitSampleList)
{
    std::string text = read_file(scenario_dir() + "/paper_q100.json");
    const std::string old_timing =
        "\"timing\": {\"t0\": 0.0, \"delta\": 0.1, \"delta_lb\": 0.01, \"duration\": 40.0, "
        "\"dt\": 0.001}";
    const std::string new_timing =
        "\"timing\": {\"t0\": 0.0, \"delta_lb\": 0.01, \"duration\": 0.5, \"dt\": 0.001, "
        "\"samples\": [0.0, 0.08, 0.2, 0.35]}";
    const auto pos = text.find(old_timing);
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, old_timing.size(), new_timing);

    const Scenario sc = parse_scenario(text);
    ASSERT_EQ(sc.sample_times().size(), 4u);
    EXPECT_DOUBLE_EQ(sc.sample_times()[1], 0.08);
}

TEST(ValidateScenario, CollectsMultipleErrors)
{
    Scenario sc = load_scenario(scenario_dir() + "/paper_q100.json");
    sc.gain.eps_bar = 0.9;
    sc.timing.delta_lb = 0.0;
    sc.agents[0].model.weights.m_eta = 0.0;
    const std::vector<std::string> errors = validate_scenario(sc);
    EXPECT_GE(errors.size(), 3u);
}
