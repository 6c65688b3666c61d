#include "learnware/client.hpp"
#include "learnware/codec.hpp"
#include "learnware/service.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

using namespace learnware;
using learnware::testing::run_command;
using learnware::testing::task_sample;
using learnware::testing::TempDir;

namespace {

json plane_tags() {
    return json::parse(R"({"input":[{"name":"features","dim":2}],
                           "output":{"kind":"regression","dim":1},"objective":"rmse"})");
}

std::string cli() { return LEARNWARE_CLI_PATH; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p, std::ios::binary) << j.dump(); }

json data_json(const Matrix& x, const std::optional<Matrix>& y) {
    json j{{"x", codec::matrix_to_json(x)}};
    if (y) {
        j["y"] = codec::matrix_to_json(*y);
    }
    return j;
}

// An empty market served in-process; the CLI talks to it as a separate process.
struct LiveMarket {
    LiveMarket() : handle(empty_state(), dir.path() / "market"), server(handle), port(server.start()) {}

    static MarketState empty_state() {
        MarketState s;
        s.config.probe_scale = 3.0;
        return s;
    }

    std::string remote() const { return " --port " + std::to_string(port); }

    TempDir dir;
    MarketHandle handle;
    MarketServer server;
    int port;
};

} // namespace

TEST(Cli, BenchReportIsByteStable) {
    TempDir dir;
    const auto a = dir.path() / "a.json";
    const auto b = dir.path() / "b.json";
    const auto csv = dir.path() / "a.csv";
    const std::string base = cli() + " bench fig4 --trials 1 --seed 7 ";
    ASSERT_EQ(run_command(base + "--out " + a.string() + " --csv " + csv.string()).status, 0);
    ASSERT_EQ(run_command(base + "--out " + b.string()).status, 0);
    EXPECT_EQ(slurp(a), slurp(b));
    const json report = json::parse(slurp(a));
    EXPECT_EQ(report.at("experiment"), "fig4");
    EXPECT_EQ(report.at("seed"), 7);
    EXPECT_EQ(report.at("trials").size(), 1u);
    const std::string rows = slurp(csv);
    EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 2);
    EXPECT_NE(rows.find("oracle_best"), std::string::npos);
}

TEST(Cli, SubmitSearchDeployRoundTrip) {
    LiveMarket market;
    const fs::path d = market.dir.path();
    write_json(d / "tags.json", plane_tags());
    Rng rng(3);
    const double centres[][2] = {{-2, 0}, {2, 0}, {0, 2}};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto s = task_sample(rng, centres[i][0], centres[i][1], 120);
        const auto data = d / ("dev" + std::to_string(i) + ".json");
        const auto model = d / ("model" + std::to_string(i) + ".json");
        write_json(data, data_json(s.x, s.y));
        ASSERT_EQ(run_command(cli() + " train --kind ridge --data " + data.string() + " --out " + model.string()).status,
                  0);
        const auto submitted = run_command(cli() + " submit --n 8 --tags " + (d / "tags.json").string() + " --data " +
                                           data.string() + " --model " + model.string() + market.remote());
        ASSERT_EQ(submitted.status, 0);
        EXPECT_EQ(std::stoull(submitted.out), i + 1);
    }
    EXPECT_EQ(market.handle.snapshot()->records.size(), 3u);

    const auto user = task_sample(rng, 2, 0, 100);
    write_json(d / "user.json", data_json(user.x, user.y));
    for (const bool unlabeled : {false, true}) {
        const auto found = run_command(cli() + " search --n 10 --seed 4 --top-k 3 --tags " +
                                       (d / "tags.json").string() + " --data " + (d / "user.json").string() +
                                       (unlabeled ? " --unlabeled" : "") + market.remote());
        ASSERT_EQ(found.status, 0);
        const json out = json::parse(found.out);
        ReduceOptions ro;
        ro.seed = 4;
        const auto snap = market.handle.snapshot();
        const Requirement req =
            build_requirement(plane_tags(), user.x, unlabeled ? std::nullopt : std::optional<Matrix>(user.y), 10,
                              island_kernel_for(*snap, plane_tags()),
                              unlabeled ? MatchMode::input_marginal : MatchMode::joint, ro);
        EXPECT_EQ(out.at("mode"), to_string(req.mode));
        EXPECT_EQ(out.at("matches"), matches_to_json(search_single(*snap, req, 3)));
        EXPECT_EQ(out.at("matches").at(0).at("id"), 2);
    }

    const auto deployed = run_command(cli() + " deploy --plan top1 --tags " + (d / "tags.json").string() +
                                      " --train " + (d / "user.json").string() + " --data " +
                                      (d / "user.json").string() + " --out " + (d / "pred.json").string() +
                                      market.remote());
    ASSERT_EQ(deployed.status, 0);
    const json pred = json::parse(slurp(d / "pred.json"));
    EXPECT_EQ(pred.at("learnwares"), json::array({2}));
    const Matrix expected = load_predictor(market.handle.snapshot()->record(2).model)->predict(user.x);
    EXPECT_EQ(codec::matrix_from_json(pred.at("y")), expected);

    const auto ensemble = run_command(cli() + " deploy --plan topk+user --k 2 --tags " + (d / "tags.json").string() +
                                      " --train " + (d / "user.json").string() + " --data " +
                                      (d / "user.json").string() + " --out " + (d / "pred2.json").string() +
                                      market.remote());
    ASSERT_EQ(ensemble.status, 0);
    EXPECT_EQ(json::parse(slurp(d / "pred2.json")).at("learnwares").size(), 2u);
}

TEST(Cli, InitAndInspect) {
    TempDir dir;
    const auto root = (dir.path() / "m").string();
    ASSERT_EQ(run_command(cli() + " market init --probe-scale 2.5 --root " + root).status, 0);
    EXPECT_EQ(run_command(cli() + " market init --root " + root + " 2>/dev/null").status, 1);
    const auto inspected = run_command(cli() + " market inspect --root " + root);
    ASSERT_EQ(inspected.status, 0);
    const json j = json::parse(inspected.out);
    EXPECT_EQ(j.at("config").at("probe_scale"), 2.5);
    EXPECT_TRUE(j.at("learnwares").empty());
}

TEST(Cli, ExitCodes) {
    TempDir dir;
    EXPECT_EQ(run_command(cli() + " --help").status, 0);
    EXPECT_EQ(run_command(cli() + " frobnicate 2>/dev/null").status, 1);
    EXPECT_EQ(run_command(cli() + " bench fig9 --out " + (dir.path() / "x.json").string() + " 2>/dev/null").status, 1);
    EXPECT_EQ(run_command(cli() + " train --kind ridge --data /does/not/exist --out x 2>/dev/null").status, 1);

    write_json(dir.path() / "tags.json", plane_tags());
    write_json(dir.path() / "data.json", json{{"x", json::array({json::array({0.0, 1.0})})}});
    EXPECT_EQ(run_command(cli() + " search --port 1 --tags " + (dir.path() / "tags.json").string() + " --data " +
                          (dir.path() / "data.json").string() + " 2>/dev/null")
                  .status,
              2);

    // a QA rejection: the model reads three inputs, the tags declare two
    LiveMarket market;
    Rng rng(5);
    const Matrix x = learnware::testing::random_matrix(rng, 30, 3);
    write_json(dir.path() / "wide.json", data_json(x, Matrix(x.col(0))));
    ASSERT_EQ(run_command(cli() + " train --kind ridge --data " + (dir.path() / "wide.json").string() + " --out " +
                          (dir.path() / "wide_model.json").string())
                  .status,
              0);
    const auto s = task_sample(rng, 0, 0, 30);
    write_json(dir.path() / "dev.json", data_json(s.x, s.y));
    EXPECT_EQ(run_command(cli() + " submit --tags " + (dir.path() / "tags.json").string() + " --data " +
                          (dir.path() / "dev.json").string() + " --model " +
                          (dir.path() / "wide_model.json").string() + market.remote() + " 2>/dev/null")
                  .status,
              2);
}
