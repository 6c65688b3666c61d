#include "learnware/client.hpp"
#include "learnware/service.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <mutex>
#include <thread>

using namespace learnware;
using learnware::testing::max_matrix_rows;
using learnware::testing::task_sample;
using learnware::testing::TempDir;

namespace {

const OutputDesc kScalar{OutputKind::regression, 1};

json plane_tags() {
    return json::parse(R"({"input":[{"name":"features","dim":2}],
                           "output":{"kind":"regression","dim":1},"objective":"rmse"})");
}

MarketState seeded_market() {
    MarketState s;
    s.config.probe_scale = 3.0;
    Rng rng(31);
    const double centres[][2] = {{-2, 0}, {2, 0}, {0, 2}, {0, -2}};
    for (const auto& c : centres) {
        const auto data = task_sample(rng, c[0], c[1], 80);
        const auto model = train_builtin(ModelKind::builtin_ridge, data.x, data.y);
        submit(s, model->artifact(), plane_tags(), sketch_from_data(data.x, data.y, kScalar), 8);
    }
    return s;
}

// A running server over a handle; the client talks to it over loopback.
struct Service {
    explicit Service(MarketState state = seeded_market(), std::optional<fs::path> root = std::nullopt)
        : handle(std::move(state), std::move(root)), server(handle), port(server.start()), client("127.0.0.1", port) {}

    MarketHandle handle;
    MarketServer server;
    int port;
    MarketClient client;
};

// Developer side of a submission: resolve the island kernel remotely, reduce locally.
json remote_submit(MarketClient& client, Rng& rng, double cx, double cy, std::size_t n = 8,
                   ModelKind kind = ModelKind::builtin_ridge) {
    const auto data = task_sample(rng, cx, cy, 80);
    const auto model = train_builtin(kind, data.x, data.y, json{{"rounds", 4}});
    const KernelSpec k = client.resolve_island(plane_tags(), model->artifact());
    const RkmeSpec spec = reduce(sketch_from_data(data.x, data.y, kScalar), n, k);
    return client.submit(model->artifact(), plane_tags(), spec, 0.1);
}

Requirement user_requirement(MarketClient& client, Rng& rng, double cx, double cy, bool labelled = true) {
    const auto data = task_sample(rng, cx, cy, 100);
    return build_requirement(plane_tags(), data.x, labelled ? std::optional<Matrix>(data.y) : std::nullopt, 10,
                             client.island_kernel(plane_tags()),
                             labelled ? MatchMode::joint : MatchMode::input_marginal);
}

httplib::Result raw_post(int port, const std::string& path, const std::string& body) {
    httplib::Client c("127.0.0.1", port);
    return c.Post(path, body, "application/json");
}

json error_of(const httplib::Result& res) {
    EXPECT_TRUE(res);
    const json j = json::parse(res->body);
    EXPECT_TRUE(j.contains("error")) << res->body;
    EXPECT_TRUE(j["error"].contains("code"));
    EXPECT_TRUE(j["error"].contains("message"));
    return j["error"];
}

} // namespace

TEST(Service, SubmitThenGetReturnsIdenticalRecord) {
    Service svc;
    Rng rng(1);
    const json submitted = remote_submit(svc.client, rng, 3, 3);
    const auto id = submitted.at("id").get<LearnwareId>();
    EXPECT_EQ(id, 5u);
    EXPECT_EQ(svc.client.record(id), submitted);
    EXPECT_EQ(submitted, record_to_json(svc.handle.snapshot()->record(id), false));
    EXPECT_EQ(svc.client.model(id), svc.handle.snapshot()->record(id).model);
    EXPECT_EQ(submitted.at("claimed_epsilon").get<double>(), 0.1);
}

TEST(Service, SearchWithStoredSpecRanksItFirst) {
    Service svc;
    const auto snap = svc.handle.snapshot();
    for (LearnwareId id = 1; id <= 4; ++id) {
        Requirement req;
        req.tags = plane_tags();
        req.spec = snap->record(id).spec;
        const auto matches = svc.client.search(req, 4);
        ASSERT_EQ(matches.size(), 4u);
        EXPECT_EQ(matches.front().id, id);
        EXPECT_EQ(matches.front().distance, 0.0);
        EXPECT_EQ(matches, search_single(*snap, req, 4));
    }
}

TEST(Service, MixtureAndAnchorsOverHttp) {
    Service svc;
    Rng rng(2);
    const Requirement req = user_requirement(svc.client, rng, -2, 0);
    const auto snap = svc.handle.snapshot();
    const MixtureSolution remote = svc.client.search_mixture(req);
    const MixtureSolution local = search_mixture(*snap, req);
    EXPECT_EQ(remote.weights, local.weights);
    EXPECT_EQ(remote.residual, local.residual);

    const AnchorSession s = svc.client.start_anchors(plane_tags(), 2);
    EXPECT_EQ(s.anchors.size(), 2u);
    std::map<LearnwareId, std::vector<double>> ind;
    for (LearnwareId a : s.anchors) {
        ind[a] = {a == s.anchors.front() ? 0.9 : 0.2};
    }
    const AnchorRanking r = svc.client.report_anchors(s.id, ind);
    EXPECT_EQ(r.ranked.size(), 4u);
    EXPECT_EQ(r.ranked.front().first, s.anchors.front());
    EXPECT_EQ(svc.handle.snapshot()->session(s.id).reported.size(), 2u);
    EXPECT_EQ(svc.client.islands().size(), 1u);
}

TEST(Service, ConcurrentSearchesEqualSerialResults) {
    Service svc;
    Rng rng(3);
    std::vector<Requirement> reqs;
    const double centres[][2] = {{-2, 0}, {2, 0}, {0, 2}, {0, -2}, {1, 1}};
    for (const auto& c : centres) {
        reqs.push_back(user_requirement(svc.client, rng, c[0], c[1], reqs.size() % 2 == 0));
    }
    const auto snap = svc.handle.snapshot();
    std::vector<std::vector<Match>> serial;
    for (const auto& r : reqs) {
        serial.push_back(search_single(*snap, r, 4));
    }

    constexpr int kRequests = 1000;
    constexpr int kThreads = 8;
    std::atomic<int> next{0};
    std::atomic<int> mismatches{0};
    std::atomic<int> done{0};
    std::vector<std::thread> workers;
    for (int t = 0; t < kThreads; ++t) {
        workers.emplace_back([&] {
            MarketClient c("127.0.0.1", svc.port);
            for (int i = next++; i < kRequests; i = next++) {
                const auto idx = static_cast<std::size_t>(i) % reqs.size();
                if (c.search(reqs[idx], 4) != serial[idx]) {
                    ++mismatches;
                }
                ++done;
            }
        });
    }
    for (auto& w : workers) {
        w.join();
    }
    EXPECT_EQ(done.load(), kRequests);
    EXPECT_EQ(mismatches.load(), 0);
}

TEST(Service, NoPayloadCarriesMoreRowsThanTheReducedSet) {
    Service svc;
    std::mutex mu;
    std::vector<std::pair<std::string, json>> captured;
    svc.client.set_wire_tap([&](const std::string&, const std::string& path, const std::string& body) {
        std::lock_guard lock(mu);
        captured.emplace_back(path, body.empty() ? json(nullptr) : json::parse(body));
    });
    Rng rng(4);
    remote_submit(svc.client, rng, 3, -3, 6);
    remote_submit(svc.client, rng, -3, 3, 6, ModelKind::builtin_stump_ensemble);
    const Requirement labelled = user_requirement(svc.client, rng, 3, -3);
    svc.client.search(labelled);
    svc.client.search_mixture(labelled);
    svc.client.search(user_requirement(svc.client, rng, -3, 3, false));

    std::size_t spec_bodies = 0;
    for (const auto& [path, body] : captured) {
        if (!body.contains("spec")) {
            continue;
        }
        ++spec_bodies;
        const auto n = body["spec"]["n"].get<std::size_t>();
        EXPECT_EQ(body["spec"]["points"].size(), n) << path;
        EXPECT_LE(max_matrix_rows(body), n) << path;
    }
    EXPECT_EQ(spec_bodies, 5u);
    // the user side sent 100 rows of data to nobody: the largest requirement is 10 rows
    for (const auto& [path, body] : captured) {
        EXPECT_LE(max_matrix_rows(body), 10u) << path;
    }
}

TEST(Service, PayloadSchemaAdmitsOnlyReducedSpecs) {
    Service svc;
    const RkmeSpec spec = svc.handle.snapshot()->record(1).spec;
    json body{{"tags", plane_tags()}, {"spec", to_json(spec)}};

    json extra = body;
    extra["x"] = json::array({json::array({1.0, 2.0})});
    auto res = raw_post(svc.port, "/search", extra.dump());
    EXPECT_EQ(res->status, 400);
    EXPECT_EQ(error_of(res)["code"], "bad_request");

    json padded = body;
    padded["spec"]["points"].push_back(padded["spec"]["points"][0]);
    res = raw_post(svc.port, "/search", padded.dump());
    EXPECT_EQ(res->status, 400);

    json oversized = body;
    oversized["spec"]["n"] = 10000;
    res = raw_post(svc.port, "/search", oversized.dump());
    EXPECT_EQ(res->status, 400);
}

TEST(Service, ErrorEnvelope) {
    Service svc;
    auto res = raw_post(svc.port, "/search", "{not json");
    EXPECT_EQ(res->status, 400);
    EXPECT_EQ(error_of(res)["code"], "bad_request");

    httplib::Client c("127.0.0.1", svc.port);
    res = c.Get("/learnwares/99");
    EXPECT_EQ(res->status, 404);
    EXPECT_EQ(error_of(res)["code"], "not_found");
    res = c.Get("/learnwares/abc");
    EXPECT_EQ(res->status, 404);
    res = raw_post(svc.port, "/anchors/s404/report", R"({"indicators":{}})");
    EXPECT_EQ(res->status, 404);

    // a three-input model under two-input tags fails QA with a report
    Rng rng(5);
    const Matrix x = learnware::testing::random_matrix(rng, 30, 3);
    const auto wrong = train_builtin(ModelKind::builtin_ridge, x, x.col(0));
    const RkmeSpec spec = svc.handle.snapshot()->record(1).spec;
    try {
        svc.client.submit(wrong->artifact(), plane_tags(), spec);
        FAIL() << "expected a QA rejection";
    } catch (const RemoteError& e) {
        EXPECT_EQ(e.status, 422);
        EXPECT_EQ(e.code, "qa_rejected");
        EXPECT_EQ(e.report.at("status"), "rejected");
        EXPECT_EQ(e.report.at("reason"), "shape");
    }
    EXPECT_EQ(svc.handle.snapshot()->records.size(), 4u);

    ModelArtifact external;
    external.kind = ModelKind::external;
    external.params = json{{"command", json::array({"/bin/true"})}};
    try {
        svc.client.submit(external, plane_tags(), spec);
        FAIL() << "expected a refusal";
    } catch (const RemoteError& e) {
        EXPECT_EQ(e.status, 400);
    }
}

TEST(Service, MultipartSubmission) {
    Service svc;
    Rng rng(6);
    const auto data = task_sample(rng, 3, 3, 80);
    const auto model = train_builtin(ModelKind::builtin_ridge, data.x, data.y);
    const RkmeSpec spec =
        reduce(sketch_from_data(data.x, data.y, kScalar), 8, svc.client.island_kernel(plane_tags()));
    httplib::Client c("127.0.0.1", svc.port);
    const httplib::MultipartFormDataItems items{
        {"tags", plane_tags().dump(), "", "application/json"},
        {"spec", to_json(spec).dump(), "spec.json", "application/json"},
        {"artifact", to_json(model->artifact()).dump(), "model.json", "application/json"}};
    const auto res = c.Post("/learnwares", items);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 201) << res->body;
    EXPECT_EQ(json::parse(res->body).at("id"), 5);
    EXPECT_EQ(svc.handle.snapshot()->record(5).spec, spec);
}

TEST(Service, WritesArePersistedBeforePublication) {
    TempDir dir;
    Service svc(seeded_market(), dir.path());
    const auto before = svc.handle.snapshot();
    Rng rng(7);
    remote_submit(svc.client, rng, 3, 3);
    svc.client.start_anchors(plane_tags(), 2);
    EXPECT_EQ(before->records.size(), 4u);
    const auto after = svc.handle.snapshot();
    EXPECT_EQ(after->records.size(), 5u);
    EXPECT_EQ(state_document(load_state(dir.path())), state_document(*after));
}
