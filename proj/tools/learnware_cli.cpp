// learnware: operator and user command line for a learnware market.
//
// Exit status: 0 success, 1 usage error, 2 remote, QA or other failure.

#include "learnware/bench/experiments.hpp"
#include "learnware/client.hpp"
#include "learnware/reuse.hpp"
#include "learnware/service.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

using namespace learnware;

std::atomic<bool> g_stop{false};

json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot read " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw UsageError(path + " is not valid JSON: " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw UsageError("cannot write " + path);
    }
    out << text;
    if (!out.flush()) {
        throw UsageError("failed writing " + path);
    }
}

// Data files: {"x": [[..], ..], "y": [[..], ..]}; "y" is optional.
struct DataFile {
    Matrix x;
    std::optional<Matrix> y;
};

DataFile read_data(const std::string& path) {
    const json j = read_json(path);
    if (!j.is_object() || !j.contains("x")) {
        throw UsageError(path + " needs an \"x\" matrix");
    }
    DataFile d;
    d.x = codec::matrix_from_json(j.at("x"));
    if (j.contains("y") && !j.at("y").is_null()) {
        d.y = codec::matrix_from_json(j.at("y"));
        if (d.y->rows() != d.x.rows()) {
            throw UsageError(path + ": \"x\" and \"y\" differ in row count");
        }
    }
    return d;
}

// Classification labels may be given as class indices (one column) or as
// one-hot / score rows; sketches take indices.
Matrix sketch_labels(const Matrix& y, const OutputDesc& desc) {
    if (desc.kind == OutputKind::regression || y.cols() == 1) {
        return y;
    }
    Matrix idx(y.rows(), 1);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        idx(r, 0) = static_cast<double>(argmax_row(y, r));
    }
    return idx;
}

// Training targets in the model's output space: one-hot rows for classification.
Matrix training_targets(const Matrix& y, const OutputDesc& desc) {
    if (desc.kind == OutputKind::classification && y.cols() == 1) {
        return encode_labels(y, desc);
    }
    return y;
}

ModelKind parse_kind(const std::string& s) {
    return model_kind_from_string(s.rfind("builtin_", 0) == 0 || s == "external" ? s : "builtin_" + s);
}

json parse_json_arg(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw UsageError(std::string(what) + " is not valid JSON: " + e.what());
    }
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

struct Remote {
    std::string host = "127.0.0.1";
    int port = 8080;

    MarketClient client() const { return MarketClient(host, port); }
};

void add_remote(CLI::App* cmd, Remote& r) {
    cmd->add_option("--host", r.host, "Market service host")->capture_default_str();
    cmd->add_option("--port", r.port, "Market service port")->capture_default_str();
}

// Requirement from a data file: joint when labels are present, unless
// marginal matching is requested.
Requirement make_requirement(MarketClient& client, const json& tags, const DataFile& data, bool unlabeled,
                             std::size_t n, std::uint64_t seed) {
    const IslandSignature sig = make_signature(tags);
    const KernelSpec kernel = client.island_kernel(tags);
    const bool joint = !unlabeled && data.y.has_value();
    ReduceOptions ro;
    ro.seed = seed;
    return build_requirement(tags, data.x, joint ? std::optional<Matrix>(sketch_labels(*data.y, sig.output)) : std::nullopt,
                             n, kernel, joint ? MatchMode::joint : MatchMode::input_marginal, ro);
}

void on_signal(int) { g_stop = true; }

int run(int argc, char** argv) {
    CLI::App app{"Learnware market: submit, search and reuse trained models by their specifications"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    // market init | serve | inspect
    auto* market = app.add_subcommand("market", "Manage a market directory");
    market->require_subcommand(1);
    std::string root;
    double probe_scale = 1.0;
    std::string config_path;
    auto* init = market->add_subcommand("init", "Create an empty market");
    init->add_option("--root", root, "Market directory")->required();
    init->add_option("--config", config_path, "Market configuration JSON");
    init->add_option("--probe-scale", probe_scale, "Scale of the probe inputs used for QA and island calibration");
    std::string bind_host = "127.0.0.1";
    int bind_port = 8080;
    bool allow_external = false;
    auto* serve = market->add_subcommand("serve", "Serve a market over HTTP");
    serve->add_option("--root", root, "Market directory")->required();
    serve->add_option("--host", bind_host, "Bind address")->capture_default_str();
    serve->add_option("--port", bind_port, "Bind port; 0 picks a free port")->capture_default_str();
    serve->add_flag("--allow-external-models", allow_external, "Accept submissions of external adapter commands");
    auto* inspect = market->add_subcommand("inspect", "Summarise a market directory");
    inspect->add_option("--root", root, "Market directory")->required();

    Remote remote;
    std::string tags_path;
    std::string data_path;
    std::size_t n = 10;
    std::uint64_t seed = 0;

    // submit
    std::string model_path;
    std::optional<double> claimed_eps;
    std::optional<LearnwareId> replace;
    auto* submit_cmd = app.add_subcommand("submit", "Reduce a local sketch and submit a model with its specification");
    add_remote(submit_cmd, remote);
    submit_cmd->add_option("--tags", tags_path, "Tag document JSON")->required();
    submit_cmd->add_option("--data", data_path, "Training data JSON")->required();
    submit_cmd->add_option("--model", model_path, "Model artifact JSON")->required();
    submit_cmd->add_option("--n", n, "Reduced set size")->capture_default_str();
    submit_cmd->add_option("--claimed-eps", claimed_eps, "Claimed loss on the developer's own task");
    submit_cmd->add_option("--replace", replace, "Submit a new version of this learnware");
    submit_cmd->add_option("--seed", seed, "Reduction seed")->capture_default_str();

    // search
    bool unlabeled = false;
    std::size_t top_k = 10;
    auto* search_cmd = app.add_subcommand("search", "Rank learnwares against local data");
    add_remote(search_cmd, remote);
    search_cmd->add_option("--tags", tags_path, "Tag document JSON")->required();
    search_cmd->add_option("--data", data_path, "User data JSON")->required();
    search_cmd->add_flag("--unlabeled", unlabeled, "Match the input distribution only");
    search_cmd->add_option("--n", n, "Requirement size")->capture_default_str();
    search_cmd->add_option("--top-k", top_k, "Number of matches")->capture_default_str();
    search_cmd->add_option("--seed", seed, "Reduction seed")->capture_default_str();

    // search-mixture
    std::optional<std::size_t> cap;
    auto* mixture_cmd = app.add_subcommand("search-mixture", "Fit the input distribution as a mixture of learnwares");
    add_remote(mixture_cmd, remote);
    mixture_cmd->add_option("--tags", tags_path, "Tag document JSON")->required();
    mixture_cmd->add_option("--data", data_path, "User data JSON")->required();
    mixture_cmd->add_option("--n", n, "Requirement size")->capture_default_str();
    mixture_cmd->add_option("--cap", cap, "Candidate cap");
    mixture_cmd->add_option("--seed", seed, "Reduction seed")->capture_default_str();

    // anchors start | report
    auto* anchors = app.add_subcommand("anchors", "Identify learnwares through anchor feedback");
    anchors->require_subcommand(1);
    std::size_t anchor_k = 3;
    auto* anchors_start = anchors->add_subcommand("start", "Pick anchor learnwares to try");
    add_remote(anchors_start, remote);
    anchors_start->add_option("--tags", tags_path, "Tag document JSON")->required();
    anchors_start->add_option("--k", anchor_k, "Number of anchors")->capture_default_str();
    std::string session_id;
    std::string indicators_path;
    auto* anchors_report = anchors->add_subcommand("report", "Report anchor performance and rank the island");
    add_remote(anchors_report, remote);
    anchors_report->add_option("--session", session_id, "Session id")->required();
    anchors_report->add_option("--indicators", indicators_path, "JSON object: learnware id -> indicator list")
        ->required();

    // deploy
    std::string plan_name;
    std::string out_path;
    std::string train_path;
    std::vector<LearnwareId> ids;
    std::size_t plan_k = 2;
    std::string user_kind = "knn";
    std::string user_hyper_text = "{}";
    auto* deploy_cmd = app.add_subcommand("deploy", "Predict on local data with learnwares from the market");
    add_remote(deploy_cmd, remote);
    deploy_cmd->add_option("--plan", plan_name, "Reuse plan")
        ->required()
        ->check(CLI::IsMember({"top1", "top3", "topk+user", "selector", "augment"}));
    deploy_cmd->add_option("--data", data_path, "Inputs to predict (JSON)")->required();
    deploy_cmd->add_option("--out", out_path, "Prediction output JSON")->required();
    deploy_cmd->add_option("--ids", ids, "Learnwares to use; searched for when omitted")->delimiter(',');
    deploy_cmd->add_option("--tags", tags_path, "Tag document JSON, needed to search");
    deploy_cmd->add_option("--train", train_path, "Labeled user data for searching and for user models");
    deploy_cmd->add_option("--k", plan_k, "Learnwares combined with the user model (topk+user)")->capture_default_str();
    deploy_cmd->add_option("--n", n, "Requirement size")->capture_default_str();
    deploy_cmd->add_option("--user-kind", user_kind, "User model kind")->capture_default_str();
    deploy_cmd->add_option("--user-hyper", user_hyper_text, "User model hyperparameters (JSON)")->capture_default_str();
    deploy_cmd->add_option("--seed", seed, "Reduction and training seed")->capture_default_str();

    // train
    std::string kind_name;
    std::string hyper_text = "{}";
    auto* train_cmd = app.add_subcommand("train", "Train a builtin model and write its artifact");
    train_cmd->add_option("--kind", kind_name, "ridge, knn or stump_ensemble")->required();
    train_cmd->add_option("--data", data_path, "Training data JSON")->required();
    train_cmd->add_option("--out", out_path, "Artifact output JSON")->required();
    train_cmd->add_option("--hyper", hyper_text, "Hyperparameters (JSON)")->capture_default_str();
    train_cmd->add_option("--seed", seed, "Training seed")->capture_default_str();

    // bench
    std::string experiment;
    std::string csv_path;
    std::optional<std::size_t> trials;
    auto* bench_cmd = app.add_subcommand("bench", "Run a synthetic experiment and write its report");
    bench_cmd->add_option("experiment", experiment, "Experiment name")->required();
    bench_cmd->add_option("--seed", seed, "Experiment seed")->capture_default_str();
    bench_cmd->add_option("--out", out_path, "Report JSON")->required();
    bench_cmd->add_option("--csv", csv_path, "Per-trial CSV");
    bench_cmd->add_option("--trials", trials, "Override the number of trials (or seeds)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (init->parsed()) {
        MarketState state;
        if (!config_path.empty()) {
            state.config = MarketConfig::from_json(read_json(config_path));
        }
        if (init->count("--probe-scale") > 0) {
            state.config.probe_scale = probe_scale;
            state.config.validate();
        }
        if (fs::exists(fs::path(root) / "market.json")) {
            throw UsageError(root + " already holds a market");
        }
        save_state(state, root);
        std::cout << "initialised " << root << "\n";
    } else if (serve->parsed()) {
        MarketHandle handle = MarketHandle::open(root);
        ServiceOptions opts;
        opts.allow_external_models = allow_external;
        MarketServer server(handle, opts);
        const int port = server.start(bind_host, bind_port);
        std::cout << "listening on " << bind_host << ":" << port << std::endl;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop) {
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        }
        server.stop();
    } else if (inspect->parsed()) {
        const MarketState state = load_state(root);
        json islands = json::array();
        for (const auto& [id, island] : state.islands.all()) {
            islands.push_back(island_to_json(island));
        }
        json records = json::array();
        for (const auto& [id, r] : state.records) {
            records.push_back(json{{"id", id}, {"version", r.version}, {"island_id", r.island_id}, {"tags", r.tags},
                                   {"spec_rows", r.spec.n}, {"kind", to_string(r.model.kind)}});
        }
        print(json{{"config", state.config.to_json()},
                   {"islands", islands},
                   {"learnwares", records},
                   {"anchor_sessions", state.sessions.size()}});
    } else if (submit_cmd->parsed()) {
        const json tags = read_json(tags_path);
        const IslandSignature sig = make_signature(tags);
        const DataFile data = read_data(data_path);
        const ModelArtifact artifact = artifact_from_json(read_json(model_path));
        MarketClient client = remote.client();
        const KernelSpec kernel = client.resolve_island(tags, artifact);
        ReduceOptions ro;
        ro.seed = seed;
        const std::optional<Matrix> labels =
            data.y ? std::optional<Matrix>(sketch_labels(*data.y, sig.output)) : std::nullopt;
        const RkmeSpec spec = reduce(sketch_from_data(data.x, labels, sig.output),
                                     std::min<std::size_t>(n, static_cast<std::size_t>(data.x.rows())), kernel, ro);
        const json rec = client.submit(artifact, tags, spec, claimed_eps, replace);
        std::cout << rec.at("id").get<LearnwareId>() << "\n";
    } else if (search_cmd->parsed()) {
        const json tags = read_json(tags_path);
        MarketClient client = remote.client();
        const Requirement req = make_requirement(client, tags, read_data(data_path), unlabeled, n, seed);
        print(json{{"mode", to_string(req.mode)}, {"matches", matches_to_json(client.search(req, top_k))}});
    } else if (mixture_cmd->parsed()) {
        const json tags = read_json(tags_path);
        MarketClient client = remote.client();
        const Requirement req = make_requirement(client, tags, read_data(data_path), true, n, seed);
        print(mixture_to_json(client.search_mixture(req, cap)));
    } else if (anchors_start->parsed()) {
        MarketClient client = remote.client();
        print(session_to_json(client.start_anchors(read_json(tags_path), anchor_k)));
    } else if (anchors_report->parsed()) {
        const json ind = read_json(indicators_path);
        if (!ind.is_object()) {
            throw UsageError("indicators must be a JSON object keyed by learnware id");
        }
        std::map<LearnwareId, std::vector<double>> indicators;
        for (const auto& [key, values] : ind.items()) {
            indicators[std::stoull(key)] = values.get<std::vector<double>>();
        }
        MarketClient client = remote.client();
        print(ranking_to_json(client.report_anchors(session_id, indicators)));
    } else if (deploy_cmd->parsed()) {
        const DataFile data = read_data(data_path);
        std::optional<DataFile> train;
        if (!train_path.empty()) {
            train = read_data(train_path);
        }
        const bool needs_user = plan_name == "topk+user" || plan_name == "augment";
        if (needs_user && (!train || !train->y)) {
            throw UsageError("plan " + plan_name + " trains a user model and needs --train with labels");
        }
        MarketClient client = remote.client();
        std::map<LearnwareId, double> weights;
        if (ids.empty()) {
            if (tags_path.empty()) {
                throw UsageError("give --ids, or --tags so the market can be searched");
            }
            const json tags = read_json(tags_path);
            const DataFile& source = train ? *train : data;
            if (plan_name == "selector") {
                weights = client.search_mixture(make_requirement(client, tags, source, true, n, seed)).weights;
                for (const auto& [id, w] : weights) {
                    ids.push_back(id);
                }
            } else {
                const std::size_t want = plan_name == "top1" ? 1 : plan_name == "topk+user" ? plan_k : 3;
                for (const Match& m : client.search(make_requirement(client, tags, source, false, n, seed), want)) {
                    ids.push_back(m.id);
                }
            }
            if (ids.empty()) {
                throw RemoteError(404, "not_found", "the market returned no learnwares for this data");
            }
        }
        ReusePlan plan;
        OutputDesc desc;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const json rec = client.record(ids[i]);
            if (i == 0) {
                desc = make_signature(rec.at("tags")).output;
            }
            ReuseMember m = as_member(load_predictor(client.model(ids[i])), ids[i]);
            if (plan_name == "selector") {
                m.spec = spec_from_json(rec.at("spec"));
                m.weight = weights.count(ids[i]) ? weights.at(ids[i]) : 1.0 / static_cast<double>(ids.size());
            }
            plan.members.push_back(std::move(m));
        }
        if (plan_name == "top1") {
            plan.mode = ReuseMode::direct;
            plan.members.resize(1);
        } else if (plan_name == "top3") {
            plan.mode = ReuseMode::ensemble;
        } else if (plan_name == "selector") {
            plan.mode = ReuseMode::selector;
        } else {
            json hyper = parse_json_arg(user_hyper_text, "--user-hyper");
            const Matrix targets = training_targets(*train->y, desc);
            if (plan_name == "topk+user") {
                plan.mode = ReuseMode::ensemble_plus_user;
                const ModelKind kind = parse_kind(user_kind);
                if (kind == ModelKind::builtin_knn && !hyper.contains("k")) {
                    hyper["k"] = static_cast<std::size_t>(std::max(1.0, std::round(std::sqrt(static_cast<double>(train->x.rows())))));
                }
                plan.user_model = train_builtin(kind, train->x, targets, hyper, seed);
            } else {
                plan.mode = ReuseMode::feature_augment;
                const ModelKind kind = deploy_cmd->count("--user-kind") > 0 ? parse_kind(user_kind) : ModelKind::builtin_ridge;
                plan.user_model = train_builtin(kind, augment_features(plan.members, train->x), targets, hyper, seed);
            }
        }
        const Matrix y = deploy(plan, data.x, desc);
        write_text(out_path, json{{"plan", plan_name}, {"learnwares", ids}, {"y", codec::matrix_to_json(y)}}.dump(2) + "\n");
        std::cout << "wrote " << y.rows() << " predictions to " << out_path << "\n";
    } else if (train_cmd->parsed()) {
        const DataFile data = read_data(data_path);
        if (!data.y) {
            throw UsageError(data_path + " has no labels");
        }
        const auto model = train_builtin(parse_kind(kind_name), data.x, *data.y, parse_json_arg(hyper_text, "--hyper"), seed);
        write_text(out_path, to_json(model->artifact()).dump() + "\n");
    } else if (bench_cmd->parsed()) {
        const bench::Experiment& e = bench::find_experiment(experiment);
        const bench::ExperimentReport report = e.run(seed, trials);
        write_text(out_path, report.to_json().dump(2) + "\n");
        if (!csv_path.empty()) {
            write_text(csv_path, report.trials_csv());
        }
        std::cout << report.summary.dump(2) << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const learnware::RemoteError& e) {
        std::cerr << "error: " << e.what();
        if (!e.report.is_null()) {
            std::cerr << "\n" << e.report.dump(2);
        }
        std::cerr << "\n";
        return 2;
    } catch (const learnware::QaRejection& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const learnware::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const learnware::CodecError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const learnware::NotFoundError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed input: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
