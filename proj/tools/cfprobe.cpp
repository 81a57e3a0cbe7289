// cfprobe: measure crowd-worker social bias with disguised counterfactual
// probe pairs, then screen or reweight workers before label aggregation.
//
// Subcommands mirror the pipeline stages:
//   plan        build per-worker task plans with hidden probe pairs
//   collect     simulate worker responses for existing plans
//   score       turn responses into per-worker bias reports
//   aggregate   combine responses into one label per query under a policy
//   evaluate    fairness metrics over an aggregated dataset
//   experiment  run the whole pipeline on a synthetic population

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfprobe/config.hpp"
#include "cfprobe/io.hpp"

namespace fs = std::filesystem;
using cfprobe::Error;
using cfprobe::io::json;

namespace {

struct LoadedConfig {
    json value;
    std::string bytes;
    std::string path;
    std::string dir;
};

LoadedConfig load_config(const std::string& path) {
    LoadedConfig cfg;
    cfg.path = path;
    cfg.bytes = cfprobe::io::read_file(path);
    cfg.value = json::parse(cfg.bytes, nullptr, false);
    if (cfg.value.is_discarded()) throw Error(path + ": malformed JSON");
    fs::path p(path);
    cfg.dir = p.has_parent_path() ? p.parent_path().string() : "";
    return cfg;
}

cfprobe::LabelScale parse_scale_flag(const std::string& s) {
    auto comma = s.find(',');
    if (comma == std::string::npos) throw Error("--scale expects 'min,max', got '" + s + "'");
    cfprobe::LabelScale scale;
    try {
        scale.min_label = std::stoi(s.substr(0, comma));
        scale.max_label = std::stoi(s.substr(comma + 1));
    } catch (const std::exception&) {
        throw Error("--scale expects 'min,max', got '" + s + "'");
    }
    cfprobe::check_scale(scale);
    return scale;
}

// true = at least one error was reported
bool report_diagnostics(const std::vector<cfprobe::io::Diagnostic>& diagnostics) {
    for (const auto& d : diagnostics) std::cerr << "error: " << d.str() << "\n";
    return !diagnostics.empty();
}

std::vector<std::string> files_with_suffix(const std::string& path, const std::string& suffix) {
    if (!fs::is_directory(path)) return {path};
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(path))
        if (entry.is_regular_file() && entry.path().filename().string().ends_with(suffix))
            out.push_back(entry.path().string());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw Error("no *" + suffix + " files found in '" + path + "'");
    return out;
}

// hidden maps keyed by worker id, plus per-file bytes for the manifest
struct HiddenMaps {
    std::map<std::string, cfprobe::io::HiddenPlan> by_worker;
    std::map<std::string, std::string> input_bytes;
};

HiddenMaps read_hidden_maps(const std::string& path) {
    HiddenMaps out;
    for (const auto& file : files_with_suffix(path, ".hidden")) {
        cfprobe::io::HiddenPlan plan = cfprobe::io::read_hidden_map(file);
        out.input_bytes[fs::path(file).filename().string()] = cfprobe::io::read_file(file);
        std::string worker_id = plan.worker_id;
        if (!out.by_worker.emplace(worker_id, std::move(plan)).second)
            throw Error(file + ": duplicate hidden map for worker '" + worker_id + "'");
    }
    return out;
}

// --- plan -------------------------------------------------------------------

struct PlanOpts {
    std::string queries, config, out;
    std::optional<std::uint64_t> seed;
};

int run_plan(const PlanOpts& o) {
    LoadedConfig cfg = load_config(o.config);
    cfprobe::io::PlanSetup setup = cfprobe::io::parse_plan_config(cfg.value, cfg.dir, cfg.path);
    if (o.seed) setup.seed = *o.seed;

    std::vector<cfprobe::io::Diagnostic> diagnostics;
    cfprobe::io::QueryFile pool = cfprobe::io::read_queries(o.queries, setup.schema, setup.scale, diagnostics);
    if (report_diagnostics(diagnostics)) return 1;

    const int x = setup.plan.total_items;
    const int n = setup.plan.pairs_per_worker;
    if (static_cast<int>(pool.queries.size()) < x - n)
        throw Error("pool has " + std::to_string(pool.queries.size()) + " queries but the plan needs " +
                    std::to_string(x - n) + " (" + std::to_string(n) + " probe sources + " +
                    std::to_string(x - 2 * n) + " fillers)");

    // probe sources and fillers are drawn once and shared across workers
    cfprobe::RandomStream selector(cfprobe::derive_seed(setup.seed, "selection"));
    std::vector<std::size_t> order(pool.queries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    selector.shuffle(order);
    std::vector<cfprobe::Query> sources, fillers;
    for (int i = 0; i < n; ++i) sources.push_back(pool.queries[order[i]]);
    for (std::size_t i = n; i < order.size() && static_cast<int>(fillers.size()) < x - 2 * n; ++i)
        fillers.push_back(pool.queries[order[i]]);

    std::uint64_t disguise_seed = cfprobe::derive_seed(setup.seed, "disguise");
    std::vector<cfprobe::ProbePair> pairs;
    for (const auto& q : sources) {
        cfprobe::RandomStream stream(cfprobe::derive_seed(disguise_seed, q.query_id));
        pairs.push_back(
            cfprobe::make_probe_pair(q, setup.sensitive, setup.disguise, setup.schema, setup.target_group, stream));
        auto violations = cfprobe::validate_probe_pair(pairs.back(), setup.sensitive);
        if (!violations.empty())
            throw Error("internal: probe pair for '" + q.query_id + "' failed validation: " +
                        violations.front().message);
    }

    cfprobe::PlanConfig plan_cfg = setup.plan;
    plan_cfg.rng_seed = cfprobe::derive_seed(setup.seed, "plan");

    std::map<std::string, std::string> inputs = setup.resource_bytes;
    inputs[fs::path(o.queries).filename().string()] = cfprobe::io::read_file(o.queries);
    cfprobe::io::RunManifest manifest = cfprobe::io::make_manifest("plan", setup.seed, cfg.bytes, inputs);

    fs::create_directories(o.out);
    for (const auto& worker : setup.workers) {
        cfprobe::TaskPlan plan = cfprobe::build_plan(worker, fillers, pairs, plan_cfg);
        auto violations = cfprobe::validate_plan(plan, plan_cfg);
        if (!violations.empty())
            throw Error("internal: plan for worker '" + worker + "' failed validation: " +
                        violations.front().message);
        cfprobe::io::atomic_write_file((fs::path(o.out) / (worker + ".plan")).string(),
                                       cfprobe::io::visible_plan_to_jsonl(plan, setup.schema, manifest));
        cfprobe::io::atomic_write_file((fs::path(o.out) / (worker + ".hidden")).string(),
                                       cfprobe::io::hidden_map_to_jsonl(plan, plan_cfg, manifest));
    }
    cfprobe::io::atomic_write_file((fs::path(o.out) / "probes.jsonl").string(),
                                   cfprobe::io::probes_to_jsonl(pairs, setup.schema, manifest));

    std::cout << "planned " << setup.workers.size() << " workers: " << x << " items each, " << n
              << " probe pairs, min separation " << plan_cfg.min_separation << "\n";
    std::cout << "wrote " << setup.workers.size() << " *.plan / *.hidden files and probes.jsonl to " << o.out << "\n";
    return 0;
}

// --- collect ------------------------------------------------------------------

struct CollectOpts {
    std::string plan_dir, config, out;
    std::optional<std::uint64_t> seed;
};

int run_collect(const CollectOpts& o) {
    LoadedConfig cfg = load_config(o.config);
    cfprobe::io::SimSetup setup = cfprobe::io::parse_sim_config(cfg.value, cfg.path);
    if (o.seed) setup.seed = *o.seed;

    // the simulated worker sees exactly what a real worker would: the
    // visible plan only, never the hidden map
    std::map<std::string, cfprobe::io::VisiblePlan> plans;
    std::map<std::string, std::string> inputs;
    for (const auto& file : files_with_suffix(o.plan_dir, ".plan")) {
        cfprobe::io::VisiblePlan plan = cfprobe::io::read_visible_plan(file, setup.schema);
        inputs[fs::path(file).filename().string()] = cfprobe::io::read_file(file);
        std::string worker_id = plan.worker_id;
        if (!plans.emplace(worker_id, std::move(plan)).second)
            throw Error(file + ": duplicate plan for worker '" + worker_id + "'");
    }

    int total = 0;
    for (const auto& g : setup.population) total += g.count;
    if (total != static_cast<int>(plans.size()))
        throw Error("population declares " + std::to_string(total) + " workers but " + o.plan_dir + " holds " +
                    std::to_string(plans.size()) + " plans");

    // profiles are dealt over workers in sorted-id order, group by group
    std::vector<cfprobe::WorkerProfile> profiles;
    for (const auto& g : setup.population)
        for (int i = 0; i < g.count; ++i) profiles.push_back(g.profile);

    std::vector<cfprobe::Response> responses;
    std::map<std::string, std::vector<cfprobe::SurveyAnswer>> surveys;
    std::size_t index = 0;
    for (const auto& [worker_id, plan] : plans) {
        const cfprobe::WorkerProfile& profile = profiles[index++];
        cfprobe::RandomStream stream(cfprobe::derive_seed(setup.seed, "responses:" + worker_id));
        for (const auto& item : plan.items) {
            cfprobe::Query q;
            q.query_id = item.display_id;
            q.features = item.features;
            cfprobe::SimulatedLabel sim =
                cfprobe::simulate_response(profile, q, setup.latent, setup.sensitive, setup.scale, stream);
            responses.push_back({worker_id, item.display_id, sim.label});
        }
        if (setup.survey) surveys[worker_id] = cfprobe::simulate_survey(profile, *setup.survey);
    }

    cfprobe::io::RunManifest manifest = cfprobe::io::make_manifest("collect", setup.seed, cfg.bytes, inputs);
    fs::create_directories(o.out);
    cfprobe::io::atomic_write_file((fs::path(o.out) / "responses.jsonl").string(),
                                   cfprobe::io::responses_to_jsonl(responses, manifest));
    if (setup.survey)
        cfprobe::io::atomic_write_file((fs::path(o.out) / "surveys.jsonl").string(),
                                       cfprobe::io::survey_answers_to_jsonl(surveys, manifest));

    std::cout << "simulated " << responses.size() << " responses from " << plans.size() << " workers\n";
    std::cout << "wrote responses.jsonl" << (setup.survey ? " and surveys.jsonl" : "") << " to " << o.out << "\n";
    return 0;
}

// --- score -------------------------------------------------------------------

struct ScoreOpts {
    std::string responses, hidden_map, scale, out;
    int n_min = 5;
    std::string queries, config;  // optional: gold-label baseline
    std::string surveys;          // optional: self-report scores
};

int run_score(const ScoreOpts& o) {
    cfprobe::LabelScale scale = parse_scale_flag(o.scale);
    HiddenMaps hidden = read_hidden_maps(o.hidden_map);

    std::vector<cfprobe::io::Diagnostic> diagnostics;
    std::vector<cfprobe::Response> responses = cfprobe::io::read_responses(o.responses, scale, diagnostics);
    if (report_diagnostics(diagnostics)) return 1;

    for (const auto& r : responses)
        if (!hidden.by_worker.count(r.worker_id))
            diagnostics.push_back({o.responses, 0, "no hidden map for worker '" + r.worker_id + "'"});
    if (report_diagnostics(diagnostics)) return 1;

    std::vector<cfprobe::BiasReport> reports;
    for (const auto& [worker_id, plan] : hidden.by_worker)
        reports.push_back(cfprobe::make_bias_report(worker_id, plan.hidden_map, responses, scale, o.n_min));

    std::map<std::string, std::string> inputs = hidden.input_bytes;
    inputs[fs::path(o.responses).filename().string()] = cfprobe::io::read_file(o.responses);

    fs::create_directories(o.out);

    // optional gold-label fairness baseline per worker
    if (!o.queries.empty()) {
        if (o.config.empty()) throw Error("--queries needs --config for the schema and sensitive attribute");
        LoadedConfig cfg = load_config(o.config);
        cfprobe::io::EvalSetup eval = cfprobe::io::parse_eval_config(cfg.value, cfg.path);
        std::vector<cfprobe::io::Diagnostic> pool_diags;
        cfprobe::io::QueryFile pool = cfprobe::io::read_queries(o.queries, eval.schema, eval.scale, pool_diags);
        if (report_diagnostics(pool_diags)) return 1;
        std::map<std::string, cfprobe::Query> by_id;
        for (const auto& q : pool.queries) by_id[q.query_id] = q;
        int threshold = eval.positive_threshold ? *eval.positive_threshold
                                                : static_cast<int>(std::ceil(cfprobe::scale_midpoint(scale)));
        std::string out;
        inputs[fs::path(o.queries).filename().string()] = cfprobe::io::read_file(o.queries);
        cfprobe::io::RunManifest manifest = cfprobe::io::make_manifest("score", 0, cfg.bytes, inputs);
        out += cfprobe::io::jsonl_line(cfprobe::io::manifest_to_json(manifest));
        for (const auto& [worker_id, plan] : hidden.by_worker) {
            cfprobe::GoldBaselineReport gold = cfprobe::gold_baseline(responses, plan.hidden_map, worker_id, by_id,
                                                                      eval.sensitive, threshold);
            out += cfprobe::io::jsonl_line(cfprobe::io::gold_baseline_to_json(gold));
        }
        cfprobe::io::atomic_write_file((fs::path(o.out) / "gold_baseline.jsonl").string(), out);
    }

    // optional survey ingestion into self-report scores
    if (!o.surveys.empty()) {
        auto answers = cfprobe::io::read_survey_answers(o.surveys);
        inputs[fs::path(o.surveys).filename().string()] = cfprobe::io::read_file(o.surveys);
        std::vector<cfprobe::SelfReportScore> scores;
        for (const auto& [worker_id, a] : answers) scores.push_back(cfprobe::ingest_self_report(worker_id, a));
        cfprobe::io::RunManifest manifest = cfprobe::io::make_manifest("score", 0, "", inputs);
        cfprobe::io::atomic_write_file((fs::path(o.out) / "self_scores.jsonl").string(),
                                       cfprobe::io::self_scores_to_jsonl(scores, manifest));
    }

    cfprobe::io::RunManifest manifest = cfprobe::io::make_manifest("score", 0, "", inputs);
    cfprobe::io::atomic_write_file((fs::path(o.out) / "reports.jsonl").string(),
                                   cfprobe::io::bias_reports_to_jsonl(reports, manifest));

    int scored = 0;
    for (const auto& r : reports)
        if (r.raw_bias) ++scored;
    std::cout << "scored " << scored << "/" << reports.size() << " workers (n_min=" << o.n_min << ")\n";
    std::cout << "wrote reports.jsonl to " << o.out << "\n";
    return 0;
}

// --- aggregate ----------------------------------------------------------------

struct AggregateOpts {
    std::string responses, hidden_map, policy, scale, out;
    std::string reports;      // weight source: counterfactual bias reports
    std::string self_scores;  // weight source: self-report survey scores
};

int run_aggregate(const AggregateOpts& o) {
    cfprobe::LabelScale scale = parse_scale_flag(o.scale);
    LoadedConfig policy_cfg = load_config(o.policy);
    cfprobe::AggregationPolicy policy = cfprobe::io::parse_policy(policy_cfg.value, policy_cfg.path);
    HiddenMaps hidden = read_hidden_maps(o.hidden_map);

    std::vector<cfprobe::io::Diagnostic> diagnostics;
    std::vector<cfprobe::Response> responses = cfprobe::io::read_responses(o.responses, scale, diagnostics);
    if (report_diagnostics(diagnostics)) return 1;

    cfprobe::ResponsesByQuery by_query;
    std::set<std::string> workers;
    for (const auto& r : responses) {
        auto plan = hidden.by_worker.find(r.worker_id);
        if (plan == hidden.by_worker.end()) {
            diagnostics.push_back({o.responses, 0, "no hidden map for worker '" + r.worker_id + "'"});
            continue;
        }
        auto entry = plan->second.hidden_map.find(r.display_id);
        if (entry == plan->second.hidden_map.end()) {
            diagnostics.push_back(
                {o.responses, 0, "unknown display id '" + r.display_id + "' for worker '" + r.worker_id + "'"});
            continue;
        }
        by_query[entry->second.query_id].push_back({r.worker_id, r.label});
        workers.insert(r.worker_id);
    }
    if (report_diagnostics(diagnostics)) return 1;

    std::map<std::string, std::string> inputs = hidden.input_bytes;
    inputs[fs::path(o.responses).filename().string()] = cfprobe::io::read_file(o.responses);

    cfprobe::WeightMap weights;
    if (!o.reports.empty()) {
        std::vector<cfprobe::BiasReport> reports = cfprobe::io::read_bias_reports(o.reports);
        inputs[fs::path(o.reports).filename().string()] = cfprobe::io::read_file(o.reports);
        weights = cfprobe::worker_weights(reports, policy);
    } else if (!o.self_scores.empty()) {
        std::vector<cfprobe::SelfReportScore> scores = cfprobe::io::read_self_scores(o.self_scores);
        inputs[fs::path(o.self_scores).filename().string()] = cfprobe::io::read_file(o.self_scores);
        std::map<std::string, double> by_worker;
        for (const auto& s : scores) by_worker[s.worker_id] = s.survey_score;
        weights = cfprobe::score_weights(by_worker, policy);
    } else {
        for (const auto& w : workers) weights[w] = {1.0, false};  // unweighted baseline
    }

    for (const auto& w : workers)
        if (!weights.count(w)) diagnostics.push_back({o.responses, 0, "no weight source covers worker '" + w + "'"});
    if (report_diagnostics(diagnostics)) return 1;

    cfprobe::AggregatedDataset dataset = cfprobe::aggregate_labels(by_query, weights, policy, scale);

    cfprobe::io::RunManifest manifest = cfprobe::io::make_manifest("aggregate", 0, policy_cfg.bytes, inputs);
    cfprobe::io::atomic_write_file(o.out, cfprobe::io::dataset_to_jsonl(dataset, manifest));

    std::cout << "aggregated " << dataset.rows.size() << " queries (" << dataset.dropped.size()
              << " dropped: zero total weight) under " << to_string(policy.mode) << "/"
              << to_string(policy.combiner) << "\n";
    std::cout << "wrote " << o.out << "\n";
    return 0;
}

// --- evaluate -----------------------------------------------------------------

struct EvaluateOpts {
    std::string dataset, queries, config, probes, out;
};

int run_evaluate(const EvaluateOpts& o) {
    LoadedConfig cfg = load_config(o.config);
    cfprobe::io::EvalSetup setup = cfprobe::io::parse_eval_config(cfg.value, cfg.path);

    std::vector<cfprobe::io::Diagnostic> diagnostics;
    cfprobe::io::QueryFile pool = cfprobe::io::read_queries(o.queries, setup.schema, setup.scale, diagnostics);
    if (report_diagnostics(diagnostics)) return 1;

    std::map<std::string, cfprobe::Query> by_id;
    for (const auto& q : pool.queries) by_id[q.query_id] = q;
    if (!o.probes.empty())
        for (const auto& p : cfprobe::io::read_probes(o.probes, setup.schema))
            by_id[p.counterfactual.query_id] = p.counterfactual;

    cfprobe::AggregatedDataset dataset = cfprobe::io::read_dataset(o.dataset);
    int threshold = setup.positive_threshold ? *setup.positive_threshold
                                             : static_cast<int>(std::ceil(cfprobe::scale_midpoint(setup.scale)));
    cfprobe::FairnessSummary summary =
        cfprobe::demographic_parity_gap(dataset, by_id, setup.sensitive, threshold);

    std::map<std::string, std::string> inputs;
    inputs[fs::path(o.dataset).filename().string()] = cfprobe::io::read_file(o.dataset);
    inputs[fs::path(o.queries).filename().string()] = cfprobe::io::read_file(o.queries);
    if (!o.probes.empty()) inputs[fs::path(o.probes).filename().string()] = cfprobe::io::read_file(o.probes);

    json out;
    out["record_type"] = "fairness_summary";
    out["format_version"] = cfprobe::io::kFormatVersion;
    out["manifest"] = cfprobe::io::manifest_to_json(cfprobe::io::make_manifest("evaluate", 0, cfg.bytes, inputs));
    out["fairness"] = cfprobe::io::fairness_to_json(summary);
    cfprobe::io::atomic_write_file(o.out, out.dump(2) + "\n");

    std::cout << "parity gap";
    if (summary.parity_gap)
        std::cout << " |rate(" << summary.group_a << ") - rate(" << summary.group_b
                  << ")| = " << cfprobe::io::format_double(*summary.parity_gap);
    else
        std::cout << ": undefined (a group has no queries)";
    std::cout << " at threshold >= " << threshold << "\n";
    std::cout << "wrote " << o.out << "\n";
    return 0;
}

// --- experiment -----------------------------------------------------------------

struct ExperimentOpts {
    std::string queries, config, out;
    std::optional<std::uint64_t> seed;
};

int run_experiment_cmd(const ExperimentOpts& o) {
    LoadedConfig cfg = load_config(o.config);
    std::map<std::string, std::string> inputs;
    cfprobe::ExperimentConfig config =
        cfprobe::io::parse_experiment_config(cfg.value, cfg.dir, cfg.path, &inputs);
    if (o.seed) config.seed = *o.seed;

    std::vector<cfprobe::io::Diagnostic> diagnostics;
    cfprobe::io::QueryFile pool = cfprobe::io::read_queries(o.queries, config.schema, config.scale, diagnostics);
    if (report_diagnostics(diagnostics)) return 1;

    cfprobe::ExperimentReport report = cfprobe::run_experiment(config, pool.queries);

    inputs[fs::path(o.queries).filename().string()] = cfprobe::io::read_file(o.queries);
    cfprobe::io::RunManifest manifest = cfprobe::io::make_manifest("experiment", config.seed, cfg.bytes, inputs);

    // the timestamp lives only in manifest.json, so report.json and the CSV
    // tables are byte-identical across reruns of the same configuration
    fs::create_directories(o.out);
    cfprobe::io::atomic_write_file((fs::path(o.out) / "manifest.json").string(),
                                   cfprobe::io::manifest_to_json(manifest).dump(2) + "\n");
    cfprobe::io::atomic_write_file((fs::path(o.out) / "report.json").string(),
                                   cfprobe::io::experiment_report_to_json(report).dump(2) + "\n");
    cfprobe::io::atomic_write_file((fs::path(o.out) / "workers.csv").string(),
                                   cfprobe::io::experiment_workers_csv(report));
    cfprobe::io::atomic_write_file((fs::path(o.out) / "fairness.csv").string(),
                                   cfprobe::io::experiment_fairness_csv(report.comparison));

    std::cout << "experiment seed " << config.seed << ": " << report.workers.size() << " workers, "
              << report.total_responses << " responses (" << report.clipped_responses << " clipped)\n";
    for (const auto& [kind, ks] : report.by_kind)
        std::cout << "  " << kind << ": " << ks.scored << "/" << ks.workers
                  << " scored, mean bias " << cfprobe::io::format_double(ks.mean_score) << " (sd "
                  << cfprobe::io::format_double(ks.score_sd) << ")\n";
    if (report.separation_auc)
        std::cout << "  separation AUC (label-biased vs clean): "
                  << cfprobe::io::format_double(*report.separation_auc) << "\n";
    auto gap = [](const cfprobe::FairnessSummary& s) {
        return s.parity_gap ? cfprobe::io::format_double(*s.parity_gap) : std::string("undefined");
    };
    std::cout << "  parity gap: unweighted " << gap(report.comparison.unweighted) << ", counterfactual policy "
              << gap(report.comparison.counterfactual_policy) << ", self-report policy "
              << gap(report.comparison.self_report_policy) << "\n";
    std::cout << "wrote manifest.json, report.json, workers.csv, fairness.csv to " << o.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"disguised counterfactual probes for measuring and screening crowd-worker bias"};
    app.require_subcommand(1);

    PlanOpts plan_opts;
    CLI::App* plan = app.add_subcommand("plan", "build per-worker task plans with hidden probe pairs");
    plan->add_option("--queries", plan_opts.queries, "query pool (JSONL)")->required();
    plan->add_option("--config", plan_opts.config, "plan configuration (JSON)")->required();
    plan->add_option("--seed", plan_opts.seed, "override the configured seed");
    plan->add_option("--out", plan_opts.out, "output directory for *.plan / *.hidden files")->required();

    CollectOpts collect_opts;
    CLI::App* collect = app.add_subcommand("collect", "simulate worker responses for existing plans");
    collect->add_option("plan-dir", collect_opts.plan_dir, "directory holding *.plan files")->required();
    collect->add_option("--config", collect_opts.config, "simulation configuration (JSON)")->required();
    collect->add_option("--seed", collect_opts.seed, "override the configured seed");
    collect->add_option("--out", collect_opts.out, "output directory")->required();

    ScoreOpts score_opts;
    CLI::App* score = app.add_subcommand("score", "per-worker bias reports from responses");
    score->add_option("--responses", score_opts.responses, "worker responses (JSONL)")->required();
    score->add_option("--hidden-map", score_opts.hidden_map, "*.hidden file or directory")->required();
    score->add_option("--scale", score_opts.scale, "label scale as min,max")->required();
    score->add_option("--n-min", score_opts.n_min, "pairs needed for a reliable score")->capture_default_str();
    score->add_option("--queries", score_opts.queries, "query pool with gold labels (enables gold_baseline.jsonl)");
    score->add_option("--config", score_opts.config, "evaluation configuration (needed with --queries)");
    score->add_option("--surveys", score_opts.surveys, "survey answers (enables self_scores.jsonl)");
    score->add_option("--out", score_opts.out, "output directory")->required();

    AggregateOpts agg_opts;
    CLI::App* aggregate = app.add_subcommand("aggregate", "combine responses into one label per query");
    aggregate->add_option("--responses", agg_opts.responses, "worker responses (JSONL)")->required();
    aggregate->add_option("--hidden-map", agg_opts.hidden_map, "*.hidden file or directory")->required();
    aggregate->add_option("--policy", agg_opts.policy, "aggregation policy (JSON)")->required();
    aggregate->add_option("--scale", agg_opts.scale, "label scale as min,max")->required();
    CLI::Option* rep = aggregate->add_option("--reports", agg_opts.reports, "bias reports as the weight source");
    aggregate->add_option("--self-scores", agg_opts.self_scores, "self-report scores as the weight source")
        ->excludes(rep);
    aggregate->add_option("--out", agg_opts.out, "output dataset (JSONL)")->required();

    EvaluateOpts eval_opts;
    CLI::App* evaluate = app.add_subcommand("evaluate", "fairness metrics over an aggregated dataset");
    evaluate->add_option("dataset", eval_opts.dataset, "aggregated dataset (JSONL)")->required();
    evaluate->add_option("--queries", eval_opts.queries, "query pool (JSONL)")->required();
    evaluate->add_option("--config", eval_opts.config, "evaluation configuration (JSON)")->required();
    evaluate->add_option("--probes", eval_opts.probes, "probe audit file, to resolve counterfactual queries");
    evaluate->add_option("--out", eval_opts.out, "output fairness summary (JSON)")->required();

    ExperimentOpts exp_opts;
    CLI::App* experiment = app.add_subcommand("experiment", "run the whole pipeline on a synthetic population");
    experiment->add_option("--queries", exp_opts.queries, "query pool (JSONL)")->required();
    experiment->add_option("--config", exp_opts.config, "experiment configuration (JSON)")->required();
    experiment->add_option("--seed", exp_opts.seed, "override the configured seed");
    experiment->add_option("--out", exp_opts.out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (plan->parsed()) return run_plan(plan_opts);
        if (collect->parsed()) return run_collect(collect_opts);
        if (score->parsed()) return run_score(score_opts);
        if (aggregate->parsed()) return run_aggregate(agg_opts);
        if (evaluate->parsed()) return run_evaluate(eval_opts);
        if (experiment->parsed()) return run_experiment_cmd(exp_opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
