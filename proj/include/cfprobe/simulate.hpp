#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cfprobe/aggregate.hpp"
#include "cfprobe/counterfactual.hpp"
#include "cfprobe/model.hpp"
#include "cfprobe/random.hpp"
#include "cfprobe/scheduler.hpp"
#include "cfprobe/scoring.hpp"

namespace cfprobe {

enum class WorkerKind { unbiased, shift_biased, noisy, spammer, deceptive_biased };
enum class SurveyHonesty { honest, masked };

inline const char* to_string(WorkerKind k) {
    switch (k) {
        case WorkerKind::unbiased: return "unbiased";
        case WorkerKind::shift_biased: return "shift-biased";
        case WorkerKind::noisy: return "noisy";
        case WorkerKind::spammer: return "spammer";
        case WorkerKind::deceptive_biased: return "deceptive-biased";
    }
    return "?";
}

inline const char* to_string(SurveyHonesty h) { return h == SurveyHonesty::honest ? "honest" : "masked"; }

// Synthetic annotator: an additive label shift against the disfavored
// groups, Gaussian response noise, and a survey persona. A deceptive-biased
// worker shifts labels but answers the survey as if unbiased.
struct WorkerProfile {
    WorkerKind kind = WorkerKind::unbiased;
    double bias_shift = 0.0;  // delta, in label-scale units, signed
    double noise_sd = 0.0;    // sigma
    SurveyHonesty honesty = SurveyHonesty::honest;
    std::set<std::string> disfavored_groups;
};

inline void check_profile(const WorkerProfile& p) {
    if (!std::isfinite(p.bias_shift)) throw Error("bias shift must be finite");
    if (p.noise_sd < 0.0) throw Error("noise sd must be >= 0");
}

// Ground-truth response model: linear score over non-sensitive numeric
// features, clip-rounded to the scale. Ignores the sensitive attribute,
// identity fields and (unless explicitly enabled) noise-perturbed fields,
// so disguise transforms never legitimately change a label.
struct LatentModel {
    std::map<std::string, double> weights;  // numeric field -> weight
    double intercept = 0.0;

    double score(const Query& q) const {
        double total = intercept;
        for (const auto& [field, w] : weights) {
            const FieldValue* v = q.find(field);
            if (!v) throw Error("latent model field '" + field + "' missing from query '" + q.query_id + "'");
            if (v->kind != FieldKind::numeric)
                throw Error("latent model field '" + field + "' is not numeric");
            total += w * v->number;
        }
        return total;
    }
};

inline void check_latent_model(const LatentModel& model, const SensitiveSpec& spec,
                               const std::vector<std::string>& identity_fields,
                               const std::vector<std::string>& noise_fields, bool include_perturbed) {
    for (const auto& [field, w] : model.weights) {
        if (field == spec.attribute)
            throw Error("latent model must not weight the sensitive attribute '" + field + "'");
        for (const auto& f : identity_fields)
            if (f == field) throw Error("latent model must not weight identity field '" + field + "'");
        if (!include_perturbed)
            for (const auto& f : noise_fields)
                if (f == field)
                    throw Error("latent model weights perturbed field '" + field +
                                "' without include_perturbed");
    }
}

struct SimulatedLabel {
    int label = 0;
    bool clipped = false;

    bool operator==(const SimulatedLabel&) const = default;
};

// Round half away from zero, then clamp to the scale. Clipping is flagged
// because it attenuates observed bias scores.
inline SimulatedLabel clip_round(double value, const LabelScale& scale) {
    int rounded = static_cast<int>(std::llround(value));
    int clamped = std::clamp(rounded, scale.min_label, scale.max_label);
    return {clamped, clamped != rounded};
}

inline SimulatedLabel simulate_response(const WorkerProfile& worker, const Query& query, const LatentModel& latent,
                                        const SensitiveSpec& spec, const LabelScale& scale, RandomStream& stream) {
    check_profile(worker);
    if (worker.kind == WorkerKind::spammer)
        return {static_cast<int>(stream.uniform_int(scale.min_label, scale.max_label)), false};

    double value = latent.score(query);
    const FieldValue* group = query.find(spec.attribute);
    if (!group) throw Error("query '" + query.query_id + "' is missing sensitive field '" + spec.attribute + "'");
    if (worker.disfavored_groups.count(group->str)) value += worker.bias_shift;
    if (worker.noise_sd > 0.0) value += stream.normal(0.0, worker.noise_sd);
    return clip_round(value, scale);
}

struct SurveyItem {
    std::string item_id;
    double min_value = 1.0;
    double max_value = 5.0;
    bool reverse_coded = false;
};

// bias_reference is the |delta| that maps to the survey's maximum; honest
// answers scale linearly below it.
struct SurveyForm {
    std::vector<SurveyItem> items;
    double bias_reference = 4.0;
};

// Honest workers answer monotonically in |delta|; masked workers answer
// exactly as an unbiased worker would, whatever their delta.
inline std::vector<SurveyAnswer> simulate_survey(const WorkerProfile& worker, const SurveyForm& form) {
    if (form.bias_reference <= 0.0) throw Error("survey bias_reference must be > 0");
    double unit = 0.0;
    if (worker.honesty == SurveyHonesty::honest)
        unit = std::min(std::abs(worker.bias_shift) / form.bias_reference, 1.0);
    std::vector<SurveyAnswer> out;
    out.reserve(form.items.size());
    for (const auto& item : form.items) {
        double span = item.max_value - item.min_value;
        double value = item.reverse_coded ? item.max_value - unit * span : item.min_value + unit * span;
        value = std::clamp(value, item.min_value, item.max_value);  // guard the ends against rounding
        out.push_back({item.item_id, value, item.min_value, item.max_value, item.reverse_coded});
    }
    return out;
}

// --- whole-experiment harness ---------------------------------------------

struct PopulationGroup {
    int count = 0;
    WorkerProfile profile;
};

struct ExperimentConfig {
    LabelScale scale;
    Schema schema;
    SensitiveSpec sensitive;
    DisguiseConfig disguise;
    PlanConfig plan;  // plan.rng_seed and disguise.rng_seed are derived from `seed`
    LatentModel latent;
    bool latent_includes_perturbed = false;
    std::vector<PopulationGroup> population;
    SurveyForm survey;
    AggregationPolicy policy;
    std::optional<int> positive_threshold;  // default: scale midpoint, rounded up
    std::uint64_t seed = 0;
    std::string worker_prefix = "w";
};

struct WorkerResult {
    std::string worker_id;
    WorkerKind kind = WorkerKind::unbiased;
    double bias_shift = 0.0;
    double noise_sd = 0.0;
    SurveyHonesty honesty = SurveyHonesty::honest;
    BiasReport report;
    double self_report_score = 0.0;
};

struct KindStats {
    int workers = 0;
    double mean_score = 0.0;  // over workers with a usable score
    double score_sd = 0.0;
    int scored = 0;
};

struct ExperimentReport {
    std::vector<WorkerResult> workers;
    std::map<std::string, KindStats> by_kind;     // kind name -> stats
    std::optional<double> separation_auc;         // biased kinds vs unbiased kinds
    PipelineComparison comparison;
    int clipped_responses = 0;
    int clipped_pairs = 0;
    int total_responses = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::string worker_name(const std::string& prefix, int index, int total) {
    int digits = 1;
    for (int v = total - 1; v >= 10; v /= 10) ++digits;
    std::string n = std::to_string(index);
    return prefix + std::string(std::max(0, digits - static_cast<int>(n.size())), '0') + n;
}

// Rank-based separation (Mann-Whitney AUC) between the scores of
// label-biased kinds and label-unbiased kinds; spammers are excluded
// because uniform answering is a different failure mode.
inline std::optional<double> separation_auc(const std::vector<WorkerResult>& workers) {
    std::vector<double> biased, clean;
    for (const auto& w : workers) {
        if (!w.report.raw_bias) continue;
        if (w.kind == WorkerKind::shift_biased || w.kind == WorkerKind::deceptive_biased)
            biased.push_back(*w.report.raw_bias);
        else if (w.kind == WorkerKind::unbiased || w.kind == WorkerKind::noisy)
            clean.push_back(*w.report.raw_bias);
    }
    if (biased.empty() || clean.empty()) return std::nullopt;
    double wins = 0.0;
    for (double b : biased)
        for (double c : clean) {
            if (b > c)
                wins += 1.0;
            else if (b == c)
                wins += 0.5;
        }
    return wins / (static_cast<double>(biased.size()) * static_cast<double>(clean.size()));
}

}  // namespace detail

// Runs the whole pipeline on a synthetic population: probe generation,
// per-worker plans, simulated responses and surveys, probe-pair scoring, and the
// three-way pipeline comparison. Fully reproducible from the seed.
inline ExperimentReport run_experiment(const ExperimentConfig& config, const std::vector<Query>& pool) {
    check_scale(config.scale);
    check_sensitive_spec(config.sensitive);
    check_disguise_config(config.disguise);

    std::vector<std::string> identity_fields, noise_fields;
    for (const auto& [f, pools] : config.disguise.identity_pools) identity_fields.push_back(f);
    for (const auto& [f, eps] : config.disguise.noise_fields) noise_fields.push_back(f);
    check_latent_model(config.latent, config.sensitive, identity_fields, noise_fields,
                       config.latent_includes_perturbed);

    for (const auto& q : pool) {
        auto violations = validate_query(q, config.schema, config.scale);
        if (!violations.empty())
            throw Error("invalid pool query '" + q.query_id + "': " + violations.front().message);
    }

    const int x = config.plan.total_items;
    const int n = config.plan.pairs_per_worker;
    PlanConfig plan_cfg = config.plan;
    if (plan_cfg.min_separation < 1) plan_cfg.min_separation = default_min_separation(x);
    plan_cfg.rng_seed = derive_seed(config.seed, "plan");
    check_plan_config(plan_cfg);

    int positive_threshold = config.positive_threshold
                                 ? *config.positive_threshold
                                 : static_cast<int>(std::ceil(scale_midpoint(config.scale)));

    if (static_cast<int>(pool.size()) < x - n)
        throw Error("pool has " + std::to_string(pool.size()) + " queries but the plan needs " +
                    std::to_string(x - n) + " (" + std::to_string(n) + " probe sources + " +
                    std::to_string(x - 2 * n) + " fillers)");

    // choose probe sources and fillers once, shared by all workers
    RandomStream selector(derive_seed(config.seed, "selection"));
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    selector.shuffle(order);
    std::vector<Query> sources, fillers;
    for (int i = 0; i < n; ++i) sources.push_back(pool[order[i]]);
    for (std::size_t i = n; i < order.size() && static_cast<int>(fillers.size()) < x - 2 * n; ++i)
        fillers.push_back(pool[order[i]]);

    std::uint64_t disguise_seed = derive_seed(config.seed, "disguise");
    std::vector<ProbePair> pairs;
    for (const auto& q : sources) {
        RandomStream stream(derive_seed(disguise_seed, q.query_id));
        pairs.push_back(make_probe_pair(q, config.sensitive, config.disguise, config.schema, std::nullopt, stream));
    }

    std::map<std::string, Query> queries_by_id;
    for (const auto& q : pool) queries_by_id[q.query_id] = q;
    for (const auto& p : pairs) queries_by_id[p.counterfactual.query_id] = p.counterfactual;

    int total_workers = 0;
    for (const auto& g : config.population) total_workers += g.count;
    if (total_workers == 0) throw Error("population is empty");

    ExperimentReport report;
    report.seed = config.seed;

    ResponsesByQuery responses_by_query;
    std::vector<BiasReport> bias_reports;
    std::vector<SelfReportScore> self_scores;

    int worker_index = 0;
    for (const auto& group : config.population) {
        check_profile(group.profile);
        for (int c = 0; c < group.count; ++c, ++worker_index) {
            std::string worker_id = detail::worker_name(config.worker_prefix, worker_index, total_workers);
            TaskPlan plan = build_plan(worker_id, fillers, pairs, plan_cfg);

            RandomStream response_stream(derive_seed(config.seed, "responses:" + worker_id));
            std::vector<Response> responses;
            std::set<std::string> clipped_pairs_here;
            for (const auto& item : plan.items) {
                const HiddenEntry& entry = plan.hidden_map.at(item.display_id);
                const Query& q = queries_by_id.at(entry.query_id);
                SimulatedLabel sim = simulate_response(group.profile, q, config.latent, config.sensitive,
                                                       config.scale, response_stream);
                responses.push_back({worker_id, item.display_id, sim.label});
                ++report.total_responses;
                if (sim.clipped) {
                    ++report.clipped_responses;
                    if (entry.role != Role::filler) clipped_pairs_here.insert(entry.pair_id);
                }
                responses_by_query[entry.query_id].push_back({worker_id, sim.label});
            }
            report.clipped_pairs += static_cast<int>(clipped_pairs_here.size());

            BiasReport bias =
                make_bias_report(worker_id, plan.hidden_map, responses, config.scale, config.policy.n_min);
            SelfReportScore survey = ingest_self_report(worker_id, simulate_survey(group.profile, config.survey));

            bias_reports.push_back(bias);
            self_scores.push_back(survey);
            report.workers.push_back({worker_id, group.profile.kind, group.profile.bias_shift,
                                      group.profile.noise_sd, group.profile.honesty, bias, survey.survey_score});
        }
    }

    for (const auto& w : report.workers) {
        KindStats& ks = report.by_kind[to_string(w.kind)];
        ++ks.workers;
        if (w.report.raw_bias) {
            ++ks.scored;
            ks.mean_score += *w.report.raw_bias;
        }
    }
    for (auto& [kind, ks] : report.by_kind)
        if (ks.scored > 0) ks.mean_score /= ks.scored;
    for (const auto& w : report.workers) {
        if (!w.report.raw_bias) continue;
        KindStats& ks = report.by_kind[to_string(w.kind)];
        double dev = *w.report.raw_bias - ks.mean_score;
        ks.score_sd += dev * dev;
    }
    for (auto& [kind, ks] : report.by_kind)
        ks.score_sd = ks.scored > 1 ? std::sqrt(ks.score_sd / (ks.scored - 1)) : 0.0;

    report.separation_auc = detail::separation_auc(report.workers);
    report.comparison = compare_pipelines(responses_by_query, bias_reports, self_scores, config.policy,
                                          queries_by_id, config.sensitive, config.scale, positive_threshold);
    return report;
}

}  // namespace cfprobe
