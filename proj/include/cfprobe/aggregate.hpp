#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfprobe/model.hpp"
#include "cfprobe/scoring.hpp"

namespace cfprobe {

enum class PolicyMode { filter, weighted };
enum class Combiner { mean_rounded, median, weighted_mean_rounded };

inline const char* to_string(PolicyMode m) { return m == PolicyMode::filter ? "filter" : "weighted"; }

inline const char* to_string(Combiner c) {
    switch (c) {
        case Combiner::mean_rounded: return "mean-rounded";
        case Combiner::median: return "median";
        case Combiner::weighted_mean_rounded: return "weighted-mean-rounded";
    }
    return "?";
}

// How bias scores turn into per-worker weights and how weighted responses
// combine into one label per query.
struct AggregationPolicy {
    PolicyMode mode = PolicyMode::filter;
    double threshold = 1.0;  // tau, filter mode: keep iff normalized bias <= tau
    double sharpness = 0.0;  // beta, weighted mode: weight = exp(-beta * normalized bias)
    Combiner combiner = Combiner::weighted_mean_rounded;
    int n_min = 5;                // reports with fewer pairs are not trusted
    double default_weight = 1.0;  // weight assigned to untrusted reports
};

inline void check_policy(const AggregationPolicy& p) {
    if (p.threshold < 0.0 || p.threshold > 1.0) throw Error("filter threshold must lie in [0,1]");
    if (!std::isfinite(p.sharpness) || p.sharpness < 0.0) throw Error("sharpness must be finite and >= 0");
    if (p.default_weight < 0.0) throw Error("default weight must be >= 0");
}

struct WeightInfo {
    double weight = 1.0;
    bool defaulted = false;  // true when the report was too thin to score

    bool operator==(const WeightInfo&) const = default;
};

using WeightMap = std::map<std::string, WeightInfo>;

inline double policy_weight(double normalized_score, const AggregationPolicy& policy) {
    if (policy.mode == PolicyMode::filter) return normalized_score <= policy.threshold ? 1.0 : 0.0;
    return std::exp(-policy.sharpness * normalized_score);
}

// Weights from any normalized score in [0,1] (counterfactual bias or a
// self-report survey score; the policy form is the same for both).
inline WeightMap score_weights(const std::map<std::string, double>& normalized_scores,
                               const AggregationPolicy& policy) {
    check_policy(policy);
    WeightMap out;
    for (const auto& [worker, score] : normalized_scores) {
        if (score < 0.0 || score > 1.0)
            throw Error("normalized score for worker '" + worker + "' outside [0,1]");
        out[worker] = {policy_weight(score, policy), false};
    }
    return out;
}

inline WeightMap worker_weights(const std::vector<BiasReport>& reports, const AggregationPolicy& policy) {
    check_policy(policy);
    WeightMap out;
    for (const auto& r : reports) {
        if (!r.normalized_bias || r.pair_count < policy.n_min) {
            out[r.worker_id] = {policy.default_weight, true};
            continue;
        }
        if (*r.normalized_bias < 0.0 || *r.normalized_bias > 1.0)
            throw Error("normalized bias for worker '" + r.worker_id + "' outside [0,1]");
        out[r.worker_id] = {policy_weight(*r.normalized_bias, policy), false};
    }
    return out;
}

struct AggregatedRow {
    int label = 0;
    int contributors = 0;    // responders with positive weight
    double total_weight = 0.0;

    bool operator==(const AggregatedRow&) const = default;
};

struct AggregatedDataset {
    std::map<std::string, AggregatedRow> rows;  // query_id -> result
    std::vector<std::string> dropped;           // queries whose responses all had zero weight

    bool operator==(const AggregatedDataset&) const = default;
};

// query_id -> (worker_id, label) responses, already resolved from display ids.
using ResponsesByQuery = std::map<std::string, std::vector<std::pair<std::string, int>>>;

// Nearest scale point; an exact halfway value rounds toward the scale
// midpoint, and when both candidates are equidistant from it, to the lower.
inline int round_to_scale(double value, const LabelScale& scale) {
    double lo_d = std::floor(value);
    int lo = static_cast<int>(lo_d);
    int hi = lo + 1;
    int chosen;
    if (value - lo_d == 0.5) {
        double mid = scale_midpoint(scale);
        double lo_dist = std::abs(lo - mid), hi_dist = std::abs(hi - mid);
        chosen = lo_dist <= hi_dist ? lo : hi;
    } else {
        chosen = value - lo_d < 0.5 ? lo : hi;
    }
    return std::clamp(chosen, scale.min_label, scale.max_label);
}

namespace detail {

inline int combine_one(const std::vector<std::pair<double, int>>& weighted_labels,  // (weight, label), weights > 0
                       Combiner combiner, const LabelScale& scale) {
    switch (combiner) {
        case Combiner::mean_rounded: {
            // weights act as include/exclude only
            double sum = 0.0;
            for (const auto& [w, l] : weighted_labels) sum += l;
            return round_to_scale(sum / static_cast<double>(weighted_labels.size()), scale);
        }
        case Combiner::weighted_mean_rounded: {
            double sum = 0.0, wsum = 0.0;
            for (const auto& [w, l] : weighted_labels) {
                sum += w * l;
                wsum += w;
            }
            return round_to_scale(sum / wsum, scale);
        }
        case Combiner::median: {
            // lower weighted median: smallest label whose cumulative weight
            // reaches half the total, so even splits take the lower value
            std::vector<std::pair<int, double>> sorted;  // (label, weight)
            for (const auto& [w, l] : weighted_labels) sorted.push_back({l, w});
            std::sort(sorted.begin(), sorted.end());
            double total = 0.0;
            for (const auto& [l, w] : sorted) total += w;
            double cum = 0.0;
            for (const auto& [l, w] : sorted) {
                cum += w;
                if (cum >= total / 2.0) return l;
            }
            return sorted.back().first;
        }
    }
    throw Error("unknown combiner");
}

}  // namespace detail

// One final label per query from its weighted responses. Zero-weight
// responses are excluded from counts; queries left with no positive-weight
// responses are omitted and listed in `dropped`.
inline AggregatedDataset aggregate_labels(const ResponsesByQuery& responses, const WeightMap& weights,
                                          const AggregationPolicy& policy, const LabelScale& scale) {
    check_policy(policy);
    check_scale(scale);
    AggregatedDataset out;
    for (const auto& [query_id, labels] : responses) {
        std::vector<std::pair<double, int>> contributing;
        for (const auto& [worker, label] : labels) {
            if (!on_scale(scale, label))
                throw Error("label " + std::to_string(label) + " for query '" + query_id + "' is off-scale");
            auto wit = weights.find(worker);
            if (wit == weights.end())
                throw Error("no weight for worker '" + worker + "' responding to query '" + query_id + "'");
            if (wit->second.weight > 0.0) contributing.push_back({wit->second.weight, label});
        }
        if (contributing.empty()) {
            out.dropped.push_back(query_id);
            continue;
        }
        AggregatedRow row;
        row.label = detail::combine_one(contributing, policy.combiner, scale);
        row.contributors = static_cast<int>(contributing.size());
        for (const auto& [w, l] : contributing) row.total_weight += w;
        out.rows[query_id] = row;
    }
    return out;
}

struct FairnessSummary {
    struct GroupStat {
        int count = 0;
        int positives = 0;
        double positive_rate = 0.0;
        double mean_label = 0.0;
    };
    std::map<std::string, GroupStat> groups;
    std::string group_a, group_b;           // the two configured groups, in declared order
    std::optional<double> parity_gap;        // |rate(a) - rate(b)|; absent when a group is empty
    int positive_threshold = 0;
};

// Demographic parity over the aggregated dataset: per-group positive rates
// with final labels binarized at `positive_threshold`, gap between the two
// configured groups. Every dataset query must carry a sensitive value.
inline FairnessSummary demographic_parity_gap(const AggregatedDataset& dataset,
                                              const std::map<std::string, Query>& queries,
                                              const SensitiveSpec& spec, int positive_threshold) {
    check_sensitive_spec(spec);
    FairnessSummary summary;
    summary.group_a = spec.groups[0];
    summary.group_b = spec.groups[1];
    summary.positive_threshold = positive_threshold;

    std::vector<std::string> missing;
    for (const auto& [query_id, row] : dataset.rows) {
        auto qit = queries.find(query_id);
        const FieldValue* group_value = qit == queries.end() ? nullptr : qit->second.find(spec.attribute);
        if (!group_value || group_value->kind != FieldKind::categorical) {
            missing.push_back(query_id);
            continue;
        }
        auto& stat = summary.groups[group_value->str];
        ++stat.count;
        stat.mean_label += row.label;
        if (row.label >= positive_threshold) ++stat.positives;
    }
    if (!missing.empty()) {
        std::string ids;
        for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
        throw Error("dataset queries missing a categorical sensitive value: " + ids);
    }
    for (auto& [group, stat] : summary.groups) {
        stat.positive_rate = static_cast<double>(stat.positives) / stat.count;
        stat.mean_label /= stat.count;
    }

    auto a = summary.groups.find(summary.group_a);
    auto b = summary.groups.find(summary.group_b);
    if (a != summary.groups.end() && b != summary.groups.end())
        summary.parity_gap = std::abs(a->second.positive_rate - b->second.positive_rate);
    return summary;
}

struct PipelineComparison {
    FairnessSummary unweighted;
    FairnessSummary counterfactual_policy;
    FairnessSummary self_report_policy;
    AggregatedDataset unweighted_dataset;
    AggregatedDataset counterfactual_dataset;
    AggregatedDataset self_report_dataset;

    struct ScatterPoint {
        std::string worker_id;
        std::optional<double> counterfactual_score;  // normalized bias, absent if unscored
        std::optional<double> self_report_score;
    };
    std::vector<ScatterPoint> scatter;  // ordered by worker id
};

// Side-by-side comparison of three curation pipelines over the same
// responses: no screening, counterfactual-score screening, and self-report
// screening (same policy form, scores swapped).
inline PipelineComparison compare_pipelines(const ResponsesByQuery& responses,
                                            const std::vector<BiasReport>& reports,
                                            const std::vector<SelfReportScore>& self_scores,
                                            const AggregationPolicy& policy,
                                            const std::map<std::string, Query>& queries, const SensitiveSpec& spec,
                                            const LabelScale& scale, int positive_threshold) {
    check_policy(policy);
    PipelineComparison out;

    WeightMap unit_weights;
    for (const auto& [query_id, labels] : responses)
        for (const auto& [worker, label] : labels) unit_weights[worker] = {1.0, false};

    std::map<std::string, double> survey_scores;
    for (const auto& s : self_scores) survey_scores[s.worker_id] = s.survey_score;

    WeightMap cf_weights = worker_weights(reports, policy);
    WeightMap self_weights = score_weights(survey_scores, policy);

    out.unweighted_dataset = aggregate_labels(responses, unit_weights, policy, scale);
    out.counterfactual_dataset = aggregate_labels(responses, cf_weights, policy, scale);
    out.self_report_dataset = aggregate_labels(responses, self_weights, policy, scale);

    out.unweighted = demographic_parity_gap(out.unweighted_dataset, queries, spec, positive_threshold);
    out.counterfactual_policy = demographic_parity_gap(out.counterfactual_dataset, queries, spec, positive_threshold);
    out.self_report_policy = demographic_parity_gap(out.self_report_dataset, queries, spec, positive_threshold);

    std::map<std::string, PipelineComparison::ScatterPoint> points;
    for (const auto& r : reports) {
        auto& p = points[r.worker_id];
        p.worker_id = r.worker_id;
        p.counterfactual_score = r.normalized_bias;
    }
    for (const auto& s : self_scores) {
        auto& p = points[s.worker_id];
        p.worker_id = s.worker_id;
        p.self_report_score = s.survey_score;
    }
    for (auto& [id, p] : points) out.scatter.push_back(std::move(p));
    return out;
}

}  // namespace cfprobe
