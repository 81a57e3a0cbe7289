#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfprobe/model.hpp"

namespace cfprobe {

// Labels a worker gave to both halves of each completed probe pair.
struct PairedLabels {
    struct Entry {
        std::string pair_id;
        int original_label = 0;
        int counterfactual_label = 0;
    };
    std::string worker_id;
    std::vector<Entry> entries;
};

struct MatchResult {
    PairedLabels paired;
    int incomplete_pairs = 0;  // pairs with exactly one half answered
};

// Reconstructs per-pair label pairs for one worker from the hidden map.
// Only this worker's responses are considered; fillers are skipped and
// pairs missing either half are counted, not imputed.
inline MatchResult match_responses(const std::string& worker_id,
                                   const std::map<std::string, HiddenEntry>& hidden_map,
                                   const std::vector<Response>& responses) {
    std::map<std::string, int> label_by_display;
    for (const auto& r : responses) {
        if (r.worker_id != worker_id) continue;
        if (!hidden_map.count(r.display_id))
            throw Error("unknown display id '" + r.display_id + "' for worker '" + worker_id + "'");
        if (!label_by_display.emplace(r.display_id, r.label).second)
            throw Error("duplicate response for worker '" + worker_id + "', display id '" + r.display_id + "'");
    }

    struct PairLabels {
        std::optional<int> original;
        std::optional<int> counterfactual;
    };
    std::map<std::string, PairLabels> by_pair;
    for (const auto& [display_id, entry] : hidden_map) {
        if (entry.role == Role::filler) continue;
        auto it = label_by_display.find(display_id);
        if (it == label_by_display.end()) {
            by_pair[entry.pair_id];  // ensure the pair is tracked even if unanswered
            continue;
        }
        if (entry.role == Role::original)
            by_pair[entry.pair_id].original = it->second;
        else
            by_pair[entry.pair_id].counterfactual = it->second;
    }

    MatchResult out;
    out.paired.worker_id = worker_id;
    for (const auto& [pair_id, labels] : by_pair) {
        if (labels.original && labels.counterfactual)
            out.paired.entries.push_back({pair_id, *labels.original, *labels.counterfactual});
        else if (labels.original || labels.counterfactual)
            ++out.incomplete_pairs;
    }
    return out;
}

inline MatchResult match_responses(const TaskPlan& plan, const std::vector<Response>& responses) {
    return match_responses(plan.worker_id, plan.hidden_map, responses);
}

// Worker bias: mean absolute label difference over the completed probe
// pairs. Zero characterizes perfectly consistent labeling across the flip.
inline double worker_bias(const PairedLabels& paired) {
    if (paired.entries.empty())
        throw Error("no usable probe pairs for worker '" + paired.worker_id + "'");
    double sum = 0.0;
    for (const auto& e : paired.entries) sum += std::abs(e.original_label - e.counterfactual_label);
    return sum / static_cast<double>(paired.entries.size());
}

inline double normalized_bias(double raw, const LabelScale& scale) {
    int range = scale_range(scale);
    if (raw < 0.0 || raw > static_cast<double>(range))
        throw Error("raw bias " + std::to_string(raw) + " outside [0, " + std::to_string(range) + "]");
    return raw / static_cast<double>(range);
}

// Full per-worker report. Workers with zero completed pairs get a
// no_usable_pairs record with the score fields absent.
inline BiasReport make_bias_report(const std::string& worker_id,
                                   const std::map<std::string, HiddenEntry>& hidden_map,
                                   const std::vector<Response>& responses, const LabelScale& scale, int n_min) {
    MatchResult matched = match_responses(worker_id, hidden_map, responses);
    BiasReport report;
    report.worker_id = worker_id;
    report.pair_count = static_cast<int>(matched.paired.entries.size());
    report.incomplete_pairs = matched.incomplete_pairs;
    if (matched.paired.entries.empty()) {
        report.status = "no usable probe pairs";
        report.reliable = false;
        return report;
    }
    double raw = worker_bias(matched.paired);
    report.raw_bias = raw;
    report.normalized_bias = normalized_bias(raw, scale);
    report.reliable = report.pair_count >= n_min;
    report.status = "ok";
    return report;
}

// --- gold-question baseline (objective tasks) ----------------------------

struct GroupConfusion {
    int tp = 0, fp = 0, tn = 0, fn = 0;

    std::optional<double> fpr() const {
        int denom = fp + tn;
        if (denom == 0) return std::nullopt;
        return static_cast<double>(fp) / denom;
    }
    std::optional<double> tpr() const {
        int denom = tp + fn;
        if (denom == 0) return std::nullopt;
        return static_cast<double>(tp) / denom;
    }
};

struct GoldBaselineReport {
    std::string worker_id;
    std::map<std::string, GroupConfusion> per_group;
    std::optional<double> fpr_difference;  // rate(groups[0]) - rate(groups[1]); absent if either undefined
    std::optional<double> tpr_difference;
};

// Conventional fairness metrics against gold labels: per-group FPR/TPR with
// labels binarized at `positive_threshold` (label >= threshold is positive),
// differenced in the sensitive attribute's declared group order. Responses to
// queries without a gold label are skipped.
inline GoldBaselineReport gold_baseline(const std::vector<Response>& responses,
                                        const std::map<std::string, HiddenEntry>& hidden_map,
                                        const std::string& worker_id, const std::map<std::string, Query>& queries,
                                        const SensitiveSpec& spec, int positive_threshold) {
    check_sensitive_spec(spec);
    GoldBaselineReport report;
    report.worker_id = worker_id;
    for (const auto& r : responses) {
        if (r.worker_id != worker_id) continue;
        auto hit = hidden_map.find(r.display_id);
        if (hit == hidden_map.end())
            throw Error("unknown display id '" + r.display_id + "' for worker '" + worker_id + "'");
        if (hit->second.role == Role::counterfactual) continue;  // no ground truth of its own
        auto qit = queries.find(hit->second.query_id);
        if (qit == queries.end())
            throw Error("query '" + hit->second.query_id + "' not found in query pool");
        const Query& q = qit->second;
        if (!q.gold_label) continue;
        const FieldValue* group_value = q.find(spec.attribute);
        if (!group_value)
            throw Error("query '" + q.query_id + "' is missing sensitive field '" + spec.attribute + "'");
        bool worker_positive = r.label >= positive_threshold;
        bool gold_positive = *q.gold_label >= positive_threshold;
        GroupConfusion& c = report.per_group[group_value->str];
        if (gold_positive)
            worker_positive ? ++c.tp : ++c.fn;
        else
            worker_positive ? ++c.fp : ++c.tn;
    }

    const GroupConfusion a = report.per_group.count(spec.groups[0]) ? report.per_group.at(spec.groups[0]) : GroupConfusion{};
    const GroupConfusion b = report.per_group.count(spec.groups[1]) ? report.per_group.at(spec.groups[1]) : GroupConfusion{};
    if (a.fpr() && b.fpr()) report.fpr_difference = *a.fpr() - *b.fpr();
    if (a.tpr() && b.tpr()) report.tpr_difference = *a.tpr() - *b.tpr();
    return report;
}

// --- self-report baseline -------------------------------------------------

struct SurveyAnswer {
    std::string item_id;
    double value = 0.0;
    double min_value = 0.0;
    double max_value = 1.0;
    bool reverse_coded = false;
};

struct SelfReportScore {
    std::string worker_id;
    double survey_score = 0.0;  // in [0,1]
};

// Per-item min-max rescale to [0,1] (reverse-coded items flipped), then mean.
inline SelfReportScore ingest_self_report(const std::string& worker_id, const std::vector<SurveyAnswer>& answers) {
    if (answers.empty()) throw Error("no survey answers for worker '" + worker_id + "'");
    double sum = 0.0;
    for (const auto& a : answers) {
        if (a.max_value <= a.min_value)
            throw Error("survey item '" + a.item_id + "' declares an empty range");
        if (a.value < a.min_value || a.value > a.max_value)
            throw Error("survey item '" + a.item_id + "' value " + std::to_string(a.value) + " outside [" +
                        std::to_string(a.min_value) + ", " + std::to_string(a.max_value) + "]");
        double unit = (a.value - a.min_value) / (a.max_value - a.min_value);
        sum += a.reverse_coded ? 1.0 - unit : unit;
    }
    return {worker_id, sum / static_cast<double>(answers.size())};
}

}  // namespace cfprobe
