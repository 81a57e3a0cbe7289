#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfprobe/io.hpp"

// Run-configuration files for the CLI. All paths inside a config resolve
// relative to the config file's directory; every referenced resource's bytes
// are kept so the run manifest can record their digests.

namespace cfprobe::io {

namespace detail {

inline std::string resolve_path(const std::string& base_dir, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (std::filesystem::path(base_dir) / p).string();
}

inline std::uint64_t get_seed(const json& j, const std::string& ctx) {
    const json& v = require(j, "seed", ctx);
    if (!v.is_number_integer())
        throw Error(ctx + ": 'seed' must be an integer (every run configuration declares one)");
    return v.get<std::uint64_t>();
}

}  // namespace detail

// --- shared fragments -------------------------------------------------------

inline DisguiseConfig parse_disguise(const json& j, const std::string& base_dir, const std::string& ctx,
                                     std::map<std::string, std::string>* resource_bytes) {
    DisguiseConfig cfg;
    if (j.contains("noise_fields")) {
        const json& nf = j.at("noise_fields");
        if (!nf.is_object()) throw Error(ctx + ": 'noise_fields' must map field names to magnitudes");
        for (const auto& [field, eps] : nf.items()) {
            if (!eps.is_number()) throw Error(ctx + ": noise magnitude for '" + field + "' must be a number");
            cfg.noise_fields[field] = eps.get<double>();
        }
    }
    if (j.contains("identity_pools_file")) {
        std::string path = detail::resolve_path(base_dir, j.at("identity_pools_file").get<std::string>());
        std::string bytes = read_file(path);
        if (resource_bytes) (*resource_bytes)[j.at("identity_pools_file").get<std::string>()] = bytes;
        cfg.identity_pools = parse_identity_pools_tsv(bytes, path);
    } else if (j.contains("identity_pools")) {
        for (const auto& [field, groups] : j.at("identity_pools").items())
            for (const auto& [group, values] : groups.items())
                for (const auto& v : values) cfg.identity_pools[field][group].push_back(v.get<std::string>());
    }
    if (j.contains("lexicon_file")) {
        std::string path = detail::resolve_path(base_dir, j.at("lexicon_file").get<std::string>());
        std::string bytes = read_file(path);
        if (resource_bytes) (*resource_bytes)[j.at("lexicon_file").get<std::string>()] = bytes;
        cfg.lexicon = parse_lexicon_tsv(bytes, path);
    } else if (j.contains("lexicon")) {
        for (const auto& entry : j.at("lexicon")) cfg.lexicon.add(entry.at(0).get<std::string>(), entry.at(1).get<std::string>());
    }
    if (j.contains("synonyms_file")) {
        std::string path = detail::resolve_path(base_dir, j.at("synonyms_file").get<std::string>());
        std::string bytes = read_file(path);
        if (resource_bytes) (*resource_bytes)[j.at("synonyms_file").get<std::string>()] = bytes;
        cfg.synonyms = parse_synonyms_tsv(bytes, path);
    } else if (j.contains("synonyms")) {
        for (const auto& entry : j.at("synonyms")) cfg.synonyms.add(entry.at(0).get<std::string>(), entry.at(1).get<std::string>());
    }
    if (j.contains("synonym_rate")) cfg.synonym_rate = detail::get_number(j, "synonym_rate", ctx);
    check_disguise_config(cfg);
    return cfg;
}

// min_separation is optional; 0 means "use the default for this x"
inline PlanConfig parse_plan_shape(const json& j, const std::string& ctx) {
    PlanConfig cfg;
    cfg.total_items = detail::get_int(j, "total_items", ctx);
    cfg.pairs_per_worker = detail::get_int(j, "pairs_per_worker", ctx);
    cfg.min_separation = j.contains("min_separation") ? detail::get_int(j, "min_separation", ctx)
                                                      : default_min_separation(cfg.total_items);
    return cfg;
}

inline Combiner combiner_from_string(const std::string& s, const std::string& ctx) {
    if (s == "mean-rounded") return Combiner::mean_rounded;
    if (s == "median") return Combiner::median;
    if (s == "weighted-mean-rounded") return Combiner::weighted_mean_rounded;
    throw Error(ctx + ": unknown combiner '" + s + "' (expected mean-rounded, median, or weighted-mean-rounded)");
}

inline AggregationPolicy parse_policy(const json& j, const std::string& ctx) {
    AggregationPolicy p;
    std::string mode = detail::get_string(j, "mode", ctx);
    if (mode == "filter")
        p.mode = PolicyMode::filter;
    else if (mode == "weighted")
        p.mode = PolicyMode::weighted;
    else
        throw Error(ctx + ": unknown policy mode '" + mode + "' (expected filter or weighted)");
    if (j.contains("threshold")) p.threshold = detail::get_number(j, "threshold", ctx);
    if (j.contains("sharpness")) p.sharpness = detail::get_number(j, "sharpness", ctx);
    if (j.contains("combiner")) p.combiner = combiner_from_string(detail::get_string(j, "combiner", ctx), ctx);
    if (j.contains("n_min")) p.n_min = detail::get_int(j, "n_min", ctx);
    if (j.contains("default_weight")) p.default_weight = detail::get_number(j, "default_weight", ctx);
    check_policy(p);
    return p;
}

inline json policy_to_json(const AggregationPolicy& p) {
    json j;
    j["mode"] = to_string(p.mode);
    j["threshold"] = p.threshold;
    j["sharpness"] = p.sharpness;
    j["combiner"] = to_string(p.combiner);
    j["n_min"] = p.n_min;
    j["default_weight"] = p.default_weight;
    return j;
}

inline LatentModel parse_latent(const json& j, const std::string& ctx) {
    LatentModel m;
    if (j.contains("intercept")) m.intercept = detail::get_number(j, "intercept", ctx);
    const json& weights = detail::require(j, "weights", ctx);
    if (!weights.is_object()) throw Error(ctx + ": latent 'weights' must map field names to numbers");
    for (const auto& [field, w] : weights.items()) {
        if (!w.is_number()) throw Error(ctx + ": latent weight for '" + field + "' must be a number");
        m.weights[field] = w.get<double>();
    }
    return m;
}

inline WorkerKind worker_kind_from_string(const std::string& s, const std::string& ctx) {
    if (s == "unbiased") return WorkerKind::unbiased;
    if (s == "shift-biased") return WorkerKind::shift_biased;
    if (s == "noisy") return WorkerKind::noisy;
    if (s == "spammer") return WorkerKind::spammer;
    if (s == "deceptive-biased") return WorkerKind::deceptive_biased;
    throw Error(ctx + ": unknown worker kind '" + s + "'");
}

inline WorkerProfile parse_profile(const json& j, const std::string& ctx) {
    WorkerProfile p;
    p.kind = worker_kind_from_string(detail::get_string(j, "kind", ctx), ctx);
    if (j.contains("bias_shift")) p.bias_shift = detail::get_number(j, "bias_shift", ctx);
    if (j.contains("noise_sd")) p.noise_sd = detail::get_number(j, "noise_sd", ctx);
    if (j.contains("survey")) {
        std::string honesty = detail::get_string(j, "survey", ctx);
        if (honesty == "honest")
            p.honesty = SurveyHonesty::honest;
        else if (honesty == "masked")
            p.honesty = SurveyHonesty::masked;
        else
            throw Error(ctx + ": unknown survey honesty '" + honesty + "' (expected honest or masked)");
    } else if (p.kind == WorkerKind::deceptive_biased) {
        p.honesty = SurveyHonesty::masked;
    }
    if (j.contains("disfavored_groups"))
        for (const auto& g : j.at("disfavored_groups")) p.disfavored_groups.insert(g.get<std::string>());
    check_profile(p);
    return p;
}

inline std::vector<PopulationGroup> parse_population(const json& j, const std::string& ctx) {
    if (!j.is_array() || j.empty()) throw Error(ctx + ": 'population' must be a non-empty array");
    std::vector<PopulationGroup> out;
    for (const auto& gj : j) {
        PopulationGroup g;
        g.count = detail::get_int(gj, "count", ctx);
        if (g.count < 1) throw Error(ctx + ": population group count must be >= 1");
        g.profile = parse_profile(gj, ctx);
        out.push_back(std::move(g));
    }
    return out;
}

inline SurveyForm parse_survey(const json& j, const std::string& ctx) {
    SurveyForm form;
    if (j.contains("bias_reference")) form.bias_reference = detail::get_number(j, "bias_reference", ctx);
    const json& items = detail::require(j, "items", ctx);
    if (!items.is_array() || items.empty()) throw Error(ctx + ": survey 'items' must be a non-empty array");
    for (const auto& ij : items) {
        SurveyItem item;
        item.item_id = detail::get_string(ij, "item_id", ctx);
        if (ij.contains("min")) item.min_value = detail::get_number(ij, "min", ctx);
        if (ij.contains("max")) item.max_value = detail::get_number(ij, "max", ctx);
        if (item.max_value <= item.min_value)
            throw Error(ctx + ": survey item '" + item.item_id + "' declares an empty range");
        if (ij.contains("reverse_coded")) item.reverse_coded = detail::get_bool(ij, "reverse_coded", ctx);
        form.items.push_back(std::move(item));
    }
    return form;
}

// --- `plan` configuration ---------------------------------------------------

struct PlanSetup {
    std::uint64_t seed = 0;
    LabelScale scale;
    Schema schema;
    SensitiveSpec sensitive;
    DisguiseConfig disguise;
    PlanConfig plan;
    std::vector<std::string> workers;
    std::optional<std::string> target_group;          // fixed flip target; default: per-query choice
    std::map<std::string, std::string> resource_bytes;  // referenced files, for the manifest
};

inline std::vector<std::string> parse_worker_list(const json& j, const std::string& ctx) {
    std::vector<std::string> workers;
    if (j.contains("workers")) {
        for (const auto& w : j.at("workers")) workers.push_back(w.get<std::string>());
    } else if (j.contains("worker_count")) {
        int count = detail::get_int(j, "worker_count", ctx);
        if (count < 1) throw Error(ctx + ": 'worker_count' must be >= 1");
        std::string prefix = j.value("worker_prefix", "w");
        for (int i = 0; i < count; ++i) workers.push_back(cfprobe::detail::worker_name(prefix, i, count));
    } else {
        throw Error(ctx + ": provide either 'workers' or 'worker_count'");
    }
    if (workers.empty()) throw Error(ctx + ": worker list is empty");
    std::set<std::string> seen;
    for (const auto& w : workers)
        if (!seen.insert(w).second) throw Error(ctx + ": duplicate worker id '" + w + "'");
    return workers;
}

inline PlanSetup parse_plan_config(const json& j, const std::string& base_dir, const std::string& ctx) {
    PlanSetup setup;
    setup.seed = detail::get_seed(j, ctx);
    setup.scale = scale_from_json(detail::require(j, "scale", ctx), ctx);
    setup.schema = schema_from_json(detail::require(j, "schema", ctx), ctx);
    setup.sensitive = sensitive_from_json(detail::require(j, "sensitive", ctx), ctx);
    setup.disguise = parse_disguise(detail::require(j, "disguise", ctx), base_dir, ctx, &setup.resource_bytes);
    setup.plan = parse_plan_shape(detail::require(j, "plan", ctx), ctx);
    setup.workers = parse_worker_list(j, ctx);
    if (j.contains("target_group")) setup.target_group = detail::get_string(j, "target_group", ctx);
    check_plan_config(setup.plan);
    return setup;
}

// --- `collect` (simulation) configuration -------------------------------------

struct SimSetup {
    std::uint64_t seed = 0;
    LabelScale scale;
    Schema schema;
    SensitiveSpec sensitive;
    LatentModel latent;
    std::vector<PopulationGroup> population;
    std::optional<SurveyForm> survey;
};

inline SimSetup parse_sim_config(const json& j, const std::string& ctx) {
    SimSetup setup;
    setup.seed = detail::get_seed(j, ctx);
    setup.scale = scale_from_json(detail::require(j, "scale", ctx), ctx);
    setup.schema = schema_from_json(detail::require(j, "schema", ctx), ctx);
    setup.sensitive = sensitive_from_json(detail::require(j, "sensitive", ctx), ctx);
    setup.latent = parse_latent(detail::require(j, "latent", ctx), ctx);
    setup.population = parse_population(detail::require(j, "population", ctx), ctx);
    if (j.contains("survey")) setup.survey = parse_survey(j.at("survey"), ctx);
    return setup;
}

// --- `evaluate` configuration ---------------------------------------------------

struct EvalSetup {
    LabelScale scale;
    Schema schema;
    SensitiveSpec sensitive;
    std::optional<int> positive_threshold;  // default: scale midpoint, rounded up
};

inline EvalSetup parse_eval_config(const json& j, const std::string& ctx) {
    EvalSetup setup;
    setup.scale = scale_from_json(detail::require(j, "scale", ctx), ctx);
    setup.schema = schema_from_json(detail::require(j, "schema", ctx), ctx);
    setup.sensitive = sensitive_from_json(detail::require(j, "sensitive", ctx), ctx);
    if (j.contains("positive_threshold")) setup.positive_threshold = detail::get_int(j, "positive_threshold", ctx);
    return setup;
}

// --- `experiment` configuration ---------------------------------------------------

inline ExperimentConfig parse_experiment_config(const json& j, const std::string& base_dir, const std::string& ctx,
                                                std::map<std::string, std::string>* resource_bytes) {
    ExperimentConfig cfg;
    cfg.seed = detail::get_seed(j, ctx);
    cfg.scale = scale_from_json(detail::require(j, "scale", ctx), ctx);
    cfg.schema = schema_from_json(detail::require(j, "schema", ctx), ctx);
    cfg.sensitive = sensitive_from_json(detail::require(j, "sensitive", ctx), ctx);
    cfg.disguise = parse_disguise(detail::require(j, "disguise", ctx), base_dir, ctx, resource_bytes);
    cfg.plan = parse_plan_shape(detail::require(j, "plan", ctx), ctx);
    const json& latent = detail::require(j, "latent", ctx);
    cfg.latent = parse_latent(latent, ctx);
    if (latent.contains("include_perturbed"))
        cfg.latent_includes_perturbed = detail::get_bool(latent, "include_perturbed", ctx);
    cfg.population = parse_population(detail::require(j, "population", ctx), ctx);
    cfg.survey = parse_survey(detail::require(j, "survey", ctx), ctx);
    cfg.policy = parse_policy(detail::require(j, "policy", ctx), ctx);
    if (j.contains("positive_threshold")) cfg.positive_threshold = detail::get_int(j, "positive_threshold", ctx);
    if (j.contains("worker_prefix")) cfg.worker_prefix = detail::get_string(j, "worker_prefix", ctx);
    return cfg;
}

}  // namespace cfprobe::io
