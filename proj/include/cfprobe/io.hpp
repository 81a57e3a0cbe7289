#pragma once

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfprobe/aggregate.hpp"
#include "cfprobe/counterfactual.hpp"
#include "cfprobe/model.hpp"
#include "cfprobe/random.hpp"
#include "cfprobe/scheduler.hpp"
#include "cfprobe/scoring.hpp"
#include "cfprobe/simulate.hpp"

namespace cfprobe::io {

// ordered_json keeps insertion order, so serialization is deterministic and
// feature maps stay in schema order.
using json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kFormatVersion = 1;

struct Diagnostic {
    std::string file;
    int line = 0;  // 0 = whole file
    std::string message;

    std::string str() const {
        std::string out = file;
        if (line > 0) out += ":" + std::to_string(line);
        return out + ": " + message;
    }
};

// --- basic file plumbing ----------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// temp file + rename, so readers never observe a half-written file
inline void atomic_write_file(const std::string& path, const std::string& content) {
    std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, target);
}

inline std::string digest(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return std::string("fnv1a64:") + buf;
}

inline std::string utc_timestamp() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// --- run manifest -----------------------------------------------------------

// Every output embeds (JSON/JSONL) or is referenced by (CSV, via the
// directory manifest) one of these. Reruns with equal manifests produce
// byte-identical outputs apart from the timestamp.
struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::map<std::string, std::string> inputs;  // file name -> digest
    std::string timestamp;
};

inline RunManifest make_manifest(const std::string& command, std::uint64_t seed, std::string_view config_bytes,
                                 const std::map<std::string, std::string>& input_bytes_by_name) {
    RunManifest m;
    m.command = command;
    m.seed = seed;
    m.config_digest = digest(config_bytes);
    for (const auto& [name, bytes] : input_bytes_by_name) m.inputs[name] = digest(bytes);
    m.timestamp = utc_timestamp();
    return m;
}

inline json manifest_to_json(const RunManifest& m) {
    json j;
    j["record_type"] = "manifest";
    j["format_version"] = kFormatVersion;
    j["tool"] = "cfprobe";
    j["tool_version"] = kToolVersion;
    j["command"] = m.command;
    j["seed"] = m.seed;
    j["config_digest"] = m.config_digest;
    json inputs = json::object();
    for (const auto& [name, d] : m.inputs) inputs[name] = d;
    j["inputs"] = inputs;
    j["timestamp"] = m.timestamp;
    return j;
}

inline RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    m.command = j.value("command", "");
    m.seed = j.value("seed", std::uint64_t{0});
    m.config_digest = j.value("config_digest", "");
    if (j.contains("inputs"))
        for (const auto& [k, v] : j.at("inputs").items()) m.inputs[k] = v.get<std::string>();
    m.timestamp = j.value("timestamp", "");
    return m;
}

// --- guarded JSON access ------------------------------------------------------

namespace detail {

inline const json& require(const json& j, const std::string& key, const std::string& ctx) {
    if (!j.is_object() || !j.contains(key)) throw Error(ctx + ": missing field '" + key + "'");
    return j.at(key);
}

inline std::string get_string(const json& j, const std::string& key, const std::string& ctx) {
    const json& v = require(j, key, ctx);
    if (!v.is_string()) throw Error(ctx + ": field '" + key + "' must be a string");
    return v.get<std::string>();
}

inline double get_number(const json& j, const std::string& key, const std::string& ctx) {
    const json& v = require(j, key, ctx);
    if (!v.is_number()) throw Error(ctx + ": field '" + key + "' must be a number");
    return v.get<double>();
}

inline int get_int(const json& j, const std::string& key, const std::string& ctx) {
    const json& v = require(j, key, ctx);
    if (!v.is_number_integer()) throw Error(ctx + ": field '" + key + "' must be an integer");
    return v.get<int>();
}

inline bool get_bool(const json& j, const std::string& key, const std::string& ctx) {
    const json& v = require(j, key, ctx);
    if (!v.is_boolean()) throw Error(ctx + ": field '" + key + "' must be a boolean");
    return v.get<bool>();
}

}  // namespace detail

// --- model <-> JSON -----------------------------------------------------------

inline json field_value_to_json(const FieldValue& v) {
    if (v.kind == FieldKind::numeric) {
        // integral values print without a fraction part
        if (v.number == static_cast<double>(static_cast<long long>(v.number)))
            return static_cast<long long>(v.number);
        return v.number;
    }
    return v.str;
}

inline FieldValue field_value_from_json(const json& j, const FieldSpec& spec, const std::string& ctx) {
    switch (spec.kind) {
        case FieldKind::numeric:
            if (!j.is_number()) throw Error(ctx + ": field '" + spec.name + "' must be numeric");
            return FieldValue::numeric(j.get<double>());
        case FieldKind::categorical:
            if (!j.is_string()) throw Error(ctx + ": field '" + spec.name + "' must be a category string");
            return FieldValue::categorical(j.get<std::string>());
        case FieldKind::text:
            if (!j.is_string()) throw Error(ctx + ": field '" + spec.name + "' must be a text string");
            return FieldValue::text(j.get<std::string>());
    }
    throw Error(ctx + ": unknown field kind");
}

// Features serialize in schema order so probe and filler items are
// schema-indistinguishable.
inline json features_to_json(const std::vector<std::pair<std::string, FieldValue>>& features, const Schema& schema) {
    json out = json::object();
    for (const auto& spec : schema.fields) {
        for (const auto& [name, value] : features) {
            if (name == spec.name) {
                out[name] = field_value_to_json(value);
                break;
            }
        }
    }
    for (const auto& [name, value] : features)
        if (!schema.find(name)) throw Error("feature '" + name + "' is not declared in the schema");
    return out;
}

inline std::vector<std::pair<std::string, FieldValue>> features_from_json(const json& j, const Schema& schema,
                                                                          const std::string& ctx) {
    if (!j.is_object()) throw Error(ctx + ": 'features' must be an object");
    std::vector<std::pair<std::string, FieldValue>> out;
    for (const auto& [name, value] : j.items()) {
        const FieldSpec* spec = schema.find(name);
        if (!spec) throw Error(ctx + ": unknown field '" + name + "'");
        out.push_back({name, field_value_from_json(value, *spec, ctx)});
    }
    return out;
}

inline json query_to_json(const Query& q, const Schema& schema) {
    json j;
    j["record_type"] = "query";
    j["query_id"] = q.query_id;
    j["features"] = features_to_json(q.features, schema);
    if (q.gold_label) j["gold_label"] = *q.gold_label;
    return j;
}

inline Query query_from_json(const json& j, const Schema& schema, const std::string& ctx) {
    Query q;
    q.query_id = detail::get_string(j, "query_id", ctx);
    q.features = features_from_json(detail::require(j, "features", ctx), schema, ctx);
    if (j.contains("gold_label")) q.gold_label = detail::get_int(j, "gold_label", ctx);
    return q;
}

inline json schema_to_json(const Schema& schema) {
    json fields = json::array();
    for (const auto& f : schema.fields) {
        json fj;
        fj["name"] = f.name;
        fj["kind"] = to_string(f.kind);
        if (f.kind == FieldKind::categorical) fj["categories"] = f.categories;
        if (f.kind == FieldKind::numeric && f.decimals >= 0) fj["decimals"] = f.decimals;
        fields.push_back(fj);
    }
    return json{{"fields", fields}};
}

inline FieldKind field_kind_from_string(const std::string& s, const std::string& ctx) {
    if (s == "numeric") return FieldKind::numeric;
    if (s == "categorical") return FieldKind::categorical;
    if (s == "text") return FieldKind::text;
    throw Error(ctx + ": unknown field kind '" + s + "'");
}

inline Schema schema_from_json(const json& j, const std::string& ctx) {
    Schema schema;
    const json& fields = detail::require(j, "fields", ctx);
    if (!fields.is_array()) throw Error(ctx + ": 'fields' must be an array");
    for (const auto& fj : fields) {
        FieldSpec spec;
        spec.name = detail::get_string(fj, "name", ctx);
        spec.kind = field_kind_from_string(detail::get_string(fj, "kind", ctx), ctx);
        if (fj.contains("categories"))
            for (const auto& c : fj.at("categories")) spec.categories.push_back(c.get<std::string>());
        if (fj.contains("decimals")) spec.decimals = detail::get_int(fj, "decimals", ctx);
        if (schema.find(spec.name)) throw Error(ctx + ": duplicate schema field '" + spec.name + "'");
        schema.fields.push_back(std::move(spec));
    }
    return schema;
}

inline LabelScale scale_from_json(const json& j, const std::string& ctx) {
    LabelScale s;
    s.min_label = detail::get_int(j, "min", ctx);
    s.max_label = detail::get_int(j, "max", ctx);
    check_scale(s);
    return s;
}

inline json scale_to_json(const LabelScale& s) { return json{{"min", s.min_label}, {"max", s.max_label}}; }

inline SensitiveSpec sensitive_from_json(const json& j, const std::string& ctx) {
    SensitiveSpec spec;
    spec.attribute = detail::get_string(j, "attribute", ctx);
    for (const auto& g : detail::require(j, "groups", ctx)) spec.groups.push_back(g.get<std::string>());
    check_sensitive_spec(spec);
    return spec;
}

inline json sensitive_to_json(const SensitiveSpec& s) {
    return json{{"attribute", s.attribute}, {"groups", s.groups}};
}

// --- JSONL ------------------------------------------------------------------

struct LineRecord {
    int line_no = 0;
    json value;
};

struct JsonlFile {
    std::optional<RunManifest> manifest;
    std::vector<LineRecord> records;  // manifest line excluded
};

inline JsonlFile read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    JsonlFile out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error(path + ":" + std::to_string(line_no) + ": malformed JSON record");
        if (j.is_object() && j.value("record_type", "") == "manifest") {
            int version = j.value("format_version", kFormatVersion);
            if (version != kFormatVersion)
                throw Error(path + ":" + std::to_string(line_no) + ": unsupported format_version " +
                            std::to_string(version));
            out.manifest = manifest_from_json(j);
            continue;
        }
        out.records.push_back({line_no, std::move(j)});
    }
    return out;
}

inline std::string jsonl_line(const json& j) { return j.dump() + "\n"; }

// --- queries ------------------------------------------------------------------

struct QueryFile {
    std::optional<RunManifest> manifest;
    std::vector<Query> queries;
};

// Parses and validates a query pool. Malformed records and invariant
// violations become line-numbered diagnostics; callers decide whether any
// diagnostics are fatal.
inline QueryFile read_queries(const std::string& path, const Schema& schema, const LabelScale& scale,
                              std::vector<Diagnostic>& diagnostics) {
    QueryFile out;
    JsonlFile file = read_jsonl(path);
    out.manifest = file.manifest;
    std::set<std::string> seen_ids;
    for (const auto& rec : file.records) {
        std::string ctx = path + ":" + std::to_string(rec.line_no);
        try {
            Query q = query_from_json(rec.value, schema, ctx);
            for (const auto& v : validate_query(q, schema, scale))
                diagnostics.push_back({path, rec.line_no, v.where + ": " + v.message});
            if (!seen_ids.insert(q.query_id).second)
                diagnostics.push_back({path, rec.line_no, "duplicate query id '" + q.query_id + "'"});
            out.queries.push_back(std::move(q));
        } catch (const Error& e) {
            diagnostics.push_back({path, rec.line_no, e.what()});
        }
    }
    return out;
}

inline std::string queries_to_jsonl(const std::vector<Query>& queries, const Schema& schema,
                                    const std::optional<RunManifest>& manifest) {
    std::string out;
    if (manifest) out += jsonl_line(manifest_to_json(*manifest));
    for (const auto& q : queries) out += jsonl_line(query_to_json(q, schema));
    return out;
}

// --- plans ---------------------------------------------------------------------

// Worker-visible side: display ids and features only. The hidden side
// (roles, pair ids, source query ids) goes to the operator file. The header
// references the run manifest by (config digest, seed) instead of embedding
// it: the embedded copy lives in the operator file, and the worker-facing
// bytes stay free of tool metadata and timestamps.
inline std::string visible_plan_to_jsonl(const TaskPlan& plan, const Schema& schema, const RunManifest& manifest) {
    json header;
    header["record_type"] = "plan_header";
    header["format_version"] = kFormatVersion;
    header["worker_id"] = plan.worker_id;
    header["manifest"] = json{{"config_digest", manifest.config_digest}, {"seed", manifest.seed}};
    std::string out = jsonl_line(header);
    for (const auto& item : plan.items) {
        json j;
        j["record_type"] = "item";
        j["display_id"] = item.display_id;
        j["features"] = features_to_json(item.features, schema);
        out += jsonl_line(j);
    }
    return out;
}

inline std::string hidden_map_to_jsonl(const TaskPlan& plan, const PlanConfig& config, const RunManifest& manifest) {
    std::string out = jsonl_line(manifest_to_json(manifest));
    json header;
    header["record_type"] = "plan_header";
    header["worker_id"] = plan.worker_id;
    header["total_items"] = config.total_items;
    header["pairs_per_worker"] = config.pairs_per_worker;
    header["min_separation"] = config.min_separation;
    out += jsonl_line(header);
    for (const auto& item : plan.items) {
        const HiddenEntry& entry = plan.hidden_map.at(item.display_id);
        json j;
        j["record_type"] = "hidden";
        j["display_id"] = item.display_id;
        j["query_id"] = entry.query_id;
        j["role"] = to_string(entry.role);
        if (entry.role != Role::filler) j["pair_id"] = entry.pair_id;
        out += jsonl_line(j);
    }
    return out;
}

struct VisiblePlan {
    std::optional<RunManifest> manifest;
    std::string worker_id;
    std::vector<DisplayItem> items;
};

inline VisiblePlan read_visible_plan(const std::string& path, const Schema& schema) {
    VisiblePlan out;
    JsonlFile file = read_jsonl(path);
    out.manifest = file.manifest;
    for (const auto& rec : file.records) {
        std::string ctx = path + ":" + std::to_string(rec.line_no);
        std::string type = rec.value.value("record_type", "");
        if (type == "plan_header") {
            out.worker_id = detail::get_string(rec.value, "worker_id", ctx);
        } else if (type == "item") {
            DisplayItem item;
            item.display_id = detail::get_string(rec.value, "display_id", ctx);
            item.features = features_from_json(detail::require(rec.value, "features", ctx), schema, ctx);
            out.items.push_back(std::move(item));
        } else {
            throw Error(ctx + ": unexpected record type '" + type + "'");
        }
    }
    if (out.worker_id.empty()) throw Error(path + ": missing plan_header record");
    return out;
}

inline Role role_from_string(const std::string& s, const std::string& ctx) {
    if (s == "original") return Role::original;
    if (s == "counterfactual") return Role::counterfactual;
    if (s == "filler") return Role::filler;
    throw Error(ctx + ": unknown role '" + s + "'");
}

struct HiddenPlan {
    std::optional<RunManifest> manifest;
    std::string worker_id;
    PlanConfig config;  // rng_seed not stored in the file
    std::vector<std::string> display_order;
    std::map<std::string, HiddenEntry> hidden_map;
};

inline HiddenPlan read_hidden_map(const std::string& path) {
    HiddenPlan out;
    JsonlFile file = read_jsonl(path);
    out.manifest = file.manifest;
    for (const auto& rec : file.records) {
        std::string ctx = path + ":" + std::to_string(rec.line_no);
        std::string type = rec.value.value("record_type", "");
        if (type == "plan_header") {
            out.worker_id = detail::get_string(rec.value, "worker_id", ctx);
            out.config.total_items = detail::get_int(rec.value, "total_items", ctx);
            out.config.pairs_per_worker = detail::get_int(rec.value, "pairs_per_worker", ctx);
            out.config.min_separation = detail::get_int(rec.value, "min_separation", ctx);
        } else if (type == "hidden") {
            std::string display_id = detail::get_string(rec.value, "display_id", ctx);
            HiddenEntry entry;
            entry.query_id = detail::get_string(rec.value, "query_id", ctx);
            entry.role = role_from_string(detail::get_string(rec.value, "role", ctx), ctx);
            if (rec.value.contains("pair_id")) entry.pair_id = detail::get_string(rec.value, "pair_id", ctx);
            if (!out.hidden_map.emplace(display_id, entry).second)
                throw Error(ctx + ": duplicate display id '" + display_id + "'");
            out.display_order.push_back(display_id);
        } else {
            throw Error(ctx + ": unexpected record type '" + type + "'");
        }
    }
    if (out.worker_id.empty()) throw Error(path + ": missing plan_header record");
    return out;
}

inline TaskPlan combine_plan(const VisiblePlan& visible, const HiddenPlan& hidden) {
    if (visible.worker_id != hidden.worker_id)
        throw Error("plan files disagree on worker id: '" + visible.worker_id + "' vs '" + hidden.worker_id + "'");
    TaskPlan plan;
    plan.worker_id = visible.worker_id;
    plan.items = visible.items;
    plan.hidden_map = hidden.hidden_map;
    for (const auto& item : plan.items)
        if (!plan.hidden_map.count(item.display_id))
            throw Error("display id '" + item.display_id + "' has no hidden entry");
    return plan;
}

// --- probe pair audit file -------------------------------------------------------

inline json disguise_to_json(const DisguiseRecord& rec) {
    json j = json::object();
    json perturbed = json::object();
    for (const auto& [field, oldnew] : rec.perturbed_fields)
        perturbed[field] = json{{"old", oldnew.first}, {"new", oldnew.second}};
    json identity = json::object();
    for (const auto& [field, oldnew] : rec.identity_fields)
        identity[field] = json{{"old", oldnew.first}, {"new", oldnew.second}};
    json text = json::object();
    for (const auto& [field, oldnew] : rec.text_fields)
        text[field] = json{{"old", oldnew.first}, {"new", oldnew.second}};
    j["perturbed_fields"] = perturbed;
    j["identity_fields"] = identity;
    j["text_fields"] = text;
    return j;
}

inline DisguiseRecord disguise_from_json(const json& j) {
    DisguiseRecord rec;
    if (j.contains("perturbed_fields"))
        for (const auto& [field, v] : j.at("perturbed_fields").items())
            rec.perturbed_fields[field] = {v.at("old").get<double>(), v.at("new").get<double>()};
    if (j.contains("identity_fields"))
        for (const auto& [field, v] : j.at("identity_fields").items())
            rec.identity_fields[field] = {v.at("old").get<std::string>(), v.at("new").get<std::string>()};
    if (j.contains("text_fields"))
        for (const auto& [field, v] : j.at("text_fields").items())
            rec.text_fields[field] = {v.at("old").get<std::string>(), v.at("new").get<std::string>()};
    return rec;
}

inline std::string probes_to_jsonl(const std::vector<ProbePair>& pairs, const Schema& schema,
                                   const RunManifest& manifest) {
    std::string out = jsonl_line(manifest_to_json(manifest));
    for (const auto& p : pairs) {
        json j;
        j["record_type"] = "probe_pair";
        j["pair_id"] = p.pair_id;
        j["flipped_from"] = p.flipped_from;
        j["flipped_to"] = p.flipped_to;
        j["original"] = query_to_json(p.original, schema);
        j["counterfactual"] = query_to_json(p.counterfactual, schema);
        j["disguise"] = disguise_to_json(p.disguise);
        out += jsonl_line(j);
    }
    return out;
}

inline std::vector<ProbePair> read_probes(const std::string& path, const Schema& schema) {
    std::vector<ProbePair> out;
    JsonlFile file = read_jsonl(path);
    for (const auto& rec : file.records) {
        std::string ctx = path + ":" + std::to_string(rec.line_no);
        if (rec.value.value("record_type", "") != "probe_pair")
            throw Error(ctx + ": unexpected record type");
        ProbePair p;
        p.pair_id = detail::get_string(rec.value, "pair_id", ctx);
        p.flipped_from = detail::get_string(rec.value, "flipped_from", ctx);
        p.flipped_to = detail::get_string(rec.value, "flipped_to", ctx);
        p.original = query_from_json(detail::require(rec.value, "original", ctx), schema, ctx);
        p.counterfactual = query_from_json(detail::require(rec.value, "counterfactual", ctx), schema, ctx);
        p.disguise = disguise_from_json(detail::require(rec.value, "disguise", ctx));
        out.push_back(std::move(p));
    }
    return out;
}

// --- responses -------------------------------------------------------------------

inline std::string responses_to_jsonl(const std::vector<Response>& responses,
                                      const std::optional<RunManifest>& manifest) {
    std::string out;
    if (manifest) out += jsonl_line(manifest_to_json(*manifest));
    for (const auto& r : responses) {
        json j;
        j["record_type"] = "response";
        j["worker_id"] = r.worker_id;
        j["display_id"] = r.display_id;
        j["label"] = r.label;
        out += jsonl_line(j);
    }
    return out;
}

inline std::vector<Response> read_responses(const std::string& path, const LabelScale& scale,
                                            std::vector<Diagnostic>& diagnostics) {
    std::vector<Response> out;
    JsonlFile file = read_jsonl(path);
    for (const auto& rec : file.records) {
        std::string ctx = path + ":" + std::to_string(rec.line_no);
        try {
            Response r;
            r.worker_id = detail::get_string(rec.value, "worker_id", ctx);
            r.display_id = detail::get_string(rec.value, "display_id", ctx);
            r.label = detail::get_int(rec.value, "label", ctx);
            if (!on_scale(scale, r.label)) {
                diagnostics.push_back({path, rec.line_no,
                                       "label " + std::to_string(r.label) + " outside scale [" +
                                           std::to_string(scale.min_label) + ", " + std::to_string(scale.max_label) +
                                           "]"});
                continue;
            }
            out.push_back(std::move(r));
        } catch (const Error& e) {
            diagnostics.push_back({path, rec.line_no, e.what()});
        }
    }
    return out;
}

// --- bias reports ------------------------------------------------------------------

inline json bias_report_to_json(const BiasReport& r) {
    json j;
    j["record_type"] = "bias_report";
    j["worker_id"] = r.worker_id;
    j["pair_count"] = r.pair_count;
    j["incomplete_pairs"] = r.incomplete_pairs;
    if (r.raw_bias) j["raw_bias"] = *r.raw_bias;
    if (r.normalized_bias) j["normalized_bias"] = *r.normalized_bias;
    j["reliable"] = r.reliable;
    j["status"] = r.status;
    return j;
}

inline std::string bias_reports_to_jsonl(const std::vector<BiasReport>& reports,
                                         const std::optional<RunManifest>& manifest) {
    std::string out;
    if (manifest) out += jsonl_line(manifest_to_json(*manifest));
    for (const auto& r : reports) out += jsonl_line(bias_report_to_json(r));
    return out;
}

inline std::vector<BiasReport> read_bias_reports(const std::string& path) {
    std::vector<BiasReport> out;
    JsonlFile file = read_jsonl(path);
    for (const auto& rec : file.records) {
        std::string ctx = path + ":" + std::to_string(rec.line_no);
        BiasReport r;
        r.worker_id = detail::get_string(rec.value, "worker_id", ctx);
        r.pair_count = detail::get_int(rec.value, "pair_count", ctx);
        r.incomplete_pairs = detail::get_int(rec.value, "incomplete_pairs", ctx);
        if (rec.value.contains("raw_bias")) r.raw_bias = detail::get_number(rec.value, "raw_bias", ctx);
        if (rec.value.contains("normalized_bias"))
            r.normalized_bias = detail::get_number(rec.value, "normalized_bias", ctx);
        r.reliable = detail::get_bool(rec.value, "reliable", ctx);
        r.status = detail::get_string(rec.value, "status", ctx);
        out.push_back(std::move(r));
    }
    return out;
}

// --- gold baseline reports -------------------------------------------------------

inline json gold_baseline_to_json(const GoldBaselineReport& r) {
    json j;
    j["record_type"] = "gold_baseline";
    j["worker_id"] = r.worker_id;
    json groups = json::object();
    for (const auto& [group, c] : r.per_group) {
        json gj;
        gj["tp"] = c.tp;
        gj["fp"] = c.fp;
        gj["tn"] = c.tn;
        gj["fn"] = c.fn;
        gj["fpr"] = c.fpr() ? json(*c.fpr()) : json(nullptr);
        gj["tpr"] = c.tpr() ? json(*c.tpr()) : json(nullptr);
        groups[group] = gj;
    }
    j["per_group"] = groups;
    j["fpr_difference"] = r.fpr_difference ? json(*r.fpr_difference) : json(nullptr);
    j["tpr_difference"] = r.tpr_difference ? json(*r.tpr_difference) : json(nullptr);
    return j;
}

// --- surveys and self-report scores ---------------------------------------------------

inline std::string survey_answers_to_jsonl(const std::map<std::string, std::vector<SurveyAnswer>>& by_worker,
                                           const std::optional<RunManifest>& manifest) {
    std::string out;
    if (manifest) out += jsonl_line(manifest_to_json(*manifest));
    for (const auto& [worker, answers] : by_worker) {
        for (const auto& a : answers) {
            json j;
            j["record_type"] = "survey_answer";
            j["worker_id"] = worker;
            j["item_id"] = a.item_id;
            j["value"] = a.value;
            j["min"] = a.min_value;
            j["max"] = a.max_value;
            j["reverse_coded"] = a.reverse_coded;
            out += jsonl_line(j);
        }
    }
    return out;
}

inline std::map<std::string, std::vector<SurveyAnswer>> read_survey_answers(const std::string& path) {
    std::map<std::string, std::vector<SurveyAnswer>> out;
    JsonlFile file = read_jsonl(path);
    for (const auto& rec : file.records) {
        std::string ctx = path + ":" + std::to_string(rec.line_no);
        SurveyAnswer a;
        std::string worker = detail::get_string(rec.value, "worker_id", ctx);
        a.item_id = detail::get_string(rec.value, "item_id", ctx);
        a.value = detail::get_number(rec.value, "value", ctx);
        a.min_value = detail::get_number(rec.value, "min", ctx);
        a.max_value = detail::get_number(rec.value, "max", ctx);
        a.reverse_coded = detail::get_bool(rec.value, "reverse_coded", ctx);
        out[worker].push_back(std::move(a));
    }
    return out;
}

inline std::string self_scores_to_jsonl(const std::vector<SelfReportScore>& scores,
                                        const std::optional<RunManifest>& manifest) {
    std::string out;
    if (manifest) out += jsonl_line(manifest_to_json(*manifest));
    for (const auto& s : scores) {
        json j;
        j["record_type"] = "self_report";
        j["worker_id"] = s.worker_id;
        j["survey_score"] = s.survey_score;
        out += jsonl_line(j);
    }
    return out;
}

inline std::vector<SelfReportScore> read_self_scores(const std::string& path) {
    std::vector<SelfReportScore> out;
    JsonlFile file = read_jsonl(path);
    for (const auto& rec : file.records) {
        std::string ctx = path + ":" + std::to_string(rec.line_no);
        SelfReportScore s;
        s.worker_id = detail::get_string(rec.value, "worker_id", ctx);
        s.survey_score = detail::get_number(rec.value, "survey_score", ctx);
        out.push_back(std::move(s));
    }
    return out;
}

// --- aggregated dataset -----------------------------------------------------------------

inline std::string dataset_to_jsonl(const AggregatedDataset& dataset, const std::optional<RunManifest>& manifest) {
    std::string out;
    if (manifest) out += jsonl_line(manifest_to_json(*manifest));
    for (const auto& [query_id, row] : dataset.rows) {
        json j;
        j["record_type"] = "dataset_row";
        j["query_id"] = query_id;
        j["label"] = row.label;
        j["contributors"] = row.contributors;
        j["total_weight"] = row.total_weight;
        out += jsonl_line(j);
    }
    for (const auto& query_id : dataset.dropped) {
        json j;
        j["record_type"] = "dropped_query";
        j["query_id"] = query_id;
        j["reason"] = "all responses have zero weight";
        out += jsonl_line(j);
    }
    return out;
}

inline AggregatedDataset read_dataset(const std::string& path) {
    AggregatedDataset out;
    JsonlFile file = read_jsonl(path);
    for (const auto& rec : file.records) {
        std::string ctx = path + ":" + std::to_string(rec.line_no);
        std::string type = rec.value.value("record_type", "");
        if (type == "dataset_row") {
            AggregatedRow row;
            std::string query_id = detail::get_string(rec.value, "query_id", ctx);
            row.label = detail::get_int(rec.value, "label", ctx);
            row.contributors = detail::get_int(rec.value, "contributors", ctx);
            row.total_weight = detail::get_number(rec.value, "total_weight", ctx);
            out.rows[query_id] = row;
        } else if (type == "dropped_query") {
            out.dropped.push_back(detail::get_string(rec.value, "query_id", ctx));
        } else {
            throw Error(ctx + ": unexpected record type '" + type + "'");
        }
    }
    return out;
}

// --- fairness summaries ----------------------------------------------------------------

inline json fairness_to_json(const FairnessSummary& s) {
    json j;
    j["group_a"] = s.group_a;
    j["group_b"] = s.group_b;
    j["positive_threshold"] = s.positive_threshold;
    j["parity_gap"] = s.parity_gap ? json(*s.parity_gap) : json(nullptr);
    json groups = json::object();
    for (const auto& [name, stat] : s.groups) {
        groups[name] = json{{"count", stat.count},
                            {"positives", stat.positives},
                            {"positive_rate", stat.positive_rate},
                            {"mean_label", stat.mean_label}};
    }
    j["groups"] = groups;
    return j;
}

// --- TSV resources (lexicon, identity pools, synonyms) -----------------------------------

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return out;
}

template <typename Fn>
inline void for_tsv_lines(const std::string& content, const std::string& name, int expected_fields, Fn&& fn) {
    std::istringstream in(content);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields = split_tabs(line);
        if (static_cast<int>(fields.size()) != expected_fields)
            throw Error(name + ":" + std::to_string(line_no) + ": expected " + std::to_string(expected_fields) +
                        " tab-separated fields, got " + std::to_string(fields.size()));
        fn(fields, line_no);
    }
}

}  // namespace detail

// one mapping per line: term<TAB>counterpart
inline TermLexicon parse_lexicon_tsv(const std::string& content, const std::string& name) {
    TermLexicon lex;
    detail::for_tsv_lines(content, name, 2, [&](const std::vector<std::string>& f, int line_no) {
        try {
            lex.add(f[0], f[1]);
        } catch (const Error& e) {
            throw Error(name + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });
    return lex;
}

inline TermLexicon read_lexicon_file(const std::string& path) { return parse_lexicon_tsv(read_file(path), path); }

// one pool value per line: group<TAB>field<TAB>value
inline std::map<std::string, std::map<std::string, std::vector<std::string>>> parse_identity_pools_tsv(
    const std::string& content, const std::string& name) {
    std::map<std::string, std::map<std::string, std::vector<std::string>>> pools;
    detail::for_tsv_lines(content, name, 3, [&](const std::vector<std::string>& f, int line_no) {
        if (f[0].empty() || f[1].empty() || f[2].empty())
            throw Error(name + ":" + std::to_string(line_no) + ": empty field");
        pools[f[1]][f[0]].push_back(f[2]);  // field -> group -> values
    });
    return pools;
}

inline std::map<std::string, std::map<std::string, std::vector<std::string>>> read_identity_pools_file(
    const std::string& path) {
    return parse_identity_pools_tsv(read_file(path), path);
}

// one synonym per line: term<TAB>synonym (terms repeat to extend the list)
inline SynonymTable parse_synonyms_tsv(const std::string& content, const std::string& name) {
    SynonymTable table;
    detail::for_tsv_lines(content, name, 2, [&](const std::vector<std::string>& f, int line_no) {
        try {
            table.add(f[0], f[1]);
        } catch (const Error& e) {
            throw Error(name + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });
    return table;
}

inline SynonymTable read_synonyms_file(const std::string& path) { return parse_synonyms_tsv(read_file(path), path); }

// --- CSV --------------------------------------------------------------------------------

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += csv_escape(fields[i]);
    }
    out.push_back('\n');
    return out;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// --- experiment report ---------------------------------------------------------------------

inline json dataset_to_json(const AggregatedDataset& dataset) {
    json rows = json::object();
    for (const auto& [query_id, row] : dataset.rows)
        rows[query_id] = json{{"label", row.label}, {"contributors", row.contributors}, {"total_weight", row.total_weight}};
    return json{{"rows", rows}, {"dropped", dataset.dropped}};
}

inline json comparison_to_json(const PipelineComparison& c) {
    json j;
    j["unweighted"] = fairness_to_json(c.unweighted);
    j["counterfactual_policy"] = fairness_to_json(c.counterfactual_policy);
    j["self_report_policy"] = fairness_to_json(c.self_report_policy);
    j["datasets"] = json{{"unweighted", dataset_to_json(c.unweighted_dataset)},
                         {"counterfactual_policy", dataset_to_json(c.counterfactual_dataset)},
                         {"self_report_policy", dataset_to_json(c.self_report_dataset)}};
    json scatter = json::array();
    for (const auto& p : c.scatter) {
        json pj;
        pj["worker_id"] = p.worker_id;
        pj["counterfactual_score"] = p.counterfactual_score ? json(*p.counterfactual_score) : json(nullptr);
        pj["self_report_score"] = p.self_report_score ? json(*p.self_report_score) : json(nullptr);
        scatter.push_back(pj);
    }
    j["scatter"] = scatter;
    return j;
}

inline json experiment_report_to_json(const ExperimentReport& r) {
    json j;
    j["record_type"] = "experiment_report";
    j["format_version"] = kFormatVersion;
    j["seed"] = r.seed;
    j["total_responses"] = r.total_responses;
    j["clipped_responses"] = r.clipped_responses;
    j["clipped_pairs"] = r.clipped_pairs;
    j["separation_auc"] = r.separation_auc ? json(*r.separation_auc) : json(nullptr);
    json by_kind = json::object();
    for (const auto& [kind, ks] : r.by_kind)
        by_kind[kind] = json{
            {"workers", ks.workers}, {"scored", ks.scored}, {"mean_score", ks.mean_score}, {"score_sd", ks.score_sd}};
    j["by_kind"] = by_kind;
    json workers = json::array();
    for (const auto& w : r.workers) {
        json wj;
        wj["worker_id"] = w.worker_id;
        wj["kind"] = to_string(w.kind);
        wj["bias_shift"] = w.bias_shift;
        wj["noise_sd"] = w.noise_sd;
        wj["survey"] = to_string(w.honesty);
        wj["pair_count"] = w.report.pair_count;
        wj["incomplete_pairs"] = w.report.incomplete_pairs;
        if (w.report.raw_bias) wj["raw_bias"] = *w.report.raw_bias;
        if (w.report.normalized_bias) wj["normalized_bias"] = *w.report.normalized_bias;
        wj["reliable"] = w.report.reliable;
        wj["status"] = w.report.status;
        wj["self_report_score"] = w.self_report_score;
        workers.push_back(wj);
    }
    j["workers"] = workers;
    j["comparison"] = comparison_to_json(r.comparison);
    return j;
}

// One row per worker: the plotting table behind score-vs-kind and
// counterfactual-vs-self-report scatter charts.
inline std::string experiment_workers_csv(const ExperimentReport& r) {
    std::string out = csv_row({"worker_id", "kind", "bias_shift", "noise_sd", "survey", "pair_count",
                               "incomplete_pairs", "raw_bias", "normalized_bias", "reliable", "status",
                               "self_report_score"});
    for (const auto& w : r.workers) {
        out += csv_row({w.worker_id, to_string(w.kind), format_double(w.bias_shift), format_double(w.noise_sd),
                        to_string(w.honesty), std::to_string(w.report.pair_count),
                        std::to_string(w.report.incomplete_pairs),
                        w.report.raw_bias ? format_double(*w.report.raw_bias) : "",
                        w.report.normalized_bias ? format_double(*w.report.normalized_bias) : "",
                        w.report.reliable ? "true" : "false", w.report.status,
                        format_double(w.self_report_score)});
    }
    return out;
}

// One row per (pipeline, group), with the pipeline's parity gap repeated on
// each of its rows so the table stays flat for plotting.
inline std::string experiment_fairness_csv(const PipelineComparison& c) {
    std::string out =
        csv_row({"pipeline", "group", "count", "positives", "positive_rate", "mean_label", "parity_gap"});
    auto emit = [&](const std::string& pipeline, const FairnessSummary& s) {
        for (const auto& [group, stat] : s.groups) {
            out += csv_row({pipeline, group, std::to_string(stat.count), std::to_string(stat.positives),
                            format_double(stat.positive_rate), format_double(stat.mean_label),
                            s.parity_gap ? format_double(*s.parity_gap) : ""});
        }
    };
    emit("unweighted", c.unweighted);
    emit("counterfactual-policy", c.counterfactual_policy);
    emit("self-report-policy", c.self_report_policy);
    return out;
}

}  // namespace cfprobe::io
