#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cfprobe {

// Hard failures (bad inputs, violated preconditions, infeasible configs).
// Data-quality findings are reported as Violation values instead.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Violation {
    std::string where;    // query id, pair id, field name, ...
    std::string message;
};

// Ordinal label range shared by every label in a task. Binary tasks use [0,1].
struct LabelScale {
    int min_label = 0;
    int max_label = 1;
};

inline void check_scale(const LabelScale& s) {
    if (s.min_label >= s.max_label) throw Error("label scale requires min < max");
}

inline int scale_range(const LabelScale& s) {
    check_scale(s);
    return s.max_label - s.min_label;
}

inline bool on_scale(const LabelScale& s, int label) {
    return label >= s.min_label && label <= s.max_label;
}

inline double scale_midpoint(const LabelScale& s) {
    return (s.min_label + s.max_label) / 2.0;
}

enum class FieldKind { numeric, categorical, text };

inline const char* to_string(FieldKind k) {
    switch (k) {
        case FieldKind::numeric: return "numeric";
        case FieldKind::categorical: return "categorical";
        case FieldKind::text: return "text";
    }
    return "?";
}

struct FieldValue {
    FieldKind kind = FieldKind::text;
    double number = 0.0;   // numeric
    std::string str;       // categorical token or text body

    static FieldValue numeric(double v) { return {FieldKind::numeric, v, {}}; }
    static FieldValue categorical(std::string tok) { return {FieldKind::categorical, 0.0, std::move(tok)}; }
    static FieldValue text(std::string s) { return {FieldKind::text, 0.0, std::move(s)}; }

    bool operator==(const FieldValue& o) const {
        if (kind != o.kind) return false;
        return kind == FieldKind::numeric ? number == o.number : str == o.str;
    }
};

// Declared shape of every field in a query pool. `decimals` applies to
// numeric fields: 0 means integer-valued, k > 0 means k decimal places,
// -1 means unconstrained real.
struct FieldSpec {
    std::string name;
    FieldKind kind = FieldKind::text;
    std::vector<std::string> categories;  // categorical only
    int decimals = -1;                    // numeric only
};

struct Schema {
    std::vector<FieldSpec> fields;

    const FieldSpec* find(const std::string& name) const {
        for (const auto& f : fields)
            if (f.name == name) return &f;
        return nullptr;
    }
};

// One labeling item: ordered feature map plus an optional gold label used
// only by the gold-question baseline, never by the counterfactual score.
struct Query {
    std::string query_id;
    std::vector<std::pair<std::string, FieldValue>> features;  // ordered
    std::optional<int> gold_label;

    const FieldValue* find(const std::string& name) const {
        for (const auto& [k, v] : features)
            if (k == name) return &v;
        return nullptr;
    }
    FieldValue* find(const std::string& name) {
        for (auto& [k, v] : features)
            if (k == name) return &v;
        return nullptr;
    }

    bool operator==(const Query& o) const {
        return query_id == o.query_id && features == o.features && gold_label == o.gold_label;
    }
};

// The demographic attribute bias is measured against, with its declared
// group ordering (metric differences are group[0] minus group[1]).
struct SensitiveSpec {
    std::string attribute;
    std::vector<std::string> groups;

    bool has_group(const std::string& g) const {
        for (const auto& x : groups)
            if (x == g) return true;
        return false;
    }
};

inline void check_sensitive_spec(const SensitiveSpec& spec) {
    if (spec.attribute.empty()) throw Error("sensitive attribute name is empty");
    if (spec.groups.size() < 2) throw Error("sensitive attribute needs at least 2 groups");
    std::set<std::string> seen;
    for (const auto& g : spec.groups)
        if (!seen.insert(g).second) throw Error("duplicate sensitive group '" + g + "'");
}

// Audit trail of every disguise transform applied to a counterfactual.
// Each map records (old, new) per touched field; keys never include the
// sensitive attribute itself.
struct DisguiseRecord {
    std::map<std::string, std::pair<double, double>> perturbed_fields;
    std::map<std::string, std::pair<std::string, std::string>> identity_fields;
    std::map<std::string, std::pair<std::string, std::string>> text_fields;

    bool operator==(const DisguiseRecord&) const = default;
};

struct ProbePair {
    std::string pair_id;
    Query original;
    Query counterfactual;
    std::string flipped_from;
    std::string flipped_to;
    DisguiseRecord disguise;

    bool operator==(const ProbePair&) const = default;
};

enum class Role { original, counterfactual, filler };

inline const char* to_string(Role r) {
    switch (r) {
        case Role::original: return "original";
        case Role::counterfactual: return "counterfactual";
        case Role::filler: return "filler";
    }
    return "?";
}

// What the worker sees: an opaque display id plus features, nothing else.
struct DisplayItem {
    std::string display_id;
    std::vector<std::pair<std::string, FieldValue>> features;

    bool operator==(const DisplayItem&) const = default;
};

// Operator-only record linking a display item back to its query and probe role.
struct HiddenEntry {
    std::string query_id;
    Role role = Role::filler;
    std::string pair_id;  // empty for fillers

    bool operator==(const HiddenEntry&) const = default;
};

struct TaskPlan {
    std::string worker_id;
    std::vector<DisplayItem> items;
    std::map<std::string, HiddenEntry> hidden_map;  // display_id -> entry

    bool operator==(const TaskPlan&) const = default;
};

struct Response {
    std::string worker_id;
    std::string display_id;
    int label = 0;

    bool operator==(const Response&) const = default;
};

// Per-worker outcome of the counterfactual probe score. raw_bias and
// normalized_bias are absent when no probe pair had both halves answered;
// a missing score is never reported as 0.
struct BiasReport {
    std::string worker_id;
    int pair_count = 0;
    int incomplete_pairs = 0;
    std::optional<double> raw_bias;
    std::optional<double> normalized_bias;
    bool reliable = false;
    std::string status = "ok";  // "ok" | "no usable probe pairs"

    bool operator==(const BiasReport&) const = default;
};

// --- validation ---------------------------------------------------------

inline std::vector<Violation> validate_query(const Query& q, const Schema& schema, const LabelScale& scale) {
    std::vector<Violation> out;
    std::set<std::string> seen;
    for (const auto& [name, value] : q.features) {
        if (!seen.insert(name).second) {
            out.push_back({q.query_id + "/" + name, "duplicate field"});
            continue;
        }
        const FieldSpec* spec = schema.find(name);
        if (!spec) {
            out.push_back({q.query_id + "/" + name, "unknown field"});
            continue;
        }
        if (spec->kind != value.kind) {
            out.push_back({q.query_id + "/" + name,
                           std::string("wrong kind: expected ") + to_string(spec->kind) + ", got " + to_string(value.kind)});
            continue;
        }
        if (spec->kind == FieldKind::categorical) {
            bool known = false;
            for (const auto& c : spec->categories)
                if (c == value.str) { known = true; break; }
            if (!known) out.push_back({q.query_id + "/" + name, "categorical value not in set: '" + value.str + "'"});
        }
    }
    for (const auto& spec : schema.fields) {
        if (!q.find(spec.name)) out.push_back({q.query_id + "/" + spec.name, "missing field"});
    }
    if (q.gold_label && !on_scale(scale, *q.gold_label)) {
        out.push_back({q.query_id, "gold label off-scale: " + std::to_string(*q.gold_label)});
    }
    return out;
}

// Field-wise diff: names of fields whose values differ between two queries.
inline std::set<std::string> field_diff(const Query& a, const Query& b) {
    std::set<std::string> out;
    for (const auto& [name, value] : a.features) {
        const FieldValue* other = b.find(name);
        if (!other || !(*other == value)) out.insert(name);
    }
    for (const auto& [name, value] : b.features) {
        if (!a.find(name)) out.insert(name);
    }
    return out;
}

// Fields the disguise record actually changed (old != new). Entries whose
// transform was a no-op (zero noise, same-value redraw) are excluded, so the
// result is exactly the set of fields allowed to differ beyond the flip.
inline std::set<std::string> changed_fields(const DisguiseRecord& rec) {
    std::set<std::string> out;
    for (const auto& [k, v] : rec.perturbed_fields)
        if (v.first != v.second) out.insert(k);
    for (const auto& [k, v] : rec.identity_fields)
        if (v.first != v.second) out.insert(k);
    for (const auto& [k, v] : rec.text_fields)
        if (v.first != v.second) out.insert(k);
    return out;
}

// Checks the ProbePair invariants: flip recorded correctly, and the
// counterfactual differs from the original exactly in the sensitive
// attribute plus the changed disguise-record fields.
inline std::vector<Violation> validate_probe_pair(const ProbePair& p, const SensitiveSpec& spec) {
    std::vector<Violation> out;
    if (p.flipped_from == p.flipped_to)
        out.push_back({p.pair_id, "flipped_from equals flipped_to"});
    const FieldValue* ov = p.original.find(spec.attribute);
    const FieldValue* cv = p.counterfactual.find(spec.attribute);
    if (!ov || ov->str != p.flipped_from)
        out.push_back({p.pair_id, "original sensitive value does not match flipped_from"});
    if (!cv || cv->str != p.flipped_to)
        out.push_back({p.pair_id, "counterfactual sensitive value does not match flipped_to"});
    if (p.disguise.perturbed_fields.count(spec.attribute) || p.disguise.identity_fields.count(spec.attribute) ||
        p.disguise.text_fields.count(spec.attribute))
        out.push_back({p.pair_id, "disguise record touches the sensitive attribute"});

    std::set<std::string> expected = changed_fields(p.disguise);
    expected.insert(spec.attribute);
    std::set<std::string> actual = field_diff(p.original, p.counterfactual);
    for (const auto& f : actual)
        if (!expected.count(f)) out.push_back({p.pair_id + "/" + f, "undeclared field difference"});
    for (const auto& f : expected)
        if (!actual.count(f)) out.push_back({p.pair_id + "/" + f, "declared difference not present"});
    return out;
}

}  // namespace cfprobe
