#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cfprobe/model.hpp"
#include "cfprobe/random.hpp"

namespace cfprobe {

namespace detail {

inline bool word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

inline std::string lower_copy(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string upper_copy(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

inline std::string capitalize_copy(std::string_view s) {
    std::string out = lower_copy(s);
    if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return out;
}

// Canonical case forms a token may take for matching: lowercase,
// Capitalized, or ALLCAPS (multi-letter only). Mixed-case tokens match
// nothing, which keeps term flipping an involution on arbitrary strings.
enum class CaseForm { none, lower, capitalized, upper };

inline CaseForm case_form(std::string_view token, const std::string& lowered) {
    if (token == lowered) return CaseForm::lower;
    if (token == capitalize_copy(lowered)) return CaseForm::capitalized;
    if (token.size() > 1 && token == upper_copy(lowered)) return CaseForm::upper;
    return CaseForm::none;
}

inline std::string apply_case(const std::string& lowered, CaseForm form) {
    switch (form) {
        case CaseForm::lower: return lowered;
        case CaseForm::capitalized: return capitalize_copy(lowered);
        case CaseForm::upper: return upper_copy(lowered);
        case CaseForm::none: break;
    }
    return lowered;
}

}  // namespace detail

// Bidirectional whole-word term map (gendered word pairs and the like).
// Stored lowercase; construction enforces the involution property and
// rejects self-mapped terms so a recorded hit always means a real change.
class TermLexicon {
  public:
    TermLexicon() = default;

    static TermLexicon from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
        TermLexicon lex;
        for (const auto& [a, b] : pairs) lex.add(a, b);
        return lex;
    }

    void add(std::string_view term, std::string_view counterpart) {
        std::string a = detail::lower_copy(term);
        std::string b = detail::lower_copy(counterpart);
        if (a.empty() || b.empty()) throw Error("lexicon entry with empty term");
        if (a == b) throw Error("lexicon term '" + a + "' maps to itself");
        auto ita = map_.find(a);
        auto itb = map_.find(b);
        if ((ita != map_.end() && ita->second != b) || (itb != map_.end() && itb->second != a))
            throw Error("lexicon entry '" + a + "' <-> '" + b + "' conflicts with an existing mapping");
        map_[a] = b;
        map_[b] = a;
    }

    const std::string* counterpart(const std::string& lowered_term) const {
        auto it = map_.find(lowered_term);
        return it == map_.end() ? nullptr : &it->second;
    }

    bool contains(const std::string& lowered_term) const { return map_.count(lowered_term) != 0; }
    bool empty() const { return map_.empty(); }
    std::size_t size() const { return map_.size(); }

  private:
    std::map<std::string, std::string> map_;
};

struct SynonymTable {
    std::map<std::string, std::vector<std::string>> synonyms;  // lowercase term -> candidates

    void add(std::string_view term, std::string_view synonym) {
        std::string t = detail::lower_copy(term);
        std::string s = detail::lower_copy(synonym);
        if (t.empty() || s.empty()) throw Error("synonym entry with empty term");
        if (t == s) throw Error("term '" + t + "' listed as its own synonym");
        synonyms[t].push_back(s);
    }

    const std::vector<std::string>* find(const std::string& lowered_term) const {
        auto it = synonyms.find(lowered_term);
        return it == synonyms.end() ? nullptr : &it->second;
    }

    bool empty() const { return synonyms.empty(); }
};

// Everything the disguise needs: relative noise magnitudes per numeric
// field, per-group replacement pools for dummy identity fields, the gendered
// term lexicon, and the synonym table with its substitution rate.
struct DisguiseConfig {
    std::map<std::string, double> noise_fields;  // field -> epsilon, 0 <= eps < 1
    std::map<std::string, std::map<std::string, std::vector<std::string>>> identity_pools;  // field -> group -> values
    TermLexicon lexicon;
    SynonymTable synonyms;
    double synonym_rate = 0.0;
    std::uint64_t rng_seed = 0;
};

inline void check_disguise_config(const DisguiseConfig& cfg) {
    for (const auto& [field, eps] : cfg.noise_fields)
        if (eps < 0.0 || eps >= 1.0)
            throw Error("noise magnitude for field '" + field + "' must satisfy 0 <= eps < 1");
    if (cfg.synonym_rate < 0.0 || cfg.synonym_rate > 1.0)
        throw Error("synonym rate must lie in [0,1]");
}

// Copy of `query` with the sensitive attribute set to `target_group` and
// every other field untouched. The new id is derived from (id, target).
inline Query flip_sensitive(const Query& query, const SensitiveSpec& spec, const std::string& target_group) {
    const FieldValue* current = query.find(spec.attribute);
    if (!current || current->kind != FieldKind::categorical)
        throw Error("query '" + query.query_id + "' has no categorical sensitive field '" + spec.attribute + "'");
    if (!spec.has_group(current->str))
        throw Error("query '" + query.query_id + "' sensitive value '" + current->str + "' not in declared groups");
    if (!spec.has_group(target_group))
        throw Error("target group '" + target_group + "' not in declared groups");
    if (target_group == current->str)
        throw Error("target group equals the query's current group '" + target_group + "'");

    Query out = query;
    out.query_id = query.query_id + "#cf#" + target_group;
    out.find(spec.attribute)->str = target_group;
    return out;
}

struct PerturbResult {
    Query query;
    std::map<std::string, std::pair<double, double>> fragment;  // field -> (old, new)
};

// Adds bounded relative noise to each configured numeric field: the new
// value is drawn uniformly from [v(1-eps), v(1+eps)] and honors the field's
// declared precision by sampling the precision grid inside that interval,
// so the perturbed value never leaves it.
inline PerturbResult perturb_numeric(Query query, const DisguiseConfig& config, const Schema& schema,
                                     RandomStream& stream) {
    PerturbResult out;
    for (const auto& [field, eps] : config.noise_fields) {
        FieldValue* value = query.find(field);
        if (!value) throw Error("noise field '" + field + "' missing from query '" + query.query_id + "'");
        if (value->kind != FieldKind::numeric)
            throw Error("noise field '" + field + "' is not numeric in query '" + query.query_id + "'");
        const FieldSpec* fs = schema.find(field);
        int decimals = fs ? fs->decimals : -1;

        double v = value->number;
        double lo = std::min(v * (1.0 - eps), v * (1.0 + eps));
        double hi = std::max(v * (1.0 - eps), v * (1.0 + eps));
        double next = v;
        if (eps > 0.0) {
            if (decimals >= 0) {
                double grid = std::pow(10.0, decimals);
                std::int64_t lo_i = static_cast<std::int64_t>(std::ceil(lo * grid));
                std::int64_t hi_i = static_cast<std::int64_t>(std::floor(hi * grid));
                // empty grid can only happen when the declared precision is
                // coarser than the value itself; keep the value unchanged
                next = lo_i > hi_i ? v : static_cast<double>(stream.uniform_int(lo_i, hi_i)) / grid;
            } else {
                next = stream.uniform_real(lo, hi);
            }
        }
        value->number = next;
        out.fragment[field] = {v, next};
    }
    out.query = std::move(query);
    return out;
}

struct IdentityResult {
    Query query;
    std::map<std::string, std::pair<std::string, std::string>> fragment;  // field -> (old, new)
};

// Replaces each configured dummy-identity field with a pool draw for the
// target group, avoiding the original value whenever the pool allows.
inline IdentityResult disguise_identity(Query query, const DisguiseConfig& config, const std::string& target_group,
                                        RandomStream& stream) {
    IdentityResult out;
    for (const auto& [field, pools] : config.identity_pools) {
        FieldValue* value = query.find(field);
        if (!value) throw Error("identity field '" + field + "' missing from query '" + query.query_id + "'");
        if (value->kind == FieldKind::numeric)
            throw Error("identity field '" + field + "' must be categorical or text");
        auto pool_it = pools.find(target_group);
        if (pool_it == pools.end() || pool_it->second.empty())
            throw Error("empty identity pool for field '" + field + "', group '" + target_group + "'");

        const std::vector<std::string>& pool = pool_it->second;
        std::vector<const std::string*> candidates;
        for (const auto& p : pool)
            if (p != value->str) candidates.push_back(&p);
        std::string next = candidates.empty() ? pool[stream.pick_index(pool.size())]
                                              : *candidates[stream.pick_index(candidates.size())];
        out.fragment[field] = {value->str, next};
        value->str = std::move(next);
    }
    out.query = std::move(query);
    return out;
}

// Replaces every lexicon term by its counterpart in a single left-to-right
// pass. Matching is whole-word and case-preserving over the canonical forms
// (lowercase, Capitalized, ALLCAPS); produced terms are never re-substituted,
// which makes the operation an involution.
inline std::string flip_text_terms(std::string_view text, const TermLexicon& lexicon) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (!detail::word_char(text[i])) {
            out.push_back(text[i]);
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && detail::word_char(text[j])) ++j;
        std::string_view token = text.substr(i, j - i);
        std::string lowered = detail::lower_copy(token);
        const std::string* counterpart = lexicon.counterpart(lowered);
        if (counterpart) {
            detail::CaseForm form = detail::case_form(token, lowered);
            if (form != detail::CaseForm::none) {
                out += detail::apply_case(*counterpart, form);
                i = j;
                continue;
            }
        }
        out.append(token);
        i = j;
    }
    return out;
}

// Independently replaces each table-matched word by a uniformly drawn
// synonym with probability `rate`. Words in `exclude` (the flip lexicon)
// are never substituted so the two text transforms stay composable.
inline std::string substitute_synonyms(std::string_view text, const SynonymTable& table, double rate,
                                       RandomStream& stream, const TermLexicon* exclude = nullptr) {
    if (rate < 0.0 || rate > 1.0) throw Error("synonym rate must lie in [0,1]");
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (!detail::word_char(text[i])) {
            out.push_back(text[i]);
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && detail::word_char(text[j])) ++j;
        std::string_view token = text.substr(i, j - i);
        std::string lowered = detail::lower_copy(token);
        const std::vector<std::string>* candidates = table.find(lowered);
        bool excluded = exclude && exclude->contains(lowered);
        if (candidates && !candidates->empty() && !excluded) {
            detail::CaseForm form = detail::case_form(token, lowered);
            if (form != detail::CaseForm::none && rate > 0.0 && stream.bernoulli(rate)) {
                out += detail::apply_case((*candidates)[stream.pick_index(candidates->size())], form);
                i = j;
                continue;
            }
        }
        out.append(token);
        i = j;
    }
    return out;
}

// Picks a flip target for a query: the other group when the attribute is
// binary, otherwise a uniform draw over the remaining groups.
inline std::string choose_target_group(const Query& query, const SensitiveSpec& spec, RandomStream& stream) {
    const FieldValue* current = query.find(spec.attribute);
    if (!current) throw Error("query '" + query.query_id + "' is missing the sensitive field");
    std::vector<std::string> others;
    for (const auto& g : spec.groups)
        if (g != current->str) others.push_back(g);
    if (others.empty()) throw Error("no alternative group for query '" + query.query_id + "'");
    if (others.size() == 1) return others[0];
    return others[stream.pick_index(others.size())];
}

// Full disguised counterfactual: sensitive flip, numeric noise, dummy
// identity substitution, then gendered-term flips and synonym substitution
// on every text field. The returned DisguiseRecord covers every transform.
inline ProbePair make_probe_pair(const Query& query, const SensitiveSpec& spec, const DisguiseConfig& config,
                                 const Schema& schema, std::optional<std::string> target_group, RandomStream& stream) {
    check_disguise_config(config);
    std::string target = target_group ? *target_group : choose_target_group(query, spec, stream);

    Query cf = flip_sensitive(query, spec, target);
    PerturbResult perturbed = perturb_numeric(std::move(cf), config, schema, stream);
    IdentityResult disguised = disguise_identity(std::move(perturbed.query), config, target, stream);

    ProbePair pair;
    pair.disguise.perturbed_fields = std::move(perturbed.fragment);
    pair.disguise.identity_fields = std::move(disguised.fragment);

    Query result = std::move(disguised.query);
    for (auto& [name, value] : result.features) {
        if (value.kind != FieldKind::text || name == spec.attribute) continue;
        if (pair.disguise.identity_fields.count(name)) continue;  // already replaced wholesale
        std::string before = value.str;
        std::string after = flip_text_terms(before, config.lexicon);
        after = substitute_synonyms(after, config.synonyms, config.synonym_rate, stream, &config.lexicon);
        if (after != before) {
            pair.disguise.text_fields[name] = {before, after};
            value.str = std::move(after);
        }
    }
    // a counterfactual has no ground truth of its own
    result.gold_label.reset();

    pair.pair_id = "pair#" + query.query_id;
    pair.original = query;
    pair.counterfactual = std::move(result);
    pair.flipped_from = query.find(spec.attribute)->str;
    pair.flipped_to = target;
    return pair;
}

}  // namespace cfprobe
