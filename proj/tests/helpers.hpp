#pragma once

// Shared fixture builders for the test suites: a small defendant-rating
// domain (risk labels on [1,5]) with a gendered sensitive attribute, plus
// filesystem scratch space for CLI and format tests.

#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "cfprobe/counterfactual.hpp"
#include "cfprobe/model.hpp"

namespace testutil {

inline cfprobe::LabelScale scale15() { return {1, 5}; }

inline cfprobe::Schema standard_schema() {
    cfprobe::Schema schema;
    schema.fields.push_back({"age", cfprobe::FieldKind::numeric, {}, 0});
    schema.fields.push_back({"prior_offenses", cfprobe::FieldKind::numeric, {}, 0});
    schema.fields.push_back({"gender", cfprobe::FieldKind::categorical, {"female", "male"}, -1});
    schema.fields.push_back({"first_name", cfprobe::FieldKind::text, {}, -1});
    schema.fields.push_back({"statement", cfprobe::FieldKind::text, {}, -1});
    return schema;
}

inline cfprobe::SensitiveSpec gender_spec() { return {"gender", {"female", "male"}}; }

inline cfprobe::Query defendant(const std::string& id, double age, double priors, const std::string& gender,
                                const std::string& name, const std::string& statement,
                                std::optional<int> gold = std::nullopt) {
    cfprobe::Query q;
    q.query_id = id;
    q.features = {{"age", cfprobe::FieldValue::numeric(age)},
                  {"prior_offenses", cfprobe::FieldValue::numeric(priors)},
                  {"gender", cfprobe::FieldValue::categorical(gender)},
                  {"first_name", cfprobe::FieldValue::text(name)},
                  {"statement", cfprobe::FieldValue::text(statement)}};
    q.gold_label = gold;
    return q;
}

inline cfprobe::TermLexicon gender_lexicon() {
    cfprobe::TermLexicon lex;
    lex.add("she", "he");
    lex.add("her", "him");
    lex.add("woman", "man");
    lex.add("women", "men");
    lex.add("wife", "husband");
    lex.add("mother", "father");
    lex.add("mrs", "mr");
    return lex;
}

inline cfprobe::DisguiseConfig standard_disguise() {
    cfprobe::DisguiseConfig cfg;
    cfg.noise_fields["age"] = 0.1;
    cfg.identity_pools["first_name"]["female"] = {"Ava", "Mia", "Zoe"};
    cfg.identity_pools["first_name"]["male"] = {"Leo", "Max", "Sam"};
    cfg.lexicon = gender_lexicon();
    cfg.synonyms.add("quickly", "rapidly");
    cfg.synonyms.add("quickly", "swiftly");
    cfg.synonym_rate = 0.0;
    return cfg;
}

// Scratch directory removed on destruction; unique per instance.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("cfprobe_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testutil
