#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <catch_amalgamated.hpp>

#include "cfprobe/io.hpp"
#include "cfprobe/scheduler.hpp"
#include "helpers.hpp"

using namespace cfprobe;
using testutil::defendant;
using testutil::gender_spec;
using testutil::scale15;
using testutil::standard_disguise;
using testutil::standard_schema;
using testutil::TempDir;

namespace {

io::RunManifest test_manifest() {
    return io::make_manifest("plan", 42, "config bytes", {{"pool.jsonl", "pool bytes"}});
}

TaskPlan sample_plan(PlanConfig& cfg_out) {
    Schema schema = standard_schema();
    DisguiseConfig disguise = standard_disguise();
    std::vector<ProbePair> pairs;
    for (int i = 0; i < 2; ++i) {
        Query q = defendant("s" + std::to_string(i), 30 + i, i, i % 2 ? "male" : "female", i % 2 ? "Leo" : "Ava",
                            "She repaid the loan");
        RandomStream rng(derive_seed(9, q.query_id));
        pairs.push_back(make_probe_pair(q, gender_spec(), disguise, schema, std::nullopt, rng));
    }
    std::vector<Query> fill;
    for (int i = 0; i < 4; ++i)
        fill.push_back(defendant("f" + std::to_string(i), 20 + i, 1, "male", "Max", "a neutral statement"));
    cfg_out = {8, 2, 2, 7};
    return build_plan("w1", fill, pairs, cfg_out);
}

}  // namespace

TEST_CASE("content digests are stable fnv1a64 strings") {
    CHECK(io::digest("") == "fnv1a64:cbf29ce484222325");
    CHECK(io::digest("foobar") == "fnv1a64:85944171f73967e8");
    CHECK(io::digest("a") != io::digest("b"));
}

TEST_CASE("atomic_write_file creates parents and leaves no temp files") {
    TempDir dir;
    std::string path = dir.file("deep/nested/out.txt");
    io::atomic_write_file(path, "hello");
    CHECK(io::read_file(path) == "hello");
    io::atomic_write_file(path, "rewritten");
    CHECK(io::read_file(path) == "rewritten");

    int entries = 0;
    for (const auto& e : std::filesystem::directory_iterator(std::filesystem::path(path).parent_path())) {
        (void)e;
        ++entries;
    }
    CHECK(entries == 1);  // no .tmp remnants

    CHECK_THROWS_AS(io::read_file(dir.file("missing.txt")), Error);
}

TEST_CASE("timestamps are RFC 3339 UTC") {
    std::string ts = io::utc_timestamp();
    REQUIRE(ts.size() == 20);
    CHECK(ts[4] == '-');
    CHECK(ts[7] == '-');
    CHECK(ts[10] == 'T');
    CHECK(ts[13] == ':');
    CHECK(ts[16] == ':');
    CHECK(ts.back() == 'Z');
}

TEST_CASE("run manifest round trip") {
    io::RunManifest m = test_manifest();
    CHECK(m.command == "plan");
    CHECK(m.seed == 42);
    CHECK(m.config_digest == io::digest("config bytes"));
    CHECK(m.inputs.at("pool.jsonl") == io::digest("pool bytes"));
    CHECK_FALSE(m.timestamp.empty());

    io::json j = io::manifest_to_json(m);
    CHECK(j.at("record_type") == "manifest");
    CHECK(j.at("format_version") == io::kFormatVersion);
    CHECK(j.at("tool_version") == io::kToolVersion);

    io::RunManifest back = io::manifest_from_json(j);
    CHECK(back.command == m.command);
    CHECK(back.seed == m.seed);
    CHECK(back.config_digest == m.config_digest);
    CHECK(back.inputs == m.inputs);
    CHECK(back.timestamp == m.timestamp);
}

TEST_CASE("queries round trip through jsonl, gold label optional") {
    Schema schema = standard_schema();
    TempDir dir;
    std::vector<Query> queries{defendant("q1", 30, 2, "female", "Ava", "She paid", 4),
                               defendant("q2", 41, 0, "male", "Leo", "He paid")};
    std::string path = dir.file("pool.jsonl");
    io::atomic_write_file(path, io::queries_to_jsonl(queries, schema, test_manifest()));

    std::vector<io::Diagnostic> diags;
    io::QueryFile file = io::read_queries(path, schema, scale15(), diags);
    CHECK(diags.empty());
    REQUIRE(file.manifest.has_value());
    CHECK(file.manifest->command == "plan");
    REQUIRE(file.queries.size() == 2);
    CHECK(file.queries[0] == queries[0]);
    CHECK(file.queries[1] == queries[1]);

    SECTION("integer-valued numerics serialize without a decimal point") {
        std::string line = io::jsonl_line(io::query_to_json(queries[0], schema));
        CHECK(line.find("\"age\":30") != std::string::npos);
        CHECK(line.find("30.0") == std::string::npos);
    }
}

TEST_CASE("query file problems become line-numbered diagnostics") {
    Schema schema = standard_schema();
    TempDir dir;
    std::string path = dir.file("pool.jsonl");
    std::string good = io::jsonl_line(io::query_to_json(defendant("q1", 30, 2, "female", "Ava", "t"), schema));
    Query off_scale = defendant("q9", 30, 2, "female", "Ava", "t", 9);
    Query dup = defendant("q1", 31, 1, "male", "Leo", "t");
    Query unknown = defendant("q3", 30, 2, "female", "Ava", "t");
    unknown.features.push_back({"shoe_size", FieldValue::numeric(42)});

    io::atomic_write_file(path, good + io::jsonl_line(io::query_to_json(off_scale, schema)) +
                                    io::jsonl_line(io::query_to_json(dup, schema)) +
                                    "{\"query_id\":\"q4\"}\n");

    std::vector<io::Diagnostic> diags;
    io::QueryFile file = io::read_queries(path, schema, scale15(), diags);
    REQUIRE(diags.size() == 3);
    CHECK(diags[0].line == 2);
    CHECK_THAT(diags[0].message, Catch::Matchers::ContainsSubstring("gold label off-scale"));
    CHECK(diags[1].line == 3);
    CHECK_THAT(diags[1].message, Catch::Matchers::ContainsSubstring("duplicate query id 'q1'"));
    CHECK(diags[2].line == 4);  // missing features object
    CHECK(diags[2].str().rfind(path + ":4: ", 0) == 0);

    SECTION("undeclared features are rejected on both paths") {
        CHECK_THROWS_WITH(io::query_to_json(unknown, schema), Catch::Matchers::ContainsSubstring("shoe_size"));
        io::atomic_write_file(path, "{\"query_id\":\"q5\",\"features\":{\"bogus\":1}}\n");
        std::vector<io::Diagnostic> d2;
        io::read_queries(path, schema, scale15(), d2);
        REQUIRE(d2.size() == 1);
        CHECK_THAT(d2[0].message, Catch::Matchers::ContainsSubstring("bogus"));
    }
    SECTION("a malformed line stops the read with its location") {
        io::atomic_write_file(path, good + "this is not json\n");
        std::vector<io::Diagnostic> d3;
        CHECK_THROWS_WITH(io::read_queries(path, schema, scale15(), d3),
                          Catch::Matchers::ContainsSubstring(":2: malformed JSON record"));
    }
    SECTION("an unsupported format version is refused") {
        io::atomic_write_file(path, "{\"record_type\":\"manifest\",\"format_version\":99}\n" + good);
        std::vector<io::Diagnostic> d4;
        CHECK_THROWS_WITH(io::read_queries(path, schema, scale15(), d4),
                          Catch::Matchers::ContainsSubstring("unsupported format_version 99"));
    }
}

TEST_CASE("schema, scale, and sensitive spec round trip") {
    Schema schema = standard_schema();
    io::json sj = io::schema_to_json(schema);
    Schema schema2 = io::schema_from_json(sj, "test");
    CHECK(io::schema_to_json(schema2) == sj);

    LabelScale s = io::scale_from_json(io::scale_to_json(scale15()), "test");
    CHECK(s.min_label == 1);
    CHECK(s.max_label == 5);

    SensitiveSpec spec = io::sensitive_from_json(io::sensitive_to_json(gender_spec()), "test");
    CHECK(spec.attribute == "gender");
    CHECK(spec.groups == std::vector<std::string>{"female", "male"});
}

TEST_CASE("the worker-visible plan file carries no probe vocabulary") {
    PlanConfig cfg;
    TaskPlan plan = sample_plan(cfg);
    std::string visible = io::visible_plan_to_jsonl(plan, standard_schema(), test_manifest());

    for (const char* token : {"pair", "counterfactual", "role", "original", "filler", "query_id", "hidden"}) {
        CAPTURE(token);
        CHECK(visible.find(token) == std::string::npos);
    }
    // the manifest is referenced by digest and seed, never embedded with tool metadata
    CHECK(visible.find("timestamp") == std::string::npos);
    CHECK(visible.find(io::digest("config bytes")) != std::string::npos);

    SECTION("and reads back exactly") {
        TempDir dir;
        std::string path = dir.file("w1.plan");
        io::atomic_write_file(path, visible);
        io::VisiblePlan v = io::read_visible_plan(path, standard_schema());
        CHECK(v.worker_id == "w1");
        REQUIRE(v.items.size() == plan.items.size());
        for (std::size_t i = 0; i < v.items.size(); ++i) CHECK(v.items[i] == plan.items[i]);
    }
    SECTION("a header-less file is rejected") {
        TempDir dir;
        std::string path = dir.file("bare.plan");
        io::atomic_write_file(path, "{\"record_type\":\"item\",\"display_id\":\"d\",\"features\":{}}\n");
        CHECK_THROWS_WITH(io::read_visible_plan(path, standard_schema()),
                          Catch::Matchers::ContainsSubstring("missing plan_header"));
    }
}

TEST_CASE("the hidden map file restores the full plan") {
    PlanConfig cfg;
    TaskPlan plan = sample_plan(cfg);
    io::RunManifest m = test_manifest();
    TempDir dir;
    std::string vpath = dir.file("w1.plan");
    std::string hpath = dir.file("w1.hidden");
    io::atomic_write_file(vpath, io::visible_plan_to_jsonl(plan, standard_schema(), m));
    io::atomic_write_file(hpath, io::hidden_map_to_jsonl(plan, cfg, m));

    io::HiddenPlan h = io::read_hidden_map(hpath);
    CHECK(h.worker_id == "w1");
    CHECK(h.config.total_items == cfg.total_items);
    CHECK(h.config.pairs_per_worker == cfg.pairs_per_worker);
    CHECK(h.config.min_separation == cfg.min_separation);
    CHECK(h.hidden_map == plan.hidden_map);
    REQUIRE(h.manifest.has_value());
    CHECK(h.manifest->config_digest == m.config_digest);
    REQUIRE(h.display_order.size() == plan.items.size());
    for (std::size_t i = 0; i < plan.items.size(); ++i) CHECK(h.display_order[i] == plan.items[i].display_id);

    io::VisiblePlan v = io::read_visible_plan(vpath, standard_schema());
    TaskPlan combined = io::combine_plan(v, h);
    CHECK(combined == plan);

    SECTION("worker mismatch between the two files is an error") {
        io::VisiblePlan other = v;
        other.worker_id = "w2";
        CHECK_THROWS_WITH(io::combine_plan(other, h), Catch::Matchers::ContainsSubstring("disagree on worker id"));
    }
    SECTION("a display item without a hidden entry is an error") {
        io::HiddenPlan thin = h;
        thin.hidden_map.erase(plan.items[0].display_id);
        CHECK_THROWS_WITH(io::combine_plan(v, thin), Catch::Matchers::ContainsSubstring("no hidden entry"));
    }
    SECTION("duplicate display ids in the hidden file are an error") {
        std::string dup = io::read_file(hpath);
        // repeat the last hidden record
        std::size_t pos = dup.rfind("{\"record_type\":\"hidden\"");
        dup += dup.substr(pos);
        io::atomic_write_file(hpath, dup);
        CHECK_THROWS_WITH(io::read_hidden_map(hpath), Catch::Matchers::ContainsSubstring("duplicate display id"));
    }
}

TEST_CASE("probe pairs round trip with their disguise records") {
    Schema schema = standard_schema();
    DisguiseConfig disguise = standard_disguise();
    std::vector<ProbePair> pairs;
    for (int i = 0; i < 3; ++i) {
        Query q = defendant("s" + std::to_string(i), 28 + i, i, i % 2 ? "male" : "female", i % 2 ? "Sam" : "Zoe",
                            "Her mother spoke quickly");
        RandomStream rng(derive_seed(31, q.query_id));
        pairs.push_back(make_probe_pair(q, gender_spec(), disguise, schema, std::nullopt, rng));
    }
    TempDir dir;
    std::string path = dir.file("probes.jsonl");
    io::atomic_write_file(path, io::probes_to_jsonl(pairs, schema, test_manifest()));
    std::vector<ProbePair> back = io::read_probes(path, schema);
    REQUIRE(back.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(back[i] == pairs[i]);
}

TEST_CASE("responses round trip; off-scale labels become diagnostics") {
    TempDir dir;
    std::vector<Response> rs{{"w1", "w1-q0", 3}, {"w1", "w1-q1", 5}, {"w2", "w2-q0", 1}};
    std::string path = dir.file("responses.jsonl");
    io::atomic_write_file(path, io::responses_to_jsonl(rs, test_manifest()));

    std::vector<io::Diagnostic> diags;
    std::vector<Response> back = io::read_responses(path, scale15(), diags);
    CHECK(diags.empty());
    CHECK(back == rs);

    SECTION("bad records are skipped and reported with their line") {
        std::string content = io::responses_to_jsonl(rs, std::nullopt) +
                              "{\"record_type\":\"response\",\"worker_id\":\"w3\",\"display_id\":\"d\",\"label\":9}\n" +
                              "{\"record_type\":\"response\",\"worker_id\":\"w4\",\"display_id\":\"d\"}\n";
        io::atomic_write_file(path, content);
        std::vector<io::Diagnostic> d2;
        std::vector<Response> kept = io::read_responses(path, scale15(), d2);
        CHECK(kept == rs);
        REQUIRE(d2.size() == 2);
        CHECK(d2[0].line == 4);
        CHECK_THAT(d2[0].message, Catch::Matchers::ContainsSubstring("label 9 outside scale [1, 5]"));
        CHECK(d2[1].line == 5);
        CHECK_THAT(d2[1].message, Catch::Matchers::ContainsSubstring("label"));
    }
}

TEST_CASE("bias reports round trip, including unscored ones") {
    BiasReport scored;
    scored.worker_id = "w1";
    scored.pair_count = 6;
    scored.incomplete_pairs = 1;
    scored.raw_bias = 1.25;
    scored.normalized_bias = 0.3125;
    scored.reliable = true;
    BiasReport empty;
    empty.worker_id = "w2";
    empty.status = "no usable probe pairs";

    TempDir dir;
    std::string path = dir.file("reports.jsonl");
    io::atomic_write_file(path, io::bias_reports_to_jsonl({scored, empty}, test_manifest()));
    std::vector<BiasReport> back = io::read_bias_reports(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0] == scored);
    CHECK(back[1] == empty);

    SECTION("the unscored record writes no score fields at all") {
        io::json j = io::bias_report_to_json(empty);
        CHECK_FALSE(j.contains("raw_bias"));
        CHECK_FALSE(j.contains("normalized_bias"));
        CHECK(j.at("status") == "no usable probe pairs");
    }
}

TEST_CASE("gold baseline serialization uses null for undefined rates") {
    GoldBaselineReport r;
    r.worker_id = "w1";
    r.per_group["female"] = {1, 1, 0, 0};  // fpr defined (1.0), tpr defined (1.0)
    r.per_group["male"] = {1, 0, 0, 0};    // no negatives: fpr undefined
    r.tpr_difference = 0.0;

    io::json j = io::gold_baseline_to_json(r);
    CHECK(j.at("per_group").at("female").at("fpr") == 1.0);
    CHECK(j.at("per_group").at("male").at("fpr").is_null());
    CHECK(j.at("fpr_difference").is_null());
    CHECK(j.at("tpr_difference") == 0.0);
}

TEST_CASE("survey answers and self scores round trip") {
    TempDir dir;
    std::map<std::string, std::vector<SurveyAnswer>> answers{
        {"w1", {{"s1", 3.0, 1.0, 5.0, false}, {"s2", 2.0, 1.0, 5.0, true}}},
        {"w2", {{"s1", 1.0, 1.0, 5.0, false}}},
    };
    std::string spath = dir.file("surveys.jsonl");
    io::atomic_write_file(spath, io::survey_answers_to_jsonl(answers, test_manifest()));
    auto back = io::read_survey_answers(spath);
    REQUIRE(back.size() == 2);
    REQUIRE(back.at("w1").size() == 2);
    CHECK(back.at("w1")[1].item_id == "s2");
    CHECK(back.at("w1")[1].reverse_coded);
    CHECK(back.at("w2")[0].value == 1.0);

    std::vector<SelfReportScore> scores{{"w1", 0.25}, {"w2", 0.0}};
    std::string cpath = dir.file("self_scores.jsonl");
    io::atomic_write_file(cpath, io::self_scores_to_jsonl(scores, test_manifest()));
    auto sback = io::read_self_scores(cpath);
    REQUIRE(sback.size() == 2);
    CHECK(sback[0].worker_id == "w1");
    CHECK(sback[0].survey_score == 0.25);
    CHECK(sback[1].survey_score == 0.0);
}

TEST_CASE("aggregated datasets round trip, dropped queries carry a reason") {
    AggregatedDataset ds;
    ds.rows["q1"] = {4, 3, 2.5};
    ds.rows["q2"] = {1, 1, 1.0};
    ds.dropped = {"q3"};

    TempDir dir;
    std::string path = dir.file("dataset.jsonl");
    io::atomic_write_file(path, io::dataset_to_jsonl(ds, test_manifest()));
    AggregatedDataset back = io::read_dataset(path);
    CHECK(back == ds);
    CHECK_THAT(io::read_file(path), Catch::Matchers::ContainsSubstring("all responses have zero weight"));
}

TEST_CASE("fairness summaries serialize gaps and group stats") {
    FairnessSummary s;
    s.group_a = "female";
    s.group_b = "male";
    s.positive_threshold = 3;
    s.parity_gap = 0.25;
    s.groups["female"] = {4, 3, 0.75, 3.5};
    s.groups["male"] = {4, 2, 0.5, 3.0};

    io::json j = io::fairness_to_json(s);
    CHECK(j.at("parity_gap") == 0.25);
    CHECK(j.at("groups").at("female").at("positives") == 3);

    s.parity_gap.reset();
    CHECK(io::fairness_to_json(s).at("parity_gap").is_null());
}

TEST_CASE("tsv resources: lexicon, identity pools, synonyms") {
    SECTION("lexicon parses pairs, skips comments and blanks, tolerates CRLF") {
        TermLexicon lex = io::parse_lexicon_tsv("she\the\r\n# gendered nouns\n\nwoman\tman\n", "lex.tsv");
        CHECK(lex.size() == 4);  // both directions of two pairs
        REQUIRE(lex.counterpart("she") != nullptr);
        CHECK(*lex.counterpart("she") == "he");
        CHECK(*lex.counterpart("man") == "woman");
    }
    SECTION("field-count and mapping errors carry the line number") {
        CHECK_THROWS_WITH(io::parse_lexicon_tsv("she\the\nauntuncle\n", "lex.tsv"),
                          Catch::Matchers::ContainsSubstring("lex.tsv:2: expected 2 tab-separated fields, got 1"));
        CHECK_THROWS_WITH(io::parse_lexicon_tsv("she\the\nher\tshe\n", "lex.tsv"),
                          Catch::Matchers::ContainsSubstring("lex.tsv:2:"));
    }
    SECTION("identity pools group by field, then group") {
        auto pools = io::parse_identity_pools_tsv("female\tfirst_name\tAva\nfemale\tfirst_name\tMia\nmale\tfirst_name\tLeo\n",
                                                  "pools.tsv");
        REQUIRE(pools.count("first_name") == 1);
        CHECK(pools.at("first_name").at("female") == std::vector<std::string>{"Ava", "Mia"});
        CHECK(pools.at("first_name").at("male") == std::vector<std::string>{"Leo"});
        CHECK_THROWS_WITH(io::parse_identity_pools_tsv("female\t\tAva\n", "pools.tsv"),
                          Catch::Matchers::ContainsSubstring("pools.tsv:1: empty field"));
    }
    SECTION("synonym lists accumulate per term") {
        SynonymTable t = io::parse_synonyms_tsv("quickly\trapidly\nquickly\tswiftly\n", "syn.tsv");
        REQUIRE(t.find("quickly") != nullptr);
        CHECK(t.find("quickly")->size() == 2);
        CHECK_THROWS_WITH(io::parse_synonyms_tsv("fast\tfast\n", "syn.tsv"),
                          Catch::Matchers::ContainsSubstring("syn.tsv:1:"));
    }
}

TEST_CASE("csv rows quote exactly the fields that need it") {
    CHECK(io::csv_escape("plain") == "plain");
    CHECK(io::csv_escape("has,comma") == "\"has,comma\"");
    CHECK(io::csv_escape("quote\"inside") == "\"quote\"\"inside\"");
    CHECK(io::csv_escape("line\nbreak") == "\"line\nbreak\"");
    CHECK(io::csv_row({"a", "b,c", "d"}) == "a,\"b,c\",d\n");

    CHECK(io::format_double(0.5) == "0.5");
    CHECK(io::format_double(2.0) == "2");
    CHECK(io::format_double(0.3333333333333333) == "0.3333333333");
}

TEST_CASE("experiment outputs carry every worker and no timestamp") {
    // minimal hand-rolled report: two workers, one kind each
    ExperimentReport r;
    r.seed = 5;
    r.total_responses = 12;
    WorkerResult w1;
    w1.worker_id = "w0";
    w1.kind = WorkerKind::unbiased;
    w1.report.worker_id = "w0";
    w1.report.pair_count = 2;
    w1.report.raw_bias = 0.0;
    w1.report.normalized_bias = 0.0;
    w1.report.reliable = true;
    WorkerResult w2;
    w2.worker_id = "w1";
    w2.kind = WorkerKind::shift_biased;
    w2.bias_shift = 2.0;
    w2.report.worker_id = "w1";
    w2.report.status = "no usable probe pairs";
    r.workers = {w1, w2};
    r.by_kind["unbiased"] = {1, 0.0, 0.0, 1};
    r.by_kind["shift-biased"] = {1, 0.0, 0.0, 0};
    r.separation_auc = std::nullopt;

    io::json j = io::experiment_report_to_json(r);
    CHECK(j.at("record_type") == "experiment_report");
    CHECK(j.at("separation_auc").is_null());
    CHECK_FALSE(j.contains("timestamp"));
    REQUIRE(j.at("workers").size() == 2);
    CHECK(j.at("workers")[1].at("status") == "no usable probe pairs");
    CHECK_FALSE(j.at("workers")[1].contains("raw_bias"));

    std::string csv = io::experiment_workers_csv(r);
    auto header_end = csv.find('\n');
    CHECK(csv.substr(0, header_end) ==
          "worker_id,kind,bias_shift,noise_sd,survey,pair_count,incomplete_pairs,raw_bias,normalized_bias,"
          "reliable,status,self_report_score");
    CHECK_THAT(csv, Catch::Matchers::ContainsSubstring("w1,shift-biased,2,0,honest,0,0,,,false,"));
}
