#include <filesystem>
#include <fstream>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "pathvlm/eval.hpp"
#include "pathvlm/rng.hpp"

using namespace pathvlm;
namespace fs = std::filesystem;

TEST_CASE("normalize: stated rule, empty text, idempotence") {
    TokenMultiset t = normalize("Invasive Carcinoma.");
    CHECK(t == TokenMultiset{{"invasive", 1}, {"carcinoma", 1}});
    CHECK(normalize("").empty());
    CHECK(normalize("...!!!").empty());
    CHECK(normalize("A a  a") == TokenMultiset{{"a", 3}});

    // normalize(join(normalize(x))) == normalize(x)
    for (const std::string x : {"H&E-stained, slide; shows: invasive carcinoma!", "Weird   SPACING\tcase"}) {
        const TokenMultiset once = normalize(x);
        std::string joined;
        for (const auto& [tok, n] : once)
            for (int i = 0; i < n; ++i) joined += tok + " ";
        CHECK(normalize(joined) == once);
    }
}

TEST_CASE("open_recall: spec examples") {
    CHECK(open_recall("exact match text", "exact match text") == 1.0);
    CHECK(open_recall("shows invasive carcinoma here", "invasive ductal carcinoma") ==
          doctest::Approx(2.0 / 3.0));
    CHECK(open_recall("alpha beta", "gamma delta") == 0.0);
    CHECK_THROWS_AS(open_recall("anything", "..."), std::invalid_argument);
}

TEST_CASE("open_recall: 30-case frozen fixture file") {
    std::ifstream in(fs::path(PATHVLM_FIXTURE_DIR) / "open_recall_cases.jsonl");
    REQUIRE(in);
    std::string line;
    int cases = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        const double got = open_recall(j.at("pred").get<std::string>(), j.at("gt").get<std::string>());
        CHECK(got == doctest::Approx(j.at("expected").get<double>()).epsilon(1e-12));
        ++cases;
    }
    CHECK(cases == 30);
}

TEST_CASE("open_recall: appending tokens to pred never decreases recall") {
    Rng rng(5);
    const std::vector<std::string> words = {"tumor", "cell", "tissue", "normal", "invasive", "benign"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string gt, pred;
        for (int i = 0; i < 4; ++i) gt += words[rng.uniform_int(words.size())] + " ";
        for (int i = 0; i < 3; ++i) pred += words[rng.uniform_int(words.size())] + " ";
        const double before = open_recall(pred, gt);
        const double after = open_recall(pred + " " + words[rng.uniform_int(words.size())], gt);
        CHECK(after >= before);
    }
}

static const std::map<std::string, std::string> kAB = {{"A", "Normal tissue"}, {"B", "Tumor tissue"}};

TEST_CASE("extract_choice: rule cascade") {
    CHECK(extract_choice("A: Normal tissue", kAB) == "A");
    CHECK(extract_choice("b", kAB) == "B");
    CHECK(extract_choice("B.", kAB) == "B");
    CHECK(extract_choice(" a) definitely", kAB) == "A");
    CHECK(extract_choice("The answer is B", kAB) == "B");
    CHECK(extract_choice("the ANSWER IS: a", kAB) == "A");
    CHECK(extract_choice("I think it shows tumor tissue", kAB) == "B");
    CHECK(!extract_choice("unclear image", kAB));
    CHECK(!extract_choice("normal tissue or tumor tissue", kAB));  // ambiguous rule 3
    // first matching rule wins: leading letter beats the later pattern
    CHECK(extract_choice("A. But the answer is B", kAB) == "A");
}

TEST_CASE("closed_accuracy: letter match, containment fallback, validation") {
    CHECK(closed_accuracy("B", "B", kAB) == 1);
    CHECK(closed_accuracy("b: tumor tissue", "B", kAB) == 1);
    CHECK(closed_accuracy("A", "B", kAB) == 0);
    CHECK(closed_accuracy("no letter at all", "B", kAB) == 0);
    CHECK_THROWS_AS(closed_accuracy("B", "Z", kAB), std::invalid_argument);

    // letterless (yes/no) datasets
    CHECK(closed_accuracy("the tissue appears normal", "no", {}) == 0);
    CHECK(closed_accuracy("No, it is benign", "no", {}) == 1);
    CHECK(closed_accuracy("YES.", "yes", {}) == 1);

    // invariance to case and whitespace of the prediction
    CHECK(closed_accuracy("  b  ", "B", kAB) == closed_accuracy("B", "B", kAB));
}

TEST_CASE("zero_shot_metrics: trivial cases") {
    const std::vector<std::string> classes = {"A", "B"};
    std::vector<std::pair<std::optional<std::string>, std::string>> perfect = {
        {std::string("A"), "A"}, {std::string("B"), "B"}};
    ZeroShotMetrics m = zero_shot_metrics(perfect, classes);
    CHECK(m.accuracy == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.precision == 1.0);

    std::vector<std::pair<std::optional<std::string>, std::string>> none = {
        {std::nullopt, "A"}, {std::nullopt, "B"}};
    m = zero_shot_metrics(none, classes);
    CHECK(m.accuracy == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.precision == 0.0);

    CHECK_THROWS_AS(zero_shot_metrics({}, classes), std::invalid_argument);
    CHECK_THROWS_AS(zero_shot_metrics({{std::nullopt, "Z"}}, classes), std::invalid_argument);
}

// independent confusion-matrix oracle
static ZeroShotMetrics confusion_oracle(
    const std::vector<std::pair<std::optional<std::string>, std::string>>& items,
    const std::vector<std::string>& classes) {
    const size_t k = classes.size();
    auto index_of = [&](const std::string& c) {
        for (size_t i = 0; i < k; ++i)
            if (classes[i] == c) return static_cast<long>(i);
        return -1L;
    };
    std::vector<std::vector<long>> cm(k + 1, std::vector<long>(k, 0));  // row: pred (k = none)
    for (const auto& [pred, gold] : items) {
        const long g = index_of(gold);
        long p = k;
        if (pred) {
            const long pi = index_of(*pred);
            if (pi >= 0) p = pi;
        }
        cm[static_cast<size_t>(p)][static_cast<size_t>(g)] += 1;
    }
    ZeroShotMetrics m;
    long diag = 0;
    for (size_t i = 0; i < k; ++i) diag += cm[i][i];
    m.accuracy = static_cast<double>(diag) / items.size();
    double rs = 0, ps = 0;
    for (size_t c = 0; c < k; ++c) {
        long gold_total = 0, pred_total = 0;
        for (size_t p = 0; p <= k; ++p) gold_total += cm[p][c];
        for (size_t g = 0; g < k; ++g) pred_total += cm[c][g];
        const double rec = gold_total ? static_cast<double>(cm[c][c]) / gold_total : 0.0;
        const double pre = pred_total ? static_cast<double>(cm[c][c]) / pred_total : 0.0;
        m.per_class_recall[classes[c]] = rec;
        m.per_class_precision[classes[c]] = pre;
        rs += rec;
        ps += pre;
    }
    m.recall = rs / k;
    m.precision = ps / k;
    return m;
}

TEST_CASE("zero_shot_metrics equals the confusion-matrix oracle on seeded fixtures") {
    const std::vector<std::string> classes = {"A", "B", "C", "D"};
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<std::pair<std::optional<std::string>, std::string>> items;
        const int n = 10 + static_cast<int>(rng.uniform_int(40));
        for (int i = 0; i < n; ++i) {
            const std::string gold = classes[rng.uniform_int(4)];
            std::optional<std::string> pred;
            const uint64_t roll = rng.uniform_int(5);
            if (roll < 4) pred = classes[rng.uniform_int(4)];
            items.emplace_back(pred, gold);
        }
        const ZeroShotMetrics got = zero_shot_metrics(items, classes);
        const ZeroShotMetrics want = confusion_oracle(items, classes);
        REQUIRE(got.accuracy == want.accuracy);
        REQUIRE(got.recall == want.recall);
        REQUIRE(got.precision == want.precision);
        REQUIRE(got.per_class_recall == want.per_class_recall);
        REQUIRE(got.per_class_precision == want.per_class_precision);
    }
}

TEST_CASE("judge_alignment_score: parse, clamp, error") {
    MockJudge seven({}, "7");
    CHECK(judge_alignment_score("resp", "ref", seven) == 7);
    MockJudge overflow({}, "Score: 12/10");
    CHECK(judge_alignment_score("resp", "ref", overflow) == 10);
    MockJudge words({}, "excellent");
    CHECK_THROWS_AS(judge_alignment_score("resp", "ref", words), JudgeError);
}

TEST_CASE("score_vqa: per-item rows re-aggregate to the report aggregates") {
    std::vector<VQARecord> records;
    std::map<std::string, std::string> gens;
    for (int i = 0; i < 6; ++i) {
        VQARecord r;
        r.id = "c" + std::to_string(i);
        r.question = "q";
        r.kind = "closed";
        r.choices = kAB;
        r.answer = i % 2 ? "A" : "B";
        records.push_back(r);
        gens[r.id] = i < 4 ? (i % 2 ? "A" : "B") : "unclear";
    }
    for (int i = 0; i < 4; ++i) {
        VQARecord r;
        r.id = "o" + std::to_string(i);
        r.question = "q";
        r.kind = "open";
        r.answer = "invasive ductal carcinoma";
        records.push_back(r);
        gens[r.id] = i < 2 ? "invasive ductal carcinoma" : "invasive lesion";
    }
    const EvalReport rep = score_vqa(records, gens);
    CHECK(rep.closed_count == 6);
    CHECK(rep.open_count == 4);
    double closed = 0, open = 0, pooled = 0;
    for (const auto& item : rep.items) {
        if (item.kind == "closed") closed += item.closed_correct;
        if (item.kind == "open") open += item.recall;
        pooled += item.kind == "closed" ? item.closed_correct : item.recall;
    }
    CHECK(rep.closed_acc == closed / 6);
    CHECK(rep.open_rec == open / 4);
    CHECK(rep.overall_mean_of_columns == (rep.closed_acc + rep.open_rec) / 2);
    CHECK(rep.overall_item_pooled == pooled / 10);
    CHECK(rep.to_json().at("closed_acc") == rep.closed_acc);
    CHECK(rep.to_table().find("Closed") != std::string::npos);
}

TEST_CASE("generations jsonl round trip") {
    const fs::path p = fs::temp_directory_path() / "pathvlm_gens.jsonl";
    write_generations(p, {{"a", "first answer"}, {"b", "second"}});
    const auto gens = read_generations(p);
    CHECK(gens.at("a") == "first answer");
    CHECK(gens.at("b") == "second");
    fs::remove(p);
}
