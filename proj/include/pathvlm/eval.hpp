#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pathvlm/data_pipeline.hpp"
#include "pathvlm/judge.hpp"

namespace pathvlm {

// lowercased, punctuation stripped, whitespace split; a multiset
using TokenMultiset = std::map<std::string, int>;

TokenMultiset normalize(const std::string& text);

// |gt ∩ pred| / |gt| with multiset intersection capped at gt multiplicities.
double open_recall(const std::string& pred, const std::string& gt);

// Rule cascade: leading standalone letter (optionally ':'/'.'/')'), then an
// "answer is X" pattern, then a unique choice text appearing verbatim.
std::optional<std::string> extract_choice(const std::string& generated,
                                          const std::map<std::string, std::string>& choices);

// Letter match against the gold letter; letterless golds fall back to
// normalized token containment.
int closed_accuracy(const std::string& pred, const std::string& gt_answer,
                    const std::map<std::string, std::string>& choices);

struct ZeroShotMetrics {
    double accuracy = 0.0;   // micro; missing predictions count as wrong
    double recall = 0.0;     // unweighted macro over classes
    double precision = 0.0;  // unweighted macro; no-prediction classes score 0
    std::map<std::string, double> per_class_recall;
    std::map<std::string, double> per_class_precision;
};

ZeroShotMetrics zero_shot_metrics(
    const std::vector<std::pair<std::optional<std::string>, std::string>>& items,
    const std::vector<std::string>& classes);

extern const char* const kAlignmentJudgePrompt;

// Judge-scored semantic similarity, integer in [1,10].
int judge_alignment_score(const std::string& response, const std::string& reference_caption,
                          JudgeClient& judge, const std::string& prompt_template = kAlignmentJudgePrompt);

// ---- report over VQA manifests + generations ----
struct ItemVerdict {
    std::string id;
    std::string kind;
    std::string generation;
    std::optional<std::string> pred_letter;
    int closed_correct = -1;       // letter-match reading; -1 = n/a
    int containment_correct = -1;  // token-containment reading, logged alongside
    double recall = -1.0;          // open items; -1 = n/a
};

struct EvalReport {
    std::vector<ItemVerdict> items;
    long closed_count = 0;
    long open_count = 0;
    double closed_acc = 0.0;
    double open_rec = 0.0;
    // Both candidate "Overall" aggregations, labeled
    double overall_mean_of_columns = 0.0;  // (closed_acc + open_rec) / 2
    double overall_item_pooled = 0.0;      // per-item scores pooled

    nlohmann::json to_json() const;
    std::string to_table() const;  // human-readable, Table I/II style columns
};

EvalReport score_vqa(const std::vector<VQARecord>& records,
                     const std::map<std::string, std::string>& generations);

struct ZeroShotReport {
    ZeroShotMetrics metrics;
    std::vector<ItemVerdict> items;
    std::vector<std::string> classes;
    std::string dataset;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

ZeroShotReport score_zero_shot(const std::string& dataset, const std::vector<VQARecord>& records,
                               const std::map<std::string, std::string>& generations,
                               const std::vector<std::string>& classes);

// Replaces invalid UTF-8 sequences with U+FFFD so byte-level generations can
// live in JSON artifacts; valid input passes through unchanged.
std::string sanitize_utf8(const std::string& s);

// generations JSONL: {"id": ..., "generation": ...}; text is sanitized on write
std::map<std::string, std::string> read_generations(const std::filesystem::path& path);
void write_generations(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, std::string>>& generations);

}  // namespace pathvlm
