#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pathvlm/judge.hpp"

namespace pathvlm {

// One image-caption pair with provenance and an append-only filter trail.
struct PairRecord {
    std::string id;
    std::string image_ref;
    std::string caption;
    std::string source = "other";  // quilt | pmc_oa | pubmedvision | other
    std::string split = "train";
    std::vector<std::pair<std::string, std::string>> filter_trail;  // (stage, verdict)

    void validate() const;  // id + caption present, source known
};

// One question-answer item, open or closed.
struct VQARecord {
    std::string id;
    std::string image_ref;
    std::string question;
    std::string answer;
    std::string kind = "open";                 // open | closed
    std::map<std::string, std::string> choices;  // letter -> text, closed only

    void validate() const;
};

// Per-source and per-stage accounting; conservation is checkable at every
// stage boundary.
struct ManifestStats {
    struct SourceCount {
        int64_t input = 0;
        int64_t output = 0;
    };
    std::map<std::string, SourceCount> per_source;
    std::map<std::string, int64_t> per_stage_drops;

    int64_t total_input() const;
    int64_t total_output() const;
    void check() const;  // throws if output != input - drops or totals disagree
    nlohmann::json to_json() const;
};

struct FilterOutcome {
    std::vector<PairRecord> kept;
    std::vector<PairRecord> dropped;
    std::vector<PairRecord> quarantined;  // judge-error after retries
};

// Optional hook for remote judges that need real image bytes.
using ImagePayloadLoader = std::function<std::optional<std::string>(const std::string& image_ref)>;

// Default judge prompts (configurable at the call sites).
extern const char* const kImageJudgePrompt;  // "Is this a non-pathological image? ..."
extern const char* const kTextJudgePrompt;   // "Does this description involve non-human organisms? ..."

// Drop a record iff the judge answers yes to the image prompt. Outputs are
// sorted by id; filter trails are appended on every record.
FilterOutcome filter_nonpath_images(std::vector<PairRecord> records, JudgeClient& judge,
                                    const std::string& prompt = kImageJudgePrompt,
                                    const ImagePayloadLoader& loader = nullptr);

// Drop a record iff the judge answers yes to the caption prompt.
FilterOutcome filter_nonhuman_text(std::vector<PairRecord> records, JudgeClient& judge,
                                   const std::string& prompt = kTextJudgePrompt);

// Keep records whose caption has >= threshold whitespace-separated words.
FilterOutcome filter_min_words(std::vector<PairRecord> records, int threshold = 20);

int count_words(const std::string& text);

// Concatenates manifests, prefixing each id with "<source>:"; duplicate
// post-prefix ids are a hard error.
std::pair<std::vector<PairRecord>, ManifestStats> merge_sources(
    const std::vector<std::pair<std::string, std::vector<PairRecord>>>& manifests);

// Pure accounting over per-source counts (the merge arithmetic without the
// records).
int64_t merge_counts(const std::map<std::string, int64_t>& per_source_counts, ManifestStats* stats = nullptr);

// One open QA per pair: question drawn uniformly (seeded) from templates,
// answer = caption.
std::vector<VQARecord> build_alignment_qa(const std::vector<PairRecord>& records,
                                          const std::vector<std::string>& templates, uint64_t seed);

std::vector<std::string> load_question_templates(const std::filesystem::path& file);

// The fixed 10-template question set (mirrored in assets/alignment_questions.txt).
const std::vector<std::string>& default_question_templates();

// Concatenation with source tags and re-checked invariants.
std::vector<VQARecord> assemble_vqa_train(const std::vector<VQARecord>& pathvqa_rows,
                                          const std::vector<VQARecord>& pmc_rows);

// Classification dataset -> closed-set VQA.
struct ClassSpec {
    std::string letter;
    std::string text;
};
struct LabeledImage {
    std::string id;
    std::string image_ref;
    std::string label;  // letter of the gold class
};
struct DatasetSpec {
    std::string name;  // BACH | OSCC | ColonPath | custom
    std::vector<ClassSpec> classes;
    std::vector<LabeledImage> images;
    std::optional<std::string> custom_prompt;
};

// The evaluation question for a built-in dataset, byte-exact.
const std::string& zero_shot_prompt(const std::string& dataset_name);

// Canonical class lists for the built-in datasets.
std::vector<ClassSpec> builtin_classes(const std::string& dataset_name);

std::vector<VQARecord> classification_to_vqa(const DatasetSpec& spec);

// ---- JSONL manifests (snake_case keys, UTF-8, one record per line) ----
std::vector<PairRecord> read_pair_manifest(const std::filesystem::path& path);
void write_pair_manifest(const std::filesystem::path& path, const std::vector<PairRecord>& records);
std::vector<VQARecord> read_vqa_manifest(const std::filesystem::path& path);
void write_vqa_manifest(const std::filesystem::path& path, const std::vector<VQARecord>& records);

nlohmann::json pair_to_json(const PairRecord& r);
PairRecord pair_from_json(const nlohmann::json& j);
nlohmann::json vqa_to_json(const VQARecord& r);
VQARecord vqa_from_json(const nlohmann::json& j);

DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

}  // namespace pathvlm
