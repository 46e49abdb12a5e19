#include "pathvlm/data_pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pathvlm/rng.hpp"

namespace pathvlm {

static const std::set<std::string> kSources = {"quilt", "pmc_oa", "pubmedvision", "other"};

void PairRecord::validate() const {
    if (id.empty()) throw std::invalid_argument("pair record: id missing");
    if (caption.empty()) throw std::invalid_argument("pair record " + id + ": caption missing");
    if (!kSources.count(source)) throw std::invalid_argument("pair record " + id + ": unknown source " + source);
}

void VQARecord::validate() const {
    if (id.empty()) throw std::invalid_argument("vqa record: id missing");
    if (question.empty()) throw std::invalid_argument("vqa record " + id + ": question missing");
    if (kind == "closed") {
        if (choices.empty()) throw std::invalid_argument("vqa record " + id + ": closed record without choices");
        if (!answer.empty() && !choices.count(answer))
            throw std::invalid_argument("vqa record " + id + ": answer letter not in choices");
    } else if (kind == "open") {
        if (!choices.empty()) throw std::invalid_argument("vqa record " + id + ": open record with choices");
    } else {
        throw std::invalid_argument("vqa record " + id + ": kind must be open or closed");
    }
}

int64_t ManifestStats::total_input() const {
    int64_t t = 0;
    for (const auto& [s, c] : per_source) t += c.input;
    return t;
}

int64_t ManifestStats::total_output() const {
    int64_t t = 0;
    for (const auto& [s, c] : per_source) t += c.output;
    return t;
}

void ManifestStats::check() const {
    int64_t drops = 0;
    for (const auto& [stage, d] : per_stage_drops) drops += d;
    if (total_output() != total_input() - drops)
        throw std::runtime_error("manifest stats: output != input - drops");
}

nlohmann::json ManifestStats::to_json() const {
    nlohmann::json j;
    for (const auto& [s, c] : per_source) j["per_source"][s] = {{"input", c.input}, {"output", c.output}};
    for (const auto& [stage, d] : per_stage_drops) j["per_stage_drops"][stage] = d;
    j["total_input"] = total_input();
    j["total_output"] = total_output();
    return j;
}

const char* const kImageJudgePrompt = "Is this a non-pathological image? Answer yes or no.";
const char* const kTextJudgePrompt = "Does this description involve non-human organisms? Answer yes or no.";

static void sort_by_id(std::vector<PairRecord>& v) {
    std::sort(v.begin(), v.end(), [](const PairRecord& a, const PairRecord& b) { return a.id < b.id; });
}

// shared judge-filter loop: drop iff verdict == yes
static FilterOutcome run_judge_filter(std::vector<PairRecord> records, JudgeClient& judge,
                                      const std::string& prompt, const std::string& stage,
                                      const std::function<JudgePayload(const PairRecord&)>& payload_of) {
    FilterOutcome out;
    for (auto& r : records) {
        r.validate();
        try {
            const Verdict v = judge_verdict(judge, prompt, payload_of(r));
            if (v == Verdict::yes) {
                r.filter_trail.emplace_back(stage, "dropped");
                out.dropped.push_back(std::move(r));
            } else {
                r.filter_trail.emplace_back(stage, "kept");
                out.kept.push_back(std::move(r));
            }
        } catch (const JudgeError&) {
            r.filter_trail.emplace_back(stage, "quarantined");
            out.quarantined.push_back(std::move(r));
        }
    }
    sort_by_id(out.kept);
    sort_by_id(out.dropped);
    sort_by_id(out.quarantined);
    return out;
}

FilterOutcome filter_nonpath_images(std::vector<PairRecord> records, JudgeClient& judge,
                                    const std::string& prompt, const ImagePayloadLoader& loader) {
    return run_judge_filter(std::move(records), judge, prompt, "image_judge",
                            [&loader](const PairRecord& r) {
                                JudgePayload p;
                                p.text = r.id + " " + r.image_ref;
                                if (loader) p.image_b64 = loader(r.image_ref);
                                return p;
                            });
}

FilterOutcome filter_nonhuman_text(std::vector<PairRecord> records, JudgeClient& judge,
                                   const std::string& prompt) {
    return run_judge_filter(std::move(records), judge, prompt, "text_judge",
                            [](const PairRecord& r) { return JudgePayload{r.caption, std::nullopt}; });
}

int count_words(const std::string& text) {
    std::istringstream in(text);
    std::string w;
    int n = 0;
    while (in >> w) ++n;
    return n;
}

FilterOutcome filter_min_words(std::vector<PairRecord> records, int threshold) {
    if (threshold < 1) throw std::invalid_argument("filter_min_words: threshold must be >= 1");
    FilterOutcome out;
    for (auto& r : records) {
        r.validate();
        if (count_words(r.caption) >= threshold) {
            r.filter_trail.emplace_back("min_words", "kept");
            out.kept.push_back(std::move(r));
        } else {
            r.filter_trail.emplace_back("min_words", "dropped");
            out.dropped.push_back(std::move(r));
        }
    }
    sort_by_id(out.kept);
    sort_by_id(out.dropped);
    return out;
}

std::pair<std::vector<PairRecord>, ManifestStats> merge_sources(
    const std::vector<std::pair<std::string, std::vector<PairRecord>>>& manifests) {
    std::vector<PairRecord> merged;
    ManifestStats stats;
    std::set<std::string> seen;
    for (const auto& [source, records] : manifests) {
        auto& count = stats.per_source[source];
        for (PairRecord r : records) {
            r.validate();
            r.id = source + ":" + r.id;
            if (!seen.insert(r.id).second)
                throw std::runtime_error("merge_sources: duplicate id after prefixing: " + r.id);
            ++count.input;
            ++count.output;
            merged.push_back(std::move(r));
        }
    }
    sort_by_id(merged);
    stats.check();
    return {merged, stats};
}

int64_t merge_counts(const std::map<std::string, int64_t>& per_source_counts, ManifestStats* stats) {
    int64_t total = 0;
    ManifestStats local;
    for (const auto& [source, n] : per_source_counts) {
        if (n < 0) throw std::invalid_argument("merge_counts: negative count for " + source);
        local.per_source[source] = {n, n};
        total += n;
    }
    local.check();
    if (stats) *stats = local;
    return total;
}

std::vector<VQARecord> build_alignment_qa(const std::vector<PairRecord>& records,
                                          const std::vector<std::string>& templates, uint64_t seed) {
    if (templates.empty()) throw ConfigError("build_alignment_qa: empty template set");
    Rng rng(derive_seed(seed, "alignment_qa"));
    std::vector<VQARecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        r.validate();
        VQARecord q;
        q.id = r.id + ":qa";
        q.image_ref = r.image_ref;
        q.question = templates[rng.uniform_int(templates.size())];
        q.answer = r.caption;
        q.kind = "open";
        out.push_back(std::move(q));
    }
    return out;
}

std::vector<std::string> load_question_templates(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("templates_file: cannot open " + file.string());
    std::vector<std::string> templates;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) templates.push_back(line);
    }
    if (templates.empty()) throw ConfigError("templates_file: no templates in " + file.string());
    return templates;
}

const std::vector<std::string>& default_question_templates() {
    static const std::vector<std::string> templates = {
        "Describe the content of this pathology image.",
        "What does this pathology image show?",
        "Provide a detailed description of the tissue in this image.",
        "Summarize the histological findings visible in this image.",
        "What can be observed in this pathology slide?",
        "Give a caption for this pathology image.",
        "Explain what this microscopy image depicts.",
        "What tissue and findings are shown in this image?",
        "Write a description of the visible histology.",
        "Characterize the features present in this pathology image.",
    };
    return templates;
}

std::vector<VQARecord> assemble_vqa_train(const std::vector<VQARecord>& pathvqa_rows,
                                          const std::vector<VQARecord>& pmc_rows) {
    std::vector<VQARecord> out;
    out.reserve(pathvqa_rows.size() + pmc_rows.size());
    auto take = [&out](const std::vector<VQARecord>& rows, const std::string& tag) {
        for (VQARecord r : rows) {
            try {
                r.validate();
            } catch (const std::exception& e) {
                throw std::invalid_argument("assemble_vqa_train: bad row " + r.id + ": " + e.what());
            }
            r.id = tag + ":" + r.id;
            out.push_back(std::move(r));
        }
    };
    take(pathvqa_rows, "pathvqa");
    take(pmc_rows, "pmc_vqa");
    return out;
}

const std::string& zero_shot_prompt(const std::string& dataset_name) {
    static const std::string bach =
        "What choice best describes this breast tissue? Just give your choice: "
        "A:Normal tissue  B: Benign tumors C: In situ cancer D: Invasive cancer";
    static const std::string oscc =
        "What choice best describes this oral epithelium tissue? Just give your choice: "
        "A:Normal oral epithelium  B:Oral squamous cell carcinoma";
    static const std::string colonpath =
        "What choice best describes this colon tissue? Just give your choice: "
        "A:Normal tissue B:Tumor tissue";
    if (dataset_name == "BACH") return bach;
    if (dataset_name == "OSCC") return oscc;
    if (dataset_name == "ColonPath") return colonpath;
    throw ConfigError("zero_shot_prompt: unknown dataset " + dataset_name);
}

std::vector<ClassSpec> builtin_classes(const std::string& dataset_name) {
    if (dataset_name == "BACH")
        return {{"A", "Normal tissue"}, {"B", "Benign tumors"}, {"C", "In situ cancer"}, {"D", "Invasive cancer"}};
    if (dataset_name == "OSCC")
        return {{"A", "Normal oral epithelium"}, {"B", "Oral squamous cell carcinoma"}};
    if (dataset_name == "ColonPath") return {{"A", "Normal tissue"}, {"B", "Tumor tissue"}};
    throw ConfigError("builtin_classes: unknown dataset " + dataset_name);
}

std::vector<VQARecord> classification_to_vqa(const DatasetSpec& spec) {
    const bool builtin =
        spec.name == "BACH" || spec.name == "OSCC" || spec.name == "ColonPath";
    if (!builtin && !spec.custom_prompt)
        throw ConfigError("dataset_spec: custom dataset " + spec.name + " needs a custom_prompt");
    if (spec.classes.empty()) throw ConfigError("dataset_spec.classes: empty");
    const std::string& question = builtin ? zero_shot_prompt(spec.name) : *spec.custom_prompt;
    std::map<std::string, std::string> choices;
    for (const auto& c : spec.classes) {
        if (!choices.emplace(c.letter, c.text).second)
            throw ConfigError("dataset_spec.classes: duplicate letter " + c.letter);
    }
    std::vector<VQARecord> out;
    out.reserve(spec.images.size());
    for (const auto& img : spec.images) {
        if (!choices.count(img.label))
            throw std::invalid_argument("classification_to_vqa: label " + img.label +
                                        " of image " + img.id + " outside declared classes");
        VQARecord r;
        r.id = spec.name + ":" + img.id;
        r.image_ref = img.image_ref;
        r.question = question;
        r.answer = img.label;
        r.kind = "closed";
        r.choices = choices;
        out.push_back(std::move(r));
    }
    return out;
}

// ---- JSONL ----

nlohmann::json pair_to_json(const PairRecord& r) {
    nlohmann::json trail = nlohmann::json::array();
    for (const auto& [stage, verdict] : r.filter_trail)
        trail.push_back({{"stage", stage}, {"verdict", verdict}});
    return {{"id", r.id},         {"image_ref", r.image_ref}, {"caption", r.caption},
            {"source", r.source}, {"split", r.split},         {"filter_trail", trail}};
}

PairRecord pair_from_json(const nlohmann::json& j) {
    PairRecord r;
    r.id = j.at("id").get<std::string>();
    r.image_ref = j.at("image_ref").get<std::string>();
    r.caption = j.at("caption").get<std::string>();
    r.source = j.value("source", "other");
    r.split = j.value("split", "train");
    if (j.contains("filter_trail"))
        for (const auto& t : j.at("filter_trail"))
            r.filter_trail.emplace_back(t.at("stage").get<std::string>(), t.at("verdict").get<std::string>());
    r.validate();
    return r;
}

nlohmann::json vqa_to_json(const VQARecord& r) {
    nlohmann::json j = {{"id", r.id},       {"image_ref", r.image_ref}, {"question", r.question},
                        {"answer", r.answer}, {"kind", r.kind}};
    if (!r.choices.empty()) {
        nlohmann::json c;
        for (const auto& [letter, text] : r.choices) c[letter] = text;
        j["choices"] = c;
    }
    return j;
}

VQARecord vqa_from_json(const nlohmann::json& j) {
    VQARecord r;
    r.id = j.at("id").get<std::string>();
    r.image_ref = j.value("image_ref", "");
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.kind = j.value("kind", "open");
    if (j.contains("choices"))
        for (auto it = j.at("choices").begin(); it != j.at("choices").end(); ++it)
            r.choices[it.key()] = it.value().get<std::string>();
    r.validate();
    return r;
}

template <typename Record, typename FromJson>
static std::vector<Record> read_jsonl(const std::filesystem::path& path, FromJson from) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    std::vector<Record> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(from(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<PairRecord> read_pair_manifest(const std::filesystem::path& path) {
    return read_jsonl<PairRecord>(path, pair_from_json);
}

void write_pair_manifest(const std::filesystem::path& path, const std::vector<PairRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    for (const auto& r : records) out << pair_to_json(r).dump() << "\n";
}

std::vector<VQARecord> read_vqa_manifest(const std::filesystem::path& path) {
    return read_jsonl<VQARecord>(path, vqa_from_json);
}

void write_vqa_manifest(const std::filesystem::path& path, const std::vector<VQARecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    for (const auto& r : records) out << vqa_to_json(r).dump() << "\n";
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
    DatasetSpec spec;
    spec.name = j.at("name").get<std::string>();
    for (const auto& c : j.at("classes"))
        spec.classes.push_back({c.at("letter").get<std::string>(), c.at("text").get<std::string>()});
    for (const auto& img : j.at("images"))
        spec.images.push_back({img.at("id").get<std::string>(), img.at("image_ref").get<std::string>(),
                               img.at("label").get<std::string>()});
    if (j.contains("custom_prompt")) spec.custom_prompt = j.at("custom_prompt").get<std::string>();
    return spec;
}

}  // namespace pathvlm
