#include "pathvlm/eval.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pathvlm {

TokenMultiset normalize(const std::string& text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (unsigned char c : text) {
        if (std::ispunct(c)) continue;
        cleaned.push_back(static_cast<char>(std::tolower(c)));
    }
    TokenMultiset out;
    std::istringstream in(cleaned);
    std::string tok;
    while (in >> tok) ++out[tok];
    return out;
}

double open_recall(const std::string& pred, const std::string& gt) {
    const TokenMultiset gt_tokens = normalize(gt);
    if (gt_tokens.empty()) throw std::invalid_argument("open_recall: ground truth normalizes to nothing");
    const TokenMultiset pred_tokens = normalize(pred);
    long total = 0, hit = 0;
    for (const auto& [tok, n] : gt_tokens) {
        total += n;
        auto it = pred_tokens.find(tok);
        if (it != pred_tokens.end()) hit += std::min(n, it->second);
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

static std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// standalone = preceded/followed by non-alphanumeric (or string edge)
static bool standalone_at(const std::string& s, size_t pos, size_t len) {
    if (pos > 0 && std::isalnum(static_cast<unsigned char>(s[pos - 1]))) return false;
    const size_t end = pos + len;
    if (end < s.size() && std::isalnum(static_cast<unsigned char>(s[end]))) return false;
    return true;
}

std::optional<std::string> extract_choice(const std::string& generated,
                                          const std::map<std::string, std::string>& choices) {
    const std::string text = lower(generated);

    // rule 1: leading standalone letter, optionally followed by ':' '.' ')'
    size_t i = 0;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i < text.size()) {
        for (const auto& [letter, choice_text] : choices) {
            const std::string l = lower(letter);
            if (text.compare(i, l.size(), l) != 0) continue;
            size_t after = i + l.size();
            if (after < text.size() && (text[after] == ':' || text[after] == '.' || text[after] == ')'))
                ++after;
            if (after == text.size() || !std::isalnum(static_cast<unsigned char>(text[after])))
                return letter;
        }
    }

    // rule 2: "answer is X"
    const std::string marker = "answer is";
    const size_t m = text.find(marker);
    if (m != std::string::npos) {
        size_t j = m + marker.size();
        while (j < text.size() && (std::isspace(static_cast<unsigned char>(text[j])) || text[j] == ':')) ++j;
        for (const auto& [letter, choice_text] : choices) {
            const std::string l = lower(letter);
            if (text.compare(j, l.size(), l) == 0 && standalone_at(text, j, l.size())) return letter;
        }
    }

    // rule 3: unique choice text appearing verbatim (case-insensitive)
    std::optional<std::string> found;
    for (const auto& [letter, choice_text] : choices) {
        const std::string needle = lower(choice_text);
        if (needle.empty()) continue;
        if (text.find(needle) != std::string::npos) {
            if (found) return std::nullopt;  // ambiguous
            found = letter;
        }
    }
    return found;
}

int closed_accuracy(const std::string& pred, const std::string& gt_answer,
                    const std::map<std::string, std::string>& choices) {
    if (gt_answer.empty()) throw std::invalid_argument("closed_accuracy: empty gold answer");
    if (!choices.empty()) {
        if (!choices.count(gt_answer))
            throw std::invalid_argument("closed_accuracy: gold answer \"" + gt_answer + "\" not in choices");
        const auto letter = extract_choice(pred, choices);
        return letter && *letter == gt_answer ? 1 : 0;
    }
    // letterless datasets (e.g. yes/no): gold tokens must all appear in pred
    const TokenMultiset gold = normalize(gt_answer);
    if (gold.empty()) throw std::invalid_argument("closed_accuracy: gold answer normalizes to nothing");
    const TokenMultiset p = normalize(pred);
    for (const auto& [tok, n] : gold) {
        auto it = p.find(tok);
        if (it == p.end() || it->second < n) return 0;
    }
    return 1;
}

ZeroShotMetrics zero_shot_metrics(
    const std::vector<std::pair<std::optional<std::string>, std::string>>& items,
    const std::vector<std::string>& classes) {
    if (items.empty()) throw std::invalid_argument("zero_shot_metrics: empty input");
    std::map<std::string, long> gold_count, pred_count, true_pos;
    for (const auto& c : classes) {
        gold_count[c] = 0;
        pred_count[c] = 0;
        true_pos[c] = 0;
    }
    long correct = 0;
    for (const auto& [pred, gold] : items) {
        if (!gold_count.count(gold))
            throw std::invalid_argument("zero_shot_metrics: gold label " + gold + " not in classes");
        ++gold_count[gold];
        if (pred && pred_count.count(*pred)) ++pred_count[*pred];
        if (pred && *pred == gold) {
            ++correct;
            ++true_pos[gold];
        }
    }
    ZeroShotMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(items.size());
    double rec_sum = 0.0, pre_sum = 0.0;
    for (const auto& c : classes) {
        const double rec = gold_count[c] > 0 ? static_cast<double>(true_pos[c]) / gold_count[c] : 0.0;
        const double pre = pred_count[c] > 0 ? static_cast<double>(true_pos[c]) / pred_count[c] : 0.0;
        m.per_class_recall[c] = rec;
        m.per_class_precision[c] = pre;
        rec_sum += rec;
        pre_sum += pre;
    }
    m.recall = rec_sum / static_cast<double>(classes.size());
    m.precision = pre_sum / static_cast<double>(classes.size());
    return m;
}

const char* const kAlignmentJudgePrompt =
    "Rate the semantic similarity of the response to the reference caption on a scale of 1 to 10. "
    "Reply with a single integer.\nReference: {reference}\nResponse: {response}";

int judge_alignment_score(const std::string& response, const std::string& reference_caption,
                          JudgeClient& judge, const std::string& prompt_template) {
    std::string prompt = prompt_template;
    auto replace = [&prompt](const std::string& key, const std::string& value) {
        const size_t pos = prompt.find(key);
        if (pos != std::string::npos) prompt.replace(pos, key.size(), value);
    };
    replace("{reference}", reference_caption);
    replace("{response}", response);
    return judge_score(judge, prompt, JudgePayload{});
}

EvalReport score_vqa(const std::vector<VQARecord>& records,
                     const std::map<std::string, std::string>& generations) {
    EvalReport rep;
    double closed_sum = 0.0, open_sum = 0.0, pooled = 0.0;
    for (const auto& r : records) {
        r.validate();
        auto it = generations.find(r.id);
        const std::string gen = it == generations.end() ? "" : it->second;
        ItemVerdict v;
        v.id = r.id;
        v.kind = r.kind;
        v.generation = gen;
        if (r.kind == "closed") {
            v.pred_letter = extract_choice(gen, r.choices);
            v.closed_correct = closed_accuracy(gen, r.answer, r.choices);
            // the containment reading is logged too so either aggregation can
            // be recomputed from the per-item rows
            v.containment_correct = closed_accuracy(gen, r.answer, {});
            closed_sum += v.closed_correct;
            pooled += v.closed_correct;
            ++rep.closed_count;
        } else {
            v.recall = open_recall(gen, r.answer);
            open_sum += v.recall;
            pooled += v.recall;
            ++rep.open_count;
        }
        rep.items.push_back(std::move(v));
    }
    rep.closed_acc = rep.closed_count ? closed_sum / rep.closed_count : 0.0;
    rep.open_rec = rep.open_count ? open_sum / rep.open_count : 0.0;
    const int cols = (rep.closed_count ? 1 : 0) + (rep.open_count ? 1 : 0);
    rep.overall_mean_of_columns = cols ? (rep.closed_acc + rep.open_rec) / cols : 0.0;
    rep.overall_item_pooled = rep.items.empty() ? 0.0 : pooled / static_cast<double>(rep.items.size());
    return rep;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json items_j = nlohmann::json::array();
    for (const auto& v : items) {
        nlohmann::json j = {{"id", v.id}, {"kind", v.kind}, {"generation", sanitize_utf8(v.generation)}};
        if (v.pred_letter) j["pred_letter"] = *v.pred_letter;
        if (v.closed_correct >= 0) j["closed_correct"] = v.closed_correct;
        if (v.containment_correct >= 0) j["containment_correct"] = v.containment_correct;
        if (v.recall >= 0) j["recall"] = v.recall;
        items_j.push_back(std::move(j));
    }
    return {{"items", items_j},
            {"closed_count", closed_count},
            {"open_count", open_count},
            {"closed_acc", closed_acc},
            {"open_rec", open_rec},
            {"overall_mean_of_columns", overall_mean_of_columns},
            {"overall_item_pooled", overall_item_pooled}};
}

std::string EvalReport::to_table() const {
    std::ostringstream out;
    out << "              Closed        Open          Overall\n";
    out << "              Acc.          Rec.          mean-cols / item-pooled\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-13s %-13.2f %-13.2f %.2f / %.2f\n", "result",
                  closed_acc * 100.0, open_rec * 100.0, overall_mean_of_columns * 100.0,
                  overall_item_pooled * 100.0);
    out << buf;
    out << "items: " << items.size() << " (closed " << closed_count << ", open " << open_count << ")\n";
    return out.str();
}

ZeroShotReport score_zero_shot(const std::string& dataset, const std::vector<VQARecord>& records,
                               const std::map<std::string, std::string>& generations,
                               const std::vector<std::string>& classes) {
    ZeroShotReport rep;
    rep.dataset = dataset;
    rep.classes = classes;
    std::vector<std::pair<std::optional<std::string>, std::string>> items;
    for (const auto& r : records) {
        r.validate();
        auto it = generations.find(r.id);
        const std::string gen = it == generations.end() ? "" : it->second;
        ItemVerdict v;
        v.id = r.id;
        v.kind = r.kind;
        v.generation = gen;
        v.pred_letter = extract_choice(gen, r.choices);
        v.closed_correct = v.pred_letter && *v.pred_letter == r.answer ? 1 : 0;
        items.emplace_back(v.pred_letter, r.answer);
        rep.items.push_back(std::move(v));
    }
    rep.metrics = zero_shot_metrics(items, classes);
    return rep;
}

nlohmann::json ZeroShotReport::to_json() const {
    nlohmann::json items_j = nlohmann::json::array();
    for (const auto& v : items) {
        nlohmann::json j = {{"id", v.id}, {"generation", sanitize_utf8(v.generation)},
                            {"correct", v.closed_correct}};
        if (v.pred_letter) j["pred_letter"] = *v.pred_letter;
        items_j.push_back(std::move(j));
    }
    nlohmann::json per_class;
    for (const auto& [c, r] : metrics.per_class_recall)
        per_class[c] = {{"recall", r}, {"precision", metrics.per_class_precision.at(c)}};
    return {{"dataset", dataset},
            {"accuracy", metrics.accuracy},
            {"recall", metrics.recall},
            {"precision", metrics.precision},
            {"per_class", per_class},
            {"items", items_j}};
}

std::string ZeroShotReport::to_table() const {
    std::ostringstream out;
    out << "              Acc.          Rec.          Pre.\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-13s %-13.2f %-13.2f %.2f\n", dataset.c_str(),
                  metrics.accuracy * 100.0, metrics.recall * 100.0, metrics.precision * 100.0);
    out << buf;
    for (const auto& [c, r] : metrics.per_class_recall) {
        std::snprintf(buf, sizeof(buf), "  class %-6s rec %-10.2f pre %.2f\n", c.c_str(), r * 100.0,
                      metrics.per_class_precision.at(c) * 100.0);
        out << buf;
    }
    return out.str();
}

std::map<std::string, std::string> read_generations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open generations " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            out[j.at("id").get<std::string>()] = j.at("generation").get<std::string>();
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::string sanitize_utf8(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    const auto* p = reinterpret_cast<const unsigned char*>(s.data());
    const size_t n = s.size();
    size_t i = 0;
    auto bad = [&out] { out += "\xEF\xBF\xBD"; };  // U+FFFD
    while (i < n) {
        const unsigned char c = p[i];
        size_t len = 0;
        if (c < 0x80)
            len = 1;
        else if ((c & 0xE0) == 0xC0 && c >= 0xC2)
            len = 2;
        else if ((c & 0xF0) == 0xE0)
            len = 3;
        else if ((c & 0xF8) == 0xF0 && c <= 0xF4)
            len = 4;
        if (len == 0 || i + len > n) {
            bad();
            ++i;
            continue;
        }
        bool ok = true;
        for (size_t k = 1; k < len; ++k)
            if ((p[i + k] & 0xC0) != 0x80) ok = false;
        if (ok && len == 3 && c == 0xE0 && p[i + 1] < 0xA0) ok = false;  // overlong
        if (ok && len == 3 && c == 0xED && p[i + 1] >= 0xA0) ok = false;  // surrogate
        if (ok && len == 4 && c == 0xF0 && p[i + 1] < 0x90) ok = false;  // overlong
        if (ok && len == 4 && c == 0xF4 && p[i + 1] >= 0x90) ok = false;  // > U+10FFFF
        if (!ok) {
            bad();
            ++i;
            continue;
        }
        out.append(s, i, len);
        i += len;
    }
    return out;
}

void write_generations(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, std::string>>& generations) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write generations " + path.string());
    for (const auto& [id, gen] : generations)
        out << nlohmann::json({{"id", id}, {"generation", sanitize_utf8(gen)}}).dump() << "\n";
}

}  // namespace pathvlm
