#include "pathvlm/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <set>

#include "pathvlm/checkpoint.hpp"
#include "pathvlm/eval.hpp"
#include "pathvlm/fixtures.hpp"
#include "pathvlm/hashing.hpp"
#include "pathvlm/trainer.hpp"

namespace pathvlm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config: parse error in " + path.string() + ": " + e.what());
    }
    return j;
}

const json& req(const json& j, const std::string& field, const std::string& scope) {
    if (!j.contains(field)) throw ConfigError(scope + field + ": missing");
    return j.at(field);
}

fs::path resolve(const fs::path& config_dir, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : config_dir / path;
}

fs::path req_existing_path(const json& j, const std::string& field, const fs::path& config_dir,
                           const std::string& scope) {
    const fs::path p = resolve(config_dir, req(j, field, scope).get<std::string>());
    if (!fs::exists(p)) throw ConfigError(scope + field + ": path does not exist: " + p.string());
    return p;
}

// Tracks every consumed and produced file for the run manifest. Keys are
// relative to the config/output directories so reruns in different trees
// produce byte-identical manifests.
struct RunRecorder {
    fs::path input_base;
    json inputs = json::object();
    json outputs = json::object();

    void input(const fs::path& p) {
        const auto rel = p.lexically_proximate(input_base);
        inputs[rel.generic_string()] = sha256_file(p);
    }
    void output_dir(const fs::path& dir) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_regular_file() && e.path().filename() != "run_manifest.json") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files)
            outputs[fs::relative(f, dir).generic_string()] = sha256_file(f);
    }
};

json finish_run(const std::string& command, uint64_t seed, const json& resolved_config,
                const fs::path& out_dir, RunRecorder& rec) {
    rec.output_dir(out_dir);
    json manifest = {{"command", command},
                     {"seed", seed},
                     {"config_hash", sha256_hex(resolved_config.dump())},
                     {"resolved_config", resolved_config},
                     {"input_hashes", rec.inputs},
                     {"output_hashes", rec.outputs}};
    std::ofstream out(out_dir / "run_manifest.json");
    out << manifest.dump(2) << "\n";
    return manifest;
}

uint64_t pick_seed(const json& cfg, const GlobalOpts& opts) {
    if (opts.seed) return *opts.seed;
    return cfg.value("seed", 0ull);
}

fs::path pick_out_dir(const json& cfg, const GlobalOpts& opts, const fs::path& config_dir,
                      const std::string& scope) {
    if (opts.out_dir) return fs::path(*opts.out_dir);
    return resolve(config_dir, req(cfg, "out_dir", scope).get<std::string>());
}

std::unique_ptr<JudgeClient> build_judge(const json& jcfg, const GlobalOpts& opts, const std::string& scope) {
    std::string type = jcfg.value("type", "mock");
    if (opts.judge) type = *opts.judge;
    if (type == "mock") {
        std::vector<MockJudge::Rule> rules;
        for (const auto& k : jcfg.value("image_keywords", json::array()))
            rules.push_back({k.get<std::string>(), "yes"});
        for (const auto& k : jcfg.value("text_keywords", json::array()))
            rules.push_back({k.get<std::string>(), "yes"});
        return std::make_unique<MockJudge>(std::move(rules), jcfg.value("default_reply", "no"));
    }
    if (type == "remote") {
        std::string endpoint = jcfg.value("endpoint", "");
        if (const char* env = std::getenv("PATHVLM_JUDGE_ENDPOINT")) endpoint = env;
        // endpoint: host:port[/path]
        if (endpoint.empty()) throw ConfigError(scope + "judge.endpoint: missing");
        RemoteJudge::Options o;
        std::string rest = endpoint;
        if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
        const size_t slash = rest.find('/');
        if (slash != std::string::npos) {
            o.path = rest.substr(slash);
            rest = rest.substr(0, slash);
        }
        const size_t colon = rest.find(':');
        if (colon == std::string::npos) throw ConfigError(scope + "judge.endpoint: expected host:port");
        o.host = rest.substr(0, colon);
        o.port = std::stoi(rest.substr(colon + 1));
        o.model = jcfg.value("model", "judge");
        o.retry_budget = jcfg.value("retry_budget", 2);
        o.timeout_ms = jcfg.value("timeout_ms", 5000);
        o.max_in_flight = jcfg.value("max_in_flight", 4);
        return std::make_unique<RemoteJudge>(o);
    }
    throw ConfigError(scope + "judge.type: must be mock or remote, got " + type);
}

ScheduleSpec schedule_from_json(const json& j, const std::string& scope) {
    ScheduleSpec s;
    const std::string kind = req(j, "kind", scope).get<std::string>();
    if (kind == "warmup_interval_decay")
        s.kind = ScheduleSpec::Kind::warmup_interval_decay;
    else if (kind == "warmup_cosine")
        s.kind = ScheduleSpec::Kind::warmup_cosine;
    else
        throw ConfigError(scope + "kind: unknown schedule kind " + kind);
    s.init_lr = req(j, "init_lr", scope).get<double>();
    s.peak_lr = req(j, "peak_lr", scope).get<double>();
    s.floor_lr = req(j, "floor_lr", scope).get<double>();
    s.warmup_steps = req(j, "warmup_steps", scope).get<long>();
    s.total_steps = req(j, "total_steps", scope).get<long>();
    s.interval_steps = j.value("interval_steps", 0L);
    try {
        s.validate();
    } catch (const std::exception& e) {
        throw ConfigError(scope + ": " + e.what());
    }
    return s;
}

json schedule_to_json(const ScheduleSpec& s) {
    return {{"kind", s.kind == ScheduleSpec::Kind::warmup_interval_decay ? "warmup_interval_decay"
                                                                         : "warmup_cosine"},
            {"init_lr", s.init_lr},     {"peak_lr", s.peak_lr},
            {"floor_lr", s.floor_lr},   {"warmup_steps", s.warmup_steps},
            {"total_steps", s.total_steps}, {"interval_steps", s.interval_steps}};
}

PlipConfig plip_from_json(const json& j, uint64_t seed) {
    PlipConfig c;
    c.patch_size = j.value("patch_size", c.patch_size);
    c.enc_dim = j.value("enc_dim", c.enc_dim);
    c.enc_layers = j.value("enc_layers", c.enc_layers);
    c.enc_heads = j.value("enc_heads", c.enc_heads);
    c.d_proj = j.value("d_proj", c.d_proj);
    c.temperature = j.value("temperature", c.temperature);
    c.max_text_len = j.value("max_text_len", c.max_text_len);
    c.seed = seed;
    return c;
}

json plip_to_json(const PlipConfig& c) {
    return {{"patch_size", c.patch_size}, {"enc_dim", c.enc_dim},   {"enc_layers", c.enc_layers},
            {"enc_heads", c.enc_heads},   {"d_proj", c.d_proj},     {"temperature", c.temperature},
            {"max_text_len", c.max_text_len}, {"vocab", c.vocab}};
}

ConnectorConfig connector_from_json(const json& j, const GlobalOpts& opts, uint64_t seed) {
    ConnectorConfig c;
    c.tile_size = opts.profile == "full" ? 224 : 64;
    c.tile_size = j.value("tile_size", c.tile_size);
    c.max_tiles = j.value("max_tiles", c.max_tiles);
    c.query_count = j.value("query_count", c.query_count);
    c.d_llm = j.value("d_llm", c.d_llm);
    c.seed = seed;
    return c;
}

json connector_to_json(const ConnectorConfig& c) {
    return {{"tile_size", c.tile_size}, {"max_tiles", c.max_tiles},
            {"query_count", c.query_count}, {"d_llm", c.d_llm}};
}

LMConfig lm_from_json(const json& j, uint64_t seed) {
    LMConfig c;
    c.d_model = j.value("d_model", c.d_model);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.context = j.value("context", c.context);
    c.seed = seed;
    return c;
}

json lm_to_json(const LMConfig& c) {
    return {{"d_model", c.d_model}, {"layers", c.layers}, {"heads", c.heads},
            {"context", c.context}, {"vocab", c.vocab}};
}

LoraConfig lora_from_json(const json& j, uint64_t seed) {
    LoraConfig c;
    c.rank = j.value("rank", c.rank);
    c.alpha = j.value("alpha", c.alpha);
    c.seed = seed;
    return c;
}

json lora_to_json(const LoraConfig& c) {
    return {{"rank", c.rank}, {"alpha", c.alpha}};
}

// rebuild a VLM from checkpoint metadata (configs + seed), then load weights
std::unique_ptr<VlmModel> vlm_from_checkpoint(const fs::path& ckpt_dir) {
    const json meta = checkpoint::load_metadata(ckpt_dir);
    const uint64_t seed = meta.at("seed").get<uint64_t>();
    PlipConfig pc = plip_from_json(meta.at("plip"), seed);
    ConnectorConfig cc;
    const json& cj = meta.at("connector");
    cc.tile_size = cj.at("tile_size").get<int>();
    cc.max_tiles = cj.at("max_tiles").get<int>();
    cc.query_count = cj.at("query_count").get<int>();
    cc.d_llm = cj.at("d_llm").get<int>();
    cc.seed = seed;
    LMConfig lc = lm_from_json(meta.at("lm"), seed);
    auto model = std::make_unique<VlmModel>(pc, cc, lc);
    model->lora_cfg = lora_from_json(meta.at("lora"), seed);
    attach_lora(*model, model->lora_cfg);
    checkpoint::load_into(ckpt_dir, model->params);
    return model;
}

void generate_for_manifest(VlmModel& model, const std::vector<VQARecord>& records,
                           const fs::path& image_root, int max_new_tokens,
                           std::vector<std::pair<std::string, std::string>>& out) {
    for (const auto& r : records) {
        const ImageArray img = load_image_ref(r.image_ref, image_root);
        // sanitized so the scored text equals what generations.jsonl stores
        out.emplace_back(r.id, sanitize_utf8(generate(model, img, r.question, max_new_tokens)));
    }
}

}  // namespace

CmdResult cmd_clean(const fs::path& config_path, const GlobalOpts& opts) {
    const json cfg = load_config(config_path);
    const fs::path config_dir = config_path.parent_path();
    const std::string scope = "clean.";
    const uint64_t seed = pick_seed(cfg, opts);
    const fs::path out_dir = pick_out_dir(cfg, opts, config_dir, scope);

    std::vector<std::pair<std::string, std::vector<PairRecord>>> sources;
    RunRecorder rec;
    rec.input_base = config_dir;
    for (const auto& s : req(cfg, "sources", scope)) {
        const fs::path p = req_existing_path(s, "path", config_dir, scope + "sources.");
        rec.input(p);
        sources.emplace_back(req(s, "source", scope + "sources.").get<std::string>(),
                             read_pair_manifest(p));
    }
    const int min_words = cfg.value("min_words", 20);
    const double max_quarantine = cfg.value("max_quarantine_frac", 0.5);
    auto judge = build_judge(cfg.value("judge", json::object()), opts, scope);

    fs::create_directories(out_dir);
    auto [merged, stats] = merge_sources(sources);
    const int64_t input_count = static_cast<int64_t>(merged.size());

    FilterOutcome img_out = filter_nonpath_images(std::move(merged), *judge);
    stats.per_stage_drops["image_judge"] = static_cast<int64_t>(img_out.dropped.size());
    FilterOutcome txt_out = filter_nonhuman_text(std::move(img_out.kept), *judge);
    stats.per_stage_drops["text_judge"] = static_cast<int64_t>(txt_out.dropped.size());

    // pretraining manifest: judge-cleaned pairs (any length)
    write_pair_manifest(out_dir / "pretrain_pairs.jsonl", txt_out.kept);

    FilterOutcome len_out = filter_min_words(txt_out.kept, min_words);
    stats.per_stage_drops["min_words"] = static_cast<int64_t>(len_out.dropped.size());

    // alignment manifest: judge-cleaned + length-filtered
    write_pair_manifest(out_dir / "align_pairs.jsonl", len_out.kept);

    std::vector<PairRecord> dropped;
    for (auto& v : {&img_out.dropped, &txt_out.dropped, &len_out.dropped})
        dropped.insert(dropped.end(), v->begin(), v->end());
    std::sort(dropped.begin(), dropped.end(),
              [](const PairRecord& a, const PairRecord& b) { return a.id < b.id; });
    write_pair_manifest(out_dir / "dropped.jsonl", dropped);

    std::vector<PairRecord> quarantined = img_out.quarantined;
    quarantined.insert(quarantined.end(), txt_out.quarantined.begin(), txt_out.quarantined.end());
    write_pair_manifest(out_dir / "quarantined.jsonl", quarantined);

    const int64_t quarantine_count = static_cast<int64_t>(quarantined.size());
    // per-source outputs: recount from the kept alignment set
    for (auto& [sname, c] : stats.per_source) c.output = 0;
    for (const auto& r : len_out.kept) {
        const size_t colon = r.id.find(':');
        if (colon != std::string::npos) ++stats.per_source[r.id.substr(0, colon)].output;
    }
    {
        std::ofstream out(out_dir / "stats.json");
        json sj = stats.to_json();
        sj["quarantined"] = quarantine_count;
        sj["input_records"] = input_count;
        out << sj.dump(2) << "\n";
    }
    if (input_count > 0 &&
        static_cast<double>(quarantine_count) / static_cast<double>(input_count) > max_quarantine)
        throw JudgeError("clean: quarantine fraction exceeds " + std::to_string(max_quarantine));

    CmdResult result;
    result.out_dir = out_dir;
    result.run_manifest = finish_run("clean", seed, cfg, out_dir, rec);
    return result;
}

CmdResult cmd_train_plip(const fs::path& config_path, const GlobalOpts& opts) {
    const json cfg = load_config(config_path);
    const fs::path config_dir = config_path.parent_path();
    const std::string scope = "train_plip.";
    const uint64_t seed = pick_seed(cfg, opts);
    const fs::path out_dir = pick_out_dir(cfg, opts, config_dir, scope);
    const fs::path manifest_path = req_existing_path(cfg, "manifest", config_dir, scope);
    const ScheduleSpec sched = schedule_from_json(req(cfg, "schedule", scope), scope + "schedule.");

    RunRecorder rec;
    rec.input_base = config_dir;
    rec.input(manifest_path);
    const std::vector<PairRecord> manifest = read_pair_manifest(manifest_path);

    PlipConfig pc = plip_from_json(cfg.value("plip", json::object()), seed);
    PlipModel model(pc);
    PlipTrainOptions topts;
    topts.steps = cfg.value("steps", 200L);
    topts.batch = cfg.value("batch", 16);
    topts.image_root = manifest_path.parent_path();
    const PlipTrainResult tr = train_plip(model, manifest, sched, topts);

    fs::create_directories(out_dir);
    const json meta = {{"kind", "plip"},       {"plip", plip_to_json(pc)},
                       {"schedule", schedule_to_json(sched)}, {"seed", seed},
                       {"steps", tr.steps},    {"final_loss", tr.losses.empty() ? 0.0 : tr.losses.back()}};
    checkpoint::save(out_dir / "checkpoint", model.params, meta);

    CmdResult result;
    result.out_dir = out_dir;
    result.run_manifest = finish_run("train-plip", seed, cfg, out_dir, rec);
    return result;
}

CmdResult cmd_align(const fs::path& config_path, const GlobalOpts& opts) {
    const json cfg = load_config(config_path);
    const fs::path config_dir = config_path.parent_path();
    const std::string scope = "align.";
    const uint64_t seed = pick_seed(cfg, opts);
    const fs::path out_dir = pick_out_dir(cfg, opts, config_dir, scope);
    const fs::path plip_ckpt = req_existing_path(cfg, "plip_checkpoint", config_dir, scope);
    const fs::path manifest_path = req_existing_path(cfg, "manifest", config_dir, scope);
    const fs::path templates_path = req_existing_path(cfg, "templates_file", config_dir, scope);

    RunRecorder rec;
    rec.input_base = config_dir;
    rec.input(manifest_path);
    rec.input(templates_path);

    const json plip_meta = checkpoint::load_metadata(plip_ckpt);
    PlipConfig pc = plip_from_json(plip_meta.at("plip"), plip_meta.at("seed").get<uint64_t>());
    ConnectorConfig cc = connector_from_json(cfg.value("connector", json::object()), opts, seed);
    LMConfig lc = lm_from_json(cfg.value("lm", json::object()), seed);
    VlmModel model(pc, cc, lc);
    model.lora_cfg = lora_from_json(cfg.value("lora", json::object()), seed);
    attach_lora(model, model.lora_cfg);
    checkpoint::load_group(plip_ckpt, *model.params.get("vision_encoder"));

    const std::vector<PairRecord> pairs = read_pair_manifest(manifest_path);
    const std::vector<std::string> templates = load_question_templates(templates_path);
    const std::vector<VQARecord> dataset = build_alignment_qa(pairs, templates, seed);

    const json scheds_j = req(cfg, "schedules", scope);
    std::map<std::string, ScheduleSpec> scheds;
    scheds["connector"] = schedule_from_json(req(scheds_j, "connector", scope + "schedules."),
                                             scope + "schedules.connector.");
    scheds["lora"] =
        schedule_from_json(req(scheds_j, "lora", scope + "schedules."), scope + "schedules.lora.");

    TrainStageOptions topts;
    topts.steps = cfg.value("steps", 100L);
    topts.micro_batch = cfg.value("micro_batch", 2);
    topts.accum = cfg.value("accum", 1);
    topts.seed = seed;
    topts.image_root = manifest_path.parent_path();
    const TrainStageResult tr = train_stage(2, dataset, model, scheds, topts);

    fs::create_directories(out_dir);
    const json meta = {{"kind", "vlm"},
                       {"stage", 2},
                       {"plip", plip_to_json(pc)},
                       {"connector", connector_to_json(cc)},
                       {"lm", lm_to_json(lc)},
                       {"lora", lora_to_json(model.lora_cfg)},
                       {"seed", seed},
                       {"steps", topts.steps},
                       {"effective_batch", effective_batch(topts.micro_batch, topts.accum, 1)},
                       {"final_loss", tr.losses.empty() ? 0.0 : tr.losses.back()}};
    checkpoint::save(out_dir / "checkpoint", model.params, meta);

    CmdResult result;
    result.out_dir = out_dir;
    result.run_manifest = finish_run("align", seed, cfg, out_dir, rec);
    return result;
}

CmdResult cmd_finetune(const fs::path& config_path, const GlobalOpts& opts) {
    const json cfg = load_config(config_path);
    const fs::path config_dir = config_path.parent_path();
    const std::string scope = "finetune.";
    const uint64_t seed = pick_seed(cfg, opts);
    const fs::path out_dir = pick_out_dir(cfg, opts, config_dir, scope);
    const fs::path ckpt = req_existing_path(cfg, "checkpoint", config_dir, scope);
    const fs::path manifest_path = req_existing_path(cfg, "manifest", config_dir, scope);

    RunRecorder rec;
    rec.input_base = config_dir;
    rec.input(manifest_path);

    auto model = vlm_from_checkpoint(ckpt);
    const std::vector<VQARecord> dataset = read_vqa_manifest(manifest_path);

    const json scheds_j = req(cfg, "schedules", scope);
    std::map<std::string, ScheduleSpec> scheds;
    scheds["connector"] = schedule_from_json(req(scheds_j, "connector", scope + "schedules."),
                                             scope + "schedules.connector.");
    scheds["lora"] =
        schedule_from_json(req(scheds_j, "lora", scope + "schedules."), scope + "schedules.lora.");

    TrainStageOptions topts;
    topts.steps = cfg.value("steps", 100L);
    topts.micro_batch = cfg.value("micro_batch", 2);
    topts.accum = cfg.value("accum", 1);
    topts.seed = seed;
    topts.image_root = manifest_path.parent_path();
    const TrainStageResult tr = train_stage(3, dataset, *model, scheds, topts);

    fs::create_directories(out_dir);
    const json meta = {{"kind", "vlm"},
                       {"stage", 3},
                       {"plip", plip_to_json(model->plip_cfg)},
                       {"connector", connector_to_json(model->conn_cfg)},
                       {"lm", lm_to_json(model->lm_cfg)},
                       {"lora", lora_to_json(model->lora_cfg)},
                       {"seed", seed},
                       {"steps", topts.steps},
                       {"effective_batch", effective_batch(topts.micro_batch, topts.accum, 1)},
                       {"final_loss", tr.losses.empty() ? 0.0 : tr.losses.back()}};
    checkpoint::save(out_dir / "checkpoint", model->params, meta);

    CmdResult result;
    result.out_dir = out_dir;
    result.run_manifest = finish_run("finetune", seed, cfg, out_dir, rec);
    return result;
}

CmdResult cmd_eval(const fs::path& config_path, const GlobalOpts& opts) {
    const json cfg = load_config(config_path);
    const fs::path config_dir = config_path.parent_path();
    const std::string scope = "eval.";
    const uint64_t seed = pick_seed(cfg, opts);
    const fs::path out_dir = pick_out_dir(cfg, opts, config_dir, scope);
    const fs::path manifest_path = req_existing_path(cfg, "manifest", config_dir, scope);

    RunRecorder rec;
    rec.input_base = config_dir;
    rec.input(manifest_path);
    const std::vector<VQARecord> records = read_vqa_manifest(manifest_path);
    fs::create_directories(out_dir);

    std::map<std::string, std::string> generations;
    if (cfg.contains("generations")) {
        const fs::path gen_path = req_existing_path(cfg, "generations", config_dir, scope);
        rec.input(gen_path);
        generations = read_generations(gen_path);
    } else {
        const fs::path ckpt = req_existing_path(cfg, "checkpoint", config_dir, scope);
        auto model = vlm_from_checkpoint(ckpt);
        std::vector<std::pair<std::string, std::string>> gen_list;
        generate_for_manifest(*model, records, manifest_path.parent_path(),
                              cfg.value("max_new_tokens", 16), gen_list);
        write_generations(out_dir / "generations.jsonl", gen_list);
        for (const auto& [id, g] : gen_list) generations[id] = g;
    }

    const EvalReport report = score_vqa(records, generations);
    {
        std::ofstream out(out_dir / "eval_report.json");
        out << report.to_json().dump(2) << "\n";
    }
    {
        std::ofstream out(out_dir / "eval_report.txt");
        out << report.to_table();
    }

    if (cfg.contains("alignment_scoring") && cfg.at("alignment_scoring").value("enabled", false)) {
        auto judge = build_judge(cfg.at("alignment_scoring").value("judge", json::object()), opts, scope);
        json scores = json::array();
        double total = 0.0;
        long n = 0;
        for (const auto& r : records) {
            if (r.kind != "open") continue;
            auto it = generations.find(r.id);
            if (it == generations.end()) continue;
            const int s = judge_alignment_score(it->second, r.answer, *judge);
            scores.push_back({{"id", r.id}, {"score", s}});
            total += s;
            ++n;
        }
        std::ofstream out(out_dir / "alignment_scores.json");
        out << json({{"items", scores}, {"mean", n ? total / n : 0.0}}).dump(2) << "\n";
    }

    CmdResult result;
    result.out_dir = out_dir;
    result.run_manifest = finish_run("eval", seed, cfg, out_dir, rec);
    return result;
}

CmdResult cmd_zeroshot(const fs::path& config_path, const GlobalOpts& opts) {
    const json cfg = load_config(config_path);
    const fs::path config_dir = config_path.parent_path();
    const std::string scope = "zeroshot.";
    const uint64_t seed = pick_seed(cfg, opts);
    const fs::path out_dir = pick_out_dir(cfg, opts, config_dir, scope);
    const fs::path spec_path = req_existing_path(cfg, "dataset_spec", config_dir, scope);
    const fs::path ckpt = req_existing_path(cfg, "checkpoint", config_dir, scope);

    RunRecorder rec;
    rec.input_base = config_dir;
    rec.input(spec_path);
    const DatasetSpec spec = dataset_spec_from_json(load_config(spec_path));
    const std::vector<VQARecord> records = classification_to_vqa(spec);

    auto model = vlm_from_checkpoint(ckpt);
    std::vector<std::pair<std::string, std::string>> gen_list;
    generate_for_manifest(*model, records, spec_path.parent_path(), cfg.value("max_new_tokens", 16),
                          gen_list);
    fs::create_directories(out_dir);
    write_generations(out_dir / "generations.jsonl", gen_list);
    std::map<std::string, std::string> generations(gen_list.begin(), gen_list.end());

    std::vector<std::string> classes;
    for (const auto& c : spec.classes) classes.push_back(c.letter);
    const ZeroShotReport report = score_zero_shot(spec.name, records, generations, classes);
    {
        std::ofstream out(out_dir / "zeroshot_report.json");
        out << report.to_json().dump(2) << "\n";
    }
    {
        std::ofstream out(out_dir / "zeroshot_report.txt");
        out << report.to_table();
    }

    CmdResult result;
    result.out_dir = out_dir;
    result.run_manifest = finish_run("zeroshot", seed, cfg, out_dir, rec);
    return result;
}

CmdResult cmd_make_fixtures(const fs::path& root, uint64_t seed) {
    write_desk_fixtures(root, seed);
    RunRecorder rec;
    CmdResult result;
    result.out_dir = root;
    result.run_manifest = finish_run("make-fixtures", seed, json{{"root", root.string()}}, root, rec);
    return result;
}

}  // namespace pathvlm
