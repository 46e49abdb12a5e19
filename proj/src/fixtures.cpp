#include "pathvlm/fixtures.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "pathvlm/image.hpp"
#include "pathvlm/rng.hpp"

namespace pathvlm {

namespace {

const std::vector<std::string> kTissues = {
    "breast", "colon", "lung", "liver", "gastric", "renal", "oral", "skin", "prostate", "thyroid"};
const std::vector<std::string> kFindings = {
    "invasive carcinoma", "benign tumor",  "chronic inflammation", "normal epithelium",
    "ductal hyperplasia", "adenocarcinoma", "squamous metaplasia",  "fibrous stroma"};
const std::vector<std::string> kAnimals = {"murine", "zebrafish", "canine", "porcine", "rat"};

// >= 20 words so the caption survives the length filter
std::string long_caption(Rng& rng, const std::string& extra) {
    const std::string& tissue = kTissues[rng.uniform_int(kTissues.size())];
    const std::string& finding = kFindings[rng.uniform_int(kFindings.size())];
    std::string cap = "hematoxylin and eosin stained section of " + (extra.empty() ? "human" : extra) +
                      " " + tissue + " tissue showing " + finding +
                      " with scattered lymphocytes dense stroma and several mitotic figures visible at "
                      "high magnification across the field";
    return cap;
}

std::string short_caption(Rng& rng) {
    const std::string& tissue = kTissues[rng.uniform_int(kTissues.size())];
    return "small biopsy of " + tissue + " tissue";  // 5 words
}

std::string synth_ref(int px, uint64_t seed) {
    return "synth:" + std::to_string(px) + "x" + std::to_string(px) + ":" + std::to_string(seed);
}

}  // namespace

CleanFixture make_clean_fixture(int n, uint64_t seed) {
    Rng rng(derive_seed(seed, "clean_fixture"));
    CleanFixture fx;
    for (int i = 0; i < n; ++i) {
        PairRecord r;
        const int kind = i % 5;  // 0,1,2 ok; 3 one of the bad kinds rotating
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%04d", i);
        r.image_ref = synth_ref(32, derive_seed(seed, std::string("img") + idbuf));
        r.source = i % 2 == 0 ? "quilt" : "pmc_oa";
        if (kind <= 2) {
            r.id = std::string("ok_") + idbuf;
            r.caption = long_caption(rng, "");
        } else if (i % 15 == 3) {
            r.id = std::string("xray_") + idbuf;
            r.caption = long_caption(rng, "");
            fx.expect_image_drop.push_back(r.id);
        } else if (i % 15 == 8) {
            r.id = std::string("animal_") + idbuf;
            r.caption = long_caption(rng, kAnimals[rng.uniform_int(kAnimals.size())]);
            fx.expect_text_drop.push_back(r.id);
        } else {
            r.id = std::string("short_") + idbuf;
            r.caption = short_caption(rng);
            fx.expect_length_drop.push_back(r.id);
        }
        fx.records.push_back(std::move(r));
    }
    return fx;
}

MockJudge make_fixture_image_judge() {
    return MockJudge({{"xray_", "yes"}}, "no");
}

MockJudge make_fixture_text_judge() {
    std::vector<MockJudge::Rule> rules;
    for (const auto& animal : kAnimals) rules.push_back({animal, "yes"});
    return MockJudge(std::move(rules), "no");
}

std::vector<PairRecord> make_pair_corpus(int n, uint64_t seed, int image_px) {
    Rng rng(derive_seed(seed, "pair_corpus"));
    std::vector<PairRecord> out;
    for (int i = 0; i < n; ++i) {
        PairRecord r;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "pair_%04d", i);
        r.id = idbuf;
        r.image_ref = synth_ref(image_px, derive_seed(seed, r.id));
        const std::string& tissue = kTissues[rng.uniform_int(kTissues.size())];
        const std::string& finding = kFindings[rng.uniform_int(kFindings.size())];
        r.caption = tissue + " section with " + finding;
        r.source = "other";
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<VQARecord> make_closed_vqa_corpus(int n, int n_classes, uint64_t seed, int image_px) {
    if (n_classes < 2 || n_classes > 4) throw std::invalid_argument("vqa corpus: n_classes must be in [2,4]");
    const std::vector<std::string> letters = {"A", "B", "C", "D"};
    const std::vector<std::string> names = {"alpha", "beta", "gamma", "delta"};
    std::map<std::string, std::string> choices;
    std::string question = "Which class?";
    for (int c = 0; c < n_classes; ++c) {
        choices[letters[c]] = names[c];
        question += " " + letters[c] + ":" + names[c];
    }
    std::vector<VQARecord> out;
    for (int i = 0; i < n; ++i) {
        VQARecord r;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "vqa_%04d", i);
        r.id = idbuf;
        const int cls = i % n_classes;
        // the image carries the class: fixed palette + per-record texture
        r.image_ref = "synthc:" + std::to_string(image_px) + "x" + std::to_string(image_px) + ":" +
                      std::to_string(cls) + ":" + std::to_string(derive_seed(seed, r.id));
        r.question = question;
        r.answer = letters[static_cast<size_t>(cls)];
        r.kind = "closed";
        r.choices = choices;
        out.push_back(std::move(r));
    }
    return out;
}

DatasetSpec make_zero_shot_fixture(const std::filesystem::path& image_dir, const std::string& ref_prefix,
                                   const std::string& name, int per_class, uint64_t seed, int image_px) {
    std::filesystem::create_directories(image_dir);
    DatasetSpec spec;
    spec.name = name;
    spec.classes = builtin_classes(name);
    int idx = 0;
    for (size_t k = 0; k < spec.classes.size(); ++k) {
        for (int i = 0; i < per_class; ++i, ++idx) {
            char idbuf[48];
            std::snprintf(idbuf, sizeof(idbuf), "%s_%04d", name.c_str(), idx);
            const std::string fname = std::string(idbuf) + ".ppm";
            write_ppm(synth_class_image(image_px, image_px, static_cast<int>(k), derive_seed(seed, idbuf)),
                      image_dir / fname);
            spec.images.push_back({idbuf, ref_prefix + fname, spec.classes[k].letter});
        }
    }
    return spec;
}

std::vector<std::filesystem::path> write_desk_fixtures(const std::filesystem::path& root, uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(root);
    fs::create_directories(root / "configs");
    std::vector<fs::path> written;
    auto note = [&written](const fs::path& p) {
        written.push_back(p);
        return p;
    };

    // cleaning corpus
    const CleanFixture clean = make_clean_fixture(60, derive_seed(seed, "clean"));
    write_pair_manifest(note(root / "raw_pairs.jsonl"), clean.records);

    // PLIP / alignment corpora
    write_pair_manifest(note(root / "plip_pairs.jsonl"), make_pair_corpus(32, derive_seed(seed, "plip"), 32));
    write_pair_manifest(note(root / "align_pairs.jsonl"), make_pair_corpus(16, derive_seed(seed, "align"), 64));

    // VQA training corpus
    write_vqa_manifest(note(root / "vqa_train.jsonl"), make_closed_vqa_corpus(20, 4, derive_seed(seed, "vqa"), 64));

    // zero-shot dataset
    const DatasetSpec zs = make_zero_shot_fixture(root / "zeroshot_images", "zeroshot_images/",
                                                  "ColonPath", 4, derive_seed(seed, "zeroshot"), 64);
    nlohmann::json zsj = {{"name", zs.name}, {"classes", nlohmann::json::array()}, {"images", nlohmann::json::array()}};
    for (const auto& c : zs.classes) zsj["classes"].push_back({{"letter", c.letter}, {"text", c.text}});
    for (const auto& img : zs.images)
        zsj["images"].push_back({{"id", img.id}, {"image_ref", img.image_ref}, {"label", img.label}});
    {
        std::ofstream out(note(root / "zeroshot_spec.json"));
        out << zsj.dump(2) << "\n";
    }

    // question templates
    {
        std::ofstream out(note(root / "templates.txt"));
        for (const auto& t : default_question_templates()) out << t << "\n";
    }

    // stage configs; paths relative to the config file directory
    auto dump_config = [&](const std::string& name, const nlohmann::json& j) {
        std::ofstream out(note(root / "configs" / name));
        out << j.dump(2) << "\n";
    };
    dump_config("clean.json",
                {{"sources", nlohmann::json::array({{{"source", "quilt"}, {"path", "../raw_pairs.jsonl"}}})},
                 {"out_dir", "../out/clean"},
                 {"min_words", 20},
                 {"max_quarantine_frac", 0.5},
                 {"judge",
                  {{"type", "mock"},
                   {"image_keywords", nlohmann::json::array({"xray_"})},
                   {"text_keywords", nlohmann::json::array({"murine", "zebrafish", "canine", "porcine", "rat"})},
                   {"retry_budget", 2}}}});
    dump_config("plip.json", {{"manifest", "../plip_pairs.jsonl"},
                              {"out_dir", "../out/plip"},
                              {"steps", 60},
                              {"batch", 8},
                              {"plip", {{"patch_size", 16}, {"enc_dim", 64}, {"enc_layers", 2},
                                        {"enc_heads", 4}, {"d_proj", 32}, {"max_text_len", 64}}},
                              {"schedule",
                               {{"kind", "warmup_interval_decay"}, {"init_lr", 1e-5}, {"peak_lr", 1e-3},
                                {"floor_lr", 5e-4}, {"warmup_steps", 10}, {"total_steps", 60},
                                {"interval_steps", 10}}}});
    const nlohmann::json conn_cfg = {{"tile_size", 64}, {"max_tiles", 6}, {"query_count", 16}, {"d_llm", 128}};
    const nlohmann::json lm_cfg = {{"d_model", 128}, {"layers", 2}, {"heads", 4}, {"context", 256}};
    const nlohmann::json lora_cfg = {{"rank", 8}, {"alpha", 16.0}};
    auto cosine = [](double peak, double floor, long total) {
        return nlohmann::json{{"kind", "warmup_cosine"}, {"init_lr", 1e-5}, {"peak_lr", peak},
                              {"floor_lr", floor}, {"warmup_steps", 5}, {"total_steps", total}};
    };
    dump_config("align.json", {{"plip_checkpoint", "../out/plip/checkpoint"},
                               {"manifest", "../align_pairs.jsonl"},
                               {"templates_file", "../templates.txt"},
                               {"out_dir", "../out/align"},
                               {"steps", 30},
                               {"micro_batch", 2},
                               {"accum", 2},
                               {"connector", conn_cfg},
                               {"lm", lm_cfg},
                               {"lora", lora_cfg},
                               {"schedules", {{"connector", cosine(1e-4, 0.0, 30)}, {"lora", cosine(2e-4, 1e-6, 30)}}}});
    dump_config("finetune.json", {{"checkpoint", "../out/align/checkpoint"},
                                  {"manifest", "../vqa_train.jsonl"},
                                  {"out_dir", "../out/finetune"},
                                  {"steps", 40},
                                  {"micro_batch", 2},
                                  {"accum", 2},
                                  {"schedules",
                                   {{"connector", cosine(1e-4, 1e-6, 40)}, {"lora", cosine(2e-4, 1e-6, 40)}}}});
    dump_config("eval.json", {{"checkpoint", "../out/finetune/checkpoint"},
                              {"manifest", "../vqa_train.jsonl"},
                              {"out_dir", "../out/eval"},
                              {"max_new_tokens", 8}});
    dump_config("zeroshot.json", {{"checkpoint", "../out/finetune/checkpoint"},
                                  {"dataset_spec", "../zeroshot_spec.json"},
                                  {"out_dir", "../out/zeroshot"},
                                  {"max_new_tokens", 8}});
    return written;
}

}  // namespace pathvlm
