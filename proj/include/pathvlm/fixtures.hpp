#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pathvlm/data_pipeline.hpp"

namespace pathvlm {

// Deterministic synthetic corpora for desk-profile runs and tests. All
// functions are pure in (args, seed); images are written as PPM.

// Labeled cleaning corpus: ids carry the expected outcome. "xray_" ids fail
// the image judge, "animal_" captions mention non-human organisms, "short_"
// captions have < 20 words, "ok_" records survive every stage.
struct CleanFixture {
    std::vector<PairRecord> records;          // unshuffled, mixed labels
    std::vector<std::string> expect_image_drop;   // ids
    std::vector<std::string> expect_text_drop;    // ids
    std::vector<std::string> expect_length_drop;  // ids
};
CleanFixture make_clean_fixture(int n, uint64_t seed);

// Judges matching the fixture's labels.
MockJudge make_fixture_image_judge();
MockJudge make_fixture_text_judge();

// Pair corpus with short captions for PLIP / alignment training; images are
// synth: refs so nothing touches disk.
std::vector<PairRecord> make_pair_corpus(int n, uint64_t seed, int image_px = 32);

// Closed-set VQA corpus: n_classes visually distinct image families; each
// record's answer is the letter of its family. Short question text.
std::vector<VQARecord> make_closed_vqa_corpus(int n, int n_classes, uint64_t seed, int image_px = 32);

// Classification dataset spec (+ images on disk) in a built-in dataset's
// shape, for the zero-shot path. Stored image_refs are ref_prefix + filename,
// so pass a prefix that resolves from wherever the spec will live.
DatasetSpec make_zero_shot_fixture(const std::filesystem::path& image_dir, const std::string& ref_prefix,
                                   const std::string& name, int per_class, uint64_t seed,
                                   int image_px = 32);

// Writes the full desk-profile fixture tree (manifests + images + dataset
// spec + stage configs) under root; returns the list of written files.
std::vector<std::filesystem::path> write_desk_fixtures(const std::filesystem::path& root, uint64_t seed);

}  // namespace pathvlm
