#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace pathvlm {

// Overrides shared by every subcommand.
struct GlobalOpts {
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    std::string profile = "desk";  // desk | full
    std::optional<std::string> judge;  // mock | remote
};

struct CmdResult {
    std::filesystem::path out_dir;
    nlohmann::json run_manifest;
};

// Each command validates its config (ConfigError with the field path on
// failure), runs, writes its artifacts plus run_manifest.json with content
// hashes of every input and output. Relative paths in a config resolve
// against the config file's directory.
CmdResult cmd_clean(const std::filesystem::path& config_path, const GlobalOpts& opts);
CmdResult cmd_train_plip(const std::filesystem::path& config_path, const GlobalOpts& opts);
CmdResult cmd_align(const std::filesystem::path& config_path, const GlobalOpts& opts);
CmdResult cmd_finetune(const std::filesystem::path& config_path, const GlobalOpts& opts);
CmdResult cmd_eval(const std::filesystem::path& config_path, const GlobalOpts& opts);
CmdResult cmd_zeroshot(const std::filesystem::path& config_path, const GlobalOpts& opts);

// Writes the bundled synthetic desk corpus + stage configs under root.
CmdResult cmd_make_fixtures(const std::filesystem::path& root, uint64_t seed);

}  // namespace pathvlm
