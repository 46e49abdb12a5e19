#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "pathvlm/commands.hpp"
#include "pathvlm/common.hpp"

using pathvlm::CmdResult;
using pathvlm::GlobalOpts;

int main(int argc, char** argv) {
    CLI::App app{"pathology vision-language pipeline: data curation, pretraining, alignment, "
                 "instruction tuning and evaluation"};
    app.require_subcommand(1);

    GlobalOpts opts;
    std::string config;
    uint64_t seed_flag = 0;
    bool seed_set = false;
    std::string out_flag;
    std::string judge_flag;

    auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
        if (needs_config) cmd->add_option("--config", config, "stage config file (JSON)")->required();
        cmd->add_option("--seed", seed_flag, "override the config seed")->each([&](const std::string&) {
            seed_set = true;
        });
        cmd->add_option("--out", out_flag, "override the output directory");
        cmd->add_option("--profile", opts.profile, "desk | full")->check(CLI::IsMember({"desk", "full"}));
        cmd->add_option("--judge", judge_flag, "override judge selection: mock | remote")
            ->check(CLI::IsMember({"mock", "remote"}));
    };

    auto* clean = app.add_subcommand("clean", "run the curation pipeline on raw pair manifests");
    auto* train_plip = app.add_subcommand("train-plip", "stage 1: language-image pretraining");
    auto* align = app.add_subcommand("align", "stage 2: cross-domain alignment");
    auto* finetune = app.add_subcommand("finetune", "stage 3: VQA instruction learning");
    auto* eval = app.add_subcommand("eval", "score a VQA manifest");
    auto* zeroshot = app.add_subcommand("zeroshot", "classification-as-VQA evaluation");
    for (auto* c : {clean, train_plip, align, finetune, eval, zeroshot}) add_common(c);

    auto* fixtures = app.add_subcommand("make-fixtures", "write the bundled synthetic desk corpus");
    std::string fixtures_root = "fixtures";
    fixtures->add_option("--root", fixtures_root, "output directory");
    fixtures->add_option("--seed", seed_flag, "fixture seed")->each([&](const std::string&) {
        seed_set = true;
    });

    CLI11_PARSE(app, argc, argv);

    if (seed_set) opts.seed = seed_flag;
    if (!out_flag.empty()) opts.out_dir = out_flag;
    if (!judge_flag.empty()) opts.judge = judge_flag;

    try {
        CmdResult result;
        if (clean->parsed())
            result = pathvlm::cmd_clean(config, opts);
        else if (train_plip->parsed())
            result = pathvlm::cmd_train_plip(config, opts);
        else if (align->parsed())
            result = pathvlm::cmd_align(config, opts);
        else if (finetune->parsed())
            result = pathvlm::cmd_finetune(config, opts);
        else if (eval->parsed())
            result = pathvlm::cmd_eval(config, opts);
        else if (zeroshot->parsed())
            result = pathvlm::cmd_zeroshot(config, opts);
        else if (fixtures->parsed())
            result = pathvlm::cmd_make_fixtures(fixtures_root, seed_set ? seed_flag : 0);
        std::cout << "wrote " << result.out_dir.string() << " ("
                  << result.run_manifest["output_hashes"].size() << " artifacts)\n";
        return 0;
    } catch (const pathvlm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const pathvlm::JudgeError& e) {
        std::cerr << "judge error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
