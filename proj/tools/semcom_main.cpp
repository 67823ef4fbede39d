#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "semcom/errors.hpp"
#include "semcom/pipeline.hpp"

namespace {

semcom::RunConfig resolve_config(const std::string& config_path, bool seed_given,
                                 std::uint64_t seed_flag, const std::string& out_dir,
                                 bool paper_scale) {
    semcom::RunConfig cfg;
    if (!config_path.empty()) cfg = semcom::load_run_config(config_path);
    // Seed precedence: --seed flag > SEMCOM_SEED env > config file.
    if (const char* env = std::getenv("SEMCOM_SEED")) {
        try {
            cfg.seed = std::stoull(env);
        } catch (const std::exception&) {
            throw semcom::config_error("SEMCOM_SEED must be an unsigned integer");
        }
    }
    if (seed_given) cfg.seed = seed_flag;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (paper_scale) cfg.apply_paper_scale();
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Channel-resilient semantic transmission simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir;
    std::string csi_path;
    std::uint64_t seed_flag = 0;
    bool paper_scale = false;

    app.add_option("--config", config_path, "JSON run configuration file");
    auto* seed_opt = app.add_option("--seed", seed_flag, "Override the global seed");
    app.add_option("--out", out_dir, "Override the output directory");
    app.add_flag("--paper-scale", paper_scale,
                 "Use the full-scale geometry: 512 units, 256 subchannels, capacity 2");

    auto* cmd_gen = app.add_subcommand("gen-data", "Generate or ingest the dataset");
    auto* cmd_trn = app.add_subcommand("train", "Train and freeze the transceiver");
    auto* cmd_msk = app.add_subcommand("mask", "Compute the feature robustness mask");
    auto* cmd_alc = app.add_subcommand("allocate", "Assign feature units to subchannels");
    cmd_alc->add_option("--csi", csi_path, "External CSI trace CSV (subchannel_index,snr_db)");
    auto* cmd_swp = app.add_subcommand("sweep", "Accuracy sweep over SNR and variance");
    auto* cmd_hsp = app.add_subcommand("halfsplit", "Robust/non-robust half analysis");

    CLI11_PARSE(app, argc, argv);

    try {
        const semcom::RunConfig cfg =
            resolve_config(config_path, seed_opt->count() > 0, seed_flag, out_dir, paper_scale);
        std::string artifact;
        if (cmd_gen->parsed()) {
            artifact = semcom::cmd_gen_data(cfg);
        } else if (cmd_trn->parsed()) {
            artifact = semcom::cmd_train(cfg);
        } else if (cmd_msk->parsed()) {
            artifact = semcom::cmd_mask(cfg);
        } else if (cmd_alc->parsed()) {
            artifact = semcom::cmd_allocate(
                cfg, csi_path.empty() ? std::nullopt : std::optional<std::string>(csi_path));
        } else if (cmd_swp->parsed()) {
            artifact = semcom::cmd_sweep(cfg);
        } else if (cmd_hsp->parsed()) {
            artifact = semcom::cmd_halfsplit(cfg);
        }
        std::cout << "wrote " << artifact << "\n";
        return 0;
    } catch (const semcom::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const semcom::artifact_error& e) {
        std::cerr << "artifact error: " << e.what() << "\n";
        return 2;
    } catch (const semcom::divergence_error& e) {
        std::cerr << "divergence error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
