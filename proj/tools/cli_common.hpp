#pragma once

#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "guidecap/manifest.hpp"

namespace gcap::cli {

// Shared per-command flags. --out falls back to $GUIDECAP_OUT_ROOT/<command>.
struct CommonArgs {
    std::string out;
    bool force = false;
    bool deterministic = false;
    int threads = 1;
    uint64_t seed = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_seed = true);

// Resolves the output directory, refuses to reuse a non-empty one without
// --force, and creates it.
std::filesystem::path prepare_out_dir(const std::string& out_flag, const std::string& command, bool force);

void manifest_add_input(RunManifest& m, const std::filesystem::path& out_dir, const std::filesystem::path& input);
void manifest_add_output(RunManifest& m, const std::filesystem::path& out_dir, const std::filesystem::path& output);

void add_synth_command(CLI::App& app);
void add_stats_command(CLI::App& app);
void add_train_command(CLI::App& app);
void add_sweep_command(CLI::App& app);
void add_decode_command(CLI::App& app);
void add_eval_command(CLI::App& app);

}  // namespace gcap::cli
