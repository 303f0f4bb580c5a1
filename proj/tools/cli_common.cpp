#include "cli_common.hpp"

#include <cstdlib>

namespace gcap::cli {

namespace fs = std::filesystem;

void add_common(CLI::App* cmd, CommonArgs& args, bool with_seed) {
    cmd->add_option("--out", args.out, "Output directory (default: $GUIDECAP_OUT_ROOT/<command>)");
    cmd->add_flag("--force", args.force, "Allow writing into a non-empty output directory");
    cmd->add_flag("--deterministic", args.deterministic, "Single-threaded execution for golden runs");
    cmd->add_option("--threads", args.threads, "Worker threads for forward-only paths")->default_val(1);
    if (with_seed) cmd->add_option("--seed", args.seed, "RNG seed")->default_val(1);
    cmd->set_config("--config", "", "Read options from an INI/TOML file (flags override it)");
}

fs::path prepare_out_dir(const std::string& out_flag, const std::string& command, bool force) {
    fs::path dir;
    if (!out_flag.empty()) {
        dir = out_flag;
    } else if (const char* root = std::getenv("GUIDECAP_OUT_ROOT")) {
        dir = fs::path(root) / command;
    } else {
        throw UsageError("no --out given and GUIDECAP_OUT_ROOT is not set");
    }
    if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
        throw DataError("output directory " + dir.string() + " is not empty (use --force)");
    }
    fs::create_directories(dir);
    return dir;
}

void manifest_add_input(RunManifest& m, const fs::path& out_dir, const fs::path& input) {
    m.inputs.emplace_back(fs::relative(input, out_dir).string(), sha256_file(input));
}

void manifest_add_output(RunManifest& m, const fs::path& out_dir, const fs::path& output) {
    m.outputs.push_back(fs::relative(output, out_dir).string());
}

}  // namespace gcap::cli
