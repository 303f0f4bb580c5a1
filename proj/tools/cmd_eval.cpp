#include <fstream>
#include <iostream>
#include <map>

#include "cli_common.hpp"
#include "guidecap/decoding.hpp"
#include "guidecap/metrics.hpp"
#include "guidecap/tokenizer.hpp"

namespace gcap::cli {

namespace fs = std::filesystem;

namespace {

struct EvalArgs {
    CommonArgs common;
    std::string refs;
    std::vector<std::string> systems;    // name=decodes.jsonl
    std::vector<std::string> instances;  // name=instances.jsonl
};

std::pair<std::string, std::string> split_spec(const std::string& spec, const char* what) {
    const size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
        throw UsageError(std::string(what) + " must look like name=path, got \"" + spec + "\"");
    }
    return {spec.substr(0, eq), spec.substr(eq + 1)};
}

void run_eval(const EvalArgs& a) {
    if (a.systems.empty() && a.instances.empty()) {
        throw UsageError("eval: give at least one --system name=decodes.jsonl or --instances name=file.jsonl");
    }
    const fs::path out = prepare_out_dir(a.common.out, "eval", a.common.force);

    // Reference captions per (image, normalized guide).
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> refs;
    if (!a.refs.empty()) {
        for (const auto& t : load_tuples(a.refs)) {
            refs[{t.image_id, normalize_text(t.guiding_text)}].push_back(t.caption);
        }
    }

    RunManifest m;
    m.command = "eval";
    m.rng_seed = a.common.seed;
    m.deterministic = a.common.deterministic;
    if (!a.refs.empty()) manifest_add_input(m, out, a.refs);

    std::vector<std::pair<std::string, EvalReport>> reports;
    for (const auto& spec : a.systems) {
        const auto [name, path] = split_spec(spec, "--system");
        if (a.refs.empty()) throw UsageError("eval: --system requires --refs");
        std::vector<EvalInstance> instances;
        for (const auto& rec : load_decodes(path)) {
            const auto it = refs.find({rec.image_id, normalize_text(rec.guiding_text)});
            if (it == refs.end()) {
                throw DataError("eval: no reference for image " + rec.image_id + " guide \"" + rec.guiding_text +
                                "\"");
            }
            EvalInstance ins;
            ins.image_id = rec.image_id;
            ins.guiding_text = rec.guiding_text;
            ins.candidate = tokenize_words(rec.caption);
            if (ins.candidate.empty()) ins.candidate = {"<empty>"};
            for (const auto& c : it->second) ins.references.push_back(tokenize_words(c));
            instances.push_back(std::move(ins));
        }
        reports.emplace_back(name, evaluate(instances));
        manifest_add_input(m, out, path);
    }
    for (const auto& spec : a.instances) {
        const auto [name, path] = split_spec(spec, "--instances");
        const auto instances = load_instances(path);
        reports.emplace_back(name, evaluate(instances));
        manifest_add_input(m, out, path);
    }

    std::string csv = eval_report_csv_header();
    for (const auto& [name, rep] : reports) csv += eval_report_csv_row(name, rep);
    {
        std::ofstream os(out / "report.csv", std::ios::binary);
        os << csv;
    }
    const std::string md = eval_report_markdown(reports);
    {
        std::ofstream os(out / "report.md", std::ios::binary);
        os << md;
    }
    std::cout << md;

    manifest_add_output(m, out, out / "report.csv");
    manifest_add_output(m, out, out / "report.md");
    write_manifest(m, out);
}

}  // namespace

void add_eval_command(CLI::App& app) {
    auto args = std::make_shared<EvalArgs>();
    CLI::App* cmd = app.add_subcommand("eval", "Score one or more systems (CIDEr, ROUGE-L, METEOR, Div-n, presence)");
    add_common(cmd, args->common);
    cmd->add_option("--refs", args->refs, "Ground-truth tuple JSONL");
    cmd->add_option("--system", args->systems, "name=decodes.jsonl (repeatable)")->take_all();
    cmd->add_option("--instances", args->instances, "name=instances.jsonl with inline references (repeatable)")
        ->take_all();
    cmd->callback([args]() { run_eval(*args); });
}

}  // namespace gcap::cli
