// Command-line front end: summarize, fit, forecast, correlate, simulate, report.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "impact/impact.hpp"

namespace {

struct RunFlags {
    std::string config;
    std::vector<std::string> inputs;
    std::string out;
    std::vector<std::size_t> bins;
    bool holdout_last = false;
    std::optional<std::size_t> holdout_index;
    std::optional<std::size_t> shuffles;
    std::optional<std::uint64_t> seed;
    std::string model;
    std::string cls;
    std::optional<unsigned> threads;
    bool quiet = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config, "Flat key = value run configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--input", f.inputs, "Ledger CSV (repeatable; one file per asset)");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--bins", f.bins, "Number of equal-count bins M (repeatable)");
    cmd->add_flag("--holdout-last", f.holdout_last, "Hold out the last segment (default)");
    cmd->add_option("--holdout-index", f.holdout_index, "Hold out this 0-based segment instead");
    cmd->add_option("--shuffles", f.shuffles, "Shuffle replicates for the correlation test");
    cmd->add_option("--seed", f.seed, "Master seed");
    cmd->add_option("--model", f.model, "pl, lg or both")->check(CLI::IsMember({"pl", "lg", "both"}));
    cmd->add_option("--class", f.cls, "fb, fs or both")->check(CLI::IsMember({"fb", "fs", "both"}));
    cmd->add_option("--threads", f.threads, "Worker threads");
    cmd->add_flag("--quiet", f.quiet, "Do not print tables");
}

impact::RunConfig resolve(const RunFlags& f) {
    impact::RunConfig cfg;
    if (!f.config.empty()) cfg = impact::RunConfig::from_key_values(impact::csv::KeyValueFile::load(f.config));
    if (!f.inputs.empty()) cfg.inputs.assign(f.inputs.begin(), f.inputs.end());
    if (!f.out.empty()) cfg.out_dir = f.out;
    if (!f.bins.empty()) cfg.bins = f.bins;
    if (f.holdout_last) cfg.holdout_index.reset();
    if (f.holdout_index) cfg.holdout_index = *f.holdout_index;
    if (f.shuffles) cfg.shuffles = *f.shuffles;
    if (f.seed) cfg.seed = *f.seed;
    if (!f.model.empty()) cfg.kinds = impact::RunConfig::parse_models(f.model);
    if (!f.cls.empty()) cfg.classes = impact::RunConfig::parse_classes(f.cls);
    if (f.threads) cfg.threads = std::max(1u, *f.threads);
    if (f.quiet) cfg.print_tables = false;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Immediate price impact toolkit: power-law vs logarithmic impact models"};
    app.require_subcommand(1);

    RunFlags flags;
    auto* summarize = app.add_subcommand("summarize", "Per-class trade summary (count, mean impact, volumes)");
    auto* fit = app.add_subcommand("fit", "Per-segment PL/LG fits on binned impact curves");
    auto* forecast = app.add_subcommand("forecast", "Out-of-sample MSE comparison on the holdout segment");
    auto* correlate = app.add_subcommand("correlate", "FB/FS parameter correlation with a shuffle test");
    auto* report = app.add_subcommand("report", "Run summarize, fit, forecast and correlate");
    for (auto* cmd : {summarize, fit, forecast, correlate, report}) add_run_flags(cmd, flags);

    std::string gen_config;
    std::string gen_out = "ledger.csv";
    std::optional<std::uint64_t> gen_seed;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic ledger with a known impact law");
    simulate->add_option("--config", gen_config, "Generator configuration file")->check(CLI::ExistingFile);
    simulate->add_option("--out", gen_out, "Output ledger CSV path");
    simulate->add_option("--seed", gen_seed, "Seed (overrides the config file)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? impact::kExitOk : impact::kExitUsage;
    }

    try {
        if (simulate->parsed()) {
            auto g = gen_config.empty() ? impact::GenConfig{} : impact::GenConfig::load(gen_config);
            if (gen_seed) g.seed = *gen_seed;
            const auto ledger = impact::generate(g);
            impact::write_ledger_file(gen_out, ledger);
            std::cout << "wrote " << ledger.size() << " trades to " << gen_out << '\n';
            return impact::kExitOk;
        }
        const auto cfg = resolve(flags);
        if (summarize->parsed()) impact::cmd_summarize(cfg, std::cout);
        if (fit->parsed()) impact::cmd_fit(cfg, std::cout);
        if (forecast->parsed()) impact::cmd_forecast(cfg, std::cout);
        if (correlate->parsed()) impact::cmd_correlate(cfg, std::cout);
        if (report->parsed()) impact::cmd_report(cfg, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return impact::exit_code_for(e);
    }
    return impact::kExitOk;
}
