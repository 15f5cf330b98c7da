#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mgfd/scenario_io.hpp"

using namespace mgfd;
using namespace mgfd::scenario;

namespace {

struct RunFlags {
    std::optional<std::uint64_t> seed;
    std::optional<int> runs;
    std::string out;
    bool no_plots = false;
    unsigned threads = 0;
};

void apply(ScenarioConfig& cfg, const RunFlags& f) {
    if (f.seed) cfg.seed = *f.seed;
    if (f.runs) cfg.monte_carlo = *f.runs;
    if (!f.out.empty()) cfg.output_dir = f.out;
}

int fail_validation(const std::vector<std::string>& issues) {
    for (const auto& s : issues) std::cerr << "invalid: " << s << '\n';
    return 2;
}

int execute(ScenarioConfig cfg, const RunFlags& f) {
    apply(cfg, f);
    if (auto issues = validate(cfg); !issues.empty()) return fail_validation(issues);
    const auto t0 = std::chrono::steady_clock::now();
    const auto designs = design_all(cfg.grid, cfg.diagnosis, cfg.ts);
    const WriteOptions wo{!f.no_plots};
    write_designs(cfg.output_dir, designs);
    if (cfg.monte_carlo <= 1) {
        const auto run = run_once(cfg, designs);
        write_run(cfg.output_dir, cfg, designs, run, wo);
    } else {
        const std::string first = (std::filesystem::path(cfg.output_dir) / "run0").string();
        const auto mc = monte_carlo(cfg, designs, cfg.monte_carlo, f.threads, [&](int r, const RunResult& res) {
            if (r == 0) write_run(first, cfg, designs, res, wo);
        });
        write_monte_carlo(cfg.output_dir, cfg, designs, mc, wo);
        for (const auto& s : mc.failures) std::cerr << "run failed: " << s << '\n';
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s: wrote %s (hash %s, seed %llu, %d run%s, %.1f s)\n", cfg.name.c_str(), cfg.output_dir.c_str(),
                config_hash(cfg).c_str(), static_cast<unsigned long long>(cfg.seed), cfg.monte_carlo,
                cfg.monte_carlo == 1 ? "" : "s", secs);
    return 0;
}

void add_run_flags(CLI::App* app, RunFlags& f) {
    app->add_option("--seed", f.seed, "RNG seed");
    app->add_option("--monte-carlo", f.runs, "number of noise realizations")->check(CLI::PositiveNumber);
    app->add_option("--out", f.out, "output directory");
    app->add_flag("--no-plots", f.no_plots, "skip gnuplot scripts");
    app->add_option("--threads", f.threads, "worker threads for Monte Carlo (0 = all cores)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fault diagnosis for DC microgrids"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    RunFlags rf;
    std::string run_path;
    auto* run = app.add_subcommand("run", "simulate and diagnose a scenario config");
    run->add_option("config", run_path, "scenario JSON")->required()->check(CLI::ExistingFile);
    add_run_flags(run, rf);

    std::string val_path;
    auto* val = app.add_subcommand("validate", "check a scenario config without running it");
    val->add_option("config", val_path, "scenario JSON")->required()->check(CLI::ExistingFile);

    std::string syn_path, syn_out = "out/designs";
    auto* syn = app.add_subcommand("synthesize", "synthesize the residual filters and write their coefficients");
    syn->add_option("config", syn_path, "scenario JSON (default: case1)")->check(CLI::ExistingFile);
    syn->add_option("--out", syn_out, "output directory");

    RunFlags pf;
    std::string which;
    auto* rep = app.add_subcommand("reproduce", "run a bundled scenario");
    rep->add_option("case", which, "bundled scenario")->required()->check(CLI::IsMember(preset_names()));
    add_run_flags(rep, pf);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return execute(load_config(run_path), rf);
        if (*rep) return execute(preset(which), pf);
        if (*val) {
            const auto cfg = load_config(val_path);
            const auto issues = validate(cfg);
            if (!issues.empty()) return fail_validation(issues);
            std::printf("%s: ok (hash %s)\n", cfg.name.c_str(), config_hash(cfg).c_str());
            return 0;
        }
        if (*syn) {
            const auto cfg = syn_path.empty() ? preset("case1") : load_config(syn_path);
            if (auto issues = validate(cfg); !issues.empty()) return fail_validation(issues);
            const auto designs = design_all(cfg.grid, cfg.diagnosis, cfg.ts);
            write_designs(syn_out, designs);
            for (const auto& d : designs)
                std::printf("DG%d: gamma_a %.6g  gamma_l %.6g  n_upsilon %d\n", d.dg + 1, d.actuator.gamma,
                            d.line.gamma, static_cast<int>(d.kit.n_upsilon));
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::ConfigError ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
