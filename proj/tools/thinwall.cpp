// Command-line front end: one scenario per invocation.

#include "thinwall/scenario.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

int exit_code_for(const thinwall::Error& e) {
    using thinwall::ErrorKind;
    switch (e.kind()) {
        case ErrorKind::Config:
        case ErrorKind::InvalidArgument:
        case ErrorKind::Io: return 2;
        case ErrorKind::NotConverged: return 3;
        default: return 4;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Thin-wall quantum mechanics on curved surfaces"};
    app.set_version_flag("--version", std::string(thinwall::kVersion));
    app.require_subcommand(1);

    std::string config, preset_name, out;
    int threads = 1;
    std::optional<std::uint64_t> seed;

    using Runner = thinwall::RunOutcome (*)(const thinwall::Scenario&, const thinwall::RunContext&);
    const std::vector<std::pair<std::string, Runner>> commands = {
        {"geometry", thinwall::run_geometry},         {"spectrum", thinwall::run_spectrum},
        {"compare", thinwall::run_compare},           {"separability", thinwall::run_separability},
        {"gauge-check", thinwall::run_gauge_check},   {"xi-check", thinwall::run_xi_check},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [name, _] : commands) {
        auto* sub = app.add_subcommand(name);
        auto* c = sub->add_option("--config", config, "scenario JSON or a previous manifest.json");
        auto* p = sub->add_option("--preset", preset_name, "built-in scenario AC1..AC8");
        c->excludes(p);
        sub->add_option("--out", out, "output directory (default: scenario 'output')");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "solver start-vector seed");
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    std::size_t which = 0;
    while (!subs[which]->parsed()) ++which;
    try {
        if (config.empty() == preset_name.empty()) {
            throw thinwall::Error(thinwall::ErrorKind::Config, "give exactly one of --config or --preset");
        }
        thinwall::Scenario scn = config.empty() ? thinwall::preset(preset_name) : thinwall::load_scenario(config);
        if (seed) scn.solver.seed = *seed;
        Eigen::setNbThreads(threads);

        thinwall::RunContext ctx;
        ctx.out = out.empty() ? scn.output : out;
        ctx.threads = threads;
        for (int i = 0; i < argc; ++i) ctx.command += (i ? " " : "") + std::string(argv[i]);

        const auto outcome = commands[which].second(scn, ctx);
        for (const auto& f : outcome.files) std::cout << (ctx.out / f).string() << "\n";
        if (outcome.exit_code == 3) std::cerr << "thinwall: eigensolver did not converge; results flagged\n";
        return outcome.exit_code;
    } catch (const thinwall::Error& e) {
        std::cerr << "thinwall: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "thinwall: Config: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "thinwall: Io: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "thinwall: " << e.what() << "\n";
        return 4;
    }
}
