#include "gbl/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

// One line, no embedded newlines, so callers can parse it.
int report_error(const std::string& kind, const std::string& what, int code)
{
    std::string msg = what;
    for (char& c : msg)
        if (c == '\n' || c == '\r')
            c = ' ';
    std::cerr << "error[" << kind << "]: " << msg << '\n';
    return code;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Glioblastoma growth FOM, POD reduced models and neural surrogates"};
    app.require_subcommand(1);

    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool strict = false;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"generate-mesh", "write the mesh, tensor fields and initial condition"},
        {"simulate", "run the full-order model for the configured patient"},
        {"build-pod", "simulate the sampled sets (cached) and build the two-stage POD bases"},
        {"train-direct", "train the parameters+time -> coefficients network"},
        {"predict", "evaluate the direct network and reconstruct phi"},
        {"train-inverse", "train the two observations -> parameters network"},
        {"estimate", "estimate patient parameters from two phi observations"},
        {"reproduce", "run every stage and report the acceptance metrics"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override the root seed");
        sub->add_option("--out", out, "output directory");
        sub->add_flag("--strict-ranges", strict, "reject parameters outside the biological ranges");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", e.what(), 2);
    }

    const std::string name = app.get_subcommands().front()->get_name();
    std::vector<std::string> args(argv, argv + argc);
    try {
        gbl::CliOverrides overrides;
        overrides.seed = seed;
        if (!out.empty())
            overrides.out_dir = out;
        overrides.strict_ranges = strict;
        const gbl::RunConfig cfg = gbl::load_run_config(config, overrides);
        const gbl::CommandResult res = gbl::run_command(name, cfg, args);
        for (const auto& line : res.lines)
            std::cout << line << '\n';
        std::cout << "output " << res.out_dir.string() << '\n';
    } catch (const gbl::PipelineError& e) {
        return report_error(gbl::to_string(e.kind), e.what(), gbl::exit_code(e.kind));
    } catch (const std::exception& e) {
        return report_error("internal", e.what(), 1);
    }
    return 0;
}
