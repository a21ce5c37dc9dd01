#include "gbl/pipeline.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace gbl;
namespace fs = std::filesystem;

namespace {

const char* const tiny_config = R"({
  "seed": 11,
  "mesh": {"cells": [3, 3, 3], "extent": [16.0, 16.0, 16.0]},
  "tensors": {"motility": 30.0, "diffusivity": 1.0e6},
  "initial_condition": {"sharpness": 2.4e-4, "amplitude": 2.0, "offset": -1.0, "nhat": 1.0},
  "simulation": {"dt": 0.5, "n_steps": 8, "epsilon": "auto", "workers": 2},
  "sampling": {"n_sets": 6, "n_test_sets": 2, "n_pod_sets": 2},
  "pod": {"ic": 0.99},
  "direct": {"hidden": [8], "epochs": 15},
  "inverse": {"hidden": [8], "epochs": 15, "gap_days": 2.0, "pairs_per_trajectory": 3},
  "predict": {"times": [0.0, 4.0]}
})";

fs::path fresh_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("gbl-test-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_text(const fs::path& path, const std::string& text)
{
    std::ofstream(path) << text;
    return path;
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Exit {
    int code;
    std::string err;
};

Exit run_cli(const std::string& args, const fs::path& dir)
{
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(GBL_ROM_EXE) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                            err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text(err)};
}

ErrorKind kind_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const PipelineError& e) {
        return e.kind;
    }
    return ErrorKind::Internal;
}

} // namespace

TEST_CASE("config parsing")
{
    const fs::path dir = fresh_dir("config");
    const auto base = nlohmann::json::parse(tiny_config);
    const RunConfig cfg = parse_run_config(base, dir);
    CHECK(cfg.seed == 11);
    CHECK(cfg.cells == std::array<int, 3>{3, 3, 3});
    CHECK(cfg.auto_epsilon);
    CHECK(cfg.gap_steps() == 4);
    CHECK(cfg.horizon() == 4.0);
    CHECK(cfg.predict_times == std::vector<double>{0.0, 4.0});
    CHECK(cfg.direct.seed != cfg.inverse.seed);
    CHECK(cfg.stage_seed("sample") == parse_run_config(base, dir).stage_seed("sample"));

    CliOverrides o;
    o.seed = 99;
    o.out_dir = dir / "elsewhere";
    const RunConfig over = parse_run_config(base, dir, o);
    CHECK(over.seed == 99);
    CHECK(over.out_dir == dir / "elsewhere");
    CHECK(over.stage_seed("sample") != cfg.stage_seed("sample"));

    auto bad = [&](const std::function<void(nlohmann::json&)>& edit) {
        nlohmann::json doc = base;
        edit(doc);
        return kind_of([&] { parse_run_config(doc, dir); });
    };
    CHECK(bad([](auto& d) { d["colour"] = 1; }) == ErrorKind::Config);
    CHECK(bad([](auto& d) { d["pod"]["icc"] = 0.9; }) == ErrorKind::Config);
    CHECK(bad([](auto& d) { d["pod"]["ic"] = 1.5; }) == ErrorKind::Config);
    CHECK(bad([](auto& d) { d["pod"]["inner_product"] = "sobolev"; }) == ErrorKind::Config);
    CHECK(bad([](auto& d) { d["simulation"]["dt"] = "half"; }) == ErrorKind::Config);
    CHECK(bad([](auto& d) { d["sampling"]["n_test_sets"] = 6; }) == ErrorKind::Config);
    CHECK(bad([](auto& d) { d["inverse"]["gap_days"] = 10.0; }) == ErrorKind::Config);
    CHECK(bad([](auto& d) { d["patient"]["delta"] = 2.0; }) == ErrorKind::Config);
    CHECK(bad([](auto& d) { d["mesh"]["file"] = "nowhere.txt"; }) == ErrorKind::Config);
    CHECK(kind_of([&] { load_run_config(dir / "absent.json"); }) == ErrorKind::Config);
    CHECK(kind_of([&] { load_run_config(write_text(dir / "broken.json", "{\"seed\": ")); }) == ErrorKind::Config);
}

TEST_CASE("exit codes")
{
    CHECK(exit_code(ErrorKind::Config) == 2);
    CHECK(exit_code(ErrorKind::MissingInput) == 3);
    CHECK(exit_code(ErrorKind::Numerical) == 4);
    CHECK(exit_code(ErrorKind::Io) == 5);
    CHECK(exit_code(ErrorKind::Internal) == 1);
}

TEST_CASE("pipeline on a tiny problem")
{
    const fs::path dir = fresh_dir("pipeline");
    const fs::path config = write_text(dir / "tiny.json", tiny_config);

    auto run_all = [&](const fs::path& out) {
        CliOverrides o;
        o.out_dir = out;
        const RunConfig cfg = load_run_config(config, o);
        const std::vector<std::string> argv{"gbl-rom"};
        CHECK_THROWS_AS(run_command("predict", cfg, argv), PipelineError);
        CHECK(kind_of([&] { run_command("predict", cfg, argv); }) == ErrorKind::MissingInput);
        CHECK(kind_of([&] { run_command("estimate", cfg, argv); }) == ErrorKind::MissingInput);
        CHECK(kind_of([&] { run_command("fly", cfg, argv); }) == ErrorKind::Config);

        run_command("generate-mesh", cfg, argv);
        CHECK(fs::exists(out / "mesh" / "mesh.txt"));
        const CommandResult sim = run_command("simulate", cfg, argv);
        CHECK(fs::exists(out / "simulate" / "diagnostics.csv"));
        run_command("build-pod", cfg, argv);
        run_command("train-direct", cfg, argv);
        run_command("predict", cfg, argv);
        run_command("train-inverse", cfg, argv);
        const CommandResult est = run_command("estimate", cfg, argv);
        CHECK(est.lines.size() >= 7);
        CHECK(est.lines[6].rfind("clipped ", 0) == 0);
        for (const char* stage : {"mesh", "simulate", "pod", "direct", "predict", "inverse", "estimate"}) {
            const fs::path manifest = out / stage / "manifest.json";
            REQUIRE(fs::exists(manifest));
            const auto doc = nlohmann::json::parse(read_text(manifest));
            CHECK(doc.contains("config_hash"));
            CHECK(doc.contains("wall_time_seconds"));
            CHECK(doc.contains("inputs"));
            CHECK(doc.contains("version"));
        }
        return cfg;
    };

    const RunConfig cfg = run_all(dir / "a");
    run_all(dir / "b");

    // Diagnostics: one row per step plus the initial state; first volume is that of phi0.
    const std::string diag = read_text(dir / "a" / "simulate" / "diagnostics.csv");
    CHECK(std::count(diag.begin(), diag.end(), '\n') == 1 + 9);
    const Problem p = build_problem(cfg);
    std::istringstream rows(diag);
    std::string header, first;
    std::getline(rows, header);
    std::getline(rows, first);
    const auto names = header;
    CHECK(names.find("tumor_volume") != std::string::npos);
    CHECK(first.find(',') != std::string::npos);
    {
        std::vector<std::string> cols, vals;
        std::stringstream hs(header), vs(first);
        for (std::string c; std::getline(hs, c, ',');)
            cols.push_back(c);
        for (std::string v; std::getline(vs, v, ',');)
            vals.push_back(v);
        const auto at = std::find(cols.begin(), cols.end(), "tumor_volume") - cols.begin();
        CHECK(std::stod(vals[std::size_t(at)]) == doctest::Approx(tumor_volume(p.phi0, p.ops)).epsilon(1e-10));
    }

    for (const char* csv : {"simulate/diagnostics.csv", "pod/summary.csv", "direct/loss.csv", "predict/volumes.csv",
                            "inverse/loss.csv", "estimate/estimate.csv"})
        CHECK_MESSAGE(read_text(dir / "a" / csv) == read_text(dir / "b" / csv), csv);

    // A different mesh invalidates the stored bases.
    CliOverrides o;
    o.out_dir = dir / "a";
    nlohmann::json doc = nlohmann::json::parse(tiny_config);
    doc["mesh"]["cells"] = {2, 2, 2};
    const RunConfig other = parse_run_config(doc, dir, o);
    CHECK(kind_of([&] { run_command("predict", other, {"gbl-rom"}); }) == ErrorKind::Config);
}

TEST_CASE("command-line errors are one line with a category")
{
    const fs::path dir = fresh_dir("cli");
    const fs::path config = write_text(dir / "tiny.json", tiny_config);
    const fs::path broken = write_text(dir / "broken.json", "{\"seed\": 1, \"typo\": 2}");

    Exit e = run_cli("predict --config " + config.string() + " --out " + (dir / "out").string(), dir);
    CHECK(e.code == 3);
    CHECK(e.err.rfind("error[missing-input]: ", 0) == 0);
    CHECK(std::count(e.err.begin(), e.err.end(), '\n') == 1);

    e = run_cli("simulate --config " + broken.string(), dir);
    CHECK(e.code == 2);
    CHECK(e.err.rfind("error[config]: ", 0) == 0);

    e = run_cli("simulate --config " + (dir / "absent.json").string(), dir);
    CHECK(e.code == 2);
    CHECK(e.err.rfind("error[", 0) == 0);

    e = run_cli("teleport --config " + config.string(), dir);
    CHECK(e.code == 2);

    e = run_cli("generate-mesh --config " + config.string() + " --out " + (dir / "ok").string(), dir);
    CHECK(e.code == 0);
    CHECK(fs::exists(dir / "ok" / "mesh" / "manifest.json"));
    const auto manifest = nlohmann::json::parse(read_text(dir / "ok" / "mesh" / "manifest.json"));
    CHECK(manifest["command"] == "generate-mesh");
}
