#include "gbl/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace gbl {

using nlohmann::json;

const char* const version_string = "gbl-rom 0.1.0";

std::string to_string(ErrorKind k)
{
    switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::MissingInput: return "missing-input";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::Io: return "io";
    case ErrorKind::Internal: break;
    }
    return "internal";
}

int exit_code(ErrorKind k)
{
    switch (k) {
    case ErrorKind::Config: return 2;
    case ErrorKind::MissingInput: return 3;
    case ErrorKind::Numerical: return 4;
    case ErrorKind::Io: return 5;
    case ErrorKind::Internal: break;
    }
    return 1;
}

std::string hex64(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << v;
    return os.str();
}

std::string hash_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw PipelineError(ErrorKind::Io, "cannot read " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (in) {
        in.read(buf, sizeof buf);
        h = fnv1a(buf, std::size_t(in.gcount()), h);
    }
    return hex64(h);
}

std::filesystem::path require_artifact(const std::filesystem::path& path, const std::string& producer)
{
    if (!std::filesystem::exists(path))
        throw PipelineError(ErrorKind::MissingInput,
                            "missing " + path.string() + " (run '" + producer + "' first)");
    return path;
}

int RunConfig::gap_steps() const
{
    return int(std::lround(gap_days / simulation.dt));
}

std::uint64_t RunConfig::stage_seed(const std::string& stage) const
{
    std::uint64_t h = fnv1a(&seed, sizeof seed);
    return fnv1a(stage.data(), stage.size(), h);
}

void RunConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw PipelineError(ErrorKind::Config, msg); };
    try {
        simulation.validate();
        gbl::validate(patient, strict_ranges);
        if (predict_params)
            gbl::validate(*predict_params, strict_ranges);
        spec.validate();
    } catch (const PipelineError&) {
        throw;
    } catch (const std::exception& e) {
        fail(e.what());
    }
    for (const auto& p : {mesh_file, motility_file, diffusivity_file, phi0_file, nhat0_file, observation_t0,
                          observation_t1})
        if (p && !std::filesystem::exists(*p))
            fail("referenced file does not exist: " + p->string());
    if (observation_t0.has_value() != observation_t1.has_value())
        fail("estimate needs both phi_t0 and phi_t1");
    for (int c : cells)
        if (c < 1)
            fail("mesh.cells entries must be positive");
    if (!(extent.array() > 0.0).all())
        fail("mesh.extent entries must be positive");
    if (!(motility >= 0.0) || !(diffusivity >= 0.0))
        fail("tensor scalars must be non-negative");
    if (!(bump_sharpness >= 0.0) || !std::isfinite(bump_amplitude) || !std::isfinite(bump_offset) ||
        !std::isfinite(nhat0))
        fail("initial_condition values must be finite");
    if (workers < 0)
        fail("simulation.workers must be >= 0");
    if (n_sets < 2)
        fail("sampling.n_sets must be at least 2");
    if (n_test_sets < 1 || n_test_sets >= n_sets)
        fail("sampling.n_test_sets must lie in [1, n_sets)");
    if (n_pod_sets < 1 || n_pod_sets > n_sets - n_test_sets)
        fail("sampling.n_pod_sets must lie in [1, n_sets - n_test_sets]");
    if (!(pod.ic > 0.0 && pod.ic <= 1.0))
        fail("pod.ic must lie in (0, 1]");
    for (const auto* t : {&direct, &inverse}) {
        if (t->epochs < 0 || t->history < 1 || !(t->slope >= 0.0))
            fail("training blocks need epochs >= 0, history >= 1 and slope >= 0");
        for (Index h : t->hidden)
            if (h < 1)
                fail("hidden layer widths must be positive");
    }
    if (!(gap_days > 0.0) || std::abs(gap_days / simulation.dt - gap_steps()) > 1e-9)
        fail("inverse.gap_days must be a positive multiple of simulation.dt");
    if (gap_steps() > simulation.n_steps)
        fail("inverse.gap_days exceeds the simulated horizon");
    if (pairs_per_trajectory < 1)
        fail("inverse.pairs_per_trajectory must be positive");
    for (double t : predict_times)
        if (!(t >= 0.0 && t <= horizon()))
            fail("predict.times must lie in [0, horizon]");
}

namespace {

struct Reader {
    const json& obj;
    std::string section;

    void allow(std::initializer_list<const char*> keys) const
    {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (!ok.count(it.key()))
                throw PipelineError(ErrorKind::Config, "unknown key '" + qualified(it.key()) + "'");
    }

    std::string qualified(const std::string& key) const { return section.empty() ? key : section + "." + key; }

    bool has(const char* key) const { return obj.contains(key) && !obj.at(key).is_null(); }

    template <class T>
    void read(const char* key, T& out) const
    {
        if (!has(key))
            return;
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception&) {
            throw PipelineError(ErrorKind::Config, "wrong type for '" + qualified(key) + "'");
        }
    }

    void read_vec3(const char* key, Eigen::Vector3d& out) const
    {
        if (!has(key))
            return;
        std::vector<double> v;
        read(key, v);
        if (v.size() != 3)
            throw PipelineError(ErrorKind::Config, "'" + qualified(key) + "' needs 3 entries");
        out = Eigen::Vector3d(v[0], v[1], v[2]);
    }

    void read_path(const char* key, std::optional<std::filesystem::path>& out, const std::filesystem::path& base) const
    {
        if (!has(key))
            return;
        std::string s;
        read(key, s);
        std::filesystem::path p(s);
        out = p.is_absolute() ? p : base / p;
    }

    Reader sub(const char* key) const
    {
        static const json empty = json::object();
        if (!has(key))
            return {empty, qualified(key)};
        if (!obj.at(key).is_object())
            throw PipelineError(ErrorKind::Config, "'" + qualified(key) + "' must be an object");
        return {obj.at(key), qualified(key)};
    }
};

ParameterSet read_params(const Reader& r, ParameterSet p)
{
    r.allow({"nu", "m0", "kappa", "delta", "delta_n", "s_n"});
    r.read("nu", p.nu);
    r.read("m0", p.m0);
    r.read("kappa", p.kappa);
    r.read("delta", p.delta);
    r.read("delta_n", p.delta_n);
    r.read("s_n", p.s_n);
    return p;
}

void read_training(const Reader& r, TrainOptions& t, bool inverse, double* gap_days, int* pairs)
{
    if (inverse)
        r.allow({"hidden", "epochs", "history", "slope", "gap_days", "pairs_per_trajectory"});
    else
        r.allow({"hidden", "epochs", "history", "slope"});
    std::vector<long> hidden;
    if (r.has("hidden")) {
        r.read("hidden", hidden);
        t.hidden.assign(hidden.begin(), hidden.end());
    }
    r.read("epochs", t.epochs);
    r.read("history", t.history);
    r.read("slope", t.slope);
    if (inverse) {
        r.read("gap_days", *gap_days);
        r.read("pairs_per_trajectory", *pairs);
    }
}

} // namespace

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir, const CliOverrides& overrides)
{
    if (!doc.is_object())
        throw PipelineError(ErrorKind::Config, "config root must be an object");
    RunConfig cfg;
    cfg.inverse.hidden = {64, 64};
    cfg.config_hash = hex64(fnv1a(doc.dump().data(), doc.dump().size()));

    const Reader root{doc, ""};
    root.allow({"output", "seed", "mesh", "tensors", "initial_condition", "simulation", "patient", "sampling", "pod",
                "direct", "inverse", "predict", "estimate"});
    std::string out = "gbl-out";
    root.read("output", out);
    cfg.out_dir = out;
    root.read("seed", cfg.seed);

    const Reader mesh = root.sub("mesh");
    mesh.allow({"file", "cells", "extent", "origin"});
    mesh.read_path("file", cfg.mesh_file, base_dir);
    mesh.read("cells", cfg.cells);
    mesh.read_vec3("extent", cfg.extent);
    mesh.read_vec3("origin", cfg.origin);

    const Reader tensors = root.sub("tensors");
    tensors.allow({"motility", "diffusivity", "motility_file", "diffusivity_file"});
    tensors.read("motility", cfg.motility);
    tensors.read("diffusivity", cfg.diffusivity);
    tensors.read_path("motility_file", cfg.motility_file, base_dir);
    tensors.read_path("diffusivity_file", cfg.diffusivity_file, base_dir);

    const Reader ic = root.sub("initial_condition");
    ic.allow({"phi_file", "nhat_file", "center", "sharpness", "amplitude", "offset", "nhat"});
    ic.read_path("phi_file", cfg.phi0_file, base_dir);
    ic.read_path("nhat_file", cfg.nhat0_file, base_dir);
    ic.read_vec3("center", cfg.bump_center);
    ic.read("sharpness", cfg.bump_sharpness);
    ic.read("amplitude", cfg.bump_amplitude);
    ic.read("offset", cfg.bump_offset);
    ic.read("nhat", cfg.nhat0);

    const Reader sim = root.sub("simulation");
    sim.allow({"dt", "n_steps", "epsilon", "newton_tol", "newton_max_iter", "linear_tol", "workers"});
    sim.read("dt", cfg.simulation.dt);
    sim.read("n_steps", cfg.simulation.n_steps);
    if (sim.has("epsilon") && !(sim.obj.at("epsilon").is_string() && sim.obj.at("epsilon") == "auto")) {
        sim.read("epsilon", cfg.simulation.epsilon);
        cfg.auto_epsilon = false;
    }
    sim.read("newton_tol", cfg.simulation.newton_tol);
    sim.read("newton_max_iter", cfg.simulation.newton_max_iter);
    sim.read("linear_tol", cfg.simulation.linear_tol);
    sim.read("workers", cfg.workers);

    cfg.patient = read_params(root.sub("patient"), reference_patient());

    const Reader sampling = root.sub("sampling");
    sampling.allow({"n_sets", "n_test_sets", "n_pod_sets"});
    sampling.read("n_sets", cfg.n_sets);
    sampling.read("n_test_sets", cfg.n_test_sets);
    sampling.read("n_pod_sets", cfg.n_pod_sets);

    const Reader pod = root.sub("pod");
    pod.allow({"ic", "inner_product", "weighted_stage2"});
    pod.read("ic", cfg.pod.ic);
    if (pod.has("inner_product")) {
        std::string s;
        pod.read("inner_product", s);
        try {
            cfg.pod.inner_product = inner_product_from_string(s);
        } catch (const std::exception& e) {
            throw PipelineError(ErrorKind::Config, e.what());
        }
    }
    pod.read("weighted_stage2", cfg.pod.weighted_stage2);

    read_training(root.sub("direct"), cfg.direct, false, nullptr, nullptr);
    read_training(root.sub("inverse"), cfg.inverse, true, &cfg.gap_days, &cfg.pairs_per_trajectory);

    const Reader predict = root.sub("predict");
    predict.allow({"params", "times"});
    if (predict.has("params"))
        cfg.predict_params = read_params(predict.sub("params"), cfg.patient);
    predict.read("times", cfg.predict_times);

    const Reader estimate = root.sub("estimate");
    estimate.allow({"phi_t0", "phi_t1"});
    estimate.read_path("phi_t0", cfg.observation_t0, base_dir);
    estimate.read_path("phi_t1", cfg.observation_t1, base_dir);

    if (overrides.seed)
        cfg.seed = *overrides.seed;
    if (overrides.out_dir)
        cfg.out_dir = *overrides.out_dir;
    cfg.strict_ranges = overrides.strict_ranges;
    if (cfg.predict_times.empty())
        cfg.predict_times = {cfg.horizon()};
    cfg.direct.seed = cfg.stage_seed("direct-init");
    cfg.inverse.seed = cfg.stage_seed("inverse-init");
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const CliOverrides& overrides)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw PipelineError(ErrorKind::Config, "cannot read config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    json doc;
    try {
        doc = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw PipelineError(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg = parse_run_config(doc, path.parent_path().empty() ? "." : path.parent_path(), overrides);
    cfg.config_path = path;
    cfg.config_hash = hash_file(path);
    return cfg;
}

Problem build_problem(const RunConfig& cfg)
{
    Problem p;
    try {
        if (cfg.mesh_file)
            p.mesh = load_mesh(*cfg.mesh_file, true);
        else
            p.mesh = build_box_mesh(cfg.cells[0], cfg.cells[1], cfg.cells[2], cfg.extent, cfg.origin);
        p.motility = cfg.motility_file ? load_tensor_field(*cfg.motility_file, p.mesh, TensorRole::Motility)
                                       : isotropic_field(p.mesh, cfg.motility, TensorRole::Motility);
        p.diffusivity = cfg.diffusivity_file
                            ? load_tensor_field(*cfg.diffusivity_file, p.mesh, TensorRole::Diffusivity)
                            : isotropic_field(p.mesh, cfg.diffusivity, TensorRole::Diffusivity);
        p.phi0 = cfg.phi0_file ? load_nodal_field(*cfg.phi0_file).values
                               : gaussian_bump(p.mesh, cfg.bump_center, cfg.bump_sharpness, cfg.bump_amplitude,
                                               cfg.bump_offset);
        p.nhat0 = cfg.nhat0_file ? load_nodal_field(*cfg.nhat0_file).values
                                 : NodalField::Constant(p.mesh.num_vertices(), cfg.nhat0);
    } catch (const FormatError& e) {
        throw PipelineError(ErrorKind::Config, std::string(e.what()));
    } catch (const MeshError& e) {
        throw PipelineError(ErrorKind::Config, std::string(e.what()));
    }
    if (p.phi0.size() != p.mesh.num_vertices() || p.nhat0.size() != p.mesh.num_vertices())
        throw PipelineError(ErrorKind::Config, "initial fields do not match the mesh vertex count");
    p.ops = assemble_operators(p.mesh, p.motility, p.diffusivity);
    p.simulation = cfg.simulation;
    if (cfg.auto_epsilon) {
        const double cell = std::cbrt(6.0 * p.mesh.volume() / double(p.mesh.num_tets()));
        const double kappa_ref = std::sqrt(biological_ranges[2].min * biological_ranges[2].max);
        p.simulation.epsilon = default_epsilon(cell, kappa_ref);
    }
    return p;
}

} // namespace gbl
