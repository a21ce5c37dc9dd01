#include "gbl/pipeline.hpp"
#include "gbl/vtk.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace gbl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log(const std::string& msg)
{
    static std::mutex m;
    std::lock_guard<std::mutex> lock(m);
    std::cerr << "gbl-rom: " << msg << '\n';
}

std::string fixed(double v, int digits)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::string general(double v)
{
    std::ostringstream os;
    os << std::setprecision(8) << v;
    return os.str();
}

std::ofstream open_csv(const fs::path& path)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw PipelineError(ErrorKind::Io, "cannot write " + path.string());
    out << std::setprecision(17);
    return out;
}

std::string step_name(const std::string& prefix, int j, const std::string& ext)
{
    std::ostringstream os;
    os << prefix << std::setw(4) << std::setfill('0') << j << ext;
    return os.str();
}

// Raw little-endian matrices of one trajectory.
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m)
{
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(m.data()), std::streamsize(sizeof(double) * m.size()));
}

Eigen::MatrixXd read_matrix(std::istream& in)
{
    std::int64_t dims[2] = {0, 0};
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in || dims[0] < 0 || dims[1] < 0 || dims[0] > (1 << 26) || dims[1] > (1 << 20))
        throw PipelineError(ErrorKind::Io, "corrupt trajectory file");
    Eigen::MatrixXd m(dims[0], dims[1]);
    in.read(reinterpret_cast<char*>(m.data()), std::streamsize(sizeof(double) * m.size()));
    if (!in)
        throw PipelineError(ErrorKind::Io, "truncated trajectory file");
    return m;
}

std::string dataset_key(const RunConfig& cfg, const Problem& problem)
{
    std::ostringstream os;
    os << std::setprecision(17) << version_string << '|' << cfg.seed << '|' << cfg.n_sets << '|'
       << problem.simulation.dt << '|' << problem.simulation.n_steps << '|' << problem.simulation.epsilon << '|'
       << problem.simulation.newton_tol << '|' << problem.simulation.newton_max_iter << '|'
       << problem.simulation.linear_tol << '|';
    for (int k = 0; k < ParameterSet::size; ++k)
        os << cfg.spec.ranges[k].min << ',' << cfg.spec.ranges[k].max << ',' << int(cfg.spec.modes[k]) << ';';
    auto mix = [&](const auto& m) {
        os << fnv1a(m.data(), sizeof(*m.data()) * std::size_t(m.size())) << '|';
    };
    mix(problem.mesh.vertices());
    mix(problem.mesh.tets());
    mix(problem.phi0);
    mix(problem.nhat0);
    for (const auto* field : {&problem.motility, &problem.diffusivity})
        for (const auto& t : field->tensors())
            mix(t);
    const std::string s = os.str();
    return hex64(fnv1a(s.data(), s.size()));
}

void write_params_csv(const fs::path& path, const std::vector<SimulationData>& runs)
{
    auto out = open_csv(path);
    out << "id,status,nu,m0,kappa,delta,delta_n,s_n\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto v = runs[i].params.to_vector();
        out << i << ',' << (runs[i].ok ? "ok" : "failed");
        for (int k = 0; k < ParameterSet::size; ++k)
            out << ',' << v[k];
        out << '\n';
    }
}

void save_dataset(const fs::path& dir, const std::string& key, const Dataset& data)
{
    fs::create_directories(dir);
    write_params_csv(dir / "params.csv", data.runs);
    auto vol = open_csv(dir / "volumes.csv");
    vol << "id,time,tumor_volume\n";
    for (std::size_t i = 0; i < data.runs.size(); ++i) {
        const auto& r = data.runs[i];
        for (std::size_t j = 0; j < r.volumes.size(); ++j)
            vol << i << ',' << r.times[j] << ',' << r.volumes[j] << '\n';
        std::ofstream bin(dir / step_name("traj_", int(i), ".bin"), std::ios::binary);
        const auto v = r.params.to_vector();
        bin.write(reinterpret_cast<const char*>(v.data()), sizeof(double) * ParameterSet::size);
        const char ok = r.ok ? 1 : 0;
        bin.write(&ok, 1);
        if (r.ok) {
            write_matrix(bin, r.phi);
            write_matrix(bin, r.mu);
            write_matrix(bin, r.nhat);
            write_matrix(bin, Eigen::Map<const Eigen::VectorXd>(r.times.data(), Index(r.times.size())));
            write_matrix(bin, Eigen::Map<const Eigen::VectorXd>(r.volumes.data(), Index(r.volumes.size())));
        } else {
            const std::uint64_t n = r.failure.size();
            bin.write(reinterpret_cast<const char*>(&n), sizeof n);
            bin.write(r.failure.data(), std::streamsize(n));
        }
        if (!bin)
            throw PipelineError(ErrorKind::Io, "failed writing the dataset cache");
    }
    // Written last so a partial cache is never mistaken for a complete one.
    std::ofstream(dir / "key.txt") << key << '\n' << data.runs.size() << '\n';
}

std::optional<Dataset> load_dataset(const fs::path& dir, const std::string& key)
{
    std::ifstream k(dir / "key.txt");
    std::string stored;
    std::size_t n = 0;
    if (!(k >> stored >> n) || stored != key)
        return std::nullopt;
    Dataset data;
    for (std::size_t i = 0; i < n; ++i) {
        std::ifstream bin(dir / step_name("traj_", int(i), ".bin"), std::ios::binary);
        if (!bin)
            return std::nullopt;
        SimulationData r;
        Eigen::Matrix<double, ParameterSet::size, 1> v;
        bin.read(reinterpret_cast<char*>(v.data()), sizeof(double) * ParameterSet::size);
        r.params = ParameterSet::from_vector(v);
        char ok = 0;
        bin.read(&ok, 1);
        r.ok = ok == 1;
        if (r.ok) {
            r.phi = read_matrix(bin);
            r.mu = read_matrix(bin);
            r.nhat = read_matrix(bin);
            const Eigen::VectorXd t = read_matrix(bin);
            const Eigen::VectorXd vol = read_matrix(bin);
            r.times.assign(t.data(), t.data() + t.size());
            r.volumes.assign(vol.data(), vol.data() + vol.size());
        } else {
            std::uint64_t len = 0;
            bin.read(reinterpret_cast<char*>(&len), sizeof len);
            if (len > 4096)
                return std::nullopt;
            r.failure.resize(len);
            bin.read(r.failure.data(), std::streamsize(len));
        }
        if (!bin)
            return std::nullopt;
        data.runs.push_back(std::move(r));
    }
    return data;
}

fs::path stage_dir(const RunConfig& cfg, const std::string& stage)
{
    return cfg.out_dir / stage;
}

SimulationData simulate_one(const Problem& problem, const ParameterSet& params)
{
    SimulationData out;
    out.params = params;
    try {
        const State s0 = initial_state(problem.phi0, problem.nhat0, params, problem.simulation, problem.ops);
        const Trajectory traj = run(s0, params, problem.simulation, problem.ops, 1);
        const Index n = problem.ops.size(), cols = Index(traj.states.size());
        out.phi.resize(n, cols);
        out.mu.resize(n, cols);
        out.nhat.resize(n, cols);
        for (Index j = 0; j < cols; ++j) {
            out.phi.col(j) = traj.states[j].phi;
            out.mu.col(j) = traj.states[j].mu;
            out.nhat.col(j) = traj.states[j].nhat;
            out.times.push_back(traj.states[j].time);
        }
        for (const auto& r : traj.reports)
            out.volumes.push_back(r.tumor_volume);
        out.ok = out.phi.allFinite() && out.mu.allFinite() && out.nhat.allFinite();
        if (!out.ok)
            out.failure = "non-finite state";
    } catch (const SolverError& e) {
        out.ok = false;
        out.failure = e.what();
    }
    if (!out.ok) {
        out.phi.resize(0, 0);
        out.mu.resize(0, 0);
        out.nhat.resize(0, 0);
        out.times.clear();
        out.volumes.clear();
    }
    return out;
}

void assign_split(TrainingSet& set, const SetSplit& split)
{
    std::vector<char> held;
    for (int id : split.test) {
        if (id >= int(held.size()))
            held.resize(id + 1, 0);
        held[id] = 1;
    }
    set.train.clear();
    set.test.clear();
    for (Index j = 0; j < set.rows(); ++j) {
        const int g = set.groups[j];
        (g < int(held.size()) && held[g] ? set.test : set.train).push_back(j);
    }
}

// TrainingSet groups are dataset run ids, not record positions.
void relabel_groups(TrainingSet& set, const std::vector<int>& ids)
{
    for (auto& g : set.groups)
        g = ids[std::size_t(g)];
}

void save_field_and_vtk(const fs::path& dir, const std::string& stem, const Mesh& mesh,
                        const std::vector<NamedField>& fields)
{
    for (const auto& f : fields)
        save_nodal_field(dir / (stem + "_" + f.name + ".txt"), f.name, f.values);
    write_vtk(dir / (stem + ".vtk"), mesh, fields);
}

} // namespace

std::vector<int> Dataset::usable() const
{
    std::vector<int> ids;
    for (std::size_t i = 0; i < runs.size(); ++i)
        if (runs[i].ok)
            ids.push_back(int(i));
    return ids;
}

std::vector<SimulationData> simulate_many(const Problem& problem, const std::vector<ParameterSet>& sets, int workers)
{
    std::vector<SimulationData> out(sets.size());
    if (workers <= 0)
        workers = int(std::max(1u, std::thread::hardware_concurrency()));
    workers = std::min<int>(workers, int(std::max<std::size_t>(1, sets.size())));
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    auto work = [&] {
        for (std::size_t i = next++; i < sets.size(); i = next++) {
            out[i] = simulate_one(problem, sets[i]);
            const std::size_t d = ++done;
            if (!out[i].ok)
                log("set " + std::to_string(i) + " failed: " + out[i].failure);
            if (d % 10 == 0 || d == sets.size())
                log("simulated " + std::to_string(d) + "/" + std::to_string(sets.size()) + " parameter sets");
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back(work);
        for (auto& t : pool)
            t.join();
    }
    return out;
}

Dataset load_or_build_dataset(const RunConfig& cfg, const Problem& problem)
{
    const fs::path dir = stage_dir(cfg, "dataset");
    const std::string key = dataset_key(cfg, problem);
    if (auto cached = load_dataset(dir, key)) {
        log("reusing dataset cache in " + dir.string());
        return std::move(*cached);
    }
    log("simulating " + std::to_string(cfg.n_sets) + " sampled parameter sets");
    Dataset data;
    data.runs = simulate_many(problem, sample_parameters(cfg.n_sets, cfg.spec, cfg.stage_seed("sample")), cfg.workers);
    save_dataset(dir, key, data);
    return data;
}

std::vector<TrajectoryRecord> project_dataset(const Dataset& data, const std::vector<int>& ids,
                                              const ReducedBasis& phi_basis)
{
    std::vector<TrajectoryRecord> out;
    for (int id : ids) {
        const auto& r = data.runs.at(std::size_t(id));
        if (!r.ok)
            throw PipelineError(ErrorKind::Internal, "projecting a failed run");
        out.push_back({r.params, r.times, project(r.phi, phi_basis), r.volumes});
    }
    return out;
}

SetSplit split_sets(const RunConfig& cfg, const Dataset& data)
{
    std::vector<int> ids = data.usable();
    if (int(ids.size()) <= cfg.n_test_sets + 1)
        throw PipelineError(ErrorKind::Numerical, "too few successful FOM runs (" + std::to_string(ids.size()) +
                                                      ") for the requested split");
    std::uint64_t state = cfg.stage_seed("split");
    const int n = int(ids.size());
    for (int k = 0; k < cfg.n_test_sets; ++k) {
        const int pick = std::min(n - 1, k + int(uniform01(state) * double(n - k)));
        std::swap(ids[k], ids[pick]);
    }
    SetSplit s;
    s.test.assign(ids.begin(), ids.begin() + cfg.n_test_sets);
    s.train.assign(ids.begin() + cfg.n_test_sets, ids.end());
    std::sort(s.test.begin(), s.test.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

Eigen::MatrixXd pod_snapshot_matrix(const RunConfig& cfg, const Dataset& data, Variable v)
{
    const SetSplit split = split_sets(cfg, data);
    if (int(split.train.size()) < cfg.n_pod_sets)
        throw PipelineError(ErrorKind::Numerical, "not enough successful training runs for the POD");
    auto pick = [v](const SimulationData& r) -> const Eigen::MatrixXd& {
        return v == Variable::Phi ? r.phi : (v == Variable::Mu ? r.mu : r.nhat);
    };
    Index cols = 0;
    for (int k = 0; k < cfg.n_pod_sets; ++k)
        cols += pick(data.runs[std::size_t(split.train[std::size_t(k)])]).cols();
    Eigen::MatrixXd all(pick(data.runs[std::size_t(split.train[0])]).rows(), cols);
    Index c = 0;
    for (int k = 0; k < cfg.n_pod_sets; ++k) {
        const auto& m = pick(data.runs[std::size_t(split.train[std::size_t(k)])]);
        all.middleCols(c, m.cols()) = m;
        c += m.cols();
    }
    return all;
}

TrainingSet make_direct_set(const RunConfig& cfg, const Dataset& data, const ReducedBasis& phi_basis)
{
    const std::vector<int> ids = data.usable();
    TrainingSet set = build_direct_dataset(project_dataset(data, ids, phi_basis), cfg.spec, cfg.horizon());
    relabel_groups(set, ids);
    assign_split(set, split_sets(cfg, data));
    return set;
}

TrainingSet make_inverse_set(const RunConfig& cfg, const Dataset& data, const ReducedBasis& phi_basis)
{
    const std::vector<int> ids = data.usable();
    InversePairOptions po;
    po.gap_steps = cfg.gap_steps();
    po.pairs_per_trajectory = cfg.pairs_per_trajectory;
    po.seed = cfg.stage_seed("inverse-pairs");
    TrainingSet set = build_inverse_dataset(project_dataset(data, ids, phi_basis), cfg.spec, po);
    relabel_groups(set, ids);
    assign_split(set, split_sets(cfg, data));
    return set;
}

PodBases build_bases(const RunConfig& cfg, const Problem& problem, const Dataset& data)
{
    const SetSplit split = split_sets(cfg, data);
    if (int(split.train.size()) < cfg.n_pod_sets)
        throw PipelineError(ErrorKind::Numerical, "not enough successful training runs for the POD");
    std::array<std::vector<SnapshotSet>, 3> snaps;
    for (int k = 0; k < cfg.n_pod_sets; ++k) {
        const int id = split.train[std::size_t(k)];
        const auto& r = data.runs[std::size_t(id)];
        snaps[0].push_back({Variable::Phi, id, r.phi});
        snaps[1].push_back({Variable::Mu, id, r.mu});
        snaps[2].push_back({Variable::Nhat, id, r.nhat});
    }
    try {
        return two_stage_pod(snaps, cfg.pod, problem.ops.mass);
    } catch (const PodError& e) {
        throw PipelineError(ErrorKind::Numerical, e.what());
    }
}

void save_bases(const fs::path& dir, const PodBases& bases)
{
    for (const auto& b : bases.bases)
        save_basis(dir / to_string(b.variable), b);
}

PodBases load_bases(const fs::path& dir, const OperatorBundle& ops, InnerProduct mode)
{
    const InnerProductSpace ip = mode == InnerProduct::Mass ? InnerProductSpace::mass(ops.mass)
                                                            : InnerProductSpace::euclidean();
    PodBases out;
    for (auto v : {Variable::Phi, Variable::Mu, Variable::Nhat}) {
        const fs::path d = require_artifact(dir / to_string(v) / "meta", "build-pod").parent_path();
        try {
            out[v] = load_basis(d, ip);
        } catch (const std::exception& e) {
            throw PipelineError(ErrorKind::Io, e.what());
        }
        if (out[v].dimension() != ops.size())
            throw PipelineError(ErrorKind::Config, "basis in " + d.string() + " does not match the mesh");
    }
    out.n_pod = out[Variable::Phi].size();
    for (std::size_t k = 0; k < 3; ++k) {
        if (out.bases[k].size() != out.n_pod)
            throw PipelineError(ErrorKind::Io, "stored bases disagree on N_POD");
        out.natural_sizes[k] = out.n_pod;
    }
    return out;
}

void write_diagnostics_csv(const fs::path& path, const std::vector<EnergyReport>& reports)
{
    auto out = open_csv(path);
    out << "time,free_energy,total_mass,tumor_volume\n";
    for (const auto& r : reports)
        out << r.time << ',' << r.free_energy << ',' << r.total_mass << ',' << r.tumor_volume << '\n';
}

bool Metric::pass() const
{
    if (comparison == "info")
        return true;
    if (!std::isfinite(value))
        return false;
    return comparison == "<=" ? value <= threshold : value >= threshold;
}

CommandResult cmd_generate_mesh(const RunConfig& cfg)
{
    const Problem p = build_problem(cfg);
    CommandResult res{stage_dir(cfg, "mesh"), {}, {}};
    save_mesh(res.out_dir / "mesh.txt", p.mesh);
    save_tensor_field(res.out_dir / "motility.txt", p.motility);
    save_tensor_field(res.out_dir / "diffusivity.txt", p.diffusivity);
    save_nodal_field(res.out_dir / "phi0.txt", "phi", p.phi0);
    save_nodal_field(res.out_dir / "nhat0.txt", "nhat", p.nhat0);
    write_vtk(res.out_dir / "mesh.vtk", p.mesh, {{"phi", p.phi0}, {"nhat", p.nhat0}});
    res.lines.push_back("vertices " + std::to_string(p.mesh.num_vertices()));
    res.lines.push_back("tets " + std::to_string(p.mesh.num_tets()));
    res.lines.push_back("volume " + general(p.mesh.volume()));
    res.lines.push_back("epsilon " + general(p.simulation.epsilon));
    return res;
}

CommandResult cmd_simulate(const RunConfig& cfg)
{
    const Problem p = build_problem(cfg);
    CommandResult res{stage_dir(cfg, "simulate"), {}, {}};
    const State s0 = initial_state(p.phi0, p.nhat0, cfg.patient, p.simulation, p.ops);
    Trajectory traj;
    try {
        traj = run(s0, cfg.patient, p.simulation, p.ops, 1);
    } catch (const SolverError& e) {
        throw PipelineError(ErrorKind::Numerical, e.what());
    }
    write_diagnostics_csv(res.out_dir / "diagnostics.csv", traj.reports);
    {
        auto out = open_csv(res.out_dir / "newton.csv");
        out << "step,newton_iterations\n";
        for (std::size_t j = 0; j < traj.newton_iterations.size(); ++j)
            out << j + 1 << ',' << traj.newton_iterations[j] << '\n';
    }
    for (std::size_t j = 0; j < traj.states.size(); ++j) {
        const auto& s = traj.states[j];
        save_field_and_vtk(res.out_dir / "states", step_name("state_", int(j), ""), p.mesh,
                           {{"phi", s.phi}, {"mu", s.mu}, {"nhat", s.nhat}});
    }
    res.lines.push_back("recorded_states " + std::to_string(traj.states.size()));
    res.lines.push_back("initial_tumor_volume " + general(traj.reports.front().tumor_volume));
    res.lines.push_back("final_tumor_volume " + general(traj.reports.back().tumor_volume));
    return res;
}

CommandResult cmd_build_pod(const RunConfig& cfg)
{
    const Problem p = build_problem(cfg);
    CommandResult res{stage_dir(cfg, "pod"), {}, {}};
    const Dataset data = load_or_build_dataset(cfg, p);
    const PodBases bases = build_bases(cfg, p, data);
    save_bases(res.out_dir, bases);
    const InnerProductSpace ip = cfg.pod.inner_product == InnerProduct::Mass ? InnerProductSpace::mass(p.ops.mass)
                                                                             : InnerProductSpace::euclidean();
    auto out = open_csv(res.out_dir / "summary.csv");
    out << "variable,natural_size,n_pod,stage2_retained_ratio,captured_energy\n";
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& b = bases.bases[k];
        const Eigen::MatrixXd all = pod_snapshot_matrix(cfg, data, b.variable);
        const double captured = captured_energy(b, all, ip);
        out << to_string(b.variable) << ',' << bases.natural_sizes[k] << ',' << b.size() << ',' << b.retained_ratio
            << ',' << captured << '\n';
        res.lines.push_back(to_string(b.variable) + " natural_size " + std::to_string(bases.natural_sizes[k]) +
                            " captured_energy " + fixed(captured, 6));
    }
    res.lines.push_back("n_pod " + std::to_string(bases.n_pod));
    res.lines.push_back("usable_runs " + std::to_string(data.usable().size()) + "/" + std::to_string(data.runs.size()));
    return res;
}

CommandResult cmd_train_direct(const RunConfig& cfg)
{
    const Problem p = build_problem(cfg);
    CommandResult res{stage_dir(cfg, "direct"), {}, {}};
    require_artifact(stage_dir(cfg, "dataset") / "key.txt", "build-pod");
    res.inputs.push_back(stage_dir(cfg, "pod") / "phi" / "meta");
    const PodBases bases = load_bases(stage_dir(cfg, "pod"), p.ops, cfg.pod.inner_product);
    const Dataset data = load_or_build_dataset(cfg, p);
    const TrainingSet set = make_direct_set(cfg, data, bases[Variable::Phi]);
    log("training direct network on " + std::to_string(set.train.size()) + " rows (" +
        std::to_string(set.test.size()) + " held out)");
    const TrainResult tr = train_direct(set, cfg.spec, cfg.horizon(), bases[Variable::Phi], cfg.direct);
    save_surrogate(res.out_dir / "network.txt", tr.surrogate);
    save_loss_csv(res.out_dir / "loss.csv", tr.curve);
    if (tr.fallbacks > 0)
        log("warning: line search fell back to steepest descent " + std::to_string(tr.fallbacks) + " times");
    res.lines.push_back("rows_train " + std::to_string(set.train.size()));
    res.lines.push_back("rows_test " + std::to_string(set.test.size()));
    res.lines.push_back("final_train_mse " + general(tr.curve.back().train_mse));
    res.lines.push_back("final_test_mse " + general(tr.curve.back().test_mse));
    return res;
}

CommandResult cmd_predict(const RunConfig& cfg)
{
    const Problem p = build_problem(cfg);
    CommandResult res{stage_dir(cfg, "predict"), {}, {}};
    const fs::path net_path = require_artifact(stage_dir(cfg, "direct") / "network.txt", "train-direct");
    res.inputs.push_back(net_path);
    const PodBases bases = load_bases(stage_dir(cfg, "pod"), p.ops, cfg.pod.inner_product);
    const Surrogate net = load_surrogate(net_path);
    const ParameterSet params = cfg.predict_params.value_or(cfg.patient);
    bool clipped = false;
    normalize_params(params, net.spec, cfg.strict_ranges, &clipped);
    if (clipped)
        log("warning: prediction parameters lie outside the trained ranges and were clipped");
    auto csv = open_csv(res.out_dir / "volumes.csv");
    csv << "time,tumor_volume\n";
    for (double t : cfg.predict_times) {
        const NodalField phi = predict_direct(net, params, t, bases[Variable::Phi], cfg.strict_ranges);
        const double vol = tumor_volume(phi, p.ops);
        csv << t << ',' << vol << '\n';
        save_field_and_vtk(res.out_dir, "phi_t" + fixed(t, 3), p.mesh, {{"phi", phi}});
        res.lines.push_back("t " + fixed(t, 3) + " tumor_volume " + general(vol));
    }
    return res;
}

CommandResult cmd_train_inverse(const RunConfig& cfg)
{
    const Problem p = build_problem(cfg);
    CommandResult res{stage_dir(cfg, "inverse"), {}, {}};
    require_artifact(stage_dir(cfg, "dataset") / "key.txt", "build-pod");
    res.inputs.push_back(stage_dir(cfg, "pod") / "phi" / "meta");
    const PodBases bases = load_bases(stage_dir(cfg, "pod"), p.ops, cfg.pod.inner_product);
    const Dataset data = load_or_build_dataset(cfg, p);
    const TrainingSet set = make_inverse_set(cfg, data, bases[Variable::Phi]);
    log("training inverse network on " + std::to_string(set.train.size()) + " pairs (" +
        std::to_string(set.test.size()) + " held out)");
    const TrainResult tr = train_inverse(set, cfg.spec, cfg.gap_steps(), bases[Variable::Phi], cfg.inverse);
    save_surrogate(res.out_dir / "network.txt", tr.surrogate);
    save_loss_csv(res.out_dir / "loss.csv", tr.curve);
    if (tr.fallbacks > 0)
        log("warning: line search fell back to steepest descent " + std::to_string(tr.fallbacks) + " times");
    res.lines.push_back("pairs_train " + std::to_string(set.train.size()));
    res.lines.push_back("pairs_test " + std::to_string(set.test.size()));
    res.lines.push_back("final_train_mse " + general(tr.curve.back().train_mse));
    res.lines.push_back("final_test_mse " + general(tr.curve.back().test_mse));
    return res;
}

CommandResult cmd_estimate(const RunConfig& cfg)
{
    const Problem p = build_problem(cfg);
    CommandResult res{stage_dir(cfg, "estimate"), {}, {}};
    const fs::path net_path = require_artifact(stage_dir(cfg, "inverse") / "network.txt", "train-inverse");
    res.inputs.push_back(net_path);
    const PodBases bases = load_bases(stage_dir(cfg, "pod"), p.ops, cfg.pod.inner_product);
    const Surrogate net = load_surrogate(net_path);

    NodalField phi_t0, phi_t1;
    std::optional<ParameterSet> truth;
    if (cfg.observation_t0) {
        res.inputs.push_back(*cfg.observation_t0);
        res.inputs.push_back(*cfg.observation_t1);
        phi_t0 = load_nodal_field(*cfg.observation_t0).values;
        phi_t1 = load_nodal_field(*cfg.observation_t1).values;
    } else {
        // Bundled synthetic patient: the configured patient observed at t = 0 and t = gap.
        SimulationConfig sim = p.simulation;
        sim.n_steps = net.gap_steps;
        const State s0 = initial_state(p.phi0, p.nhat0, cfg.patient, sim, p.ops);
        Trajectory traj;
        try {
            traj = run(s0, cfg.patient, sim, p.ops, net.gap_steps);
        } catch (const SolverError& e) {
            throw PipelineError(ErrorKind::Numerical, e.what());
        }
        phi_t0 = traj.states.front().phi;
        phi_t1 = traj.states.back().phi;
        truth = cfg.patient;
        save_nodal_field(res.out_dir / "observation_t0.txt", "phi", phi_t0);
        save_nodal_field(res.out_dir / "observation_t1.txt", "phi", phi_t1);
    }
    if (phi_t0.size() != p.mesh.num_vertices() || phi_t1.size() != p.mesh.num_vertices())
        throw PipelineError(ErrorKind::Config, "observations do not match the mesh");
    const EstimateResult est = estimate_parameters(net, phi_t0, phi_t1, bases[Variable::Phi]);
    if (est.clipped)
        log("warning: estimate clipped to the normalization ranges");

    auto csv = open_csv(res.out_dir / "estimate.csv");
    csv << "parameter,estimate,normalized,raw_normalized" << (truth ? ",truth,truth_normalized" : "") << '\n';
    const auto v = est.params.to_vector();
    Eigen::VectorXd tz;
    if (truth)
        tz = normalize_params(*truth, net.spec, false);
    for (int k = 0; k < ParameterSet::size; ++k) {
        csv << ParameterSet::names[k] << ',' << v[k] << ',' << est.normalized[k] << ',' << est.raw[k];
        if (truth)
            csv << ',' << truth->to_vector()[k] << ',' << tz[k];
        csv << '\n';
        res.lines.push_back(std::string(ParameterSet::names[k]) + " " + general(v[k]));
    }
    res.lines.push_back(std::string("clipped ") + (est.clipped ? "true" : "false"));
    if (truth)
        res.lines.push_back("mean_normalized_error " + fixed((est.normalized - tz).cwiseAbs().mean(), 6));
    return res;
}

namespace {

json manifest_json(const std::string& name, const RunConfig& cfg, const std::vector<std::string>& argv,
                   const CommandResult& res, double seconds)
{
    json m;
    m["command"] = name;
    m["version"] = version_string;
    std::string line;
    for (const auto& a : argv)
        line += (line.empty() ? "" : " ") + a;
    m["command_line"] = line;
    m["config_path"] = cfg.config_path.string();
    m["config_hash"] = cfg.config_hash;
    m["seed"] = cfg.seed;
    m["strict_ranges"] = cfg.strict_ranges;
    m["out_dir"] = cfg.out_dir.string();
    json inputs = json::object();
    if (!cfg.config_path.empty())
        inputs[cfg.config_path.string()] = hash_file(cfg.config_path);
    for (const auto& p : {cfg.mesh_file, cfg.motility_file, cfg.diffusivity_file, cfg.phi0_file, cfg.nhat0_file})
        if (p)
            inputs[p->string()] = hash_file(*p);
    for (const auto& p : res.inputs)
        if (fs::exists(p))
            inputs[p.string()] = hash_file(p);
    m["inputs"] = inputs;
    m["wall_time_seconds"] = seconds;
    m["result"] = res.lines;
    return m;
}

} // namespace

CommandResult run_command(const std::string& name, const RunConfig& cfg, const std::vector<std::string>& argv)
{
    using Fn = CommandResult (*)(const RunConfig&);
    static const std::vector<std::pair<std::string, Fn>> table{
        {"generate-mesh", cmd_generate_mesh}, {"simulate", cmd_simulate},       {"build-pod", cmd_build_pod},
        {"train-direct", cmd_train_direct},   {"predict", cmd_predict},         {"train-inverse", cmd_train_inverse},
        {"estimate", cmd_estimate},           {"reproduce", cmd_reproduce},
    };
    const auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == name; });
    if (it == table.end())
        throw PipelineError(ErrorKind::Config, "unknown command '" + name + "'");
    const auto start = std::chrono::steady_clock::now();
    CommandResult res;
    try {
        res = it->second(cfg);
    } catch (const PipelineError&) {
        throw;
    } catch (const ParameterError& e) {
        throw PipelineError(ErrorKind::Config, e.what());
    } catch (const SolverError& e) {
        throw PipelineError(ErrorKind::Numerical, e.what());
    } catch (const PodError& e) {
        throw PipelineError(ErrorKind::Numerical, e.what());
    } catch (const SurrogateError& e) {
        throw PipelineError(ErrorKind::Io, e.what());
    } catch (const FormatError& e) {
        throw PipelineError(ErrorKind::Io, e.what());
    } catch (const fs::filesystem_error& e) {
        throw PipelineError(ErrorKind::Io, e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fs::create_directories(res.out_dir);
    std::ofstream(res.out_dir / "manifest.json") << manifest_json(name, cfg, argv, res, seconds).dump(2) << '\n';
    return res;
}

} // namespace gbl
