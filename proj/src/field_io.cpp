#include "gbl/mesh.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace gbl {

namespace {

// Reads non-blank lines and keeps track of the 1-based line number.
class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    std::istringstream next(const char* expecting)
    {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_;
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                return std::istringstream(line);
        }
        throw FormatError(std::string("unexpected end of file, expected ") + expecting, line_ + 1);
    }

    int line() const { return line_; }

private:
    std::istream& in_;
    int line_ = 0;
};

void expect_end(std::istringstream& ss, int line)
{
    std::string rest;
    if (ss >> rest)
        throw FormatError("unexpected trailing token '" + rest + "'", line);
}

Index read_header(LineReader& reader, const std::string& keyword, std::string* name = nullptr)
{
    auto ss = reader.next(keyword.c_str());
    std::string key;
    long long count = -1;
    if (!(ss >> key) || key != keyword || !(ss >> count) || count < 0)
        throw FormatError("expected '" + keyword + " <count>'", reader.line());
    if (name) {
        if (!(ss >> *name))
            throw FormatError("expected a name after '" + keyword + " <count>'", reader.line());
    }
    expect_end(ss, reader.line());
    return static_cast<Index>(count);
}

std::ofstream open_out(const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << std::setprecision(17);
    return out;
}

std::ifstream open_in(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open '" + path.string() + "'");
    return in;
}

} // namespace

Mesh parse_mesh(std::istream& in, bool reorient)
{
    LineReader reader(in);
    const Index nv = read_header(reader, "vertices");
    Vertices vertices(nv, 3);
    for (Index i = 0; i < nv; ++i) {
        auto ss = reader.next("vertex coordinates");
        double x, y, z;
        if (!(ss >> x >> y >> z))
            throw FormatError("expected three vertex coordinates", reader.line());
        expect_end(ss, reader.line());
        vertices.row(i) << x, y, z;
    }
    const Index nt = read_header(reader, "tets");
    Tets tets(nt, 4);
    for (Index t = 0; t < nt; ++t) {
        auto ss = reader.next("tet indices");
        long long ids[4];
        if (!(ss >> ids[0] >> ids[1] >> ids[2] >> ids[3]))
            throw FormatError("expected four vertex indices", reader.line());
        expect_end(ss, reader.line());
        for (int k = 0; k < 4; ++k) {
            if (ids[k] < 0 || ids[k] >= nv)
                throw FormatError("vertex index " + std::to_string(ids[k]) + " out of range [0, " +
                                      std::to_string(nv) + ")",
                                  reader.line());
            tets(t, k) = static_cast<int>(ids[k]);
        }
    }
    return Mesh(std::move(vertices), std::move(tets), reorient);
}

Mesh load_mesh(const std::filesystem::path& path, bool reorient)
{
    auto in = open_in(path);
    return parse_mesh(in, reorient);
}

void write_mesh(std::ostream& out, const Mesh& mesh)
{
    out << std::setprecision(17);
    out << "vertices " << mesh.num_vertices() << '\n';
    for (Index i = 0; i < mesh.num_vertices(); ++i)
        out << mesh.vertices()(i, 0) << ' ' << mesh.vertices()(i, 1) << ' ' << mesh.vertices()(i, 2) << '\n';
    out << "tets " << mesh.num_tets() << '\n';
    for (Index t = 0; t < mesh.num_tets(); ++t)
        out << mesh.tets()(t, 0) << ' ' << mesh.tets()(t, 1) << ' ' << mesh.tets()(t, 2) << ' '
            << mesh.tets()(t, 3) << '\n';
}

void save_mesh(const std::filesystem::path& path, const Mesh& mesh)
{
    auto out = open_out(path);
    write_mesh(out, mesh);
}

TensorField parse_tensor_field(std::istream& in, Index expected_rows, TensorRole role)
{
    LineReader reader(in);
    std::string role_name;
    const Index rows = read_header(reader, "tensors", &role_name);
    if (rows != expected_rows)
        throw FormatError("tensor count " + std::to_string(rows) + " does not match tet count " +
                              std::to_string(expected_rows),
                          reader.line());
    if (tensor_role_from_string(role_name) != role)
        throw FormatError("tensor role '" + role_name + "' does not match requested role '" + to_string(role) + "'",
                          reader.line());

    std::vector<Eigen::Matrix3d> tensors;
    tensors.reserve(static_cast<std::size_t>(rows));
    for (Index t = 0; t < rows; ++t) {
        auto ss = reader.next("tensor components");
        double a[6];
        for (double& x : a)
            if (!(ss >> x))
                throw FormatError("expected six tensor components", reader.line());
        expect_end(ss, reader.line());
        for (double x : a)
            if (!std::isfinite(x))
                throw FormatError("non-finite tensor component", reader.line());
        Eigen::Matrix3d m;
        m << a[0], a[1], a[2], a[1], a[3], a[4], a[2], a[4], a[5];
        tensors.push_back(m);
    }
    try {
        return TensorField(role, std::move(tensors));
    } catch (const MeshError& e) {
        throw FormatError(e.what(), reader.line());
    }
}

TensorField load_tensor_field(const std::filesystem::path& path, const Mesh& mesh, TensorRole role)
{
    auto in = open_in(path);
    return parse_tensor_field(in, mesh.num_tets(), role);
}

void write_tensor_field(std::ostream& out, const TensorField& field)
{
    out << std::setprecision(17);
    out << "tensors " << field.size() << ' ' << to_string(field.role()) << '\n';
    for (const auto& a : field.tensors())
        out << a(0, 0) << ' ' << a(0, 1) << ' ' << a(0, 2) << ' ' << a(1, 1) << ' ' << a(1, 2) << ' ' << a(2, 2)
            << '\n';
}

void save_tensor_field(const std::filesystem::path& path, const TensorField& field)
{
    auto out = open_out(path);
    write_tensor_field(out, field);
}

NamedField parse_nodal_field(std::istream& in)
{
    LineReader reader(in);
    NamedField field;
    const Index n = read_header(reader, "field", &field.name);
    field.values.resize(n);
    for (Index i = 0; i < n; ++i) {
        auto ss = reader.next("field value");
        if (!(ss >> field.values[i]))
            throw FormatError("expected a field value", reader.line());
        expect_end(ss, reader.line());
        if (!std::isfinite(field.values[i]))
            throw FormatError("non-finite field value", reader.line());
    }
    return field;
}

NamedField load_nodal_field(const std::filesystem::path& path)
{
    auto in = open_in(path);
    return parse_nodal_field(in);
}

void write_nodal_field(std::ostream& out, const std::string& name, const NodalField& values)
{
    out << std::setprecision(17);
    out << "field " << values.size() << ' ' << name << '\n';
    for (Index i = 0; i < values.size(); ++i)
        out << values[i] << '\n';
}

void save_nodal_field(const std::filesystem::path& path, const std::string& name, const NodalField& values)
{
    auto out = open_out(path);
    write_nodal_field(out, name, values);
}

} // namespace gbl
