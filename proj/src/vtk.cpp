#include "gbl/vtk.hpp"

#include <fstream>
#include <iomanip>

namespace gbl {

void write_vtk(const std::filesystem::path& path, const Mesh& mesh, const std::vector<NamedField>& fields)
{
    for (const auto& f : fields) {
        if (f.values.size() != mesh.num_vertices())
            throw MeshError("field '" + f.name + "' does not match the mesh vertex count");
        if (f.name.empty() || f.name.find_first_of(" \t\n") != std::string::npos)
            throw MeshError("VTK field names must be non-empty single tokens");
    }
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw MeshError("cannot write " + path.string());
    out << std::setprecision(12);
    out << "# vtk DataFile Version 3.0\ngbl-rom\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << mesh.num_vertices() << " double\n";
    for (Index i = 0; i < mesh.num_vertices(); ++i) {
        const auto v = mesh.vertex(i);
        out << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    }
    const auto& tets = mesh.tets();
    out << "CELLS " << mesh.num_tets() << ' ' << 5 * mesh.num_tets() << '\n';
    for (Index t = 0; t < mesh.num_tets(); ++t)
        out << "4 " << tets(t, 0) << ' ' << tets(t, 1) << ' ' << tets(t, 2) << ' ' << tets(t, 3) << '\n';
    out << "CELL_TYPES " << mesh.num_tets() << '\n';
    for (Index t = 0; t < mesh.num_tets(); ++t)
        out << "10\n";
    if (!fields.empty())
        out << "POINT_DATA " << mesh.num_vertices() << '\n';
    for (const auto& f : fields) {
        out << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
        for (Index i = 0; i < f.values.size(); ++i)
            out << f.values[i] << '\n';
    }
    if (!out)
        throw MeshError("failed writing " + path.string());
}

} // namespace gbl
