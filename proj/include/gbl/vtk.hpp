#pragma once

#include "gbl/mesh.hpp"

#include <filesystem>
#include <vector>

namespace gbl {

/// Legacy ASCII unstructured grid with one POINT_DATA scalar per field.
void write_vtk(const std::filesystem::path& path, const Mesh& mesh, const std::vector<NamedField>& fields);

} // namespace gbl
