#pragma once

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace gbl {

using Index = Eigen::Index;
using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Tets = Eigen::Matrix<int, Eigen::Dynamic, 4, Eigen::RowMajor>;
using Face = std::array<int, 3>;

/// One real per mesh vertex (phi, mu or nhat).
using NodalField = Eigen::VectorXd;

struct MeshError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Parse failure in one of the text formats; carries the 1-based line number.
struct FormatError : std::runtime_error {
    FormatError(const std::string& what, int line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
    int line;
};

/// Conforming tetrahedral mesh with P1 nodal layout. Coordinates are in mm.
///
/// Construction validates index ranges, orientation and conformity and derives
/// the boundary faces; the object is immutable afterwards.
class Mesh {
public:
    Mesh() = default;

    /// Throws MeshError on out-of-range indices, non-conforming faces or
    /// degenerate tets. Negatively oriented tets are an error unless
    /// `reorient` is set, in which case two vertices are swapped.
    Mesh(Vertices vertices, Tets tets, bool reorient = false);

    const Vertices& vertices() const { return vertices_; }
    const Tets& tets() const { return tets_; }
    const std::vector<Face>& boundary_faces() const { return boundary_faces_; }

    Index num_vertices() const { return vertices_.rows(); }
    Index num_tets() const { return tets_.rows(); }

    Eigen::Vector3d vertex(Index i) const { return vertices_.row(i).transpose(); }
    double tet_volume(Index t) const;
    double volume() const;

    /// Number of re-oriented tets during construction.
    int reoriented() const { return reoriented_; }

private:
    Vertices vertices_;
    Tets tets_;
    std::vector<Face> boundary_faces_;
    int reoriented_ = 0;
};

/// Signed volume of the tet (a, b, c, d).
double signed_volume(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                     const Eigen::Vector3d& c, const Eigen::Vector3d& d);

/// Structured box of nx*ny*nz hexahedra, each split into 6 tets (Kuhn).
Mesh build_box_mesh(int nx, int ny, int nz, const Eigen::Vector3d& extents,
                    const Eigen::Vector3d& origin = Eigen::Vector3d::Zero());

/// Mesh text format:
///   vertices N
///   x y z          (N lines)
///   tets M
///   i0 i1 i2 i3    (M lines, 0-based)
Mesh load_mesh(const std::filesystem::path& path, bool reorient = false);
Mesh parse_mesh(std::istream& in, bool reorient = false);
void save_mesh(const std::filesystem::path& path, const Mesh& mesh);
void write_mesh(std::ostream& out, const Mesh& mesh);

enum class TensorRole { Motility, Diffusivity };

std::string to_string(TensorRole role);
TensorRole tensor_role_from_string(const std::string& s);

/// Cell-wise constant symmetric positive semi-definite 3x3 tensors.
class TensorField {
public:
    TensorField() = default;

    /// Throws MeshError if a tensor is non-finite, asymmetric beyond 1e-12 or
    /// has an eigenvalue below -1e-12 * trace.
    TensorField(TensorRole role, std::vector<Eigen::Matrix3d> tensors);

    TensorRole role() const { return role_; }
    const std::vector<Eigen::Matrix3d>& tensors() const { return tensors_; }
    const Eigen::Matrix3d& operator[](Index t) const { return tensors_[static_cast<std::size_t>(t)]; }
    Index size() const { return static_cast<Index>(tensors_.size()); }

private:
    TensorRole role_ = TensorRole::Motility;
    std::vector<Eigen::Matrix3d> tensors_;
};

/// scalar * identity on every tet; scalar must be >= 0.
TensorField isotropic_field(const Mesh& mesh, double scalar, TensorRole role = TensorRole::Motility);

/// Tensor text format:
///   tensors M role
///   a11 a12 a13 a22 a23 a33   (M lines)
TensorField load_tensor_field(const std::filesystem::path& path, const Mesh& mesh, TensorRole role);
TensorField parse_tensor_field(std::istream& in, Index expected_rows, TensorRole role);
void save_tensor_field(const std::filesystem::path& path, const TensorField& field);
void write_tensor_field(std::ostream& out, const TensorField& field);

/// amplitude * exp(-sharpness * |v - center|^4) + offset at every vertex.
NodalField gaussian_bump(const Mesh& mesh, const Eigen::Vector3d& center, double sharpness,
                         double amplitude, double offset);

struct NamedField {
    std::string name;
    NodalField values;
};

/// Nodal-field text format:
///   field N name
///   value          (N lines)
NamedField load_nodal_field(const std::filesystem::path& path);
NamedField parse_nodal_field(std::istream& in);
void save_nodal_field(const std::filesystem::path& path, const std::string& name, const NodalField& values);
void write_nodal_field(std::ostream& out, const std::string& name, const NodalField& values);

} // namespace gbl
