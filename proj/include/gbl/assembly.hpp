#pragma once

#include "gbl/mesh.hpp"

#include <Eigen/Sparse>

namespace gbl {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// P1 finite-element operators on one mesh. All matrices are symmetric; the
/// stiffness matrices annihilate constants (homogeneous Neumann problem).
struct OperatorBundle {
    SparseMatrix mass;          ///< consistent mass (u, v)
    Eigen::VectorXd lumped;     ///< row sums of `mass`, the vertex quadrature weights
    SparseMatrix stiffness;     ///< (grad u, grad v)
    SparseMatrix stiffness_t;   ///< (T grad u, grad v)
    SparseMatrix stiffness_d;   ///< (D grad u, grad v)
    double volume = 0.0;

    Index size() const { return mass.rows(); }
};

/// Gradients of the four barycentric basis functions of tet `t` (rows).
Eigen::Matrix<double, 4, 3> p1_gradients(const Mesh& mesh, Index t);

/// Assembles the bundle. Throws MeshError when a field does not match the mesh.
OperatorBundle assemble_operators(const Mesh& mesh, const TensorField& motility, const TensorField& diffusivity);

/// Element-wise assembly of (A grad u, grad v) for an arbitrary tensor field.
SparseMatrix assemble_stiffness(const Mesh& mesh, const TensorField& tensors);
SparseMatrix assemble_mass(const Mesh& mesh);

} // namespace gbl
