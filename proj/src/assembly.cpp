#include "gbl/assembly.hpp"

#include <vector>

namespace gbl {

Eigen::Matrix<double, 4, 3> p1_gradients(const Mesh& mesh, Index t)
{
    const auto& tet = mesh.tets();
    const Eigen::Vector3d x0 = mesh.vertex(tet(t, 0));
    Eigen::Matrix3d jac;
    jac.col(0) = mesh.vertex(tet(t, 1)) - x0;
    jac.col(1) = mesh.vertex(tet(t, 2)) - x0;
    jac.col(2) = mesh.vertex(tet(t, 3)) - x0;
    if (std::abs(jac.determinant()) <= 0.0)
        throw MeshError("degenerate tet " + std::to_string(t));

    // Rows of J^{-1} are the gradients of lambda_1..lambda_3.
    Eigen::Matrix<double, 4, 3> grads;
    grads.bottomRows<3>() = jac.inverse();
    grads.row(0) = -grads.bottomRows<3>().colwise().sum();
    return grads;
}

SparseMatrix assemble_stiffness(const Mesh& mesh, const TensorField& tensors)
{
    if (tensors.size() != mesh.num_tets())
        throw MeshError("tensor field has " + std::to_string(tensors.size()) + " entries for " +
                        std::to_string(mesh.num_tets()) + " tets");
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(16 * mesh.num_tets()));
    for (Index t = 0; t < mesh.num_tets(); ++t) {
        const auto grads = p1_gradients(mesh, t);
        const Eigen::Matrix4d ke = mesh.tet_volume(t) * grads * tensors[t] * grads.transpose();
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                triplets.emplace_back(mesh.tets()(t, a), mesh.tets()(t, b), ke(a, b));
    }
    SparseMatrix k(mesh.num_vertices(), mesh.num_vertices());
    k.setFromTriplets(triplets.begin(), triplets.end());
    return k;
}

SparseMatrix assemble_mass(const Mesh& mesh)
{
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(16 * mesh.num_tets()));
    for (Index t = 0; t < mesh.num_tets(); ++t) {
        const double vol = mesh.tet_volume(t);
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                triplets.emplace_back(mesh.tets()(t, a), mesh.tets()(t, b), vol / 20.0 * (a == b ? 2.0 : 1.0));
    }
    SparseMatrix m(mesh.num_vertices(), mesh.num_vertices());
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

OperatorBundle assemble_operators(const Mesh& mesh, const TensorField& motility, const TensorField& diffusivity)
{
    OperatorBundle ops;
    ops.mass = assemble_mass(mesh);
    ops.lumped = ops.mass * Eigen::VectorXd::Ones(mesh.num_vertices());
    ops.stiffness = assemble_stiffness(mesh, isotropic_field(mesh, 1.0));
    ops.stiffness_t = assemble_stiffness(mesh, motility);
    ops.stiffness_d = assemble_stiffness(mesh, diffusivity);
    ops.volume = mesh.volume();
    return ops;
}

} // namespace gbl
