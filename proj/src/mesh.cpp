#include "gbl/mesh.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>

namespace gbl {

double signed_volume(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                     const Eigen::Vector3d& c, const Eigen::Vector3d& d)
{
    return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

Mesh::Mesh(Vertices vertices, Tets tets, bool reorient)
    : vertices_(std::move(vertices)), tets_(std::move(tets))
{
    const Index nv = vertices_.rows();
    if (!vertices_.allFinite())
        throw MeshError("mesh has non-finite vertex coordinates");

    for (Index t = 0; t < tets_.rows(); ++t) {
        for (int k = 0; k < 4; ++k) {
            const int v = tets_(t, k);
            if (v < 0 || v >= nv)
                throw MeshError("tet " + std::to_string(t) + " references vertex " + std::to_string(v) +
                                " of " + std::to_string(nv));
        }
        double vol = tet_volume(t);
        // Zero volume relative to the tet's own scale.
        const double scale = (vertex(tets_(t, 1)) - vertex(tets_(t, 0))).norm() +
                             (vertex(tets_(t, 2)) - vertex(tets_(t, 0))).norm() +
                             (vertex(tets_(t, 3)) - vertex(tets_(t, 0))).norm();
        if (std::abs(vol) <= 1e-14 * scale * scale * scale)
            throw MeshError("tet " + std::to_string(t) + " is degenerate");
        if (vol < 0) {
            if (!reorient)
                throw MeshError("tet " + std::to_string(t) + " has negative volume");
            std::swap(tets_(t, 2), tets_(t, 3));
            ++reoriented_;
        }
    }

    // Faces of a positively oriented tet, outward normals.
    static constexpr int local_faces[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
    std::map<Face, std::pair<int, Face>> faces;
    for (Index t = 0; t < tets_.rows(); ++t) {
        for (const auto& lf : local_faces) {
            Face oriented{tets_(t, lf[0]), tets_(t, lf[1]), tets_(t, lf[2])};
            Face key = oriented;
            std::sort(key.begin(), key.end());
            auto [it, inserted] = faces.try_emplace(key, 0, oriented);
            if (++it->second.first > 2)
                throw MeshError("face shared by more than two tets (non-conforming mesh)");
        }
    }
    for (const auto& [key, entry] : faces)
        if (entry.first == 1)
            boundary_faces_.push_back(entry.second);
}

double Mesh::tet_volume(Index t) const
{
    return signed_volume(vertex(tets_(t, 0)), vertex(tets_(t, 1)), vertex(tets_(t, 2)), vertex(tets_(t, 3)));
}

double Mesh::volume() const
{
    double v = 0.0;
    for (Index t = 0; t < num_tets(); ++t)
        v += tet_volume(t);
    return v;
}

Mesh build_box_mesh(int nx, int ny, int nz, const Eigen::Vector3d& extents, const Eigen::Vector3d& origin)
{
    if (nx < 1 || ny < 1 || nz < 1)
        throw MeshError("box mesh subdivision counts must be >= 1");
    if (!(extents.array() > 0.0).all() || !extents.allFinite())
        throw MeshError("box mesh extents must be positive");
    if (!origin.allFinite())
        throw MeshError("box mesh origin must be finite");

    const Index sx = nx + 1, sy = ny + 1, sz = nz + 1;
    Vertices vertices(sx * sy * sz, 3);
    auto id = [&](Index i, Index j, Index k) { return static_cast<int>(i + sx * (j + sy * k)); };
    for (Index k = 0; k < sz; ++k)
        for (Index j = 0; j < sy; ++j)
            for (Index i = 0; i < sx; ++i)
                vertices.row(id(i, j, k)) << origin.x() + extents.x() * double(i) / nx,
                    origin.y() + extents.y() * double(j) / ny, origin.z() + extents.z() * double(k) / nz;

    // Kuhn split: one tet per axis permutation, walking 000 -> 111.
    static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    Tets tets(Index(6) * nx * ny * nz, 4);
    Index t = 0;
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                for (const auto& p : perms) {
                    int c[3] = {i, j, k};
                    int v[4];
                    v[0] = id(c[0], c[1], c[2]);
                    for (int s = 0; s < 3; ++s) {
                        ++c[p[s]];
                        v[s + 1] = id(c[0], c[1], c[2]);
                    }
                    tets.row(t++) << v[0], v[1], v[2], v[3];
                }
    return Mesh(std::move(vertices), std::move(tets), /*reorient=*/true);
}

std::string to_string(TensorRole role)
{
    return role == TensorRole::Motility ? "T" : "D";
}

TensorRole tensor_role_from_string(const std::string& s)
{
    if (s == "T")
        return TensorRole::Motility;
    if (s == "D")
        return TensorRole::Diffusivity;
    throw MeshError("unknown tensor role '" + s + "' (expected T or D)");
}

TensorField::TensorField(TensorRole role, std::vector<Eigen::Matrix3d> tensors)
    : role_(role), tensors_(std::move(tensors))
{
    for (std::size_t t = 0; t < tensors_.size(); ++t) {
        const Eigen::Matrix3d& a = tensors_[t];
        if (!a.allFinite())
            throw MeshError("tensor " + std::to_string(t) + " has non-finite entries");
        if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()))
            throw MeshError("tensor " + std::to_string(t) + " is not symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(a, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -1e-12 * std::abs(a.trace()))
            throw MeshError("tensor " + std::to_string(t) + " is not positive semi-definite");
    }
}

TensorField isotropic_field(const Mesh& mesh, double scalar, TensorRole role)
{
    if (!(scalar >= 0.0) || !std::isfinite(scalar))
        throw MeshError("isotropic tensor scalar must be finite and >= 0");
    return TensorField(role, std::vector<Eigen::Matrix3d>(static_cast<std::size_t>(mesh.num_tets()),
                                                          scalar * Eigen::Matrix3d::Identity()));
}

NodalField gaussian_bump(const Mesh& mesh, const Eigen::Vector3d& center, double sharpness, double amplitude,
                         double offset)
{
    if (!center.allFinite() || !std::isfinite(sharpness) || !std::isfinite(amplitude) || !std::isfinite(offset))
        throw MeshError("gaussian_bump inputs must be finite");
    if (!(sharpness > 0.0))
        throw MeshError("gaussian_bump sharpness must be positive");
    NodalField out(mesh.num_vertices());
    for (Index v = 0; v < mesh.num_vertices(); ++v) {
        const double r2 = (mesh.vertex(v) - center).squaredNorm();
        out[v] = amplitude * std::exp(-sharpness * r2 * r2) + offset;
    }
    return out;
}

} // namespace gbl
