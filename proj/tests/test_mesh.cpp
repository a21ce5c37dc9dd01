#include "gbl/mesh.hpp"
#include "gbl/vtk.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gbl;

namespace {

std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("gbl-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("single box cell splits into six tets")
{
    const Mesh m = build_box_mesh(1, 1, 1, Eigen::Vector3d(2, 3, 4));
    CHECK(m.num_vertices() == 8);
    CHECK(m.num_tets() == 6);
    CHECK(m.volume() == doctest::Approx(24.0).epsilon(1e-14));
    for (Index t = 0; t < m.num_tets(); ++t)
        CHECK(m.tet_volume(t) == doctest::Approx(4.0).epsilon(1e-14));
    // Each square face is cut into two triangles.
    CHECK(m.boundary_faces().size() == 12);
}

TEST_CASE("desk box has the expected counts")
{
    const Mesh m = build_box_mesh(8, 8, 8, Eigen::Vector3d(16, 16, 16));
    CHECK(m.num_vertices() == 729);
    CHECK(m.num_tets() == 3072);
    CHECK(m.volume() == doctest::Approx(4096.0).epsilon(1e-12));
    CHECK(m.boundary_faces().size() == 6 * 64 * 2);
}

TEST_CASE("mesh validation")
{
    Vertices v(4, 3);
    v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;

    SUBCASE("positive orientation accepted")
    {
        Tets t(1, 4);
        t << 0, 1, 2, 3;
        CHECK(Mesh(v, t).volume() == doctest::Approx(1.0 / 6.0));
    }
    SUBCASE("negative orientation rejected unless reoriented")
    {
        Tets t(1, 4);
        t << 0, 2, 1, 3;
        CHECK_THROWS_AS(Mesh(v, t), MeshError);
        const Mesh m(v, t, true);
        CHECK(m.reoriented() == 1);
        CHECK(m.tet_volume(0) > 0.0);
    }
    SUBCASE("index out of range")
    {
        Tets t(1, 4);
        t << 0, 1, 2, 4;
        CHECK_THROWS_AS(Mesh(v, t), MeshError);
    }
    SUBCASE("degenerate tet")
    {
        Vertices flat = v;
        flat(3, 2) = 0.0;
        flat(3, 0) = 1.0;
        flat(3, 1) = 1.0;
        Tets t(1, 4);
        t << 0, 1, 2, 3;
        CHECK_THROWS_AS(Mesh(flat, t), MeshError);
    }
}

TEST_CASE("mesh text round trip")
{
    const Mesh m = build_box_mesh(2, 1, 1, Eigen::Vector3d(2, 1, 1), Eigen::Vector3d(-1, 0, 0.5));
    std::stringstream ss;
    write_mesh(ss, m);
    const Mesh back = parse_mesh(ss);
    CHECK(back.vertices() == m.vertices());
    CHECK(back.tets() == m.tets());
}

TEST_CASE("mesh parse errors carry the line")
{
    std::istringstream in("vertices 2\n0 0 0\n1 x 0\n");
    try {
        parse_mesh(in);
        FAIL("expected a FormatError");
    } catch (const FormatError& e) {
        CHECK(e.line == 3);
    }
}

TEST_CASE("tensor fields")
{
    const Mesh m = build_box_mesh(1, 1, 1, Eigen::Vector3d::Ones());
    const TensorField id = isotropic_field(m, 1.0);
    CHECK(id.size() == 6);
    CHECK(id[0] == Eigen::Matrix3d::Identity());
    CHECK(isotropic_field(m, 0.0)[3].isZero());
    CHECK_THROWS_AS(isotropic_field(m, -1.0), MeshError);

    Eigen::Matrix3d asym = Eigen::Matrix3d::Identity();
    asym(0, 1) = 0.5;
    CHECK_THROWS_AS(TensorField(TensorRole::Motility, std::vector<Eigen::Matrix3d>(6, asym)), MeshError);

    Eigen::Matrix3d spd;
    spd << 2, 0.5, 0, 0.5, 1, 0.1, 0, 0.1, 3;
    const TensorField f(TensorRole::Diffusivity, std::vector<Eigen::Matrix3d>(6, spd));
    std::stringstream ss;
    write_tensor_field(ss, f);
    const TensorField back = parse_tensor_field(ss, 6, TensorRole::Diffusivity);
    CHECK((back[5] - spd).norm() == doctest::Approx(0.0));
    CHECK(back.role() == TensorRole::Diffusivity);

    std::stringstream wrong;
    write_tensor_field(wrong, f);
    CHECK_THROWS(parse_tensor_field(wrong, 7, TensorRole::Diffusivity));
}

TEST_CASE("gaussian bump values")
{
    const Mesh m = build_box_mesh(1, 1, 1, Eigen::Vector3d::Ones());
    const NodalField phi = gaussian_bump(m, Eigen::Vector3d::Zero(), 0.1, 2.0, -1.0);
    for (Index i = 0; i < m.num_vertices(); ++i) {
        const double r = m.vertex(i).norm();
        if (r == 0.0)
            CHECK(phi[i] == doctest::Approx(1.0));
        if (std::abs(r - 1.0) < 1e-14)
            CHECK(phi[i] == doctest::Approx(2.0 * std::exp(-0.1) - 1.0).epsilon(1e-14));
    }
}

TEST_CASE("nodal field round trip")
{
    NodalField v(3);
    v << 0.1, -1.0 / 3.0, 1e-300;
    std::stringstream ss;
    write_nodal_field(ss, "phi", v);
    const NamedField back = parse_nodal_field(ss);
    CHECK(back.name == "phi");
    CHECK(back.values == v);
}

TEST_CASE("file round trips and vtk")
{
    const auto dir = scratch_dir("mesh-io");
    const Mesh m = build_box_mesh(2, 2, 2, Eigen::Vector3d(4, 4, 4));
    save_mesh(dir / "m.txt", m);
    CHECK(load_mesh(dir / "m.txt").tets() == m.tets());

    const NodalField phi = gaussian_bump(m, Eigen::Vector3d::Zero(), 1e-2, 2.0, -1.0);
    save_nodal_field(dir / "phi.txt", "phi", phi);
    CHECK(load_nodal_field(dir / "phi.txt").values == phi);
    CHECK_THROWS(load_nodal_field(dir / "absent.txt"));

    write_vtk(dir / "s.vtk", m, {{"phi", phi}});
    std::ifstream in(dir / "s.vtk");
    std::stringstream all;
    all << in.rdbuf();
    const std::string text = all.str();
    CHECK(text.rfind("# vtk DataFile Version", 0) == 0);
    CHECK(text.find("DATASET UNSTRUCTURED_GRID") != std::string::npos);
    CHECK(text.find("POINTS 27 double") != std::string::npos);
    CHECK(text.find("CELLS 48 240") != std::string::npos);
    CHECK(text.find("POINT_DATA 27") != std::string::npos);
    CHECK(text.find("SCALARS phi double 1") != std::string::npos);
}
