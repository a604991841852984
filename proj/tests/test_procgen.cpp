#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include <Eigen/Geometry>

#include "carparts/procgen.hpp"

using namespace carparts;

namespace {

// divergence-theorem volume; positive when faces wind outward
double signed_volume(const LabeledMesh& m)
{
    double v = 0;
    for (const auto& f : m.faces)
        v += m.vertices[f[0]].dot(m.vertices[f[1]].cross(m.vertices[f[2]]));
    return v / 6.0;
}

void bounding_box(const LabeledMesh& m, Vec3& lo, Vec3& hi)
{
    lo = hi = m.vertices.front();
    for (const auto& v : m.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
}

} // namespace

TEST_CASE("every blueprint tessellates to the identical topology")
{
    const LabeledMesh ref = make_car_mesh(CarBlueprint{});
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 40ull, 500ull}) {
        const LabeledMesh m = make_car_mesh(sample_blueprint(seed));
        CHECK(m.vertices.size() == ref.vertices.size());
        CHECK(m.faces == ref.faces);
        CHECK(m.face_part_labels == ref.face_part_labels);
    }
}

TEST_CASE("car mesh carries every evaluation part")
{
    const LabeledMesh m = make_car_mesh(CarBlueprint{});
    std::set<int> labels(m.face_part_labels.begin(), m.face_part_labels.end());
    for (int id = 1; id < eval_part::count; ++id)
        CHECK(labels.count(id) == 1);
}

TEST_CASE("car mesh winds outward and is car-sized")
{
    const CarBlueprint bp;
    const LabeledMesh m = make_car_mesh(bp);
    m.validate();

    const double vol = signed_volume(m);
    CHECK(vol > 2.0);
    CHECK(vol < 13.0);

    Vec3 lo, hi;
    bounding_box(m, lo, hi);
    // origin at the bounding-box center
    CHECK((lo + hi).cwiseAbs().maxCoeff() < 1e-9);
    // bumper-to-bumper length and wheel-bottom-to-rack-top height
    CHECK(hi.z() - lo.z() == doctest::Approx(bp.length).epsilon(1e-9));
    CHECK(hi.y() - lo.y() == doctest::Approx(m.dimensions.height).epsilon(1e-6));
    // mirrors are the widest point: body + 5 mm gap + mirror on each side
    CHECK(hi.x() - lo.x() ==
          doctest::Approx(bp.width + 2 * (0.005 + bp.mirror_size)).epsilon(1e-9));

    CHECK(m.dimensions.length == bp.length);
    CHECK(m.dimensions.width == bp.width);
    CHECK(m.dimensions.wheelbase == doctest::Approx(bp.wheelbase_frac * bp.length));
    CHECK(m.category_id == 0);
}

TEST_CASE("blueprint validation rejects impossible cars")
{
    auto expect_throw = [](CarBlueprint bp) { CHECK_THROWS_AS(bp.validate(), Error); };

    CHECK_NOTHROW(CarBlueprint{}.validate());

    CarBlueprint bp;
    bp.length = -1;
    expect_throw(bp);

    bp = {};
    bp.clearance = bp.nose_height; // body bottom at the nose edge
    expect_throw(bp);

    bp = {};
    bp.beltline = 0.5; // below the hood
    expect_throw(bp);

    bp = {};
    bp.roof_height = bp.beltline; // no cabin
    expect_throw(bp);

    bp = {};
    bp.trunk_frac = 0.17; // fractions sum to 0.99, no room for a nose
    expect_throw(bp);

    bp = {};
    bp.wheelbase_frac = 1.2;
    expect_throw(bp);

    bp = {};
    bp.wheel_radius = 1.0; // wheels past the bumpers
    expect_throw(bp);

    bp = {};
    bp.wheel_width = 1.0; // wider than half the track
    expect_throw(bp);
}

TEST_CASE("sampled blueprints always validate and stay street-sized")
{
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const CarBlueprint bp = sample_blueprint(seed);
        CHECK_NOTHROW(bp.validate());
        CHECK(bp.length >= 4.2);
        CHECK(bp.length <= 5.0);
        CHECK(bp.width >= 1.70);
        CHECK(bp.width <= 1.95);
        CHECK(bp.roof_height > bp.beltline);
    }
}

TEST_CASE("fleets are deterministic in the seed and vary across it")
{
    const auto a = make_fleet(4, 77);
    const auto b = make_fleet(4, 77);
    REQUIRE(a.size() == 4);
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].vertices.size() == b[i].vertices.size());
        for (size_t v = 0; v < a[i].vertices.size(); ++v)
            CHECK(a[i].vertices[v] == b[i].vertices[v]); // bitwise
    }

    // distinct cars within a fleet and across seeds
    const auto c = make_fleet(2, 78);
    auto differs = [](const LabeledMesh& x, const LabeledMesh& y) {
        for (size_t v = 0; v < x.vertices.size(); ++v)
            if ((x.vertices[v] - y.vertices[v]).norm() > 1e-6)
                return true;
        return false;
    };
    CHECK(differs(a[0], a[1]));
    CHECK(differs(a[0], c[0]));

    CHECK_THROWS_AS((void)make_fleet(0, 1), Error);
}

TEST_CASE("box primitive: exact volume, area, and label")
{
    const Vec3 he(0.4, 0.3, 0.9);
    const LabeledMesh box = make_box_mesh(he, 5);
    CHECK(box.faces.size() == 12);
    CHECK(signed_volume(box) == doctest::Approx(8 * 0.4 * 0.3 * 0.9).epsilon(1e-12));
    CHECK(box.surface_area() ==
          doctest::Approx(8 * (0.4 * 0.3 + 0.3 * 0.9 + 0.4 * 0.9)).epsilon(1e-12));
    for (int l : box.face_part_labels)
        CHECK(l == 5);

    Vec3 lo, hi;
    bounding_box(box, lo, hi);
    CHECK((hi - he).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((lo + he).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS((void)make_box_mesh({1, 0, 1}), Error);
}

TEST_CASE("cylinder primitive: exact prism volume")
{
    const double r = 0.5, h = 2.0;
    const int n = 16;
    const LabeledMesh cyl = make_cylinder_mesh(r, h, n, 3);
    CHECK(cyl.faces.size() == static_cast<size_t>(4 * n)); // 2 barrel + 2 cap tris per segment
    // an n-gon prism encloses exactly n/2 * r^2 * sin(2*pi/n) * h
    CHECK(signed_volume(cyl) == doctest::Approx(0.5 * n * r * r * std::sin(2 * M_PI / n) * h)
                                    .epsilon(1e-12));
    for (int l : cyl.face_part_labels)
        CHECK(l == 3);

    CHECK_THROWS_AS((void)make_cylinder_mesh(0, 1), Error);
    CHECK_THROWS_AS((void)make_cylinder_mesh(1, 1, 2), Error);
}
