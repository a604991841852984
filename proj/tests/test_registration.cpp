#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>

#include <Eigen/Geometry>

#include "carparts/procgen.hpp"
#include "carparts/registration.hpp"
#include "carparts/rng.hpp"
#include "support/oracles.hpp"

using namespace carparts;

namespace {

double rotation_angle_between(const Mat3& a, const Mat3& b)
{
    const double c = std::clamp(((a * b.transpose()).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

std::vector<Vec3> apply_all(const SimilarityTransform& t, const std::vector<Vec3>& pts)
{
    std::vector<Vec3> out(pts.size());
    for (size_t i = 0; i < pts.size(); ++i)
        out[i] = t.apply(pts[i]);
    return out;
}

// smooth spine bend: rotate each point about the x axis by an angle
// proportional to its z coordinate, peaking at `peak_deg` at the far end
std::vector<Vec3> bend_cloud(const std::vector<Vec3>& pts, double peak_deg)
{
    double zmin = 1e30, zmax = -1e30;
    for (const auto& p : pts) {
        zmin = std::min(zmin, p.z());
        zmax = std::max(zmax, p.z());
    }
    std::vector<Vec3> out(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        const double s = (pts[i].z() - zmin) / std::max(1e-12, zmax - zmin);
        const double a = s * peak_deg * M_PI / 180.0;
        out[i] = Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix() * pts[i];
    }
    return out;
}

} // namespace

TEST_CASE("pair alignment recovers a known similarity exactly")
{
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        const auto src = oracle::random_cloud(rng, 50, 1.0);
        SimilarityTransform truth;
        truth.scale = rng.uniform(0.5, 2.0);
        truth.rotation = oracle::random_rotation(rng);
        truth.translation = Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        const auto dst = apply_all(truth, src);

        const SimilarityTransform got = align_pairs(src, dst, true);
        CHECK(std::abs(got.scale - truth.scale) < 1e-9);
        CHECK(rotation_angle_between(got.rotation, truth.rotation) < 1e-9);
        CHECK((got.translation - truth.translation).norm() < 1e-9);
    }
}

TEST_CASE("pair alignment without scaling pins scale to one")
{
    Rng rng(12);
    const auto src = oracle::random_cloud(rng, 40, 1.0);
    SimilarityTransform truth;
    truth.rotation = oracle::random_rotation(rng);
    truth.translation = Vec3(0.3, -0.2, 1.0);
    const auto dst = apply_all(truth, src);
    const SimilarityTransform got = align_pairs(src, dst, false);
    CHECK(got.scale == 1.0);
    CHECK(rotation_angle_between(got.rotation, truth.rotation) < 1e-9);
}

TEST_CASE("degenerate pair sets are rejected")
{
    std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(1, 0, 0)};
    CHECK_THROWS_AS((void)align_pairs(two, two, true), Error);

    std::vector<Vec3> line;
    for (int i = 0; i < 10; ++i)
        line.push_back(Vec3(0.1 * i, 0.2 * i, -0.3 * i));
    CHECK_THROWS_AS((void)align_pairs(line, line, true), Error);
}

TEST_CASE("similarity transform algebra: inverse and composition")
{
    Rng rng(13);
    SimilarityTransform t;
    t.scale = 1.7;
    t.rotation = oracle::random_rotation(rng);
    t.translation = Vec3(0.4, -2.0, 0.9);

    const SimilarityTransform inv = t.inverse();
    const SimilarityTransform id = t.then(inv);
    CHECK(std::abs(id.scale - 1.0) < 1e-12);
    CHECK(rotation_angle_between(id.rotation, Mat3::Identity()) < 1e-12);
    CHECK(id.translation.norm() < 1e-12);

    const Vec3 p(0.3, 0.1, -0.7);
    CHECK((t.matrix().topLeftCorner<3, 3>() * p + t.matrix().topRightCorner<3, 1>() - t.apply(p))
              .norm() < 1e-12);
}

TEST_CASE("icp recovers a known similarity from a coarse initial guess")
{
    Rng rng(21);
    for (int trial = 0; trial < 3; ++trial) {
        // structured cloud: points sampled on a car surface, ~1000 of them
        const LabeledMesh car = make_car_mesh(sample_blueprint(100 + trial));
        const auto src = remesh_uniform(car, 0.16, 7 + trial).points;
        REQUIRE(src.size() > 500);

        SimilarityTransform truth;
        truth.scale = 1.2;
        truth.rotation =
            Eigen::AngleAxisd(30.0 * M_PI / 180.0,
                              Vec3(rng.normal(), rng.normal(), rng.normal()).normalized())
                .toRotationMatrix();
        truth.translation = Vec3(rng.uniform(1.0, 2.0), rng.uniform(-2.0, -1.0), 0.5);
        const auto dst = apply_all(truth, src);

        // init inside the documented basin: within 10 degrees / 0.5 m
        SimilarityTransform init;
        init.rotation = Eigen::AngleAxisd(8.0 * M_PI / 180.0,
                                          Vec3(rng.normal(), rng.normal(), rng.normal())
                                              .normalized())
                            .toRotationMatrix() *
                        truth.rotation;
        init.translation = truth.translation + Vec3(0.3, -0.2, 0.2);
        init.scale = 1.1;

        const IcpResult res = icp_align(src, dst, init);
        CHECK(res.converged);
        CHECK(std::abs(res.transform.scale - truth.scale) < 1e-3);
        CHECK(rotation_angle_between(res.transform.rotation, truth.rotation) < 1e-3);
        CHECK((res.transform.translation - truth.translation).norm() < 1e-3);
        CHECK(res.rms < 1e-6);
    }
}

TEST_CASE("icp on identical clouds returns the identity")
{
    Rng rng(22);
    const auto pts = oracle::random_cloud(rng, 300, 1.0);
    const IcpResult res = icp_align(pts, pts);
    CHECK(std::abs(res.transform.scale - 1.0) < 1e-9);
    CHECK(rotation_angle_between(res.transform.rotation, Mat3::Identity()) < 1e-9);
    CHECK(res.transform.translation.norm() < 1e-9);
    CHECK(res.rms < 1e-12);
}

TEST_CASE("icp equivariance under a common rigid motion")
{
    Rng rng(23);
    const auto src = oracle::random_cloud(rng, 500, 1.0);
    SimilarityTransform misalign;
    misalign.rotation = Eigen::AngleAxisd(0.2, Vec3::UnitZ()).toRotationMatrix();
    misalign.translation = Vec3(0.2, 0.1, -0.1);
    const auto dst = apply_all(misalign, src);

    const IcpResult base = icp_align(src, dst);

    SimilarityTransform g;
    g.rotation = oracle::random_rotation(rng);
    g.translation = Vec3(1.0, -2.0, 0.5);
    const auto gsrc = apply_all(g, src);
    const auto gdst = apply_all(g, dst);
    const IcpResult moved = icp_align(gsrc, gdst);

    // recovered map conjugates: T' = g . T . g^-1, scale unchanged
    const SimilarityTransform expect = g.inverse().then(base.transform).then(g);
    CHECK(std::abs(moved.transform.scale - expect.scale) < 1e-6);
    CHECK(rotation_angle_between(moved.transform.rotation, expect.rotation) < 1e-6);
    CHECK((moved.transform.translation - expect.translation).norm() < 1e-6);
    CHECK(std::abs(moved.transform.scale - base.transform.scale) < 1e-6);
}

TEST_CASE("skinning weights: simplex rows and coincident-point limit")
{
    Rng rng(31);
    const auto pts = oracle::random_cloud(rng, 4000, 1.0);
    const DeformationGraph graph = build_deformation_graph(pts, 0.3, 4);
    CHECK(graph.nodes.size() >= 4);

    const Skinning skin = compute_skinning(pts, graph);
    REQUIRE(skin.size() == pts.size());
    for (const auto& row : skin) {
        REQUIRE(!row.empty());
        double sum = 0;
        for (const auto& [node, w] : row) {
            CHECK(w >= 0.0);
            CHECK(node >= 0);
            CHECK(node < static_cast<int>(graph.nodes.size()));
            sum += w;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }

    // a query exactly on a node takes full weight there
    const Skinning at_node = compute_skinning({graph.nodes[0]}, graph);
    REQUIRE(at_node[0].size() == 1);
    CHECK(at_node[0][0].first == 0);
    CHECK(at_node[0][0].second == 1.0);
}

TEST_CASE("deformation graph needs enough nodes")
{
    std::vector<Vec3> tiny{Vec3(0, 0, 0), Vec3(0.01, 0, 0)};
    CHECK_THROWS_AS((void)build_deformation_graph(tiny, 10.0, 4), Error);
}

TEST_CASE("deform with per-node rigid parameters reproduces the rigid motion exactly")
{
    Rng rng(32);
    const auto pts = oracle::random_cloud(rng, 1000, 0.8);
    const DeformationGraph graph = build_deformation_graph(pts, 0.25, 4);
    const Skinning skin = compute_skinning(pts, graph);

    const Mat3 r = oracle::random_rotation(rng);
    const Vec3 t(0.2, -0.4, 0.6);
    std::vector<NodeTransform> params(graph.nodes.size());
    for (size_t j = 0; j < graph.nodes.size(); ++j) {
        params[j].A = r;
        // v' = w [A (v-g) + g + t_j] == R v + t  when  t_j = t + R g - g
        params[j].t = t + r * graph.nodes[j] - graph.nodes[j];
    }
    const auto moved = deform(pts, graph, params, skin);
    for (size_t i = 0; i < pts.size(); ++i)
        CHECK((moved[i] - (r * pts[i] + t)).norm() < 1e-9);
}

TEST_CASE("single node with no rotation penalty reduces to the closed-form affine fit")
{
    Rng rng(33);
    const auto src = oracle::random_cloud(rng, 300, 0.5);

    // a warp small against the inter-point spacing, so nearest-neighbor
    // matching recovers the true pairs and the closed-form oracle applies
    Mat3 a_true = Mat3::Identity();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            a_true(r, c) += rng.uniform(-0.02, 0.02);
    const Vec3 t_true(0.008, -0.006, 0.01);
    std::vector<Vec3> dst(src.size());
    for (size_t i = 0; i < src.size(); ++i)
        dst[i] = a_true * src[i] + t_true;

    DeformationGraph graph;
    graph.nodes = {Vec3::Zero()};
    graph.skinning_neighbors = 1;

    DeformConfig cfg;
    cfg.w_rot = 0.0;
    cfg.w_reg = 0.0; // no edges anyway
    cfg.trim_fraction = 0.0;
    cfg.outer_iterations = 20;
    const DeformResult res = register_deformable(src, dst, graph, cfg);

    // closed-form least-squares affine oracle on the same pairs
    Eigen::MatrixXd lhs(src.size(), 4);
    Eigen::MatrixXd rhs(src.size(), 3);
    for (size_t i = 0; i < src.size(); ++i) {
        lhs.row(i) << src[i].x(), src[i].y(), src[i].z(), 1.0;
        rhs.row(i) = dst[i].transpose();
    }
    const Eigen::MatrixXd sol = lhs.colPivHouseholderQr().solve(rhs);
    double oracle_sq = 0;
    for (size_t i = 0; i < src.size(); ++i)
        oracle_sq += (rhs.row(i) - lhs.row(i) * sol).squaredNorm();
    const double oracle_rms = std::sqrt(oracle_sq / src.size());

    CHECK(res.fit_rms <= oracle_rms + 1e-6);
    // and the recovered affine matches the oracle's
    CHECK((res.params[0].A - sol.topRows<3>().transpose()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("deformable registration: identity target keeps parameters at rest")
{
    Rng rng(34);
    const auto pts = oracle::random_cloud(rng, 800, 0.6);
    const DeformationGraph graph = build_deformation_graph(pts, 0.25, 4);
    const DeformResult res = register_deformable(pts, pts, graph);
    CHECK(res.fit_rms < 1e-6);
    for (const auto& p : res.params) {
        CHECK((p.A - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-3);
        CHECK(p.t.norm() < 1e-3);
    }
}

TEST_CASE("deformable registration beats rigid icp on a bent pair")
{
    Rng rng(35);
    // a slab of points, long in z, mimicking a car-length body
    std::vector<Vec3> src;
    for (int i = 0; i < 2500; ++i)
        src.push_back(Vec3(rng.uniform(-0.8, 0.8), rng.uniform(-0.5, 0.5), rng.uniform(-2.2, 2.2)));
    const auto dst = bend_cloud(src, 15.0);

    const IcpResult rigid = icp_align(src, dst);
    const double rigid_rms = rigid.rms;

    const auto warm = apply_all(rigid.transform, src);
    const DeformationGraph graph = build_deformation_graph(warm, 0.4, 4);
    const DeformResult res = register_deformable(warm, dst, graph);

    CHECK(res.fit_rms < 0.10 * rigid_rms);

    // accepted-step energies never increase
    for (size_t i = 1; i < res.energy_trace.size(); ++i)
        CHECK(res.energy_trace[i] <= res.energy_trace[i - 1] + 1e-9);
}

TEST_CASE("dense correspondence on a scaled copy transfers labels through")
{
    Rng rng(36);
    PointCloud tpl;
    tpl.points = oracle::random_cloud(rng, 1500, 0.8);
    tpl.labels.resize(tpl.points.size());
    for (size_t i = 0; i < tpl.points.size(); ++i)
        tpl.labels[i] = tpl.points[i].z() > 0 ? 2 : 1; // planar split

    PointCloud model;
    model.points.reserve(tpl.points.size());
    for (const auto& p : tpl.points)
        model.points.push_back(1.1 * p);

    const double spacing = 0.05;
    const CorrespondenceMap map = dense_correspond(tpl, model, spacing);
    CHECK(map.coverage > 0.99);
    REQUIRE(map.model_index.size() == tpl.points.size());

    double mean_res = 0;
    for (float r : map.residual)
        mean_res += r;
    mean_res /= map.residual.size();
    CHECK(mean_res < spacing);

    const auto labels = transfer_labels(map, tpl.labels, model.points);
    REQUIRE(labels.size() == model.points.size());
    // alphabet preserved
    for (int l : labels)
        CHECK((l == 1 || l == 2));
    // boundary preserved within a sample spacing
    int wrong = 0;
    for (size_t i = 0; i < model.points.size(); ++i) {
        const int want = model.points[i].z() > 0 ? 2 : 1;
        if (labels[i] != want && std::abs(model.points[i].z()) > spacing)
            ++wrong;
    }
    CHECK(wrong == 0);
}

TEST_CASE("identity correspondence copies labels exactly")
{
    Rng rng(37);
    PointCloud tpl;
    tpl.points = oracle::random_cloud(rng, 600, 0.5);
    tpl.labels.resize(tpl.points.size());
    for (size_t i = 0; i < tpl.points.size(); ++i)
        tpl.labels[i] = static_cast<int>(i % 5);

    const CorrespondenceMap map = dense_correspond(tpl, tpl, 0.05);
    CHECK(map.coverage == doctest::Approx(1.0));
    const auto labels = transfer_labels(map, tpl.labels, tpl.points);
    CHECK(labels == tpl.labels);
}

TEST_CASE("correspondence table round trip")
{
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "carparts_corr_io";
    fs::create_directories(dir);
    const auto path = (dir / "map.bin").string();

    CorrespondenceMap map;
    map.model_index = {3, 1, 4, 1, 5};
    map.residual = {0.1f, 0.2f, 0.0f, 0.25f, 0.125f};
    map.coverage = 0.8;
    map.threshold = 0.2;
    save_correspondence(path, map);
    const CorrespondenceMap back = load_correspondence(path);
    CHECK(back.model_index == map.model_index);
    CHECK(back.residual == map.residual);
    fs::remove_all(dir);
}
