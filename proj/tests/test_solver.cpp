#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "carparts/procgen.hpp"
#include "carparts/solver.hpp"
#include "support/oracles.hpp"

using namespace carparts;

namespace {

Camera test_camera()
{
    Camera cam;
    cam.fx = cam.fy = 1200.0;
    cam.cx = 640.0;
    cam.cy = 400.0;
    cam.width = 1280;
    cam.height = 800;
    return cam;
}

// small labeled space: one labeled point per part, jittered across three
// training shapes so the space is valid but the mean is predictable
ShapeSpace labeled_point_space(const std::vector<Vec3>& base, Rng& rng)
{
    std::vector<std::vector<Vec3>> shapes(3, base);
    for (auto& shape : shapes)
        for (auto& p : shape)
            p += Vec3(rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01),
                      rng.uniform(-0.01, 0.01));
    ShapeSpace space = build_shape_space(shapes, 2);
    space.point_labels.resize(base.size());
    for (size_t i = 0; i < base.size(); ++i)
        space.point_labels[i] = static_cast<int>(i) + 1;
    return space;
}

std::vector<PartObservation> render_observations(const ShapeSpace& space, const Camera& cam,
                                                 const Mat3& rotation, const Vec3& translation)
{
    const auto centroids = part_centroids(unstack_points(space.mean), space.point_labels);
    std::vector<PartObservation> obs;
    for (const auto& [id, c] : centroids) {
        PartObservation p;
        p.part_id = id;
        p.centroid = cam.project(rotation * c + translation);
        p.pixel_count = 100;
        obs.push_back(p);
    }
    return obs;
}

double rotation_angle_between(const Mat3& a, const Mat3& b)
{
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

// car-backed world for refine/solve tests: fleet space with the template's
// per-vertex labels attached
struct SolverWorld {
    ShapeSpace space;
    LabeledMesh tmpl;
    Camera camera = default_scene_camera();
};

SolverWorld make_solver_world()
{
    const auto fleet = make_fleet(8, 555);
    std::vector<std::vector<Vec3>> shapes;
    for (const auto& car : fleet)
        shapes.push_back(car.vertices);
    SolverWorld w{build_shape_space(shapes, 5), fleet.front()};
    w.space.point_labels = vertex_labels(w.tmpl);
    return w;
}

std::vector<PartObservation> model_observations(const SolverWorld& w,
                                                const Eigen::VectorXd& shape, const CarPose& pose)
{
    const auto pred = predict_part_centroids(w.space, w.tmpl, w.camera, shape,
                                             pose_rotation(w.camera, pose),
                                             pose_translation(w.camera, pose));
    std::vector<PartObservation> obs;
    for (const auto& [id, c] : pred) {
        PartObservation p;
        p.part_id = id;
        p.centroid = c;
        p.pixel_count = 100;
        obs.push_back(p);
    }
    return obs;
}

CarPose street_pose()
{
    CarPose pose;
    pose.azimuth = 0.7;
    pose.elevation = 0.06;
    pose.tilt = -0.02;
    pose.center_px = Vec2(1100.0, 650.0);
    pose.distance = 14.0;
    return pose;
}

} // namespace

TEST_CASE("part centroids: per-label means, background ignored")
{
    const std::vector<Vec3> pts{{0, 0, 0}, {2, 0, 0}, {0, 4, 0}, {9, 9, 9}};
    const std::vector<int> labels{1, 1, 2, 0};
    const auto c = part_centroids(pts, labels);
    REQUIRE(c.size() == 2);
    CHECK((c.at(1) - Vec3(1, 0, 0)).norm() < 1e-15);
    CHECK((c.at(2) - Vec3(0, 4, 0)).norm() < 1e-15);

    CHECK_THROWS_AS((void)part_centroids(pts, {1, 2}), Error);
}

TEST_CASE("observation extraction: centroids at pixel centers, cars only")
{
    LabelMaps maps;
    maps.part_map = Image<uint16_t>(8, 8, 0);
    maps.instance_map = Image<uint16_t>(8, 8, 0);
    maps.depth_map = Image<float>(8, 8, 1.0f);

    auto put = [&](int x, int y, int inst, int part) {
        maps.instance_map.at(x, y) = static_cast<uint16_t>(inst);
        maps.part_map.at(x, y) = static_cast<uint16_t>(part);
    };
    put(1, 1, 1, 3);
    put(2, 1, 1, 3);
    put(5, 5, 1, 7);
    put(6, 6, 1, 0); // instance pixel without a part label: no observation
    put(4, 2, 2, 3); // second instance, same part id
    put(3, 7, 3, 5); // instance 3 is declared a non-car below

    InstanceTruth t3;
    t3.instance_id = 3;
    t3.is_car = false;
    maps.truth.push_back(t3);

    const auto obs = extract_observations(maps);
    REQUIRE(obs.size() == 2);
    CHECK(obs[0].instance_id == 1);
    REQUIRE(obs[0].parts.size() == 2);
    CHECK(obs[0].parts[0].part_id == 3);
    CHECK(obs[0].parts[0].pixel_count == 2);
    CHECK(obs[0].parts[0].centroid.x() == doctest::Approx(2.0));
    CHECK(obs[0].parts[0].centroid.y() == doctest::Approx(1.5));
    CHECK(obs[0].parts[1].part_id == 7);
    CHECK(obs[1].instance_id == 2);
    CHECK(obs[1].parts.size() == 1);

    maps.instance_map = Image<uint16_t>(4, 8, 0);
    CHECK_THROWS_AS((void)extract_observations(maps), Error);
}

TEST_CASE("closed-form initialization recovers a rendered general-position pose")
{
    Rng rng(606);
    // non-coplanar constellation, car-sized
    const std::vector<Vec3> base{{0.9, -0.4, 2.1},  {-0.9, -0.4, 2.1}, {0.9, -0.4, -2.1},
                                 {-0.9, -0.4, -2.1}, {0.0, -1.3, 0.3},  {0.8, 0.3, 1.4},
                                 {-0.8, 0.3, -1.4},  {0.0, -0.9, -1.8}};
    const ShapeSpace space = labeled_point_space(base, rng);
    const Camera cam = test_camera();

    for (int trial = 0; trial < 10; ++trial) {
        // keep the constellation inside the camera's view, well in front
        const Mat3 rot = oracle::random_rotation(rng);
        const Vec3 trans(rng.uniform(-1.5, 1.5), rng.uniform(-1.0, 1.0), rng.uniform(9.0, 25.0));
        const auto obs = render_observations(space, cam, rot, trans);

        const PoseEstimate est = pnp_init(obs, space, cam);
        CHECK_FALSE(est.planar_fallback);
        CHECK(est.converged);

        const Mat3 r_est = pose_rotation(cam, est.pose);
        const Vec3 t_est = pose_translation(cam, est.pose);
        CHECK(rotation_angle_between(r_est, rot) < 1e-6);
        CHECK((t_est - trans).norm() < 1e-6);
    }
}

TEST_CASE("initialization counts and degeneracies")
{
    Rng rng(607);
    const std::vector<Vec3> base{{0.9, -0.4, 2.1}, {-0.9, -0.4, 2.1}, {0.0, -1.3, 0.3},
                                 {0.8, 0.3, 1.4},  {0.0, -0.9, -1.8}};
    const ShapeSpace space = labeled_point_space(base, rng);
    const Camera cam = test_camera();
    const auto obs = render_observations(space, cam, Mat3::Identity(), Vec3(0, 0, 12));

    // three observations are not enough
    std::vector<PartObservation> three(obs.begin(), obs.begin() + 3);
    CHECK_THROWS_AS((void)pnp_init(three, space, cam), Error);

    // unknown part ids are dropped before the count check
    std::vector<PartObservation> strangers = obs;
    for (size_t i = 0; i + 1 < strangers.size(); ++i)
        strangers[i].part_id = 90 + static_cast<int>(i);
    CHECK_THROWS_AS((void)pnp_init(strangers, space, cam), Error);

    // a space without labels cannot be matched at all
    ShapeSpace unlabeled = space;
    unlabeled.point_labels.clear();
    CHECK_THROWS_AS((void)pnp_init(obs, unlabeled, cam), Error);

    // collinear part centroids leave every initialization path rank-deficient
    const std::vector<Vec3> line{{0, 0, -1.5}, {0, 0, -0.5}, {0, 0, 0.5}, {0, 0, 1.5},
                                 {0, 0, 2.5}};
    const ShapeSpace line_space = labeled_point_space(line, rng);
    // rebuild exact collinearity: jitter moved the points off the line
    ShapeSpace exact = line_space;
    exact.mean = stack_points(line);
    const auto line_obs = render_observations(exact, cam, Mat3::Identity(), Vec3(0, 0, 12));
    CHECK_THROWS_AS((void)pnp_init(line_obs, exact, cam), Error);
}

TEST_CASE("coplanar constellations take the flagged planar path and still fit")
{
    Rng rng(608);
    // all points on the y = -0.8 plane (a car-roof-like sheet)
    const std::vector<Vec3> base{{0.9, -0.8, 2.1},  {-0.9, -0.8, 2.1}, {0.9, -0.8, -2.1},
                                 {-0.9, -0.8, -2.1}, {0.3, -0.8, 0.6},  {-0.5, -0.8, -0.9}};
    ShapeSpace space = labeled_point_space(base, rng);
    space.mean = stack_points(base); // exact coplanarity
    const Camera cam = test_camera();

    const Mat3 rot = (Eigen::AngleAxisd(0.5, Vec3::UnitY()) *
                      Eigen::AngleAxisd(0.35, Vec3::UnitX()))
                         .toRotationMatrix();
    const Vec3 trans(0.4, 1.2, 15.0);
    const auto obs = render_observations(space, cam, rot, trans);

    const PoseEstimate est = pnp_init(obs, space, cam);
    CHECK(est.planar_fallback);

    // the planar family is two-fold ambiguous, so judge by reprojection
    const Mat3 r_est = pose_rotation(cam, est.pose);
    const Vec3 t_est = pose_translation(cam, est.pose);
    const auto centroids = part_centroids(unstack_points(space.mean), space.point_labels);
    double worst = 0;
    for (const auto& o : obs) {
        const Vec2 px = cam.project(r_est * centroids.at(o.part_id) + t_est);
        worst = std::max(worst, (px - o.centroid).norm());
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("initialization is equivariant under horizontal principal-point shifts")
{
    Rng rng(609);
    const std::vector<Vec3> base{{0.9, -0.4, 2.1},  {-0.9, -0.4, 2.1}, {0.9, -0.4, -2.1},
                                 {-0.9, -0.4, -2.1}, {0.0, -1.3, 0.3},  {0.8, 0.3, 1.4},
                                 {-0.8, 0.3, -1.4}};
    const ShapeSpace space = labeled_point_space(base, rng);
    const Camera cam = test_camera();
    const Mat3 rot = oracle::random_rotation(rng);
    const Vec3 trans(0.8, -0.5, 16.0);
    const auto obs = render_observations(space, cam, rot, trans);

    const double shift = 37.5;
    Camera shifted_cam = cam;
    shifted_cam.cx += shift;
    auto shifted_obs = obs;
    for (auto& o : shifted_obs)
        o.centroid.x() += shift;

    const PoseEstimate a = pnp_init(obs, space, cam);
    const PoseEstimate b = pnp_init(shifted_obs, space, shifted_cam);

    CHECK(std::abs(a.pose.azimuth - b.pose.azimuth) < 1e-9);
    CHECK(std::abs(a.pose.elevation - b.pose.elevation) < 1e-9);
    CHECK(std::abs(a.pose.tilt - b.pose.tilt) < 1e-9);
    CHECK(std::abs(a.pose.distance - b.pose.distance) < 1e-9);
    CHECK(std::abs(a.pose.center_px.x() + shift - b.pose.center_px.x()) < 1e-9);
    CHECK(std::abs(a.pose.center_px.y() - b.pose.center_px.y()) < 1e-9);
}

TEST_CASE("refinement from the true pose stays put with near-zero objective")
{
    const SolverWorld w = make_solver_world();
    const CarPose truth = street_pose();
    const Eigen::VectorXd shape = Eigen::VectorXd::Zero(w.space.dims());
    const auto obs = model_observations(w, shape, truth);
    REQUIRE(obs.size() >= 10);

    PoseEstimate init;
    init.pose = truth;
    init.shape = shape;
    const PoseEstimate est = refine(init, obs, w.space, w.tmpl, w.camera);

    CHECK(est.converged);
    CHECK(est.reprojection_rms < 1e-9);
    CHECK(std::abs(est.pose.azimuth - truth.azimuth) < 1e-9);
    CHECK(std::abs(est.pose.distance - truth.distance) < 1e-9);
    CHECK(est.shape.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("refinement recovers the truth from a perturbed initialization")
{
    const SolverWorld w = make_solver_world();
    const CarPose truth = street_pose();
    const Eigen::VectorXd shape = Eigen::VectorXd::Zero(w.space.dims());
    const auto obs = model_observations(w, shape, truth);

    PoseEstimate init;
    init.pose = truth;
    init.pose.azimuth += 5.0 * M_PI / 180.0; // 5 degrees off
    init.pose.distance *= 1.10;              // 10 percent too far
    init.shape = shape;

    const PoseEstimate est = refine(init, obs, w.space, w.tmpl, w.camera);
    CHECK(std::abs(est.pose.azimuth - truth.azimuth) < 1e-4);
    CHECK(std::abs(est.pose.elevation - truth.elevation) < 1e-4);
    CHECK(std::abs(est.pose.tilt - truth.tilt) < 1e-4);
    CHECK(std::abs(est.pose.distance - truth.distance) < 1e-3);
    CHECK(est.reprojection_rms < 1e-3);
    CHECK(std::isfinite(est.reprojection_rms));

    CHECK_THROWS_AS((void)refine(init, {}, w.space, w.tmpl, w.camera), Error);
}

TEST_CASE("refinement is equivariant under horizontal principal-point shifts")
{
    const SolverWorld w = make_solver_world();
    const CarPose truth = street_pose();
    const Eigen::VectorXd shape = Eigen::VectorXd::Zero(w.space.dims());
    const auto obs = model_observations(w, shape, truth);

    PoseEstimate init;
    init.pose = truth;
    init.pose.azimuth += 0.03;
    init.pose.distance *= 1.03;
    init.shape = shape;

    const double shift = 25.0;
    Camera shifted_cam = w.camera;
    shifted_cam.cx += shift;
    auto shifted_obs = obs;
    for (auto& o : shifted_obs)
        o.centroid.x() += shift;
    PoseEstimate shifted_init = init;
    shifted_init.pose.center_px.x() += shift;

    const PoseEstimate a = refine(init, obs, w.space, w.tmpl, w.camera);
    const PoseEstimate b = refine(shifted_init, shifted_obs, w.space, w.tmpl, shifted_cam);

    CHECK(std::abs(a.pose.azimuth - b.pose.azimuth) < 1e-7);
    CHECK(std::abs(a.pose.elevation - b.pose.elevation) < 1e-7);
    CHECK(std::abs(a.pose.tilt - b.pose.tilt) < 1e-7);
    CHECK(std::abs(a.pose.distance - b.pose.distance) < 1e-6);
    CHECK(std::abs(a.pose.center_px.x() + shift - b.pose.center_px.x()) < 1e-6);
    CHECK((a.shape - b.shape).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("scene solve: rasterized scenes come back with credible poses")
{
    const SolverWorld w = make_solver_world();
    SceneConfig cfg;
    cfg.seed = 4242;
    cfg.car_count = {2, 4};
    cfg.occluder_count = {0, 1};
    cfg.light_count = {5, 8};
    cfg.distance = {8.0, 30.0};
    cfg.max_placement_attempts = 200;

    int attempted = 0, good_rotation = 0, good_distance = 0;
    for (std::uint64_t idx = 0; idx < 3; ++idx) {
        const Scene scene = place_scene(cfg, w.space, w.tmpl, idx);
        const LabelMaps maps = rasterize(scene, 480, 302);
        // the maps live in the 480x302 pixel frame, so the solver must see
        // the camera scaled to match
        const Camera raster_cam = scale_camera(scene.camera, 480, 302);
        const auto estimates = solve_scene(maps, w.space, w.tmpl, raster_cam);

        for (const auto& est : estimates) {
            if (est.skipped) {
                CHECK(!est.note.empty());
                continue;
            }
            const SceneInstance* inst = nullptr;
            for (const auto& i : scene.instances)
                if (i.instance_id == est.instance_id)
                    inst = &i;
            REQUIRE(inst != nullptr);
            CHECK(inst->is_car);
            CHECK(std::isfinite(est.reprojection_rms));

            const Mat3 r_est = pose_rotation(raster_cam, est.pose);
            const Vec3 t_est = pose_translation(raster_cam, est.pose);
            ++attempted;
            if (rotation_angle_between(r_est, inst->cam_rotation) < 10.0 * M_PI / 180.0)
                ++good_rotation;
            if (std::abs(t_est.norm() - inst->cam_translation.norm()) <
                0.10 * inst->cam_translation.norm())
                ++good_distance;
        }
    }
    REQUIRE(attempted >= 4);
    // grid-quantized centroids put a floor on accuracy, but most cars must
    // still come back near their true pose
    CHECK(good_rotation * 2 >= attempted);
    CHECK(good_distance * 2 >= attempted);
}

TEST_CASE("scene solve skips instances without enough usable parts")
{
    const SolverWorld w = make_solver_world();

    // hand-build maps: instance 1 has a single 6-pixel part, instance 2 has
    // four parts but each below the pixel floor
    LabelMaps maps;
    maps.part_map = Image<uint16_t>(32, 32, 0);
    maps.instance_map = Image<uint16_t>(32, 32, 0);
    maps.depth_map = Image<float>(32, 32, 1.0f);
    for (int i = 0; i < 6; ++i) {
        maps.part_map.at(2 + i, 3) = 5;
        maps.instance_map.at(2 + i, 3) = 1;
    }
    for (int part = 1; part <= 4; ++part) {
        maps.part_map.at(20 + part, 20) = static_cast<uint16_t>(part);
        maps.instance_map.at(20 + part, 20) = 2;
    }

    const auto estimates = solve_scene(maps, w.space, w.tmpl, w.camera);
    REQUIRE(estimates.size() == 2);
    for (const auto& est : estimates) {
        CHECK(est.skipped);
        CHECK(!est.note.empty());
        CHECK(est.shape.size() == w.space.dims());
    }
}
