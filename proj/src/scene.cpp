#include "carparts/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "carparts/error.hpp"
#include "carparts/procgen.hpp"
#include "carparts/rng.hpp"

namespace carparts {

using json = nlohmann::json;

Camera default_scene_camera()
{
    Camera cam;
    cam.width = 1920;
    cam.height = 1208;
    cam.fx = cam.fy = 2300.0;
    cam.cx = 960.0;
    cam.cy = 604.0;
    return cam;
}

Camera scale_camera(const Camera& cam, int width, int height)
{
    cam.validate();
    if (width < 1 || height < 1)
        throw Error(Err::InvalidArgument, "target resolution must be positive");
    Camera out = cam;
    const double sx = static_cast<double>(width) / cam.width;
    const double sy = static_cast<double>(height) / cam.height;
    out.fx *= sx;
    out.cx *= sx;
    out.fy *= sy;
    out.cy *= sy;
    out.width = width;
    out.height = height;
    return out;
}

void SceneConfig::validate() const
{
    camera.validate();
    if (car_count.empty() || occluder_count.empty() || light_count.empty())
        throw Error(Err::InvalidArgument, "count ranges must be non-empty");
    if (car_count.lo < 0 || occluder_count.lo < 0 || light_count.lo < 1)
        throw Error(Err::InvalidArgument, "counts must be non-negative (lights >= 1)");
    if (camera_height.empty() || camera_pitch.empty() || distance.empty() ||
        shape_range.empty())
        throw Error(Err::InvalidArgument, "sampling ranges must be non-empty");
    if (distance.lo <= 0)
        throw Error(Err::InvalidArgument, "distance range must be positive");
    if (max_placement_attempts < 1)
        throw Error(Err::InvalidArgument, "need at least one placement attempt");
}

bool footprints_overlap(const Footprint& a, const Footprint& b)
{
    // separating axes: both rectangles' edge normals
    const Vec2 axes[4] = {a.axis, Vec2(-a.axis.y(), a.axis.x()), b.axis,
                          Vec2(-b.axis.y(), b.axis.x())};
    const Vec2 d = b.center - a.center;
    for (const Vec2& ax : axes) {
        const double ra = a.half.x() * std::abs(ax.dot(a.axis)) +
                          a.half.y() * std::abs(ax.dot(Vec2(-a.axis.y(), a.axis.x())));
        const double rb = b.half.x() * std::abs(ax.dot(b.axis)) +
                          b.half.y() * std::abs(ax.dot(Vec2(-b.axis.y(), b.axis.x())));
        if (std::abs(ax.dot(d)) > ra + rb)
            return false; // found a separating axis
    }
    return true;
}

namespace {

// world frame: z up, ground plane z = 0; the camera sits at (0, 0, h)
// looking along +y, pitched down by `pitch` about its own x axis
Mat3 world_to_camera(double pitch)
{
    Mat3 base;
    base << 1, 0, 0, 0, 0, -1, 0, 1, 0;
    Mat3 rx;
    rx << 1, 0, 0, 0, std::cos(pitch), -std::sin(pitch), 0, std::sin(pitch), std::cos(pitch);
    return rx * base;
}

// model frame (x right, y down, z forward) to world, heading yaw on the
// ground plane: forward maps to (cos yaw, sin yaw, 0), down to -z
Mat3 model_to_world(double yaw)
{
    Mat3 m;
    m.col(0) = Vec3(std::sin(yaw), -std::cos(yaw), 0);
    m.col(1) = Vec3(0, 0, -1);
    m.col(2) = Vec3(std::cos(yaw), std::sin(yaw), 0);
    return m;
}

struct ModelExtents {
    Vec3 lo, hi;
};

ModelExtents mesh_extents(const LabeledMesh& mesh)
{
    ModelExtents e{mesh.vertices.front(), mesh.vertices.front()};
    for (const auto& v : mesh.vertices) {
        e.lo = e.lo.cwiseMin(v);
        e.hi = e.hi.cwiseMax(v);
    }
    return e;
}

} // namespace

Scene place_scene(const SceneConfig& cfg, const ShapeSpace& space,
                  const LabeledMesh& template_mesh, std::uint64_t scene_index)
{
    cfg.validate();
    space.validate();
    template_mesh.validate();
    if (template_mesh.vertices.size() != static_cast<size_t>(space.point_count))
        throw Error(Err::ShapeMismatch, "template vertex count differs from the shape space");

    Rng rng(substream_seed(cfg.seed, "scene", scene_index));
    auto in_range = [&](const Range& r) { return rng.uniform(r.lo, r.hi); };
    auto count_in = [&](const IntRange& r) { return static_cast<int>(rng.uniform_int(r.lo, r.hi)); };

    Scene scene;
    scene.camera = cfg.camera;
    scene.camera_height = in_range(cfg.camera_height);
    scene.camera_pitch = in_range(cfg.camera_pitch);
    scene.seed = cfg.seed;

    const Mat3 r_cw = world_to_camera(scene.camera_pitch);
    const Vec3 cam_center(0, 0, scene.camera_height);
    const double half_fov = std::atan2(cfg.camera.width / 2.0, cfg.camera.fx);

    const int n_cars = count_in(cfg.car_count);
    const int n_occluders = count_in(cfg.occluder_count);
    scene.requested_cars = n_cars;

    auto try_place = [&](SceneInstance inst) -> bool {
        for (int attempt = 0; attempt < cfg.max_placement_attempts; ++attempt) {
            const double ground_dist = in_range(cfg.distance);
            const double bearing = rng.uniform(-0.9 * half_fov, 0.9 * half_fov);
            const double yaw = rng.uniform(-M_PI, M_PI);
            const Vec2 ground_pos(ground_dist * std::sin(bearing),
                                  ground_dist * std::cos(bearing));

            const ModelExtents e = mesh_extents(inst.mesh);
            Footprint fp;
            fp.center = ground_pos;
            fp.axis = Vec2(std::cos(yaw), std::sin(yaw));
            fp.half = Vec2(std::max(-e.lo.z(), e.hi.z()), std::max(-e.lo.x(), e.hi.x()));
            bool collides = false;
            for (const auto& other : scene.instances)
                if (footprints_overlap(fp, other.footprint)) {
                    collides = true;
                    break;
                }
            if (collides)
                continue;

            const Mat3 r_mw = model_to_world(yaw);
            const Vec3 t_world(ground_pos.x(), ground_pos.y(), e.hi.y());
            inst.footprint = fp;
            inst.cam_rotation = r_cw * r_mw;
            inst.cam_translation = r_cw * (t_world - cam_center);
            inst.pose = pose_from_camera_frame(cfg.camera, inst.cam_rotation,
                                               inst.cam_translation);
            inst.instance_id = static_cast<int>(scene.instances.size()) + 1;
            scene.instances.push_back(std::move(inst));
            return true;
        }
        ++scene.dropped_placements;
        return false;
    };

    for (int i = 0; i < n_cars; ++i) {
        SceneInstance inst;
        inst.is_car = true;
        inst.shape.resize(space.dims());
        for (int k = 0; k < space.dims(); ++k)
            inst.shape[k] = in_range(cfg.shape_range);
        inst.mesh = template_mesh;
        inst.mesh.vertices = space.synthesize_points(inst.shape);
        try_place(std::move(inst));
    }

    for (int i = 0; i < n_occluders; ++i) {
        SceneInstance inst;
        inst.is_car = false;
        inst.shape.resize(0);
        if (rng.uniform() < 0.5) {
            const Vec3 half(rng.uniform(0.15, 0.5), rng.uniform(0.4, 1.0),
                            rng.uniform(0.15, 0.5));
            inst.mesh = make_box_mesh(half, 0);
        } else {
            inst.mesh = make_cylinder_mesh(rng.uniform(0.15, 0.45), rng.uniform(0.8, 2.0), 16, 0);
        }
        try_place(std::move(inst));
    }

    const int n_lights = count_in(cfg.light_count);
    scene.light_directions.reserve(n_lights);
    for (int i = 0; i < n_lights; ++i) {
        const double a = rng.uniform(-M_PI, M_PI);
        const double e = rng.uniform(0.2, 1.35);
        scene.light_directions.emplace_back(std::cos(a) * std::cos(e), std::sin(a) * std::cos(e),
                                            -std::sin(e));
    }
    return scene;
}

// ------------------------------------------------------------ rasterizer

namespace {

struct RasterTarget {
    Image<uint16_t>* part = nullptr;
    Image<uint16_t>* instance = nullptr;
    Image<float>* depth = nullptr;
};

// z-buffered scan of one instance into the target maps. Edge functions are
// evaluated at pixel centers; inclusive boundaries on either winding; the
// depth test is strict less-than, so the first-drawn face keeps ties.
void raster_instance(const SceneInstance& inst, const Camera& cam, RasterTarget target)
{
    std::vector<Vec3> pc(inst.mesh.vertices.size());
    std::vector<Vec2> px(inst.mesh.vertices.size());
    for (size_t i = 0; i < inst.mesh.vertices.size(); ++i) {
        pc[i] = inst.cam_rotation * inst.mesh.vertices[i] + inst.cam_translation;
        if (pc[i].z() > raster_near_plane)
            px[i] = cam.project(pc[i]);
    }

    for (size_t f = 0; f < inst.mesh.faces.size(); ++f) {
        const auto& face = inst.mesh.faces[f];
        if (pc[face[0]].z() <= raster_near_plane || pc[face[1]].z() <= raster_near_plane ||
            pc[face[2]].z() <= raster_near_plane)
            continue;
        const Vec2 a = px[face[0]], b = px[face[1]], c = px[face[2]];
        const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        if (area == 0)
            continue;

        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - 0.5)));
        const int x1 = std::min(cam.width - 1,
                                static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - 0.5)));
        const int y1 = std::min(cam.height - 1,
                                static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
        const double iz0 = 1.0 / pc[face[0]].z(), iz1 = 1.0 / pc[face[1]].z(),
                     iz2 = 1.0 / pc[face[2]].z();

        for (int iy = y0; iy <= y1; ++iy) {
            for (int ix = x0; ix <= x1; ++ix) {
                const double x = ix + 0.5, y = iy + 0.5;
                const double w0 = (c.x() - b.x()) * (y - b.y()) - (c.y() - b.y()) * (x - b.x());
                const double w1 = (a.x() - c.x()) * (y - c.y()) - (a.y() - c.y()) * (x - c.x());
                const double w2 = (b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x());
                const bool inside = (w0 >= 0 && w1 >= 0 && w2 >= 0) ||
                                    (w0 <= 0 && w1 <= 0 && w2 <= 0);
                if (!inside)
                    continue;
                const double l0 = w0 / area, l1 = w1 / area, l2 = w2 / area;
                const double z = 1.0 / (l0 * iz0 + l1 * iz1 + l2 * iz2);
                if (z <= raster_near_plane)
                    continue;
                float& d = target.depth->at(ix, iy);
                if (static_cast<float>(z) < d) {
                    d = static_cast<float>(z);
                    target.part->at(ix, iy) =
                        static_cast<uint16_t>(inst.mesh.face_part_labels[f]);
                    target.instance->at(ix, iy) = static_cast<uint16_t>(inst.instance_id);
                }
            }
        }
    }
}

Box pixel_bounds(const Image<uint16_t>& map, uint16_t id)
{
    double x0 = 1e30, y0 = 1e30, x1 = -1e30, y1 = -1e30;
    bool any = false;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            if (map.at(x, y) == id) {
                any = true;
                x0 = std::min(x0, static_cast<double>(x));
                y0 = std::min(y0, static_cast<double>(y));
                x1 = std::max(x1, static_cast<double>(x) + 1);
                y1 = std::max(y1, static_cast<double>(y) + 1);
            }
    return any ? Box{x0, y0, x1, y1} : Box{};
}

} // namespace

LabelMaps rasterize(const Scene& scene, int width, int height)
{
    const Camera cam = scale_camera(scene.camera, width, height);

    LabelMaps maps;
    maps.part_map = Image<uint16_t>(width, height, 0);
    maps.instance_map = Image<uint16_t>(width, height, 0);
    maps.depth_map = Image<float>(width, height, std::numeric_limits<float>::infinity());

    RasterTarget target{&maps.part_map, &maps.instance_map, &maps.depth_map};
    for (const auto& inst : scene.instances)
        raster_instance(inst, cam, target);

    // solo re-renders give the unoccluded pixel count per instance
    for (const auto& inst : scene.instances) {
        Image<uint16_t> solo_part(width, height, 0);
        Image<uint16_t> solo_inst(width, height, 0);
        Image<float> solo_depth(width, height, std::numeric_limits<float>::infinity());
        raster_instance(inst, cam, {&solo_part, &solo_inst, &solo_depth});

        InstanceTruth truth;
        truth.instance_id = inst.instance_id;
        truth.is_car = inst.is_car;
        truth.pose = inst.pose;
        truth.shape = inst.shape;
        int visible = 0, solo = 0;
        for (size_t i = 0; i < maps.instance_map.data.size(); ++i) {
            visible += maps.instance_map.data[i] == inst.instance_id ? 1 : 0;
            solo += solo_inst.data[i] == inst.instance_id ? 1 : 0;
        }
        truth.visible_pixels = visible;
        truth.solo_pixels = solo;
        truth.visibility = solo > 0 ? static_cast<double>(visible) / solo : 0.0;
        truth.bbox_visible = pixel_bounds(maps.instance_map, static_cast<uint16_t>(inst.instance_id));
        truth.bbox_solo = pixel_bounds(solo_inst, static_cast<uint16_t>(inst.instance_id));
        maps.truth.push_back(std::move(truth));
    }
    return maps;
}

// ------------------------------------------------------------ truth JSON

namespace {

json pose_to_json(const CarPose& p)
{
    return json{{"azimuth", p.azimuth},
                {"elevation", p.elevation},
                {"tilt", p.tilt},
                {"center", {p.center_px.x(), p.center_px.y()}},
                {"distance", p.distance}};
}

CarPose pose_from_json(const json& j)
{
    CarPose p;
    p.azimuth = j.at("azimuth").get<double>();
    p.elevation = j.at("elevation").get<double>();
    p.tilt = j.at("tilt").get<double>();
    p.center_px = Vec2(j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>());
    p.distance = j.at("distance").get<double>();
    return p;
}

json box_to_json(const Box& b)
{
    return json{b.x0, b.y0, b.x1, b.y1};
}

Box box_from_json(const json& j)
{
    return Box{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
               j.at(3).get<double>()};
}

} // namespace

void save_scene_truth(const std::string& path, const Scene& scene, const LabelMaps& maps)
{
    json j;
    j["camera"] = {{"fx", scene.camera.fx}, {"fy", scene.camera.fy}, {"cx", scene.camera.cx},
                   {"cy", scene.camera.cy}, {"width", scene.camera.width},
                   {"height", scene.camera.height}};
    j["camera_height"] = scene.camera_height;
    j["camera_pitch"] = scene.camera_pitch;
    j["seed"] = scene.seed;
    j["instances"] = json::array();
    for (const auto& t : maps.truth) {
        json ji;
        ji["instance_id"] = t.instance_id;
        ji["is_car"] = t.is_car;
        ji["pose"] = pose_to_json(t.pose);
        ji["shape"] = std::vector<double>(t.shape.data(), t.shape.data() + t.shape.size());
        ji["visibility"] = t.visibility;
        ji["visible_pixels"] = t.visible_pixels;
        ji["solo_pixels"] = t.solo_pixels;
        ji["bbox_visible"] = box_to_json(t.bbox_visible);
        ji["bbox_solo"] = box_to_json(t.bbox_solo);
        j["instances"].push_back(std::move(ji));
    }
    std::ofstream out(path);
    if (!out)
        throw Error(Err::Io, "cannot write " + path);
    out << j.dump(2) << '\n';
}

SceneTruth load_scene_truth(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(Err::Io, "cannot open " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded())
        throw Error(Err::Schema, "truth file is not valid JSON: " + path);

    SceneTruth truth;
    const auto& jc = j.at("camera");
    truth.camera.fx = jc.at("fx").get<double>();
    truth.camera.fy = jc.at("fy").get<double>();
    truth.camera.cx = jc.at("cx").get<double>();
    truth.camera.cy = jc.at("cy").get<double>();
    truth.camera.width = jc.at("width").get<int>();
    truth.camera.height = jc.at("height").get<int>();
    for (const auto& ji : j.at("instances")) {
        InstanceTruth t;
        t.instance_id = ji.at("instance_id").get<int>();
        t.is_car = ji.at("is_car").get<bool>();
        t.pose = pose_from_json(ji.at("pose"));
        const auto shape = ji.at("shape").get<std::vector<double>>();
        t.shape = Eigen::Map<const Eigen::VectorXd>(shape.data(), shape.size());
        t.visibility = ji.at("visibility").get<double>();
        t.visible_pixels = ji.at("visible_pixels").get<int>();
        t.solo_pixels = ji.at("solo_pixels").get<int>();
        t.bbox_visible = box_from_json(ji.at("bbox_visible"));
        t.bbox_solo = box_from_json(ji.at("bbox_solo"));
        truth.instances.push_back(std::move(t));
    }
    return truth;
}

DatasetStats dataset_stats(const std::vector<Scene>& scenes, int azimuth_bins, int distance_bins,
                           double distance_lo, double distance_hi)
{
    if (scenes.empty())
        throw Error(Err::EmptyInput, "no scenes");
    if (azimuth_bins < 1 || distance_bins < 1 || !(distance_hi > distance_lo))
        throw Error(Err::InvalidArgument, "bad histogram layout");

    DatasetStats stats;
    stats.azimuth_hist.assign(azimuth_bins, 0);
    stats.distance_hist.assign(distance_bins, 0);
    stats.distance_lo = distance_lo;
    stats.distance_hi = distance_hi;
    for (const auto& scene : scenes) {
        for (const auto& inst : scene.instances) {
            if (!inst.is_car)
                continue;
            ++stats.car_count;
            // azimuth in (-pi, pi] onto [0, bins)
            const double a = wrap_angle(inst.pose.azimuth);
            int ab = static_cast<int>((a + M_PI) / (2 * M_PI) * azimuth_bins);
            ab = std::clamp(ab, 0, azimuth_bins - 1);
            ++stats.azimuth_hist[ab];
            const double frac = (inst.pose.distance - distance_lo) / (distance_hi - distance_lo);
            int db = static_cast<int>(frac * distance_bins);
            db = std::clamp(db, 0, distance_bins - 1);
            ++stats.distance_hist[db];
        }
    }
    return stats;
}

} // namespace carparts
