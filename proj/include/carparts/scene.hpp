#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "carparts/features.hpp"
#include "carparts/geometry.hpp"
#include "carparts/image.hpp"
#include "carparts/pose.hpp"
#include "carparts/shape_space.hpp"

namespace carparts {

struct Range {
    double lo = 0.0, hi = 0.0;
    bool empty() const { return hi < lo; }
};

struct IntRange {
    int lo = 0, hi = 0;
    bool empty() const { return hi < lo; }
};

// street-view-like default intrinsics (1920x1208, focal 2300 px)
Camera default_scene_camera();

// rescale intrinsics to a different output resolution
Camera scale_camera(const Camera& cam, int width, int height);

struct SceneConfig {
    std::uint64_t seed = 0;
    IntRange car_count{5, 15};
    IntRange occluder_count{0, 6};
    IntRange light_count{5, 20};
    Camera camera = default_scene_camera();
    Range camera_height{1.3, 1.7};   // meters above the ground plane
    Range camera_pitch{0.0, 0.12};   // radians, positive looks down
    Range distance{6.0, 60.0};       // ground distance from the camera
    Range shape_range{-1.5, 1.5};    // per-component shape coefficient bounds
    int max_placement_attempts = 120;

    void validate() const;
};

// oriented rectangle on the ground plane, used for collision rejection
struct Footprint {
    Vec2 center = Vec2::Zero();
    Vec2 axis = Vec2::UnitX(); // unit heading
    Vec2 half = Vec2::Ones();  // half extents along (axis, perp)
};

// separating-axis overlap test for two oriented rectangles
bool footprints_overlap(const Footprint& a, const Footprint& b);

struct SceneInstance {
    int instance_id = 0; // 1-based; 0 is background
    bool is_car = true;
    Eigen::VectorXd shape;        // cars only
    LabeledMesh mesh;             // model frame
    Mat3 cam_rotation = Mat3::Identity();
    Vec3 cam_translation = Vec3::Zero();
    Footprint footprint;
    CarPose pose;                 // derived viewpoint form (cars and occluders)
};

struct Scene {
    Camera camera;
    double camera_height = 1.5;
    double camera_pitch = 0.0;
    std::vector<SceneInstance> instances;
    std::vector<Vec3> light_directions; // unit vectors, world frame
    std::uint64_t seed = 0;
    int requested_cars = 0;
    int dropped_placements = 0; // objects dropped after max_placement_attempts
};

// sample car shapes from the space (vertices poured into the template
// topology), sample occluder primitives, and rejection-place everything
// on the ground plane with non-overlapping footprints. Deterministic per
// (config, scene_index): each scene owns an independent RNG substream.
Scene place_scene(const SceneConfig& cfg, const ShapeSpace& space,
                  const LabeledMesh& template_mesh, std::uint64_t scene_index = 0);

struct InstanceTruth {
    int instance_id = 0;
    bool is_car = true;
    CarPose pose;
    Eigen::VectorXd shape;
    double visibility = 0.0; // visible pixels / solo-render pixels
    int visible_pixels = 0;
    int solo_pixels = 0;
    Box bbox_visible; // pixel bounds of visible pixels (empty when none)
    Box bbox_solo;    // pixel bounds of the unoccluded solo render
};

struct LabelMaps {
    Image<uint16_t> part_map;     // 0 = background
    Image<uint16_t> instance_map; // 0 = background
    Image<float> depth_map;       // +inf = background
    std::vector<InstanceTruth> truth;
};

// near plane shared by the rasterizer and any exact per-pixel oracle: a
// face with any camera-frame vertex depth <= this is skipped whole
inline constexpr double raster_near_plane = 0.25;

// z-buffered triangle rasterization of every instance at the given
// resolution (camera intrinsics are rescaled). Nearest face wins with a
// strict depth compare; faces with any vertex closer than the near plane
// are skipped whole. Visibility fractions come from per-instance solo
// re-renders.
LabelMaps rasterize(const Scene& scene, int width, int height);

// per-scene ground truth JSON (camera, instances, poses, shapes)
void save_scene_truth(const std::string& path, const Scene& scene, const LabelMaps& maps);
struct SceneTruth {
    Camera camera;
    std::vector<InstanceTruth> instances;
};
SceneTruth load_scene_truth(const std::string& path);

// orientation / distance histograms over every car of every scene
struct DatasetStats {
    std::vector<int> azimuth_hist;  // over (-pi, pi]
    std::vector<int> distance_hist; // over [lo, hi]
    double distance_lo = 0.0, distance_hi = 0.0;
    int car_count = 0;
};

DatasetStats dataset_stats(const std::vector<Scene>& scenes, int azimuth_bins = 16,
                           int distance_bins = 16, double distance_lo = 0.0,
                           double distance_hi = 80.0);

} // namespace carparts
