#pragma once

#include <map>
#include <string>
#include <vector>

#include "carparts/pose.hpp"
#include "carparts/scene.hpp"
#include "carparts/shape_space.hpp"

namespace carparts {

// one visible part of one instance: centroid of its labeled pixels
struct PartObservation {
    int part_id = 0;
    Vec2 centroid = Vec2::Zero();
    int pixel_count = 0;
};

struct InstanceObservation {
    int instance_id = 0;
    std::vector<PartObservation> parts;
};

// per-instance part centroids extracted from label maps (cars only)
std::vector<InstanceObservation> extract_observations(const LabelMaps& maps);

// centroid of each part label over a point set
std::map<int, Vec3> part_centroids(const std::vector<Vec3>& points,
                                   const std::vector<int>& labels);

struct PoseEstimate {
    CarPose pose;
    Eigen::VectorXd shape;
    double reprojection_rms = 0.0; // pixels, over part centroids
    bool converged = false;
    bool planar_fallback = false; // init fell back to the planar path
    bool skipped = false;         // < 4 visible parts (or no pixels)
    int instance_id = 0;
    std::string note;
};

// closed-form pose initialization from 2D part centroids matched to the
// 3D part centroids of the mean shape. Throws TooFewParts below 4 parts;
// coplanar configurations take a planar (homography-style) path and set
// the fallback flag.
PoseEstimate pnp_init(const std::vector<PartObservation>& parts, const ShapeSpace& space,
                      const Camera& camera);

struct RefineConfig {
    double shape_regularizer = 1e-2; // mu, pulls coefficients toward 0 (sigma units)
    double huber_delta = 3.0;        // pixels
    int max_iterations = 60;
    int visibility_updates = 3;      // recompute self-occlusion this many times
    double tolerance = 1e-10;        // relative cost plateau
    int shape_dims = -1;             // -1: all available components
    int min_part_pixels = 5;         // smaller part blobs are not trusted as observations
};

// Levenberg-Marquardt over (angles, center, distance, shape) minimizing
// robust reprojection error of predicted part centroids (mean of the
// projected camera-facing vertices of each part) against the observed
// centroids, plus mu * |shape|^2. The template mesh supplies the face
// normals used for the self-occlusion test.
PoseEstimate refine(const PoseEstimate& init, const std::vector<PartObservation>& parts,
                    const ShapeSpace& space, const LabeledMesh& template_mesh,
                    const Camera& camera, const RefineConfig& config = {});

// end-to-end driver: extract observations per instance, init + refine
// each; instances with fewer than 4 visible parts are skipped with a
// diagnostic, never aborting the scene
std::vector<PoseEstimate> solve_scene(const LabelMaps& maps, const ShapeSpace& space,
                                      const LabeledMesh& template_mesh, const Camera& camera,
                                      const RefineConfig& config = {});

// predicted part centroids for a pose/shape hypothesis: area-weighted
// centroid of the projected camera-facing faces of each part (the exact
// area centroid of the projected front surface when faces don't overlap)
std::map<int, Vec2> predict_part_centroids(const ShapeSpace& space,
                                           const LabeledMesh& template_mesh, const Camera& camera,
                                           const Eigen::VectorXd& shape, const Mat3& rotation,
                                           const Vec3& translation);

} // namespace carparts
