#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "carparts/geometry.hpp"

namespace carparts {

// rigid-plus-scale map p -> scale * rotation * p + translation
struct SimilarityTransform {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
    SimilarityTransform inverse() const;
    SimilarityTransform then(const SimilarityTransform& outer) const; // outer ∘ this
    Eigen::Matrix4d matrix() const;
};

// closed-form least-squares alignment of paired points (Umeyama).
// Throws DegenerateConfiguration when the pairs cannot pin down a unique
// rotation (fewer than 3 pairs, or pairs collinear).
SimilarityTransform align_pairs(const std::vector<Vec3>& source, const std::vector<Vec3>& target,
                                bool with_scaling);

struct IcpConfig {
    int max_iterations = 60;
    double trim_fraction = 0.10; // drop this share of worst matches per iteration
    double tolerance = 1e-8;     // stop when rms improves by less than this (meters)
    bool with_scaling = true;
};

struct IcpResult {
    SimilarityTransform transform; // maps source into target frame
    double rms = 0.0;              // trimmed rms at the last iteration
    int iterations = 0;
    bool converged = false;        // hit the tolerance before max_iterations
    bool still_improving = false;  // stopped at the cap while rms fell > 1e-4 m/iter
};

// trimmed point-to-point ICP with closed-form similarity updates
IcpResult icp_align(const std::vector<Vec3>& source, const std::vector<Vec3>& target,
                    const SimilarityTransform& init = {}, const IcpConfig& config = {});

// ------------------------------------------------------------------ embedded deformation

// sparse graph of deformation nodes embedded in the source surface; each
// node carries a local affine transform optimized during registration
struct DeformationGraph {
    std::vector<Vec3> nodes;
    std::vector<std::pair<int, int>> edges; // undirected, i < j; nodes sharing a skinned point
    int skinning_neighbors = 4;             // k
};

struct NodeTransform {
    Mat3 A = Mat3::Identity();
    Vec3 t = Vec3::Zero();
};

// per-point skinning: (node index, weight) pairs, weights sum to 1.
// w_j ∝ (1 - d_j/d_max)^2 with d_max the distance to the (k+1)-th nearest
// node; a point coinciding with a node gets full weight there.
using Skinning = std::vector<std::vector<std::pair<int, double>>>;

// nodes are a uniform subsample of the cloud at node_spacing; throws
// InsufficientNodes when fewer than k nodes result
DeformationGraph build_deformation_graph(const std::vector<Vec3>& points, double node_spacing = 0.15,
                                         int skinning_neighbors = 4);

Skinning compute_skinning(const std::vector<Vec3>& points, const DeformationGraph& graph);

// v' = sum_j w_j [A_j (v - g_j) + g_j + t_j]
std::vector<Vec3> deform(const std::vector<Vec3>& points, const DeformationGraph& graph,
                         const std::vector<NodeTransform>& params, const Skinning& skinning);

struct DeformConfig {
    double w_fit = 1.0;
    double w_rot = 1.0;
    double w_reg = 10.0;
    int outer_iterations = 16; // nearest-neighbor re-matching per pass
    int gauss_newton_iterations = 4;
    double trim_fraction = 0.10;
    double tolerance = 1e-3;   // relative plateau on total energy
};

struct DeformResult {
    std::vector<Vec3> deformed;
    std::vector<NodeTransform> params;
    double fit_rms = 0.0;             // rms of trimmed matches at the end
    std::vector<double> energy_trace; // total energy after each accepted step
    bool solver_failed = false;       // normal equations stayed singular
};

// non-rigid registration of `source` onto `target`; assumes a prior rigid
// alignment. Gauss-Newton with Levenberg damping; steps that would raise
// the energy are rejected and retried with more damping, so energy_trace
// is non-increasing.
DeformResult register_deformable(const std::vector<Vec3>& source, const std::vector<Vec3>& target,
                                 const DeformationGraph& graph, const DeformConfig& config = {});

// ------------------------------------------------------------------ correspondence

struct CorrespondenceMap {
    std::vector<std::uint32_t> model_index; // per template point: matched model point
    std::vector<float> residual;            // meters, at the match
    double coverage = 0.0;                  // fraction with residual below threshold
    double threshold = 0.0;                 // meters (2x sample spacing by default)
};

// rigid ICP, then embedded deformation, then nearest-point pairing of the
// deformed template against the model
CorrespondenceMap dense_correspond(const PointCloud& template_cloud, const PointCloud& model_cloud,
                                   double sample_spacing, const IcpConfig& icp_cfg = {},
                                   const DeformConfig& deform_cfg = {});

// majority label among template points matched to each model point;
// unmatched model points inherit the nearest labeled model point's label
std::vector<int> transfer_labels(const CorrespondenceMap& map,
                                 const std::vector<int>& template_labels,
                                 const std::vector<Vec3>& model_points);

// little-endian binary table: u32 count, then (u32 index, f32 residual)
void save_correspondence(const std::string& path, const CorrespondenceMap& map);
CorrespondenceMap load_correspondence(const std::string& path);

} // namespace carparts
