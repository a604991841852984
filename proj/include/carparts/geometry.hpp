#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "carparts/error.hpp"

namespace carparts {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Physical dimensions of a car model, in meters.
struct CarDimensions {
    double wheelbase = 0.0;
    double width = 0.0;
    double height = 0.0;
    double length = 0.0;
};

// Triangle mesh with one part label per face.
struct LabeledMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<int> face_part_labels;
    CarDimensions dimensions;
    int category_id = 0;

    void validate() const; // throws InvalidArgument on broken invariants
    double surface_area() const;
};

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<int> labels;    // optional: empty or size() == points.size()
    std::vector<Vec3> normals;  // optional: empty or size() == points.size(), unit length

    void validate() const;
    size_t size() const { return points.size(); }
    bool has_labels() const { return !labels.empty(); }
    bool has_normals() const { return !normals.empty(); }
};

enum class PartCategory { Light, Body, Window, Others };

struct PartDef {
    int id = 0;
    std::string name;
    PartCategory category = PartCategory::Others;
};

// Ordered list of semantic parts plus the optional map from the full
// taxonomy onto the reduced evaluation set.
struct PartTaxonomy {
    std::vector<PartDef> parts;
    std::vector<int> reduction_map; // full id -> reduced id (0 = background/other); empty if none

    void validate() const;
    int size() const { return static_cast<int>(parts.size()); }
    int reduce(int id) const
    {
        if (reduction_map.empty())
            return id;
        if (id < 0 || id >= static_cast<int>(reduction_map.size()))
            throw Error(Err::OutOfRange, "part id outside taxonomy");
        return reduction_map[id];
    }
};

// The 70 exterior parts of the full annotation scheme, with the reduction
// onto the 13-class evaluation set.
PartTaxonomy full_taxonomy();

// The reduced 13-class evaluation set (ids 1..13, 0 = background).
PartTaxonomy eval_taxonomy();

namespace eval_part {
// Canonical ids within eval_taxonomy(), in the order the classes are
// reported by the segmentation benchmark.
enum : int {
    background = 0,
    front_light = 1,
    front_part = 2,
    tail_light = 3,
    rear_part = 4,
    door = 5,
    roof = 6,
    roof_rack = 7,
    hood = 8,
    mirror = 9,
    side_window = 10,
    front_window = 11,
    rear_window = 12,
    wheel_tire = 13,
    count = 14, // including background
};
}

// Uniform-grid spatial index over a fixed point set. Nearest queries are
// exact: cells are expanded ring by ring until the best candidate provably
// beats anything in un-visited cells.
class PointGrid {
public:
    PointGrid() = default;
    PointGrid(const std::vector<Vec3>& points, double cell_size);

    // index of nearest point and its distance
    std::pair<int, double> nearest(const Vec3& query) const;

    // true if any indexed point lies strictly within `radius` of query
    bool any_within(const Vec3& query, double radius) const;

    size_t size() const { return points_.size(); }

private:
    std::vector<Vec3> points_;
    double cell_ = 1.0;
    Vec3 origin_ = Vec3::Zero();
    int nx_ = 0, ny_ = 0, nz_ = 0;
    std::vector<std::vector<int>> cells_;

    int cell_index(int ix, int iy, int iz) const { return (iz * ny_ + iy) * nx_ + ix; }
    void cell_of(const Vec3& p, int& ix, int& iy, int& iz) const;
};

// Uniform surface re-sampling by area-weighted dart throwing with a
// Poisson-disk rejection radius. Every surviving face label appears in the
// output; samples inherit the label and normal of their source face.
PointCloud remesh_uniform(const LabeledMesh& mesh, double spacing, std::uint64_t seed = 0);

// Per-vertex part labels inherited from the faces; when a vertex sits on
// faces with different labels the first face wins. Vertices on no face
// stay at 0.
std::vector<int> vertex_labels(const LabeledMesh& mesh);

// Exact nearest neighbor. Builds a temporary grid; for repeated queries
// against the same cloud build a PointGrid once instead.
std::pair<int, double> nearest_neighbor(const Vec3& query, const PointCloud& cloud);

// Brute-force scan, used as the oracle for the grid index.
std::pair<int, double> nearest_neighbor_linear(const Vec3& query, const std::vector<Vec3>& points);

// ASCII OBJ subset: v/f records, g and usemtl group names. Quads are
// rejected; the sidecar JSON maps face ranges or group names to part ids
// and carries dimensions and the category id. save_obj writes the mesh plus
// a matching "<stem>.labels.json" sidecar next to it.
LabeledMesh load_labeled_mesh(const std::string& obj_path, const std::string& sidecar_json_path);
void save_obj(const std::string& obj_path, const LabeledMesh& mesh);

// ASCII PLY with x y z [nx ny nz] [label] vertex properties.
void save_cloud_ply(const std::string& path, const PointCloud& cloud);
PointCloud load_cloud_ply(const std::string& path);

} // namespace carparts
