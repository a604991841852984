#pragma once

#include <cstdint>
#include <vector>

#include "carparts/geometry.hpp"

namespace carparts {

// parametric sedan-like car used to build test fleets. Every blueprint
// tessellates to the identical topology (same vertex count, face list,
// and face labels), so fleet vertices form corresponded point sets ready
// for shape-space construction.
//
// Model frame: x to the car's right, y down, z forward (nose at +z);
// the origin sits at the bounding-box center.
struct CarBlueprint {
    double length = 4.6;
    double width = 1.8;
    double roof_height = 1.48;      // ground to roof
    double hood_height = 0.92;      // ground to hood surface
    double trunk_height = 1.05;     // ground to trunk lid
    double nose_height = 0.72;      // ground to front edge
    double clearance = 0.22;        // ground to body bottom
    double beltline = 1.10;         // ground to window sill
    // longitudinal split as fractions of the length, front to rear:
    // nose taper, hood, windscreen, roof, rear window, trunk (sum 1)
    double hood_frac = 0.24;
    double windscreen_frac = 0.16;
    double roof_frac = 0.30;
    double rear_window_frac = 0.12;
    double trunk_frac = 0.12;       // nose_frac is the remainder
    double wheel_radius = 0.33;
    double wheel_width = 0.22;
    double wheelbase_frac = 0.60;   // wheelbase / length
    double mirror_size = 0.10;
    double rack_height = 0.06;

    void validate() const;
};

// deterministic random blueprint within plausible street-car ranges
CarBlueprint sample_blueprint(std::uint64_t seed);

// tessellate a blueprint; face labels use the 13-part evaluation ids
LabeledMesh make_car_mesh(const CarBlueprint& bp);

// fleet of `count` corresponded car meshes (identical topology)
std::vector<LabeledMesh> make_fleet(int count, std::uint64_t seed);

// simple primitives used for occluders (all faces share one label)
LabeledMesh make_box_mesh(const Vec3& half_extents, int label = 0);
LabeledMesh make_cylinder_mesh(double radius, double height, int segments = 16, int label = 0);

} // namespace carparts
