#include "carparts/procgen.hpp"

#include <cmath>

#include "carparts/error.hpp"
#include "carparts/rng.hpp"

namespace carparts {

namespace ep = eval_part;

void CarBlueprint::validate() const
{
    auto positive = [](double v, const char* what) {
        if (!(v > 0))
            throw Error(Err::InvalidArgument, std::string(what) + " must be positive");
    };
    positive(length, "length");
    positive(width, "width");
    positive(wheel_radius, "wheel radius");
    positive(wheel_width, "wheel width");
    positive(mirror_size, "mirror size");
    positive(rack_height, "rack height");
    if (!(clearance < nose_height && nose_height <= hood_height))
        throw Error(Err::InvalidArgument, "need clearance < nose height <= hood height");
    if (!(beltline >= hood_height && beltline >= trunk_height))
        throw Error(Err::InvalidArgument, "beltline must clear the hood and trunk");
    if (!(roof_height > beltline))
        throw Error(Err::InvalidArgument, "roof must sit above the beltline");
    const double frac_sum =
        hood_frac + windscreen_frac + roof_frac + rear_window_frac + trunk_frac;
    if (!(hood_frac > 0 && windscreen_frac > 0 && roof_frac > 0 && rear_window_frac > 0 &&
          trunk_frac > 0 && frac_sum < 0.99))
        throw Error(Err::InvalidArgument, "length fractions must be positive and leave a nose");
    if (!(wheelbase_frac > 0 && wheelbase_frac < 1))
        throw Error(Err::InvalidArgument, "wheelbase fraction must lie in (0,1)");
    if (wheelbase_frac * length / 2 + wheel_radius >= length / 2)
        throw Error(Err::InvalidArgument, "wheels would stick out past the bumpers");
    if (wheel_width >= width / 2)
        throw Error(Err::InvalidArgument, "wheels too wide for the track");
}

CarBlueprint sample_blueprint(std::uint64_t seed)
{
    Rng rng(detail::splitmix64(seed ^ 0x9e3779b97f4a7c15ull));
    CarBlueprint bp;
    bp.length = rng.uniform(4.2, 5.0);
    bp.width = rng.uniform(1.70, 1.95);
    bp.hood_height = rng.uniform(0.85, 0.98);
    bp.trunk_height = rng.uniform(0.98, 1.10);
    bp.nose_height = rng.uniform(0.65, 0.80);
    bp.clearance = rng.uniform(0.16, 0.26);
    bp.beltline = std::max(bp.hood_height, bp.trunk_height) + rng.uniform(0.02, 0.08);
    bp.roof_height = bp.beltline + rng.uniform(0.35, 0.50);

    const double nose_w = rng.uniform(0.08, 0.12);
    const double hood_w = rng.uniform(0.20, 0.27);
    const double ws_w = rng.uniform(0.13, 0.18);
    const double roof_w = rng.uniform(0.26, 0.34);
    const double rw_w = rng.uniform(0.10, 0.14);
    const double trunk_w = rng.uniform(0.09, 0.15);
    const double total = nose_w + hood_w + ws_w + roof_w + rw_w + trunk_w;
    bp.hood_frac = hood_w / total;
    bp.windscreen_frac = ws_w / total;
    bp.roof_frac = roof_w / total;
    bp.rear_window_frac = rw_w / total;
    bp.trunk_frac = trunk_w / total;

    bp.wheel_radius = rng.uniform(0.30, 0.36);
    bp.wheel_width = rng.uniform(0.18, 0.24);
    bp.wheelbase_frac = rng.uniform(0.56, 0.64);
    bp.mirror_size = rng.uniform(0.08, 0.12);
    bp.rack_height = rng.uniform(0.04, 0.08);
    bp.validate();
    return bp;
}

namespace {

// Mesh assembly in a working frame with x right, u = height above ground,
// z forward; converted to the model frame (y down, origin at bbox center)
// at the end. Quads never share vertices across calls, so the tessellation
// topology depends only on the code path, never on the parameter values.
struct Builder {
    LabeledMesh mesh;

    int add_vertex(double x, double u, double z)
    {
        mesh.vertices.emplace_back(x, -u, z);
        return static_cast<int>(mesh.vertices.size()) - 1;
    }
    // takes counter-clockwise-from-outside order in the working frame; the
    // height flip into the model frame mirrors the winding, so store the
    // reversed order to keep cross-product normals pointing outward
    void add_tri(int a, int b, int c, int label)
    {
        mesh.faces.push_back({a, c, b});
        mesh.face_part_labels.push_back(label);
    }
    // corners in counter-clockwise order as seen from outside
    void add_quad(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, int label)
    {
        const int i0 = add_vertex(a.x(), a.y(), a.z());
        const int i1 = add_vertex(b.x(), b.y(), b.z());
        const int i2 = add_vertex(c.x(), c.y(), c.z());
        const int i3 = add_vertex(d.x(), d.y(), d.z());
        add_tri(i0, i1, i2, label);
        add_tri(i0, i2, i3, label);
    }
    // axis-aligned box given min/max corners in the working frame
    void add_box(const Vec3& lo, const Vec3& hi, int label)
    {
        const double x0 = lo.x(), u0 = lo.y(), z0 = lo.z();
        const double x1 = hi.x(), u1 = hi.y(), z1 = hi.z();
        add_quad({x0, u1, z1}, {x1, u1, z1}, {x1, u1, z0}, {x0, u1, z0}, label); // top
        add_quad({x0, u0, z0}, {x1, u0, z0}, {x1, u0, z1}, {x0, u0, z1}, label); // bottom
        add_quad({x0, u0, z1}, {x1, u0, z1}, {x1, u1, z1}, {x0, u1, z1}, label); // front
        add_quad({x1, u0, z0}, {x0, u0, z0}, {x0, u1, z0}, {x1, u1, z0}, label); // rear
        add_quad({x1, u0, z1}, {x1, u0, z0}, {x1, u1, z0}, {x1, u1, z1}, label); // right
        add_quad({x0, u0, z0}, {x0, u0, z1}, {x0, u1, z1}, {x0, u1, z0}, label); // left
    }
    // cylinder along one working axis (0 = x, 1 = height)
    void add_cylinder(const Vec3& center, int axis, double radius, double half_len, int segments,
                      int label)
    {
        auto ring_point = [&](double end, int k) {
            const double a = 2 * M_PI * k / segments;
            const double c = radius * std::cos(a), s = radius * std::sin(a);
            Vec3 p = center;
            if (axis == 0) {
                p.x() += end;
                p.y() += c;
                p.z() += s;
            } else {
                p.y() += end;
                p.x() += c;
                p.z() += s;
            }
            return p;
        };
        for (int k = 0; k < segments; ++k) {
            const int k1 = (k + 1) % segments;
            const Vec3 a0 = ring_point(-half_len, k), a1 = ring_point(-half_len, k1);
            const Vec3 b0 = ring_point(half_len, k), b1 = ring_point(half_len, k1);
            add_quad(a0, b0, b1, a1, label); // barrel
            Vec3 cap_lo = center, cap_hi = center;
            (axis == 0 ? cap_lo.x() : cap_lo.y()) -= half_len;
            (axis == 0 ? cap_hi.x() : cap_hi.y()) += half_len;
            const int c0 = add_vertex(cap_lo.x(), cap_lo.y(), cap_lo.z());
            const int v0 = add_vertex(a0.x(), a0.y(), a0.z());
            const int v1 = add_vertex(a1.x(), a1.y(), a1.z());
            add_tri(c0, v0, v1, label);
            const int c1 = add_vertex(cap_hi.x(), cap_hi.y(), cap_hi.z());
            const int w0 = add_vertex(b0.x(), b0.y(), b0.z());
            const int w1 = add_vertex(b1.x(), b1.y(), b1.z());
            add_tri(c1, w1, w0, label);
        }
    }
};

} // namespace

LabeledMesh make_car_mesh(const CarBlueprint& bp)
{
    bp.validate();
    Builder b;
    const double L = bp.length, W = bp.width, hw = W / 2;

    // longitudinal stations, nose (+z) to tail (-z)
    const double z0 = L / 2;
    const double nose_frac =
        1.0 - (bp.hood_frac + bp.windscreen_frac + bp.roof_frac + bp.rear_window_frac +
               bp.trunk_frac);
    const double z1 = z0 - nose_frac * L;
    const double z2 = z1 - bp.hood_frac * L;
    const double z3 = z2 - bp.windscreen_frac * L;
    const double z4 = z3 - bp.roof_frac * L;
    const double z5 = z4 - bp.rear_window_frac * L;
    const double z6 = -L / 2;
    const double station_z[7] = {z0, z1, z2, z3, z4, z5, z6};
    const double station_h[7] = {bp.nose_height, bp.hood_height,  bp.hood_height,
                                 bp.roof_height, bp.roof_height,  bp.trunk_height,
                                 bp.trunk_height};
    const int strip_top_label[6] = {ep::hood,        ep::hood,        ep::front_window,
                                    ep::roof,        ep::rear_window, ep::rear_part};
    const int strip_side_lower[6] = {ep::background, ep::background, ep::door,
                                     ep::door,       ep::door,       ep::background};
    const bool strip_is_cabin[6] = {false, false, true, true, true, false};

    for (int s = 0; s < 6; ++s) {
        const double za = station_z[s], zb = station_z[s + 1];
        const double ha = station_h[s], hb = station_h[s + 1];
        // top strip, full width, seen from above
        b.add_quad({-hw, ha, za}, {hw, ha, za}, {hw, hb, zb}, {-hw, hb, zb},
                   strip_top_label[s]);
        // bottom strip, seen from below
        b.add_quad({-hw, bp.clearance, zb}, {hw, bp.clearance, zb}, {hw, bp.clearance, za},
                   {-hw, bp.clearance, za}, ep::background);
        // side bands: clearance -> min(beltline, profile), then up to the profile
        const double ba = std::min(bp.beltline, ha), bb = std::min(bp.beltline, hb);
        const int upper = strip_is_cabin[s] ? ep::side_window : ep::background;
        // right side (+x), outward normal +x
        b.add_quad({hw, bp.clearance, za}, {hw, bp.clearance, zb}, {hw, bb, zb}, {hw, ba, za},
                   strip_side_lower[s]);
        b.add_quad({hw, ba, za}, {hw, bb, zb}, {hw, hb, zb}, {hw, ha, za}, upper);
        // left side (-x)
        b.add_quad({-hw, bp.clearance, zb}, {-hw, bp.clearance, za}, {-hw, ba, za},
                   {-hw, bb, zb}, strip_side_lower[s]);
        b.add_quad({-hw, bb, zb}, {-hw, ba, za}, {-hw, ha, za}, {-hw, hb, zb}, upper);
    }

    // front face at z0 and rear face at z6: 3 columns x 2 rows, lights in the
    // upper corners
    const double cols[4] = {-hw, -hw / 3, hw / 3, hw};
    {
        const double mid_f = (bp.clearance + bp.nose_height) / 2;
        const double mid_r = (bp.clearance + bp.trunk_height) / 2;
        for (int col = 0; col < 3; ++col) {
            const double xa = cols[col], xb = cols[col + 1];
            const bool corner = col != 1;
            // front, outward normal +z
            b.add_quad({xa, bp.clearance, z0}, {xb, bp.clearance, z0}, {xb, mid_f, z0},
                       {xa, mid_f, z0}, ep::front_part);
            b.add_quad({xa, mid_f, z0}, {xb, mid_f, z0}, {xb, bp.nose_height, z0},
                       {xa, bp.nose_height, z0}, corner ? ep::front_light : ep::front_part);
            // rear, outward normal -z
            b.add_quad({xb, bp.clearance, z6}, {xa, bp.clearance, z6}, {xa, mid_r, z6},
                       {xb, mid_r, z6}, ep::rear_part);
            b.add_quad({xb, mid_r, z6}, {xa, mid_r, z6}, {xa, bp.trunk_height, z6},
                       {xb, bp.trunk_height, z6}, corner ? ep::tail_light : ep::rear_part);
        }
    }

    // wheels: cylinders along x, protruding 1 cm past the body sides
    const double wb = bp.wheelbase_frac * L;
    const double wheel_x = hw + 0.01 - bp.wheel_width / 2;
    for (const double sx : {1.0, -1.0})
        for (const double sz : {1.0, -1.0})
            b.add_cylinder({sx * wheel_x, bp.wheel_radius, sz * wb / 2}, 0, bp.wheel_radius,
                           bp.wheel_width / 2, 12, ep::wheel_tire);

    // mirrors at the windscreen base, standing 5 mm off the body so no
    // mirror face is coplanar with a side panel
    const double m = bp.mirror_size;
    for (const double sx : {1.0, -1.0}) {
        const double x_out = sx * (hw + 0.005 + m), x_in = sx * (hw + 0.005);
        b.add_box({std::min(x_in, x_out), bp.beltline, z2 - m},
                  {std::max(x_in, x_out), bp.beltline + m, z2}, ep::mirror);
    }

    // roof rack: thin box floating 5 mm above the roof (again avoiding a
    // coplanar face pair), inset from the roof edges
    {
        const double span = z3 - z4;
        b.add_box({-W / 3, bp.roof_height + 0.005, z4 + 0.15 * span},
                  {W / 3, bp.roof_height + 0.005 + bp.rack_height, z3 - 0.15 * span},
                  ep::roof_rack);
    }

    // recenter: origin at the bounding-box center
    Vec3 lo = b.mesh.vertices.front(), hi = lo;
    for (const auto& v : b.mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const Vec3 center = (lo + hi) / 2;
    for (auto& v : b.mesh.vertices)
        v -= center;

    b.mesh.dimensions.length = L;
    b.mesh.dimensions.width = W;
    b.mesh.dimensions.height = bp.roof_height + 0.005 + bp.rack_height;
    b.mesh.dimensions.wheelbase = wb;
    b.mesh.category_id = 0;
    b.mesh.validate();
    return b.mesh;
}

std::vector<LabeledMesh> make_fleet(int count, std::uint64_t seed)
{
    if (count < 1)
        throw Error(Err::EmptyInput, "fleet needs at least one car");
    std::vector<LabeledMesh> fleet;
    fleet.reserve(count);
    for (int i = 0; i < count; ++i)
        fleet.push_back(make_car_mesh(sample_blueprint(substream_seed(seed, "blueprint", i))));
    return fleet;
}

LabeledMesh make_box_mesh(const Vec3& half_extents, int label)
{
    if (!(half_extents.minCoeff() > 0))
        throw Error(Err::InvalidArgument, "box extents must be positive");
    Builder b;
    // working frame height = -model y; add_box expects ground-frame corners
    b.add_box({-half_extents.x(), -half_extents.y(), -half_extents.z()},
              {half_extents.x(), half_extents.y(), half_extents.z()}, label);
    b.mesh.dimensions.width = 2 * half_extents.x();
    b.mesh.dimensions.height = 2 * half_extents.y();
    b.mesh.dimensions.length = 2 * half_extents.z();
    b.mesh.dimensions.wheelbase = 2 * half_extents.z();
    b.mesh.validate();
    return b.mesh;
}

LabeledMesh make_cylinder_mesh(double radius, double height, int segments, int label)
{
    if (!(radius > 0 && height > 0))
        throw Error(Err::InvalidArgument, "cylinder needs positive radius and height");
    if (segments < 3)
        throw Error(Err::InvalidArgument, "cylinder needs at least 3 segments");
    Builder b;
    b.add_cylinder({0, 0, 0}, 1, radius, height / 2, segments, label);
    b.mesh.dimensions.width = 2 * radius;
    b.mesh.dimensions.height = height;
    b.mesh.dimensions.length = 2 * radius;
    b.mesh.dimensions.wheelbase = 2 * radius;
    b.mesh.validate();
    return b.mesh;
}

} // namespace carparts
