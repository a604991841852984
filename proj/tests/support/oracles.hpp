#pragma once

// Independent reference implementations the test suites compare against.
// Everything here is deliberately brute-force and self-contained: no reuse
// of the library's internals beyond public data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "carparts/geometry.hpp"
#include "carparts/pose.hpp"
#include "carparts/rng.hpp"
#include "carparts/scene.hpp"

namespace oracle {

using carparts::Vec2;
using carparts::Vec3;
using carparts::Mat3;

// ---------------------------------------------------------------- gradients

// central finite difference of a scalar function at x
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-5)
{
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd p = x;
    for (int i = 0; i < x.size(); ++i) {
        p[i] = x[i] + h;
        const double up = f(p);
        p[i] = x[i] - h;
        const double dn = f(p);
        p[i] = x[i];
        g[i] = (up - dn) / (2 * h);
    }
    return g;
}

// worst relative disagreement between analytic and reference gradients,
// scaled by the largest reference entry so tiny components don't explode
inline double gradient_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& fd)
{
    const double scale = std::max({fd.cwiseAbs().maxCoeff(), analytic.cwiseAbs().maxCoeff(), 1e-6});
    return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

// ------------------------------------------------------------- random draws

inline Mat3 random_rotation(carparts::Rng& rng)
{
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    return q.toRotationMatrix();
}

inline std::vector<Vec3> random_cloud(carparts::Rng& rng, int n, double extent = 1.0)
{
    std::vector<Vec3> pts(n);
    for (auto& p : pts)
        p = Vec3(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                 rng.uniform(-extent, extent));
    return pts;
}

// ------------------------------------------------------ nearest neighbors

// nearest neighbor excluding the query point itself, via a throwaway hash
// grid; falls back to widening rings so the result is exact
inline std::vector<double> nn_distances_excluding_self(const std::vector<Vec3>& pts,
                                                       double cell, size_t stride = 1)
{
    auto key = [&](int x, int y, int z) {
        return (static_cast<long long>(x) * 73856093LL) ^ (static_cast<long long>(y) * 19349663LL) ^
               (static_cast<long long>(z) * 83492791LL);
    };
    auto cell_of = [&](const Vec3& p, int& x, int& y, int& z) {
        x = static_cast<int>(std::floor(p.x() / cell));
        y = static_cast<int>(std::floor(p.y() / cell));
        z = static_cast<int>(std::floor(p.z() / cell));
    };
    std::unordered_map<long long, std::vector<int>> grid;
    for (size_t i = 0; i < pts.size(); ++i) {
        int x, y, z;
        cell_of(pts[i], x, y, z);
        grid[key(x, y, z)].push_back(static_cast<int>(i));
    }

    std::vector<double> out;
    for (size_t i = 0; i < pts.size(); i += stride) {
        int cx, cy, cz;
        cell_of(pts[i], cx, cy, cz);
        double best = std::numeric_limits<double>::infinity();
        for (int shell = 0; shell <= 64; ++shell) {
            for (int dz = -shell; dz <= shell; ++dz)
                for (int dy = -shell; dy <= shell; ++dy)
                    for (int dx = -shell; dx <= shell; ++dx) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != shell)
                            continue;
                        auto it = grid.find(key(cx + dx, cy + dy, cz + dz));
                        if (it == grid.end())
                            continue;
                        for (int j : it->second)
                            if (static_cast<size_t>(j) != i)
                                best = std::min(best, (pts[j] - pts[i]).norm());
                    }
            // anything in an unvisited cell lies at least shell*cell away
            if (best <= shell * cell)
                break;
        }
        out.push_back(best);
    }
    return out;
}

// ------------------------------------------------- rectangle overlap oracle

// convex-polygon overlap decided from first principles: two convex polygons
// intersect iff a vertex of one lies inside the other or any edges cross
struct Quad {
    std::array<Vec2, 4> corner;
};

inline Quad quad_of(const carparts::Footprint& f)
{
    const Vec2 u = f.axis;
    const Vec2 v(-u.y(), u.x());
    Quad q;
    q.corner[0] = f.center + f.half.x() * u + f.half.y() * v;
    q.corner[1] = f.center - f.half.x() * u + f.half.y() * v;
    q.corner[2] = f.center - f.half.x() * u - f.half.y() * v;
    q.corner[3] = f.center + f.half.x() * u - f.half.y() * v;
    return q;
}

inline double cross2(const Vec2& a, const Vec2& b)
{
    return a.x() * b.y() - a.y() * b.x();
}

inline bool point_in_quad(const Vec2& p, const Quad& q)
{
    // consistent orientation: all cross products share a sign (or zero)
    double lo = 0, hi = 0;
    for (int i = 0; i < 4; ++i) {
        const Vec2 a = q.corner[i];
        const Vec2 b = q.corner[(i + 1) % 4];
        const double c = cross2(b - a, p - a);
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    return lo >= 0 || hi <= 0;
}

inline bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d)
{
    const double d1 = cross2(b - a, c - a);
    const double d2 = cross2(b - a, d - a);
    const double d3 = cross2(d - c, a - c);
    const double d4 = cross2(d - c, b - c);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

inline bool quads_overlap(const carparts::Footprint& fa, const carparts::Footprint& fb)
{
    const Quad a = quad_of(fa), b = quad_of(fb);
    for (int i = 0; i < 4; ++i) {
        if (point_in_quad(a.corner[i], b) || point_in_quad(b.corner[i], a))
            return true;
    }
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (segments_cross(a.corner[i], a.corner[(i + 1) % 4], b.corner[j],
                               b.corner[(j + 1) % 4]))
                return true;
    return false;
}

// ------------------------------------------------------- per-pixel ray cast

// Brute-force ray-casting reference for the rasterizer: for every pixel,
// cast the ray through the pixel center and intersect it against every
// face of every instance, keeping the nearest hit. The intersection is
// evaluated in projective form — the ray hits a (fully in-front) triangle
// iff the pixel center falls inside its projected image, and the hit depth
// follows from perspective-correct interpolation — which is exact, so the
// comparison against the incremental z-buffer pass is bit-for-bit.
struct RayCastMaps {
    carparts::Image<std::uint16_t> part;
    carparts::Image<std::uint16_t> instance;
    carparts::Image<float> depth;
};

inline RayCastMaps ray_cast_scene(const carparts::Scene& scene, int width, int height)
{
    const carparts::Camera cam = carparts::scale_camera(scene.camera, width, height);
    RayCastMaps maps{carparts::Image<std::uint16_t>(width, height, 0),
                     carparts::Image<std::uint16_t>(width, height, 0),
                     carparts::Image<float>(width, height, std::numeric_limits<float>::infinity())};

    struct FrontFace {
        Vec2 a, b, c;
        double iz0, iz1, iz2;
        double area;
        std::uint16_t part, instance;
    };
    std::vector<FrontFace> faces;
    for (const auto& inst : scene.instances) {
        std::vector<Vec3> pc(inst.mesh.vertices.size());
        for (size_t i = 0; i < pc.size(); ++i)
            pc[i] = inst.cam_rotation * inst.mesh.vertices[i] + inst.cam_translation;
        for (size_t f = 0; f < inst.mesh.faces.size(); ++f) {
            const auto& tri = inst.mesh.faces[f];
            const Vec3 p0 = pc[tri[0]], p1 = pc[tri[1]], p2 = pc[tri[2]];
            if (p0.z() <= carparts::raster_near_plane || p1.z() <= carparts::raster_near_plane ||
                p2.z() <= carparts::raster_near_plane)
                continue;
            FrontFace ff;
            ff.a = cam.project(p0);
            ff.b = cam.project(p1);
            ff.c = cam.project(p2);
            ff.area = (ff.b.x() - ff.a.x()) * (ff.c.y() - ff.a.y()) -
                      (ff.b.y() - ff.a.y()) * (ff.c.x() - ff.a.x());
            if (ff.area == 0)
                continue;
            ff.iz0 = 1.0 / p0.z();
            ff.iz1 = 1.0 / p1.z();
            ff.iz2 = 1.0 / p2.z();
            ff.part = static_cast<std::uint16_t>(inst.mesh.face_part_labels[f]);
            ff.instance = static_cast<std::uint16_t>(inst.instance_id);
            faces.push_back(ff);
        }
    }

    for (int iy = 0; iy < height; ++iy) {
        for (int ix = 0; ix < width; ++ix) {
            const double x = ix + 0.5, y = iy + 0.5;
            for (const auto& f : faces) {
                const double w0 =
                    (f.c.x() - f.b.x()) * (y - f.b.y()) - (f.c.y() - f.b.y()) * (x - f.b.x());
                const double w1 =
                    (f.a.x() - f.c.x()) * (y - f.c.y()) - (f.a.y() - f.c.y()) * (x - f.c.x());
                const double w2 =
                    (f.b.x() - f.a.x()) * (y - f.a.y()) - (f.b.y() - f.a.y()) * (x - f.a.x());
                const bool inside =
                    (w0 >= 0 && w1 >= 0 && w2 >= 0) || (w0 <= 0 && w1 <= 0 && w2 <= 0);
                if (!inside)
                    continue;
                const double l0 = w0 / f.area, l1 = w1 / f.area, l2 = w2 / f.area;
                const double z = 1.0 / (l0 * f.iz0 + l1 * f.iz1 + l2 * f.iz2);
                if (z <= carparts::raster_near_plane)
                    continue;
                float& d = maps.depth.at(ix, iy);
                if (static_cast<float>(z) < d) {
                    d = static_cast<float>(z);
                    maps.part.at(ix, iy) = f.part;
                    maps.instance.at(ix, iy) = f.instance;
                }
            }
        }
    }
    return maps;
}

} // namespace oracle
