#include "carparts/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Geometry>

#include "json.hpp"

#include "carparts/rng.hpp"

namespace carparts {

using json = nlohmann::json;

// ---------------------------------------------------------------- types

void LabeledMesh::validate() const
{
    if (faces.size() != face_part_labels.size())
        throw Error(Err::InvalidArgument, "face label count != face count");
    const int n = static_cast<int>(vertices.size());
    for (const auto& v : vertices)
        if (!v.allFinite())
            throw Error(Err::InvalidArgument, "non-finite vertex");
    for (const auto& f : faces)
        for (int idx : f)
            if (idx < 0 || idx >= n)
                throw Error(Err::InvalidArgument, "face index out of range");
    if (dimensions.wheelbase <= 0 || dimensions.width <= 0 || dimensions.height <= 0 ||
        dimensions.length <= 0)
        throw Error(Err::InvalidArgument, "dimensions must be strictly positive");
}

double LabeledMesh::surface_area() const
{
    double area = 0.0;
    for (const auto& f : faces) {
        const Vec3 e1 = vertices[f[1]] - vertices[f[0]];
        const Vec3 e2 = vertices[f[2]] - vertices[f[0]];
        area += 0.5 * e1.cross(e2).norm();
    }
    return area;
}

void PointCloud::validate() const
{
    if (!labels.empty() && labels.size() != points.size())
        throw Error(Err::InvalidArgument, "label count != point count");
    if (!normals.empty()) {
        if (normals.size() != points.size())
            throw Error(Err::InvalidArgument, "normal count != point count");
        for (const auto& n : normals)
            if (std::abs(n.norm() - 1.0) > 1e-6)
                throw Error(Err::InvalidArgument, "normals must be unit length");
    }
    for (const auto& p : points)
        if (!p.allFinite())
            throw Error(Err::InvalidArgument, "non-finite point");
}

void PartTaxonomy::validate() const
{
    for (int i = 0; i < static_cast<int>(parts.size()); ++i)
        if (parts[i].id != i)
            throw Error(Err::InvalidArgument, "part ids must be contiguous from 0");
    if (!reduction_map.empty() && reduction_map.size() != parts.size())
        throw Error(Err::InvalidArgument, "reduction map must cover every part id");
}

// ----------------------------------------------------------- taxonomies

PartTaxonomy eval_taxonomy()
{
    PartTaxonomy t;
    const std::pair<const char*, PartCategory> defs[] = {
        {"background", PartCategory::Others},
        {"front light", PartCategory::Light},
        {"front part", PartCategory::Body},
        {"tail light", PartCategory::Light},
        {"rear part", PartCategory::Body},
        {"door", PartCategory::Body},
        {"roof", PartCategory::Body},
        {"roof rack", PartCategory::Others},
        {"hood", PartCategory::Body},
        {"mirror", PartCategory::Body},
        {"side window", PartCategory::Window},
        {"front window", PartCategory::Window},
        {"rear window", PartCategory::Window},
        {"wheel/tire", PartCategory::Others},
    };
    int id = 0;
    for (const auto& [name, cat] : defs)
        t.parts.push_back({id++, name, cat});
    t.validate();
    return t;
}

PartTaxonomy full_taxonomy()
{
    // 70 exterior parts in four categories. Rows the annotation table lists
    // once for both sides (pillars, grilles, wipers, exhaust) are split
    // left/right here so ids stay contiguous.
    struct Row {
        const char* name;
        PartCategory cat;
        int reduced;
    };
    using P = PartCategory;
    namespace ep = eval_part;
    static const Row rows[] = {
        // lights
        {"left headlight", P::Light, ep::front_light},
        {"left fog light", P::Light, ep::front_light},
        {"right headlight", P::Light, ep::front_light},
        {"right fog light", P::Light, ep::front_light},
        {"left tail light", P::Light, ep::tail_light},
        {"right tail light", P::Light, ep::tail_light},
        // body
        {"front left door", P::Body, ep::door},
        {"front right door", P::Body, ep::door},
        {"rear left door", P::Body, ep::door},
        {"rear right door", P::Body, ep::door},
        {"left side sill", P::Body, ep::background},
        {"right side sill", P::Body, ep::background},
        {"roof", P::Body, ep::roof},
        {"hood", P::Body, ep::hood},
        {"tailgate", P::Body, ep::rear_part},
        {"front bumper", P::Body, ep::front_part},
        {"rear bumper", P::Body, ep::rear_part},
        {"fuel door", P::Body, ep::background},
        {"left mirror", P::Body, ep::mirror},
        {"right mirror", P::Body, ep::mirror},
        {"front left fender", P::Body, ep::background},
        {"front right fender", P::Body, ep::background},
        {"rear left fender", P::Body, ep::background},
        {"rear right fender", P::Body, ep::background},
        {"front left door handle", P::Body, ep::door},
        {"front right door handle", P::Body, ep::door},
        {"rear left door handle", P::Body, ep::door},
        {"rear right door handle", P::Body, ep::door},
        {"front car logo", P::Body, ep::front_part},
        {"rear car logo", P::Body, ep::rear_part},
        {"left A pillar", P::Body, ep::background},
        {"right A pillar", P::Body, ep::background},
        {"left B pillar", P::Body, ep::background},
        {"right B pillar", P::Body, ep::background},
        {"chassis", P::Body, ep::background},
        {"upper grille", P::Body, ep::front_part},
        {"lower grille", P::Body, ep::front_part},
        // windows
        {"left windscreen wiper", P::Window, ep::background},
        {"right windscreen wiper", P::Window, ep::background},
        {"rear window wiper", P::Window, ep::background},
        {"windscreen", P::Window, ep::front_window},
        {"rear window", P::Window, ep::rear_window},
        {"front left door window", P::Window, ep::side_window},
        {"rear left side window", P::Window, ep::side_window},
        {"rear left quarter glass", P::Window, ep::side_window},
        {"rear right side window", P::Window, ep::side_window},
        {"front right door window", P::Window, ep::side_window},
        {"rear right quarter glass", P::Window, ep::side_window},
        {"rear left quarter glass on door", P::Window, ep::side_window},
        {"rear right quarter glass on door", P::Window, ep::side_window},
        // others
        {"front left wheel/tire", P::Others, ep::wheel_tire},
        {"rear left wheel/tire", P::Others, ep::wheel_tire},
        {"front right wheel/tire", P::Others, ep::wheel_tire},
        {"rear right wheel/tire", P::Others, ep::wheel_tire},
        {"antenna", P::Others, ep::background},
        {"left exhaust pipe", P::Others, ep::rear_part},
        {"right exhaust pipe", P::Others, ep::rear_part},
        {"spare tire", P::Others, ep::wheel_tire},
        {"roof rack/taxi display", P::Others, ep::roof_rack},
        {"left side step pedal", P::Others, ep::background},
        {"right side step pedal", P::Others, ep::background},
        {"rear left fender II", P::Others, ep::background},
        {"rear left door II", P::Others, ep::door},
        {"rear left spoiler", P::Others, ep::rear_part},
        {"rear right spoiler", P::Others, ep::rear_part},
        {"rear right fender II", P::Others, ep::background},
        {"rear right door II", P::Others, ep::door},
        {"rear heat sink", P::Others, ep::rear_part},
        {"left A pillar II", P::Others, ep::background},
        {"right A pillar II", P::Others, ep::background},
    };
    PartTaxonomy t;
    int id = 0;
    for (const auto& row : rows) {
        t.parts.push_back({id++, row.name, row.cat});
        t.reduction_map.push_back(row.reduced);
    }
    t.validate();
    return t;
}

// ------------------------------------------------------------ PointGrid

void PointGrid::cell_of(const Vec3& p, int& ix, int& iy, int& iz) const
{
    ix = std::clamp(static_cast<int>(std::floor((p.x() - origin_.x()) / cell_)), 0, nx_ - 1);
    iy = std::clamp(static_cast<int>(std::floor((p.y() - origin_.y()) / cell_)), 0, ny_ - 1);
    iz = std::clamp(static_cast<int>(std::floor((p.z() - origin_.z()) / cell_)), 0, nz_ - 1);
}

PointGrid::PointGrid(const std::vector<Vec3>& points, double cell_size) : points_(points)
{
    if (points_.empty())
        throw Error(Err::EmptyInput, "cannot index an empty point set");
    cell_ = std::max(cell_size, 1e-12);
    Vec3 lo = points_[0], hi = points_[0];
    for (const auto& p : points_) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    origin_ = lo - Vec3::Constant(0.5 * cell_);
    const Vec3 span = hi - origin_;
    nx_ = std::max(1, static_cast<int>(std::floor(span.x() / cell_)) + 1);
    ny_ = std::max(1, static_cast<int>(std::floor(span.y() / cell_)) + 1);
    nz_ = std::max(1, static_cast<int>(std::floor(span.z() / cell_)) + 1);
    cells_.resize(static_cast<size_t>(nx_) * ny_ * nz_);
    for (int i = 0; i < static_cast<int>(points_.size()); ++i) {
        int ix, iy, iz;
        cell_of(points_[i], ix, iy, iz);
        cells_[cell_index(ix, iy, iz)].push_back(i);
    }
}

std::pair<int, double> PointGrid::nearest(const Vec3& query) const
{
    int bx, by, bz;
    cell_of(query, bx, by, bz);
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    const int max_ring = std::max({nx_, ny_, nz_});
    for (int ring = 0; ring <= max_ring; ++ring) {
        // cells at Chebyshev distance `ring` can contain nothing closer
        // than (ring-1)*cell once the query's own cell has been visited
        if (best >= 0 && static_cast<double>(ring - 1) * cell_ > std::sqrt(best_d2))
            break;
        const int x0 = std::max(0, bx - ring), x1 = std::min(nx_ - 1, bx + ring);
        const int y0 = std::max(0, by - ring), y1 = std::min(ny_ - 1, by + ring);
        const int z0 = std::max(0, bz - ring), z1 = std::min(nz_ - 1, bz + ring);
        for (int iz = z0; iz <= z1; ++iz) {
            for (int iy = y0; iy <= y1; ++iy) {
                for (int ix = x0; ix <= x1; ++ix) {
                    const int cheb = std::max({std::abs(ix - bx), std::abs(iy - by), std::abs(iz - bz)});
                    if (cheb != ring)
                        continue;
                    for (int idx : cells_[cell_index(ix, iy, iz)]) {
                        const double d2 = (points_[idx] - query).squaredNorm();
                        if (d2 < best_d2) {
                            best_d2 = d2;
                            best = idx;
                        }
                    }
                }
            }
        }
    }
    return {best, std::sqrt(best_d2)};
}

bool PointGrid::any_within(const Vec3& query, double radius) const
{
    int bx, by, bz;
    cell_of(query, bx, by, bz);
    const int reach = static_cast<int>(std::ceil(radius / cell_)) + 1;
    const double r2 = radius * radius;
    const int x0 = std::max(0, bx - reach), x1 = std::min(nx_ - 1, bx + reach);
    const int y0 = std::max(0, by - reach), y1 = std::min(ny_ - 1, by + reach);
    const int z0 = std::max(0, bz - reach), z1 = std::min(nz_ - 1, bz + reach);
    for (int iz = z0; iz <= z1; ++iz)
        for (int iy = y0; iy <= y1; ++iy)
            for (int ix = x0; ix <= x1; ++ix)
                for (int idx : cells_[cell_index(ix, iy, iz)])
                    if ((points_[idx] - query).squaredNorm() < r2)
                        return true;
    return false;
}

// -------------------------------------------------------------- remesh

namespace {

// incremental occupancy grid used only while dart throwing
class DartGrid {
public:
    DartGrid(const Vec3& lo, const Vec3& hi, double cell) : cell_(std::max(cell, 1e-12)), origin_(lo - Vec3::Constant(cell))
    {
        const Vec3 span = hi + Vec3::Constant(cell) - origin_;
        nx_ = std::max(1, static_cast<int>(span.x() / cell_) + 1);
        ny_ = std::max(1, static_cast<int>(span.y() / cell_) + 1);
        nz_ = std::max(1, static_cast<int>(span.z() / cell_) + 1);
        cells_.resize(static_cast<size_t>(nx_) * ny_ * nz_);
    }

    bool blocked(const Vec3& p, double radius, const std::vector<Vec3>& pts) const
    {
        int bx, by, bz;
        cell_of(p, bx, by, bz);
        const int reach = static_cast<int>(std::ceil(radius / cell_));
        const double r2 = radius * radius;
        for (int iz = std::max(0, bz - reach); iz <= std::min(nz_ - 1, bz + reach); ++iz)
            for (int iy = std::max(0, by - reach); iy <= std::min(ny_ - 1, by + reach); ++iy)
                for (int ix = std::max(0, bx - reach); ix <= std::min(nx_ - 1, bx + reach); ++ix)
                    for (int idx : cells_[(static_cast<size_t>(iz) * ny_ + iy) * nx_ + ix])
                        if ((pts[idx] - p).squaredNorm() < r2)
                            return true;
        return false;
    }

    void insert(const Vec3& p, int index)
    {
        int ix, iy, iz;
        cell_of(p, ix, iy, iz);
        cells_[(static_cast<size_t>(iz) * ny_ + iy) * nx_ + ix].push_back(index);
    }

private:
    double cell_;
    Vec3 origin_;
    int nx_, ny_, nz_;
    std::vector<std::vector<int>> cells_;

    void cell_of(const Vec3& p, int& ix, int& iy, int& iz) const
    {
        ix = std::clamp(static_cast<int>(std::floor((p.x() - origin_.x()) / cell_)), 0, nx_ - 1);
        iy = std::clamp(static_cast<int>(std::floor((p.y() - origin_.y()) / cell_)), 0, ny_ - 1);
        iz = std::clamp(static_cast<int>(std::floor((p.z() - origin_.z()) / cell_)), 0, nz_ - 1);
    }
};

Vec3 sample_on_triangle(const Vec3& a, const Vec3& b, const Vec3& c, Rng& rng)
{
    const double s = std::sqrt(rng.uniform());
    const double t = rng.uniform();
    return (1.0 - s) * a + s * (1.0 - t) * b + s * t * c;
}

} // namespace

PointCloud remesh_uniform(const LabeledMesh& mesh, double spacing, std::uint64_t seed)
{
    if (mesh.vertices.empty() || mesh.faces.empty())
        throw Error(Err::EmptyInput, "mesh has no geometry");
    if (spacing <= 0)
        throw Error(Err::InvalidArgument, "spacing must be positive");
    mesh.validate();

    const size_t nf = mesh.faces.size();
    std::vector<double> area(nf, 0.0);
    std::vector<Vec3> normal(nf, Vec3::UnitZ());
    double total_area = 0.0;
    for (size_t f = 0; f < nf; ++f) {
        const auto& tri = mesh.faces[f];
        const Vec3 n = (mesh.vertices[tri[1]] - mesh.vertices[tri[0]])
                           .cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
        const double a = 0.5 * n.norm();
        if (a > 1e-14) { // degenerate faces are skipped
            area[f] = a;
            normal[f] = n / n.norm();
            total_area += a;
        }
    }
    if (total_area <= 0)
        throw Error(Err::EmptyInput, "all faces are degenerate");

    std::vector<double> cdf(nf);
    double acc = 0.0;
    for (size_t f = 0; f < nf; ++f) {
        acc += area[f];
        cdf[f] = acc;
    }

    Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
    for (const auto& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }

    // Dart throwing with rejection radius below the target spacing packs
    // samples whose nearest-neighbor distance sits near the spacing itself.
    const double radius = 0.78 * spacing;
    const size_t target = static_cast<size_t>(std::ceil(total_area / (spacing * spacing)));
    const size_t max_attempts = std::max<size_t>(60 * target, 4096);

    Rng rng = substream(seed, "remesh");
    DartGrid grid(lo, hi, radius);
    PointCloud cloud;
    cloud.points.reserve(target);
    cloud.labels.reserve(target);
    cloud.normals.reserve(target);

    auto push_sample = [&](const Vec3& p, size_t face) {
        grid.insert(p, static_cast<int>(cloud.points.size()));
        cloud.points.push_back(p);
        cloud.labels.push_back(mesh.face_part_labels[face]);
        cloud.normals.push_back(normal[face]);
    };

    for (size_t attempt = 0; attempt < max_attempts && cloud.points.size() < target; ++attempt) {
        const double u = rng.uniform() * total_area;
        const size_t face = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
        if (area[face] <= 0)
            continue;
        const auto& tri = mesh.faces[face];
        const Vec3 p = sample_on_triangle(mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                                          mesh.vertices[tri[2]], rng);
        if (grid.blocked(p, radius, cloud.points))
            continue;
        push_sample(p, face);
    }

    // every label with nonzero surviving area must be represented
    std::map<int, size_t> largest_face_of_label;
    for (size_t f = 0; f < nf; ++f) {
        if (area[f] <= 0)
            continue;
        auto [it, inserted] = largest_face_of_label.try_emplace(mesh.face_part_labels[f], f);
        if (!inserted && area[f] > area[it->second])
            it->second = f;
    }
    std::map<int, bool> seen;
    for (int l : cloud.labels)
        seen[l] = true;
    for (const auto& [label, face] : largest_face_of_label) {
        if (seen.count(label))
            continue;
        const auto& tri = mesh.faces[face];
        const Vec3 centroid =
            (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
        push_sample(centroid, face);
    }

    cloud.validate();
    return cloud;
}

std::vector<int> vertex_labels(const LabeledMesh& mesh)
{
    mesh.validate();
    std::vector<int> labels(mesh.vertices.size(), 0);
    std::vector<char> assigned(mesh.vertices.size(), 0);
    for (size_t f = 0; f < mesh.faces.size(); ++f)
        for (const int v : mesh.faces[f])
            if (!assigned[v]) {
                assigned[v] = 1;
                labels[v] = mesh.face_part_labels[f];
            }
    return labels;
}

// ---------------------------------------------------------- neighbors

std::pair<int, double> nearest_neighbor(const Vec3& query, const PointCloud& cloud)
{
    if (cloud.points.empty())
        throw Error(Err::EmptyInput, "nearest_neighbor on empty cloud");
    Vec3 lo = cloud.points[0], hi = cloud.points[0];
    for (const auto& p : cloud.points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double diag = (hi - lo).norm();
    const double cell = diag > 0 ? diag / std::cbrt(static_cast<double>(cloud.points.size())) : 1.0;
    PointGrid grid(cloud.points, cell);
    return grid.nearest(query);
}

std::pair<int, double> nearest_neighbor_linear(const Vec3& query, const std::vector<Vec3>& points)
{
    if (points.empty())
        throw Error(Err::EmptyInput, "nearest_neighbor_linear on empty set");
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(points.size()); ++i) {
        const double d2 = (points[i] - query).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return {best, std::sqrt(best_d2)};
}

// ------------------------------------------------------------ file I/O

LabeledMesh load_labeled_mesh(const std::string& obj_path, const std::string& sidecar_json_path)
{
    std::ifstream in(obj_path);
    if (!in)
        throw Error(Err::Io, "cannot open " + obj_path);

    LabeledMesh mesh;
    std::vector<std::string> face_group; // group active when each face was read
    std::string current_group;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Vec3 v;
            ss >> v.x() >> v.y() >> v.z();
            if (!ss)
                throw Error(Err::Io, "malformed vertex line: " + line);
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok) {
                // accept i, i/t, i//n, i/t/n
                const size_t slash = tok.find('/');
                int i = std::stoi(slash == std::string::npos ? tok : tok.substr(0, slash));
                if (i < 0)
                    i = static_cast<int>(mesh.vertices.size()) + i + 1;
                idx.push_back(i - 1);
            }
            if (idx.size() != 3)
                throw Error(Err::InvalidArgument,
                            "only triangles are supported; pre-triangulate quads (" + obj_path + ")");
            mesh.faces.push_back({idx[0], idx[1], idx[2]});
            face_group.push_back(current_group);
        } else if (tag == "g" || tag == "usemtl") {
            ss >> current_group;
        }
    }

    std::ifstream jin(sidecar_json_path);
    if (!jin)
        throw Error(Err::Io, "cannot open " + sidecar_json_path);
    json side = json::parse(jin, nullptr, false);
    if (side.is_discarded())
        throw Error(Err::Schema, "sidecar is not valid JSON: " + sidecar_json_path);

    mesh.category_id = side.value("category", 0);
    if (side.contains("dimensions")) {
        const auto& d = side["dimensions"];
        mesh.dimensions.wheelbase = d.value("wheelbase", 0.0);
        mesh.dimensions.width = d.value("width", 0.0);
        mesh.dimensions.height = d.value("height", 0.0);
        mesh.dimensions.length = d.value("length", 0.0);
    }

    mesh.face_part_labels.assign(mesh.faces.size(), -1);
    if (side.contains("groups")) {
        for (size_t f = 0; f < mesh.faces.size(); ++f) {
            const auto it = side["groups"].find(face_group[f]);
            if (it != side["groups"].end())
                mesh.face_part_labels[f] = it->get<int>();
        }
    }
    if (side.contains("ranges")) {
        for (const auto& r : side["ranges"]) {
            const size_t begin = r.at("begin").get<size_t>();
            const size_t end = r.at("end").get<size_t>();
            const int part = r.at("part").get<int>();
            if (end > mesh.faces.size() || begin > end)
                throw Error(Err::Schema, "face range outside mesh");
            for (size_t f = begin; f < end; ++f)
                mesh.face_part_labels[f] = part;
        }
    }
    for (size_t f = 0; f < mesh.faces.size(); ++f)
        if (mesh.face_part_labels[f] < 0)
            throw Error(Err::Schema, "face " + std::to_string(f) + " has no part label");

    mesh.validate();
    return mesh;
}

void save_obj(const std::string& obj_path, const LabeledMesh& mesh)
{
    std::ofstream out(obj_path);
    if (!out)
        throw Error(Err::Io, "cannot write " + obj_path);
    out.precision(12);
    for (const auto& v : mesh.vertices)
        out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    int current = std::numeric_limits<int>::min();
    json groups = json::object();
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        if (mesh.face_part_labels[f] != current) {
            current = mesh.face_part_labels[f];
            out << "g part" << current << '\n';
            groups["part" + std::to_string(current)] = current;
        }
        const auto& tri = mesh.faces[f];
        out << "f " << tri[0] + 1 << ' ' << tri[1] + 1 << ' ' << tri[2] + 1 << '\n';
    }

    std::string sidecar_path = obj_path;
    const std::string ext = ".obj";
    if (sidecar_path.size() >= ext.size() &&
        sidecar_path.compare(sidecar_path.size() - ext.size(), ext.size(), ext) == 0)
        sidecar_path.resize(sidecar_path.size() - ext.size());
    sidecar_path += ".labels.json";

    json side;
    side["category"] = mesh.category_id;
    side["dimensions"] = {{"wheelbase", mesh.dimensions.wheelbase},
                          {"width", mesh.dimensions.width},
                          {"height", mesh.dimensions.height},
                          {"length", mesh.dimensions.length}};
    side["groups"] = groups;
    std::ofstream jout(sidecar_path);
    if (!jout)
        throw Error(Err::Io, "cannot write " + sidecar_path);
    jout << side.dump(2) << '\n';
}

void save_cloud_ply(const std::string& path, const PointCloud& cloud)
{
    std::ofstream out(path);
    if (!out)
        throw Error(Err::Io, "cannot write " + path);
    out.precision(12);
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << cloud.points.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (cloud.has_normals())
        out << "property double nx\nproperty double ny\nproperty double nz\n";
    if (cloud.has_labels())
        out << "property int label\n";
    out << "end_header\n";
    for (size_t i = 0; i < cloud.points.size(); ++i) {
        out << cloud.points[i].x() << ' ' << cloud.points[i].y() << ' ' << cloud.points[i].z();
        if (cloud.has_normals())
            out << ' ' << cloud.normals[i].x() << ' ' << cloud.normals[i].y() << ' '
                << cloud.normals[i].z();
        if (cloud.has_labels())
            out << ' ' << cloud.labels[i];
        out << '\n';
    }
}

PointCloud load_cloud_ply(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(Err::Io, "cannot open " + path);
    std::string line;
    size_t n = 0;
    bool has_normals = false, has_labels = false;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "element") {
            std::string what;
            ss >> what >> n;
            if (what != "vertex")
                throw Error(Err::Schema, "unsupported ply element: " + what);
        } else if (tag == "property") {
            std::string type, name;
            ss >> type >> name;
            if (name == "nx")
                has_normals = true;
            if (name == "label")
                has_labels = true;
        } else if (tag == "end_header") {
            break;
        } else if (tag == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "ascii")
                throw Error(Err::Schema, "only ascii ply is supported");
        }
    }
    PointCloud cloud;
    cloud.points.resize(n);
    if (has_normals)
        cloud.normals.resize(n);
    if (has_labels)
        cloud.labels.resize(n);
    for (size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line))
            throw Error(Err::Io, "truncated ply: " + path);
        std::istringstream ss(line);
        ss >> cloud.points[i].x() >> cloud.points[i].y() >> cloud.points[i].z();
        if (has_normals)
            ss >> cloud.normals[i].x() >> cloud.normals[i].y() >> cloud.normals[i].z();
        if (has_labels)
            ss >> cloud.labels[i];
        if (!ss)
            throw Error(Err::Io, "malformed ply row in " + path);
    }
    cloud.validate();
    return cloud;
}

} // namespace carparts
