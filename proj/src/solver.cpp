#include "carparts/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "carparts/error.hpp"

namespace carparts {

std::vector<InstanceObservation> extract_observations(const LabelMaps& maps)
{
    if (!maps.part_map.same_size(maps.instance_map.width, maps.instance_map.height))
        throw Error(Err::ShapeMismatch, "part and instance maps differ in size");

    struct Acc {
        double sx = 0, sy = 0;
        int count = 0;
    };
    std::map<std::pair<int, int>, Acc> acc; // (instance, part) -> centroid sums
    for (int y = 0; y < maps.part_map.height; ++y)
        for (int x = 0; x < maps.part_map.width; ++x) {
            const int inst = maps.instance_map.at(x, y);
            const int part = maps.part_map.at(x, y);
            if (inst == 0 || part == 0)
                continue;
            Acc& a = acc[{inst, part}];
            a.sx += x + 0.5;
            a.sy += y + 0.5;
            a.count += 1;
        }

    std::map<int, InstanceObservation> by_instance;
    for (const auto& [key, a] : acc) {
        InstanceObservation& obs = by_instance[key.first];
        obs.instance_id = key.first;
        PartObservation part;
        part.part_id = key.second;
        part.centroid = Vec2(a.sx / a.count, a.sy / a.count);
        part.pixel_count = a.count;
        obs.parts.push_back(part);
    }

    // cars only, when the truth records say which ids are cars
    std::vector<InstanceObservation> out;
    for (auto& [id, obs] : by_instance) {
        bool include = true;
        for (const auto& t : maps.truth)
            if (t.instance_id == id) {
                include = t.is_car;
                break;
            }
        if (include)
            out.push_back(std::move(obs));
    }
    return out;
}

std::map<int, Vec3> part_centroids(const std::vector<Vec3>& points, const std::vector<int>& labels)
{
    if (points.size() != labels.size())
        throw Error(Err::ShapeMismatch, "one label per point required");
    std::map<int, std::pair<Vec3, int>> acc;
    for (size_t i = 0; i < points.size(); ++i) {
        if (labels[i] <= 0)
            continue;
        auto& [sum, count] = acc[labels[i]];
        if (count == 0)
            sum = Vec3::Zero();
        sum += points[i];
        ++count;
    }
    std::map<int, Vec3> out;
    for (const auto& [id, sc] : acc)
        out[id] = sc.first / sc.second;
    return out;
}

// --------------------------------------------------------------- pnp init

namespace {

Mat3 skew(const Vec3& v)
{
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

// Gauss-Newton polish of a rigid camera-frame pose against exact point
// correspondences; squeezes a closed-form initialization to fp accuracy
void gn_rigid_polish(Mat3& rotation, Vec3& translation, const std::vector<Vec3>& model,
                     const std::vector<Vec2>& pixels, const Camera& cam, int iterations = 15)
{
    const int n = static_cast<int>(model.size());
    for (int it = 0; it < iterations; ++it) {
        Eigen::MatrixXd jac(2 * n, 6);
        Eigen::VectorXd res(2 * n);
        for (int i = 0; i < n; ++i) {
            const Vec3 p = rotation * model[i] + translation;
            if (p.z() <= 1e-6)
                return; // polish only valid with points in front
            const double iz = 1.0 / p.z();
            res[2 * i] = cam.fx * p.x() * iz + cam.cx - pixels[i].x();
            res[2 * i + 1] = cam.fy * p.y() * iz + cam.cy - pixels[i].y();
            Eigen::Matrix<double, 2, 3> dproj;
            dproj << cam.fx * iz, 0, -cam.fx * p.x() * iz * iz, 0, cam.fy * iz,
                -cam.fy * p.y() * iz * iz;
            Eigen::Matrix<double, 3, 6> dp; // left perturbation: p' = exp(w)p + dt
            dp.leftCols<3>() = -skew(p);
            dp.rightCols<3>() = Mat3::Identity();
            jac.block<2, 6>(2 * i, 0) = dproj * dp;
        }
        Eigen::Matrix<double, 6, 6> h = jac.transpose() * jac;
        const Eigen::Matrix<double, 6, 1> g = jac.transpose() * res;
        h.diagonal().array() += 1e-12;
        const Eigen::Matrix<double, 6, 1> delta = h.ldlt().solve(-g);
        const Vec3 w = delta.head<3>();
        rotation = Eigen::AngleAxisd(w.norm(), w.norm() > 0 ? Vec3(w.normalized())
                                                            : Vec3::UnitX())
                       .toRotationMatrix() *
                   rotation;
        translation += delta.tail<3>();
        if (delta.norm() < 1e-14)
            break;
    }
}

struct RigidPose {
    Mat3 rotation;
    Vec3 translation;
};

// general-position EPnP: 4 control points, null-space scale recovery,
// absolute-orientation fit
RigidPose epnp_general(const std::vector<Vec3>& model, const std::vector<Vec2>& pixels,
                       const Camera& cam, const Vec3& centroid, const Mat3& principal,
                       const Vec3& sigma)
{
    const int n = static_cast<int>(model.size());
    Eigen::Matrix<double, 4, 3> control;
    control.row(0) = centroid.transpose();
    for (int k = 0; k < 3; ++k)
        control.row(k + 1) = (centroid + sigma[k] * principal.col(k)).transpose();

    Mat3 basis;
    for (int k = 0; k < 3; ++k)
        basis.col(k) = control.row(k + 1).transpose() - centroid;
    const Mat3 basis_inv = basis.inverse();

    Eigen::MatrixXd alphas(n, 4);
    for (int i = 0; i < n; ++i) {
        const Vec3 b = basis_inv * (model[i] - centroid);
        alphas(i, 0) = 1.0 - b.sum();
        alphas.row(i).tail<3>() = b.transpose();
    }

    Eigen::MatrixXd m(2 * n, 12);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 4; ++j) {
            const double a = alphas(i, j);
            m(2 * i, 3 * j) = a * cam.fx;
            m(2 * i, 3 * j + 1) = 0;
            m(2 * i, 3 * j + 2) = a * (cam.cx - pixels[i].x());
            m(2 * i + 1, 3 * j) = 0;
            m(2 * i + 1, 3 * j + 1) = a * cam.fy;
            m(2 * i + 1, 3 * j + 2) = a * (cam.cy - pixels[i].y());
        }

    const Eigen::Matrix<double, 12, 12> mtm = m.transpose() * m;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> eig(mtm);
    const Eigen::Matrix<double, 12, 1> v = eig.eigenvectors().col(0); // smallest eigenvalue

    Eigen::Matrix<double, 4, 3> cam_control;
    for (int j = 0; j < 4; ++j)
        cam_control.row(j) = v.segment<3>(3 * j).transpose();

    // scale so camera-frame control distances match the model-frame ones
    double num = 0, den = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            const double dw = (control.row(i) - control.row(j)).norm();
            const double dc = (cam_control.row(i) - cam_control.row(j)).norm();
            num += dw * dc;
            den += dc * dc;
        }
    if (den <= 0)
        throw Error(Err::DegenerateConfiguration, "collapsed control points");
    double beta = num / den;

    // points must land in front of the camera
    double mean_z = 0;
    for (int i = 0; i < n; ++i)
        mean_z += (alphas.row(i) * cam_control)(2);
    if (mean_z < 0)
        beta = -beta;
    cam_control *= beta;

    const Eigen::Matrix3Xd src = control.transpose();
    const Eigen::Matrix3Xd dst = cam_control.transpose();
    const Eigen::Matrix4d rt = Eigen::umeyama(src, dst, false);
    return {rt.topLeftCorner<3, 3>(), rt.topRightCorner<3, 1>()};
}

// planar path: homography between plane coordinates and normalized image
// coordinates, decomposed into a rigid pose
RigidPose pnp_planar(const std::vector<Vec3>& model, const std::vector<Vec2>& pixels,
                     const Camera& cam, const Vec3& centroid, const Mat3& principal)
{
    const int n = static_cast<int>(model.size());
    Eigen::MatrixXd a(2 * n, 9);
    for (int i = 0; i < n; ++i) {
        const Vec3 d = model[i] - centroid;
        const double px = principal.col(0).dot(d);
        const double py = principal.col(1).dot(d);
        const double mx = (pixels[i].x() - cam.cx) / cam.fx;
        const double my = (pixels[i].y() - cam.cy) / cam.fy;
        a.row(2 * i) << px, py, 1, 0, 0, 0, -mx * px, -mx * py, -mx;
        a.row(2 * i + 1) << 0, 0, 0, px, py, 1, -my * px, -my * py, -my;
    }
    // full V: with exactly four points the system is 8x9 and the null
    // vector lives in the column thin V would not produce
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const Eigen::VectorXd h = svd.matrixV().col(8);
    Mat3 hm;
    hm << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];

    Vec3 h1 = hm.col(0), h2 = hm.col(1), h3 = hm.col(2);
    const double lambda = 2.0 / (h1.norm() + h2.norm());
    h1 *= lambda;
    h2 *= lambda;
    h3 *= lambda;
    Mat3 r_approx;
    r_approx.col(0) = h1;
    r_approx.col(1) = h2;
    r_approx.col(2) = h1.cross(h2);
    const Eigen::JacobiSVD<Mat3> rsvd(r_approx, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r_plane = rsvd.matrixU() * rsvd.matrixV().transpose();
    if (r_plane.determinant() < 0) {
        Mat3 flip = Mat3::Identity();
        flip(2, 2) = -1;
        r_plane = rsvd.matrixU() * flip * rsvd.matrixV().transpose();
    }
    Vec3 t = h3;

    // plane points must sit in front of the camera
    if ((r_plane * Vec3::Zero() + t).z() < 0) {
        t = -t;
        Mat3 flip = Mat3::Identity();
        flip(0, 0) = -1;
        flip(1, 1) = -1;
        r_plane = r_plane * flip; // negate first two columns, keep det +1
    }

    // model -> plane coords is principal^T (third coord 0 on the plane)
    const Mat3 rotation = r_plane * principal.transpose();
    const Vec3 translation = t - rotation * centroid;
    return {rotation, translation};
}

} // namespace

PoseEstimate pnp_init(const std::vector<PartObservation>& parts, const ShapeSpace& space,
                      const Camera& camera)
{
    camera.validate();
    if (space.point_labels.empty())
        throw Error(Err::InvalidArgument, "shape space carries no point labels");
    const auto model_centroids =
        part_centroids(unstack_points(space.mean), space.point_labels);

    std::vector<Vec3> model;
    std::vector<Vec2> pixels;
    for (const auto& p : parts) {
        const auto it = model_centroids.find(p.part_id);
        if (it == model_centroids.end())
            continue;
        model.push_back(it->second);
        pixels.push_back(p.centroid);
    }
    if (static_cast<int>(model.size()) < 4)
        throw Error(Err::TooFewParts, "pose initialization needs at least 4 part centroids");

    Vec3 centroid = Vec3::Zero();
    for (const auto& x : model)
        centroid += x;
    centroid /= static_cast<double>(model.size());
    Eigen::Matrix3Xd centered(3, model.size());
    for (size_t i = 0; i < model.size(); ++i)
        centered.col(i) = model[i] - centroid;
    const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered, Eigen::ComputeFullU);
    const Vec3 sv = svd.singularValues();
    Mat3 principal = svd.matrixU();
    if (principal.determinant() < 0)
        principal.col(2) *= -1.0; // keep a right-handed frame: col2 = col0 x col1
    const double scale = std::max(sv[0], 1e-12);
    if (sv[1] < 1e-6 * scale) // collinear: even the planar path is rank-deficient
        throw Error(Err::DegenerateConfiguration, "part centroids are collinear");
    const bool planar = sv[2] < 1e-6 * scale;

    RigidPose rigid;
    if (planar) {
        rigid = pnp_planar(model, pixels, camera, centroid, principal);
    } else {
        const Vec3 sigma = sv / std::sqrt(static_cast<double>(model.size()));
        rigid = epnp_general(model, pixels, camera, centroid, principal, sigma);
    }
    gn_rigid_polish(rigid.rotation, rigid.translation, model, pixels, camera);

    if (rigid.translation.z() <= 0)
        throw Error(Err::DegenerateConfiguration, "initialization landed behind the camera");

    PoseEstimate est;
    est.pose = pose_from_camera_frame(camera, rigid.rotation, rigid.translation);
    est.shape = Eigen::VectorXd::Zero(space.dims());
    est.planar_fallback = planar;
    est.converged = true;
    return est;
}

// ------------------------------------------------------------- refinement

namespace {

// part -> faces treated as visible; frozen between visibility updates so
// the refinement objective stays smooth
using VisibleFaces = std::map<int, std::vector<int>>;

VisibleFaces facing_faces(const LabeledMesh& mesh, const std::vector<Vec3>& vertices,
                          const Mat3& rotation, const Vec3& translation)
{
    VisibleFaces vis;
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const int label = mesh.face_part_labels[f];
        if (label <= 0)
            continue;
        const auto& tri = mesh.faces[f];
        const Vec3 a = rotation * vertices[tri[0]] + translation;
        const Vec3 b = rotation * vertices[tri[1]] + translation;
        const Vec3 c = rotation * vertices[tri[2]] + translation;
        const Vec3 normal = (b - a).cross(c - a);
        if (normal.dot(a + b + c) < 0) // outward normal facing the camera
            vis[label].push_back(static_cast<int>(f));
    }
    // a part whose faces all look away still needs a defined centroid:
    // fall back to every face of the part
    std::map<int, std::vector<int>> all;
    for (size_t f = 0; f < mesh.faces.size(); ++f)
        if (mesh.face_part_labels[f] > 0)
            all[mesh.face_part_labels[f]].push_back(static_cast<int>(f));
    for (auto& [label, faces] : all)
        if (vis.find(label) == vis.end())
            vis[label] = std::move(faces);
    return vis;
}

// area-weighted centroid of the projected faces of each part
std::map<int, Vec2> centroids_from_faces(const LabeledMesh& mesh,
                                         const std::vector<Vec3>& vertices, const Camera& cam,
                                         const Mat3& rotation, const Vec3& translation,
                                         const VisibleFaces& visible)
{
    std::vector<Vec2> projected(vertices.size());
    std::vector<char> ok(vertices.size(), 0);
    for (size_t i = 0; i < vertices.size(); ++i) {
        const Vec3 p = rotation * vertices[i] + translation;
        if (p.z() > 1e-6) {
            projected[i] = Vec2(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
            ok[i] = 1;
        }
    }
    std::map<int, Vec2> out;
    for (const auto& [label, faces] : visible) {
        double area_sum = 0;
        Vec2 weighted = Vec2::Zero();
        for (const int f : faces) {
            const auto& tri = mesh.faces[f];
            if (!ok[tri[0]] || !ok[tri[1]] || !ok[tri[2]])
                continue;
            const Vec2 a = projected[tri[0]], b = projected[tri[1]], c = projected[tri[2]];
            const double area =
                std::abs((b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x())) /
                2.0;
            area_sum += area;
            weighted += area * (a + b + c) / 3.0;
        }
        if (area_sum > 0)
            out[label] = weighted / area_sum;
    }
    return out;
}

double huber_cost(const Eigen::VectorXd& residuals, int part_count, double delta)
{
    double cost = 0;
    for (int i = 0; i < part_count; ++i) {
        const double r = residuals.segment<2>(2 * i).norm();
        cost += r <= delta ? r * r / 2 : delta * (r - delta / 2);
    }
    return cost;
}

} // namespace

std::map<int, Vec2> predict_part_centroids(const ShapeSpace& space,
                                           const LabeledMesh& template_mesh, const Camera& camera,
                                           const Eigen::VectorXd& shape, const Mat3& rotation,
                                           const Vec3& translation)
{
    const std::vector<Vec3> vertices = space.synthesize_points(shape);
    if (vertices.size() != template_mesh.vertices.size())
        throw Error(Err::ShapeMismatch, "template vertex count differs from the shape space");
    const VisibleFaces visible = facing_faces(template_mesh, vertices, rotation, translation);
    return centroids_from_faces(template_mesh, vertices, camera, rotation, translation, visible);
}

PoseEstimate refine(const PoseEstimate& init, const std::vector<PartObservation>& parts,
                    const ShapeSpace& space, const LabeledMesh& template_mesh,
                    const Camera& camera, const RefineConfig& config)
{
    camera.validate();
    if (template_mesh.vertices.size() != static_cast<size_t>(space.point_count))
        throw Error(Err::ShapeMismatch, "template vertex count differs from the shape space");
    if (parts.empty())
        throw Error(Err::EmptyInput, "no part observations");

    const int shape_dims =
        config.shape_dims < 0 ? space.dims() : std::min(config.shape_dims, space.dims());
    const int n_params = 6 + shape_dims;
    const int n_parts = static_cast<int>(parts.size());
    const int n_res = 2 * n_parts;

    // parameter vector: azimuth, elevation, tilt, center x, center y, distance, shape
    Eigen::VectorXd p(n_params);
    p[0] = init.pose.azimuth;
    p[1] = init.pose.elevation;
    p[2] = init.pose.tilt;
    p[3] = init.pose.center_px.x();
    p[4] = init.pose.center_px.y();
    p[5] = init.pose.distance;
    for (int k = 0; k < shape_dims; ++k)
        p[6 + k] = k < init.shape.size() ? init.shape[k] : 0.0;

    auto pose_of = [&](const Eigen::VectorXd& q) {
        CarPose pose;
        pose.azimuth = q[0];
        pose.elevation = q[1];
        pose.tilt = q[2];
        pose.center_px = Vec2(q[3], q[4]);
        pose.distance = q[5];
        return pose;
    };
    auto shape_of = [&](const Eigen::VectorXd& q) {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(space.dims());
        s.head(shape_dims) = q.tail(shape_dims);
        return s;
    };

    VisibleFaces visible;
    auto residuals_of = [&](const Eigen::VectorXd& q, bool& valid) {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(n_res);
        valid = q[5] > 0.1;
        if (!valid)
            return r;
        const CarPose pose = pose_of(q);
        const std::vector<Vec3> vertices = space.synthesize_points(shape_of(q));
        const Mat3 rot = pose_rotation(camera, pose);
        const Vec3 trans = pose_translation(camera, pose);
        const auto pred =
            centroids_from_faces(template_mesh, vertices, camera, rot, trans, visible);
        for (int i = 0; i < n_parts; ++i) {
            const auto it = pred.find(parts[i].part_id);
            if (it == pred.end()) {
                valid = false;
                return r;
            }
            r.segment<2>(2 * i) = it->second - parts[i].centroid;
        }
        return r;
    };
    auto cost_of = [&](const Eigen::VectorXd& q, bool& valid) {
        const Eigen::VectorXd r = residuals_of(q, valid);
        if (!valid)
            return std::numeric_limits<double>::infinity();
        return huber_cost(r, n_parts, config.huber_delta) +
               config.shape_regularizer * q.tail(shape_dims).squaredNorm();
    };

    PoseEstimate best = init;
    best.skipped = false;
    best.converged = false;
    best.note.clear();

    const int rounds = std::max(1, config.visibility_updates);
    const int iters_per_round = std::max(1, config.max_iterations / rounds);
    bool plateaued = false;

    for (int round = 0; round < rounds; ++round) {
        VisibleFaces previous = visible;
        {
            const std::vector<Vec3> vertices = space.synthesize_points(shape_of(p));
            const CarPose pose = pose_of(p);
            visible = facing_faces(template_mesh, vertices, pose_rotation(camera, pose),
                                   pose_translation(camera, pose));
        }
        bool valid = false;
        double cost = cost_of(p, valid);
        if (!valid) {
            // a refresh that leaves an observed part unexplained would make
            // the objective undefined; keep the last usable face set instead
            if (round > 0)
                visible = std::move(previous);
            break;
        }
        double lambda = 1e-4;
        plateaued = false;

        for (int it = 0; it < iters_per_round; ++it) {
            const Eigen::VectorXd r0 = residuals_of(p, valid);
            // robust weights from the current residuals
            Eigen::VectorXd w(n_parts);
            for (int i = 0; i < n_parts; ++i) {
                const double rn = r0.segment<2>(2 * i).norm();
                w[i] = rn <= config.huber_delta ? 1.0 : config.huber_delta / rn;
            }
            // forward-difference Jacobian of the centroid residuals
            Eigen::MatrixXd jac(n_res, n_params);
            for (int j = 0; j < n_params; ++j) {
                double h = 1e-6;
                if (j == 3 || j == 4)
                    h = 1e-3; // pixels
                if (j == 5)
                    h = std::max(1e-6, 1e-7 * p[5]);
                Eigen::VectorXd q = p;
                q[j] += h;
                bool jac_ok = false;
                const Eigen::VectorXd rj = residuals_of(q, jac_ok);
                jac.col(j) = jac_ok ? ((rj - r0) / h).eval() : Eigen::VectorXd::Zero(n_res);
            }

            Eigen::MatrixXd jtj = Eigen::MatrixXd::Zero(n_params, n_params);
            Eigen::VectorXd jtr = Eigen::VectorXd::Zero(n_params);
            for (int i = 0; i < n_parts; ++i) {
                const auto ji = jac.middleRows(2 * i, 2);
                jtj += w[i] * ji.transpose() * ji;
                jtr += w[i] * ji.transpose() * r0.segment<2>(2 * i);
            }
            // regularizer mu*|s|^2: gradient 2*mu*s, exact Hessian 2*mu
            for (int k = 0; k < shape_dims; ++k) {
                jtj(6 + k, 6 + k) += 2 * config.shape_regularizer;
                jtr[6 + k] += 2 * config.shape_regularizer * p[6 + k];
            }

            bool accepted = false;
            for (int tries = 0; tries < 8; ++tries) {
                Eigen::MatrixXd damped = jtj;
                damped.diagonal() += lambda * (jtj.diagonal().array() + 1.0).matrix();
                const Eigen::VectorXd delta = damped.ldlt().solve(-jtr);
                Eigen::VectorXd q = p + delta;
                q[0] = wrap_angle(q[0]);
                q[2] = wrap_angle(q[2]);
                bool step_ok = false;
                const double new_cost = cost_of(q, step_ok);
                if (step_ok && new_cost <= cost) {
                    const double drop = cost - new_cost;
                    p = q;
                    cost = new_cost;
                    lambda = std::max(lambda * 0.3, 1e-12);
                    accepted = true;
                    if (drop <= config.tolerance * std::max(cost, 1e-12))
                        plateaued = true;
                    break;
                }
                lambda *= 10;
            }
            if (!accepted) {
                plateaued = true;
                break;
            }
            if (plateaued)
                break;
        }
    }

    best.pose = pose_of(p);
    best.pose.azimuth = wrap_angle(best.pose.azimuth);
    best.pose.tilt = wrap_angle(best.pose.tilt);
    best.shape = shape_of(p);
    best.converged = plateaued;
    if (!plateaued)
        best.note = "iteration cap reached";

    bool valid = false;
    const Eigen::VectorXd r = residuals_of(p, valid);
    best.reprojection_rms = valid ? std::sqrt(r.squaredNorm() / n_parts) :
                                    std::numeric_limits<double>::quiet_NaN();
    return best;
}

std::vector<PoseEstimate> solve_scene(const LabelMaps& maps, const ShapeSpace& space,
                                      const LabeledMesh& template_mesh, const Camera& camera,
                                      const RefineConfig& config)
{
    const auto observations = extract_observations(maps);
    std::vector<PoseEstimate> estimates;
    estimates.reserve(observations.size());

    for (const auto& obs : observations) {
        std::vector<PartObservation> parts;
        for (const auto& part : obs.parts)
            if (part.pixel_count >= config.min_part_pixels)
                parts.push_back(part);

        PoseEstimate est;
        est.instance_id = obs.instance_id;
        if (static_cast<int>(parts.size()) < 4) {
            est.skipped = true;
            est.shape = Eigen::VectorXd::Zero(space.dims());
            est.note = "fewer than 4 usable part observations";
            estimates.push_back(std::move(est));
            continue;
        }

        try {
            PoseEstimate init = pnp_init(parts, space, camera);
            init.instance_id = obs.instance_id;
            PoseEstimate refined = refine(init, parts, space, template_mesh, camera, config);

            // a bilaterally symmetric model makes the init two-fold
            // ambiguous; refine the mirrored sibling and keep the better fit
            PoseEstimate mirrored_init = init;
            mirrored_init.pose.azimuth = wrap_angle(-init.pose.azimuth);
            mirrored_init.pose.tilt = wrap_angle(-init.pose.tilt);
            PoseEstimate alt = refine(mirrored_init, parts, space, template_mesh, camera, config);
            const bool refined_bad = std::isnan(refined.reprojection_rms);
            const bool alt_ok = !std::isnan(alt.reprojection_rms);
            if (alt_ok && (refined_bad || alt.reprojection_rms < refined.reprojection_rms))
                refined = alt;

            refined.instance_id = obs.instance_id;
            refined.planar_fallback = init.planar_fallback;
            if (!std::isfinite(refined.reprojection_rms)) {
                refined.skipped = true;
                refined.note = "refinement left observed parts unexplained";
            }
            estimates.push_back(std::move(refined));
        } catch (const Error& e) {
            est.skipped = true;
            est.shape = Eigen::VectorXd::Zero(space.dims());
            est.note = std::string("initialization failed: ") + e.what();
            estimates.push_back(std::move(est));
        }
    }
    return estimates;
}

} // namespace carparts
