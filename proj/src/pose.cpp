#include "carparts/pose.hpp"

#include <algorithm>
#include <cmath>
#include <Eigen/Geometry>

#include "carparts/error.hpp"

namespace carparts {

// ---------------------------------------------------------------- camera

void Camera::validate() const
{
    if (fx <= 0 || fy <= 0)
        throw Error(Err::InvalidArgument, "focal lengths must be positive");
    if (width <= 0 || height <= 0)
        throw Error(Err::InvalidArgument, "image size must be positive");
    if (cx < 0 || cx > width || cy < 0 || cy > height)
        throw Error(Err::InvalidArgument, "principal point outside image");
}

Vec2 Camera::project(const Vec3& p) const
{
    if (p.z() <= 0)
        throw Error(Err::BehindCamera, "projected point has non-positive depth");
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
}

Vec3 Camera::backproject(const Vec2& pixel, double depth) const
{
    return {(pixel.x() - cx) / fx * depth, (pixel.y() - cy) / fy * depth, depth};
}

Vec3 Camera::ray(const Vec2& pixel) const
{
    return backproject(pixel, 1.0).normalized();
}

double wrap_angle(double a)
{
    a = std::fmod(a, 2.0 * M_PI);
    if (a > M_PI)
        a -= 2.0 * M_PI;
    if (a <= -M_PI)
        a += 2.0 * M_PI;
    return a;
}

// -------------------------------------------------------------- rotations

namespace {

Mat3 rot_x(double a)
{
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << 1, 0, 0, 0, c, -s, 0, s, c;
    return r;
}

Mat3 rot_y(double a)
{
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << c, 0, s, 0, 1, 0, -s, 0, c;
    return r;
}

Mat3 rot_z(double a)
{
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << c, -s, 0, s, c, 0, 0, 0, 1;
    return r;
}

} // namespace

Mat3 rotation_from_angles(double azimuth, double elevation, double tilt)
{
    return rot_z(tilt) * rot_x(elevation) * rot_y(azimuth);
}

void angles_from_rotation(const Mat3& r, double& azimuth, double& elevation, double& tilt)
{
    // R = Rz(g) Rx(b) Ry(a):
    //   r(2,1) = sin b
    //   r(2,0) = -cos b sin a,  r(2,2) = cos b cos a
    //   r(0,1) = -sin g cos b,  r(1,1) = cos g cos b
    elevation = std::asin(std::clamp(r(2, 1), -1.0, 1.0));
    const double cb = std::cos(elevation);
    if (std::abs(cb) > 1e-12) {
        azimuth = std::atan2(-r(2, 0), r(2, 2));
        tilt = std::atan2(-r(0, 1), r(1, 1));
    } else {
        // gimbal lock: only azimuth+tilt (or their difference) is defined;
        // put everything into azimuth
        tilt = 0.0;
        azimuth = std::atan2(r(0, 2), r(0, 0));
    }
}

Mat3 ray_rotation(const Camera& cam, const Vec2& center_px)
{
    if (center_px.x() == cam.cx && center_px.y() == cam.cy)
        return Mat3::Identity(); // exact at the principal point
    const Vec3 r = cam.ray(center_px);
    const Vec3 z = Vec3::UnitZ();
    Vec3 axis = z.cross(r);
    const double s = axis.norm();
    const double c = z.dot(r);
    if (s < 1e-15)
        return Mat3::Identity();
    axis /= s;
    const double angle = std::atan2(s, c);
    return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

Mat3 allocentric_decompose(const Mat3& rotation, const Camera& cam, const Vec2& center_px)
{
    return ray_rotation(cam, center_px).transpose() * rotation;
}

Mat3 allocentric_compose(const Mat3& rotation_v, const Camera& cam, const Vec2& center_px)
{
    return ray_rotation(cam, center_px) * rotation_v;
}

Mat3 pose_rotation(const Camera& cam, const CarPose& pose)
{
    return allocentric_compose(rotation_from_angles(pose.azimuth, pose.elevation, pose.tilt), cam,
                               pose.center_px);
}

Vec3 pose_translation(const Camera& cam, const CarPose& pose)
{
    return ray_rotation(cam, pose.center_px) * Vec3(0, 0, pose.distance);
}

CarPose pose_from_camera_frame(const Camera& cam, const Mat3& rotation, const Vec3& translation)
{
    if (translation.z() <= 0)
        throw Error(Err::BehindCamera, "object center behind the camera");
    CarPose pose;
    pose.center_px = cam.project(translation);
    pose.distance = translation.norm();
    const Mat3 rv = allocentric_decompose(rotation, cam, pose.center_px);
    angles_from_rotation(rv, pose.azimuth, pose.elevation, pose.tilt);
    return pose;
}

// ---------------------------------------------------------------- binning

BinCodec BinCodec::angle(int bin_count)
{
    if (bin_count < 2)
        throw Error(Err::InvalidArgument, "angle codec needs >= 2 bins");
    BinCodec c;
    c.kind = Kind::angle;
    c.centers.resize(bin_count);
    for (int k = 0; k < bin_count; ++k)
        c.centers[k] = wrap_angle(k * 2.0 * M_PI / bin_count);
    return c;
}

BinCodec BinCodec::distance(int bin_count, double min_distance, double max_distance)
{
    if (bin_count < 2 || min_distance <= 0 || max_distance <= min_distance)
        throw Error(Err::InvalidArgument, "bad distance codec parameters");
    BinCodec c;
    c.kind = Kind::distance;
    c.min_value = min_distance;
    c.max_value = max_distance;
    c.edges.resize(bin_count + 1);
    const double ratio = max_distance / min_distance;
    for (int i = 0; i <= bin_count; ++i)
        c.edges[i] = min_distance * std::pow(ratio, static_cast<double>(i) / bin_count);
    c.centers.resize(bin_count);
    for (int i = 0; i < bin_count; ++i)
        c.centers[i] = std::sqrt(c.edges[i] * c.edges[i + 1]); // geometric bin center
    return c;
}

int BinCodec::bin_of(double value) const
{
    if (kind == Kind::angle) {
        // nearest center on the circle; sector width 2pi/n around each center
        const int n = bin_count();
        const double width = 2.0 * M_PI / n;
        const int k = static_cast<int>(std::lround(wrap_angle(value) / width));
        return (k % n + n) % n;
    }
    if (value < min_value || value > max_value)
        throw Error(Err::OutOfRange, "distance outside codec range");
    const int n = bin_count();
    // log-uniform edges: invert analytically, then clamp fp edge cases
    const double f = std::log(value / min_value) / std::log(max_value / min_value);
    int bin = std::clamp(static_cast<int>(f * n), 0, n - 1);
    if (value < edges[bin] && bin > 0)
        --bin;
    if (value >= edges[bin + 1] && bin < n - 1)
        ++bin;
    return bin;
}

BinEncoding encode_bins(double value, const BinCodec& codec)
{
    const int n = codec.bin_count();
    const int hot = codec.bin_of(value);
    BinEncoding enc;
    enc.confidences.assign(n, 0.0);
    enc.confidences[hot] = 1.0;
    if (codec.kind == BinCodec::Kind::angle) {
        enc.sin_offset.resize(n);
        enc.cos_offset.resize(n);
        for (int k = 0; k < n; ++k) {
            const double d = wrap_angle(value - codec.centers[k]);
            enc.sin_offset[k] = std::sin(d);
            enc.cos_offset[k] = std::cos(d);
        }
    } else {
        enc.offset.resize(n);
        for (int k = 0; k < n; ++k)
            enc.offset[k] = value - codec.centers[k];
    }
    return enc;
}

double decode_bins(const BinEncoding& enc, const BinCodec& codec)
{
    const int n = codec.bin_count();
    if (static_cast<int>(enc.confidences.size()) != n)
        throw Error(Err::ShapeMismatch, "encoding size does not match codec");
    const int hot = static_cast<int>(
        std::max_element(enc.confidences.begin(), enc.confidences.end()) - enc.confidences.begin());
    if (codec.kind == BinCodec::Kind::angle) {
        const double d = std::atan2(enc.sin_offset[hot], enc.cos_offset[hot]);
        return wrap_angle(codec.centers[hot] + d);
    }
    return codec.centers[hot] + enc.offset[hot];
}

double decode_bins_soft(const BinEncoding& enc, const BinCodec& codec)
{
    const int n = codec.bin_count();
    if (static_cast<int>(enc.confidences.size()) != n)
        throw Error(Err::ShapeMismatch, "encoding size does not match codec");
    // softmax weights over confidences
    const double peak = *std::max_element(enc.confidences.begin(), enc.confidences.end());
    std::vector<double> w(n);
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
        w[k] = std::exp(enc.confidences[k] - peak);
        total += w[k];
    }
    if (codec.kind == BinCodec::Kind::angle) {
        // average the per-bin decoded value on the circle
        double sx = 0.0, sy = 0.0;
        for (int k = 0; k < n; ++k) {
            const double v = codec.centers[k] + std::atan2(enc.sin_offset[k], enc.cos_offset[k]);
            sx += w[k] * std::cos(v);
            sy += w[k] * std::sin(v);
        }
        return std::atan2(sy, sx);
    }
    double v = 0.0;
    for (int k = 0; k < n; ++k)
        v += w[k] * (codec.centers[k] + enc.offset[k]);
    return v / total;
}

} // namespace carparts
