#pragma once

#include <array>
#include <vector>

#include "carparts/geometry.hpp"

namespace carparts {

// pinhole camera; pixel coordinates follow the image convention
// (x right, y down, origin at the top-left corner)
struct Camera {
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    int width = 0, height = 0;

    Vec2 project(const Vec3& p_cam) const;      // throws BehindCamera when z <= 0
    Vec3 backproject(const Vec2& pixel, double depth) const; // depth = z
    Vec3 ray(const Vec2& pixel) const;          // unit ray through the pixel
    void validate() const;
};

// object pose stored in viewpoint form. The rotation seen by the camera
// decomposes as R = R_c * R_v: R_c turns the principal axis onto the ray
// through the projected object center and R_v(azimuth, elevation, tilt)
// is the view-independent part. The translation is d units along that
// ray, t = R_c * (0, 0, d).
struct CarPose {
    double azimuth = 0.0;    // about the camera y axis
    double elevation = 0.0;  // about x
    double tilt = 0.0;       // about z
    Vec2 center_px = Vec2::Zero();
    double distance = 1.0;   // meters along the ray, > 0
};

// intrinsic Z(tilt) * X(elevation) * Y(azimuth) Euler composition,
// used consistently for every rotation in the toolkit
Mat3 rotation_from_angles(double azimuth, double elevation, double tilt);
// inverse of rotation_from_angles; elevation comes back in [-pi/2, pi/2]
void angles_from_rotation(const Mat3& r, double& azimuth, double& elevation, double& tilt);

// minimal rotation (axis = z x ray) taking the principal axis onto the
// unit ray through `center_px`; exactly the identity at the principal point
Mat3 ray_rotation(const Camera& cam, const Vec2& center_px);

// R_v = R_c^T * R and its exact inverse
Mat3 allocentric_decompose(const Mat3& rotation, const Camera& cam, const Vec2& center_px);
Mat3 allocentric_compose(const Mat3& rotation_v, const Camera& cam, const Vec2& center_px);

// assemble the camera-frame rotation / translation of a pose
Mat3 pose_rotation(const Camera& cam, const CarPose& pose);
Vec3 pose_translation(const Camera& cam, const CarPose& pose);

// recover the viewpoint form from a camera-frame pose
CarPose pose_from_camera_frame(const Camera& cam, const Mat3& rotation, const Vec3& translation);

// wrap to (-pi, pi]
double wrap_angle(double a);

// --------------------------------------------------------------- binning

// bin layout for one scalar quantity. Angle codecs wrap circularly with
// equal sectors; distance codecs use log-spaced edges over a closed range.
struct BinCodec {
    enum class Kind { angle, distance };

    Kind kind = Kind::angle;
    std::vector<double> centers;
    std::vector<double> edges;   // distance only, centers.size() + 1 entries
    double min_value = 0.0;      // distance only
    double max_value = 0.0;

    static BinCodec angle(int bin_count = 8);
    static BinCodec distance(int bin_count = 32, double min_distance = 3.0,
                             double max_distance = 150.0);

    int bin_count() const { return static_cast<int>(centers.size()); }
    // containing bin: nearest center (circular) for angles, edge lookup
    // for distances; distance values outside the range throw OutOfRange
    int bin_of(double value) const;
};

// per-bin confidences plus per-bin residuals from each bin center; angle
// residuals are stored as (sin, cos) pairs so the regression target has
// no wrap discontinuity
struct BinEncoding {
    std::vector<double> confidences;      // one-hot on encode
    std::vector<double> sin_offset;       // angle codecs
    std::vector<double> cos_offset;
    std::vector<double> offset;           // distance codecs, linear
};

BinEncoding encode_bins(double value, const BinCodec& codec);
// argmax-confidence bin center plus its residual; angles recover the
// residual as atan2(sin, cos) and wrap the result
double decode_bins(const BinEncoding& enc, const BinCodec& codec);
// confidence-weighted (softmax) alternative to the hard argmax decode
double decode_bins_soft(const BinEncoding& enc, const BinCodec& codec);

} // namespace carparts
