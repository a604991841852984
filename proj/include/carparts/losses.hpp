#pragma once

#include <array>

#include <Eigen/Dense>

#include "carparts/image.hpp"
#include "carparts/pose.hpp"
#include "carparts/shape_space.hpp"

namespace carparts {

// losses in this header return their value and, when a grad out-param is
// given, the analytic gradient w.r.t. the prediction. Gradients are exact
// where differentiable; L1 uses the zero subgradient at kinks. Finite
// differences live in the tests as the oracle only.

double softmax_cross_entropy(const Eigen::VectorXd& logits, int target,
                             Eigen::VectorXd* grad = nullptr);

double l1_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
               Eigen::VectorXd* grad = nullptr);

struct LossWeights {
    double lambda1 = 1.0; // source-image car-class term
    double lambda2 = 1.0; // target-image car-class term
    double w_direct = 1.0;
    double w_3d = 1.0;
};

// ------------------------------------------------- class consistency loss

// per-pixel class probabilities for one image: part channels (background
// first) and a binary car/not-car pair; each pixel's distribution sums
// to one
struct SegPrediction {
    Tensor3 part_probs;
    Tensor3 car_probs; // 2 channels: not-car, car
};

struct SegGrads {
    Tensor3 src_part_logits;
    Tensor3 src_car_logits;
    Tensor3 tgt_car_logits;
};

// mean pixel cross-entropy of source part predictions, plus weighted mean
// pixel cross-entropies of the car channel on the source and target
// images. Gradients are w.r.t. the (implicit) logits and therefore
// computable from the probabilities alone.
double consistency_loss(const SegPrediction& src_pred, const Image<int>& src_part_gt,
                        const Image<int>& src_car_gt, const SegPrediction& tgt_pred,
                        const Image<int>& tgt_car_gt, const LossWeights& w = {},
                        SegGrads* grads = nullptr);

// ------------------------------------------------------- direct pose loss

struct DirectLossInput {
    // prediction: confidences in the encodings are normalized probabilities
    // (an encoding scores zero against its own source values); confidence
    // gradients are reported w.r.t. the implicit logits, p - onehot
    Vec2 center = Vec2::Zero();
    Eigen::VectorXd shape;
    std::array<BinEncoding, 3> angles; // azimuth, elevation, tilt
    BinEncoding distance;
    // ground truth
    Vec2 center_gt = Vec2::Zero();
    Eigen::VectorXd shape_gt;
    std::array<double, 3> angles_gt{0, 0, 0};
    double distance_gt = 1.0;
};

struct BinGrads {
    Eigen::VectorXd confidences;
    Eigen::VectorXd sin_offset;
    Eigen::VectorXd cos_offset;
    Eigen::VectorXd offset;
};

struct DirectLossGrads {
    Vec2 center = Vec2::Zero();
    Eigen::VectorXd shape;
    std::array<BinGrads, 3> angles;
    BinGrads distance;
};

// L1 on center and shape, softmax cross-entropy on each quantity's bin
// confidences, and an L1 residual read from the ground-truth bin only.
// The angle residual is recovered as atan2(sin, cos) and wrapped before
// the L1 so bin-boundary crossings never cost 2pi.
double direct_loss(const DirectLossInput& input, const BinCodec& angle_codec,
                   const BinCodec& distance_codec, DirectLossGrads* grads = nullptr);

// ---------------------------------------------------------- 3d pose loss

// decoded pose the 3d loss consumes; vertices come from the shape space
// and gradients flow to the shape coefficients, the three angles, and the
// distance. Ray rotations are fixed inputs.
struct DecodedPose {
    Eigen::VectorXd shape;
    double azimuth = 0.0;
    double elevation = 0.0;
    double tilt = 0.0;
    double distance = 1.0;
};

struct DecodedPoseGrads {
    Eigen::VectorXd shape;
    double azimuth = 0.0;
    double elevation = 0.0;
    double tilt = 0.0;
    double distance = 0.0;
};

// mean vertex distance in the model frame, mean vertex distance after the
// full camera-frame rotation R = R_c * R_v, and the distance between the
// two translations R_c * (0,0,d)
double pose_3d_loss(const ShapeSpace& space, const DecodedPose& pred, const Mat3& ray_rot_pred,
                    const DecodedPose& target, const Mat3& ray_rot_target,
                    DecodedPoseGrads* grads = nullptr);

double total_loss(double direct, double threed, const LossWeights& w);

// derivative of the Z-X-Y Euler rotation w.r.t. each angle (shared with
// the solver's Jacobians)
void rotation_angle_derivatives(double azimuth, double elevation, double tilt, Mat3& d_azimuth,
                                Mat3& d_elevation, Mat3& d_tilt);

} // namespace carparts
