#pragma once

#include <vector>

#include "carparts/features.hpp"
#include "carparts/image.hpp"
#include "carparts/pose.hpp"
#include "carparts/shape_space.hpp"

namespace carparts {

// joint shape / rotation / translation precision over threshold tuples.
// Tuples are ordered loose -> strict; the named criteria index into the
// lists. Translation in meters (Abs) or as a fraction of the gt distance
// (Rel); rotation thresholds in radians; shape thresholds are minimum
// similarity (1 = identical).
struct JointPrecisionConfig {
    std::vector<double> translation;
    std::vector<double> rotation;
    std::vector<double> shape_similarity;
    int loose_index = 4;  // "c-l"
    int strict_index = 7; // "c-s"

    void validate() const;
    static JointPrecisionConfig defaults();
};

enum class TranslationMode { absolute, relative };

struct PosePrediction {
    CarPose pose;
    Eigen::VectorXd shape;
    double score = 0.0;
};

struct PoseTruth {
    CarPose pose;
    Eigen::VectorXd shape;
};

struct JointPrecisionRecord {
    std::vector<PosePrediction> predictions;
    std::vector<PoseTruth> truths;
};

struct JointPrecisionResult {
    std::vector<double> precision; // per threshold tuple
    double mean = 0.0;
    double loose = 0.0;
    double strict = 0.0;
};

// 1 - (mean per-vertex distance between the reconstructions / diagonal of
// the gt reconstruction's bounding box), clamped to [0, 1]
double shape_similarity(const ShapeSpace& space, const Eigen::VectorXd& pred,
                        const Eigen::VectorXd& truth);

// geodesic angle between two rotations
double rotation_error(const Mat3& a, const Mat3& b);

// greedy score-ordered matching per image under the joint criterion;
// precision aggregated over the whole record list per tuple. Throws
// EmptyGroundTruth when no record has any truth.
JointPrecisionResult joint_precision(const std::vector<JointPrecisionRecord>& records,
                                     const ShapeSpace& space, const Camera& camera,
                                     const JointPrecisionConfig& cfg, TranslationMode mode);

// ------------------------------------------------- detection / orientation

struct BoxDetection {
    Box box;
    double azimuth = 0.0;
    double score = 0.0;
};

struct BoxTruth {
    Box box;
    double azimuth = 0.0;
};

struct DetectionRecord {
    std::vector<BoxDetection> detections;
    std::vector<BoxTruth> truths;
};

struct OrientationResult {
    double ap = 0.0;  // average precision at the IoU threshold
    double aos = 0.0; // same sweep, true positives weighted by (1+cos d)/2
    double os = 0.0;  // aos / ap
};

double box_iou(const Box& a, const Box& b);

// detection AP (score-ranked, greedy best-IoU matching, all-point
// interpolation) and average orientation similarity at the same sweep
OrientationResult orientation_metrics(const std::vector<DetectionRecord>& records,
                                      double iou_threshold = 0.7);

// the OS identity on already-aggregated numbers: os = aos / ap
double orientation_score(double ap, double aos);

// ------------------------------------------------------ part segmentation

struct IouResult {
    std::vector<double> per_class; // NaN for classes absent from both maps
    double mean_iou = 0.0;         // over classes present in either map
};

// intersection-over-union per class id in [0, class_count); classes with
// no pixels in either map are excluded from the mean
IouResult part_iou(const Image<uint16_t>& pred, const Image<uint16_t>& gt, int class_count);

} // namespace carparts
