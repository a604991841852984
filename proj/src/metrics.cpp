#include "carparts/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "carparts/error.hpp"

namespace carparts {

void JointPrecisionConfig::validate() const
{
    const size_t n = translation.size();
    if (n < 2)
        throw Error(Err::InvalidArgument, "need at least two threshold tuples");
    if (rotation.size() != n || shape_similarity.size() != n)
        throw Error(Err::ShapeMismatch, "threshold lists differ in length");
    if (loose_index == strict_index)
        throw Error(Err::InvalidArgument, "loose and strict must name different tuples");
    if (loose_index < 0 || loose_index >= static_cast<int>(n) || strict_index < 0 ||
        strict_index >= static_cast<int>(n))
        throw Error(Err::OutOfRange, "criterion index outside the threshold lists");
    for (size_t i = 1; i < n; ++i) {
        if (translation[i] > translation[i - 1] || rotation[i] > rotation[i - 1])
            throw Error(Err::InvalidArgument, "translation/rotation thresholds must tighten");
        if (shape_similarity[i] < shape_similarity[i - 1])
            throw Error(Err::InvalidArgument, "shape thresholds must tighten (ascend)");
    }
}

JointPrecisionConfig JointPrecisionConfig::defaults()
{
    JointPrecisionConfig cfg;
    cfg.translation = {5.0, 4.4, 3.9, 3.3, 2.8, 2.5, 2.0, 1.4, 1.0, 0.5};
    const double pi = M_PI;
    cfg.rotation = {pi / 3,  3 * pi / 10, pi / 4,  pi / 5,  pi / 6,
                    pi / 7,  pi / 8,      pi / 12, pi / 15, pi / 30};
    cfg.shape_similarity = {0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
    cfg.loose_index = 4;  // (2.8 m, pi/6, 0.70)
    cfg.strict_index = 7; // (1.4 m, pi/12, 0.85)
    return cfg;
}

double shape_similarity(const ShapeSpace& space, const Eigen::VectorXd& pred,
                        const Eigen::VectorXd& truth)
{
    const auto pv = space.synthesize_points(pred);
    const auto tv = space.synthesize_points(truth);
    double mean_dist = 0;
    Vec3 lo = tv[0], hi = tv[0];
    for (size_t i = 0; i < tv.size(); ++i) {
        mean_dist += (pv[i] - tv[i]).norm();
        lo = lo.cwiseMin(tv[i]);
        hi = hi.cwiseMax(tv[i]);
    }
    mean_dist /= static_cast<double>(tv.size());
    const double diag = (hi - lo).norm();
    if (diag <= 0)
        return mean_dist == 0 ? 1.0 : 0.0;
    return std::clamp(1.0 - mean_dist / diag, 0.0, 1.0);
}

double rotation_error(const Mat3& a, const Mat3& b)
{
    const double c = ((a * b.transpose()).trace() - 1.0) / 2.0;
    return std::acos(std::clamp(c, -1.0, 1.0));
}

namespace {

struct PoseErrors {
    double translation; // meters
    double rotation;    // radians
    double shape;       // similarity in [0,1]
    double gt_distance; // meters, for relative mode
};

} // namespace

JointPrecisionResult joint_precision(const std::vector<JointPrecisionRecord>& records,
                                     const ShapeSpace& space, const Camera& camera,
                                     const JointPrecisionConfig& cfg, TranslationMode mode)
{
    cfg.validate();
    size_t total_gt = 0;
    for (const auto& r : records)
        total_gt += r.truths.size();
    if (total_gt == 0)
        throw Error(Err::EmptyGroundTruth, "no ground-truth poses in any record");

    // pairwise errors are threshold-independent; compute once per image
    struct ImageErrors {
        std::vector<size_t> order;                  // predictions by descending score
        std::vector<std::vector<PoseErrors>> pairs; // [pred][gt]
        size_t gt_count = 0;
    };
    std::vector<ImageErrors> images;
    images.reserve(records.size());
    size_t total_pred = 0;
    for (const auto& rec : records) {
        ImageErrors img;
        img.gt_count = rec.truths.size();
        img.order.resize(rec.predictions.size());
        std::iota(img.order.begin(), img.order.end(), size_t{0});
        std::stable_sort(img.order.begin(), img.order.end(), [&](size_t a, size_t b) {
            return rec.predictions[a].score > rec.predictions[b].score;
        });
        img.pairs.resize(rec.predictions.size());
        for (size_t p = 0; p < rec.predictions.size(); ++p) {
            img.pairs[p].reserve(rec.truths.size());
            const auto& pr = rec.predictions[p];
            const Vec3 tp = pose_translation(camera, pr.pose);
            const Mat3 rp = pose_rotation(camera, pr.pose);
            for (const auto& gt : rec.truths) {
                PoseErrors e;
                e.translation = (tp - pose_translation(camera, gt.pose)).norm();
                e.rotation = rotation_error(rp, pose_rotation(camera, gt.pose));
                e.shape = shape_similarity(space, pr.shape, gt.shape);
                e.gt_distance = gt.pose.distance;
                img.pairs[p].push_back(e);
            }
        }
        total_pred += rec.predictions.size();
        images.push_back(std::move(img));
    }

    const size_t tuples = cfg.translation.size();
    JointPrecisionResult result;
    result.precision.resize(tuples, 0.0);
    // one matching per image, built under the loosest tuple, shared by every
    // tuple: tightening can then only demote matched pairs, never re-route
    // them, which keeps precision monotone in the thresholds
    std::vector<size_t> true_positives(tuples, 0);
    for (const auto& img : images) {
        std::vector<char> used(img.gt_count, 0);
        for (const size_t p : img.order) {
            int best = -1;
            double best_trans = std::numeric_limits<double>::infinity();
            for (size_t g = 0; g < img.gt_count; ++g) {
                if (used[g])
                    continue;
                const auto& e = img.pairs[p][g];
                const double limit = mode == TranslationMode::absolute
                                         ? cfg.translation[0]
                                         : cfg.translation[0] * e.gt_distance;
                if (e.translation <= limit && e.rotation <= cfg.rotation[0] &&
                    e.shape >= cfg.shape_similarity[0] && e.translation < best_trans) {
                    best = static_cast<int>(g);
                    best_trans = e.translation;
                }
            }
            if (best < 0)
                continue;
            used[best] = 1;
            const auto& e = img.pairs[p][best];
            for (size_t k = 0; k < tuples; ++k) {
                const double limit = mode == TranslationMode::absolute
                                         ? cfg.translation[k]
                                         : cfg.translation[k] * e.gt_distance;
                if (e.translation <= limit && e.rotation <= cfg.rotation[k] &&
                    e.shape >= cfg.shape_similarity[k])
                    ++true_positives[k];
            }
        }
    }
    for (size_t k = 0; k < tuples; ++k)
        result.precision[k] = total_pred == 0
                                  ? 0.0
                                  : static_cast<double>(true_positives[k]) /
                                        static_cast<double>(total_pred);
    result.mean =
        std::accumulate(result.precision.begin(), result.precision.end(), 0.0) / tuples;
    result.loose = result.precision[cfg.loose_index];
    result.strict = result.precision[cfg.strict_index];
    return result;
}

// ------------------------------------------------- detection / orientation

double box_iou(const Box& a, const Box& b)
{
    if (a.empty() || b.empty())
        return 0.0;
    const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
    const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
    const double inter = ix * iy;
    const double uni = a.width() * a.height() + b.width() * b.height() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

namespace {

// all-point interpolated area under the precision(recall) curve, where
// "precision" may be any per-detection cumulative numerator / rank ratio
double sweep_area(const std::vector<double>& numerator_steps, const std::vector<char>& is_tp,
                  size_t total_gt)
{
    const size_t n = numerator_steps.size();
    std::vector<double> prec(n), recall(n);
    double cum_num = 0;
    size_t cum_tp = 0;
    for (size_t i = 0; i < n; ++i) {
        cum_num += numerator_steps[i];
        cum_tp += is_tp[i] ? 1 : 0;
        prec[i] = cum_num / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(cum_tp) / static_cast<double>(total_gt);
    }
    // make precision monotone non-increasing from the right
    for (size_t i = n; i-- > 1;)
        prec[i - 1] = std::max(prec[i - 1], prec[i]);
    double area = 0, prev_recall = 0;
    for (size_t i = 0; i < n; ++i) {
        area += (recall[i] - prev_recall) * prec[i];
        prev_recall = recall[i];
    }
    return area;
}

} // namespace

OrientationResult orientation_metrics(const std::vector<DetectionRecord>& records,
                                      double iou_threshold)
{
    size_t total_gt = 0;
    for (const auto& r : records)
        total_gt += r.truths.size();
    if (total_gt == 0)
        throw Error(Err::EmptyGroundTruth, "no ground-truth boxes in any record");

    struct Flat {
        double score;
        size_t record;
        size_t index;
    };
    std::vector<Flat> flat;
    for (size_t r = 0; r < records.size(); ++r)
        for (size_t d = 0; d < records[r].detections.size(); ++d)
            flat.push_back({records[r].detections[d].score, r, d});
    std::stable_sort(flat.begin(), flat.end(),
                     [](const Flat& a, const Flat& b) { return a.score > b.score; });

    std::vector<std::vector<char>> used(records.size());
    for (size_t r = 0; r < records.size(); ++r)
        used[r].assign(records[r].truths.size(), 0);

    std::vector<char> is_tp(flat.size(), 0);
    std::vector<double> similarity(flat.size(), 0.0);
    for (size_t i = 0; i < flat.size(); ++i) {
        const auto& rec = records[flat[i].record];
        const auto& det = rec.detections[flat[i].index];
        int best = -1;
        double best_iou = iou_threshold;
        for (size_t g = 0; g < rec.truths.size(); ++g) {
            if (used[flat[i].record][g])
                continue;
            const double iou = box_iou(det.box, rec.truths[g].box);
            if (iou >= best_iou) {
                best_iou = iou;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            used[flat[i].record][best] = 1;
            is_tp[i] = 1;
            const double d = det.azimuth - rec.truths[best].azimuth;
            similarity[i] = (1.0 + std::cos(d)) / 2.0;
        }
    }

    std::vector<double> tp_steps(flat.size());
    for (size_t i = 0; i < flat.size(); ++i)
        tp_steps[i] = is_tp[i] ? 1.0 : 0.0;
    OrientationResult out;
    out.ap = sweep_area(tp_steps, is_tp, total_gt);
    out.aos = sweep_area(similarity, is_tp, total_gt);
    out.os = out.ap > 0 ? out.aos / out.ap : 0.0;
    return out;
}

double orientation_score(double ap, double aos)
{
    if (ap <= 0)
        throw Error(Err::InvalidArgument, "orientation score undefined at zero precision");
    return aos / ap;
}

// ------------------------------------------------------ part segmentation

IouResult part_iou(const Image<uint16_t>& pred, const Image<uint16_t>& gt, int class_count)
{
    if (!pred.same_size(gt.width, gt.height))
        throw Error(Err::ShapeMismatch, "prediction and ground-truth maps differ in size");
    if (class_count < 1)
        throw Error(Err::InvalidArgument, "need at least one class");

    std::vector<long> inter(class_count, 0), in_pred(class_count, 0), in_gt(class_count, 0);
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const int p = pred.data[i], g = gt.data[i];
        if (p >= class_count || g >= class_count)
            throw Error(Err::OutOfRange, "label outside the class range");
        ++in_pred[p];
        ++in_gt[g];
        if (p == g)
            ++inter[p];
    }

    IouResult result;
    result.per_class.assign(class_count, std::numeric_limits<double>::quiet_NaN());
    double sum = 0;
    int present = 0;
    for (int c = 0; c < class_count; ++c) {
        const long uni = in_pred[c] + in_gt[c] - inter[c];
        if (uni == 0)
            continue; // absent from both maps
        result.per_class[c] = static_cast<double>(inter[c]) / static_cast<double>(uni);
        sum += result.per_class[c];
        ++present;
    }
    result.mean_iou = present > 0 ? sum / present : 0.0;
    return result;
}

} // namespace carparts
