#include "carparts/losses.hpp"

#include <cmath>

#include "carparts/error.hpp"

namespace carparts {

double softmax_cross_entropy(const Eigen::VectorXd& logits, int target, Eigen::VectorXd* grad)
{
    if (target < 0 || target >= logits.size())
        throw Error(Err::OutOfRange, "target class outside logit vector");
    const double peak = logits.maxCoeff();
    const double lse = peak + std::log((logits.array() - peak).exp().sum());
    if (grad) {
        *grad = ((logits.array() - lse).exp()).matrix(); // softmax probabilities
        (*grad)[target] -= 1.0;
    }
    return lse - logits[target];
}

double l1_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& target, Eigen::VectorXd* grad)
{
    if (pred.size() != target.size())
        throw Error(Err::ShapeMismatch, "l1 operands differ in size");
    if (grad)
        grad->setZero(pred.size());
    double loss = 0.0;
    for (int i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        loss += std::abs(d);
        if (grad)
            (*grad)[i] = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
    }
    return loss;
}

// ------------------------------------------------- class consistency loss

namespace {

// mean pixel cross-entropy of per-pixel class probabilities against a
// label map; gradient (optional) is w.r.t. the implicit logits: for each
// pixel, (p - onehot) / pixel_count
double mean_pixel_ce(const Tensor3& probs, const Image<int>& labels, Tensor3* grad)
{
    if (probs.width != labels.width || probs.height != labels.height)
        throw Error(Err::ShapeMismatch, "probability map and labels differ in size");
    const double npix = static_cast<double>(probs.plane_size());
    if (grad)
        *grad = Tensor3(probs.channels, probs.height, probs.width);
    double loss = 0.0;
    for (int y = 0; y < probs.height; ++y) {
        for (int x = 0; x < probs.width; ++x) {
            const int gt = labels.at(x, y);
            if (gt < 0 || gt >= probs.channels)
                throw Error(Err::OutOfRange, "label outside class channels");
            double total = 0.0;
            for (int c = 0; c < probs.channels; ++c)
                total += probs.at(c, y, x);
            if (std::abs(total - 1.0) > 1e-6)
                throw Error(Err::InvalidArgument, "pixel distribution does not sum to 1");
            loss += -std::log(std::max(probs.at(gt, y, x), 1e-300));
            if (grad) {
                for (int c = 0; c < probs.channels; ++c)
                    grad->at(c, y, x) = probs.at(c, y, x) / npix;
                grad->at(gt, y, x) -= 1.0 / npix;
            }
        }
    }
    return loss / npix;
}

} // namespace

double consistency_loss(const SegPrediction& src_pred, const Image<int>& src_part_gt,
                        const Image<int>& src_car_gt, const SegPrediction& tgt_pred,
                        const Image<int>& tgt_car_gt, const LossWeights& w, SegGrads* grads)
{
    Tensor3* g_part = grads ? &grads->src_part_logits : nullptr;
    Tensor3* g_src_car = grads ? &grads->src_car_logits : nullptr;
    Tensor3* g_tgt_car = grads ? &grads->tgt_car_logits : nullptr;

    const double l_sp = mean_pixel_ce(src_pred.part_probs, src_part_gt, g_part);
    const double l_sc = mean_pixel_ce(src_pred.car_probs, src_car_gt, g_src_car);
    const double l_tc = mean_pixel_ce(tgt_pred.car_probs, tgt_car_gt, g_tgt_car);
    if (grads) {
        for (auto& v : grads->src_car_logits.data)
            v *= w.lambda1;
        for (auto& v : grads->tgt_car_logits.data)
            v *= w.lambda2;
    }
    return l_sp + w.lambda1 * l_sc + w.lambda2 * l_tc;
}

// ------------------------------------------------------- direct pose loss

namespace {

// cross-entropy of already-normalized confidences; gradient w.r.t. the
// implicit logits is p - onehot, so it only needs the probabilities
double confidence_ce(const std::vector<double>& probs, int hot, Eigen::VectorXd* grad)
{
    if (hot < 0 || hot >= static_cast<int>(probs.size()))
        throw Error(Err::OutOfRange, "hot bin outside encoding");
    if (grad) {
        grad->resize(probs.size());
        for (size_t k = 0; k < probs.size(); ++k)
            (*grad)[k] = probs[k];
        (*grad)[hot] -= 1.0;
    }
    return -std::log(std::max(probs[hot], 1e-300));
}

double sign_of(double v)
{
    return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
}

} // namespace

double direct_loss(const DirectLossInput& input, const BinCodec& angle_codec,
                   const BinCodec& distance_codec, DirectLossGrads* grads)
{
    if (input.shape.size() != input.shape_gt.size())
        throw Error(Err::ShapeMismatch, "shape vectors differ in size");

    double loss = 0.0;

    // center, L1
    const Vec2 dc = input.center - input.center_gt;
    loss += std::abs(dc.x()) + std::abs(dc.y());
    if (grads)
        grads->center = Vec2(sign_of(dc.x()), sign_of(dc.y()));

    // shape, L1
    Eigen::VectorXd* gs = grads ? &grads->shape : nullptr;
    loss += l1_loss(input.shape, input.shape_gt, gs);

    // angles: bin classification + wrapped residual on the true bin
    const int an = angle_codec.bin_count();
    for (int q = 0; q < 3; ++q) {
        const BinEncoding& enc = input.angles[q];
        if (static_cast<int>(enc.confidences.size()) != an ||
            static_cast<int>(enc.sin_offset.size()) != an ||
            static_cast<int>(enc.cos_offset.size()) != an)
            throw Error(Err::ShapeMismatch, "angle encoding does not match codec");
        const int hot = angle_codec.bin_of(input.angles_gt[q]);

        BinGrads* bg = grads ? &grads->angles[q] : nullptr;
        Eigen::VectorXd* gc = bg ? &bg->confidences : nullptr;
        loss += confidence_ce(enc.confidences, hot, gc);

        const double s = enc.sin_offset[hot];
        const double c = enc.cos_offset[hot];
        const double delta = std::atan2(s, c);
        const double r = wrap_angle(angle_codec.centers[hot] + delta - input.angles_gt[q]);
        loss += std::abs(r);
        if (bg) {
            bg->sin_offset = Eigen::VectorXd::Zero(an);
            bg->cos_offset = Eigen::VectorXd::Zero(an);
            const double norm2 = std::max(s * s + c * c, 1e-300);
            bg->sin_offset[hot] = sign_of(r) * c / norm2;
            bg->cos_offset[hot] = sign_of(r) * -s / norm2;
        }
    }

    // distance: same structure with a linear residual
    const int dn = distance_codec.bin_count();
    if (static_cast<int>(input.distance.confidences.size()) != dn ||
        static_cast<int>(input.distance.offset.size()) != dn)
        throw Error(Err::ShapeMismatch, "distance encoding does not match codec");
    const int hot = distance_codec.bin_of(input.distance_gt);
    Eigen::VectorXd* gdc = grads ? &grads->distance.confidences : nullptr;
    loss += confidence_ce(input.distance.confidences, hot, gdc);
    const double r = distance_codec.centers[hot] + input.distance.offset[hot] - input.distance_gt;
    loss += std::abs(r);
    if (grads) {
        grads->distance.offset = Eigen::VectorXd::Zero(dn);
        grads->distance.offset[hot] = sign_of(r);
    }
    return loss;
}

// ---------------------------------------------------------- 3d pose loss

void rotation_angle_derivatives(double azimuth, double elevation, double tilt, Mat3& d_azimuth,
                                Mat3& d_elevation, Mat3& d_tilt)
{
    const double ca = std::cos(azimuth), sa = std::sin(azimuth);
    const double cb = std::cos(elevation), sb = std::sin(elevation);
    const double cg = std::cos(tilt), sg = std::sin(tilt);

    Mat3 ry, rx, rz, dry, drx, drz;
    ry << ca, 0, sa, 0, 1, 0, -sa, 0, ca;
    rx << 1, 0, 0, 0, cb, -sb, 0, sb, cb;
    rz << cg, -sg, 0, sg, cg, 0, 0, 0, 1;
    dry << -sa, 0, ca, 0, 0, 0, -ca, 0, -sa;
    drx << 0, 0, 0, 0, -sb, -cb, 0, cb, -sb;
    drz << -sg, -cg, 0, cg, -sg, 0, 0, 0, 0;

    d_azimuth = rz * rx * dry;
    d_elevation = rz * drx * ry;
    d_tilt = drz * rx * ry;
}

double pose_3d_loss(const ShapeSpace& space, const DecodedPose& pred, const Mat3& ray_rot_pred,
                    const DecodedPose& target, const Mat3& ray_rot_target, DecodedPoseGrads* grads)
{
    if (pred.shape.size() != space.dims() || target.shape.size() != space.dims())
        throw Error(Err::ShapeMismatch, "shape coefficients do not match the space");

    const Eigen::VectorXd v = space.synthesize(pred.shape);
    const Eigen::VectorXd v_gt = space.synthesize(target.shape);
    const int n = static_cast<int>(space.point_count);

    const Mat3 rv = rotation_from_angles(pred.azimuth, pred.elevation, pred.tilt);
    const Mat3 r = ray_rot_pred * rv;
    const Mat3 r_gt =
        ray_rot_target * rotation_from_angles(target.azimuth, target.elevation, target.tilt);

    Mat3 drv_da, drv_db, drv_dg;
    rotation_angle_derivatives(pred.azimuth, pred.elevation, pred.tilt, drv_da, drv_db, drv_dg);
    const Mat3 dr_da = ray_rot_pred * drv_da;
    const Mat3 dr_db = ray_rot_pred * drv_db;
    const Mat3 dr_dg = ray_rot_pred * drv_dg;

    if (grads) {
        grads->shape = Eigen::VectorXd::Zero(space.dims());
        grads->azimuth = grads->elevation = grads->tilt = grads->distance = 0.0;
    }

    double term1 = 0.0, term2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vec3 vi = v.segment<3>(3 * i);
        const Vec3 vi_gt = v_gt.segment<3>(3 * i);

        const Vec3 d1 = vi - vi_gt;
        const double n1 = d1.norm();
        term1 += n1;

        const Vec3 d2 = r * vi - r_gt * vi_gt;
        const double n2 = d2.norm();
        term2 += n2;

        if (!grads)
            continue;
        const Vec3 u1 = n1 > 0 ? Vec3(d1 / n1) : Vec3::Zero();
        const Vec3 u2 = n2 > 0 ? Vec3(d2 / n2) : Vec3::Zero();
        for (int k = 0; k < space.dims(); ++k) {
            const double sd = space.component_sd(k);
            if (sd <= 0)
                continue;
            const Vec3 bik = sd * space.basis.col(k).segment<3>(3 * i);
            grads->shape[k] += (u1.dot(bik) + u2.dot(r * bik)) / n;
        }
        grads->azimuth += u2.dot(dr_da * vi) / n;
        grads->elevation += u2.dot(dr_db * vi) / n;
        grads->tilt += u2.dot(dr_dg * vi) / n;
    }
    term1 /= n;
    term2 /= n;

    const Vec3 t = ray_rot_pred * Vec3(0, 0, pred.distance);
    const Vec3 t_gt = ray_rot_target * Vec3(0, 0, target.distance);
    const Vec3 d3 = t - t_gt;
    const double term3 = d3.norm();
    if (grads && term3 > 0)
        grads->distance = d3.dot(ray_rot_pred * Vec3::UnitZ()) / term3;

    return term1 + term2 + term3;
}

double total_loss(double direct, double threed, const LossWeights& w)
{
    return w.w_direct * direct + w.w_3d * threed;
}

} // namespace carparts
