#pragma once

#include <string>
#include <vector>

#include "carparts/image.hpp"

namespace carparts {

// axis-aligned box in continuous pixel coordinates, [x0, x1) x [y0, y1)
struct Box {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    bool empty() const { return x1 <= x0 || y1 <= y0; }
};

// named slice of channels inside a feature stack
struct ChannelGroup {
    std::string name;
    int begin = 0;
    int count = 0;
};

// per-object feature tensor cropped from image-aligned maps, with the
// channel layout recorded so downstream code can address groups by name
struct FeatureStack {
    Tensor3 data;
    std::vector<ChannelGroup> layout;
    Box roi;

    const ChannelGroup& group(const std::string& name) const;
};

// bilinear sample of one channel at a continuous pixel position; the value
// of pixel (i, j) lives at (i + 0.5, j + 0.5) and samples clamp to the
// border
double bilinear_sample(const Image<float>& img, double x, double y);

// crop `maps` into an out x out tensor with one bilinear sample per output
// cell, placed at the cell center. Two extra channels record each sample's
// source image position normalized to [-1, 1] with (0, 0) at the image
// center (so a full-width box yields coord_x spanning +-(1 - 1/out)).
FeatureStack roi_align_coords(const std::vector<Image<float>>& maps, const Box& box, int out,
                              int image_width, int image_height);

enum class GateMode {
    multiply, // scale each part channel by the instance probability
    concat,   // append the instance channel instead
};

std::vector<Image<float>> gate_parts(const std::vector<Image<float>>& part_probs,
                                     const Image<float>& instance_prob,
                                     GateMode mode = GateMode::multiply);

// concatenate ROI-aligned sources into the final per-object stack. A
// learned block (typically 256 channels distilled upstream from the gated
// probability maps) replaces the raw probabilities, giving 256 + 2
// coordinate channels = 258; without one the instance and part
// probabilities stand in directly (1 + parts + 2). All inputs must already
// be out x out.
FeatureStack assemble_part_features(const Tensor3& instance_prob, const Tensor3& part_probs,
                                    const Tensor3* learned, const Tensor3& coords, const Box& roi);

// flat f32 tensor + JSON layout descriptor
void save_feature_stack(const std::string& data_path, const std::string& layout_path,
                        const FeatureStack& stack);
FeatureStack load_feature_stack(const std::string& data_path, const std::string& layout_path);

} // namespace carparts
