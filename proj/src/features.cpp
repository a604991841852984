#include "carparts/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "carparts/error.hpp"

namespace carparts {

using json = nlohmann::json;

const ChannelGroup& FeatureStack::group(const std::string& name) const
{
    for (const auto& g : layout)
        if (g.name == name)
            return g;
    throw Error(Err::OutOfRange, "no channel group named " + name);
}

double bilinear_sample(const Image<float>& img, double x, double y)
{
    // shift into the lattice where pixel (i, j) sits at integer (i, j)
    const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(img.width - 1));
    const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int x0 = std::min(static_cast<int>(fx), img.width - 2 >= 0 ? img.width - 2 : 0);
    const int y0 = std::min(static_cast<int>(fy), img.height - 2 >= 0 ? img.height - 2 : 0);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double tx = fx - x0;
    const double ty = fy - y0;
    return (1 - tx) * (1 - ty) * img.at(x0, y0) + tx * (1 - ty) * img.at(x1, y0) +
           (1 - tx) * ty * img.at(x0, y1) + tx * ty * img.at(x1, y1);
}

FeatureStack roi_align_coords(const std::vector<Image<float>>& maps, const Box& box, int out,
                              int image_width, int image_height)
{
    if (box.empty())
        throw Error(Err::EmptyBox, "roi has no area");
    if (box.x0 < 0 || box.y0 < 0 || box.x1 > image_width || box.y1 > image_height)
        throw Error(Err::EmptyBox, "roi extends outside the image");
    if (out < 1)
        throw Error(Err::InvalidArgument, "output size must be >= 1");
    for (const auto& m : maps)
        if (!m.same_size(image_width, image_height))
            throw Error(Err::ShapeMismatch, "map size differs from the stated image size");

    const int c_in = static_cast<int>(maps.size());
    FeatureStack stack;
    stack.roi = box;
    stack.data = Tensor3(c_in + 2, out, out);

    const double cell_w = box.width() / out;
    const double cell_h = box.height() / out;
    for (int gy = 0; gy < out; ++gy) {
        for (int gx = 0; gx < out; ++gx) {
            const double sx = box.x0 + (gx + 0.5) * cell_w; // one sample per cell,
            const double sy = box.y0 + (gy + 0.5) * cell_h; // at the cell center
            for (int c = 0; c < c_in; ++c)
                stack.data.at(c, gy, gx) = bilinear_sample(maps[c], sx, sy);
            stack.data.at(c_in, gy, gx) = 2.0 * sx / image_width - 1.0;
            stack.data.at(c_in + 1, gy, gx) = 2.0 * sy / image_height - 1.0;
        }
    }
    stack.layout = {{"maps", 0, c_in}, {"coord_x", c_in, 1}, {"coord_y", c_in + 1, 1}};
    return stack;
}

std::vector<Image<float>> gate_parts(const std::vector<Image<float>>& part_probs,
                                     const Image<float>& instance_prob, GateMode mode)
{
    for (const auto& p : part_probs)
        if (!p.same_size(instance_prob.width, instance_prob.height))
            throw Error(Err::ShapeMismatch, "part map size differs from instance map");

    std::vector<Image<float>> out;
    out.reserve(part_probs.size() + (mode == GateMode::concat ? 1 : 0));
    if (mode == GateMode::multiply) {
        for (const auto& p : part_probs) {
            Image<float> gated = p;
            for (size_t i = 0; i < gated.data.size(); ++i)
                gated.data[i] *= instance_prob.data[i];
            out.push_back(std::move(gated));
        }
    } else {
        out = part_probs;
        out.push_back(instance_prob);
    }
    return out;
}

FeatureStack assemble_part_features(const Tensor3& instance_prob, const Tensor3& part_probs,
                                    const Tensor3* learned, const Tensor3& coords, const Box& roi)
{
    const int h = instance_prob.height, w = instance_prob.width;
    auto check = [&](const Tensor3& t, const char* what) {
        if (t.height != h || t.width != w)
            throw Error(Err::ShapeMismatch, std::string(what) + " differs in spatial size");
    };
    check(part_probs, "part block");
    check(coords, "coordinate block");
    if (coords.channels != 2)
        throw Error(Err::ShapeMismatch, "coordinate block must have 2 channels");
    if (learned)
        check(*learned, "learned block");

    // a learned block already consumed the probability maps upstream, so it
    // replaces them in the stack (256 + 2 coords = the documented 258); with
    // no learned block the raw probabilities stand in (1 + parts + 2)
    const int c_body = learned ? learned->channels
                               : instance_prob.channels + part_probs.channels;
    FeatureStack stack;
    stack.roi = roi;
    stack.data = Tensor3(c_body + 2, h, w);

    int at = 0;
    auto append = [&](const Tensor3& t, const std::string& name) {
        std::copy(t.data.begin(), t.data.end(),
                  stack.data.data.begin() + static_cast<long>(at) * stack.data.plane_size());
        stack.layout.push_back({name, at, t.channels});
        at += t.channels;
    };
    if (learned) {
        append(*learned, "learned");
    } else {
        append(instance_prob, "instance_prob");
        append(part_probs, "part_probs");
    }
    // coords carry x then y; record them as separate single-channel groups
    Tensor3 cx(1, h, w), cy(1, h, w);
    std::copy_n(coords.data.begin(), coords.plane_size(), cx.data.begin());
    std::copy_n(coords.data.begin() + static_cast<long>(coords.plane_size()), coords.plane_size(),
                cy.data.begin());
    append(cx, "coord_x");
    append(cy, "coord_y");
    return stack;
}

void save_feature_stack(const std::string& data_path, const std::string& layout_path,
                        const FeatureStack& stack)
{
    std::ofstream out(data_path, std::ios::binary);
    if (!out)
        throw Error(Err::Io, "cannot write " + data_path);
    for (const double v : stack.data.data) {
        const float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), 4);
    }

    json j;
    j["channels"] = stack.data.channels;
    j["height"] = stack.data.height;
    j["width"] = stack.data.width;
    j["roi"] = {stack.roi.x0, stack.roi.y0, stack.roi.x1, stack.roi.y1};
    j["groups"] = json::array();
    for (const auto& g : stack.layout)
        j["groups"].push_back({{"name", g.name}, {"begin", g.begin}, {"count", g.count}});
    std::ofstream lout(layout_path);
    if (!lout)
        throw Error(Err::Io, "cannot write " + layout_path);
    lout << j.dump(2) << '\n';
}

FeatureStack load_feature_stack(const std::string& data_path, const std::string& layout_path)
{
    std::ifstream lin(layout_path);
    if (!lin)
        throw Error(Err::Io, "cannot open " + layout_path);
    json j = json::parse(lin, nullptr, false);
    if (j.is_discarded())
        throw Error(Err::Schema, "layout is not valid JSON: " + layout_path);

    FeatureStack stack;
    stack.data = Tensor3(j.at("channels").get<int>(), j.at("height").get<int>(),
                         j.at("width").get<int>());
    const auto& roi = j.at("roi");
    stack.roi = {roi.at(0).get<double>(), roi.at(1).get<double>(), roi.at(2).get<double>(),
                 roi.at(3).get<double>()};
    for (const auto& g : j.at("groups"))
        stack.layout.push_back(
            {g.at("name").get<std::string>(), g.at("begin").get<int>(), g.at("count").get<int>()});

    std::ifstream in(data_path, std::ios::binary);
    if (!in)
        throw Error(Err::Io, "cannot open " + data_path);
    for (double& v : stack.data.data) {
        float f = 0;
        in.read(reinterpret_cast<char*>(&f), 4);
        v = f;
    }
    if (!in)
        throw Error(Err::Io, "truncated tensor: " + data_path);
    return stack;
}

} // namespace carparts
