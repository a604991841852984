#include "carparts/shape_space.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <Eigen/SVD>

namespace carparts {

Eigen::VectorXd stack_points(const std::vector<Vec3>& points)
{
    Eigen::VectorXd v(3 * points.size());
    for (size_t i = 0; i < points.size(); ++i)
        v.segment<3>(3 * i) = points[i];
    return v;
}

std::vector<Vec3> unstack_points(const Eigen::VectorXd& v)
{
    if (v.size() % 3 != 0)
        throw Error(Err::ShapeMismatch, "stacked shape length not divisible by 3");
    std::vector<Vec3> points(v.size() / 3);
    for (size_t i = 0; i < points.size(); ++i)
        points[i] = v.segment<3>(3 * i);
    return points;
}

double ShapeSpace::component_sd(int k) const
{
    if (k < 0 || k >= dims())
        throw Error(Err::OutOfRange, "component index outside basis");
    if (training_count < 2)
        return 0.0;
    return singular_values[k] / std::sqrt(static_cast<double>(training_count - 1));
}

void ShapeSpace::validate() const
{
    if (mean.size() != 3 * static_cast<long>(point_count))
        throw Error(Err::ShapeMismatch, "mean length != 3N");
    if (basis.rows() != mean.size())
        throw Error(Err::ShapeMismatch, "basis rows != 3N");
    if (singular_values.size() != basis.cols())
        throw Error(Err::ShapeMismatch, "singular value count != basis columns");
    for (int k = 1; k < singular_values.size(); ++k)
        if (singular_values[k] > singular_values[k - 1] + 1e-12)
            throw Error(Err::InvalidArgument, "singular values not descending");
    const Eigen::MatrixXd gram = basis.transpose() * basis;
    const double err = (gram - Eigen::MatrixXd::Identity(dims(), dims())).cwiseAbs().maxCoeff();
    if (err > 1e-9)
        throw Error(Err::InvalidArgument, "basis columns not orthonormal");
    if (!point_labels.empty() && point_labels.size() != point_count)
        throw Error(Err::ShapeMismatch, "label count != N");
}

Eigen::VectorXd ShapeSpace::synthesize(const Eigen::VectorXd& coeffs) const
{
    if (coeffs.size() != dims())
        throw Error(Err::ShapeMismatch, "coefficient count != basis dimension");
    Eigen::VectorXd scaled(dims());
    for (int k = 0; k < dims(); ++k)
        scaled[k] = coeffs[k] * component_sd(k);
    return mean + basis * scaled;
}

Eigen::VectorXd ShapeSpace::project(const Eigen::VectorXd& shape) const
{
    if (shape.size() != mean.size())
        throw Error(Err::InconsistentTopology, "shape length != 3N");
    const Eigen::VectorXd raw = basis.transpose() * (shape - mean);
    Eigen::VectorXd coeffs(dims());
    for (int k = 0; k < dims(); ++k) {
        const double sd = component_sd(k);
        coeffs[k] = sd > 0 ? raw[k] / sd : 0.0; // dead components project to 0
    }
    return coeffs;
}

std::vector<Vec3> ShapeSpace::synthesize_points(const Eigen::VectorXd& coeffs) const
{
    return unstack_points(synthesize(coeffs));
}

ShapeSpace build_shape_space(const std::vector<std::vector<Vec3>>& shapes, int dims,
                             std::uint32_t category_id)
{
    if (shapes.size() < 2)
        throw Error(Err::EmptyInput, "need at least 2 shapes");
    if (dims < 1)
        throw Error(Err::InvalidArgument, "dims must be >= 1");
    const size_t n = shapes[0].size();
    if (n == 0)
        throw Error(Err::EmptyInput, "shapes have no points");
    for (const auto& s : shapes)
        if (s.size() != n)
            throw Error(Err::InconsistentTopology, "shapes have differing point counts");

    const int m = static_cast<int>(shapes.size());
    Eigen::MatrixXd data(3 * n, m);
    for (int c = 0; c < m; ++c)
        data.col(c) = stack_points(shapes[c]);

    ShapeSpace space;
    space.category_id = category_id;
    space.point_count = static_cast<std::uint32_t>(n);
    space.training_count = static_cast<std::uint32_t>(m);
    space.mean = data.rowwise().mean();
    data.colwise() -= space.mean;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinU);
    const int available = static_cast<int>(svd.singularValues().size());

    space.basis.resize(3 * n, dims);
    space.singular_values = Eigen::VectorXd::Zero(dims);

    // keep only directions with genuinely nonzero variance; the rest of
    // the requested dimensions get an arbitrary orthonormal completion
    const double cutoff = 1e-12 * std::max(svd.singularValues()[0], 1e-300);
    int rank = 0;
    for (int k = 0; k < std::min(dims, available); ++k) {
        if (svd.singularValues()[k] <= cutoff)
            break;
        space.basis.col(rank) = svd.matrixU().col(k);
        space.singular_values[rank] = svd.singularValues()[k];
        ++rank;
    }
    if (rank < dims) {
        space.rank_deficient = true;
        // Gram-Schmidt unit vectors against the kept columns
        int axis = 0;
        for (int k = rank; k < dims && axis < static_cast<int>(3 * n); ++axis) {
            Eigen::VectorXd v = Eigen::VectorXd::Unit(3 * n, axis);
            for (int j = 0; j < k; ++j)
                v -= space.basis.col(j).dot(v) * space.basis.col(j);
            if (v.norm() < 0.5)
                continue; // axis nearly inside the span; try the next one
            space.basis.col(k) = v / v.norm();
            ++k;
        }
    }
    space.validate();
    return space;
}

// ------------------------------------------------------------- container

namespace {

constexpr char kMagic[4] = {'C', 'P', 'S', 'S'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void get(std::ifstream& in, T& v, const std::string& path)
{
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in)
        throw Error(Err::Io, "truncated shape container: " + path);
}

} // namespace

void save_shape_space(const std::string& path, const ShapeSpace& space)
{
    space.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(Err::Io, "cannot write " + path);
    out.write(kMagic, 4);
    put(out, kVersion);
    put(out, space.category_id);
    put(out, space.point_count);
    put(out, static_cast<std::uint16_t>(space.dims()));
    out.write(reinterpret_cast<const char*>(space.mean.data()),
              static_cast<std::streamsize>(space.mean.size() * 8));
    out.write(reinterpret_cast<const char*>(space.basis.data()),
              static_cast<std::streamsize>(space.basis.size() * 8)); // column-major
    out.write(reinterpret_cast<const char*>(space.singular_values.data()),
              static_cast<std::streamsize>(space.singular_values.size() * 8));
    // trailer: training count, deficiency flag, optional per-point labels
    put(out, space.training_count);
    put(out, static_cast<std::uint8_t>(space.rank_deficient ? 1 : 0));
    put(out, static_cast<std::uint8_t>(space.point_labels.empty() ? 0 : 1));
    if (!space.point_labels.empty())
        for (const int l : space.point_labels)
            put(out, static_cast<std::int32_t>(l));
}

ShapeSpace load_shape_space(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(Err::Io, "cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw Error(Err::Schema, "not a shape container: " + path);
    std::uint16_t version = 0;
    get(in, version, path);
    if (version != kVersion)
        throw Error(Err::Schema, "unsupported container version in " + path);

    ShapeSpace space;
    std::uint16_t dims = 0;
    get(in, space.category_id, path);
    get(in, space.point_count, path);
    get(in, dims, path);
    space.mean.resize(3 * space.point_count);
    space.basis.resize(3 * space.point_count, dims);
    space.singular_values.resize(dims);
    in.read(reinterpret_cast<char*>(space.mean.data()), space.mean.size() * 8);
    in.read(reinterpret_cast<char*>(space.basis.data()), space.basis.size() * 8);
    in.read(reinterpret_cast<char*>(space.singular_values.data()), dims * 8);
    if (!in)
        throw Error(Err::Io, "truncated shape container: " + path);

    get(in, space.training_count, path);
    std::uint8_t deficient = 0, has_labels = 0;
    get(in, deficient, path);
    get(in, has_labels, path);
    space.rank_deficient = deficient != 0;
    if (has_labels) {
        space.point_labels.resize(space.point_count);
        for (auto& l : space.point_labels) {
            std::int32_t v = 0;
            get(in, v, path);
            l = v;
        }
    }
    space.validate();
    return space;
}

} // namespace carparts
