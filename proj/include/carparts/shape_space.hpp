#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "carparts/geometry.hpp"

namespace carparts {

// low-dimensional linear shape space over corresponded point sets.
// Shapes are stacked as 3N-vectors (x0,y0,z0,x1,...); coefficients are
// expressed in standard deviations of the training set so that c = 0 is
// the mean shape and |c_k| = 1 is one sigma along component k.
struct ShapeSpace {
    std::uint32_t category_id = 0;
    std::uint32_t point_count = 0;             // N points per shape
    Eigen::VectorXd mean;                      // 3N
    Eigen::MatrixXd basis;                     // 3N x K, orthonormal columns
    Eigen::VectorXd singular_values;           // K, from the thin SVD
    std::vector<int> point_labels;             // N part ids, optional (empty if none)
    bool rank_deficient = false;               // basis padded with orthonormal filler
    std::uint32_t training_count = 0;          // number of shapes the space was built from

    int dims() const { return static_cast<int>(basis.cols()); }
    // per-component standard deviation sigma_k / sqrt(m - 1)
    double component_sd(int k) const;

    Eigen::VectorXd synthesize(const Eigen::VectorXd& coeffs) const;  // coeffs in sd units
    Eigen::VectorXd project(const Eigen::VectorXd& shape) const;      // -> coeffs in sd units
    std::vector<Vec3> synthesize_points(const Eigen::VectorXd& coeffs) const;

    void validate() const;
};

// build from m corresponded shapes (each N points), keeping `dims`
// components. If fewer than `dims` nonzero singular values exist the basis
// is padded with arbitrary orthonormal directions and rank_deficient is set.
ShapeSpace build_shape_space(const std::vector<std::vector<Vec3>>& shapes, int dims = 22,
                             std::uint32_t category_id = 0);

Eigen::VectorXd stack_points(const std::vector<Vec3>& points);
std::vector<Vec3> unstack_points(const Eigen::VectorXd& v);

// binary container round-trip (see README for the layout)
void save_shape_space(const std::string& path, const ShapeSpace& space);
ShapeSpace load_shape_space(const std::string& path);

} // namespace carparts
