#include "carparts/registration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <Eigen/Sparse>

namespace carparts {

// ---------------------------------------------------- SimilarityTransform

SimilarityTransform SimilarityTransform::inverse() const
{
    SimilarityTransform inv;
    inv.scale = 1.0 / scale;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation) / scale;
    return inv;
}

SimilarityTransform SimilarityTransform::then(const SimilarityTransform& outer) const
{
    SimilarityTransform out;
    out.scale = outer.scale * scale;
    out.rotation = outer.rotation * rotation;
    out.translation = outer.scale * (outer.rotation * translation) + outer.translation;
    return out;
}

Eigen::Matrix4d SimilarityTransform::matrix() const
{
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = scale * rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

SimilarityTransform align_pairs(const std::vector<Vec3>& source, const std::vector<Vec3>& target,
                                bool with_scaling)
{
    if (source.size() != target.size())
        throw Error(Err::ShapeMismatch, "pair counts differ");
    const int n = static_cast<int>(source.size());
    if (n < 3)
        throw Error(Err::DegenerateConfiguration, "need at least 3 pairs");

    Eigen::Matrix3Xd src(3, n), dst(3, n);
    for (int i = 0; i < n; ++i) {
        src.col(i) = source[i];
        dst.col(i) = target[i];
    }

    // a unique rotation needs the source to span at least a plane
    const Eigen::Matrix3Xd centered = src.colwise() - src.rowwise().mean();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(centered * centered.transpose() / n);
    const auto& sv = svd.singularValues();
    if (sv(1) < 1e-12 * std::max(sv(0), 1e-300))
        throw Error(Err::DegenerateConfiguration, "matched points are collinear");

    const Eigen::Matrix4d m = Eigen::umeyama(src, dst, with_scaling);
    SimilarityTransform t;
    t.scale = with_scaling ? std::cbrt(m.topLeftCorner<3, 3>().determinant()) : 1.0;
    t.rotation = m.topLeftCorner<3, 3>() / t.scale;
    t.translation = m.topRightCorner<3, 1>();
    return t;
}

// -------------------------------------------------------------------- ICP

IcpResult icp_align(const std::vector<Vec3>& source, const std::vector<Vec3>& target,
                    const SimilarityTransform& init, const IcpConfig& config)
{
    if (source.size() < 10 || target.size() < 10)
        throw Error(Err::EmptyInput, "icp needs at least 10 points per cloud");

    const PointGrid grid = [&] {
        Vec3 lo = target[0], hi = target[0];
        for (const auto& p : target) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const double diag = (hi - lo).norm();
        const double cell = diag > 0 ? diag / std::cbrt(static_cast<double>(target.size())) : 1.0;
        return PointGrid(target, cell);
    }();

    IcpResult result;
    result.transform = init;
    double prev_rms = std::numeric_limits<double>::infinity();

    const int n = static_cast<int>(source.size());
    const int keep = std::max(3, static_cast<int>(std::floor(n * (1.0 - config.trim_fraction))));
    std::vector<std::pair<double, int>> dist_of(n); // (distance, source index)
    std::vector<int> match(n);

    for (int iter = 0; iter < config.max_iterations; ++iter) {
        for (int i = 0; i < n; ++i) {
            const auto [j, d] = grid.nearest(result.transform.apply(source[i]));
            match[i] = j;
            dist_of[i] = {d, i};
        }
        std::nth_element(dist_of.begin(), dist_of.begin() + keep - 1, dist_of.end());

        std::vector<Vec3> kept_src(keep), kept_dst(keep);
        for (int k = 0; k < keep; ++k) {
            const int i = dist_of[k].second;
            kept_src[k] = source[i];
            kept_dst[k] = target[match[i]];
        }
        result.transform = align_pairs(kept_src, kept_dst, config.with_scaling);

        double se = 0.0;
        for (int k = 0; k < keep; ++k)
            se += (result.transform.apply(kept_src[k]) - kept_dst[k]).squaredNorm();
        result.rms = std::sqrt(se / keep);
        result.iterations = iter + 1;

        if (prev_rms - result.rms < config.tolerance) {
            result.converged = true;
            break;
        }
        prev_rms = result.rms;
    }
    if (!result.converged && prev_rms - result.rms > 1e-4)
        result.still_improving = true;
    return result;
}

// ------------------------------------------------------ deformation graph

DeformationGraph build_deformation_graph(const std::vector<Vec3>& points, double node_spacing,
                                         int skinning_neighbors)
{
    if (points.empty())
        throw Error(Err::EmptyInput, "cannot build a graph over no points");
    if (node_spacing <= 0 || skinning_neighbors < 2)
        throw Error(Err::InvalidArgument, "node_spacing must be > 0 and k >= 2");

    DeformationGraph graph;
    graph.skinning_neighbors = skinning_neighbors;
    const double r2 = node_spacing * node_spacing;
    for (const auto& p : points) {
        bool blocked = false;
        for (const auto& g : graph.nodes) {
            if ((p - g).squaredNorm() < r2) {
                blocked = true;
                break;
            }
        }
        if (!blocked)
            graph.nodes.push_back(p);
    }
    if (static_cast<int>(graph.nodes.size()) < skinning_neighbors)
        throw Error(Err::InsufficientNodes,
                    "subsampling produced " + std::to_string(graph.nodes.size()) +
                        " nodes, need >= " + std::to_string(skinning_neighbors));

    // edges connect nodes that share a skinned point
    const Skinning skin = compute_skinning(points, graph);
    std::set<std::pair<int, int>> edge_set;
    for (const auto& row : skin) {
        for (size_t a = 0; a < row.size(); ++a)
            for (size_t b = a + 1; b < row.size(); ++b) {
                const int i = std::min(row[a].first, row[b].first);
                const int j = std::max(row[a].first, row[b].first);
                edge_set.emplace(i, j);
            }
    }
    graph.edges.assign(edge_set.begin(), edge_set.end());
    return graph;
}

Skinning compute_skinning(const std::vector<Vec3>& points, const DeformationGraph& graph)
{
    const int m = static_cast<int>(graph.nodes.size());
    const int k = std::min(graph.skinning_neighbors, m);

    Skinning skin(points.size());
    std::vector<std::pair<double, int>> dist(m);
    for (size_t p = 0; p < points.size(); ++p) {
        for (int j = 0; j < m; ++j)
            dist[j] = {(points[p] - graph.nodes[j]).norm(), j};
        const int take = std::min(k + 1, m);
        std::partial_sort(dist.begin(), dist.begin() + take, dist.end());

        auto& row = skin[p];
        if (dist[0].first < 1e-12) { // coincident with a node: full weight there
            row = {{dist[0].second, 1.0}};
            continue;
        }
        // d_max: distance to the (k+1)-th node, or just past the k-th when
        // the graph has exactly k nodes
        const double d_max = (m > k) ? dist[k].first : dist[k - 1].first * 1.1;
        row.reserve(k);
        double total = 0.0;
        for (int j = 0; j < k; ++j) {
            const double w = std::pow(1.0 - dist[j].first / d_max, 2.0);
            row.emplace_back(dist[j].second, w);
            total += w;
        }
        if (total <= 0) { // all k at exactly d_max: fall back to equal weights
            for (auto& [node, w] : row)
                w = 1.0 / k;
        } else {
            for (auto& [node, w] : row)
                w /= total;
        }
    }
    return skin;
}

std::vector<Vec3> deform(const std::vector<Vec3>& points, const DeformationGraph& graph,
                         const std::vector<NodeTransform>& params, const Skinning& skinning)
{
    if (params.size() != graph.nodes.size() || skinning.size() != points.size())
        throw Error(Err::ShapeMismatch, "graph, params, and skinning sizes disagree");
    std::vector<Vec3> out(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        Vec3 v = Vec3::Zero();
        for (const auto& [j, w] : skinning[i])
            v += w * (params[j].A * (points[i] - graph.nodes[j]) + graph.nodes[j] + params[j].t);
        out[i] = v;
    }
    return out;
}

// --------------------------------------------------- embedded deformation

namespace {

// residual blocks for the deformation energy; parameters are packed as
// 12 per node: A column-major (9), then t (3)
struct DeformProblem {
    const std::vector<Vec3>& source;
    const std::vector<Vec3>& target;
    const DeformationGraph& graph;
    const Skinning& skin;
    double w_fit, w_rot, w_reg;
    std::vector<int> match;      // per kept source point: target index
    std::vector<int> kept;       // source indices in the trimmed fit set

    int node_count() const { return static_cast<int>(graph.nodes.size()); }

    static Mat3 unpack_A(const Eigen::VectorXd& x, int j)
    {
        Mat3 a;
        for (int c = 0; c < 3; ++c)
            for (int r = 0; r < 3; ++r)
                a(r, c) = x[12 * j + 3 * c + r];
        return a;
    }

    static Vec3 unpack_t(const Eigen::VectorXd& x, int j)
    {
        return Vec3(x[12 * j + 9], x[12 * j + 10], x[12 * j + 11]);
    }

    double energy(const Eigen::VectorXd& x) const
    {
        double e = 0.0;
        for (const int i : kept) {
            Vec3 v = Vec3::Zero();
            for (const auto& [j, w] : skin[i])
                v += w * (unpack_A(x, j) * (source[i] - graph.nodes[j]) + graph.nodes[j] +
                          unpack_t(x, j));
            e += w_fit * (v - target[match[i]]).squaredNorm();
        }
        for (int j = 0; j < node_count(); ++j) {
            const Mat3 a = unpack_A(x, j);
            for (int c1 = 0; c1 < 3; ++c1) {
                for (int c2 = c1 + 1; c2 < 3; ++c2)
                    e += w_rot * std::pow(a.col(c1).dot(a.col(c2)), 2.0);
                e += w_rot * std::pow(a.col(c1).squaredNorm() - 1.0, 2.0);
            }
        }
        for (const auto& [j, k] : graph.edges) {
            e += w_reg * reg_residual(x, j, k).squaredNorm();
            e += w_reg * reg_residual(x, k, j).squaredNorm();
        }
        return e;
    }

    Vec3 reg_residual(const Eigen::VectorXd& x, int j, int k) const
    {
        return unpack_A(x, j) * (graph.nodes[k] - graph.nodes[j]) + graph.nodes[j] +
               unpack_t(x, j) - (graph.nodes[k] + unpack_t(x, k));
    }

    // accumulate J^T J and J^T r without forming J; J^T J is gathered as
    // 12x12 node-pair blocks because each residual touches at most two
    // nodes (reg) or skin-size nodes (fit)
    void normal_equations(const Eigen::VectorXd& x, Eigen::SparseMatrix<double>& jtj,
                          Eigen::VectorXd& jtr) const
    {
        const int dim = 12 * node_count();
        jtr = Eigen::VectorXd::Zero(dim);
        using Block = Eigen::Matrix<double, 12, 12>;
        std::map<std::pair<int, int>, Block> blocks;

        auto add_outer = [&](const std::vector<int>& cols, const Eigen::MatrixXd& jac,
                             const Eigen::VectorXd& res) {
            // jac: residual_dim x (12 * cols.size())
            const Eigen::MatrixXd block = jac.transpose() * jac;
            const Eigen::VectorXd g = jac.transpose() * res;
            for (size_t a = 0; a < cols.size(); ++a) {
                jtr.segment<12>(12 * cols[a]) += g.segment<12>(12 * a);
                for (size_t b = 0; b < cols.size(); ++b) {
                    auto [it, inserted] =
                        blocks.try_emplace({cols[a], cols[b]}, Block::Zero());
                    it->second += block.block<12, 12>(12 * a, 12 * b);
                }
            }
        };

        const double sf = std::sqrt(w_fit);
        for (const int i : kept) {
            const auto& row = skin[i];
            std::vector<int> cols;
            cols.reserve(row.size());
            for (const auto& [j, w] : row)
                cols.push_back(j);
            Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3, 12 * cols.size());
            Vec3 v = Vec3::Zero();
            for (size_t a = 0; a < row.size(); ++a) {
                const auto [j, w] = row[a];
                const Vec3 u = source[i] - graph.nodes[j];
                v += w * (unpack_A(x, j) * u + graph.nodes[j] + unpack_t(x, j));
                for (int c = 0; c < 3; ++c)
                    for (int r = 0; r < 3; ++r)
                        jac(r, 12 * a + 3 * c + r) = sf * w * u[c];
                for (int r = 0; r < 3; ++r)
                    jac(r, 12 * a + 9 + r) = sf * w;
            }
            const Vec3 res = sf * (v - target[match[i]]);
            add_outer(cols, jac, res);
        }

        const double sr = std::sqrt(w_rot);
        for (int j = 0; j < node_count(); ++j) {
            const Mat3 a = unpack_A(x, j);
            Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(6, 12);
            Eigen::VectorXd res(6);
            int row = 0;
            for (int c1 = 0; c1 < 3; ++c1) {
                for (int c2 = c1 + 1; c2 < 3; ++c2) {
                    res[row] = sr * a.col(c1).dot(a.col(c2));
                    for (int r = 0; r < 3; ++r) {
                        jac(row, 3 * c1 + r) = sr * a(r, c2);
                        jac(row, 3 * c2 + r) = sr * a(r, c1);
                    }
                    ++row;
                }
            }
            for (int c = 0; c < 3; ++c) {
                res[row] = sr * (a.col(c).squaredNorm() - 1.0);
                for (int r = 0; r < 3; ++r)
                    jac(row, 3 * c + r) = sr * 2.0 * a(r, c);
                ++row;
            }
            add_outer({j}, jac, res);
        }

        const double sg = std::sqrt(w_reg);
        for (const auto& [j, k] : graph.edges) {
            for (const auto& [from, to] : {std::pair{j, k}, std::pair{k, j}}) {
                const Vec3 u = graph.nodes[to] - graph.nodes[from];
                Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3, 24);
                for (int c = 0; c < 3; ++c)
                    for (int r = 0; r < 3; ++r)
                        jac(r, 3 * c + r) = sg * u[c];
                for (int r = 0; r < 3; ++r) {
                    jac(r, 9 + r) = sg;       // t_from
                    jac(r, 12 + 9 + r) = -sg; // t_to
                }
                add_outer({from, to}, jac, sg * reg_residual(x, from, to));
            }
        }

        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(blocks.size() * 144);
        for (const auto& [key, block] : blocks)
            for (int r = 0; r < 12; ++r)
                for (int c = 0; c < 12; ++c)
                    trip.emplace_back(12 * key.first + r, 12 * key.second + c, block(r, c));
        jtj.resize(dim, dim);
        jtj.setFromTriplets(trip.begin(), trip.end());
    }
};

} // namespace

DeformResult register_deformable(const std::vector<Vec3>& source, const std::vector<Vec3>& target,
                                 const DeformationGraph& graph, const DeformConfig& config)
{
    if (source.empty() || target.empty())
        throw Error(Err::EmptyInput, "deformable registration needs non-empty clouds");

    const Skinning skin = compute_skinning(source, graph);
    const int m = static_cast<int>(graph.nodes.size());
    const int n = static_cast<int>(source.size());
    const int keep = std::max(1, static_cast<int>(std::floor(n * (1.0 - config.trim_fraction))));

    const PointGrid grid = [&] {
        Vec3 lo = target[0], hi = target[0];
        for (const auto& p : target) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const double diag = (hi - lo).norm();
        const double cell = diag > 0 ? diag / std::cbrt(static_cast<double>(target.size())) : 1.0;
        return PointGrid(target, cell);
    }();

    // identity start
    Eigen::VectorXd x = Eigen::VectorXd::Zero(12 * m);
    for (int j = 0; j < m; ++j)
        x[12 * j + 0] = x[12 * j + 4] = x[12 * j + 8] = 1.0;

    DeformProblem problem{source,       target,       graph, skin, config.w_fit,
                          config.w_rot, config.w_reg, {},    {}};
    problem.match.resize(n);

    DeformResult result;
    std::vector<NodeTransform> params(m);
    double lambda = 1e-6;
    double prev_energy = std::numeric_limits<double>::infinity();
    int halvings = 0;

    std::vector<std::pair<double, int>> dist_of(n);
    for (int outer = 0; outer < config.outer_iterations; ++outer) {
        // re-match with the current deformation
        for (int j = 0; j < m; ++j) {
            params[j].A = DeformProblem::unpack_A(x, j);
            params[j].t = DeformProblem::unpack_t(x, j);
        }
        const std::vector<Vec3> deformed = deform(source, graph, params, skin);
        for (int i = 0; i < n; ++i) {
            const auto [ti, d] = grid.nearest(deformed[i]);
            problem.match[i] = ti;
            dist_of[i] = {d, i};
        }
        std::nth_element(dist_of.begin(), dist_of.begin() + keep - 1, dist_of.end());
        problem.kept.resize(keep);
        for (int k = 0; k < keep; ++k)
            problem.kept[k] = dist_of[k].second;
        std::sort(problem.kept.begin(), problem.kept.end());

        double energy = problem.energy(x);
        for (int inner = 0; inner < config.gauss_newton_iterations; ++inner) {
            Eigen::SparseMatrix<double> jtj;
            Eigen::VectorXd jtr;
            problem.normal_equations(x, jtj, jtr);

            bool accepted = false;
            for (int attempt = 0; attempt < 10; ++attempt) {
                Eigen::SparseMatrix<double> damped = jtj;
                for (int d = 0; d < damped.rows(); ++d)
                    damped.coeffRef(d, d) += lambda * (1.0 + jtj.coeff(d, d));
                Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
                if (solver.info() != Eigen::Success) {
                    lambda *= 10.0;
                    continue;
                }
                const Eigen::VectorXd step = solver.solve(-jtr);
                const Eigen::VectorXd candidate = x + step;
                const double cand_energy = problem.energy(candidate);
                if (cand_energy <= energy) {
                    x = candidate;
                    energy = cand_energy;
                    lambda = std::max(lambda * 0.3, 1e-12);
                    accepted = true;
                    result.energy_trace.push_back(energy);
                    break;
                }
                lambda *= 10.0;
            }
            if (!accepted) {
                if (result.energy_trace.empty())
                    result.solver_failed = true;
                break;
            }
        }

        // plateau: relax the rigidity/regularity pull so fitting can finish
        if (prev_energy - energy < config.tolerance * std::max(prev_energy, 1.0) && halvings < 6) {
            problem.w_rot *= 0.5;
            problem.w_reg *= 0.5;
            ++halvings;
        }
        prev_energy = energy;
    }

    for (int j = 0; j < m; ++j) {
        params[j].A = DeformProblem::unpack_A(x, j);
        params[j].t = DeformProblem::unpack_t(x, j);
    }
    result.params = params;
    result.deformed = deform(source, graph, params, skin);

    double se = 0.0;
    for (const int i : problem.kept)
        se += (result.deformed[i] - target[problem.match[i]]).squaredNorm();
    result.fit_rms = std::sqrt(se / std::max<size_t>(1, problem.kept.size()));
    return result;
}

// --------------------------------------------------------- correspondence

CorrespondenceMap dense_correspond(const PointCloud& template_cloud, const PointCloud& model_cloud,
                                   double sample_spacing, const IcpConfig& icp_cfg,
                                   const DeformConfig& deform_cfg)
{
    template_cloud.validate();
    model_cloud.validate();
    if (template_cloud.points.empty() || model_cloud.points.empty())
        throw Error(Err::EmptyInput, "correspondence needs non-empty clouds");

    const IcpResult icp = icp_align(template_cloud.points, model_cloud.points, {}, icp_cfg);
    std::vector<Vec3> aligned(template_cloud.points.size());
    for (size_t i = 0; i < aligned.size(); ++i)
        aligned[i] = icp.transform.apply(template_cloud.points[i]);

    const DeformationGraph graph = build_deformation_graph(aligned);
    const DeformResult def = register_deformable(aligned, model_cloud.points, graph, deform_cfg);

    const PointGrid grid(model_cloud.points, sample_spacing * 2.0);
    CorrespondenceMap map;
    map.threshold = 2.0 * sample_spacing;
    map.model_index.resize(def.deformed.size());
    map.residual.resize(def.deformed.size());
    int covered = 0;
    for (size_t i = 0; i < def.deformed.size(); ++i) {
        const auto [j, d] = grid.nearest(def.deformed[i]);
        map.model_index[i] = static_cast<std::uint32_t>(j);
        map.residual[i] = static_cast<float>(d);
        if (d < map.threshold)
            ++covered;
    }
    map.coverage = static_cast<double>(covered) / static_cast<double>(def.deformed.size());
    return map;
}

std::vector<int> transfer_labels(const CorrespondenceMap& map,
                                 const std::vector<int>& template_labels,
                                 const std::vector<Vec3>& model_points)
{
    if (map.model_index.size() != template_labels.size())
        throw Error(Err::ShapeMismatch, "correspondence and label counts differ");

    // vote: template point i pushes its label onto model point match(i)
    std::vector<std::map<int, int>> votes(model_points.size());
    for (size_t i = 0; i < map.model_index.size(); ++i) {
        if (map.threshold > 0 && map.residual[i] >= map.threshold)
            continue;
        votes[map.model_index[i]][template_labels[i]] += 1;
    }

    std::vector<int> labels(model_points.size(), -1);
    std::vector<Vec3> labeled_points;
    std::vector<int> labeled_ids;
    for (size_t p = 0; p < model_points.size(); ++p) {
        if (votes[p].empty())
            continue;
        // majority label; ties go to the smaller id (map iteration order)
        int best = -1, best_count = 0;
        for (const auto& [label, count] : votes[p]) {
            if (count > best_count) {
                best = label;
                best_count = count;
            }
        }
        labels[p] = best;
        labeled_points.push_back(model_points[p]);
        labeled_ids.push_back(static_cast<int>(p));
    }
    if (labeled_points.empty())
        throw Error(Err::EmptyInput, "no model point received any label vote");

    Vec3 lo = labeled_points[0], hi = labeled_points[0];
    for (const auto& p : labeled_points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double diag = (hi - lo).norm();
    const double cell = diag > 0 ? diag / std::cbrt(static_cast<double>(labeled_points.size())) : 1.0;
    const PointGrid grid(labeled_points, cell);
    for (size_t p = 0; p < model_points.size(); ++p) {
        if (labels[p] >= 0)
            continue;
        const auto [j, d] = grid.nearest(model_points[p]);
        labels[p] = labels[labeled_ids[j]];
    }
    return labels;
}

void save_correspondence(const std::string& path, const CorrespondenceMap& map)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(Err::Io, "cannot write " + path);
    const std::uint32_t count = static_cast<std::uint32_t>(map.model_index.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (std::uint32_t i = 0; i < count; ++i) {
        out.write(reinterpret_cast<const char*>(&map.model_index[i]), 4);
        out.write(reinterpret_cast<const char*>(&map.residual[i]), 4);
    }
}

CorrespondenceMap load_correspondence(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(Err::Io, "cannot open " + path);
    std::uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 4);
    if (!in)
        throw Error(Err::Io, "truncated correspondence table: " + path);
    CorrespondenceMap map;
    map.model_index.resize(count);
    map.residual.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(&map.model_index[i]), 4);
        in.read(reinterpret_cast<char*>(&map.residual[i]), 4);
    }
    if (!in)
        throw Error(Err::Io, "truncated correspondence table: " + path);
    return map;
}

} // namespace carparts
