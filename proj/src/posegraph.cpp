#include "mvinpaint/posegraph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>

namespace mvi {

Pose fit_rigid(const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst) {
    if (src.size() < 3 || src.size() != dst.size()) throw EstimationError("rigid fit needs >= 3 paired points");
    const double n = static_cast<double>(src.size());
    Eigen::Vector3d cs = Eigen::Vector3d::Zero(), cd = Eigen::Vector3d::Zero();
    for (size_t i = 0; i < src.size(); ++i) {
        cs += src[i];
        cd += dst[i];
    }
    cs /= n;
    cd /= n;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (size_t i = 0; i < src.size(); ++i) cov += (dst[i] - cd) * (src[i] - cs).transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv(0) <= 0 || sv(1) / sv(0) < 1e-10) throw EstimationError("rigid fit: degenerate point configuration");
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1;
    Eigen::Matrix3d r = svd.matrixU() * d * svd.matrixV().transpose();
    return Pose(r, cd - r * cs);
}

std::optional<RigidEstimate> estimate_rigid(const std::vector<Eigen::Vector3d>& pb,
                                            const std::vector<Eigen::Vector3d>& pa,
                                            const RigidRansacParams& params) {
    const int n = static_cast<int>(pb.size());
    if (n < 3 || n < params.min_inliers) return std::nullopt;
    std::mt19937_64 rng(params.seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    const double thr2 = params.inlier_m * params.inlier_m;

    auto consensus = [&](const Pose& t) {
        std::vector<int> in;
        for (int i = 0; i < n; ++i)
            if ((t * pb[i] - pa[i]).squaredNorm() < thr2) in.push_back(i);
        return in;
    };

    std::vector<int> best;
    for (int it = 0; it < params.max_iters; ++it) {
        int s[3];
        s[0] = pick(rng);
        do s[1] = pick(rng); while (s[1] == s[0]);
        do s[2] = pick(rng); while (s[2] == s[0] || s[2] == s[1]);
        if ((pb[s[1]] - pb[s[0]]).cross(pb[s[2]] - pb[s[0]]).norm() < 1e-8) continue;
        Pose t;
        try {
            t = fit_rigid({pb[s[0]], pb[s[1]], pb[s[2]]}, {pa[s[0]], pa[s[1]], pa[s[2]]});
        } catch (const EstimationError&) {
            continue;
        }
        auto in = consensus(t);
        if (in.size() > best.size()) best = std::move(in);
        if (static_cast<int>(best.size()) == n) break;
    }
    if (static_cast<int>(best.size()) < std::max(3, params.min_inliers)) return std::nullopt;

    RigidEstimate est;
    est.inliers = best;
    for (int round = 0; round < 5; ++round) {
        std::vector<Eigen::Vector3d> sb, sa;
        for (int i : est.inliers) {
            sb.push_back(pb[i]);
            sa.push_back(pa[i]);
        }
        try {
            est.a_from_b = fit_rigid(sb, sa);
        } catch (const EstimationError&) {
            return std::nullopt;
        }
        auto next = consensus(est.a_from_b);
        if (next == est.inliers || static_cast<int>(next.size()) < std::max(3, params.min_inliers)) break;
        est.inliers = std::move(next);
    }
    return est;
}

std::optional<RigidEstimate> estimate_relative_pose(const Frame& a, const FeatureSet& fa, const Frame& b,
                                                    const FeatureSet& fb, const MatchSet& matches,
                                                    const CameraIntrinsics& intr,
                                                    const RigidRansacParams& params) {
    if (a.depth.empty() || b.depth.empty()) return std::nullopt;
    auto depth_at = [](const DepthImage& d, const Keypoint& k) -> float {
        int x = static_cast<int>(std::lround(k.x)), y = static_cast<int>(std::lround(k.y));
        if (x < 0 || y < 0 || x >= d.cols || y >= d.rows) return 0.f;
        return d(y, x);
    };
    std::vector<Eigen::Vector3d> pa, pb;
    for (const Match& m : matches.pairs) {
        const Keypoint& ka = fa.keypoints.at(m.index_a);
        const Keypoint& kb = fb.keypoints.at(m.index_b);
        float da = depth_at(a.depth, ka), db = depth_at(b.depth, kb);
        if (!(da > 0) || !(db > 0)) continue;
        pa.push_back(unproject_pixel(std::lround(ka.x), std::lround(ka.y), da, intr));
        pb.push_back(unproject_pixel(std::lround(kb.x), std::lround(kb.y), db, intr));
    }
    return estimate_rigid(pb, pa, params);
}

int PoseGraph::add_vertex(const Pose& initial) {
    vertices.push_back(initial);
    return static_cast<int>(vertices.size()) - 1;
}

void PoseGraph::add_edge(int i, int j, const Pose& i_from_j, double weight) {
    const int n = static_cast<int>(vertices.size());
    if (i < 0 || j < 0 || i >= n || j >= n || i == j) throw ConfigError("pose graph edge out of range");
    if (!(weight > 0)) throw ConfigError("pose graph edge weight must be positive");
    edges.push_back({i, j, i_from_j, weight});
}

std::vector<char> PoseGraph::connected() const {
    std::vector<char> seen(vertices.size(), 0);
    if (vertices.empty()) return seen;
    std::vector<std::vector<int>> adj(vertices.size());
    for (const auto& e : edges) {
        adj[e.i].push_back(e.j);
        adj[e.j].push_back(e.i);
    }
    std::queue<int> q;
    seen[0] = 1;
    q.push(0);
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                q.push(v);
            }
    }
    return seen;
}

namespace {

Vec6 edge_residual(const PoseGraph::Edge& e, const std::vector<Pose>& v) {
    return se3_log(e.i_from_j.inverse() * v[e.i].inverse() * v[e.j]);
}

}  // namespace

double PoseGraph::cost(const std::vector<Pose>& v) const {
    double c = 0;
    for (const auto& e : edges) c += e.weight * edge_residual(e, v).squaredNorm();
    return c;
}

double PoseGraph::cost() const { return cost(vertices); }

PoseGraphResult optimize_pose_graph(const PoseGraph& graph, const PoseGraphOptions& options) {
    PoseGraphResult res;
    res.vertices = graph.vertices;
    if (!res.vertices.empty()) res.vertices[0] = Pose::identity();
    res.connected = graph.connected();
    res.initial_cost = graph.cost(res.vertices);
    res.final_cost = res.initial_cost;
    res.trace = {res.initial_cost};

    // Free variables: connected vertices other than the gauge.
    std::vector<int> var(res.vertices.size(), -1);
    int nv = 0;
    for (size_t k = 1; k < res.vertices.size(); ++k)
        if (res.connected[k]) var[k] = nv++;
    std::vector<const PoseGraph::Edge*> active;
    for (const auto& e : graph.edges)
        if (res.connected[e.i] && res.connected[e.j]) active.push_back(&e);
    if (nv == 0 || active.empty()) return res;

    const int dim = 6 * nv;
    double cost = res.initial_cost;
    double mu = 0.0;
    constexpr double h = 1e-7;
    for (int it = 0; it < options.max_iters; ++it) {
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
        for (const auto* e : active) {
            Vec6 r = edge_residual(*e, res.vertices);
            Eigen::Matrix<double, 6, Eigen::Dynamic> J = Eigen::Matrix<double, 6, Eigen::Dynamic>::Zero(6, dim);
            for (int side : {e->i, e->j}) {
                if (var[side] < 0) continue;
                for (int k = 0; k < 6; ++k) {
                    Vec6 d = Vec6::Zero();
                    d(k) = h;
                    std::vector<Pose> vp = res.vertices, vm = res.vertices;
                    vp[side] = res.vertices[side] * se3_exp(d);
                    vm[side] = res.vertices[side] * se3_exp(-d);
                    J.col(6 * var[side] + k) = (edge_residual(*e, vp) - edge_residual(*e, vm)) / (2 * h);
                }
            }
            H += e->weight * J.transpose() * J;
            g += e->weight * J.transpose() * r;
        }

        bool accepted = false;
        Eigen::VectorXd step;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::MatrixXd A = H;
            if (mu > 0) A.diagonal() += mu * (H.diagonal().array() + 1e-12).matrix();
            step = A.ldlt().solve(-g);
            if (!step.allFinite()) {
                mu = std::max(1e-6, mu * 10);
                continue;
            }
            std::vector<Pose> trial = res.vertices;
            for (size_t k = 1; k < trial.size(); ++k)
                if (var[k] >= 0) trial[k] = trial[k] * se3_exp(step.segment<6>(6 * var[k]));
            double c = graph.cost(trial);
            if (c <= cost) {
                res.vertices = std::move(trial);
                cost = c;
                res.trace.push_back(c);
                mu = mu > 0 ? mu / 10 : 0.0;
                if (mu < 1e-9) mu = 0.0;
                accepted = true;
                break;
            }
            mu = std::max(1e-6, mu * 10);
        }
        res.iterations = it + 1;
        if (!accepted) {
            res.warning = "no cost decrease after damping; keeping best estimate";
            break;
        }
        if (step.norm() < options.tol) break;
    }
    res.final_cost = cost;
    return res;
}

DepthTransfer transfer_depth(const cv::Rect& rect, const cv::Mat1i& depth_source, const MaskImage& needed,
                             const std::vector<DepthSource>& sources, const CameraIntrinsics& intr) {
    DepthTransfer out;
    out.depth = DepthImage::zeros(rect.size());
    for (int y = 0; y < rect.height; ++y)
        for (int x = 0; x < rect.width; ++x) {
            const int s = depth_source(y, x);
            if (!needed(y, x) || s < 0) continue;
            const DepthSource& src = sources.at(s);
            cv::Vec2f sxy = (*src.source_xy)(y, x);
            if (sxy[0] < 0) continue;
            const int su = static_cast<int>(sxy[0]), sv = static_cast<int>(sxy[1]);
            const float d = src.frame->depth(sv, su);
            if (!(d > 0)) continue;
            Eigen::Vector3d pt = src.target_from_source * unproject_pixel(su, sv, d, intr);
            if (pt.z() <= 0) continue;
            const double u = intr.fx * pt.x() / pt.z() + intr.cx - rect.x;
            const double v = intr.fy * pt.y() / pt.z() + intr.cy - rect.y;
            int tx, ty;
            if (std::abs(u - x) <= 1.0 && std::abs(v - y) <= 1.0) {
                tx = x;
                ty = y;
                ++out.consistent;
            } else {
                tx = static_cast<int>(std::lround(u));
                ty = static_cast<int>(std::lround(v));
                if (tx < 0 || ty < 0 || tx >= rect.width || ty >= rect.height || !needed(ty, tx)) continue;
                ++out.splatted;
            }
            float& dst = out.depth(ty, tx);
            const float z = static_cast<float>(pt.z());
            if (dst == 0.f || z < dst) dst = z;
        }
    return out;
}

}  // namespace mvi
