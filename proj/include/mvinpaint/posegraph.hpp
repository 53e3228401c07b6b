#pragma once

#include "mvinpaint/dataset.hpp"
#include "mvinpaint/features.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mvi {

/// Least-squares rigid motion with dst ~ T * src (no scale). Throws
/// EstimationError for fewer than 3 points or collinear input.
Pose fit_rigid(const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst);

struct RigidRansacParams {
    double inlier_m = 0.05;
    int max_iters = 500;
    int min_inliers = 3;
    uint64_t seed = 0;
};

struct RigidEstimate {
    Pose a_from_b;
    std::vector<int> inliers;
};

/// RANSAC over minimal 3-point samples, refit on the consensus set.
/// nullopt when no non-degenerate sample reaches min_inliers.
std::optional<RigidEstimate> estimate_rigid(const std::vector<Eigen::Vector3d>& points_b,
                                            const std::vector<Eigen::Vector3d>& points_a,
                                            const RigidRansacParams& params);

/// a_from_b from keypoint matches with depth (side a of `matches` indexes
/// fa, side b indexes fb). nullopt = unsolvable.
std::optional<RigidEstimate> estimate_relative_pose(const Frame& a, const FeatureSet& fa, const Frame& b,
                                                    const FeatureSet& fb, const MatchSet& matches,
                                                    const CameraIntrinsics& intr,
                                                    const RigidRansacParams& params = {});

/// Vertex 0 is the target (gauge, identity). Vertex k > 0 holds
/// target_from_source_k. An edge (i, j) measures i_from_j.
struct PoseGraph {
    struct Edge {
        int i = 0;
        int j = 0;
        Pose i_from_j;
        double weight = 1.0;
    };
    std::vector<Pose> vertices;
    std::vector<Edge> edges;

    int add_vertex(const Pose& initial);
    void add_edge(int i, int j, const Pose& i_from_j, double weight);
    /// Vertices reachable from vertex 0 through edges.
    std::vector<char> connected() const;
    /// sum of weight * |log(T_ij^-1 T_i^-1 T_j)|^2
    double cost() const;
    double cost(const std::vector<Pose>& vertices) const;
};

struct PoseGraphOptions {
    int max_iters = 50;
    double tol = 1e-8;
};

struct PoseGraphResult {
    std::vector<Pose> vertices;
    std::vector<char> connected;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    int iterations = 0;
    std::vector<double> trace;  // cost at start and after each accepted step
    std::string warning;
};

/// Gauss-Newton on right-multiplied se(3) increments with Levenberg damping
/// when a step fails to lower the cost. Disconnected vertices keep their
/// initial estimate.
PoseGraphResult optimize_pose_graph(const PoseGraph& graph, const PoseGraphOptions& options = {});

struct DepthSource {
    const Frame* frame = nullptr;
    Pose target_from_source;
    const cv::Mat2f* source_xy = nullptr;  // over the transfer rect
};

struct DepthTransfer {
    DepthImage depth;  // over the rect, 0 = unknown
    int consistent = 0;
    int splatted = 0;
};

/// For every pixel of `needed` with a depth source: unproject the source
/// depth at its corresponding source pixel, move it into the target and
/// project. Points landing within 1 px of their pixel are written there,
/// others at the nearest pixel; nearest depth wins everywhere.
DepthTransfer transfer_depth(const cv::Rect& rect, const cv::Mat1i& depth_source, const MaskImage& needed,
                             const std::vector<DepthSource>& sources, const CameraIntrinsics& intr);

}  // namespace mvi
