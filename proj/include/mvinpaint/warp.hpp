#pragma once

#include "mvinpaint/dataset.hpp"
#include "mvinpaint/features.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

namespace mvi {

/// Planar projective map, normalized so that m(2,2) == 1 when nonzero.
struct Homography {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();

    static Homography identity() { return {}; }
    static Homography from(const Eigen::Matrix3d& h);

    Eigen::Vector2d apply(const Eigen::Vector2d& p) const;
    Homography inverse() const;
    Homography operator*(const Homography& o) const { return from(m * o.m); }
};

/// Relative Frobenius distance between two homographies after normalization.
double homography_distance(const Homography& a, const Homography& b);

/// `from` -> `to` point pair.
struct Correspondence {
    Eigen::Vector2d from;
    Eigen::Vector2d to;
};

/// Weighted DLT with Hartley normalization. Throws EstimationError when the
/// configuration is degenerate (fewer than 4 pairs, collinear points, rank < 8).
Homography dlt_homography(const std::vector<Correspondence>& pairs, const std::vector<double>& weights = {});

struct RansacParams {
    double threshold_px = 3.0;
    int max_iters = 2000;
    double confidence = 0.999;
    /// Consensus required for success. The 4 minimal-sample points are always
    /// inliers of their own model, so this must exceed 4 to mean anything.
    int min_inliers = 8;
    uint64_t seed = 0;
};

struct RansacResult {
    Homography h;
    std::vector<int> inliers;
};

/// Maximal-consensus homography refit on its inliers. Deterministic for a
/// fixed seed. Throws EstimationError when no model reaches min_inliers.
RansacResult ransac_homography(const std::vector<Correspondence>& pairs, const RansacParams& params);

/// Sequential RANSAC: after each consensus set is found it is removed and
/// the search repeats on the rest, up to `max_models` models. The first
/// model is the dominant one; `inliers` is the union, in ascending order.
/// Throws EstimationError when not even the first model is found.
struct MultiRansacResult {
    std::vector<RansacResult> models;
    std::vector<int> inliers;
};
MultiRansacResult ransac_homographies(const std::vector<Correspondence>& pairs, const RansacParams& params,
                                      int max_models);

/// Correspondences `source keypoint -> target keypoint` for a match set
/// whose side a is the target and side b the source.
std::vector<Correspondence> source_to_target_pairs(const MatchSet& matches, const FeatureSet& target,
                                                   const FeatureSet& source);

struct GridParams {
    int cell_px = 32;
    double sigma_px = 64.0;
    double gamma = 0.025;
    double min_support = 8.0;
};

/// Per-cell source->target homographies over a target-image rectangle.
struct LocalWarpGrid {
    cv::Rect area;
    int cell_px = 32;
    int cols = 0;
    int rows = 0;
    Homography global;
    std::vector<Homography> cells;          // source -> target
    std::vector<Homography> cells_inverse;  // target -> source
    std::vector<double> support;
    std::vector<char> inherited;

    int cell_index(double x, double y) const;
    Eigen::Vector2d cell_center(int cx, int cy) const;
    /// Target pixel -> source location through the owning cell.
    Eigen::Vector2d target_to_source(double x, double y) const;

    static LocalWarpGrid uniform(const cv::Rect& area, int cell_px, const Homography& h);
};

/// Moving DLT: every cell solves a DLT with per-pair weights
/// max(exp(-|x - c|^2 / sigma^2), gamma) around the cell centre c (target side).
/// Cells whose unfloored weight sum is below min_support keep `global`.
LocalWarpGrid fit_local_grid(const std::vector<Correspondence>& inlier_pairs, const Homography& global,
                             const cv::Rect& area, const GridParams& params);

/// Re-points inherited cells at the plane model whose inliers lie closest
/// (mean distance of its three nearest inlier target points to the cell
/// centre). `models[k].inliers` index `pairs`. Fitted cells are left alone.
void inherit_nearest_plane(LocalWarpGrid& grid, const std::vector<Correspondence>& pairs,
                           const std::vector<RansacResult>& models);

struct WarpedProposal {
    FrameId source_id = -1;
    cv::Rect rect;           // target-image rectangle the proposal covers
    ColorImageF color;       // [0,1], gain applied
    DepthImage depth;        // nearest-neighbour source depth, 0 where unknown
    MaskImage source_mask;   // source mask at the nearest source pixel
    MaskImage validity;      // usable evidence: in bounds and not masked
    cv::Mat2f source_xy;     // nearest source pixel per target pixel (-1 when out of bounds)
    double gain = 1.0;
    /// Translation distance to the target camera in meters (MRF baseline term).
    double baseline = 0.0;
};

struct WarpOptions {
    bool apply_gain = true;
    double min_gain = 0.5;
    double max_gain = 2.0;
};

/// Inverse warping of `source` onto `target_rect`. Gain is the least-squares
/// scalar over pixels that are valid here and unmasked in `target`.
WarpedProposal warp_frame(const Frame& source, const LocalWarpGrid& grid, const cv::Rect& target_rect,
                          const Frame* target = nullptr, const WarpOptions& options = {});

}  // namespace mvi
