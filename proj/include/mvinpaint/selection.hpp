#pragma once

#include "mvinpaint/dataset.hpp"
#include "mvinpaint/vocab_tree.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mvi {

/// One 8-connected mask component inside its tight bounding rectangle.
struct MaskRegion {
    int mask_id = 0;
    /// Inclusive corners in target pixels.
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    /// Over the rect: nonzero where the component is.
    MaskImage mask_pixels;

    cv::Rect rect() const { return {x0, y0, x1 - x0 + 1, y1 - y0 + 1}; }
    /// Complement of mask_pixels within the rect.
    MaskImage ring_pixels() const;
    int area() const { return cv::countNonZero(mask_pixels); }
};

/// Regions ordered by the raster position of each component's first pixel.
std::vector<MaskRegion> extract_mask_regions(const MaskImage& mask);

/// Fraction of Sobel-gradient pixels whose magnitude exceeds tau_rel * max.
double image_quality(const GrayImage& image, double tau_rel = 0.1);

/// Rotation angle (rad) plus translation norm (m) of the relative pose;
/// nullopt when either pose is missing.
std::optional<double> frame_distance(const std::optional<Pose>& a, const std::optional<Pose>& b);
double frame_distance(const Pose& a, const Pose& b);

struct SelectionParams {
    int n = 50;
    int m = 8;
    double w1 = 1.0;
    double w2 = 0.5;
    double tau_rel = 0.1;
    /// Sources whose own mask covers more than this fraction of the
    /// region's footprint in the source view are dropped.
    double max_masked_coverage = 0.5;

    void validate() const;
};

struct SuitabilityScore {
    FrameId frame_id = -1;
    double s = 0.0;  // normalized similarity
    double d = 0.0;  // normalized distance
    double q_ratio = 1.0;
    double score = 0.0;
};

/// Raw per-candidate factors before normalization.
struct CandidateFactors {
    FrameId frame_id = -1;
    double similarity = 0.0;
    std::optional<double> distance;  // nullopt = unsolvable
    double q_ratio = 1.0;
};

/// Min-max normalizes similarity and distance over the solvable candidates
/// (degenerate range -> 0), computes (w1*s - w2*d) * q_ratio, and returns
/// them best first with ties broken by ascending frame id.
std::vector<SuitabilityScore> score_candidates(const std::vector<CandidateFactors>& candidates, double w1,
                                               double w2);

/// Supplies target_from_source for a candidate, or nullopt if unknown.
using RelativePoseFn = std::function<std::optional<Pose>(FrameId source)>;

struct SelectionContext {
    const Sequence* sequence = nullptr;
    FrameId target = -1;
    const VocabTree* tree = nullptr;
    /// Precomputed whole-frame quality per frame id (optional; computed on demand otherwise).
    const std::vector<double>* quality = nullptr;
    RelativePoseFn relative_pose;
    DetectorParams detector;
    /// Non-fatal notes (e.g. degenerate target quality).
    std::vector<std::string>* warnings = nullptr;
};

struct SelectionResult {
    std::vector<FrameId> sources;
    std::vector<SuitabilityScore> scores;
    std::vector<FrameId> excluded_masked;
};

/// Two-step source selection. Throws SelectionError when nothing is eligible.
SelectionResult select_sources(const MaskRegion& region, const SelectionContext& ctx,
                               const SelectionParams& params);

/// Fraction of the region's masked pixels that land on masked source pixels
/// when carried into the source view by `source_from_target`, using the
/// ring's median depth for the masked pixels. nullopt when the region is
/// entirely out of the source view.
std::optional<double> masked_coverage(const MaskRegion& region, const Frame& target, const Frame& source,
                                      const std::optional<Pose>& source_from_target,
                                      const CameraIntrinsics& intr);

}  // namespace mvi
