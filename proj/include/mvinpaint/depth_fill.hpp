#pragma once

#include "mvinpaint/types.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace mvi {

enum class PixelClass : uint8_t { Known = 0, Smooth = 1, Edge = 2, Hole = 3 };

/// Thin color edges: Sobel magnitude of the channel mean, non-maximum
/// suppression across the gradient, magnitude above `threshold`.
MaskImage color_edges(const ColorImageF& color, double threshold);

struct PixelClassMap {
    cv::Mat1b cls;       // PixelClass per pixel
    MaskImage edge_bit;  // color-edge membership, also for known pixels
    cv::Mat1i stale;     // iterations an edge pixel waited while not credible

    PixelClass at(int x, int y) const { return static_cast<PixelClass>(cls(y, x)); }
};

/// Hole pixels become Edge on color edges and Smooth elsewhere; `blocked`
/// pixels (unknown, not ours to fill) become Hole; the rest Known.
PixelClassMap classify(const MaskImage& holes, const MaskImage& edges, const MaskImage& blocked = {});

/// Neighbour order: E, NE, N, NW, W, SW, S, SE (45 degree steps, y down).
inline const std::array<cv::Point, 8> kRing = {
    cv::Point{1, 0}, cv::Point{1, -1}, cv::Point{0, -1}, cv::Point{-1, -1},
    cv::Point{-1, 0}, cv::Point{-1, 1}, cv::Point{0, 1}, cv::Point{1, 1}};

/// Admissible availability patterns (bit k = ring neighbour k) for edge
/// pixels: the available neighbours form one end, or two ends at least
/// 135 degrees apart, where an end is one or two adjacent neighbours.
class EdgePatternTable {
public:
    EdgePatternTable();
    bool admits(uint8_t pattern) const { return admissible_[pattern]; }
    std::vector<uint8_t> patterns() const;
    static uint8_t rotate(uint8_t pattern, int steps);
    static uint8_t mirror(uint8_t pattern);

private:
    std::array<bool, 256> admissible_{};
};

struct DepthFillParams {
    int max_iters = 5000;
    int stale_limit = 5;
    double tolerance = 1e-6;  // meters
    double edge_threshold = 0.25;
    bool final_fallback = true;

    void validate() const;
};

/// available = known or already filled.
bool credible(int x, int y, const PixelClassMap& map, const cv::Mat1b& available, const EdgePatternTable& table);

struct DepthFillResult {
    DepthImage depth;
    int iterations = 0;
    int filled = 0;          // by the class rules
    int demoted = 0;         // edge pixels moved to smooth
    int untouched = 0;       // left empty by the class rules
    int fallback = 0;        // then filled by unrestricted diffusion
    int residual = 0;        // still empty (no known depth reachable)
    MaskImage fallback_mask;
};

/// Class-restricted Jacobi propagation of the 8-neighbour Laplace update.
/// Known pixels with depth 0 count as unavailable.
DepthFillResult propagate(const DepthImage& depth, PixelClassMap map, const EdgePatternTable& table,
                          const DepthFillParams& params = {});

}  // namespace mvi
