#pragma once

#include "mvinpaint/types.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace mvi {

struct ExemplarParams {
    int radius = 4;
    double gradient_weight = 1.0;
    double min_alpha = 0.5;
    double max_alpha = 2.0;
    int random_samples = 200;
    int refine_sweeps = 3;
    uint64_t seed = 0;

    void validate() const;
};

/// The search space: the target's own known area plus every warped
/// proposal, all in the same (sub-image) coordinates.
struct PatchDomain {
    int radius = 4;
    std::vector<ColorImageF> images;
    std::vector<MaskImage> usable;  // per-pixel validity and unmaskedness
    std::vector<GrayImage> gx, gy;
    std::vector<MaskImage> centers;  // patch fully usable and inside the image
    struct Center {
        int image;
        int x;
        int y;
    };
    std::vector<Center> center_list;

    static PatchDomain build(std::vector<ColorImageF> images, std::vector<MaskImage> usable, int radius);
    bool searchable(int image, int x, int y) const;
};

/// Working image being filled.
struct FillState {
    ColorImageF color;
    MaskImage unknown;  // not (yet) known: remaining hole plus foreign masks
    GrayImage confidence;
    cv::Mat1i src_image;  // provenance image index, -1 none
    cv::Mat2i src_xy;     // provenance pixel
    GrayImage gx, gy;
    MaskImage grad_valid;  // 3x3 neighbourhood fully known

    static FillState create(const ColorImageF& color, const MaskImage& unknown);
    void refresh_gradients(const cv::Rect& area);
};

struct PatchRef {
    int image = -1;
    int x = -1;
    int y = -1;
    double cost = std::numeric_limits<double>::infinity();
    double alpha = 1.0;
};

/// Patch distance between the target patch at pi and domain patch (image, pj),
/// over pi's known offsets, normalized by their count. Brightness ratio alpha
/// is estimated on the same offsets and clamped.
double patch_ssd(cv::Point pi, int image, cv::Point pj, const PatchDomain& domain, const FillState& state,
                 const ExemplarParams& params, double* alpha = nullptr);

/// Randomized search with propagation from neighbours' provenance, random
/// samples over all images, shrinking local search and hill climbing.
/// Throws SearchError when the domain has no searchable patch.
PatchRef search_exemplar(cv::Point pi, const PatchDomain& domain, const FillState& state,
                         const ExemplarParams& params, uint64_t seed);

/// Scans every searchable patch.
PatchRef search_exhaustive(cv::Point pi, const PatchDomain& domain, const FillState& state,
                           const ExemplarParams& params);

struct ColorFillResult {
    ColorImageF color;
    cv::Mat1i src_image;
    cv::Mat2i src_xy;
    MaskImage synthesized;  // filled from an exemplar
    MaskImage fallback;     // filled by diffusion
    int synthesized_count = 0;
    int fallback_count = 0;
    double energy_greedy = 0.0;
    double energy_final = 0.0;
    std::vector<double> energy_trace;
};

/// Onion-peel fill in priority order followed by refinement sweeps that are
/// kept only when they do not raise the energy. `blocked` pixels are unknown
/// but not to be filled here.
ColorFillResult inpaint_color(const ColorImageF& image, const MaskImage& holes, const MaskImage& blocked,
                              const PatchDomain& domain, const ExemplarParams& params);

/// Fills `holes` layer by layer with the mean of known 8-neighbours, then
/// relaxes them towards the discrete harmonic solution.
void diffuse_fill(ColorImageF& image, const MaskImage& holes, const MaskImage& blocked);

}  // namespace mvi
