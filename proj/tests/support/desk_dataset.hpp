// Renders a DeskScene to a TUM-layout directory with the ball masked in every
// frame, keeping the occluder-free renders as ground truth.
#pragma once

#include "scene.hpp"

namespace synth {

struct DeskDataset {
    mvi::CameraIntrinsics K;
    std::vector<Render> background;  // no occluder
    std::vector<cv::Mat1b> masks;
};

/// `dilate_px` grows each mask like a real segmenter's safety margin.
/// Frames listed in `unmasked` get no mask file.
inline DeskDataset write_desk(const std::filesystem::path& dir, int frames, int width, int height, uint64_t seed,
                              int dilate_px = 2, const std::vector<int>& unmasked = {}) {
    DeskScene ds(frames, width, height, seed);
    DeskDataset out;
    out.K = ds.K;
    out.K.depth_scale = 5000.0;
    std::vector<TumFrame> tum;
    for (int i = 0; i < frames; ++i) {
        Render with = ds.frame(i, true);
        out.background.push_back(ds.frame(i, false));
        cv::Mat1b mask = with.occluder.clone();
        if (dilate_px > 0)
            cv::dilate(mask, mask,
                       cv::getStructuringElement(cv::MORPH_ELLIPSE, cv::Size(2 * dilate_px + 1, 2 * dilate_px + 1)));
        const bool skip = std::find(unmasked.begin(), unmasked.end(), i) != unmasked.end();
        if (skip) mask = cv::Mat1b::zeros(mask.size());
        out.masks.push_back(mask);
        TumFrame f;
        f.t = 1000.0 + i / 30.0;
        f.color = with.color;
        f.depth = with.depth;
        if (!skip) f.mask = mask;
        f.pose = ds.poses[i];
        tum.push_back(f);
    }
    write_tum(dir, tum, out.K);
    return out;
}

}  // namespace synth
