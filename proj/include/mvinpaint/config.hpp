#pragma once

#include "mvinpaint/depth_fill.hpp"
#include "mvinpaint/exemplar.hpp"
#include "mvinpaint/features.hpp"
#include "mvinpaint/mrf.hpp"
#include "mvinpaint/poisson.hpp"
#include "mvinpaint/posegraph.hpp"
#include "mvinpaint/selection.hpp"
#include "mvinpaint/warp.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mvi {

struct PipelineConfig {
    std::filesystem::path dataset;
    std::vector<FrameId> targets;  // empty = every frame with a nonempty mask
    std::filesystem::path output = "mvinpaint_out";
    std::filesystem::path feature_cache;  // empty = no cache
    bool debug = false;
    bool write_ply = false;
    double max_assoc_dt = 0.02;
    int max_frames = 0;
    uint64_t seed = 0;
    int workers = 1;

    DetectorParams detector;
    double match_ratio = 0.8;
    int vocab_k = 8;
    int vocab_depth = 3;
    SelectionParams selection;

    RansacParams ransac;
    GridParams grid;
    double warp_margin = 0.5;
    /// Homographies sought per source by sequential RANSAC; their inliers
    /// together feed the local grid.
    int warp_planes = 3;
    WarpOptions warp;

    MrfParams mrf;
    PoissonOptions poisson;

    RigidRansacParams rigid;
    PoseGraphOptions posegraph;
    double gt_prior_weight = 1000.0;

    ExemplarParams exemplar;
    DepthFillParams depth;

    PipelineConfig();

    /// Sets one `key = value` entry. Throws ConfigError on an unknown key or
    /// an unparsable value.
    void set(const std::string& key, const std::string& value);
    /// Reads `key = value` lines; '#' starts a comment.
    void load_file(const std::filesystem::path& file);
    /// Range checks for every parameter.
    void validate() const;
    /// All keys with their current values, one `key = value` per line.
    std::string to_text() const;
    static std::vector<std::string> keys();
};

}  // namespace mvi
