#pragma once

#include "mvinpaint/config.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace mvi {

struct RegionReport {
    int mask_id = 0;
    cv::Rect rect;
    cv::Rect work;
    int area = 0;
    std::string status = "ok";  // ok | degraded | failed
    std::string error;
    std::vector<std::string> warnings;
    std::map<std::string, double> seconds;

    std::vector<FrameId> sources;
    std::vector<double> scores;
    std::vector<FrameId> excluded_masked;
    int proposals = 0;

    double mrf_energy_initial = 0.0;
    double mrf_energy_final = 0.0;
    int mrf_moves = 0;
    int residual_holes = 0;  // dilated pixels left without a label
    int poisson_iterations = 0;

    int pose_edges = 0;
    double pose_cost_initial = 0.0;
    double pose_cost_final = 0.0;
    int depth_transferred = 0;

    // Mask pixels by how their color was produced.
    int color_mrf = 0;
    int color_exemplar = 0;
    int color_fallback = 0;
    int color_unfilled = 0;
    double exemplar_energy_greedy = 0.0;
    double exemplar_energy_final = 0.0;

    int depth_filled = 0;
    int depth_demoted = 0;
    int depth_fallback = 0;
    int depth_unfilled = 0;
};

struct TargetReport {
    FrameId target = -1;
    std::string timestamp;
    bool noop = false;  // empty mask, inputs copied
    std::string last_stage;
    double seconds = 0.0;
    std::vector<RegionReport> regions;
    std::vector<std::string> outputs;
};

struct RunReport {
    std::string mode;  // run | stage:<name>
    std::vector<TargetReport> targets;
    std::vector<std::string> warnings;
    std::vector<std::string> outputs;
    double seconds = 0.0;

    int failed_regions() const;
    nlohmann::json to_json() const;
    std::string to_text() const;
};

void to_json(nlohmann::json& j, const RegionReport& r);
void from_json(const nlohmann::json& j, RegionReport& r);

/// select, warp, combine, color, depth
const std::vector<std::string>& stage_names();

/// Whole pipeline for every target. Throws ConfigError for an invalid
/// config and InputError for unreadable data; per-region failures are
/// recorded in the report.
RunReport run(const PipelineConfig& config);

/// One stage for every target, reading the previous stage's artifacts from
/// <output>/stages/<target>/ and writing its own. The depth stage also
/// writes the final images. Throws ConfigError for an unknown stage.
RunReport run_stage(const PipelineConfig& config, const std::string& stage);

/// Region rectangle grown by `margin` of its size per side, united with the
/// dilated mask's bounding box plus `ring` pixels, clipped to the image.
cv::Rect working_rect(const cv::Rect& region, const cv::Rect& dilated_bbox, double margin, int ring,
                      const cv::Size& image);

}  // namespace mvi
