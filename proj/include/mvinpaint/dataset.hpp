#pragma once

#include "mvinpaint/geometry.hpp"
#include "mvinpaint/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mvi {

/// Pinhole camera without distortion.
struct CameraIntrinsics {
    double fx = 535.4;
    double fy = 539.2;
    double cx = 320.1;
    double cy = 247.6;
    int width = 640;
    int height = 480;
    /// Raw 16-bit depth units per meter.
    double depth_scale = 5000.0;

    /// Throws ConfigError when an invariant is violated.
    void validate() const;
};

struct Frame {
    FrameId id = 0;
    double timestamp = 0.0;
    /// Timestamp token exactly as it appears in rgb.txt; used for mask names.
    std::string timestamp_text;
    std::filesystem::path color_path;
    std::filesystem::path depth_path;
    ColorImage color;
    DepthImage depth;
    MaskImage mask;
    /// world_from_camera, when a trajectory row associated.
    std::optional<Pose> pose;

    cv::Size size() const { return color.size(); }
    int masked_pixels() const;
};

struct Sequence {
    std::vector<Frame> frames;
    CameraIntrinsics intrinsics;

    const Frame& frame(FrameId id) const;
    const Frame* find(FrameId id) const;
};

struct LoadOptions {
    double max_assoc_dt = 0.02;
    /// Keep at most this many associated frames (0 = all).
    int max_frames = 0;
    /// Used when the directory has no intrinsics.txt.
    CameraIntrinsics intrinsics;
};

/// Reads a TUM-format RGB-D directory (rgb.txt, depth.txt, optional
/// groundtruth.txt, optional intrinsics.txt, optional masks/<timestamp>.png).
Sequence load_sequence(const std::filesystem::path& dir, const LoadOptions& options = {});

/// One `timestamp path` row of a TUM index file.
struct IndexRow {
    double timestamp = 0.0;
    std::string timestamp_text;
    std::string path;
};

struct TrajectoryRow {
    double timestamp = 0.0;
    Pose pose;
};

std::vector<IndexRow> read_index_file(const std::filesystem::path& file);
std::vector<TrajectoryRow> read_trajectory_file(const std::filesystem::path& file);

/// For every query timestamp, the index of the nearest candidate within
/// max_dt, or -1. Candidates must be sorted by timestamp.
std::vector<int> associate_nearest(const std::vector<double>& query,
                                   const std::vector<double>& candidates, double max_dt);

CameraIntrinsics read_intrinsics_file(const std::filesystem::path& file, CameraIntrinsics defaults);

DepthImage read_depth_png(const std::filesystem::path& file, double depth_scale);
void write_depth_png(const std::filesystem::path& file, const DepthImage& depth, double depth_scale);
ColorImage read_color_png(const std::filesystem::path& file);
void write_color_png(const std::filesystem::path& file, const ColorImage& color);
MaskImage read_mask_png(const std::filesystem::path& file);

struct CameraPoint {
    Eigen::Vector3d point;
    int u = 0;
    int v = 0;
};

/// Back-projects every pixel with depth > 0.
std::vector<CameraPoint> unproject(const DepthImage& depth, const CameraIntrinsics& intr);

inline Eigen::Vector3d unproject_pixel(double u, double v, double d, const CameraIntrinsics& intr) {
    return {(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d};
}

struct Projection {
    double u = 0.0;
    double v = 0.0;
    double z = 0.0;
    bool behind_camera = false;
    bool out_of_bounds = false;

    bool valid() const { return !behind_camera && !out_of_bounds; }
};

Projection project(const Eigen::Vector3d& point, const CameraIntrinsics& intr);
std::vector<Projection> project(const std::vector<Eigen::Vector3d>& points, const CameraIntrinsics& intr);

/// ASCII PLY, one colored vertex per valid-depth pixel, camera coordinates.
void export_ply(const Frame& frame, const CameraIntrinsics& intr, const std::filesystem::path& out);

}  // namespace mvi
