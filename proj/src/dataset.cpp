#include "mvinpaint/dataset.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mvi {

namespace fs = std::filesystem;

void CameraIntrinsics::validate() const {
    if (!(fx > 0) || !(fy > 0)) throw ConfigError("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ConfigError("intrinsics: image size must be positive");
    if (!(cx >= 0 && cx < width && cy >= 0 && cy < height))
        throw ConfigError("intrinsics: principal point outside the image");
    if (!(depth_scale > 0)) throw ConfigError("intrinsics: depth_scale must be positive");
}

int Frame::masked_pixels() const {
    return mask.empty() ? 0 : cv::countNonZero(mask);
}

const Frame& Sequence::frame(FrameId id) const {
    if (const Frame* f = find(id)) return *f;
    throw InputError("no frame with id " + std::to_string(id));
}

const Frame* Sequence::find(FrameId id) const {
    auto it = std::lower_bound(frames.begin(), frames.end(), id,
                               [](const Frame& f, FrameId v) { return f.id < v; });
    if (it == frames.end() || it->id != id) return nullptr;
    return &*it;
}

namespace {

bool skip_line(const std::string& line) {
    auto pos = line.find_first_not_of(" \t\r");
    return pos == std::string::npos || line[pos] == '#';
}

}  // namespace

std::vector<IndexRow> read_index_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open index file: " + file.string());
    std::vector<IndexRow> rows;
    std::string line;
    for (int line_no = 1; std::getline(in, line); ++line_no) {
        if (skip_line(line)) continue;
        std::istringstream iss(line);
        IndexRow row;
        if (!(iss >> row.timestamp_text >> row.path))
            throw InputError(file.string() + ":" + std::to_string(line_no) + ": malformed row");
        try {
            row.timestamp = std::stod(row.timestamp_text);
        } catch (const std::exception&) {
            throw InputError(file.string() + ":" + std::to_string(line_no) + ": bad timestamp");
        }
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const IndexRow& a, const IndexRow& b) { return a.timestamp < b.timestamp; });
    return rows;
}

std::vector<TrajectoryRow> read_trajectory_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open trajectory file: " + file.string());
    std::vector<TrajectoryRow> rows;
    std::string line;
    for (int line_no = 1; std::getline(in, line); ++line_no) {
        if (skip_line(line)) continue;
        std::istringstream iss(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(iss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
            throw InputError(file.string() + ":" + std::to_string(line_no) + ": malformed pose row");
        Eigen::Quaterniond q(qw, qx, qy, qz);
        if (q.norm() < 1e-12)
            throw InputError(file.string() + ":" + std::to_string(line_no) + ": zero quaternion");
        rows.push_back({t, Pose(q, Eigen::Vector3d(tx, ty, tz))});
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const TrajectoryRow& a, const TrajectoryRow& b) { return a.timestamp < b.timestamp; });
    return rows;
}

std::vector<int> associate_nearest(const std::vector<double>& query,
                                   const std::vector<double>& candidates, double max_dt) {
    std::vector<int> out(query.size(), -1);
    for (size_t i = 0; i < query.size(); ++i) {
        auto it = std::lower_bound(candidates.begin(), candidates.end(), query[i]);
        int best = -1;
        double best_dt = max_dt;
        // Earlier candidate wins an exact tie.
        if (it != candidates.begin()) {
            int j = static_cast<int>(it - candidates.begin()) - 1;
            double dt = std::abs(candidates[j] - query[i]);
            if (dt <= best_dt) {
                best = j;
                best_dt = dt;
            }
        }
        if (it != candidates.end()) {
            int j = static_cast<int>(it - candidates.begin());
            double dt = std::abs(candidates[j] - query[i]);
            if (dt < best_dt || (best < 0 && dt <= best_dt)) best = j;
        }
        out[i] = best;
    }
    return out;
}

CameraIntrinsics read_intrinsics_file(const fs::path& file, CameraIntrinsics intr) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open intrinsics file: " + file.string());
    std::string line;
    while (std::getline(in, line)) {
        if (skip_line(line)) continue;
        auto eq = line.find('=');
        std::string key, value;
        if (eq != std::string::npos) {
            key = line.substr(0, eq);
            value = line.substr(eq + 1);
        } else {
            std::istringstream iss(line);
            iss >> key >> value;
        }
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        key = trim(key);
        value = trim(value);
        try {
            if (key == "fx") intr.fx = std::stod(value);
            else if (key == "fy") intr.fy = std::stod(value);
            else if (key == "cx") intr.cx = std::stod(value);
            else if (key == "cy") intr.cy = std::stod(value);
            else if (key == "width") intr.width = std::stoi(value);
            else if (key == "height") intr.height = std::stoi(value);
            else if (key == "depth_scale") intr.depth_scale = std::stod(value);
            else throw InputError(file.string() + ": unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw InputError(file.string() + ": bad value for '" + key + "'");
        }
    }
    intr.validate();
    return intr;
}

ColorImage read_color_png(const fs::path& file) {
    cv::Mat raw = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw InputError("cannot read color image: " + file.string());
    cv::Mat color;
    if (raw.depth() != CV_8U) throw InputError("color image is not 8-bit: " + file.string());
    switch (raw.channels()) {
        case 1: cv::cvtColor(raw, color, cv::COLOR_GRAY2BGR); break;
        case 3: color = raw; break;
        case 4: cv::cvtColor(raw, color, cv::COLOR_BGRA2BGR); break;
        default: throw InputError("unsupported channel count: " + file.string());
    }
    return color;
}

void write_color_png(const fs::path& file, const ColorImage& color) {
    if (!cv::imwrite(file.string(), color)) throw InputError("cannot write image: " + file.string());
}

DepthImage read_depth_png(const fs::path& file, double depth_scale) {
    cv::Mat raw = cv::imread(file.string(), cv::IMREAD_ANYDEPTH);
    if (raw.empty()) throw InputError("cannot read depth image: " + file.string());
    if (raw.type() != CV_16UC1) throw InputError("depth image is not 16-bit single channel: " + file.string());
    DepthImage depth;
    raw.convertTo(depth, CV_32F, 1.0 / depth_scale);
    return depth;
}

void write_depth_png(const fs::path& file, const DepthImage& depth, double depth_scale) {
    cv::Mat1w raw(depth.size());
    for (int y = 0; y < depth.rows; ++y)
        for (int x = 0; x < depth.cols; ++x) {
            double v = std::round(static_cast<double>(depth(y, x)) * depth_scale);
            raw(y, x) = static_cast<uint16_t>(std::clamp(v, 0.0, 65535.0));
        }
    if (!cv::imwrite(file.string(), raw)) throw InputError("cannot write depth image: " + file.string());
}

MaskImage read_mask_png(const fs::path& file) {
    cv::Mat raw = cv::imread(file.string(), cv::IMREAD_GRAYSCALE);
    if (raw.empty()) throw InputError("cannot read mask image: " + file.string());
    MaskImage mask = raw != 0;
    return mask;
}

Sequence load_sequence(const fs::path& dir, const LoadOptions& options) {
    if (!fs::is_directory(dir)) throw InputError("dataset directory not found: " + dir.string());
    Sequence seq;
    seq.intrinsics = options.intrinsics;
    if (fs::exists(dir / "intrinsics.txt"))
        seq.intrinsics = read_intrinsics_file(dir / "intrinsics.txt", options.intrinsics);
    seq.intrinsics.validate();

    auto rgb = read_index_file(dir / "rgb.txt");
    auto depth = read_index_file(dir / "depth.txt");
    std::vector<TrajectoryRow> trajectory;
    if (fs::exists(dir / "groundtruth.txt")) trajectory = read_trajectory_file(dir / "groundtruth.txt");

    std::vector<double> rgb_t, depth_t, traj_t;
    for (auto& r : rgb) rgb_t.push_back(r.timestamp);
    for (auto& r : depth) depth_t.push_back(r.timestamp);
    for (auto& r : trajectory) traj_t.push_back(r.timestamp);
    auto depth_match = associate_nearest(rgb_t, depth_t, options.max_assoc_dt);
    auto pose_match = associate_nearest(rgb_t, traj_t, options.max_assoc_dt);

    double last_t = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < rgb.size(); ++i) {
        if (depth_match[i] < 0) continue;
        if (rgb[i].timestamp <= last_t) continue;  // duplicate timestamps keep the first row
        if (options.max_frames > 0 && static_cast<int>(seq.frames.size()) >= options.max_frames) break;
        Frame f;
        f.id = static_cast<FrameId>(seq.frames.size());
        f.timestamp = rgb[i].timestamp;
        f.timestamp_text = rgb[i].timestamp_text;
        f.color_path = dir / rgb[i].path;
        f.depth_path = dir / depth[depth_match[i]].path;
        f.color = read_color_png(f.color_path);
        f.depth = read_depth_png(f.depth_path, seq.intrinsics.depth_scale);
        if (f.color.size() != f.depth.size())
            throw InputError("color/depth size mismatch: " + f.depth_path.string());
        if (f.color.cols != seq.intrinsics.width || f.color.rows != seq.intrinsics.height)
            throw InputError("image size does not match intrinsics: " + f.color_path.string());
        fs::path mask_path = dir / "masks" / (f.timestamp_text + ".png");
        if (fs::exists(mask_path)) {
            f.mask = read_mask_png(mask_path);
            if (f.mask.size() != f.color.size())
                throw InputError("mask size mismatch: " + mask_path.string());
            if (cv::countNonZero(f.mask) == f.mask.rows * f.mask.cols)
                throw InputError("mask covers the entire frame: " + mask_path.string());
        } else {
            f.mask = MaskImage::zeros(f.color.size());
        }
        if (pose_match[i] >= 0) f.pose = trajectory[pose_match[i]].pose;
        last_t = f.timestamp;
        seq.frames.push_back(std::move(f));
    }
    return seq;
}

std::vector<CameraPoint> unproject(const DepthImage& depth, const CameraIntrinsics& intr) {
    std::vector<CameraPoint> points;
    for (int v = 0; v < depth.rows; ++v)
        for (int u = 0; u < depth.cols; ++u) {
            double d = depth(v, u);
            if (d > 0) points.push_back({unproject_pixel(u, v, d, intr), u, v});
        }
    return points;
}

Projection project(const Eigen::Vector3d& p, const CameraIntrinsics& intr) {
    Projection out;
    out.z = p.z();
    if (!(p.z() > 0)) {
        out.behind_camera = true;
        return out;
    }
    out.u = intr.fx * p.x() / p.z() + intr.cx;
    out.v = intr.fy * p.y() / p.z() + intr.cy;
    out.out_of_bounds = !(out.u >= 0 && out.u < intr.width && out.v >= 0 && out.v < intr.height);
    return out;
}

std::vector<Projection> project(const std::vector<Eigen::Vector3d>& points, const CameraIntrinsics& intr) {
    std::vector<Projection> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(project(p, intr));
    return out;
}

void export_ply(const Frame& frame, const CameraIntrinsics& intr, const fs::path& out) {
    if (frame.color.empty() || frame.depth.empty()) throw InputError("frame has no color or depth");
    auto points = unproject(frame.depth, intr);
    std::ofstream os(out);
    if (!os) throw InputError("cannot write PLY: " + out.string());
    os << "ply\nformat ascii 1.0\n"
       << "element vertex " << points.size() << "\n"
       << "property float x\nproperty float y\nproperty float z\n"
       << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
       << "end_header\n";
    os.precision(7);
    for (const auto& p : points) {
        const cv::Vec3b& bgr = frame.color(p.v, p.u);
        os << p.point.x() << ' ' << p.point.y() << ' ' << p.point.z() << ' ' << int(bgr[2]) << ' '
           << int(bgr[1]) << ' ' << int(bgr[0]) << '\n';
    }
    if (!os) throw InputError("error writing PLY: " + out.string());
}

}  // namespace mvi
