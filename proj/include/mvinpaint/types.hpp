#pragma once

#include <opencv2/core.hpp>

#include <stdexcept>
#include <string>

namespace mvi {

// Image conventions used across the library:
//   ColorImage   8-bit, 3 channels, as stored on disk
//   ColorImageF  float, 3 channels, each channel normalized to [0,1]
//   GrayImage    float, 1 channel, [0,1]
//   DepthImage   float meters, 0 = unknown
//   MaskImage    8-bit, nonzero = masked / true
using ColorImage = cv::Mat3b;
using ColorImageF = cv::Mat3f;
using GrayImage = cv::Mat1f;
using DepthImage = cv::Mat1f;
using MaskImage = cv::Mat1b;

using FrameId = int;

/// Bad or missing input data (files, directories, malformed rows).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameter values or API misuse.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Geometric estimation failed (degenerate configuration, too few inliers).
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// No eligible source frame for a mask region.
class SelectionError : public std::runtime_error {
public:
    SelectionError(int mask_id, const std::string& what)
        : std::runtime_error(what), mask_id_(mask_id) {}
    int mask_id() const noexcept { return mask_id_; }

private:
    int mask_id_;
};

/// Exemplar search had nothing to search.
class SearchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative solver hit its iteration cap.
class SolverError : public std::runtime_error {
public:
    SolverError(int iterations, const std::string& what)
        : std::runtime_error(what), iterations_(iterations) {}
    int iterations() const noexcept { return iterations_; }

private:
    int iterations_;
};

GrayImage to_gray(const ColorImage& color);
GrayImage to_gray(const ColorImageF& color);
ColorImageF to_float(const ColorImage& color);
ColorImage to_8bit(const ColorImageF& color);

/// Sobel derivatives (3x3, reflect-101 border) of a single-channel float image.
void sobel(const GrayImage& image, GrayImage& gx, GrayImage& gy);
GrayImage sobel_magnitude(const GrayImage& image);

}  // namespace mvi
