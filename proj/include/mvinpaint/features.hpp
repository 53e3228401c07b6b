#pragma once

#include "mvinpaint/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace mvi {

struct Keypoint {
    float x = 0.f;
    float y = 0.f;
    /// Gaussian scale in input-image pixels.
    float scale = 0.f;
    /// Dominant gradient orientation, radians in [0, 2pi).
    float orientation = 0.f;
    float response = 0.f;
};

inline constexpr int kDescriptorSize = 128;
using Descriptor = std::array<float, kDescriptorSize>;

/// Keypoints with unit-norm descriptors, index-aligned.
struct FeatureSet {
    FrameId frame_id = -1;
    std::vector<Keypoint> keypoints;
    std::vector<Descriptor> descriptors;

    size_t size() const { return keypoints.size(); }
    bool empty() const { return keypoints.empty(); }
};

struct DetectorParams {
    int scales_per_octave = 3;
    double base_sigma = 1.6;
    /// Assumed blur of the input image.
    double input_sigma = 0.5;
    /// Minimum |DoG| at the refined extremum, for [0,1] intensities.
    double contrast_threshold = 0.04;
    double edge_ratio = 10.0;
    /// Octaves stop once the shorter side drops below this.
    int min_octave_size = 16;
    /// Keep only the strongest responses (0 = unlimited).
    int max_features = 0;

    uint64_t fingerprint() const;
};

/// DoG-pyramid detector with gradient-orientation-histogram descriptors.
/// Keypoints are kept only where `region` is nonzero (when given).
FeatureSet detect_describe(const GrayImage& image, const MaskImage& region = {},
                           const DetectorParams& params = {});

/// Descriptors for caller-supplied keypoints (orientation and scale taken
/// from the keypoint). Used to compare the same locations across images.
std::vector<Descriptor> describe(const GrayImage& image, const std::vector<Keypoint>& keypoints,
                                 const DetectorParams& params = {});

struct Match {
    int index_a = 0;
    int index_b = 0;
    float distance = 0.f;
};

struct MatchSet {
    FrameId frame_a = -1;
    FrameId frame_b = -1;
    std::vector<Match> pairs;
};

/// Mutual nearest neighbours passing the ratio test in both directions.
MatchSet match(const FeatureSet& a, const FeatureSet& b, double ratio = 0.8);

float descriptor_distance(const Descriptor& a, const Descriptor& b);

/// Versioned binary cache of a FeatureSet. load returns nullopt when the
/// file is missing, malformed, or was written with other detector params.
void save_features(const std::filesystem::path& file, const FeatureSet& features, uint64_t fingerprint);
std::optional<FeatureSet> load_features(const std::filesystem::path& file, uint64_t fingerprint);

}  // namespace mvi
