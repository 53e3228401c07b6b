#pragma once

#include "mvinpaint/features.hpp"

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace mvi {

/// Hierarchical k-means vocabulary with tf-idf weighted bag-of-words scoring.
///
/// Scoring: both vectors are tf-idf weighted and L1-normalized, and
/// similarity = 1 - 0.5 * |q - d|_1, which lies in [0,1].
class VocabTree {
public:
    /// Trains on the descriptors of `training` and indexes every set whose
    /// frame_id >= 0. Throws InputError if fewer than k descriptors exist.
    static VocabTree build(const std::vector<FeatureSet>& training, int k, int depth, uint64_t seed);

    int branching() const { return k_; }
    int depth() const { return depth_; }
    int word_count() const { return static_cast<int>(idf_.size()); }
    const std::vector<double>& idf() const { return idf_; }

    /// Leaf word of a descriptor.
    int quantize(const Descriptor& d) const;

    using BowVector = std::map<int, double>;
    BowVector bow(const FeatureSet& features) const;

    void index(FrameId frame, const FeatureSet& features);
    bool indexed(FrameId frame) const { return database_.count(frame) > 0; }
    std::vector<FrameId> indexed_frames() const;

    /// Throws InputError for an unindexed frame.
    double similarity(const FeatureSet& query, FrameId frame) const;

    /// All indexed frames, best first; ties by ascending frame id.
    std::vector<std::pair<FrameId, double>> rank(const FeatureSet& query) const;

    /// Structural equality (centroids, idf, index) for determinism checks.
    bool operator==(const VocabTree& other) const;

private:
    struct Node {
        Descriptor centroid{};
        std::vector<int> children;
        int word = -1;
    };

    void split(int node, std::vector<int>& members, const std::vector<const Descriptor*>& all, int level,
               uint64_t seed);

    static double score(const BowVector& q, const BowVector& d);

    int k_ = 0;
    int depth_ = 0;
    std::vector<Node> nodes_;
    std::vector<double> idf_;
    std::map<FrameId, BowVector> database_;
    std::map<int, std::vector<FrameId>> inverted_;
};

}  // namespace mvi
