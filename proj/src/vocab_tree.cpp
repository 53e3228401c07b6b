#include "mvinpaint/vocab_tree.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mvi {

namespace {

float squared_distance(const Descriptor& a, const Descriptor& b) {
    float s = 0.f;
    for (int i = 0; i < kDescriptorSize; ++i) {
        float d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

int nearest_centroid(const Descriptor& d, const std::vector<Descriptor>& centroids) {
    int best = 0;
    float best_d = std::numeric_limits<float>::infinity();
    for (size_t c = 0; c < centroids.size(); ++c) {
        float dist = squared_distance(d, centroids[c]);
        if (dist < best_d) {
            best_d = dist;
            best = static_cast<int>(c);
        }
    }
    return best;
}

// k-means++ seeding followed by Lloyd iterations.
std::vector<int> kmeans(const std::vector<int>& members, const std::vector<const Descriptor*>& all, int k,
                        std::mt19937_64& rng, std::vector<Descriptor>& centroids) {
    const size_t n = members.size();
    centroids.clear();
    std::uniform_int_distribution<size_t> pick(0, n - 1);
    centroids.push_back(*all[members[pick(rng)]]);
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0;
        for (size_t i = 0; i < n; ++i) {
            dist[i] = std::min<double>(dist[i], squared_distance(*all[members[i]], centroids.back()));
            total += dist[i];
        }
        if (total <= 0) break;  // fewer distinct points than k
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng);
        size_t chosen = n - 1;
        for (size_t i = 0; i < n; ++i) {
            r -= dist[i];
            if (r <= 0) {
                chosen = i;
                break;
            }
        }
        centroids.push_back(*all[members[chosen]]);
    }

    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < 25; ++iter) {
        bool changed = false;
        for (size_t i = 0; i < n; ++i) {
            int c = nearest_centroid(*all[members[i]], centroids);
            if (c != assign[i]) {
                assign[i] = c;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<std::array<double, kDescriptorSize>> sums(centroids.size());
        std::vector<int> counts(centroids.size(), 0);
        for (auto& s : sums) s.fill(0.0);
        for (size_t i = 0; i < n; ++i) {
            const Descriptor& d = *all[members[i]];
            for (int j = 0; j < kDescriptorSize; ++j) sums[assign[i]][j] += d[j];
            ++counts[assign[i]];
        }
        for (size_t c = 0; c < centroids.size(); ++c) {
            if (counts[c] == 0) continue;
            for (int j = 0; j < kDescriptorSize; ++j)
                centroids[c][j] = static_cast<float>(sums[c][j] / counts[c]);
        }
    }
    return assign;
}

}  // namespace

VocabTree VocabTree::build(const std::vector<FeatureSet>& training, int k, int depth, uint64_t seed) {
    if (k < 2) throw ConfigError("vocabulary branching factor must be >= 2");
    if (depth < 1) throw ConfigError("vocabulary depth must be >= 1");
    std::vector<const Descriptor*> all;
    for (const auto& fs : training)
        for (const auto& d : fs.descriptors) all.push_back(&d);
    if (static_cast<int>(all.size()) < k)
        throw InputError("vocabulary training needs at least k=" + std::to_string(k) + " descriptors, got " +
                         std::to_string(all.size()));

    VocabTree tree;
    tree.k_ = k;
    tree.depth_ = depth;
    tree.nodes_.push_back({});
    std::vector<int> members(all.size());
    for (size_t i = 0; i < all.size(); ++i) members[i] = static_cast<int>(i);
    tree.split(0, members, all, 0, seed);

    // Inverse document frequency over the training frames.
    const double n_docs = static_cast<double>(training.size());
    std::vector<int> doc_count(tree.idf_.size(), 0);
    for (const auto& fs : training) {
        std::vector<char> seen(tree.idf_.size(), 0);
        for (const auto& d : fs.descriptors) seen[tree.quantize(d)] = 1;
        for (size_t w = 0; w < seen.size(); ++w) doc_count[w] += seen[w];
    }
    for (size_t w = 0; w < tree.idf_.size(); ++w)
        tree.idf_[w] = doc_count[w] > 0 ? std::log(n_docs / doc_count[w]) : 0.0;

    for (const auto& fs : training)
        if (fs.frame_id >= 0) tree.index(fs.frame_id, fs);
    return tree;
}

void VocabTree::split(int node, std::vector<int>& members, const std::vector<const Descriptor*>& all, int level,
                      uint64_t seed) {
    if (level == depth_ || static_cast<int>(members.size()) < k_) {
        nodes_[node].word = static_cast<int>(idf_.size());
        idf_.push_back(0.0);
        return;
    }
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(node) * 1000003ull + 17);
    std::vector<Descriptor> centroids;
    std::vector<int> assign = kmeans(members, all, k_, rng, centroids);
    if (centroids.size() < 2) {
        nodes_[node].word = static_cast<int>(idf_.size());
        idf_.push_back(0.0);
        return;
    }
    std::vector<std::vector<int>> groups(centroids.size());
    for (size_t i = 0; i < members.size(); ++i) groups[assign[i]].push_back(members[i]);
    members.clear();
    members.shrink_to_fit();
    for (size_t c = 0; c < centroids.size(); ++c) {
        if (groups[c].empty()) continue;
        int child = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        nodes_[child].centroid = centroids[c];
        nodes_[node].children.push_back(child);
    }
    int gi = 0;
    for (size_t c = 0; c < centroids.size(); ++c) {
        if (groups[c].empty()) continue;
        int child = nodes_[node].children[gi++];
        split(child, groups[c], all, level + 1, seed);
    }
}

int VocabTree::quantize(const Descriptor& d) const {
    int node = 0;
    while (nodes_[node].word < 0) {
        const auto& children = nodes_[node].children;
        int best = children.front();
        float best_d = std::numeric_limits<float>::infinity();
        for (int c : children) {
            float dist = squared_distance(d, nodes_[c].centroid);
            if (dist < best_d) {
                best_d = dist;
                best = c;
            }
        }
        node = best;
    }
    return nodes_[node].word;
}

VocabTree::BowVector VocabTree::bow(const FeatureSet& features) const {
    BowVector v;
    for (const auto& d : features.descriptors) v[quantize(d)] += 1.0;
    double total = 0;
    for (auto& [w, x] : v) {
        x *= idf_[w];
        total += x;
    }
    if (total <= 0) return {};
    BowVector out;
    for (auto& [w, x] : v)
        if (x > 0) out[w] = x / total;
    return out;
}

void VocabTree::index(FrameId frame, const FeatureSet& features) {
    if (database_.count(frame)) {
        for (auto& [w, x] : database_[frame]) {
            auto& ids = inverted_[w];
            ids.erase(std::remove(ids.begin(), ids.end(), frame), ids.end());
        }
    }
    BowVector v = bow(features);
    for (auto& [w, x] : v) inverted_[w].push_back(frame);
    database_[frame] = std::move(v);
}

std::vector<FrameId> VocabTree::indexed_frames() const {
    std::vector<FrameId> ids;
    for (auto& [id, v] : database_) ids.push_back(id);
    return ids;
}

double VocabTree::score(const BowVector& q, const BowVector& d) {
    // For L1-normalized vectors 1 - 0.5|q-d|_1 equals the sum of
    // element-wise minima; empty vectors score 0.
    if (q.empty() || d.empty()) return 0.0;
    double s = 0;
    auto qi = q.begin();
    auto di = d.begin();
    while (qi != q.end() && di != d.end()) {
        if (qi->first < di->first) ++qi;
        else if (di->first < qi->first) ++di;
        else {
            s += std::min(qi->second, di->second);
            ++qi;
            ++di;
        }
    }
    return std::clamp(s, 0.0, 1.0);
}

double VocabTree::similarity(const FeatureSet& query, FrameId frame) const {
    auto it = database_.find(frame);
    if (it == database_.end()) throw InputError("frame " + std::to_string(frame) + " is not indexed");
    return score(bow(query), it->second);
}

std::vector<std::pair<FrameId, double>> VocabTree::rank(const FeatureSet& query) const {
    BowVector q = bow(query);
    std::map<FrameId, double> acc;
    for (auto& [id, v] : database_) acc[id] = 0.0;
    for (auto& [w, x] : q) {
        auto inv = inverted_.find(w);
        if (inv == inverted_.end()) continue;
        for (FrameId id : inv->second) acc[id] += std::min(x, database_.at(id).at(w));
    }
    std::vector<std::pair<FrameId, double>> out(acc.begin(), acc.end());
    for (auto& [id, s] : out) s = std::clamp(s, 0.0, 1.0);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

bool VocabTree::operator==(const VocabTree& other) const {
    if (k_ != other.k_ || depth_ != other.depth_ || nodes_.size() != other.nodes_.size()) return false;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].centroid != other.nodes_[i].centroid || nodes_[i].children != other.nodes_[i].children ||
            nodes_[i].word != other.nodes_[i].word)
            return false;
    }
    return idf_ == other.idf_ && database_ == other.database_;
}

}  // namespace mvi
