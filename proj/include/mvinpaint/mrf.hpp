#pragma once

#include "mvinpaint/warp.hpp"

#include <limits>
#include <vector>

namespace mvi {

inline constexpr double kInfCost = std::numeric_limits<double>::infinity();

/// Dinic max-flow on a directed graph with two terminals.
class MaxFlow {
public:
    explicit MaxFlow(int nodes);
    /// Adds u->v with capacity cap and v->u with capacity rev_cap.
    void add_edge(int u, int v, double cap, double rev_cap = 0.0);
    /// Source->u (cap_source) and u->sink (cap_sink).
    void add_terminal(int u, double cap_source, double cap_sink);
    double solve();
    /// After solve(): true when u stays on the source side of the minimum cut.
    bool source_side(int u) const { return reach_[u]; }
    int size() const { return static_cast<int>(head_.size()) - 2; }

private:
    struct Arc {
        int to;
        int next;
        double cap;
    };
    int source() const { return static_cast<int>(head_.size()) - 2; }
    int sink() const { return static_cast<int>(head_.size()) - 1; }
    void push_arc(int u, int v, double cap);
    bool bfs();
    double dfs(int u, double pushed);

    std::vector<int> head_;
    std::vector<Arc> arcs_;
    std::vector<int> level_, iter_;
    std::vector<char> reach_;
};

/// Quadratic pseudo-boolean energy with submodular pairwise terms.
class BinaryEnergy {
public:
    explicit BinaryEnergy(int vars);
    void add_unary(int p, double e0, double e1);
    /// Term over (x_p, x_q) with table a=E(0,0), b=E(0,1), c=E(1,0), d=E(1,1).
    /// Requires b + c >= a + d.
    void add_pair(int p, int q, double a, double b, double c, double d);
    /// Global minimizer; returns labels in {0,1}.
    std::vector<int> minimize();

private:
    int vars_;
    double constant_ = 0.0;
    std::vector<double> u0_, u1_;
    struct Pair {
        int p, q;
        double w;
    };
    std::vector<Pair> pairs_;
};

/// Grid labelling energy
///   sum_p D(p, l_p) + smooth_weight * sum_{4-nbrs} W(p, q, l_p, l_q)
/// with W(p,q,a,b) = |f(p,a) - f(p,b)| + |f(q,a) - f(q,b)| for per-pixel,
/// per-label feature vectors f (gradients). W is a metric in the labels.
struct EnergyModel {
    int width = 0;
    int height = 0;
    int labels = 0;
    int feature_dim = 0;
    double smooth_weight = 1.0;
    std::vector<double> data;     // (p * labels + l)
    std::vector<float> features;  // ((p * labels + l) * feature_dim + k)

    EnergyModel() = default;
    EnergyModel(int w, int h, int num_labels, int dim);

    int pixels() const { return width * height; }
    double& cost(int p, int l) { return data[static_cast<size_t>(p) * labels + l]; }
    double cost(int p, int l) const { return data[static_cast<size_t>(p) * labels + l]; }
    float* feature(int p, int l) { return &features[(static_cast<size_t>(p) * labels + l) * feature_dim]; }
    const float* feature(int p, int l) const {
        return &features[(static_cast<size_t>(p) * labels + l) * feature_dim];
    }
    /// Unweighted W(p, q, a, b).
    double smooth(int p, int q, int a, int b) const;
};

struct LabelField {
    int width = 0;
    int height = 0;
    std::vector<int> labels;  // -1 = residual hole (no finite label)
    double energy = 0.0;
    std::vector<double> trace;  // energy after initialization and each accepted move
    int residual_holes = 0;
};

/// Energy of a labelling; holes (-1) and their edges are skipped.
double evaluate_energy(const EnergyModel& model, const std::vector<int>& labels);

struct MrfOptions {
    int max_sweeps = 100;
};

/// Exact for two labels; alpha-expansion in ascending label order otherwise.
LabelField solve_mrf(const EnergyModel& model, const MrfOptions& options = {});

struct MrfParams {
    double lambda1 = 1.0;
    double lambda2 = 0.2;
    double lambda3 = 1.0;
    int dilation_px = 3;
    int ring_px = 8;

    void validate() const;
};

struct MedianImage {
    ColorImageF color;
    MaskImage empty;             // no valid proposal at the pixel
    std::vector<double> weights; // per proposal, sum to 1
    std::vector<double> mean_ssd;
    std::vector<int> overlap;
};

/// Overlap-weighted blend of proposals. `target_known` marks target pixels
/// usable as reference (unmasked).
MedianImage median_image(const std::vector<WarpedProposal>& proposals, const ColorImageF& target,
                         const MaskImage& target_known);

/// lambda1 * |value - reference| + lambda2 * (exp(baseline) - 1), or
/// kInfCost when the proposal is unusable at the pixel.
double data_cost(const cv::Vec3f& value, bool usable, const cv::Vec3f& reference, double baseline,
                 double lambda1, double lambda2);

/// Sobel gradients of a color image, 6 values per pixel (dx, dy per channel).
cv::Mat sobel_features(const ColorImageF& image);

/// W for two labels given their gradient features at p and q.
double smooth_cost(const cv::Vec6f& a_p, const cv::Vec6f& b_p, const cv::Vec6f& a_q, const cv::Vec6f& b_q);

/// Everything the compositor needs over one working rectangle.
struct CombineInput {
    cv::Rect rect;
    ColorImageF target;      // rect crop, [0,1]
    MaskImage region;        // this component, pre-dilation
    MaskImage dilated;       // this component after dilation
    MaskImage other_masks;   // pixels of other components / unknown target
    std::vector<WarpedProposal> proposals;  // all over `rect`
};

/// Label 0 is the target; label i+1 is proposals[i].
EnergyModel build_energy(const CombineInput& in, const MedianImage& median, const MrfParams& params);

struct Composite {
    ColorImageF color;
    cv::Mat1i depth_source;  // proposal index per pixel, -1 where not from a proposal
    cv::Mat1i source_frame;  // frame id per pixel, -1 otherwise
    MaskImage residual;      // dilated pixels without a label
    cv::Mat1i labels;
};

Composite composite(const LabelField& field, const CombineInput& in);

}  // namespace mvi
