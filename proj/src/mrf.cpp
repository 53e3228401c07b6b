#include "mvinpaint/mrf.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <queue>

namespace mvi {

namespace {
constexpr double kFlowEps = 1e-12;
}

MaxFlow::MaxFlow(int nodes) : head_(nodes + 2, -1) {}

void MaxFlow::push_arc(int u, int v, double cap) {
    arcs_.push_back({v, head_[u], cap});
    head_[u] = static_cast<int>(arcs_.size()) - 1;
}

void MaxFlow::add_edge(int u, int v, double cap, double rev_cap) {
    push_arc(u, v, cap);
    push_arc(v, u, rev_cap);
}

void MaxFlow::add_terminal(int u, double cap_source, double cap_sink) {
    if (cap_source > 0) add_edge(source(), u, cap_source);
    if (cap_sink > 0) add_edge(u, sink(), cap_sink);
}

bool MaxFlow::bfs() {
    level_.assign(head_.size(), -1);
    std::queue<int> q;
    level_[source()] = 0;
    q.push(source());
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int e = head_[u]; e >= 0; e = arcs_[e].next) {
            const Arc& a = arcs_[e];
            if (a.cap > kFlowEps && level_[a.to] < 0) {
                level_[a.to] = level_[u] + 1;
                q.push(a.to);
            }
        }
    }
    return level_[sink()] >= 0;
}

double MaxFlow::dfs(int u, double pushed) {
    if (u == sink()) return pushed;
    for (int& e = iter_[u]; e >= 0; e = arcs_[e].next) {
        Arc& a = arcs_[e];
        if (a.cap <= kFlowEps || level_[a.to] != level_[u] + 1) continue;
        double got = dfs(a.to, std::min(pushed, a.cap));
        if (got > 0) {
            a.cap -= got;
            arcs_[e ^ 1].cap += got;
            return got;
        }
    }
    return 0;
}

double MaxFlow::solve() {
    double flow = 0;
    while (bfs()) {
        iter_ = head_;
        while (double f = dfs(source(), std::numeric_limits<double>::infinity())) flow += f;
    }
    // Residual reachability from the source defines the cut.
    reach_.assign(head_.size(), 0);
    std::queue<int> q;
    reach_[source()] = 1;
    q.push(source());
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int e = head_[u]; e >= 0; e = arcs_[e].next)
            if (arcs_[e].cap > kFlowEps && !reach_[arcs_[e].to]) {
                reach_[arcs_[e].to] = 1;
                q.push(arcs_[e].to);
            }
    }
    return flow;
}

BinaryEnergy::BinaryEnergy(int vars) : vars_(vars), u0_(vars, 0.0), u1_(vars, 0.0) {}

void BinaryEnergy::add_unary(int p, double e0, double e1) {
    u0_[p] += e0;
    u1_[p] += e1;
}

void BinaryEnergy::add_pair(int p, int q, double a, double b, double c, double d) {
    double w = b + c - a - d;
    if (w < -1e-9 * (1 + std::abs(a) + std::abs(b) + std::abs(c) + std::abs(d)))
        throw SolverError(0, "non-submodular pairwise term");
    constant_ += a;
    u1_[p] += c - a;
    u1_[q] += d - c;
    if (w > 0) pairs_.push_back({p, q, w});
}

std::vector<int> BinaryEnergy::minimize() {
    MaxFlow g(vars_);
    for (int p = 0; p < vars_; ++p) {
        double diff = u1_[p] - u0_[p];
        g.add_terminal(p, std::max(0.0, diff), std::max(0.0, -diff));
    }
    for (const auto& pr : pairs_) g.add_edge(pr.p, pr.q, pr.w);
    g.solve();
    std::vector<int> x(vars_);
    for (int p = 0; p < vars_; ++p) x[p] = g.source_side(p) ? 0 : 1;
    return x;
}

EnergyModel::EnergyModel(int w, int h, int num_labels, int dim)
    : width(w), height(h), labels(num_labels), feature_dim(dim),
      data(static_cast<size_t>(w) * h * num_labels, 0.0),
      features(static_cast<size_t>(w) * h * num_labels * dim, 0.f) {}

double EnergyModel::smooth(int p, int q, int a, int b) const {
    if (a == b || feature_dim == 0) return 0.0;
    auto dist = [&](int pix) {
        const float* fa = feature(pix, a);
        const float* fb = feature(pix, b);
        double s = 0;
        for (int k = 0; k < feature_dim; ++k) {
            double d = double(fa[k]) - fb[k];
            s += d * d;
        }
        return std::sqrt(s);
    };
    return dist(p) + dist(q);
}

double evaluate_energy(const EnergyModel& m, const std::vector<int>& labels) {
    double e = 0;
    for (int p = 0; p < m.pixels(); ++p)
        if (labels[p] >= 0) e += m.cost(p, labels[p]);
    double s = 0;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            int p = y * m.width + x;
            if (labels[p] < 0) continue;
            if (x + 1 < m.width && labels[p + 1] >= 0) s += m.smooth(p, p + 1, labels[p], labels[p + 1]);
            if (y + 1 < m.height && labels[p + m.width] >= 0)
                s += m.smooth(p, p + m.width, labels[p], labels[p + m.width]);
        }
    return e + m.smooth_weight * s;
}

namespace {

// One expansion move: every pixel either keeps its label or takes alpha.
std::vector<int> expand(const EnergyModel& m, const std::vector<int>& labels, int alpha) {
    const int n = m.pixels();
    std::vector<int> var(n, -1);
    int vars = 0;
    for (int p = 0; p < n; ++p)
        if (labels[p] >= 0 && labels[p] != alpha && std::isfinite(m.cost(p, alpha))) var[p] = vars++;
    if (vars == 0) return labels;

    BinaryEnergy be(vars);
    for (int p = 0; p < n; ++p)
        if (var[p] >= 0) be.add_unary(var[p], m.cost(p, labels[p]), m.cost(p, alpha));

    const double lam = m.smooth_weight;
    auto edge = [&](int p, int q) {
        if (labels[p] < 0 || labels[q] < 0) return;
        const int vp = var[p], vq = var[q];
        if (vp < 0 && vq < 0) return;
        const int lp = labels[p], lq = labels[q];
        if (vp >= 0 && vq >= 0) {
            be.add_pair(vp, vq, lam * m.smooth(p, q, lp, lq), lam * m.smooth(p, q, lp, alpha),
                        lam * m.smooth(p, q, alpha, lq), 0.0);
        } else if (vp >= 0) {
            be.add_unary(vp, lam * m.smooth(p, q, lp, lq), lam * m.smooth(p, q, alpha, lq));
        } else {
            be.add_unary(vq, lam * m.smooth(p, q, lp, lq), lam * m.smooth(p, q, lp, alpha));
        }
    };
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            int p = y * m.width + x;
            if (x + 1 < m.width) edge(p, p + 1);
            if (y + 1 < m.height) edge(p, p + m.width);
        }

    std::vector<int> x = be.minimize();
    std::vector<int> out = labels;
    for (int p = 0; p < n; ++p)
        if (var[p] >= 0 && x[var[p]] == 1) out[p] = alpha;
    return out;
}

}  // namespace

LabelField solve_mrf(const EnergyModel& m, const MrfOptions& options) {
    if (m.labels < 1) throw ConfigError("MRF needs at least one label");
    LabelField f;
    f.width = m.width;
    f.height = m.height;
    f.labels.assign(m.pixels(), -1);
    for (int p = 0; p < m.pixels(); ++p) {
        double best = kInfCost;
        for (int l = 0; l < m.labels; ++l)
            if (m.cost(p, l) < best) {
                best = m.cost(p, l);
                f.labels[p] = l;
            }
        if (f.labels[p] < 0) ++f.residual_holes;
    }
    f.energy = evaluate_energy(m, f.labels);
    f.trace.push_back(f.energy);
    if (m.labels == 1) return f;

    if (m.labels == 2) {
        // Start from label 0 wherever allowed; one expansion on label 1 is
        // then the full binary problem and hence exact.
        std::vector<int> start = f.labels;
        for (int p = 0; p < m.pixels(); ++p)
            if (start[p] >= 0 && std::isfinite(m.cost(p, 0))) start[p] = 0;
        std::vector<int> best = expand(m, start, 1);
        double e = evaluate_energy(m, best);
        if (e <= f.energy) {
            f.labels = std::move(best);
            f.energy = e;
            f.trace.push_back(e);
        }
        return f;
    }

    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        bool improved = false;
        for (int alpha = 0; alpha < m.labels; ++alpha) {
            std::vector<int> next = expand(m, f.labels, alpha);
            double e = evaluate_energy(m, next);
            if (e < f.energy - 1e-12 * (1.0 + std::abs(f.energy))) {
                f.labels = std::move(next);
                f.energy = e;
                f.trace.push_back(e);
                improved = true;
            }
        }
        if (!improved) break;
    }
    return f;
}

void MrfParams::validate() const {
    if (!(lambda1 >= 0) || !(lambda2 >= 0) || !(lambda3 >= 0)) throw ConfigError("MRF weights must be >= 0");
    if (dilation_px < 0) throw ConfigError("dilation radius must be >= 0");
    if (ring_px < 1) throw ConfigError("MRF ring width must be >= 1");
}

MedianImage median_image(const std::vector<WarpedProposal>& proposals, const ColorImageF& target,
                         const MaskImage& target_known) {
    if (proposals.empty()) throw ConfigError("median image needs at least one proposal");
    const size_t n = proposals.size();
    MedianImage m;
    m.color = ColorImageF::zeros(target.size());
    m.empty = MaskImage::zeros(target.size());
    m.mean_ssd.assign(n, 0.0);
    m.overlap.assign(n, 0);

    for (size_t i = 0; i < n; ++i) {
        double ssd = 0;
        int count = 0;
        for (int y = 0; y < target.rows; ++y)
            for (int x = 0; x < target.cols; ++x) {
                if (!target_known(y, x) || !proposals[i].validity(y, x)) continue;
                cv::Vec3f d = proposals[i].color(y, x) - target(y, x);
                ssd += d.dot(d);
                ++count;
            }
        m.overlap[i] = count;
        m.mean_ssd[i] = count > 0 ? ssd / count : -1.0;
    }
    // Proposals with no overlap are treated as the least accurate.
    double worst = 0;
    for (double v : m.mean_ssd) worst = std::max(worst, v);
    for (double& v : m.mean_ssd)
        if (v < 0) v = worst > 0 ? worst : 1.0;

    m.weights.assign(n, 1.0 / n);
    if (n > 1) {
        double total = 0;
        for (double v : m.mean_ssd) total += v;
        if (total > 0) {
            double sum = 0;
            for (size_t i = 0; i < n; ++i) sum += m.weights[i] = 1.0 - m.mean_ssd[i] / total;
            if (sum > 0)
                for (double& w : m.weights) w /= sum;
            else
                m.weights.assign(n, 1.0 / n);
        }
    } else {
        m.weights[0] = 1.0;
    }

    for (int y = 0; y < target.rows; ++y)
        for (int x = 0; x < target.cols; ++x) {
            cv::Vec3d acc(0, 0, 0), plain(0, 0, 0);
            double wsum = 0;
            int valid = 0;
            for (size_t i = 0; i < n; ++i) {
                if (!proposals[i].validity(y, x)) continue;
                cv::Vec3f c = proposals[i].color(y, x);
                acc += m.weights[i] * cv::Vec3d(c[0], c[1], c[2]);
                plain += cv::Vec3d(c[0], c[1], c[2]);
                wsum += m.weights[i];
                ++valid;
            }
            if (valid == 0) {
                m.empty(y, x) = 255;
                continue;
            }
            cv::Vec3d v = wsum > 0 ? acc / wsum : plain / valid;
            m.color(y, x) = cv::Vec3f(float(v[0]), float(v[1]), float(v[2]));
        }
    return m;
}

double data_cost(const cv::Vec3f& value, bool usable, const cv::Vec3f& reference, double baseline,
                 double lambda1, double lambda2) {
    if (!usable) return kInfCost;
    return lambda1 * cv::norm(value - reference) + lambda2 * (std::exp(baseline) - 1.0);
}

cv::Mat sobel_features(const ColorImageF& image) {
    cv::Mat gx, gy;
    cv::Sobel(image, gx, CV_32F, 1, 0, 3, 1.0, 0.0, cv::BORDER_REFLECT_101);
    cv::Sobel(image, gy, CV_32F, 0, 1, 3, 1.0, 0.0, cv::BORDER_REFLECT_101);
    cv::Mat_<cv::Vec6f> out(image.size());
    for (int y = 0; y < image.rows; ++y)
        for (int x = 0; x < image.cols; ++x) {
            cv::Vec3f a = gx.at<cv::Vec3f>(y, x), b = gy.at<cv::Vec3f>(y, x);
            out(y, x) = cv::Vec6f(a[0], b[0], a[1], b[1], a[2], b[2]);
        }
    return out;
}

double smooth_cost(const cv::Vec6f& a_p, const cv::Vec6f& b_p, const cv::Vec6f& a_q, const cv::Vec6f& b_q) {
    return cv::norm(a_p - b_p) + cv::norm(a_q - b_q);
}

EnergyModel build_energy(const CombineInput& in, const MedianImage& median, const MrfParams& params) {
    params.validate();
    const int w = in.rect.width, h = in.rect.height;
    const int labels = static_cast<int>(in.proposals.size()) + 1;
    EnergyModel m(w, h, labels, 6);
    m.smooth_weight = params.lambda3;

    std::vector<cv::Mat_<cv::Vec6f>> grads;
    grads.push_back(sobel_features(in.target));
    for (const auto& p : in.proposals) grads.push_back(sobel_features(p.color));

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int p = y * w + x;
            for (int l = 0; l < labels; ++l) {
                const cv::Vec6f& g = grads[l](y, x);
                std::copy(g.val, g.val + 6, m.feature(p, l));
            }
            const bool dilated = in.dilated(y, x) != 0;
            if (!dilated && !in.other_masks.empty() && in.other_masks(y, x)) continue;  // don't-care pixel
            m.cost(p, 0) = dilated ? kInfCost : 0.0;
            const bool inside = in.region(y, x) != 0;
            const cv::Vec3f ref = inside ? median.color(y, x) : in.target(y, x);
            for (int l = 1; l < labels; ++l) {
                const WarpedProposal& pr = in.proposals[l - 1];
                m.cost(p, l) = data_cost(pr.color(y, x), pr.validity(y, x) != 0, ref, pr.baseline, params.lambda1,
                                         params.lambda2);
            }
        }
    return m;
}

Composite composite(const LabelField& field, const CombineInput& in) {
    Composite c;
    c.color = in.target.clone();
    c.depth_source = cv::Mat1i(in.rect.size(), -1);
    c.source_frame = cv::Mat1i(in.rect.size(), -1);
    c.residual = MaskImage::zeros(in.rect.size());
    c.labels = cv::Mat1i(in.rect.size(), -1);
    for (int y = 0; y < in.rect.height; ++y)
        for (int x = 0; x < in.rect.width; ++x) {
            int l = field.labels[y * in.rect.width + x];
            c.labels(y, x) = l;
            if (!in.dilated(y, x)) continue;
            if (l <= 0) {
                c.residual(y, x) = 255;
                c.color(y, x) = cv::Vec3f(0, 0, 0);
                continue;
            }
            c.color(y, x) = in.proposals[l - 1].color(y, x);
            c.depth_source(y, x) = l - 1;
            c.source_frame(y, x) = in.proposals[l - 1].source_id;
        }
    return c;
}

}  // namespace mvi
