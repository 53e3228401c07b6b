#include "mvinpaint/warp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace mvi {

Homography Homography::from(const Eigen::Matrix3d& h) {
    Homography out;
    if (std::abs(h(2, 2)) > 1e-12) {
        out.m = h / h(2, 2);
    } else {
        double n = h.norm();
        out.m = n > 0 ? Eigen::Matrix3d(h / n) : h;
    }
    return out;
}

Eigen::Vector2d Homography::apply(const Eigen::Vector2d& p) const {
    Eigen::Vector3d q = m * Eigen::Vector3d(p.x(), p.y(), 1.0);
    return q.hnormalized();
}

Homography Homography::inverse() const {
    return from(m.inverse());
}

double homography_distance(const Homography& a, const Homography& b) {
    Homography na = Homography::from(a.m), nb = Homography::from(b.m);
    return (na.m - nb.m).norm() / nb.m.norm();
}

namespace {

// Similarity transform moving the centroid to the origin with mean
// distance sqrt(2).
Eigen::Matrix3d hartley(const std::vector<Eigen::Vector2d>& pts) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (const auto& p : pts) c += p;
    c /= static_cast<double>(pts.size());
    double mean = 0;
    for (const auto& p : pts) mean += (p - c).norm();
    mean /= static_cast<double>(pts.size());
    double s = mean > 1e-12 ? std::sqrt(2.0) / mean : 1.0;
    Eigen::Matrix3d t;
    t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
    return t;
}

inline void dlt_rows(const Eigen::Vector2d& a, const Eigen::Vector2d& b, Eigen::Matrix<double, 2, 9>& rows) {
    const double x = a.x(), y = a.y(), u = b.x(), v = b.y();
    rows << -x, -y, -1, 0, 0, 0, u * x, u * y, u, 0, 0, 0, -x, -y, -1, v * x, v * y, v;
}

Eigen::Matrix3d to_matrix(const Eigen::Matrix<double, 9, 1>& h) {
    Eigen::Matrix3d m;
    m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    return m;
}

struct Normalized {
    Eigen::Matrix3d t_from, t_to;
    std::vector<Eigen::Vector2d> from, to;
};

Normalized normalize(const std::vector<Correspondence>& pairs) {
    Normalized n;
    std::vector<Eigen::Vector2d> f, t;
    for (const auto& p : pairs) {
        f.push_back(p.from);
        t.push_back(p.to);
    }
    n.t_from = hartley(f);
    n.t_to = hartley(t);
    for (size_t i = 0; i < pairs.size(); ++i) {
        n.from.push_back((n.t_from * f[i].homogeneous()).hnormalized());
        n.to.push_back((n.t_to * t[i].homogeneous()).hnormalized());
    }
    return n;
}

Homography denormalize(const Normalized& n, const Eigen::Matrix3d& hn) {
    Homography h = Homography::from(n.t_to.inverse() * hn * n.t_from);
    if (!(std::abs(h.m.determinant()) > 1e-12) || !h.m.allFinite())
        throw EstimationError("homography is singular");
    return h;
}

}  // namespace

Homography dlt_homography(const std::vector<Correspondence>& pairs, const std::vector<double>& weights) {
    if (pairs.size() < 4) throw EstimationError("homography needs at least 4 correspondences");
    if (!weights.empty() && weights.size() != pairs.size())
        throw ConfigError("dlt_homography: weight count differs from pair count");
    Normalized n = normalize(pairs);
    Eigen::MatrixXd a(2 * pairs.size(), 9);
    Eigen::Matrix<double, 2, 9> rows;
    for (size_t i = 0; i < pairs.size(); ++i) {
        dlt_rows(n.from[i], n.to[i], rows);
        double w = weights.empty() ? 1.0 : weights[i];
        a.block<2, 9>(2 * i, 0) = w * rows;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv(0) <= 0 || sv(7) / sv(0) < 1e-9) throw EstimationError("degenerate homography configuration");
    Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
    return denormalize(n, to_matrix(h));
}

RansacResult ransac_homography(const std::vector<Correspondence>& pairs, const RansacParams& params) {
    const int n = static_cast<int>(pairs.size());
    if (n < 4) throw EstimationError("RANSAC needs at least 4 matches");
    std::mt19937_64 rng(params.seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    const double thr2 = params.threshold_px * params.threshold_px;

    auto inliers_of = [&](const Homography& h, double& total_err) {
        std::vector<int> in;
        total_err = 0;
        for (int i = 0; i < n; ++i) {
            double e = (h.apply(pairs[i].from) - pairs[i].to).squaredNorm();
            if (std::isfinite(e) && e < thr2) {
                in.push_back(i);
                total_err += e;
            }
        }
        return in;
    };

    std::vector<int> best;
    double best_err = std::numeric_limits<double>::infinity();
    int iters = params.max_iters;
    for (int it = 0; it < iters; ++it) {
        int idx[4];
        for (int k = 0; k < 4; ++k) {
            bool dup;
            do {
                idx[k] = pick(rng);
                dup = false;
                for (int j = 0; j < k; ++j) dup |= idx[j] == idx[k];
            } while (dup);
        }
        std::vector<Correspondence> sample = {pairs[idx[0]], pairs[idx[1]], pairs[idx[2]], pairs[idx[3]]};
        Homography h;
        try {
            h = dlt_homography(sample);
        } catch (const EstimationError&) {
            continue;
        }
        double err;
        auto in = inliers_of(h, err);
        if (in.size() > best.size() || (in.size() == best.size() && err < best_err)) {
            best = std::move(in);
            best_err = err;
            double w = static_cast<double>(best.size()) / n;
            double p_fail = 1.0 - std::pow(w, 4);
            if (p_fail <= 1e-12) {
                iters = std::min(iters, it + 1);
            } else {
                double need = std::log(1.0 - params.confidence) / std::log(p_fail);
                if (need < iters) iters = std::max(it + 1, static_cast<int>(std::ceil(need)));
            }
        }
    }
    if (static_cast<int>(best.size()) < std::max(4, params.min_inliers))
        throw EstimationError("RANSAC found only " + std::to_string(best.size()) + " inliers");

    // Refit on the consensus set until it stops changing.
    RansacResult result;
    std::vector<int> current = best;
    Homography h;
    for (int round = 0; round < 5; ++round) {
        std::vector<Correspondence> in_pairs;
        for (int i : current) in_pairs.push_back(pairs[i]);
        try {
            h = dlt_homography(in_pairs);
        } catch (const EstimationError&) {
            break;
        }
        double err;
        auto next = inliers_of(h, err);
        result.h = h;
        result.inliers = next;
        if (next == current || static_cast<int>(next.size()) < std::max(4, params.min_inliers)) break;
        current = std::move(next);
    }
    if (result.inliers.empty() || static_cast<int>(result.inliers.size()) < std::max(4, params.min_inliers))
        throw EstimationError("RANSAC refit lost consensus");
    return result;
}

MultiRansacResult ransac_homographies(const std::vector<Correspondence>& pairs, const RansacParams& params,
                                      int max_models) {
    MultiRansacResult out;
    std::vector<int> rest(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) rest[i] = static_cast<int>(i);
    for (int k = 0; k < std::max(1, max_models); ++k) {
        if (k > 0 && static_cast<int>(rest.size()) < std::max(4, params.min_inliers)) break;
        std::vector<Correspondence> sub;
        for (int i : rest) sub.push_back(pairs[i]);
        RansacParams rp = params;
        rp.seed = params.seed + 0x9e3779b97f4a7c15ull * static_cast<uint64_t>(k);
        RansacResult r;
        try {
            r = ransac_homography(sub, rp);
        } catch (const EstimationError&) {
            if (k == 0) throw;
            break;
        }
        std::vector<char> taken(rest.size(), 0);
        for (int& i : r.inliers) {
            taken[i] = 1;
            i = rest[i];
        }
        std::vector<int> left;
        for (size_t j = 0; j < rest.size(); ++j)
            if (!taken[j]) left.push_back(rest[j]);
        rest.swap(left);
        out.inliers.insert(out.inliers.end(), r.inliers.begin(), r.inliers.end());
        out.models.push_back(std::move(r));
    }
    std::sort(out.inliers.begin(), out.inliers.end());
    return out;
}

std::vector<Correspondence> source_to_target_pairs(const MatchSet& matches, const FeatureSet& target,
                                                   const FeatureSet& source) {
    std::vector<Correspondence> out;
    out.reserve(matches.pairs.size());
    for (const Match& m : matches.pairs) {
        const Keypoint& t = target.keypoints.at(m.index_a);
        const Keypoint& s = source.keypoints.at(m.index_b);
        out.push_back({{s.x, s.y}, {t.x, t.y}});
    }
    return out;
}

int LocalWarpGrid::cell_index(double x, double y) const {
    int cx = static_cast<int>(std::floor((x - area.x) / cell_px));
    int cy = static_cast<int>(std::floor((y - area.y) / cell_px));
    cx = std::clamp(cx, 0, cols - 1);
    cy = std::clamp(cy, 0, rows - 1);
    return cy * cols + cx;
}

Eigen::Vector2d LocalWarpGrid::cell_center(int cx, int cy) const {
    return {area.x + (cx + 0.5) * cell_px, area.y + (cy + 0.5) * cell_px};
}

Eigen::Vector2d LocalWarpGrid::target_to_source(double x, double y) const {
    return cells_inverse[cell_index(x, y)].apply({x, y});
}

LocalWarpGrid LocalWarpGrid::uniform(const cv::Rect& area, int cell_px, const Homography& h) {
    if (cell_px <= 0 || area.width <= 0 || area.height <= 0) throw ConfigError("warp grid: empty area or cell size");
    LocalWarpGrid g;
    g.area = area;
    g.cell_px = cell_px;
    g.cols = (area.width + cell_px - 1) / cell_px;
    g.rows = (area.height + cell_px - 1) / cell_px;
    g.global = h;
    g.cells.assign(g.cols * g.rows, h);
    g.cells_inverse.assign(g.cols * g.rows, h.inverse());
    g.support.assign(g.cols * g.rows, 0.0);
    g.inherited.assign(g.cols * g.rows, 1);
    return g;
}

LocalWarpGrid fit_local_grid(const std::vector<Correspondence>& pairs, const Homography& global,
                             const cv::Rect& area, const GridParams& params) {
    if (!(params.sigma_px > 0) || !(params.gamma >= 0 && params.gamma <= 1))
        throw ConfigError("warp grid: sigma must be positive and gamma in [0,1]");
    LocalWarpGrid grid = LocalWarpGrid::uniform(area, params.cell_px, global);
    if (pairs.size() < 4) return grid;

    Normalized n = normalize(pairs);
    // Per-pair normal-equation blocks; each cell sums them with its weights.
    std::vector<Eigen::Matrix<double, 9, 9>> blocks(pairs.size());
    Eigen::Matrix<double, 2, 9> rows;
    for (size_t i = 0; i < pairs.size(); ++i) {
        dlt_rows(n.from[i], n.to[i], rows);
        blocks[i] = rows.transpose() * rows;
    }
    const double inv_s2 = 1.0 / (params.sigma_px * params.sigma_px);

    for (int cy = 0; cy < grid.rows; ++cy)
        for (int cx = 0; cx < grid.cols; ++cx) {
            const int idx = cy * grid.cols + cx;
            Eigen::Vector2d c = grid.cell_center(cx, cy);
            Eigen::Matrix<double, 9, 9> ata = Eigen::Matrix<double, 9, 9>::Zero();
            double support = 0;
            for (size_t i = 0; i < pairs.size(); ++i) {
                double g = std::exp(-(pairs[i].to - c).squaredNorm() * inv_s2);
                support += g;
                double w = std::max(g, params.gamma);
                ata += (w * w) * blocks[i];
            }
            grid.support[idx] = support;
            if (support < params.min_support) continue;
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> es(ata);
            const auto& ev = es.eigenvalues();  // ascending
            if (!(ev(8) > 0) || ev(1) / ev(8) < 1e-14) continue;
            try {
                Homography h = denormalize(n, to_matrix(es.eigenvectors().col(0)));
                grid.cells[idx] = h;
                grid.cells_inverse[idx] = h.inverse();
                grid.inherited[idx] = 0;
            } catch (const EstimationError&) {
            }
        }
    return grid;
}

void inherit_nearest_plane(LocalWarpGrid& grid, const std::vector<Correspondence>& pairs,
                           const std::vector<RansacResult>& models) {
    if (models.size() < 2) return;
    constexpr size_t kNearest = 3;
    std::vector<double> d2;
    for (int cy = 0; cy < grid.rows; ++cy)
        for (int cx = 0; cx < grid.cols; ++cx) {
            const int idx = cy * grid.cols + cx;
            if (!grid.inherited[idx]) continue;
            const Eigen::Vector2d c = grid.cell_center(cx, cy);
            size_t best = 0;
            double best_dist = std::numeric_limits<double>::infinity();
            for (size_t k = 0; k < models.size(); ++k) {
                d2.clear();
                for (int i : models[k].inliers) d2.push_back((pairs[i].to - c).squaredNorm());
                if (d2.empty()) continue;
                const size_t n = std::min(kNearest, d2.size());
                std::partial_sort(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(n), d2.end());
                double mean = 0;
                for (size_t j = 0; j < n; ++j) mean += std::sqrt(d2[j]);
                mean /= static_cast<double>(n);
                if (mean < best_dist) {
                    best = k;
                    best_dist = mean;
                }
            }
            grid.cells[idx] = models[best].h;
            grid.cells_inverse[idx] = models[best].h.inverse();
        }
}

WarpedProposal warp_frame(const Frame& source, const LocalWarpGrid& grid, const cv::Rect& rect,
                          const Frame* target, const WarpOptions& options) {
    WarpedProposal p;
    p.source_id = source.id;
    p.rect = rect;
    p.color = ColorImageF::zeros(rect.size());
    p.depth = DepthImage::zeros(rect.size());
    p.source_mask = MaskImage::zeros(rect.size());
    p.validity = MaskImage::zeros(rect.size());
    p.source_xy = cv::Mat2f(rect.size(), cv::Vec2f(-1.f, -1.f));

    const int sw = source.color.cols, sh = source.color.rows;
    const bool has_mask = !source.mask.empty();
    for (int y = 0; y < rect.height; ++y)
        for (int x = 0; x < rect.width; ++x) {
            Eigen::Vector2d s = grid.target_to_source(rect.x + x, rect.y + y);
            if (!s.allFinite() || s.x() < 0 || s.y() < 0 || s.x() > sw - 1 || s.y() > sh - 1) continue;
            int nx = static_cast<int>(std::lround(s.x())), ny = static_cast<int>(std::lround(s.y()));
            p.source_xy(y, x) = cv::Vec2f(static_cast<float>(nx), static_cast<float>(ny));
            p.depth(y, x) = source.depth.empty() ? 0.f : source.depth(ny, nx);

            int x0 = static_cast<int>(std::floor(s.x())), y0 = static_cast<int>(std::floor(s.y()));
            int x1 = std::min(x0 + 1, sw - 1), y1 = std::min(y0 + 1, sh - 1);
            double fx = s.x() - x0, fy = s.y() - y0;
            bool masked = has_mask && (source.mask(ny, nx) || source.mask(y0, x0) || source.mask(y0, x1) ||
                                       source.mask(y1, x0) || source.mask(y1, x1));
            p.source_mask(y, x) = masked ? 255 : 0;
            if (masked) {
                p.depth(y, x) = 0.f;
                continue;
            }
            cv::Vec3f c00 = source.color(y0, x0), c01 = source.color(y0, x1);
            cv::Vec3f c10 = source.color(y1, x0), c11 = source.color(y1, x1);
            cv::Vec3f c = (c00 * (1 - fx) + c01 * fx) * (1 - fy) + (c10 * (1 - fx) + c11 * fx) * fy;
            p.color(y, x) = c / 255.f;
            p.validity(y, x) = 255;
        }

    if (options.apply_gain && target) {
        double st = 0, ss = 0;
        for (int y = 0; y < rect.height; ++y)
            for (int x = 0; x < rect.width; ++x) {
                if (!p.validity(y, x)) continue;
                int tx = rect.x + x, ty = rect.y + y;
                if (!target->mask.empty() && target->mask(ty, tx)) continue;
                cv::Vec3b t = target->color(ty, tx);
                cv::Vec3f s = p.color(y, x);
                for (int c = 0; c < 3; ++c) {
                    st += (t[c] / 255.0) * s[c];
                    ss += double(s[c]) * s[c];
                }
            }
        if (ss > 0) p.gain = std::clamp(st / ss, options.min_gain, options.max_gain);
        if (p.gain != 1.0) {
            for (int y = 0; y < rect.height; ++y)
                for (int x = 0; x < rect.width; ++x) {
                    cv::Vec3f& c = p.color(y, x);
                    for (int k = 0; k < 3; ++k) c[k] = std::min(1.f, static_cast<float>(c[k] * p.gain));
                }
        }
    }
    return p;
}

}  // namespace mvi
