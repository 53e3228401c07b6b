#include "mvinpaint/depth_fill.hpp"

#include <algorithm>
#include <cmath>

namespace mvi {

MaskImage color_edges(const ColorImageF& color, double threshold) {
    GrayImage gray = to_gray(color);
    GrayImage gx, gy;
    sobel(gray, gx, gy);
    GrayImage mag(gray.size());
    for (int y = 0; y < gray.rows; ++y)
        for (int x = 0; x < gray.cols; ++x) mag(y, x) = std::hypot(gx(y, x), gy(y, x));

    MaskImage edges = MaskImage::zeros(gray.size());
    auto at = [&](int x, int y) -> float {
        if (x < 0 || y < 0 || x >= mag.cols || y >= mag.rows) return 0.f;
        return mag(y, x);
    };
    for (int y = 0; y < gray.rows; ++y)
        for (int x = 0; x < gray.cols; ++x) {
            const float m = mag(y, x);
            if (!(m > threshold)) continue;
            double a = std::atan2(gy(y, x), gx(y, x)) * 180.0 / CV_PI;
            if (a < 0) a += 180.0;
            int dx, dy;
            if (a < 22.5 || a >= 157.5) dx = 1, dy = 0;
            else if (a < 67.5) dx = 1, dy = 1;
            else if (a < 112.5) dx = 0, dy = 1;
            else dx = -1, dy = 1;
            // Strict on one side, non-strict on the other, so a plateau of
            // two equal maxima keeps exactly one pixel.
            if (m > at(x - dx, y - dy) && m >= at(x + dx, y + dy)) edges(y, x) = 255;
        }
    return edges;
}

PixelClassMap classify(const MaskImage& holes, const MaskImage& edges, const MaskImage& blocked) {
    PixelClassMap m;
    m.cls = cv::Mat1b(holes.size(), static_cast<uint8_t>(PixelClass::Known));
    m.edge_bit = edges.empty() ? MaskImage::zeros(holes.size()) : MaskImage(edges != 0);
    m.stale = cv::Mat1i::zeros(holes.size());
    for (int y = 0; y < holes.rows; ++y)
        for (int x = 0; x < holes.cols; ++x) {
            if (!blocked.empty() && blocked(y, x)) m.cls(y, x) = static_cast<uint8_t>(PixelClass::Hole);
            else if (holes(y, x))
                m.cls(y, x) = static_cast<uint8_t>(m.edge_bit(y, x) ? PixelClass::Edge : PixelClass::Smooth);
        }
    return m;
}

uint8_t EdgePatternTable::rotate(uint8_t p, int steps) {
    steps = ((steps % 8) + 8) % 8;
    return static_cast<uint8_t>((p << steps) | (p >> (8 - steps)));
}

uint8_t EdgePatternTable::mirror(uint8_t p) {
    // Reflection across the horizontal axis maps ring index k to (8 - k) mod 8.
    uint8_t out = 0;
    for (int k = 0; k < 8; ++k)
        if (p & (1 << k)) out |= static_cast<uint8_t>(1 << ((8 - k) % 8));
    return out;
}

EdgePatternTable::EdgePatternTable() {
    for (int p = 1; p < 256; ++p) {
        if (p == 255) continue;
        // Cyclic runs of set bits, starting after a clear bit.
        int start = 0;
        while (p & (1 << start)) ++start;
        std::vector<std::vector<int>> runs;
        for (int i = 1; i <= 8; ++i) {
            int k = (start + i) % 8;
            if (p & (1 << k)) {
                int prev = (k + 7) % 8;
                if (!(p & (1 << prev)) || runs.empty()) runs.push_back({});
                runs.back().push_back(k);
            }
        }
        bool ok = !runs.empty() && runs.size() <= 2;
        for (const auto& r : runs) ok = ok && r.size() <= 2;
        if (ok && runs.size() == 2) {
            for (int a : runs[0])
                for (int b : runs[1]) {
                    int d = std::abs(a - b);
                    d = std::min(d, 8 - d);
                    if (d < 3) ok = false;
                }
        }
        admissible_[p] = ok;
    }
}

std::vector<uint8_t> EdgePatternTable::patterns() const {
    std::vector<uint8_t> out;
    for (int p = 0; p < 256; ++p)
        if (admissible_[p]) out.push_back(static_cast<uint8_t>(p));
    return out;
}

void DepthFillParams::validate() const {
    if (max_iters < 0) throw ConfigError("depth fill: max_iters must be >= 0");
    if (stale_limit < 1) throw ConfigError("depth fill: stale_limit must be >= 1");
    if (!(tolerance > 0)) throw ConfigError("depth fill: tolerance must be positive");
    if (!(edge_threshold >= 0)) throw ConfigError("depth fill: edge threshold must be >= 0");
}

namespace {

inline bool in_bounds(const cv::Mat& m, int x, int y) { return x >= 0 && y >= 0 && x < m.cols && y < m.rows; }

// Class used by the indicator: known pixels by their color-edge bit.
inline PixelClass effective(const PixelClassMap& map, int x, int y) {
    PixelClass c = map.at(x, y);
    if (c == PixelClass::Known) return map.edge_bit(y, x) ? PixelClass::Edge : PixelClass::Smooth;
    return c;
}

}  // namespace

bool credible(int x, int y, const PixelClassMap& map, const cv::Mat1b& available, const EdgePatternTable& table) {
    const PixelClass c = map.at(x, y);
    if (c != PixelClass::Smooth && c != PixelClass::Edge) return false;
    int count = 0;
    uint8_t pattern = 0;
    for (int k = 0; k < 8; ++k) {
        int u = x + kRing[k].x, v = y + kRing[k].y;
        if (!in_bounds(available, u, v) || !available(v, u)) continue;
        if (effective(map, u, v) != c) continue;
        ++count;
        pattern |= static_cast<uint8_t>(1 << k);
    }
    if (c == PixelClass::Smooth) return count >= 4;
    return table.admits(pattern);
}

DepthFillResult propagate(const DepthImage& depth, PixelClassMap map, const EdgePatternTable& table,
                          const DepthFillParams& params) {
    params.validate();
    DepthFillResult res;
    res.depth = depth.clone();
    res.fallback_mask = MaskImage::zeros(depth.size());
    const int w = depth.cols, h = depth.rows;

    cv::Mat1b available(depth.size(), 0);
    std::vector<cv::Point> holes;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            PixelClass c = map.at(x, y);
            if (c == PixelClass::Known) available(y, x) = depth(y, x) > 0 ? 1 : 0;
            else if (c == PixelClass::Smooth || c == PixelClass::Edge) {
                holes.push_back({x, y});
                res.depth(y, x) = 0.f;
            }
        }
    if (holes.empty()) return res;

    std::vector<char> filled(holes.size(), 0);
    std::vector<float> next(holes.size(), 0.f);
    for (int it = 0; it < params.max_iters; ++it) {
        double max_change = 0;
        int new_fills = 0;
        std::vector<char> fill_now(holes.size(), 0);
        for (size_t i = 0; i < holes.size(); ++i) {
            const int x = holes[i].x, y = holes[i].y;
            next[i] = res.depth(y, x);
            const bool was = filled[i] != 0;
            if (!was && !credible(x, y, map, available, table)) {
                if (map.at(x, y) == PixelClass::Edge) {
                    bool any = false;
                    for (const auto& d : kRing)
                        if (in_bounds(available, x + d.x, y + d.y) && available(y + d.y, x + d.x)) any = true;
                    if (any) ++map.stale(y, x);
                }
                continue;
            }
            const PixelClass c = map.at(x, y);
            double sum = 0;
            int n = 0;
            for (const auto& d : kRing) {
                int u = x + d.x, v = y + d.y;
                if (!in_bounds(available, u, v) || !available(v, u) || effective(map, u, v) != c) continue;
                sum += res.depth(v, u);
                ++n;
            }
            if (n == 0) continue;
            next[i] = static_cast<float>(sum / n);
            if (!was) {
                fill_now[i] = 1;
                ++new_fills;
            } else {
                max_change = std::max(max_change, std::abs(double(next[i]) - res.depth(y, x)));
            }
        }
        for (size_t i = 0; i < holes.size(); ++i) {
            res.depth(holes[i].y, holes[i].x) = next[i];
            if (fill_now[i]) {
                filled[i] = 1;
                available(holes[i].y, holes[i].x) = 1;
            }
        }
        // Edge pixels that waited too long are treated as smooth.
        int demoted = 0;
        for (size_t i = 0; i < holes.size(); ++i) {
            const int x = holes[i].x, y = holes[i].y;
            if (!filled[i] && map.at(x, y) == PixelClass::Edge && map.stale(y, x) >= params.stale_limit) {
                map.cls(y, x) = static_cast<uint8_t>(PixelClass::Smooth);
                map.edge_bit(y, x) = 0;
                ++demoted;
            }
        }
        res.demoted += demoted;
        res.iterations = it + 1;
        if (new_fills == 0 && demoted == 0 && max_change <= params.tolerance) break;
    }

    std::vector<cv::Point> pending;
    for (size_t i = 0; i < holes.size(); ++i) {
        if (filled[i]) ++res.filled;
        else pending.push_back(holes[i]);
    }
    res.untouched = static_cast<int>(pending.size());
    if (!params.final_fallback || pending.empty()) {
        res.residual = res.untouched;
        return res;
    }

    // Unrestricted diffusion for whatever the class rules could not reach.
    std::vector<char> done(pending.size(), 0);
    for (;;) {
        std::vector<std::pair<size_t, float>> layer;
        for (size_t i = 0; i < pending.size(); ++i) {
            if (done[i]) continue;
            double sum = 0;
            int n = 0;
            for (const auto& d : kRing) {
                int u = pending[i].x + d.x, v = pending[i].y + d.y;
                if (in_bounds(available, u, v) && available(v, u)) {
                    sum += res.depth(v, u);
                    ++n;
                }
            }
            if (n > 0) layer.push_back({i, static_cast<float>(sum / n)});
        }
        if (layer.empty()) break;
        for (auto& [i, v] : layer) {
            res.depth(pending[i].y, pending[i].x) = v;
            available(pending[i].y, pending[i].x) = 1;
            done[i] = 1;
            res.fallback_mask(pending[i].y, pending[i].x) = 255;
            ++res.fallback;
        }
    }
    for (int it = 0; it < params.max_iters; ++it) {
        double change = 0;
        std::vector<float> upd(pending.size());
        for (size_t i = 0; i < pending.size(); ++i) {
            upd[i] = res.depth(pending[i].y, pending[i].x);
            if (!done[i]) continue;
            double sum = 0;
            int n = 0;
            for (const auto& d : kRing) {
                int u = pending[i].x + d.x, v = pending[i].y + d.y;
                if (in_bounds(available, u, v) && available(v, u)) {
                    sum += res.depth(v, u);
                    ++n;
                }
            }
            upd[i] = static_cast<float>(sum / n);
            change = std::max(change, std::abs(double(upd[i]) - res.depth(pending[i].y, pending[i].x)));
        }
        for (size_t i = 0; i < pending.size(); ++i) res.depth(pending[i].y, pending[i].x) = upd[i];
        if (change <= params.tolerance) break;
    }
    res.residual = res.untouched - res.fallback;
    return res;
}

}  // namespace mvi
