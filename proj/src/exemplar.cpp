#include "mvinpaint/exemplar.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace mvi {

namespace {

inline int reflect(int i, int n) {
    if (n == 1) return 0;
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

inline float gray_at(const ColorImageF& img, int x, int y) {
    const cv::Vec3f& c = img(reflect(y, img.rows), reflect(x, img.cols));
    return (c[0] + c[1] + c[2]) / 3.f;
}

// 3x3 Sobel on the channel mean.
inline void sobel_at(const ColorImageF& img, int x, int y, float& gx, float& gy) {
    float a = gray_at(img, x - 1, y - 1), b = gray_at(img, x, y - 1), c = gray_at(img, x + 1, y - 1);
    float d = gray_at(img, x - 1, y), f = gray_at(img, x + 1, y);
    float g = gray_at(img, x - 1, y + 1), h = gray_at(img, x, y + 1), i = gray_at(img, x + 1, y + 1);
    gx = (c + 2 * f + i) - (a + 2 * d + g);
    gy = (g + 2 * h + i) - (a + 2 * b + c);
}

inline bool inside(const cv::Mat& m, int x, int y) { return x >= 0 && y >= 0 && x < m.cols && y < m.rows; }

uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

void ExemplarParams::validate() const {
    if (radius < 1) throw ConfigError("patch radius must be >= 1");
    if (!(gradient_weight >= 0)) throw ConfigError("gradient weight must be >= 0");
    if (!(min_alpha > 0) || !(max_alpha >= min_alpha)) throw ConfigError("alpha bounds must satisfy 0 < min <= max");
    if (random_samples < 1) throw ConfigError("random_samples must be >= 1");
    if (refine_sweeps < 0) throw ConfigError("refine_sweeps must be >= 0");
}

PatchDomain PatchDomain::build(std::vector<ColorImageF> images, std::vector<MaskImage> usable, int radius) {
    if (images.size() != usable.size()) throw ConfigError("patch domain: image/validity count mismatch");
    PatchDomain d;
    d.radius = radius;
    d.images = std::move(images);
    d.usable = std::move(usable);
    for (size_t k = 0; k < d.images.size(); ++k) {
        const ColorImageF& img = d.images[k];
        const MaskImage& ok = d.usable[k];
        GrayImage gx(img.size()), gy(img.size());
        for (int y = 0; y < img.rows; ++y)
            for (int x = 0; x < img.cols; ++x) sobel_at(img, x, y, gx(y, x), gy(y, x));
        d.gx.push_back(gx);
        d.gy.push_back(gy);

        // Patch-fully-usable test via an integral image of unusable pixels.
        cv::Mat1i bad_int;
        cv::Mat1b bad = (ok == 0) / 255;
        cv::integral(bad, bad_int, CV_32S);
        MaskImage c = MaskImage::zeros(img.size());
        for (int y = radius; y + radius < img.rows; ++y)
            for (int x = radius; x + radius < img.cols; ++x) {
                int x0 = x - radius, y0 = y - radius, x1 = x + radius + 1, y1 = y + radius + 1;
                int n = bad_int(y1, x1) - bad_int(y0, x1) - bad_int(y1, x0) + bad_int(y0, x0);
                if (n == 0) {
                    c(y, x) = 255;
                    d.center_list.push_back({static_cast<int>(k), x, y});
                }
            }
        d.centers.push_back(c);
    }
    return d;
}

bool PatchDomain::searchable(int image, int x, int y) const {
    if (image < 0 || image >= static_cast<int>(centers.size())) return false;
    return inside(centers[image], x, y) && centers[image](y, x) != 0;
}

FillState FillState::create(const ColorImageF& color, const MaskImage& unknown) {
    FillState s;
    s.color = color.clone();
    s.unknown = (unknown != 0);
    s.confidence = GrayImage(color.size(), 1.f);
    s.confidence.setTo(0.f, s.unknown);
    s.src_image = cv::Mat1i(color.size(), -1);
    s.src_xy = cv::Mat2i(color.size(), cv::Vec2i(-1, -1));
    s.gx = GrayImage::zeros(color.size());
    s.gy = GrayImage::zeros(color.size());
    s.grad_valid = MaskImage::zeros(color.size());
    s.refresh_gradients({0, 0, color.cols, color.rows});
    return s;
}

void FillState::refresh_gradients(const cv::Rect& area) {
    cv::Rect r = area & cv::Rect(0, 0, color.cols, color.rows);
    for (int y = r.y; y < r.y + r.height; ++y)
        for (int x = r.x; x < r.x + r.width; ++x) {
            bool ok = true;
            for (int dy = -1; dy <= 1 && ok; ++dy)
                for (int dx = -1; dx <= 1 && ok; ++dx)
                    if (unknown(reflect(y + dy, color.rows), reflect(x + dx, color.cols))) ok = false;
            grad_valid(y, x) = ok ? 255 : 0;
            if (ok) sobel_at(color, x, y, gx(y, x), gy(y, x));
        }
}

double patch_ssd(cv::Point pi, int image, cv::Point pj, const PatchDomain& domain, const FillState& state,
                 const ExemplarParams& params, double* alpha_out) {
    if (!domain.searchable(image, pj.x, pj.y)) return std::numeric_limits<double>::infinity();
    const int r = domain.radius;
    const ColorImageF& src = domain.images[image];
    double si = 0, sj = 0;
    int n = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            int x = pi.x + dx, y = pi.y + dy;
            if (!inside(state.color, x, y) || state.unknown(y, x)) continue;
            const cv::Vec3f& a = state.color(y, x);
            const cv::Vec3f& b = src(pj.y + dy, pj.x + dx);
            si += a.dot(a);
            sj += b.dot(b);
            ++n;
        }
    if (n == 0) return std::numeric_limits<double>::infinity();
    double alpha = sj > 0 ? std::sqrt(si / sj) : 1.0;
    alpha = std::clamp(alpha, params.min_alpha, params.max_alpha);
    if (alpha_out) *alpha_out = alpha;

    const GrayImage& sgx = domain.gx[image];
    const GrayImage& sgy = domain.gy[image];
    double cost = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            int x = pi.x + dx, y = pi.y + dy;
            if (!inside(state.color, x, y) || state.unknown(y, x)) continue;
            const int u = pj.x + dx, v = pj.y + dy;
            cv::Vec3f diff = state.color(y, x) - static_cast<float>(alpha) * src(v, u);
            cost += std::sqrt(double(diff.dot(diff)));
            if (params.gradient_weight > 0 && state.grad_valid(y, x)) {
                double ex = state.gx(y, x) - sgx(v, u), ey = state.gy(y, x) - sgy(v, u);
                cost += params.gradient_weight * std::sqrt(ex * ex + ey * ey);
            }
        }
    return cost / n;
}

namespace {

struct Searcher {
    cv::Point pi;
    const PatchDomain& domain;
    const FillState& state;
    const ExemplarParams& params;
    PatchRef best;

    bool consider(int image, int x, int y) {
        if (!domain.searchable(image, x, y)) return false;
        double alpha = 1.0;
        double c = patch_ssd(pi, image, {x, y}, domain, state, params, &alpha);
        if (c < best.cost) {
            best = {image, x, y, c, alpha};
            return true;
        }
        return false;
    }
};

}  // namespace

PatchRef search_exemplar(cv::Point pi, const PatchDomain& domain, const FillState& state,
                         const ExemplarParams& params, uint64_t seed) {
    if (domain.center_list.empty()) throw SearchError("no searchable patch in the domain");
    Searcher s{pi, domain, state, params, {}};
    std::mt19937_64 rng(seed);
    const int r = domain.radius;

    // Propagation: neighbours that already know where they came from.
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            int x = pi.x + dx, y = pi.y + dy;
            if (!inside(state.src_image, x, y)) continue;
            int img = state.src_image(y, x);
            if (img < 0) continue;
            cv::Vec2i q = state.src_xy(y, x);
            s.consider(img, q[0] - dx, q[1] - dy);
        }

    // Stratified random samples: one searchable center per g x g block of
    // every image, g chosen so the block count is about random_samples.
    const size_t total = domain.center_list.size();
    const int g = std::max(1, static_cast<int>(std::sqrt(double(total) / std::max(1, params.random_samples))));
    std::vector<PatchRef> starts;
    std::vector<cv::Point> block;
    for (int im = 0; im < static_cast<int>(domain.images.size()); ++im) {
        const MaskImage& cm = domain.centers[im];
        for (int by = 0; by < cm.rows; by += g)
            for (int bx = 0; bx < cm.cols; bx += g) {
                block.clear();
                for (int y = by; y < std::min(by + g, cm.rows); ++y)
                    for (int x = bx; x < std::min(bx + g, cm.cols); ++x)
                        if (cm(y, x)) block.emplace_back(x, y);
                if (block.empty()) continue;
                const cv::Point c = block[std::uniform_int_distribution<size_t>(0, block.size() - 1)(rng)];
                double alpha = 1.0;
                double cost = patch_ssd(pi, im, c, domain, state, params, &alpha);
                starts.push_back({im, c.x, c.y, cost, alpha});
                if (cost < s.best.cost) s.best = starts.back();
            }
    }
    constexpr size_t kStarts = 8;
    std::partial_sort(starts.begin(), starts.begin() + std::min(kStarts, starts.size()), starts.end(),
                      [](const PatchRef& a, const PatchRef& b) { return a.cost < b.cost; });
    starts.resize(std::min(kStarts, starts.size()));
    if (s.best.image >= 0) starts.push_back(s.best);

    for (const PatchRef& start : starts) {
        PatchRef local = start;
        auto try_local = [&](int x, int y) {
            if (!domain.searchable(local.image, x, y)) return false;
            double alpha = 1.0;
            double c = patch_ssd(pi, local.image, {x, y}, domain, state, params, &alpha);
            if (c < local.cost) {
                local = {local.image, x, y, c, alpha};
                return true;
            }
            return false;
        };
        const ColorImageF& img = domain.images[start.image];
        // Shrinking random window then hill climbing, repeated while it helps.
        for (int round = 0; round < 4; ++round) {
            const double before = local.cost;
            for (int w = std::max(img.cols, img.rows); w >= 1; w /= 2) {
                std::uniform_int_distribution<int> off(-w, w);
                for (int t = 0; t < 2; ++t) try_local(local.x + off(rng), local.y + off(rng));
            }
            bool moved = true;
            while (moved) {
                moved = false;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                        if ((dx || dy) && try_local(local.x + dx, local.y + dy)) moved = true;
            }
            if (!(local.cost < before)) break;
        }
        if (local.cost < s.best.cost) s.best = local;
    }
    if (s.best.image < 0) throw SearchError("no searchable patch overlaps the query");
    return s.best;
}

PatchRef search_exhaustive(cv::Point pi, const PatchDomain& domain, const FillState& state,
                           const ExemplarParams& params) {
    if (domain.center_list.empty()) throw SearchError("no searchable patch in the domain");
    Searcher s{pi, domain, state, params, {}};
    for (const auto& c : domain.center_list) s.consider(c.image, c.x, c.y);
    if (s.best.image < 0) throw SearchError("no searchable patch overlaps the query");
    return s.best;
}

void diffuse_fill(ColorImageF& image, const MaskImage& holes, const MaskImage& blocked) {
    MaskImage todo = holes != 0;
    auto usable = [&](int x, int y) {
        return inside(image, x, y) && !todo(y, x) && (blocked.empty() || !blocked(y, x));
    };
    std::vector<cv::Point> all;
    for (int y = 0; y < image.rows; ++y)
        for (int x = 0; x < image.cols; ++x)
            if (todo(y, x)) all.push_back({x, y});

    for (;;) {
        std::vector<std::pair<cv::Point, cv::Vec3f>> layer;
        for (int y = 0; y < image.rows; ++y)
            for (int x = 0; x < image.cols; ++x) {
                if (!todo(y, x)) continue;
                cv::Vec3f sum(0, 0, 0);
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                        if ((dx || dy) && usable(x + dx, y + dy)) {
                            sum += image(y + dy, x + dx);
                            ++n;
                        }
                if (n > 0) layer.push_back({{x, y}, sum / static_cast<float>(n)});
            }
        if (layer.empty()) break;
        for (auto& [p, v] : layer) {
            image(p) = v;
            todo(p) = 0;
        }
    }
    // Anything unreachable gets a neutral value.
    for (const auto& p : all)
        if (todo(p)) {
            image(p) = cv::Vec3f(0.5f, 0.5f, 0.5f);
            todo(p) = 0;
        }
    // Relax towards the harmonic interpolant of the known surroundings.
    for (int it = 0; it < 200; ++it) {
        std::vector<cv::Vec3f> next(all.size());
        for (size_t k = 0; k < all.size(); ++k) {
            cv::Vec3f sum(0, 0, 0);
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int x = all[k].x + dx, y = all[k].y + dy;
                    if ((dx || dy) && inside(image, x, y) && (blocked.empty() || !blocked(y, x))) {
                        sum += image(y, x);
                        ++n;
                    }
                }
            next[k] = n ? sum / static_cast<float>(n) : image(all[k]);
        }
        for (size_t k = 0; k < all.size(); ++k) image(all[k]) = next[k];
    }
}

namespace {

// Patch centres on a stride-r lattice whose patches touch the hole.
std::vector<cv::Point> energy_centers(const MaskImage& holes, int r) {
    cv::Mat1i hole_int;
    cv::integral(holes != 0, hole_int, CV_32S);
    std::vector<cv::Point> out;
    const int step = std::max(1, r);
    for (int y = 0; y < holes.rows; y += step)
        for (int x = 0; x < holes.cols; x += step) {
            int x0 = std::max(0, x - r), y0 = std::max(0, y - r);
            int x1 = std::min(holes.cols, x + r + 1), y1 = std::min(holes.rows, y + r + 1);
            int n = hole_int(y1, x1) - hole_int(y0, x1) - hole_int(y1, x0) + hole_int(y0, x0);
            if (n > 0) out.push_back({x, y});
        }
    return out;
}

double center_energy(const std::vector<cv::Point>& centers, const PatchDomain& domain, const FillState& state,
                     const ExemplarParams& params, std::vector<PatchRef>& nn, uint64_t seed) {
    double e = 0;
    for (size_t k = 0; k < centers.size(); ++k) {
        PatchRef hint = k < nn.size() ? nn[k] : PatchRef{};
        PatchRef found = search_exemplar(centers[k], domain, state, params, mix(seed, k));
        if (hint.image >= 0) {
            double alpha = 1.0;
            double c = patch_ssd(centers[k], hint.image, {hint.x, hint.y}, domain, state, params, &alpha);
            if (c <= found.cost) found = {hint.image, hint.x, hint.y, c, alpha};
        }
        if (k < nn.size()) nn[k] = found;
        else nn.push_back(found);
        if (std::isfinite(found.cost)) e += found.cost;
    }
    return e;
}

}  // namespace

ColorFillResult inpaint_color(const ColorImageF& image, const MaskImage& holes, const MaskImage& blocked,
                              const PatchDomain& domain, const ExemplarParams& params) {
    params.validate();
    ColorFillResult res;
    res.color = image.clone();
    res.synthesized = MaskImage::zeros(image.size());
    res.fallback = MaskImage::zeros(image.size());
    res.src_image = cv::Mat1i(image.size(), -1);
    res.src_xy = cv::Mat2i(image.size(), cv::Vec2i(-1, -1));
    MaskImage hole = holes != 0;
    if (!blocked.empty()) hole.setTo(0, blocked);
    if (cv::countNonZero(hole) == 0) return res;

    MaskImage unknown = hole.clone();
    if (!blocked.empty()) unknown.setTo(255, blocked);
    FillState st = FillState::create(image, unknown);
    const int r = domain.radius;
    const int side = 2 * r + 1;
    MaskImage remaining = hole.clone();

    auto patch_confidence = [&](int x, int y) {
        double c = 0;
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                int u = x + dx, v = y + dy;
                if (inside(st.color, u, v) && !st.unknown(v, u)) c += st.confidence(v, u);
            }
        return c / (side * side);
    };
    auto priority = [&](int x, int y) {
        float best_g = 0;
        double iso_x = 0, iso_y = 0;
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                int u = x + dx, v = y + dy;
                if (!inside(st.color, u, v) || st.unknown(v, u) || !st.grad_valid(v, u)) continue;
                {
                    float g = std::hypot(st.gx(v, u), st.gy(v, u));
                    if (g > best_g) {
                        best_g = g;
                        iso_x = -st.gy(v, u);
                        iso_y = st.gx(v, u);
                    }
                }
            }
        // Front normal from the known-indicator gradient.
        auto known = [&](int u, int v) {
            u = reflect(u, st.color.cols);
            v = reflect(v, st.color.rows);
            return st.unknown(v, u) ? 0.0 : 1.0;
        };
        double nx = (known(x + 1, y - 1) + 2 * known(x + 1, y) + known(x + 1, y + 1)) -
                    (known(x - 1, y - 1) + 2 * known(x - 1, y) + known(x - 1, y + 1));
        double ny = (known(x - 1, y + 1) + 2 * known(x, y + 1) + known(x + 1, y + 1)) -
                    (known(x - 1, y - 1) + 2 * known(x, y - 1) + known(x + 1, y - 1));
        double nn = std::hypot(nx, ny);
        double data = nn > 0 ? std::abs(iso_x * nx + iso_y * ny) / nn : 0.0;
        return patch_confidence(x, y) * (data + 1e-3);
    };

    uint64_t query = 0;
    bool search_failed = false;
    while (!search_failed) {
        cv::Point best_p(-1, -1);
        double best_pr = -1;
        for (int y = 0; y < hole.rows; ++y)
            for (int x = 0; x < hole.cols; ++x) {
                if (!remaining(y, x)) continue;
                bool front = false;
                for (int dy = -1; dy <= 1 && !front; ++dy)
                    for (int dx = -1; dx <= 1 && !front; ++dx)
                        if (inside(hole, x + dx, y + dy) && !st.unknown(y + dy, x + dx)) front = true;
                if (!front) continue;
                double pr = priority(x, y);
                if (pr > best_pr) {
                    best_pr = pr;
                    best_p = {x, y};
                }
            }
        if (best_p.x < 0) break;  // nothing reachable from known pixels

        PatchRef ex;
        try {
            ex = search_exemplar(best_p, domain, st, params, mix(params.seed, query++));
        } catch (const SearchError&) {
            search_failed = true;
            break;
        }
        const float conf = static_cast<float>(patch_confidence(best_p.x, best_p.y));
        const ColorImageF& src = domain.images[ex.image];
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                int u = best_p.x + dx, v = best_p.y + dy;
                if (!inside(st.color, u, v) || !remaining(v, u)) continue;
                cv::Vec3f c = static_cast<float>(ex.alpha) * src(ex.y + dy, ex.x + dx);
                for (int k = 0; k < 3; ++k) c[k] = std::clamp(c[k], 0.f, 1.f);
                st.color(v, u) = c;
                st.unknown(v, u) = 0;
                st.confidence(v, u) = conf;
                st.src_image(v, u) = ex.image;
                st.src_xy(v, u) = cv::Vec2i(ex.x + dx, ex.y + dy);
                remaining(v, u) = 0;
                res.synthesized(v, u) = 255;
            }
        st.refresh_gradients({best_p.x - r - 1, best_p.y - r - 1, side + 2, side + 2});
    }

    // Whatever could not be synthesized is diffused.
    if (cv::countNonZero(remaining) > 0) {
        diffuse_fill(st.color, remaining, blocked);
        res.fallback = remaining.clone();
        st.unknown.setTo(0, remaining);
        st.refresh_gradients({0, 0, st.color.cols, st.color.rows});
    }

    // Refinement: re-match lattice patches, re-blend by voting, keep the
    // sweep only if the energy does not rise.
    const std::vector<cv::Point> centers = energy_centers(res.synthesized, r);
    if (!centers.empty() && !domain.center_list.empty()) {
        std::vector<PatchRef> nn;
        double energy = center_energy(centers, domain, st, params, nn, mix(params.seed, 0xE0));
        res.energy_greedy = energy;
        res.energy_trace.push_back(energy);
        for (int sweep = 0; sweep < params.refine_sweeps; ++sweep) {
            FillState next = st;
            cv::Mat3d acc(st.color.size(), cv::Vec3d(0, 0, 0));
            cv::Mat1i count(st.color.size(), 0);
            cv::Mat1i owner_dist(st.color.size(), std::numeric_limits<int>::max());
            for (size_t k = 0; k < centers.size(); ++k) {
                const PatchRef& m = nn[k];
                if (m.image < 0) continue;
                const ColorImageF& src = domain.images[m.image];
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        int u = centers[k].x + dx, v = centers[k].y + dy;
                        if (!inside(st.color, u, v) || !res.synthesized(v, u)) continue;
                        cv::Vec3f c = static_cast<float>(m.alpha) * src(m.y + dy, m.x + dx);
                        acc(v, u) += cv::Vec3d(c[0], c[1], c[2]);
                        ++count(v, u);
                        int d = dx * dx + dy * dy;
                        if (d < owner_dist(v, u)) {
                            owner_dist(v, u) = d;
                            next.src_image(v, u) = m.image;
                            next.src_xy(v, u) = cv::Vec2i(m.x + dx, m.y + dy);
                        }
                    }
            }
            for (int y = 0; y < st.color.rows; ++y)
                for (int x = 0; x < st.color.cols; ++x)
                    if (count(y, x) > 0) {
                        cv::Vec3d v = acc(y, x) / count(y, x);
                        next.color(y, x) = cv::Vec3f(std::clamp<float>(v[0], 0, 1), std::clamp<float>(v[1], 0, 1),
                                                     std::clamp<float>(v[2], 0, 1));
                    }
            next.refresh_gradients({0, 0, st.color.cols, st.color.rows});
            std::vector<PatchRef> nn_next = nn;
            double e = center_energy(centers, domain, next, params, nn_next, mix(params.seed, 0xE1 + sweep));
            if (e > energy) break;
            st = std::move(next);
            nn = std::move(nn_next);
            energy = e;
            res.energy_trace.push_back(energy);
        }
        res.energy_final = energy;
    }

    res.color = st.color;
    res.src_image = st.src_image.clone();
    res.src_xy = st.src_xy.clone();
    res.src_image.setTo(-1, res.fallback);
    res.synthesized_count = cv::countNonZero(res.synthesized);
    res.fallback_count = cv::countNonZero(res.fallback);
    return res;
}

}  // namespace mvi
