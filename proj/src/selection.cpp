#include "mvinpaint/selection.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

namespace mvi {

MaskImage MaskRegion::ring_pixels() const {
    MaskImage ring = mask_pixels == 0;
    return ring;
}

std::vector<MaskRegion> extract_mask_regions(const MaskImage& mask) {
    std::vector<MaskRegion> regions;
    if (mask.empty()) return regions;
    cv::Mat1i labels;
    cv::Mat stats, centroids;
    MaskImage binary = mask != 0;
    int n = cv::connectedComponentsWithStats(binary, labels, stats, centroids, 8, CV_32S);
    // Order components by the raster position of their first pixel.
    std::vector<int> order;
    std::vector<char> seen(n, 0);
    for (int y = 0; y < labels.rows; ++y)
        for (int x = 0; x < labels.cols; ++x) {
            int l = labels(y, x);
            if (l > 0 && !seen[l]) {
                seen[l] = 1;
                order.push_back(l);
            }
        }
    for (int l : order) {
        MaskRegion r;
        r.mask_id = static_cast<int>(regions.size());
        r.x0 = stats.at<int>(l, cv::CC_STAT_LEFT);
        r.y0 = stats.at<int>(l, cv::CC_STAT_TOP);
        r.x1 = r.x0 + stats.at<int>(l, cv::CC_STAT_WIDTH) - 1;
        r.y1 = r.y0 + stats.at<int>(l, cv::CC_STAT_HEIGHT) - 1;
        cv::Mat1i sub = labels(r.rect());
        r.mask_pixels = sub == l;
        regions.push_back(std::move(r));
    }
    return regions;
}

double image_quality(const GrayImage& image, double tau_rel) {
    if (image.empty()) throw ConfigError("image_quality: empty image");
    GrayImage mag = sobel_magnitude(image);
    double max_mag = 0;
    cv::minMaxLoc(mag, nullptr, &max_mag);
    if (max_mag <= 0) return 0.0;
    const double tau = tau_rel * max_mag;
    // Ignore float noise far below any real gradient.
    const double eps = 1e-6 * max_mag;
    int nonzero = 0, large = 0;
    for (int y = 0; y < mag.rows; ++y)
        for (int x = 0; x < mag.cols; ++x) {
            float v = mag(y, x);
            if (v > eps) {
                ++nonzero;
                if (v > tau) ++large;
            }
        }
    return nonzero > 0 ? static_cast<double>(large) / nonzero : 0.0;
}

double frame_distance(const Pose& a, const Pose& b) {
    Pose rel = a.inverse() * b;
    return rel.angle() + rel.translation.norm();
}

std::optional<double> frame_distance(const std::optional<Pose>& a, const std::optional<Pose>& b) {
    if (!a || !b) return std::nullopt;
    return frame_distance(*a, *b);
}

void SelectionParams::validate() const {
    if (m < 1) throw ConfigError("selection: m must be >= 1");
    if (n < m) throw ConfigError("selection: n must be >= m");
    if (!(w1 > 0) || !(w2 > 0)) throw ConfigError("selection: w1 and w2 must be positive");
    if (!(tau_rel > 0 && tau_rel < 1)) throw ConfigError("selection: tau_g must be in (0,1)");
    if (!(max_masked_coverage >= 0 && max_masked_coverage <= 1))
        throw ConfigError("selection: masked coverage threshold must be in [0,1]");
}

std::vector<SuitabilityScore> score_candidates(const std::vector<CandidateFactors>& candidates, double w1,
                                               double w2) {
    std::vector<const CandidateFactors*> solvable;
    for (const auto& c : candidates)
        if (c.distance && std::isfinite(*c.distance)) solvable.push_back(&c);
    std::vector<SuitabilityScore> out;
    if (solvable.empty()) return out;

    auto range = [&](auto get) {
        double lo = get(*solvable.front()), hi = lo;
        for (auto* c : solvable) {
            lo = std::min(lo, get(*c));
            hi = std::max(hi, get(*c));
        }
        return std::pair{lo, hi};
    };
    auto normalize = [](double v, std::pair<double, double> r) {
        return r.second > r.first ? (v - r.first) / (r.second - r.first) : 0.0;
    };
    auto s_range = range([](const CandidateFactors& c) { return c.similarity; });
    auto d_range = range([](const CandidateFactors& c) { return *c.distance; });

    for (auto* c : solvable) {
        SuitabilityScore s;
        s.frame_id = c->frame_id;
        s.s = normalize(c->similarity, s_range);
        s.d = normalize(*c->distance, d_range);
        s.q_ratio = c->q_ratio;
        s.score = (w1 * s.s - w2 * s.d) * s.q_ratio;
        out.push_back(s);
    }
    std::sort(out.begin(), out.end(), [](const SuitabilityScore& a, const SuitabilityScore& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.frame_id < b.frame_id;
    });
    return out;
}

std::optional<double> masked_coverage(const MaskRegion& region, const Frame& target, const Frame& source,
                                      const std::optional<Pose>& source_from_target,
                                      const CameraIntrinsics& intr) {
    const cv::Rect rect = region.rect();
    std::vector<float> ring_depths;
    for (int y = 0; y < rect.height; ++y)
        for (int x = 0; x < rect.width; ++x) {
            if (region.mask_pixels(y, x)) continue;
            float d = target.depth(rect.y + y, rect.x + x);
            if (d > 0) ring_depths.push_back(d);
        }
    double fill_depth = 0;
    if (!ring_depths.empty()) {
        auto mid = ring_depths.begin() + ring_depths.size() / 2;
        std::nth_element(ring_depths.begin(), mid, ring_depths.end());
        fill_depth = *mid;
    }
    const bool use_pose = source_from_target.has_value() && fill_depth > 0;

    int inside = 0, covered = 0;
    for (int y = 0; y < rect.height; ++y)
        for (int x = 0; x < rect.width; ++x) {
            if (!region.mask_pixels(y, x)) continue;
            int su = rect.x + x, sv = rect.y + y;
            if (use_pose) {
                auto pr = project(*source_from_target * unproject_pixel(su, sv, fill_depth, intr), intr);
                if (!pr.valid()) continue;
                su = static_cast<int>(pr.u);
                sv = static_cast<int>(pr.v);
            }
            if (su < 0 || sv < 0 || su >= source.mask.cols || sv >= source.mask.rows) continue;
            ++inside;
            if (source.mask(sv, su)) ++covered;
        }
    if (inside == 0) return std::nullopt;
    return static_cast<double>(covered) / inside;
}

SelectionResult select_sources(const MaskRegion& region, const SelectionContext& ctx,
                               const SelectionParams& params) {
    params.validate();
    if (!ctx.sequence || !ctx.tree) throw ConfigError("select_sources: missing sequence or vocabulary");
    const Sequence& seq = *ctx.sequence;
    const Frame& target = seq.frame(ctx.target);

    // Query features from the unmasked part of the region's rectangle.
    MaskImage query_region = MaskImage::zeros(target.size());
    query_region(region.rect()).setTo(255, region.ring_pixels());
    query_region.setTo(0, target.mask);
    FeatureSet query = detect_describe(to_gray(target.color), query_region, ctx.detector);

    std::vector<std::pair<FrameId, double>> ranked;
    for (auto& [id, s] : ctx.tree->rank(query))
        if (id != ctx.target && seq.find(id)) ranked.push_back({id, s});
    if (static_cast<int>(ranked.size()) > params.n) ranked.resize(params.n);

    auto quality_of = [&](FrameId id) {
        if (ctx.quality && id >= 0 && id < static_cast<int>(ctx.quality->size())) return (*ctx.quality)[id];
        return image_quality(to_gray(seq.frame(id).color), params.tau_rel);
    };
    double q_target = quality_of(ctx.target);
    if (q_target <= 0 && ctx.warnings)
        ctx.warnings->push_back("target frame " + std::to_string(ctx.target) +
                                " has zero image quality; quality ratio taken as 1");

    SelectionResult result;
    std::vector<CandidateFactors> factors;
    for (auto& [id, s] : ranked) {
        const Frame& source = seq.frame(id);
        std::optional<Pose> target_from_source = ctx.relative_pose ? ctx.relative_pose(id) : std::nullopt;
        std::optional<Pose> source_from_target;
        if (target_from_source) source_from_target = target_from_source->inverse();
        auto coverage = masked_coverage(region, target, source, source_from_target, seq.intrinsics);
        if (!coverage || *coverage > params.max_masked_coverage) {
            result.excluded_masked.push_back(id);
            continue;
        }
        CandidateFactors c;
        c.frame_id = id;
        c.similarity = s;
        if (target_from_source) c.distance = frame_distance(Pose::identity(), *target_from_source);
        c.q_ratio = q_target > 0 ? quality_of(id) / q_target : 1.0;
        factors.push_back(c);
    }

    result.scores = score_candidates(factors, params.w1, params.w2);
    if (result.scores.empty())
        throw SelectionError(region.mask_id, "no eligible source frame for mask " + std::to_string(region.mask_id));
    for (const auto& s : result.scores) {
        if (static_cast<int>(result.sources.size()) >= params.m) break;
        result.sources.push_back(s.frame_id);
    }
    return result;
}

}  // namespace mvi
