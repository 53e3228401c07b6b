#include "mvinpaint/features.hpp"

#include <Eigen/Dense>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

namespace mvi {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kBorder = 5;
constexpr int kOrientationBins = 36;
constexpr int kDescWidth = 4;
constexpr int kDescBins = 8;
constexpr double kDescScale = 3.0;
constexpr float kDescClip = 0.2f;

struct Octave {
    std::vector<GrayImage> gauss;
    std::vector<GrayImage> dog;
};

struct Pyramid {
    std::vector<Octave> octaves;
    std::vector<double> layer_sigma;  // within-octave sigma of each gauss layer
};

Pyramid build_pyramid(const GrayImage& image, const DetectorParams& p) {
    Pyramid pyr;
    const int s = p.scales_per_octave;
    const int layers = s + 3;
    pyr.layer_sigma.resize(layers);
    std::vector<double> incr(layers);
    pyr.layer_sigma[0] = p.base_sigma;
    const double k = std::pow(2.0, 1.0 / s);
    for (int i = 1; i < layers; ++i) {
        pyr.layer_sigma[i] = p.base_sigma * std::pow(k, i);
        double prev = p.base_sigma * std::pow(k, i - 1);
        incr[i] = std::sqrt(pyr.layer_sigma[i] * pyr.layer_sigma[i] - prev * prev);
    }

    GrayImage base;
    double init = std::sqrt(std::max(0.01, p.base_sigma * p.base_sigma - p.input_sigma * p.input_sigma));
    cv::GaussianBlur(image, base, cv::Size(), init, init, cv::BORDER_REFLECT_101);

    while (std::min(base.rows, base.cols) >= p.min_octave_size) {
        Octave oct;
        oct.gauss.push_back(base);
        for (int i = 1; i < layers; ++i) {
            GrayImage next;
            cv::GaussianBlur(oct.gauss.back(), next, cv::Size(), incr[i], incr[i], cv::BORDER_REFLECT_101);
            oct.gauss.push_back(next);
        }
        for (int i = 0; i + 1 < layers; ++i) oct.dog.push_back(oct.gauss[i + 1] - oct.gauss[i]);
        // Next octave: every other pixel of the layer with twice the base sigma.
        const GrayImage& src = oct.gauss[s];
        GrayImage half((src.rows + 1) / 2, (src.cols + 1) / 2);
        for (int y = 0; y < half.rows; ++y)
            for (int x = 0; x < half.cols; ++x) half(y, x) = src(2 * y, 2 * x);
        pyr.octaves.push_back(std::move(oct));
        base = half;
    }
    return pyr;
}

bool is_extremum(const Octave& oct, int layer, int y, int x) {
    float v = oct.dog[layer](y, x);
    bool is_max = true, is_min = true;
    for (int dl = -1; dl <= 1; ++dl) {
        const GrayImage& img = oct.dog[layer + dl];
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dl == 0 && dy == 0 && dx == 0) continue;
                float n = img(y + dy, x + dx);
                if (n >= v) is_max = false;
                if (n <= v) is_min = false;
            }
        if (!is_max && !is_min) return false;
    }
    return is_max || is_min;
}

struct Refined {
    int layer, y, x;
    double off_layer, off_y, off_x;
    double value;
};

// Quadratic interpolation of the DoG extremum in (x, y, layer).
std::optional<Refined> refine(const Octave& oct, int layer, int y, int x, const DetectorParams& p) {
    const int s = p.scales_per_octave;
    const int rows = oct.dog[0].rows, cols = oct.dog[0].cols;
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
    Eigen::Vector3d grad;
    for (int iter = 0; iter < 5; ++iter) {
        const GrayImage& prev = oct.dog[layer - 1];
        const GrayImage& cur = oct.dog[layer];
        const GrayImage& next = oct.dog[layer + 1];
        grad << 0.5 * (cur(y, x + 1) - cur(y, x - 1)), 0.5 * (cur(y + 1, x) - cur(y - 1, x)),
            0.5 * (next(y, x) - prev(y, x));
        double v2 = 2.0 * cur(y, x);
        double dxx = cur(y, x + 1) + cur(y, x - 1) - v2;
        double dyy = cur(y + 1, x) + cur(y - 1, x) - v2;
        double dss = next(y, x) + prev(y, x) - v2;
        double dxy = 0.25 * (cur(y + 1, x + 1) - cur(y + 1, x - 1) - cur(y - 1, x + 1) + cur(y - 1, x - 1));
        double dxs = 0.25 * (next(y, x + 1) - next(y, x - 1) - prev(y, x + 1) + prev(y, x - 1));
        double dys = 0.25 * (next(y + 1, x) - next(y - 1, x) - prev(y + 1, x) + prev(y - 1, x));
        Eigen::Matrix3d h;
        h << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
        Eigen::FullPivLU<Eigen::Matrix3d> lu(h);
        if (!lu.isInvertible()) return std::nullopt;
        offset = -lu.solve(grad);
        if (std::abs(offset.x()) < 0.5 && std::abs(offset.y()) < 0.5 && std::abs(offset.z()) < 0.5) {
            double value = cur(y, x) + 0.5 * grad.dot(offset);
            if (std::abs(value) * s < p.contrast_threshold) return std::nullopt;
            double tr = dxx + dyy;
            double det = dxx * dyy - dxy * dxy;
            double r = p.edge_ratio;
            if (det <= 0 || tr * tr * r >= (r + 1) * (r + 1) * det) return std::nullopt;
            return Refined{layer, y, x, offset.z(), offset.y(), offset.x(), value};
        }
        x += static_cast<int>(std::lround(offset.x()));
        y += static_cast<int>(std::lround(offset.y()));
        layer += static_cast<int>(std::lround(offset.z()));
        if (layer < 1 || layer > s || x < kBorder || x >= cols - kBorder || y < kBorder || y >= rows - kBorder)
            return std::nullopt;
    }
    return std::nullopt;
}

// Gradient magnitude/orientation by central differences; false at the border.
inline bool gradient_at(const GrayImage& img, int y, int x, float& mag, float& ori) {
    if (x <= 0 || y <= 0 || x >= img.cols - 1 || y >= img.rows - 1) return false;
    float dx = img(y, x + 1) - img(y, x - 1);
    float dy = img(y + 1, x) - img(y - 1, x);
    mag = std::sqrt(dx * dx + dy * dy);
    ori = std::atan2(dy, dx);
    return true;
}

std::vector<float> orientations(const GrayImage& img, int y, int x, double sigma_oct) {
    std::array<double, kOrientationBins> hist{};
    const int radius = static_cast<int>(std::lround(3.0 * 1.5 * sigma_oct));
    const double w_sigma = 1.5 * sigma_oct;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            float mag, ori;
            if (!gradient_at(img, y + dy, x + dx, mag, ori)) continue;
            double w = std::exp(-(dx * dx + dy * dy) / (2.0 * w_sigma * w_sigma));
            double a = ori < 0 ? ori + kTwoPi : ori;
            int bin = static_cast<int>(std::floor(a / kTwoPi * kOrientationBins)) % kOrientationBins;
            hist[bin] += w * mag;
        }
    std::array<double, kOrientationBins> smooth{};
    for (int i = 0; i < kOrientationBins; ++i) {
        auto at = [&](int j) { return hist[(j + kOrientationBins) % kOrientationBins]; };
        smooth[i] = (at(i - 2) + at(i + 2)) / 16.0 + (at(i - 1) + at(i + 1)) * 4.0 / 16.0 + at(i) * 6.0 / 16.0;
    }
    double peak = *std::max_element(smooth.begin(), smooth.end());
    std::vector<float> out;
    if (peak <= 0) return out;
    for (int i = 0; i < kOrientationBins; ++i) {
        double l = smooth[(i + kOrientationBins - 1) % kOrientationBins];
        double r = smooth[(i + 1) % kOrientationBins];
        double c = smooth[i];
        if (c > l && c > r && c >= 0.8 * peak) {
            double bin = i + 0.5 * (l - r) / (l - 2 * c + r);
            double angle = (bin + 0.5) / kOrientationBins * kTwoPi;
            angle = std::fmod(angle + kTwoPi, kTwoPi);
            out.push_back(static_cast<float>(angle));
        }
    }
    return out;
}

Descriptor compute_descriptor(const GrayImage& img, double x, double y, double sigma_oct, double orientation) {
    const double cos_t = std::cos(orientation), sin_t = std::sin(orientation);
    const double bin_width = kDescScale * sigma_oct;
    const int radius = static_cast<int>(std::lround(bin_width * std::sqrt(2.0) * (kDescWidth + 1) * 0.5));
    std::array<double, (kDescWidth + 2) * (kDescWidth + 2) * (kDescBins + 2)> hist{};
    auto idx = [](int r, int c, int o) { return (r * (kDescWidth + 2) + c) * (kDescBins + 2) + o; };
    const int cx = static_cast<int>(std::lround(x)), cy = static_cast<int>(std::lround(y));
    const double exp_scale = -1.0 / (0.5 * kDescWidth * kDescWidth);

    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            // Rotate sample offset into the keypoint frame, in bin units.
            double rx = (cos_t * dx + sin_t * dy) / bin_width;
            double ry = (-sin_t * dx + cos_t * dy) / bin_width;
            double rbin = ry + kDescWidth / 2.0 - 0.5;
            double cbin = rx + kDescWidth / 2.0 - 0.5;
            if (rbin <= -1 || rbin >= kDescWidth || cbin <= -1 || cbin >= kDescWidth) continue;
            float mag, ori;
            if (!gradient_at(img, cy + dy, cx + dx, mag, ori)) continue;
            double o = ori - orientation;
            o = std::fmod(o + 2 * kTwoPi, kTwoPi);
            double obin = o / kTwoPi * kDescBins;
            double w = std::exp((rx * rx + ry * ry) * exp_scale) * mag;

            int r0 = static_cast<int>(std::floor(rbin));
            int c0 = static_cast<int>(std::floor(cbin));
            int o0 = static_cast<int>(std::floor(obin));
            double fr = rbin - r0, fc = cbin - c0, fo = obin - o0;
            for (int ir = 0; ir <= 1; ++ir) {
                double wr = w * (ir ? fr : 1 - fr);
                for (int ic = 0; ic <= 1; ++ic) {
                    double wc = wr * (ic ? fc : 1 - fc);
                    for (int io = 0; io <= 1; ++io) {
                        double wo = wc * (io ? fo : 1 - fo);
                        hist[idx(r0 + 1 + ir, c0 + 1 + ic, (o0 + io) % kDescBins)] += wo;
                    }
                }
            }
        }

    Descriptor desc{};
    int k = 0;
    for (int r = 1; r <= kDescWidth; ++r)
        for (int c = 1; c <= kDescWidth; ++c)
            for (int o = 0; o < kDescBins; ++o) desc[k++] = static_cast<float>(hist[idx(r, c, o)]);

    auto normalize = [&desc]() {
        double n = 0;
        for (float v : desc) n += double(v) * v;
        n = std::sqrt(n);
        if (n <= 0) return false;
        for (float& v : desc) v = static_cast<float>(v / n);
        return true;
    };
    if (!normalize()) {
        // Flat patch: any unit vector is as good as another.
        desc.fill(0.f);
        desc[0] = 1.f;
        return desc;
    }
    for (float& v : desc) v = std::min(v, kDescClip);
    normalize();
    return desc;
}

struct Location {
    int octave;
    int layer;
    double sigma_oct;
};

Location locate(const Pyramid& pyr, double scale, const DetectorParams& p) {
    double rel = std::log2(std::max(scale, 1e-6) / p.base_sigma);
    int octave = std::clamp(static_cast<int>(std::floor(rel + 1e-9)), 0, static_cast<int>(pyr.octaves.size()) - 1);
    int layer = std::clamp(static_cast<int>(std::lround((rel - octave) * p.scales_per_octave)), 0,
                           p.scales_per_octave + 2);
    double sigma_oct = scale / std::ldexp(1.0, octave);
    return {octave, layer, sigma_oct};
}

}  // namespace

uint64_t DetectorParams::fingerprint() const {
    // FNV-1a over the parameter values.
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, size_t n) {
        const auto* b = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    mix(&scales_per_octave, sizeof scales_per_octave);
    mix(&base_sigma, sizeof base_sigma);
    mix(&input_sigma, sizeof input_sigma);
    mix(&contrast_threshold, sizeof contrast_threshold);
    mix(&edge_ratio, sizeof edge_ratio);
    mix(&min_octave_size, sizeof min_octave_size);
    mix(&max_features, sizeof max_features);
    return h;
}

FeatureSet detect_describe(const GrayImage& image, const MaskImage& region, const DetectorParams& params) {
    FeatureSet out;
    if (image.empty()) return out;
    if (!region.empty() && region.size() != image.size())
        throw ConfigError("detect_describe: region size differs from image size");
    Pyramid pyr = build_pyramid(image, params);
    const int s = params.scales_per_octave;

    struct Candidate {
        Keypoint kp;
        int octave;
        int layer;
        double sigma_oct;
        double ox, oy;  // octave coordinates
    };
    std::vector<Candidate> candidates;
    const float pre_threshold = static_cast<float>(0.5 * params.contrast_threshold / s);

    for (size_t o = 0; o < pyr.octaves.size(); ++o) {
        const Octave& oct = pyr.octaves[o];
        const double step = std::ldexp(1.0, static_cast<int>(o));
        const int rows = oct.dog[0].rows, cols = oct.dog[0].cols;
        for (int layer = 1; layer <= s; ++layer)
            for (int y = kBorder; y < rows - kBorder; ++y)
                for (int x = kBorder; x < cols - kBorder; ++x) {
                    if (std::abs(oct.dog[layer](y, x)) < pre_threshold) continue;
                    if (!is_extremum(oct, layer, y, x)) continue;
                    auto r = refine(oct, layer, y, x, params);
                    if (!r) continue;
                    double ox = r->x + r->off_x, oy = r->y + r->off_y;
                    double ix = ox * step, iy = oy * step;
                    int px = static_cast<int>(std::lround(ix)), py = static_cast<int>(std::lround(iy));
                    if (px < 0 || py < 0 || px >= image.cols || py >= image.rows) continue;
                    if (!region.empty() && region(py, px) == 0) continue;
                    double sigma_oct = params.base_sigma * std::pow(2.0, (r->layer + r->off_layer) / s);
                    Candidate c;
                    c.kp.x = static_cast<float>(ix);
                    c.kp.y = static_cast<float>(iy);
                    c.kp.scale = static_cast<float>(sigma_oct * step);
                    c.kp.response = static_cast<float>(std::abs(r->value));
                    c.octave = static_cast<int>(o);
                    c.layer = r->layer;
                    c.sigma_oct = sigma_oct;
                    c.ox = ox;
                    c.oy = oy;
                    candidates.push_back(c);
                }
    }

    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.kp.response != b.kp.response) return a.kp.response > b.kp.response;
        if (a.kp.y != b.kp.y) return a.kp.y < b.kp.y;
        return a.kp.x < b.kp.x;
    });
    if (params.max_features > 0 && static_cast<int>(candidates.size()) > params.max_features)
        candidates.resize(params.max_features);

    for (const Candidate& c : candidates) {
        const GrayImage& g = pyr.octaves[c.octave].gauss[c.layer];
        int iy = static_cast<int>(std::lround(c.oy)), ix = static_cast<int>(std::lround(c.ox));
        for (float angle : orientations(g, iy, ix, c.sigma_oct)) {
            Keypoint kp = c.kp;
            kp.orientation = angle;
            out.keypoints.push_back(kp);
            out.descriptors.push_back(compute_descriptor(g, c.ox, c.oy, c.sigma_oct, angle));
        }
    }
    // Extra orientations can push the count past the cap.
    if (params.max_features > 0 && static_cast<int>(out.size()) > params.max_features) {
        out.keypoints.resize(params.max_features);
        out.descriptors.resize(params.max_features);
    }
    return out;
}

std::vector<Descriptor> describe(const GrayImage& image, const std::vector<Keypoint>& keypoints,
                                 const DetectorParams& params) {
    std::vector<Descriptor> out;
    if (keypoints.empty()) return out;
    Pyramid pyr = build_pyramid(image, params);
    out.reserve(keypoints.size());
    for (const Keypoint& kp : keypoints) {
        Location loc = locate(pyr, kp.scale, params);
        double step = std::ldexp(1.0, loc.octave);
        const GrayImage& g = pyr.octaves[loc.octave].gauss[loc.layer];
        out.push_back(compute_descriptor(g, kp.x / step, kp.y / step, loc.sigma_oct, kp.orientation));
    }
    return out;
}

float descriptor_distance(const Descriptor& a, const Descriptor& b) {
    float sum = 0.f;
    for (int i = 0; i < kDescriptorSize; ++i) {
        float d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

namespace {

struct Nearest {
    int best = -1;
    float d1 = std::numeric_limits<float>::infinity();
    float d2 = std::numeric_limits<float>::infinity();
};

std::vector<Nearest> nearest_two(const FeatureSet& from, const FeatureSet& to) {
    std::vector<Nearest> out(from.size());
    for (size_t i = 0; i < from.size(); ++i) {
        Nearest& n = out[i];
        for (size_t j = 0; j < to.size(); ++j) {
            float d = descriptor_distance(from.descriptors[i], to.descriptors[j]);
            if (d < n.d1) {
                n.d2 = n.d1;
                n.d1 = d;
                n.best = static_cast<int>(j);
            } else if (d < n.d2) {
                n.d2 = d;
            }
        }
    }
    return out;
}

bool passes_ratio(const Nearest& n, double ratio) {
    if (n.best < 0) return false;
    if (!std::isfinite(n.d2)) return true;
    return n.d1 < ratio * n.d2;
}

}  // namespace

MatchSet match(const FeatureSet& a, const FeatureSet& b, double ratio) {
    if (!(ratio > 0 && ratio <= 1)) throw ConfigError("match: ratio must be in (0,1]");
    MatchSet out;
    out.frame_a = a.frame_id;
    out.frame_b = b.frame_id;
    auto ab = nearest_two(a, b);
    auto ba = nearest_two(b, a);
    for (size_t i = 0; i < ab.size(); ++i) {
        const Nearest& n = ab[i];
        if (!passes_ratio(n, ratio)) continue;
        const Nearest& back = ba[n.best];
        if (back.best != static_cast<int>(i) || !passes_ratio(back, ratio)) continue;
        out.pairs.push_back({static_cast<int>(i), n.best, n.d1});
    }
    return out;
}

namespace {

constexpr char kFeatureMagic[4] = {'M', 'V', 'I', 'F'};
constexpr uint32_t kFeatureVersion = 1;

}  // namespace

void save_features(const std::filesystem::path& file, const FeatureSet& features, uint64_t fingerprint) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw InputError("cannot write feature cache: " + file.string());
    os.write(kFeatureMagic, 4);
    os.write(reinterpret_cast<const char*>(&kFeatureVersion), sizeof kFeatureVersion);
    os.write(reinterpret_cast<const char*>(&fingerprint), sizeof fingerprint);
    int32_t frame = features.frame_id;
    uint64_t n = features.size();
    os.write(reinterpret_cast<const char*>(&frame), sizeof frame);
    os.write(reinterpret_cast<const char*>(&n), sizeof n);
    for (size_t i = 0; i < n; ++i) {
        os.write(reinterpret_cast<const char*>(&features.keypoints[i]), sizeof(Keypoint));
        os.write(reinterpret_cast<const char*>(features.descriptors[i].data()), sizeof(Descriptor));
    }
    if (!os) throw InputError("error writing feature cache: " + file.string());
}

std::optional<FeatureSet> load_features(const std::filesystem::path& file, uint64_t fingerprint) {
    std::ifstream is(file, std::ios::binary);
    if (!is) return std::nullopt;
    char magic[4];
    uint32_t version = 0;
    uint64_t fp = 0, n = 0;
    int32_t frame = 0;
    is.read(magic, 4);
    is.read(reinterpret_cast<char*>(&version), sizeof version);
    is.read(reinterpret_cast<char*>(&fp), sizeof fp);
    is.read(reinterpret_cast<char*>(&frame), sizeof frame);
    is.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!is || std::memcmp(magic, kFeatureMagic, 4) != 0 || version != kFeatureVersion || fp != fingerprint)
        return std::nullopt;
    if (n > (1u << 24)) return std::nullopt;
    FeatureSet out;
    out.frame_id = frame;
    out.keypoints.resize(n);
    out.descriptors.resize(n);
    for (size_t i = 0; i < n; ++i) {
        is.read(reinterpret_cast<char*>(&out.keypoints[i]), sizeof(Keypoint));
        is.read(reinterpret_cast<char*>(out.descriptors[i].data()), sizeof(Descriptor));
    }
    if (!is) return std::nullopt;
    return out;
}

}  // namespace mvi
