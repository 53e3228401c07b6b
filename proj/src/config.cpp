#include "mvinpaint/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace mvi {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    }
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

struct Entry {
    const char* key;
    std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

#define MVI_DOUBLE(K, F)                                                                         \
    Entry {                                                                                      \
        K, [](PipelineConfig& c, const std::string& k, const std::string& v) { c.F = to_double(k, v); }, \
            [](const PipelineConfig& c) { return fmt(c.F); }                                     \
    }
#define MVI_INT(K, F)                                                                                         \
    Entry {                                                                                                   \
        K, [](PipelineConfig& c, const std::string& k, const std::string& v) { c.F = static_cast<decltype(c.F)>(to_int(k, v)); }, \
            [](const PipelineConfig& c) { return std::to_string(c.F); }                                        \
    }
#define MVI_BOOL(K, F)                                                                                \
    Entry {                                                                                           \
        K, [](PipelineConfig& c, const std::string& k, const std::string& v) { c.F = to_bool(k, v); }, \
            [](const PipelineConfig& c) { return std::string(c.F ? "true" : "false"); }               \
    }

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        {"dataset", [](PipelineConfig& c, const std::string&, const std::string& v) { c.dataset = v; },
         [](const PipelineConfig& c) { return c.dataset.string(); }},
        {"targets",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.targets.clear();
             std::stringstream ss(v);
             std::string item;
             while (std::getline(ss, item, ',')) {
                 item = trim(item);
                 if (!item.empty()) c.targets.push_back(static_cast<FrameId>(to_int(k, item)));
             }
         },
         [](const PipelineConfig& c) {
             std::string s;
             for (size_t i = 0; i < c.targets.size(); ++i) s += (i ? "," : "") + std::to_string(c.targets[i]);
             return s;
         }},
        {"output", [](PipelineConfig& c, const std::string&, const std::string& v) { c.output = v; },
         [](const PipelineConfig& c) { return c.output.string(); }},
        {"feature_cache", [](PipelineConfig& c, const std::string&, const std::string& v) { c.feature_cache = v; },
         [](const PipelineConfig& c) { return c.feature_cache.string(); }},
        MVI_BOOL("debug", debug),
        MVI_BOOL("ply", write_ply),
        MVI_DOUBLE("max_assoc_dt", max_assoc_dt),
        MVI_INT("max_frames", max_frames),
        MVI_INT("seed", seed),
        MVI_INT("workers", workers),
        MVI_INT("features.max_features", detector.max_features),
        MVI_DOUBLE("features.contrast", detector.contrast_threshold),
        MVI_DOUBLE("features.ratio", match_ratio),
        MVI_INT("vocab.k", vocab_k),
        MVI_INT("vocab.depth", vocab_depth),
        MVI_INT("select.n", selection.n),
        MVI_INT("select.m", selection.m),
        MVI_DOUBLE("select.w1", selection.w1),
        MVI_DOUBLE("select.w2", selection.w2),
        MVI_DOUBLE("select.tau_g", selection.tau_rel),
        MVI_DOUBLE("select.max_masked_coverage", selection.max_masked_coverage),
        MVI_DOUBLE("warp.ransac_px", ransac.threshold_px),
        MVI_INT("warp.ransac_iters", ransac.max_iters),
        MVI_INT("warp.min_inliers", ransac.min_inliers),
        MVI_INT("warp.cell_px", grid.cell_px),
        MVI_DOUBLE("warp.sigma_px", grid.sigma_px),
        MVI_DOUBLE("warp.gamma", grid.gamma),
        MVI_DOUBLE("warp.min_support", grid.min_support),
        MVI_DOUBLE("warp.margin", warp_margin),
        MVI_INT("warp.planes", warp_planes),
        MVI_BOOL("warp.gain", warp.apply_gain),
        MVI_DOUBLE("mrf.lambda1", mrf.lambda1),
        MVI_DOUBLE("mrf.lambda2", mrf.lambda2),
        MVI_DOUBLE("mrf.lambda3", mrf.lambda3),
        MVI_INT("mrf.dilation_px", mrf.dilation_px),
        MVI_INT("mrf.ring_px", mrf.ring_px),
        MVI_DOUBLE("poisson.tolerance", poisson.tolerance),
        MVI_INT("poisson.max_iters", poisson.max_iters),
        MVI_DOUBLE("pose.inlier_m", rigid.inlier_m),
        MVI_INT("pose.ransac_iters", rigid.max_iters),
        MVI_INT("pose.max_iters", posegraph.max_iters),
        MVI_DOUBLE("pose.tol", posegraph.tol),
        MVI_DOUBLE("pose.gt_prior_weight", gt_prior_weight),
        MVI_INT("exemplar.radius", exemplar.radius),
        MVI_DOUBLE("exemplar.gradient_weight", exemplar.gradient_weight),
        MVI_INT("exemplar.samples", exemplar.random_samples),
        MVI_INT("exemplar.sweeps", exemplar.refine_sweeps),
        MVI_INT("depth.max_iters", depth.max_iters),
        MVI_INT("depth.stale_limit", depth.stale_limit),
        MVI_DOUBLE("depth.tolerance", depth.tolerance),
        MVI_DOUBLE("depth.edge_threshold", depth.edge_threshold),
        MVI_BOOL("depth.fallback", depth.final_fallback),
    };
    return table;
}

#undef MVI_DOUBLE
#undef MVI_INT
#undef MVI_BOOL

}  // namespace

PipelineConfig::PipelineConfig() {
    detector.max_features = 2000;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
    const std::string k = trim(key), v = trim(value);
    for (const auto& e : entries())
        if (k == e.key) {
            e.set(*this, k, v);
            return;
        }
    throw ConfigError("config: unknown key '" + k + "'");
}

void PipelineConfig::load_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot read config file " + file.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(file.string() + ":" + std::to_string(lineno) + ": expected key = value");
        set(line.substr(0, eq), line.substr(eq + 1));
    }
}

void PipelineConfig::validate() const {
    if (dataset.empty()) throw ConfigError("config: dataset is required");
    if (output.empty()) throw ConfigError("config: output is required");
    if (!(max_assoc_dt > 0)) throw ConfigError("config: max_assoc_dt must be positive");
    if (max_frames < 0) throw ConfigError("config: max_frames must be >= 0");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    if (detector.max_features < 0) throw ConfigError("config: features.max_features must be >= 0");
    if (!(detector.contrast_threshold > 0)) throw ConfigError("config: features.contrast must be positive");
    if (!(match_ratio > 0 && match_ratio <= 1)) throw ConfigError("config: features.ratio must be in (0,1]");
    if (vocab_k < 2 || vocab_depth < 1) throw ConfigError("config: vocab.k >= 2 and vocab.depth >= 1 required");
    selection.validate();
    if (!(ransac.threshold_px > 0) || ransac.max_iters < 1 || ransac.min_inliers < 4)
        throw ConfigError("config: RANSAC needs threshold > 0, iters >= 1, min_inliers >= 4");
    if (grid.cell_px < 1 || !(grid.sigma_px > 0) || !(grid.gamma >= 0 && grid.gamma <= 1) || !(grid.min_support >= 0))
        throw ConfigError("config: warp grid parameters out of range");
    if (!(warp_margin >= 0)) throw ConfigError("config: warp.margin must be >= 0");
    if (warp_planes < 1) throw ConfigError("config: warp.planes must be >= 1");
    mrf.validate();
    if (!(poisson.tolerance > 0) || poisson.max_iters < 1) throw ConfigError("config: Poisson settings out of range");
    if (!(rigid.inlier_m > 0) || rigid.max_iters < 1) throw ConfigError("config: pose RANSAC settings out of range");
    if (posegraph.max_iters < 0 || !(posegraph.tol > 0)) throw ConfigError("config: pose graph settings out of range");
    if (!(gt_prior_weight > 0)) throw ConfigError("config: pose.gt_prior_weight must be positive");
    exemplar.validate();
    depth.validate();
}

std::string PipelineConfig::to_text() const {
    std::string out;
    for (const auto& e : entries()) out += std::string(e.key) + " = " + e.get(*this) + "\n";
    return out;
}

std::vector<std::string> PipelineConfig::keys() {
    std::vector<std::string> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
}

}  // namespace mvi
