#include "mvinpaint/pipeline.hpp"

#include "mvinpaint/artifact.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <atomic>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace mvi {

namespace {

enum Stage { kSelect = 0, kWarp, kCombine, kColor, kDepth };

uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

uint64_t seed_for(uint64_t base, FrameId target, int region, uint64_t salt) {
    return mix(mix(mix(base, static_cast<uint64_t>(target)), static_cast<uint64_t>(region)), salt);
}

double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json pose_json(const Pose& p) {
    return json::array({p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z(), p.translation.x(),
                        p.translation.y(), p.translation.z()});
}

Pose pose_from(const json& j) {
    Eigen::Quaterniond q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
    return Pose(q, Eigen::Vector3d(j[4].get<double>(), j[5].get<double>(), j[6].get<double>()));
}

json rect_json(const cv::Rect& r) { return json::array({r.x, r.y, r.width, r.height}); }
cv::Rect rect_from(const json& j) { return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()}; }

// Everything shared by the regions of a run.
struct Context {
    const PipelineConfig& cfg;
    Sequence seq;
    std::vector<FeatureSet> features;
    std::optional<VocabTree> tree;
    std::vector<double> quality;
    std::mutex memo_mu;
    std::map<std::pair<FrameId, FrameId>, std::optional<Pose>> visual_memo;
    std::mutex write_mu;

    explicit Context(const PipelineConfig& c) : cfg(c) {
        LoadOptions lo;
        lo.max_assoc_dt = cfg.max_assoc_dt;
        lo.max_frames = cfg.max_frames;
        seq = load_sequence(cfg.dataset, lo);
        if (seq.frames.empty()) throw InputError("dataset has no associated frames: " + cfg.dataset.string());
    }

    void prepare_features() {
        if (!features.empty()) return;
        const uint64_t fp = cfg.detector.fingerprint();
        if (!cfg.feature_cache.empty()) fs::create_directories(cfg.feature_cache);
        features.resize(seq.frames.size());
        quality.resize(seq.frames.size());
        for (size_t i = 0; i < seq.frames.size(); ++i) {
            const Frame& f = seq.frames[i];
            const GrayImage gray = to_gray(f.color);
            quality[i] = image_quality(gray, cfg.selection.tau_rel);
            fs::path cache;
            if (!cfg.feature_cache.empty()) {
                cache = cfg.feature_cache / (f.timestamp_text + ".mvf");
                if (auto hit = load_features(cache, fp)) {
                    features[i] = std::move(*hit);
                    features[i].frame_id = f.id;
                    continue;
                }
            }
            MaskImage unmasked = f.mask == 0;
            features[i] = detect_describe(gray, unmasked, cfg.detector);
            features[i].frame_id = f.id;
            if (!cache.empty()) save_features(cache, features[i], fp);
        }
        tree = VocabTree::build(features, cfg.vocab_k, cfg.vocab_depth, cfg.seed);
    }

    std::optional<Pose> gt(FrameId a, FrameId b) const {
        const Frame& fa = seq.frame(a);
        const Frame& fb = seq.frame(b);
        if (!fa.pose || !fb.pose) return std::nullopt;
        return fa.pose->inverse() * *fb.pose;
    }

    // a_from_b from matched keypoints with depth.
    std::optional<Pose> visual(FrameId a, FrameId b) {
        {
            std::lock_guard<std::mutex> lock(memo_mu);
            auto it = visual_memo.find({a, b});
            if (it != visual_memo.end()) return it->second;
        }
        const FeatureSet& fa = features.at(a);
        const FeatureSet& fb = features.at(b);
        RigidRansacParams rp = cfg.rigid;
        rp.seed = seed_for(cfg.seed, a, b, 7);
        std::optional<Pose> out;
        if (!fa.empty() && !fb.empty()) {
            auto est = estimate_relative_pose(seq.frame(a), fa, seq.frame(b), fb, match(fa, fb, cfg.match_ratio),
                                              seq.intrinsics, rp);
            if (est) out = est->a_from_b;
        }
        std::lock_guard<std::mutex> lock(memo_mu);
        visual_memo[{a, b}] = out;
        return out;
    }

    std::optional<Pose> relative(FrameId a, FrameId b) {
        if (auto g = gt(a, b)) return g;
        return visual(a, b);
    }
};

struct RegionState {
    MaskRegion region;
    cv::Rect work;
    MaskImage component, dilated, other;  // over work

    std::vector<FrameId> sources;
    std::vector<std::optional<Pose>> source_pose;  // target_from_source
    std::vector<WarpedProposal> proposals;

    ColorImageF color;
    cv::Mat1i labels, depth_source, source_frame;
    MaskImage residual;
    DepthImage depth;
    MaskImage synthesized, fallback;

    RegionReport report;
    int done = -1;  // last completed stage
};

std::vector<RegionState> make_regions(const Frame& target, const PipelineConfig& cfg) {
    std::vector<RegionState> out;
    const cv::Rect full(0, 0, target.color.cols, target.color.rows);
    const int r = cfg.mrf.dilation_px;
    const cv::Mat kernel = cv::getStructuringElement(cv::MORPH_ELLIPSE, cv::Size(2 * r + 1, 2 * r + 1));
    for (auto& region : extract_mask_regions(target.mask)) {
        RegionState rs;
        rs.region = region;
        MaskImage comp_full = MaskImage::zeros(target.mask.size());
        comp_full(region.rect()).setTo(255, region.mask_pixels);
        MaskImage dil_full;
        cv::dilate(comp_full, dil_full, kernel);
        MaskImage other_full = target.mask != 0;
        other_full.setTo(0, comp_full);
        dil_full.setTo(0, other_full);
        rs.work = working_rect(region.rect(), cv::boundingRect(dil_full), cfg.warp_margin, cfg.mrf.ring_px,
                               target.color.size()) & full;
        rs.component = comp_full(rs.work).clone();
        rs.dilated = dil_full(rs.work).clone();
        rs.other = other_full(rs.work).clone();
        rs.report.mask_id = region.mask_id;
        rs.report.rect = region.rect();
        rs.report.work = rs.work;
        rs.report.area = region.area();
        out.push_back(std::move(rs));
    }
    return out;
}

int count_and(const MaskImage& a, const MaskImage& b) {
    MaskImage m;
    cv::bitwise_and(a != 0, b != 0, m);
    return cv::countNonZero(m);
}

// ---- stages -----------------------------------------------------------

void stage_select(Context& ctx, const Frame& target, RegionState& rs, std::vector<std::string>& warnings) {
    SelectionContext sc;
    sc.sequence = &ctx.seq;
    sc.target = target.id;
    sc.tree = &*ctx.tree;
    sc.quality = &ctx.quality;
    sc.detector = ctx.cfg.detector;
    sc.warnings = &warnings;
    sc.relative_pose = [&](FrameId source) { return ctx.relative(target.id, source); };
    try {
        SelectionResult sel = select_sources(rs.region, sc, ctx.cfg.selection);
        rs.sources = sel.sources;
        for (const auto& s : sel.scores)
            if (std::find(sel.sources.begin(), sel.sources.end(), s.frame_id) != sel.sources.end())
                rs.report.scores.push_back(s.score);
        rs.report.excluded_masked = sel.excluded_masked;
    } catch (const SelectionError& e) {
        rs.report.status = "degraded";
        warnings.push_back(std::string(e.what()) + "; filling from the target alone");
    }
    rs.report.sources = rs.sources;
    rs.source_pose.clear();
    for (FrameId id : rs.sources) rs.source_pose.push_back(ctx.relative(target.id, id));
}

void stage_warp(Context& ctx, const Frame& target, RegionState& rs, std::vector<std::string>& warnings) {
    const auto& cfg = ctx.cfg;
    const FeatureSet& ft = ctx.features.at(target.id);
    rs.proposals.clear();
    std::vector<FrameId> kept;
    std::vector<std::optional<Pose>> kept_pose;
    const int pad = static_cast<int>(std::ceil(cfg.grid.sigma_px));
    const cv::Rect padded(rs.work.x - pad, rs.work.y - pad, rs.work.width + 2 * pad, rs.work.height + 2 * pad);
    for (size_t k = 0; k < rs.sources.size(); ++k) {
        const FrameId id = rs.sources[k];
        const Frame& src = ctx.seq.frame(id);
        const FeatureSet& fsrc = ctx.features.at(id);
        auto pairs = source_to_target_pairs(match(ft, fsrc, cfg.match_ratio), ft, fsrc);
        RansacParams rp = cfg.ransac;
        rp.seed = seed_for(cfg.seed, target.id, rs.region.mask_id, 100 + id);
        std::vector<Correspondence> near;
        for (const auto& c : pairs)
            if (padded.contains(cv::Point(static_cast<int>(std::floor(c.to.x())), static_cast<int>(std::floor(c.to.y())))))
                near.push_back(c);
        // Planes are sought around the sub-image first, over the frame if that fails.
        MultiRansacResult rr;
        const std::vector<Correspondence>* used = &near;
        try {
            if (static_cast<int>(near.size()) < rp.min_inliers) throw EstimationError("too few matches near the region");
            rr = ransac_homographies(near, rp, cfg.warp_planes);
        } catch (const EstimationError&) {
            used = &pairs;
            try {
                rr = ransac_homographies(pairs, rp, cfg.warp_planes);
            } catch (const EstimationError& e) {
                warnings.push_back("source " + std::to_string(id) + " dropped: " + e.what());
                continue;
            }
        }
        std::vector<Correspondence> local;
        for (int i : rr.inliers) local.push_back((*used)[i]);
        LocalWarpGrid grid = fit_local_grid(local, rr.models.front().h, rs.work, cfg.grid);
        inherit_nearest_plane(grid, *used, rr.models);
        WarpedProposal p = warp_frame(src, grid, rs.work, &target, cfg.warp);
        p.source_id = id;
        p.baseline = rs.source_pose[k] ? rs.source_pose[k]->translation.norm() : 0.0;
        if (cv::countNonZero(p.validity) == 0) {
            warnings.push_back("source " + std::to_string(id) + " dropped: no valid pixel in the working area");
            continue;
        }
        rs.proposals.push_back(std::move(p));
        kept.push_back(id);
        kept_pose.push_back(rs.source_pose[k]);
    }
    rs.sources = kept;
    rs.source_pose = kept_pose;
    rs.report.proposals = static_cast<int>(rs.proposals.size());
}

CombineInput combine_input(const Frame& target, const RegionState& rs) {
    CombineInput in;
    in.rect = rs.work;
    in.target = to_float(ColorImage(target.color(rs.work))).clone();
    in.region = rs.component;
    in.dilated = rs.dilated;
    in.other_masks = rs.other;
    in.proposals = rs.proposals;
    return in;
}

void stage_combine(Context& ctx, const Frame& target, RegionState& rs, std::vector<std::string>& warnings) {
    const auto& cfg = ctx.cfg;
    CombineInput in = combine_input(target, rs);
    MedianImage med;
    if (in.proposals.empty()) {
        med.color = in.target.clone();
    } else {
        MaskImage known = target.mask(rs.work) == 0;
        med = median_image(in.proposals, in.target, known);
    }
    EnergyModel model = build_energy(in, med, cfg.mrf);
    LabelField field = solve_mrf(model);
    Composite comp = composite(field, in);
    rs.report.mrf_energy_initial = field.trace.empty() ? field.energy : field.trace.front();
    rs.report.mrf_energy_final = field.energy;
    rs.report.mrf_moves = field.trace.empty() ? 0 : static_cast<int>(field.trace.size()) - 1;
    rs.report.residual_holes = cv::countNonZero(comp.residual);

    rs.color = comp.color;
    if (!in.proposals.empty()) {
        try {
            rs.color = poisson_blend(comp.color, comp, in, cfg.poisson, &rs.report.poisson_iterations);
        } catch (const SolverError& e) {
            rs.report.poisson_iterations = e.iterations();
            warnings.push_back(std::string("gradient blend skipped: ") + e.what());
        }
    }
    rs.labels = comp.labels;
    rs.depth_source = comp.depth_source;
    rs.source_frame = comp.source_frame;
    rs.residual = comp.residual;

    // Pose graph over the target and the kept sources.
    const int n = static_cast<int>(rs.sources.size());
    PoseGraph graph;
    graph.add_vertex(Pose::identity());
    for (int k = 0; k < n; ++k) graph.add_vertex(rs.source_pose[k].value_or(Pose::identity()));
    for (int k = 0; k < n; ++k) {
        if (auto g = ctx.gt(target.id, rs.sources[k])) graph.add_edge(0, k + 1, *g, cfg.gt_prior_weight);
        if (auto v = ctx.visual(target.id, rs.sources[k])) graph.add_edge(0, k + 1, *v, 1.0);
    }
    std::vector<int> order(n);
    for (int k = 0; k < n; ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return rs.sources[a] < rs.sources[b]; });
    for (int i = 0; i + 1 < n; ++i) {
        const int a = order[i], b = order[i + 1];
        if (auto v = ctx.visual(rs.sources[a], rs.sources[b])) graph.add_edge(a + 1, b + 1, *v, 1.0);
    }
    // Vertices without an initial pose take one through their edges.
    std::vector<char> known(n + 1, 0);
    known[0] = 1;
    for (int k = 0; k < n; ++k) known[k + 1] = rs.source_pose[k].has_value();
    for (bool grew = true; grew;) {
        grew = false;
        for (const auto& e : graph.edges) {
            if (known[e.i] && !known[e.j]) {
                graph.vertices[e.j] = graph.vertices[e.i] * e.i_from_j;
                known[e.j] = grew = true;
            } else if (known[e.j] && !known[e.i]) {
                graph.vertices[e.i] = graph.vertices[e.j] * e.i_from_j.inverse();
                known[e.i] = grew = true;
            }
        }
    }
    rs.report.pose_edges = static_cast<int>(graph.edges.size());
    PoseGraphResult pg = optimize_pose_graph(graph, cfg.posegraph);
    rs.report.pose_cost_initial = pg.initial_cost;
    rs.report.pose_cost_final = pg.final_cost;
    if (!pg.warning.empty()) warnings.push_back("pose graph: " + pg.warning);

    std::vector<DepthSource> sources(n);
    cv::Mat1i depth_source = rs.depth_source.clone();
    for (int k = 0; k < n; ++k) {
        sources[k].frame = &ctx.seq.frame(rs.sources[k]);
        sources[k].target_from_source = pg.vertices[k + 1];
        sources[k].source_xy = &rs.proposals[k].source_xy;
        if (!pg.connected[k + 1] || !known[k + 1]) depth_source.setTo(-1, depth_source == k);
    }
    DepthTransfer dt = transfer_depth(rs.work, depth_source, rs.component, sources, ctx.seq.intrinsics);
    rs.depth = target.depth(rs.work).clone();
    dt.depth.copyTo(rs.depth, rs.component);
    rs.report.depth_transferred = count_and(rs.component, dt.depth > 0);
}

void stage_color(Context& ctx, const Frame& target, RegionState& rs, std::vector<std::string>& warnings) {
    const auto& cfg = ctx.cfg;
    rs.synthesized = MaskImage::zeros(rs.work.size());
    rs.fallback = MaskImage::zeros(rs.work.size());
    if (cv::countNonZero(rs.residual) > 0) {
        std::vector<ColorImageF> images{rs.color};
        MaskImage usable0 = MaskImage(rs.residual == 0) & MaskImage(rs.other == 0);
        std::vector<MaskImage> usable{usable0};
        for (const auto& p : rs.proposals) {
            images.push_back(p.color);
            usable.push_back(p.validity);
        }
        PatchDomain domain = PatchDomain::build(images, usable, cfg.exemplar.radius);
        ExemplarParams ep = cfg.exemplar;
        ep.seed = seed_for(cfg.seed, target.id, rs.region.mask_id, 1000);
        ColorFillResult res = inpaint_color(rs.color, rs.residual, rs.other, domain, ep);
        rs.color = res.color;
        rs.synthesized = res.synthesized;
        rs.fallback = res.fallback;
        rs.report.exemplar_energy_greedy = res.energy_greedy;
        rs.report.exemplar_energy_final = res.energy_final;
        if (res.fallback_count > 0)
            warnings.push_back(std::to_string(res.fallback_count) + " pixels filled by diffusion");
    }
    MaskImage from_mrf = (rs.labels > 0) & (rs.residual == 0);
    rs.report.color_mrf = count_and(rs.component, from_mrf);
    rs.report.color_exemplar = count_and(rs.component, rs.synthesized);
    rs.report.color_fallback = count_and(rs.component, rs.fallback);
    MaskImage filled = from_mrf | rs.synthesized | rs.fallback;
    rs.report.color_unfilled = rs.report.area - count_and(rs.component, filled);
}

void stage_depth(Context& ctx, const Frame&, RegionState& rs, std::vector<std::string>&) {
    const auto& cfg = ctx.cfg;
    static const EdgePatternTable table;
    MaskImage holes = rs.component & MaskImage(rs.depth <= 0);
    MaskImage edges = color_edges(rs.color, cfg.depth.edge_threshold);
    PixelClassMap map = classify(holes, edges, rs.other);
    DepthFillResult res = propagate(rs.depth, map, table, cfg.depth);
    rs.depth = res.depth;
    rs.report.depth_filled = res.filled;
    rs.report.depth_demoted = res.demoted;
    rs.report.depth_fallback = res.fallback;
    rs.report.depth_unfilled = res.residual;
}

using StageFn = void (*)(Context&, const Frame&, RegionState&, std::vector<std::string>&);
constexpr StageFn kStages[] = {stage_select, stage_warp, stage_combine, stage_color, stage_depth};

// ---- artifacts --------------------------------------------------------

Artifact to_artifact(int stage, FrameId target, const std::vector<RegionState>& regions) {
    Artifact a;
    a.stage = stage_names()[stage];
    a.meta["target"] = target;
    a.meta["regions"] = json::array();
    for (size_t i = 0; i < regions.size(); ++i) {
        const RegionState& rs = regions[i];
        const std::string pre = "r" + std::to_string(i) + ".";
        json r;
        r["report"] = rs.report;
        r["done"] = rs.done;
        r["sources"] = rs.sources;
        json poses = json::array();
        for (const auto& p : rs.source_pose) poses.push_back(p ? pose_json(*p) : json());
        r["source_pose"] = poses;
        json props = json::array();
        for (size_t k = 0; k < rs.proposals.size(); ++k) {
            const WarpedProposal& p = rs.proposals[k];
            props.push_back({{"source_id", p.source_id}, {"rect", rect_json(p.rect)}, {"gain", p.gain},
                             {"baseline", p.baseline}});
            const std::string pp = pre + "p" + std::to_string(k) + ".";
            a.put(pp + "color", p.color);
            a.put(pp + "depth", p.depth);
            a.put(pp + "source_mask", p.source_mask);
            a.put(pp + "validity", p.validity);
            a.put(pp + "source_xy", p.source_xy);
        }
        r["proposals"] = props;
        const std::pair<const char*, const cv::Mat*> mats[] = {
            {"color", &rs.color},       {"labels", &rs.labels},           {"depth_source", &rs.depth_source},
            {"source_frame", &rs.source_frame}, {"residual", &rs.residual}, {"depth", &rs.depth},
            {"synthesized", &rs.synthesized},   {"fallback", &rs.fallback}};
        for (auto& [name, m] : mats)
            if (!m->empty()) a.put(pre + name, *m);
        a.meta["regions"].push_back(r);
    }
    return a;
}

void from_artifact(const Artifact& a, const fs::path& file, std::vector<RegionState>& regions) {
    const json& rj = a.meta.at("regions");
    if (rj.size() != regions.size())
        throw InputError("stage artifact " + file.string() + " does not match the target's mask regions");
    for (size_t i = 0; i < regions.size(); ++i) {
        RegionState& rs = regions[i];
        const json& r = rj[i];
        const std::string pre = "r" + std::to_string(i) + ".";
        rs.report = r.at("report").get<RegionReport>();
        rs.done = r.at("done").get<int>();
        rs.sources = r.at("sources").get<std::vector<FrameId>>();
        rs.source_pose.clear();
        for (const auto& p : r.at("source_pose"))
            rs.source_pose.push_back(p.is_null() ? std::nullopt : std::optional<Pose>(pose_from(p)));
        rs.proposals.clear();
        const json& props = r.at("proposals");
        for (size_t k = 0; k < props.size(); ++k) {
            WarpedProposal p;
            p.source_id = props[k].at("source_id").get<FrameId>();
            p.rect = rect_from(props[k].at("rect"));
            p.gain = props[k].at("gain").get<double>();
            p.baseline = props[k].at("baseline").get<double>();
            const std::string pp = pre + "p" + std::to_string(k) + ".";
            p.color = a.get(pp + "color");
            p.depth = a.get(pp + "depth");
            p.source_mask = a.get(pp + "source_mask");
            p.validity = a.get(pp + "validity");
            p.source_xy = a.get(pp + "source_xy");
            rs.proposals.push_back(std::move(p));
        }
        auto opt = [&](const char* name) { return a.has(pre + name) ? a.get(pre + name) : cv::Mat(); };
        rs.color = opt("color");
        rs.labels = opt("labels");
        rs.depth_source = opt("depth_source");
        rs.source_frame = opt("source_frame");
        rs.residual = opt("residual");
        rs.depth = opt("depth");
        rs.synthesized = opt("synthesized");
        rs.fallback = opt("fallback");
    }
}

fs::path artifact_path(const PipelineConfig& cfg, FrameId target, int stage) {
    return cfg.output / "stages" / std::to_string(target) / (stage_names()[stage] + ".mvia");
}

// ---- outputs ----------------------------------------------------------

void write_debug(Context& ctx, FrameId target, size_t index, const RegionState& rs, int stage) {
    const fs::path dir = ctx.cfg.output / "debug" / std::to_string(target);
    const std::string pre = "r" + std::to_string(index) + "_";
    std::lock_guard<std::mutex> lock(ctx.write_mu);
    fs::create_directories(dir);
    if (stage == kWarp)
        for (const auto& p : rs.proposals)
            cv::imwrite((dir / (pre + "proposal_" + std::to_string(p.source_id) + ".png")).string(), to_8bit(p.color));
    if (stage == kCombine && !rs.labels.empty()) {
        cv::Mat1b idx(rs.labels.size());
        for (int y = 0; y < idx.rows; ++y)
            for (int x = 0; x < idx.cols; ++x) idx(y, x) = static_cast<uint8_t>(std::clamp(rs.labels(y, x) + 1, 0, 255));
        cv::imwrite((dir / (pre + "labels.png")).string(), idx);
        std::ofstream csv(dir / (pre + "mrf_energy.csv"));
        csv << "initial," << std::setprecision(17) << rs.report.mrf_energy_initial << "\nfinal,"
            << rs.report.mrf_energy_final << "\n";
    }
    if (stage == kColor) {
        cv::Mat1b prov = cv::Mat1b::zeros(rs.work.size());
        prov.setTo(85, (rs.labels > 0) & (rs.residual == 0) & rs.dilated);
        prov.setTo(170, rs.synthesized);
        prov.setTo(255, rs.fallback);
        cv::imwrite((dir / (pre + "provenance.png")).string(), prov);
    }
    if (stage == kDepth) {
        MaskImage holes = rs.component.clone();
        PixelClassMap map = classify(holes, color_edges(rs.color, ctx.cfg.depth.edge_threshold), rs.other);
        cv::Mat1b cls = map.cls * 85;
        cv::imwrite((dir / (pre + "depth_classes.png")).string(), cls);
    }
}

void copy_input(const fs::path& from, const fs::path& to) {
    fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

void write_outputs(Context& ctx, const Frame& target, const std::vector<RegionState>& regions, TargetReport& tr) {
    const auto& cfg = ctx.cfg;
    fs::create_directories(cfg.output);
    const fs::path color_out = cfg.output / (std::to_string(target.id) + "_color.png");
    const fs::path depth_out = cfg.output / (std::to_string(target.id) + "_depth.png");
    if (regions.empty()) {
        tr.noop = true;
        copy_input(target.color_path, color_out);
        copy_input(target.depth_path, depth_out);
    } else {
        ColorImage color = target.color.clone();
        DepthImage depth = target.depth.clone();
        for (const auto& rs : regions) {
            if (rs.report.status == "failed" || rs.done < kDepth) continue;
            ColorImage c8 = to_8bit(rs.color);
            c8.copyTo(color(rs.work), rs.dilated);
            rs.depth.copyTo(depth(rs.work), rs.component);
        }
        write_color_png(color_out, color);
        write_depth_png(depth_out, depth, ctx.seq.intrinsics.depth_scale);
        if (cfg.write_ply) {
            Frame f = target;
            f.color = color;
            f.depth = depth;
            const fs::path ply = cfg.output / (std::to_string(target.id) + ".ply");
            export_ply(f, ctx.seq.intrinsics, ply);
            tr.outputs.push_back(ply.string());
        }
    }
    tr.outputs.insert(tr.outputs.begin(), {color_out.string(), depth_out.string()});
}

// ---- driver -----------------------------------------------------------

std::vector<FrameId> resolve_targets(const Context& ctx) {
    std::vector<FrameId> targets = ctx.cfg.targets;
    if (targets.empty()) {
        for (const auto& f : ctx.seq.frames)
            if (f.masked_pixels() > 0) targets.push_back(f.id);
        if (targets.empty()) throw InputError("no target given and no frame has a nonempty mask");
    }
    for (FrameId t : targets) ctx.seq.frame(t);
    return targets;
}

template <typename Fn>
void parallel_for(int count, int workers, Fn fn) {
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) fn(i);
        });
    for (auto& t : pool) t.join();
}

RunReport execute(const PipelineConfig& cfg, int first, int last, bool keep_artifacts, const std::string& mode) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    Context ctx(cfg);
    if (first <= kCombine) ctx.prepare_features();

    RunReport report;
    report.mode = mode;
    for (FrameId tid : resolve_targets(ctx)) {
        const auto tt = std::chrono::steady_clock::now();
        const Frame& target = ctx.seq.frame(tid);
        TargetReport tr;
        tr.target = tid;
        tr.timestamp = target.timestamp_text;
        tr.last_stage = stage_names()[last];
        std::vector<RegionState> regions = make_regions(target, cfg);
        if (first > kSelect) {
            const fs::path prev = artifact_path(cfg, tid, first - 1);
            if (!fs::exists(prev))
                throw InputError("stage '" + stage_names()[first] + "' needs " + prev.string() +
                                 "; run stage '" + stage_names()[first - 1] + "' first");
            from_artifact(Artifact::load(prev), prev, regions);
        }
        std::vector<std::vector<std::string>> warnings(regions.size());
        parallel_for(static_cast<int>(regions.size()), cfg.workers, [&](int i) {
            RegionState& rs = regions[i];
            for (int s = first; s <= last; ++s) {
                if (rs.report.status == "failed") break;
                const auto ts = std::chrono::steady_clock::now();
                try {
                    kStages[s](ctx, target, rs, warnings[i]);
                    rs.done = s;
                } catch (const std::exception& e) {
                    rs.report.status = "failed";
                    rs.report.error = stage_names()[s] + ": " + e.what();
                }
                rs.report.seconds[stage_names()[s]] = elapsed(ts);
                if (cfg.debug && rs.done == s) write_debug(ctx, tid, i, rs, s);
            }
        });
        for (size_t i = 0; i < regions.size(); ++i)
            for (auto& w : warnings[i]) regions[i].report.warnings.push_back(std::move(w));
        if (keep_artifacts) {
            const fs::path file = artifact_path(cfg, tid, last);
            to_artifact(last, tid, regions).save(file);
            tr.outputs.push_back(file.string());
        }
        if (last == kDepth) write_outputs(ctx, target, regions, tr);
        for (auto& rs : regions) tr.regions.push_back(rs.report);
        tr.seconds = elapsed(tt);
        report.outputs.insert(report.outputs.end(), tr.outputs.begin(), tr.outputs.end());
        report.targets.push_back(std::move(tr));
    }

    fs::create_directories(cfg.output);
    const fs::path txt = cfg.output / "report.txt", js = cfg.output / "report.json";
    report.outputs.push_back(txt.string());
    report.outputs.push_back(js.string());
    report.seconds = elapsed(t0);
    std::ofstream(txt) << report.to_text();
    std::ofstream(js) << report.to_json().dump(2) << "\n";
    return report;
}

}  // namespace

cv::Rect working_rect(const cv::Rect& region, const cv::Rect& dilated_bbox, double margin, int ring,
                      const cv::Size& image) {
    const int mx = static_cast<int>(std::ceil(region.width * margin));
    const int my = static_cast<int>(std::ceil(region.height * margin));
    cv::Rect grown(region.x - mx, region.y - my, region.width + 2 * mx, region.height + 2 * my);
    cv::Rect ringed(dilated_bbox.x - ring, dilated_bbox.y - ring, dilated_bbox.width + 2 * ring,
                    dilated_bbox.height + 2 * ring);
    return (grown | ringed) & cv::Rect(0, 0, image.width, image.height);
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"select", "warp", "combine", "color", "depth"};
    return names;
}

RunReport run(const PipelineConfig& config) {
    return execute(config, kSelect, kDepth, config.debug, "run");
}

RunReport run_stage(const PipelineConfig& config, const std::string& stage) {
    const auto& names = stage_names();
    auto it = std::find(names.begin(), names.end(), stage);
    if (it == names.end()) throw ConfigError("unknown stage '" + stage + "' (expected select, warp, combine, color or depth)");
    const int s = static_cast<int>(it - names.begin());
    return execute(config, s, s, true, "stage:" + stage);
}

// ---- report -----------------------------------------------------------

void to_json(json& j, const RegionReport& r) {
    j = json{{"mask_id", r.mask_id},
             {"rect", rect_json(r.rect)},
             {"work", rect_json(r.work)},
             {"area", r.area},
             {"status", r.status},
             {"error", r.error},
             {"warnings", r.warnings},
             {"seconds", r.seconds},
             {"sources", r.sources},
             {"scores", r.scores},
             {"excluded_masked", r.excluded_masked},
             {"proposals", r.proposals},
             {"mrf", {{"energy_initial", r.mrf_energy_initial},
                      {"energy_final", r.mrf_energy_final},
                      {"moves", r.mrf_moves},
                      {"residual_holes", r.residual_holes},
                      {"poisson_iterations", r.poisson_iterations}}},
             {"pose", {{"edges", r.pose_edges},
                       {"cost_initial", r.pose_cost_initial},
                       {"cost_final", r.pose_cost_final},
                       {"depth_transferred", r.depth_transferred}}},
             {"provenance", {{"mrf", r.color_mrf},
                             {"exemplar", r.color_exemplar},
                             {"fallback", r.color_fallback},
                             {"unfilled", r.color_unfilled}}},
             {"exemplar", {{"energy_greedy", r.exemplar_energy_greedy}, {"energy_final", r.exemplar_energy_final}}},
             {"depth", {{"filled", r.depth_filled},
                        {"demoted", r.depth_demoted},
                        {"fallback", r.depth_fallback},
                        {"unfilled", r.depth_unfilled}}}};
}

void from_json(const json& j, RegionReport& r) {
    r.mask_id = j.at("mask_id");
    r.rect = rect_from(j.at("rect"));
    r.work = rect_from(j.at("work"));
    r.area = j.at("area");
    r.status = j.at("status");
    r.error = j.at("error");
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    r.seconds = j.at("seconds").get<std::map<std::string, double>>();
    r.sources = j.at("sources").get<std::vector<FrameId>>();
    r.scores = j.at("scores").get<std::vector<double>>();
    r.excluded_masked = j.at("excluded_masked").get<std::vector<FrameId>>();
    r.proposals = j.at("proposals");
    const json& m = j.at("mrf");
    r.mrf_energy_initial = m.at("energy_initial");
    r.mrf_energy_final = m.at("energy_final");
    r.mrf_moves = m.at("moves");
    r.residual_holes = m.at("residual_holes");
    r.poisson_iterations = m.at("poisson_iterations");
    const json& p = j.at("pose");
    r.pose_edges = p.at("edges");
    r.pose_cost_initial = p.at("cost_initial");
    r.pose_cost_final = p.at("cost_final");
    r.depth_transferred = p.at("depth_transferred");
    const json& v = j.at("provenance");
    r.color_mrf = v.at("mrf");
    r.color_exemplar = v.at("exemplar");
    r.color_fallback = v.at("fallback");
    r.color_unfilled = v.at("unfilled");
    r.exemplar_energy_greedy = j.at("exemplar").at("energy_greedy");
    r.exemplar_energy_final = j.at("exemplar").at("energy_final");
    const json& d = j.at("depth");
    r.depth_filled = d.at("filled");
    r.depth_demoted = d.at("demoted");
    r.depth_fallback = d.at("fallback");
    r.depth_unfilled = d.at("unfilled");
}

int RunReport::failed_regions() const {
    int n = 0;
    for (const auto& t : targets)
        for (const auto& r : t.regions) n += r.status == "failed";
    return n;
}

json RunReport::to_json() const {
    json j;
    j["mode"] = mode;
    j["seconds"] = seconds;
    j["failed_regions"] = failed_regions();
    j["warnings"] = warnings;
    j["outputs"] = outputs;
    j["targets"] = json::array();
    for (const auto& t : targets) {
        json tj{{"target", t.target}, {"timestamp", t.timestamp}, {"noop", t.noop},   {"last_stage", t.last_stage},
                {"seconds", t.seconds}, {"outputs", t.outputs},   {"regions", t.regions}};
        j["targets"].push_back(tj);
    }
    return j;
}

std::string RunReport::to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    int regions = 0;
    for (const auto& t : targets) regions += static_cast<int>(t.regions.size());
    os << "mvinpaint " << mode << ": " << targets.size() << " target(s), " << regions << " region(s), "
       << failed_regions() << " failed, " << seconds << " s\n";
    for (const auto& w : warnings) os << "warning: " << w << "\n";
    for (const auto& t : targets) {
        os << "\ntarget " << t.target << " (" << t.timestamp << ")";
        if (t.noop) os << ": empty mask, inputs copied";
        os << "  [" << t.seconds << " s]\n";
        for (const auto& r : t.regions) {
            os << "  region " << r.mask_id << " at " << r.rect.x << "," << r.rect.y << " " << r.rect.width << "x"
               << r.rect.height << ", " << r.area << " px: " << r.status;
            if (!r.error.empty()) os << " (" << r.error << ")";
            os << "\n    sources:";
            for (FrameId s : r.sources) os << " " << s;
            if (r.sources.empty()) os << " none";
            os << "; proposals " << r.proposals << "\n";
            os << "    mrf energy " << r.mrf_energy_initial << " -> " << r.mrf_energy_final << " (" << r.mrf_moves
               << " moves), residual holes " << r.residual_holes << ", poisson iterations " << r.poisson_iterations
               << "\n";
            os << "    pose graph " << r.pose_edges << " edges, cost " << r.pose_cost_initial << " -> "
               << r.pose_cost_final << ", depth transferred " << r.depth_transferred << " px\n";
            os << "    color: mrf " << r.color_mrf << ", exemplar " << r.color_exemplar << ", fallback "
               << r.color_fallback << ", unfilled " << r.color_unfilled << "\n";
            os << "    depth: filled " << r.depth_filled << " (demoted " << r.depth_demoted << "), fallback "
               << r.depth_fallback << ", unfilled " << r.depth_unfilled << "\n";
            os << "    time:";
            for (const auto& [k, v] : r.seconds) os << " " << k << " " << v << "s";
            os << "\n";
            for (const auto& w : r.warnings) os << "    warning: " << w << "\n";
        }
        for (const auto& o : t.outputs) os << "  wrote " << o << "\n";
    }
    return os.str();
}

}  // namespace mvi
