#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvinpaint/warp.hpp"

#include "../support/scene.hpp"

#include <algorithm>
#include <random>
#include <set>

using namespace mvi;

namespace {

Homography random_h(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::Matrix3d m;
    m << 1 + 0.1 * u(rng), 0.1 * u(rng), 30 * u(rng),  //
        0.1 * u(rng), 1 + 0.1 * u(rng), 30 * u(rng),   //
        1e-4 * u(rng), 1e-4 * u(rng), 1;
    return Homography::from(m);
}

std::vector<Correspondence> sample_pairs(const Homography& h, int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ux(0, 640), uy(0, 480);
    std::vector<Correspondence> out;
    for (int i = 0; i < n; ++i) {
        Eigen::Vector2d p(ux(rng), uy(rng));
        out.push_back({p, h.apply(p)});
    }
    return out;
}

Frame frame_from(const cv::Mat3b& color, const cv::Mat1f& depth, int id = 1) {
    Frame f;
    f.id = id;
    f.color = color;
    f.depth = depth;
    f.mask = MaskImage::zeros(color.size());
    return f;
}

// Plane-induced target_from_source map for a plane n.X = d in source coordinates.
Homography plane_h(const Eigen::Matrix3d& K, const Pose& target_from_source, const Eigen::Vector3d& n, double d) {
    Eigen::Matrix3d H = K * (target_from_source.rotation_matrix() + target_from_source.translation * n.transpose() / d) *
                        K.inverse();
    return Homography::from(H);
}

}  // namespace

TEST_CASE("dlt: identity from four pairs") {
    std::vector<Correspondence> pairs = {{{0, 0}, {0, 0}}, {{100, 0}, {100, 0}}, {{0, 80}, {0, 80}}, {{100, 80}, {100, 80}}};
    Homography h = dlt_homography(pairs);
    CHECK((h.m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("dlt: twenty noiseless pairs recover H") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Homography truth = random_h(rng);
        Homography h = dlt_homography(sample_pairs(truth, 20, rng));
        CHECK(homography_distance(h, truth) < 1e-6);
    }
}

TEST_CASE("dlt: degenerate input") {
    std::vector<Correspondence> line = {{{0, 0}, {1, 1}}, {{1, 1}, {2, 2}}, {{2, 2}, {3, 3}}, {{3, 3}, {4, 4}}};
    CHECK_THROWS_AS(dlt_homography(line), EstimationError);
    CHECK_THROWS_AS(dlt_homography({{{0, 0}, {0, 0}}}), EstimationError);
}

TEST_CASE("homography inverse and composition") {
    std::mt19937_64 rng(5);
    Homography h = random_h(rng);
    Eigen::Vector2d p(123.5, 77.25);
    CHECK((h.inverse().apply(h.apply(p)) - p).norm() < 1e-9);
    CHECK(homography_distance(h * h.inverse(), Homography::identity()) < 1e-12);
}

TEST_CASE("ransac: consistent matches are all inliers") {
    std::mt19937_64 rng(7);
    Homography truth = random_h(rng);
    auto pairs = sample_pairs(truth, 60, rng);
    RansacResult r = ransac_homography(pairs, {});
    CHECK(r.inliers.size() == pairs.size());
    CHECK(homography_distance(r.h, truth) < 1e-6);
}

TEST_CASE("ransac: 30% outliers") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ux(0, 640), uy(0, 480);
    for (int trial = 0; trial < 5; ++trial) {
        Homography truth = random_h(rng);
        auto pairs = sample_pairs(truth, 140, rng);
        std::set<int> truly;
        for (int i = 0; i < 140; ++i) truly.insert(i);
        for (int i = 0; i < 60; ++i) {
            Eigen::Vector2d p(ux(rng), uy(rng)), q(ux(rng), uy(rng));
            if ((truth.apply(p) - q).norm() > 3) pairs.push_back({p, q});
        }
        RansacParams rp;
        rp.seed = trial;
        RansacResult r = ransac_homography(pairs, rp);
        CHECK(homography_distance(r.h, truth) < 1e-3);
        int found = 0;
        for (int i : r.inliers) found += truly.count(i) ? 1 : 0;
        CHECK(found >= 0.95 * 140);
    }
}

TEST_CASE("ransac: deterministic per seed") {
    std::mt19937_64 rng(13);
    auto pairs = sample_pairs(random_h(rng), 50, rng);
    std::uniform_real_distribution<double> u(0, 480);
    for (int i = 0; i < 30; ++i) pairs.push_back({{u(rng), u(rng)}, {u(rng), u(rng)}});
    RansacParams rp;
    rp.seed = 9;
    auto a = ransac_homography(pairs, rp), b = ransac_homography(pairs, rp);
    CHECK(a.inliers == b.inliers);
    CHECK(a.h.m == b.h.m);
}

TEST_CASE("ransac: pure outliers fail") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> ux(0, 640), uy(0, 480);
    std::vector<Correspondence> pairs;
    for (int i = 0; i < 100; ++i) pairs.push_back({{ux(rng), uy(rng)}, {ux(rng), uy(rng)}});
    CHECK_THROWS_AS(ransac_homography(pairs, {}), EstimationError);
}

TEST_CASE("grid: single global homography") {
    std::mt19937_64 rng(19);
    Homography truth = random_h(rng);
    auto pairs = sample_pairs(truth, 300, rng);
    std::vector<Correspondence> to_target;
    for (const auto& p : pairs) to_target.push_back(p);
    LocalWarpGrid g = fit_local_grid(to_target, truth, cv::Rect(0, 0, 640, 480), {});
    int fitted = 0;
    for (size_t i = 0; i < g.cells.size(); ++i) {
        CHECK(homography_distance(g.cells[i], truth) < 1e-3);
        fitted += g.inherited[i] ? 0 : 1;
    }
    CHECK(fitted > 0);
}

TEST_CASE("grid: corner matches leave far cells on the global map") {
    Homography global = Homography::from((Eigen::Matrix3d() << 1, 0, 4, 0, 1, -2, 0, 0, 1).finished());
    Homography local = Homography::from((Eigen::Matrix3d() << 1.02, 0, 6, 0, 0.99, -1, 0, 0, 1).finished());
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0, 60);
    std::vector<Correspondence> pairs;
    for (int i = 0; i < 80; ++i) {
        Eigen::Vector2d s(u(rng), u(rng));
        pairs.push_back({s, local.apply(s)});
    }
    LocalWarpGrid g = fit_local_grid(pairs, global, cv::Rect(0, 0, 640, 480), {});
    const int far = g.cell_index(600, 440), near = g.cell_index(16, 16);
    CHECK(g.inherited[far]);
    CHECK(g.cells[far].m == global.m);
    CHECK_FALSE(g.inherited[near]);
    CHECK(homography_distance(g.cells[near], local) < 1e-3);
}

TEST_CASE("grid: rejects bad parameters") {
    GridParams p;
    p.sigma_px = 0;
    CHECK_THROWS_AS(fit_local_grid({}, Homography::identity(), cv::Rect(0, 0, 64, 64), p), ConfigError);
    p = {};
    p.gamma = 2;
    CHECK_THROWS_AS(fit_local_grid({}, Homography::identity(), cv::Rect(0, 0, 64, 64), p), ConfigError);
}

TEST_CASE("warp: identity grid copies the source crop") {
    cv::Mat3f tex = synth::make_texture(96, 1);
    cv::Mat3b color;
    tex.convertTo(color, CV_8UC3, 255);
    cv::Mat1f depth(96, 96, 1.5f);
    Frame src = frame_from(color, depth);
    cv::Rect rect(10, 20, 40, 30);
    WarpedProposal p = warp_frame(src, LocalWarpGrid::uniform(rect, 32, Homography::identity()), rect, nullptr);
    CHECK(cv::countNonZero(p.validity) == rect.area());
    for (int y = 0; y < rect.height; ++y)
        for (int x = 0; x < rect.width; ++x) {
            cv::Vec3b s = color(rect.y + y, rect.x + x);
            for (int c = 0; c < 3; ++c) CHECK(std::abs(p.color(y, x)[c] * 255.f - s[c]) < 1e-3f);
        }
    CHECK(p.gain == doctest::Approx(1.0));
}

TEST_CASE("warp: translation leaves an invalid strip") {
    cv::Mat3f tex = synth::make_texture(64, 2);
    cv::Mat3b color;
    tex.convertTo(color, CV_8UC3, 255);
    Frame src = frame_from(color, cv::Mat1f(64, 64, 2.f));
    // source -> target moves content 5 px to the right
    Homography shift = Homography::from((Eigen::Matrix3d() << 1, 0, 5, 0, 1, 0, 0, 0, 1).finished());
    cv::Rect rect(0, 0, 64, 64);
    WarpedProposal p = warp_frame(src, LocalWarpGrid::uniform(rect, 32, shift), rect, nullptr);
    CHECK(cv::countNonZero(p.validity(cv::Rect(0, 0, 5, 64))) == 0);
    CHECK(cv::countNonZero(p.validity(cv::Rect(5, 0, 59, 64))) == 59 * 64);
    for (int y = 0; y < 64; y += 7)
        for (int x = 5; x < 64; x += 7) {
            cv::Vec3b s = color(y, x - 5);
            CHECK(std::abs(p.color(y, x)[1] * 255.f - s[1]) < 1e-3f);
        }
}

TEST_CASE("warp: forward then inverse returns valid pixels") {
    std::mt19937_64 rng(29);
    Homography h = random_h(rng);
    LocalWarpGrid fwd = LocalWarpGrid::uniform(cv::Rect(0, 0, 640, 480), 32, h);
    LocalWarpGrid back = LocalWarpGrid::uniform(cv::Rect(0, 0, 640, 480), 32, h.inverse());
    for (int y = 40; y < 440; y += 37)
        for (int x = 40; x < 600; x += 41) {
            Eigen::Vector2d s = fwd.target_to_source(x, y);
            Eigen::Vector2d t = back.target_to_source(s.x(), s.y());
            CHECK((t - Eigen::Vector2d(x, y)).norm() < 0.5);
        }
}

TEST_CASE("warp: plane seen from two viewpoints") {
    synth::Scene scene;
    scene.textures = {synth::make_texture(512, 31)};
    synth::Plane wall;
    wall.origin = {0, 0, 2.5};
    wall.e1 = {1, 0, 0};
    wall.e2 = {0, 1, 0};
    wall.texels_per_m = 120;
    scene.planes = {wall};
    CameraIntrinsics K;
    K.width = 200;
    K.height = 150;
    K.fx = K.fy = 180;
    K.cx = 100;
    K.cy = 75;
    Pose world_from_target(Eigen::Quaterniond::Identity(), Eigen::Vector3d(0, 0, 0));
    Pose world_from_source(Eigen::Quaterniond(Eigen::AngleAxisd(0.04, Eigen::Vector3d::UnitY())),
                           Eigen::Vector3d(-0.12, 0.03, 0.05));
    synth::Render target = synth::render(scene, world_from_target, K, false);
    synth::Render source = synth::render(scene, world_from_source, K, false);

    const Pose source_from_world = world_from_source.inverse();
    const Eigen::Vector3d n = source_from_world.rotation_matrix() * Eigen::Vector3d(0, 0, 1);
    const double d = n.dot(source_from_world * wall.origin);
    Eigen::Matrix3d Km;
    Km << K.fx, 0, K.cx, 0, K.fy, K.cy, 0, 0, 1;
    Homography h = plane_h(Km, world_from_target.inverse() * world_from_source, n, d);

    Frame src = frame_from(source.color, source.depth);
    Frame tgt = frame_from(target.color, target.depth, 0);
    cv::Rect rect(0, 0, K.width, K.height);
    WarpedProposal p = warp_frame(src, LocalWarpGrid::uniform(rect, 32, h), rect, &tgt);
    std::vector<double> diffs;
    for (int y = 0; y < rect.height; ++y)
        for (int x = 0; x < rect.width; ++x) {
            if (!p.validity(y, x)) continue;
            cv::Vec3b t = target.color(y, x);
            for (int c = 0; c < 3; ++c) diffs.push_back(std::abs(p.color(y, x)[c] * 255.0 - t[c]));
        }
    REQUIRE(diffs.size() > 3 * rect.area() / 2);
    double mad = 0;
    for (double v : diffs) mad += v;
    mad /= static_cast<double>(diffs.size());
    MESSAGE("plane warp MAD " << mad);
    CHECK(mad < 2.0);
    CHECK(p.gain == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("warp: masked source pixels are never valid") {
    cv::Mat3f tex = synth::make_texture(80, 3);
    cv::Mat3b color;
    tex.convertTo(color, CV_8UC3, 255);
    Frame src = frame_from(color, cv::Mat1f(80, 80, 1.f));
    cv::circle(src.mask, {40, 40}, 12, 255, cv::FILLED);
    Homography h = Homography::from((Eigen::Matrix3d() << 1.05, 0.02, -3.3, -0.01, 0.97, 2.7, 0, 0, 1).finished());
    cv::Rect rect(0, 0, 80, 80);
    WarpedProposal p = warp_frame(src, LocalWarpGrid::uniform(rect, 32, h), rect, nullptr);
    int masked_seen = 0;
    for (int y = 0; y < 80; ++y)
        for (int x = 0; x < 80; ++x) {
            Eigen::Vector2d s = h.inverse().apply({x, y});
            int nx = static_cast<int>(std::lround(s.x())), ny = static_cast<int>(std::lround(s.y()));
            if (nx < 0 || ny < 0 || nx >= 80 || ny >= 80) continue;
            if (src.mask(ny, nx)) {
                ++masked_seen;
                CHECK(p.validity(y, x) == 0);
                CHECK(p.source_mask(y, x) != 0);
            }
        }
    CHECK(masked_seen > 300);
}

TEST_CASE("warp: depth values are copied, never mixed") {
    cv::Mat1f depth(60, 60);
    for (int y = 0; y < 60; ++y)
        for (int x = 0; x < 60; ++x) depth(y, x) = 1.0f + 0.013f * x + 0.5f * (y > 30);
    std::set<float> allowed(depth.begin(), depth.end());
    allowed.insert(0.f);
    Frame src = frame_from(cv::Mat3b(60, 60, cv::Vec3b(90, 90, 90)), depth);
    Homography h = Homography::from((Eigen::Matrix3d() << 0.93, 0.05, 2.3, -0.04, 1.1, -1.7, 1e-4, 0, 1).finished());
    cv::Rect rect(0, 0, 60, 60);
    WarpedProposal p = warp_frame(src, LocalWarpGrid::uniform(rect, 16, h), rect, nullptr);
    for (float v : p.depth) CHECK(allowed.count(v) == 1);
}

TEST_CASE("ransac: two planes are found in turn") {
    Homography a = Homography::from((Eigen::Matrix3d() << 1, 0, 10, 0, 1, 0, 0, 0, 1).finished());
    Homography b = Homography::from((Eigen::Matrix3d() << 0.9, 0.05, -20, 0, 1.1, 15, 1e-4, 0, 1).finished());
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> left(0, 300), right(340, 640), uy(0, 480);
    std::vector<Correspondence> pairs;
    for (int i = 0; i < 120; ++i) {
        Eigen::Vector2d p(left(rng), uy(rng));
        pairs.push_back({p, a.apply(p)});
    }
    for (int i = 0; i < 60; ++i) {
        Eigen::Vector2d p(right(rng), uy(rng));
        pairs.push_back({p, b.apply(p)});
    }
    for (int i = 0; i < 20; ++i) pairs.push_back({{left(rng), uy(rng)}, {right(rng), uy(rng)}});
    RansacParams rp;
    rp.seed = 5;
    MultiRansacResult r = ransac_homographies(pairs, rp, 3);
    REQUIRE(r.models.size() >= 2);
    CHECK(homography_distance(r.models[0].h, a) < 1e-3);
    CHECK(homography_distance(r.models[1].h, b) < 1e-3);
    CHECK(r.models[0].inliers.size() >= 120);
    CHECK(std::is_sorted(r.inliers.begin(), r.inliers.end()));
    std::set<int> all(r.inliers.begin(), r.inliers.end());
    CHECK(all.size() == r.inliers.size());
    for (int i = 0; i < 180; ++i) CHECK(all.count(i) == 1);

    MultiRansacResult one = ransac_homographies(pairs, rp, 1);
    CHECK(one.models.size() == 1);
    CHECK(one.inliers == one.models[0].inliers);
}

TEST_CASE("ransac: multi-model search fails like the single one") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 640);
    std::vector<Correspondence> pairs;
    for (int i = 0; i < 40; ++i) pairs.push_back({{u(rng), u(rng)}, {u(rng), u(rng)}});
    CHECK_THROWS_AS(ransac_homographies(pairs, {}, 3), EstimationError);
}

TEST_CASE("grid: unsupported cells take the nearest plane") {
    Homography a = Homography::from((Eigen::Matrix3d() << 1, 0, 3, 0, 1, 0, 0, 0, 1).finished());
    Homography b = Homography::from((Eigen::Matrix3d() << 1, 0, -7, 0, 1, 2, 0, 0, 1).finished());
    std::vector<Correspondence> pairs;
    std::vector<RansacResult> models(2);
    models[0].h = a;
    models[1].h = b;
    for (int i = 0; i < 5; ++i) {
        Eigen::Vector2d p(10 + i, 10);
        models[0].inliers.push_back(static_cast<int>(pairs.size()));
        pairs.push_back({p, a.apply(p)});
        Eigen::Vector2d q(600 + i, 450);
        models[1].inliers.push_back(static_cast<int>(pairs.size()));
        pairs.push_back({q, b.apply(q)});
    }
    LocalWarpGrid g = LocalWarpGrid::uniform(cv::Rect(0, 0, 640, 480), 32, a);
    g.cells[g.cell_index(16, 16)] = Homography::identity();
    g.inherited[g.cell_index(16, 16)] = 0;
    inherit_nearest_plane(g, pairs, models);
    CHECK(g.cells[g.cell_index(16, 16)].m == Homography::identity().m);  // fitted cell untouched
    CHECK(homography_distance(g.cells[g.cell_index(80, 60)], a) < 1e-12);
    CHECK(homography_distance(g.cells[g.cell_index(620, 460)], b) < 1e-12);
    CHECK(homography_distance(g.cells_inverse[g.cell_index(620, 460)], b.inverse()) < 1e-9);

    LocalWarpGrid h = LocalWarpGrid::uniform(cv::Rect(0, 0, 640, 480), 32, a);
    inherit_nearest_plane(h, pairs, {models[1]});  // one model: nothing to choose
    CHECK(h.cells[h.cell_index(620, 460)].m == a.m);
}
