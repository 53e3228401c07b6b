#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvinpaint/posegraph.hpp"
#include "mvinpaint/warp.hpp"

#include "../support/scene.hpp"

#include <algorithm>
#include <random>

using namespace mvi;

namespace {

double pose_error(const Pose& a, const Pose& b) { return se3_log(a.inverse() * b).norm(); }

Pose random_pose(std::mt19937_64& rng, double rot, double trans) {
    std::normal_distribution<double> n(0, 1);
    Vec6 xi;
    for (int i = 0; i < 3; ++i) xi(i) = trans * n(rng);
    for (int i = 3; i < 6; ++i) xi(i) = rot * n(rng);
    return se3_exp(xi);
}

}  // namespace

TEST_CASE("rigid fit: thirty degree rotation") {
    Pose truth(Eigen::Matrix3d(Eigen::AngleAxisd(M_PI / 6, Eigen::Vector3d(1, 2, 3).normalized())),
               Eigen::Vector3d(0.4, -0.2, 1.1));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<Eigen::Vector3d> src, dst;
    for (int i = 0; i < 12; ++i) {
        src.emplace_back(u(rng), u(rng), 2 + u(rng));
        dst.push_back(truth * src.back());
    }
    Pose fit = fit_rigid(src, dst);
    CHECK((fit.rotation_matrix() - truth.rotation_matrix()).norm() < 1e-6);
    CHECK((fit.translation - truth.translation).norm() < 1e-6);
    CHECK(fit.rotation_matrix().determinant() == doctest::Approx(1.0));
}

TEST_CASE("rigid fit: degenerate input") {
    std::vector<Eigen::Vector3d> line = {{0, 0, 1}, {1, 0, 1}, {2, 0, 1}, {3, 0, 1}};
    CHECK_THROWS_AS(fit_rigid(line, line), EstimationError);
    CHECK_THROWS_AS(fit_rigid({{0, 0, 1}, {1, 0, 1}}, {{0, 0, 1}, {1, 0, 1}}), EstimationError);
}

TEST_CASE("rigid ransac rejects outliers") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    Pose truth = random_pose(rng, 0.2, 0.3);
    std::vector<Eigen::Vector3d> b, a;
    for (int i = 0; i < 60; ++i) {
        b.emplace_back(u(rng), u(rng), 2 + u(rng));
        a.push_back(i < 45 ? truth * b.back() : Eigen::Vector3d(u(rng), u(rng), 2 + u(rng)));
    }
    auto est = estimate_rigid(b, a, {});
    REQUIRE(est.has_value());
    CHECK(pose_error(est->a_from_b, truth) < 1e-6);
    CHECK(est->inliers.size() >= 45);
    CHECK(est->inliers.size() < 50);
}

TEST_CASE("pose graph: single vertex") {
    PoseGraph g;
    g.add_vertex(Pose::identity());
    PoseGraphResult r = optimize_pose_graph(g);
    REQUIRE(r.vertices.size() == 1);
    CHECK(pose_error(r.vertices[0], Pose::identity()) == 0);
    CHECK(r.final_cost == 0);
}

TEST_CASE("pose graph: noiseless edges keep the truth") {
    std::mt19937_64 rng(3);
    std::vector<Pose> truth = {Pose::identity()};
    for (int k = 1; k < 5; ++k) truth.push_back(random_pose(rng, 0.1, 0.2));
    PoseGraph g;
    for (const auto& t : truth) g.add_vertex(t);
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j) g.add_edge(i, j, truth[i].inverse() * truth[j], 1.0);
    PoseGraphResult r = optimize_pose_graph(g);
    CHECK(r.final_cost < 1e-18);
    for (int k = 0; k < 5; ++k) CHECK(pose_error(r.vertices[k], truth[k]) < 1e-9);
}

TEST_CASE("pose graph: refinement lowers cost and error") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0, 0.01);
    std::vector<Pose> truth = {Pose::identity()};
    for (int k = 1; k < 4; ++k) truth.push_back(random_pose(rng, 0.1, 0.3));
    auto noisy = [&](const Pose& p) {
        Vec6 xi;
        for (int i = 0; i < 6; ++i) xi(i) = n(rng);
        return p * se3_exp(xi);
    };
    PoseGraph g;
    g.add_vertex(Pose::identity());
    std::vector<Pose> star;
    for (int k = 1; k < 4; ++k) {
        star.push_back(noisy(truth[k]));
        g.add_vertex(star.back());
        g.add_edge(0, k, star.back(), 1.0);
    }
    for (int i = 1; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) g.add_edge(i, j, noisy(truth[i].inverse() * truth[j]), 1.0);
    PoseGraphResult r = optimize_pose_graph(g);
    CHECK(r.final_cost <= r.initial_cost);
    CHECK(r.initial_cost == doctest::Approx(g.cost()));
    CHECK(r.final_cost == doctest::Approx(g.cost(r.vertices)));
    REQUIRE(r.trace.size() >= 2);
    CHECK(r.trace.front() == r.initial_cost);
    CHECK(r.trace.back() == r.final_cost);
    for (size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] <= r.trace[i - 1]);
}

TEST_CASE("pose graph: disconnected vertex keeps its estimate") {
    PoseGraph g;
    g.add_vertex(Pose::identity());
    Pose a(Eigen::Quaterniond::Identity(), Eigen::Vector3d(0.1, 0, 0));
    Pose lone(Eigen::Quaterniond::Identity(), Eigen::Vector3d(5, 5, 5));
    g.add_vertex(Pose::identity());
    g.add_vertex(lone);
    g.add_edge(0, 1, a, 1.0);
    PoseGraphResult r = optimize_pose_graph(g);
    CHECK(r.connected == std::vector<char>{1, 1, 0});
    CHECK(pose_error(r.vertices[1], a) < 1e-9);
    CHECK(pose_error(r.vertices[2], lone) == 0);
}

TEST_CASE("depth transfer: identity keeps depth") {
    CameraIntrinsics K;
    K.width = 20;
    K.height = 10;
    K.fx = K.fy = 20;
    K.cx = 10;
    K.cy = 5;
    Frame src;
    src.depth = DepthImage(10, 20, 1.25f);
    src.depth(3, 4) = 0;
    cv::Mat2f xy(10, 20);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 20; ++x) xy(y, x) = cv::Vec2f(float(x), float(y));
    cv::Mat1i which(10, 20, 0);
    which(0, 0) = -1;
    MaskImage needed(10, 20, 255);
    DepthTransfer t = transfer_depth(cv::Rect(0, 0, 20, 10), which, needed, {{&src, Pose::identity(), &xy}}, K);
    CHECK(t.depth(5, 5) == doctest::Approx(1.25f));
    CHECK(t.depth(0, 0) == 0);
    CHECK(t.depth(3, 4) == 0);
    CHECK(t.consistent == 200 - 2);
}

TEST_CASE("depth transfer: plane from a second viewpoint") {
    synth::Scene scene;
    scene.textures = {synth::make_texture(256, 5)};
    synth::Plane wall;
    wall.origin = {0, 0, 2.0};
    wall.e1 = Eigen::Vector3d(std::cos(0.3), 0, std::sin(0.3));
    wall.e2 = {0, 1, 0};
    scene.planes = {wall};
    CameraIntrinsics K;
    K.width = 160;
    K.height = 120;
    K.fx = K.fy = 140;
    K.cx = 80;
    K.cy = 60;
    Pose w_t = Pose::identity();
    Pose w_s(Eigen::Quaterniond(Eigen::AngleAxisd(-0.05, Eigen::Vector3d::UnitY())), Eigen::Vector3d(0.15, 0, 0.02));
    synth::Render rt = synth::render(scene, w_t, K, false), rs = synth::render(scene, w_s, K, false);
    Pose t_s = w_t.inverse() * w_s;
    const Pose s_w = w_s.inverse();
    Eigen::Vector3d n = s_w.rotation_matrix() * wall.normal();
    double d = n.dot(s_w * wall.origin);
    Eigen::Matrix3d Km;
    Km << K.fx, 0, K.cx, 0, K.fy, K.cy, 0, 0, 1;
    Homography h = Homography::from(Km * (t_s.rotation_matrix() + t_s.translation * n.transpose() / d) * Km.inverse());

    Frame src;
    src.id = 1;
    src.color = rs.color;
    src.depth = rs.depth;
    src.mask = MaskImage::zeros(rs.color.size());
    cv::Rect rect(40, 30, 80, 60);
    WarpedProposal p = warp_frame(src, LocalWarpGrid::uniform(rect, 32, h), rect, nullptr);
    cv::Mat1i which(rect.size(), 0);
    MaskImage needed(rect.size(), 255);
    DepthTransfer t = transfer_depth(rect, which, needed, {{&src, t_s, &p.source_xy}}, K);
    std::vector<double> rel;
    for (int y = 0; y < rect.height; ++y)
        for (int x = 0; x < rect.width; ++x) {
            const float z = t.depth(y, x), truth = rt.depth(rect.y + y, rect.x + x);
            if (z > 0 && truth > 0) rel.push_back(std::abs(z - truth) / truth);
        }
    REQUIRE(rel.size() > rect.area() / 2);
    std::nth_element(rel.begin(), rel.begin() + rel.size() / 2, rel.end());
    CHECK(rel[rel.size() / 2] < 0.01);
}
