#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvinpaint/dataset.hpp"

#include "../support/scene.hpp"
#include "../support/testutil.hpp"

#include <fstream>

using namespace mvi;

namespace {

void write_rows(const std::filesystem::path& file, const std::vector<std::pair<std::string, std::string>>& rows) {
    std::ofstream os(file);
    os << "# comment line\n";
    for (auto& [t, p] : rows) os << t << " " << p << "\n";
}

CameraIntrinsics tiny(int w, int h) {
    CameraIntrinsics K;
    K.width = w;
    K.height = h;
    K.fx = K.fy = 10;
    K.cx = w / 2.0;
    K.cy = h / 2.0;
    return K;
}

int ply_vertices(const std::filesystem::path& file) {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("element vertex ", 0) == 0) return std::stoi(line.substr(15));
    return -1;
}

}  // namespace

TEST_CASE("nearest-timestamp association drops unmatched rows") {
    testutil::TempDir dir("assoc");
    CameraIntrinsics K = tiny(4, 3);
    std::vector<synth::TumFrame> frames;
    std::filesystem::create_directories(dir.path / "rgb");
    std::filesystem::create_directories(dir.path / "depth");
    cv::Mat3b c(3, 4, cv::Vec3b(10, 20, 30));
    cv::Mat1w d(3, 4, 5000);
    for (const char* t : {"0", "1", "2"}) cv::imwrite((dir / (std::string("rgb/") + t + ".png")).string(), c);
    for (const char* t : {"0.5", "1.0", "2.0"}) cv::imwrite((dir / (std::string("depth/") + t + ".png")).string(), d);
    write_rows(dir / "rgb.txt", {{"0", "rgb/0.png"}, {"1", "rgb/1.png"}, {"2", "rgb/2.png"}});
    write_rows(dir / "depth.txt", {{"0.5", "depth/0.5.png"}, {"1.0", "depth/1.0.png"}, {"2.0", "depth/2.0.png"}});
    LoadOptions lo;
    lo.max_assoc_dt = 0.1;
    lo.intrinsics = K;
    Sequence seq = load_sequence(dir.path, lo);
    REQUIRE(seq.frames.size() == 2);
    CHECK(seq.frames[0].timestamp == doctest::Approx(1.0));
    CHECK(seq.frames[1].timestamp == doctest::Approx(2.0));
    CHECK(seq.frames[0].depth(0, 0) == doctest::Approx(1.0));
    CHECK(seq.frames[0].masked_pixels() == 0);
    CHECK_FALSE(seq.frames[0].pose.has_value());
}

TEST_CASE("associate_nearest by hand") {
    auto m = associate_nearest({0.0, 1.0, 2.0}, {0.5, 1.0, 2.0}, 0.1);
    CHECK(m == std::vector<int>{-1, 1, 2});
    m = associate_nearest({0.0, 1.0, 2.0}, {0.5, 1.0, 2.0}, 0.5);
    CHECK(m == std::vector<int>{0, 1, 2});
    CHECK(associate_nearest({1.0}, {}, 1.0) == std::vector<int>{-1});
}

TEST_CASE("empty index gives an empty sequence") {
    testutil::TempDir dir("empty");
    write_rows(dir / "rgb.txt", {});
    write_rows(dir / "depth.txt", {});
    Sequence seq = load_sequence(dir.path);
    CHECK(seq.frames.empty());
}

TEST_CASE("missing directory and malformed rows are input errors") {
    CHECK_THROWS_AS(load_sequence("/nonexistent/mvi/dataset"), InputError);
    testutil::TempDir dir("bad");
    std::ofstream(dir / "rgb.txt") << "0.1\n";
    write_rows(dir / "depth.txt", {});
    CHECK_THROWS_AS(load_sequence(dir.path), InputError);
}

TEST_CASE("masks, poses and intrinsics are read alongside the images") {
    testutil::TempDir dir("full");
    CameraIntrinsics K = tiny(6, 5);
    K.fx = 12.5;
    std::vector<synth::TumFrame> frames(2);
    for (int i = 0; i < 2; ++i) {
        frames[i].t = 1.0 + i;
        frames[i].color = cv::Mat3b(5, 6, cv::Vec3b(1, 2, 3));
        frames[i].depth = cv::Mat1f(5, 6, 1.25f);
        frames[i].pose = Pose(Eigen::Quaterniond(Eigen::AngleAxisd(0.1 * i, Eigen::Vector3d::UnitZ())),
                              Eigen::Vector3d(i, 0, 0));
    }
    frames[1].mask = cv::Mat1b::zeros(5, 6);
    frames[1].mask(2, 3) = 255;
    synth::write_tum(dir.path, frames, K);
    Sequence seq = load_sequence(dir.path);
    REQUIRE(seq.frames.size() == 2);
    CHECK(seq.intrinsics.fx == doctest::Approx(12.5));
    CHECK(seq.frames[1].masked_pixels() == 1);
    CHECK(seq.frames[1].mask(2, 3) != 0);
    REQUIRE(seq.frames[1].pose.has_value());
    CHECK(seq.frames[1].pose->translation.x() == doctest::Approx(1.0));
    CHECK(seq.frames[1].pose->angle() == doctest::Approx(0.1));
    CHECK(seq.frames[0].depth(4, 5) == doctest::Approx(1.25));
    CHECK(&seq.frame(1) == &seq.frames[1]);
    CHECK(seq.find(7) == nullptr);
    CHECK_THROWS_AS(seq.frame(7), InputError);

    LoadOptions lo;
    lo.max_frames = 1;
    CHECK(load_sequence(dir.path, lo).frames.size() == 1);
}

TEST_CASE("depth PNG round trip at the depth scale") {
    testutil::TempDir dir("depthpng");
    DepthImage d(2, 3);
    d << 0.f, 1.f, 2.5f, 0.0002f, 13.107f, 0.f;
    write_depth_png(dir / "d.png", d, 5000.0);
    DepthImage r = read_depth_png(dir / "d.png", 5000.0);
    for (int i = 0; i < 6; ++i) CHECK(r(i / 3, i % 3) == doctest::Approx(d(i / 3, i % 3)).epsilon(1e-6));
    CHECK_THROWS_AS(read_depth_png(dir / "missing.png", 5000.0), InputError);
}

TEST_CASE("unproject: principal point and one focal length off axis") {
    CameraIntrinsics K;
    auto p = unproject_pixel(K.cx, K.cy, 2.0, K);
    CHECK(p.isApprox(Eigen::Vector3d(0, 0, 2)));
    auto q = unproject_pixel(K.cx + K.fx, K.cy, 1.0, K);
    CHECK(q.x() == doctest::Approx(1.0));
    CHECK(q.y() == doctest::Approx(0.0));
    CHECK(q.z() == doctest::Approx(1.0));
    CHECK(unproject(DepthImage::zeros(4, 4), K).empty());
}

TEST_CASE("project: pinhole values, behind-camera flag, round trip") {
    CameraIntrinsics K;
    K.fx = 100;
    K.cx = 320;
    auto pr = project(Eigen::Vector3d(1, 0, 1), K);
    CHECK(pr.u == doctest::Approx(420));
    CHECK(pr.valid());
    CHECK(project(Eigen::Vector3d(0, 0, -1), K).behind_camera);
    CHECK(project(Eigen::Vector3d(100, 0, 1), K).out_of_bounds);

    DepthImage d(K.height, K.width);
    cv::randu(d, 0.3, 6.0);
    d(10, 10) = 0;
    auto pts = unproject(d, K);
    CHECK(pts.size() == static_cast<size_t>(K.width * K.height - 1));
    double worst = 0;
    for (const auto& cp : pts) {
        auto r = project(cp.point, K);
        worst = std::max({worst, std::abs(r.u - cp.u), std::abs(r.v - cp.v)});
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("PLY export vertex counts") {
    testutil::TempDir dir("ply");
    CameraIntrinsics K = tiny(2, 2);
    Frame f;
    f.color = ColorImage(2, 2, cv::Vec3b(0, 0, 255));
    f.depth = DepthImage::zeros(2, 2);
    export_ply(f, K, dir / "a.ply");
    CHECK(ply_vertices(dir / "a.ply") == 0);

    K.cx = 0;
    K.cy = 0;
    f.depth(0, 0) = 1.f;
    export_ply(f, K, dir / "b.ply");
    CHECK(ply_vertices(dir / "b.ply") == 1);
    std::ifstream in(dir / "b.ply");
    std::string line;
    while (std::getline(in, line) && line != "end_header") {}
    double x, y, z;
    int r, g, b;
    in >> x >> y >> z >> r >> g >> b;
    CHECK(x == 0);
    CHECK(y == 0);
    CHECK(z == 1);
    CHECK(r == 255);
    CHECK(b == 0);

    f.depth.setTo(1.f);
    export_ply(f, K, dir / "c.ply");
    CHECK(ply_vertices(dir / "c.ply") == static_cast<int>(unproject(f.depth, K).size()));
    CHECK(ply_vertices(dir / "c.ply") == 4);
}
