#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvinpaint/selection.hpp"

#include "../support/scene.hpp"

#include <random>

using namespace mvi;

namespace {

// Bounding boxes by scanning every labelled pixel.
std::map<int, cv::Rect> brute_boxes(const MaskImage& mask) {
    cv::Mat1i labels;
    cv::connectedComponents(mask, labels, 8, CV_32S);
    std::map<int, cv::Rect> boxes;
    for (int y = 0; y < mask.rows; ++y)
        for (int x = 0; x < mask.cols; ++x) {
            int l = labels(y, x);
            if (l == 0) continue;
            auto it = boxes.find(l);
            if (it == boxes.end()) boxes[l] = cv::Rect(x, y, 1, 1);
            else it->second |= cv::Rect(x, y, 1, 1);
        }
    return boxes;
}

struct SmallSequence {
    Sequence seq;
    std::vector<FeatureSet> features;
    std::optional<VocabTree> tree;
};

// Frame 0 is the target (ball masked); frame 1 an unmasked copy of its
// background from the same pose; frames 2.. move away.
SmallSequence desk(int frames) {
    synth::DeskScene ds(frames + 1, 160, 120, 4);
    SmallSequence s;
    s.seq.intrinsics = ds.K;
    for (int i = 0; i < frames; ++i) {
        const int k = i == 0 ? 1 : i;  // frames 0 and 1 share pose 1
        synth::Render r = ds.frame(k, i == 0);
        Frame f;
        f.id = i;
        f.timestamp = i;
        f.color = r.color;
        f.depth = r.depth;
        f.mask = i == 0 ? r.occluder : MaskImage::zeros(r.color.size());
        f.pose = ds.poses[k];
        s.seq.frames.push_back(f);
        FeatureSet fs = detect_describe(to_gray(f.color), MaskImage(f.mask == 0));
        fs.frame_id = i;
        s.features.push_back(fs);
    }
    s.tree = VocabTree::build(s.features, 4, 3, 0);
    return s;
}

}  // namespace

TEST_CASE("mask regions: empty, single block, disjoint blobs") {
    CHECK(extract_mask_regions(MaskImage::zeros(20, 20)).empty());

    MaskImage m = MaskImage::zeros(30, 30);
    m(cv::Rect(10, 10, 3, 3)).setTo(255);
    auto r = extract_mask_regions(m);
    REQUIRE(r.size() == 1);
    CHECK(r[0].x0 == 10);
    CHECK(r[0].y0 == 10);
    CHECK(r[0].x1 == 12);
    CHECK(r[0].y1 == 12);
    CHECK(r[0].area() == 9);
    CHECK(cv::countNonZero(r[0].ring_pixels()) == 0);

    MaskImage two = MaskImage::zeros(60, 80);
    cv::circle(two, {20, 20}, 8, 255, cv::FILLED);
    cv::ellipse(two, {55, 40}, {12, 6}, 30, 0, 360, 255, cv::FILLED);
    auto regions = extract_mask_regions(two);
    REQUIRE(regions.size() == 2);
    auto boxes = brute_boxes(two);
    for (const auto& reg : regions) {
        bool matched = false;
        for (auto& [l, b] : boxes) matched = matched || b == reg.rect();
        CHECK(matched);
        CHECK(reg.area() + cv::countNonZero(reg.ring_pixels()) == reg.rect().area());
    }
    CHECK(regions[0].y0 < regions[1].y0);
}

TEST_CASE("image quality: constant, sharp vs blurred, binary step") {
    CHECK(image_quality(GrayImage(40, 40, 0.3f)) == 0.0);
    GrayImage board(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) board(y, x) = ((x / 4 + y / 4) % 2) ? 1.f : 0.f;
    GrayImage blurred;
    cv::GaussianBlur(board, blurred, cv::Size(0, 0), 2.5);
    CHECK(image_quality(board) > image_quality(blurred));
    GrayImage step(32, 32, 0.f);
    step(cv::Rect(16, 0, 16, 32)).setTo(1.f);
    CHECK(image_quality(step) == doctest::Approx(1.0));
}

TEST_CASE("frame distance") {
    Pose a(Eigen::Quaterniond(Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitX())), Eigen::Vector3d(1, 2, 3));
    CHECK(frame_distance(a, a) == doctest::Approx(0.0));
    Pose b(Eigen::Quaterniond(Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ())), Eigen::Vector3d::Zero());
    CHECK(frame_distance(Pose::identity(), b) == doctest::Approx(M_PI / 2));
    Pose c(Eigen::Quaterniond::Identity(), Eigen::Vector3d(0, 0.5, 0));
    CHECK(frame_distance(Pose::identity(), c) == doctest::Approx(0.5));
    CHECK_FALSE(frame_distance(std::optional<Pose>(a), std::nullopt).has_value());
    CHECK_FALSE(frame_distance(std::nullopt, std::optional<Pose>(a)).has_value());
}

TEST_CASE("suitability scores by hand") {
    std::vector<CandidateFactors> c(3);
    c[0] = {5, 1.0, 0.0, 1.0};
    c[1] = {9, 1.0, 1.0, 1.0};
    c[2] = {7, 0.0, 0.0, 1.0};
    auto s = score_candidates(c, 1.0, 1.0);
    REQUIRE(s.size() == 3);
    CHECK(s[0].frame_id == 5);
    CHECK(s[0].score == doctest::Approx(1.0));
    CHECK(s[1].frame_id == 7);
    CHECK(s[2].frame_id == 9);
    CHECK(s[1].score == doctest::Approx(0.0));
    CHECK(s[2].score == doctest::Approx(0.0));

    // The quality ratio scales the combined term.
    c[0].q_ratio = 0.5;
    s = score_candidates(c, 1.0, 1.0);
    CHECK(s[0].frame_id == 5);
    CHECK(s[0].score == doctest::Approx(0.5));

    // Unsolvable candidates are dropped before normalizing.
    c[2].distance = std::nullopt;
    s = score_candidates(c, 1.0, 1.0);
    REQUIRE(s.size() == 2);
    CHECK(s[0].frame_id == 5);
    CHECK(s[1].frame_id == 9);
    CHECK(s[1].d == doctest::Approx(1.0));
}

TEST_CASE("parameter validation") {
    SelectionParams p;
    CHECK_NOTHROW(p.validate());
    p.m = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.n = 2;
    p.m = 3;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("source selection on a rendered sequence") {
    SmallSequence s = desk(6);
    auto regions = extract_mask_regions(s.seq.frames[0].mask);
    REQUIRE(regions.size() == 1);
    SelectionContext ctx;
    ctx.sequence = &s.seq;
    ctx.target = 0;
    ctx.tree = &*s.tree;
    ctx.relative_pose = [&](FrameId id) -> std::optional<Pose> {
        return s.seq.frames[0].pose->inverse() * *s.seq.frame(id).pose;
    };
    SelectionParams p;
    p.n = 5;
    p.m = 3;

    SUBCASE("an unmasked duplicate of the target ranks first") {
        auto r = select_sources(regions[0], ctx, p);
        REQUIRE(r.sources.size() == 3);
        CHECK(r.sources[0] == 1);
        CHECK(r.scores[0].d == doctest::Approx(0.0));
    }
    SUBCASE("no solvable distance is a selection error") {
        ctx.relative_pose = [](FrameId) { return std::optional<Pose>(); };
        CHECK_THROWS_AS(select_sources(regions[0], ctx, p), SelectionError);
    }
    SUBCASE("a source masked over the same footprint is excluded") {
        s.seq.frames[1].mask = s.seq.frames[0].mask.clone();
        auto r = select_sources(regions[0], ctx, p);
        CHECK(std::find(r.sources.begin(), r.sources.end(), 1) == r.sources.end());
        CHECK(std::find(r.excluded_masked.begin(), r.excluded_masked.end(), 1) != r.excluded_masked.end());
    }
}

TEST_CASE("masked coverage follows the relative pose") {
    Frame t, src;
    t.color = ColorImage(40, 40, cv::Vec3b(0, 0, 0));
    t.depth = DepthImage(40, 40, 2.f);
    t.mask = MaskImage::zeros(40, 40);
    cv::circle(t.mask, {12, 12}, 4, 255, cv::FILLED);
    src = t;
    src.mask = t.mask.clone();
    CameraIntrinsics K;
    K.width = K.height = 40;
    K.fx = K.fy = 40;
    K.cx = K.cy = 20;
    auto region = extract_mask_regions(t.mask).at(0);
    CHECK(*masked_coverage(region, t, src, Pose::identity(), K) == doctest::Approx(1.0));
    // Shifting the source camera by 10 px worth of baseline clears the footprint.
    Pose shifted(Eigen::Quaterniond::Identity(), Eigen::Vector3d(-0.5, 0, 0));
    CHECK(*masked_coverage(region, t, src, shifted, K) == doctest::Approx(0.0));
    // Entirely out of view.
    Pose far(Eigen::Quaterniond::Identity(), Eigen::Vector3d(-10, 0, 0));
    CHECK_FALSE(masked_coverage(region, t, src, far, K).has_value());
}
