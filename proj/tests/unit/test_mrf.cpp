#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvinpaint/mrf.hpp"

#include <random>

using namespace mvi;

namespace {

EnergyModel random_model(int w, int h, int labels, std::mt19937_64& rng, double smooth = 1.0) {
    std::uniform_real_distribution<double> u(0, 1);
    EnergyModel m(w, h, labels, 2);
    m.smooth_weight = smooth;
    for (auto& c : m.data) c = 4 * u(rng);
    for (auto& f : m.features) f = static_cast<float>(2 * u(rng));
    return m;
}

// Exhaustive minimum over all labellings (small grids only).
double brute_force(const EnergyModel& m) {
    const int n = m.pixels();
    std::vector<int> lab(n, 0);
    double best = kInfCost;
    while (true) {
        best = std::min(best, evaluate_energy(m, lab));
        int i = 0;
        while (i < n && ++lab[i] == m.labels) lab[i++] = 0;
        if (i == n) break;
    }
    return best;
}

WarpedProposal flat_proposal(cv::Size size, cv::Vec3f c, int id) {
    WarpedProposal p;
    p.source_id = id;
    p.rect = cv::Rect(cv::Point(0, 0), size);
    p.color = ColorImageF(size, c);
    p.depth = DepthImage(size, 1.f);
    p.source_mask = MaskImage::zeros(size);
    p.validity = MaskImage(size, 255);
    return p;
}

}  // namespace

TEST_CASE("maxflow: textbook network") {
    // s=4, t=5; classic CLRS example with max flow 23
    MaxFlow g(4);
    g.add_terminal(0, 16, 0);
    g.add_terminal(1, 13, 0);
    g.add_edge(0, 2, 12);
    g.add_edge(1, 0, 4);
    g.add_edge(0, 1, 10);
    g.add_edge(2, 1, 9);
    g.add_edge(1, 3, 14);
    g.add_edge(3, 2, 7);
    g.add_terminal(2, 0, 20);
    g.add_terminal(3, 0, 4);
    CHECK(g.solve() == doctest::Approx(23));
}

TEST_CASE("maxflow: cut side") {
    MaxFlow g(2);
    g.add_terminal(0, 5, 1);
    g.add_terminal(1, 1, 5);
    g.add_edge(0, 1, 0.5, 0.5);
    CHECK(g.solve() == doctest::Approx(2.5));
    CHECK(g.source_side(0));
    CHECK_FALSE(g.source_side(1));
}

TEST_CASE("binary energy matches enumeration") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 3);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 7;
        BinaryEnergy e(n);
        std::vector<std::array<double, 2>> un(n);
        struct P {
            int p, q;
            double a, b, c, d;
        };
        std::vector<P> pairs;
        for (int i = 0; i < n; ++i) {
            un[i] = {u(rng), u(rng)};
            e.add_unary(i, un[i][0], un[i][1]);
        }
        for (int k = 0; k < 10; ++k) {
            int p = static_cast<int>(rng() % n), q = static_cast<int>(rng() % n);
            if (p == q) continue;
            double a = u(rng), d = u(rng), b = u(rng);
            double c = a + d - b + u(rng);  // keeps b + c >= a + d
            pairs.push_back({p, q, a, b, c, d});
            e.add_pair(p, q, a, b, c, d);
        }
        auto energy = [&](const std::vector<int>& x) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += un[i][x[i]];
            for (const auto& t : pairs) {
                const int xp = x[t.p], xq = x[t.q];
                s += xp == 0 ? (xq == 0 ? t.a : t.b) : (xq == 0 ? t.c : t.d);
            }
            return s;
        };
        double best = kInfCost;
        for (int mask = 0; mask < (1 << n); ++mask) {
            std::vector<int> x(n);
            for (int i = 0; i < n; ++i) x[i] = (mask >> i) & 1;
            best = std::min(best, energy(x));
        }
        CHECK(energy(e.minimize()) == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("solve_mrf: two labels are exact") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        EnergyModel m = random_model(3, 3, 2, rng);
        LabelField f = solve_mrf(m);
        CHECK(f.energy == doctest::Approx(brute_force(m)).epsilon(1e-12));
        CHECK(f.energy == doctest::Approx(evaluate_energy(m, f.labels)).epsilon(1e-12));
    }
}

TEST_CASE("solve_mrf: expansion trace never rises") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        EnergyModel m = random_model(6, 5, 4, rng, 0.7);
        LabelField f = solve_mrf(m);
        for (size_t i = 1; i < f.trace.size(); ++i) CHECK(f.trace[i] <= f.trace[i - 1] + 1e-12);
        CHECK(f.energy == doctest::Approx(f.trace.back()));
    }
}

TEST_CASE("solve_mrf: near-optimal for three labels") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        EnergyModel m = random_model(3, 3, 3, rng);
        CHECK(solve_mrf(m).energy <= brute_force(m) * 1.01 + 1e-12);
    }
}

TEST_CASE("solve_mrf: infinite everywhere leaves a residual hole") {
    EnergyModel m(3, 1, 2, 1);
    for (auto& f : m.features) f = 0;
    m.cost(0, 0) = 1;
    m.cost(0, 1) = 2;
    m.cost(1, 0) = kInfCost;
    m.cost(1, 1) = kInfCost;
    m.cost(2, 0) = kInfCost;
    m.cost(2, 1) = 0.5;
    LabelField f = solve_mrf(m);
    CHECK(f.labels == std::vector<int>{0, -1, 1});
    CHECK(f.residual_holes == 1);
    CHECK(std::isfinite(f.energy));
}

TEST_CASE("data cost") {
    const cv::Vec3f v(0.5f, 0.5f, 0.5f), ref(0.5f, 0.5f, 0.5f);
    CHECK(data_cost(v, true, ref, 1.0, 1.0, 1.0) == doctest::Approx(1.718281828).epsilon(1e-8));
    CHECK(data_cost(cv::Vec3f(0.8f, 0.9f, 0.5f), true, ref, 0.0, 2.0, 1.0) ==
          doctest::Approx(2 * 0.5).epsilon(1e-6));  // |(0.3, 0.4, 0)| = 0.5
    CHECK(std::isinf(data_cost(v, false, ref, 0.0, 1.0, 1.0)));
}

TEST_CASE("smooth cost: hand example") {
    // 3x3 image whose center column steps; label a is the image, label b flat.
    ColorImageF step(3, 3, cv::Vec3f(0, 0, 0));
    for (int y = 0; y < 3; ++y) step(y, 2) = cv::Vec3f(1, 1, 1);
    cv::Mat_<cv::Vec6f> fa = sobel_features(step);
    cv::Mat_<cv::Vec6f> fb = sobel_features(ColorImageF(3, 3, cv::Vec3f(0.3f, 0.3f, 0.3f)));
    // Sobel x at (1,1) = (1+2+1)*1 = 4 per channel, y = 0; flat image gives 0.
    for (int c = 0; c < 3; ++c) {
        CHECK(fa(1, 1)[2 * c] == doctest::Approx(4));
        CHECK(fa(1, 1)[2 * c + 1] == doctest::Approx(0));
    }
    const double expected = std::sqrt(3 * 16.0) + cv::norm(fa(1, 2));
    CHECK(smooth_cost(fa(1, 1), fb(1, 1), fa(1, 2), fb(1, 2)) == doctest::Approx(expected));
    CHECK(smooth_cost(fa(1, 1), fa(1, 1), fa(1, 2), fa(1, 2)) == 0);
}

TEST_CASE("median image weights") {
    cv::Size sz(4, 4);
    ColorImageF target(sz, cv::Vec3f(0.5f, 0.5f, 0.5f));
    MaskImage known(sz, 255);
    std::vector<WarpedProposal> props = {flat_proposal(sz, {0.6f, 0.6f, 0.6f}, 1),
                                         flat_proposal(sz, {0.7f, 0.7f, 0.7f}, 2)};
    MedianImage m = median_image(props, target, known);
    // mean SSD 0.03 and 0.12: weights 1 - 0.2 and 1 - 0.8
    CHECK(m.mean_ssd[0] == doctest::Approx(0.03).epsilon(1e-5));
    CHECK(m.mean_ssd[1] == doctest::Approx(0.12).epsilon(1e-5));
    CHECK(m.weights[0] == doctest::Approx(0.8).epsilon(1e-5));
    CHECK(m.weights[1] == doctest::Approx(0.2).epsilon(1e-5));
    CHECK(m.color(2, 2)[0] == doctest::Approx(0.8 * 0.6 + 0.2 * 0.7).epsilon(1e-5));

    props[1].validity(1, 1) = 0;
    props[0].validity(3, 3) = props[1].validity(3, 3) = 0;
    m = median_image(props, target, known);
    CHECK(m.color(1, 1)[0] == doctest::Approx(0.6));
    CHECK(m.empty(3, 3) == 255);
    CHECK(m.empty(0, 0) == 0);
}

TEST_CASE("energy over a working rectangle") {
    cv::Size sz(5, 5);
    CombineInput in;
    in.rect = cv::Rect(cv::Point(0, 0), sz);
    in.target = ColorImageF(sz, cv::Vec3f(0.4f, 0.4f, 0.4f));
    in.region = MaskImage::zeros(sz);
    in.region(2, 2) = 255;
    in.dilated = MaskImage::zeros(sz);
    in.dilated(cv::Rect(1, 1, 3, 3)).setTo(255);
    in.other_masks = MaskImage::zeros(sz);
    in.other_masks(0, 4) = 255;
    in.proposals = {flat_proposal(sz, {0.4f, 0.4f, 0.4f}, 3), flat_proposal(sz, {0.9f, 0.9f, 0.9f}, 7)};
    in.proposals[0].baseline = 0.1;
    in.proposals[1].validity(2, 3) = 0;
    MaskImage known = in.dilated == 0;
    MedianImage med = median_image(in.proposals, in.target, known);
    MrfParams params;
    EnergyModel m = build_energy(in, med, params);
    CHECK(m.labels == 3);
    CHECK(std::isinf(m.cost(2 * 5 + 2, 0)));  // target label forbidden in the dilation
    CHECK(m.cost(0, 0) == 0);
    CHECK(m.cost(0, 1) == doctest::Approx(params.lambda2 * (std::exp(0.1) - 1)));
    CHECK(std::isinf(m.cost(2 * 5 + 3, 2)));
    CHECK(m.cost(4, 1) == 0);  // other-mask pixel is don't-care

    LabelField f = solve_mrf(m);
    for (int y = 1; y < 4; ++y)
        for (int x = 1; x < 4; ++x) CHECK(f.labels[y * 5 + x] == 1);
    Composite c = composite(f, in);
    CHECK(c.source_frame(2, 2) == 3);
    CHECK(c.depth_source(2, 2) == 0);
    CHECK(c.source_frame(0, 0) == -1);
    CHECK(cv::countNonZero(c.residual) == 0);
}

TEST_CASE("mrf parameters validate") {
    MrfParams p;
    CHECK_NOTHROW(p.validate());
    p.lambda1 = -1;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}
