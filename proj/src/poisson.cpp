#include "mvinpaint/poisson.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace mvi {

PoissonResult solve_poisson(const MaskImage& domain, const MaskImage& fixed, const GrayImage& boundary,
                            const GrayImage& vx, const GrayImage& vy, const PoissonOptions& options) {
    const int w = domain.cols, h = domain.rows;
    PoissonResult res;
    res.value = boundary.clone();

    cv::Mat1i index(domain.size(), -1);
    std::vector<int> px;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (domain(y, x)) {
                index(y, x) = static_cast<int>(px.size());
                px.push_back(y * w + x);
            }
    const size_t n = px.size();
    if (n == 0) return res;

    static const int dx[4] = {1, -1, 0, 0};
    static const int dy[4] = {0, 0, 1, -1};
    std::vector<double> diag(n, 0.0), b(n, 0.0);
    std::vector<std::array<int, 4>> nbr(n);
    for (size_t i = 0; i < n; ++i) {
        const int x = px[i] % w, y = px[i] / w;
        nbr[i].fill(-1);
        for (int k = 0; k < 4; ++k) {
            const int qx = x + dx[k], qy = y + dy[k];
            if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
            const bool in_domain = domain(qy, qx) != 0;
            if (!in_domain && !fixed(qy, qx)) continue;
            // Desired u_p - u_q.
            double d;
            if (k == 0) d = -vx(y, x);
            else if (k == 1) d = vx(qy, qx);
            else if (k == 2) d = -vy(y, x);
            else d = vy(qy, qx);
            diag[i] += 1.0;
            b[i] += d;
            if (in_domain) nbr[i][k] = index(qy, qx);
            else b[i] += boundary(qy, qx);
        }
    }

    auto apply = [&](const std::vector<double>& v, std::vector<double>& out) {
        for (size_t i = 0; i < n; ++i) {
            double s = diag[i] * v[i];
            for (int k = 0; k < 4; ++k)
                if (nbr[i][k] >= 0) s -= v[nbr[i][k]];
            out[i] = s;
        }
    };
    auto max_abs = [&](const std::vector<double>& v) {
        double m = 0;
        for (size_t i = 0; i < n; ++i)
            if (diag[i] > 0) m = std::max(m, std::abs(v[i]));
        return m;
    };

    std::vector<double> x(n), r(n), p(n), ap(n);
    for (size_t i = 0; i < n; ++i) x[i] = boundary(px[i] / w, px[i] % w);
    apply(x, ap);
    for (size_t i = 0; i < n; ++i) r[i] = diag[i] > 0 ? b[i] - ap[i] : 0.0;
    p = r;
    double rr = 0;
    for (double v : r) rr += v * v;

    int it = 0;
    double resid = max_abs(r);
    while (resid >= options.tolerance && it < options.max_iters) {
        apply(p, ap);
        double pap = 0;
        for (size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
        if (!(pap > 0)) break;
        const double alpha = rr / pap;
        for (size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        ++it;
        // Refresh the residual now and then to avoid drift.
        if (it % 50 == 0) {
            apply(x, ap);
            for (size_t i = 0; i < n; ++i) r[i] = diag[i] > 0 ? b[i] - ap[i] : 0.0;
        }
        double rr_new = 0;
        for (double v : r) rr_new += v * v;
        resid = max_abs(r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    // Report the true residual, not the recursive one.
    apply(x, ap);
    for (size_t i = 0; i < n; ++i) r[i] = diag[i] > 0 ? b[i] - ap[i] : 0.0;
    resid = max_abs(r);

    res.iterations = it;
    res.residual = resid;
    if (resid >= options.tolerance)
        throw SolverError(it, "Poisson solver did not converge after " + std::to_string(it) + " iterations");
    for (size_t i = 0; i < n; ++i) res.value(px[i] / w, px[i] % w) = static_cast<float>(x[i]);
    return res;
}

ColorImageF poisson_blend(const ColorImageF& color, const Composite& comp, const CombineInput& in,
                          const PoissonOptions& options, int* iterations) {
    const int w = in.rect.width, h = in.rect.height;
    MaskImage domain = MaskImage::zeros(h, w), fixed = MaskImage::zeros(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (in.dilated(y, x)) {
                if (!comp.residual(y, x)) domain(y, x) = 255;
            } else if (in.other_masks.empty() || !in.other_masks(y, x)) {
                fixed(y, x) = 255;
            }
        }

    auto label_at = [&](int y, int x) { return in.dilated(y, x) ? comp.labels(y, x) : 0; };
    auto valid = [&](int l, int y, int x) {
        if (l < 0) return false;
        if (l == 0) return fixed(y, x) != 0;
        return in.proposals[l - 1].validity(y, x) != 0;
    };
    auto value = [&](int l, int y, int x, int c) {
        return l == 0 ? in.target(y, x)[c] : in.proposals[l - 1].color(y, x)[c];
    };
    // Guided difference u(q) - u(p) on the edge p -> q.
    auto guide = [&](int py, int px, int qy, int qx, int c) -> float {
        const int lp = label_at(py, px), lq = label_at(qy, qx);
        double sum = 0;
        int count = 0;
        for (int l : {lp, lq}) {
            if (count == 1 && l == lp) break;  // same label, same difference
            if (valid(l, py, px) && valid(l, qy, qx)) {
                sum += value(l, qy, qx, c) - value(l, py, px, c);
                ++count;
            }
        }
        if (count > 0) return static_cast<float>(sum / count);
        return color(qy, qx)[c] - color(py, px)[c];
    };

    ColorImageF out = color.clone();
    int total_iters = 0;
    for (int c = 0; c < 3; ++c) {
        GrayImage vx = GrayImage::zeros(h, w), vy = GrayImage::zeros(h, w), bnd(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                bnd(y, x) = fixed(y, x) ? in.target(y, x)[c] : color(y, x)[c];
                const bool here = domain(y, x) != 0;
                if (x + 1 < w && (here || domain(y, x + 1))) vx(y, x) = guide(y, x, y, x + 1, c);
                if (y + 1 < h && (here || domain(y + 1, x))) vy(y, x) = guide(y, x, y + 1, x, c);
            }
        PoissonResult r = solve_poisson(domain, fixed, bnd, vx, vy, options);
        total_iters += r.iterations;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (domain(y, x)) out(y, x)[c] = std::clamp(r.value(y, x), 0.f, 1.f);
    }
    if (iterations) *iterations = total_iters;
    return out;
}

}  // namespace mvi
