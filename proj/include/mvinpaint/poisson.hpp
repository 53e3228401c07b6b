#pragma once

#include "mvinpaint/mrf.hpp"

namespace mvi {

struct PoissonOptions {
    double tolerance = 1e-6;  // on the max-norm residual
    int max_iters = 10000;
};

struct PoissonResult {
    GrayImage value;
    int iterations = 0;
    double residual = 0.0;
};

/// Solves the 5-point Poisson equation on `domain` pixels:
///   sum_q (u_p - u_q) = sum_q (g_p - g_q)
/// where the guided difference across edge (x,y)->(x+1,y) is vx(y,x) and
/// across (x,y)->(x,y+1) is vy(y,x), i.e. u(x+1) - u(x) ~ vx(x).
/// Non-domain neighbours with `fixed` set are Dirichlet values taken from
/// `boundary`; other neighbours (and the image border) contribute nothing.
/// The initial guess is `boundary` itself. Conjugate gradient; throws
/// SolverError when the residual does not reach the tolerance.
PoissonResult solve_poisson(const MaskImage& domain, const MaskImage& fixed, const GrayImage& boundary,
                            const GrayImage& vx, const GrayImage& vy, const PoissonOptions& options = {});

/// Blends the composite over the dilated region: guidance from the chosen
/// proposals' own gradients, Dirichlet values from the surrounding target.
/// Residual holes are left untouched.
ColorImageF poisson_blend(const ColorImageF& composite_color, const Composite& comp, const CombineInput& in,
                          const PoissonOptions& options = {}, int* iterations = nullptr);

}  // namespace mvi
