"""Pure-numpy weighted L_alpha solver (reference implementation and fallback).

The compiled module ``_kernels`` implements the same algorithm for the
Euclidean, sphere and hyperboloid kernels; this version works for every
:class:`~metric_causal.geometry.Manifold`.

Algorithm
---------
Riemannian descent from the best data point. The search direction is the
weighted mean of the log vectors, ``sum(w_i log_p y_i)`` for ``alpha=2`` and
the Weiszfeld direction ``sum(w_i/d_i log_p y_i) / sum(w_i/d_i)`` for
``alpha=1``; a step of 1 along either is exact in flat space. Data points
coinciding with the iterate are handled with the Vardi-Zhang correction, and
the step is halved until the objective does not increase (up to rounding).
The loop stops unconverged once neither the objective nor the best gradient
norm seen so far has halved for ``STALL_LIMIT`` iterations, which happens
when rounding in the log map keeps the gradient norm above the tolerance.
"""
import numpy as np

# relative allowance for rounding when comparing objective values
ROUNDING = 1e-14
MIN_STEP = 1e-12
# iterations without a real decrease before giving up at the rounding floor
STALL_LIMIT = 20


def objective(manifold, points, weights, alpha, p):
    d = manifold.dist(p, points)
    return float(np.sum(weights * (d * d if alpha == 2 else d)))


def best_data_point(manifold, points, weights, alpha):
    """Index of the sample point with the smallest weighted objective."""
    D = manifold.pairwise_dist(points)
    vals = (D * D if alpha == 2 else D) @ weights
    return int(np.argmin(vals))


def descent_step(manifold, points, weights, alpha, p, eps):
    """Return ``(gradient_norm, direction, slope)`` at ``p``.

    ``gradient_norm`` is the norm of the minimal-norm (sub)gradient,
    ``direction`` the search direction and ``slope`` the directional
    derivative of the objective along it.
    """
    d = manifold.dist(p, points)
    L = manifold.log(p, points)
    if alpha == 2:
        D = np.tensordot(weights, L, axes=1)
        dn = float(manifold.norm(p, D))
        return 2.0 * dn, D, -2.0 * dn * dn
    near = d <= eps
    wc = float(np.sum(weights[near]))
    far = ~near
    if not np.any(far):
        return 0.0, manifold.zero_tangent(p), 0.0
    coef = weights[far] / np.sqrt(d[far] ** 2 + eps * eps)
    R = np.tensordot(coef, L[far], axes=1)
    rn = float(manifold.norm(p, R))
    gnorm = max(0.0, rn - wc)
    if gnorm == 0.0:
        return 0.0, manifold.zero_tangent(p), 0.0
    D = R / coef.sum()
    if wc > 0.0:
        D = D * (1.0 - wc / rn)
    dn = float(manifold.norm(p, D))
    slope = -float(manifold.inner(p, R, D)) + wc * dn
    return gnorm, D, slope


def solve_l_alpha(manifold, points, weights, alpha, init, max_iterations=1000,
                  step_size=1.0, tol=1e-9, eps=1e-9, snap_radius=1e-6):
    """Minimise ``sum(w_i d(p, y_i)^alpha)`` over the manifold.

    Returns
    -------
    tuple
        ``(minimizer, objective, iterations, converged, gradient_norm, trace)``
    """
    p = np.array(init, copy=True)
    f = objective(manifold, points, weights, alpha, p)
    trace = [f]
    iterations = 0
    converged = False
    gnorm = np.inf
    stalled = 0
    best_gnorm = np.inf
    while True:
        if alpha == 1 and snap_radius > 0:
            d = manifold.dist(p, points)
            j = int(np.argmin(d))
            if eps < d[j] < snap_radius:
                g_j, _, _ = descent_step(manifold, points, weights, alpha, points[j], eps)
                f_j = objective(manifold, points, weights, alpha, points[j])
                if g_j <= tol and f_j <= f + ROUNDING * max(1.0, abs(f)):
                    p, f = np.array(points[j], copy=True), f_j
                    trace.append(f)
        gnorm, D, slope = descent_step(manifold, points, weights, alpha, p, eps)
        if gnorm <= tol:
            converged = True
            break
        if gnorm < 0.5 * best_gnorm:
            best_gnorm, stalled = gnorm, 0
        if iterations >= max_iterations or slope >= 0.0 or stalled >= STALL_LIMIT:
            break
        t = step_size
        while t >= MIN_STEP * step_size:
            p_new = manifold.exp(p, t * D)
            f_new = objective(manifold, points, weights, alpha, p_new)
            if f_new <= f + ROUNDING * max(1.0, abs(f)):
                break
            t *= 0.5
        else:
            break
        stalled = stalled + 1 if f_new >= f - ROUNDING * max(1.0, abs(f)) else 0
        p, f = p_new, f_new
        trace.append(f)
        iterations += 1
    return p, f, iterations, converged, gnorm, np.asarray(trace)
