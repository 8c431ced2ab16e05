"""Stationary entanglement between the two particles.

Both the conditional state (fixed by the measurement alone) and the
unconditional state produced by cold damping are products of Gaussians in
the sum and difference modes.  Entanglement between the *particles* is
quantified by the logarithmic negativity of the partially transposed
covariance matrix.

All covariance matrices here are dimensionless (vacuum variance 1/2), in
(X+, P+, X-, P-) order.  The dimensionless moments depend on the physics
only through omega_s / omega0, Gamma / omega0, eta_eff, gamma_s and the
filter bandwidths.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .constants import HBAR
from .gaussian import (CovarianceState, check_physical,
                       stationary_conditional_covariance, zeta_squared)

__all__ = [
    "NegativityResult",
    "DampingOptimum",
    "unconditional_covariance",
    "unconditional_covariance_weak",
    "conditional_covariance",
    "symplectic_eigenvalues",
    "log_negativity",
    "duan_criterion",
    "analytic_damping",
    "optimize_damping",
    "weak_coupling_negativity",
    "occupation_plus",
    "conditional_negativity",
    "conditional_min_eigenvalue_expansion",
    "expansion_h",
    "negativity_leading_order",
    "unconditional_moments",
    "conditional_moments",
    "pt_symplectic_min",
    "max_negativity_grid",
]

# parameters for the damping search, in units of Gamma sqrt(eta) omega0 / omega_s
SEARCH_LO = 1e-3
SEARCH_HI = 1e1


@dataclass(frozen=True)
class NegativityResult:
    E_N: float
    c_min: float
    c_max: float
    duan_value: float
    duan_violated: bool
    gamma_plus: float = float("nan")
    gamma_minus: float = float("nan")
    kind: str = "unconditional"

    @property
    def raw(self):
        """-log2(2 c_min) without clipping at zero."""
        return -math.log2(2 * self.c_min)


@dataclass(frozen=True)
class DampingOptimum:
    gamma_plus: float
    gamma_minus: float
    result: NegativityResult
    seed_plus: float
    seed_minus: float
    seed_value: float        # unclipped -log2(2 c_min) at the analytic seed
    value: float             # unclipped -log2(2 c_min) at the optimum


# ---------------------------------------------------------------------------
# covariances

def _require_no_out_loop(derived):
    if derived.eta_out != 0:
        raise ValueError("unconditional covariance assumes eta_out = 0; use derived.replace(eta_out=0)")


def unconditional_covariance(derived, gamma_plus, gamma_minus, bandwidth_plus, bandwidth_minus):
    """Unconditional stationary covariance under cold damping (dimensionless).

    Per mode, with eta = eta_in:

        E<x^2> = L^2 gamma / (2 eta) + (hbar^2 / 8L^2 + D_g) / (m^2 w^2 gamma)
        E<p^2> = m^2 w^2 [E<x^2> + (L^2 / eta)(zeta^2 gamma + Omega gamma^2 / (2 w^2))]
        E<xp + px>/2 = m L^2 w zeta gamma / (sqrt(2) eta)

    These assume the filter is flat over the mechanical line and keep its
    bandwidth only where it regularises the momentum integral.  The
    symmetrised cross moment of a truly stationary state vanishes (the time
    derivative of E<x^2> is E<xp + px>/m), so the last line is an artefact
    of that approximation of order Gamma / omega0.
    ``spectra.first_moment_covariance`` gives the filter-exact moments.
    """
    _require_no_out_loop(derived)
    d = derived
    m, L2, eta = d.mass, d.L2, d.eta_in
    cov = np.zeros((4, 4))
    for i, w, gam, Om in ((0, d.omega_plus, gamma_plus, bandwidth_plus),
                          (2, d.omega_minus, gamma_minus, bandwidth_minus)):
        if not gam > 0:
            raise ValueError("damping rates must be positive")
        z2 = zeta_squared(d, w, eta)
        Ex = L2 * gam / (2 * eta) + (HBAR**2 / (8 * L2) + d.D_g) / (m**2 * w**2 * gam)
        Ep = m**2 * w**2 * (Ex + L2 / eta * (z2 * gam + Om * gam**2 / (2 * w**2)))
        Exp = m * L2 * w * math.sqrt(z2) * gam / (math.sqrt(2) * eta)
        cov[i:i + 2, i:i + 2] = [[Ex, Exp], [Exp, Ep]]
    state = CovarianceState(np.zeros(4), cov, "unconditional", "si")
    return state.to_dimensionless(d.omega0, d.mass)


def unconditional_covariance_weak(derived, gamma_plus, gamma_minus, bandwidth_plus, bandwidth_minus):
    """Leading order in Gamma / omega0 of the unconditional covariance.

    Cross-check only; the exact form is ``unconditional_covariance``.
    """
    _require_no_out_loop(derived)
    d = derived
    w0, G, eta = d.omega0, d.Gamma, d.eta_eff
    cov = np.zeros((4, 4))
    for i, w, gam, Om in ((0, d.omega_plus, gamma_plus, bandwidth_plus),
                          (2, d.omega_minus, gamma_minus, bandwidth_minus)):
        X = gam / (16 * eta * G) + w0**2 * G / (w**2 * gam)
        P = w**2 * gam / (16 * eta * w0**2 * G) + G / gam + Om * gam**2 / (16 * eta * w0**2 * G)
        C = gam / (4 * math.sqrt(eta) * w)
        cov[i:i + 2, i:i + 2] = [[X, C], [C, P]]
    return CovarianceState(np.zeros(4), cov, "unconditional", "dimensionless")


def conditional_covariance(derived):
    """Stationary conditional covariance, dimensionless."""
    return stationary_conditional_covariance(derived).to_dimensionless(derived.omega0, derived.mass)


# ---------------------------------------------------------------------------
# vectorised dimensionless moments (omega0 = 1 units)

def conditional_moments(eta, G, ws):
    """(V_X, V_P, C) of the conditional state for frequency ws (units of omega0)."""
    eta, G, ws = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (eta, G, ws)))
    a = 16 * eta * G**2
    u = np.sqrt(ws**4 + a)
    # sqrt(u - ws^2) without cancellation
    root = np.sqrt(a / (u + ws**2))
    VX = root / (4 * math.sqrt(2) * eta * G)
    VP = ws**2 * VX + 32 * eta**2 * G**2 * VX**3
    C = 4 * eta * G * VX**2
    return VX, VP, C


def unconditional_moments(eta, G, ws, gam, Om):
    """(E X^2, E P^2, E sym XP) of the unconditional state, omega0 = 1 units."""
    eta, G, ws, gam, Om = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (eta, G, ws, gam, Om)))
    a = 16 * eta * G**2
    u = np.sqrt(ws**4 + a)
    root = np.sqrt(a / (u + ws**2))
    X = gam / (16 * eta * G) + G / (ws**2 * gam)
    P = (2 * u - ws**2) / (16 * eta * G) * gam + G / gam + Om * gam**2 / (16 * eta * G)
    C = root / (8 * math.sqrt(2) * eta * G) * gam
    return X, P, C


def pt_symplectic_min(Xp, Pp, Cp, Xm, Pm, Cm):
    """Smallest symplectic eigenvalue of the partial transpose.

    For block-diagonal sum/difference covariances, transforming to the
    particle basis and flipping one particle momentum gives

        c^2 = (Delta -+ sqrt(Delta^2 - 4 det)) / 2,
        Delta = X+ P- + X- P+ - 2 C+ C-,
        det = (X+ P+ - C+^2)(X- P- - C-^2).
    """
    Delta = Xp * Pm + Xm * Pp - 2 * Cp * Cm
    det = (Xp * Pp - Cp**2) * (Xm * Pm - Cm**2)
    # Delta^2 - 4 det regrouped so it does not cancel near degeneracy
    disc2 = (Xp * Pm - Xm * Pp)**2 + 4 * (Xp * Cm - Xm * Cp) * (Pp * Cm - Pm * Cp)
    disc = np.sqrt(np.maximum(disc2, 0.0))
    # smaller root as det / larger root avoids cancellation
    big = (Delta + disc) / 2
    return np.sqrt(det / big), np.sqrt(big)


# ---------------------------------------------------------------------------
# entanglement measures

def _blocks(state):
    if state.basis != "dimensionless":
        raise ValueError("expected a dimensionless state")
    c = state.cov
    off = np.concatenate([c[0:2, 2:4].ravel()])
    scale = np.max(np.abs(c))
    if np.max(np.abs(off)) > 1e-12 * scale:
        raise ValueError("state must be block diagonal in the sum and difference modes")
    return c[0, 0], c[1, 1], c[0, 1], c[2, 2], c[3, 3], c[2, 3]


def symplectic_eigenvalues(state):
    """Symplectic eigenvalues (c1 >= c2) of the partially transposed state.

    Raises
    ------
    NonPhysicalState
        If the state itself violates the uncertainty principle.
    """
    Xp, Pp, Cp, Xm, Pm, Cm = _blocks(state)
    check_physical(state)
    c_min, c_max = pt_symplectic_min(Xp, Pp, Cp, Xm, Pm, Cm)
    return float(max(c_max, c_min)), float(min(c_max, c_min))


def duan_criterion(state):
    """EPR-variance test: min(X+^2 + P-^2, X-^2 + P+^2) < 1 signals entanglement.

    In particle coordinates X- and P+ are the relative position and total
    momentum (and vice versa), so each sum is an EPR variance with
    separable bound 1 in the vacuum-1/2 convention.
    """
    c = state.cov
    value = min(c[0, 0] + c[3, 3], c[2, 2] + c[1, 1])
    return float(value), bool(value < 1)


def log_negativity(state, gamma_plus=float("nan"), gamma_minus=float("nan")):
    """Logarithmic negativity E_N = max(0, -log2(2 c_min))."""
    c_max, c_min = symplectic_eigenvalues(state)
    duan, violated = duan_criterion(state)
    E_N = max(0.0, -math.log2(2 * c_min))
    return NegativityResult(E_N, c_min, c_max, duan, violated, gamma_plus, gamma_minus, state.kind)


def conditional_negativity(derived):
    """Negativity of the stationary conditional state (exact)."""
    return log_negativity(conditional_covariance(derived))


def expansion_h(s):
    return abs(1 - s) * (s**4 + 2 * s**3 + 2 * s + 1) / (1 + s)


def conditional_min_eigenvalue_expansion(derived):
    """Weak-measurement expansion of the conditional c_min (cross-check)."""
    d = derived
    lo, hi = sorted((d.omega_plus, d.omega_minus))
    eta = d.eta_eff
    return math.sqrt(lo / (4 * eta * hi)) * (1 + eta * d.Gamma**2 / d.omega0**2 * expansion_h(d.omega0 / d.omega_minus))


def negativity_leading_order(derived, bandwidth_low):
    """Leading-order unconditional E_N at the analytic damping rule.

    ``bandwidth_low`` is the filter bandwidth of the lower-frequency mode.
    """
    d = derived
    lo, hi = sorted((d.omega_plus, d.omega_minus))
    eta = d.eta_eff
    val = 0.5 * math.log2(eta * hi / lo) - math.sqrt(eta) / math.log(2) * hi / lo * bandwidth_low / lo * d.Gamma / d.omega_minus
    return max(0.0, val)


def weak_coupling_negativity(g_over_omega0, n_plus):
    """Weak-coupling estimate max(0, |g|/omega0 - 2 n+) / ln 2."""
    return max(0.0, abs(g_over_omega0) - 2 * n_plus) / math.log(2)


def occupation_plus(state):
    """Sum-mode occupation n+ = (E<X+^2 + P+^2> - 1) / 2."""
    c = state.cov
    return 0.5 * (c[0, 0] + c[1, 1] - 1)


# ---------------------------------------------------------------------------
# damping optimisation

def analytic_damping(derived, bandwidth_plus, bandwidth_minus):
    """Damping rule of the weak-measurement analysis.

    The higher-frequency mode enters the smallest eigenvalue through its
    position variance, minimised by gamma = 4 Gamma sqrt(eta) omega0 / w.
    The lower-frequency mode enters through its momentum variance,
    minimised to leading order by the same value minus
    16 eta omega0^2 Omega Gamma^2 / w^4.
    """
    d = derived
    eta, G, w0 = d.eta_eff, d.Gamma, d.omega0
    out = {}
    low = "+" if d.omega_plus <= d.omega_minus else "-"
    for mode, w, Om in (("+", d.omega_plus, bandwidth_plus), ("-", d.omega_minus, bandwidth_minus)):
        gam = 4 * G * math.sqrt(eta) * w0 / w
        if mode == low:
            gam -= 16 * eta * w0**2 * Om * G**2 / w**4
        out[mode] = gam
    return out["+"], out["-"]


def _raw_negativity(eta, G, wp, wm, gp, gm, Op, Om):
    """Unclipped -log2(2 c_min) of the unconditional state, omega0 = 1 units."""
    a = unconditional_moments(eta, G, wp, gp, Op)
    b = unconditional_moments(eta, G, wm, gm, Om)
    c_min, _ = pt_symplectic_min(*a, *b)
    return -np.log2(2 * c_min)


def optimize_damping(derived, bandwidth_plus, bandwidth_minus, grid_points=41):
    """Maximise the unconditional negativity over (gamma+, gamma-).

    A coarse logarithmic grid over gamma_s in [1e-3, 1e1] Gamma sqrt(eta)
    omega0 / omega_s plus the analytic seed are refined by Nelder-Mead in
    log space.  The returned point is never worse than the seed.
    """
    _require_no_out_loop(derived)
    d = derived
    w0 = d.omega0
    eta, G = d.eta_eff, d.Gamma / w0
    wp, wm = d.omega_plus / w0, d.omega_minus / w0
    Op, Om = bandwidth_plus / w0, bandwidth_minus / w0

    def value(lg):
        return float(_raw_negativity(eta, G, wp, wm, math.exp(lg[0]), math.exp(lg[1]), Op, Om))

    seed_p, seed_m = analytic_damping(d, bandwidth_plus, bandwidth_minus)
    seed_p, seed_m = seed_p / w0, seed_m / w0
    unit_p = G * math.sqrt(eta) / wp
    unit_m = G * math.sqrt(eta) / wm
    gp = np.geomspace(SEARCH_LO * unit_p, SEARCH_HI * unit_p, grid_points)
    gm = np.geomspace(SEARCH_LO * unit_m, SEARCH_HI * unit_m, grid_points)
    vals = _raw_negativity(eta, G, wp, wm, gp[:, None], gm[None, :], Op, Om)
    i, j = np.unravel_index(np.nanargmax(vals), vals.shape)
    candidates = [(math.log(gp[i]), math.log(gm[j]))]
    seed_ok = seed_p > 0 and seed_m > 0
    seed_value = value((math.log(seed_p), math.log(seed_m))) if seed_ok else -math.inf
    if seed_ok:
        candidates.append((math.log(seed_p), math.log(seed_m)))
    best_x, best_v = None, -math.inf
    for x0 in candidates:
        res = optimize.minimize(lambda x: -value(x), x0, method="Nelder-Mead",
                                options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 4000})
        for x, v in ((res.x, -res.fun), (np.asarray(x0), value(x0))):
            if v > best_v:
                best_x, best_v = np.asarray(x, dtype=float), v
    g_plus, g_minus = math.exp(best_x[0]) * w0, math.exp(best_x[1]) * w0
    state = unconditional_covariance(d, g_plus, g_minus, bandwidth_plus, bandwidth_minus)
    result = log_negativity(state, g_plus, g_minus)
    return DampingOptimum(g_plus, g_minus, result, seed_p * w0, seed_m * w0, seed_value, best_v)


def max_negativity_grid(eta, G, g, Op=1.0, Om=1.0, points=25, levels=6, shrink=4.0):
    """Vectorised maximum of the unconditional negativity over gamma_s.

    Parameters are broadcast against each other (omega0 = 1 units).  Each
    zoom level evaluates a points x points log grid around the incumbent and
    shrinks the window by ``shrink``.

    Returns
    -------
    best : ndarray
        Unclipped -log2(2 c_min) at the best damping found.
    gamma_plus, gamma_minus : ndarray
    """
    eta, G, g, Op, Om = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (eta, G, g, Op, Om)))
    shape = eta.shape
    eta, G, g, Op, Om = (a.ravel() for a in (eta, G, g, Op, Om))
    wp = np.ones_like(g)
    wm = np.sqrt(1 + 4 * g)
    lp0 = np.log(G * np.sqrt(eta) / wp)
    lm0 = np.log(G * np.sqrt(eta) / wm)
    lo, hi = math.log(SEARCH_LO), math.log(SEARCH_HI)
    cp = lp0 + 0.5 * (lo + hi)
    cm = lm0 + 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    t = np.linspace(-1, 1, points)
    best = np.full(eta.shape, -np.inf)
    bp = np.exp(cp)
    bm = np.exp(cm)
    for _ in range(levels):
        lp = cp[:, None, None] + half * t[None, :, None]
        lm = cm[:, None, None] + half * t[None, None, :]
        vals = _raw_negativity(eta[:, None, None], G[:, None, None], wp[:, None, None], wm[:, None, None],
                               np.exp(lp), np.exp(lm), Op[:, None, None], Om[:, None, None])
        flat = vals.reshape(len(eta), -1)
        k = np.nanargmax(flat, axis=1)
        v = flat[np.arange(len(eta)), k]
        ip, im = np.unravel_index(k, (points, points))
        cp = cp + half * t[ip]
        cm = cm + half * t[im]
        better = v > best
        best = np.where(better, v, best)
        bp = np.where(better, np.exp(cp), bp)
        bm = np.where(better, np.exp(cm), bm)
        half /= shrink
    return best.reshape(shape), bp.reshape(shape), bm.reshape(shape)
