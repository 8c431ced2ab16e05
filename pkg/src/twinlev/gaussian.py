"""Gaussian state engine for the two normal modes.

States are stored in the (x+, p+, x-, p-) ordering.  Under continuous
position measurement the conditional covariance obeys a deterministic
Riccati equation

    d sigma / dt = A sigma + sigma A^T + D - (eta / L^2) sigma Pi sigma,

where A is the free harmonic drift, D = diag(0, Dp, 0, Dp) with
Dp = hbar^2 / 4L^2 + 2 D_g the momentum diffusion and Pi projects onto the
positions.  Feedback and external forces only move the means.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import HBAR
from .errors import NonPhysicalState, StepTooLarge

__all__ = [
    "CovarianceState",
    "CovarianceTrajectory",
    "SYMPLECTIC_FORM",
    "PHYSICALITY_TOL",
    "zeta_squared",
    "mode_covariance",
    "stationary_conditional_covariance",
    "drift_matrix",
    "covariance_rhs",
    "integrate_covariance_ode",
    "relaxation_time",
    "symplectic_spectrum",
    "check_physical",
    "conditional_purity",
    "thermal_state",
]

SYMPLECTIC_FORM = np.array([[0.0, 1.0, 0.0, 0.0],
                            [-1.0, 0.0, 0.0, 0.0],
                            [0.0, 0.0, 0.0, 1.0],
                            [0.0, 0.0, -1.0, 0.0]])

# tolerance on the smallest symplectic eigenvalue below 1/2
PHYSICALITY_TOL = 1e-9

# largest rate * substep allowed in the covariance integrator
STIFF_STEP = 0.5


@dataclass(frozen=True)
class CovarianceState:
    """First moments and covariance of a two-mode Gaussian state.

    Attributes
    ----------
    mean : ndarray, shape (4,)
    cov : ndarray, shape (4, 4)
        Symmetrised covariance in (x+, p+, x-, p-) order.
    kind : {'conditional', 'unconditional'}
    basis : {'si', 'dimensionless'}
        Dimensionless quadratures are X = x / sqrt(hbar / m omega0) and
        P = p / sqrt(hbar m omega0); vacuum has variance 1/2.
    """

    mean: np.ndarray
    cov: np.ndarray
    kind: str = "conditional"
    basis: str = "si"

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(4)
        cov = np.asarray(self.cov, dtype=float).reshape(4, 4)
        scale = max(np.max(np.abs(cov)), np.finfo(float).tiny)
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise ValueError("covariance matrix is not symmetric")
        if self.kind not in ("conditional", "unconditional"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.basis not in ("si", "dimensionless"):
            raise ValueError(f"unknown basis {self.basis!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    def block(self, mode):
        """2x2 covariance of mode '+' or '-'."""
        i = {"+": 0, "-": 2}[mode]
        return self.cov[i:i + 2, i:i + 2]

    def to_dimensionless(self, omega0, mass):
        if self.basis == "dimensionless":
            return self
        s = _scales(omega0, mass)
        return CovarianceState(self.mean / s, self.cov / np.outer(s, s), self.kind, "dimensionless")

    def to_si(self, omega0, mass):
        if self.basis == "si":
            return self
        s = _scales(omega0, mass)
        return CovarianceState(self.mean * s, self.cov * np.outer(s, s), self.kind, "si")


def _scales(omega0, mass):
    xs = math.sqrt(HBAR / (mass * omega0))
    ps = math.sqrt(HBAR * mass * omega0)
    return np.array([xs, ps, xs, ps])


@dataclass
class CovarianceTrajectory:
    """Covariance matrices sampled along an integration."""

    times: np.ndarray
    covs: np.ndarray
    basis: str = "si"
    kind: str = field(default="conditional")

    def state(self, i):
        return CovarianceState(np.zeros(4), self.covs[i], self.kind, self.basis)

    @property
    def final(self):
        return self.state(-1)

    def __len__(self):
        return len(self.times)


def zeta_squared(derived, omega_s, eta=None):
    """Squeezing parameter zeta_s^2 of the stationary conditional state."""
    d = derived
    eta = d.eta if eta is None else eta
    m, L2 = d.mass, d.L2
    arg = eta * (HBAR**2 + 8 * d.D_g * L2) / (4 * m**2 * L2**2 * omega_s**4)
    # sqrt(1 + a) - 1 without cancellation for small a
    return arg / (math.sqrt(1 + arg) + 1)


def mode_covariance(derived, omega_s, eta=None):
    """Stationary conditional (V_x, C_xp, V_p) of one mode in SI units.

    For eta = 0 the unmeasured state has no stationary solution; the limit
    values (V_x, C, V_p) -> (inf, 0, inf) are not returned and a
    ``ValueError`` is raised instead.
    """
    d = derived
    eta = d.eta if eta is None else eta
    if eta <= 0:
        raise ValueError("stationary conditional state requires eta > 0")
    m, L2 = d.mass, d.L2
    z2 = zeta_squared(d, omega_s, eta)
    z = math.sqrt(z2)
    Vx = math.sqrt(2) * L2 * omega_s * z / eta
    C = m * L2 * omega_s**2 * z2 / eta
    Vp = m**2 * omega_s**2 * Vx * (1 + z2)
    return Vx, C, Vp


def stationary_conditional_covariance(derived):
    """Closed-form stationary conditional state in SI units.

    Block diagonal: conditioning removes all sum/difference correlations.
    """
    cov = np.zeros((4, 4))
    for i, w in ((0, derived.omega_plus), (2, derived.omega_minus)):
        Vx, C, Vp = mode_covariance(derived, w)
        cov[i:i + 2, i:i + 2] = [[Vx, C], [C, Vp]]
    return CovarianceState(np.zeros(4), cov, "conditional", "si")


def drift_matrix(derived):
    """Free harmonic drift in (x+, p+, x-, p-)."""
    m = derived.mass
    A = np.zeros((4, 4))
    for i, w in ((0, derived.omega_plus), (2, derived.omega_minus)):
        A[i, i + 1] = 1 / m
        A[i + 1, i] = -m * w**2
    return A


def _riccati_terms(derived, eta=None):
    eta = derived.eta if eta is None else eta
    A = drift_matrix(derived)
    D = np.diag([0.0, 1.0, 0.0, 1.0]) * derived.momentum_diffusion
    Pi = np.diag([1.0, 0.0, 1.0, 0.0]) * (eta / derived.L2)
    return A, D, Pi


def covariance_rhs(cov, derived, eta=None):
    """Time derivative of the conditional covariance (SI)."""
    A, D, Pi = _riccati_terms(derived, eta)
    cov = np.asarray(cov, dtype=float)
    return A @ cov + cov @ A.T + D - cov @ Pi @ cov


def relaxation_time(derived):
    """Relaxation time 1 / (eta omega_s zeta_s) of the slower mode.

    The slower mode is the one with the smaller omega_s zeta_s; since
    zeta_s falls like omega_s^-2 for weak measurement this is usually the
    higher-frequency mode.  Linearising the Riccati equation gives a decay
    rate sqrt(2) omega_s zeta_s for deviations, so this estimate is
    conservative.  Convergence checks should integrate for about ten of
    these.
    """
    rate = min(w * math.sqrt(zeta_squared(derived, w)) for w in (derived.omega_plus, derived.omega_minus))
    return 1 / (derived.eta * rate)


def symplectic_spectrum(cov):
    """Symplectic eigenvalues (ascending) of a 4x4 dimensionless covariance."""
    ev = np.linalg.eigvals(1j * SYMPLECTIC_FORM @ np.asarray(cov, dtype=float))
    return np.sort(np.abs(ev.real))[::2]


def check_physical(state, omega0=None, mass=None, tol=PHYSICALITY_TOL):
    """Raise ``NonPhysicalState`` if the smallest symplectic eigenvalue < 1/2 - tol."""
    if state.basis == "si":
        if omega0 is None or mass is None:
            raise ValueError("omega0 and mass are needed to check an SI state")
        state = state.to_dimensionless(omega0, mass)
    nu = symplectic_spectrum(state.cov)
    if not np.all(np.isfinite(state.cov)) or nu[0] < 0.5 - tol:
        raise NonPhysicalState(f"smallest symplectic eigenvalue {nu[0]:.12g} < 1/2")
    return nu


def integrate_covariance_ode(initial, derived, t_end, dt, eta=None, check_every=1):
    """Integrate the covariance Riccati equation with classical RK4.

    Output is sampled every ``dt``.  Steps where the quadratic measurement
    term is stiff are split into shorter substeps.

    Parameters
    ----------
    initial : CovarianceState
        Starting covariance (either basis; returned in SI).
    derived : DerivedParams
    t_end, dt : float
        Duration and fixed step (s).  ``dt`` must not exceed
        2 pi / (100 max(omega+, omega-)).
    eta : float, optional
        Override of the total detection efficiency (0 switches off the
        measurement).
    check_every : int
        Physicality is checked every this many steps and at the end.

    Returns
    -------
    CovarianceTrajectory
    """
    d = derived
    bound = 2 * math.pi / (100 * max(d.omega_plus, d.omega_minus))
    if dt > bound * (1 + 1e-12):
        raise StepTooLarge(f"dt = {dt:.3g} s exceeds 2 pi / (100 omega_max) = {bound:.3g} s")
    state = initial.to_si(d.omega0, d.mass)
    check_physical(state, d.omega0, d.mass)
    A, D, Pi = _riccati_terms(d, eta)

    # rescale to dimensionless units internally for a well conditioned sum
    s = _scales(d.omega0, d.mass)
    Sinv = np.diag(1 / s)
    S = np.diag(s)
    A_ = Sinv @ A @ S
    D_ = Sinv @ D @ Sinv
    Pi_ = S @ Pi @ S

    def rhs(c):
        return A_ @ c + c @ A_.T + D_ - c @ Pi_ @ c

    n = int(math.ceil(t_end / dt - 1e-9))
    times = np.arange(n + 1) * dt
    covs = np.empty((n + 1, 4, 4))
    c = state.cov / np.outer(s, s)
    covs[0] = c
    a_norm = np.max(np.abs(A_))
    for k in range(n):
        # Far from equilibrium (e.g. a hot initial state) the measurement
        # term is stiff; shorten substeps so the local rate times h stays
        # inside the RK4 stability region.  Deterministic in the state.
        left = dt
        while left > 0:
            rate = 2 * np.max(np.abs(Pi_ @ c)) + 2 * a_norm
            h = left if left * rate <= STIFF_STEP else min(left, STIFF_STEP / rate)
            k1 = rhs(c)
            k2 = rhs(c + 0.5 * h * k1)
            k3 = rhs(c + 0.5 * h * k2)
            k4 = rhs(c + h * k3)
            c = c + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            c = 0.5 * (c + c.T)
            left = left - h if h < left else 0.0
        covs[k + 1] = c
        if (k + 1) % check_every == 0 or k == n - 1:
            check_physical(CovarianceState(np.zeros(4), c, basis="dimensionless"))
    return CovarianceTrajectory(times, covs * np.outer(s, s)[None], "si", initial.kind)


def conditional_purity(state):
    """Purity 1 / (4 sqrt(det sigma+ det sigma-)) of a block-diagonal state.

    For the stationary conditional state each block has determinant
    1 / (4 eta_eff) exactly, so the purity equals eta_eff.
    """
    if state.basis != "dimensionless":
        raise ValueError("conditional_purity expects a dimensionless state")
    dp = np.linalg.det(state.block("+"))
    dm = np.linalg.det(state.block("-"))
    return 1 / (4 * math.sqrt(dp * dm))


def thermal_state(derived, temperature):
    """Thermal equilibrium covariance (SI) of both modes at ``temperature``."""
    from .constants import K_B
    cov = np.zeros((4, 4))
    m = derived.mass
    for i, w in ((0, derived.omega_plus), (2, derived.omega_minus)):
        n_half = 0.5 / math.tanh(HBAR * w / (2 * K_B * temperature))
        cov[i, i] = HBAR / (m * w) * n_half
        cov[i + 1, i + 1] = HBAR * m * w * n_half
    return CovarianceState(np.zeros(4), cov, "unconditional", "si")
