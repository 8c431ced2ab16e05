"""Static equilibrium of two charged particles along their connecting axis.

The Coulomb attraction pulls both particles off their foci along y.  A
homogeneous field E_c cancels the net force for the symmetric part; what is
left is a displacement y01 solving

    u exp(-2 u^2) = rhs,   u = y01 / w,

with rhs = (w d / x_R^2) (g / omega0) (Q1 + Q2) / (Q1 - Q2).  The left side
peaks at u = 1/2 with value 1 / (2 sqrt(e)), so no equilibrium exists above
that.
"""

import math
from dataclasses import dataclass
from typing import Optional

from .constants import C_LIGHT, EPSILON_0
from .errors import EqualCharges, NoSolution
from .params import derive_coupling, derive_trap_frequency, rescale_trap

__all__ = [
    "EquilibriumResult",
    "LHS_MAX",
    "compensation_field",
    "transcendental_rhs",
    "solve_displacement_ratio",
    "solve_equilibrium_displacement",
    "effective_trap",
    "equilibrium",
    "apply_equilibrium",
]

LHS_MAX = 0.5 * math.exp(-0.5)


@dataclass(frozen=True)
class EquilibriumResult:
    """Displaced equilibrium and the resulting trap parameters.

    ``y01`` is the magnitude of the displacement; only its square enters
    the trap frequencies.  ``multiple_roots`` flags that the equation has a
    further root beyond w/2, which is ignored.
    """

    E_c: float
    y01: Optional[float]
    waist: float
    omega0_eff: float
    recoil_scale: float
    omega_y_plus: float
    omega_y_minus: float
    stable_x: bool
    stable_y: bool
    multiple_roots: bool = False

    @property
    def needs_y_feedback(self):
        """Recommend an extra restoring field proportional to y2 - y1."""
        return self.stable_x and not self.stable_y


def compensation_field(q1, q2, d):
    """Homogeneous field E_c = Q1 Q2 / ((Q1 - Q2) 2 pi eps0 d^2) in V/m.

    Callers use E_c = 0 for repulsive charges; this function still returns
    the formula value.
    """
    if q1 == q2:
        raise EqualCharges("compensation field undefined for Q1 == Q2")
    return q1 * q2 / ((q1 - q2) * 2 * math.pi * EPSILON_0 * d**2)


def _coulomb_coupling_ratio(config):
    omega0 = derive_trap_frequency(config)
    return derive_coupling(config.replace(extra_coupling=0.0), omega0) / omega0


def transcendental_rhs(config, g_over_omega0=None):
    """Right-hand side of the displacement equation.

    ``g_over_omega0`` defaults to the bare Coulomb value at the foci.
    """
    c = config
    if c.charge1 == c.charge2:
        raise EqualCharges("displacement equation undefined for Q1 == Q2")
    if g_over_omega0 is None:
        g_over_omega0 = _coulomb_coupling_ratio(c)
    return (c.waist * c.separation / c.rayleigh_range**2 * g_over_omega0
            * (c.charge1 + c.charge2) / (c.charge1 - c.charge2))


def solve_displacement_ratio(rhs, tol=1e-15):
    """Root u in [0, 1/2] of u exp(-2 u^2) = |rhs| by bisection.

    Raises
    ------
    NoSolution
        If |rhs| exceeds the maximum 1 / (2 sqrt(e)) of the left side.
    """
    target = abs(rhs)
    if target > LHS_MAX:
        raise NoSolution(f"|rhs| = {target:.6g} exceeds 1/(2 sqrt(e)) = {LHS_MAX:.6g}")
    if target == 0:
        return 0.0
    lo, hi = 0.0, 0.5
    f = lambda u: u * math.exp(-2 * u * u) - target
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    # pick the end point with the smaller residual
    return lo if abs(f(lo)) <= abs(f(hi)) else hi


def solve_equilibrium_displacement(config, derived=None):
    """Equilibrium displacement y01 (m) for the compensated configuration.

    Parameters
    ----------
    config : PhysicalConfig
    derived : DerivedParams, optional
        If given, its g / omega0 (minus any extra coupling) is used;
        otherwise the bare Coulomb ratio at the foci.

    Returns
    -------
    float
        Non-negative displacement.  Repulsive charges are not displaced by
        convention (E_c = 0 and the potential is expanded at the foci).
    """
    if config.charge1 * config.charge2 > 0:
        return 0.0
    ratio = None
    if derived is not None:
        ratio = (derived.coupling - config.extra_coupling) / derived.omega0
    u = solve_displacement_ratio(transcendental_rhs(config, ratio))
    return u * config.waist


def effective_trap(config, y01):
    """Trap frequencies and stability flags at displacement ``y01``."""
    c = config
    w = c.waist
    s = (y01 / w)**2
    scale = math.exp(-2 * s)
    omega0_bare = derive_trap_frequency(c)
    omega0_eff = omega0_bare * math.sqrt(max(1 - 2 * s, 0.0) * scale)
    # g * omega0 is set by the charges and geometry, not by the trap
    g_omega0 = derive_coupling(c, omega0_bare) * omega0_bare
    wy_plus_sq = 4 * c.susceptibility * c.power / (math.pi * C_LIGHT * c.density * w**4) * (1 - 4 * s) * scale
    wy_minus_sq = wy_plus_sq - 4 * g_omega0
    stable_x = omega0_eff > 0 and omega0_eff**2 + 4 * g_omega0 > 0
    if c.charge1 * c.charge2 > 0 or c.charge1 == c.charge2:
        E_c = 0.0
    else:
        E_c = compensation_field(c.charge1, c.charge2, c.separation)
    return EquilibriumResult(
        E_c=E_c,
        y01=y01,
        waist=w,
        omega0_eff=omega0_eff,
        recoil_scale=scale,
        omega_y_plus=math.sqrt(max(wy_plus_sq, 0.0)),
        omega_y_minus=math.copysign(math.sqrt(abs(wy_minus_sq)), wy_minus_sq),
        stable_x=stable_x,
        stable_y=wy_minus_sq > 0 and wy_plus_sq > 0,
        multiple_roots=y01 > 0,
    )


def equilibrium(config):
    """Solve for the displacement and evaluate the effective trap.

    ``omega_y_minus`` carries the sign of omega_{y,-}^2 so an unstable
    difference mode shows up as a negative number.
    """
    y01 = solve_equilibrium_displacement(config)
    return effective_trap(config, y01)


def apply_equilibrium(derived, result):
    """Derived parameters with the shifted trap frequency and recoil rate."""
    return rescale_trap(derived, result.omega0_eff, derived.gamma_sc * result.recoil_scale)
