"""Experimental inputs and the physical quantities derived from them.

Two dielectric spheres sit in two optical tweezers whose foci are a distance
``d`` apart.  Their centre-of-mass motion along the optical axis is coupled by
the Coulomb interaction and decomposes into a sum mode (frequency ``omega0``)
and a difference mode (frequency ``sqrt(omega0**2 + 4 g omega0)``).

Everything here is in SI units.
"""

import dataclasses
import math
import warnings
from dataclasses import dataclass

from .constants import C_LIGHT, E_CHARGE, EPSILON_0, HBAR, K_B
from .errors import ConfigError, FeedbackWarning, UnstableTrap

__all__ = [
    "PhysicalConfig",
    "DerivedParams",
    "paper_config",
    "derive",
    "derive_trap_frequency",
    "derive_recoil_rate",
    "derive_coupling",
    "derive_normal_modes",
    "derive_thermal_and_detection",
]


@dataclass(frozen=True)
class PhysicalConfig:
    """All experimental inputs in SI units.

    Attributes
    ----------
    wavelength : float
        Tweezer wavelength (m).
    power : float
        Tweezer power per particle (W).
    rayleigh_range : float
        Rayleigh range x_R (m).
    radius : float
        Particle radius (m).
    density : float
        Mass density (kg/m^3).
    rel_permittivity : float
        Relative permittivity; fixes chi_e = 3 (eps_r - 1) / (eps_r + 2).
    charge1, charge2 : float
        Signed particle charges (C).
    separation : float
        Distance d between the tweezer foci (m).
    gas_pressure : float
        Background pressure (Pa). Informational; the damping is given directly.
    gas_temperature : float
        Gas temperature (K).
    gas_damping : float
        Gas damping rate gamma_g (rad/s).
    eta_in, eta_out : float
        Detection efficiencies of the in-loop and out-of-loop channels.
    extra_coupling : float
        Additive contribution to g (rad/s), e.g. from optical binding.
    electric_feedback : bool
        Whether the feedback force is applied through the particle charges.
        In that case equal charge magnitudes make the sum mode uncontrollable
        and a ``FeedbackWarning`` is issued.
    """

    wavelength: float
    power: float
    rayleigh_range: float
    radius: float
    density: float
    rel_permittivity: float
    charge1: float
    charge2: float
    separation: float
    gas_pressure: float
    gas_temperature: float
    gas_damping: float
    eta_in: float
    eta_out: float
    extra_coupling: float = 0.0
    electric_feedback: bool = True

    def __post_init__(self):
        positive = ["wavelength", "power", "rayleigh_range", "radius", "density",
                    "separation", "gas_pressure", "gas_temperature"]
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {value!r}", key=name)
        if not (math.isfinite(self.rel_permittivity) and self.rel_permittivity > 1):
            raise ConfigError("rel_permittivity must exceed 1", key="rel_permittivity")
        if not (math.isfinite(self.gas_damping) and self.gas_damping >= 0):
            raise ConfigError("gas_damping must be non-negative", key="gas_damping")
        for name in ("charge1", "charge2"):
            value = getattr(self, name)
            if not math.isfinite(value) or value == 0:
                raise ConfigError(f"{name} must be nonzero", key=name)
        if not math.isfinite(self.extra_coupling):
            raise ConfigError("extra_coupling must be finite", key="extra_coupling")
        for name in ("eta_in", "eta_out"):
            value = getattr(self, name)
            if not (0 <= value <= 1):
                raise ConfigError(f"{name} must lie in [0, 1]", key=name)
        if self.eta_in + self.eta_out > 1 + 1e-12:
            raise ConfigError("eta_in + eta_out must not exceed 1", key="eta_out")
        if self.electric_feedback and not self.charges_distinct:
            warnings.warn("equal charge magnitudes: electric feedback cannot address "
                          "both normal modes independently", FeedbackWarning, stacklevel=3)

    @property
    def charges_distinct(self):
        return not math.isclose(abs(self.charge1), abs(self.charge2), rel_tol=1e-12)

    @property
    def wavenumber(self):
        return 2 * math.pi / self.wavelength

    @property
    def susceptibility(self):
        """Electric susceptibility chi_e."""
        eps = self.rel_permittivity
        return 3 * (eps - 1) / (eps + 2)

    @property
    def volume(self):
        return 4 / 3 * math.pi * self.radius**3

    @property
    def mass(self):
        return self.density * self.volume

    @property
    def waist(self):
        """Beam waist from x_R = k w^2 / 2."""
        return math.sqrt(2 * self.rayleigh_range / self.wavenumber)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def paper_config(**overrides):
    """Silica sphere, 90 nm diameter, 300 mW at 1064 nm, charges of +-250 e."""
    base = dict(
        wavelength=1064e-9,
        power=0.3,
        rayleigh_range=1.21e-6,
        radius=45e-9,
        density=1850.0,
        rel_permittivity=23 / 11,  # chi_e = 0.8
        charge1=250 * E_CHARGE,
        charge2=-250 * E_CHARGE,
        separation=2e-6,
        gas_pressure=1e-6,
        gas_temperature=300.0,
        gas_damping=2 * math.pi * 1e-5,
        eta_in=0.4,
        eta_out=0.05,
        extra_coupling=0.0,
        electric_feedback=False,
    )
    base.update(overrides)
    return PhysicalConfig(**base)


@dataclass(frozen=True)
class DerivedParams:
    """Quantities derived from a ``PhysicalConfig``.

    Frequencies and rates are angular (rad/s).  ``D_g`` is the gas momentum
    diffusion constant gamma_g m k_B T_g.
    """

    omega0: float
    gamma_sc: float
    coupling: float
    omega_plus: float
    omega_minus: float
    L2: float
    D_g: float
    Gamma: float
    eta_eff: float
    mass: float
    eta_in: float
    eta_out: float

    @property
    def eta(self):
        """Total detection efficiency eta_in + eta_out."""
        return self.eta_in + self.eta_out

    @property
    def momentum_diffusion(self):
        """hbar^2 / 4 L^2 + 2 D_g, the white force-noise level."""
        return HBAR**2 / (4 * self.L2) + 2 * self.D_g

    @property
    def x_scale(self):
        """Position unit sqrt(hbar / m omega0) of the dimensionless quadratures."""
        return math.sqrt(HBAR / (self.mass * self.omega0))

    @property
    def p_scale(self):
        return math.sqrt(HBAR * self.mass * self.omega0)

    def mode_frequency(self, mode):
        if mode == "+":
            return self.omega_plus
        if mode == "-":
            return self.omega_minus
        raise ValueError(f"mode must be '+' or '-', got {mode!r}")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dimensionless(cls, omega0, eta_eff, heating, coupling, mass=1e-18, eta_out=0.0):
        """Build parameters from the dimensionless entanglement inputs.

        Parameters
        ----------
        omega0 : float
            Bare trap frequency (rad/s).
        eta_eff : float
            Effective detection efficiency, used as the in-loop efficiency.
        heating : float
            Net heating rate in units of omega0 (Gamma / omega0).
        coupling : float
            Coupling in units of omega0 (g / omega0).
        mass : float
            Particle mass (kg); drops out of dimensionless results.
        eta_out : float
            Out-of-loop efficiency.

        Notes
        -----
        The gas contribution is folded into the recoil rate: D_g = 0 and
        Gamma_sc = Gamma, so eta_in = eta_eff.  Every dimensionless quantity
        depends on the heating only through Gamma and eta_eff, so nothing is
        lost.
        """
        if not 0 <= eta_eff <= 1:
            raise ConfigError("eta_eff must lie in [0, 1]", key="eta_eff")
        if heating <= 0:
            raise ConfigError("heating rate must be positive", key="heating_over_omega0")
        gamma_sc = heating * omega0
        g = coupling * omega0
        omega_plus, omega_minus = derive_normal_modes(omega0, g)
        return cls(
            omega0=omega0,
            gamma_sc=gamma_sc,
            coupling=g,
            omega_plus=omega_plus,
            omega_minus=omega_minus,
            L2=HBAR / (8 * mass * omega0 * gamma_sc),
            D_g=0.0,
            Gamma=gamma_sc,
            eta_eff=eta_eff,
            mass=mass,
            eta_in=eta_eff,
            eta_out=eta_out,
        )


def derive_trap_frequency(config):
    """Harmonic trap frequency omega0 = sqrt(chi_e k P / (pi c rho x_R^3))."""
    c = config
    return math.sqrt(c.susceptibility * c.wavenumber * c.power
                     / (math.pi * C_LIGHT * c.density * c.rayleigh_range**3))


def recoil_bracket(k_xr):
    """Geometric factor 2 + 5 (1 - 1/(k x_R))^2 of the recoil rate."""
    return 2 + 5 * (1 - 1 / k_xr)**2


def derive_recoil_rate(config, omega0):
    """Photon recoil heating rate Gamma_sc (rad/s)."""
    c = config
    k = c.wavenumber
    return (omega0 * c.susceptibility * k**5 * c.volume * c.rayleigh_range**2 / (60 * math.pi)
            * recoil_bracket(k * c.rayleigh_range))


def derive_coupling(config, omega0):
    """Coulomb coupling g = -Q1 Q2 / (8 pi m omega0 eps0 d^3) plus extra_coupling.

    Positive for attraction.
    """
    c = config
    g = -c.charge1 * c.charge2 / (8 * math.pi * c.mass * omega0 * EPSILON_0 * c.separation**3)
    return g + c.extra_coupling


def derive_normal_modes(omega0, g):
    """Sum and difference mode frequencies.

    Raises
    ------
    UnstableTrap
        If omega0^2 + 4 g omega0 <= 0.
    """
    sq = omega0**2 + 4 * g * omega0
    if not sq > 0:
        raise UnstableTrap(f"difference mode unstable: omega_-^2 = {sq:.6g} <= 0 (g/omega0 = {g / omega0:.6g})")
    return omega0, math.sqrt(sq)


def derive_thermal_and_detection(config, omega0, gamma_sc):
    """Gas diffusion, net heating, effective efficiency and measurement length.

    Returns
    -------
    D_g, Gamma, eta_eff, L2 : float
    """
    c = config
    D_g = c.gas_damping * c.mass * K_B * c.gas_temperature
    Gamma = gamma_sc + c.gas_damping * K_B * c.gas_temperature / (HBAR * omega0)
    eta_eff = c.eta_in * gamma_sc / Gamma if Gamma > 0 else 0.0
    L2 = HBAR / (8 * c.mass * omega0 * gamma_sc) if gamma_sc > 0 else math.inf
    return D_g, Gamma, eta_eff, L2


def derive(config):
    """Compute every ``DerivedParams`` field from ``config``."""
    omega0 = derive_trap_frequency(config)
    gamma_sc = derive_recoil_rate(config, omega0)
    g = derive_coupling(config, omega0)
    omega_plus, omega_minus = derive_normal_modes(omega0, g)
    D_g, Gamma, eta_eff, L2 = derive_thermal_and_detection(config, omega0, gamma_sc)
    return DerivedParams(
        omega0=omega0,
        gamma_sc=gamma_sc,
        coupling=g,
        omega_plus=omega_plus,
        omega_minus=omega_minus,
        L2=L2,
        D_g=D_g,
        Gamma=Gamma,
        eta_eff=eta_eff,
        mass=config.mass,
        eta_in=config.eta_in,
        eta_out=config.eta_out,
    )


def rescale_trap(derived, omega0, gamma_sc):
    """Recompute the trap-dependent fields for a new omega0 and Gamma_sc.

    The product g * omega0 is a property of the charges and geometry and is
    kept fixed, as are D_g and the efficiencies.  With the original values
    this returns an equal object.
    """
    d = derived
    g = d.coupling * d.omega0 / omega0
    omega_plus, omega_minus = derive_normal_modes(omega0, g)
    gas_rate = (d.Gamma - d.gamma_sc) * d.omega0 / omega0
    Gamma = gamma_sc + gas_rate
    return d.replace(
        omega0=omega0,
        gamma_sc=gamma_sc,
        coupling=g,
        omega_plus=omega_plus,
        omega_minus=omega_minus,
        L2=HBAR / (8 * d.mass * omega0 * gamma_sc),
        Gamma=Gamma,
        eta_eff=d.eta_in * gamma_sc / Gamma,
    )
