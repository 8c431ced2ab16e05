"""Run configuration: a flat ``key = value`` text format.

Lines are ``key = value`` pairs; ``#`` starts a comment.  Units are part of
the key name (``power_w``, ``charge1_e``, ``pressure_pa``).  Keys without a
unit suffix are dimensionless; rates written ``*_over_omega0`` or the
filter keys ``gamma_plus``, ``gamma_minus``, ``Omega_plus``, ``Omega_minus``
are in units of the bare trap frequency.  Unknown or repeated keys are
errors.  Every key has a default, so an empty file gives the reference
configuration (silica sphere, 300 mW, +-250 e at 2 um).
"""

import math
from dataclasses import dataclass, fields, replace

from .constants import E_CHARGE
from .errors import ConfigError
from .params import DerivedParams, PhysicalConfig, derive

__all__ = ["RunConfig", "parse_config", "load_config", "KEY_DOCS"]


def _opt_float(text):
    if text.strip().lower() in ("opt", "auto"):
        return "opt"
    return float(text)


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return parse


def _name(text):
    return text.strip()


# key -> (parser, documentation)
KEY_DOCS = {
    "model": (_choice("physical", "dimensionless"),
              "physical: derive everything from the SI inputs; dimensionless: use eta_eff, "
              "heating_over_omega0, coupling_over_omega0"),
    "wavelength_m": (float, "tweezer wavelength"),
    "power_w": (float, "tweezer power per particle"),
    "rayleigh_range_m": (float, "Rayleigh range"),
    "radius_m": (float, "particle radius"),
    "density_kg_m3": (float, "particle density"),
    "rel_permittivity": (float, "relative permittivity"),
    "charge1_e": (float, "charge of particle 1 in elementary charges (signed)"),
    "charge2_e": (float, "charge of particle 2 in elementary charges (signed)"),
    "separation_m": (float, "distance between the tweezer foci"),
    "pressure_pa": (float, "gas pressure"),
    "gas_temperature_k": (float, "gas temperature"),
    "gas_damping_hz": (float, "gas damping gamma_g / 2 pi"),
    "eta_in": (float, "in-loop detection efficiency"),
    "eta_out": (float, "out-of-loop detection efficiency"),
    "extra_coupling_rad_s": (float, "additive coupling, e.g. optical binding"),
    "electric_feedback": (_bool, "feedback applied through the particle charges"),
    "omega0_rad_s": (float, "trap frequency of the dimensionless model"),
    "eta_eff": (float, "effective efficiency of the dimensionless model"),
    "heating_over_omega0": (float, "net heating Gamma / omega0 of the dimensionless model"),
    "coupling_over_omega0": (float, "coupling g / omega0 of the dimensionless model"),
    "filter_family": (_choice("resonant", "lorentzian", "ideal"), "feedback filter family"),
    "gamma_plus": (_opt_float, "sum-mode damping / omega0, or 'opt'"),
    "gamma_minus": (_opt_float, "difference-mode damping / omega0, or 'opt'"),
    "Omega_plus": (float, "sum-mode filter bandwidth / omega0"),
    "Omega_minus": (float, "difference-mode filter bandwidth / omega0"),
    "psd_kind": (_choice("noise", "signal"), "force-referred noise or record spectrum"),
    "psd_panel": (_choice("spectrum", "recoil"), "spectrum vs frequency or resonant noise vs Gamma_sc"),
    "psd_min_over_omega0": (float, "lower end of the frequency or Gamma_sc grid"),
    "psd_max_over_omega0": (float, "upper end of the frequency or Gamma_sc grid"),
    "psd_points": (int, "points outside the resonance window (spectrum) or total (recoil)"),
    "psd_inner_points": (int, "linear points within 10 gamma of resonance"),
    "sweep_param": (_name, "first sweep axis (a dimensionless key)"),
    "sweep_min": (float, "first axis start"),
    "sweep_max": (float, "first axis end"),
    "sweep_points": (int, "first axis points"),
    "sweep_scale": (_choice("linear", "log"), "first axis spacing"),
    "sweep2_param": (_name, "optional second sweep axis, 'none' to disable"),
    "sweep2_min": (float, "second axis start"),
    "sweep2_max": (float, "second axis end"),
    "sweep2_points": (int, "second axis points"),
    "sweep2_scale": (_choice("linear", "log"), "second axis spacing"),
    "negativity_kind": (_choice("unconditional", "conditional", "both"), "state evaluated by sweeps"),
    "seed": (int, "base seed of the random streams"),
    "n_traj": (int, "trajectories of the ensemble run (0: single trajectory only)"),
    "duration_s": (float, "simulated time per trajectory (0: 20 / min gamma)"),
    "dt_s": (float, "time step (0: largest allowed)"),
    "electron_distance_m": (float, "distance of the electron from the midpoint"),
    "electron_angle_deg": (float, "angle from the optical axis"),
    "electron_amplitude_m": (float, "oscillation amplitude of the electron"),
    "electron_quality": (float, "quality factor of the electron oscillation"),
}

SWEEPABLE = ("eta_eff", "heating_over_omega0", "coupling_over_omega0", "Omega_plus", "Omega_minus")


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration; field names equal the file keys."""

    model: str = "physical"
    wavelength_m: float = 1064e-9
    power_w: float = 0.3
    rayleigh_range_m: float = 1.21e-6
    radius_m: float = 45e-9
    density_kg_m3: float = 1850.0
    rel_permittivity: float = 23 / 11
    charge1_e: float = 250.0
    charge2_e: float = -250.0
    separation_m: float = 2e-6
    pressure_pa: float = 1e-6
    gas_temperature_k: float = 300.0
    gas_damping_hz: float = 1e-5
    eta_in: float = 0.4
    eta_out: float = 0.05
    extra_coupling_rad_s: float = 0.0
    electric_feedback: bool = False
    omega0_rad_s: float = 1.0
    eta_eff: float = 0.45
    heating_over_omega0: float = 0.1
    coupling_over_omega0: float = 4.0
    filter_family: str = "resonant"
    gamma_plus: object = "opt"
    gamma_minus: object = "opt"
    Omega_plus: float = 1.0
    Omega_minus: float = 1.0
    psd_kind: str = "noise"
    psd_panel: str = "spectrum"
    psd_min_over_omega0: float = 0.5
    psd_max_over_omega0: float = 5.0
    psd_points: int = 200
    psd_inner_points: int = 201
    sweep_param: str = "coupling_over_omega0"
    sweep_min: float = 0.0
    sweep_max: float = 10.0
    sweep_points: int = 51
    sweep_scale: str = "linear"
    sweep2_param: str = "none"
    sweep2_min: float = 0.0
    sweep2_max: float = 1.0
    sweep2_points: int = 1
    sweep2_scale: str = "linear"
    negativity_kind: str = "unconditional"
    seed: int = 0
    n_traj: int = 0
    duration_s: float = 0.0
    dt_s: float = 0.0
    electron_distance_m: float = 10e-6
    electron_angle_deg: float = 45.0
    electron_amplitude_m: float = 1e-6
    electron_quality: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ConfigError(f"{f.name} must be finite", key=f.name)
        for key in ("sweep_param", "sweep2_param"):
            v = getattr(self, key)
            if v not in SWEEPABLE and not (key == "sweep2_param" and v == "none"):
                raise ConfigError(f"{key} must be one of {', '.join(SWEEPABLE)}", key=key)
        for key in ("sweep_points", "sweep2_points", "psd_points", "psd_inner_points", "n_traj"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative", key=key)
        for key in ("duration_s", "dt_s", "Omega_plus", "Omega_minus", "omega0_rad_s"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative", key=key)
        for key in ("gamma_plus", "gamma_minus"):
            v = getattr(self, key)
            if v != "opt" and not (isinstance(v, float) and v >= 0):
                raise ConfigError(f"{key} must be 'opt' or a non-negative number", key=key)

    def replace(self, **changes):
        return replace(self, **changes)

    # -- physics objects ---------------------------------------------
    def physical(self):
        """PhysicalConfig with charges converted to coulomb."""
        return PhysicalConfig(
            wavelength=self.wavelength_m,
            power=self.power_w,
            rayleigh_range=self.rayleigh_range_m,
            radius=self.radius_m,
            density=self.density_kg_m3,
            rel_permittivity=self.rel_permittivity,
            charge1=self.charge1_e * E_CHARGE,
            charge2=self.charge2_e * E_CHARGE,
            separation=self.separation_m,
            gas_pressure=self.pressure_pa,
            gas_temperature=self.gas_temperature_k,
            gas_damping=2 * math.pi * self.gas_damping_hz,
            eta_in=self.eta_in,
            eta_out=self.eta_out,
            extra_coupling=self.extra_coupling_rad_s,
            electric_feedback=self.electric_feedback,
        )

    def derived(self):
        if self.model == "physical":
            return derive(self.physical())
        return DerivedParams.from_dimensionless(self.omega0_rad_s, self.eta_eff, self.heating_over_omega0,
                                                self.coupling_over_omega0, eta_out=self.eta_out)

    # -- text form ---------------------------------------------------
    def to_text(self):
        """Effective configuration; parsing it gives an equal object."""
        lines = ["# effective configuration"]
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, float):
                s = repr(v)
            else:
                s = str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"


def parse_config(text, overrides=None):
    """Parse configuration text into a ``RunConfig``.

    Raises
    ------
    ConfigError
        For unknown, repeated or malformed keys; ``key`` names the culprit.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}", key=line.split()[0])
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEY_DOCS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", key=key)
        if key in values:
            raise ConfigError(f"line {lineno}: repeated key {key!r}", key=key)
        try:
            values[key] = KEY_DOCS[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}", key=key) from None
    values.update(overrides or {})
    return RunConfig(**values)


def load_config(path, overrides=None):
    with open(path) as fh:
        return parse_config(fh.read(), overrides)
