"""Frequency-domain response of the feedback-cooled normal modes.

Conventions: A[w] = int dt exp(i w t) A(t) / sqrt(2 pi), two-sided spectra
over w in (-inf, inf).  With this convention white noise of unit intensity
has spectral density 1 / (2 pi), and the record PSD of a perfectly resolved
mode at rest is the shot floor L^2 / (2 pi eta_r).

Noise spectra are written in force units,

    S_rs(w) = |chi_s(w)|^2 (2 pi S_KK(w) + N_rs(w)) / (2 pi m^2).
"""

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .constants import E_CHARGE, EPSILON_0, HBAR
from .errors import GeometryInvalid, SingularResponse
from .filters import FilterModel
from .gaussian import mode_covariance

__all__ = [
    "ForceSpec",
    "SpectrumTable",
    "SQLResult",
    "ForceSensitivity",
    "ElectronDemoResult",
    "susceptibility",
    "noise_psd",
    "signal_psd",
    "frequency_grid",
    "spectrum_table",
    "sql_resonant",
    "sql_closed_form",
    "normalized_resonant_noise",
    "noise_vs_recoil",
    "min_detectable_force",
    "electron_force_amplitude",
    "electron_demo",
    "first_moment_covariance",
]

CHANNELS = ("in", "out")
MODES = ("+", "-")


@dataclass(frozen=True)
class ForceSpec:
    """External force acting on one normal mode.

    Attributes
    ----------
    psd : callable
        Two-sided force PSD S_KK(w) in N^2 s, even in w.
    description : str
    waveform : callable, optional
        Deterministic force K(t) in N, used by the trajectory simulator.
    """

    psd: Callable = field(default=lambda w: np.zeros_like(np.asarray(w, dtype=float)))
    description: str = "none"
    waveform: Optional[Callable] = None

    @classmethod
    def lorentzian_line(cls, center, width, mean_square, description="lorentzian line"):
        """Lorentzian lines of full width ``width`` at +-center.

        ``mean_square`` is the total force variance <K^2>, shared equally
        between the positive and negative frequency lines, so that
        int S_KK dw = <K^2>.  A sinusoid of amplitude A has <K^2> = A^2 / 2.
        """
        hw = width / 2

        def psd(w):
            w = np.asarray(w, dtype=float)
            lor = lambda x: hw / np.pi / (x**2 + hw**2)
            return 0.5 * mean_square * (lor(w - center) + lor(w + center))

        return cls(psd, description)


def susceptibility(omega, omega_s, filt):
    """chi_s(w) = 1 / (w_s^2 - w^2 + gamma_s sqrt(2 pi) H_s(w)) in s^2."""
    w = np.asarray(omega, dtype=float)
    inv = omega_s**2 - w**2 + filt.gamma * filt.response(w)
    if np.any(np.abs(inv) < 1e-30):
        raise SingularResponse("undamped resonance: |1/chi| < 1e-30")
    return 1 / inv


def noise_psd(omega, channel, mode, derived, filt, D_g=None):
    """Noise spectrum N_rs(w) of the in-loop or out-of-loop record (N^2 s).

    Out of loop the fed-back shot noise adds to the imprecision; in loop it
    is partly cancelled by its correlation with the record, which can push
    the apparent noise below the back-action level (squashing).  Any
    nonzero g_s is kept in both expressions.

    Parameters
    ----------
    omega : array_like
    channel : {'in', 'out'}
    mode : {'+', '-'}
    derived : DerivedParams
    filt : FilterModel
    D_g : float, optional
        Override of the gas diffusion constant.
    """
    w = np.asarray(omega, dtype=float)
    omega_s = derived.mode_frequency(mode)
    D_g = derived.D_g if D_g is None else D_g
    m, L2, gam = derived.mass, derived.L2, filt.gamma
    R = filt.response(w)
    chi_inv = omega_s**2 - w**2 + gam * R
    base = HBAR**2 / (4 * L2) + 2 * D_g
    eta_in = derived.eta_in
    fb = gam**2 * np.abs(R)**2 / eta_in if gam != 0 else 0.0
    if channel == "out":
        imprecision = np.abs(chi_inv)**2 / derived.eta_out if derived.eta_out > 0 else np.inf
        return base + m**2 * L2 * (imprecision + fb)
    if channel == "in":
        cross = 2 * (omega_s**2 - w**2) * gam * R.real / eta_in
        return base + m**2 * L2 * (np.abs(chi_inv)**2 / eta_in - fb - cross)
    raise ValueError(f"channel must be 'in' or 'out', got {channel!r}")


def signal_psd(omega, channel, mode, derived, filt, force=None, D_g=None):
    """Record PSD S_rs(w) in m^2 s (two-sided)."""
    w = np.asarray(omega, dtype=float)
    omega_s = derived.mode_frequency(mode)
    chi2 = np.abs(susceptibility(w, omega_s, filt))**2
    N = noise_psd(w, channel, mode, derived, filt, D_g)
    skk = 0.0 if force is None else force.psd(w)
    return chi2 * (2 * math.pi * skk + N) / (2 * math.pi * derived.mass**2)


# ---------------------------------------------------------------------------
# tables

@dataclass
class SpectrumTable:
    """PSD values on a frequency grid, keyed by (channel, mode)."""

    omega: np.ndarray
    values: dict
    units: str = "m^2 s"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        if self.omega.size > 1 and not np.all(np.diff(self.omega) > 0):
            raise ValueError("frequency grid must be strictly increasing")
        for key, v in self.values.items():
            v = np.asarray(v, dtype=float)
            if v.shape != self.omega.shape or not np.all(np.isfinite(v)):
                raise ValueError(f"values for {key} must be finite and match the grid")
            self.values[key] = v

    def to_csv(self, path=None):
        """Write ``omega_rad_s,mode,channel,value_si`` rows; returns the text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["omega_rad_s", "mode", "channel", "value_si"])
        for (channel, mode), v in self.values.items():
            for w, val in zip(self.omega, v):
                writer.writerow([repr(float(w)), mode, channel, repr(float(val))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def frequency_grid(omega_s, gamma, omega_min, omega_max, n_inner=201, n_outer=100):
    """Linear grid on [w_s - 10 gamma, w_s + 10 gamma], logarithmic outside.

    Returns an empty array if the range is empty.
    """
    if not omega_max > omega_min or omega_max <= 0:
        return np.empty(0)
    lo = max(omega_s - 10 * gamma, omega_min)
    hi = min(omega_s + 10 * gamma, omega_max)
    parts = []
    w_start = max(omega_min, 1e-12 * omega_s)
    if lo > w_start:
        parts.append(np.geomspace(w_start, lo, n_outer, endpoint=False))
    if hi > lo:
        parts.append(np.linspace(lo, hi, n_inner))
    if omega_max > hi:
        parts.append(np.geomspace(hi, omega_max, n_outer + 1)[1:])
    grid = np.unique(np.concatenate(parts)) if parts else np.empty(0)
    return grid[(grid >= omega_min) & (grid <= omega_max)]


def spectrum_table(omega, derived, filters, kind="signal", channels=CHANNELS, modes=MODES, force=None):
    """Tabulate ``signal_psd`` or ``noise_psd`` for several channels and modes.

    ``filters`` maps mode to ``FilterModel``.
    """
    omega = np.asarray(omega, dtype=float)
    values = {}
    for mode in modes:
        for channel in channels:
            if kind == "signal":
                v = signal_psd(omega, channel, mode, derived, filters[mode], force)
            else:
                v = noise_psd(omega, channel, mode, derived, filters[mode])
            values[(channel, mode)] = v
    units = "m^2 s" if kind == "signal" else "N^2 s"
    meta = {"kind": kind, "grid": "linear within 10 gamma of resonance, logarithmic outside"}
    return SpectrumTable(omega, values, units, meta)


# ---------------------------------------------------------------------------
# standard quantum limit

@dataclass(frozen=True)
class SQLResult:
    """Optimal measurement strength for out-of-loop force sensing."""

    L2_opt: float
    floor: float
    closed_form: float
    L2_closed_form: float
    gamma_sc_opt: float


def sql_closed_form(mass, gamma, omega_s, eta_in, eta_out):
    """(floor, L2_opt) of the resonant out-of-loop noise at D_g = 0."""
    A = 1 / eta_in + 1 / eta_out
    floor = HBAR * mass * gamma * omega_s * math.sqrt(A)
    L2 = HBAR / (2 * mass * gamma * omega_s * math.sqrt(A))
    return floor, L2


def sql_resonant(derived, mode, gamma, eta_in, eta_out):
    """Minimise the resonant out-of-loop noise over the measurement strength.

    The numerical minimum over L^2 (gas noise switched off) is returned
    together with the closed form hbar m gamma w_s sqrt(1/eta_in + 1/eta_out).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    omega_s = derived.mode_frequency(mode)
    d0 = derived.replace(eta_in=eta_in, eta_out=eta_out, D_g=0.0)
    filt = FilterModel.ideal(gamma, omega_s)
    floor_cf, L2_cf = sql_closed_form(derived.mass, gamma, omega_s, eta_in, eta_out)

    def noise(log_ratio):
        d = d0.replace(L2=L2_cf * math.exp(log_ratio))
        return float(noise_psd(omega_s, "out", mode, d, filt)) / floor_cf

    res = optimize.minimize_scalar(noise, bracket=(-3.0, 0.5, 3.0), method="brent",
                                   options={"xtol": 1e-12, "maxiter": 500})
    L2_opt = L2_cf * math.exp(res.x)
    return SQLResult(
        L2_opt=L2_opt,
        floor=res.fun * floor_cf,
        closed_form=floor_cf,
        L2_closed_form=L2_cf,
        gamma_sc_opt=HBAR / (8 * derived.mass * derived.omega0 * L2_opt),
    )


def normalized_resonant_noise(gamma_sc_over_omega0, gamma_over_omega0, omega_s_over_omega0, eta_in, eta_out):
    """Resonant out-of-loop noise in units of hbar m omega0 gamma (D_g = 0).

    With L^2 = hbar / (8 m omega0 Gamma_sc):

        N / (hbar m omega0 gamma) = 2 Gamma_sc / gamma
                                    + gamma w_s^2 A / (8 omega0^2 Gamma_sc),

    A = 1/eta_in + 1/eta_out, minimised at w_s sqrt(A) / omega0.
    """
    G = np.asarray(gamma_sc_over_omega0, dtype=float)
    A = 1 / eta_in + 1 / eta_out
    return 2 * G / gamma_over_omega0 + gamma_over_omega0 * omega_s_over_omega0**2 * A / (8 * G)


def noise_vs_recoil(derived, mode, channel, gamma, gamma_sc):
    """Resonant noise N_rs(w_s) / (hbar m omega0 gamma) against the recoil rate.

    The measurement strength follows the recoil rate, L^2 = hbar / (8 m
    omega0 Gamma_sc); the gas diffusion of ``derived`` is kept.  On
    resonance the filter constraints fix the response, so the result does
    not depend on the filter family.
    """
    d = derived
    omega_s = d.mode_frequency(mode)
    filt = FilterModel.ideal(gamma, omega_s)
    gsc = np.atleast_1d(np.asarray(gamma_sc, dtype=float))
    out = np.empty_like(gsc)
    for i, G in enumerate(gsc):
        di = d.replace(L2=HBAR / (8 * d.mass * d.omega0 * G))
        out[i] = float(noise_psd(omega_s, channel, mode, di, filt))
    return out / (HBAR * d.mass * d.omega0 * gamma)


# ---------------------------------------------------------------------------
# sensitivity

@dataclass(frozen=True)
class ForceSensitivity:
    asd: float           # N / sqrt(Hz), sqrt of the two-sided noise
    force: float         # N, after integration
    gradient: float      # N / m
    gradient_asd: float  # N / m / sqrt(Hz)


def min_detectable_force(noise_floor, integration_time, separation):
    """Smallest resolvable force and force gradient.

    ``noise_floor`` is the resonant noise N in N^2 s.  The force after
    averaging for ``integration_time`` is sqrt(N / tau); the gradient follows
    from the difference-mode force K- = (K2 - K1) / sqrt(2) over the focus
    separation, gradient = sqrt(2) force / d.
    """
    asd = math.sqrt(noise_floor)
    force = math.sqrt(noise_floor / integration_time)
    return ForceSensitivity(
        asd=asd,
        force=force,
        gradient=math.sqrt(2) * force / separation,
        gradient_asd=math.sqrt(2) * asd / separation,
    )


# ---------------------------------------------------------------------------
# single-electron demonstration

@dataclass(frozen=True)
class ElectronDemoResult:
    snr: float
    force_amplitude: float   # amplitude of K- (N)
    linewidth: float         # rad/s
    force_peak_psd: float    # 2 pi S_KK at omega- (N^2 s)
    noise: float             # N_out at omega- (N^2 s)
    force_spec: ForceSpec


def _coulomb_x(q_particle, r_particle, q_source, r_source):
    r = np.asarray(r_particle) - np.asarray(r_source)
    return q_particle * q_source * r[0] / (4 * math.pi * EPSILON_0 * np.linalg.norm(r)**3)


def electron_force_amplitude(q1, q2, separation, distance, angle, amplitude, direction=None,
                             q_source=-E_CHARGE):
    """Amplitude of the difference-mode force from an oscillating charge.

    Geometry: optical axis x, particles at (0, -d/2) and (0, +d/2), source
    at distance R from the midpoint at ``angle`` (rad) from the x axis in the
    x-y plane.  The source oscillates with amplitude a along ``direction``
    (unit vector, default radial).  To first order in a, the x force on
    particle j oscillates with amplitude a |grad_src F_j . u|, and
    K- = (K2 - K1) / sqrt(2).
    """
    r_src = distance * np.array([math.cos(angle), math.sin(angle), 0.0])
    u = r_src / distance if direction is None else np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    total = 0.0
    for q, sign in ((q1, -1.0), (q2, 1.0)):
        r = np.array([0.0, sign * separation / 2, 0.0]) - r_src
        n = np.linalg.norm(r)
        k = q * q_source / (4 * math.pi * EPSILON_0)
        # d/dr_src of k r_x / |r|^3 with r = r_particle - r_src
        grad = -k * (np.array([1.0, 0.0, 0.0]) / n**3 - 3 * r[0] * r / n**5)
        total += sign * (grad @ u)
    return abs(total) * amplitude / math.sqrt(2)


def electron_demo(derived, filt, q1, q2, separation, distance=10e-6, angle=math.pi / 4,
                  amplitude=1e-6, quality=10.0, direction=None):
    """Resonant SNR for a single electron oscillating at omega-.

    The force line is Lorentzian with full width omega- / Q and total
    variance A_K^2 / 2 (a sinusoid of amplitude A_K), split between +-omega-.
    The SNR is the ratio of 2 pi S_KK to the out-of-loop noise at omega-,
    which for a narrow line is about A_K^2 / (linewidth N_out).
    """
    if amplitude < 0 or quality <= 0:
        raise GeometryInvalid("amplitude must be >= 0 and quality > 0")
    if distance <= max(amplitude, separation):
        raise GeometryInvalid("electron must be farther away than the amplitude and the particle separation")
    w = derived.omega_minus
    A = electron_force_amplitude(q1, q2, separation, distance, angle, amplitude, direction)
    width = w / quality
    force = ForceSpec.lorentzian_line(w, width, 0.5 * A**2, "electron")
    peak = 2 * math.pi * float(force.psd(w))
    N = float(noise_psd(w, "out", "-", derived, filt))
    return ElectronDemoResult(snr=peak / N, force_amplitude=A, linewidth=width,
                              force_peak_psd=peak, noise=N, force_spec=force)


# ---------------------------------------------------------------------------
# stationary first moments by frequency integration

def _first_moment_amplitudes(w, derived, mode, filt):
    """Transfer coefficients of the in/out white noises to <x> and <p>."""
    d = derived
    omega_s = d.mode_frequency(mode)
    m, L = d.mass, math.sqrt(d.L2)
    Vx, C, _ = mode_covariance(d, omega_s)
    R = filt.response(w)
    chi = 1 / (omega_s**2 - w**2 + filt.gamma * R)
    innov = C / (m * L) - 1j * w * Vx / L
    amps = []
    for eta_r, fed_back in ((d.eta_in, True), (d.eta_out, False)):
        if eta_r == 0:
            continue
        a = chi * innov * math.sqrt(eta_r)
        if fed_back:
            a = a - chi * filt.gamma * R * L / math.sqrt(eta_r)
        b = m * (-1j * w * a - Vx / L * math.sqrt(eta_r))
        amps.append((a, b))
    return amps


def first_moment_covariance(derived, mode, filt, rtol=1e-10):
    """Stationary E[<x><x>], E[<p><p>], E[<x><p>] of one mode (SI, 2x2).

    Exact for any filter: the linear first-moment equations are solved in
    the frequency domain and the spectra integrated over all frequencies.
    Adding the conditional covariance gives the unconditional one.
    """
    omega_s = derived.mode_frequency(mode)

    def integrand(w, which):
        tot = 0.0
        for a, b in _first_moment_amplitudes(np.asarray(w), derived, mode, filt):
            if which == 0:
                tot = tot + abs(a)**2
            elif which == 1:
                tot = tot + abs(b)**2
            else:
                tot = tot + (a * np.conj(b)).real
        return float(tot)

    width = max(filt.gamma, 1e-6 * omega_s)
    pts = sorted({max(omega_s - 20 * width, 0.0), omega_s, omega_s + 20 * width})
    if filt.shape is not None:
        pts = sorted(set(pts) | {filt.shape, filt.center or omega_s})
    edges = [0.0] + [p for p in pts if p > 0] + [10 * max(pts[-1], omega_s)]
    out = np.zeros(3)
    for which in range(3):
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi > lo:
                total += integrate.quad(integrand, lo, hi, args=(which,), limit=400,
                                        epsabs=0, epsrel=rtol)[0]
        total += integrate.quad(integrand, edges[-1], np.inf, args=(which,), limit=400,
                                epsabs=0, epsrel=rtol)[0]
        # even integrands: (1/2 pi) int over the real line = (1/pi) int_0^inf
        out[which] = total / math.pi
    return np.array([[out[0], out[2]], [out[2], out[1]]])
