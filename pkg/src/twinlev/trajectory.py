"""Stochastic trajectories of the conditional first moments.

With the conditional covariance at its stationary value, the means of each
normal mode follow the linear Ito equations

    d<x> = <p>/m dt + (V_x / L) dW
    d<p> = (-m w^2 <x> + F + K) dt + (C / L) dW
    dy_r = <x> dt + (L / sqrt(eta_r)) dW_r,

with dW = (sqrt(eta_in) dW_in + sqrt(eta_out) dW_out) / sqrt(eta) and F the
cold-damping force computed from past in-loop increments.

Stepping
--------
Within a step the force is held constant, so the mean dynamics together
with the integrated records are a linear SDE with constant input.  Each step
samples its exact Gaussian transition (propagator plus Van Loan noise
covariance), which removes the O(w dt) bias of plain Euler-Maruyama.  The
only remaining discretisation is the feedback: F_n = -m gamma sum_j c_j
dy_{n-j} over j >= 1 with c_j = h(j dt) (trapezoidal end weight), held over
[t_n, t_{n+1}).  Its realised response dt sinc^2(w dt/2) sum_j c_j e^{i w j dt}
agrees with the continuous filter to O((w dt)^2), and the kernel gain and
centre are trimmed so that f(w_s) = 1 and g(w_s) = 0 hold for the discrete
response itself.

Random numbers
--------------
Every (trajectory, channel, mode) has its own Philox stream keyed by a
SeedSequence with spawn key (trajectory, channel, mode), so results do not
depend on how trajectories are grouped or scheduled.
"""

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, optimize, signal

from .errors import KernelNotCausal, SegmentTooShort, StepTooLarge
from .filters import FilterModel, discrete_response, resonant_bandwidth
from .gaussian import mode_covariance
from .spectra import SpectrumTable

__all__ = [
    "TrajectoryRecord",
    "EnsembleMoments",
    "realize_kernel",
    "kernel_from_samples",
    "step_bound",
    "simulate_trajectory",
    "simulate_batch",
    "ensemble_moments",
    "estimate_psd",
    "mode_transition",
]

MODES = ("+", "-")
CHANNELS = ("in", "out")
KERNEL_EFOLDS = 10.0
BLOCK = 256
CHUNK = 250


# ---------------------------------------------------------------------------
# kernels

def kernel_from_samples(weights, dt, gamma, omega_s, kernel_fn=None):
    """Discrete filter from sampled kernel weights c_1..c_K.

    If ``kernel_fn`` is given it is checked for causality on the grid
    t = -K dt .. 0; any nonzero value raises ``KernelNotCausal``.
    """
    weights = np.asarray(weights, dtype=float)
    if kernel_fn is not None:
        t = -np.arange(len(weights) + 1) * dt
        h = np.asarray(kernel_fn(t), dtype=float)
        if np.any(h != 0):
            raise KernelNotCausal("kernel has support at t <= 0")
    filt = FilterModel(gamma, omega_s, "discrete", weights=weights, dt=dt)
    return _with_bandwidth(filt)


def _with_bandwidth(filt):
    nyq = math.pi / filt.dt
    w = np.linspace(0, nyq, 20001)
    f = filt.f(w)
    bw = 2 * np.trapezoid(f**2, w) / math.pi
    return FilterModel(filt.gamma, filt.omega_s, "discrete", filt.shape, filt.gain, filt.center,
                       bw, filt.weights, filt.dt)


def _resonant_weights(shape, gain, center, omega_s, dt, n_taps):
    proto = FilterModel(1.0, omega_s, "resonant", shape=shape, gain=gain, center=center)
    c = proto.kernel(np.arange(1, n_taps + 1) * dt)
    c[-1] *= 0.5
    return c


def realize_kernel(filt, dt, efolds=KERNEL_EFOLDS):
    """Sample a resonant filter for step ``dt`` and trim it.

    The kernel is truncated after ``efolds`` envelope e-folds.  The gain G
    and centre w_f are then adjusted so that the discrete response at w_s
    is exactly -i w_s, i.e. f(w_s) = 1 and g(w_s) = 0.

    Returns
    -------
    discrete : FilterModel
        'discrete' family with the realised weights and bandwidth.
    continuous : FilterModel
        The trimmed continuous-time 'resonant' filter the samples come from.
    """
    if filt.family != "resonant":
        raise ValueError("only resonant filters have a causal kernel to sample")
    ws = filt.omega_s
    n_taps = int(math.ceil(efolds / filt.envelope_rate() / dt))

    def mismatch(v):
        c = _resonant_weights(filt.shape, v[0], v[1] * ws, ws, dt, n_taps)
        r = discrete_response(c, dt, ws)
        return [r.real / ws, (-r.imag - ws) / ws]

    sol = optimize.root(mismatch, [1.0, 1.0], method="hybr", tol=1e-14)
    gain, center = sol.x[0], sol.x[1] * ws
    c = _resonant_weights(filt.shape, gain, center, ws, dt, n_taps)
    cont = FilterModel(filt.gamma, ws, "resonant", shape=filt.shape, gain=gain, center=center,
                       bandwidth=resonant_bandwidth(filt.shape, ws, gain, center))
    disc = _with_bandwidth(FilterModel(filt.gamma, ws, "discrete", shape=filt.shape, gain=gain,
                                       center=center, weights=c, dt=dt))
    return disc, cont


# ---------------------------------------------------------------------------
# exact one-step transition

@dataclass(frozen=True)
class _Transition:
    Phi: np.ndarray        # (4, 2) map from (x, p)_n to (x, p, Yin, Yout)
    Bu: np.ndarray         # (4,) response to a unit constant force
    noise: tuple           # per channel (4, 4) factor S with S S^T = Q_r, or None


def mode_transition(derived, omega_s, dt):
    """Exact one-step transition of (x, p, Y_in, Y_out) for one mode.

    Returns the propagator from (x, p), the response to a unit held force
    and, per channel, a noise factor S_r with S_r S_r^T the covariance
    accumulated over one step.
    """
    d = derived
    m, L = d.mass, math.sqrt(d.L2)
    Vx, C, _ = mode_covariance(d, omega_s)
    # work in quadrature units where every entry is O(omega0); SI entries
    # span dozens of decades and spoil both expm and the noise factor
    w0 = d.omega0
    sc = np.array([d.x_scale, d.p_scale, d.x_scale / w0, d.x_scale / w0])
    A = np.zeros((4, 4))
    A[0, 1] = 1 / m
    A[1, 0] = -m * omega_s**2
    A[2, 0] = 1.0
    A[3, 0] = 1.0
    A = A * sc[None, :] / sc[:, None]
    b = np.array([0.0, 1.0, 0.0, 0.0]) / sc
    # propagator and held-input response from one augmented exponential
    M = np.zeros((5, 5))
    M[:4, :4] = A * dt
    M[:4, 4] = b * dt
    E = linalg.expm(M)
    Phi = E[:4, :2] * sc[:, None] / sc[None, :2]
    Bu = E[:4, 4] * sc
    noise = []
    for ch, eta_r in (("in", d.eta_in), ("out", d.eta_out)):
        if eta_r == 0:
            noise.append(None)
            continue
        col = np.zeros(4)
        col[0] = Vx * math.sqrt(eta_r) / L
        col[1] = C * math.sqrt(eta_r) / L
        col[2 if ch == "in" else 3] = L / math.sqrt(eta_r)
        col = col / sc
        Q = _van_loan(A, np.outer(col, col), dt)
        lam, U = np.linalg.eigh(0.5 * (Q + Q.T))
        noise.append(sc[:, None] * U * np.sqrt(np.clip(lam, 0, None)))
    return _Transition(Phi, Bu, tuple(noise))


def _van_loan(A, BB, dt):
    n = A.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -A * dt
    M[:n, n:] = BB * dt
    M[n:, n:] = A.T * dt
    E = linalg.expm(M)
    F = E[n:, n:].T
    return F @ E[:n, n:]


def step_bound(derived, filters=None):
    """Largest allowed step 2 pi / (100 max(omega+, omega-, W))."""
    w = [derived.omega_plus, derived.omega_minus]
    for f in (filters or {}).values():
        if f is not None and f.shape is not None:
            w.append(f.shape)
    return 2 * math.pi / (100 * max(w))


# ---------------------------------------------------------------------------
# records

@dataclass
class TrajectoryRecord:
    """Simulated means and measurement increments.

    Arrays carry a leading trajectory axis.  ``means`` has shape
    (n_traj, n_steps + 1, 4) in (x+, p+, x-, p-) order; ``dy_in``,
    ``dy_out`` and ``force`` have shape (n_traj, n_steps, 2) in (+, -)
    order, where step n covers [t_n, t_n + dt).  Channels with zero
    efficiency are NaN.
    """

    t: np.ndarray
    dt: float
    seed: int
    traj_index: np.ndarray
    filters: dict
    means: Optional[np.ndarray] = None
    dy_in: Optional[np.ndarray] = None
    dy_out: Optional[np.ndarray] = None
    force: Optional[np.ndarray] = None
    derived: object = field(default=None, repr=False)

    def to_csv(self, path=None, traj=0):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_s", "x_plus", "p_plus", "x_minus", "p_minus",
                    "dy_in_plus", "dy_in_minus", "dy_out_plus", "dy_out_minus"])
        n = len(self.t) - 1
        for k in range(n):
            row = [self.t[k], *self.means[traj, k], *self.dy_in[traj, k], *self.dy_out[traj, k]]
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _streams(seed_base, traj_index):
    """Philox generators keyed by (trajectory, channel, mode)."""
    gens = {}
    for ci, ch in enumerate(CHANNELS):
        for mi, mode in enumerate(MODES):
            gens[(ch, mode)] = [np.random.Generator(np.random.Philox(
                np.random.SeedSequence(seed_base, spawn_key=(int(i), ci, mi)))) for i in traj_index]
    return gens


def _prepare(derived, filters, dt):
    if dt > step_bound(derived, filters) * (1 + 1e-12):
        raise StepTooLarge(f"dt = {dt:.4g} s exceeds 2 pi / (100 omega_max) = {step_bound(derived, filters):.4g} s")
    kernels = {}
    for mode in MODES:
        f = filters.get(mode)
        if f is None or f.gamma == 0:
            kernels[mode] = (0.0, np.zeros(0))
            continue
        if f.family == "resonant":
            f, _ = realize_kernel(f, dt)
        if f.family != "discrete":
            raise KernelNotCausal(f"{f.family} filters are not causal; use a resonant or discrete filter")
        if not math.isclose(f.dt, dt, rel_tol=1e-12):
            raise ValueError("discrete kernel sampled with a different dt")
        kernels[mode] = (f.gamma, np.asarray(f.weights, dtype=float))
        filters = {**filters, mode: f}
    trans = {mode: mode_transition(derived, derived.mode_frequency(mode), dt) for mode in MODES}
    return kernels, trans, filters


def _run_chunk(derived, kernels, trans, force, seed_base, traj_index, n_steps, dt,
               initial, keep, accumulate_from):
    """Simulate one group of trajectories; returns stored arrays and sums."""
    n = len(traj_index)
    m = derived.mass
    gens = _streams(seed_base, traj_index)
    state = np.zeros((n, 4)) if initial is None else np.broadcast_to(np.asarray(initial, float), (n, 4)).copy()
    store = {}
    if "means" in keep:
        store["means"] = np.empty((n, n_steps + 1, 4))
        store["means"][:, 0] = state
    for key in ("dy_in", "dy_out", "force"):
        if key in keep:
            store[key] = np.full((n, n_steps, 2), np.nan)
    sums = np.zeros((n, 4, 4))
    count = 0
    bufs = {}
    for mode in MODES:
        K = len(kernels[mode][1])
        bufs[mode] = (np.zeros((n, 2 * K)), kernels[mode][1][::-1].copy(), K)
    pos = 0
    noise = {}
    for start in range(0, n_steps, BLOCK):
        nb = min(BLOCK, n_steps - start)
        for key, glist in gens.items():
            S = trans[key[1]].noise[CHANNELS.index(key[0])]
            if S is None:
                continue
            z = np.stack([g.standard_normal((nb, 4)) for g in glist])  # (n, nb, 4)
            noise[key] = z @ S.T
        for k in range(nb):
            step = start + k
            t_mid = (step + 0.5) * dt
            for mi, mode in enumerate(MODES):
                i = 2 * mi
                tr = trans[mode]
                gam, _w = kernels[mode]
                buf, wrev, K = bufs[mode]
                if K:
                    # last K increments, oldest first, contiguous in the doubled buffer
                    last = (pos - 1) % K
                    u = -m * gam * (buf[:, last + 1:last + 1 + K] @ wrev)
                else:
                    u = np.zeros(n)
                if force is not None and force.get(mode) is not None:
                    u = u + force[mode](t_mid)
                new = state[:, i:i + 2] @ tr.Phi.T + np.multiply.outer(u, tr.Bu)
                for key in (("in", mode), ("out", mode)):
                    if key in noise:
                        new = new + noise[key][:, k]
                state[:, i:i + 2] = new[:, :2]
                dy_in = new[:, 2]
                if K:
                    slot = pos % K
                    buf[:, slot] = dy_in
                    buf[:, slot + K] = dy_in
                if "dy_in" in store and tr.noise[0] is not None:
                    store["dy_in"][:, step, mi] = dy_in
                if "dy_out" in store and tr.noise[1] is not None:
                    store["dy_out"][:, step, mi] = new[:, 3]
                if "force" in store:
                    store["force"][:, step, mi] = u
            pos += 1
            if "means" in store:
                store["means"][:, step + 1] = state
            if step + 1 >= accumulate_from:
                sums += state[:, :, None] * state[:, None, :]
                count += 1
    return store, sums, count, state


def simulate_batch(derived, filters, seed, duration, dt, traj_index=(0,), force=None,
                   initial=None, keep=("means", "dy_in", "dy_out", "force"), threads=1):
    """Simulate several trajectories and keep their full records.

    Parameters
    ----------
    derived : DerivedParams
    filters : dict
        Mode -> FilterModel ('resonant' filters are sampled and trimmed
        automatically, 'discrete' ones used as given).  A missing mode or
        gamma = 0 means no feedback.
    seed : int
        Base seed of the counter-based streams.
    duration, dt : float
    traj_index : sequence of int
        Trajectory numbers, which select the random streams.
    force : dict, optional
        Mode -> callable K(t) in N, evaluated at step midpoints.
    initial : array_like, optional
        Initial means (x+, p+, x-, p-), default zero.
    keep : tuple of str
        Which arrays to store.
    """
    kernels, trans, realized = _prepare(derived, filters, dt)
    n_steps = int(round(duration / dt))
    idx = np.asarray(traj_index, dtype=int)
    chunks = [idx[i:i + CHUNK] for i in range(0, len(idx), CHUNK)]

    def run(ch):
        return _run_chunk(derived, kernels, trans, force, seed, ch, n_steps, dt, initial, keep, n_steps + 1)

    results = _map(run, chunks, threads)
    rec = TrajectoryRecord(t=np.arange(n_steps + 1) * dt, dt=dt, seed=seed, traj_index=idx,
                           filters=realized, derived=derived)
    for key in ("means", "dy_in", "dy_out", "force"):
        if key in keep:
            setattr(rec, key, np.concatenate([r[0][key] for r in results], axis=0))
    return rec


def simulate_trajectory(derived, filters, force=None, seed=0, duration=1.0, dt=None, initial=None):
    """Single trajectory with full records (see ``simulate_batch``)."""
    if dt is None:
        dt = step_bound(derived, filters)
    return simulate_batch(derived, filters, seed, duration, dt, (0,), force, initial)


def _map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


# ---------------------------------------------------------------------------
# ensembles

@dataclass
class EnsembleMoments:
    """Monte-Carlo estimate of the unconditional covariance.

    ``mean_products`` are the ensemble second moments of the means,
    ``cov`` adds the stationary conditional covariance.  Standard errors
    come from batch means, one batch per trajectory (the time average over
    its sampling window).  The ``*_dimensionless`` versions use the
    omega0 quadrature scaling.
    """

    cov: np.ndarray
    se: np.ndarray
    mean_products: np.ndarray
    n_traj: int
    samples_per_traj: int
    filters: dict
    cov_dimensionless: np.ndarray = None
    se_dimensionless: np.ndarray = None
    final_means: np.ndarray = field(default=None, repr=False)


def ensemble_moments(derived, filters, n_traj, seed_base, duration, dt, burn_in=None,
                     initial=None, threads=1):
    """Unconditional covariance from an ensemble of trajectories.

    The first ``burn_in`` seconds (default 10 / min gamma_s) are discarded;
    the remaining window is time-averaged per trajectory.  A window of zero
    length uses the final state only.
    """
    if n_traj < 2:
        raise ValueError("need at least two trajectories")
    kernels, trans, realized = _prepare(derived, filters, dt)
    gam = [kernels[m][0] for m in MODES if kernels[m][0] > 0]
    if burn_in is None:
        burn_in = 10 / min(gam) if gam else 0.0
    n_steps = int(round(duration / dt))
    start = min(int(round(burn_in / dt)), n_steps)
    idx = np.arange(n_traj)
    chunks = [idx[i:i + CHUNK] for i in range(0, n_traj, CHUNK)]

    def run(ch):
        return _run_chunk(derived, kernels, trans, None, seed_base, ch, n_steps, dt, initial, (), start)

    results = _map(run, chunks, threads)
    batch = np.concatenate([r[1] / r[2] for r in results], axis=0)  # (n_traj, 4, 4)
    finals = np.concatenate([r[3] for r in results], axis=0)
    count = results[0][2]
    mean = np.zeros((4, 4))
    for b in batch:  # fixed summation order by trajectory index
        mean += b
    mean /= n_traj
    se = batch.std(axis=0, ddof=1) / math.sqrt(n_traj)
    cond = np.zeros((4, 4))
    for i, mode in ((0, "+"), (2, "-")):
        Vx, C, Vp = mode_covariance(derived, derived.mode_frequency(mode))
        cond[i:i + 2, i:i + 2] = [[Vx, C], [C, Vp]]
    cov = mean + cond
    s = np.array([derived.x_scale, derived.p_scale] * 2)
    S = np.outer(s, s)
    return EnsembleMoments(cov=cov, se=se, mean_products=mean, n_traj=n_traj, samples_per_traj=count,
                           filters=realized, cov_dimensionless=cov / S, se_dimensionless=se / S,
                           final_means=finals)


# ---------------------------------------------------------------------------
# spectra from records

def estimate_psd(record, channel, mode, burn_in=None, resolution=None):
    """Welch estimate of the record PSD S_rs(w) (two-sided, m^2 s).

    Uses the rate dy/dt, a Hann window with 50 % overlap and averages over
    all trajectories of the record.  Spectra are normalised so that
    int S dw over the whole axis gives the variance (white noise of unit
    intensity has S = 1 / 2 pi), i.e. the two-sided density per Hz divided
    by 2 pi, as in ``signal_psd``.  Positive frequencies only are returned
    (the spectrum is even).

    Parameters
    ----------
    burn_in : float, optional
        Seconds discarded at the start, default 10 / min gamma_s.
    resolution : float, optional
        Target frequency resolution (rad/s), default min gamma_s / 10.
    """
    arr = record.dy_in if channel == "in" else record.dy_out
    if arr is None:
        raise ValueError(f"record does not contain the {channel} channel")
    mi = MODES.index(mode)
    dt = record.dt
    gam = [f.gamma for f in record.filters.values() if f is not None and f.gamma > 0]
    gmin = min(gam) if gam else None
    if burn_in is None:
        burn_in = 10 / gmin if gmin else 0.0
    if resolution is None:
        if gmin is None:
            raise ValueError("give a resolution when there is no feedback")
        resolution = gmin / 10
    start = int(round(burn_in / dt))
    x = arr[:, start:, mi] / dt
    if np.any(np.isnan(x)):
        raise ValueError(f"{channel} channel has zero efficiency")
    nperseg = int(math.ceil(2 * math.pi / (resolution * dt)))
    if x.shape[1] < nperseg:
        raise SegmentTooShort(f"{x.shape[1]} stationary samples < segment length {nperseg}")
    f, p = signal.welch(x, fs=1 / dt, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
                        detrend=False, return_onesided=False, scaling="density", axis=-1)
    p = p.mean(axis=0)
    sel = f > 0
    order = np.argsort(f[sel])
    omega = 2 * math.pi * f[sel][order]
    vals = p[sel][order] / (2 * math.pi)
    meta = {"window": "hann", "nperseg": nperseg, "overlap": 0.5, "trajectories": x.shape[0],
            "burn_in_s": burn_in, "convention": "two-sided, var = int S dw"}
    return SpectrumTable(omega, {(channel, mode): vals}, "m^2 s", meta)
