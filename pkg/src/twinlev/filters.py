"""Feedback filter models.

A cold-damping filter is described by its response

    R(w) = sqrt(2 pi) H[w] = g(w) - i w f(w),

with the Fourier convention A[w] = int dt exp(i w t) A(t) / sqrt(2 pi).  At the
mode frequency the filter must act as a pure velocity damper, f(w_s) = 1 and
g(w_s) = 0.  The bandwidth (1/pi) int f^2 dw sets how much differentiated
shot noise reaches the momentum.

Families
--------
ideal
    f = 1, g = 0 at all frequencies (infinite bandwidth).  Useful where only
    the resonant response matters.
lorentzian
    f = (W^2 + w_s^2) / (W^2 + w^2), g = 0.  Even and non-causal; the
    bandwidth (W^2 + w_s^2)^2 / (2 W^3) cannot go below 1.54 w_s.
resonant
    R(s) = -G w_f^2 W / (s^2 + W s + w_f^2) with s = -i w, a causal
    second-order band-pass on the record.  With G = 1 and w_f = w_s it
    meets both constraints exactly and reaches bandwidths well below w_s.
discrete
    Sampled causal kernel applied to record increments with a zero-order
    hold, as used by the trajectory simulator.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import linalg, optimize

__all__ = [
    "FilterModel",
    "lorentzian_bandwidth",
    "resonant_bandwidth",
    "numerical_bandwidth",
]


def lorentzian_bandwidth(shape, omega_s):
    return (shape**2 + omega_s**2)**2 / (2 * shape**3)


def _h2_norm_sq(den):
    """int |1/P(-i w)|^2 dw / (2 pi) for a Hurwitz polynomial P (highest power first)."""
    den = np.asarray(den, dtype=float)
    den = den / den[0]
    n = len(den) - 1
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1] = -den[:0:-1]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    X = linalg.solve_continuous_lyapunov(A, -B @ B.T)
    return X[0, 0]


def resonant_bandwidth(shape, omega_s, gain=1.0, center=None):
    """Bandwidth (1/pi) int f^2 dw of the resonant family, via a Lyapunov solve."""
    # evaluated in units of omega_s, the bandwidth scales linearly
    wf = 1.0 if center is None else center / omega_s
    W = shape / omega_s
    p = np.array([1.0, W, wf**2])
    p2 = np.polymul(p, p)
    amp = gain * wf**2 * W**2
    return omega_s * amp**2 * 2 * _h2_norm_sq(p2)


def numerical_bandwidth(filt, omega_max=None, points=200001):
    """Bandwidth from trapezoidal integration of f^2 on a uniform grid."""
    if omega_max is None:
        omega_max = 400 * max(filt.omega_s, filt.shape or 0.0)
    w = np.linspace(0.0, omega_max, points)
    return 2 * np.trapezoid(filt.f(w)**2, w) / math.pi


@dataclass(frozen=True, eq=False)
class FilterModel:
    """Feedback filter of one normal mode.

    Attributes
    ----------
    gamma : float
        Feedback damping rate gamma_s (rad/s).
    omega_s : float
        Mode frequency the filter is designed for (rad/s).
    family : str
        One of 'ideal', 'lorentzian', 'resonant', 'discrete'.
    shape : float
        Width parameter W of the lorentzian/resonant families (rad/s).
    gain, center : float
        Resonant family gain G and centre frequency w_f (defaults w_s).
    bandwidth : float
        (1/pi) int f^2 dw (rad/s).
    weights, dt : ndarray, float
        Kernel weights c_j (j = 1..K) and sample step of the discrete family.
    """

    gamma: float
    omega_s: float
    family: str = "ideal"
    shape: Optional[float] = None
    gain: float = 1.0
    center: Optional[float] = None
    bandwidth: float = math.inf
    weights: Optional[np.ndarray] = field(default=None, repr=False)
    dt: Optional[float] = None

    # -- constructors -------------------------------------------------
    @classmethod
    def ideal(cls, gamma, omega_s):
        return cls(gamma, omega_s, "ideal")

    @classmethod
    def lorentzian(cls, gamma, omega_s, bandwidth):
        """Lorentzian family on its broad branch W >= sqrt(3) w_s."""
        w_min = math.sqrt(3) * omega_s
        b_min = lorentzian_bandwidth(w_min, omega_s)
        if bandwidth < b_min * (1 - 1e-12):
            raise ValueError(f"lorentzian filters need bandwidth >= {b_min / omega_s:.4f} omega_s")
        if bandwidth <= b_min:
            shape = w_min
        else:
            hi = w_min
            while lorentzian_bandwidth(hi, omega_s) < bandwidth:
                hi *= 2
            shape = optimize.brentq(lambda W: lorentzian_bandwidth(W, omega_s) - bandwidth,
                                    w_min, hi, xtol=1e-14 * hi, rtol=1e-15)
        return cls(gamma, omega_s, "lorentzian", shape=shape, bandwidth=bandwidth)

    @classmethod
    def resonant(cls, gamma, omega_s, bandwidth=None, shape=None):
        """Resonant band-pass with f(w_s) = 1, g(w_s) = 0 exactly.

        Give either the target ``bandwidth`` or the ``shape`` W directly.
        For G = 1 and w_f = w_s the bandwidth is W (w_s^2 + W^2) / (2 w_s^2),
        monotone in W.
        """
        if shape is None:
            if bandwidth is None or bandwidth <= 0:
                raise ValueError("give a positive bandwidth or the shape")
            # unique positive root of W^3 + w_s^2 W - 2 w_s^2 bandwidth = 0
            fn = lambda W: W * (omega_s**2 + W**2) - 2 * omega_s**2 * bandwidth
            shape = optimize.brentq(fn, 0.0, 2 * bandwidth, xtol=1e-15 * bandwidth, rtol=1e-15)
        return cls(gamma, omega_s, "resonant", shape=shape,
                   bandwidth=resonant_bandwidth(shape, omega_s))

    def with_gamma(self, gamma):
        return replace(self, gamma=gamma)

    # -- frequency response ------------------------------------------
    def response(self, omega):
        """sqrt(2 pi) H[w] = g(w) - i w f(w)."""
        w = np.asarray(omega, dtype=float)
        if self.family == "ideal":
            return -1j * w
        if self.family == "lorentzian":
            W = self.shape
            return -1j * w * (W**2 + self.omega_s**2) / (W**2 + w**2)
        if self.family == "resonant":
            wf = self.omega_s if self.center is None else self.center
            W = self.shape
            return -self.gain * wf**2 * W / (wf**2 - w**2 - 1j * W * w)
        if self.family == "discrete":
            return discrete_response(self.weights, self.dt, w)
        raise ValueError(f"unknown filter family {self.family!r}")

    def f(self, omega):
        w = np.asarray(omega, dtype=float)
        r = self.response(w)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = -r.imag / w
        # w -> 0 limit by a small finite step
        if np.any(w == 0):
            eps = 1e-9 * self.omega_s
            out = np.where(w == 0, -self.response(eps).imag / eps, out)
        return out

    def g(self, omega):
        return np.real(self.response(omega))

    def kernel(self, t):
        """Causal time-domain kernel h(t) with sqrt(2 pi) H[w] = int h(t) e^{i w t} dt.

        Only defined for the resonant family; the other analytic families
        are not causal.
        """
        if self.family != "resonant":
            raise ValueError(f"{self.family} filters have no causal kernel")
        t = np.asarray(t, dtype=float)
        wf = self.omega_s if self.center is None else self.center
        W = self.shape
        amp = -self.gain * wf**2 * W
        disc = wf**2 - W**2 / 4
        tp = np.where(t > 0, t, 0.0)
        env = np.exp(-W * tp / 2)
        if disc > 0:
            b = math.sqrt(disc)
            core = np.sin(b * tp) / b
        elif disc < 0:
            b = math.sqrt(-disc)
            core = np.sinh(b * tp) / b
        else:
            core = tp
        return np.where(t > 0, amp * env * core, 0.0)

    def envelope_rate(self):
        """Slowest decay rate of the resonant kernel."""
        wf = self.omega_s if self.center is None else self.center
        W = self.shape
        disc = W**2 / 4 - wf**2
        return W / 2 - math.sqrt(disc) if disc > 0 else W / 2

    def guard_messages(self, derived):
        """Warnings about filter validity relative to the mode structure."""
        msgs = []
        if not self.bandwidth > 10 * self.gamma:
            msgs.append(f"bandwidth {self.bandwidth:.4g} not much larger than gamma {self.gamma:.4g}")
        split = abs(derived.omega_plus - derived.omega_minus)
        if self.bandwidth >= split:
            msgs.append(f"bandwidth {self.bandwidth:.4g} >= mode splitting {split:.4g}")
        if self.gamma >= split:
            msgs.append(f"gamma {self.gamma:.4g} >= mode splitting {split:.4g}")
        return msgs


def discrete_response(weights, dt, omega):
    """Response of the sampled kernel with zero-order-hold actuation.

    The force at step n is -m gamma sum_{j>=1} c_j dy_{n-j}, with dy the
    record integrated over one step.  Integration and hold each contribute
    a sinc factor whose half-step phases cancel.
    """
    w = np.asarray(omega, dtype=float)
    j = np.arange(1, len(weights) + 1)
    phase = np.exp(1j * np.multiply.outer(w * dt, j))
    s = np.sinc(w * dt / (2 * math.pi))
    return dt * s**2 * (phase @ weights)
