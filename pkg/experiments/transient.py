import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.linalg import matrix_balance
from scipy.signal import cont2discrete, dlsim, find_peaks

from models import (
    ImproperTransferFunction,
    TransferFunction,
    UnstableSystem,
    as_tf,
    scale_frequency,
)
from evaluations.task_config import MIN_RINGING_CROSSINGS, SETTLING_FRACTION

logger = logging.getLogger(__name__)

STABLE_REAL_PART = -1e-9


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim < 2:
            a = np.atleast_2d(a)
        n = a.shape[0]
        b = np.asarray(self.b, dtype=float).reshape(n, 1)
        c = np.asarray(self.c, dtype=float).reshape(1, n)
        if a.shape != (n, n):
            raise ValueError(f"state matrix must be square, got {a.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))

    @property
    def order(self) -> int:
        return self.a.shape[0]

    def response(self, freqs_hz) -> np.ndarray:
        """c (sI - A)^-1 b + d at s = j 2 pi f."""
        out = []
        eye = np.eye(self.order)
        for f in np.atleast_1d(freqs_hz):
            s = 2j * math.pi * f
            if self.order == 0:
                out.append(complex(self.d))
                continue
            x = np.linalg.solve(s * eye - self.a, self.b)
            out.append(complex((self.c @ x)[0, 0] + self.d))
        return np.asarray(out)


def tf_to_state_space(tf: TransferFunction) -> StateSpaceModel:
    """Controllable canonical realization of a proper transfer function."""
    tf = as_tf(tf)
    if not tf.is_proper():
        raise ImproperTransferFunction(
            f"numerator degree {tf.num.degree} exceeds denominator degree {tf.den.degree}"
        )
    n = tf.den.degree
    den = tf.den.coeffs  # monic
    num = np.zeros(n + 1)
    num[: tf.num.coeffs.size] = tf.num.coeffs
    d = num[n]
    remainder = num[:n] - d * den[:n]
    a = np.zeros((n, n))
    if n:
        a[np.arange(n - 1), np.arange(1, n)] = 1.0
        a[-1, :] = -den[:n]
    b = np.zeros((n, 1))
    if n:
        b[-1, 0] = 1.0
    return StateSpaceModel(a, b, remainder.reshape(1, n), d)


@dataclass(frozen=True)
class LoadStep:
    i_before_amps: float
    i_after_amps: float
    dt_s: float
    duration_s: float
    t_step_s: float = 0.0

    def __post_init__(self):
        if not self.dt_s > 0:
            raise ValueError(f"dt must be positive, got {self.dt_s}")
        if not self.t_step_s >= 0:
            raise ValueError(f"t_step must be >= 0, got {self.t_step_s}")
        if not self.duration_s > self.t_step_s:
            raise ValueError("duration must extend past the step")
        if self.dt_s > self.duration_s / 100:
            raise ValueError(f"dt = {self.dt_s} s resolves fewer than 100 samples over {self.duration_s} s")

    @property
    def delta_amps(self) -> float:
        return self.i_after_amps - self.i_before_amps


@dataclass
class TransientResult:
    """
    Load-step waveform. `v_deviation_volts` is the droop, the response of the closed-loop
    output impedance to the current step, so a heavier load reads positive.
    """

    times_s: np.ndarray
    v_deviation_volts: np.ndarray
    t_step_s: float
    delta_amps: float
    peak_droop_v: float = 0.0
    steady_state_droop_v: float = 0.0
    ringing_freq_hz: float = 0.0
    settling_time_s: float = 0.0
    overshoot_ratio: float = 0.0
    crossings_s: List[float] = field(default_factory=list)

    @property
    def step_index(self) -> int:
        return int(np.searchsorted(self.times_s, self.t_step_s - 1e-12 * max(self.t_step_s, 1.0)))


def _discretize(tf: TransferFunction, dt: float):
    """Exact ZOH model of `tf` at sample time dt, with its continuous poles."""
    den = tf.den.coeffs
    omega = abs(den[0]) ** (1.0 / tf.den.degree) if den[0] != 0 else 1.0
    ss = tf_to_state_space(scale_frequency(tf, omega))
    a, t = matrix_balance(ss.a, permute=False)
    t_inv = np.diag(1.0 / np.diag(t))
    b, c = t_inv @ ss.b, ss.c @ t
    system_poles = np.linalg.eigvals(a) * omega
    ad, bd, cd, dd, _ = cont2discrete((a, b, c, np.array([[ss.d]])), dt * omega, method="zoh")
    return (ad, bd, cd, dd, dt * omega), system_poles


def _crossings(times: np.ndarray, err: np.ndarray, hysteresis: float) -> List[float]:
    """Times where `err` passes zero, counting only swings that leave the +-hysteresis band."""
    cls = np.where(err > hysteresis, 1, np.where(err < -hysteresis, -1, 0))
    idx = np.flatnonzero(cls)
    if idx.size < 2:
        return []
    out = []
    for j in np.flatnonzero(cls[idx[1:]] != cls[idx[:-1]]):
        lo, hi = idx[j], idx[j + 1]
        seg = err[lo:hi + 1]
        k = int(np.flatnonzero(np.sign(seg[:-1]) != np.sign(seg[1:]))[0])
        e0, e1 = seg[k], seg[k + 1]
        frac = e0 / (e0 - e1) if e0 != e1 else 0.0
        out.append(float(times[lo + k] + frac * (times[lo + k + 1] - times[lo + k])))
    return out


def _fill_metrics(r: TransientResult) -> TransientResult:
    k0 = r.step_index
    post = r.v_deviation_volts[k0:]
    t_post = r.times_s[k0:]
    final = float(post[-1])
    peak = float(post[np.argmax(np.abs(post))])
    band = SETTLING_FRACTION * abs(peak)

    outside = np.flatnonzero(np.abs(post - final) > band)
    settling = 0.0 if outside.size == 0 else float(t_post[min(outside[-1] + 1, post.size - 1)] - r.t_step_s)

    err = post - final
    crossings = _crossings(t_post, err, SETTLING_FRACTION * float(np.max(np.abs(err)))) if np.any(err) else []
    if len(crossings) >= MIN_RINGING_CROSSINGS:
        ringing = (len(crossings) - 1) / (2.0 * (crossings[-1] - crossings[0]))
    else:
        ringing = 0.0

    r.peak_droop_v = peak
    r.steady_state_droop_v = final
    r.settling_time_s = settling
    r.overshoot_ratio = abs(peak) / abs(final) if final != 0 else 0.0
    r.crossings_s = crossings
    r.ringing_freq_hz = ringing
    return r


def simulate_step(z_cl: TransferFunction, step: LoadStep) -> TransientResult:
    """
    Droop waveform of the closed-loop output impedance under a load-current step.

    The realization is discretized exactly (zero-order hold through the matrix exponential
    of the augmented [A B; 0 0] block), so the samples carry no integration error. Systems
    with a pole at or right of -1e-9 rad/s are refused with `UnstableSystem`.
    """
    z_cl = as_tf(z_cl)
    if not z_cl.is_proper():
        raise ImproperTransferFunction("closed-loop impedance must be proper to simulate")
    n_samples = int(math.floor(step.duration_s / step.dt_s + 1e-9)) + 1
    times = np.arange(n_samples) * step.dt_s
    k0 = int(math.ceil(step.t_step_s / step.dt_s - 1e-9))
    u = np.zeros(n_samples)
    u[k0:] = step.delta_amps

    if z_cl.den.degree == 0:
        v = z_cl.num.coeffs[0] * u
    else:
        system, system_poles = _discretize(z_cl, step.dt_s)
        if np.any(system_poles.real >= STABLE_REAL_PART):
            unstable = sorted(system_poles[system_poles.real >= STABLE_REAL_PART].tolist(), key=lambda p: (p.real, p.imag))
            logger.error(f"refusing to simulate, closed loop has unstable poles {unstable}")
            raise UnstableSystem(f"closed loop has {len(unstable)} pole(s) with non-negative real part", poles=unstable)
        _, y, _ = dlsim(system, u)
        v = np.asarray(y).reshape(-1)

    result = TransientResult(times, v, t_step_s=float(times[min(k0, n_samples - 1)]), delta_amps=step.delta_amps)
    return _fill_metrics(result)


def ringing_metrics(r: TransientResult) -> Tuple[float, float]:
    """
    Dominant oscillation frequency and per-cycle amplitude ratio from the successive
    extrema of the waveform about its final value. (0, 1) when it does not ring.
    """
    if r.ringing_freq_hz == 0.0:
        return 0.0, 1.0
    k0 = r.step_index
    err = r.v_deviation_volts[k0:] - r.steady_state_droop_v
    t = r.times_s[k0:]
    floor = SETTLING_FRACTION * float(np.max(np.abs(err)))
    maxima, _ = find_peaks(err, height=floor)
    minima, _ = find_peaks(-err, height=floor)
    extrema = np.sort(np.concatenate([maxima, minima]))
    if extrema.size < 3:
        return r.ringing_freq_hz, 1.0
    half_period = float(np.mean(np.diff(t[extrema])))
    amplitudes = np.abs(err[extrema])
    per_half = (amplitudes[-1] / amplitudes[0]) ** (1.0 / (extrema.size - 1))
    return 1.0 / (2.0 * half_period), float(per_half ** 2)
