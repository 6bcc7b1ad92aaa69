import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np
from numpy.polynomial import polynomial as P

from .modeling_utils import (
    MAX_DEGREE,
    ConvergenceFailure,
    DegenerateLoop,
    DegreeCapExceeded,
    PoleOnAxis,
)

logger = logging.getLogger(__name__)

# Coefficients left by a cancelling add/sub below this fraction of the operands are zeroed.
CANCEL_RTOL = 1e-12
ROOT_RESIDUAL_TOL = 1e-8
POLE_EVAL_FLOOR = 1e-300


def _as_coeffs(coeffs) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(coeffs, dtype=float)).copy()
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("polynomial coefficients must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"polynomial coefficients must be finite, got {arr}")
    nonzero = np.flatnonzero(arr)
    if nonzero.size == 0:
        return np.zeros(1)
    return arr[: nonzero[-1] + 1]


@dataclass(frozen=True, eq=False)
class Polynomial:
    """
    Real polynomial in s with ascending coefficients, `coeffs[k]` multiplies s^k.

    Trailing zeros are stripped on construction, the zero polynomial is `[0.]`.
    Raises `DegreeCapExceeded` above degree 32.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = _as_coeffs(self.coeffs)
        if coeffs.size - 1 > MAX_DEGREE:
            raise DegreeCapExceeded(f"polynomial degree {coeffs.size - 1} exceeds the cap of {MAX_DEGREE}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def leading(self) -> float:
        return float(self.coeffs[-1])

    def is_zero(self) -> bool:
        return self.coeffs.size == 1 and self.coeffs[0] == 0.0

    def __call__(self, s):
        return P.polyval(s, self.coeffs)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def __repr__(self):
        return f"Polynomial({self.coeffs.tolist()})"

    def __neg__(self):
        return Polynomial(-self.coeffs)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(P.polymul(self.coeffs, other.coeffs))
        return Polynomial(self.coeffs * float(other))

    __rmul__ = __mul__

    def __add__(self, other):
        return _cancelling_sum(self, other, 1.0)

    def __sub__(self, other):
        return _cancelling_sum(self, other, -1.0)

    def derivative(self, order: int = 1) -> "Polynomial":
        if order >= self.coeffs.size:
            return Polynomial([0.0])
        return Polynomial(P.polyder(self.coeffs, order))

    def scale_variable(self, factor: float) -> "Polynomial":
        """Returns q(x) = p(factor * x)."""
        return Polynomial(self.coeffs * factor ** np.arange(self.coeffs.size))

    def magnitude_scale(self, s) -> np.ndarray:
        """Sum of |a_k| |s|^k, the natural size of p(s) for residual checks."""
        return P.polyval(np.abs(s), np.abs(self.coeffs))


def _cancelling_sum(a: Polynomial, b: Polynomial, sign: float) -> Polynomial:
    n = max(a.coeffs.size, b.coeffs.size)
    ac = np.zeros(n)
    bc = np.zeros(n)
    ac[: a.coeffs.size] = a.coeffs
    bc[: b.coeffs.size] = b.coeffs
    out = ac + sign * bc
    scale = np.maximum(np.abs(ac), np.abs(bc))
    out[np.abs(out) <= CANCEL_RTOL * scale] = 0.0
    return Polynomial(out)


def polynomial_from_roots(roots: Sequence[complex], gain: float = 1.0) -> Polynomial:
    coeffs = P.polyfromroots(np.asarray(roots, dtype=complex))
    return Polynomial(gain * np.real(coeffs))


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """
    Rational function num(s)/den(s) with real coefficients.

    Canonical form: den is monic and a common power of s shared by num and den
    is removed. No other common factors are cancelled.
    """

    num: Polynomial
    den: Polynomial = field(default_factory=lambda: Polynomial([1.0]))

    def __post_init__(self):
        num = self.num if isinstance(self.num, Polynomial) else Polynomial(self.num)
        den = self.den if isinstance(self.den, Polynomial) else Polynomial(self.den)
        if den.is_zero():
            raise ValueError("transfer function denominator is the zero polynomial")
        if num.is_zero():
            num, den = Polynomial([0.0]), Polynomial([1.0])
        else:
            shift = min(np.flatnonzero(num.coeffs)[0], np.flatnonzero(den.coeffs)[0])
            if shift:
                num, den = Polynomial(num.coeffs[shift:]), Polynomial(den.coeffs[shift:])
            lead = den.leading
            num, den = Polynomial(num.coeffs / lead), Polynomial(den.coeffs / lead)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def order(self) -> int:
        return self.den.degree

    def is_proper(self) -> bool:
        return self.num.degree <= self.den.degree

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def __repr__(self):
        return f"TransferFunction(num={self.num.coeffs.tolist()}, den={self.den.coeffs.tolist()})"


TFLike = Union[TransferFunction, float, int]


def constant(value: float) -> TransferFunction:
    return TransferFunction(Polynomial([float(value)]))


def as_tf(value: TFLike) -> TransferFunction:
    if isinstance(value, TransferFunction):
        return value
    return constant(value)


def tf(num, den=(1.0,)) -> TransferFunction:
    """Shorthand: `tf([2], [1, 1])` is 2/(1 + s)."""
    return TransferFunction(Polynomial(num), Polynomial(den))


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    freqs_hz: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.freqs_hz, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if freqs.ndim != 1 or freqs.size < 2 or freqs.shape != values.shape:
            raise ValueError("frequency response needs at least two frequencies matched by values")
        if np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
            raise ValueError("frequencies must be positive and strictly increasing")
        object.__setattr__(self, "freqs_hz", freqs)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.freqs_hz.size


def _evaluate_at(t: TransferFunction, s):
    den = t.den(s)
    on_axis = np.abs(den) < POLE_EVAL_FLOOR
    if np.any(on_axis):
        raise PoleOnAxis(f"transfer function has a pole at s = {np.atleast_1d(s)[np.atleast_1d(on_axis)][0]}")
    return t.num(s) / den


def evaluate(t: TFLike, f_hz: float) -> complex:
    """
    Evaluates `t` at s = j 2 pi f.

    Args:
        t (`TransferFunction`):
            Model to evaluate. Plain numbers are treated as constants.
        f_hz (`float`):
            Positive frequency in Hz.
    """
    if not f_hz > 0:
        raise ValueError(f"frequency must be positive, got {f_hz}")
    return complex(_evaluate_at(as_tf(t), 2j * np.pi * f_hz))


def evaluate_many(t: TFLike, freqs_hz) -> np.ndarray:
    freqs = np.asarray(freqs_hz, dtype=float)
    if np.any(freqs <= 0):
        raise ValueError("frequencies must be positive")
    return np.asarray(_evaluate_at(as_tf(t), 2j * np.pi * freqs), dtype=complex)


def evaluate_s(t: TFLike, s) -> complex:
    """Evaluates at an arbitrary complex s (rad/s), e.g. s = 0 for the DC value."""
    return complex(_evaluate_at(as_tf(t), complex(s)))


def dc_value(t: TFLike) -> float:
    return evaluate_s(t, 0.0).real


def frequency_response(t: TFLike, freqs_hz) -> FrequencyResponse:
    freqs = np.asarray(freqs_hz, dtype=float)
    return FrequencyResponse(freqs, evaluate_many(t, freqs))


def mul(a: TFLike, b: TFLike) -> TransferFunction:
    a, b = as_tf(a), as_tf(b)
    return TransferFunction(a.num * b.num, a.den * b.den)


def add(a: TFLike, b: TFLike) -> TransferFunction:
    a, b = as_tf(a), as_tf(b)
    if a.den == b.den:
        return TransferFunction(a.num + b.num, a.den)
    return TransferFunction(a.num * b.den + b.num * a.den, a.den * b.den)


def sub(a: TFLike, b: TFLike) -> TransferFunction:
    return add(a, scale(b, -1.0))


def scale(a: TFLike, k: float) -> TransferFunction:
    a = as_tf(a)
    return TransferFunction(a.num * float(k), a.den)


def reciprocal(a: TFLike) -> TransferFunction:
    a = as_tf(a)
    if a.is_zero():
        raise ZeroDivisionError("reciprocal of the zero transfer function")
    return TransferFunction(a.den, a.num)


def scale_frequency(a: TFLike, omega: float) -> TransferFunction:
    """Returns a(omega * x): the same model with s measured in units of omega rad/s."""
    a = as_tf(a)
    return TransferFunction(a.num.scale_variable(omega), a.den.scale_variable(omega))


def characteristic_polynomial(g: TFLike, h: TFLike) -> Polynomial:
    """den(g) den(h) + num(g) num(h), whose zeros are the closed-loop poles."""
    g, h = as_tf(g), as_tf(h)
    return g.den * h.den + g.num * h.num


def feedback_close(g: TFLike, h: TFLike) -> TransferFunction:
    """
    Closes the loop `g / (1 + g h)` without forming the quotient, so no spurious
    factors enter: num = num(g) den(h), den = den(g) den(h) + num(g) num(h).
    """
    g, h = as_tf(g), as_tf(h)
    char = characteristic_polynomial(g, h)
    if char.is_zero():
        raise DegenerateLoop("1 + g h is identically zero")
    return TransferFunction(g.num * h.den, char)


def _residual(p: Polynomial, r: complex) -> float:
    size = float(p.magnitude_scale(r))
    if size == 0.0:
        return 0.0
    return abs(p(r)) / size


def _newton(p: Polynomial, dp: Polynomial, r: complex, max_iter: int) -> complex:
    best, best_res = r, _residual(p, r)
    for _ in range(max_iter):
        slope = dp(best)
        if slope == 0:
            break
        cand = best - p(best) / slope
        res = _residual(p, cand)
        if res >= best_res:
            break
        best, best_res = cand, res
    return best


def _cluster(roots: np.ndarray, rtol: float) -> List[List[int]]:
    groups: List[List[int]] = []
    for i, r in enumerate(roots):
        for group in groups:
            center = np.mean(roots[group])
            if abs(r - center) <= rtol * max(1.0, abs(center)):
                group.append(i)
                break
        else:
            groups.append([i])
    return groups


def polynomial_roots(p: Polynomial, max_iter: int = 50, cluster_rtol: float = 1e-3) -> List[complex]:
    """
    Roots of `p` from the eigenvalues of its companion matrix.

    The variable is rescaled so the end coefficients match before the eigen solve.
    Each root is then Newton-polished, and clusters of nearly equal roots (multiple
    roots split by rounding) are merged and refined on the derivative of the right
    order. Raises `ConvergenceFailure` when a root misses the residual contract.
    """
    if p.degree < 1:
        raise ValueError("root finding needs degree >= 1")
    zeros_at_origin = int(np.flatnonzero(p.coeffs)[0])
    reduced = Polynomial(p.coeffs[zeros_at_origin:])
    found: List[complex] = [0j] * zeros_at_origin
    if reduced.degree >= 1:
        omega = abs(reduced.coeffs[0] / reduced.coeffs[-1]) ** (1.0 / reduced.degree)
        scaled = reduced.scale_variable(omega)
        raw = np.roots(scaled.coeffs[::-1] / scaled.leading) * omega

        dp = reduced.derivative()
        polished = np.array([_newton(reduced, dp, r, max_iter) for r in raw])
        for group in _cluster(polished, cluster_rtol):
            if len(group) == 1:
                found.append(complex(polished[group[0]]))
                continue
            m = len(group)
            center = complex(np.mean(polished[group]))
            d_m1 = reduced.derivative(m - 1)
            refined = _newton(d_m1, reduced.derivative(m), center, max_iter)
            members_res = max(_residual(reduced, polished[i]) for i in group)
            if _residual(reduced, refined) <= members_res:
                found.extend([complex(refined)] * m)
            else:
                found.extend(complex(polished[i]) for i in group)

    for r in found:
        res = _residual(p, r)
        if res >= ROOT_RESIDUAL_TOL:
            raise ConvergenceFailure(f"root {r} has normalized residual {res:.3e} after {max_iter} iterations")
    return sorted(found, key=lambda r: (r.real, r.imag))


def poles(t: TFLike, max_iter: int = 50) -> List[complex]:
    t = as_tf(t)
    if t.den.degree < 1:
        raise ValueError("a constant transfer function has no poles")
    return polynomial_roots(t.den, max_iter=max_iter)


def zeros(t: TFLike, max_iter: int = 50) -> List[complex]:
    t = as_tf(t)
    if t.num.degree < 1:
        return []
    return polynomial_roots(t.num, max_iter=max_iter)
