"""Derivatives at ``t = 0`` from samples at Gauss-Chebyshev nodes.

Samples at the ``r + 1`` roots of ``T_{r+1}``, mapped to ``[0, tau_max]``,
define the degree-``r`` interpolant ``p(t) = sum_k c_k T_k(2t/tau_max - 1)``.
Its first and second derivatives at the left endpoint are fixed linear
combinations of the samples, using ``T_k'(-1) = (-1)^(k+1) k^2`` and
``T_k''(-1) = (-1)^k k^2 (k^2 - 1) / 3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapExceeded, DegreeTooSmall, InvalidConfig

MIN_DEGREE = 2
MAX_DEGREE = 64


def chebyshev_roots(r: int) -> np.ndarray:
    """Roots ``z_m = cos((2m+1) pi / (2(r+1)))`` of ``T_{r+1}``, descending."""
    m = np.arange(r + 1)
    return np.cos((2 * m + 1) * np.pi / (2 * (r + 1)))


def _t_table(r: int, z: np.ndarray) -> np.ndarray:
    """``T_k(z_m)`` for ``k = 0..r`` as a ``(r+1, len(z))`` array."""
    k = np.arange(r + 1)[:, None]
    return np.cos(k * np.arccos(np.clip(z, -1.0, 1.0))[None, :])


def first_derivative_weights(tau_max: float, r: int) -> np.ndarray:
    z = chebyshev_roots(r)
    k = np.arange(r + 1)
    coef = np.where(k >= 1, (-1.0) ** (k + 1) * k**2, 0.0)
    return 4.0 / (tau_max * (r + 1)) * (coef @ _t_table(r, z))


def second_derivative_weights(tau_max: float, r: int) -> np.ndarray:
    z = chebyshev_roots(r)
    k = np.arange(r + 1)
    coef = np.where(k >= 2, (-1.0) ** k * k**2 * (k**2 - 1.0), 0.0)
    return 8.0 / (3.0 * tau_max**2 * (r + 1)) * (coef @ _t_table(r, z))


@dataclass(frozen=True)
class ChebyshevSchedule:
    tau_max: float
    r: int
    eps_s: float
    nodes: np.ndarray
    weights1: np.ndarray
    weights2: np.ndarray

    @property
    def min_spacing(self) -> float:
        return float(np.min(-np.diff(self.nodes)))

    def noise_bound1(self, eps_s: float | None = None) -> float:
        eps_s = self.eps_s if eps_s is None else eps_s
        return 5.0 * self.r**3 * eps_s / (2.0 * self.tau_max)

    def noise_bound2(self, eps_s: float | None = None) -> float:
        eps_s = self.eps_s if eps_s is None else eps_s
        return self.r**5 * eps_s / self.tau_max**2

    def bias_bound1(self, sup_next_derivative: float) -> float:
        r = self.r
        return 2.0 * (r + 1) ** 2 * self.tau_max**r * sup_next_derivative / math.factorial(r)

    def bias_bound2(self, sup_next_derivative: float) -> float:
        r = self.r
        s = (r + 1) ** 2
        return (2.0 / 3.0) * s * (s - 1) * self.tau_max ** (r - 1) * sup_next_derivative / math.factorial(r - 1)

    def interpolation_bound(self, sup_next_derivative: float) -> float:
        r = self.r
        return 2.0 * sup_next_derivative / math.factorial(r + 1) * (self.tau_max / 4.0) ** (r + 1)

    def coefficients(self, samples: np.ndarray) -> np.ndarray:
        samples = self._check(samples)
        table = _t_table(self.r, chebyshev_roots(self.r))
        c = 2.0 / (self.r + 1) * (table @ samples)
        c[0] = np.mean(samples)
        return c

    def interpolate(self, samples: np.ndarray, t: np.ndarray | float) -> np.ndarray:
        c = self.coefficients(samples)
        z = 2.0 * np.asarray(t, dtype=float) / self.tau_max - 1.0
        return np.polynomial.chebyshev.chebval(z, c)

    def _check(self, samples) -> np.ndarray:
        samples = np.asarray(samples, dtype=float)
        if samples.shape[0] != self.r + 1:
            raise InvalidConfig(f"expected {self.r + 1} samples, got {samples.shape[0]}")
        return samples


def make_schedule(tau_max: float, r: int, eps_s: float = 0.0) -> ChebyshevSchedule:
    if r < MIN_DEGREE:
        raise DegreeTooSmall(f"degree {r} < {MIN_DEGREE}")
    if r > MAX_DEGREE:
        raise CapExceeded(f"degree {r} exceeds the cap {MAX_DEGREE}")
    if tau_max <= 0:
        raise InvalidConfig("tau_max must be positive")
    z = chebyshev_roots(r)
    return ChebyshevSchedule(
        tau_max=float(tau_max),
        r=int(r),
        eps_s=float(eps_s),
        nodes=(z + 1.0) / 2.0 * tau_max,
        weights1=first_derivative_weights(tau_max, r),
        weights2=second_derivative_weights(tau_max, r),
    )


def estimate_deriv1(schedule: ChebyshevSchedule, samples) -> float | np.ndarray:
    """First derivative at 0; ``samples`` may carry trailing batch axes."""
    return schedule.weights1 @ schedule._check(samples)


def estimate_deriv2(schedule: ChebyshevSchedule, samples) -> float | np.ndarray:
    return schedule.weights2 @ schedule._check(samples)


def _clamp_degree(r: int) -> int:
    r = max(MIN_DEGREE, int(r))
    if r > MAX_DEGREE:
        raise CapExceeded(f"schedule needs degree {r} > {MAX_DEGREE}")
    return r


def _positive(**kw: float) -> None:
    for k, v in kw.items():
        if not v > 0:
            raise InvalidConfig(f"{k} must be positive, got {v}")


def params_first(B: float, Lambda: float, eps: float) -> tuple[float, int, float]:
    """Schedule for ``f'(0)`` to accuracy ``eps`` when ``|f^(k)| <= B Lambda^k``."""
    _positive(B=B, Lambda=Lambda, eps=eps)
    r = _clamp_degree(math.ceil(math.log2(18.0 * B * Lambda / eps)))
    return 1.0 / (2.0 * Lambda), r, eps / (10.0 * Lambda * r**3)


def params_second(B: float, Lambda: float, eps: float) -> tuple[float, int, float]:
    """Schedule for ``f''(0)`` to accuracy ``eps`` when ``|f^(k)| <= B Lambda^k``."""
    _positive(B=B, Lambda=Lambda, eps=eps)
    r = _clamp_degree(math.ceil(math.log2(320.0 * B * Lambda**2 / eps)))
    return 1.0 / (2.0 * Lambda), r, eps / (8.0 * Lambda**2 * r**5)


def params_first_factorial(B: float, Lambda: float, eps: float) -> tuple[float, int, float]:
    """Schedule for ``f'(0)`` when ``|f^(k)| <= B Lambda^k k!``."""
    _positive(B=B, Lambda=Lambda, eps=eps)
    r = _clamp_degree(max(16, math.ceil(4.0 * math.log2(8.0 * Lambda * B / eps))))
    return 1.0 / (2.0 * Lambda), r, eps / (10.0 * Lambda * r**3)


def schedule_from(params: tuple[float, int, float]) -> ChebyshevSchedule:
    tau, r, eps_s = params
    return make_schedule(tau, r, eps_s)
