"""Flory-Huggins potential, its C^4 regularization, and viscosity models.

The entropy part ``F(s) = theta/2 [(1+s)ln(1+s) + (1-s)ln(1-s)]`` is the
convex piece of ``Psi(s) = F(s) - theta0/2 s^2``.  With ``eps > 0`` the
convex part is continued outside ``[-1+eps, 1-eps]`` by its fourth-order
Taylor polynomial at the seam, which makes ``F_eps`` a C^4 function on the
whole real line.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np


class DomainError(ValueError):
    """Singular potential evaluated at or beyond the pure phases +-1."""


class ConstructionError(ValueError):
    """Model parameters violate the declared structural bounds."""


@dataclass(frozen=True)
class PotentialParams:
    theta: float = 1.0
    theta0: float = 2.0
    eps: float = 0.0
    kappa: float = 0.5

    def __post_init__(self):
        if not self.theta > 0:
            raise ConstructionError("theta must be positive")
        if not self.theta0 > self.theta:
            raise ConstructionError(
                "theta0 must exceed theta (alpha = theta0 - theta > 0)"
            )
        if not 0 < self.kappa < 1:
            raise ConstructionError("kappa must lie in (0, 1)")
        if self.eps < 0 or (self.eps > 0 and self.eps >= self.kappa):
            raise ConstructionError("eps must satisfy 0 <= eps < kappa")

    @property
    def alpha(self) -> float:
        return self.theta0 - self.theta

    @property
    def singular(self) -> bool:
        return self.eps == 0.0


def _F_closed(theta, s, order):
    """Closed-form derivatives of the entropy on (-1, 1)."""
    if order == 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            return 0.5 * theta * ((1 + s) * np.log1p(s) + (1 - s) * np.log1p(-s))
    if order == 1:
        return theta * np.arctanh(s)
    q = 1.0 - s * s
    if order == 2:
        return theta / q
    if order == 3:
        return 2.0 * theta * s / q**2
    if order == 4:
        return 2.0 * theta * (1.0 + 3.0 * s * s) / q**3
    raise ValueError(f"derivative order {order} not supported")


def entropy_F(p: PotentialParams, s, order: int = 0):
    """Derivative ``order`` (0..4) of the convex entropy part.

    Uses the singular closed form when ``p.eps == 0`` (raising
    :class:`DomainError` for ``|s| >= 1``) and the regularized ``F_eps``
    otherwise.
    """
    if order not in (0, 1, 2, 3, 4):
        raise ValueError(f"derivative order {order} not supported")
    scalar = np.ndim(s) == 0
    s = np.asarray(s, dtype=float)
    if p.eps == 0.0:
        if np.any(np.abs(s) >= 1.0) or not np.all(np.isfinite(s)):
            raise DomainError("singular potential evaluated outside (-1, 1)")
        out = _F_closed(p.theta, s, order)
        return float(out) if scalar else out

    a = 1.0 - p.eps
    mid = np.clip(s, -a, a)
    out = np.asarray(_F_closed(p.theta, mid, order), dtype=float).copy()
    for sign in (1.0, -1.0):
        mask = sign * s > a
        if not np.any(mask):
            continue
        seam = sign * a
        d = s[mask] - seam
        acc = np.zeros_like(d)
        for j in range(order, 5):
            acc += _F_closed(p.theta, seam, j) * d ** (j - order) / factorial(j - order)
        out[mask] = acc
    return float(out) if scalar else out


def psi(p: PotentialParams, s, order: int = 0):
    """Derivative ``order`` of ``Psi = F - theta0/2 s^2`` (regularized if eps > 0)."""
    f = entropy_F(p, s, order)
    if np.ndim(s):
        s = np.asarray(s, dtype=float)
    if order == 0:
        return f - 0.5 * p.theta0 * s * s
    if order == 1:
        return f - p.theta0 * s
    if order == 2:
        return f - p.theta0
    return f


def kappa_bar(p: PotentialParams) -> float:
    """Largest regularization width for which the comparison bounds hold.

    For ``eps`` below this value the seam ``1 - eps`` lies beyond the positive
    well of ``Psi`` (where ``Psi' > 0``) and ``F''`` already exceeds
    ``theta0`` there, which gives ``Psi_eps <= Psi`` and
    ``|Psi_eps'| <= |Psi'|`` on ``(-1, 1)``.
    """
    from scipy.optimize import brentq

    well = brentq(lambda s: p.theta * np.arctanh(s) - p.theta0 * s, 1e-6, 1 - 1e-15)
    steep = np.sqrt(1.0 - p.theta / p.theta0)
    return float(min(p.kappa, 1.0 - well, 1.0 - steep))


@dataclass(frozen=True)
class PsiBounds:
    gamma1: float
    gamma2: float
    L: float
    min_curvature: float


def regularized_psi_bounds(p: PotentialParams, lo=-10.0, hi=10.0, n=100_001) -> PsiBounds:
    """Sampled constants for ``gamma1 s^4 - gamma2 <= Psi_eps`` and ``Psi_eps'' <= L``.

    The quartic coefficient is half the leading coefficient of the Taylor
    continuation; ``gamma2`` and ``L`` are the sampled extremes.  Raises if the
    lower curvature bound ``-alpha`` fails at any sample.
    """
    if p.eps <= 0:
        raise ValueError("bounds are only defined for the regularized potential (eps > 0)")
    s = np.linspace(lo, hi, n)
    val = psi(p, s, 0)
    curv = psi(p, s, 2)
    gamma1 = entropy_F(p, 1.0 - p.eps, 4) / 48.0
    gamma2 = float(np.max(gamma1 * s**4 - val))
    gamma2 = max(gamma2, 0.0) * (1 + 1e-12) + 1e-12
    min_curv = float(curv.min())
    if min_curv < -p.alpha - 1e-9 * (1 + p.alpha):
        raise ConstructionError(f"Psi_eps'' dips to {min_curv} below -alpha = {-p.alpha}")
    return PsiBounds(gamma1=gamma1, gamma2=gamma2, L=float(curv.max()), min_curvature=min_curv)


class ViscosityModel:
    """Smooth viscosity ``nu(s)`` with declared bounds ``nu_lo <= ... <= nu_hi``.

    Subclasses implement :meth:`_eval`.  At construction ``nu`` is checked to
    lie in ``[nu_lo, nu_hi]`` and ``|nu'|, |nu''|, |nu'''| <= nu_hi`` on a dense
    sample of ``[-1, 1]``; when ``monotone`` is set, ``nu' >= nu_lo`` is also
    enforced there.
    """

    monotone = True

    def __init__(self, nu_lo: float, nu_hi: float, samples: int = 20_001):
        if not 0 < nu_lo <= nu_hi:
            raise ConstructionError("need 0 < nu_lo <= nu_hi")
        self.nu_lo = float(nu_lo)
        self.nu_hi = float(nu_hi)
        s = np.linspace(-1.0, 1.0, samples)
        slack = 1e-12 * nu_hi
        v0 = self(s, 0)
        if v0.min() < nu_lo - slack or v0.max() > nu_hi + slack:
            raise ConstructionError(
                f"nu ranges over [{v0.min():.4g}, {v0.max():.4g}], outside [{nu_lo}, {nu_hi}]"
            )
        for k in (1, 2, 3):
            vk = self(s, k)
            if np.abs(vk).max() > nu_hi + slack:
                raise ConstructionError(f"|nu^({k})| exceeds nu_hi = {nu_hi} on [-1, 1]")
        if self.monotone and self(s, 1).min() < nu_lo - slack:
            raise ConstructionError(f"nu' drops below nu_lo = {nu_lo} on [-1, 1]")

    def __call__(self, s, order: int = 0):
        if order not in (0, 1, 2, 3):
            raise ValueError(f"derivative order {order} not supported")
        return self._eval(np.asarray(s, dtype=float), order)

    def _eval(self, s, order):  # pragma: no cover - abstract
        raise NotImplementedError


class ConstantViscosity(ViscosityModel):
    monotone = False

    def __init__(self, value: float = 1.0):
        self.value = float(value)
        super().__init__(self.value, self.value)

    def _eval(self, s, order):
        return np.full_like(s, self.value if order == 0 else 0.0)

    def __repr__(self):
        return f"ConstantViscosity({self.value})"


class TanhViscosity(ViscosityModel):
    """``nu(s) = a + b (1 + tanh(c s)) / 2``."""

    def __init__(self, a=-0.4, b=3.0, c=0.4, nu_lo=0.5, nu_hi=2.0):
        self.a, self.b, self.c = float(a), float(b), float(c)
        super().__init__(nu_lo, nu_hi)

    def _eval(self, s, order):
        a, b, c = self.a, self.b, self.c
        t = np.tanh(c * s)
        sech2 = 1.0 - t * t
        if order == 0:
            return a + 0.5 * b * (1.0 + t)
        if order == 1:
            return 0.5 * b * c * sech2
        if order == 2:
            return -b * c * c * t * sech2
        return -b * c**3 * sech2 * (1.0 - 3.0 * t * t)

    def __repr__(self):
        return (
            f"TanhViscosity(a={self.a}, b={self.b}, c={self.c}, "
            f"nu_lo={self.nu_lo}, nu_hi={self.nu_hi})"
        )


def viscosity(m: ViscosityModel, s, order: int = 0):
    return m(s, order)
