"""Closed-form math for the power-variance exponential-dispersion family.

Implements the five supported members (Normal, Poisson, compound
Poisson-gamma, Gamma, inverse Gaussian), their variance / cumulant /
deviance functions, and the two normalizer approximations for the
compound Poisson-gamma member: the windowed Bessel-series summation and
the modified saddlepoint form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .errors import ConfigError, DomainError, SeriesInfeasibleError

LOG_2PI = math.log(2.0 * math.pi)

# Hard limit on terms added on either side of the series mode.
SERIES_SIDE_CAP = 1_000_000


class Member(enum.Enum):
    """Supported family members, keyed by their power-variance index."""

    NORMAL = "normal"
    POISSON = "poisson"
    COMPOUND_POISSON_GAMMA = "compound-poisson-gamma"
    GAMMA = "gamma"
    INVERSE_GAUSSIAN = "inverse-gaussian"


class Approx(enum.Enum):
    """Normalizer approximation for the compound Poisson-gamma member."""

    SERIES = "series"
    SADDLEPOINT = "saddlepoint"


_FIXED_P = {
    Member.NORMAL: 0.0,
    Member.POISSON: 1.0,
    Member.GAMMA: 2.0,
    Member.INVERSE_GAUSSIAN: 3.0,
}


@dataclass(frozen=True)
class FamilySpec:
    """A family member together with its index parameter and normalizer controls.

    Parameters
    ----------
    member : Member
        Which member of the family.
    p : float
        Power-variance index. Must match the member: 0 (Normal), 1
        (Poisson), open (1, 2) (compound Poisson-gamma), 2 (Gamma),
        3 (inverse Gaussian).
    approx : Approx
        Normalizer approximation; only consulted for the compound
        Poisson-gamma member.
    eps0 : float
        Small positive constant replacing y in the saddlepoint variance
        factor at y = 0.
    series_rtol : float
        Relative term-truncation tolerance for the series window.
    series_kmax_cap : float
        Refuse the series when the term-mode index exceeds this cap.
    """

    member: Member
    p: float
    approx: Approx = Approx.SERIES
    eps0: float = 1e-6
    series_rtol: float = 1e-12
    series_kmax_cap: float = 1e7

    def __post_init__(self):
        if self.member in _FIXED_P:
            if self.p != _FIXED_P[self.member]:
                raise ConfigError(
                    f"{self.member.value} requires p = {_FIXED_P[self.member]}, "
                    f"got {self.p}")
        else:
            if not 1.0 < self.p < 2.0:
                raise ConfigError(
                    f"compound-poisson-gamma requires 1 < p < 2, got {self.p}")
        if not self.eps0 > 0:
            raise ConfigError("eps0 must be positive")
        if not 0.0 < self.series_rtol <= 1e-2:
            raise ConfigError("series_rtol must lie in (0, 1e-2]")

    @property
    def xi(self) -> float:
        """Gamma-summand shape (2 - p) / (p - 1) of the compound member."""
        if self.member is not Member.COMPOUND_POISSON_GAMMA:
            raise ConfigError("xi is defined only for compound-poisson-gamma")
        return (2.0 - self.p) / (self.p - 1.0)

    def with_p(self, p: float) -> "FamilySpec":
        return replace(self, p=p)

    @classmethod
    def normal(cls, **kw) -> "FamilySpec":
        return cls(Member.NORMAL, 0.0, **kw)

    @classmethod
    def poisson(cls, **kw) -> "FamilySpec":
        return cls(Member.POISSON, 1.0, **kw)

    @classmethod
    def compound_poisson_gamma(cls, p: float, **kw) -> "FamilySpec":
        return cls(Member.COMPOUND_POISSON_GAMMA, p, **kw)

    @classmethod
    def gamma(cls, **kw) -> "FamilySpec":
        return cls(Member.GAMMA, 2.0, **kw)

    @classmethod
    def inverse_gaussian(cls, **kw) -> "FamilySpec":
        return cls(Member.INVERSE_GAUSSIAN, 3.0, **kw)


def _as_array(x):
    a = np.asarray(x, dtype=float)
    return a, a.ndim == 0


def check_mean_space(spec: FamilySpec, mu, what: str = "mu") -> None:
    """Raise DomainError unless mu lies in the member's mean space."""
    m, _ = _as_array(mu)
    if not np.all(np.isfinite(m)):
        raise DomainError(f"{what} must be finite")
    if spec.member is not Member.NORMAL and np.any(m <= 0):
        raise DomainError(
            f"{what} must be positive for {spec.member.value}")


def check_support(spec: FamilySpec, y, what: str = "y") -> None:
    """Raise DomainError unless y lies in the member's support."""
    a, _ = _as_array(y)
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{what} must be finite")
    if spec.member is Member.POISSON:
        if np.any(a < 0) or np.any(np.abs(a - np.round(a)) > 1e-8):
            raise DomainError(f"{what} must be a nonnegative integer count")
    elif spec.member in (Member.GAMMA, Member.INVERSE_GAUSSIAN):
        if np.any(a <= 0):
            raise DomainError(f"{what} must be strictly positive "
                              f"for {spec.member.value}")
    elif spec.member is Member.COMPOUND_POISSON_GAMMA:
        if np.any(a < 0):
            raise DomainError(f"{what} must be nonnegative for "
                              "compound-poisson-gamma")


def variance_function(spec: FamilySpec, mu):
    """Power variance function V(mu) = mu**p (identically 1 for Normal)."""
    m, scalar = _as_array(mu)
    check_mean_space(spec, m)
    if spec.member is Member.NORMAL:
        out = np.ones_like(m)
    elif spec.member is Member.POISSON:
        out = m.copy()
    else:
        out = m ** spec.p
    return float(out) if scalar else out


def unit_deviance(spec: FamilySpec, y, mu):
    """Unit deviance d(y, mu) = -2 * int_y^mu (y-u)/V(u) du.

    Nonnegative, zero iff y == mu (for the compound member, iff
    y == mu > 0; its deviance at y = 0 is 2*mu**(2-p)/(2-p)).
    """
    ya, s1 = _as_array(y)
    ma, s2 = _as_array(mu)
    check_support(spec, ya)
    check_mean_space(spec, ma)
    ya, ma = np.broadcast_arrays(ya, ma)
    p = spec.p
    if spec.member is Member.NORMAL:
        out = (ya - ma) ** 2
    elif spec.member is Member.POISSON:
        out = 2.0 * (special.xlogy(ya, ya / ma) - (ya - ma))
    elif spec.member is Member.GAMMA:
        out = 2.0 * (np.log(ma / ya) + (ya - ma) / ma)
    elif spec.member is Member.INVERSE_GAUSSIAN:
        out = (ya - ma) ** 2 / (ma ** 2 * ya)
    else:
        out = 2.0 * (np.maximum(ya, 0.0) ** (2 - p) / ((1 - p) * (2 - p))
                     - ya * ma ** (1 - p) / (1 - p)
                     + ma ** (2 - p) / (2 - p))
    out = np.maximum(out, 0.0)  # clip float noise at y ~= mu
    return float(out) if (s1 and s2) else out


def theta_of_mu(spec: FamilySpec, mu, order: int = 0):
    """Canonical parameter theta(mu) and its first two mu-derivatives."""
    m, scalar = _as_array(mu)
    check_mean_space(spec, m)
    p = spec.p
    mem = spec.member
    if order == 0:
        if mem is Member.NORMAL:
            out = m.copy()
        elif mem is Member.POISSON:
            out = np.log(m)
        elif mem is Member.GAMMA:
            out = -1.0 / m
        elif mem is Member.INVERSE_GAUSSIAN:
            out = -0.5 / m ** 2
        else:
            out = m ** (1 - p) / (1 - p)
    elif order == 1:
        # theta'(mu) = 1 / V(mu) for every member
        if mem is Member.NORMAL:
            out = np.ones_like(m)
        else:
            out = m ** (-p)
    elif order == 2:
        if mem is Member.NORMAL:
            out = np.zeros_like(m)
        else:
            out = -p * m ** (-p - 1)
    else:
        raise ValueError("order must be 0, 1 or 2")
    return float(out) if scalar else out


def cumulant_of_mu(spec: FamilySpec, mu):
    """Cumulant kappa(theta(mu)) expressed directly in the mean."""
    m, scalar = _as_array(mu)
    check_mean_space(spec, m)
    mem = spec.member
    if mem is Member.NORMAL:
        out = m ** 2 / 2.0
    elif mem is Member.POISSON:
        out = m.copy()
    elif mem is Member.GAMMA:
        out = np.log(m)
    elif mem is Member.INVERSE_GAUSSIAN:
        out = -1.0 / m
    else:
        out = m ** (2 - spec.p) / (2 - spec.p)
    return float(out) if scalar else out


def saturated_cumulant_term(spec: FamilySpec, y):
    """The saturated exponent y*theta(y) - kappa(theta(y)).

    This is the y-dependent part of the log-normalizer that carries a
    1/phi factor; it vanishes at y = 0 for the compound member.
    """
    ya, scalar = _as_array(y)
    flat = np.atleast_1d(ya)
    mem = spec.member
    p = spec.p
    if mem is Member.NORMAL:
        out = flat ** 2 / 2.0
    elif mem is Member.INVERSE_GAUSSIAN:
        out = 0.5 / flat
    elif mem is Member.GAMMA:
        out = -1.0 - np.log(flat)
    elif mem is Member.COMPOUND_POISSON_GAMMA:
        out = np.zeros_like(flat)
        pos = flat > 0
        out[pos] = flat[pos] ** (2 - p) * (1.0 / (1 - p) - 1.0 / (2 - p))
    else:  # Poisson: handled through its discrete normalizer
        out = np.zeros_like(flat)
    return float(out[0]) if scalar else out.reshape(ya.shape)


# ---------------------------------------------------------------------------
# Compound Poisson-gamma series normalizer
# ---------------------------------------------------------------------------

def _series_logsums(y, phi, p, rtol, kmax_cap):
    """Windowed log-space summation of the Bessel-series normalizer.

    Returns ``(log_a, r1, r2)`` for strictly positive y, where
    ``log_a = log a(y, phi, p)`` and ``r1``, ``r2`` are the first two
    moments of m_k = k(1+xi) under the normalized term weights (needed
    by the dispersion derivatives; the series for a, a' and a'' share
    the same term mode).

    Terms T_k = t^k / (k! * Gamma(k*xi)) rise then fall in k; summation
    runs in log space anchored at the running maximum, extending until
    terms drop below ``rtol`` times that maximum on the right of the
    mode k_max = y**(2-p) / ((2-p)*phi).
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), y.shape).copy()
    if np.any(y <= 0):
        raise DomainError("series normalizer requires y > 0")
    if np.any(phi <= 0):
        raise DomainError("series normalizer requires phi > 0")
    xi = (2.0 - p) / (p - 1.0)
    log_t = (xi * np.log(y) - xi * math.log(p - 1.0) - math.log(2.0 - p)
             - (1.0 + xi) * np.log(phi))
    kmax = y ** (2.0 - p) / ((2.0 - p) * phi)
    if np.any(kmax > kmax_cap):
        raise SeriesInfeasibleError(
            f"series mode index {kmax.max():.3e} exceeds cap {kmax_cap:.3e}; "
            "use the saddlepoint approximation instead")

    n = y.size
    big_m = np.full(n, -np.inf)
    s0 = np.zeros(n)
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    log_rtol = math.log(rtol)
    need = np.maximum(kmax, 1.0)
    k_start = 1
    chunk = 512
    hard_stop = int(min(kmax.max() + SERIES_SIDE_CAP, 2 * kmax_cap))
    while True:
        k = np.arange(k_start, k_start + chunk, dtype=float)
        log_terms = (np.outer(log_t, k)
                     - special.gammaln(k + 1.0)[None, :]
                     - special.gammaln(xi * k)[None, :])
        chunk_max = log_terms.max(axis=1)
        new_m = np.maximum(big_m, chunk_max)
        rescale = np.exp(big_m - new_m)
        wts = np.exp(log_terms - new_m[:, None])
        s0 = s0 * rescale + wts.sum(axis=1)
        s1 = s1 * rescale + (wts * k).sum(axis=1)
        s2 = s2 * rescale + (wts * k * k).sum(axis=1)
        big_m = new_m
        k_end = k_start + chunk - 1
        tail = log_terms[:, -1] - big_m
        if (k_end >= need).all() and (tail < log_rtol).all():
            break
        if k_end >= hard_stop:
            break
        k_start += chunk
    log_a = -np.log(y) + big_m + np.log(s0)
    scale = 1.0 + xi
    r1 = scale * s1 / s0
    r2 = scale ** 2 * s2 / s0
    return log_a, r1, r2


def log_normalizer_series(y, phi, p: float, rtol: float = 1e-12,
                          kmax_cap: float = 1e7):
    """log a(y, phi, p) for y > 0 via the windowed series summation."""
    ya, scalar = _as_array(y)
    log_a, _, _ = _series_logsums(ya, phi, p, rtol, kmax_cap)
    return float(log_a[0]) if scalar else log_a.reshape(np.shape(y))


def series_mode(y, phi, p: float):
    """Index k at which the series terms peak: y**(2-p) / ((2-p)*phi)."""
    ya, scalar = _as_array(y)
    out = ya ** (2.0 - p) / ((2.0 - p) * np.asarray(phi, dtype=float))
    return float(out) if scalar else out


def log_normalizer_saddlepoint(y, phi, spec: FamilySpec):
    """Saddlepoint density prefactor -0.5 * log(2*pi*phi*V(y)).

    V uses y for y > 0 and the configured eps0 at y = 0.
    """
    ya, scalar = _as_array(y)
    ph = np.broadcast_to(np.asarray(phi, dtype=float), ya.shape)
    if np.any(ph <= 0):
        raise DomainError("phi must be positive")
    if np.any(ya < 0):
        raise DomainError("y must be nonnegative")
    v_arg = np.where(ya > 0, ya, spec.eps0)
    out = -0.5 * (LOG_2PI + np.log(ph) + spec.p * np.log(v_arg))
    return float(out) if scalar else out


def log_density(spec: FamilySpec, y, mu, phi=1.0):
    """Log probability density (or mass) of y under (mu, phi).

    phi is ignored for the Poisson member, whose dispersion is fixed
    at 1. The compound Poisson-gamma member dispatches on
    ``spec.approx``; its y = 0 atom under the series normalizer is
    exp(-mu**(2-p) / (phi*(2-p))).
    """
    ya, s1 = _as_array(y)
    ma, s2 = _as_array(mu)
    check_support(spec, ya)
    check_mean_space(spec, ma)
    ya, ma = np.broadcast_arrays(ya, ma)
    pha = np.broadcast_to(np.asarray(phi, dtype=float), ya.shape)
    if spec.member is not Member.POISSON and np.any(pha <= 0):
        raise DomainError("phi must be positive")
    mem = spec.member
    p = spec.p

    if mem is Member.POISSON:
        out = special.xlogy(ya, ma) - ma - special.gammaln(ya + 1.0)
    elif mem is Member.NORMAL:
        out = -0.5 * (LOG_2PI + np.log(pha)) - (ya - ma) ** 2 / (2.0 * pha)
    elif mem is Member.GAMMA:
        inv = 1.0 / pha
        log_a = (-inv * np.log(pha) + (inv - 1.0) * np.log(ya)
                 - special.gammaln(inv))
        out = log_a + (-ya / ma - np.log(ma)) / pha
    elif mem is Member.INVERSE_GAUSSIAN:
        out = (-0.5 * (LOG_2PI + 3.0 * np.log(ya) + np.log(pha))
               - (ya - ma) ** 2 / (2.0 * ma ** 2 * ya * pha))
    else:
        if spec.approx is Approx.SADDLEPOINT:
            log_b = log_normalizer_saddlepoint(ya, pha, spec)
            out = log_b - unit_deviance(spec, ya, ma) / (2.0 * pha)
        else:
            exponent = (ya * ma ** (1 - p) / (1 - p)
                        - ma ** (2 - p) / (2 - p)) / pha
            out = np.atleast_1d(np.asarray(exponent, dtype=float)).copy()
            yf = np.atleast_1d(ya)
            pf = np.atleast_1d(np.broadcast_to(pha, ya.shape))
            pos = yf > 0
            if np.any(pos):
                out[pos] += log_normalizer_series(
                    yf[pos], pf[pos], p, spec.series_rtol,
                    spec.series_kmax_cap)
            out = out.reshape(ya.shape)
    return float(out) if (s1 and s2) else out
