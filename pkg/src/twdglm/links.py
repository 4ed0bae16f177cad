"""Link functions for the mean and dispersion models.

A link g maps the parameter to the linear-predictor scale; fitting works
with the inverse map h = g^{-1} and its first two derivatives, plus the
composition of h with the canonical-parameter map needed by the
likelihood derivatives.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import family
from .errors import ConfigError, DomainError
from .family import FamilySpec, Member


class LinkKind(enum.Enum):
    LOG = "log"
    IDENTITY = "identity"
    SQRT = "sqrt"
    INVERSE = "inverse"
    INVERSE_SQUARED = "inverse-squared"

    @classmethod
    def from_name(cls, name: str) -> "LinkKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ConfigError(f"unknown link {name!r}; expected one of "
                          f"{[k.value for k in cls]}")


class LinkRole(enum.Enum):
    MEAN = "mean"
    DISPERSION = "dispersion"


@dataclass(frozen=True)
class LinkSpec:
    kind: LinkKind
    role: LinkRole = LinkRole.MEAN

    def __post_init__(self):
        if self.role is LinkRole.DISPERSION and self.kind not in (
                LinkKind.LOG, LinkKind.IDENTITY):
            raise ConfigError(
                "dispersion link must be log or identity, got "
                f"{self.kind.value}")


@dataclass(frozen=True)
class LinkPair:
    """Mean and dispersion links used by one model."""

    mean: LinkSpec
    disp: LinkSpec

    @classmethod
    def of(cls, mean: LinkKind | str, disp: LinkKind | str = LinkKind.LOG
           ) -> "LinkPair":
        if isinstance(mean, str):
            mean = LinkKind.from_name(mean)
        if isinstance(disp, str):
            disp = LinkKind.from_name(disp)
        return cls(LinkSpec(mean, LinkRole.MEAN),
                   LinkSpec(disp, LinkRole.DISPERSION))


# Mean links for which closed-form likelihood derivatives exist.
PERMITTED_MEAN_LINKS = {
    Member.NORMAL: (LinkKind.IDENTITY,),
    Member.POISSON: (LinkKind.LOG, LinkKind.SQRT, LinkKind.IDENTITY),
    Member.COMPOUND_POISSON_GAMMA: (LinkKind.LOG,),
    Member.GAMMA: (LinkKind.INVERSE, LinkKind.IDENTITY, LinkKind.LOG),
    Member.INVERSE_GAUSSIAN: (LinkKind.INVERSE_SQUARED,),
}


def default_links(spec: FamilySpec) -> LinkPair:
    """Conventional link pair per member (log dispersion throughout)."""
    mean = {
        Member.NORMAL: LinkKind.IDENTITY,
        Member.POISSON: LinkKind.LOG,
        Member.COMPOUND_POISSON_GAMMA: LinkKind.LOG,
        Member.GAMMA: LinkKind.LOG,
        Member.INVERSE_GAUSSIAN: LinkKind.INVERSE_SQUARED,
    }[spec.member]
    return LinkPair.of(mean, LinkKind.LOG)


def validate_links(spec: FamilySpec, links: LinkPair) -> None:
    """Reject (member, link) combinations outside the supported table."""
    if links.mean.kind not in PERMITTED_MEAN_LINKS[spec.member]:
        allowed = [k.value for k in PERMITTED_MEAN_LINKS[spec.member]]
        raise ConfigError(
            f"mean link {links.mean.kind.value!r} not permitted for "
            f"{spec.member.value}; allowed: {allowed}")
    if links.disp.kind not in (LinkKind.LOG, LinkKind.IDENTITY):
        raise ConfigError("dispersion link must be log or identity")


def _check_domain(kind: LinkKind, t: np.ndarray) -> None:
    if kind is LinkKind.INVERSE and np.any(t == 0):
        raise DomainError("inverse link is singular at t = 0")
    if kind in (LinkKind.SQRT, LinkKind.INVERSE_SQUARED) and np.any(t <= 0):
        raise DomainError(f"{kind.value} link inverse requires t > 0")


def link_eval(link: LinkSpec | LinkKind, t, order: int = 0):
    """Inverse map h(t) of the link, or its first/second derivative."""
    kind = link.kind if isinstance(link, LinkSpec) else link
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    ta, scalar = np.asarray(t, dtype=float), np.ndim(t) == 0
    _check_domain(kind, ta)
    if kind is LinkKind.LOG:
        out = np.exp(ta)  # derivative of every order
    elif kind is LinkKind.IDENTITY:
        out = (ta, np.ones_like(ta), np.zeros_like(ta))[order]
    elif kind is LinkKind.SQRT:
        out = (ta ** 2, 2.0 * ta, np.full_like(ta, 2.0))[order]
    elif kind is LinkKind.INVERSE:
        out = (1.0 / ta, -ta ** -2.0, 2.0 * ta ** -3.0)[order]
    elif kind is LinkKind.INVERSE_SQUARED:
        out = (ta ** -0.5, -0.5 * ta ** -1.5, 0.75 * ta ** -2.5)[order]
    else:  # pragma: no cover
        raise ConfigError(f"unhandled link {kind}")
    return float(out) if scalar else out


def link_apply(link: LinkSpec | LinkKind, value):
    """Forward map g(value) onto the predictor scale."""
    kind = link.kind if isinstance(link, LinkSpec) else link
    v, scalar = np.asarray(value, dtype=float), np.ndim(value) == 0
    if kind is LinkKind.LOG:
        if np.any(v <= 0):
            raise DomainError("log link requires positive values")
        out = np.log(v)
    elif kind is LinkKind.IDENTITY:
        out = v
    elif kind is LinkKind.SQRT:
        if np.any(v < 0):
            raise DomainError("sqrt link requires nonnegative values")
        out = np.sqrt(v)
    elif kind is LinkKind.INVERSE:
        if np.any(v == 0):
            raise DomainError("inverse link undefined at 0")
        out = 1.0 / v
    else:
        if np.any(v <= 0):
            raise DomainError("inverse-squared link requires positive values")
        out = v ** -2.0
    return float(out) if scalar else out


def natural_from_predictor(spec: FamilySpec, mean_link: LinkSpec | LinkKind,
                           t, order: int = 0):
    """Canonical parameter as a function of the mean predictor.

    Returns theta(h(t)) for order 0 and its first two t-derivatives by
    the chain rule; these feed the generic likelihood derivative path.
    """
    kind = mean_link.kind if isinstance(mean_link, LinkSpec) else mean_link
    scalar = np.ndim(t) == 0
    mu = link_eval(kind, t, 0)
    family.check_mean_space(spec, mu, what="h(t)")
    if order == 0:
        out = family.theta_of_mu(spec, mu, 0)
    elif order == 1:
        out = family.theta_of_mu(spec, mu, 1) * link_eval(kind, t, 1)
    elif order == 2:
        h1 = link_eval(kind, t, 1)
        out = (family.theta_of_mu(spec, mu, 2) * np.asarray(h1) ** 2
               + family.theta_of_mu(spec, mu, 1) * link_eval(kind, t, 2))
    else:
        raise ValueError("order must be 0, 1 or 2")
    return float(out) if scalar else np.asarray(out)
