"""Shared instance generators and finite-difference helpers."""

import numpy as np
import pytest

from twdglm.family import Approx, FamilySpec, Member
from twdglm.graph import lattice_graph
from twdglm.likelihood import Coefficients, Dataset
from twdglm.links import LinkKind, LinkPair

# links whose inverse maps need a positive predictor
POSITIVE_PREDICTOR_LINKS = {LinkKind.SQRT, LinkKind.INVERSE,
                            LinkKind.INVERSE_SQUARED}


def spec_for(member: Member, p_cpg: float = 1.5,
             approx: Approx = Approx.SERIES) -> FamilySpec:
    if member is Member.COMPOUND_POISSON_GAMMA:
        return FamilySpec.compound_poisson_gamma(p_cpg, approx=approx)
    return {
        Member.NORMAL: FamilySpec.normal,
        Member.POISSON: FamilySpec.poisson,
        Member.GAMMA: FamilySpec.gamma,
        Member.INVERSE_GAUSSIAN: FamilySpec.inverse_gaussian,
    }[member]()


def sample_response(member: Member, rng: np.random.Generator, n: int,
                    p: float = 1.5) -> np.ndarray:
    """Any valid support draw; correctness of the law is not needed for
    derivative checks."""
    if member is Member.NORMAL:
        return rng.normal(1.0, 0.8, n)
    if member is Member.POISSON:
        return rng.poisson(2.0, n).astype(float)
    if member in (Member.GAMMA, Member.INVERSE_GAUSSIAN):
        return rng.gamma(2.0, 1.0, n) + 0.05
    zeros = rng.random(n) < 0.2
    return np.where(zeros, 0.0, rng.gamma(1.5, 1.2, n))


def make_instance(member: Member, mean_link, disp_link="log", n=50,
                  rows=1, cols=5, k_beta=3, k_gamma=2, seed=0,
                  p_cpg=1.5, approx=Approx.SERIES):
    """Random (data, theta, spec, links) valid for the member and links."""
    mean_kind = LinkKind.from_name(mean_link) if isinstance(mean_link, str) \
        else mean_link
    links = LinkPair.of(mean_kind, disp_link)
    spec = spec_for(member, p_cpg, approx)
    rng = np.random.default_rng(seed)
    g = lattice_graph(rows, cols)
    n_v = g.n_vertices
    vertex = rng.integers(0, n_v, n)
    positive = mean_kind in POSITIVE_PREDICTOR_LINKS or (
        mean_kind is LinkKind.IDENTITY
        and member in (Member.POISSON, Member.GAMMA))
    if positive:
        X = np.column_stack([np.ones(n)]
                            + [rng.uniform(0.4, 1.2, n)
                               for _ in range(k_beta - 1)])
        beta = np.concatenate([[1.0], rng.uniform(0.05, 0.25, k_beta - 1)])
        alpha = rng.uniform(0.0, 0.15, n_v)
    else:
        X = np.column_stack([np.ones(n)]
                            + [rng.normal(0.0, 0.4, n)
                               for _ in range(k_beta - 1)])
        beta = np.concatenate([[0.3], rng.normal(0.0, 0.2, k_beta - 1)])
        alpha = rng.normal(0.0, 0.15, n_v)
    if member is Member.POISSON:
        k_gamma = 0
    if k_gamma:
        Z = np.column_stack([np.ones(n)]
                            + [rng.normal(0.0, 0.3, n)
                               for _ in range(k_gamma - 1)])
        if disp_link == "identity":
            gamma = np.concatenate([[1.2], rng.uniform(-0.1, 0.1,
                                                       k_gamma - 1)])
        else:
            gamma = np.concatenate([[0.2], rng.normal(0.0, 0.1,
                                                      k_gamma - 1)])
    else:
        Z = np.zeros((n, 0))
        gamma = np.zeros(0)
    y = sample_response(member, rng, n, p_cpg)
    data = Dataset(y, np.ones(n), vertex, X, Z, g)
    theta = Coefficients(beta, alpha, gamma)
    return data, theta, spec, links


def fd_gradient(f, x0, h=1e-6):
    x0 = np.asarray(x0, dtype=float)
    out = np.zeros_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xp[i] += h
        xm = x0.copy()
        xm[i] -= h
        out[i] = (f(xp) - f(xm)) / (2.0 * h)
    return out


def fd_jacobian(f, x0, h=1e-6):
    x0 = np.asarray(x0, dtype=float)
    cols = []
    for i in range(x0.size):
        xp = x0.copy()
        xp[i] += h
        xm = x0.copy()
        xm[i] -= h
        cols.append((f(xp) - f(xm)) / (2.0 * h))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / (floor + np.abs(b))))


MEAN_LINKS_BY_MEMBER = {
    Member.NORMAL: ["identity"],
    Member.POISSON: ["log", "sqrt", "identity"],
    Member.COMPOUND_POISSON_GAMMA: ["log"],
    Member.GAMMA: ["inverse", "identity", "log"],
    Member.INVERSE_GAUSSIAN: ["inverse-squared"],
}
