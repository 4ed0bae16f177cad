"""Asymptotic standard errors, Wald statistics and p-values."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import likelihood as lik
from .errors import SingularSystemError
from .family import FamilySpec, Member
from .likelihood import Coefficients, Dataset
from .links import LinkPair


@dataclass
class WaldRow:
    name: str
    estimate: float
    std_error: float
    z: float
    p_value: float


def p_value_from_z(z: float) -> float:
    """One-sided tail convention: 1 - Phi(|z|), so p(0) = 0.5."""
    return 0.5 * math.erfc(abs(z) / math.sqrt(2.0))


def fisher_information(data: Dataset, theta_hat: Coefficients, p_hat: float,
                       spec: FamilySpec, links: LinkPair) -> np.ndarray:
    """Observed information: the unpenalized Hessian of the negative
    log-likelihood at the fit, with the mean-dispersion cross block set
    to zero (mean and dispersion parameters are orthogonal in this
    family).

    The returned matrix is ordered (beta, alpha, gamma). It is additive
    over rows, so duplicating the dataset doubles it.
    """
    spec_hat = spec.with_p(p_hat) if spec.p != p_hat else spec
    mean_block = lik.hess_mean(data, theta_hat, spec_hat, links).to_dense()
    kg = data.k_gamma
    if kg and spec.member is not Member.POISSON:
        disp_block = lik.hess_disp(data, theta_hat, spec_hat, links)
    else:
        disp_block = np.zeros((kg, kg))
    dim = mean_block.shape[0] + kg
    info = np.zeros((dim, dim))
    info[:mean_block.shape[0], :mean_block.shape[0]] = mean_block
    info[mean_block.shape[0]:, mean_block.shape[0]:] = disp_block
    return info


def _block_std_errors(block: np.ndarray, what: str) -> np.ndarray:
    if block.size == 0:
        return np.zeros(0)
    eigvals, eigvecs = np.linalg.eigh(block)
    tol = max(block.shape[0], 1) * np.finfo(float).eps * max(
        abs(eigvals.max(initial=0.0)), 1.0)
    if eigvals.min() <= tol:
        raise SingularSystemError(
            f"{what} information block is singular",
            smallest_pivot=float(eigvals.min()),
            null_hint=eigvecs[:, 0])
    cov = np.linalg.inv(block)
    return np.sqrt(np.diag(cov))


def wald_table(theta_hat: Coefficients, info: np.ndarray,
               beta_names: list[str] | None = None,
               gamma_names: list[str] | None = None) -> list[WaldRow]:
    """Wald rows for the fixed effects (beta, gamma).

    Standard errors invert the beta and gamma diagonal sub-blocks of
    the information, conditioning on the penalized spatial effect
    (whose joint block is singular whenever an intercept is present).
    The spatial effect itself is summarized separately, not tested.
    """
    kb = theta_hat.beta.size
    nv = theta_hat.alpha.size
    kg = theta_hat.gamma.size
    if info.shape != (kb + nv + kg, kb + nv + kg):
        raise SingularSystemError("information matrix has wrong order")
    beta_names = beta_names or [f"beta_{j}" for j in range(kb)]
    gamma_names = gamma_names or [f"gamma_{j}" for j in range(kg)]
    se_beta = _block_std_errors(info[:kb, :kb], "mean fixed-effect")
    se_gamma = _block_std_errors(info[kb + nv:, kb + nv:], "dispersion")
    rows = []
    for name, est, se in zip(beta_names, theta_hat.beta, se_beta):
        z = est / se
        rows.append(WaldRow(name, float(est), float(se), float(z),
                            p_value_from_z(z)))
    for name, est, se in zip(gamma_names, theta_hat.gamma, se_gamma):
        z = est / se
        rows.append(WaldRow(name, float(est), float(se), float(z),
                            p_value_from_z(z)))
    return rows


def alpha_summary(alpha: np.ndarray) -> dict:
    """Distributional summary of the fitted spatial effect."""
    a = np.asarray(alpha, dtype=float)
    return {
        "mean": float(a.mean()),
        "median": float(np.median(a)),
        "sd": float(a.std(ddof=0)),
        "range": float(a.max() - a.min()) if a.size else 0.0,
    }


def write_wald_table(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("effect\tlevel\testimate\tstd_error\tz\tp_value\n")
        for r in rows:
            fh.write(f"{r.name}\t--\t{r.estimate:.17g}\t{r.std_error:.17g}\t"
                     f"{r.z:.17g}\t{r.p_value:.17g}\n")
