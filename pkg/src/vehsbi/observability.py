"""Numerical observability check via the Fisher information of the summaries.

The simulator's likelihood is approximated as Gaussian in summary space
with a parameter-independent covariance, so the information matrix at a
fiducial parameter reduces to J^T Sigma^-1 J, with J the sensitivity of the
summary mean to the parameters (central finite differences under common
random numbers) and Sigma the summary covariance at the fiducial point.
A nonsingular, well-conditioned matrix certifies local identifiability of
the parameter set from the chosen measurement channels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .inference import (PriorBox, SbiProblem, _master_seed, _znorm,
                        default_prior_box, vehicle_problem)
from .rng import RngStream, substream
from .summaries import Normalizer
from .simulator import SimConfig
from .vehicle import IdentifiedParams

__all__ = ["FisherReport", "summary_moments", "fisher_matrix",
           "fisher_matrix_generic", "write_fisher_report", "read_fisher_report"]

SIGMA_REGULARIZATION = 1e-8
SINGULARITY_TOL = 1e-8   # singular if min eigenvalue < tol * max eigenvalue


@dataclass
class FisherReport:
    theta_star: np.ndarray
    F: np.ndarray
    eigenvalues: np.ndarray   # ascending
    condition_number: float
    singular: bool
    sims_used: int
    fd_steps: np.ndarray


def _moments_at(problem: SbiProblem, theta: np.ndarray, n_sims: int,
                seed: int, stage: str, round_index: int):
    """Summary mean/values at one fixed parameter; invalid sims are dropped
    (same streams for every call with the same stage/round, giving common
    random numbers across perturbed evaluations)."""
    thetas = np.tile(np.asarray(theta, float), (n_sims, 1))
    streams = [substream(seed, stage, round_index, i) for i in range(n_sims)]
    vals, valid = problem.simulate(thetas, streams)
    return np.asarray(vals), np.asarray(valid, bool)


def summary_moments(theta, n_sims: int, rng: RngStream, sim_config: SimConfig,
                    normalizer: Normalizer, box: PriorBox = None):
    """Mean and covariance of the normalized summaries at a fixed parameter.

    Raises if more than 10% of the simulations abort. The covariance gets
    a small diagonal regularization so it stays invertible even for nearly
    deterministic configurations.
    """
    if n_sims < 100:
        raise ValueError("n_sims must be at least 100")
    if box is None:
        box = default_prior_box()
    problem = vehicle_problem(sim_config, box)
    theta_vec = theta.as_array() if hasattr(theta, "as_array") else np.asarray(theta, float)
    vals, valid = _moments_at(problem, theta_vec, n_sims, _master_seed(rng),
                              "fisher_cov", 0)
    return _finish_moments(vals, valid, normalizer)


def _finish_moments(vals, valid, normalizer):
    n_sims = valid.shape[0]
    n_bad = int((~valid).sum())
    if n_bad > 0.1 * n_sims:
        raise RuntimeError(f"{n_bad}/{n_sims} simulations invalid at the fiducial point")
    z = _znorm(vals[valid], normalizer) if normalizer is not None else vals[valid]
    mu = z.mean(axis=0)
    Sigma = np.cov(z, rowvar=False, ddof=1) + SIGMA_REGULARIZATION * np.eye(z.shape[1])
    return mu, Sigma


def fisher_matrix_generic(problem: SbiProblem, theta_star: np.ndarray,
                          fd_steps: np.ndarray, n_sims: int, seed: int,
                          normalizer: Normalizer = None) -> FisherReport:
    """Gaussian-likelihood Fisher information of an arbitrary problem.

    The summary covariance is estimated at theta_star; the Jacobian of the
    summary mean uses central differences, re-using the same per-simulation
    streams for the + and - evaluations of every coordinate (common random
    numbers), with the means computed over the simulations valid on both
    sides.
    """
    theta_star = np.asarray(theta_star, float)
    fd_steps = np.asarray(fd_steps, float)
    d = theta_star.shape[0]
    if fd_steps.shape != (d,) or np.any(fd_steps <= 0):
        raise ValueError("fd_steps must be positive, one per parameter")

    vals0, valid0 = _moments_at(problem, theta_star, n_sims, seed, "fisher_cov", 0)
    _, Sigma = _finish_moments(vals0, valid0, normalizer)
    sims_used = n_sims

    k = Sigma.shape[0]
    J = np.zeros((k, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = fd_steps[i]
        vp, okp = _moments_at(problem, theta_star + e, n_sims, seed, "fisher_jac", 0)
        vm, okm = _moments_at(problem, theta_star - e, n_sims, seed, "fisher_jac", 0)
        sims_used += 2 * n_sims
        ok = okp & okm
        if ok.sum() < 0.9 * n_sims:
            raise RuntimeError(f"too many invalid simulations perturbing parameter {i}")
        zp = _znorm(vp[ok], normalizer) if normalizer is not None else vp[ok]
        zm = _znorm(vm[ok], normalizer) if normalizer is not None else vm[ok]
        J[:, i] = (zp.mean(axis=0) - zm.mean(axis=0)) / (2.0 * fd_steps[i])

    F = J.T @ np.linalg.solve(Sigma, J)
    F = 0.5 * (F + F.T)
    eigvals = np.linalg.eigvalsh(F)
    emax = float(eigvals[-1])
    emin = float(eigvals[0])
    singular = not (emax > 0) or emin < SINGULARITY_TOL * emax
    cond = np.inf if emin <= 0 else emax / emin
    return FisherReport(theta_star=theta_star, F=F, eigenvalues=eigvals,
                        condition_number=float(cond), singular=bool(singular),
                        sims_used=sims_used, fd_steps=fd_steps)


def fisher_matrix(theta_star, fd_steps, n_sims: int, rng: RngStream,
                  sim_config: SimConfig, normalizer: Normalizer,
                  box: PriorBox = None) -> FisherReport:
    """Fisher information of the vehicle problem at a fiducial parameter.

    fd_steps may be None, defaulting to 1% of each prior range. theta_star
    must be interior to the box by at least the steps.
    """
    if box is None:
        box = default_prior_box()
    theta_vec = (theta_star.as_array() if hasattr(theta_star, "as_array")
                 else np.asarray(theta_star, float))
    if fd_steps is None:
        fd_steps = 0.01 * box.widths
    fd_steps = np.asarray(fd_steps, float)
    if (np.any(theta_vec - fd_steps < box.lower)
            or np.any(theta_vec + fd_steps > box.upper)):
        raise ValueError("theta_star must be interior to the box by fd_steps")
    problem = vehicle_problem(sim_config, box)
    return fisher_matrix_generic(problem, theta_vec, fd_steps, n_sims,
                                 _master_seed(rng), normalizer)


def write_fisher_report(report: FisherReport, path) -> None:
    doc = {
        "schema": "vehsbi-fisher-v1",
        "theta_star": [repr(float(v)) for v in report.theta_star],
        "fisher_matrix": [[repr(float(v)) for v in row] for row in report.F],
        "eigenvalues": [repr(float(v)) for v in report.eigenvalues],
        "condition_number": repr(float(report.condition_number)),
        "singular": report.singular,
        "sims_used": report.sims_used,
        "fd_steps": [repr(float(v)) for v in report.fd_steps],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_fisher_report(path) -> FisherReport:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != "vehsbi-fisher-v1":
        raise ValueError("not a fisher report file")
    return FisherReport(
        theta_star=np.array([float(v) for v in doc["theta_star"]]),
        F=np.array([[float(v) for v in row] for row in doc["fisher_matrix"]]),
        eigenvalues=np.array([float(v) for v in doc["eigenvalues"]]),
        condition_number=float(doc["condition_number"]),
        singular=bool(doc["singular"]),
        sims_used=int(doc["sims_used"]),
        fd_steps=np.array([float(v) for v in doc["fd_steps"]]))
