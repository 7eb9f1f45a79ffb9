"""
Logistic regression by iteratively reweighted least squares with a
cluster-robust sandwich covariance (independence working correlation)
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import expit

from errors import FitError

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-8
MAX_ITERATIONS = 100
SEPARATION_BOUND = 30.0


@dataclass
class FitResult:
    terms: List[str]
    beta: np.ndarray
    covariance: np.ndarray
    model_covariance: np.ndarray
    n_obs: int
    n_clusters: int
    converged: bool
    iterations: int
    log_likelihood: float
    gradient_norm: float = field(default=0.0)

    @property
    def coefficients(self) -> Dict[str, float]:
        return {term: float(b) for term, b in zip(self.terms, self.beta)}

    @property
    def robust_se(self) -> Dict[str, float]:
        return {term: float(np.sqrt(max(v, 0.0))) for term, v in zip(self.terms, np.diag(self.covariance))}

    def index(self, term: str) -> int:
        try:
            return self.terms.index(term)
        except ValueError:
            raise FitError(f"fit has no term {term!r}")

    def to_dict(self) -> Dict:
        return {
            "terms": list(self.terms),
            "coefficients": self.coefficients,
            "robust_se": self.robust_se,
            "covariance": self.covariance.tolist(),
            "n_obs": self.n_obs,
            "n_clusters": self.n_clusters,
            "converged": self.converged,
            "iterations": self.iterations,
            "log_likelihood": self.log_likelihood,
        }


def log_likelihood(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    """Bernoulli log-likelihood, computed stably through logaddexp"""
    eta = X @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def cluster_scores(X: np.ndarray, residuals: np.ndarray, clusters: np.ndarray) -> np.ndarray:
    """Per-cluster sums of the score vectors x_i (y_i - p_i), one row per cluster"""
    _, codes = np.unique(clusters, return_inverse=True)
    scores = X * residuals[:, None]
    summed = np.zeros((codes.max() + 1, X.shape[1]))
    np.add.at(summed, codes, scores)
    return summed


def sandwich_covariance(X: np.ndarray, y: np.ndarray, beta: np.ndarray, clusters: np.ndarray) -> np.ndarray:
    """A^-1 B A^-1 with A the observed information and B the outer products of cluster scores"""
    p = expit(X @ beta)
    info = X.T @ (X * (p * (1.0 - p))[:, None])
    bread = np.linalg.inv(info)
    meat_rows = cluster_scores(X, y - p, clusters)
    meat = meat_rows.T @ meat_rows
    cov = bread @ meat @ bread
    return (cov + cov.T) / 2.0


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    clusters: Sequence,
    terms: Optional[Sequence[str]] = None,
    tol: float = GRADIENT_TOLERANCE,
    max_iter: int = MAX_ITERATIONS,
) -> FitResult:
    """
    Maximum-likelihood logistic fit by Newton steps on the Bernoulli
    log-likelihood, stopping when the gradient max-norm drops to `tol`.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    clusters = np.asarray(clusters)
    n, k = X.shape
    terms = list(terms) if terms is not None else [f"x{j}" for j in range(k)]

    if len(terms) != k:
        raise FitError(f"{len(terms)} term names for {k} columns")
    if len(y) != n or len(clusters) != n:
        raise FitError(f"X has {n} rows, y has {len(y)}, clusters has {len(clusters)}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise FitError("response must be binary")
    if np.linalg.matrix_rank(X) < k:
        raise FitError(f"design matrix is rank deficient (rank {np.linalg.matrix_rank(X)} < {k} columns)")
    n_clusters = len(np.unique(clusters))
    if n_clusters < 2:
        raise FitError(f"need at least two clusters, got {n_clusters}")

    beta = np.zeros(k)
    converged = False
    iterations = 0
    grad_norm = np.inf
    for iterations in range(1, max_iter + 1):
        p = expit(X @ beta)
        grad = X.T @ (y - p)
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= tol:
            converged = True
            iterations -= 1
            break
        info = X.T @ (X * (p * (1.0 - p))[:, None])
        try:
            beta = beta + np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise FitError("information matrix is singular; pool sparse treatment x group cells")
        if np.any(np.abs(beta) > SEPARATION_BOUND):
            worst = terms[int(np.argmax(np.abs(beta)))]
            raise FitError(
                f"perfect separation suspected: |beta[{worst}]| exceeds {SEPARATION_BOUND}; "
                "pool groups or treatments with all-correct or all-wrong cells"
            )
    else:
        p = expit(X @ beta)
        grad_norm = float(np.max(np.abs(X.T @ (y - p))))
        converged = grad_norm <= tol
        if not converged:
            logger.warning("logistic fit did not converge after %d iterations (gradient %.3g)", max_iter, grad_norm)

    p = expit(X @ beta)
    model_cov = np.linalg.inv(X.T @ (X * (p * (1.0 - p))[:, None]))
    cov = sandwich_covariance(X, y, beta, clusters)
    ll = log_likelihood(X, y, beta)
    logger.info("logistic fit: n=%d k=%d clusters=%d iterations=%d loglik=%.4f",
                n, k, n_clusters, iterations, ll)
    return FitResult(
        terms=terms, beta=beta, covariance=cov, model_covariance=(model_cov + model_cov.T) / 2.0,
        n_obs=n, n_clusters=n_clusters, converged=converged, iterations=iterations,
        log_likelihood=ll, gradient_norm=grad_norm,
    )
