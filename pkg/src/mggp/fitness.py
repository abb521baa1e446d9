"""Top-level linear model over gene outputs, R-squared fitness and metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError
from .exprtree import Lcf, Var, iter_nodes


@dataclass(frozen=True)
class LinearModel:
    """Fitted combination ``y ~ c0 + G @ c`` of per-gene outputs."""

    c0: float
    c: np.ndarray

    def predict(self, G: np.ndarray) -> np.ndarray:
        return self.c0 + G @ self.c


@dataclass(frozen=True)
class FitnessReport:
    """Training fitness; ``valid`` is False when any gene output or model
    coefficient is non-finite.  Invalid reports rank below every valid one."""

    train_r2: float
    valid: bool

    @property
    def order_key(self) -> tuple:
        return (self.valid, self.train_r2 if self.valid else -np.inf)


INVALID = FitnessReport(train_r2=-np.inf, valid=False)


def ols_fit(G, y) -> LinearModel:
    """Least-squares fit of ``y ~ c0 + G @ c``.

    Uses an orthogonal decomposition, so rank-deficient designs get the
    minimum-norm coefficient vector (an all-zero gene column receives an
    exactly zero coefficient).
    """
    G = np.asarray(G, dtype=float)
    y = np.asarray(y, dtype=float)
    if G.ndim != 2:
        raise ValueError("G must be 2-d (samples x genes)")
    if not np.isfinite(G).all():
        raise ValueError("design matrix contains non-finite entries")
    A = np.column_stack([np.ones(G.shape[0]), G])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return LinearModel(c0=float(coef[0]), c=coef[1:])


def r_squared(y, yhat) -> float:
    """Coefficient of determination, ``1 - SS_res / SS_tot``.

    Negative when the fit is worse than the constant mean predictor.
    """
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1 or y.shape[0] < 2:
        raise ValueError("y and yhat must be equal-length vectors of >= 2 values")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise DegenerateDataError("target values are constant; R^2 is undefined")
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot


def fit_linear(individual, data, epoch: int = 0) -> tuple[LinearModel | None, FitnessReport]:
    """Fit the top-level model of ``individual`` on ``data`` and score it.

    Returns ``(None, INVALID)`` when any gene output or coefficient is
    non-finite.  Pure: caches live on genes/datasets, never on the report.
    """
    G = individual.gene_matrix(data, epoch)
    if not np.isfinite(G).all():
        return None, INVALID
    model = ols_fit(G, data.y)
    if not (np.isfinite(model.c0) and np.isfinite(model.c).all()):
        return None, INVALID
    r2 = r_squared(data.y, model.predict(G))
    if not np.isfinite(r2):
        return None, INVALID
    return model, FitnessReport(train_r2=r2, valid=True)


def evaluate(individual, data, epoch: int = 0) -> FitnessReport:
    """Training fitness of ``individual`` on ``data`` (R^2, maximised)."""
    return fit_linear(individual, data, epoch)[1]


def lcf_ratio(individual) -> float:
    """Fraction of non-constant leaves that are LCF leaves (0 if none)."""
    n_lcf = 0
    n_var = 0
    for gene in individual.genes:
        for node in iter_nodes(gene.root):
            if isinstance(node, Lcf):
                n_lcf += 1
            elif isinstance(node, Var):
                n_var += 1
    total = n_lcf + n_var
    return n_lcf / total if total else 0.0


def mean_gene_depth(individual) -> float:
    """Arithmetic mean of per-gene depths."""
    if not individual.genes:
        raise ValueError("individual has no genes")
    return sum(g.depth for g in individual.genes) / len(individual.genes)
