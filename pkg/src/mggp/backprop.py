"""Reverse-mode gradients of the training loss w.r.t. LCF weights, and
sign-based resilient weight updates.

The loss is the sum of squared errors of the individual's prediction
``yhat = c0 + sum_k c_k * gene_k(x)`` with the top-level coefficients held
fixed during a backward pass; they are refit by ordinary least squares
before every update step.  Because minimising SSE is affinely equivalent to
maximising training R^2, the tuner tracks R^2 and keeps the best weights it
observes.

Gradient aggregation across synchronised LCF groups falls out of sharing:
the gradient table is keyed by weight-set object, so leaves that share a
set accumulate into a single summed entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exprtree import (
    Fn,
    Func,
    Lcf,
    LcfWeights,
    Node,
    POWER_EXPONENT,
    logsig_is_increasing,
)
from .fitness import ols_fit, r_squared


@dataclass(frozen=True)
class RpropParams:
    """iRprop- hyperparameters (standard published defaults; the step
    ceiling is kept small to match benchmark feature scales)."""

    eta_plus: float = 1.2
    eta_minus: float = 0.5
    delta_init: float = 0.1
    delta_min: float = 1e-9
    delta_max: float = 10.0


@dataclass(frozen=True)
class StepBudget:
    """Per-individual update-step budget: ``max(floor, steps - total node
    count over all genes)``."""

    steps: int = 25
    floor: int = 2

    def steps_for(self, total_nodes: int) -> int:
        return max(self.floor, self.steps - total_nodes)


class EvalTrace:
    """Forward values of every node of an individual on one input matrix.

    Maps node objects (by identity) to their n-sample output vectors and
    keeps the inputs, which the backward pass needs for the ``b`` partials.
    """

    __slots__ = ("values", "X")

    def __init__(self, X: np.ndarray) -> None:
        self.values: dict[Node, np.ndarray] = {}
        self.X = X

    def value(self, node: Node) -> np.ndarray:
        return self.values[node]


def forward_trace(individual, X) -> EvalTrace:
    """Evaluate all genes, recording per-node outputs.

    Root values are identical to :func:`mggp.exprtree.eval_batch` on the
    same trees.
    """
    X = np.asarray(X, dtype=float)
    trace = EvalTrace(X)
    with np.errstate(all="ignore"):
        for gene in individual.genes:
            _trace_node(gene.root, X, trace.values)
    return trace


def _trace_node(node: Node, X: np.ndarray, out: dict) -> np.ndarray:
    from .exprtree import _eval, apply_fn  # leaf handling shared with eval_batch

    if isinstance(node, Func):
        value = apply_fn(node.kind, [_trace_node(c, X, out) for c in node.children])
    else:
        value = _eval(node, X)
    out[node] = value
    return value


def _refresh_lcf_genes(individual, trace: EvalTrace) -> None:
    """Recompute trace entries of LCF-bearing genes after a weight change."""
    with np.errstate(all="ignore"):
        for gene in individual.genes:
            if gene.has_lcf:
                _trace_node(gene.root, trace.X, trace.values)


def local_derivative(kind: Fn, child_values, child_index: int = 0) -> np.ndarray:
    """d(output)/d(child) of one operator at the given child values.

    Singular points take their limit values (sinc' at 0 is 0).
    """
    x = np.asarray(child_values[0], dtype=float)
    with np.errstate(all="ignore"):
        if kind is Fn.ADD:
            return np.ones_like(x)
        if kind is Fn.SUB:
            return np.ones_like(x) if child_index == 0 else -np.ones_like(x)
        if kind is Fn.MUL:
            return np.asarray(child_values[1 - child_index], dtype=float)
        if kind is Fn.SIN:
            return np.cos(x)
        if kind is Fn.COS:
            return -np.sin(x)
        if kind is Fn.EXP:
            return np.exp(x)
        if kind is Fn.LOGSIG:
            s = expit(x)
            d = s * (1.0 - s)
            return d if logsig_is_increasing() else -d
        if kind is Fn.TANH:
            t = np.tanh(x)
            return 1.0 - t * t
        if kind is Fn.SINC:
            num = x * np.cos(x) - np.sin(x)
            return np.where(x == 0.0, 0.0, num / np.square(x))
        if kind is Fn.SOFTPLUS:
            return expit(x)
        if kind is Fn.GAUSS:
            return -2.0 * x * np.exp(-np.square(x))
        k = POWER_EXPONENT[kind]
        return k * x ** (k - 1)


class GradientTable:
    """Summed loss partials per distinct weight set, keyed by the set object.

    Entries are ``[d_a, d_b]`` with ``d_b`` a length-d vector.  The table
    contains every weight set reachable from the individual (entries stay
    zero for genes with a zero top-level coefficient).
    """

    __slots__ = ("entries", "valid")

    def __init__(self, weight_sets) -> None:
        self.entries: dict[LcfWeights, list] = {
            w: [0.0, np.zeros(w.dim)] for w in weight_sets
        }
        self.valid = True

    def check_finite(self) -> bool:
        for d_a, d_b in self.entries.values():
            if not (np.isfinite(d_a) and np.isfinite(d_b).all()):
                self.valid = False
                break
        return self.valid


def backward(individual, trace: EvalTrace, y, top_model) -> GradientTable:
    """Gradient of ``sum((yhat - y)^2)`` w.r.t. every LCF weight.

    ``top_model`` supplies the coefficients ``c0, c``, held fixed here; the
    gradient through gene ``k`` is scaled by ``c_k`` (exact chain rule), so
    genes with a zero coefficient contribute nothing.  Leaves sharing a
    weight set accumulate into one summed entry, which realises the
    index-group summation of the synchronised modes.
    """
    y = np.asarray(y, dtype=float)
    table = GradientTable(individual.weight_sets())
    with np.errstate(all="ignore"):
        yhat = top_model.c0 + sum(
            c * trace.value(g.root) for c, g in zip(top_model.c, individual.genes)
        )
        residual2 = 2.0 * (yhat - y)
        for c, gene in zip(top_model.c, individual.genes):
            if c == 0.0 or not gene.has_lcf:
                continue
            _backward_node(gene.root, residual2 * c, trace, table)
    table.check_finite()
    return table


def _backward_node(node: Node, adjoint: np.ndarray, trace: EvalTrace, table: GradientTable) -> None:
    if isinstance(node, Lcf):
        entry = table.entries[node.weights]
        entry[0] += float(adjoint.sum())
        entry[1] += trace.X.T @ adjoint
        return
    if not isinstance(node, Func):
        return
    child_values = tuple(trace.value(c) for c in node.children)
    for i, child in enumerate(node.children):
        if isinstance(child, (Func, Lcf)):
            d = local_derivative(node.kind, child_values, i)
            _backward_node(child, adjoint * d, trace, table)


def irprop_minus_step(grads: GradientTable, params: RpropParams = RpropParams()) -> None:
    """One iRprop- update of every weight set in the table, in place.

    Per weight: the step size grows by ``eta_plus`` while the gradient sign
    is stable and shrinks by ``eta_minus`` on a sign flip, in which case the
    gradient is zeroed so the weight does not move that iteration; then
    ``w -= sign(g) * delta``, and ``g`` (possibly zeroed) becomes the stored
    previous gradient.  Step sizes stay within ``[delta_min, delta_max]``.
    Step-size memory lives on each :class:`LcfWeights`.
    """
    if not grads.valid:
        raise ValueError("cannot update from an invalid gradient table")
    for w, (d_a, d_b) in grads.entries.items():
        g = np.empty(1 + w.dim)
        g[0] = d_a
        g[1:] = d_b
        if w.delta is None:
            w.delta = np.full(g.size, params.delta_init)
            w.prev_grad = np.zeros(g.size)
        with np.errstate(over="ignore"):
            # only the sign of the product matters; overflow to inf is fine
            prod = g * w.prev_grad
        grew = prod > 0.0
        flipped = prod < 0.0
        w.delta[grew] = np.minimum(w.delta[grew] * params.eta_plus, params.delta_max)
        w.delta[flipped] = np.maximum(w.delta[flipped] * params.eta_minus, params.delta_min)
        g[flipped] = 0.0
        step = np.sign(g) * w.delta
        w.a -= step[0]
        w.b -= step[1:]
        w.prev_grad = g


def _fit_from_trace(individual, trace: EvalTrace, y):
    """OLS refit from current trace roots; ``(None, None)`` on non-finite."""
    G = np.column_stack([trace.value(g.root) for g in individual.genes])
    if not np.isfinite(G).all():
        return None, None
    model = ols_fit(G, y)
    if not (np.isfinite(model.c0) and np.isfinite(model.c).all()):
        return None, None
    r2 = r_squared(y, model.predict(G))
    if not np.isfinite(r2):
        return None, None
    return model, r2


def _snapshot_weights(individual) -> dict[LcfWeights, tuple[float, np.ndarray]]:
    return {w: w.values() for w in individual.weight_sets()}


def _restore_weights(snapshot) -> None:
    for w, (a, b) in snapshot.items():
        w.set_values(a, b)


def tune(individual, train, budget: StepBudget = StepBudget(), mode: str = "U",
         params: RpropParams = RpropParams()):
    """Gradient-tune the LCF weights of one individual on the training set.

    Runs ``budget.steps_for(total nodes)`` iterations of {refit top-level
    OLS, forward trace, backward, iRprop- step}.  The individual is returned
    carrying the best-training-R^2 weights observed (never worse than the
    weights it arrived with); a non-finite loss or gradient stops tuning
    early.  No-op for individuals without LCF leaves.
    """
    if mode not in ("U", "S"):
        raise ValueError("tune applies to the U and S modes only")
    if not individual.has_lcf():
        return individual
    X, y = train.X, train.y
    n_steps = budget.steps_for(individual.total_nodes())
    trace = forward_trace(individual, X)
    model, r2 = _fit_from_trace(individual, trace, y)
    best_r2 = -np.inf if r2 is None else r2
    best = _snapshot_weights(individual)
    for _ in range(n_steps):
        if model is None:
            break
        grads = backward(individual, trace, y, model)
        if not grads.valid:
            break
        irprop_minus_step(grads, params)
        individual.bump_weights_version()
        _refresh_lcf_genes(individual, trace)
        model, r2 = _fit_from_trace(individual, trace, y)
        if r2 is not None and r2 > best_r2:
            best_r2 = r2
            best = _snapshot_weights(individual)
    _restore_weights(best)
    individual.bump_weights_version()
    return individual


class GlobalWeightTable:
    """Population-wide weight sets, one per feature index, plus an epoch
    counter so cached evaluations notice global updates."""

    __slots__ = ("weights", "epoch")

    def __init__(self, dim: int) -> None:
        self.weights = {i: LcfWeights.identity(i, dim) for i in range(1, dim + 1)}
        self.epoch = 0

    def lookup(self, index: int) -> LcfWeights:
        return self.weights[index]

    def bump(self) -> None:
        self.epoch += 1


def global_tune(population, table: GlobalWeightTable, train, steps: int = 2,
                params: RpropParams = RpropParams()) -> None:
    """Shared-table tuning for the globally synchronised mode.

    Per step, loss partials are computed per individual (with that
    individual's freshly fit coefficients held fixed) and summed over the
    whole population per index group; one shared iRprop- state, stored on
    the table's weight sets, drives the update.  Individuals with a
    non-finite loss or gradient are skipped; a step with no valid
    contribution stops tuning for this call.
    """
    X, y = train.X, train.y
    sets = list(table.weights.values())
    for _ in range(steps):
        total = GradientTable(sets)
        any_valid = False
        for individual in population:  # fixed ascending order for determinism
            if not individual.has_lcf():
                continue
            trace = forward_trace(individual, X)
            model, _ = _fit_from_trace(individual, trace, y)
            if model is None:
                continue
            grads = backward(individual, trace, y, model)
            if not grads.check_finite():
                continue
            for w, (d_a, d_b) in grads.entries.items():
                entry = total.entries[w]
                entry[0] += d_a
                entry[1] += d_b
            any_valid = True
        if not any_valid or not total.check_finite():
            break
        irprop_minus_step(total, params)
        table.bump()
