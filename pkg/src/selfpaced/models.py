"""Learning problems and the two self-paced objectives.

A :class:`Problem` couples a dataset with a per-sample loss, a ridge model
regularizer ``phi(w) = mu/2 ||w||^2`` and a self-paced regularizer.  It
evaluates

* the explicit objective ``E(w, v) = phi(w) + sum_i v_i l_i(w) + f(v_i)``,
* the implicit objective ``G(w) = phi(w) + sum_i F(l_i(w))``,
* the majorizer ``U(w | a) = phi(w) + sum_i F(l_i(a)) + v*(l_i(a)) (l_i(w) - l_i(a))``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.special import expit

from .regularizers import RegularizerSpec, UnsupportedOperation, F_value, f_value, v_star

__all__ = [
    "LossKind",
    "Dataset",
    "Problem",
    "load_dataset",
    "save_dataset",
    "losses",
    "loss_gradients",
    "explicit_objective",
    "implicit_objective",
    "implicit_gradient",
    "surrogate",
    "surrogate_gradient",
]


class LossKind(str, enum.Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class Dataset:
    """Training data: ``features`` is ``(N, D)``, ``targets`` is ``(N,)``."""

    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.array(self.features, dtype=float, ndmin=2)
        y = np.array(self.targets, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"features must be a non-empty 2-D array, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def load_dataset(path: Union[str, Path], loss: Union[LossKind, str, None] = None) -> Dataset:
    """Read a CSV with header ``x1..xD,y``.

    For logistic problems, ``{0, 1}`` labels are mapped to ``{-1, +1}``.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[float(c) for c in row] for row in reader if row]
    d = len(header) - 1
    if d < 1 or header != [f"x{j + 1}" for j in range(d)] + ["y"]:
        raise ValueError(f"{path}: expected header x1..xD,y, got {header}")
    arr = np.array(rows, dtype=float).reshape(-1, d + 1)
    y = arr[:, -1]
    if loss is not None and LossKind(loss) is LossKind.LOGISTIC and set(np.unique(y)) <= {0.0, 1.0}:
        y = 2.0 * y - 1.0
    return Dataset(arr[:, :-1], y)


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    d = dataset.n_features
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{j + 1}" for j in range(d)] + ["y"])
        for x, y in zip(dataset.features, dataset.targets):
            writer.writerow([repr(float(c)) for c in x] + [repr(float(y))])


@dataclass(frozen=True)
class Problem:
    """A self-paced learning problem.

    Parameters
    ----------
    dataset : Dataset
    loss : LossKind
        ``squared``: ``l = (y - w.x)^2 / 2``; ``logistic``:
        ``l = log(1 + exp(-y w.x))`` with ``y`` in ``{-1, +1}``.
    mu : float
        Ridge strength of ``phi(w) = mu/2 ||w||^2``.
    regularizer : RegularizerSpec
    """

    dataset: Dataset
    loss: LossKind
    mu: float
    regularizer: RegularizerSpec

    def __post_init__(self):
        object.__setattr__(self, "loss", LossKind(self.loss))
        mu = float(self.mu)
        if not np.isfinite(mu) or mu < 0:
            raise ValueError(f"mu must be non-negative, got {mu}")
        object.__setattr__(self, "mu", mu)
        if self.loss is LossKind.LOGISTIC and not np.all(np.abs(self.dataset.targets) == 1.0):
            raise ValueError("logistic targets must be -1 or +1")

    @property
    def dim(self) -> int:
        return self.dataset.n_features

    def with_regularizer(self, regularizer: RegularizerSpec) -> "Problem":
        return Problem(self.dataset, self.loss, self.mu, regularizer)

    def check_w(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise ValueError(f"w must have shape ({self.dim},), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("w must be finite")
        return w

    def check_v(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dataset.n_samples,):
            raise ValueError(f"v must have shape ({self.dataset.n_samples},), got {v.shape}")
        if np.any(np.isnan(v)) or np.any(v < 0) or np.any(v > 1):
            raise ValueError("sample weights must lie in [0, 1]")
        return v

    def phi(self, w) -> float:
        return 0.5 * self.mu * float(w @ w)

    def margins(self, w) -> np.ndarray:
        return self.dataset.features @ w

    def dloss_dmargin(self, z) -> np.ndarray:
        """Derivative of each loss with respect to its linear prediction."""
        y = self.dataset.targets
        if self.loss is LossKind.SQUARED:
            return z - y
        return -y * expit(-y * z)


def _loss_from_margin(problem: Problem, z) -> np.ndarray:
    y = problem.dataset.targets
    if problem.loss is LossKind.SQUARED:
        return 0.5 * (y - z) ** 2
    return np.logaddexp(0.0, -y * z)


def losses(problem: Problem, w) -> np.ndarray:
    """Per-sample losses ``l_i(w)``."""
    w = problem.check_w(w)
    return _loss_from_margin(problem, problem.margins(w))


def loss_gradients(problem: Problem, w) -> np.ndarray:
    """``(N, D)`` matrix whose row ``i`` is ``grad_w l_i(w)``."""
    w = problem.check_w(w)
    g = problem.dloss_dmargin(problem.margins(w))
    return g[:, None] * problem.dataset.features


def explicit_objective(problem: Problem, w, v) -> float:
    w = problem.check_w(w)
    v = problem.check_v(v)
    l = _loss_from_margin(problem, problem.margins(w))
    return problem.phi(w) + float(np.sum(v * l + f_value(problem.regularizer, v)))


def implicit_objective(problem: Problem, w) -> float:
    w = problem.check_w(w)
    l = _loss_from_margin(problem, problem.margins(w))
    return problem.phi(w) + float(np.sum(F_value(problem.regularizer, l)))


def implicit_gradient(problem: Problem, w) -> np.ndarray:
    """Gradient of the implicit objective; needs a continuous ``v*``."""
    if not problem.regularizer.smooth:
        raise UnsupportedOperation(
            f"{problem.regularizer.kind.value} regularizer: implicit objective is not differentiable"
        )
    w = problem.check_w(w)
    z = problem.margins(w)
    weights = v_star(problem.regularizer, _loss_from_margin(problem, z))
    return problem.mu * w + problem.dataset.features.T @ (weights * problem.dloss_dmargin(z))


def surrogate(problem: Problem, w, anchor) -> float:
    """Majorizer ``U(w | anchor)`` of the implicit objective."""
    w = problem.check_w(w)
    anchor = problem.check_w(anchor)
    la = losses(problem, anchor)
    lw = losses(problem, w)
    reg = problem.regularizer
    q = np.sum(F_value(reg, la) + v_star(reg, la) * (lw - la))
    return problem.phi(w) + float(q)


def surrogate_gradient(problem: Problem, w, anchor) -> np.ndarray:
    """Gradient of ``U(. | anchor)`` at ``w``."""
    w = problem.check_w(w)
    weights = v_star(problem.regularizer, losses(problem, problem.check_w(anchor)))
    g = problem.dloss_dmargin(problem.margins(w))
    return problem.mu * w + problem.dataset.features.T @ (weights * g)
