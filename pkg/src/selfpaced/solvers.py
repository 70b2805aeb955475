"""Alternating and majorization-minimization solvers for self-paced learning.

All three schemes share one weighted minimizer for the w-step,

    h(w; v) = mu/2 ||w||^2 + sum_i v_i l_i(w),

which differs from both ``E(., v)`` and ``U(. | anchor)`` (with
``v = v*(l(anchor))``) by constants in ``w``.  That shared code path is what
makes the AOS and exact-MM traces coincide bit for bit.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np
from scipy import linalg
from scipy.special import expit, zeta

from .models import (
    LossKind,
    Problem,
    explicit_objective,
    implicit_gradient,
    implicit_objective,
    losses,
    surrogate,
)
from .regularizers import v_star

__all__ = [
    "Scheme",
    "InnerMethod",
    "ArmijoParams",
    "InnerSolverConfig",
    "ErrorSchedule",
    "SolverConfig",
    "IterateTrace",
    "SolverError",
    "ConfigurationError",
    "v_step",
    "w_step",
    "aos_solve",
    "mm_solve",
    "inexact_mm_solve",
    "solve",
]

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["k", "E", "G", "U", "grad_norm", "eps_k", "r_k", "step_norm", "inner_iters", "inner_gap"]


class SolverError(RuntimeError):
    """Numerical failure during a solve; ``trace`` holds the iterations done so far."""

    def __init__(self, msg: str, trace: "IterateTrace" = None):
        super().__init__(msg)
        self.trace = trace


class ConfigurationError(ValueError):
    pass


class Scheme(str, enum.Enum):
    AOS = "aos"
    EXACT_MM = "mm"
    INEXACT_MM = "inexact-mm"


class InnerMethod(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    GRADIENT_DESCENT = "gradient_descent"


@dataclass(frozen=True)
class ArmijoParams:
    c: float = 1e-4
    ratio: float = 0.5
    step0: float = 1.0

    def __post_init__(self):
        if not (0 < self.c < 1 and 0 < self.ratio < 1 and self.step0 > 0):
            raise ConfigurationError(f"invalid Armijo parameters {self}")


@dataclass(frozen=True)
class InnerSolverConfig:
    """How each w-step is minimized.

    ``grad_tol`` is the gradient-norm floor of the descent method: it stops
    there even when the requested gap is smaller, since double precision
    cannot certify much below it.
    """

    method: InnerMethod = InnerMethod.CLOSED_FORM
    grad_tol: float = 1e-11
    max_inner_iters: int = 10_000
    armijo: ArmijoParams = ArmijoParams()

    def __post_init__(self):
        object.__setattr__(self, "method", InnerMethod(self.method))
        if self.grad_tol <= 0 or self.max_inner_iters < 1:
            raise ConfigurationError("grad_tol must be positive and max_inner_iters >= 1")


@dataclass(frozen=True)
class ErrorSchedule:
    """Summable inner-error budget ``eps_k``, ``k = 1, 2, ...``.

    ``geometric``: ``eps0 * rho**k`` with ``0 < rho < 1``.
    ``power``: ``eps0 * k**(-p)`` with ``p > 1``.
    """

    rule: str = "geometric"
    eps0: float = 1e-2
    rho: float = 0.5
    p: float = 2.0

    def __post_init__(self):
        if self.rule not in ("geometric", "power"):
            raise ConfigurationError(f"unknown error schedule rule {self.rule!r}")
        if not (np.isfinite(self.eps0) and self.eps0 >= 0):
            raise ConfigurationError("eps0 must be finite and non-negative")
        if self.rule == "geometric" and not (0 < self.rho < 1):
            raise ConfigurationError(f"geometric schedule needs 0 < rho < 1 (got {self.rho}); not summable")
        if self.rule == "power" and not self.p > 1:
            raise ConfigurationError(f"power schedule needs p > 1 (got {self.p}); not summable")

    def eps(self, k: int) -> float:
        if k < 1:
            raise ValueError("error schedule is indexed from k = 1")
        if self.rule == "geometric":
            return self.eps0 * self.rho**k
        return self.eps0 * float(k) ** (-self.p)

    def tail(self, k: int) -> float:
        """``sum_{j >= k} eps_j`` in closed form."""
        k = max(int(k), 1)
        if self.eps0 == 0:
            return 0.0
        if self.rule == "geometric":
            return self.eps0 * self.rho**k / (1.0 - self.rho)
        return self.eps0 * float(zeta(self.p, k))

    def total(self) -> float:
        return self.tail(1)

    def to_dict(self) -> dict:
        d = {"rule": self.rule, "eps0": self.eps0}
        if self.rule == "geometric":
            d["rho"] = self.rho
        else:
            d["p"] = self.p
        return d


@dataclass(frozen=True)
class SolverConfig:
    scheme: Scheme = Scheme.AOS
    max_outer_iters: int = 500
    outer_tol: float = 1e-10
    inner: InnerSolverConfig = InnerSolverConfig()
    error_schedule: Optional[ErrorSchedule] = None
    # the step-size stopping rule is ignored before this many iterations
    min_outer_iters: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.outer_tol <= 0 or self.max_outer_iters < 1:
            raise ConfigurationError("outer_tol must be positive and max_outer_iters >= 1")
        if not 0 <= self.min_outer_iters <= self.max_outer_iters:
            raise ConfigurationError("min_outer_iters must lie in [0, max_outer_iters]")
        if self.scheme is Scheme.INEXACT_MM:
            if self.error_schedule is None:
                raise ConfigurationError("inexact MM requires an error schedule")
            if self.inner.method is not InnerMethod.GRADIENT_DESCENT:
                raise ConfigurationError("inexact MM requires the gradient_descent inner method")


@dataclass
class IterateTrace:
    """Per-iteration record of a solve.

    Row 0 is the starting point.  Row ``k >= 1`` holds ``w_k``, the weights
    ``v_k = v*(l(w_{k-1}))`` used to produce it, ``E_k = E(w_k, v_k)``,
    ``G_k``, ``U_k = U(w_k | w_{k-1})``, the inner error budget ``eps_k``
    and the remaining budget ``r_k = sum_{j > k} eps_j``, so that
    ``G_k + r_k`` is non-increasing for a gap-certified inexact solve.
    """

    scheme: Scheme
    w: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    E: List[float] = field(default_factory=list)
    G: List[float] = field(default_factory=list)
    U: List[float] = field(default_factory=list)
    grad_norm: List[float] = field(default_factory=list)
    eps: List[float] = field(default_factory=list)
    r: List[float] = field(default_factory=list)
    step_norm: List[float] = field(default_factory=list)
    inner_iters: List[int] = field(default_factory=list)
    inner_gap: List[float] = field(default_factory=list)
    converged: bool = False
    eps_total: float = 0.0

    def __len__(self):
        return len(self.G)

    @property
    def iters(self) -> int:
        return len(self.G) - 1

    @property
    def w_final(self) -> np.ndarray:
        return self.w[-1]

    @property
    def has_errors(self) -> bool:
        return self.scheme is Scheme.INEXACT_MM

    def W(self) -> np.ndarray:
        return np.vstack(self.w)

    def append(self, **row):
        for name, value in row.items():
            getattr(self, name).append(value)

    def summary(self) -> dict:
        return {
            "iters": self.iters,
            "converged": bool(self.converged),
            "final_G": float(self.G[-1]),
            "final_grad_norm": float(self.grad_norm[-1]),
        }

    def to_csv(self, path: Union[str, Path]) -> None:
        d = len(self.w[0])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS + [f"w{j + 1}" for j in range(d)])
            for k in range(len(self)):
                row = [
                    k,
                    self.E[k],
                    self.G[k],
                    self.U[k],
                    self.grad_norm[k],
                    self.eps[k],
                    self.r[k],
                    self.step_norm[k],
                    self.inner_iters[k],
                    self.inner_gap[k],
                ]
                row = [str(c) if isinstance(c, int) else repr(float(c)) for c in row]
                writer.writerow(row + [repr(float(c)) for c in self.w[k]])

    def write(self, csv_path: Union[str, Path], json_path: Union[str, Path, None] = None) -> None:
        """Write the trace CSV and its JSON summary sidecar."""
        csv_path = Path(csv_path)
        self.to_csv(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        summary = dict(self.summary(), scheme=self.scheme.value, eps_total=self.eps_total)
        json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(
        cls,
        path: Union[str, Path],
        problem: Optional[Problem] = None,
        scheme: Union[Scheme, str, None] = None,
    ) -> "IterateTrace":
        """Load a trace CSV.

        Weights are not stored; when ``problem`` is given they are rebuilt
        from the iterates.  Scheme and convergence come from the JSON sidecar
        if present.
        """
        path = Path(path)
        side = path.with_suffix(".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        if scheme is None:
            scheme = meta.get("scheme", Scheme.AOS)
        trace = cls(Scheme(scheme), converged=bool(meta.get("converged", False)))
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            wcols = [c for c in reader.fieldnames if c.startswith("w")]
            for row in reader:
                trace.append(
                    w=np.array([float(row[c]) for c in wcols]),
                    E=float(row["E"]),
                    G=float(row["G"]),
                    U=float(row["U"]),
                    grad_norm=float(row["grad_norm"]),
                    eps=float(row["eps_k"]),
                    r=float(row["r_k"]),
                    step_norm=float(row["step_norm"]),
                    inner_iters=int(row["inner_iters"]),
                    inner_gap=float(row.get("inner_gap", "nan")),
                )
        if not len(trace):
            raise ValueError(f"{path}: empty trace")
        trace.eps_total = float(meta.get("eps_total", trace.r[0]))
        if problem is not None:
            prev = trace.w[0]
            for w in trace.w:
                trace.v.append(v_step(problem, prev))
                prev = w
        return trace


def v_step(problem: Problem, w) -> np.ndarray:
    """Exact minimizer of ``E(w, .)``: ``v_i = v*(l_i(w))``."""
    return np.asarray(v_star(problem.regularizer, losses(problem, w)), dtype=float)


def _weighted_gradient(problem: Problem, v, w, z) -> np.ndarray:
    return problem.mu * w + problem.dataset.features.T @ (v * problem.dloss_dmargin(z))


def _weighted_change(problem: Problem, v, w, z, d, a, t) -> float:
    """``h(w + t d) - h(w)`` computed without cancellation.

    ``z = X w`` and ``a = X d``.  Forming the difference term by term keeps
    the Armijo test meaningful when the decrease is far below ``eps * h(w)``.
    """
    dphi = problem.mu * (t * float(w @ d) + 0.5 * t * t * float(d @ d))
    y = problem.dataset.targets
    if problem.loss is LossKind.SQUARED:
        dl = t * a * (z - y) + 0.5 * (t * a) ** 2
    else:
        m = y * z
        dm = y * t * a
        with np.errstate(over="ignore", invalid="ignore"):
            dl = np.log1p(np.expm1(-dm) * expit(-m))
        bad = ~np.isfinite(dl)
        if np.any(bad):
            dl[bad] = np.logaddexp(0.0, -(m[bad] + dm[bad])) - np.logaddexp(0.0, -m[bad])
    return dphi + float(v @ dl)


def _gap_bound(problem: Problem, gnorm: float) -> float:
    # mu-strong convexity: h(w) - min h <= |grad h(w)|^2 / (2 mu)
    if problem.mu <= 0:
        return np.inf
    return gnorm * gnorm / (2.0 * problem.mu)


def _closed_form(problem: Problem, v):
    if problem.loss is not LossKind.SQUARED or problem.mu <= 0:
        raise ConfigurationError("closed-form w-step needs squared loss and mu > 0")
    X = problem.dataset.features
    y = problem.dataset.targets
    A = X.T @ (v[:, None] * X)
    A[np.diag_indices_from(A)] += problem.mu
    b = X.T @ (v * y)
    try:
        c, low = linalg.cho_factor(A)
        w = linalg.cho_solve((c, low), b)
    except linalg.LinAlgError as exc:
        raise SolverError(f"weighted ridge system is singular: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise SolverError("non-finite solution of the weighted ridge system")
    res = float(np.linalg.norm(A @ w - b))
    return w, _gap_bound(problem, res), 1


def _gradient_descent(problem: Problem, v, w, inner: InnerSolverConfig, gap_target: float):
    X = problem.dataset.features
    arm = inner.armijo
    w = np.array(w, dtype=float)
    it = 0
    while True:
        z = X @ w
        g = _weighted_gradient(problem, v, w, z)
        if not np.all(np.isfinite(g)):
            raise SolverError("non-finite gradient in inner solve")
        gnorm = float(np.linalg.norm(g))
        gap = _gap_bound(problem, gnorm)
        # At least one step: at the anchor grad h = grad G, so a zero step
        # would otherwise look like outer convergence.
        done = (gap <= gap_target and it > 0) or gnorm <= inner.grad_tol
        if done or it >= inner.max_inner_iters:
            return w, gap, it
        d = -g
        a = X @ d
        slope = -gnorm * gnorm
        t = arm.step0
        while _weighted_change(problem, v, w, z, d, a, t) > arm.c * t * slope:
            t *= arm.ratio
            if t * gnorm < 1e-300:
                # No representable decrease left along -g: precision floor.
                logger.debug("Armijo backtracking exhausted at |g| = %.3e", gnorm)
                return w, gap, it
        w = w + t * d
        it += 1


def w_step(problem: Problem, v, w_init, inner: InnerSolverConfig = InnerSolverConfig(), gap_target: float = 0.0):
    """Minimize ``h(w; v) = phi(w) + sum_i v_i l_i(w)``.

    Returns
    -------
    w : ndarray
    achieved_gap : float
        Upper bound on ``h(w) - min h`` from strong convexity.
    inner_iters : int
    """
    v = problem.check_v(v)
    w_init = problem.check_w(w_init)
    if inner.method is InnerMethod.CLOSED_FORM:
        return _closed_form(problem, v)
    return _gradient_descent(problem, v, w_init, inner, gap_target)


def _grad_norm(problem: Problem, w) -> float:
    if not problem.regularizer.smooth:
        return float("nan")
    return float(np.linalg.norm(implicit_gradient(problem, w)))


def _run(problem: Problem, w0, config: SolverConfig, weights: Callable) -> IterateTrace:
    w = problem.check_w(np.array(w0, dtype=float))
    sched = config.error_schedule if config.scheme is Scheme.INEXACT_MM else None
    trace = IterateTrace(config.scheme, eps_total=sched.total() if sched else 0.0)
    v0 = v_step(problem, w)
    g0 = implicit_objective(problem, w)
    trace.append(
        w=w.copy(), v=v0, E=explicit_objective(problem, w, v0), G=g0, U=g0,
        grad_norm=_grad_norm(problem, w), eps=0.0, r=trace.eps_total,
        step_norm=0.0, inner_iters=0, inner_gap=0.0,
    )
    for k in range(1, config.max_outer_iters + 1):
        v = weights(w)
        eps_k = sched.eps(k) if sched else 0.0
        try:
            w_new, gap, its = w_step(problem, v, w, config.inner, gap_target=eps_k)
        except SolverError as exc:
            exc.trace = trace
            raise
        if sched and gap > eps_k:
            logger.info("iteration %d: certified gap %.3e exceeds eps_k %.3e (precision floor)", k, gap, eps_k)
        step = float(np.linalg.norm(w_new - w))
        trace.append(
            w=w_new, v=v, E=explicit_objective(problem, w_new, v),
            G=implicit_objective(problem, w_new), U=surrogate(problem, w_new, w),
            grad_norm=_grad_norm(problem, w_new), eps=eps_k,
            r=sched.tail(k + 1) if sched else 0.0, step_norm=step,
            inner_iters=its, inner_gap=gap,
        )
        w = w_new
        if step <= config.outer_tol:
            trace.converged = True
            if k >= config.min_outer_iters:
                break
    logger.debug("%s: %d outer iterations, converged=%s", config.scheme.value, trace.iters, trace.converged)
    return trace


def aos_solve(problem: Problem, w0, config: SolverConfig) -> IterateTrace:
    """Alternate the exact v-step and the w-step on the explicit objective."""
    if config.scheme is not Scheme.AOS:
        raise ConfigurationError(f"aos_solve called with scheme {config.scheme.value}")
    return _run(problem, w0, config, lambda w: v_step(problem, w))


def _surrogate_weights(problem: Problem, anchor) -> np.ndarray:
    # U(. | anchor) = phi + sum_i v*(l_i(anchor)) l_i(.) + const
    return np.asarray(v_star(problem.regularizer, losses(problem, anchor)), dtype=float)


def mm_solve(problem: Problem, w0, config: SolverConfig) -> IterateTrace:
    """Minimize the majorizer ``U(. | w_k)`` at every step."""
    if config.scheme is not Scheme.EXACT_MM:
        raise ConfigurationError(f"mm_solve called with scheme {config.scheme.value}")
    return _run(problem, w0, config, lambda w: _surrogate_weights(problem, w))


def inexact_mm_solve(problem: Problem, w0, config: SolverConfig) -> IterateTrace:
    """MM where step ``k`` only certifies ``U(w_k | w_{k-1}) <= min U + eps_k``."""
    if config.scheme is not Scheme.INEXACT_MM:
        raise ConfigurationError(f"inexact_mm_solve called with scheme {config.scheme.value}")
    if problem.mu <= 0:
        raise ConfigurationError("inexact MM needs mu > 0 for its gap certificate")
    return _run(problem, w0, config, lambda w: _surrogate_weights(problem, w))


def solve(problem: Problem, w0, config: SolverConfig) -> IterateTrace:
    """Dispatch on ``config.scheme``."""
    return {
        Scheme.AOS: aos_solve,
        Scheme.EXACT_MM: mm_solve,
        Scheme.INEXACT_MM: inexact_mm_solve,
    }[config.scheme](problem, w0, config)
