"""Self-paced regularizers.

Each regularizer family provides three closely linked functions of a loss
value ``l`` at pace ``lam``:

* ``f(v)``, the convex penalty on a sample weight ``v`` in ``[0, 1]``;
* ``v_star(l) = argmin_{v in [0, 1]} v*l + f(v)``, the optimal weight;
* ``F(l) = integral_0^l v_star(t) dt``, the concave envelope used by the
  implicit objective.

The ``Tabulated`` kind has no ``f``; it is defined directly by sampled
``(l, v)`` pairs and exists to exercise the integral definition of ``F``.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import integrate
from scipy.special import xlogy

__all__ = [
    "DomainError",
    "UnsupportedOperation",
    "RegularizerKind",
    "RegularizerSpec",
    "ConditionReport",
    "f_value",
    "v_star",
    "F_value",
    "check_sp_conditions",
    "load_table",
]

ArrayLike = Union[float, np.ndarray, Sequence[float]]

QUAD_TOL = 1e-10
CONVEXITY_TOL = 1e-9
LIMIT_HIGH = 0.95
LIMIT_LOW = 0.05


class DomainError(ValueError):
    """Argument outside the mathematical domain of the operation."""


class UnsupportedOperation(TypeError):
    """Operation not defined for this regularizer kind."""


class RegularizerKind(str, enum.Enum):
    HARD = "hard"
    LINEAR = "linear"
    ENTROPIC = "entropic"
    TABULATED = "tabulated"


def check_pace(lam: float) -> float:
    """Validate a pace parameter and return it as a float."""
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0.0:
        raise DomainError(f"pace parameter must be positive and finite, got {lam}")
    return lam


@dataclass(frozen=True)
class RegularizerSpec:
    """A self-paced regularizer family at a fixed pace.

    Parameters
    ----------
    kind : RegularizerKind
        Regularizer family.
    lam : float
        Pace parameter, strictly positive.  Ignored by ``Tabulated``, whose
        table already fixes the weighting curve.
    table : tuple of ndarray, optional
        ``(l, v)`` samples for the ``Tabulated`` kind.  ``l`` must be
        strictly increasing and ``v`` in ``[0, 1]``.  Monotonicity of ``v`` is
        enforced by :meth:`tabulated` and :func:`load_table`, not here, so
        that :func:`check_sp_conditions` can be exercised on bad tables.
    """

    kind: RegularizerKind
    lam: float = 1.0
    table: Optional[tuple] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", RegularizerKind(self.kind))
        object.__setattr__(self, "lam", check_pace(self.lam))
        if self.kind is RegularizerKind.TABULATED:
            if self.table is None:
                raise ValueError("Tabulated regularizer requires a table")
            ls = np.asarray(self.table[0], dtype=float).copy()
            vs = np.asarray(self.table[1], dtype=float).copy()
            if ls.ndim != 1 or ls.shape != vs.shape or ls.size == 0:
                raise ValueError("table must be two non-empty 1-D arrays of equal length")
            if not (np.all(np.isfinite(ls)) and np.all(np.isfinite(vs))):
                raise ValueError("table entries must be finite")
            if np.any(np.diff(ls) <= 0):
                raise ValueError("table l values must be strictly increasing")
            if np.any(ls < 0):
                raise ValueError("table l values must be non-negative")
            if np.any((vs < 0) | (vs > 1)):
                raise ValueError("table v values must lie in [0, 1]")
            ls.setflags(write=False)
            vs.setflags(write=False)
            object.__setattr__(self, "table", (ls, vs))
        elif self.table is not None:
            raise ValueError(f"{self.kind.value} regularizer takes no table")

    @classmethod
    def tabulated(cls, l, v, lam: float = 1.0) -> "RegularizerSpec":
        """Build a Tabulated spec, rejecting tables with increasing ``v``."""
        v = np.asarray(v, dtype=float)
        if np.any(np.diff(v) > 0):
            raise ValueError("table v values must be non-increasing in l")
        return cls(RegularizerKind.TABULATED, lam, (l, v))

    @property
    def smooth(self) -> bool:
        """Whether ``v_star`` is continuous (``F`` continuously differentiable)."""
        return self.kind is not RegularizerKind.HARD

    def with_lambda(self, lam: float) -> "RegularizerSpec":
        return RegularizerSpec(self.kind, lam, self.table)

    def f(self, v):
        return f_value(self, v)

    def v_star(self, l):
        return v_star(self, l)

    def F(self, l):
        return F_value(self, l)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "lambda": self.lam}
        if self.table is not None:
            out["table"] = {"l": self.table[0].tolist(), "v": self.table[1].tolist()}
        return out


def _as_array(x, name: str, lo: float = 0.0, hi: float = np.inf):
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < lo) or np.any(arr > hi):
        raise DomainError(f"{name} must lie in [{lo}, {hi}]")
    return arr


def _unwrap(arr: np.ndarray, like):
    return float(arr) if np.ndim(like) == 0 else arr


def f_value(spec: RegularizerSpec, v: ArrayLike):
    """Evaluate the penalty ``f_lam(v)`` for weights ``v`` in ``[0, 1]``."""
    vs = _as_array(v, "v", 0.0, 1.0)
    lam = spec.lam
    if spec.kind is RegularizerKind.HARD:
        out = -lam * vs
    elif spec.kind is RegularizerKind.LINEAR:
        out = lam * (0.5 * vs**2 - vs)
    elif spec.kind is RegularizerKind.ENTROPIC:
        # xlogy gives 0 at v = 0, the continuous extension of v log v.
        out = lam * (xlogy(vs, vs) - vs)
    else:
        raise UnsupportedOperation("Tabulated regularizer has no closed-form f")
    return _unwrap(out, v)


def v_star(spec: RegularizerSpec, l: ArrayLike):
    """Optimal sample weight for loss ``l``.

    For the Hard kind the tie ``l == lam`` resolves to ``v = 1``.
    """
    ls = _as_array(l, "loss")
    lam = spec.lam
    if spec.kind is RegularizerKind.HARD:
        out = np.where(ls <= lam, 1.0, 0.0)
    elif spec.kind is RegularizerKind.LINEAR:
        out = np.maximum(0.0, 1.0 - ls / lam)
    elif spec.kind is RegularizerKind.ENTROPIC:
        out = np.exp(-ls / lam)
    else:
        tl, tv = spec.table
        out = np.interp(ls, tl, tv)
    return _unwrap(out, l)


def _F_tabulated(spec: RegularizerSpec, l: float) -> float:
    if l == 0.0:
        return 0.0
    tl, _ = spec.table
    brk = tl[(tl > 0) & (tl < l)]
    val, _ = integrate.quad(
        lambda t: float(np.interp(t, *spec.table)),
        0.0,
        l,
        points=brk if brk.size else None,
        epsabs=QUAD_TOL,
        epsrel=0.0,
        limit=max(50, 4 * brk.size + 50),
    )
    return val


def F_value(spec: RegularizerSpec, l: ArrayLike):
    """Evaluate ``F_lam(l) = integral_0^l v_star(t) dt``."""
    ls = _as_array(l, "loss")
    lam = spec.lam
    if spec.kind is RegularizerKind.HARD:
        out = np.minimum(ls, lam)
    elif spec.kind is RegularizerKind.LINEAR:
        out = np.where(ls <= lam, ls - ls**2 / (2.0 * lam), 0.5 * lam)
    elif spec.kind is RegularizerKind.ENTROPIC:
        out = -lam * np.expm1(-ls / lam)
    else:
        out = np.vectorize(lambda t: _F_tabulated(spec, float(t)), otypes=[float])(ls)
    return _unwrap(out, l)


def load_table(path: Union[str, Path], lam: float = 1.0) -> RegularizerSpec:
    """Load a Tabulated regularizer from a CSV with header ``l,v``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["l", "v"]:
            raise ValueError(f"{path}: expected header 'l,v'")
        rows = [(float(r["l"]), float(r["v"])) for r in reader]
    if not rows:
        raise ValueError(f"{path}: empty table")
    l, v = zip(*rows)
    return RegularizerSpec.tabulated(l, v, lam)


@dataclass
class ConditionReport:
    """Outcome of the three numerical regularizer axiom checks.

    Margins follow one convention: non-negative means satisfied.
    """

    condition1: Optional[bool]
    condition2: bool
    condition3: Optional[bool]
    worst_margins: dict
    violations: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c is not False for c in (self.condition1, self.condition2, self.condition3))

    def to_dict(self) -> dict:
        return {
            "condition1": self.condition1,
            "condition2": self.condition2,
            "condition3": self.condition3,
            "worst_margins": self.worst_margins,
            "violations": self.violations,
            "notes": self.notes,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _grid(values, name: str, positive: bool = False) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if np.any(np.diff(arr) < 0):
        raise ValueError(f"{name} must be sorted")
    if positive and np.any(arr <= 0):
        raise ValueError(f"{name} must be strictly positive")
    if np.any(arr < 0):
        raise ValueError(f"{name} must be non-negative")
    return arr


def check_sp_conditions(
    spec: RegularizerSpec,
    l_grid,
    lambda_grid,
    n_v: int = 1001,
    convexity_tol: float = CONVEXITY_TOL,
) -> ConditionReport:
    """Numerically check the three defining conditions of a regularizer.

    1. ``v -> f(v)`` convex on ``[0, 1]`` (second differences on ``n_v``
       points, tolerance ``convexity_tol``); skipped for Tabulated.
    2. ``l -> v_star(l)`` non-increasing with values in ``[0, 1]``, plus
       finite-grid stand-ins for the limits: ``v_star(l_min) >= 0.95`` at
       the largest pace and ``v_star(l_max) <= 0.05`` at the smallest pace.
    3. ``lam -> v_star(l)`` non-decreasing; skipped for Tabulated, which has
       no pace family.
    """
    ls = _grid(l_grid, "l_grid")
    lams = _grid(lambda_grid, "lambda_grid", positive=True)
    tabulated = spec.kind is RegularizerKind.TABULATED
    if tabulated:
        lams = lams[:1]
    margins: dict = {}
    violations: dict = {}
    notes: list = []

    # rows: pace, columns: loss
    V = np.vstack([v_star(spec.with_lambda(lam), ls) for lam in lams])

    cond1: Optional[bool] = None
    if tabulated:
        notes.append("condition1 skipped: Tabulated regularizer has no f")
    else:
        vgrid = np.linspace(0.0, 1.0, n_v)
        worst = np.inf
        for lam in lams:
            fv = f_value(spec.with_lambda(lam), vgrid)
            d2 = fv[:-2] - 2.0 * fv[1:-1] + fv[2:]
            j = int(np.argmin(d2))
            if d2[j] < worst:
                worst = float(d2[j])
                if worst < -convexity_tol:
                    violations["condition1"] = {"lambda": float(lam), "v": float(vgrid[j + 1])}
        margins["convexity"] = worst
        cond1 = worst >= -convexity_tol

    bounds = float(min(V.min(), 1.0 - V.max()))
    margins["bounds"] = bounds
    if ls.size > 1:
        dl = V[:, :-1] - V[:, 1:]
        mono_l = float(dl.min())
        if mono_l < 0:
            i, j = np.unravel_index(np.argmin(dl), dl.shape)
            violations["condition2"] = {
                "lambda": float(lams[i]),
                "pair": [[float(ls[j]), float(V[i, j])], [float(ls[j + 1]), float(V[i, j + 1])]],
            }
    else:
        mono_l = 0.0
    margins["monotone_in_l"] = mono_l
    margins["limit_small_loss"] = float(V[-1, 0] - LIMIT_HIGH)
    margins["limit_large_loss"] = float(LIMIT_LOW - V[0, -1])
    cond2 = (
        bounds >= 0
        and mono_l >= 0
        and margins["limit_small_loss"] >= 0
        and margins["limit_large_loss"] >= 0
    )
    if spec.kind is RegularizerKind.HARD and np.any(np.isin(ls, lams)):
        notes.append("Hard kind: grid hits l == lambda, where v_star is discontinuous (tie -> 1)")

    cond3: Optional[bool] = None
    if tabulated:
        notes.append("condition3 skipped: Tabulated regularizer has no pace family")
    else:
        if lams.size > 1:
            dlam = V[1:, :] - V[:-1, :]
            mono_lam = float(dlam.min())
            if mono_lam < 0:
                i, j = np.unravel_index(np.argmin(dlam), dlam.shape)
                violations["condition3"] = {
                    "l": float(ls[j]),
                    "pair": [[float(lams[i]), float(V[i, j])], [float(lams[i + 1]), float(V[i + 1, j])]],
                }
        else:
            mono_lam = 0.0
        margins["monotone_in_lambda"] = mono_lam
        cond3 = mono_lam >= 0 and bounds >= 0

    return ConditionReport(cond1, bool(cond2), cond3, margins, violations, notes)
