"""Numerical convergence certificates for self-paced solvers.

Every check reports a ``worst_margin``: the most adverse slack observed,
signed so that non-negative means the property held exactly.  A check
passes when ``worst_margin >= -tolerance``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .models import Problem, implicit_gradient, implicit_objective, surrogate
from .solvers import IterateTrace

__all__ = [
    "Check",
    "CertificationReport",
    "certify_majorization",
    "certify_descent",
    "certify_criticality",
    "certify_equivalence",
    "certify_level_set",
    "certify_lsc_limit",
    "certify_trace",
    "ASSUMPTIONS",
]

MAJORIZATION_TOL = 1e-9
DESCENT_TOL = 1e-10
LEVEL_SET_TOL = 1e-9
LSC_TOL = 1e-9
EQUIVALENCE_TOL = 1e-10

ASSUMPTIONS = [
    "outer semicontinuity of the MM step map holds by construction "
    "(continuous v*, smooth losses); not checked numerically",
    "cluster-point criticality is certified at the final iterate under the stopping rule",
]


@dataclass
class Check:
    name: str
    passed: bool
    worst_margin: float
    location: object = None
    tolerance: float = 0.0
    skipped: bool = False
    informational: bool = False
    note: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.worst_margin = float(self.worst_margin)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_margin"] = _json_float(self.worst_margin)
        return d


def _json_float(x):
    x = float(x)
    return x if np.isfinite(x) else str(x)


@dataclass
class CertificationReport:
    checks: List[Check] = field(default_factory=list)
    assumptions: List[str] = field(default_factory=lambda: list(ASSUMPTIONS))

    @property
    def verdict(self) -> bool:
        return all(c.passed or c.skipped or c.informational for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "checks": [c.to_dict() for c in self.checks],
            "verdict": self.verdict,
            "assumptions": self.assumptions,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def lines(self) -> List[str]:
        out = []
        for c in self.checks:
            status = "SKIP" if c.skipped else ("PASS" if c.passed else "FAIL")
            if c.informational and not c.skipped:
                status += " (informational)"
            out.append(f"{status:<22} {c.name:<24} margin={c.worst_margin:.3e} at {c.location}")
        return out


def _worst(slacks: np.ndarray):
    i = int(np.argmin(slacks))
    return float(slacks[i]), i


def certify_majorization(
    problem: Problem,
    anchors: Sequence,
    probes: Sequence,
    tol: float = MAJORIZATION_TOL,
    surrogate_fn: Optional[Callable] = None,
) -> Check:
    """Check ``U(w | a) >= G(w)`` on all probe/anchor pairs and ``U(a | a) = G(a)``.

    ``surrogate_fn(problem, w, anchor)`` replaces the built-in majorizer;
    it is there so the check itself can be tested against a broken one.
    """
    if len(anchors) == 0 or len(probes) == 0:
        raise ValueError("anchors and probes must be non-empty")
    U = surrogate_fn or surrogate
    G_probe = np.array([implicit_objective(problem, w) for w in probes])
    worst, loc = np.inf, None
    for i, a in enumerate(anchors):
        tangency = -abs(U(problem, a, a) - implicit_objective(problem, a))
        if tangency < worst:
            worst, loc = tangency, {"anchor": i, "probe": "tangent"}
        gaps = np.array([U(problem, w, a) for w in probes]) - G_probe
        m, j = _worst(gaps)
        if m < worst:
            worst, loc = m, {"anchor": i, "probe": j}
    return Check("majorization", worst >= -tol, worst, loc, tol)


def certify_descent(trace: IterateTrace, mode: str = "exact", tol: float = DESCENT_TOL) -> Check:
    """Monotonicity of ``G_k`` (exact) or of ``G_k + r_k`` (adjusted)."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    G = np.asarray(trace.G, dtype=float)
    if mode == "adjusted":
        if not trace.has_errors or len(trace.r) != len(G):
            raise ValueError("adjusted descent needs a trace with error-budget data")
        G = G + np.asarray(trace.r, dtype=float)
    elif mode != "exact":
        raise ValueError(f"unknown descent mode {mode!r}")
    if len(G) < 2:
        return Check(f"descent_{mode}", True, 0.0, None, tol)
    m, i = _worst(G[:-1] - G[1:])
    return Check(f"descent_{mode}", m >= -tol, m, i + 1, tol)


def certify_criticality(problem: Problem, w_final, tol: float) -> Check:
    """``|grad G(w_final)| <= tol``; skipped for non-smooth regularizers."""
    if not problem.regularizer.smooth:
        return Check(
            "criticality", False, float("nan"), None, tol, skipped=True,
            note=f"{problem.regularizer.kind.value} regularizer: descent-only certified",
        )
    gnorm = float(np.linalg.norm(implicit_gradient(problem, w_final)))
    return Check("criticality", gnorm <= tol, -gnorm, "final", tol)


def certify_equivalence(trace_a: IterateTrace, trace_b: IterateTrace, tol: float = EQUIVALENCE_TOL) -> Check:
    """Elementwise agreement of two iterate sequences (and their weights)."""
    n = min(len(trace_a), len(trace_b))
    note = ""
    if len(trace_a) != len(trace_b):
        note = f"truncated to {n} rows (lengths {len(trace_a)} and {len(trace_b)})"
    dw = np.abs(np.vstack(trace_a.w[:n]) - np.vstack(trace_b.w[:n])).max(axis=1)
    if trace_a.v and trace_b.v:
        dv = np.abs(np.vstack(trace_a.v[:n]) - np.vstack(trace_b.v[:n])).max(axis=1)
        dw = np.maximum(dw, dv)
    else:
        note = (note + "; " if note else "") + "weights unavailable, compared iterates only"
    m, k = _worst(-dw)
    return Check("equivalence", m >= -tol, m, k, tol, note=note)


def certify_level_set(trace: IterateTrace, problem: Optional[Problem] = None, tol: float = LEVEL_SET_TOL) -> Check:
    """Every ``G_k <= G(w_0) + sum_j eps_j``.

    ``G(w_0)`` is recomputed from ``problem`` when given, otherwise taken
    from the trace.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    G0 = implicit_objective(problem, trace.w[0]) if problem is not None else trace.G[0]
    budget = G0 + (trace.eps_total if trace.has_errors else 0.0)
    m, k = _worst(budget - np.asarray(trace.G, dtype=float))
    return Check("level_set", m >= -tol, m, k, tol)


def certify_lsc_limit(values: Iterable[float], limit_candidate: float, tol: float = LSC_TOL) -> Check:
    """Non-increasing sequence whose last value matches ``limit_candidate``."""
    vals = np.asarray(list(values), dtype=float)
    if vals.size < 2:
        raise ValueError("need at least two values")
    mono, i = _worst(vals[:-1] - vals[1:])
    gap = -abs(vals[-1] - limit_candidate)
    if gap < mono:
        m, loc = gap, "limit"
    else:
        m, loc = mono, i + 1
    return Check("lsc_limit", m >= -tol, m, loc, tol)


def certify_trace(
    problem: Problem,
    trace: IterateTrace,
    crit_tol: Optional[float] = None,
    anchors: Optional[Sequence] = None,
    probes: Optional[Sequence] = None,
    rng: Optional[np.random.Generator] = None,
    n_probes: int = 100,
) -> CertificationReport:
    """Full report for one trace.

    Majorization is checked with the trace iterates as anchors and random
    probes in ``[-3, 3]^D`` (plus the iterates themselves).  For inexact
    traces the exact-descent check is informational and the lsc-limit
    check runs on ``G_k + r_k``.
    """
    report = CertificationReport()
    if anchors is None:
        anchors = trace.w
    if probes is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        probes = list(rng.uniform(-3.0, 3.0, size=(n_probes, problem.dim))) + list(trace.w)
    report.add(certify_majorization(problem, anchors, probes))

    exact = certify_descent(trace, "exact")
    if trace.has_errors:
        exact.informational = True
        report.add(exact)
        report.add(certify_descent(trace, "adjusted"))
    else:
        report.add(exact)

    if crit_tol is None:
        crit_tol = 1e-5 if trace.has_errors else 1e-6
    report.add(certify_criticality(problem, trace.w_final, crit_tol))
    report.add(certify_level_set(trace, problem))

    values = np.asarray(trace.G, dtype=float)
    if trace.has_errors:
        values = values + np.asarray(trace.r, dtype=float)
    limit = implicit_objective(problem, trace.w_final) + (trace.r[-1] if trace.has_errors else 0.0)
    report.add(certify_lsc_limit(values, limit) if len(values) > 1 else Check("lsc_limit", True, 0.0, None, LSC_TOL))
    if trace.has_errors:
        report.assumptions.append("inexact steps certified on U(.|w_k-1) and equivalently on E(.,v_k): both equal the weighted w-step objective plus a constant in w")
    return report
