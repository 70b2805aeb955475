"""Synthetic data, experiment configuration and end-to-end runs.

Config files are YAML.  Every field has a default except the data source
and, for generated data, the seed::

    seed: 0
    out: runs/standard
    data:
      generator: {N: 50, D: 5, noise_sigma: 0.1,
                  outlier_fraction: 0.2, outlier_magnitude: 10.0}
      # or: path: data.csv
    problem:
      loss: squared            # squared | logistic
      mu: 1.0
      regularizer:
        kind: entropic         # hard | linear | entropic | tabulated
        lambda: {percentile: 70}   # or a number
        # table: table.csv     # tabulated only
    w0: zeros                  # or a list of D numbers
    solvers:
      - scheme: aos            # aos | mm | inexact-mm
        inner: {method: closed_form}
      - scheme: mm
      - scheme: inexact-mm
        error_schedule: {rule: geometric, eps0: 1.0e-2, rho: 0.5}
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import yaml

from . import __version__
from .diagnostics import CertificationReport, certify_equivalence, certify_trace
from .models import Dataset, LossKind, Problem, load_dataset, losses, save_dataset
from .regularizers import RegularizerKind, RegularizerSpec, check_pace, load_table
from .solvers import (
    ArmijoParams,
    ErrorSchedule,
    InnerMethod,
    InnerSolverConfig,
    IterateTrace,
    Scheme,
    SolverConfig,
    SolverError,
    solve,
    w_step,
)

__all__ = [
    "RNG_ALGORITHM",
    "GeneratorSpec",
    "GroundTruth",
    "generate",
    "resolve_lambda",
    "ExperimentConfig",
    "RunResult",
    "RunError",
    "build_problem",
    "solver_from_dict",
    "run",
    "sweep",
]

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"
DEFAULT_PERCENTILE = 70.0


@dataclass(frozen=True)
class GeneratorSpec:
    N: int = 50
    D: int = 5
    true_w: Optional[tuple] = None
    noise_sigma: float = 0.1
    outlier_fraction: float = 0.2
    outlier_magnitude: float = 10.0

    def __post_init__(self):
        if self.N < 1 or self.D < 1:
            raise ValueError("N and D must be positive")
        if self.true_w is not None:
            tw = tuple(float(c) for c in self.true_w)
            if len(tw) != self.D:
                raise ValueError(f"true_w has {len(tw)} entries, expected D={self.D}")
            object.__setattr__(self, "true_w", tw)
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not 0 <= self.outlier_fraction < 1:
            raise ValueError("outlier_fraction must lie in [0, 1)")
        if self.outlier_magnitude <= 0:
            raise ValueError("outlier_magnitude must be positive")
        if self.N < self.D:
            warnings.warn(f"N={self.N} < D={self.D}: the regression is underdetermined", stacklevel=2)


@dataclass
class GroundTruth:
    true_w: np.ndarray
    outlier_indices: List[int]
    outlier_signs: List[int]
    seed: int
    spec: GeneratorSpec

    def to_dict(self) -> dict:
        spec = asdict(self.spec)
        spec["true_w"] = list(spec["true_w"]) if spec["true_w"] is not None else None
        return {
            "true_w": [float(c) for c in self.true_w],
            "outlier_indices": self.outlier_indices,
            "outlier_signs": self.outlier_signs,
            "n_outliers": len(self.outlier_indices),
            "seed": self.seed,
            "rng": RNG_ALGORITHM,
            "generator": spec,
        }


def generate(spec: GeneratorSpec, seed: int):
    """Draw a linear-regression dataset with gross outliers.

    Features are standard normal, targets ``x.true_w + noise``, and a
    ``floor(outlier_fraction * N)`` subset of targets is shifted by
    ``+-outlier_magnitude``.  Deterministic per seed.

    Returns
    -------
    dataset : Dataset
    truth : GroundTruth
    """
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    if spec.true_w is None:
        true_w = rng.standard_normal(spec.D)
    else:
        true_w = np.array(spec.true_w, dtype=float)
    X = rng.standard_normal((spec.N, spec.D))
    y = X @ true_w
    if spec.noise_sigma > 0:
        y = y + spec.noise_sigma * rng.standard_normal(spec.N)
    n_out = math.floor(spec.outlier_fraction * spec.N)
    idx = np.sort(rng.choice(spec.N, size=n_out, replace=False)) if n_out else np.array([], dtype=int)
    signs = rng.choice([-1, 1], size=n_out) if n_out else np.array([], dtype=int)
    y[idx] += signs * spec.outlier_magnitude
    truth = GroundTruth(true_w, [int(i) for i in idx], [int(s) for s in signs], int(seed), spec)
    return Dataset(X, y), truth


def resolve_lambda(rule, problem: Problem, w0) -> float:
    """Turn a pace rule into a pace value.

    ``rule`` is a number (used as is) or ``{"percentile": p}``, meaning the
    ``p``-th percentile (linear interpolation) of the losses at ``w0``.
    """
    if isinstance(rule, dict):
        if set(rule) != {"percentile"}:
            raise ValueError(f"unknown lambda rule {rule}")
        p = float(rule["percentile"])
        if not 0 < p < 100:
            raise ValueError("percentile must lie in (0, 100)")
        l0 = losses(problem, w0)
        if np.ptp(l0) == 0:
            warnings.warn("all initial losses are identical; percentile rule returns their common value", stacklevel=2)
        return check_pace(np.percentile(l0, p))
    return check_pace(rule)


def _inner_from_dict(d: Optional[dict], scheme: Scheme, loss: LossKind) -> InnerSolverConfig:
    d = dict(d or {})
    if "method" not in d:
        gd = scheme is Scheme.INEXACT_MM or loss is LossKind.LOGISTIC
        d["method"] = InnerMethod.GRADIENT_DESCENT if gd else InnerMethod.CLOSED_FORM
    armijo = ArmijoParams(**{k: float(v) for k, v in (d.pop("armijo", None) or {}).items()})
    return InnerSolverConfig(
        method=InnerMethod(d.pop("method")),
        grad_tol=float(d.pop("grad_tol", InnerSolverConfig.grad_tol)),
        max_inner_iters=int(d.pop("max_inner_iters", InnerSolverConfig.max_inner_iters)),
        armijo=armijo,
        **d,
    )


def solver_from_dict(d: dict, loss: LossKind) -> SolverConfig:
    d = dict(d)
    scheme = Scheme(d.pop("scheme", "aos"))
    sched = d.pop("error_schedule", None)
    if sched is None and scheme is Scheme.INEXACT_MM:
        sched = {}
    if sched is not None:
        sched = dict(sched)
        sched = ErrorSchedule(
            rule=sched.pop("rule", "geometric"),
            **{k: float(v) for k, v in sched.items()},
        )
    return SolverConfig(
        scheme=scheme,
        max_outer_iters=int(d.pop("max_outer_iters", 500)),
        outer_tol=float(d.pop("outer_tol", 1e-10)),
        min_outer_iters=int(d.pop("min_outer_iters", 0)),
        inner=_inner_from_dict(d.pop("inner", None), scheme, loss),
        error_schedule=sched,
        **d,
    )


def _solver_to_dict(cfg: SolverConfig) -> dict:
    d = {
        "scheme": cfg.scheme.value,
        "max_outer_iters": cfg.max_outer_iters,
        "outer_tol": cfg.outer_tol,
        "min_outer_iters": cfg.min_outer_iters,
        "inner": {
            "method": cfg.inner.method.value,
            "grad_tol": cfg.inner.grad_tol,
            "max_inner_iters": cfg.inner.max_inner_iters,
            "armijo": asdict(cfg.inner.armijo),
        },
    }
    if cfg.error_schedule is not None:
        d["error_schedule"] = cfg.error_schedule.to_dict()
    return d


@dataclass
class ExperimentConfig:
    """Parsed experiment configuration (see module docstring for the schema)."""

    seed: Optional[int] = None
    out: Optional[str] = None
    data_path: Optional[str] = None
    generator: Optional[GeneratorSpec] = None
    loss: LossKind = LossKind.SQUARED
    mu: float = 1.0
    regularizer_kind: RegularizerKind = RegularizerKind.ENTROPIC
    lambda_rule: object = field(default_factory=lambda: {"percentile": DEFAULT_PERCENTILE})
    table_path: Optional[str] = None
    w0: Optional[list] = None
    solvers: List[SolverConfig] = field(default_factory=list)
    base_dir: Path = field(default=Path("."), repr=False)

    def __post_init__(self):
        self.loss = LossKind(self.loss)
        self.regularizer_kind = RegularizerKind(self.regularizer_kind)
        if (self.data_path is None) == (self.generator is None):
            raise ValueError("exactly one data source (path or generator) is required")
        if self.generator is not None and self.seed is None:
            raise ValueError("a seed is required for generated data")
        if self.regularizer_kind is RegularizerKind.TABULATED and self.table_path is None:
            raise ValueError("tabulated regularizer needs a table path")
        if not self.solvers:
            self.solvers = [
                solver_from_dict({"scheme": "aos"}, self.loss),
                solver_from_dict({"scheme": "mm"}, self.loss),
            ]

    @classmethod
    def from_dict(cls, d: dict, base_dir: Union[str, Path] = ".") -> "ExperimentConfig":
        d = copy.deepcopy(d or {})
        data = d.get("data") or {}
        gen = data.get("generator")
        if gen is not None:
            gen = dict(gen)
            for k in ("noise_sigma", "outlier_fraction", "outlier_magnitude"):
                if k in gen:
                    gen[k] = float(gen[k])
            gen = GeneratorSpec(**gen)
        prob = d.get("problem") or {}
        reg = prob.get("regularizer") or {}
        loss = LossKind(prob.get("loss", "squared"))
        lam = reg.get("lambda", {"percentile": DEFAULT_PERCENTILE})
        if not isinstance(lam, dict):
            lam = float(lam)
        w0 = d.get("w0")
        if w0 in (None, "zeros"):
            w0 = None
        return cls(
            seed=d.get("seed"),
            out=d.get("out"),
            data_path=data.get("path"),
            generator=gen,
            loss=loss,
            mu=float(prob.get("mu", 1.0)),
            regularizer_kind=RegularizerKind(reg.get("kind", "entropic")),
            lambda_rule=lam,
            table_path=reg.get("table"),
            w0=[float(c) for c in w0] if w0 is not None else None,
            solvers=[solver_from_dict(s, loss) for s in d.get("solvers") or []],
            base_dir=Path(base_dir),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(yaml.safe_load(path.read_text()), base_dir=path.parent)

    def to_dict(self) -> dict:
        data = {"path": self.data_path} if self.data_path else {"generator": asdict(self.generator)}
        if self.generator is not None and self.generator.true_w is not None:
            data["generator"]["true_w"] = list(self.generator.true_w)
        reg = {"kind": self.regularizer_kind.value, "lambda": self.lambda_rule}
        if self.table_path:
            reg["table"] = self.table_path
        return {
            "seed": self.seed,
            "out": self.out,
            "data": data,
            "problem": {"loss": self.loss.value, "mu": self.mu, "regularizer": reg},
            "w0": self.w0 if self.w0 is not None else "zeros",
            "solvers": [_solver_to_dict(s) for s in self.solvers],
        }

    def _resolve(self, p: Optional[str]) -> Optional[Path]:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def build_problem(config: ExperimentConfig):
    """Materialize the dataset and problem described by ``config``.

    Returns
    -------
    problem : Problem
        With the pace parameter resolved.
    w0 : ndarray
    truth : GroundTruth or None
    """
    truth = None
    if config.generator is not None:
        dataset, truth = generate(config.generator, config.seed)
    else:
        dataset = load_dataset(config._resolve(config.data_path), config.loss)
    w0 = np.zeros(dataset.n_features) if config.w0 is None else np.array(config.w0, dtype=float)

    if config.regularizer_kind is RegularizerKind.TABULATED:
        reg = load_table(config._resolve(config.table_path))
        problem = Problem(dataset, config.loss, config.mu, reg)
        return problem, problem.check_w(w0), truth

    placeholder = Problem(dataset, config.loss, config.mu, RegularizerSpec(config.regularizer_kind, 1.0))
    w0 = placeholder.check_w(w0)
    lam = resolve_lambda(config.lambda_rule, placeholder, w0)
    return placeholder.with_regularizer(RegularizerSpec(config.regularizer_kind, lam)), w0, truth


def _baseline(problem: Problem, w0) -> np.ndarray:
    """Plain ridge fit: every sample weight fixed at one."""
    ones = np.ones(problem.dataset.n_samples)
    if problem.loss is LossKind.SQUARED and problem.mu > 0:
        inner = InnerSolverConfig(InnerMethod.CLOSED_FORM)
    else:
        inner = InnerSolverConfig(InnerMethod.GRADIENT_DESCENT)
    return w_step(problem, ones, w0, inner)[0]


class RunError(RuntimeError):
    def __init__(self, msg: str, manifest: List[str]):
        super().__init__(msg)
        self.manifest = manifest


@dataclass
class RunResult:
    problem: Problem
    w0: np.ndarray
    traces: Dict[str, IterateTrace]
    reports: Dict[str, CertificationReport]
    truth: Optional[GroundTruth] = None
    artifacts: List[str] = field(default_factory=list)

    @property
    def verdict(self) -> bool:
        return all(r.verdict for r in self.reports.values())

    def summary_rows(self) -> List[dict]:
        rows = []
        for name, tr in self.traces.items():
            row = {"scheme": name, **tr.summary(), "verdict": self.reports[name].verdict}
            if self.truth is not None:
                row["w_error"] = float(np.linalg.norm(tr.w_final - self.truth.true_w))
            rows.append(row)
        return rows


def _execute(config: ExperimentConfig, problem: Problem, w0, truth) -> RunResult:
    traces: Dict[str, IterateTrace] = {}
    reports: Dict[str, CertificationReport] = {}
    for cfg in config.solvers:
        name = cfg.scheme.value
        if name in traces:
            name = f"{name}-{sum(k.startswith(name) for k in traces) + 1}"
        traces[name] = solve(problem, w0, cfg)
        reports[name] = certify_trace(problem, traces[name])
    if "aos" in traces and "mm" in traces:
        eq = CertificationReport(checks=[certify_equivalence(traces["aos"], traces["mm"])])
        reports["equivalence"] = eq
    return RunResult(problem, w0, traces, reports, truth)


def _write_csv(path: Path, rows: Sequence[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run(config: ExperimentConfig, out: Union[str, Path, None] = None) -> RunResult:
    """Solve, certify and write every artifact of one experiment."""
    out = Path(out or config.out or "out")
    problem, w0, truth = build_problem(config)
    written: List[str] = []
    try:
        result = _execute(config, problem, w0, truth)
    except SolverError as exc:
        out.mkdir(parents=True, exist_ok=True)
        if exc.trace is not None and len(exc.trace):
            exc.trace.write(out / "trace_partial.csv")
            written.append("trace_partial.csv")
        _dump(out / "manifest.json", {"status": "failed", "error": str(exc), "artifacts": written})
        raise

    def emit(name: str, writer):
        writer(out / name)
        written.append(name)

    try:
        out.mkdir(parents=True, exist_ok=True)
        emit("dataset.csv", lambda p: save_dataset(problem.dataset, p))
        if truth is not None:
            emit("ground_truth.json", lambda p: _dump(p, truth.to_dict()))
        for name, tr in result.traces.items():
            emit(f"trace_{name}.csv", lambda p, tr=tr: tr.write(p))
            written.append(f"trace_{name}.json")
        for name, rep in result.reports.items():
            emit(f"report_{name}.json", lambda p, rep=rep: _dump(p, rep.to_dict()))
        emit("summary.csv", lambda p: _write_csv(p, result.summary_rows()))
        if truth is not None:
            w_base = _baseline(problem, w0)
            robust = {
                "baseline_ridge_error": float(np.linalg.norm(w_base - truth.true_w)),
                "spl_error": {n: float(np.linalg.norm(t.w_final - truth.true_w)) for n, t in result.traces.items()},
                "n_outliers": len(truth.outlier_indices),
            }
            emit("robustness.json", lambda p: _dump(p, robust))
        manifest = {
            "status": "ok",
            "version": __version__,
            "rng": RNG_ALGORITHM,
            "config": config.to_dict(),
            "resolved": {
                "regularizer": problem.regularizer.kind.value,
                "lambda": problem.regularizer.lam,
                "w0": [float(c) for c in w0],
            },
            "verdict": result.verdict,
            "artifacts": written + ["manifest.json"],
        }
        _dump(out / "manifest.json", manifest)
        written.append("manifest.json")
    except OSError as exc:
        raise RunError(f"failed writing artifacts to {out}: {exc}", written) from exc
    result.artifacts = written
    return result


SWEEP_PARAMS = ("lambda", "eps0")


def sweep(config: ExperimentConfig, param: str, values: Sequence[float]) -> List[dict]:
    """Re-solve over a grid of pace values or inexact error scales.

    Returns one summary row per (value, solver).
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    rows = []
    for value in values:
        cfg = copy.copy(config)
        if param == "lambda":
            cfg.lambda_rule = float(value)
        else:
            cfg.solvers = [
                SolverConfig(
                    scheme=s.scheme,
                    max_outer_iters=s.max_outer_iters,
                    outer_tol=s.outer_tol,
                    inner=s.inner,
                    error_schedule=ErrorSchedule(s.error_schedule.rule, float(value), s.error_schedule.rho, s.error_schedule.p),
                    min_outer_iters=s.min_outer_iters,
                )
                for s in config.solvers
                if s.scheme is Scheme.INEXACT_MM
            ]
            if not cfg.solvers:
                raise ValueError("eps0 sweep needs at least one inexact-mm solver in the config")
        problem, w0, truth = build_problem(cfg)
        result = _execute(cfg, problem, w0, truth)
        for row in result.summary_rows():
            rows.append({"param": param, "value": float(value), "lambda": problem.regularizer.lam, **row})
    return rows


def write_sweep(rows: Sequence[dict], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(path, rows)
