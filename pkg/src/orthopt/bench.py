"""Benchmark harness: instance parsing, quality metrics, and multi-start runs.

All randomness flows from the experiment seed; start i draws from seed XOR i.
CSV artifacts are deterministic byte for byte for a fixed spec and seed, so
wall-clock timings are kept out of the files and only reported in memory.
"""

from __future__ import annotations

import concurrent.futures
import os
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .driver import (
    PenaltyConfig,
    RoundingError,
    SolveReport,
    alm_solve,
    penalty_solve,
    round_to_feasible,
)
from .problems import (
    AffinityInstance,
    GraphMatchingObjective,
    ProjectionObjective,
    QapInstance,
    QapLiftedObjective,
    random_stiefel_start,
)

SOLVERS = ("seppg_plus", "seppg_zero", "alm")
KINDS = ("qap", "gm", "proj")

_FLOAT_FMT = "%.17g"  # lossless float round-trip
_TOKEN = re.compile(rb"\S+")


class QaplibParseError(ValueError):
    """Malformed instance file; ``offset`` is the byte position of the fault."""

    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


def parse_qaplib(path) -> QapInstance:
    """Parse the de-facto QAPLIB format: n, then A row-major, then B row-major.

    Tokens are whitespace separated; token count must be exactly 1 + 2 n^2.
    """
    data = Path(path).read_bytes()
    tokens = _TOKEN.finditer(data)
    first = next(tokens, None)
    if first is None:
        raise QaplibParseError("empty instance file", 0)
    try:
        n = int(first.group())
    except ValueError:
        raise QaplibParseError(f"bad dimension token {first.group()!r}", first.start())
    if n <= 0:
        raise QaplibParseError(f"dimension must be positive, got {n}", first.start())

    need = 2 * n * n
    values = np.empty(need)
    count = 0
    for match in tokens:
        if count == need:
            raise QaplibParseError(
                f"expected {need + 1} tokens (1 + 2*{n}^2), found extra data",
                match.start(),
            )
        try:
            values[count] = float(match.group())
        except ValueError:
            raise QaplibParseError(f"bad numeric token {match.group()!r}", match.start())
        count += 1
    if count < need:
        raise QaplibParseError(
            f"expected {need + 1} tokens (1 + 2*{n}^2), found {count + 1}", len(data)
        )
    a = values[: n * n].reshape(n, n)
    b = values[n * n :].reshape(n, n)
    return QapInstance(a=a, b=b)


def format_qaplib(inst: QapInstance) -> str:
    """Serialize an instance in the same token stream the parser accepts."""
    lines = [str(inst.n)]
    for mat in (inst.a, inst.b):
        lines.extend(" ".join(_FLOAT_FMT % v for v in row) for row in mat)
    return "\n".join(lines) + "\n"


def load_best_known(path) -> dict[str, float]:
    """Read a sidecar of ``name value`` lines; '#' starts a comment."""
    out: dict[str, float] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"expected 'name value', got {raw!r}")
        out[parts[0]] = float(parts[1])
    return out


def load_dense_matrix(path) -> np.ndarray:
    """Whitespace-separated dense matrix, one row per line."""
    mat = np.loadtxt(path, dtype=float, ndmin=2)
    return mat


def save_dense_matrix(path, mat) -> None:
    Path(path).write_text(
        "\n".join(" ".join(_FLOAT_FMT % v for v in row) for row in np.asarray(mat)) + "\n"
    )


def relgap(f_final: float, best: float) -> float:
    """Percentage excess over the best known value: (f - best)/best * 100."""
    if best == 0:
        raise ValueError("relative gap is undefined for best == 0")
    return (f_final - best) / best * 100.0


def clustering_metrics(truth, pred, r: int) -> tuple[float, float, float]:
    """Purity, normalized entropy, and NMI of a predicted clustering.

    Labels are integers in [1, r]; zero-count terms drop out of every sum.
    Metrics depend only on the confusion counts, so they are invariant to
    relabeling of the prediction.
    """
    t = np.asarray(truth, dtype=int)
    p = np.asarray(pred, dtype=int)
    if t.ndim != 1 or t.shape != p.shape or t.size == 0:
        raise ValueError("truth and pred must be equal-length nonempty 1-d label vectors")
    for name, v in (("truth", t), ("pred", p)):
        if v.min() < 1 or v.max() > r:
            raise ValueError(f"{name} labels must lie in [1, {r}]")
    n = t.size
    counts = np.zeros((r, r))  # counts[i, j] = |truth cluster i  ∩  pred cluster j|
    np.add.at(counts, (t - 1, p - 1), 1.0)
    n_true = counts.sum(axis=1)
    n_pred = counts.sum(axis=0)

    pidx = float(counts.max(axis=0).sum() / n)

    if r == 1:
        eidx = 0.0
    else:
        acc = 0.0
        for i in range(r):
            for j in range(r):
                c = counts[i, j]
                if c > 0:
                    acc += c * np.log2(c / n_pred[j])
        eidx = float(-acc / (n * np.log2(r))) + 0.0  # normalize signed zero

    mutual = 0.0
    for i in range(r):
        for j in range(r):
            c = counts[i, j]
            if c > 0:
                mutual += (c / n) * np.log2((n * c) / (n_true[i] * n_pred[j]))
    # log2(n/c) rather than -log2(c/n): bitwise identical to the mutual terms
    # on a perfect confusion matrix, so NMI is exactly 1 there
    h_true = sum((c / n) * np.log2(n / c) for c in n_true if c > 0)
    h_pred = sum((c / n) * np.log2(n / c) for c in n_pred if c > 0)
    denom = max(h_true, h_pred)
    nmi = float(mutual / denom) if denom > 0 else 1.0
    return pidx, eidx, nmi


@dataclass
class ExperimentSpec:
    """A multi-start experiment on one instance.

    ``config`` overrides the solver-specific default penalty configuration;
    ``mu0`` only applies to the alm solver. Start i uses seed XOR i.
    """

    kind: str
    name: str
    instance: object
    solver: str = "seppg_plus"
    num_starts: int = 1
    seed: int = 0
    config: PenaltyConfig | None = None
    mu0: float | None = None
    best_known: float | None = None
    jobs: int = 1
    out_prefix: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.num_starts < 1:
            raise ValueError(f"num_starts must be at least 1, got {self.num_starts}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be at least 1, got {self.jobs}")


@dataclass
class StartRecord:
    """Raw outcome of one start; ``x_final`` stays in memory only."""

    index: int
    seed: int
    failed: bool
    error: str | None
    f_final: float | None
    f_rounded: float | None
    gap_pct: float | None
    rgap_pct: float | None
    ninf: float | None
    orth_residual: float | None
    stationarity: float | None
    outer_iters: int | None
    inner_iters: int | None
    wall_time: float | None
    x_final: np.ndarray | None = None
    report: SolveReport | None = None


@dataclass
class MetricsRow:
    """Aggregate of one experiment; gap fields stay None without a bound."""

    name: str
    solver: str
    num_starts: int
    failures: int
    min_gap_pct: float | None
    med_gap_pct: float | None
    rmed_gap_pct: float | None
    mean_ninf: float
    mean_orth_residual: float
    mean_wall_time: float
    records: list = field(default_factory=list)

    def __post_init__(self):
        if (
            self.min_gap_pct is not None
            and self.med_gap_pct is not None
            and self.med_gap_pct < self.min_gap_pct - 1e-12
        ):
            raise ValueError("median gap cannot be below the minimum gap")


def _problem_setup(spec: ExperimentSpec):
    if spec.kind == "qap":
        inst: QapInstance = spec.instance
        return QapLiftedObjective(inst), inst.n, inst.n
    if spec.kind == "gm":
        aff: AffinityInstance = spec.instance
        return GraphMatchingObjective(aff), aff.n, aff.n
    target = np.asarray(spec.instance, dtype=float)
    return ProjectionObjective(target), target.shape[0], target.shape[1]


def default_config(spec: ExperimentSpec) -> PenaltyConfig:
    """Solver- and problem-appropriate penalty configuration."""
    if spec.config is not None:
        return spec.config
    maker = PenaltyConfig.quadratic if spec.solver == "seppg_zero" else PenaltyConfig.envelope
    if spec.kind == "proj":
        target = np.asarray(spec.instance, dtype=float)
        scale = float(np.linalg.norm(target, 2))
        return maker(rho0=1.0 / scale if scale > 0 else 1.0)
    return maker()


def default_mu0(spec: ExperimentSpec) -> float:
    if spec.mu0 is not None:
        return spec.mu0
    if spec.kind == "proj":
        target = np.asarray(spec.instance, dtype=float)
        scale = float(np.linalg.norm(target, 2))
        return 1.0 / scale if scale > 0 else 1.0
    return 10.0 if spec.kind == "qap" else 0.1


def _run_start(args) -> StartRecord:
    spec, index = args
    start_seed = spec.seed ^ index
    objective, n, r = _problem_setup(spec)
    x0 = random_stiefel_start(n, r, start_seed)
    try:
        if spec.solver == "alm":
            pgm_cfg = spec.config.pgm if spec.config is not None else None
            epsilon = spec.config.epsilon if spec.config is not None else 1e-6
            report = alm_solve(
                objective, x0, default_mu0(spec), pgm_cfg, epsilon=epsilon
            )
        else:
            report = penalty_solve(objective, x0, default_config(spec))
    except Exception as err:  # per-start failures are recorded, not fatal
        return StartRecord(
            index=index,
            seed=start_seed,
            failed=True,
            error=f"{type(err).__name__}: {err}",
            f_final=None,
            f_rounded=None,
            gap_pct=None,
            rgap_pct=None,
            ninf=None,
            orth_residual=None,
            stationarity=None,
            outer_iters=None,
            inner_iters=None,
            wall_time=None,
        )
    f_rounded = None
    rgap = None
    try:
        rounded = round_to_feasible(report.x_final.mat)
        f_rounded = objective.value(rounded.mat)
        if spec.best_known is not None:
            rgap = relgap(f_rounded, spec.best_known)
    except RoundingError:
        pass
    gap = relgap(report.f_final, spec.best_known) if spec.best_known is not None else None
    return StartRecord(
        index=index,
        seed=start_seed,
        failed=False,
        error=None,
        f_final=report.f_final,
        f_rounded=f_rounded,
        gap_pct=gap,
        rgap_pct=rgap,
        ninf=report.ninf,
        orth_residual=report.orth_residual,
        stationarity=report.stationarity,
        outer_iters=report.outer_iters,
        inner_iters=report.inner_iters_total,
        wall_time=report.wall_time,
        x_final=np.asarray(report.x_final.mat),
        report=report,
    )


def run_experiment(
    spec: ExperimentSpec, out_prefix: str | None = None, dump_x: bool = False
) -> MetricsRow:
    """Run ``num_starts`` independent seeded solves and aggregate the results.

    Failed starts are excluded from the aggregates and counted in
    ``failures``. With an output prefix (argument or ``spec.out_prefix``),
    writes ``<prefix>_summary.csv`` and ``<prefix>_starts.csv`` (and the final
    matrices with ``dump_x``); the CSV bytes are a deterministic function of
    (spec, seed).
    """
    if out_prefix is None:
        out_prefix = spec.out_prefix
    jobs = min(spec.jobs, spec.num_starts)
    tasks = [(spec, i) for i in range(spec.num_starts)]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_start, tasks))
    else:
        records = [_run_start(t) for t in tasks]
    records.sort(key=lambda rec: rec.index)

    good = [rec for rec in records if not rec.failed]
    failures = spec.num_starts - len(good)
    gaps = [rec.gap_pct for rec in good if rec.gap_pct is not None]
    rgaps = [rec.rgap_pct for rec in good if rec.rgap_pct is not None]
    row = MetricsRow(
        name=spec.name,
        solver=spec.solver,
        num_starts=spec.num_starts,
        failures=failures,
        min_gap_pct=min(gaps) if gaps else None,
        med_gap_pct=statistics.median(gaps) if gaps else None,
        rmed_gap_pct=statistics.median(rgaps) if rgaps else None,
        mean_ninf=float(np.mean([rec.ninf for rec in good])) if good else float("nan"),
        mean_orth_residual=(
            float(np.mean([rec.orth_residual for rec in good])) if good else float("nan")
        ),
        mean_wall_time=(
            float(np.mean([rec.wall_time for rec in good])) if good else float("nan")
        ),
        records=records,
    )
    if out_prefix is not None:
        write_summary_csv(f"{out_prefix}_summary.csv", [row])
        write_starts_csv(f"{out_prefix}_starts.csv", records)
        if dump_x:
            for rec in records:
                if rec.x_final is not None:
                    save_dense_matrix(f"{out_prefix}_x_start{rec.index}.txt", rec.x_final)
    return row


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return _FLOAT_FMT % value
    return str(value)


_SUMMARY_COLUMNS = (
    "instance",
    "solver",
    "starts",
    "failures",
    "min_gap_pct",
    "med_gap_pct",
    "rmed_gap_pct",
    "mean_ninf",
    "mean_orth_residual",
)

_START_COLUMNS = (
    "start",
    "seed",
    "failed",
    "error",
    "f_final",
    "f_rounded",
    "gap_pct",
    "rgap_pct",
    "ninf",
    "orth_residual",
    "stationarity",
    "outer_iters",
    "inner_iters",
)


def write_summary_csv(path, rows: list[MetricsRow]) -> None:
    """One line per experiment. Timings are intentionally not written; CSV
    bytes must be reproducible for identical specs and seeds."""
    lines = [",".join(_SUMMARY_COLUMNS)]
    for row in rows:
        lines.append(
            ",".join(
                _cell(v)
                for v in (
                    row.name,
                    row.solver,
                    row.num_starts,
                    row.failures,
                    row.min_gap_pct,
                    row.med_gap_pct,
                    row.rmed_gap_pct,
                    row.mean_ninf,
                    row.mean_orth_residual,
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_starts_csv(path, records: list[StartRecord]) -> None:
    lines = [",".join(_START_COLUMNS)]
    for rec in records:
        error = (rec.error or "").replace(",", ";").replace("\n", " ")
        lines.append(
            ",".join(
                _cell(v)
                for v in (
                    rec.index,
                    rec.seed,
                    rec.failed,
                    error,
                    rec.f_final,
                    rec.f_rounded,
                    rec.gap_pct,
                    rec.rgap_pct,
                    rec.ninf,
                    rec.orth_residual,
                    rec.stationarity,
                    rec.outer_iters,
                    rec.inner_iters,
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def default_jobs() -> int:
    return os.cpu_count() or 1


__all__ = [
    "ExperimentSpec",
    "MetricsRow",
    "QaplibParseError",
    "StartRecord",
    "clustering_metrics",
    "default_config",
    "default_mu0",
    "format_qaplib",
    "load_best_known",
    "load_dense_matrix",
    "parse_qaplib",
    "relgap",
    "run_experiment",
    "save_dense_matrix",
    "write_starts_csv",
    "write_summary_csv",
]
