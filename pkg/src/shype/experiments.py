"""Ensembles of stochastic runs, parameter sweeps and CSV export."""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .flatten import FlatSystem, flatten
from .model import Model
from .sim import SimConfig, derive_rng, simulate

__all__ = ["Observable", "FinalSum", "EnsembleSummary", "BatchResult", "BatchError", "SweepSpec",
           "SweepTable", "run_batch", "sweep", "export", "gnuplot_script", "Z95"]

Z95 = 1.96


class FinalSum:
    """Sum of continuous variables at time ``at`` (default: the end of the run).

    A plain class rather than a closure so that observables can be sent to
    worker processes.
    """

    def __init__(self, variables, at=None):
        self.variables = [variables] if isinstance(variables, str) else list(variables)
        self.at = at

    def __call__(self, traj) -> float:
        state = traj.final if self.at is None else traj.state_at(self.at)
        return float(sum(state[v] for v in self.variables))

    def __repr__(self):
        return f"FinalSum({self.variables!r}, at={self.at!r})"


@dataclass(frozen=True)
class Observable:
    name: str
    extractor: object  # Trajectory -> float

    @classmethod
    def final(cls, name, variables, at=None):
        return cls(name, FinalSum(variables, at))

    def __call__(self, traj) -> float:
        return float(self.extractor(traj))


@dataclass(frozen=True)
class EnsembleSummary:
    name: str
    n: int
    mean: float
    sd: float
    halfwidth: float

    @property
    def ci(self) -> tuple[float, float]:
        return self.mean - self.halfwidth, self.mean + self.halfwidth

    @classmethod
    def from_values(cls, name, values) -> "EnsembleSummary":
        """Mean, sample sd and the normal 95% halfwidth 1.96 sd / sqrt(N)."""
        v = np.asarray(values, dtype=float)
        n = v.size
        if n == 0:
            raise ValueError("no values to summarise")
        mean = float(np.mean(v))
        sd = float(np.std(v, ddof=1)) if n > 1 else 0.0
        if sd < 1e-12 * max(1.0, abs(mean)):
            sd = 0.0  # rounding noise of identical values
        return cls(name, n, mean, sd, Z95 * sd / math.sqrt(n))

    def overlaps(self, other: "EnsembleSummary") -> bool:
        lo, hi = self.ci
        olo, ohi = other.ci
        return lo <= ohi and olo <= hi


class BatchError(RuntimeError):
    def __init__(self, message, index=None, value=None):
        super().__init__(message)
        self.index = index
        self.value = value


@dataclass
class BatchResult:
    observables: list  # names, in order
    raw: np.ndarray  # (N, #observables), row i from run i
    summaries: dict = field(default_factory=dict)
    wall_times: np.ndarray | None = None

    def __getitem__(self, name) -> EnsembleSummary:
        return self.summaries[name]

    @property
    def n(self) -> int:
        return self.raw.shape[0]


def _run_chunk(flat, indices, seed, t_end, config, observables):
    rows, times = [], []
    for i in indices:
        try:
            traj = simulate(flat, t_end, config=config, rng=derive_rng(seed, i))
        except Exception as exc:  # noqa: BLE001 - reported with the run index
            raise BatchError(f"run {i} failed: {type(exc).__name__}: {exc}", index=i) from exc
        rows.append([o(traj) for o in observables])
        times.append(traj.wall_time)
    return rows, times


def run_batch(flat: FlatSystem, n: int, seed: int, observables, t_end: float,
              config: SimConfig | None = None, jobs: int = 1) -> BatchResult:
    """Run ``n`` simulations with streams ``derive_rng(seed, i)`` and summarise.

    With ``jobs > 1`` runs are spread over worker processes; results are
    collected in run order so summaries do not depend on scheduling.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    observables = list(observables)
    config = config or SimConfig()
    if jobs <= 1 or n == 1:
        rows, times = _run_chunk(flat, range(n), seed, t_end, config, observables)
    else:
        chunks = [list(range(k, n, jobs)) for k in range(jobs)]
        chunks = [c for c in chunks if c]
        out = [None] * n
        times_out = [0.0] * n
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_chunk, flat, c, seed, t_end, config, observables)
                       for c in chunks]
            for c, fut in zip(chunks, futures):
                r, tm = fut.result()
                for i, row, w in zip(c, r, tm):
                    out[i], times_out[i] = row, w
        rows, times = out, times_out
    raw = np.array(rows, dtype=float).reshape(n, len(observables))
    names = [o.name for o in observables]
    summaries = {name: EnsembleSummary.from_values(name, raw[:, k]) for k, name in enumerate(names)}
    return BatchResult(names, raw, summaries, np.array(times))


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    runs: int
    seed: int
    observables: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "observables", tuple(self.observables))
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("sweep values must be finite")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")


@dataclass
class SweepTable:
    parameter: str
    values: list
    results: list  # BatchResult per value
    series: str = ""

    def summary(self, observable: str) -> list[EnsembleSummary]:
        return [r[observable] for r in self.results]

    def means(self, observable: str) -> np.ndarray:
        return np.array([s.mean for s in self.summary(observable)])


def sweep(model: Model, spec: SweepSpec, t_end, config: SimConfig | None = None, jobs: int = 1,
          series: str = "", params: dict | None = None) -> SweepTable:
    """One batch per parameter value, re-flattening the model each time.

    ``t_end`` may be a number or a function of the parameter value.
    Every point reuses the same master seed (common random numbers).
    """
    if spec.parameter not in model.params:
        raise KeyError(f"model {model.name} has no parameter {spec.parameter}")
    values = sorted(spec.values)
    results = []
    for v in values:
        flat = flatten(model, {**(params or {}), spec.parameter: v})
        horizon = t_end(v) if callable(t_end) else t_end
        try:
            results.append(run_batch(flat, spec.runs, spec.seed, spec.observables, horizon,
                                     config, jobs))
        except BatchError as exc:
            raise BatchError(f"{spec.parameter}={v!r}: {exc}", exc.index, v) from exc
    return SweepTable(spec.parameter, values, results, series)


def _num(v) -> str:
    return repr(float(v))


def export(tables, out_dir, observables=None, prefix="") -> list[str]:
    """Write ``<prefix><observable>.csv`` per observable plus ``<prefix>raw.csv``.

    ``tables`` is a SweepTable or a list of them (one series each).
    Returns the written paths.
    """
    if isinstance(tables, SweepTable):
        tables = [tables]
    if observables is None:
        observables = tables[0].results[0].observables if tables and tables[0].results else []
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name in observables:
        path = os.path.join(out_dir, f"{prefix}{name}.csv")
        rows = [["series", "x", "mean", "ci_lo", "ci_hi", "n"]]
        for tb in tables:
            for x, res in zip(tb.values, tb.results):
                s = res[name]
                lo, hi = s.ci
                rows.append([tb.series, _num(x), _num(s.mean), _num(lo), _num(hi), s.n])
        _write_csv(path, rows)
        paths.append(path)
    path = os.path.join(out_dir, f"{prefix}raw.csv")
    rows = [["series", "x", "run"] + list(observables)]
    for tb in tables:
        for x, res in zip(tb.values, tb.results):
            cols = [res.observables.index(o) for o in observables]
            for i in range(res.n):
                rows.append([tb.series, _num(x), i] + [_num(res.raw[i, c]) for c in cols])
    _write_csv(path, rows)
    paths.append(path)
    return paths


def _write_csv(path, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def gnuplot_script(csv_path: str, series: list[str], xlabel: str, ylabel: str) -> str:
    """A gnuplot script drawing one error-bar curve per series of an observable CSV."""
    lines = ["set datafile separator ','", f"set xlabel '{xlabel}'", f"set ylabel '{ylabel}'",
             "set key top left"]
    plots = [f"'{csv_path}' using (strcol(1) eq '{s}' ? $2 : 1/0):3:4:5 "
             f"with yerrorlines title '{s}'" for s in series]
    lines.append("plot " + ", \\\n     ".join(plots) if plots else "# no series")
    return "\n".join(lines) + "\n"
