"""Monte Carlo harnesses: coupling checks, inclusion suites and p_c scans.

Sample ``i`` under base seed ``b`` uses ``sample_seed(b, i)``; models compared
within a sample share that seed, hence the same uniforms.  All work goes
through :func:`run_tasks`, which returns results in task order whatever the
worker count, so outputs are identical for any ``workers``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from .barrier import side_function_from_lfield, side_function_from_rfield, verify_barrier
from .cluster import depth_box, forward_cluster, l_field, r_field, ray_closure
from .environment import EnvironmentField, sample_seed
from .lattice import LatticeBox, Site
from .model import (
    ONE, ModelSpec, check_condition1, check_condition2, maximal_two_valued,
    minimal_two_valued, require, starred, to_fixed,
)

log = logging.getLogger(__name__)

BOOTSTRAP_RESAMPLES = 2000
_BOOT_SALT = 0x5DEECE66D


def run_tasks(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def _origin(spec: ModelSpec, origin) -> Site:
    return tuple(origin) if origin is not None else (0,) * spec.d


# --- star coupling -----------------------------------------------------------


@dataclass(frozen=True)
class CouplingVerdict:
    seed: int
    l_equal: bool
    compared: int  # lines stable in both runs
    skipped: int
    ray_equal: bool  # ray closure vs starred cluster on the clean lines
    ray_lines: int
    ray_equal_full_box: bool


def _coupling_sample(task) -> CouplingVerdict:
    spec, seed, window, depths, origin = task
    field0 = EnvironmentField(spec, seed)
    star = field0.with_spec(starred(spec))
    big = depth_box(origin, depths[-1])
    blk, blk_s = field0.block(big), star.block(big)
    L = l_field(blk, origin, window, depths)
    Ls = l_field(blk_s, origin, window, depths)
    both = L.stable & Ls.stable
    l_equal = bool(np.array_equal(L.values[both], Ls.values[both]))
    ray = ray_closure(forward_cluster(blk, origin, big), 1).membership
    cs = forward_cluster(blk_s, origin, big).membership
    full_equal = bool(np.array_equal(ray, cs))
    # compare whole e_1 lines of the largest box through the clean window lines
    ray_equal = True
    for y in window.sites():
        if not both[window.index(y)]:
            continue
        idx = (slice(None),) + tuple(y[a] - big.lo[a] for a in range(1, big.d))
        if not np.array_equal(ray[idx], cs[idx]):
            ray_equal = False
            break
    n = int(both.sum())
    return CouplingVerdict(seed, l_equal, n, int(both.size - n), ray_equal, n, full_equal)


def theorem1_test(spec: ModelSpec, window: LatticeBox, depths: Sequence[int], samples: int,
                  base_seed: int, origin=None, workers: int = 1) -> list[CouplingVerdict]:
    """Compare L fields (and filled-in clusters) of ``spec`` and ``starred(spec)``.

    Equality is only asserted on lines where both fields are stable.  At
    ``p = 0`` the two clusters genuinely differ; ``ray_equal_full_box``
    exposes that.
    """
    require(check_condition1(spec))
    o = _origin(spec, origin)
    depths = tuple(depths)
    tasks = [(spec, sample_seed(base_seed, i), window, depths, o) for i in range(samples)]
    return run_tasks(_coupling_sample, tasks, workers)


# --- inclusion suite ---------------------------------------------------------


@dataclass
class InclusionReport:
    samples: int
    checks: dict[str, int] = field(default_factory=dict)  # name -> violation count
    counterexamples: list[tuple[int, str, Site]] = field(default_factory=list)
    equalities: dict[str, int] = field(default_factory=dict)  # name -> samples with equality

    @property
    def passed(self) -> bool:
        return not self.counterexamples


INCLUSIONS = (
    ("minimal <= spec", "minimal", "spec"),
    ("spec <= starred", "spec", "starred"),
    ("spec <= half-orthant", "spec", "upper"),
    ("starred <= half-orthant", "starred", "upper"),
)


def _inclusion_sample(task):
    models, seed, box, origin = task
    base = EnvironmentField(models["spec"], seed)
    members = {
        name: forward_cluster(base.with_spec(m), origin, box).membership
        for name, m in models.items()
    }
    out = []
    for name, small, large in INCLUSIONS:
        bad = members[small] & ~members[large]
        site = None
        if bad.any():
            site = box.site(np.argwhere(bad)[0])
        out.append((name, site, bool(np.array_equal(members[small], members[large]))))
    return seed, out


def inclusion_suite(spec: ModelSpec, box: LatticeBox, samples: int, base_seed: int,
                    origin=None, workers: int = 1) -> InclusionReport:
    """Sandwich and star inclusions per shared-seed sample, zero tolerance."""
    require(check_condition1(spec))
    o = _origin(spec, origin)
    models = {
        "minimal": minimal_two_valued(spec),
        "spec": spec,
        "starred": starred(spec),
        "upper": maximal_two_valued(spec),
    }
    tasks = [(models, sample_seed(base_seed, i), box, o) for i in range(samples)]
    report = InclusionReport(samples, {n: 0 for n, _, _ in INCLUSIONS}, [], {n: 0 for n, _, _ in INCLUSIONS})
    for seed, results in run_tasks(_inclusion_sample, tasks, workers):
        for name, site, equal in results:
            if site is not None:
                report.checks[name] += 1
                report.counterexamples.append((seed, name, site))
            report.equalities[name] += equal
    return report


# --- transition scans --------------------------------------------------------


@dataclass(frozen=True)
class TransitionSample:
    seed: int
    barrier: bool  # window fully stable, extracted w verifies, w(o) <= 0
    l_origin_stable: bool
    l_coverage: float
    l_escape: float
    r_origin_stable: bool = False
    r_coverage: float = float("nan")
    r_barrier: bool = False


def _transition_sample(task) -> TransitionSample:
    spec, seed, window, depths, origin, with_r = task
    f = EnvironmentField(spec, seed)
    blk = f.block(depth_box(origin, depths[-1]))
    L = l_field(blk, origin, window, depths)
    oi = window.index(tuple(0 if a == 0 else origin[a] for a in range(spec.d)))
    barrier = False
    if L.fully_stable:
        w, _ = side_function_from_lfield(L)
        barrier = w(origin) <= 0 and verify_barrier(w, blk).passed
    esc = float(L.escape_rate()[oi])
    out = dict(seed=seed, barrier=barrier, l_origin_stable=bool(L.stable[oi]),
               l_coverage=L.coverage, l_escape=esc)
    if with_r:
        R = r_field(blk, origin, window, depths)
        r_barrier = False
        if R.fully_stable:
            w, _ = side_function_from_rfield(R)
            r_barrier = verify_barrier(w, blk).passed
        out.update(r_origin_stable=bool(R.stable[oi]), r_coverage=R.coverage, r_barrier=r_barrier)
    return TransitionSample(**out)


@dataclass(frozen=True)
class Crossing:
    estimate: float
    lo: float
    hi: float

    @property
    def half_width(self) -> float:
        return (self.hi - self.lo) / 2

    def agrees(self, other: "Crossing") -> bool:
        """Confidence intervals overlap."""
        return self.lo <= other.hi and other.lo <= self.hi


def crossing_point(grid: Sequence[float], fractions: Sequence[float], counts: Sequence[int],
                   level: float = 0.5) -> float:
    """``level`` crossing of the isotonic (non-decreasing) fit, linearly interpolated."""
    g = np.asarray(grid, dtype=float)
    fit = isotonic_regression(np.asarray(fractions, dtype=float),
                              weights=np.asarray(counts, dtype=float), increasing=True).x
    above = np.flatnonzero(fit >= level)
    if above.size == 0:
        return float("nan")
    i = int(above[0])
    if i == 0:
        return float(g[0])
    f0, f1 = fit[i - 1], fit[i]
    return float(g[i - 1] + (level - f0) / (f1 - f0) * (g[i] - g[i - 1]))


def bootstrap_crossing(grid, successes, counts, seed: int, resamples: int = BOOTSTRAP_RESAMPLES,
                       level: float = 0.5, alpha: float = 0.05) -> Crossing:
    """Crossing with a percentile bootstrap CI (samples resampled within each p)."""
    counts = np.asarray(counts)
    frac = np.asarray(successes) / np.maximum(counts, 1)
    est = crossing_point(grid, frac, counts, level)
    rng = np.random.Generator(np.random.PCG64(seed ^ _BOOT_SALT))
    boots = np.empty(resamples)
    for b in range(resamples):
        fb = rng.binomial(counts, frac) / np.maximum(counts, 1)
        boots[b] = crossing_point(grid, fb, counts, level)
    boots = boots[~np.isnan(boots)]
    if boots.size == 0:
        return Crossing(est, float("nan"), float("nan"))
    lo, hi = np.quantile(boots, [alpha / 2, 1 - alpha / 2])
    return Crossing(est, float(lo), float(hi))


def _wald(frac: float, n: int) -> float:
    return 1.96 * math.sqrt(max(frac * (1 - frac), 0.0) / n) if n else float("nan")


@dataclass
class ScanRow:
    p: float
    p_fixed: int
    samples: int
    barrier_frac: float
    barrier_hw: float
    l_stable_frac: float
    l_stable_hw: float
    mean_coverage: float
    mean_escape: float
    r_stable_frac: float = float("nan")
    r_stable_hw: float = float("nan")
    r_barrier_frac: float = float("nan")


@dataclass
class ScanResult:
    base_seed: int
    seed_rule: str
    rows: list[ScanRow]
    p_c: Crossing
    crossings: dict[str, Crossing]
    warnings: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        names = list(asdict(self.rows[0]).keys()) if self.rows else []
        out.writerow(names)
        for row in self.rows:
            out.writerow([_fmt(v) for v in asdict(row).values()])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["curve", "crossing", "ci_lo", "ci_hi", "base_seed", "seed_rule"])
        for name, c in self.crossings.items():
            out.writerow([name, _fmt(c.estimate), _fmt(c.lo), _fmt(c.hi), self.base_seed, self.seed_rule])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


SEED_RULE = "sample i of base b uses mix64(b + (i+1)*0x9E3779B97F4A7C15), same seeds at every p"


def scan_samples(spec: ModelSpec, grid: Sequence, window: LatticeBox, depths: Sequence[int],
                 samples: int, base_seed: int, origin=None, with_r: bool = False,
                 workers: int = 1) -> dict[int, list[TransitionSample]]:
    """Per-sample transition statistics for every grid point (keyed by fixed-point p)."""
    require(check_condition2(spec))
    o = _origin(spec, origin)
    depths = tuple(depths)
    ps = [to_fixed(p) for p in grid]
    if any(not 0 < p < ONE for p in ps):
        raise ValueError("scan grid must lie strictly inside (0, 1)")
    tasks = [
        (ModelSpec(spec.d, spec.E, spec.F, spec.r, spec.q, p), sample_seed(base_seed, i), window, depths, o, with_r)
        for p in ps for i in range(samples)
    ]
    results = run_tasks(_transition_sample, tasks, workers)
    return {p: results[j * samples:(j + 1) * samples] for j, p in enumerate(ps)}


def summarize_scan(per_p: dict[int, list[TransitionSample]], base_seed: int,
                   with_r: bool = False) -> ScanResult:
    rows = []
    for p, res in per_p.items():
        n = len(res)
        bf = sum(r.barrier for r in res) / n
        lf = sum(r.l_origin_stable for r in res) / n
        esc = [r.l_escape for r in res if not math.isnan(r.l_escape)]
        row = ScanRow(
            p=p / ONE, p_fixed=p, samples=n, barrier_frac=bf, barrier_hw=_wald(bf, n),
            l_stable_frac=lf, l_stable_hw=_wald(lf, n),
            mean_coverage=float(np.mean([r.l_coverage for r in res])),
            mean_escape=float(np.mean(esc)) if esc else float("nan"),
        )
        if with_r:
            rf = sum(r.r_origin_stable for r in res) / n
            row.r_stable_frac, row.r_stable_hw = rf, _wald(rf, n)
            row.r_barrier_frac = sum(r.r_barrier for r in res) / n
        rows.append(row)
    grid = [r.p for r in rows]
    counts = [r.samples for r in rows]

    def cross(attr):
        succ = [round(getattr(r, attr) * r.samples) for r in rows]
        return bootstrap_crossing(grid, succ, counts, base_seed)

    crossings = {"barrier": cross("barrier_frac"), "l_origin_stable": cross("l_stable_frac")}
    if with_r:
        crossings["r_origin_stable"] = cross("r_stable_frac")
        crossings["r_barrier"] = cross("r_barrier_frac")
    warnings = _monotonicity_warnings(rows)
    for w in warnings:
        log.warning(w)
    return ScanResult(base_seed, SEED_RULE, rows, crossings["barrier"], crossings, warnings)


def _monotonicity_warnings(rows: list[ScanRow]) -> list[str]:
    out = []
    for a, b in zip(rows, rows[1:]):
        noise = 3 * math.hypot(a.barrier_hw, b.barrier_hw) / 1.96 + 1e-12
        if b.barrier_frac < a.barrier_frac - noise:
            out.append(f"barrier fraction drops from {a.barrier_frac:.3f} at p={a.p:.4g} "
                       f"to {b.barrier_frac:.3f} at p={b.p:.4g} beyond noise")
    return out


def pc_scan(spec: ModelSpec, grid: Sequence, window: LatticeBox, depths: Sequence[int],
            samples: int, base_seed: int, origin=None, workers: int = 1) -> ScanResult:
    """Barrier-fraction curve over ``grid`` and its 50% crossing (the p_c estimate)."""
    per_p = scan_samples(spec, grid, window, depths, samples, base_seed, origin, False, workers)
    return summarize_scan(per_p, base_seed)


@dataclass
class BackwardComparison:
    scan: ScanResult
    l_crossing: Crossing
    r_crossing: Crossing

    @property
    def gap(self) -> float:
        return self.r_crossing.estimate - self.l_crossing.estimate

    @property
    def agree(self) -> bool:
        return self.l_crossing.agrees(self.r_crossing)

    def to_csv(self) -> str:
        return self.scan.to_csv()


def backward_transition_compare(spec: ModelSpec, grid: Sequence, window: LatticeBox,
                                depths: Sequence[int], samples: int, base_seed: int,
                                origin=None, workers: int = 1,
                                per_p: dict | None = None) -> BackwardComparison:
    """Forward (L) and backward (R) origin-line stability curves and their crossings."""
    if per_p is None:
        per_p = scan_samples(spec, grid, window, depths, samples, base_seed, origin, True, workers)
    scan = summarize_scan(per_p, base_seed, with_r=True)
    return BackwardComparison(scan, scan.crossings["l_origin_stable"], scan.crossings["r_origin_stable"])


# --- shape estimator ---------------------------------------------------------


@dataclass
class ZetaRow:
    n: int
    mean: float
    stderr: float
    stable: int
    samples: int

    @property
    def flagged(self) -> bool:
        return self.stable < self.samples


def _zeta_sample(task):
    spec, seed, window, depths, origin, points = task
    L = l_field(EnvironmentField(spec, seed), origin, window, depths)
    out = []
    for n, x in points:
        v, status = L.entry(x)
        out.append((n, v if status == "stable" else None))
    return out


def zeta_estimate(spec: ModelSpec, v: Sequence[int], p, n_list: Iterable[int], samples: int,
                  base_seed: int, depths: Sequence[int] | None = None, origin=None,
                  workers: int = 1) -> list[ZetaRow]:
    """Empirical ``L_{nv} / n`` per ``n``; unstable samples are dropped and flagged."""
    spec = spec.with_p(p) if not isinstance(p, int) else ModelSpec(spec.d, spec.E, spec.F, spec.r, spec.q, p)
    require(check_condition1(spec))
    v = tuple(v)
    if v[0] != 0:
        raise ValueError("v must lie on the hyperplane x_1 = 0")
    ns = sorted(set(int(n) for n in n_list))
    if not ns or ns[0] < 1:
        raise ValueError("n values must be positive")
    o = _origin(spec, origin)
    pts = [(n, tuple(o[a] + n * v[a] if a else 0 for a in range(spec.d))) for n in ns]
    lo = [min(x[a] for _, x in pts + [(0, (0,) + tuple(o[1:]))]) for a in range(spec.d)]
    hi = [max(x[a] for _, x in pts + [(0, (0,) + tuple(o[1:]))]) for a in range(spec.d)]
    window = LatticeBox(tuple(lo), tuple(hi))
    if depths is None:
        reach_ = max(max(abs(c - oc) for c, oc in zip(x, o)) for _, x in pts)
        depths = (2 * reach_ + 20, 4 * reach_ + 40)
    tasks = [(spec, sample_seed(base_seed, i), window, tuple(depths), o, pts) for i in range(samples)]
    per = run_tasks(_zeta_sample, tasks, workers)
    rows = []
    for j, n in enumerate(ns):
        vals = np.array([s[j][1] / n for s in per if s[j][1] is not None], dtype=float)
        k = vals.size
        rows.append(ZetaRow(
            n, float(vals.mean()) if k else float("nan"),
            float(vals.std(ddof=1) / math.sqrt(k)) if k > 1 else float("nan"), k, samples,
        ))
    return rows


def zeta_csv(rows: list[ZetaRow]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["n", "mean_L_over_n", "stderr", "stable_samples", "samples", "flagged"])
    for r in rows:
        out.writerow([r.n, _fmt(r.mean), _fmt(r.stderr), r.stable, r.samples, int(r.flagged)])
    return buf.getvalue()


def coupling_csv(verdicts: list[CouplingVerdict]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["seed", "l_equal", "compared", "skipped", "ray_equal", "ray_lines", "ray_equal_full_box"])
    for v in verdicts:
        out.writerow([v.seed, int(v.l_equal), v.compared, v.skipped, int(v.ray_equal), v.ray_lines,
                      int(v.ray_equal_full_box)])
    return buf.getvalue()


def inclusion_csv(report: InclusionReport) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["inclusion", "violations", "equal_samples", "samples"])
    for name, n in report.checks.items():
        out.writerow([name, n, report.equalities[name], report.samples])
    out.writerow([])
    out.writerow(["seed", "inclusion", "site"])
    for seed, name, site in report.counterexamples:
        out.writerow([seed, name, " ".join(map(str, site))])
    return buf.getvalue()


__all__ = [
    "theorem1_test", "inclusion_suite", "pc_scan", "backward_transition_compare",
    "zeta_estimate", "scan_samples", "summarize_scan", "crossing_point", "bootstrap_crossing",
    "Crossing", "ScanResult", "CouplingVerdict", "Fraction",
]
