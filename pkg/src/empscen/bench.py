"""Gaussian-mixture benchmark: data generation, algorithm sweeps and metrics."""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .baselines import extract_ghtp, extract_lasserre, extract_maxvol
from .errors import ConfigError, ScenarioError
from .extractors import covariance_scenarios, extract_scenarios
from .moments import basis_size, moment_matrix, relative_error, vandermonde
from .weights import AdmmConfig

ALGORITHMS = ("covariance", "omp", "maxvol", "ghtp", "lasserre")
COVARIANCE_MODES = ("random_pd", "identity")
MIXING_MODES = ("random", "equal")
# case id -> (covariance mode, mixing mode)
CASES = {1: ("random_pd", "random"), 2: ("random_pd", "equal"),
         3: ("identity", "random"), 4: ("identity", "equal")}
SCENARIO_THRESHOLD = 1e-8


@dataclass(frozen=True)
class GmmSpec:
    d: int
    clusters: int
    covariance_mode: str = "random_pd"
    mixing_mode: str = "random"
    n_samples: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.clusters < 1 or self.n_samples < 1:
            raise ConfigError("need d, clusters and n_samples >= 1")
        if self.covariance_mode not in COVARIANCE_MODES:
            raise ConfigError(f"covariance_mode must be one of {COVARIANCE_MODES}")
        if self.mixing_mode not in MIXING_MODES:
            raise ConfigError(f"mixing_mode must be one of {MIXING_MODES}")

    @property
    def case(self) -> int:
        return next(k for k, v in CASES.items() if v == (self.covariance_mode, self.mixing_mode))


def _positive_normal(rng, size):
    """N(1, 1) draws with non-positive values redrawn."""
    out = rng.normal(1.0, 1.0, size)
    bad = out <= 0
    while bad.any():
        out[bad] = rng.normal(1.0, 1.0, bad.sum())
        bad = out <= 0
    return out


@dataclass
class GmmParameters:
    means: np.ndarray          # (c, d)
    roots: np.ndarray          # (c, d, d), covariance_k = roots[k] @ roots[k].T
    proportions: np.ndarray    # (c,)

    @property
    def covariances(self) -> np.ndarray:
        return np.einsum("kij,klj->kil", self.roots, self.roots)


def _draw_parameters(spec: GmmSpec, rng) -> GmmParameters:
    d, c = spec.d, spec.clusters
    means = rng.uniform(-50.0, 50.0, (c, d))
    roots = np.empty((c, d, d))
    for k in range(c):
        if spec.covariance_mode == "identity":
            roots[k] = np.eye(d)
            continue
        U, R = np.linalg.qr(rng.standard_normal((d, d)))
        U *= np.sign(np.diag(R))
        roots[k] = U * np.sqrt(_positive_normal(rng, d))
    if spec.mixing_mode == "equal":
        props = np.full(c, 1.0 / c)
    else:
        props = rng.uniform(size=c)
        props /= props.sum()
    return GmmParameters(means, roots, props)


def sample_gmm(spec: GmmSpec) -> tuple[np.ndarray, GmmParameters]:
    """Draw mixture parameters and an N x d sample from one seeded stream.

    Means are uniform on (-50, 50)^d.  Random covariances are U diag(e) U^T
    with U orthogonal (QR of a Gaussian matrix, column signs fixed) and
    eigenvalues e ~ N(1, 1) conditioned to be positive.  Random mixing
    proportions are normalized uniform draws.
    """
    rng = np.random.default_rng(spec.seed)
    params = _draw_parameters(spec, rng)
    labels = rng.choice(spec.clusters, size=spec.n_samples, p=params.proportions)
    z = rng.standard_normal((spec.n_samples, spec.d))
    x = np.empty((spec.n_samples, spec.d))
    for k in range(spec.clusters):
        idx = labels == k
        x[idx] = params.means[k] + z[idx] @ params.roots[k].T
    return x, params


def gen_gmm(spec: GmmSpec) -> np.ndarray:
    """Seeded N x d Gaussian-mixture panel (see `sample_gmm`)."""
    return sample_gmm(spec)[0]


def count_scenarios(weights, threshold: float = SCENARIO_THRESHOLD) -> int:
    """Number of weights at or above `threshold` (smaller ones count as zero)."""
    return int(np.count_nonzero(np.asarray(weights, dtype=float) >= threshold))


@dataclass
class BenchCell:
    spec: GmmSpec
    q: int
    algorithm: str
    replicate: int = 0


@dataclass
class BenchRecord:
    algorithm: str
    case: int
    d: int
    c: int
    q: int
    replicate: int
    n_samples: int
    seed: int
    relative_error: float = float("nan")
    n_scenarios: int = 0
    wall_time_seconds: float = float("nan")
    status: str = "ok"
    error: str = ""


CSV_FIELDS = [f.name for f in BenchRecord.__dataclass_fields__.values()]


def build_grid(dims=(2, 5, 10), clusters=(5,), qs=(1,), algorithms=ALGORITHMS, cases=(1,),
               reps: int = 5, n_samples: int = 2000, seed: int = 0) -> list[BenchCell]:
    """Full factorial grid; all algorithms see the same panel for a given data key.

    Covariance scenarios are only defined for q = 1 and are skipped for q > 1.
    """
    if "covariance" in algorithms and 1 not in qs:
        raise ConfigError("covariance scenarios are only defined for q = 1")
    cells = []
    for case in cases:
        if case not in CASES:
            raise ConfigError(f"unknown case {case}; choose from {sorted(CASES)}")
        cov_mode, mix_mode = CASES[case]
        for d in dims:
            for c in clusters:
                for rep in range(reps):
                    key = (case, d, c, rep)
                    data_seed = int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])
                    spec = GmmSpec(d, c, cov_mode, mix_mode, n_samples, data_seed)
                    for q in qs:
                        for algo in algorithms:
                            if algo not in ALGORITHMS:
                                raise ConfigError(f"unknown algorithm {algo!r}")
                            if algo == "covariance" and q != 1:
                                continue
                            cells.append(BenchCell(spec, q, algo, rep))
    return cells


def _extract(algo, x, q, tolerance, weight_config, seed):
    if algo == "covariance":
        return covariance_scenarios(moment_matrix(x, 1))
    if algo == "omp":
        return extract_scenarios(x, q, tolerance, weight_config=weight_config)[0]
    if algo == "maxvol":
        return extract_maxvol(x, q, weight_config=weight_config)
    if algo == "ghtp":
        return extract_ghtp(x, q, weight_config=weight_config)
    return extract_lasserre(x, q, seed=seed, weight_config=weight_config)


def run_cell(cell: BenchCell, tolerance: float = 1e-12,
             weight_config: AdmmConfig | None = None) -> BenchRecord:
    """Generate the panel, time extraction plus weights, and score the result.

    Failures are captured in the record instead of propagating.
    """
    spec = cell.spec
    rec = BenchRecord(cell.algorithm, spec.case, spec.d, spec.clusters, cell.q, cell.replicate,
                      spec.n_samples, spec.seed)
    if cell.algorithm == "covariance" and cell.q != 1:
        rec.status, rec.error = "skipped", "covariance scenarios need q = 1"
        return rec
    x = gen_gmm(spec)
    start = time.perf_counter()
    try:
        scen = _extract(cell.algorithm, x, cell.q, tolerance, weight_config, spec.seed)
    except (ScenarioError, np.linalg.LinAlgError) as exc:
        rec.wall_time_seconds = time.perf_counter() - start
        rec.status, rec.error = "failed", f"{type(exc).__name__}: {exc}"
        return rec
    rec.wall_time_seconds = time.perf_counter() - start
    M = moment_matrix(x, cell.q)
    rec.relative_error = relative_error(M, vandermonde(scen.points, cell.q), scen.weights)
    rec.n_scenarios = count_scenarios(scen.weights)
    return rec


def _run_indexed(args):
    i, cell, tolerance, weight_config = args
    return i, run_cell(cell, tolerance, weight_config)


def summarize(records: list[BenchRecord]) -> dict:
    """Per-algorithm medians over successful records plus failure counts."""
    out = {}
    for algo in sorted({r.algorithm for r in records}):
        rs = [r for r in records if r.algorithm == algo]
        ok = [r for r in rs if r.status == "ok"]
        entry = {"runs": len(rs), "succeeded": len(ok), "failed": len(rs) - len(ok)}
        if ok:
            entry["median_relative_error"] = float(np.median([r.relative_error for r in ok]))
            entry["median_n_scenarios"] = float(np.median([r.n_scenarios for r in ok]))
            entry["median_wall_time_seconds"] = float(np.median([r.wall_time_seconds for r in ok]))
        out[algo] = entry
    return out


def write_records_csv(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for r in records:
            writer.writerow(asdict(r))


def run_benchmark(grid: list[BenchCell], output_path=None, *, workers: int = 1,
                  tolerance: float = 1e-12, weight_config: AdmmConfig | None = None,
                  metadata: dict | None = None) -> list[BenchRecord]:
    """Run every grid cell and optionally write ``<output>.csv`` and ``<output>.json``.

    Records come back in grid order whatever the worker count.
    """
    jobs = [(i, cell, tolerance, weight_config) for i, cell in enumerate(grid)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_indexed, jobs))
    else:
        results = [_run_indexed(j) for j in jobs]
    records = [rec for _, rec in sorted(results, key=lambda t: t[0])]
    if output_path is not None:
        base = str(output_path)
        write_records_csv(base + ".csv", records)
        summary = {"metadata": metadata or {}, "summary": summarize(records),
                   "n_records": len(records)}
        with open(base + ".json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return records


def rank_bound(d: int, q: int, n: int) -> int:
    return min(n, basis_size(d, 2 * q))


__all__ = ["ALGORITHMS", "CASES", "GmmSpec", "GmmParameters", "BenchCell", "BenchRecord",
           "gen_gmm", "sample_gmm",
           "count_scenarios", "build_grid", "run_cell", "run_benchmark", "summarize",
           "rank_bound"]
