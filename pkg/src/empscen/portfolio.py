"""CVaR-constrained expected-return maximization over scenario measures.

Returns are in percent.  Losses are negative portfolio returns, so a CVaR cap
delta bounds the mean of the worst (1 - alpha) share of losses.
"""
from __future__ import annotations

import csv
import datetime as dt
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, InfeasibleError, InvalidInputError, NumericalBreakdownError
from .extractors import ScenarioSet, extract_scenarios
from .lp import INFEASIBLE, OPTIMAL, LpProblem, solve_lp
from .weights import AdmmConfig

MISSING_SENTINELS = (-99.99, -999.0)
FORMATS = ("famafrench_csv", "plain_csv")


@dataclass
class ReturnsPanel:
    dates: list
    returns: np.ndarray
    asset_names: list[str]
    dropped_rows: int = 0

    def __post_init__(self):
        self.returns = np.atleast_2d(np.asarray(self.returns, dtype=float))
        n_obs, d = self.returns.shape
        if n_obs < 1:
            raise InvalidInputError("returns panel is empty")
        if len(self.dates) != n_obs or len(self.asset_names) != d:
            raise InvalidInputError("dates and asset names must match the returns shape")

    @property
    def n_obs(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    def rows(self, index) -> "ReturnsPanel":
        pick = np.arange(self.n_obs)[index]
        return ReturnsPanel([self.dates[i] for i in pick], self.returns[pick],
                            list(self.asset_names))

    def split(self, n_train: int) -> tuple["ReturnsPanel", "ReturnsPanel"]:
        if not 1 <= n_train < self.n_obs:
            raise InvalidInputError(f"train size {n_train} must lie in [1, {self.n_obs - 1}]")
        return self.rows(slice(0, n_train)), self.rows(slice(n_train, None))


def _parse_date(text: str) -> dt.date:
    text = text.strip()
    for fmt in ("%Y%m%d", "%Y-%m-%d"):
        try:
            return dt.datetime.strptime(text, fmt).date()
        except ValueError:
            pass
    raise ValueError(f"unparseable date {text!r}")


def _parse_row(fields, lineno, width):
    if width is not None and len(fields) != width:
        raise DataFormatError(f"line {lineno}: expected {width} fields, found {len(fields)}")
    try:
        date = _parse_date(fields[0])
        values = [float(v) for v in fields[1:]]
    except ValueError as exc:
        raise DataFormatError(f"line {lineno}: {exc}") from None
    if not values:
        raise DataFormatError(f"line {lineno}: no return columns")
    return date, values


def _is_missing(values) -> bool:
    return any(np.isclose(v, s, rtol=0.0, atol=1e-9) for v in values for s in MISSING_SENTINELS)


def load_returns(path, format: str = "famafrench_csv") -> ReturnsPanel:
    """Read a daily returns table.

    ``famafrench_csv``: free-text preamble, then a header row whose first
    field is empty, then ``YYYYMMDD, r_1, ..., r_d`` rows up to the first
    blank line.  Rows holding a missing-value code (-99.99 or -999) are
    dropped and counted in ``dropped_rows``.

    ``plain_csv``: ``date, r_1, ..., r_d`` rows with an optional header.
    """
    if format not in FORMATS:
        raise InvalidInputError(f"unknown format {format!r}; choose from {FORMATS}")
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()

    names = None
    start = 0
    if format == "famafrench_csv":
        for k, line in enumerate(lines):
            fields = next(csv.reader([line])) if line.strip() else []
            if len(fields) >= 2 and fields[0].strip() == "" and all(f.strip() for f in fields[1:]):
                names = [f.strip() for f in fields[1:]]
                start = k + 1
                break
        else:
            raise DataFormatError(f"{path}: no header row (a line starting with ',') found")
    elif lines:
        first = next(csv.reader([lines[0]]))
        try:
            _parse_date(first[0])
        except ValueError:
            names = [f.strip() for f in first[1:]]
            start = 1

    width = None if names is None else len(names) + 1
    dates, rows = [], []
    dropped = 0
    for k in range(start, len(lines)):
        line = lines[k]
        if not line.strip():
            if format == "famafrench_csv":
                break
            continue
        fields = [f.strip() for f in next(csv.reader([line]))]
        date, values = _parse_row(fields, k + 1, width)
        width = len(fields)
        if _is_missing(values):
            dropped += 1
            continue
        dates.append(date)
        rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: no usable return rows")
    d = len(rows[0])
    names = names or [f"asset_{i + 1}" for i in range(d)]
    return ReturnsPanel(dates, np.array(rows), names, dropped)


def synthetic_returns(n_obs: int, d: int = 25, seed: int = 0) -> ReturnsPanel:
    """Two-regime factor model for daily percent returns with heterogeneous volatilities.

    A calm regime (probability 0.9) and a stressed regime with a negative
    market drift and doubled volatility; assets with higher volatility earn
    a higher mean return, so the CVaR cap binds on a genuine trade-off.
    """
    rng = np.random.default_rng(seed)
    vol = rng.permutation(np.linspace(0.5, 2.0, d))
    beta = rng.uniform(0.5, 1.5, d)
    drift = 0.02 + 0.03 * vol
    stressed = rng.random(n_obs) < 0.1
    market = rng.standard_normal(n_obs) * np.where(stressed, 1.6, 0.8) - np.where(stressed, 0.4, 0.0)
    idio = rng.standard_normal((n_obs, d)) * vol * np.where(stressed, 2.0, 1.0)[:, None]
    returns = drift + market[:, None] * beta + idio
    start = dt.date(2000, 1, 3)
    dates = [start + dt.timedelta(days=i) for i in range(n_obs)]
    return ReturnsPanel(dates, returns, [f"asset_{i + 1}" for i in range(d)])


def cvar_empirical(losses, weights=None, alpha: float = 0.95) -> float:
    """Exact min_t t + E[(loss - t)_+] / (1 - alpha) for a discrete loss distribution.

    The objective is piecewise linear in t with kinks at the losses, so the
    minimum is found by evaluating it at every loss value.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    ell = np.asarray(losses, dtype=float).ravel()
    lam = np.full(ell.size, 1.0 / ell.size) if weights is None else np.asarray(weights, float).ravel()
    if ell.size == 0 or lam.shape != ell.shape:
        raise InvalidInputError("need one weight per loss")
    order = np.argsort(ell)
    ell, lam = ell[order], lam[order]
    # tail sums over strictly larger losses, evaluated at t = ell[k]
    tail_mass = np.concatenate([np.cumsum(lam[::-1])[::-1][1:], [0.0]])
    tail_loss = np.concatenate([np.cumsum((lam * ell)[::-1])[::-1][1:], [0.0]])
    values = ell + (tail_loss - ell * tail_mass) / (1.0 - alpha)
    return float(values.min())


@dataclass
class CvarProblem:
    mu: np.ndarray
    scenarios: ScenarioSet
    alpha: float
    delta: float
    lower: np.ndarray | None = None   # per-asset lower bounds; default long-only

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).ravel()
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError("alpha must lie in (0, 1)")
        if not np.isfinite(self.delta):
            raise InvalidInputError("delta must be finite")
        if self.scenarios.dim != self.mu.size:
            raise InvalidInputError("mu and scenario dimension differ")
        if self.lower is None:
            self.lower = np.zeros(self.mu.size)


@dataclass
class CvarSolution:
    weights: np.ndarray
    threshold: float
    expected_return: float
    scenario_cvar: float
    iterations: int


def cvar_lp(problem: CvarProblem) -> LpProblem:
    """Linear program in (w, t, u): max mu^T w with the hinge reformulation of the cap."""
    S = problem.scenarios
    d, r = problem.mu.size, len(S)
    c = np.concatenate([-problem.mu, [0.0], np.zeros(r)])
    cap = np.concatenate([np.zeros(d), [1.0], S.weights / (1.0 - problem.alpha)])
    # -r_i^T w - t - u_i <= 0
    hinge = np.hstack([-S.points, -np.ones((r, 1)), -np.eye(r)])
    A_ub = np.vstack([cap, hinge])
    b_ub = np.concatenate([[problem.delta], np.zeros(r)])
    A_eq = np.concatenate([np.ones(d), [0.0], np.zeros(r)])[None, :]
    lower = np.concatenate([problem.lower, [-np.inf], np.zeros(r)])
    return LpProblem(c, A_ub, b_ub, A_eq, [1.0], lower)


def optimize_cvar(problem: CvarProblem) -> CvarSolution:
    """Optimal long-only weights under the scenario CVaR cap.

    Raises
    ------
    InfeasibleError
        No admissible portfolio meets the cap.
    """
    d = problem.mu.size
    res = solve_lp(cvar_lp(problem))
    if res.status == INFEASIBLE:
        raise InfeasibleError(f"no portfolio has CVaR_{problem.alpha} <= {problem.delta}")
    if res.status != OPTIMAL:
        raise NumericalBreakdownError(f"LP solver stopped with status {res.status}")
    w = res.x[:d]
    losses = -problem.scenarios.points @ w
    return CvarSolution(w, float(res.x[d]), float(problem.mu @ w),
                        cvar_empirical(losses, problem.scenarios.weights, problem.alpha),
                        res.iterations)


def backtest(w, test, alpha: float) -> dict:
    """Mean portfolio return and empirical CVaR of its losses on a sample."""
    R = np.asarray(getattr(test, "returns", test), dtype=float)
    w = np.asarray(w, dtype=float).ravel()
    if R.ndim != 2 or R.shape[1] != w.size:
        raise InvalidInputError(f"weights of length {w.size} do not match returns {R.shape}")
    port = R @ w
    return {"mean_return": float(port.mean()), "empirical_cvar": cvar_empirical(-port, None, alpha)}


def naive_caps(train, levels) -> dict:
    """CVaR of the equally weighted portfolio on the training sample at each level."""
    R = np.asarray(getattr(train, "returns", train), dtype=float)
    losses = -R.mean(axis=1)
    return {lvl: cvar_empirical(losses, None, lvl) for lvl in levels}


@dataclass
class PortfolioConfig:
    alphas: tuple = (0.95, 0.98, 0.99)
    delta_levels: tuple = (0.95, 0.98, 0.99)
    q: int = 1
    tolerance: float = 1e-12
    max_iter: int | None = None
    admm: AdmmConfig = field(default_factory=AdmmConfig)

    def __post_init__(self):
        for level in (*self.alphas, *self.delta_levels):
            if not 0.0 < level < 1.0:
                raise InvalidInputError(f"confidence levels must lie in (0, 1), got {level}")
        if self.q < 1:
            raise InvalidInputError("q must be >= 1")


def run_cells(train: ReturnsPanel, test: ReturnsPanel, config: PortfolioConfig,
              deltas: dict | None = None) -> tuple[list[dict], ScenarioSet]:
    """Extract scenarios from `train` and solve every (alpha, delta level) cell.

    `deltas` overrides the caps per level; by default they are the naive
    portfolio's training CVaR at each level.
    """
    scen, _ = extract_scenarios(train.returns, config.q, config.tolerance, config.max_iter,
                                config.admm)
    mu = scen.weights @ scen.points
    caps = naive_caps(train, config.delta_levels) if deltas is None else deltas
    cells = []
    for alpha in config.alphas:
        for level in config.delta_levels:
            delta = float(caps[level])
            cell = {"alpha": alpha, "delta_level": level, "delta": delta}
            try:
                sol = optimize_cvar(CvarProblem(mu, scen, alpha, delta))
            except InfeasibleError as exc:
                cell.update(status="infeasible", message=str(exc), train_mean=None,
                            train_cvar=None, test_mean=None, test_cvar=None,
                            scenario_mean=None, scenario_cvar=None, weights=None)
                cells.append(cell)
                continue
            tr = backtest(sol.weights, train, alpha)
            te = backtest(sol.weights, test, alpha)
            cell.update(status="optimal", train_mean=tr["mean_return"],
                        train_cvar=tr["empirical_cvar"], test_mean=te["mean_return"],
                        test_cvar=te["empirical_cvar"], scenario_cvar=sol.scenario_cvar,
                        scenario_mean=sol.expected_return, weights=sol.weights.tolist())
            cells.append(cell)
    return cells, scen


CELL_FIELDS = ("simulation", "alpha", "delta_level", "delta", "status", "train_mean",
               "train_cvar", "test_mean", "test_cvar", "scenario_mean", "scenario_cvar",
               "n_scenarios")


def _simulation_panels(source, n_train, n_test, d, seed_seq, sim):
    """Train/test panels for one simulation.

    Synthetic mode draws a fresh panel per simulation.  With a data file the
    chronological split is kept and simulations after the first bootstrap
    the training rows.
    """
    if source is None:
        seed = int(seed_seq.generate_state(1)[0])
        return synthetic_returns(n_train + n_test, d, seed).split(n_train)
    train, test = source.split(n_train)
    if sim == 0:
        return train, test
    rng = np.random.default_rng(seed_seq)
    pick = np.sort(rng.integers(0, train.n_obs, train.n_obs))
    return train.rows(pick), test


def _one_simulation(args):
    sim, source, n_train, n_test, d, seed, config, deltas = args
    seed_seq = np.random.SeedSequence(seed, spawn_key=(sim,))
    train, test = _simulation_panels(source, n_train, n_test, d, seed_seq, sim)
    if deltas is not None and not isinstance(deltas, dict):
        deltas = {level: float(deltas) for level in config.delta_levels}
    cells, scen = run_cells(train, test, config, deltas)
    for cell in cells:
        cell["simulation"] = sim
        cell["n_scenarios"] = len(scen)
    return sim, cells, train.n_obs, test.n_obs


def run_study(config: PortfolioConfig, *, source: ReturnsPanel | None = None,
              n_train: int = 2000, n_test: int = 1000, d: int = 25, simulations: int = 1,
              seed: int = 0, deltas=None, workers: int = 1) -> dict:
    """Repeat the train/extract/optimize/backtest pipeline over several simulations.

    `deltas` may be a scalar cap applied to every level or a dict per level.
    Returns the cells of every simulation plus the split sizes.
    """
    if simulations < 1:
        raise InvalidInputError("simulations must be >= 1")
    if source is not None:
        n_test = source.n_obs - n_train
        if n_train < 1 or n_test < 1:
            raise InvalidInputError(
                f"train size {n_train} leaves no test rows in a panel of {source.n_obs}")
    jobs = [(sim, source, n_train, n_test, d, seed, config, deltas) for sim in range(simulations)]
    if workers > 1 and simulations > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_simulation, jobs))
    else:
        results = [_one_simulation(job) for job in jobs]
    results.sort(key=lambda item: item[0])
    return {
        "train_size": results[0][2],
        "test_size": results[0][3],
        "simulations": [cells for _, cells, _, _ in results],
    }
