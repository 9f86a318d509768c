"""Experiment harness: benchmark tables, amplitude scaling, sampler checks.

Subcommands
-----------
``table2`` / ``table3`` / ``table5``
    Reproduce the benchmark price tables at desk scale by Monte Carlo, with
    the published values carried in a reference column (never asserted);
    emits CSV plus a gnuplot-ready data file.
``gamma-sweep``
    Amplitude-scaling study: Monte Carlo versus the corrector price across a
    decreasing gamma grid, with adaptive path counts until the Monte Carlo
    error is small against the gap, and the fitted log-log slope.
``validate``
    Statistical and closed-form validation of the process samplers.
``price``
    One model, one strike: Monte Carlo estimate, corrector price, gap, and
    residual norms.

Exit codes: 0 success, 1 check failure, 2 configuration error, 3 numerical
failure.  All outputs are deterministic for a fixed (config, seed): cell
seeds derive from the master seed and the cell coordinates, so results do
not depend on scheduling or the number of workers.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import ndtr

from . import benchmarks
from .corrector import ApproxConfig, assemble_price, build_corrector_set, residual_report
from .errors import (
    ConfigError,
    DomainError,
    LongRangeDependenceError,
    PdeSolverError,
    QuadratureError,
    SamplerError,
    SimulationError,
)
from .mc import (
    McConfig,
    PayoffSpec,
    bs_reference,
    derive_seed,
    model_presets,
    price_gamma_difference,
    price_mc,
    price_mc_multi,
)
from .processes import (
    FouParams,
    TimeGrid,
    fbm_cov_matrix,
    fou_cov,
    fou_cov_timedomain,
    fou_kernel,
    fou_stationary_var,
    phi_forecast,
    sample_fbm,
    sample_fou,
    sigma_h_sq,
    theta,
)

_MODEL_OVERRIDES = ("gamma", "rho", "mu", "x0", "v0", "hurst", "beta", "horizon")
_MC_KEYS = ("n_paths", "n_steps", "seed", "antithetic", "block_paths", "workers")
_APPROX_KEYS = ("n_z", "n_t", "z_width", "solver_path", "m2_route", "a_route",
                "literal_step2", "phi_value", "mask_rel_tol")
_EXPERIMENTS = ("table2", "table3", "table5", "gamma_sweep",
                "validate_processes", "price_single")


@dataclass
class ExperimentConfig:
    experiment: str = "price_single"
    preset: str = "FOU_H07"
    alpha: float = 1.0
    strike: float = 50.0
    overrides: dict = field(default_factory=dict)
    mc: McConfig = field(default_factory=McConfig)
    approx: ApproxConfig = field(default_factory=ApproxConfig)
    gamma_grid: tuple = (0.2, 0.1, 0.05)
    sweep_estimator: str = "coupled"
    sweep_target_ratio: float = 5.0
    sweep_initial_paths: Optional[tuple] = None
    max_paths: int = 160_000_000
    validate_paths: int = 200_000
    output_path: Optional[str] = None
    format: str = "csv"
    jobs: int = 1
    reflect_vol: bool = False

    def __post_init__(self):
        if self.experiment not in _EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {self.experiment!r}; valid: {_EXPERIMENTS}"
            )
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.sweep_estimator not in ("coupled", "plain"):
            raise ConfigError("sweep_estimator must be 'coupled' or 'plain'")
        bad = set(self.overrides) - set(_MODEL_OVERRIDES)
        if bad:
            raise ConfigError(
                f"unknown model override keys {sorted(bad)}; "
                f"valid: {_MODEL_OVERRIDES}"
            )

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown configuration keys {sorted(bad)}")
        kwargs = dict(data)
        if "mc" in kwargs:
            mc = kwargs["mc"]
            bad = set(mc) - set(_MC_KEYS)
            if bad:
                raise ConfigError(f"unknown mc keys {sorted(bad)}; valid: {_MC_KEYS}")
            try:
                kwargs["mc"] = McConfig(**mc)
            except (TypeError, DomainError) as exc:
                raise ConfigError(f"bad mc block: {exc}") from exc
        if "approx" in kwargs:
            ap = kwargs["approx"]
            bad = set(ap) - set(_APPROX_KEYS)
            if bad:
                raise ConfigError(
                    f"unknown approx keys {sorted(bad)}; valid: {_APPROX_KEYS}"
                )
            try:
                kwargs["approx"] = ApproxConfig(**ap)
            except (TypeError, DomainError) as exc:
                raise ConfigError(f"bad approx block: {exc}") from exc
        if "gamma_grid" in kwargs:
            kwargs["gamma_grid"] = tuple(float(g) for g in kwargs["gamma_grid"])
        if kwargs.get("sweep_initial_paths") is not None:
            kwargs["sweep_initial_paths"] = tuple(
                int(n) for n in kwargs["sweep_initial_paths"]
            )
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _build_preset(config: ExperimentConfig, name: Optional[str] = None,
                  alpha: Optional[float] = None, **extra):
    overrides = dict(config.overrides)
    overrides.update(extra)
    return model_presets(
        name or config.preset,
        alpha=config.alpha if alpha is None else alpha,
        **overrides,
    )


# ---------------------------------------------------------------------------
# benchmark tables


@dataclass
class TableCell:
    table: str
    model: str
    alpha: float
    horizon: float
    strike: float
    price: float
    stderr: float
    reference: Optional[float]
    closed_form: Optional[float]
    flag: str
    n_paths: int
    n_steps: int
    seed: int


@dataclass
class TableResult:
    experiment: str
    cells: list
    checks: dict
    metadata: dict


_TABLE_LAYOUT = {
    "table2": dict(
        models=("BS", "OU", "FOU_H07", "FOU_H09"),
        alphas=benchmarks.TABLE2_ALPHAS,
        horizons=(benchmarks.TABLE2_HORIZON,),
        gamma=None,
        reference="table2",
    ),
    "table3": dict(
        models=("OU", "FOU_H07", "FOU_H09"),
        alphas=(benchmarks.TABLE3_ALPHA,),
        horizons=benchmarks.TABLE3_HORIZONS,
        gamma=benchmarks.TABLE3_GAMMA,
        reference="table3",
    ),
    "table5": dict(
        models=("FOU_I", "FOU_II", "FOU_III"),
        alphas=benchmarks.TABLE5_ALPHAS,
        horizons=(benchmarks.TABLE5_HORIZON,),
        gamma=None,
        reference="table5",
    ),
}


def _closed_form_flag(closed_form: Optional[float], reference: Optional[float]) -> str:
    if closed_form is None or reference is None:
        return ""
    gap = abs(closed_form - reference)
    if gap > max(0.25, 0.05 * max(abs(closed_form), abs(reference))):
        return "DISCREPANT_VS_REFERENCE"
    return ""


def _run_table_row(config, table, model_name, alpha, horizon, row_index):
    layout = _TABLE_LAYOUT[table]
    extra = {"horizon": horizon} if len(layout["horizons"]) > 1 else {}
    if layout["gamma"] is not None:
        extra["gamma"] = layout["gamma"]
    preset = _build_preset(config, name=model_name, alpha=alpha, **extra)
    table_id = {"table2": 2, "table3": 3, "table5": 5}[table]
    row_seed = derive_seed(config.mc.seed, 101, table_id, row_index)
    cfg = replace(config.mc, seed=row_seed)
    payoffs = [PayoffSpec("call", k) for k in benchmarks.STRIKES]
    ests = price_mc_multi(preset.model, payoffs, preset.horizon, cfg,
                          reflect_vol=config.reflect_vol)
    row_key = horizon if len(layout["horizons"]) > 1 else alpha
    cells = []
    for strike, est in zip(benchmarks.STRIKES, ests):
        ref = benchmarks.reference_value(layout["reference"], model_name,
                                         row_key, strike)
        closed = None
        if model_name == "BS":
            closed = bs_reference(preset.model.x0, strike, 0.0, preset.horizon,
                                  preset.model.mu, preset.model.vbar)
        cells.append(TableCell(
            table=table, model=model_name, alpha=alpha, horizon=preset.horizon,
            strike=strike, price=est.mean, stderr=est.stderr,
            reference=ref, closed_form=closed,
            flag=_closed_form_flag(closed, ref),
            n_paths=cfg.n_paths, n_steps=cfg.n_steps, seed=row_seed,
        ))
    return cells


def run_table(config: ExperimentConfig) -> TableResult:
    """Price one benchmark table cell-by-cell and run its qualitative checks.

    Strikes within a row share one simulation, so strike monotonicity is
    sample-exact; rows are independent with seeds derived from the master
    seed and the row coordinates.
    """
    table = config.experiment
    layout = _TABLE_LAYOUT[table]
    t0 = time.time()

    jobs = []
    row_index = 0
    for model_name in layout["models"]:
        for alpha in layout["alphas"]:
            for horizon in layout["horizons"]:
                jobs.append((table, model_name, alpha, horizon, row_index))
                row_index += 1

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(lambda j: _run_table_row(config, *j), jobs))
    else:
        rows = [_run_table_row(config, *j) for j in jobs]
    cells = [cell for row in rows for cell in row]

    checks = {"monotone_in_strike": _check_monotone(rows)}
    if table == "table5":
        checks["near_identical_small_gamma_columns"] = _check_table5_ci(cells)
    if table == "table3":
        checks["strike_spread_shrinks_with_horizon"] = _check_table3_spread(cells)

    metadata = dict(
        master_seed=config.mc.seed, n_paths=config.mc.n_paths,
        n_steps=config.mc.n_steps, antithetic=config.mc.antithetic,
        wall_time_s=round(time.time() - t0, 3), jobs=config.jobs,
    )
    return TableResult(experiment=table, cells=cells, checks=checks,
                       metadata=metadata)


def _check_monotone(rows) -> dict:
    worst = 0.0
    ok = True
    for row in rows:
        for lo, hi in zip(row, row[1:]):
            tol = 3.0 * math.hypot(lo.stderr, hi.stderr)
            violation = hi.price - lo.price
            worst = max(worst, violation - tol)
            if violation > tol:
                ok = False
    return {"passed": ok, "worst_violation_beyond_tol": worst}


def _check_table5_ci(cells) -> dict:
    by_key = {}
    for c in cells:
        by_key[(c.model, c.alpha, c.strike)] = c
    ok = True
    worst = 0.0
    for (model, alpha, strike), c2 in by_key.items():
        if model != "FOU_II":
            continue
        c3 = by_key.get(("FOU_III", alpha, strike))
        if c3 is None:
            continue
        combined = 1.96 * math.hypot(c2.stderr, c3.stderr)
        excess = abs(c2.price - c3.price) - combined
        worst = max(worst, excess)
        if excess > 0.0:
            ok = False
    return {"passed": ok, "worst_excess_beyond_ci": worst}


def _check_table3_spread(cells) -> dict:
    spreads = {}
    for c in cells:
        key = (c.model, c.horizon)
        lo, hi = spreads.get(key, (None, None))
        if c.strike == benchmarks.STRIKES[0]:
            lo = c.price
        if c.strike == benchmarks.STRIKES[-1]:
            hi = c.price
        spreads[key] = (lo, hi)
    ok = True
    detail = {}
    for model in {c.model for c in cells}:
        seq = [spreads[(model, h)][0] - spreads[(model, h)][1]
               for h in benchmarks.TABLE3_HORIZONS]
        detail[model] = seq
        if not all(a > b for a, b in zip(seq, seq[1:])):
            ok = False
    return {"passed": ok, "spreads": detail}


# ---------------------------------------------------------------------------
# gamma sweep


@dataclass
class SweepRow:
    gamma: float
    mc_price: float
    mc_stderr: float
    approx_price: float
    gap: float
    n_paths: int
    conclusive: bool


@dataclass
class SweepResult:
    rows: list
    slope: Optional[float]
    passed: bool
    inconclusive: bool
    metadata: dict


def _discretized_base_variance(model, horizon, n_steps) -> float:
    t = np.linspace(0.0, horizon, n_steps + 1)[:-1]
    v = np.asarray(model.vbar(t), dtype=float)
    return float(np.sum(v * v) * (horizon / n_steps))


def _lognormal_price(x0, strike, horizon, mu, total_var) -> float:
    root = math.sqrt(total_var)
    d1 = (math.log(x0 / strike) + mu * horizon + 0.5 * total_var) / root
    d2 = d1 - root
    return x0 * math.exp(mu * horizon) * ndtr(d1) - strike * ndtr(d2)


def run_gamma_sweep(config: ExperimentConfig) -> SweepResult:
    """Gap between the Monte Carlo and corrector prices across the gamma grid.

    Per gamma the path count is raised adaptively until the Monte Carlo
    standard error is below gap / sweep_target_ratio or the budget is
    exhausted (then the row is flagged inconclusive and no slope is claimed
    from it).  The default estimator couples each path with its gamma = 0
    twin, whose price is known in closed form, so the noise scales with
    gamma; ``sweep_estimator='plain'`` prices directly instead.
    """
    t0 = time.time()
    preset = _build_preset(config)
    base_model = preset.model
    horizon = preset.horizon
    payoff = PayoffSpec("call", config.strike)
    correctors = build_corrector_set(base_model, payoff, horizon, config.approx)
    phi = config.approx.phi_value

    rows = []
    for idx, gamma in enumerate(config.gamma_grid):
        model = replace(base_model, gamma=gamma)
        approx = assemble_price(correctors, model, 0.0, base_model.x0, phi=phi)
        if config.sweep_initial_paths is not None and idx < len(config.sweep_initial_paths):
            n = config.sweep_initial_paths[idx]
        else:
            n = config.mc.n_paths
        n += n % 2
        while True:
            cfg = replace(config.mc, n_paths=n,
                          seed=derive_seed(config.mc.seed, 301, idx))
            if config.sweep_estimator == "coupled":
                diff = price_gamma_difference(model, payoff, horizon, cfg,
                                              reflect_vol=config.reflect_vol)
                base = _lognormal_price(
                    model.x0, config.strike, horizon, model.mu,
                    _discretized_base_variance(model, horizon, cfg.n_steps),
                )
                price, se = base + diff.mean, diff.stderr
            else:
                est = price_mc(model, payoff, horizon, cfg,
                               reflect_vol=config.reflect_vol)
                price, se = est.mean, est.stderr
            gap = price - approx
            floor = 1e-7 * base_model.x0
            conclusive = (abs(gap) > floor and se <= abs(gap) / config.sweep_target_ratio) \
                or (abs(gap) <= floor and se <= floor)
            if conclusive or n >= config.max_paths or gamma == 0.0:
                break
            factor = (config.sweep_target_ratio * se / max(abs(gap), floor)) ** 2
            n = min(int(n * min(max(factor * 1.4, 2.0), 16.0)), config.max_paths)
            n += n % 2
        rows.append(SweepRow(
            gamma=gamma, mc_price=price, mc_stderr=se, approx_price=approx,
            gap=gap, n_paths=n, conclusive=bool(conclusive),
        ))

    fit_rows = [r for r in rows if r.gamma > 0.0]
    inconclusive = any(not r.conclusive for r in fit_rows)
    slope = None
    if len(fit_rows) >= 2 and not inconclusive:
        lg = np.log([r.gamma for r in fit_rows])
        lv = np.log([abs(r.gap) for r in fit_rows])
        slope = float(np.polyfit(lg, lv, 1)[0])
    zero_rows_ok = all(
        abs(r.gap) <= max(3.0 * r.mc_stderr, 1e-6 * base_model.x0)
        for r in rows if r.gamma == 0.0
    )
    passed = (not inconclusive) and zero_rows_ok and (slope is None or slope >= 1.6)
    if slope is None and fit_rows:
        passed = False if inconclusive else passed
    metadata = dict(
        estimator=config.sweep_estimator, target_ratio=config.sweep_target_ratio,
        master_seed=config.mc.seed, n_steps=config.mc.n_steps,
        preset=config.preset, alpha=config.alpha, strike=config.strike,
        overrides=dict(config.overrides),
        wall_time_s=round(time.time() - t0, 3),
    )
    return SweepResult(rows=rows, slope=slope, passed=passed,
                       inconclusive=inconclusive, metadata=metadata)


# ---------------------------------------------------------------------------
# process validation


@dataclass
class ValidationCheck:
    name: str
    passed: bool
    achieved: float
    tolerance: float
    detail: str = ""


def run_validate_processes(config: ExperimentConfig) -> list:
    """Closed-form and statistical checks of the process layer."""
    n_paths = config.validate_paths
    seed = config.mc.seed
    checks = []

    def add(name, achieved, tolerance, detail=""):
        checks.append(ValidationCheck(
            name=name, passed=bool(achieved <= tolerance),
            achieved=float(achieved), tolerance=float(tolerance), detail=detail,
        ))

    add("variance_scale_unit_at_half", abs(sigma_h_sq(0.5) - 1.0), 1e-15)

    ts = np.arange(0.1, 5.0001, 0.1)
    worst = 0.0
    for a in (0.5, 2.0):
        p = FouParams(a, 0.5)
        vals = np.array([fou_kernel(t, p) for t in ts])
        worst = max(worst, float(np.max(np.abs(vals - np.exp(-a * ts)))))
    add("kernel_markovian_closed_form", worst, 1e-12)

    p5 = FouParams(0.5, 0.5)
    add("theta_markovian_closed_form",
        abs(theta(0.0, 1.0, p5) - 2.0 * (1.0 - math.exp(-0.5))), 1e-10)
    add("theta_vanishes_at_horizon", abs(theta(1.0, 1.0, FouParams(0.5, 0.7))), 1e-14)

    worst = 0.0
    for p, lag in ((FouParams(0.5, 0.9), 1.0), (FouParams(0.5, 0.7), 1.0),
                   (FouParams(1.0, 0.8), 0.5)):
        worst = max(worst, abs(fou_cov(lag, p) - fou_cov_timedomain(lag, p)))
    add("autocovariance_displays_agree", worst, 1e-6)

    grid = TimeGrid(0.0, 1.0 / 15.0, 16)
    for h in (0.5, 0.6, 0.7, 0.9):
        batch = sample_fbm(h, grid, n_paths, derive_seed(seed, 401, int(h * 100)))
        v = batch.values
        emp = (v.T @ v) / n_paths
        ana = fbm_cov_matrix(grid.points, h)
        se = np.sqrt((np.outer(np.diag(ana), np.diag(ana)) + ana ** 2) / n_paths)
        se[se == 0.0] = np.inf
        dev = float(np.max(np.abs(emp - ana) / se))
        add(f"fbm_covariance_h{h:g}", dev, 4.0, detail="max deviation in stderr units")

    p7 = FouParams(0.5, 0.7)
    batch = sample_fou(p7, grid, 40.0, n_paths, derive_seed(seed, 402, 0))
    var_true = fou_stationary_var(p7)
    var_dev = float(np.max(np.abs(batch.values.var(axis=0) / var_true - 1.0)))
    add("fou_stationary_variance", var_dev, 0.02, detail="relative deviation")
    cov_true = fou_cov(1.0, p7)
    emp = float(np.mean(batch.values[:, 0] * batch.values[:, -1]))
    se1 = math.sqrt((var_true ** 2 + cov_true ** 2) / n_paths)
    add("fou_lag1_covariance", abs(emp - cov_true) / se1, 4.0,
        detail="deviation in stderr units")

    add("phi_forecast_empty_history",
        abs(phi_forecast(p7, 0.0, 1.0)), 1e-15)

    try:
        preset = model_presets("FOU_H07", alpha=1.0, hurst=0.25)
        build_corrector_set(preset.model, PayoffSpec("call", 50.0), 1.0,
                            ApproxConfig(n_z=64, n_t=16))
        rejected = 0.0
    except LongRangeDependenceError:
        rejected = 1.0
    checks.append(ValidationCheck(
        name="pricing_rejects_short_memory", passed=bool(rejected),
        achieved=rejected, tolerance=1.0,
        detail="corrector build must reject hurst <= 1/2",
    ))
    return checks


# ---------------------------------------------------------------------------
# single price


def price_single(config: ExperimentConfig) -> dict:
    """One Monte Carlo estimate plus the corrector price and residuals."""
    preset = _build_preset(config)
    model = preset.model
    horizon = preset.horizon
    payoff = PayoffSpec("call", config.strike)
    est = price_mc(model, payoff, horizon, config.mc,
                   reflect_vol=config.reflect_vol)
    out = dict(
        preset=config.preset, alpha=config.alpha, strike=config.strike,
        gamma=model.gamma, rho=model.rho, hurst=model.fou.hurst,
        horizon=horizon, mc_price=est.mean, mc_stderr=est.stderr,
        ci95=list(est.ci95), n_effective=est.n_effective,
        n_paths=config.mc.n_paths, n_steps=config.mc.n_steps,
        seed=config.mc.seed,
    )
    if model.fou.hurst > 0.5:
        correctors = build_corrector_set(model, payoff, horizon, config.approx)
        approx = assemble_price(correctors, model, 0.0, model.x0,
                                phi=config.approx.phi_value)
        rep = residual_report(correctors)
        out.update(
            approx_price=approx,
            gap=est.mean - approx,
            residual_linf={k: v.linf for k, v in rep.items()
                           if hasattr(v, "linf")},
            masked_fraction=rep["masked_fraction"],
        )
        if config.approx.literal_step2 and correctors.literal_m2 is not None:
            z0 = math.log(model.x0)
            out["m2_duhamel_at_spot"] = correctors.m2.at(0.0, z0)
            out["m2_literal_at_spot"] = correctors.literal_m2.at(0.0, z0)
            out["literal_route_feeds_price"] = False
    elif model.gamma == 0.0:
        # every correction term carries gamma, so the leading order is exact
        out["approx_price"] = bs_reference(model.x0, config.strike, 0.0, horizon,
                                           model.mu, model.vbar)
        out["gap"] = est.mean - out["approx_price"]
    else:
        out["approx_price"] = None
        out["note"] = "corrector price requires hurst > 1/2"
    return out


# ---------------------------------------------------------------------------
# output formatting


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".6g")


def _fmt_raw(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


_TABLE_COLUMNS = (
    "table", "model", "alpha", "T", "K", "price", "stderr", "price_raw",
    "stderr_raw", "reference", "closed_form", "flag", "n_paths", "n_steps",
    "seed",
)


def table_csv_lines(result: TableResult) -> list:
    lines = [",".join(_TABLE_COLUMNS)]
    for c in result.cells:
        lines.append(",".join([
            c.table, c.model, _fmt(c.alpha), _fmt(c.horizon), _fmt(c.strike),
            _fmt(c.price), _fmt(c.stderr), _fmt_raw(c.price), _fmt_raw(c.stderr),
            _fmt(c.reference), _fmt(c.closed_form), c.flag,
            str(c.n_paths), str(c.n_steps), str(c.seed),
        ]))
    return lines


def table_plot_lines(result: TableResult) -> list:
    """Gnuplot-ready blocks: one block per (model, row key), columns
    K price stderr reference."""
    lines = ["# K price stderr reference"]
    current = None
    for c in result.cells:
        key = (c.model, c.alpha, c.horizon)
        if key != current:
            if current is not None:
                lines.append("")
                lines.append("")
            lines.append(f"# model={c.model} alpha={_fmt(c.alpha)} T={_fmt(c.horizon)}")
            current = key
        ref = _fmt(c.reference) if c.reference is not None else "nan"
        lines.append(f"{_fmt(c.strike)} {_fmt(c.price)} {_fmt(c.stderr)} {ref}")
    return lines


def sweep_csv_lines(result: SweepResult) -> list:
    lines = ["gamma,mc_price,mc_stderr,approx_price,gap,gap_raw,n_paths,conclusive"]
    for r in result.rows:
        lines.append(",".join([
            _fmt(r.gamma), _fmt(r.mc_price), _fmt(r.mc_stderr),
            _fmt(r.approx_price), _fmt(r.gap), _fmt_raw(r.gap),
            str(r.n_paths), "1" if r.conclusive else "0",
        ]))
    slope = _fmt(result.slope) if result.slope is not None else "nan"
    lines.append(f"# slope,{slope}")
    lines.append(f"# inconclusive,{1 if result.inconclusive else 0}")
    return lines


def validation_lines(checks: list) -> list:
    lines = []
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        lines.append(
            f"{status} {c.name}: achieved {c.achieved:.6g} "
            f"(tolerance {c.tolerance:.6g})" + (f" [{c.detail}]" if c.detail else "")
        )
    return lines


def _write(path: str, lines: list) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# entry point


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="fracvol",
        description="pricing experiments under long-memory stochastic volatility",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    names = {
        "table2": "reproduce benchmark table 2 (price vs volatility level and strike)",
        "table3": "reproduce benchmark table 3 (price vs maturity and strike)",
        "table5": "reproduce benchmark table 5 (price vs amplitude and strike)",
        "gamma-sweep": "amplitude-scaling study of the corrector price",
        "validate": "statistical validation of the process samplers",
        "price": "price a single model and strike both ways",
    }
    for name, help_text in names.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--paths", type=int, help="Monte Carlo paths")
        p.add_argument("--steps", type=int, help="time steps")
        p.add_argument("--jobs", type=int, help="parallel table rows")
        p.add_argument("--out", help="output file path")
        p.add_argument("--format", choices=("csv", "json"), help="output format")
        p.add_argument("--literal-step2", action="store_true",
                       help="also evaluate the comparison-only triangular form")
        p.add_argument("--reflect-vol", action="store_true",
                       help="use |v| in the asset diffusion (sensitivity mode)")
        p.add_argument("--preset", help="model preset name")
        p.add_argument("--alpha", type=float, help="long-run volatility level")
        p.add_argument("--strike", type=float, help="option strike")
    return parser.parse_args(argv)


_COMMAND_TO_EXPERIMENT = {
    "table2": "table2",
    "table3": "table3",
    "table5": "table5",
    "gamma-sweep": "gamma_sweep",
    "validate": "validate_processes",
    "price": "price_single",
}


def _load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    data["experiment"] = _COMMAND_TO_EXPERIMENT[args.command]
    config = ExperimentConfig.from_mapping(data)
    mc = config.mc
    if args.seed is not None:
        mc = replace(mc, seed=args.seed)
    if args.paths is not None:
        mc = replace(mc, n_paths=args.paths)
    if args.steps is not None:
        mc = replace(mc, n_steps=args.steps)
    config.mc = mc
    if args.jobs is not None:
        config.jobs = args.jobs
    if args.out is not None:
        config.output_path = args.out
    if args.format is not None:
        config.format = args.format
    if args.literal_step2:
        config.approx = replace(config.approx, literal_step2=True)
    if args.reflect_vol:
        config.reflect_vol = True
    if args.preset is not None:
        config.preset = args.preset
    if args.alpha is not None:
        config.alpha = args.alpha
    if args.strike is not None:
        config.strike = args.strike
    return config


def _default_out(config: ExperimentConfig) -> str:
    ext = "csv" if config.format == "csv" else "json"
    return f"{config.experiment}.{ext}"


def _result_to_json(obj) -> str:
    def default(o):
        if hasattr(o, "__dataclass_fields__"):
            return asdict(o)
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        raise TypeError(type(o).__name__)
    return json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n"


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])
    try:
        config = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        return _dispatch(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SimulationError, PdeSolverError, QuadratureError, SamplerError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def _dispatch(config: ExperimentConfig) -> int:
    out = config.output_path or _default_out(config)
    if config.experiment in ("table2", "table3", "table5"):
        result = run_table(config)
        if config.format == "csv":
            _write(out, table_csv_lines(result))
        else:
            _write(out, [_result_to_json(result).rstrip("\n")])
        _write(out + ".plot.dat", table_plot_lines(result))
        failed = [k for k, v in result.checks.items() if not v["passed"]]
        print(f"{config.experiment}: {len(result.cells)} cells -> {out} "
              f"(wall {result.metadata['wall_time_s']}s)")
        for name, check in result.checks.items():
            print(f"  check {name}: {'PASS' if check['passed'] else 'FAIL'}")
        return 1 if failed else 0

    if config.experiment == "gamma_sweep":
        result = run_gamma_sweep(config)
        if config.format == "csv":
            _write(out, sweep_csv_lines(result))
        else:
            _write(out, [_result_to_json(result).rstrip("\n")])
        slope_txt = "n/a" if result.slope is None else f"{result.slope:.3f}"
        print(f"gamma_sweep: slope {slope_txt}, "
              f"{'inconclusive' if result.inconclusive else 'conclusive'} "
              f"-> {out} (wall {result.metadata['wall_time_s']}s)")
        for r in result.rows:
            print(f"  gamma={r.gamma:g}: gap={r.gap:+.6g} stderr={r.mc_stderr:.3g} "
                  f"paths={r.n_paths} {'ok' if r.conclusive else 'INCONCLUSIVE'}")
        return 0 if result.passed else 1

    if config.experiment == "validate_processes":
        checks = run_validate_processes(config)
        lines = validation_lines(checks)
        if config.format == "csv":
            _write(out, lines)
        else:
            _write(out, [_result_to_json(checks).rstrip("\n")])
        for line in lines:
            print(line)
        return 0 if all(c.passed for c in checks) else 1

    result = price_single(config)
    text = _result_to_json(result)
    if config.output_path:
        _write(config.output_path, [text.rstrip("\n")])
    print(text, end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
