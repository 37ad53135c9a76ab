"""Experiment command line.

Subcommands: tau, population-sweep, prop-sweep, real, theorem3, fixed-point.
Every emitted table starts with a '#'-prefixed JSON metadata line holding the
fully resolved configuration (seed included), so re-running with that line's
settings reproduces the file byte for byte.  Flags override --config values,
which override defaults.  Sweep outputs are also rendered as PNG figures next
to the delimited file unless --no-plot is given.

Exit status: 0 on success, 1 when some grid points failed (marked in the
output), 2 on invalid usage or inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .detequiv import (
    EquivRiskInputs,
    closed_form_isotropic,
    expected_r_eq,
    sigma_b1_root,
    solve_tau,
    theorem3_coefficients,
)
from .dataset import (
    HOUSING_RECIPE,
    LSAC_RECIPE,
    ShiftPlan,
    load_and_preprocess,
    real_rrm_experiment,
)
from .errors import (
    DegenerateDenominator,
    InsufficientRows,
    InvalidInput,
    MissingColumn,
    NoBracket,
    ParseError,
    PerfridgeError,
)
from .model import (
    BlockCovariance,
    EffectRecipe,
    ModelSpec,
    Normalization,
    PerformativeEffect,
    RidgeConfig,
    assemble_sigma,
    excess_risk,
    sample_theta_star,
    schur_predictive,
)
from .optimize import grid_then_golden
from .population import (
    exact_avg_risk,
    fixed_point,
    iterations_to_tolerance,
    population_step,
    risk_first_order,
    risk_second_order,
    second_order_optimal_lambda,
)
from .rng import Purpose, substream
from .simulate import monte_carlo_sweep_multi
from .errors import SingularSystem

USAGE_ERRORS = (
    InvalidInput,
    MissingColumn,
    ParseError,
    NoBracket,
    InsufficientRows,
    DegenerateDenominator,
)


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _render_csv(meta: dict, header: list[str], rows: list[list]) -> str:
    lines = ["# " + json.dumps(meta, sort_keys=True, separators=(",", ":"))]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _render_json(meta: dict, header: list[str], rows: list[list]) -> str:
    return json.dumps({"meta": meta, "columns": header, "rows": rows}, sort_keys=True) + "\n"


def emit(cfg: dict, meta: dict, header: list[str], rows: list[list], suffix: str = "") -> Path | None:
    fmt = cfg.get("format") or "csv"
    text = _render_json(meta, header, rows) if fmt == "json" else _render_csv(meta, header, rows)
    out = cfg.get("out")
    if out:
        path = Path(out)
        if suffix:
            path = path.with_name(path.stem + suffix + path.suffix)
        path.write_text(text, encoding="utf-8")
        return path
    sys.stdout.write(text)
    return None


def _figure_path(cfg: dict, suffix: str = "") -> Path | None:
    out = cfg.get("out")
    if not out or not cfg.get("plot", True):
        return None
    path = Path(out)
    return path.with_name(path.stem + suffix + ".png")


def _lambda_grid(cfg: dict) -> list[float]:
    lo, hi, count = cfg.get("lambda_min"), cfg.get("lambda_max"), cfg["lambda_count"]
    if lo is None or hi is None:
        raise InvalidInput("--lambda-min and --lambda-max are required")
    if count < 1 or hi < lo:
        raise InvalidInput("need lambda_count >= 1 and lambda_max >= lambda_min")
    return [float(v) for v in np.linspace(lo, hi, int(count))]


def _floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in str(text).split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from exc


def _strs(text: str) -> list[str]:
    return [tok.strip() for tok in str(text).split(",") if tok.strip() != ""]


# ---------------------------------------------------------------------------
# configuration resolution


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags; echo the resolved set."""
    cfg = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInput(f"cannot read config file {config_path}: {exc}") from exc
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _resolved_meta(cfg: dict, command: str) -> dict:
    meta = {k: v for k, v in cfg.items() if k not in ("out", "format", "plot")}
    meta["command"] = command
    meta["version"] = __version__
    return meta


# ---------------------------------------------------------------------------
# subcommands


TAU_DEFAULTS = dict(
    kappa=None, lam=None, sigma_kind="identity", rho=0.0, p=200,
    format=None, out=None, plot=True, seed=0,
)


def cmd_tau(cfg: dict) -> int:
    if cfg["kappa"] is None or cfg["lam"] is None:
        raise InvalidInput("--kappa and --lambda are required")
    p = int(cfg["p"])
    if p % 2:
        raise InvalidInput(f"p must be even (p = 2d), got {p}")
    rho = float(cfg["rho"]) if cfg["sigma_kind"] == "isotropic" else 0.0
    cov = BlockCovariance.isotropic(p // 2, rho)
    sol = solve_tau(cov, float(cfg["kappa"]), float(cfg["lam"]))
    if cfg.get("format") is None and not cfg.get("out"):
        print(f"tau = {sol.tau!r}  residual = {sol.residual:.3e}  iterations = {sol.iterations}")
        return 0
    meta = _resolved_meta(cfg, "tau")
    emit(cfg, meta, ["tau", "residual", "iterations"], [[sol.tau, sol.residual, sol.iterations]])
    return 0


FIXED_POINT_DEFAULTS = dict(
    d=100, rho=0.0, bbar=0.0, b_kind="constant", sigma_b=0.0, cbar=0.0, c_kind="constant",
    sigma=0.1, lam=None, epsilon=1e-3, seed=0, format=None, out=None, plot=True,
)


def _effect_recipes(cfg: dict) -> tuple[EffectRecipe, EffectRecipe]:
    b = EffectRecipe(kind=cfg["b_kind"], mean=float(cfg["bbar"]), std=float(cfg["sigma_b"]))
    c = EffectRecipe(kind=cfg["c_kind"], mean=float(cfg["cbar"]))
    return b, c


def cmd_fixed_point(cfg: dict) -> int:
    if cfg["lam"] is None:
        raise InvalidInput("--lambda is required")
    lam = float(cfg["lam"])
    d, seed = int(cfg["d"]), int(cfg["seed"])
    cov = BlockCovariance.isotropic(d, float(cfg["rho"]))
    b_recipe, c_recipe = _effect_recipes(cfg)
    effect = PerformativeEffect.from_recipes(d, b_recipe, c_recipe, substream(seed, 0, 0, Purpose.B_RESAMPLE))
    theta_star = sample_theta_star(d, substream(seed, 0, 0, Purpose.THETA_STAR))
    spec = ModelSpec(cov=cov, effect=effect, noise_std=float(cfg["sigma"]), theta_star=theta_star)
    theta_inf = fixed_point(spec, lam)
    residual = float(np.linalg.norm(population_step(spec, lam, theta_inf) - theta_inf))
    risk = excess_risk(cov, theta_inf, theta_star)
    avg = exact_avg_risk(cov, effect, lam)
    k_eps = iterations_to_tolerance(spec, max(lam, 0.0), float(cfg["epsilon"]))
    header = ["lambda", "risk_theta_star", "exact_avg_risk", "fp_residual", "iterations_to_tolerance"]
    row = [lam, risk, avg, residual, k_eps]
    if cfg.get("format") is None and not cfg.get("out"):
        print(" ".join(f"{h}={_fmt(v)}" for h, v in zip(header, row)))
        return 0
    emit(cfg, _resolved_meta(cfg, "fixed-point"), header, [row])
    return 0


POP_DEFAULTS = dict(
    d=100, rho=0.0, bbar=None, b_kind="uniform_span", sigma_b=0.0, cbar=0.0, c_kind="constant",
    sigma=0.1, lambda_min=None, lambda_max=None, lambda_count=100,
    trials_a=20, trials_b=5, empirical=True, seed=0, format=None, out=None, plot=True,
)


def cmd_population_sweep(cfg: dict) -> int:
    if cfg["bbar"] is None:
        raise InvalidInput("--bbar is required")
    grid = _lambda_grid(cfg)
    d, seed = int(cfg["d"]), int(cfg["seed"])
    cov = BlockCovariance.isotropic(d, float(cfg["rho"]))
    b_recipe, c_recipe = _effect_recipes(cfg)
    trials_b = max(1, int(cfg["trials_b"]))
    effects = [
        PerformativeEffect.from_recipes(d, b_recipe, c_recipe, substream(seed, i, 0, Purpose.B_RESAMPLE))
        for i in range(trials_b)
    ]
    sigma_mat = assemble_sigma(cov)

    failed: list[float] = []
    exact_cols, first_cols, second_cols = [], [], []
    emp_mean, emp_std = [], []
    theta_stars = None
    if cfg["empirical"]:
        theta_stars = np.stack(
            [sample_theta_star(d, substream(seed, j, 0, Purpose.THETA_STAR)) for j in range(int(cfg["trials_a"]))]
        )
    for lam in grid:
        try:
            exact_cols.append(float(np.mean([exact_avg_risk(cov, e, lam) for e in effects])))
            first_cols.append(float(np.mean([risk_first_order(cov, e, lam) for e in effects])))
            second_cols.append(float(np.mean([risk_second_order(cov, e, lam) for e in effects])))
            if theta_stars is not None:
                risks = []
                for e in effects:
                    m = sigma_mat + lam * np.eye(2 * d) - sigma_mat * e.diag()[np.newaxis, :]
                    a = np.linalg.solve(m, sigma_mat) - np.eye(2 * d)
                    diffs = theta_stars @ a.T
                    risks.append(np.einsum("ij,ij->i", diffs @ sigma_mat, diffs))
                risks = np.concatenate(risks)
                emp_mean.append(float(risks.mean()))
                emp_std.append(float(risks.std(ddof=1)))
        except (SingularSystem, np.linalg.LinAlgError):
            failed.append(lam)
            exact_cols.append(float("nan"))
            first_cols.append(float("nan"))
            second_cols.append(float("nan"))
            if theta_stars is not None:
                emp_mean.append(float("nan"))
                emp_std.append(float("nan"))

    def b_averaged_exact(lam: float) -> float:
        return float(np.mean([exact_avg_risk(cov, e, lam) for e in effects]))

    lam_emp, _, _ = grid_then_golden(b_averaged_exact, grid, skip_errors=(SingularSystem,))
    tr_s1 = float(np.trace(schur_predictive(cov)))
    lam_pop = float(cfg["bbar"]) * d / tr_s1
    lam_pop2 = float(np.mean([second_order_optimal_lambda(cov, e) for e in effects]))

    meta = _resolved_meta(cfg, "population-sweep")
    meta.update(lambda_emp=lam_emp, lambda_pop=lam_pop, lambda_pop2=lam_pop2, failed_points=failed)
    header = ["lambda", "exact", "first_order", "second_order"]
    cols = [grid, exact_cols, first_cols, second_cols]
    if theta_stars is not None:
        header += ["emp_mean", "emp_std"]
        cols += [emp_mean, emp_std]
    rows = [list(r) for r in zip(*cols)]
    emit(cfg, meta, header, rows)
    fig = _figure_path(cfg)
    if fig:
        from .plots import render_sweep_figure

        curves = {
            "exact (avg over b draws)": (exact_cols, None),
            "first order": (first_cols, None),
            "second order": (second_cols, None),
        }
        if theta_stars is not None:
            curves["empirical"] = (emp_mean, emp_std)
        render_sweep_figure(
            fig, grid, curves,
            markers={"lambda_emp": lam_emp, "lambda_pop": lam_pop, "lambda_pop2": lam_pop2},
            title=f"population regime, d={d}, rho={cfg['rho']}, bbar={cfg['bbar']}",
        )
    return 1 if failed else 0


PROP_DEFAULTS = dict(
    n=4000, kappa=None, rho=0.0, bbar_list=None, cbar_list=None, sigma=0.2,
    steps=5, trials=20, lambda_min=None, lambda_max=None, lambda_count=100,
    theta_star_mode="resample", seed=0, format=None, out=None, plot=True,
)


def cmd_prop_sweep(cfg: dict) -> int:
    if cfg["kappa"] is None:
        raise InvalidInput("--kappa is required")
    grid = _lambda_grid(cfg)
    n, seed = int(cfg["n"]), int(cfg["seed"])
    kappa_req = float(cfg["kappa"])
    p = 2 * round(kappa_req * n / 2)
    kappa = p / n
    d = p // 2
    rho, sigma = float(cfg["rho"]), float(cfg["sigma"])
    bbars = [float(v) for v in (cfg["bbar_list"] if cfg["bbar_list"] is not None else [0.0])]
    cbars = [float(v) for v in (cfg["cbar_list"] if cfg["cbar_list"] is not None else [0.0])]
    if len(bbars) > 1 and len(cbars) > 1:
        raise InvalidInput("vary either bbar or cbar in one sweep, not both")
    pairs = [(b, cbars[0]) for b in bbars] if len(cbars) == 1 else [(bbars[0], c) for c in cbars]
    cov = BlockCovariance.isotropic(d, rho)
    variants = [
        PerformativeEffect(b=np.full(d, b), c=np.full(d, c)) for b, c in pairs
    ]
    template = ModelSpec(
        cov=cov,
        effect=variants[0],
        noise_std=sigma,
        theta_star=sample_theta_star(d, substream(seed, 0, 0, Purpose.THETA_STAR)),
    )
    config = RidgeConfig(lam=grid[0], n=n, p=p, normalization=Normalization.PER_P)
    results = monte_carlo_sweep_multi(
        template, variants, config, grid,
        n_trials=int(cfg["trials"]), steps=int(cfg["steps"]), master_seed=seed,
        resample_theta_star=(cfg["theta_star_mode"] == "resample"),
    )
    header = ["lambda", "b_bar", "c_bar", "mean_risk", "std_risk", "theory"]
    rows = []
    failed = 0
    for (b, c), res in zip(pairs, results):
        effect = PerformativeEffect(b=np.full(d, b), c=np.full(d, c))
        theory = [
            expected_r_eq(EquivRiskInputs(cov=cov, effect=effect, lam=lam, kappa=kappa, noise_std=sigma))
            for lam in grid
        ]
        failed += res.meta.get("failed_points", 0)
        for lam, m, s, t in zip(grid, res.mean_risk, res.std_risk, theory):
            rows.append([lam, b, c, m, s, t])
    meta = _resolved_meta(cfg, "prop-sweep")
    meta.update(p=p, kappa_actual=kappa, failed_points=failed)
    emit(cfg, meta, header, rows)
    fig = _figure_path(cfg)
    if fig:
        from .plots import render_sweep_figure

        curves = {}
        for (b, c), res in zip(pairs, results):
            label = f"bbar={b:g}, cbar={c:g}"
            curves[f"mc {label}"] = (res.mean_risk, res.std_risk)
            curves[f"theory {label}"] = (
                [row[5] for row in rows if row[1] == b and row[2] == c], None,
            )
        render_sweep_figure(
            fig, grid, curves,
            title=f"over-parameterized regime, n={n}, kappa={kappa:g}, sigma={sigma:g}, rho={rho:g}",
        )
    return 1 if failed else 0


THEOREM3_DEFAULTS = dict(
    kappa_list=None, sigma_list=None, rho=0.0, seed=0, format=None, out=None, plot=True,
)


def cmd_theorem3(cfg: dict) -> int:
    if cfg["kappa_list"] is None or cfg["sigma_list"] is None:
        raise InvalidInput("--kappa-list and --sigma-list are required")
    rho = float(cfg["rho"])
    header = [
        "kappa", "sigma", "tau0", "b1", "c1", "b2", "c2", "b3", "c3",
        "lambda_eq_d0", "risk_eq_star", "sigma_b1",
    ]
    rows = []
    dict_rows = []
    for kappa in cfg["kappa_list"]:
        root = sigma_b1_root(float(kappa))
        for sigma in cfg["sigma_list"]:
            c = theorem3_coefficients(float(kappa), float(sigma), rho)
            rows.append([
                c.kappa, c.sigma, c.tau0, c.b1, c.c1, c.b2, c.c2, c.b3, c.c3,
                c.lambda_eq_d0, c.risk_eq_star, root,
            ])
            dict_rows.append(dict(zip(header, rows[-1])))
    emit(cfg, _resolved_meta(cfg, "theorem3"), header, rows)
    fig = _figure_path(cfg)
    if fig:
        from .plots import render_theorem3_figure

        render_theorem3_figure(fig, dict_rows)
    return 0


REAL_DEFAULTS = dict(
    dataset=None, recipe="housing", target=None, drop=None, keep=None, performative=None,
    bbar_list=None, per_step_n=None, steps=4, lambda_min=None, lambda_max=None,
    lambda_count=100, seed=0, format=None, out=None, plot=True,
)


def cmd_real(cfg: dict) -> int:
    if cfg["dataset"] is None:
        raise InvalidInput("--dataset is required")
    grid = _lambda_grid(cfg)
    ds = load_and_preprocess(
        cfg["dataset"],
        recipe=cfg["recipe"],
        target=cfg.get("target"),
        drop=tuple(cfg.get("drop") or ()),
        keep=tuple(cfg["keep"]) if cfg.get("keep") else None,
    )
    if cfg["performative"] is not None:
        perf = tuple(cfg["performative"])
    elif cfg["recipe"] == "housing":
        perf = HOUSING_RECIPE.performative
    elif cfg["recipe"] == "lsac":
        perf = LSAC_RECIPE.performative
    else:
        raise InvalidInput("custom recipe requires --performative")
    bbars = [float(v) for v in (cfg["bbar_list"] if cfg["bbar_list"] is not None else [0.0, 0.05, 0.1, 0.15, 0.2])]
    seed, steps = int(cfg["seed"]), int(cfg["steps"])
    per_step_n = int(cfg["per_step_n"]) if cfg["per_step_n"] is not None else None

    zero_plan = ShiftPlan(performative_feature_names=perf, b_bar=0.0)
    raw_zero = real_rrm_experiment(ds, zero_plan, grid, per_step_n, seed, steps, baseline=0.0)
    baseline = float(min(raw_zero.mean_risk))

    header = ["lambda", "b_bar", "mean_risk", "std_risk"]
    rows: list[list] = []
    curves = []
    optima = []
    for b in bbars:
        plan = ShiftPlan(performative_feature_names=perf, b_bar=b)
        res = real_rrm_experiment(ds, plan, grid, per_step_n, seed, steps, baseline=baseline)
        j = int(np.argmin(res.mean_risk))
        optima.append([b, grid[j], res.mean_risk[j]])
        curves.append((b, grid, res.mean_risk))
        for lam, m, s in zip(grid, res.mean_risk, res.std_risk):
            rows.append([lam, b, m, s])

    meta = _resolved_meta(cfg, "real")
    meta.update(
        baseline=baseline,
        baseline_definition="min over lambda grid of no-shift test MSE on the same splits",
        preprocessing_log=ds.provenance["log"],
        n_rows=ds.provenance["n_rows"],
        n_features=ds.provenance["n_features"],
        performative=list(perf),
    )
    emit(cfg, meta, header, rows)
    emit(cfg, meta, ["b_bar", "lambda_star", "risk_star"], optima, suffix="_optima")
    if cfg.get("out"):
        sidecar = Path(cfg["out"]).with_suffix(".meta.json")
        sidecar.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    fig = _figure_path(cfg)
    if fig:
        from .plots import render_real_figure

        render_real_figure(
            fig, curves, [tuple(o) for o in optima],
            title=f"{cfg['recipe']} (n per step = {per_step_n or 'full fold'})",
        )
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perfridge",
        description="Performative ridge regression experiments",
    )
    parser.add_argument("--version", action="version", version=f"perfridge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", type=str, default=None, help="output file path")
        p.add_argument("--format", choices=["csv", "json"], default=None, help="output format")
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=None,
                       help="render a PNG figure next to --out")

    p_tau = sub.add_parser("tau", help="solve the effective-regularization equation")
    p_tau.add_argument("--kappa", type=float, default=None)
    p_tau.add_argument("--lambda", dest="lam", type=float, default=None)
    p_tau.add_argument("--sigma-kind", dest="sigma_kind", choices=["identity", "isotropic"], default=None)
    p_tau.add_argument("--rho", type=float, default=None)
    p_tau.add_argument("--p", type=int, default=None)
    common(p_tau)
    p_tau.set_defaults(handler=cmd_tau, defaults=TAU_DEFAULTS)

    p_fp = sub.add_parser("fixed-point", help="population fixed point at one penalty")
    p_fp.add_argument("--d", type=int, default=None)
    p_fp.add_argument("--rho", type=float, default=None)
    p_fp.add_argument("--bbar", type=float, default=None)
    p_fp.add_argument("--b-kind", dest="b_kind", choices=["constant", "uniform_span", "uniform_meanstd"], default=None)
    p_fp.add_argument("--sigma-b", dest="sigma_b", type=float, default=None)
    p_fp.add_argument("--cbar", type=float, default=None)
    p_fp.add_argument("--c-kind", dest="c_kind", choices=["constant", "uniform_span", "uniform_meanstd"], default=None)
    p_fp.add_argument("--sigma", type=float, default=None)
    p_fp.add_argument("--lambda", dest="lam", type=float, default=None)
    p_fp.add_argument("--epsilon", type=float, default=None)
    common(p_fp)
    p_fp.set_defaults(handler=cmd_fixed_point, defaults=FIXED_POINT_DEFAULTS)

    p_pop = sub.add_parser("population-sweep", help="population-regime risk vs penalty")
    p_pop.add_argument("--d", type=int, default=None)
    p_pop.add_argument("--rho", type=float, default=None)
    p_pop.add_argument("--bbar", type=float, default=None)
    p_pop.add_argument("--b-kind", dest="b_kind", choices=["constant", "uniform_span", "uniform_meanstd"], default=None)
    p_pop.add_argument("--sigma-b", dest="sigma_b", type=float, default=None)
    p_pop.add_argument("--cbar", type=float, default=None)
    p_pop.add_argument("--c-kind", dest="c_kind", choices=["constant", "uniform_span", "uniform_meanstd"], default=None)
    p_pop.add_argument("--sigma", type=float, default=None)
    p_pop.add_argument("--lambda-min", dest="lambda_min", type=float, default=None)
    p_pop.add_argument("--lambda-max", dest="lambda_max", type=float, default=None)
    p_pop.add_argument("--lambda-count", dest="lambda_count", type=int, default=None)
    p_pop.add_argument("--trials-a", dest="trials_a", type=int, default=None)
    p_pop.add_argument("--trials-b", dest="trials_b", type=int, default=None)
    p_pop.add_argument("--empirical", action=argparse.BooleanOptionalAction, default=None)
    common(p_pop)
    p_pop.set_defaults(handler=cmd_population_sweep, defaults=POP_DEFAULTS)

    p_prop = sub.add_parser("prop-sweep", help="over-parameterized Monte-Carlo sweep")
    p_prop.add_argument("--n", type=int, default=None)
    p_prop.add_argument("--kappa", type=float, default=None)
    p_prop.add_argument("--rho", type=float, default=None)
    p_prop.add_argument("--bbar-list", dest="bbar_list", type=_floats, default=None)
    p_prop.add_argument("--cbar-list", dest="cbar_list", type=_floats, default=None)
    p_prop.add_argument("--sigma", type=float, default=None)
    p_prop.add_argument("--steps", type=int, default=None)
    p_prop.add_argument("--trials", type=int, default=None)
    p_prop.add_argument("--lambda-min", dest="lambda_min", type=float, default=None)
    p_prop.add_argument("--lambda-max", dest="lambda_max", type=float, default=None)
    p_prop.add_argument("--lambda-count", dest="lambda_count", type=int, default=None)
    p_prop.add_argument("--theta-star-mode", dest="theta_star_mode", choices=["resample", "fixed"], default=None)
    common(p_prop)
    p_prop.set_defaults(handler=cmd_prop_sweep, defaults=PROP_DEFAULTS)

    p_t3 = sub.add_parser("theorem3", help="expansion coefficients over a (kappa, sigma) grid")
    p_t3.add_argument("--kappa-list", dest="kappa_list", type=_floats, default=None)
    p_t3.add_argument("--sigma-list", dest="sigma_list", type=_floats, default=None)
    p_t3.add_argument("--rho", type=float, default=None)
    common(p_t3)
    p_t3.set_defaults(handler=cmd_theorem3, defaults=THEOREM3_DEFAULTS)

    p_real = sub.add_parser("real", help="retraining experiment on a CSV dataset")
    p_real.add_argument("--dataset", type=str, default=None)
    p_real.add_argument("--recipe", choices=["housing", "lsac", "custom"], default=None)
    p_real.add_argument("--target", type=str, default=None)
    p_real.add_argument("--drop", type=_strs, default=None)
    p_real.add_argument("--keep", type=_strs, default=None)
    p_real.add_argument("--performative", type=_strs, default=None)
    p_real.add_argument("--bbar-list", dest="bbar_list", type=_floats, default=None)
    p_real.add_argument("--per-step-n", dest="per_step_n", type=int, default=None)
    p_real.add_argument("--steps", type=int, default=None)
    p_real.add_argument("--lambda-min", dest="lambda_min", type=float, default=None)
    p_real.add_argument("--lambda-max", dest="lambda_max", type=float, default=None)
    p_real.add_argument("--lambda-count", dest="lambda_count", type=int, default=None)
    common(p_real)
    p_real.set_defaults(handler=cmd_real, defaults=REAL_DEFAULTS)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args, args.defaults)
        return args.handler(cfg)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PerfridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
