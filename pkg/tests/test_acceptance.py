"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Tolerances are pinned here and nowhere else.  Criteria 6, 7 and 10 are the
Monte-Carlo heavy ones (see the `slow` marker); run them with the full suite
before shipping:  pytest -v tests/test_acceptance.py

Criterion 1's Monte-Carlo sub-check is known to be unattainable as stated in
a window around the zero-risk penalty; see NOTES in the test body and the
repository-external decisions ledger for the quantitative analysis.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from perfridge.cli import main as cli_main
from perfridge.dataset import (
    HOUSING_RECIPE,
    LSAC_RECIPE,
    ShiftPlan,
    load_and_preprocess,
    real_rrm_experiment,
)
from perfridge.detequiv import (
    EquivRiskInputs,
    closed_form_isotropic,
    expected_r_eq,
    r_eq,
    r_eq_two_step,
    sigma_b1_root,
    solve_tau,
    theorem3_coefficients,
)
from perfridge.model import (
    BlockCovariance,
    ModelSpec,
    Normalization,
    PerformativeEffect,
    RidgeConfig,
    sample_theta_star,
)
from perfridge.population import (
    exact_avg_risk,
    numeric_optimal_lambda,
    optimal_population,
    second_order_optimal_lambda,
)
from perfridge.rng import Purpose, substream
from perfridge.simulate import monte_carlo_sweep, monte_carlo_sweep_multi


def _report(num: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"\n[criterion {num:02d}] {name}: {status}  {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def _constant_spec(d: int, bbar: float, noise: float, seed: int) -> ModelSpec:
    cov = BlockCovariance.isotropic(d, 0.0)
    eff = PerformativeEffect(b=np.full(d, bbar), c=np.zeros(d))
    ts = sample_theta_star(d, substream(seed, 0, 0, Purpose.THETA_STAR))
    return ModelSpec(cov=cov, effect=eff, noise_std=noise, theta_star=ts)


def test_criterion_01_population_theory_exactness():
    """Scalar-oracle exactness of the averaged risk, and Monte-Carlo agreement.

    NOTE: the Monte-Carlo sub-check cannot hold near lam = bbar for constant
    b: there the exact risk vanishes while the finite-sample estimate has an
    irreducible positive floor (Wishart fluctuations of the sample Gram,
    about 1.5e-4 at n = 5e4, p = 200) that exceeds any 3-standard-error band.
    The check is implemented as stated and reported honestly.
    """
    d, n, noise = 100, 50_000, 0.1
    exact_ok = True
    mc_viol = []
    worst = 0.0
    for bbar in (-0.1, 0.0, 0.2):
        grid = np.linspace(bbar - 0.25, bbar + 0.35, 100)
        cov = BlockCovariance.isotropic(d, 0.0)
        eff = PerformativeEffect(b=np.full(d, bbar), c=np.zeros(d))
        for lam in grid:
            oracle = ((bbar - lam) / (1 + lam - bbar)) ** 2
            if abs(exact_avg_risk(cov, eff, lam) - oracle) > 1e-12:
                exact_ok = False
        spec = _constant_spec(d, bbar, noise, seed=100)
        cfg = RidgeConfig(lam=float(grid[0]), n=n, p=2 * d, normalization=Normalization.PER_N)
        sweep = monte_carlo_sweep(spec, cfg, list(grid), n_trials=20, steps=5, master_seed=100)
        for lam, mean, std in zip(grid, sweep.mean_risk, sweep.std_risk):
            se = std / np.sqrt(sweep.n_trials)
            gap = abs(mean - ((bbar - lam) / (1 + lam - bbar)) ** 2)
            if gap > 3 * se:
                mc_viol.append((bbar, float(lam), gap / se if se > 0 else np.inf))
                worst = max(worst, gap)
    detail = (
        f"oracle-exactness {'ok' if exact_ok else 'VIOLATED'}; "
        f"MC 3se violations at {len(mc_viol)}/300 grid points "
        f"(worst gap {worst:.2e}; all near lam=bbar; see ledger)"
    )
    _report(1, "population theory exactness", exact_ok and not mc_viol, detail)


def test_criterion_02_corollary_reproduction():
    d = 100
    cov = BlockCovariance.isotropic(d, 0.0)
    bbars = [b for b in np.linspace(-0.1, 0.2, 24) if abs(b) >= 0.02][:20]
    joint = 0
    for i, bbar in enumerate(bbars):
        rng = substream(2024, i, 0, Purpose.B_RESAMPLE)
        b = rng.uniform(min(0, 2 * bbar), max(0, 2 * bbar), size=d)
        eff = PerformativeEffect(b=b, c=np.zeros(d))
        lam_emp, _ = numeric_optimal_lambda(cov, eff, np.linspace(bbar - 0.3, bbar + 0.3, 100))
        lam_pop = optimal_population(cov, eff).lambda_star
        lam_pop2 = second_order_optimal_lambda(cov, eff)
        within = abs(lam_emp - lam_pop) <= max(0.02, 0.15 * abs(lam_pop))
        closer = abs(lam_pop2 - lam_emp) < abs(lam_pop - lam_emp)
        joint += int(within and closer)
    _report(2, "Corollary-1 reproduction", joint >= 16, f"{joint}/20 instances satisfy both clauses")


def test_criterion_03_zero_risk_identity_case():
    d = 100
    cov = BlockCovariance.isotropic(d, 0.0)
    eff = PerformativeEffect(b=np.full(d, 0.17), c=np.zeros(d))
    opt = optimal_population(cov, eff)
    ok = abs(opt.lambda_star - 0.17) <= 1e-14 and abs(opt.risk_star) <= 1e-14
    _report(3, "zero-risk identity case", ok, f"lam*={opt.lambda_star!r} risk*={opt.risk_star!r}")


def test_criterion_04_variance_identity():
    d = 100
    cov = BlockCovariance.isotropic(d, 0.0)
    ok = True
    worst = 0.0
    for i in range(20):
        rng = substream(404, i, 0, Purpose.B_RESAMPLE)
        b = rng.uniform(-0.4, 0.6, size=d)
        opt = optimal_population(cov, PerformativeEffect(b=b, c=np.zeros(d)))
        gap = abs(opt.risk_star - float(np.var(b)))
        worst = max(worst, gap)
        ok = ok and gap <= 1e-12
    _report(4, "variance identity at rho=0", ok, f"worst |risk* - var(b)| = {worst:.2e}")


def test_criterion_05_tau_solver():
    kappas = np.linspace(1.05, 10.0, 10)
    lams = np.geomspace(0.05, 5.0, 10)
    rng = np.random.default_rng(55)
    d = 30
    a = rng.standard_normal((d, d))
    explicit = BlockCovariance(
        d=d, sigma1=a @ a.T / d + np.eye(d), sigma2=np.eye(d), sigma12=0.2 * np.eye(d)
    )
    covs = [BlockCovariance.isotropic(d, 0.0), BlockCovariance.isotropic(d, 0.5), explicit]
    worst_res = 0.0
    ok = True
    for cov in covs:
        for kappa in kappas:
            prev = -np.inf
            for lam in lams:
                sol = solve_tau(cov, float(kappa), float(lam))
                worst_res = max(worst_res, abs(sol.residual))
                ok = ok and abs(sol.residual) <= 1e-12 and sol.tau > prev
                prev = sol.tau
    # analytic quadratic root on the identity covariance
    cov_id = covs[0]
    for kappa in (1.3, 2.0, 6.0):
        for lam in (0.1, 1.0, 4.0):
            bq = kappa * lam + kappa - 1
            root = (bq + np.sqrt(bq * bq + 4 * kappa * lam)) / 2
            ok = ok and abs(solve_tau(cov_id, kappa, lam).tau - root) <= 1e-10
    _report(5, "tau solver", ok, f"worst residual {worst_res:.2e} on 10x10x3 grid")


@pytest.mark.slow
def test_criterion_06_deterministic_equivalent_vs_monte_carlo():
    n, trials = 4000, 20
    failures = []
    worst_sigma_units = 0.0
    for rho in (0.0, 0.5):
        for kappa in (1.1, 2.0):
            p = 2 * round(kappa * n / 2)
            d = p // 2
            for sigma in (0.2, 0.7, 1.0):
                spec = ModelSpec(
                    cov=BlockCovariance.isotropic(d, rho),
                    effect=PerformativeEffect(b=np.zeros(d), c=np.zeros(d)),
                    noise_std=sigma,
                    theta_star=sample_theta_star(d, substream(600, 0, 0, Purpose.THETA_STAR)),
                )
                lams = [0.3, 1.0]
                cfg = RidgeConfig(lam=lams[0], n=n, p=p, normalization=Normalization.PER_P)
                # D = 0: the risk distribution is the same at every round
                sweep = monte_carlo_sweep(spec, cfg, lams, trials, steps=1, master_seed=600)
                for lam, mean, std in zip(lams, sweep.mean_risk, sweep.std_risk):
                    theory = expected_r_eq(
                        EquivRiskInputs(spec.cov, spec.effect, lam, p / n, sigma)
                    )
                    se = std / np.sqrt(trials)
                    units = abs(mean - theory) / se
                    worst_sigma_units = max(worst_sigma_units, units)
                    if units > 3:
                        failures.append((rho, kappa, sigma, lam, units))
                print(f"  c6 config rho={rho} kappa={kappa} sigma={sigma}: ok")
    # O(bbar^2) residual scaling at (kappa=1.1, sigma=0.2, rho=0), two rounds
    kappa, sigma, lam = 1.1, 0.2, 0.3
    p = 2 * round(kappa * n / 2)
    d = p // 2
    bbars = [0.05, 0.1, 0.2]
    variants = [PerformativeEffect(b=np.full(d, b), c=np.zeros(d)) for b in [0.0] + bbars]
    template = ModelSpec(
        cov=BlockCovariance.isotropic(d, 0.0),
        effect=variants[0],
        noise_std=sigma,
        theta_star=sample_theta_star(d, substream(601, 0, 0, Purpose.THETA_STAR)),
    )
    cfg = RidgeConfig(lam=lam, n=n, p=p, normalization=Normalization.PER_P)
    results = monte_carlo_sweep_multi(template, variants, cfg, [lam], trials, 2, 601)
    theory = [
        expected_r_eq(EquivRiskInputs(template.cov, v, lam, p / n, sigma)) for v in variants
    ]
    base_offset = results[0].mean_risk[0] - theory[0]
    residuals = [
        abs((results[k + 1].mean_risk[0] - theory[k + 1]) - base_offset)
        for k in range(len(bbars))
    ]
    slope = float(np.polyfit(np.log(bbars), np.log(residuals), 1)[0])
    slope_ok = abs(slope - 2.0) <= 0.3
    ok = not failures and slope_ok
    _report(
        6,
        "deterministic equivalent vs Monte-Carlo",
        ok,
        f"worst |mean-theory| = {worst_sigma_units:.2f} se units; "
        f"bbar^2 scaling slope = {slope:.2f} (residuals {['%.1e' % r for r in residuals]})",
    )


@pytest.mark.slow
def test_criterion_07_theorem3_phenomenology():
    n, trials, steps = 4000, 20, 2

    def run_pair(kappa, sigma, rho, bbars, cbars, grid, seed):
        p = 2 * round(kappa * n / 2)
        d = p // 2
        variants = [
            PerformativeEffect(b=np.full(d, b), c=np.full(d, c)) for b, c in zip(bbars, cbars)
        ]
        template = ModelSpec(
            cov=BlockCovariance.isotropic(d, rho),
            effect=variants[0],
            noise_std=sigma,
            theta_star=sample_theta_star(d, substream(seed, 0, 0, Purpose.THETA_STAR)),
        )
        cfg = RidgeConfig(lam=float(grid[0]), n=n, p=p, normalization=Normalization.PER_P)
        results = monte_carlo_sweep_multi(
            template, variants, cfg, list(grid), trials, steps, seed, keep_trial_risks=True
        )
        j0 = int(np.argmin(results[0].mean_risk))
        j1 = int(np.argmin(results[1].mean_risk))
        paired = (
            results[1].meta["trial_risks"][:, j1] - results[0].meta["trial_risks"][:, j0]
        )
        dmean = float(paired.mean())
        dse = float(paired.std(ddof=1) / np.sqrt(trials))
        return grid[j0], grid[j1], dmean, dse

    checks = []

    # (a) low noise: bbar=0.2 raises the optimal penalty, lowers the optimal risk
    grid_a = np.round(np.arange(0.024, 0.0801, 0.004), 6)
    l0, l1, dmean, dse = run_pair(1.1, 0.2, 0.0, [0.0, 0.2], [0.0, 0.0], grid_a, 701)
    coef_a = theorem3_coefficients(1.1, 0.2)
    checks.append(("a: lambda up", l1 > l0 and coef_a.b1 > 0, f"lam* {l0:.3f}->{l1:.3f}, B1={coef_a.b1:.3f}"))
    checks.append(("a: risk down at 2se", dmean + 2 * dse < 0 and coef_a.b2 < 0, f"dR={dmean:.4f}+-{dse:.4f}"))
    print(f"  c7 config (a) done: lam* {l0:.3f} -> {l1:.3f}, dR = {dmean:.4f} +- {dse:.4f}")

    # (b) high noise: bbar=0.2 lowers both
    grid_b = np.round(np.arange(0.40, 0.561, 0.02), 6)
    l0, l1, dmean, dse = run_pair(1.1, 0.7, 0.0, [0.0, 0.2], [0.0, 0.0], grid_b, 702)
    coef_b = theorem3_coefficients(1.1, 0.7)
    checks.append(("b: lambda down", l1 < l0 and coef_b.b1 < 0, f"lam* {l0:.3f}->{l1:.3f}, B1={coef_b.b1:.3f}"))
    checks.append(("b: risk down at 2se", dmean + 2 * dse < 0 and coef_b.b2 < 0, f"dR={dmean:.4f}+-{dse:.4f}"))
    print(f"  c7 config (b) done: lam* {l0:.3f} -> {l1:.3f}, dR = {dmean:.4f} +- {dse:.4f}")

    # (c) spurious effect: cbar=0.2 lowers the optimal risk
    grid_c = np.round(np.arange(0.13, 0.431, 0.06), 6)
    l0, l1, dmean, dse = run_pair(2.0, 0.5, 0.5, [0.0, 0.0], [0.0, 0.2], grid_c, 703)
    coef_c = theorem3_coefficients(2.0, 0.5)
    checks.append(("c: risk down at 2se", dmean + 2 * dse < 0 and coef_c.c2 < 0, f"dR={dmean:.4f}+-{dse:.4f}"))
    print(f"  c7 config (c) done: lam* {l0:.3f} -> {l1:.3f}, dR = {dmean:.4f} +- {dse:.4f}")

    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{name} [{'ok' if good else 'BAD'}: {info}]" for name, good, info in checks)
    _report(7, "Theorem-3 phenomenology", ok, detail)


def test_criterion_08_sign_lemmas_and_root():
    ok = True
    for kappa in (1.1, 1.5, 2.0, 3.0, 5.0, 10.0):
        signs = []
        for sigma in np.arange(0.0, 2.01, 0.25):
            c = theorem3_coefficients(kappa, float(sigma))
            ok = ok and c.b2 <= 1e-12 and c.c2 <= 1e-12
            if kappa >= 2.0:
                ok = ok and c.c1 <= 1e-12
            if abs(c.b1) > 1e-12:
                signs.append(np.sign(c.b1))
        flips = sum(1 for a, b in zip(signs, signs[1:]) if a != b)
        ok = ok and flips == 1
    root2 = sigma_b1_root(100.0) ** 2
    ok = ok and abs(root2 - 0.496111) <= 2e-4
    _report(8, "sign lemmas and B1 root", ok, f"sigma_B1(100)^2 = {root2:.6f}")


def test_criterion_09_consistency_chain():
    rng = np.random.default_rng(99)
    ok_eq, worst_eq = True, 0.0
    for _ in range(5):
        d = 40
        eff = PerformativeEffect(b=rng.uniform(-0.3, 0.3, d), c=rng.uniform(-0.3, 0.3, d))
        lam, kappa, sigma = rng.uniform(0.2, 2), rng.uniform(1.2, 3), rng.uniform(0.1, 1)
        a = expected_r_eq(EquivRiskInputs(BlockCovariance.isotropic(d, 0.0), eff, lam, kappa, sigma))
        b = closed_form_isotropic(0.0, eff, lam, kappa, sigma).r_tilde
        worst_eq = max(worst_eq, abs(a - b))
        ok_eq = ok_eq and abs(a - b) <= 1e-12

    d = 200
    cov = BlockCovariance.isotropic(d, 0.2)
    ts = sample_theta_star(d, substream(909, 0, 0, Purpose.THETA_STAR))
    theta0 = np.zeros(2 * d)
    b0 = np.linspace(0.1, 0.5, d)
    c0 = np.linspace(-0.3, 0.2, d)
    eps_list = [0.2, 0.1, 0.05, 0.02]
    gaps = []
    for eps in eps_list:
        inp = EquivRiskInputs(cov, PerformativeEffect(b=eps * b0, c=eps * c0), 0.8, 1.5, 0.4)
        gaps.append(abs(r_eq_two_step(inp, theta0, ts) - r_eq(inp, ts)))
    slope = float(np.polyfit(np.log(eps_list), np.log(gaps), 1)[0])
    ok_slope = abs(slope - 2.0) <= 0.2

    ok_even, worst_even = True, 0.0
    for rho in (0.25, 0.6):
        eff = PerformativeEffect(b=np.full(30, 0.2), c=np.full(30, -0.15))
        a = expected_r_eq(EquivRiskInputs(BlockCovariance.isotropic(30, rho), eff, 0.7, 1.8, 0.5))
        b = expected_r_eq(EquivRiskInputs(BlockCovariance.isotropic(30, -rho), eff, 0.7, 1.8, 0.5))
        worst_even = max(worst_even, abs(a - b))
        ok_even = ok_even and abs(a - b) <= 1e-12

    ok = ok_eq and ok_slope and ok_even
    _report(
        9,
        "consistency chain",
        ok,
        f"|expected-closed|={worst_eq:.1e}; two-step slope={slope:.2f}; even-in-rho gap={worst_even:.1e}",
    )


@pytest.mark.slow
def test_criterion_10_real_data_qualitative_claims(housing_csv, lsac_csv):
    bbars = [0.0, 0.05, 0.1, 0.15, 0.2]

    def optima(ds, perf, grid, per_step_n, seed):
        lams, risks = [], []
        for b in bbars:
            res = real_rrm_experiment(ds, ShiftPlan(perf, b), grid, per_step_n, seed, n_steps=4)
            j = int(np.argmin(res.mean_risk))
            lams.append(float(grid[j]))
            risks.append(float(res.mean_risk[j]))
        return lams, risks

    housing = load_and_preprocess(housing_csv, "housing")
    lams_h, _ = optima(housing, HOUSING_RECIPE.performative, np.linspace(0.0, 0.6, 100), 4000, seed=11)
    viol_h = sum(1 for i in range(4) if lams_h[i + 1] < lams_h[i])

    lsac = load_and_preprocess(lsac_csv, "lsac")
    lams_l4k, _ = optima(lsac, LSAC_RECIPE.performative, np.linspace(0.0, 1.5, 100), 4000, seed=11)
    viol_l4k = sum(1 for i in range(4) if lams_l4k[i + 1] < lams_l4k[i])

    lams_l100, risks_l100 = optima(lsac, LSAC_RECIPE.performative, np.linspace(0.02, 25.0, 100), 100, seed=5)
    lam_ok = all(lams_l100[i + 1] <= lams_l100[i] for i in range(4))
    risk_ok = all(risks_l100[i + 1] <= risks_l100[i] for i in range(4))

    ok = viol_h <= 1 and viol_l4k <= 1 and lam_ok and risk_ok
    detail = (
        f"housing n=4000 lam*={[f'{v:.3f}' for v in lams_h]} (viol {viol_h}); "
        f"lsac n=4000 lam*={[f'{v:.3f}' for v in lams_l4k]} (viol {viol_l4k}); "
        f"lsac n=100 lam*={[f'{v:.2f}' for v in lams_l100]} non-incr={lam_ok}, risk non-incr={risk_ok}"
    )
    _report(10, "real-data qualitative claims", ok, detail)


def test_criterion_11_cli_determinism(tmp_path, housing_csv):
    cases = {
        "tau": ["tau", "--kappa", "2", "--lambda", "1", "--p", "100", "--format", "csv"],
        "fixed-point": ["fixed-point", "--d", "15", "--bbar", "0.2", "--lambda", "0.1",
                        "--seed", "3", "--format", "csv"],
        "population-sweep": ["population-sweep", "--d", "25", "--bbar", "0.1",
                             "--lambda-min", "0", "--lambda-max", "0.3", "--lambda-count", "7",
                             "--trials-a", "3", "--trials-b", "2", "--seed", "8"],
        "prop-sweep": ["prop-sweep", "--n", "120", "--kappa", "1.5", "--sigma", "0.4",
                       "--bbar-list", "0,0.2", "--steps", "2", "--trials", "3",
                       "--lambda-min", "0.3", "--lambda-max", "1.2", "--lambda-count", "4",
                       "--seed", "9"],
        "theorem3": ["theorem3", "--kappa-list", "1.5,2", "--sigma-list", "0,0.5"],
        "real": ["real", "--dataset", str(housing_csv), "--recipe", "housing",
                 "--bbar-list", "0,0.1", "--per-step-n", "300",
                 "--lambda-min", "0", "--lambda-max", "0.5", "--lambda-count", "6",
                 "--seed", "4"],
    }
    mismatches = []
    for name, argv in cases.items():
        dirs = []
        for rep in range(2):
            outdir = tmp_path / f"{name}-{rep}"
            outdir.mkdir()
            out = outdir / "out.csv"
            status = cli_main(argv + ["--out", str(out)])
            assert status == 0, f"{name} exited {status}"
            dirs.append(outdir)
        files0 = sorted(p.name for p in dirs[0].iterdir())
        files1 = sorted(p.name for p in dirs[1].iterdir())
        if files0 != files1:
            mismatches.append(f"{name}: file sets differ")
            continue
        for fname in files0:
            if (dirs[0] / fname).read_bytes() != (dirs[1] / fname).read_bytes():
                mismatches.append(f"{name}/{fname}")
    _report(11, "CLI determinism", not mismatches, f"byte mismatches: {mismatches or 'none'}")
