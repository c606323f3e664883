"""
Experiment Agent
實驗主流程：路徑、邊際分布、估計與驗收檢查，委派計算給各模組
"""
import dataclasses
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from diagnostics import (
    derivative_error,
    exact_l2_increment_distance,
    fit_decay_rate,
    kde,
    ks_statistic,
    lp_increment_distance,
    moment_zscores,
    normality_shape,
    quadrature_reference,
    quasi_and_oracle_marginals,
    quasi_marginal_distance,
    quasi_ruin_time_distance,
    random_dividend_case,
)
from errors import AcceptanceError, NumericError, ParameterError
from estimator import (
    ContrastProblem,
    OptimizerOptions,
    alpha_schedule,
    fit,
    identifiability_margin,
    minimize_contrast,
    rate_rn,
)
from functionals import DividendFunctional, RuinTimeFunctional
from io_helpers import ensure_output_dir, run_pool, runtime_versions, write_frame, write_json, write_metric_rows
from levy_model import SamplingScheme, make_rng, simulate_increment_matrix, simulate_increments
from quasi import QuasiEnsemble, SimulatedMeasure, brute_force_expectation, empirical_expectation
from stepped_path import from_increments

logger = logging.getLogger(__name__)

# seed-stream tags, one per kind of task
PATHS, MARGINALS, ESTIMATION, ORACLE, VARIANCE, CHECK, LP = range(1, 8)

EXACTNESS_TRIALS = 10_000
MOMENT_DRAWS = 1_000_000
LP_REPLICATIONS = 200


def _seed(*parts):
    return np.random.SeedSequence([int(p) for p in parts])


def _cell_name(T, h):
    return f"T{T:g}_h{h:g}"


# ---------------------------------------------------------------------------
# Pool tasks (module level so they pickle)
# ---------------------------------------------------------------------------

def _paths_cell_task(task):
    model, T, h, alpha, identity, seed, index, directory = task
    scheme = SamplingScheme.from_horizon(T, h)
    increment_seq, perm_seq, oracle_seq = _seed(seed, PATHS, index).spawn(3)
    increments = simulate_increments(model, scheme, increment_seq)
    if identity:
        ensemble = QuasiEnsemble(increments, model.u0, h, np.tile(np.arange(scheme.n), (alpha, 1)))
    else:
        ensemble = QuasiEnsemble.sampled(increments, model.u0, h, alpha, perm_seq)
    cell_dir = ensure_output_dir(Path(directory) / _cell_name(T, h))
    ensemble.observed_path().to_csv(cell_dir / "observed.csv")
    written = ensemble.export_csv(cell_dir)

    # alpha independent true paths for comparison
    width = max(3, len(str(alpha - 1)))
    oracle_rows = simulate_increment_matrix(model, scheme, alpha, oracle_seq)
    for i, row in enumerate(oracle_rows):
        from_increments(model.u0, h, row).to_csv(cell_dir / f"oracle_{i:0{width}d}.csv")
    return {"T": T, "h": h, "n": scheme.n, "alpha": alpha, "files": len(written) + len(oracle_rows) + 1}


def _marginal_cell_task(task):
    model, T, h, cfg, seed, index = task
    scheme = SamplingScheme.from_horizon(T, h)
    stream = _seed(seed, MARGINALS, index)
    quasi_values, oracle_values = quasi_and_oracle_marginals(model, scheme, cfg.t, cfg.alpha, cfg.oracle_B, stream)
    rows = [("marginals", h, scheme.T, cfg.alpha, seed, "ks_marginal", ks_statistic(quasi_values, oracle_values))]
    if cfg.ruin_xi is not None:
        ruin_ks = quasi_ruin_time_distance(model, scheme, cfg.ruin_xi, cfg.alpha, cfg.oracle_B, stream.spawn(1)[0])
        rows.append(("marginals", h, scheme.T, cfg.alpha, seed, "ks_ruin_time", ruin_ks))
    return rows, quasi_values, oracle_values


def _lp_task(task):
    model, cfg, seed = task
    rows, estimates = [], []
    for n in cfg.lp_ns:
        scheme = SamplingScheme.hflt(n, cfg.lp_beta)
        k = min(scheme.n, max(1, int(round(cfg.t / scheme.h))))
        value = lp_increment_distance(model, scheme, k, cfg.lp_p, cfg.lp_replications, _seed(seed, LP, n))
        estimates.append(value)
        rows.append(("lp", scheme.h, scheme.T, 1, seed, f"lp{cfg.lp_p:g}_distance", value))
        if cfg.lp_p == 2.0:
            rows.append(("lp", scheme.h, scheme.T, 1, seed, "l2_exact", exact_l2_increment_distance(model, scheme, k)))
    rows.append(("lp", None, None, 1, seed, "lp_decay_rate", fit_decay_rate(cfg.lp_ns, estimates)))
    return rows


def _estimate_task(task):
    model, functional, box, opts, beta, n, alpha, seed, covariance = task
    scheme = SamplingScheme.hflt(n, beta)
    increment_seq, perm_seq = _seed(seed, ESTIMATION, n).spawn(2)
    increments = simulate_increments(model, scheme, increment_seq)
    ensemble = QuasiEnsemble.sampled(increments, model.u0, scheme.h, alpha, perm_seq)
    result = fit(ContrastProblem(ensemble, functional, box), opts, covariance=covariance)
    return n, seed, alpha, result


def _permutation_seed_task(task):
    model, functional, box, opts, increments, h, alpha, seed = task
    ensemble = QuasiEnsemble.sampled(increments, model.u0, h, alpha, _seed(seed, VARIANCE, alpha))
    return minimize_contrast(ContrastProblem(ensemble, functional, box), opts).theta_hat


class ExperimentAgent:
    """
    實驗代理
    四個動詞：
    1. simulate-paths：觀測路徑 + α_n 條 quasi-paths
    2. marginals：X_t 的 KS 距離與 KDE 曲線
    3. estimate：oracle θ₀、各 n 的 θ̂_n、摘要表
    4. check：驗收性質
    """

    def __init__(self, config):
        self.config = config
        self.model = config.model.to_model()
        self.root = ensure_output_dir(config.output_dir)

    def _verb_dir(self, verb):
        return ensure_output_dir(self.root / verb)

    def write_manifest(self, directory, verb):
        manifest = {
            "verb": verb,
            "config_hash": self.config.config_hash(),
            "config": self.config.to_dict(),
            "seeds": list(self.config.seeds),
            "versions": runtime_versions(),
        }
        write_json(Path(directory) / "manifest.json", manifest)

    # ------------------------------------------------------------------
    # simulate-paths
    # ------------------------------------------------------------------
    def run_paths(self):
        cfg = self.config.paths
        out = self._verb_dir("paths")
        seed = self.config.seeds[0]
        logger.info("[MODE] Paths experiment: %d cells, alpha=%d", len(cfg.cells()), cfg.alpha)
        tasks = [(self.model, T, h, cfg.alpha, cfg.identity_permutation, seed, i, str(out))
                 for i, (T, h) in enumerate(cfg.cells())]
        summary = run_pool(_paths_cell_task, tasks, self.config.jobs)
        for cell in summary:
            logger.info("[CELL] T=%g h=%g n=%d -> %d CSVs", cell["T"], cell["h"], cell["n"], cell["files"])
        write_frame(out / "cells.csv", pd.DataFrame(summary))
        (out / "plot_paths.py").write_text(PATHS_PLOT_SCRIPT, encoding="utf-8")
        self.write_manifest(out, "simulate-paths")
        return summary

    # ------------------------------------------------------------------
    # marginals
    # ------------------------------------------------------------------
    def run_marginals(self):
        cfg = self.config.marginals
        out = self._verb_dir("marginals")
        logger.info("[MODE] Marginal experiment: t=%g, alpha=%d, oracle_B=%d", cfg.t, cfg.alpha, cfg.oracle_B)
        tasks = [(self.model, T, h, cfg, seed, i)
                 for i, (T, h) in enumerate(cfg.cells) for seed in self.config.seeds]
        results = run_pool(_marginal_cell_task, tasks, self.config.jobs)

        rows = [row for cell_rows, _, _ in results for row in cell_rows]
        write_metric_rows(out / "ks_table.csv", rows)
        first_seed = self.config.seeds[0]
        for (_, T, h, _, seed, _), (_, quasi_values, oracle_values) in zip(tasks, results):
            if seed != first_seed:
                continue
            for label, values in (("quasi", quasi_values), ("oracle", oracle_values)):
                try:
                    curve = kde(values, bw_method=cfg.bandwidth)
                except ParameterError as e:
                    logger.info("no KDE for %s %s: %s", label, _cell_name(T, h), e)
                    continue
                write_frame(out / f"kde_{label}_{_cell_name(T, h)}.csv", curve.to_frame())

        table = pd.DataFrame(rows, columns=["experiment", "h", "T", "alpha", "seed", "metric", "value"])
        summary = table.groupby(["T", "h", "metric"], sort=False)["value"].median().reset_index()
        write_frame(out / "ks_summary.csv", summary)
        for _, row in summary.iterrows():
            logger.info("[CELL] T=%g h=%g %s median=%.4f", row["T"], row["h"], row["metric"], row["value"])

        if cfg.lp_ns:
            logger.info("Step 2: L^%g distance at t=%g over n=%s", cfg.lp_p, cfg.t, list(cfg.lp_ns))
            lp_rows = run_pool(_lp_task, [(self.model, cfg, seed) for seed in self.config.seeds], self.config.jobs)
            lp_rows = [row for rows in lp_rows for row in rows]
            write_metric_rows(out / "lp_table.csv", lp_rows)
            rates = np.array([row[-1] for row in lp_rows if row[5] == "lp_decay_rate"], dtype=float)
            if np.any(np.isfinite(rates)):
                logger.info("  median log-log slope = %.3f", float(np.nanmedian(rates)))
        (out / "plot_marginals.py").write_text(MARGINALS_PLOT_SCRIPT, encoding="utf-8")
        self.write_manifest(out, "marginals")
        return summary

    # ------------------------------------------------------------------
    # estimate
    # ------------------------------------------------------------------
    def _functional_and_box(self):
        functional = self.config.functional.build()
        return functional, self.config.functional.theta_box(functional)

    def oracle_theta(self):
        """
        θ₀ from B independent true paths on the dense grid, plus the
        identifiability margin of the scanned surface (d = 1).
        """
        est = self.config.estimation
        functional, box = self._functional_and_box()
        scheme = SamplingScheme.hflt(est.oracle_n, est.beta)
        opts = OptimizerOptions(est.oracle_grid_points, self.config.optimizer.theta_tol,
                                self.config.optimizer.max_iter)
        measure = SimulatedMeasure(self.model, scheme, est.oracle_B, int(_seed(self.config.seeds[0], ORACLE)
                                                                          .generate_state(1)[0]))
        logger.info("Step 1: oracle θ₀ (B=%d, n=%d, grid=%d)", est.oracle_B, scheme.n, est.oracle_grid_points)
        logger.info("  truncation tail bound at T=%g: %.3g", scheme.T, functional.tail_bound(scheme.T))
        result = minimize_contrast(ContrastProblem(measure, functional, box, jobs=self.config.jobs), opts)

        margin = None
        if box.dim == 1 and not box.is_point:
            grid = result.trace[:est.oracle_grid_points]
            margin = identifiability_margin([t[0] for t, _ in grid], [v for _, v in grid])
            if not margin.ok:
                logger.warning("identifiability margin %.3g below %.3g (noise)", margin.margin, margin.noise)
                if not est.continue_on_margin_failure:
                    raise NumericError("oracle contrast has no well separated minimizer", theta=result.theta_hat)
        spacing = float(np.max(box.upper - box.lower)) / (est.oracle_grid_points - 1) if not box.is_point else 0.0
        logger.info("  θ₀ = %s", np.round(result.theta_hat, 6).tolist())
        return result, margin, spacing

    def estimate_schedule(self, functional, box, seeds, ns):
        est = self.config.estimation
        opts = self.config.optimizer.to_options()
        tasks = []
        for n in ns:
            alpha = est.alpha or alpha_schedule(n, est.beta, box.dim)
            for seed in seeds:
                tasks.append((self.model, functional, box, opts, est.beta, n, alpha, seed, est.covariance))
        return run_pool(_estimate_task, tasks, self.config.jobs)

    def run_estimation(self):
        est = self.config.estimation
        out = self._verb_dir("estimation")
        functional, box = self._functional_and_box()
        logger.info("[MODE] Estimation experiment: ns=%s, beta=%g, %d seeds",
                    list(est.ns), est.beta, len(self.config.seeds))

        oracle, margin, spacing = self.oracle_theta()
        write_json(out / "oracle.json", {
            **oracle.to_dict(),
            "grid_spacing": spacing,
            "margin": None if margin is None else dataclasses.asdict(margin),
        })
        theta0 = oracle.theta_hat

        logger.info("Step 2: θ̂_n for %d values of n", len(est.ns))
        results = self.estimate_schedule(functional, box, self.config.seeds, est.ns)
        rows, sigma_rows = [], []
        for n, seed, alpha, result in results:
            write_json(out / f"n{n}_seed{seed}.json", result.to_dict())
            error = float(np.linalg.norm(result.theta_hat - theta0))
            rows.append({"n": n, "seed": seed, "alpha": alpha, "r_n": rate_rn(n, est.beta, box.dim),
                         **{f"theta_{i}": v for i, v in enumerate(result.theta_hat)},
                         "contrast": result.contrast_at_min, "abs_error": error,
                         "tolerance_reached": result.tolerance_reached})
            if result.sigma_hat is not None:
                sigma_rows.append({"n": n, "seed": seed,
                                   **{f"sigma_{i}{j}": result.sigma_hat[i, j]
                                      for i in range(box.dim) for j in range(box.dim)}})
        table = pd.DataFrame(rows)
        write_frame(out / "estimates.csv", table)
        write_frame(out / "sigma.csv", pd.DataFrame(sigma_rows))

        logger.info("Step 3: summaries")
        summary = table.groupby("n", sort=True)["abs_error"].median().reset_index(name="median_abs_error")
        write_frame(out / "error_summary.csv", summary)
        write_frame(out / "qq.csv", _qq_frame(table))
        for _, row in summary.iterrows():
            logger.info("  n=%d median |θ̂ - θ₀| = %.4g", row["n"], row["median_abs_error"])

        alpha_std = self.alpha_std_table(functional, box)
        write_frame(out / "alpha_std.csv", alpha_std)
        (out / "plot_estimation.py").write_text(ESTIMATION_PLOT_SCRIPT, encoding="utf-8")
        self.write_manifest(out, "estimate")
        return {"oracle": oracle, "margin": margin, "grid_spacing": spacing,
                "summary": summary, "alpha_std": alpha_std}

    def alpha_std_table(self, functional, box):
        """Std of θ̂ over permutation seeds with the increments held fixed, for each alpha in alpha_pair."""
        est = self.config.estimation
        scheme = SamplingScheme.hflt(est.variance_n, est.beta)
        increments = simulate_increments(self.model, scheme, _seed(self.config.seeds[0], VARIANCE))
        opts = self.config.optimizer.to_options()
        rows = []
        for alpha in est.alpha_pair:
            tasks = [(self.model, functional, box, opts, increments, scheme.h, alpha, s)
                     for s in range(est.variance_seeds)]
            thetas = np.array(run_pool(_permutation_seed_task, tasks, self.config.jobs))
            rows.append({"alpha": alpha, "n": scheme.n, "std_theta": float(np.std(thetas[:, 0], ddof=1))})
            logger.info("  alpha=%d std(θ̂)=%.4g", alpha, rows[-1]["std_theta"])
        return pd.DataFrame(rows)

    # ------------------------------------------------------------------
    # check
    # ------------------------------------------------------------------
    def run_check(self, only=None):
        """
        Run the acceptance properties; writes check/results.csv.

        Raises:
            AcceptanceError: at least one property failed
        """
        out = self._verb_dir("check")
        selected = [name for name in CHECKS if only is None or name in only]
        unknown = set(only or ()) - set(CHECKS)
        if unknown:
            raise ParameterError(f"unknown check(s): {sorted(unknown)}")
        rows = []
        for name in selected:
            logger.info("[CHECK] %s", name)
            passed, detail = getattr(self, CHECKS[name])()
            logger.info("  %s: %s", "PASS" if passed else "FAIL", detail)
            rows.append({"check": name, "passed": passed, "detail": detail})
        write_frame(out / "results.csv", pd.DataFrame(rows, columns=["check", "passed", "detail"]))
        self.write_manifest(out, "check")
        failed = [r["check"] for r in rows if not r["passed"]]
        if failed:
            raise AcceptanceError(f"failed checks: {', '.join(failed)}")
        return rows

    def check_exactness(self):
        rng = make_rng(_seed(self.config.seeds[0], CHECK, 1))
        for _ in range(EXACTNESS_TRIALS):
            n = int(rng.integers(1, 60))
            increments = simulate_increments(self.model, SamplingScheme(n, 0.1), rng)
            ensemble = QuasiEnsemble.sampled(increments, self.model.u0, 0.1, 1, rng)
            observed = ensemble.observed_path()
            identity = QuasiEnsemble.identity(increments, self.model.u0, 0.1).quasi_path(0)
            if not np.array_equal(identity.values, observed.values):
                return False, f"identity quasi-path differs from observed path (n={n})"
            if ensemble.quasi_path(0).terminal != observed.terminal:
                return False, f"terminal value changed under permutation (n={n})"
        return True, f"{EXACTNESS_TRIALS} trials exact"

    def check_moments(self):
        details = []
        ok = True
        for i, h in enumerate((1.0, 0.01)):
            draws = simulate_increments(self.model, SamplingScheme(MOMENT_DRAWS, h), _seed(self.config.seeds[0], CHECK, 2, i))
            mean = self.model.increment_mean_rate() * h
            var = self.model.increment_variance_rate() * h
            z_mean, z_var = moment_zscores(draws, mean, var)
            ok &= abs(z_mean) <= 3 and abs(z_var) <= 3
            details.append(f"h={h:g}: z_mean={z_mean:.2f} z_var={z_var:.2f}")
        return ok, "; ".join(details)

    def check_exhaustive(self):
        rng = make_rng(_seed(self.config.seeds[0], CHECK, 3))
        u = self.model.u0
        worst = 0.0
        for n in range(1, 7):
            increments = simulate_increments(self.model, SamplingScheme(n, 0.5), rng)
            ensemble = QuasiEnsemble.exhaustive(increments, u, 0.5)
            ruin = RuinTimeFunctional(u)
            dividend = DividendFunctional(1.0, 0.1, 1.0, 0.1, u - 5.0, u + 5.0, horizon=None)
            theta = np.array([u + 0.3])
            for f, th in ((ruin, None), (dividend, theta)):
                gap = abs(empirical_expectation(ensemble, f, th) - brute_force_expectation(increments, u, 0.5, f, th))
                worst = max(worst, gap)
        return worst <= 1e-12, f"max |gap| = {worst:.3g}"

    def check_functional_exactness(self):
        rng = make_rng(_seed(self.config.seeds[0], CHECK, 4))
        worst, bound_ok = 0.0, True
        for _ in range(100):
            f, path, theta = random_dividend_case(rng)
            value = f.evaluate(path, theta)
            worst = max(worst, abs(value - quadrature_reference(f, path, theta)))
            bound_ok &= abs(value) <= f.kernel.sup_abs / f.r
        return worst <= 1e-10 and bound_ok, f"max |h - quad| = {worst:.3g}, bound held: {bound_ok}"

    def check_derivatives(self):
        rng = make_rng(_seed(self.config.seeds[0], CHECK, 5))
        worst = 0.0
        for _ in range(100):
            f, path, theta = random_dividend_case(rng)
            worst = max(worst, derivative_error(f, path, theta))
        return worst <= 1e-5, f"max relative error = {worst:.3g}"

    def check_weak_convergence(self):
        cells = ((1.0, 10.0), (0.005, 100.0))
        medians = []
        for i, (h, T) in enumerate(cells):
            scheme = SamplingScheme.from_horizon(T, h)
            values = [quasi_marginal_distance(self.model, scheme, 1.0, 1000, 1000, _seed(seed, CHECK, 6, i))
                      for seed in range(10)]
            medians.append(float(np.median(values)))
        coarse, fine = medians
        return fine < coarse and fine <= 0.08, f"median KS h=1,T=10: {coarse:.4f}; h=0.005,T=100: {fine:.4f}"

    def check_lp_distance(self):
        """
        The Monte-Carlo estimate is checked against the closed-form L^2
        distance; the n-trend is reported only, since the closed form
        does not decrease in n at fixed t.
        """
        estimates, exact = {}, {}
        for n in (100, 10_000):
            scheme = SamplingScheme.hflt(n, 0.5)
            k = max(1, int(round(1.0 / scheme.h)))
            estimates[n] = lp_increment_distance(self.model, scheme, k, 2.0, LP_REPLICATIONS, _seed(n, CHECK, 7))
            exact[n] = exact_l2_increment_distance(self.model, scheme, k)
        terminal_scheme = SamplingScheme.hflt(100, 0.5)
        terminal = lp_increment_distance(self.model, terminal_scheme, terminal_scheme.n, 2.0, LP_REPLICATIONS,
                                         _seed(0, CHECK, 7))
        agree = all(abs(estimates[n] - exact[n]) <= 0.25 * exact[n] for n in estimates)
        slope = fit_decay_rate(list(estimates), list(estimates.values()))
        return terminal == 0.0 and agree, (
            f"L2 at n=1e2: {estimates[100]:.4g} (exact {exact[100]:.4g}); n=1e4: {estimates[10_000]:.4g} "
            f"(exact {exact[10_000]:.4g}); log-log slope in n: {slope:.3f}; terminal: {terminal}")

    def check_consistency(self):
        est = self.config.estimation
        functional, box = self._functional_and_box()
        oracle, _, spacing = self.oracle_theta()
        results = self.estimate_schedule(functional, box, self.config.seeds, est.ns)
        errors = {}
        for n, _, _, result in results:
            errors.setdefault(n, []).append(float(np.linalg.norm(result.theta_hat - oracle.theta_hat)))
        medians = [float(np.median(errors[n])) for n in sorted(errors)]
        monotone = all(b <= a for a, b in zip(medians, medians[1:]))
        final_ok = medians[-1] <= 2.0 * spacing
        return monotone and final_ok, f"medians {np.round(medians, 5).tolist()}, grid spacing {spacing:.3g}"

    def check_normality(self):
        est = self.config.estimation
        functional, box = self._functional_and_box()
        seeds = range(est.normality_replications)
        results = self.estimate_schedule(functional, box, seeds, (est.normality_n,))
        thetas = np.array([r.theta_hat[0] for _, _, _, r in results])
        qq, skew = normality_shape(thetas)
        sigmas = [r.sigma_hat[0, 0] for _, _, _, r in results if r.sigma_hat is not None]
        alpha = results[0][2]
        ok = qq >= 0.97 and abs(skew) <= 0.3
        detail = f"QQ r={qq:.4f}, skew={skew:.3f}"
        if sigmas:
            # Σ̂ is per quasi-path; θ̂ averages alpha of them
            ratio = float(np.var(thetas, ddof=1) * alpha / np.median(sigmas))
            ok &= 0.5 <= ratio <= 2.0
            detail += f", replication var / (Σ̂/alpha) = {ratio:.3f}"
        return ok, detail

    def check_alpha_variance(self):
        est = self.config.estimation
        functional, box = self._functional_and_box()
        theta = 0.5 * (box.lower + box.upper)
        scheme = SamplingScheme.hflt(est.variance_n, est.beta)
        increments = simulate_increments(self.model, scheme, _seed(self.config.seeds[0], CHECK, 10))
        variances = []
        for alpha in (100, 400):
            values = [empirical_expectation(
                QuasiEnsemble.sampled(increments, self.model.u0, scheme.h, alpha, _seed(s, CHECK, 10, alpha)),
                functional, theta) for s in range(100)]
            variances.append(float(np.var(values, ddof=1)))
        if variances[0] == 0:
            return False, "contrast does not vary across permutations"
        ratio = variances[1] / variances[0]
        return 0.15 <= ratio <= 0.5, f"var(alpha=400) / var(alpha=100) = {ratio:.3f}"


CHECKS = {
    "exactness": "check_exactness",
    "moments": "check_moments",
    "exhaustive": "check_exhaustive",
    "functional": "check_functional_exactness",
    "derivatives": "check_derivatives",
    "weak_convergence": "check_weak_convergence",
    "lp_distance": "check_lp_distance",
    "consistency": "check_consistency",
    "normality": "check_normality",
    "alpha_variance": "check_alpha_variance",
}


def _qq_frame(table):
    """Standardized (θ̂ - median) / MAD with normal quantiles, per n (first axis)."""
    frames = []
    for n, group in table.groupby("n", sort=True):
        values = group["theta_0"].to_numpy()
        scale = stats.median_abs_deviation(values, scale="normal")
        if len(values) < 3 or scale == 0:
            continue
        standardized = np.sort((values - np.median(values)) / scale)
        probs = (np.arange(1, len(values) + 1) - 0.5) / len(values)
        frames.append(pd.DataFrame({"n": n, "normal_quantile": stats.norm.ppf(probs), "standardized": standardized}))
    if not frames:
        return pd.DataFrame(columns=["n", "normal_quantile", "standardized"])
    return pd.concat(frames, ignore_index=True)


PATHS_PLOT_SCRIPT = '''"""Plot true, quasi and observed paths per cell, side by side (needs matplotlib)."""
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

here = Path(__file__).parent
for cell in sorted(p for p in here.iterdir() if p.is_dir()):
    observed = pd.read_csv(cell / "observed.csv")
    fig, axes = plt.subplots(1, 2, figsize=(12, 4), sharey=True)
    for ax, prefix, title in zip(axes, ("oracle", "quasi"), ("true paths", "quasi-paths")):
        for csv in sorted(cell.glob(f"{prefix}_*.csv")):
            frame = pd.read_csv(csv)
            ax.step(frame["t_k"], frame["value"], where="post", color="0.7", linewidth=0.5)
        ax.step(observed["t_k"], observed["value"], where="post", color="black", linewidth=1.0)
        ax.set_title(f"{cell.name}: {title}")
        ax.set_xlabel("t")
    fig.savefig(cell / "paths.png", dpi=150)
    plt.close(fig)
'''

MARGINALS_PLOT_SCRIPT = '''"""Plot quasi vs oracle KDE curves per cell (needs matplotlib)."""
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

here = Path(__file__).parent
for quasi in sorted(here.glob("kde_quasi_*.csv")):
    cell = quasi.stem[len("kde_quasi_"):]
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, csv in (("quasi", quasi), ("oracle", here / f"kde_oracle_{cell}.csv")):
        if csv.exists():
            frame = pd.read_csv(csv)
            ax.plot(frame["x"], frame["density"], label=label)
    ax.set_title(cell)
    ax.legend()
    fig.savefig(here / f"kde_{cell}.png", dpi=150)
    plt.close(fig)
'''

ESTIMATION_PLOT_SCRIPT = '''"""Plot median error against n and the QQ data (needs matplotlib)."""
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

here = Path(__file__).parent
summary = pd.read_csv(here / "error_summary.csv")
fig, ax = plt.subplots(figsize=(5, 4))
ax.loglog(summary["n"], summary["median_abs_error"], marker="o")
ax.set_xlabel("n")
ax.set_ylabel("median |theta_hat - theta_0|")
fig.savefig(here / "error.png", dpi=150)
plt.close(fig)

qq = pd.read_csv(here / "qq.csv")
fig, ax = plt.subplots(figsize=(5, 5))
for n, group in qq.groupby("n"):
    ax.plot(group["normal_quantile"], group["standardized"], ".", label=f"n={n}")
ax.axline((0, 0), slope=1, color="black", linewidth=0.5)
ax.legend()
fig.savefig(here / "qq.png", dpi=150)
plt.close(fig)
'''
