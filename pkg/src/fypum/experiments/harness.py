"""Experiment runners: solver convergence, Monte Carlo comparisons,
scaling-law validation and subsample benchmarks.

Replications of one grid point are stacked into ``(R, N, K, d)`` arrays and
solved together; rows are emitted sorted by grid point, replication and
estimator, so output order never depends on execution order.
"""

from __future__ import annotations

import math
import time
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..data import (DatasetError, DecisionMakers, Rows, SyntheticSpec, generate_synthetic,
                    generate_synthetic_stack, load_csv, subsample, swissmetro_schema, CsvSchema)
from ..estimators import (DroConfig, EstimateResult, accelerated_stack, estimate_dro_bilinear,
                          estimate_fy_extragradient, estimate_fy_nag, estimate_l2_limit,
                          estimate_hinge_limit, hinge_stack, scaling_law_flip, scaling_law_reg)
from ..losses import ChoiceDataset, empirical_risk
from ..perturbation import Family, Perturbation
from ..simplex import SolverConfig
from .config import (ConfigError, as_int_list, derive_seed, echo, parse_family, parse_solver, require)
from .plot import write_plot
from .report import ExperimentReport

ESTIMATOR_KINDS = ("fy", "l2", "hinge", "dro")


# --------------------------------------------------------------------------- shared helpers


def _fsum_mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else math.nan


def _beta_true(cfg: Mapping) -> np.ndarray:
    try:
        b = np.asarray(require(cfg, "beta_true"), dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"beta_true must be a list of numbers: {exc}") from exc
    if b.size == 0 or not np.all(np.isfinite(b)):
        raise ConfigError("beta_true must be a non-empty finite vector")
    return b


def parse_estimators(records, dgp_family: Perturbation, K: int) -> list[dict]:
    """Normalise estimator records; the first ``fy`` entry is the baseline."""
    if not isinstance(records, list) or not records:
        raise ConfigError("estimators must be a non-empty list")
    out, names = [], set()
    for rec in records:
        if isinstance(rec, str):
            rec = {"kind": rec}
        kind = str(rec.get("kind", "")).lower()
        if kind not in ESTIMATOR_KINDS:
            raise ConfigError(f"unknown estimator kind {rec.get('kind')!r}; expected one of {ESTIMATOR_KINDS}")
        name = str(rec.get("name", kind))
        if name in names:
            raise ConfigError(f"duplicate estimator name {name!r}")
        names.add(name)
        fam = parse_family(rec["family"], K) if "family" in rec else dgp_family
        e = {"name": name, "kind": kind, "family": fam}
        if kind == "l2":
            e["lambda_reg"] = rec.get("lambda_reg", "scaling_law")
        if kind == "hinge":
            e["tau"] = rec.get("tau", "scaling_law")
        if kind == "dro":
            try:
                e["dro"] = DroConfig(float(require(rec, "epsilon", name)), float(rec.get("kappa", math.inf)))
            except ValueError as exc:
                raise ConfigError(f"bad DRO settings for {name!r}: {exc}") from exc
        for key in ("lambda_reg", "tau"):
            v = e.get(key)
            if v is not None and v != "scaling_law":
                try:
                    e[key] = float(v)
                except (TypeError, ValueError):
                    raise ConfigError(f"{name}: {key} must be a number or 'scaling_law'") from None
                if not e[key] >= 0:
                    raise ConfigError(f"{name}: {key} must be non-negative")
        out.append(e)
    return out


def _baseline_name(estimators: list[dict]) -> str | None:
    for e in estimators:
        if e["kind"] == "fy":
            return e["name"]
    return None


def _hyper(e: dict, d: int, N: int, beta_norm: float) -> float | None:
    if e["kind"] == "l2":
        v = e["lambda_reg"]
        return scaling_law_reg(d, N, beta_norm) if v == "scaling_law" else v
    if e["kind"] == "hinge":
        v = e["tau"]
        return scaling_law_flip(d, N, beta_norm) if v == "scaling_law" else v
    if e["kind"] == "dro":
        return e["dro"].epsilon
    return None


def _fit_one(e: dict, data: ChoiceDataset, hyper, cfg: SolverConfig, beta0=None) -> EstimateResult:
    pert = e["family"]
    if e["kind"] == "fy":
        return estimate_fy_nag(pert, data, cfg, record_traces=False)
    if e["kind"] == "l2":
        return estimate_l2_limit(pert, data, hyper, cfg, record_traces=False)
    if e["kind"] == "hinge":
        return estimate_hinge_limit(pert, data, hyper, cfg, beta0=beta0, record_traces=False)
    return estimate_dro_bilinear(pert, data, e["dro"], cfg)


def _fit_stack(e: dict, X, y, hyper, cfg: SolverConfig, nag_cache: dict) -> list[tuple[EstimateResult | None, str]]:
    """Fit one estimator on every stacked replication, isolating failures."""
    pert = e["family"]
    R = X.shape[0]
    key = repr(pert.to_config())
    try:
        if e["kind"] == "fy":
            res = accelerated_stack(pert, X, y, cfg, record_traces=False)
            nag_cache[key] = res
        elif e["kind"] == "l2":
            res = accelerated_stack(pert, X, y, cfg, lam=np.full(R, hyper), record_traces=False)
        elif e["kind"] == "hinge":
            if key not in nag_cache:
                nag_cache[key] = accelerated_stack(pert, X, y, cfg, record_traces=False)
            beta0 = np.stack([r.beta for r in nag_cache[key]])
            res = (accelerated_stack(pert, X, y, cfg, record_traces=False) if math.isinf(hyper)
                   else hinge_stack(pert, X, y, np.full(R, hyper), cfg, beta0=beta0, record_traces=False))
        else:
            raise NotImplementedError  # per-replication loop below
        return [_check(r) for r in res]
    except NotImplementedError:
        pass
    except Exception:  # noqa: BLE001 - fall back to isolating the failing replication
        pass
    out = []
    for r in range(R):
        try:
            out.append(_check(_fit_one(e, ChoiceDataset(X[r], y[r]), hyper, cfg)))
        except Exception as exc:  # noqa: BLE001 - recorded per run, never fatal
            out.append((None, f"{type(exc).__name__}: {exc}"))
    return out


def _check(res: EstimateResult) -> tuple[EstimateResult | None, str]:
    if not np.all(np.isfinite(res.beta)):
        return None, "non-finite estimate"
    return res, "ok"


# --------------------------------------------------------------------------- convergence


def run_convergence(config: Mapping) -> ExperimentReport:
    """Per-iteration KKT residual and parameter error of one solver run.

    Config keys: ``family``, ``N``, ``K``, ``d``, ``estimator`` (``kind`` in
    ``extragradient``, ``dro``, ``fy``, ``l2``; DRO takes ``epsilon`` and
    ``kappa``, l2 takes ``lambda_reg``), ``iterations``, ``tol_kkt``,
    ``seed``; optional ``beta_true`` (default standard normal from the
    seed), ``noise_sd``, ``feature_base_scale``, ``plots`` (bool), ``out``.
    Solver failures are recorded in the summary, not raised.
    """
    cfg = dict(config)
    try:
        N, K, d = (int(require(cfg, k)) for k in ("N", "K", "d"))
        seed = int(cfg.get("seed", 0))
        iterations = int(cfg.get("iterations", 500))
        tol = float(cfg.get("tol_kkt", 1e-9))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad convergence settings: {exc}") from exc
    fam_rec = cfg.get("family", "shannon")
    if isinstance(fam_rec, Mapping) and "q_seed" not in fam_rec and "Q" not in fam_rec:
        fam_rec = {**fam_rec, "q_seed": derive_seed(seed, 2)}
    pert = parse_family(fam_rec, K)
    est = dict(cfg.get("estimator", {"kind": "extragradient"}))
    kind = str(est.get("kind", "extragradient")).lower()
    if kind not in ("extragradient", "dro", "fy", "l2"):
        raise ConfigError(f"unknown convergence estimator {kind!r}")
    if "beta_true" in cfg:
        beta_true = _beta_true(cfg)
    else:
        beta_true = np.random.Generator(np.random.Philox(derive_seed(seed, 1))).standard_normal(d)
    try:
        spec = SyntheticSpec(N, K, d, beta_true, pert, float(cfg.get("feature_base_scale", 1.0)),
                             float(cfg.get("noise_sd", 0.5)), derive_seed(seed, 0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    data = generate_synthetic(spec)
    solver = parse_solver(cfg.get("solver"), max_iter=iterations, tol_kkt=tol)

    errs: dict[int, float] = {}

    def cb(it, beta):
        errs[it] = float(np.linalg.norm(beta - beta_true))

    t0 = time.perf_counter()
    status, res = "ok", None
    try:
        if kind == "extragradient":
            res = estimate_fy_extragradient(pert, data, solver, callback=cb)
        elif kind == "dro":
            dro = DroConfig(float(require(est, "epsilon", "estimator")), float(est.get("kappa", math.inf)))
            res = estimate_dro_bilinear(pert, data, dro, solver, callback=cb)
        elif kind == "fy":
            res = estimate_fy_nag(pert, data, solver, callback=cb)
        else:
            res = estimate_l2_limit(pert, data, float(require(est, "lambda_reg", "estimator")), solver, callback=cb)
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001 - recorded, not fatal
        status = f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - t0

    rows = []
    if res is not None:
        # accelerated solvers also record the start point as iteration 0
        first = 1 if kind in ("fy", "l2") else 0
        its = sorted(errs)[first:] if first else sorted(errs)
        obj = res.objective_trace[first:] if first else res.objective_trace
        kkt = res.kkt_trace[first:] if first else res.kkt_trace
        for it, o, k in zip(its, obj, kkt):
            rows.append({"iteration": it, "objective": float(o), "kkt": float(k), "param_error": errs[it]})
    meta = {"status": status, "estimator": kind, "family": pert.family.value,
            "beta_true": beta_true.tolist(), "data_seed": spec.seed}
    if res is not None:
        meta.update(converged=bool(res.converged), solver_iterations=int(res.iterations),
                    gamma=res.gamma, tau=res.diagnostics.get("tau"), sigma=res.diagnostics.get("sigma"),
                    oscillation=res.diagnostics.get("oscillation"))
    echo_cfg = echo({**cfg, "family": fam_rec})
    return ExperimentReport(str(cfg.get("experiment_id", f"convergence-{kind}")), echo_cfg, rows,
                            _summarize_convergence(rows, {"meta": meta}),
                            ["iteration", "objective", "kkt", "param_error"],
                            timing={"solve_seconds": elapsed},
                            summarize=lambda r, c, m=meta: _summarize_convergence(r, {"meta": m}))


def _summarize_convergence(rows: list[dict], ctx: dict) -> dict:
    out = dict(ctx["meta"])
    out["trace_length"] = len(rows)
    if rows:
        kkt = [r["kkt"] for r in rows]
        out["final_kkt"] = kkt[-1]
        out["final_param_error"] = rows[-1]["param_error"]
        # largest rise of the residual over its running minimum after iteration 10
        worst = 0.0
        run_min = math.inf
        for i, k in enumerate(kkt):
            if i >= 10 and run_min > 0 and math.isfinite(run_min):
                worst = max(worst, k / run_min - 1.0)
            run_min = min(run_min, k)
        out["max_rise_after_10"] = worst
    return out


def convergence_plots(report: ExperimentReport, out_dir) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    it = [r["iteration"] for r in report.rows]
    paths = []
    for col, label, logy in (("kkt", "KKT residual", True), ("param_error", "parameter error", True)):
        svg, _ = write_plot(out / f"{col}.svg", {col: (it, [r[col] for r in report.rows])},
                            title=report.experiment_id, xlabel="iteration", ylabel=label, logy=logy)
        paths.append(str(svg))
    report.plots = paths
    return paths


# --------------------------------------------------------------------------- Monte Carlo


def run_monte_carlo(config: Mapping) -> ExperimentReport:
    """Compare estimators on replicated synthetic data.

    Config keys: ``beta_true``, ``K``, ``N_grid``, ``reps`` (>= 2),
    ``seed``, ``family`` (data-generating), ``estimators`` (list of
    records with ``kind`` in fy/l2/hinge/dro, optional ``name``, fit
    ``family``, ``lambda_reg``/``tau`` as numbers or ``"scaling_law"``,
    DRO ``epsilon``/``kappa``); optional ``noise_sd``,
    ``feature_base_scale``, ``solver``.

    Replication ``r`` at sample size ``N`` uses data seed
    ``derive_seed(seed, N, r)`` for every estimator.
    """
    cfg = dict(config)
    beta_true = _beta_true(cfg)
    d = beta_true.size
    try:
        K = int(cfg.get("K", 3))
        reps = int(require(cfg, "reps"))
        seed = int(cfg.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad Monte Carlo settings: {exc}") from exc
    if reps < 2:
        raise ConfigError("reps must be at least 2")
    grid = as_int_list(require(cfg, "N_grid"), "N_grid")
    dgp = parse_family(cfg.get("family", "shannon"), K)
    estimators = parse_estimators(require(cfg, "estimators"), dgp, K)
    solver = parse_solver(cfg.get("solver"), max_iter=3000, tol_kkt=1e-7)
    bnorm = float(np.linalg.norm(beta_true))
    try:
        base_spec = SyntheticSpec(grid[0], K, d, beta_true, dgp, float(cfg.get("feature_base_scale", 1.0)),
                                  float(cfg.get("noise_sd", 0.5)), 0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    rows, timing = [], {}
    for N in grid:
        seeds = [derive_seed(seed, N, r) for r in range(reps)]
        X, y = generate_synthetic_stack(base_spec.with_(N=N), seeds)
        nag_cache: dict = {}
        fits = {}
        for e in estimators:
            hyper = _hyper(e, d, N, bnorm)
            t0 = time.perf_counter()
            fits[e["name"]] = (hyper, _fit_stack(e, X, y, hyper, solver, nag_cache))
            timing[f"N={N}/{e['name']}"] = time.perf_counter() - t0
        for r in range(reps):
            for e in estimators:
                hyper, results = fits[e["name"]]
                res, status = results[r]
                rows.append({
                    "N": N, "rep": r, "seed": seeds[r], "estimator": e["name"], "kind": e["kind"],
                    "hyper": hyper, "status": status,
                    "mse": float(np.sum((res.beta - beta_true) ** 2)) if res is not None else None,
                    "converged": res.converged if res is not None else None,
                    "iterations": res.iterations if res is not None else None,
                })
    columns = ["N", "rep", "seed", "estimator", "kind", "hyper", "status", "mse", "converged", "iterations"]
    baseline = _baseline_name(estimators)
    if len(estimators) > 1 and baseline is not None:
        _add_wins(rows, baseline)
        columns.append("win")
    echo_cfg = echo(cfg)
    echo_cfg["_resolved"] = {"baseline": baseline, "rng": "Philox(4x64-10) via SeedSequence",
                             "assumptions": (["hinge tau taken directly from scaling_law_flip"]
                                             if any(e["kind"] == "hinge" and e["tau"] == "scaling_law"
                                                    for e in estimators) else [])}
    return ExperimentReport(str(cfg.get("experiment_id", "monte-carlo")), echo_cfg, rows,
                            summarize_monte_carlo(rows, echo_cfg), columns, timing=timing,
                            summarize=summarize_monte_carlo)


def _add_wins(rows: list[dict], baseline: str) -> None:
    base = {(r["N"], r["rep"]): r["mse"] for r in rows if r["estimator"] == baseline}
    for r in rows:
        b = base.get((r["N"], r["rep"]))
        if r["estimator"] == baseline or r["mse"] is None or b is None:
            r["win"] = None
        else:
            r["win"] = r["mse"] < b


def summarize_monte_carlo(rows: list[dict], config: Mapping) -> dict:
    """Per-N mean MSE, failure counts and comparisons against the baseline.

    ``win_rate_rep`` is the fraction of replications with lower squared
    error than the baseline; a grid point counts as a parameter-set win
    when the mean MSE is lower; ``win_rate_param_set`` is the fraction of
    grid points won.  Failed runs are excluded and counted.
    """
    baseline = (config.get("_resolved") or {}).get("baseline")
    names = list(dict.fromkeys(r["estimator"] for r in rows))
    grid = list(dict.fromkeys(r["N"] for r in rows))
    per_n: dict[str, dict] = {}
    for N in grid:
        per_n[str(N)] = {}
        for name in names:
            sel = [r for r in rows if r["N"] == N and r["estimator"] == name]
            ok = [r["mse"] for r in sel if r["status"] == "ok" and r["mse"] is not None]
            per_n[str(N)][name] = {"mean_mse": _fsum_mean(ok), "n_ok": len(ok), "n_failed": len(sel) - len(ok),
                                   "converged": sum(1 for r in sel if r["converged"])}
    out: dict[str, Any] = {"per_N": per_n, "baseline": baseline}
    if baseline is not None and len(names) > 1:
        comp = {}
        for name in names:
            if name == baseline:
                continue
            entry: dict[str, Any] = {}
            won = 0
            for N in grid:
                wins = [r["win"] for r in rows if r["N"] == N and r["estimator"] == name and r.get("win") is not None]
                m = per_n[str(N)][name]["mean_mse"]
                mb = per_n[str(N)][baseline]["mean_mse"]
                beat = bool(m < mb)
                won += beat
                entry[str(N)] = {"win_rate_rep": _fsum_mean([1.0 if w else 0.0 for w in wins]),
                                 "mse_reduction_pct": 100.0 * (1.0 - m / mb) if mb > 0 else math.nan,
                                 "beats_mean_mse": beat}
            entry["win_rate_param_set"] = won / len(grid)
            comp[name] = entry
        out["comparisons"] = comp
        out["reference_targets"] = {"replications": 100_000, "win_rate": 1.0, "mse_reduction_pct_min": 98.8}
    return out


def monte_carlo_plots(report: ExperimentReport, out_dir) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_n = report.summary["per_N"]
    grid = [int(n) for n in per_n]
    names = list(next(iter(per_n.values())))
    series = {name: (grid, [per_n[str(N)][name]["mean_mse"] for N in grid]) for name in names}
    svg, _ = write_plot(out / "mse.svg", series, title=report.experiment_id, xlabel="N",
                        ylabel="mean squared error", logy=True)
    report.plots = [str(svg)]
    return report.plots


# --------------------------------------------------------------------------- scaling law


def run_scaling_validation(config: Mapping) -> ExperimentReport:
    """Line-search the l2 penalty and compare with the scaling law.

    For ``cases`` random problems (``N`` log-uniform in ``N_range``, ``d``
    uniform in ``d_range``, ``||beta||`` uniform in ``norm_range``, random
    direction) every penalty ``lambda_pred * 2**f`` for ``f`` on an even
    grid over ``log2_span`` is scored by Monte Carlo MSE over ``reps``
    shared datasets.  ``f = 0`` is always on the grid, so the ratio
    ``MSE(lambda_pred) / MSE(lambda_opt)`` is at least one.
    """
    cfg = dict(config)
    try:
        C = int(require(cfg, "cases"))
        reps = int(require(cfg, "reps"))
        seed = int(cfg.get("seed", 0))
        K = int(cfg.get("K", 3))
        n_lo, n_hi = (int(v) for v in cfg.get("N_range", [20, 200]))
        d_lo, d_hi = (int(v) for v in cfg.get("d_range", [2, 5]))
        b_lo, b_hi = (float(v) for v in cfg.get("norm_range", [1.0, 3.0]))
        span = float(cfg.get("log2_span", 4.0))
        points = int(cfg.get("grid_points", 17))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad scaling settings: {exc}") from exc
    if C < 1 or reps < 2 or points < 1:
        raise ConfigError("need cases >= 1, reps >= 2 and grid_points >= 1")
    if points % 2 == 0:
        points += 1  # keeps factor 2**0 on the grid
    dgp = parse_family(cfg.get("family", "shannon"), K)
    solver = parse_solver(cfg.get("solver"), max_iter=3000, tol_kkt=1e-7)
    factors = np.linspace(-span, span, points)

    rows, timing = [], {}
    for c in range(C):
        g = np.random.Generator(np.random.Philox(derive_seed(seed, c)))
        N = int(round(math.exp(g.uniform(math.log(n_lo), math.log(n_hi)))))
        d = int(g.integers(d_lo, d_hi + 1))
        bn = float(g.uniform(b_lo, b_hi))
        direction = g.standard_normal(d)
        beta = bn * direction / np.linalg.norm(direction)
        spec = SyntheticSpec(N, K, d, beta, dgp, float(cfg.get("feature_base_scale", 1.0)),
                             float(cfg.get("noise_sd", 0.5)), 0)
        X, y = generate_synthetic_stack(spec, [derive_seed(seed, c, r) for r in range(reps)])
        lam_pred = scaling_law_reg(d, N, bn)
        t0 = time.perf_counter()
        B = None
        # largest penalty first; each solve warm-starts from the previous one
        for f in factors[::-1]:
            lam = lam_pred * 2.0 ** f
            res = accelerated_stack(dgp, X, y, solver, lam=np.full(reps, lam), beta0=B, record_traces=False)
            B = np.stack([r.beta for r in res])
            ok = np.all(np.isfinite(B), axis=1)
            mse = np.sum((B - beta) ** 2, axis=1)[ok]
            rows.append({"case": c, "N": N, "d": d, "beta_norm": bn, "log2_factor": float(f), "lambda": lam,
                         "lambda_pred": lam_pred, "mse": _fsum_mean(mse.tolist()), "n_ok": int(ok.sum()),
                         "converged": int(sum(r.converged for r in res))})
        timing[f"case={c}"] = time.perf_counter() - t0
    rows.sort(key=lambda r: (r["case"], r["log2_factor"]))
    columns = ["case", "N", "d", "beta_norm", "log2_factor", "lambda", "lambda_pred", "mse", "n_ok", "converged"]
    echo_cfg = echo(cfg)
    return ExperimentReport(str(cfg.get("experiment_id", "scaling")), echo_cfg, rows,
                            summarize_scaling(rows, echo_cfg), columns, timing=timing,
                            summarize=summarize_scaling)


def summarize_scaling(rows: list[dict], config: Mapping) -> dict:
    cases = {}
    for r in rows:
        cases.setdefault(r["case"], []).append(r)
    per_case = {}
    for c, rs in sorted(cases.items()):
        best = min(rs, key=lambda r: (r["mse"], r["log2_factor"]))
        pred = next(r for r in rs if r["log2_factor"] == 0.0)
        lo, hi = min(r["log2_factor"] for r in rs), max(r["log2_factor"] for r in rs)
        per_case[str(c)] = {"N": pred["N"], "d": pred["d"], "beta_norm": pred["beta_norm"],
                            "lambda_pred": pred["lambda"], "lambda_opt": best["lambda"],
                            "mse_pred": pred["mse"], "mse_opt": best["mse"],
                            "ratio": pred["mse"] / best["mse"],
                            "opt_on_grid_edge": best["log2_factor"] in (lo, hi)}
    ratios = [v["ratio"] for v in per_case.values()]
    lp = np.log([v["lambda_pred"] for v in per_case.values()])
    lo_ = np.log([v["lambda_opt"] for v in per_case.values()])
    corr = float(np.corrcoef(lp, lo_)[0, 1]) if len(per_case) > 2 and np.std(lo_) > 0 else math.nan
    return {"per_case": per_case, "mean_ratio": _fsum_mean(ratios), "loglog_corr": corr,
            "edge_optima": sum(v["opt_on_grid_edge"] for v in per_case.values()),
            "reference_targets": {"mean_ratio": 1.23}}


def scaling_plots(report: ExperimentReport, out_dir) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pc = report.summary["per_case"].values()
    lp = [v["lambda_pred"] for v in pc]
    lo = [v["lambda_opt"] for v in pc]
    lim = [min(lp + lo), max(lp + lo)]
    svg, _ = write_plot(out / "lambda.svg", {"cases": (lp, lo), "identity": (lim, lim)},
                        title=report.experiment_id, xlabel="predicted penalty", ylabel="line-search optimum",
                        logx=True, logy=True, markers=True)
    report.plots = [str(svg)]
    return report.plots


# --------------------------------------------------------------------------- subsample benchmark


def _load_benchmark_data(cfg: Mapping, root_seed: int) -> ChoiceDataset:
    src = require(cfg, "dataset")
    if not isinstance(src, Mapping):
        raise ConfigError("dataset must be a mapping")
    if "synthetic" in src:
        s = src["synthetic"]
        try:
            K = int(s.get("K", 3))
            beta = np.asarray(require(s, "beta_true", "synthetic dataset"), dtype=float)
            spec = SyntheticSpec(int(require(s, "N", "synthetic dataset")), K, beta.size, beta,
                                 parse_family(s.get("family", "shannon"), K),
                                 float(s.get("feature_base_scale", 1.0)), float(s.get("noise_sd", 0.5)),
                                 derive_seed(root_seed, 0))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad synthetic dataset: {exc}") from exc
        data = generate_synthetic(spec)
        per_id = int(s.get("rows_per_id", 9))
        return ChoiceDataset(data.X, data.y, np.arange(data.N) // per_id, data.meta)
    path = require(src, "path", "dataset")
    schema_rec = src.get("schema", "swissmetro")
    if schema_rec == "swissmetro":
        schema = swissmetro_schema()
    else:
        try:
            schema = CsvSchema.from_config(schema_rec)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad CSV schema: {exc}") from exc
    return load_csv(path, schema, filter_availability=bool(src.get("filter_availability", True)),
                    standardize=bool(src.get("standardize", False)))


def run_subsample_benchmark(config: Mapping) -> ExperimentReport:
    """Objective gap on the full data for estimates fitted to subsamples.

    The full dataset stands in for the population: its unregularised fit
    ``beta_oracle`` defines ``J*``, and each estimate is scored by
    ``|J(beta_hat) - J*|`` on the full data (plus the full-data
    log-likelihood for the Shannon family).  ``mode`` is ``rows`` (grid of
    row counts) or ``decision_makers`` (grid of id counts).  Scaling-law
    hyperparameters use the subsample size and ``||beta_oracle||``.

    Raises
    ------
    DatasetError
        The dataset cannot be read (fatal by design).
    """
    cfg = dict(config)
    try:
        reps = int(require(cfg, "reps"))
        seed = int(cfg.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad subsample settings: {exc}") from exc
    mode = str(cfg.get("mode", "rows")).lower()
    if mode not in ("rows", "decision_makers"):
        raise ConfigError(f"mode must be 'rows' or 'decision_makers', got {mode!r}")
    grid = as_int_list(require(cfg, "grid"), "grid")
    data = _load_benchmark_data(cfg, seed)
    pert = parse_family(cfg.get("family", "shannon"), data.K)
    estimators = parse_estimators(require(cfg, "estimators"), pert, data.K)
    solver = parse_solver(cfg.get("solver"), max_iter=5000, tol_kkt=1e-8)
    oracle = estimate_fy_nag(pert, data, solver, record_traces=False)
    j_star = empirical_risk(pert, oracle.beta, data)
    bnorm = float(np.linalg.norm(oracle.beta)) or 1.0
    shannon = pert.family is Family.SHANNON

    rows, timing = [], {}
    for gi, g in enumerate(grid):
        sub_mode = Rows(g) if mode == "rows" else DecisionMakers(g)
        for r in range(reps):
            s = derive_seed(seed, 1, g, r)
            try:
                sub = subsample(data, sub_mode, s)
            except ValueError as exc:
                raise ConfigError(f"grid value {g}: {exc}") from exc
            for e in estimators:
                hyper = _hyper(e, data.d, sub.N, bnorm)
                t0 = time.perf_counter()
                try:
                    res, status = _check(_fit_one(e, sub, hyper, solver))
                except Exception as exc:  # noqa: BLE001 - recorded per run
                    res, status = None, f"{type(exc).__name__}: {exc}"
                timing[f"{g}/{r}/{e['name']}"] = time.perf_counter() - t0
                J = empirical_risk(e["family"], res.beta, data) if res is not None else None
                # scored under the benchmark family so misspecified fits stay comparable
                J_b = empirical_risk(pert, res.beta, data) if res is not None else None
                rows.append({"size": g, "rep": r, "seed": s, "n_rows": sub.N, "estimator": e["name"],
                             "hyper": hyper, "status": status,
                             "gap": abs(J_b - j_star) if J_b is not None else None,
                             "loglik": (-data.N * J_b / pert.mu) if (shannon and J_b is not None) else None,
                             "converged": res.converged if res is not None else None,
                             "own_objective": J})
    columns = ["size", "rep", "seed", "n_rows", "estimator", "hyper", "status", "gap", "loglik", "converged"]
    echo_cfg = echo(cfg)
    echo_cfg["_resolved"] = {"oracle_beta": oracle.beta.tolist(), "oracle_objective": j_star,
                             "oracle_converged": bool(oracle.converged), "N_full": data.N,
                             "dropped": data.meta.get("dropped")}
    for r in rows:
        r.pop("own_objective")
    return ExperimentReport(str(cfg.get("experiment_id", f"subsample-{mode}")), echo_cfg, rows,
                            summarize_subsample(rows, echo_cfg), columns, timing=timing,
                            summarize=summarize_subsample)


def summarize_subsample(rows: list[dict], config: Mapping) -> dict:
    names = list(dict.fromkeys(r["estimator"] for r in rows))
    grid = list(dict.fromkeys(r["size"] for r in rows))
    per = {}
    for g in grid:
        per[str(g)] = {}
        for name in names:
            sel = [r for r in rows if r["size"] == g and r["estimator"] == name]
            ok = [r for r in sel if r["status"] == "ok"]
            ll = [r["loglik"] for r in ok if r["loglik"] is not None]
            per[str(g)][name] = {"mean_gap": _fsum_mean([r["gap"] for r in ok]),
                                 "mean_loglik": _fsum_mean(ll) if ll else None,
                                 "n_ok": len(ok), "n_failed": len(sel) - len(ok)}
    return {"per_size": per, "oracle": (config.get("_resolved") or {})}


def subsample_plots(report: ExperimentReport, out_dir) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per = report.summary["per_size"]
    grid = [int(g) for g in per]
    names = list(next(iter(per.values())))
    series = {n: (grid, [per[str(g)][n]["mean_gap"] for g in grid]) for n in names}
    svg, _ = write_plot(out / "gap.svg", series, title=report.experiment_id, xlabel="subsample size",
                        ylabel="objective gap", logy=True)
    paths = [str(svg)]
    if all(per[str(g)][n]["mean_loglik"] is not None for g in grid for n in names):
        series = {n: (grid, [per[str(g)][n]["mean_loglik"] for g in grid]) for n in names}
        svg, _ = write_plot(out / "loglik.svg", series, title=report.experiment_id, xlabel="subsample size",
                            ylabel="full-data log-likelihood")
        paths.append(str(svg))
    report.plots = paths
    return paths


__all__ = ["run_convergence", "run_monte_carlo", "run_scaling_validation", "run_subsample_benchmark",
           "summarize_monte_carlo", "summarize_scaling", "summarize_subsample", "convergence_plots",
           "monte_carlo_plots", "scaling_plots", "subsample_plots", "parse_estimators", "ConfigError",
           "DatasetError"]
