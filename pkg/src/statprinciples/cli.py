"""Command-line front end: one subcommand per demonstration or diagnostic.

Exit status: 0 success, 2 input error, 3 numerical failure, 4 invariant
violation.  Reports go to stdout (or ``--out``) as JSON or CSV and always
record the parameters and tolerances used.
"""

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__, chains, confounding, hierarchy, spatial, units, variability
from .errors import InputError, InvariantViolation, NumericalError, StatPrinciplesError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_INVARIANT = 4

# default tolerances for the invariant checks each subcommand runs
DEFAULT_TOLERANCES = {
    "hm-retrieve": {"precision_rel": 1e-8},
    "wm-tm": {"mc_se_multiple": 4.0},
    "conserve": {"ledger_abs": 0.0},
    "predict": {},
    "additivity": {},
    "krige": {"variance_gap_abs": 1e-8},
    "neff": {"slack_abs": 1e-9},
    "decomp-audit": {"constancy_rel": 0.15},
    "cos": {"monotone_abs": 1e-12},
    "error-scaling": {},
    "simpson": {},
    "gamma": {},
    "maup": {},
    "chain": {"path_sum_abs": 1e-12},
    "units": {},
}


# ---- helpers ---------------------------------------------------------------

def _floats(text, what="value list"):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InputError(f"cannot parse {what} {text!r}") from None


def _grid_values(text):
    """``start:stop:step`` (inclusive of stop within half a step) or a comma list."""
    if ":" in text:
        try:
            start, stop, step = (float(v) for v in text.split(":"))
        except ValueError:
            raise InputError(f"grid spec {text!r} must be start:stop:step") from None
        if step <= 0 or stop < start:
            raise InputError(f"bad grid spec {text!r}")
        k = int(math.floor((stop - start) / step + 0.5))
        return [round(start + i * step, 12) for i in range(k + 1)]
    return _floats(text)


def _coord_grid(text):
    """``lo:hi:n`` per axis, axes separated by commas; returns an (m, d) array."""
    axes = []
    for part in text.split(","):
        try:
            lo, hi, n = part.split(":")
            axes.append(np.linspace(float(lo), float(hi), int(n)))
        except ValueError:
            raise InputError(f"grid axis {part!r} must be lo:hi:n") from None
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def read_csv(path):
    """Header plus rows of a CSV file; numeric cells become floats."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path} is empty")
    return [c.strip() for c in rows[0]], rows[1:]


def _numeric_columns(header, rows, names, path):
    idx = []
    for name in names:
        if name not in header:
            raise InputError(f"{path} has no column {name!r}")
        idx.append(header.index(name))
    try:
        return np.array([[float(r[i]) for i in idx] for r in rows], dtype=float)
    except (ValueError, IndexError):
        raise InputError(f"non-numeric or missing values in {path}") from None


def _coord_names(header):
    names = []
    k = 1
    while f"x{k}" in header:
        names.append(f"x{k}")
        k += 1
    return names


def read_spatial_csv(path, meas_var=0.0):
    """Columns ``x1..xd``, ``value``, optional ``support_id``; other numeric columns are covariates."""
    header, rows = read_csv(path)
    coord = _coord_names(header)
    if not coord:
        raise InputError(f"{path} needs coordinate columns x1..xd")
    if "value" not in header:
        raise InputError(f"{path} needs a 'value' column")
    locs = _numeric_columns(header, rows, coord, path)
    values = _numeric_columns(header, rows, ["value"], path)[:, 0]
    supports = None
    if "support_id" in header:
        supports = np.array([r[header.index("support_id")] for r in rows])
    extra = [h for h in header if h not in coord and h not in ("value", "support_id")]
    covariates = _numeric_columns(header, rows, extra, path) if extra else None
    ds = spatial.SpatialDataset(locs, values, meas_var, supports, covariates)
    return ds, extra


def read_regression_csv(path, response, covariates, meas_var, intercept=True):
    header, rows = read_csv(path)
    if response not in header:
        raise InputError(f"{path} has no response column {response!r}")
    names = covariates or [h for h in header if h != response]
    X = _numeric_columns(header, rows, names, path) if names else np.empty((len(rows), 0))
    if intercept:
        X = np.column_stack([np.ones(len(rows)), X])
        names = ["intercept"] + list(names)
    z = _numeric_columns(header, rows, [response], path)[:, 0]
    return variability.RegressionDataset(X, z, meas_var), names


def _load_json(path_or_text, what):
    text = path_or_text
    if not str(path_or_text).lstrip().startswith(("{", "[")):
        try:
            with open(path_or_text) as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read {what} {path_or_text}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{what} is not valid JSON: {exc}") from None


def _require_seed(args):
    if args.seed is None:
        raise InputError(f"{args.command} is stochastic and needs --seed")
    return args.seed


def _check(ok, message):
    if not ok:
        raise InvariantViolation(message)


# ---- subcommands -----------------------------------------------------------

def cmd_hm_retrieve(args, tol):
    doc = _load_json(args.model, "model")
    hm = hierarchy.LinearHM.from_dict(doc)
    z = _floats(args.z) if args.z is not None else doc.get("z")
    if z is None:
        raise InputError("data vector z missing: pass --z or include 'z' in the model file")
    ret = hierarchy.predictive_distribution(hm, z)
    resid = hierarchy.precision_decomposition_residual(hm)
    prec_norm = np.linalg.norm(np.linalg.inv(ret.predictive_cov), "fro")
    _check(resid <= tol["precision_rel"] * prec_norm, f"precision identity residual {resid!r} too large")
    _check(np.all(np.diag(ret.predictive_cov) <= np.diag(hm.prior_cov) * (1 + 1e-12)),
           "predictive variance exceeds prior variance")
    return {
        "formula": "mean = mu_a + G (z - c - K mu_a); cov = (S_a^-1 + K' S_e^-1 K)^-1",
        "paper_principle": "build models conditionally through a data model and a process model; infer from the predictive distribution",
        "parameters": {"model": hm.to_dict(), "z": list(map(float, z))},
        "results": {
            "predictive_mean": ret.predictive_mean,
            "predictive_cov": ret.predictive_cov,
            "predictive_var": np.diag(ret.predictive_cov),
            "gain": ret.gain,
            "precision_residual": resid,
        },
        "table": [
            {"index": i, "mean": m, "var": v}
            for i, (m, v) in enumerate(zip(ret.predictive_mean, np.diag(ret.predictive_cov)))
        ],
    }


def cmd_wm_tm(args, tol):
    wm = hierarchy.LinearHM.from_dict(_load_json(args.wm, "working model"))
    tm = hierarchy.LinearHM.from_dict(_load_json(args.tm, "true model"))
    diag = hierarchy.wm_tm_diagnostics(wm, tm)
    naive_bias, naive_unc = hierarchy.naive_wm_moments(wm)
    results = {
        "true_bias": diag.true_bias,
        "true_uncertainty": diag.true_uncertainty,
        "naive_bias": naive_bias,
        "naive_uncertainty": naive_unc,
    }
    if args.mc_draws:
        err = hierarchy.simulate_retrieval_errors(wm, tm, args.mc_draws, _require_seed(args))
        mc_bias = err.mean(axis=0)
        se = err.std(axis=0, ddof=1) / math.sqrt(args.mc_draws)
        results.update(mc_bias=mc_bias, mc_standard_error=se)
        _check(np.all(np.abs(mc_bias - diag.true_bias) <= tol["mc_se_multiple"] * se),
               "Monte Carlo bias disagrees with the closed form")
    return {
        "formula": "true bias = E_TM(yhat_WM - y); true uncertainty = var_TM(yhat_WM - y)",
        "paper_principle": "establish a true model and compute its distributional properties of working-model estimators",
        "parameters": {"wm": wm.to_dict(), "tm": tm.to_dict(), "mc_draws": args.mc_draws},
        "results": results,
        "table": [
            {"index": i, "true_bias": b, "true_var": v, "naive_var": nv}
            for i, (b, v, nv) in enumerate(zip(diag.true_bias, np.diag(diag.true_uncertainty), np.diag(naive_unc)))
        ],
    }


def _regression_inputs(args):
    cov = [c for c in args.covariates.split(",") if c] if args.covariates else None
    return read_regression_csv(args.data, args.response, cov, args.meas_var, not args.no_intercept)


def cmd_conserve(args, tol):
    ds, names = _regression_inputs(args)
    beta = variability.fit_ols(ds)
    ledger = variability.conserve(ds)
    _check(abs(ledger.s_delta2 + ledger.s_eps2 - ledger.s_xi2) <= tol["ledger_abs"],
           "variance ledger does not add up")
    return {
        "formula": "s_xi2 = RSS/(n-p); s_delta2 = s_xi2 - s_eps2",
        "paper_principle": "conservation of variability",
        "parameters": {"data": args.data, "response": args.response, "covariates": names,
                       "meas_var": ds.meas_var, "n": ds.n, "p": ds.p},
        "results": {"beta_hat": dict(zip(names, beta)), "s_xi2": ledger.s_xi2,
                    "s_eps2": ledger.s_eps2, "s_delta2": ledger.s_delta2, "conserved": ledger.conserved},
        "table": [{"component": k, "variance": getattr(ledger, k)} for k in ("s_xi2", "s_delta2", "s_eps2")],
    }


def cmd_predict(args, tol):
    ds, names = _regression_inputs(args)
    ledger = variability.conserve(ds)
    x_new = _floats(args.x_new, "--x-new")
    if not args.no_intercept:
        x_new = [1.0] + x_new
    pm = variability.prediction_moments(ds, x_new, ledger)
    naive = pm.mse - ledger.s_delta2
    _check(pm.mse >= ledger.s_delta2, "prediction MSE below the model-error variance")
    return {
        "formula": "pred = x' beta_hat; mse = s_xi2 x'(X'X)^-1 x + s_delta2",
        "paper_principle": "conservation of variability (prediction of the scientific process)",
        "parameters": {"data": args.data, "response": args.response, "covariates": names,
                       "x_new": x_new, "meas_var": ds.meas_var},
        "results": {"pred": pm.pred, "mse": pm.mse, "mse_without_model_error": naive,
                    "s_delta2": ledger.s_delta2},
    }


def cmd_additivity(args, tol):
    header, rows = read_csv(args.data)
    xz = _numeric_columns(header, rows, [args.x, args.response], args.data)
    grid = _grid_values(args.lambdas)
    weights = _floats(args.weights, "--weights")
    if len(weights) != 3:
        raise InputError("--weights needs three values")
    scan = variability.additivity_scan(xz[:, 0], xz[:, 1], grid, weights)
    return {
        "formula": "score = R2^w1 * (1 - |corr(x, |resid|)|)^w2 * (1 - |skew(resid)|)^w3 on g_lambda(z) ~ x",
        "paper_principle": "seek a transformation where components of variation act additively",
        "parameters": {"data": args.data, "x": args.x, "response": args.response,
                       "lambdas": grid, "weights": weights},
        "results": {"best_lambda": scan[0].lam},
        "table": [r._asdict() for r in scan],
    }


def _parse_trend(text, covariate_names):
    base, *covs = [p.strip() for p in text.split("+")]
    degrees = {"const": 0, "constant": 0, "linear": 1, "quadratic": 2}
    axes = None
    if "@" in base:
        base, ax = base.split("@")
        axes = tuple(int(a) - 1 for a in ax.split(";") if a)
    if base not in degrees:
        raise InputError(f"unknown mean model {base!r}; use const, linear or quadratic")
    idx = []
    for c in covs:
        if c not in covariate_names:
            raise InputError(f"unknown covariate {c!r}")
        idx.append(covariate_names.index(c))
    return spatial.TrendSpec(degrees[base], axes, tuple(idx), label=text)


def cmd_krige(args, tol):
    ds, cov_names = read_spatial_csv(args.data, args.meas_var)
    cf = spatial.CovarianceFunction(args.sill, args.scale)
    trend = _parse_trend(args.trend, cov_names)
    if trend.covariates:
        raise InputError("kriging trends with covariates need target covariates; use coordinates only")
    if args.targets:
        header, rows = read_csv(args.targets)
        targets = _numeric_columns(header, rows, _coord_names(header), args.targets)
    elif args.grid:
        targets = _coord_grid(args.grid)
    else:
        raise InputError("pass --targets CSV or --grid")
    kinds = ["process", "observable"] if args.kind == "both" else [args.kind]
    res = {k: spatial.krige(ds, cf, trend, targets, k) for k in kinds}
    if len(kinds) == 2:
        off = spatial.cdist(targets, ds.locations, "chebyshev").min(axis=1) > spatial.DUPLICATE_TOL
        gap = res["observable"].variances[off] - res["process"].variances[off]
        _check(np.all(np.abs(gap - ds.meas_var) <= tol["variance_gap_abs"]),
               "observable and process kriging variances differ by more than the nugget")
    table = []
    for i, s in enumerate(targets):
        row = {f"x{k + 1}": v for k, v in enumerate(s)}
        for k in kinds:
            r = res[k]
            row[f"{k}_mean"] = r.means[i]
            row[f"{k}_var"] = r.variances[i]
            for q, band in r.percentile_bands.items():
                row[f"{k}_q{q:g}"] = band[i]
        table.append(row)
    return {
        "formula": "process: E(y(s0)|z), var(y(s0)|z); observable adds meas_var off the data",
        "paper_principle": "krige the latent process, not the noisy observable",
        "parameters": {"data": args.data, "sill": args.sill, "scale": args.scale,
                       "meas_var": ds.meas_var, "trend": trend.name(), "kind": args.kind,
                       "n_targets": int(targets.shape[0])},
        "results": {k: {"means": r.means, "variances": r.variances} for k, r in res.items()},
        "table": table,
    }


def cmd_neff(args, tol):
    if args.data:
        header, rows = read_csv(args.data)
        locs = _numeric_columns(header, rows, _coord_names(header), args.data)
    elif args.grid:
        locs = _coord_grid(args.grid)
    else:
        raise InputError("pass --data CSV or --grid")
    cf = spatial.CovarianceFunction(args.sill, args.scale)
    n = locs.shape[0]
    neff = spatial.effective_sample_size(locs, cf)
    _check(neff <= n + tol["slack_abs"], "effective sample size exceeds n")
    return {
        "formula": "n_eff = sigma^2 / var(zbar); var(zbar) = (sigma^2 + 2 sum_{i<j} C_ij / n) / n",
        "paper_principle": "spatial dependence shrinks the information in a sample",
        "parameters": {"sill": args.sill, "scale": args.scale, "n": n},
        "results": {"n": n, "n_eff": neff, "ratio": neff / n},
    }


def cmd_decomp_audit(args, tol):
    ds, cov_names = read_spatial_csv(args.data)
    models = [_parse_trend(m, cov_names) for m in (args.model or ["const"])]
    rows = spatial.decomposition_audit(ds, models, n_bins=args.bins)
    for r in rows:
        _check(r.s_delta2 >= 0, "negative lag-0 residual covariance")
    return {
        "formula": "s_mu2 = mean((mu_hat - mean(mu_hat))^2); s_delta2 = C_hat(0); total = s_mu2 + s_delta2",
        "paper_principle": "fixed plus random decomposition must conserve variability",
        "parameters": {"data": args.data, "models": [m.name() for m in models], "bins": args.bins},
        "results": {"approximately_constant": spatial.audit_is_conserving(rows, tol["constancy_rel"]),
                    "empirical_covariance": {r.model: {"lags": r.empirical.lags, "cov": r.empirical.cov,
                                                       "counts": r.empirical.counts} for r in rows}},
        "table": [{"model": r.model, "s_mu2": r.s_mu2, "s_delta2": r.s_delta2, "total": r.total} for r in rows],
    }


def cmd_cos(args, tol):
    cf = spatial.CovarianceFunction(args.sill, args.scale)
    sides = _floats(args.sides, "--sides")
    regions = spatial.nested_square_regions(sides, args.spacing, args.dim)
    vals = [spatial.block_average_variance(cf, args.sigma0_sq, r) for r in regions]
    for a, b in zip(vals, vals[1:]):
        _check(b <= a + tol["monotone_abs"], "block variance increased with block size")
    return {
        "formula": "var(y(B)) = sigma0^2 + (1/m^2) sum_i sum_j C(s_i - s_j)",
        "paper_principle": "the variance of a block average decreases with block volume",
        "parameters": {"sill": args.sill, "scale": args.scale, "sigma0_sq": args.sigma0_sq,
                       "sides": sides, "spacing": args.spacing, "dim": args.dim},
        "results": {"limit": args.sigma0_sq},
        "table": [{"side": s, "volume": r.volume, "cells": int(r.cells.shape[0]), "variance": v}
                  for s, r, v in zip(sides, regions, vals)],
    }


def cmd_error_scaling(args, tol):
    seed = _require_seed(args)
    n_grid = [int(v) for v in _floats(args.n_grid, "--n-grid")]
    rows = spatial.error_scaling_sim(args.kind, args.sigma0_sq, args.sigma_delta_sq, n_grid, args.reps, seed)
    return {
        "formula": "random: var = sigma_delta^2/n; systematic: var = sigma0^2 + sigma_delta^2/n",
        "paper_principle": "random error averages away, systematic error does not",
        "parameters": {"kind": args.kind, "sigma0_sq": args.sigma0_sq, "sigma_delta_sq": args.sigma_delta_sq,
                       "n_grid": n_grid, "reps": args.reps, "seed": seed},
        "results": {"loglog_slope": spatial.loglog_slope(rows)},
        "table": [r._asdict() for r in rows],
    }


def cmd_simpson(args, tol):
    tc = confounding.TriCorrelation(args.rho_xy, args.rho_wy, args.rho_xw)
    coef_w, coef_x = confounding.partial_regression(tc)
    results = {"conditional_correlation": confounding.conditional_correlation(tc),
               "marginal_correlation": tc.rho_xy, "coef_w": coef_w, "coef_x": coef_x}
    if args.table:
        t = confounding.Table3D(np.asarray(_load_json(args.table, "table"), dtype=float))
        g = confounding.simpson_gammas(t)
        results.update(slice_gammas=g.per_slice, marginal_gamma=g.marginal)
    return {
        "formula": "corr(x,y|w) = (r_xy - r_wy r_xw) / sqrt((1-r_xw^2)(1-r_wy^2))",
        "paper_principle": "change of support; lurking variables and Simpson's paradox",
        "parameters": {"rho_xy": args.rho_xy, "rho_wy": args.rho_wy, "rho_xw": args.rho_xw, "table": args.table},
        "results": results,
    }


def cmd_gamma(args, tol):
    try:
        with open(args.data, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise InputError(f"cannot read {args.data}: {exc}") from None
    try:
        float(rows[0][0])
    except (ValueError, IndexError):
        rows = rows[1:]
    try:
        table = np.array([[float(c) for c in r] for r in rows])
    except ValueError:
        raise InputError("count table must be numeric") from None
    conc, disc = confounding.concordance(table)
    return {
        "formula": "gamma = (C - D) / (C + D)",
        "paper_principle": "ordinal association in contingency tables",
        "parameters": {"data": args.data, "shape": list(table.shape)},
        "results": {"concordant": conc, "discordant": disc, "gamma": confounding.goodman_kruskal_gamma(table)},
    }


def cmd_maup(args, tol):
    header, rows = read_csv(args.data)
    coord = _coord_names(header)
    locs = _numeric_columns(header, rows, coord, args.data)
    xy = _numeric_columns(header, rows, ["x", "y"], args.data)
    levels = _floats(args.levels, "--levels")
    scan = confounding.maup_scan(locs, xy[:, 0], xy[:, 1], levels)
    return {
        "formula": "corr of block-averaged x and y per aggregation level",
        "paper_principle": "modifiable areal unit problem",
        "parameters": {"data": args.data, "levels": levels},
        "results": {"n_points": len(rows)},
        "table": [r._asdict() for r in scan],
    }


def _chain_source(args):
    if args.demo == "swan":
        return chains.swan_chain()
    if args.demo == "pandemic":
        return chains.pandemic_chain()
    if args.chain:
        return chains.EventChain.from_dict(_load_json(args.chain, "chain"))
    raise InputError("pass --chain JSON or --demo swan|pandemic")


def cmd_chain(args, tol):
    chain = _chain_source(args)
    if args.fallback_position is not None:
        if args.fallback_marginal:
            marginal = _load_json(args.fallback_marginal, "marginal")
        elif args.demo == "swan":
            marginal = chains.swan_abundance_marginal()
        else:
            raise InputError("--fallback-position needs --fallback-marginal")
        chain = chains.max_entropy_fallback(chain, args.fallback_position, marginal)
    joint = chains.joint_table(chain)
    total = math.fsum(joint.values())
    _check(abs(total - 1.0) <= tol["path_sum_abs"], f"path probabilities sum to {total!r}")
    results = {"path_probability_sum": total,
               "zero_entries": [{"event": z.event, "history": list(z.history), "outcome": z.outcome}
                                for z in chains.zero_probability_audit(chain)]}
    if args.path:
        path = [p.strip() for p in args.path.split(",")]
        results["joint_probability"] = chains.joint_probability(chain, path)
    loss = None
    if args.loss:
        doc = _load_json(args.loss, "loss")
        loss = chains.LossSpec(tuple(doc), tuple(float(v) for v in doc.values()))
    elif args.demo == "pandemic":
        loss = chains.pandemic_loss()
    if loss is not None:
        results["expected_loss"] = chains.expected_loss(chain, loss)
    return {
        "formula": "Pr(a, b, ...) = Pr(a) Pr(b | a) ...; E(loss) = sum_paths Pr(path) loss(terminal)",
        "paper_principle": "multiply conditional, not marginal, probabilities; keep probabilities away from zero",
        "parameters": {"events": list(chain.events), "demo": args.demo, "chain": args.chain,
                       "illustrative_values": args.demo is not None,
                       "fallback_position": args.fallback_position,
                       "fallbacks": [f.name for f in chain.factors if f.fallback]},
        "results": results,
        "table": [{"path": "/".join(p), "probability": v} for p, v in joint.items()],
    }


def cmd_units(args, tol):
    results = {}
    if args.expression:
        q = units.evaluate(args.expression)
        results["value"] = q.value
        results["dimension"] = str(q.dim)
    if args.response is not None:
        covs = [c.strip() for c in (args.covariate_dims or "").split(",") if c.strip()]
        results["coefficient_dimensions"] = [str(d) for d in units.regression_units(args.response, covs)]
    if args.density is not None:
        results["density_dimension"] = str(units.density_units(args.density))
    if not results:
        raise InputError("nothing to check: give an expression, --response or --density")
    return {
        "formula": "add only equal dimensions; multiply exponents add; log/exp need unit-free input",
        "paper_principle": "only add quantities with matching units",
        "parameters": {"expression": args.expression, "response": args.response,
                       "covariate_dims": args.covariate_dims, "density": args.density},
        "results": results,
    }


COMMANDS = {
    "hm-retrieve": cmd_hm_retrieve,
    "wm-tm": cmd_wm_tm,
    "conserve": cmd_conserve,
    "predict": cmd_predict,
    "additivity": cmd_additivity,
    "krige": cmd_krige,
    "neff": cmd_neff,
    "decomp-audit": cmd_decomp_audit,
    "cos": cmd_cos,
    "error-scaling": cmd_error_scaling,
    "simpson": cmd_simpson,
    "gamma": cmd_gamma,
    "maup": cmd_maup,
    "chain": cmd_chain,
    "units": cmd_units,
}


# ---- parser ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: input error: {message}\n")


def build_parser(config=None):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for stochastic subcommands")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", default=None, help="write the report here instead of stdout")
    common.add_argument("--config", default=None, help="JSON file of option defaults and 'tolerances'")
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                        help="override a tolerance; repeatable")

    parser = _Parser(prog="statprinciples", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        return p

    p = add("hm-retrieve", "predictive distribution of a linear-Gaussian hierarchical model")
    p.add_argument("--model", required=True, help="JSON with c, K, noise_cov, prior_mean, prior_cov (and optionally z)")
    p.add_argument("--z", default=None, help="comma-separated data vector")

    p = add("wm-tm", "working-model retrieval judged under a true model")
    p.add_argument("--wm", required=True)
    p.add_argument("--tm", required=True)
    p.add_argument("--mc-draws", type=int, default=0, help="Monte Carlo cross-check draws (needs --seed)")

    for name, text in (("conserve", "model-error variance from REML residual and calibrated measurement variance"),
                       ("predict", "prediction of the scientific process with its mean squared error")):
        p = add(name, text)
        p.add_argument("--data", required=True)
        p.add_argument("--response", required=True)
        p.add_argument("--covariates", default=None, help="comma list; default: every other column")
        p.add_argument("--meas-var", type=float, default=0.0)
        p.add_argument("--no-intercept", action="store_true")
        if name == "predict":
            p.add_argument("--x-new", required=True, help="covariate values (without the intercept)")

    p = add("additivity", "Box-Cox scan for linearity, homoskedasticity and symmetry")
    p.add_argument("--data", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--lambdas", default="-1:2:0.25")
    p.add_argument("--weights", default="1,1,1")

    p = add("krige", "kriging of the latent process and/or the observable")
    p.add_argument("--data", required=True)
    p.add_argument("--sill", type=float, required=True)
    p.add_argument("--scale", type=float, required=True)
    p.add_argument("--meas-var", type=float, default=0.0)
    p.add_argument("--trend", default="const", help="const | linear | quadratic, optionally @axes e.g. linear@2")
    p.add_argument("--targets", default=None)
    p.add_argument("--grid", default=None, help="lo:hi:n per axis, comma separated")
    p.add_argument("--kind", choices=("process", "observable", "both"), default="both")

    p = add("neff", "effective sample size under exponential covariance")
    p.add_argument("--data", default=None)
    p.add_argument("--grid", default=None)
    p.add_argument("--sill", type=float, default=1.0)
    p.add_argument("--scale", type=float, required=True)

    p = add("decomp-audit", "trend versus residual variance for several mean models")
    p.add_argument("--data", required=True)
    p.add_argument("--model", action="append", default=None,
                   help="const | linear | quadratic [@axes] [+covariate ...]; repeatable")
    p.add_argument("--bins", type=int, default=15)

    p = add("cos", "block-average variance on nested square blocks")
    p.add_argument("--sill", type=float, default=1.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--sigma0-sq", type=float, default=0.0)
    p.add_argument("--sides", default="1,2,4,8,16,20")
    p.add_argument("--spacing", type=float, default=0.25)
    p.add_argument("--dim", type=int, default=2)

    p = add("error-scaling", "variance of averaged random or systematic errors")
    p.add_argument("--kind", choices=("random", "systematic"), default="random")
    p.add_argument("--sigma0-sq", type=float, default=0.0)
    p.add_argument("--sigma-delta-sq", type=float, default=1.0)
    p.add_argument("--n-grid", default="100,1000,10000,100000")
    p.add_argument("--reps", type=int, default=1000)

    p = add("simpson", "conditional versus marginal association for standardized (w, x, y)")
    p.add_argument("--rho-xy", type=float, required=True)
    p.add_argument("--rho-wy", type=float, required=True)
    p.add_argument("--rho-xw", type=float, required=True)
    p.add_argument("--table", default=None, help="JSON 3-d count array indexed (w, x, y)")

    p = add("gamma", "Goodman-Kruskal gamma of a CSV count table")
    p.add_argument("--data", required=True)

    p = add("maup", "correlation of block averages across aggregation levels")
    p.add_argument("--data", required=True, help="CSV with x1..xd, x, y")
    p.add_argument("--levels", required=True)

    p = add("chain", "joint probabilities, zero audit, fallback and expected loss for an event chain")
    p.add_argument("--chain", default=None)
    p.add_argument("--demo", choices=("swan", "pandemic"), default=None)
    p.add_argument("--path", default=None)
    p.add_argument("--fallback-position", type=int, default=None)
    p.add_argument("--fallback-marginal", default=None)
    p.add_argument("--loss", default=None, help="JSON object outcome -> loss")

    p = add("units", "dimension checker for unit expressions")
    p.add_argument("expression", nargs="?", default=None)
    p.add_argument("--response", default=None, help="response dimension for coefficient units")
    p.add_argument("--covariate-dims", default=None)
    p.add_argument("--density", default=None)

    if config:
        defaults = {k.replace("-", "_"): v for k, v in config.items() if k != "tolerances"}
        for p in sub.choices.values():
            p.set_defaults(**defaults)
    return parser


def _tolerances(command, config, overrides):
    tol = dict(DEFAULT_TOLERANCES.get(command, {}))
    tol.update((config or {}).get("tolerances", {}))
    for item in overrides:
        name, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--tol expects NAME=VALUE, got {item!r}")
        try:
            tol[name.strip()] = float(value)
        except ValueError:
            raise InputError(f"tolerance {name!r} is not a number") from None
    return tol


# ---- output ----------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def render(report, fmt):
    report = _jsonable(report)
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    table = report.get("table")
    if table:
        cols = list(table[0])
        writer.writerow(cols)
        for row in table:
            writer.writerow(["" if row.get(c) is None else row.get(c) for c in cols])
    else:
        writer.writerow(["key", "value"])
        for key, value in _flatten(report.get("results", {})):
            writer.writerow([key, value])
    return buf.getvalue()


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}{k}.")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix[:-1], "" if obj is None else obj


def run(argv=None):
    """Parse ``argv``, run the subcommand, emit the report; returns the exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        config = None
        if args.config:
            config = _load_json(args.config, "config")
            if not isinstance(config, dict):
                raise InputError("config must be a JSON object")
            args = build_parser(config).parse_args(argv)
        tol = _tolerances(args.command, config, args.tol)
        report = COMMANDS[args.command](args, tol)
        report = {
            "command": args.command,
            "tolerances": tol,
            "seed": args.seed,
            **report,
        }
        text = render(report, args.format)
        if args.out:
            with open(args.out, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except StatPrinciplesError as exc:  # pragma: no cover - every subclass is handled above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main():
    sys.exit(run())
