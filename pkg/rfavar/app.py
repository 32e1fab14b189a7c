import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import linalg

from rfavar._constants import LOG_LEVEL
from rfavar.data.panel_loader import load_panel, read_saved_panel, save_panel, write_raw_panel, write_transform_specs
from rfavar.dynamics.bootstrap import bootstrap_irf
from rfavar.dynamics.identification import identification_diagnostic, identify
from rfavar.dynamics.impulse import accumulate_by_code, impulse_responses, rescale_to_original_units
from rfavar.dynamics.var_dynamics import fit_var
from rfavar.errors import AcceptanceFailure, ConfigError, MissingSeries, RfavarError, UnknownShockSeries, exit_code_for
from rfavar.estimation.diagnostics import factor_r2, sparsity_summary
from rfavar.estimation.estimator import RfavarEstimator
from rfavar.estimation.factor_init import information_criterion, project_out_observed, select_num_factors
from rfavar.estimation.idio_cov import poet_threshold, residual_cov
from rfavar.models.dgp import DgpConfig
from rfavar.models.fit import FitOptions, IcSurface, PenaltyPair, RfavarFit
from rfavar.models.identification import IdentifiedModel
from rfavar.models.irf import BootstrapOptions, IrfResult
from rfavar.models.montecarlo import MonteCarloConfig
from rfavar.models.panel import ObservedBlock, SeriesSpec, TimePanel
from rfavar.models.run_config import RunConfig
from rfavar.models.scheme import Command
from rfavar.models.transform_code import TransformCode
from rfavar.models.var import VarModel
from rfavar.montecarlo.runner import run_ladder
from rfavar.simulation.dgp import simulate
from rfavar.utils.io import read_json, write_frame, write_json, write_matrix
from rfavar.utils.parallel import resolve_threads

logger = logging.getLogger(__name__)

RULE = "=" * 100
THIN_RULE = "-" * 100
BOOTSTRAP_NOTE = "bands reflect VAR estimation uncertainty only; factors and loadings are held fixed"
SAVED_PANEL = "panel_standardized.csv"


def _step(title: str):
    print(f"{RULE}\n{title}\n{THIN_RULE}")


@dataclass
class EstimationRun:
    """Everything one pass of the estimation pipeline produces."""
    panel: TimePanel
    observed: ObservedBlock
    r1: int
    r1_source: str
    penalties: PenaltyPair
    surface: IcSurface | None
    fit: RfavarFit
    var: VarModel
    identified: IdentifiedModel
    naming_rows: list[int]

    @property
    def factor_names(self) -> list[str]:
        return [f"F{k + 1}" for k in range(self.r1)] + list(self.observed.ids)


def cmd_simulate(config: RunConfig) -> list[Path]:
    """Panel CSV with the latent-driven series and the observed factors, plus the truth as JSON."""
    try:
        dgp = DgpConfig(**{**config.dgp, "seed": config.seed}).validate()
    except TypeError as e:
        raise ConfigError("dgp", str(e)) from e

    _step("SIMULATE")
    truth = simulate(dgp)
    x_ids = [f"x{i + 1:03d}" for i in range(dgp.n_series)]
    g_ids = [f"g{j + 1}" for j in range(dgp.r2)]
    labels = list(pd.period_range("2000-01", periods=dgp.n_periods, freq="M").strftime("%Y-%m"))
    out = Path(config.out)

    panel_path = write_raw_panel(out / "panel.csv", np.vstack([truth.X, truth.G.T]), x_ids + g_ids, labels)
    truth_path = write_json(out / "truth.json", {**truth.to_dict(), "series": x_ids, "observed": g_ids})
    spec_path = write_transform_specs(out / "spec.csv", [SeriesSpec(i, TransformCode.LEVEL) for i in x_ids + g_ids])
    print(f"N={dgp.n_series}, T={dgp.n_periods}, r1={dgp.r1}, r2={dgp.r2}, seed={dgp.seed}")
    print(f"Wrote {panel_path}, {spec_path} and {truth_path}")
    return [panel_path, spec_path, truth_path]


def _choose_r1(config: RunConfig, X: np.ndarray, G: np.ndarray, out: Path) -> tuple[int, str]:
    if not config.model.auto_r1:
        return int(config.model.r1), "fixed"
    x_dot = project_out_observed(X, G)
    r_max = max(1, min(config.model.r_max, min(x_dot.shape) // 2))
    curve = information_criterion(x_dot, r_max)
    eigenvalues = np.sort(linalg.eigvalsh(x_dot @ x_dot.T / x_dot.shape[1]))[::-1][:r_max]
    write_frame(out / "scree.csv", pd.DataFrame({"k": np.arange(1, r_max + 1), "eigenvalue": eigenvalues, "ic1": curve}))
    return select_num_factors(x_dot, r_max), "ic1"


def _naming_rows(config: RunConfig, panel: TimePanel) -> list[int]:
    missing = [series_id for series_id in config.model.naming if series_id not in panel.ids]
    if missing:
        raise MissingSeries(missing)
    return [panel.index_of(series_id) for series_id in config.model.naming]


def run_estimation(config: RunConfig, out: Path) -> EstimationRun:
    """Load, choose r1, tune penalties, fit, then the VAR and identification."""
    threads = resolve_threads(config.threads)
    min_factors = 1 if config.model.auto_r1 else int(config.model.r1)

    _step("STEP 1: PANEL")
    panel, observed = load_panel(config.panel, config.spec, list(config.observed), min_factors, config.start, config.end)
    X, G = panel.values, observed.values
    print(f"N={panel.n_series}, T={panel.n_periods}, observed factors: {observed.ids or 'none'}")

    _step("STEP 2: NUMBER OF FACTORS")
    r1, r1_source = _choose_r1(config, X, G, out)
    print(f"r1={r1} ({r1_source})")

    model = config.model
    estimator = RfavarEstimator(FitOptions(c=model.c, tol=model.tol, max_iter=model.max_iter, seed=config.seed),
                                n_jobs=threads)
    init = estimator.initialize(X, G, r1)

    _step("STEP 3: PENALTIES")
    surface = None
    if model.fixed_penalties:
        penalties = PenaltyPair(model.mu1 or 0.0, model.mu2 or 0.0)
    else:
        if model.grid1 is not None and model.grid2 is not None:
            penalties, surface = estimator.select_penalties(X, G, r1, list(model.grid1), list(model.grid2), init=init)
        else:
            # data-driven grids can run to dozens of points per axis; refine around a coarse winner
            default1, default2 = estimator.default_grids(X, G, r1, init=init)
            grid1 = list(model.grid1) if model.grid1 is not None else default1
            grid2 = list(model.grid2) if model.grid2 is not None else default2
            penalties, surface = estimator.search_penalties(X, G, r1, grid1, grid2, init=init)
    print(f"mu1={penalties.mu1:g}, mu2={penalties.mu2:g}")

    _step("STEP 4: MM-EM FIT")
    fit = estimator.fit(X, G, r1, penalties, init=init)
    print(f"{fit.iterations} sweeps, converged={fit.converged}, nonzero loadings={fit.loadings.nonzero_count}")

    var, naming_rows, identified = _dynamics(config, panel, observed, fit)
    return EstimationRun(panel, observed, r1, r1_source, penalties, surface, fit, var, identified, naming_rows)


def _dynamics(config: RunConfig, panel: TimePanel, observed: ObservedBlock,
              fit: RfavarFit) -> tuple[VarModel, list[int], IdentifiedModel]:
    _step("STEP 5: VAR AND IDENTIFICATION")
    model = config.model
    var = fit_var(fit.composite_factors(observed.values), model.p, intercept=model.intercept)
    naming_rows = _naming_rows(config, panel)
    identified = identify(fit, observed.values, var, model.scheme, naming_rows, panel.values)
    print(f"VAR({model.p}) companion radius {var.companion_radius:.4f}, scheme {identified.scheme}")
    return var, naming_rows, identified


def restore_estimation(config: RunConfig) -> EstimationRun:
    """Reuse the fit an earlier ``estimate`` wrote to config.fit; only the VAR and identification are redone."""
    source = Path(config.fit)
    fit = RfavarFit.from_dict(read_json(source / "fit.json"))
    manifest = read_json(source / "manifest.json")

    _step("STEP 1: PANEL")
    panel, observed = load_panel(config.panel, config.spec, list(config.observed), fit.r1, config.start, config.end)
    saved = read_saved_panel(source / SAVED_PANEL)
    same_panel = (
        saved.ids == panel.ids
        and saved.period_labels == panel.period_labels
        and np.allclose(saved.values, panel.values, rtol=0.0, atol=1e-10)
        and fit.r2 == observed.n_factors
    )
    if not same_panel:
        raise ConfigError("fit", f"{source} was estimated on a different panel, window, spec or observed set")
    print(f"N={panel.n_series}, T={panel.n_periods}, observed factors: {observed.ids or 'none'}")

    _step("STEPS 2-4: REUSED FIT")
    print(f"r1={fit.r1} ({manifest['r1_source']}), mu1={fit.penalties.mu1:g}, mu2={fit.penalties.mu2:g} from {source}")
    var, naming_rows, identified = _dynamics(config, panel, observed, fit)
    return EstimationRun(panel, observed, fit.r1, manifest["r1_source"], fit.penalties, None, fit, var, identified,
                         naming_rows)


def cmd_estimate(config: RunConfig) -> list[Path]:
    out = Path(config.out)
    run = run_estimation(config, out)
    X, G = run.panel.values, run.observed.values
    ids, names = run.panel.ids, run.factor_names
    paths = []

    _step("STEP 6: OUTPUTS")
    h = run.fit.composite_factors(G)
    idio = poet_threshold(residual_cov(X, run.fit.loadings, h), run.panel.n_series, run.panel.n_periods)
    report = identification_diagnostic(run.fit.loadings, run.r1, run.observed.n_factors)

    paths.append(write_json(out / "fit.json", run.fit.to_dict()))
    paths.extend(save_panel(run.panel, out / SAVED_PANEL))
    paths.append(write_matrix(out / "loadings.csv", run.fit.loadings.full, ids, names))
    if run.surface is not None:
        paths.append(write_frame(out / "ic_surface.csv", pd.DataFrame(run.surface.to_rows())))
    paths.append(write_json(out / "identified.json", {
        **run.identified.to_dict(),
        "factor_names": names,
        "naming_series": list(config.model.naming),
        "identification": report.to_dict(),
    }))
    paths.append(write_matrix(out / "impact.csv", run.identified.impact_observables, ids, names))
    identified_h = np.hstack([run.identified.factors_hat, G])
    paths.append(write_matrix(out / "r2.csv", factor_r2(X, identified_h), ids, names))
    paths.append(write_json(out / "poet.json", {
        **idio.summary(),
        "sparsity": sparsity_summary(run.fit.loadings, idio),
    }))
    paths.append(write_json(out / "manifest.json", {
        "command": str(config.command),
        "n_series": run.panel.n_series,
        "n_periods": run.panel.n_periods,
        "r1": run.r1,
        "r1_source": run.r1_source,
        "penalties": run.penalties.to_dict(),
        "converged": run.fit.converged,
        "seed": config.seed,
        "config": config.to_dict(),
    }))
    print(f"Wrote {len(paths)} files to {out}")
    return paths


def _shock_index(config: RunConfig, run: EstimationRun) -> tuple[str, int]:
    ids = run.observed.ids
    shock = config.irf.shock if config.irf.shock is not None else (ids[-1] if ids else None)
    if shock is None or shock not in ids:
        raise UnknownShockSeries(f"Shock series '{shock}' is not an observed factor (observed: {ids})")
    return shock, run.r1 + ids.index(shock)


def _long_frame(result: IrfResult, labels: list[str], kind: str) -> pd.DataFrame:
    if kind == "factor":
        point, lower, upper = result.factor_irf, result.factor_lower, result.factor_upper
    else:
        point, lower, upper = result.observable_irf, result.ci_lower, result.ci_upper
    # one block of rows per series, horizons ascending
    frame = pd.DataFrame({
        "series": np.repeat(labels, len(result.horizons)),
        "horizon": np.tile(result.horizons, len(labels)),
        "point": point.T.ravel(),
    })
    if lower is not None:
        frame["lower"] = lower.T.ravel()
        frame["upper"] = upper.T.ravel()
    return frame


def cmd_irf(config: RunConfig) -> list[Path]:
    out = Path(config.out)
    run = restore_estimation(config) if config.fit else run_estimation(config, out)
    shock, shock_index = _shock_index(config, run)
    irf_settings = config.irf
    codes = [int(code) for code in run.panel.codes]

    _step("STEP 6: IMPULSE RESPONSES")
    if irf_settings.boot > 0:
        options = BootstrapOptions(
            n_boot=irf_settings.boot,
            h_max=irf_settings.h_max,
            shock_index=shock_index,
            ci_level=irf_settings.ci_level,
            seed=config.seed,
            scheme=config.model.scheme,
            naming_rows=tuple(run.naming_rows),
            intercept=config.model.intercept,
            n_jobs=resolve_threads(config.threads),
        )
        result = bootstrap_irf(run.fit, run.observed.values, run.var, options, codes=codes, X=run.panel.values)
    else:
        result = accumulate_by_code(impulse_responses(run.identified, irf_settings.h_max, shock_index), codes)

    magnitude = irf_settings.bp / 100.0
    series_stds = run.panel.stds if irf_settings.series_units else None
    result = rescale_to_original_units(result, run.observed.std_of(shock), magnitude, series_stds)
    print(f"Shock: {shock} ({irf_settings.bp:g}bp), h_max={irf_settings.h_max}, B={irf_settings.boot}")

    paths = [
        write_frame(out / "irf_factors.csv", _long_frame(result, run.factor_names, "factor")),
        write_frame(out / "irf_observables.csv", _long_frame(result, run.panel.ids, "observable")),
        write_json(out / "irf_manifest.json", {
            "scheme": str(config.model.scheme),
            "shock": shock,
            "shock_index": shock_index,
            "bp": irf_settings.bp,
            "shock_size_standardized": result.shock_size_standardized,
            "boot": irf_settings.boot,
            "n_dropped": result.n_dropped,
            "ci_level": irf_settings.ci_level if irf_settings.boot else None,
            "seed": config.seed,
            "accumulated": [sid for sid, flag in zip(run.panel.ids, result.accumulated) if flag],
            "warnings": result.warnings,
            "note": BOOTSTRAP_NOTE,
        }),
    ]
    print(f"Wrote {len(paths)} files to {out}")
    return paths


def cmd_montecarlo(config: RunConfig) -> dict:
    settings = dict(config.montecarlo)
    if "sizes" in settings:
        settings["sizes"] = tuple(tuple(size) for size in settings["sizes"])
    for key in ("grid1", "grid2"):
        if key in settings:
            settings[key] = tuple(settings[key])
    try:
        mc_config = MonteCarloConfig(**settings, seed=config.seed, n_jobs=resolve_threads(config.threads))
    except TypeError as e:
        raise ConfigError("montecarlo", str(e)) from e

    _step("MONTE CARLO")
    _, summary, passed = run_ladder(mc_config, config.out)
    for assertion in summary["assertions"]:
        print(f"{assertion['name']}: {assertion['status']}")
    if not passed:
        failed = [a["name"] for a in summary["assertions"] if a["status"] == "fail"]
        raise AcceptanceFailure(f"Monte Carlo assertions failed: {', '.join(failed)}")
    return summary


COMMANDS = {
    Command.SIMULATE: cmd_simulate,
    Command.ESTIMATE: cmd_estimate,
    Command.IRF: cmd_irf,
    Command.MONTECARLO: cmd_montecarlo,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker count (falls back to RFAVAR_THREADS)")
    common.add_argument("--r1", help="number of latent factors or 'auto'")
    common.add_argument("--p", type=int, help="VAR lag order")
    common.add_argument("--mu1", type=float, help="fixed latent-loading penalty")
    common.add_argument("--mu2", type=float, help="fixed observed-loading penalty")
    common.add_argument("--scheme", choices=["ira", "irb"])
    common.add_argument("--shock", help="observed series id to shock")
    common.add_argument("--bp", type=float, help="shock size in basis points")
    common.add_argument("--boot", type=int, help="bootstrap replications (0: point estimates only)")
    common.add_argument("--hmax", type=int, help="largest response horizon")
    common.add_argument("--fit", help="irf: directory written by an earlier estimate, reused instead of refitting")

    parser = argparse.ArgumentParser(prog="rfavar", description="Regularized factor-augmented VAR toolkit")
    commands = parser.add_subparsers(dest="command", required=True)
    for command in Command:
        commands.add_parser(str(command), parents=[common])
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config:
        try:
            data = read_json(args.config)
        except (OSError, ValueError) as e:
            raise ConfigError("config", f"cannot read {args.config}: {e}") from e
    overrides = {key: value for key, value in vars(args).items() if key not in ("config", "command")}
    try:
        return RunConfig.from_dict(data, args.command).with_overrides(overrides).validate()
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError("flags", str(e)) from e


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        COMMANDS[config.command](config)
    except RfavarError as e:
        code = exit_code_for(e)
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return code
    print(RULE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
