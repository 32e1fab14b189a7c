"""
Residual-bootstrap confidence bands for structural impulse responses.

Factors are treated as known: each replication resamples the centered VAR
residuals, rebuilds the composite factors from the first p observed values,
refits the VAR and re-identifies. Loadings (and the IRb naming block) stay fixed.
"""
import logging
import warnings

import numpy as np
from scipy import linalg
from tqdm.auto import tqdm

from rfavar._constants import MAX_DROPPED_SHARE
from rfavar.dynamics.identification import identify
from rfavar.dynamics.impulse import accumulate_paths, accumulation_orders, irf_factors, irf_observables
from rfavar.dynamics.var_dynamics import fit_var, simulate_path
from rfavar.errors import BandWarning, CodeLengthMismatch, DegenerateBands, RfavarError
from rfavar.models.fit import RfavarFit
from rfavar.models.irf import BootstrapOptions, IrfResult
from rfavar.models.var import VarModel
from rfavar.simulation.dgp import replication_rng
from rfavar.utils.parallel import parallel_map

logger = logging.getLogger(__name__)


class _Replication:
    """One bootstrap draw; picklable so replications can run in worker processes."""

    def __init__(self, fit: RfavarFit, G: np.ndarray, var: VarModel, options: BootstrapOptions,
                 orders: np.ndarray | None, X: np.ndarray | None):
        self.fit = fit
        self.G = G
        self.var = var
        self.options = options
        self.orders = orders
        self.X = X
        self.centered = var.residuals - var.residuals.mean(axis=0)

    def __call__(self, index: int) -> tuple[np.ndarray, np.ndarray] | None:
        rng = replication_rng(self.options.seed, index)
        n_resid = self.centered.shape[0]
        innovations = self.centered[rng.integers(0, n_resid, size=n_resid)]
        try:
            path = simulate_path(self.var, innovations, self.var.initial_values)
            var_b = fit_var(path, self.var.p, intercept=self.options.intercept)
            model = identify(self.fit, self.G, var_b, self.options.scheme, self.options.naming_rows, self.X)
            factor = irf_factors(model, self.options.h_max, self.options.shock_index, self.options.shock_size)
            observable = irf_observables(model, self.options.h_max, self.options.shock_index, self.options.shock_size)
        except (RfavarError, linalg.LinAlgError) as e:
            logger.debug("Bootstrap replication %d dropped: %s", index, e)
            return None
        if self.orders is not None:
            observable = accumulate_paths(observable, self.orders)
        return factor, observable


def _outside_band(point: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> int:
    return int(np.sum((point < lower) | (point > upper)))


def bootstrap_irf(
        fit: RfavarFit,
        G: np.ndarray,
        var: VarModel,
        options: BootstrapOptions,
        codes: list[int] | None = None,
        X: np.ndarray | None = None,
) -> IrfResult:
    """
    Point responses plus percentile bands at (1 -/+ ci_level) / 2.
    Args:
        fit: reduced-form fit the VAR was estimated from
        G: observed factors, T x r2
        var: VAR on [F~ G] with residuals and initial values
        options: replications, horizon, shock, seed and scheme
        codes: transform codes; when given, observable responses are accumulated per draw
        X: standardized panel, used only to sign latent factors under IRa
    Returns:
        IrfResult with factor and observable bands; deterministic given options.seed
    """
    if var.initial_values is None:
        raise ValueError("VAR has no initial values to seed the bootstrap recursion")
    G = np.asarray(G, dtype=float).reshape(fit.factors_f.shape[0], -1)
    if codes is not None and len(codes) != fit.loadings.n_series:
        raise CodeLengthMismatch(f"Got {len(codes)} transform codes for {fit.loadings.n_series} series")
    orders = None if codes is None else accumulation_orders(codes)

    point_model = identify(fit, G, var, options.scheme, options.naming_rows, X)
    point_factor = irf_factors(point_model, options.h_max, options.shock_index, options.shock_size)
    point_observable = irf_observables(point_model, options.h_max, options.shock_index, options.shock_size)
    if orders is not None:
        point_observable = accumulate_paths(point_observable, orders)

    replication = _Replication(fit, G, var, options, orders, X)
    indices = range(options.n_boot)
    if options.n_jobs > 1:
        draws = parallel_map(replication, indices, options.n_jobs)
    else:
        draws = [replication(b) for b in tqdm(indices, desc="Bootstrap", leave=False)]

    kept = [draw for draw in draws if draw is not None]
    n_dropped = options.n_boot - len(kept)
    if not kept or n_dropped > MAX_DROPPED_SHARE * options.n_boot:
        raise DegenerateBands(f"{n_dropped} of {options.n_boot} bootstrap replications failed")
    if n_dropped:
        logger.warning("%d of %d bootstrap replications dropped", n_dropped, options.n_boot)

    factor_draws = np.stack([draw[0] for draw in kept])
    observable_draws = np.stack([draw[1] for draw in kept])
    quantiles = [50.0 * (1.0 - options.ci_level), 50.0 * (1.0 + options.ci_level)]
    factor_lower, factor_upper = np.percentile(factor_draws, quantiles, axis=0)
    ci_lower, ci_upper = np.percentile(observable_draws, quantiles, axis=0)

    notes = []
    outside = _outside_band(point_observable, ci_lower, ci_upper) + _outside_band(point_factor, factor_lower, factor_upper)
    if outside:
        message = f"Point estimate lies outside its percentile band at {outside} (horizon, series) cells"
        logger.warning(message)
        warnings.warn(message, BandWarning, stacklevel=2)
        notes.append(message)

    n = point_observable.shape[1]
    return IrfResult(
        factor_irf=point_factor,
        observable_irf=point_observable,
        shock_index=options.shock_index % var.n_vars,
        shock_size_standardized=float(options.shock_size),
        accumulated=np.zeros(n, dtype=bool) if orders is None else orders > 0,
        factor_lower=factor_lower,
        factor_upper=factor_upper,
        ci_lower=ci_lower,
        ci_upper=ci_upper,
        ci_level=options.ci_level,
        n_boot=options.n_boot,
        n_dropped=n_dropped,
        warnings=notes,
    )
