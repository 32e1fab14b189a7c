import logging
import warnings

import numpy as np
from scipy import linalg

from rfavar.errors import ConvergenceWarning, EmptyGrid, EstimationError, RfavarError, SingularWeightedGram
from rfavar.estimation.factor_init import init_unpenalized
from rfavar.estimation.idio_cov import poet_threshold, residual_cov
from rfavar.estimation.mm_em import gls_factors, neg_loglik, run_mm_em
from rfavar.models.fit import EstimationState, FitOptions, IcCell, IcSurface, InitState, PenaltyPair, RfavarFit
from rfavar.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

COARSE_POINTS = 6
DEFAULT_MAX_POINTS = 40
SEARCH_STRIDE = 4


def ic_multiplier(n: int, t: int) -> float:
    """Per-nonzero penalty of the selection criterion: sqrt(log(2N)/N + log N/(NT))."""
    return float(np.sqrt(np.log(2 * n) / n + np.log(n) / (n * t)))


def _validate_grid(name: str, grid: list[float]) -> list[float]:
    grid = [float(value) for value in grid]
    if not grid:
        raise EmptyGrid(f"{name} is empty")
    if any(value < 0 or not np.isfinite(value) for value in grid):
        raise EmptyGrid(f"{name} must contain finite nonnegative values")
    if grid != sorted(grid):
        raise EmptyGrid(f"{name} must be sorted ascending")
    return grid


class RfavarEstimator:
    """Penalized FAVAR loadings by MM-EM, with penalty selection by information criterion."""

    def __init__(self, options: FitOptions | None = None, n_jobs: int = 1):
        self.options = options or FitOptions()
        self.n_jobs = n_jobs

    def initialize(self, X: np.ndarray, G: np.ndarray, r1: int) -> InitState:
        return init_unpenalized(
            X, G, r1,
            max_iter=self.options.max_iter,
            tol=self.options.tol,
            c=self.options.c,
            seed_method=self.options.seed_method,
            seed=self.options.seed,
        )

    def fit(
            self,
            X: np.ndarray,
            G: np.ndarray,
            r1: int,
            penalties: PenaltyPair,
            init: InitState | None = None,
    ) -> RfavarFit:
        """
        Steps 1-6: project out G, initialize without penalty, iterate the penalized
        MM-EM sweeps to convergence, then extract GLS factors from X.
        Args:
            X: standardized N x T panel
            G: standardized T x r2 observed factors
            r1: number of latent factors
            penalties: (mu1, mu2)
            init: starting point; computed by ``initialize`` when omitted
        """
        if r1 < 1:
            raise ValueError(f"r1 must be at least 1, got {r1}")
        X = np.asarray(X, dtype=float)
        G = np.asarray(G, dtype=float).reshape(X.shape[1], -1)
        s_x = X @ X.T / X.shape[1]

        init = init if init is not None else self.initialize(X, G, r1)
        initial = EstimationState(init.loadings, init.phi_e)
        state, objective_trace, surrogate_trace, converged = run_mm_em(s_x, initial, penalties, self.options)

        factors_f = gls_factors(state.loadings.latent, state.phi_e, X)
        logger.info(
            "Fit mu1=%.4g mu2=%.4g: %d sweeps, %d nonzero loadings, converged=%s",
            penalties.mu1, penalties.mu2, state.iteration, state.loadings.nonzero_count, converged,
        )
        return RfavarFit(
            loadings=state.loadings,
            phi_e=state.phi_e,
            factors_f=factors_f,
            objective_trace=objective_trace,
            penalties=penalties,
            iterations=state.iteration,
            converged=converged,
            surrogate_trace=surrogate_trace,
        )

    def information_criterion(self, X: np.ndarray, G: np.ndarray, fit: RfavarFit) -> IcCell:
        """IC = L(Lambda, S_H, Sigma_e^tau) + kappa * multiplier, with Sigma_e^tau from POET."""
        n, t = X.shape
        h = fit.composite_factors(G)
        s_h = h.T @ h / t
        s_x = X @ X.T / t
        idio = poet_threshold(residual_cov(X, fit.loadings, h), n, t, repair=True)
        loglik = neg_loglik(fit.loadings, s_h, idio.matrix, s_x)
        kappa = fit.loadings.nonzero_count
        return IcCell(
            mu1=fit.penalties.mu1,
            mu2=fit.penalties.mu2,
            ic=loglik + kappa * ic_multiplier(n, t),
            kappa=kappa,
            loglik=loglik,
            converged=fit.converged,
        )

    def _evaluate_cell(self, X, G, r1, penalties: PenaltyPair, init: InitState) -> tuple[IcCell, RfavarFit | None]:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                fit = self.fit(X, G, r1, penalties, init=init)
            return self.information_criterion(X, G, fit), fit
        except (RfavarError, linalg.LinAlgError) as e:
            logger.info("Grid cell mu1=%.4g mu2=%.4g flagged: %s", penalties.mu1, penalties.mu2, e)
            return IcCell(penalties.mu1, penalties.mu2, np.inf, 0, np.inf, False, error=str(e)), None

    def _prepare(self, X, G, r1, init: InitState | None) -> tuple[np.ndarray, np.ndarray, InitState]:
        X = np.asarray(X, dtype=float)
        G = np.asarray(G, dtype=float).reshape(X.shape[1], -1)
        return X, G, init if init is not None else self.initialize(X, G, r1)

    def select_penalties(
            self,
            X: np.ndarray,
            G: np.ndarray,
            r1: int,
            grid1: list[float],
            grid2: list[float],
            init: InitState | None = None,
    ) -> tuple[PenaltyPair, IcSurface]:
        """
        Fit every (mu1, mu2) on the grid and keep the pair minimizing the criterion.
        Ties go to the larger mu1, then the larger mu2; failed cells are flagged and skipped.
        Every cell starts from the same unpenalized fit, so the surface does not depend
        on evaluation order or worker count.
        """
        grid1 = _validate_grid("grid1", grid1)
        grid2 = _validate_grid("grid2", grid2)
        X, G, init = self._prepare(X, G, r1, init)

        pairs = [PenaltyPair(mu1, mu2) for mu2 in grid2 for mu1 in grid1]
        cells = parallel_map(_GridCell(self, X, G, r1, init), pairs, self.n_jobs)
        return _select(IcSurface(cells=cells, multiplier=ic_multiplier(*X.shape)))

    def search_penalties(
            self,
            X: np.ndarray,
            G: np.ndarray,
            r1: int,
            grid1: list[float],
            grid2: list[float],
            coarse_points: int = COARSE_POINTS,
            init: InitState | None = None,
    ) -> tuple[PenaltyPair, IcSurface]:
        """
        Coarse-to-fine version of ``select_penalties`` for long grids.
        Evaluates at most ``coarse_points`` evenly spaced values per axis, then every
        cell between the coarse neighbours of the coarse winner. The surface holds the
        evaluated cells only, in the same (mu2, mu1) order as the full search.
        """
        grid1 = _validate_grid("grid1", grid1)
        grid2 = _validate_grid("grid2", grid2)
        if coarse_points < 2:
            raise ValueError(f"coarse_points must be at least 2, got {coarse_points}")
        X, G, init = self._prepare(X, G, r1, init)
        job = _GridCell(self, X, G, r1, init)
        evaluated: dict[tuple[int, int], IcCell] = {}

        def evaluate(keys: list[tuple[int, int]]) -> None:
            todo = [key for key in keys if key not in evaluated]
            cells = parallel_map(job, [PenaltyPair(grid1[i], grid2[j]) for i, j in todo], self.n_jobs)
            evaluated.update(zip(todo, cells))

        coarse1 = coarse_indices(len(grid1), coarse_points)
        coarse2 = coarse_indices(len(grid2), coarse_points)
        evaluate([(i, j) for j in coarse2 for i in coarse1])
        winner, _ = _select(IcSurface(cells=list(evaluated.values()), multiplier=0.0))
        i_best, j_best = grid1.index(winner.mu1), grid2.index(winner.mu2)
        lo1, hi1 = _neighbours(coarse1, i_best)
        lo2, hi2 = _neighbours(coarse2, j_best)
        evaluate([(i, j) for j in range(lo2, hi2 + 1) for i in range(lo1, hi1 + 1)])

        order = sorted(evaluated, key=lambda key: (key[1], key[0]))
        logger.info("Coarse-to-fine search evaluated %d of %d grid cells", len(order), len(grid1) * len(grid2))
        return _select(IcSurface(cells=[evaluated[key] for key in order], multiplier=ic_multiplier(*X.shape)))

    def default_grids(
            self,
            X: np.ndarray,
            G: np.ndarray,
            r1: int,
            step1: float = 0.05,
            step2: float = 0.1,
            max_points: int = DEFAULT_MAX_POINTS,
            init: InitState | None = None,
    ) -> tuple[list[float], list[float]]:
        """
        mu1 in [0, step1, ...] and mu2 in [0, step2, ...], each stopped before the first
        value that empties its loadings block. The cutoff is located by striding ahead,
        then bisecting, assuming a block that is empty at some penalty stays empty above it.
        """
        if max_points < 1:
            raise ValueError(f"max_points must be at least 1, got {max_points}")
        X, G, init = self._prepare(X, G, r1, init)

        def empties(penalties: PenaltyPair, block: str) -> bool:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", ConvergenceWarning)
                    fit = self.fit(X, G, r1, penalties, init=init)
            except SingularWeightedGram:
                return True
            values = fit.loadings.latent if block == "latent" else fit.loadings.observed
            return not np.any(values)

        n1 = grid_length(lambda k: empties(PenaltyPair(k * step1, 0.0), "latent"), max_points)
        n2 = grid_length(lambda k: empties(PenaltyPair(0.0, k * step2), "observed"), max_points) if G.shape[1] else 1
        for name, size in (("mu1", n1), ("mu2", n2 if G.shape[1] else 0)):
            if size == max_points:
                logger.warning("Default %s grid stopped at max_points=%d before its block emptied", name, max_points)
        grid1 = [round(k * step1, 12) for k in range(n1)]
        grid2 = [round(k * step2, 12) for k in range(n2)]
        logger.info("Default grids: mu1 up to %.4g (%d points), mu2 up to %.4g (%d points)",
                    grid1[-1], len(grid1), grid2[-1], len(grid2))
        return grid1, grid2


def _select(surface: IcSurface) -> tuple[PenaltyPair, IcSurface]:
    try:
        best = surface.best()
    except ValueError:
        raise EstimationError("Every grid cell failed; no penalty pair can be selected") from None
    logger.info("Selected mu1=%.4g, mu2=%.4g (IC=%.6g, kappa=%d)", best.mu1, best.mu2, best.ic, best.kappa)
    return PenaltyPair(best.mu1, best.mu2), surface


def coarse_indices(size: int, points: int) -> list[int]:
    """At most ``points`` evenly spaced indices into a grid of ``size``, both ends included."""
    if size <= points:
        return list(range(size))
    return sorted({int(index) for index in np.linspace(0, size - 1, points).round()})


def _neighbours(indices: list[int], index: int) -> tuple[int, int]:
    position = indices.index(index)
    lo = indices[position - 1] if position > 0 else index
    hi = indices[position + 1] if position + 1 < len(indices) else index
    return lo, hi


def grid_length(is_empty, max_points: int, stride: int = SEARCH_STRIDE) -> int:
    """
    Number of leading grid indices whose penalty keeps the block non-empty.
    Index 0 is never tested; the result is max_points when no tested index empties it.
    """
    known, index = 0, stride
    while index < max_points and not is_empty(index):
        known, index = index, index + stride
    upper = min(index, max_points)
    while upper - known > 1:
        middle = (known + upper) // 2
        if is_empty(middle):
            upper = middle
        else:
            known = middle
    return upper


class _GridCell:
    """Picklable grid-cell job for the worker pool."""

    def __init__(self, estimator: RfavarEstimator, X: np.ndarray, G: np.ndarray, r1: int, init: InitState):
        self.estimator = estimator
        self.X = X
        self.G = G
        self.r1 = r1
        self.init = init

    def __call__(self, penalties: PenaltyPair) -> IcCell:
        cell, _ = self.estimator._evaluate_cell(self.X, self.G, self.r1, penalties, self.init)
        return cell
