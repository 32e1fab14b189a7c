"""
Monte Carlo ladder for the consistency checks.

Every replication simulates a sparse FAVAR panel, standardizes it the way
``load_panel`` does, tunes (mu1, mu2) by the information criterion and scores
the fit against the truth on the standardized scale. Latent factors are only
identified up to a signed permutation, so estimates are aligned to the truth
first.
"""
import logging
import warnings
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment
from tqdm.auto import tqdm

from rfavar.data.transforms import standardize
from rfavar.errors import ConvergenceWarning, RfavarError
from rfavar.estimation.estimator import RfavarEstimator
from rfavar.models.dgp import DgpConfig, DgpTruth
from rfavar.models.fit import FitOptions, RfavarFit
from rfavar.models.montecarlo import AssertionOutcome, MonteCarloConfig
from rfavar.simulation.dgp import simulate
from rfavar.utils.io import write_frame, write_json
from rfavar.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

ERROR_COLUMNS = ("loadings_error", "phi_error", "factor_mse")


def align_factors(estimate: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Signed permutation matching estimated factor columns to true ones by maximal
    total absolute correlation.
    Returns:
        perm: perm[k] is the estimated column matched to true column k
        signs: sign of that correlation
    """
    r = truth.shape[1]
    corr = np.corrcoef(truth.T, estimate.T)[:r, r:]
    corr = np.nan_to_num(corr)
    rows, cols = linear_sum_assignment(-np.abs(corr))
    perm = cols[np.argsort(rows)]
    signs = np.sign(corr[np.arange(r), perm])
    signs[signs == 0] = 1.0
    return perm, signs


def zero_pattern_f1(estimate: np.ndarray, truth: np.ndarray) -> float:
    """F1 score of exact zeros in ``estimate`` as a detector of zeros in ``truth``."""
    predicted = estimate == 0.0
    actual = truth == 0.0
    true_positive = int(np.sum(predicted & actual))
    if not predicted.any() and not actual.any():
        return 1.0
    precision = true_positive / max(int(predicted.sum()), 1)
    recall = true_positive / max(int(actual.sum()), 1)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def standardized_truth(truth: DgpTruth) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(X, G, Lambda^f, Lambda^g, Phi_e) on the scale the estimator sees."""
    X, _, x_stds = standardize(truth.X)
    G, _, g_stds = standardize(truth.G.T)
    lambda_f = truth.loadings.latent / x_stds[:, None]
    lambda_g = truth.loadings.observed * g_stds / x_stds[:, None]
    phi_e = np.diag(truth.sigma_e) / x_stds ** 2
    return X, G.T, lambda_f, lambda_g, phi_e


def score_fit(fit: RfavarFit, truth: DgpTruth) -> dict:
    _, _, lambda_f, lambda_g, phi_e = standardized_truth(truth)
    n = lambda_f.shape[0]
    perm, signs = align_factors(fit.factors_f, truth.F)
    aligned_f = fit.loadings.latent[:, perm] * signs
    aligned_factors = fit.factors_f[:, perm] * signs

    loadings_error = (np.sum((aligned_f - lambda_f) ** 2) + np.sum((fit.loadings.observed - lambda_g) ** 2)) / n
    return {
        "loadings_error": float(loadings_error),
        "phi_error": float(np.sum((fit.phi_e - phi_e) ** 2) / n),
        "factor_mse": float(np.mean((aligned_factors - truth.F) ** 2)),
        "f1": float(zero_pattern_f1(aligned_f, lambda_f)),
    }


def replication_seed(seed: int, size_index: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed, size_index, rep]).generate_state(1)[0])


class _ReplicationJob:

    def __init__(self, config: MonteCarloConfig, options: FitOptions):
        self.config = config
        self.options = options

    def __call__(self, task: tuple[int, int]) -> dict:
        size_index, rep = task
        n, t = self.config.sizes[size_index]
        seed = replication_seed(self.config.seed, size_index, rep)
        row = {"n": n, "t": t, "rep": rep, "seed": seed}
        dgp = DgpConfig(
            n_series=n, n_periods=t, r1=self.config.r1, r2=self.config.r2,
            beta=self.config.beta, zero_fraction=self.config.zero_fraction, seed=seed,
        )
        try:
            truth = simulate(dgp)
            X, G, _, _, _ = standardized_truth(truth)
            estimator = RfavarEstimator(self.options)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                penalties, _ = estimator.select_penalties(X, G, self.config.r1,
                                                          list(self.config.grid1), list(self.config.grid2))
                fit = estimator.fit(X, G, self.config.r1, penalties)
        except RfavarError as e:
            logger.warning("Replication (N=%d, T=%d, rep=%d) failed: %s", n, t, rep, e)
            return {**row, **{column: np.nan for column in ERROR_COLUMNS}, "f1": np.nan,
                    "mu1": np.nan, "mu2": np.nan, "converged": False, "error": str(e)}
        return {**row, **score_fit(fit, truth), "mu1": penalties.mu1, "mu2": penalties.mu2,
                "converged": fit.converged, "error": ""}


def _strictly_decreasing(values: list[float]) -> bool:
    return all(later < earlier for earlier, later in zip(values, values[1:]))


def evaluate_assertions(frame: pd.DataFrame, config: MonteCarloConfig) -> list[AssertionOutcome]:
    medians = frame.groupby(["n", "t"], sort=False)[list(ERROR_COLUMNS) + ["f1"]].median()
    outcomes = []
    for column in ERROR_COLUMNS:
        values = medians[column].tolist()
        if len(config.sizes) < 2 or config.n_reps < 2 or np.any(np.isnan(values)):
            status = "insufficient"
        else:
            status = "pass" if _strictly_decreasing(values) else "fail"
        outcomes.append(AssertionOutcome(f"{column}_decreasing", status, values))

    f1 = float(medians["f1"].iloc[-1])
    if config.n_reps < 2 or np.isnan(f1):
        status = "insufficient"
    else:
        status = "pass" if f1 >= config.f1_threshold else "fail"
    outcomes.append(AssertionOutcome("zero_pattern_f1", status, [f1]))
    return outcomes


def run_ladder(
        config: MonteCarloConfig,
        out_dir: str | Path,
        options: FitOptions | None = None,
) -> tuple[pd.DataFrame, dict, bool]:
    """
    Run every (size, replication) pair, write ``montecarlo.csv`` and ``summary.json``.
    Returns:
        per-replication frame, summary dict, True when no assertion failed
    """
    config.validate()
    options = options or FitOptions()
    out_dir = Path(out_dir)
    tasks = [(size_index, rep) for size_index in range(len(config.sizes)) for rep in range(config.n_reps)]
    job = _ReplicationJob(config, options)

    if config.n_jobs > 1:
        rows = parallel_map(job, tasks, config.n_jobs)
    else:
        rows = [job(task) for task in tqdm(tasks, desc="Monte Carlo", leave=False)]
    frame = pd.DataFrame(rows)

    outcomes = evaluate_assertions(frame, config)
    passed = not any(outcome.failed for outcome in outcomes)
    medians = frame.groupby(["n", "t"], sort=False)[list(ERROR_COLUMNS) + ["f1"]].median().reset_index()
    summary = {
        "config": config.to_dict(),
        "medians": medians.to_dict(orient="records"),
        "failed_replications": int((frame["error"] != "").sum()),
        "assertions": [outcome.to_dict() for outcome in outcomes],
        "passed": passed,
    }

    write_frame(out_dir / "montecarlo.csv", frame)
    write_json(out_dir / "summary.json", summary)
    logger.info("Monte Carlo finished: %d replications, passed=%s", len(rows), passed)
    return frame, summary, passed
