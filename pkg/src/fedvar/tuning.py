"""Hyperparameter selection by rolling-origin cross-validation.

The candidate fit is re-estimated on an expanding window and scored by
its one-step-ahead squared prediction error over the last ``holdout``
origins, so no fit ever sees the observation it is scored on.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .var import forecast_one_step


@dataclass(frozen=True)
class TuneGrid:
    """One named parameter and its candidate values, in search order.

    List values from least to most regularization: on score ties the
    combination appearing later in the product ordering wins.
    """

    name: str
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise ValueError(f"grid {self.name!r} has no values")
        object.__setattr__(self, "values", tuple(self.values))


def rolling_cv(panel, fit_fn, grids, holdout=20):
    """Pick the grid combination with the lowest rolling forecast error.

    Parameters
    ----------
    panel : TimeSeriesPanel
    fit_fn : callable (panel_prefix, params_dict) -> (d, p*d) matrix
    grids : sequence of TuneGrid
    holdout : number of one-step forecast origins at the end of the panel

    Returns
    -------
    best : dict of the winning parameter values
    rows : list of {param values..., "score": mean squared error} dicts,
        one per combination, in evaluation order
    """
    if not grids:
        raise ValueError("need at least one grid")
    names = [g.name for g in grids]
    if len(set(names)) != len(names):
        raise ValueError("duplicate grid names")
    if holdout < 1:
        raise ValueError("holdout must be >= 1")
    t_len = panel.t_len
    pd = panel.p * panel.d
    first_train = t_len - holdout
    if first_train < pd + 1:
        raise ValueError(
            f"infeasible training window: {first_train} observations before "
            f"the holdout, need at least pd + 1 = {pd + 1}"
        )

    full = np.vstack([panel.presample, panel.observations])
    best = None
    best_score = np.inf
    rows = []
    for combo in itertools.product(*(g.values for g in grids)):
        params = dict(zip(names, combo))
        sq_sum = 0.0
        for i in range(first_train, t_len):
            coef = fit_fn(panel.prefix(i), params)
            recent = full[i : i + panel.p]
            pred = forecast_one_step(coef, recent)
            err = panel.observations[i] - pred
            sq_sum += float(err @ err)
        score = sq_sum / (holdout * panel.d)
        rows.append({**params, "score": score})
        if score <= best_score:
            best, best_score = params, score
    return best, rows


GRID_MULTIPLIERS = (1e-3, 10 ** -2.4, 10 ** -1.8, 10 ** -1.2, 10 ** -0.6, 1.0)

RHO_MULTIPLIERS = (0.01, 0.05, 0.1, 0.5, 1.0)


def default_grids(pd, t_len):
    """Candidate grids for the penalty weights at a given problem size.

    Six log-spaced multipliers of each weight's natural scale: sqrt(pd/T)
    for the nuclear weight, sqrt(log(pd)/T) for the two l1 weights. The
    infinity cap grid ends in None, the no-cap sentinel.
    """
    if pd < 2 or t_len < 1:
        raise ValueError("need pd >= 2 and t_len >= 1")
    lam_anchor = np.sqrt(pd / t_len)
    l1_anchor = np.sqrt(np.log(pd) / t_len)
    return {
        "lam": TuneGrid("lam", tuple(m * lam_anchor for m in GRID_MULTIPLIERS)),
        "omega": TuneGrid("omega", tuple(m * l1_anchor for m in GRID_MULTIPLIERS)),
        "varpi": TuneGrid("varpi", tuple(m * l1_anchor for m in GRID_MULTIPLIERS)),
        "zeta": TuneGrid("zeta", (0.5, 1.0, 2.0, None)),
    }


def default_rho_grid(l_pool):
    """Step size candidates scaled by the pooled operator norm l_pool."""
    if l_pool <= 0:
        raise ValueError("l_pool must be positive")
    return TuneGrid("rho", tuple(m / l_pool for m in RHO_MULTIPLIERS))
