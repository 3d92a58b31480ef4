"""Shared helpers for the experiment scripts."""

import numpy as np

from etf2d.pipeline import dominance_margin, empirical_second_moment, run_pipeline


def summarize(sc, trials=None, seed=None):
    """Run the pipeline once and reduce it to interior-cell statistics."""
    res = run_pipeline(sc, trials=trials, seed=seed)
    P_emp = empirical_second_moment(res.errors())[1:, 1:]
    X_emp = empirical_second_moment(res.traj.states)[1:, 1:]
    Xi_u = res.bounds.Xi_u[1:, 1:]
    tr = lambda M: np.trace(M, axis1=-2, axis2=-1)
    return {
        "trigger_rate": res.etm.trigger_rate(),
        "mean_trace_bound": float(tr(Xi_u).mean()),
        "mean_trace_empirical": float(tr(P_emp).mean()),
        "min_margin_Xi_u": float(np.nanmin(dominance_margin(Xi_u, P_emp))),
        "min_margin_X_bar": float(np.nanmin(dominance_margin(res.bounds.X_bar[1:, 1:], X_emp))),
        "clamped": res.transmission.clamped,
    }
