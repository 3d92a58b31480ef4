"""Dynamic event-triggered mechanism (ETM) for the delayed sensor channels.

Each channel ``s`` and measurement component ``g`` carries an internal variable
``xi`` and a computable over-approximation ``xi_check``.  A cell is a
triggering instant when any channel/component has a non-positive event
generator; all channels then refresh their held (zero-order-hold) values.

The grid is scanned row-major, ``(i, j) < (i, j+1) < ... < (i+1, 0)``, which is
the linear completion of the 2-D partial order on triggering instants.
All state arrays carry a leading trial axis so that Monte Carlo trials run
side by side.
"""

from functools import cached_property
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InvariantViolation
from .system2d import GridIndex


@dataclass(frozen=True)
class EtmConfig:
    """Triggering parameters, one entry per channel (per component for sigma/rho).

    ``mode="always"`` turns the mechanism into a transmit-every-cell baseline.
    ``strict=False`` admits parameters that break the nonnegativity conditions;
    the corresponding invariant checks are then skipped rather than asserted.
    """
    varsigma: Sequence[float]
    sigma: Sequence[Sequence[float]]
    rho: Sequence[Sequence[float]]
    alpha1: Sequence[float]
    alpha2: Sequence[float]
    xi0: Sequence[float]
    mode: str = "dynamic"
    strict: bool = True

    def __post_init__(self):
        conv = {
            "varsigma": tuple(float(v) for v in self.varsigma),
            "sigma": tuple(tuple(float(v) for v in row) for row in self.sigma),
            "rho": tuple(tuple(float(v) for v in row) for row in self.rho),
            "alpha1": tuple(float(v) for v in self.alpha1),
            "alpha2": tuple(float(v) for v in self.alpha2),
            "xi0": tuple(float(v) for v in self.xi0),
        }
        for k, v in conv.items():
            object.__setattr__(self, k, v)
        if self.mode not in ("dynamic", "always"):
            raise ConfigurationError("mode must be 'dynamic' or 'always'", "etm.mode")
        S = len(self.varsigma)
        for k in conv:
            if len(conv[k]) != S:
                raise ConfigurationError(f"expected {S} channel entries", f"etm.{k}")
        for s in range(S):
            if len(self.sigma[s]) != len(self.rho[s]):
                raise ConfigurationError("sigma and rho need one entry per component",
                                         f"etm.sigma[{s}]")
            if self.varsigma[s] <= 0:
                raise ConfigurationError("must be positive", f"etm.varsigma[{s}]")
            if self.xi0[s] < 0:
                raise ConfigurationError("must be nonnegative", f"etm.xi0[{s}]")
            for g, r in enumerate(self.rho[s]):
                if r <= 0:
                    raise ConfigurationError("must be positive", f"etm.rho[{s}][{g}]")
        if self.strict:
            problems = self.lemma_violations()
            if problems:
                path, msg = problems[0]
                raise ConfigurationError(msg, path)

    @property
    def channels(self):
        return len(self.varsigma)

    def components(self, s):
        return len(self.sigma[s])

    def lemma_violations(self):
        """List ``(path, message)`` for every broken nonnegativity condition.

        The conditions are 0 < alpha1, alpha2, sigma < 1, rho >= 1/alpha and
        varsigma >= 1/alpha for both alphas.  The last pair is what keeps
        ``xi >= 0``: between triggers ``h > -xi / varsigma``.
        """
        out = []
        for s in range(self.channels):
            a1, a2 = self.alpha1[s], self.alpha2[s]
            for name, a in (("alpha1", a1), ("alpha2", a2)):
                if not 0 < a < 1:
                    out.append((f"etm.{name}[{s}]", "must lie in (0, 1)"))
            for g, sig in enumerate(self.sigma[s]):
                if not 0 < sig < 1:
                    out.append((f"etm.sigma[{s}][{g}]", "must lie in (0, 1)"))
            if out:
                continue
            for g, r in enumerate(self.rho[s]):
                if r < 1 / a1 or r < 1 / a2:
                    out.append((f"etm.rho[{s}][{g}]", "must be >= 1/alpha1 and >= 1/alpha2"))
            if self.varsigma[s] < 1 / a1 or self.varsigma[s] < 1 / a2:
                out.append((f"etm.varsigma[{s}]", "must be >= 1/alpha1 and >= 1/alpha2"))
        return out

    def lemma_conditions_hold(self):
        return not self.lemma_violations()

    @cached_property
    def _arrays(self):
        return [(np.array(self.sigma[s]), np.array(self.rho[s])) for s in range(self.channels)]

    def arrays(self, s):
        return self._arrays[s]


def event_fn(cfg, s, g, y_cur, y_held, xi_val):
    """Event generator ``varsigma * (sigma y^2 - rho e^2) + xi``; a trigger fires at <= 0."""
    e = np.subtract(y_cur, y_held)
    h = cfg.sigma[s][g] * np.square(y_cur) - cfg.rho[s][g] * np.square(e)
    return cfg.varsigma[s] * h + xi_val


def update_xi(cfg, s, xi_left, xi_up, h_left, h_up):
    return cfg.alpha1[s] * xi_left + cfg.alpha2[s] * xi_up + h_left + h_up


def update_xi_check(cfg, s, g, xic_left, xic_up, y_left, y_up):
    sig = cfg.sigma[s][g]
    return (cfg.alpha1[s] * xic_left + cfg.alpha2[s] * xic_up
            + sig * np.square(y_left) + sig * np.square(y_up))


def trigger_error_bound(cfg, s, idx, y, xi_check):
    """Diagonal bound on the trigger-error covariance of channel ``s`` at ``idx``.

    Entry ``g`` is ``sigma/rho * y_g^2 + xi_check_g / (varsigma * rho)``.
    """
    xi_check = np.asarray(xi_check, dtype=float)
    if np.any(xi_check < 0):
        raise InvariantViolation(f"negative auxiliary variable at channel {s}, cell {tuple(idx)}")
    sig, rho = cfg.arrays(s)
    y = np.asarray(y, dtype=float)
    return np.diag(sig / rho * y ** 2 + xi_check / (cfg.varsigma[s] * rho))


@dataclass
class EtmState:
    """Per-cell ETM record for ``T`` trials on ``[0, P]^2``.

    Channel-indexed lists hold arrays of shape (T, P+1, P+1, m).  ``held`` is
    the sensor-side zero-order-hold value and ``delta`` the diagonal of the
    trigger-error covariance bound.  Cells where a channel has not yet
    reported carry zeros.  The lists are views into channel-stacked arrays
    (``stacked``) so that a scan step touches every channel at once.
    """
    xi: list
    xi_check: list
    h: list
    held: list
    error: list
    delta: list
    triggered: np.ndarray            # (T, P+1, P+1) bool
    fired: np.ndarray                # (T, P+1, P+1, 2) channel/component, -1 if none
    last_trigger: np.ndarray         # (T, 2)
    current_held: np.ndarray = field(repr=False)     # (S, T, m)
    stacked: dict = field(repr=False, default_factory=dict)

    @classmethod
    def empty(cls, cfg, trials, grid, m):
        S = cfg.channels
        shape = (S, trials, grid + 1, grid + 1, m)
        names = ("xi", "xi_check", "h", "held", "error", "delta")
        stacked = {k: np.zeros(shape) for k in names}
        return cls(
            **{k: list(stacked[k]) for k in names},
            triggered=np.zeros(shape[1:4], dtype=bool),
            fired=np.full(shape[1:4] + (2,), -1, dtype=np.int64),
            last_trigger=np.zeros((trials, 2), dtype=np.int64),
            current_held=np.zeros((S, trials, m)),
            stacked=stacked,
        )

    def trigger_log(self, trial=0):
        """Triggering instants of one trial in scan order."""
        ii, jj = np.nonzero(self.triggered[trial])
        return [GridIndex(int(i), int(j)) for i, j in zip(ii, jj)]

    def trigger_rate(self):
        return float(self.triggered.mean())


@dataclass
class _ScanInputs:
    y: np.ndarray          # (S, T, P+1, P+1, m), zero where a channel is silent
    sy2: np.ndarray        # sigma * y^2, same shape
    active: np.ndarray     # (S, P+1, P+1)
    weight: np.ndarray     # active as float, (S, P+1, P+1, 1, 1)
    varsigma: np.ndarray   # (S, 1, 1)
    sigma: np.ndarray      # (S, 1, m)
    rho: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    xi0: np.ndarray


def _scan_inputs(cfg, traj):
    col = lambda v: np.asarray(v, dtype=float)[:, None, None]
    y = np.stack([np.nan_to_num(traj.measurements[s], nan=0.0) for s in range(cfg.channels)])
    sigma = np.asarray(cfg.sigma, dtype=float)[:, None, :]
    active = np.stack([traj.active(s) for s in range(cfg.channels)])
    return _ScanInputs(
        y=y, sy2=sigma[:, :, None, None, :] * y ** 2, active=active,
        weight=active[..., None, None].astype(float), varsigma=col(cfg.varsigma), sigma=sigma,
        rho=np.asarray(cfg.rho, dtype=float)[:, None, :], alpha1=col(cfg.alpha1),
        alpha2=col(cfg.alpha2), xi0=col(cfg.xi0))


def scan_and_trigger(cfg, traj, state, idx, inputs=None):
    """Process one cell in scan order, updating ``state`` in place.

    Returns the per-trial trigger flags and the held values of every channel.
    """
    i, j = idx
    p = _scan_inputs(cfg, traj) if inputs is None else inputs
    st = state.stacked
    xi, xic, h = st["xi"], st["xi_check"], st["h"]
    act = p.active[:, i, j]
    y = p.y[:, :, i, j]
    held = state.current_held

    if i == 0 or j == 0:
        xi[:, :, i, j] = p.xi0
    else:
        xi[:, :, i, j] = (p.alpha1 * xi[:, :, i, j - 1] + p.alpha2 * xi[:, :, i - 1, j]
                          + h[:, :, i, j - 1] + h[:, :, i - 1, j])

    sy2 = p.sy2[:, :, i, j]
    phi = p.varsigma * (sy2 - p.rho * (y - held) ** 2) + xi[:, :, i, j]
    hits = (phi <= 0) & act[:, None, None]
    any_hit = hits.any(axis=2)                     # (S, T)
    trig = any_hit.any(axis=0)
    fired = np.full((traj.trials, 2), -1, dtype=np.int64)
    if trig.any():
        chan = np.argmax(any_hit, axis=0)[trig]
        fired[trig, 0] = chan
        fired[trig, 1] = np.argmax(hits[chan, np.nonzero(trig)[0]], axis=1)
    if cfg.mode == "always":
        trig[:] = True

    state.triggered[:, i, j] = trig
    state.fired[:, i, j] = fired
    state.last_trigger[trig] = (i, j)
    reset = (state.last_trigger[:, 0] == i) | (state.last_trigger[:, 1] == j)

    live = act[:, None] & trig[None, :]            # (S, T)
    if live.any():
        held[live] = y[live]
    # A silent channel may still hold a value from the previous row.
    w = p.weight[:, i, j]
    e = (y - held) * w
    st["error"][:, :, i, j] = e
    h[:, :, i, j] = sy2 - p.rho * e ** 2
    st["held"][:, :, i, j] = held

    if i == 0 or j == 0:
        xic[:, :, i, j] = p.xi0
    else:
        xic[:, :, i, j] = (p.alpha1 * xic[:, :, i, j - 1] + p.alpha2 * xic[:, :, i - 1, j]
                           + p.sy2[:, :, i, j - 1] + p.sy2[:, :, i - 1, j])
    if reset.any():
        xic[:, reset, i, j] = xi[:, reset, i, j]

    if cfg.mode == "dynamic":
        bound = p.sigma / p.rho * y ** 2 + xic[:, :, i, j] / (p.varsigma * p.rho)
        st["delta"][:, :, i, j] = bound * w
    return trig, [hv.copy() for hv in held]


def run_etm(cfg, traj):
    """Run the mechanism over the whole grid of ``traj``; returns the EtmState."""
    if cfg.channels != len(traj.delays):
        raise ConfigurationError(
            f"ETM configured for {cfg.channels} channels, model has {len(traj.delays)}", "etm")
    m = traj.measurements[0].shape[-1]
    for s in range(cfg.channels):
        if cfg.components(s) != m:
            raise ConfigurationError(f"expected {m} components", f"etm.sigma[{s}]")
    state = EtmState.empty(cfg, traj.trials, traj.grid, m)
    inputs = _scan_inputs(cfg, traj)
    for i in range(traj.grid + 1):
        for j in range(traj.grid + 1):
            scan_and_trigger(cfg, traj, state, (i, j), inputs)
    return state
