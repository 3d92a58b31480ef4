"""End-to-end Monte Carlo pipeline.

simulate -> ETM -> encode/BSC/decode -> reconstruct -> filter
"""

from dataclasses import dataclass

import numpy as np

from .eds import decode_codes, flip_codes, quantize
from .etm import run_etm
from .filtering import run_bounds, run_filter
from .system2d import simulate_trajectory


@dataclass
class Transmission:
    """Receiver-side view of every channel.

    ``decoded[s]`` is the held decoded value (T, P+1, P+1, m).  ``sent`` and
    ``received`` hold integer codewords at triggering cells and -1 elsewhere.
    """
    decoded: list
    sent: list
    received: list
    clamped: int


def _forward_fill(values, mask):
    """Carry the last masked value forward in row-major scan order (zeros before the first)."""
    T = values.shape[0]
    flat_v = values.reshape(T, -1, values.shape[-1])
    flat_m = mask.reshape(T, -1)
    pos = np.where(flat_m, np.arange(flat_m.shape[1])[None, :], -1)
    pos = np.maximum.accumulate(pos, axis=1)
    out = np.take_along_axis(flat_v, np.maximum(pos, 0)[..., None], axis=1)
    out[pos < 0] = 0.0
    return out.reshape(values.shape)


def transmit(codec, etm_state, traj, rng):
    """Encode held measurements at triggering cells, pass them through the BSC and decode.

    Between triggers the receiver holds its last decoded value, mirroring
    the sensor-side zero-order hold.
    """
    decoded, sent, received = [], [], []
    clamped = 0
    for s in range(len(traj.delays)):
        cells = etm_state.triggered & traj.active(s)[None]
        y = traj.measurements[s]
        code, _, clip = quantize(codec, s, y[cells], rng)
        rcode = flip_codes(codec, s, code, rng)
        clamped += int(clip.sum())
        snd = np.full(y.shape, -1, dtype=np.int64)
        rcv = np.full(y.shape, -1, dtype=np.int64)
        snd[cells], rcv[cells] = code, rcode
        dec = np.zeros(y.shape)
        dec[cells] = decode_codes(codec, s, rcode)
        decoded.append(_forward_fill(dec, cells))
        sent.append(snd)
        received.append(rcv)
    return Transmission(decoded, sent, received, clamped)


@dataclass
class PipelineResult:
    scenario: object
    traj: object
    etm: object
    transmission: Transmission
    bounds: object
    filter: object

    def errors(self):
        return self.traj.states - self.filter.x_u


def seeds(seed):
    """Independent child streams for plant, channel and gain perturbations."""
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(c) for c in ss.spawn(3)]


def run_pipeline(sc, trials=None, seed=None, etm_cfg=None):
    trials = sc.trials if trials is None else trials
    seed = sc.seed if seed is None else seed
    plant_rng, chan_rng, gain_rng = seeds(seed)
    traj = simulate_trajectory(sc.model, sc.grid, plant_rng, trials=trials)
    etm = run_etm(sc.etm if etm_cfg is None else etm_cfg, traj)
    tx = transmit(sc.codec, etm, traj, chan_rng)
    delta = [d.mean(axis=0) for d in etm.delta]
    bounds = run_bounds(sc.filter, sc.model, sc.codec, delta, sc.grid)
    filt = run_filter(sc.filter, sc.model, sc.codec, tx.decoded, bounds, gain_rng)
    return PipelineResult(sc, traj, etm, tx, bounds, filt)


def empirical_second_moment(v):
    """Per-cell mean of v v^T over the leading trial axis; v is (T, ..., n)."""
    return np.einsum("t...i,t...j->...ij", v, v) / v.shape[0]


def dominance_margin(bound, empirical):
    """Per-cell min eig(bound - empirical) / trace(bound) (NaN where the trace vanishes)."""
    diff = bound - empirical
    diff = 0.5 * (diff + np.swapaxes(diff, -1, -2))
    tr = np.trace(bound, axis1=-2, axis2=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.linalg.eigvalsh(diff)[..., 0] / tr
