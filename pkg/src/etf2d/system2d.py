"""2-D Fornasini-Marchesini (FM-II) plant with asynchronously delayed sensors.

The plant lives on the square grid ``[0, P]^2``.  Interior states follow

    x(i,j) = f1((i,j-1), x(i,j-1)) + f2((i-1,j), x(i-1,j))
             + B1(i,j-1) w(i,j-1) + B2(i-1,j) w(i-1,j)

and channel ``s`` reports ``y_s(i,j) = C_s(i,j) x(i - di_s, j - dj_s) + v_s(i,j)``
wherever ``i >= di_s`` and ``j >= dj_s``.  Shift-varying quantities are plain
callables of the grid index so that constant and tabulated parameterizations
share one code path.
"""

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError
from .linalg import is_psd, matvec, matvec_field, psd_sqrt


class GridIndex(NamedTuple):
    i: int
    j: int

    def within(self, grid):
        return 0 <= self.i <= grid and 0 <= self.j <= grid


def constant(value):
    """Wrap a constant matrix/scalar as a shift-varying parameter."""
    value = np.array(value, dtype=float)
    value.setflags(write=False)
    return lambda *idx: value


def tabulated(table):
    """Per-index table ``table[i, j]`` as a shift-varying parameter."""
    table = np.array(table, dtype=float)
    table.setflags(write=False)

    def lookup(idx):
        return table[idx[0], idx[1]]

    return lookup


class LinearMap:
    """f((i,j), x) = A(i,j) x."""

    def __init__(self, A):
        self.A = A

    def __call__(self, idx, x):
        return matvec(self.A(idx), x)


class SineResidual:
    """f((i,j), x) = A(i,j) x + 0.9 a(i,j) sin(x), applied componentwise.

    Since |sin u - sin v| <= |u - v|, the residual is 0.9 a-Lipschitz, so the
    sector condition holds with bound a(i,j) and f(., 0) = 0.
    """

    def __init__(self, A, a, gain=0.9):
        self.A = A
        self.a = a
        self.gain = gain

    def __call__(self, idx, x):
        return matvec(self.A(idx), x) + self.gain * float(self.a(idx)) * np.sin(x)


def validate_delays(delays):
    """Check the ordering 0 = di_0 = dj_0 < di_1 <= dj_1 <= ... <= di_N <= dj_N.

    ``di`` must increase strictly across channels; ``dj`` may not decrease.
    """
    delays = [tuple(int(v) for v in d) for d in delays]
    if not delays:
        raise ConfigurationError("at least one channel is required", "model.delays")
    if delays[0] != (0, 0):
        raise ConfigurationError("channel 0 must be delay-free (0, 0)", "model.delays[0]")
    for s, (di, dj) in enumerate(delays):
        if di > dj:
            raise ConfigurationError(f"row delay {di} exceeds column delay {dj}",
                                     f"model.delays[{s}]")
        if s and not (delays[s - 1][0] < di and delays[s - 1][1] <= dj
                      and delays[s - 1][1] <= di):
            raise ConfigurationError("delays must be increasing across channels",
                                     f"model.delays[{s}]")
    return tuple(delays)


@dataclass
class SystemModel:
    n: int
    m: int
    delays: Sequence[tuple]
    A1: Callable
    A2: Callable
    B1: Callable
    B2: Callable
    Q: Callable
    C: Callable             # C(s, idx) -> (m, n)
    R: Callable             # R(s, idx) -> (m, m)
    x_u_row: Callable       # i -> (n,)    mean of x(i, 0)
    x_u_col: Callable       # j -> (n,)    mean of x(0, j)
    Xi0_row: Callable       # i -> (n, n)  second moment of x(i, 0)
    Xi0_col: Callable
    a1: Callable = field(default_factory=lambda: constant(0.0))
    a2: Callable = field(default_factory=lambda: constant(0.0))
    f1: Callable = None
    f2: Callable = None

    def __post_init__(self):
        self.delays = validate_delays(self.delays)
        if self.f1 is None:
            self.f1 = LinearMap(self.A1)
        if self.f2 is None:
            self.f2 = LinearMap(self.A2)

    @property
    def N(self):
        return len(self.delays) - 1

    def min_grid(self):
        di, dj = self.delays[-1]
        return max(di, dj) + 1

    def boundary_mean(self, idx):
        i, j = idx
        return np.asarray(self.x_u_row(i) if j == 0 else self.x_u_col(j), dtype=float)

    def boundary_second_moment(self, idx):
        i, j = idx
        return np.asarray(self.Xi0_row(i) if j == 0 else self.Xi0_col(j), dtype=float)

    def boundary_cov(self, idx):
        mu = self.boundary_mean(idx)
        return self.boundary_second_moment(idx) - np.outer(mu, mu)

    def validate(self, grid, rng=None, n_points=50):
        """Raise ConfigurationError unless the model is usable on ``[0, grid]^2``."""
        if grid < self.min_grid():
            raise ConfigurationError(
                f"grid {grid} too small for delays {self.delays[-1]}", "grid")
        n, m = self.n, self.m
        seen = set()
        for idx in _cells(grid):
            for name, mat, shape in (("A1", self.A1(idx), (n, n)), ("A2", self.A2(idx), (n, n)),
                                     ("B1", self.B1(idx), (n, n)), ("B2", self.B2(idx), (n, n))):
                if np.shape(mat) != shape:
                    raise ConfigurationError(f"expected shape {shape}, got {np.shape(mat)}",
                                             f"model.{name}")
            _require_pd(self.Q(idx), f"model.Q{tuple(idx)}", (n, n), seen)
            for s in range(self.N + 1):
                if np.shape(self.C(s, idx)) != (m, n):
                    raise ConfigurationError(f"expected shape {(m, n)}", f"model.C[{s}]")
                _require_pd(self.R(s, idx), f"model.R[{s}]{tuple(idx)}", (m, m), seen)
            if self.a1(idx) < 0 or self.a2(idx) < 0:
                raise ConfigurationError("Lipschitz residual bounds must be >= 0", "model.a")
        for k in range(grid + 1):
            for idx in ((k, 0), (0, k)):
                cov = self.boundary_cov(idx)
                if np.shape(cov) != (n, n) or not is_psd(cov):
                    raise ConfigurationError(
                        "boundary second moment minus mean outer product must be PSD",
                        f"model.boundary{idx}")
        rng = np.random.default_rng(0) if rng is None else rng
        for name, f, A, a in (("f1", self.f1, self.A1, self.a1), ("f2", self.f2, self.A2, self.a2)):
            for _ in range(n_points):
                idx = GridIndex(*rng.integers(0, grid + 1, size=2))
                if np.any(f(idx, np.zeros(n)) != 0):
                    raise ConfigurationError("f(idx, 0) must vanish", f"model.{name}")
                if sector_gap(f, A(idx), a(idx), idx, rng.normal(size=n) * 3,
                              rng.normal(size=n) * 3) > 1e-12:
                    raise ConfigurationError("sector condition violated", f"model.{name}")
        return self


def sector_gap(f, A, a, idx, x1, x2):
    """||f(x1) - f(x2) - A(x1 - x2)|| - a ||x1 - x2||; nonpositive when the sector bound holds."""
    d = x1 - x2
    r = f(idx, x1) - f(idx, x2) - A @ d
    return float(np.linalg.norm(r) - a * np.linalg.norm(d))


def _require_pd(M, path, shape, seen=None):
    M = np.asarray(M, dtype=float)
    if M.shape != shape:
        raise ConfigurationError(f"expected shape {shape}, got {M.shape}", path)
    if seen is not None:
        key = M.tobytes()
        if key in seen:
            return
        seen.add(key)
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ConfigurationError("matrix must be symmetric positive definite", path) from None


def _field(fn, grid):
    """Stack ``fn(idx)`` over every cell of ``[0, grid]^2``."""
    return np.array([[fn((i, j)) for j in range(grid + 1)] for i in range(grid + 1)])


def _cells(grid):
    for i in range(grid + 1):
        for j in range(grid + 1):
            yield GridIndex(i, j)


def step_state(model, x_left, x_up, w_left, w_up, idx):
    """Advance the FM-II recursion into cell ``idx`` from its left and upper neighbours.

    Vectors may carry leading (trial) axes.
    """
    i, j = idx
    n = model.n
    for name, v in (("x_left", x_left), ("x_up", x_up), ("w_left", w_left), ("w_up", w_up)):
        if np.shape(v)[-1:] != (n,):
            raise ConfigurationError(f"expected trailing dimension {n}, got {np.shape(v)}", name)
    left, up = GridIndex(i, j - 1), GridIndex(i - 1, j)
    return (model.f1(left, np.asarray(x_left, dtype=float))
            + model.f2(up, np.asarray(x_up, dtype=float))
            + matvec(model.B1(left), w_left)
            + matvec(model.B2(up), w_up))


@dataclass
class Trajectory:
    """Sampled plant and sensor fields; every array carries a leading trial axis.

    ``measurements[s]`` is NaN wherever channel ``s`` has not yet reported.
    """
    grid: int
    delays: tuple
    states: np.ndarray              # (T, P+1, P+1, n)
    process_noise: np.ndarray       # (T, P+1, P+1, n)
    measurements: list              # N+1 arrays (T, P+1, P+1, m)
    measurement_noise: list

    @property
    def trials(self):
        return self.states.shape[0]

    def active(self, s):
        """Boolean (P+1, P+1) mask of receipt indices where channel s reports."""
        di, dj = self.delays[s]
        mask = np.zeros((self.grid + 1, self.grid + 1), dtype=bool)
        mask[di:, dj:] = True
        return mask


def simulate_trajectory(model, grid, rng_seed, trials=1, check=True):
    """Sample ``trials`` independent trajectories on ``[0, grid]^2``.

    Noises and boundary states are Gaussian with the model's first and second
    moments.  The draw order is fixed, so the output depends only on
    ``(model, grid, rng_seed, trials)``.  ``check=False`` skips validation, which
    allows degenerate (zero) covariances in tests.
    """
    if trials < 1:
        raise ConfigurationError("trial count must be positive", "trials")
    if grid < model.min_grid():
        raise ConfigurationError(
            f"grid {grid} too small for delays {model.delays[-1]}", "grid")
    if check:
        model.validate(grid)
    rng = np.random.default_rng(rng_seed)
    n, m, P = model.n, model.m, grid
    roots = {}

    def root(M):
        M = np.asarray(M, dtype=float)
        key = (M.shape, M.tobytes())
        if key not in roots:
            roots[key] = psd_sqrt(M)
        return roots[key]
    x = np.zeros((trials, P + 1, P + 1, n))

    for k in range(P + 1):
        for idx in ((k, 0), (0, k)) if k else ((0, 0),):
            cov = model.boundary_cov(idx)
            if check and not is_psd(cov):
                raise ConfigurationError("boundary covariance not PSD", f"model.boundary{idx}")
            z = rng.standard_normal((trials, n))
            x[:, idx[0], idx[1]] = model.boundary_mean(idx) + z @ root(cov).T

    w = rng.standard_normal((trials, P + 1, P + 1, n))
    w = matvec_field(_field(lambda idx: root(model.Q(idx)), P), w)

    for i in range(1, P + 1):
        for j in range(1, P + 1):
            x[:, i, j] = step_state(model, x[:, i, j - 1], x[:, i - 1, j],
                                    w[:, i, j - 1], w[:, i - 1, j], GridIndex(i, j))

    ys, vs = [], []
    for s, (di, dj) in enumerate(model.delays):
        v = rng.standard_normal((trials, P + 1, P + 1, m))
        v = matvec_field(_field(lambda idx: root(model.R(s, idx)), P), v)
        C = _field(lambda idx: np.asarray(model.C(s, idx), dtype=float), P)
        y = np.full((trials, P + 1, P + 1, m), np.nan)
        y[:, di:, dj:] = matvec_field(C[di:, dj:], x[:, :P + 1 - di, :P + 1 - dj]) + v[:, di:, dj:]
        ys.append(y)
        vs.append(v)
    return Trajectory(grid, model.delays, x, w, ys, vs)
