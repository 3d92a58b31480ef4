"""Resilient multi-step recursive filter and its covariance-bound recursions.

State cells are grouped by how many channels have reported on them (see
:mod:`etf2d.reconstruct`).  Step ``tau`` handles the cells with stack depth
``N + 1 - tau``; all steps share one estimate field, which is exactly the
row/column stitching between consecutive steps.

Two layers live here:

* the deterministic bound recursion (second-moment bound ``X_bar``, prediction
  bound ``Xi_p``, update bound ``Xi_u``) together with the gains that minimize
  the update bound, and
* the realized stochastic filter that applies those gains, perturbed by random
  gain variations, to decoded measurements of every Monte Carlo trial.
"""

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ConfigurationError, InvariantViolation, SingularityError
from .linalg import PSD_RTOL, is_psd, matvec, symmetrize
from .reconstruct import depth_map, gather_stack, stacked_model


@dataclass(frozen=True)
class Perturbation:
    """One gain-variation direction: ``beta * H`` with ``Var(beta) = beta_var``."""
    beta_var: float
    H: np.ndarray


@dataclass(frozen=True)
class FilterConfig:
    a_check: Sequence[float] = (1.0, 1.0)
    b_check: Sequence[float] = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    perturbations: Mapping[int, tuple] = field(default_factory=dict)   # step -> Perturbations

    def __post_init__(self):
        a = tuple(float(v) for v in self.a_check)
        b = tuple(float(v) for v in self.b_check)
        if len(a) != 2 or min(a) <= 0:
            raise ConfigurationError("need two positive scalars", "filter.a_check")
        if len(b) != 6 or min(b) <= 0:
            raise ConfigurationError("need six positive scalars", "filter.b_check")
        pert = {}
        for tau, items in dict(self.perturbations).items():
            tau = int(tau)
            if tau < 1:
                raise ConfigurationError("steps are numbered from 1", f"filter.perturbations.{tau}")
            conv = []
            for nu, p in enumerate(items):
                if not isinstance(p, Perturbation):
                    p = Perturbation(float(p[0]), np.asarray(p[1], dtype=float))
                if p.beta_var < 0:
                    raise ConfigurationError("variance must be >= 0",
                                             f"filter.perturbations.{tau}[{nu}].beta_var")
                conv.append(Perturbation(float(p.beta_var), np.atleast_2d(np.asarray(p.H, float))))
            pert[tau] = tuple(conv)
        object.__setattr__(self, "a_check", a)
        object.__setattr__(self, "b_check", b)
        object.__setattr__(self, "perturbations", pert)

    @property
    def update_scale(self):
        """The factor 1 + b3 + b4 multiplying the prediction bound in the update."""
        return 1.0 + self.b_check[2] + self.b_check[3]

    def check_dimensions(self, n, m, N):
        for tau, items in self.perturbations.items():
            if tau > N + 1:
                raise ConfigurationError(f"only steps 1..{N + 1} exist",
                                         f"filter.perturbations.{tau}")
            shape = (n, (N + 2 - tau) * m)
            for nu, p in enumerate(items):
                if p.H.shape != shape:
                    raise ConfigurationError(f"expected H of shape {shape}, got {p.H.shape}",
                                             f"filter.perturbations.{tau}[{nu}].H")

    def step_perturbations(self, tau):
        return self.perturbations.get(tau, ())


def _require_psd(M, what):
    if not is_psd(M):
        raise InvariantViolation(f"{what} is not positive semidefinite")


def _neighbour_bound(c_mix, c_split, model, M_left, M_up, idx):
    """Shared shape of the second-moment and prediction-bound recursions.

    ``c_mix`` splits the two neighbour contributions, ``c_split`` splits the
    linear part from the Lipschitz residual inside each of them.
    """
    l, k = idx
    left, up = (l, k - 1), (l - 1, k)
    n = model.n
    eye = np.eye(n)
    parts = []
    for A, a, M, at in ((model.A1, model.a1, M_left, left), (model.A2, model.a2, M_up, up)):
        A_ = np.asarray(A(at))
        parts.append((1 + c_split) * float(a(at)) ** 2 * np.trace(M) * eye
                     + (1 + 1 / c_split) * A_ @ M @ A_.T)
    B1, B2 = np.asarray(model.B1(left)), np.asarray(model.B2(up))
    noise = B1 @ model.Q(left) @ B1.T + B2 @ model.Q(up) @ B2.T
    return symmetrize((1 + c_mix) * parts[0] + (1 + 1 / c_mix) * parts[1] + noise)


def second_moment_bound_step(cfg, model, X_left, X_up, idx):
    """Upper bound on E[x x^T] at ``idx`` from the bounds at its two neighbours."""
    _require_psd(X_left, "left second-moment bound")
    _require_psd(X_up, "upper second-moment bound")
    return _neighbour_bound(cfg.a_check[0], cfg.a_check[1], model, X_left, X_up, idx)


def bound_predict(cfg, model, Xi_u_left, Xi_u_up, idx):
    """Prediction-error covariance bound from the neighbours' update bounds."""
    _require_psd(Xi_u_left, "left update bound")
    _require_psd(Xi_u_up, "upper update bound")
    return _neighbour_bound(cfg.b_check[0], cfg.b_check[1], model, Xi_u_left, Xi_u_up, idx)


def channel_constants(model, codec, depth):
    """Stacked crossover, truncation-bound and flip-variance diagonals for channels 0..depth."""
    m = model.m
    rho = np.repeat([codec.crossover[c] for c in range(depth + 1)], m)
    trunc = np.repeat([codec.truncation_bound(c) for c in range(depth + 1)], m)
    flip = np.repeat([codec.flip_variance(c) for c in range(depth + 1)], m)
    return rho, trunc, flip


def innovation_stats(cfg, model, codec, delta, depth, Xi_p, X_bar, idx, grid=None):
    """Return ``(Theta, F)``: the innovation-noise bound and the full innovation bound.

    ``delta`` is the stacked trigger-error bound, either its diagonal or the
    full matrix.  A diagonal built from per-component bounds majorizes the
    trigger-error second moment only for scalar channels (m = 1); with m > 1
    pass a full matrix that accounts for cross terms.
    """
    b1, b2, b3, b4, b5, b6 = cfg.b_check
    C, R = stacked_model(model, depth, idx, grid)
    rho, trunc, flip = channel_constants(model, codec, depth)
    delta = np.asarray(delta, dtype=float)
    if delta.ndim == 1:
        delta = np.diag(delta)
    G = np.diag(1.0 - 2.0 * rho)
    P = np.diag(rho)
    theta = ((1 + 1 / b3 + b5) * 4.0 * P @ C @ X_bar @ C.T @ P
             + G @ np.diag(trunc) @ G
             + (1 + 1 / b4 + 1 / b5 + b6) * G @ delta @ G
             + (1 + 1 / b6) * G @ R @ G
             + np.diag(flip))
    theta = symmetrize(theta)
    F = symmetrize(theta + cfg.update_scale * C @ Xi_p @ C.T)
    try:
        np.linalg.cholesky(F)
    except np.linalg.LinAlgError:
        raise SingularityError(
            f"innovation bound at {tuple(idx)} is not positive definite") from None
    return theta, F


def gain(cfg, Xi_p, C, F):
    """Bound-minimizing gain ``(1 + b3 + b4) Xi_p C^T F^{-1}`` via a Cholesky solve."""
    try:
        factor = cho_factor(F)
    except LinAlgError:
        raise SingularityError("innovation bound is not positive definite") from None
    return cfg.update_scale * cho_solve(factor, C @ Xi_p).T


def _perturbation_term(cfg, tau, F):
    out = 0.0
    for p in cfg.step_perturbations(tau):
        out = out + p.beta_var * p.H @ F @ p.H.T
    return out


def bound_update(cfg, tau, Xi_p, K, F):
    """Update bound at the optimal gain: ``c Xi_p - K F K^T + sum beta H F H^T``."""
    Xi_u = symmetrize(cfg.update_scale * Xi_p - K @ F @ K.T + _perturbation_term(cfg, tau, F))
    scale = np.linalg.norm(Xi_u)
    if np.linalg.eigvalsh(Xi_u)[0] < -PSD_RTOL * max(scale, 1e-300) * 1e3:
        raise InvariantViolation("update bound lost positive semidefiniteness")
    return Xi_u


def bound_update_general(cfg, tau, Xi_p, K, C, F):
    """Update bound for an arbitrary gain ``K`` (quadratic in ``K``).

    Equal to ``c (I - K C) Xi_p (I - K C)^T + K Theta K^T + sum beta H F H^T``
    and minimized in the PSD order by :func:`gain`.
    """
    c = cfg.update_scale
    return symmetrize(c * (Xi_p - K @ C @ Xi_p - Xi_p @ C.T @ K.T) + K @ F @ K.T
                      + _perturbation_term(cfg, tau, F))


def predict(model, x_left, x_up, idx):
    l, k = idx
    return model.f1((l, k - 1), x_left) + model.f2((l - 1, k), x_up)


def update_estimate(x_p, K, alpha, z, C):
    """``x_p + (K + alpha)(z - C x_p)``; ``alpha`` may be None or carry a trial axis."""
    innov = np.asarray(z, dtype=float) - matvec(C, x_p)
    out = x_p + matvec(K, innov)
    if alpha is not None:
        out = out + np.einsum("...ij,...j->...i", alpha, innov)
    return out


def sample_alpha(cfg, tau, rng, trials):
    """Gain variations ``sum_nu beta_nu H_nu`` with zero-mean Gaussian ``beta``; None if unused."""
    items = cfg.step_perturbations(tau)
    if not items:
        return None
    out = 0.0
    for p in items:
        beta = rng.standard_normal(trials) * np.sqrt(p.beta_var)
        out = out + beta[:, None, None] * p.H
    return out


@dataclass
class BoundState:
    """Deterministic bound recursion over the state grid ``[0, i] x [0, j]``."""
    depth: np.ndarray             # (i+1, j+1) stack depth per cell
    step: np.ndarray              # (i+1, j+1) filter step (1 .. N+1)
    X_bar: np.ndarray             # (i+1, j+1, n, n)
    Xi_p: np.ndarray
    Xi_u: np.ndarray
    gains: dict                   # (l, k) -> K
    theta: dict
    F: dict

    def interior(self):
        i, j = self.depth.shape[0] - 1, self.depth.shape[1] - 1
        return [(l, k) for l in range(1, i + 1) for k in range(1, j + 1)]


def stacked_delta(delta_fields, delays, depth, l, k):
    """Diagonal of the stacked trigger-error bound from per-channel fields (P+1, P+1, m)."""
    return np.concatenate([delta_fields[c][l + delays[c][0], k + delays[c][1]]
                           for c in range(depth + 1)])


def run_bounds(cfg, model, codec, delta_fields, grid, current=None):
    """Run the second-moment, prediction and update bound recursions.

    ``delta_fields[c]`` holds channel ``c``'s trigger-error bound diagonal on the
    receipt grid.  Cells are processed step by step, each step in row-major
    order; boundary cells take the initial statistics.
    """
    i, j = (grid, grid) if current is None else current
    N, n = model.N, model.n
    cfg.check_dimensions(n, model.m, N)
    depth = depth_map(model.delays, i, j)
    shape = (i + 1, j + 1, n, n)
    X_bar, Xi_p, Xi_u = np.zeros(shape), np.zeros(shape), np.zeros(shape)

    for l in range(i + 1):
        for k in range(j + 1):
            if l == 0 or k == 0:
                X_bar[l, k] = model.boundary_second_moment((l, k))
            else:
                X_bar[l, k] = second_moment_bound_step(cfg, model, X_bar[l, k - 1],
                                                       X_bar[l - 1, k], (l, k))

    gains, theta, F = {}, {}, {}
    for tau in range(1, N + 2):
        d = N + 1 - tau
        for l, k in zip(*np.nonzero(depth == d)):
            l, k = int(l), int(k)
            if l == 0 or k == 0:
                Xi_u[l, k] = model.boundary_cov((l, k))
                continue
            Xi_p[l, k] = bound_predict(cfg, model, Xi_u[l, k - 1], Xi_u[l - 1, k], (l, k))
            delta = stacked_delta(delta_fields, model.delays, d, l, k)
            th, Fk = innovation_stats(cfg, model, codec, delta, d, Xi_p[l, k], X_bar[l, k], (l, k))
            C, _ = stacked_model(model, d, (l, k))
            K = gain(cfg, Xi_p[l, k], C, Fk)
            Xi_u[l, k] = bound_update(cfg, tau, Xi_p[l, k], K, Fk)
            gains[(l, k)], theta[(l, k)], F[(l, k)] = K, th, Fk
    return BoundState(depth, N + 1 - depth, X_bar, Xi_p, Xi_u, gains, theta, F)


@dataclass
class FilterState:
    bounds: BoundState
    x_p: np.ndarray               # (T, i+1, j+1, n)
    x_u: np.ndarray


def run_filter(cfg, model, codec, decoded_fields, bounds, rng, current=None):
    """Apply the bound-minimizing gains to decoded measurements of every trial.

    ``decoded_fields[c]`` is the receiver-side (held, decoded) value of channel
    ``c`` on the receipt grid, shape (T, P+1, P+1, m).
    """
    T = decoded_fields[0].shape[0]
    i, j = bounds.depth.shape[0] - 1, bounds.depth.shape[1] - 1
    N, n = model.N, model.n
    x_p = np.zeros((T, i + 1, j + 1, n))
    x_u = np.zeros((T, i + 1, j + 1, n))
    for tau in range(1, N + 2):
        d = N + 1 - tau
        for l, k in zip(*np.nonzero(bounds.depth == d)):
            l, k = int(l), int(k)
            if l == 0 or k == 0:
                x_u[:, l, k] = model.boundary_mean((l, k))
                x_p[:, l, k] = x_u[:, l, k]
                continue
            x_p[:, l, k] = predict(model, x_u[:, l, k - 1], x_u[:, l - 1, k], (l, k))
            C, _ = stacked_model(model, d, (l, k))
            z = gather_stack(decoded_fields, model.delays, d, l, k)
            alpha = sample_alpha(cfg, tau, rng, T)
            x_u[:, l, k] = update_estimate(x_p[:, l, k], bounds.gains[(l, k)], alpha, z, C)
    return FilterState(bounds, x_p, x_u)
