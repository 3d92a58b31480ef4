import numpy as np
import pytest

from etf2d.eds import CodecConfig
from etf2d.etm import EtmConfig
from etf2d.filtering import FilterConfig
from etf2d.system2d import SystemModel, constant


def make_model(n=2, m=1, delays=((0, 0), (1, 1)), A1=None, A2=None, Q=0.04, R=0.02,
               mean=None, cov=0.05, seed=0, C=None, **kw):
    rng = np.random.default_rng(seed)
    A1 = 0.3 * np.eye(n) if A1 is None else np.atleast_2d(A1)
    A2 = 0.2 * np.eye(n) if A2 is None else np.atleast_2d(A2)
    Cs = [rng.uniform(0.5, 1.0, (m, n)) for _ in delays]
    if C is not None:
        Cs = [np.atleast_2d(C)] * len(delays)
    mean = np.full(n, 0.5) if mean is None else np.asarray(mean, float)
    second = cov * np.eye(n) + np.outer(mean, mean)
    return SystemModel(
        n=n, m=m, delays=delays, A1=constant(A1), A2=constant(A2),
        B1=constant(np.eye(n)), B2=constant(np.eye(n)), Q=constant(Q * np.eye(n)),
        C=lambda s, idx: Cs[s], R=lambda s, idx: R * np.eye(m),
        x_u_row=lambda i: mean, x_u_col=lambda j: mean,
        Xi0_row=lambda i: second, Xi0_col=lambda j: second, **kw)


def make_etm(channels=2, m=1, varsigma=2.5, sigma=0.9, rho=2.5, alpha=0.5, xi0=0.5, **kw):
    return EtmConfig([varsigma] * channels, [[sigma] * m] * channels, [[rho] * m] * channels,
                     [alpha] * channels, [alpha] * channels, [xi0] * channels, **kw)


def make_codec(channels=2, Z=4.0, L=8, crossover=0.01):
    return CodecConfig([Z] * channels, [L] * channels, [crossover] * channels)


@pytest.fixture
def model():
    return make_model()


@pytest.fixture
def filter_cfg():
    return FilterConfig((1.0, 1.0), (1.0, 1e6, 0.05, 0.2, 1.0, 0.5))
