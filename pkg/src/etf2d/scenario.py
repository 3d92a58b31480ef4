"""Scenario files: YAML documents describing a model, its ETM/codec/filter tuning and a run.

Schema (keys in brackets are optional)::

    name: str
    grid: int                     # state grid is [0, grid]^2
    trials: int
    seed: int
    [export_trials]: int          # trials written to per-cell / trigger / codeword CSVs
    model:
      n, m: int
      delays: [[di, dj], ...]     # channel 0 must be [0, 0]
      [nonlinearity]: linear | sine
      A1, A2, B1, B2, Q: matrix
      [a1, a2]: scalar            # sector bounds of the residual nonlinearity
      C, R: [matrix per channel]
      boundary: {mean: vector, cov: matrix}
                or {row: {mean, cov}, col: {mean, cov}}
    etm: {varsigma, sigma, rho, alpha1, alpha2, xi0, [mode], [strict]}
    codec: {Z, L, crossover}
    filter: {a_check, b_check, [perturbations: {step: [{beta_var, H}]}]}
    [checks]: {...}               # per-command tolerances, see DEFAULT_CHECKS

A matrix may be given literally, as ``{table: [...]}`` indexed ``[i][j]``
first, or as ``{file: path.npy}`` relative to the scenario file.
"""

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .eds import CodecConfig
from .errors import ConfigurationError
from .etm import EtmConfig
from .filtering import FilterConfig, Perturbation
from .system2d import SineResidual, SystemModel, constant, tabulated

BUNDLED = ("linear_small", "nonlinear_small", "channel_stress")

DEFAULT_CHECKS = {
    "psd_rtol": 1e-6,              # min eig >= -rtol * trace for dominance checks
    "mean_sigmas": 4.0,
    "trigger_rate_max": 0.6,
    "enumeration_L": [1, 2, 3, 4, 8],
    "enumeration_crossover": [0.0, 0.1, 0.3, 0.5],
    "truncation_samples": 1000000,
    "reconstruct_max_delay": 3,
    "reconstruct_max_N": 3,
    "reconstruct_indices": [7, 8],  # current index i = j; 7 is the last cell of an 8x8 grid
    "monotonicity": None,          # {low: etm overrides, high: etm overrides}
}


@dataclass
class ScenarioConfig:
    name: str
    grid: int
    trials: int
    seed: int
    model: SystemModel
    etm: EtmConfig
    codec: CodecConfig
    filter: FilterConfig
    export_trials: int = 3
    checks: dict = field(default_factory=lambda: dict(DEFAULT_CHECKS))
    raw: dict = field(default_factory=dict, repr=False)
    source: Path = None

    def with_etm(self, **changes):
        """Copy with some ETM fields replaced (used by the monotonicity experiment)."""
        raw = copy.deepcopy(self.raw)
        raw["etm"].update(changes)
        return build_scenario(raw, self.source)


def bundled_path(name):
    if name not in BUNDLED:
        raise ConfigurationError(f"unknown bundled scenario {name!r}", "config")
    return Path(str(resources.files("etf2d") / "scenarios" / f"{name}.yaml"))


def resolve_config_path(path):
    """Accept a file path or the name of a bundled scenario."""
    p = Path(path)
    if p.exists():
        return p
    if str(path) in BUNDLED:
        return bundled_path(str(path))
    raise ConfigurationError(f"no such scenario file: {path}", "config")


def load_raw(path):
    path = resolve_config_path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML: {exc}", str(path)) from None
    if not isinstance(raw, dict):
        raise ConfigurationError("top level must be a mapping", str(path))
    return raw, path


def apply_override(raw, spec):
    """Apply one ``dotted.key=value`` override; the value is parsed as YAML."""
    if "=" not in spec:
        raise ConfigurationError("override must look like key=value", spec)
    key, text = spec.split("=", 1)
    parts = key.strip().split(".")
    value = yaml.safe_load(text)
    if isinstance(value, str):
        # YAML 1.1 reads "1e-5" as a string
        try:
            value = float(value)
        except ValueError:
            pass
    node = raw
    for depth, part in enumerate(parts[:-1]):
        node = _child(node, part, ".".join(parts[:depth + 1]), create=True)
    last = parts[-1]
    if isinstance(node, list):
        idx = _index(node, last, key)
        node[idx] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ConfigurationError("cannot override inside a scalar", key)
    return raw


def _index(node, part, path):
    try:
        idx = int(part)
        node[idx]
    except (ValueError, IndexError):
        raise ConfigurationError(f"bad list index {part!r}", path) from None
    return idx


def _child(node, part, path, create=False):
    if isinstance(node, list):
        return node[_index(node, part, path)]
    if isinstance(node, dict):
        if part not in node:
            if not create:
                raise ConfigurationError("missing key", path)
            node[part] = {}
        return node[part]
    raise ConfigurationError("cannot descend into a scalar", path)


def load_scenario(path, overrides=(), trials=None, seed=None):
    raw, path = load_raw(path)
    for spec in overrides:
        apply_override(raw, spec)
    if trials is not None:
        raw["trials"] = trials
    if seed is not None:
        raw["seed"] = seed
    return build_scenario(raw, path)


def _req(d, key, path):
    if not isinstance(d, dict) or key not in d:
        raise ConfigurationError("missing required field", f"{path}.{key}" if path else key)
    return d[key]


def _int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigurationError(f"expected an integer, got {value!r}", path)
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"must be >= {minimum}", path)
    return int(value)


def _matrix(spec, shape, path, base, grid):
    """Shift-varying parameter from a literal, table or .npy file."""
    if isinstance(spec, dict):
        if "table" in spec:
            table = np.asarray(spec["table"], dtype=float)
        elif "file" in spec:
            f = Path(spec["file"])
            f = f if f.is_absolute() or base is None else Path(base).parent / f
            try:
                table = np.load(f)
            except OSError as exc:
                raise ConfigurationError(f"cannot read table: {exc}", path) from None
        else:
            raise ConfigurationError("expected 'table' or 'file'", path)
        if table.shape[2:] != shape or table.shape[0] < grid + 1 or table.shape[1] < grid + 1:
            raise ConfigurationError(
                f"table shape {table.shape} does not cover grid {grid} with entries {shape}", path)
        return tabulated(table)
    try:
        value = np.asarray(spec, dtype=float)
    except (TypeError, ValueError):
        raise ConfigurationError("not numeric", path) from None
    if value.shape != shape:
        raise ConfigurationError(f"expected shape {shape}, got {value.shape}", path)
    return constant(value)


def _boundary(spec, n, path):
    def pair(d, p):
        mean = np.asarray(_req(d, "mean", p), dtype=float)
        cov = np.asarray(_req(d, "cov", p), dtype=float)
        if mean.shape != (n,):
            raise ConfigurationError(f"expected shape {(n,)}", f"{p}.mean")
        if cov.shape != (n, n):
            raise ConfigurationError(f"expected shape {(n, n)}", f"{p}.cov")
        return mean, cov + np.outer(mean, mean)

    if "row" in spec or "col" in spec:
        row = pair(_req(spec, "row", path), f"{path}.row")
        col = pair(_req(spec, "col", path), f"{path}.col")
    else:
        row = col = pair(spec, path)
    return (lambda i: row[0]), (lambda j: col[0]), (lambda i: row[1]), (lambda j: col[1])


def build_model(raw, grid, base=None):
    path = "model"
    n = _int(_req(raw, "n", path), "model.n", 1)
    m = _int(_req(raw, "m", path), "model.m", 1)
    delays = _req(raw, "delays", path)
    mats = {}
    for name in ("A1", "A2", "B1", "B2", "Q"):
        mats[name] = _matrix(_req(raw, name, path), (n, n), f"model.{name}", base, grid)
    a = {}
    for name in ("a1", "a2"):
        a[name] = _matrix(raw.get(name, 0.0), (), f"model.{name}", base, grid)
    channels = len(delays)
    Cs, Rs = [], []
    for name, store, shape in (("C", Cs, (m, n)), ("R", Rs, (m, m))):
        items = _req(raw, name, path)
        if not isinstance(items, list) or len(items) != channels:
            raise ConfigurationError(f"need one entry per channel ({channels})", f"model.{name}")
        for s, spec in enumerate(items):
            store.append(_matrix(spec, shape, f"model.{name}[{s}]", base, grid))
    xr, xc, Xr, Xc = _boundary(_req(raw, "boundary", path), n, "model.boundary")
    kind = raw.get("nonlinearity", "linear")
    model = SystemModel(
        n=n, m=m, delays=delays, A1=mats["A1"], A2=mats["A2"], B1=mats["B1"], B2=mats["B2"],
        Q=mats["Q"], C=lambda s, idx: Cs[s](idx), R=lambda s, idx: Rs[s](idx),
        x_u_row=xr, x_u_col=xc, Xi0_row=Xr, Xi0_col=Xc, a1=a["a1"], a2=a["a2"])
    if kind == "sine":
        model.f1 = SineResidual(model.A1, model.a1)
        model.f2 = SineResidual(model.A2, model.a2)
    elif kind != "linear":
        raise ConfigurationError("expected 'linear' or 'sine'", "model.nonlinearity")
    return model


def build_filter(raw):
    pert = {}
    for tau, items in (raw.get("perturbations") or {}).items():
        conv = []
        for nu, item in enumerate(items):
            p = f"filter.perturbations.{tau}[{nu}]"
            conv.append(Perturbation(float(_req(item, "beta_var", p)),
                                     np.asarray(_req(item, "H", p), dtype=float)))
        pert[int(tau)] = conv
    return FilterConfig(_req(raw, "a_check", "filter"), _req(raw, "b_check", "filter"), pert)


def build_scenario(raw, source=None):
    grid = _int(_req(raw, "grid", ""), "grid", 1)
    trials = _int(_req(raw, "trials", ""), "trials", 1)
    seed = _int(_req(raw, "seed", ""), "seed", 0)
    model = build_model(_req(raw, "model", ""), grid, source)
    model.validate(grid)
    e = dict(_req(raw, "etm", ""))
    try:
        etm = EtmConfig(**e)
    except TypeError as exc:
        raise ConfigurationError(str(exc), "etm") from None
    c = _req(raw, "codec", "")
    codec = CodecConfig(_req(c, "Z", "codec"), _req(c, "L", "codec"), _req(c, "crossover", "codec"))
    filt = build_filter(_req(raw, "filter", ""))
    S = model.N + 1
    if etm.channels != S:
        raise ConfigurationError(f"need {S} channel entries", "etm.varsigma")
    if codec.channels != S:
        raise ConfigurationError(f"need {S} channel entries", "codec.Z")
    for s in range(S):
        if etm.components(s) != model.m:
            raise ConfigurationError(f"need {model.m} components", f"etm.sigma[{s}]")
    filt.check_dimensions(model.n, model.m, model.N)
    checks = dict(DEFAULT_CHECKS)
    unknown = set(raw.get("checks") or {}) - set(DEFAULT_CHECKS)
    if unknown:
        raise ConfigurationError(f"unknown check settings {sorted(unknown)}", "checks")
    checks.update(raw.get("checks") or {})
    export = _int(raw.get("export_trials", 3), "export_trials", 0)
    return ScenarioConfig(str(raw.get("name", "scenario")), grid, trials, seed, model, etm,
                          codec, filt, min(export, trials), checks, copy.deepcopy(raw), source)
