"""Run configuration: parsing, validation, and experiment assembly.

A run is fully described by a :class:`RunConfig`.  Configs come from a
human-editable ``key = value`` text file, from CLI flags, or both (flags
win).  ``build_problem`` materializes the task, the per-client data, and the
held-out evaluation split from the config's data RNG stream, so two configs
with the same seed describe byte-identical experiments.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

import numpy as np

from . import channel as channel_mod
from . import tasks
from .errors import ConfigurationError
from .sparsifier import STRATEGY_KINDS, AGETOPK, Strategy, make_strategy

TEST_FRACTION = 0.2  # held-out share of synthetic classification data

TASK_KINDS = ("quadratic", "logistic", "mlp")


@dataclass
class RunConfig:
    d: int
    T: int
    eta: float
    seed: int = 0
    strategy: str = AGETOPK
    n_clients: int = 20
    rho_r: float = 0.3
    rho_k: float = 0.2
    task: str = "logistic"
    alpha: float = 0.3
    fading: str = channel_mod.RAYLEIGH
    mu_h: float = 1.0
    sigma_h_sq: float = 0.0      # used by gaussian fading only
    sigma_z_sq: float = 0.01
    n_classes: int = 10
    m_samples: int = 2000
    separation: float = 3.0
    hidden: int = 16
    het_scale: float = 1.0
    quad_l_min: float = 0.1
    quad_l_max: float = 1.0
    theta0_scale: float = 0.0
    beta: float = 2.0            # magnitude-ratio constant for quality reports
    data_file: str | None = None
    data_seed: int | None = None # fixes the data/task instance across seeds
    out: str | None = None

    def __post_init__(self):
        if self.d < 1 or self.T < 0 or self.n_clients < 1:
            raise ConfigurationError("d and n_clients must be >= 1, T >= 0")
        if self.task not in TASK_KINDS:
            raise ConfigurationError(
                f"unknown task {self.task!r}, expected one of {TASK_KINDS}"
            )
        if self.strategy not in STRATEGY_KINDS:
            raise ConfigurationError(
                f"unknown strategy {self.strategy!r}, expected one of {STRATEGY_KINDS}"
            )
        if not (0.0 < self.rho_k <= 1.0 and 0.0 < self.rho_r <= 1.0):
            raise ConfigurationError("rho_r and rho_k must lie in (0, 1]")
        if self.rho_k > self.rho_r:
            raise ConfigurationError(
                f"rho_k={self.rho_k} exceeds rho_r={self.rho_r}"
            )
        self.derived_rk()  # validates 1 <= k <= r <= d

    def derived_rk(self) -> tuple:
        """(r, k) derived from the ratios via floor, then normalized for the
        strategy kind (top-k forces r = k, age-k forces r = d)."""
        r = int(np.floor(self.rho_r * self.d))
        k = int(np.floor(self.rho_k * self.d))
        if not 1 <= k <= r <= self.d:
            raise ConfigurationError(
                f"derived r={r}, k={k} violate 1 <= k <= r <= d={self.d}"
            )
        if self.strategy in ("topk", "randomk"):
            r = k
        elif self.strategy == "agek":
            r = self.d
        return r, k

    def resolved_strategy(self) -> Strategy:
        r, k = self.derived_rk()
        return make_strategy(self.strategy, d=self.d, k=k, r=r)

    def resolved_channel(self) -> channel_mod.ChannelModel:
        if self.fading == channel_mod.RAYLEIGH:
            return channel_mod.rayleigh(self.mu_h, self.sigma_z_sq)
        if self.fading == channel_mod.CONSTANT:
            return channel_mod.constant(self.mu_h, self.sigma_z_sq)
        if self.fading == channel_mod.GAUSSIAN:
            return channel_mod.gaussian_gain(self.mu_h, self.sigma_h_sq, self.sigma_z_sq)
        raise ConfigurationError(f"unknown fading kind {self.fading!r}")

    def echo_lines(self) -> list:
        """Resolved config as 'key = value' lines (including derived r, k),
        suitable for the commented header block of an output file."""
        r, k = self.derived_rk()
        lines = []
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            lines.append(f"{field.name} = {'' if value is None else value}")
        lines.append(f"r = {r}")
        lines.append(f"k = {k}")
        return lines


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_INT_FIELDS = {"d", "T", "seed", "n_clients", "n_classes", "m_samples",
               "hidden", "data_seed"}
_FLOAT_FIELDS = {"eta", "rho_r", "rho_k", "alpha", "mu_h", "sigma_h_sq",
                 "sigma_z_sq", "separation", "het_scale", "quad_l_min",
                 "quad_l_max", "theta0_scale", "beta"}
_STR_FIELDS = {"strategy", "task", "fading", "data_file", "out"}
_KEY_ALIASES = {"N": "n_clients"}


def coerce_value(key: str, raw) -> object:
    """Coerce one config value to its field type, with a named diagnostic."""
    key = _KEY_ALIASES.get(key, key)
    if key not in _FIELD_TYPES:
        raise ConfigurationError(f"unknown config key {key!r}")
    if raw is None:
        return None
    try:
        if key in _INT_FIELDS:
            return int(str(raw))
        if key in _FLOAT_FIELDS:
            return float(str(raw))
        return str(raw)
    except ValueError as exc:
        raise ConfigurationError(f"invalid value for {key!r}: {raw!r}") from exc


def load_config_file(path) -> dict:
    """Parse a 'key = value' file; '#' starts a comment, blanks ignored."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigurationError(
                        f"{path}:{lineno}: expected 'key = value', got {line!r}"
                    )
                key, _, raw = line.partition("=")
                key = key.strip()
                values[_KEY_ALIASES.get(key, key)] = coerce_value(key, raw.strip())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    return values


def make_run_config(values: dict) -> RunConfig:
    """Build a validated RunConfig from a plain mapping."""
    coerced = {}
    for key, raw in values.items():
        key = _KEY_ALIASES.get(key, key)
        coerced[key] = raw if not isinstance(raw, str) else coerce_value(key, raw)
    for required in ("d", "T", "eta"):
        if required not in coerced or coerced[required] is None:
            raise ConfigurationError(f"missing required config field {required!r}")
    try:
        return RunConfig(**coerced)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Resolve a config from an optional file plus override values."""
    values = load_config_file(path) if path else {}
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        key = _KEY_ALIASES.get(key, key)
        values[key] = coerce_value(key, raw) if isinstance(raw, str) else raw
    return make_run_config(values)


def axis_value_entropy(value) -> int:
    """Stable integer entropy for seeding sweep members by axis value."""
    digest = hashlib.sha256(repr(value).encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class Problem:
    """Materialized experiment: the task plus per-client payloads.

    For classification tasks the payloads are client Datasets and the train
    and held-out evaluation splits are populated; for the quadratic task the
    payloads are the per-client target vectors.
    """
    task: object
    partitions: list
    train_eval: tasks.Dataset | None = None
    test_eval: tasks.Dataset | None = None


def _classification_dims(config: RunConfig) -> int:
    """Feature dimension implied by d for the configured task, validated."""
    c = config.n_classes
    if config.task == "logistic":
        if config.d % c != 0 or config.d // c < 2:
            raise ConfigurationError(
                f"logistic task needs d = n_classes * (p + 1); "
                f"d={config.d}, n_classes={c} do not fit"
            )
        return config.d // c - 1
    h = config.hidden
    body = config.d - c * (h + 1)
    if body <= 0 or body % h != 0 or body // h < 2:
        raise ConfigurationError(
            f"mlp task needs d = hidden*(p+1) + n_classes*(hidden+1); "
            f"d={config.d}, hidden={h}, n_classes={c} do not fit"
        )
    return body // h - 1


def build_problem(config: RunConfig, rng: np.random.Generator) -> Problem:
    """Materialize task and client data from the config's data RNG."""
    n = config.n_clients
    if config.task == "quadratic":
        eigs = np.linspace(config.quad_l_min, config.quad_l_max, config.d)
        if config.quad_l_min <= 0 or config.quad_l_min > config.quad_l_max:
            raise ConfigurationError("need 0 < quad_l_min <= quad_l_max")
        q, _ = np.linalg.qr(rng.normal(size=(config.d, config.d)))
        a = (q * eigs) @ q.T
        a = 0.5 * (a + a.T)
        b = rng.normal(size=config.d)
        targets = [b + config.het_scale * rng.normal(size=config.d) for _ in range(n)]
        return Problem(task=tasks.QuadraticTask(a, b), partitions=targets)

    p = _classification_dims(config)
    if config.data_file:
        data = tasks.load_dataset(config.data_file)
        if data.p != p or data.n_classes != config.n_classes:
            raise ConfigurationError(
                f"dataset file has p={data.p}, C={data.n_classes}; config "
                f"implies p={p}, C={config.n_classes}"
            )
    else:
        data = tasks.gen_synthetic(
            p, config.n_classes, config.m_samples, config.separation, rng
        )
    train, test = tasks.split_train_test(data, TEST_FRACTION, rng)
    if train.m < n:
        raise ConfigurationError(
            f"training split has {train.m} samples for {n} clients"
        )
    parts = tasks.dirichlet_partition(
        train, tasks.PartitionSpec(config.alpha, n), rng
    )
    if config.task == "logistic":
        task = tasks.LogisticRegressionTask(p, config.n_classes)
    else:
        task = tasks.MLPTask(p, config.hidden, config.n_classes)
    if task.dim != config.d:
        raise ConfigurationError(
            f"task parameter count {task.dim} differs from configured d={config.d}"
        )
    return Problem(task=task, partitions=parts, train_eval=train, test_eval=test)
