from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .._util import round_half_up
from ..nn import ConfigurationError

ALGORITHMS = ("knn", "iforest", "ae", "vae", "gan", "fmgan")
DEEP_ALGORITHMS = ("ae", "vae", "gan", "fmgan")

DEFAULT_STEPS = 10000
DEFAULT_BATCH = 256
DEFAULT_LR = 1e-3
DEFAULT_N_Z = 16
MAX_CODE_DIM = 100

VAE_KL_WEIGHTS = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
GAN_SCORE_WEIGHTS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
FMGAN_ALPHAS = (1e-4, 1e-2, 1.0, 1e2, 1e4)
IFOREST_TREES = (100, 500)


@dataclass(frozen=True)
class DetectorConfig:
    """Hyperparameters of one detector run.

    Fields that do not apply to ``algorithm`` stay ``None``. ``kl_weight``
    is the VAE's KL multiplier; ``score_weight`` mixes the discriminator
    and reconstruction terms of the adversarial score; ``fm_alpha`` weights
    the generator cross-entropy against feature matching.
    """

    algorithm: str
    k: int | None = None
    n_trees: int | None = None
    subsample: int | None = None
    path_adjust: bool | None = None
    code_dim: int | None = None
    n_hidden: int | None = None
    hidden: tuple[int, ...] | None = None
    steps: int | None = None
    batch_size: int | None = None
    lr: float | None = None
    kl_weight: float | None = None
    score_weight: float | None = None
    fm_alpha: float | None = None
    n_z: int | None = None
    vae_score: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.hidden is not None and not isinstance(self.hidden, tuple):
            object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def is_deep(self) -> bool:
        return self.algorithm in DEEP_ALGORITHMS

    def validate(self) -> "DetectorConfig":
        a = self.algorithm
        if a not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {a!r}")
        if a == "knn":
            _require(self.k is not None and self.k >= 1, "knn needs k >= 1")
        elif a == "iforest":
            _require(self.n_trees is not None and self.n_trees >= 1, "iforest needs n_trees >= 1")
            _require(self.subsample is None or self.subsample >= 1, "subsample must be >= 1")
        else:
            _require(self.code_dim is not None and self.code_dim >= 1, "code_dim must be >= 1")
            _require(self.hidden is not None or self.n_hidden in (1, 2, 3),
                     "n_hidden must be 1, 2 or 3")
            _require(self.hidden is None or all(h >= 1 for h in self.hidden),
                     "hidden widths must be positive")
            _require(self.steps is None or self.steps >= 0, "steps must be >= 0")
            _require(self.batch_size is None or self.batch_size >= 1, "batch_size must be >= 1")
            _require(self.lr is None or self.lr > 0, "lr must be positive")
            _require(self.n_z is None or self.n_z >= 1, "n_z must be >= 1")
        if a == "vae":
            _require(self.kl_weight is not None and self.kl_weight > 0, "vae needs kl_weight > 0")
            _require(self.vae_score in (None, "recon", "code_nll"), "vae_score is recon or code_nll")
        if a in ("gan", "fmgan"):
            _require(self.score_weight is not None and 0.0 <= self.score_weight <= 1.0,
                     "score_weight must lie in [0, 1]")
        if a == "fmgan":
            _require(self.fm_alpha is not None and self.fm_alpha > 0, "fmgan needs fm_alpha > 0")
        return self

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields {sorted(unknown)}")
        return cls(**d)

    def with_seed(self, seed: int) -> "DetectorConfig":
        return replace(self, seed=int(seed))

    # resolved values for deep models
    @property
    def steps_(self) -> int:
        return DEFAULT_STEPS if self.steps is None else self.steps

    @property
    def batch_size_(self) -> int:
        return DEFAULT_BATCH if self.batch_size is None else self.batch_size

    @property
    def lr_(self) -> float:
        return DEFAULT_LR if self.lr is None else self.lr

    @property
    def n_z_(self) -> int:
        return DEFAULT_N_Z if self.n_z is None else self.n_z


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigurationError(msg)


def knn_k_values(n: int) -> list[int]:
    root = math.sqrt(n)
    out = []
    for k in (1, 0.5 * root, root, 1.5 * root, 2 * root):
        k = min(max(round_half_up(k), 1), n)
        if k not in out:
            out.append(k)
    return out


def code_dims(d: int) -> list[int]:
    m = min(200, d)
    out = []
    for frac in (0.1, 0.2, 0.3, 0.4, 0.5):
        c = min(max(round_half_up(frac * m), 1), MAX_CODE_DIM)
        if c not in out:
            out.append(c)
    return out


def hyper_grid(algorithm: str, d: int, n: int, **overrides) -> list[DetectorConfig]:
    """Every grid-legal configuration for ``algorithm`` on ``n`` points of dim ``d``.

    ``overrides`` are applied to every generated config (handy for reducing
    ``steps`` in quick runs); the grid order is fixed and defines config ids.
    """
    if d < 1 or n < 1:
        raise ConfigurationError("d and n must be >= 1")
    if algorithm not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}")
    if algorithm == "knn":
        base = [dict(k=k) for k in knn_k_values(n)]
    elif algorithm == "iforest":
        base = [dict(n_trees=t, subsample=min(256, n), path_adjust=True) for t in IFOREST_TREES]
    else:
        base = []
        for c in code_dims(d):
            for n_h in (1, 2, 3):
                arch = dict(code_dim=c, n_hidden=n_h)
                if algorithm == "ae":
                    base.append(arch)
                elif algorithm == "vae":
                    base += [dict(arch, kl_weight=w, n_z=DEFAULT_N_Z) for w in VAE_KL_WEIGHTS]
                elif algorithm == "gan":
                    base += [dict(arch, score_weight=w, n_z=DEFAULT_N_Z) for w in GAN_SCORE_WEIGHTS]
                else:
                    base += [dict(arch, fm_alpha=a, score_weight=w, n_z=DEFAULT_N_Z)
                             for a in FMGAN_ALPHAS for w in GAN_SCORE_WEIGHTS]
        for b in base:
            b.update(steps=DEFAULT_STEPS, batch_size=DEFAULT_BATCH, lr=DEFAULT_LR)
    configs = []
    for b in base:
        b.update(overrides)
        cfg = DetectorConfig(algorithm=algorithm, **b).validate()
        if cfg not in configs:
            configs.append(cfg)
    return configs


def default_config(algorithm: str, d: int, n: int, **overrides) -> DetectorConfig:
    """A single mid-grid configuration, used for smoke runs and controls."""
    grid = hyper_grid(algorithm, d, n, **overrides)
    return grid[len(grid) // 2]

