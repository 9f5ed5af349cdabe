"""Synthetic data generation, batch containers and CSV persistence.

Two generators mirror the experiment shapes this project targets:

* ``labeled_clusters`` — static (T = 1) Gaussian clusters with a utility
  class label and a binary private attribute that shifts the cluster mean
  along a fixed direction; the analogue of an annotated image corpus.
* ``markov_load`` — a binary occupancy Markov chain driving a load signal
  over T steps, with a categorical side-information symbol correlated with
  the sequence's dominant occupancy state; the analogue of metered power
  data with calendar side information.

Both are fully determined by their seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DataFormatError, ValidationError


@dataclass
class DatasetBatch:
    """Aligned sample arrays: useful data ``y`` (B, T, d_y), private labels
    ``x`` (B, T), input noise ``u`` (B, T, d_u), optional side information
    ``s`` (B, d_s) and optional utility labels ``c`` (B,)."""

    y: np.ndarray
    x: np.ndarray
    u: np.ndarray
    s: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.y.ndim != 3 or self.x.ndim != 2 or self.u.ndim != 3:
            raise ValidationError(
                f"batch shapes must be y (B,T,d), x (B,T), u (B,T,d): got "
                f"{self.y.shape}, {self.x.shape}, {self.u.shape}"
            )
        nbatch, nsteps = self.y.shape[0], self.y.shape[1]
        if self.x.shape != (nbatch, nsteps) or self.u.shape[:2] != (nbatch, nsteps):
            raise ValidationError("inconsistent batch/time dimensions across fields")
        if self.x.min(initial=0) < 0:
            raise ValidationError("private labels must be non-negative integers")
        if self.u.size and (self.u.min() < 0.0 or self.u.max() > 1.0):
            raise ValidationError("noise entries must lie in [0, 1]")
        if self.s is not None:
            self.s = np.asarray(self.s, dtype=np.float64)
            if self.s.ndim != 2 or self.s.shape[0] != nbatch:
                raise ValidationError(f"side information must be (B, d_s), got {self.s.shape}")
        if self.c is not None:
            self.c = np.asarray(self.c, dtype=np.int64)
            if self.c.shape != (nbatch,):
                raise ValidationError(f"utility labels must be (B,), got {self.c.shape}")

    @property
    def size(self):
        return self.y.shape[0]

    @property
    def num_steps(self):
        return self.y.shape[1]

    def take(self, idx):
        """Sub-batch at the given indices."""
        return DatasetBatch(
            y=self.y[idx],
            x=self.x[idx],
            u=self.u[idx],
            s=None if self.s is None else self.s[idx],
            c=None if self.c is None else self.c[idx],
        )


class BatchStream:
    """Draws fresh mini-batches from a dataset with its own RNG stream."""

    def __init__(self, data: DatasetBatch, seed: int):
        self.data = data
        self.rng = np.random.default_rng(seed)

    def draw(self, nbatch: int) -> DatasetBatch:
        if nbatch < 1 or nbatch > self.data.size:
            raise ValidationError(
                f"cannot draw {nbatch} samples from a pool of {self.data.size}"
            )
        idx = self.rng.choice(self.data.size, size=nbatch, replace=False)
        return self.data.take(idx)


@dataclass
class SynthConfig:
    """Knobs for the synthetic generators; unused fields are ignored by the
    generator that does not own them."""

    generator: str = "labeled_clusters"
    total: int = 2048
    num_steps: int = 1
    d_y: int = 3
    noise_dim: int = 1
    seed: int = 0
    # labeled_clusters
    num_classes: int = 4
    separation: float = 4.0
    class_spread: float = 3.0
    class_bias: float = 0.1
    cluster_scale: float = 1.0
    # markov_load
    stay_prob: float = 0.8
    base_load: float = 1.0
    occupancy_bump: float = 1.0
    load_noise: float = 0.25
    si_correlation: float = 0.0

    def __post_init__(self):
        if self.generator not in ("labeled_clusters", "markov_load"):
            raise ValidationError(f"unknown generator {self.generator!r}")
        if self.total < 1 or self.num_steps < 1 or self.d_y < 1 or self.noise_dim < 1:
            raise ValidationError("total, num_steps, d_y and noise_dim must be >= 1")
        if not 0.0 <= self.si_correlation <= 1.0:
            raise ValidationError("si_correlation must lie in [0, 1]")
        if self.separation < 0.0:
            raise ValidationError("separation must be >= 0")


def generate(cfg: SynthConfig) -> DatasetBatch:
    if cfg.generator == "labeled_clusters":
        return gen_labeled_clusters(cfg)
    return gen_markov_load(cfg)


def _class_means(cfg):
    """Base mean per utility class, spread over the leading coordinates."""
    means = np.zeros((cfg.num_classes, cfg.d_y))
    angles = 2.0 * np.pi * np.arange(cfg.num_classes) / cfg.num_classes
    means[:, 0] = cfg.class_spread * np.cos(angles)
    if cfg.d_y > 1:
        means[:, 1] = cfg.class_spread * np.sin(angles)
    return means


def _private_shift(cfg):
    """Mean shift of the private bit: total length ``separation``, spread
    with geometrically decaying strength over the trailing coordinates so
    the private signal has strong and subtle components rather than a
    single knife-edge direction."""
    width = min(3, cfg.d_y)
    weights = 0.5 ** np.arange(width)[::-1]  # weakest first
    shift = np.zeros(cfg.d_y)
    shift[cfg.d_y - width :] = weights / np.linalg.norm(weights) * cfg.separation
    return shift


def gen_labeled_clusters(cfg: SynthConfig) -> DatasetBatch:
    """Static Gaussian clusters: utility class drawn uniformly, private bit
    with a class-dependent bias, emission mean depending on both."""
    if cfg.generator != "labeled_clusters":
        raise ValidationError("config is not for labeled_clusters")
    if cfg.cluster_scale <= 0.0:
        raise ValidationError("cluster_scale must be positive (degenerate covariance)")
    rng = np.random.default_rng(cfg.seed)
    n = cfg.total
    c = rng.integers(0, cfg.num_classes, size=n)
    # odd classes tilt towards X = 1, even classes away
    p_one = np.clip(0.5 + cfg.class_bias * np.where(c % 2 == 1, 1.0, -1.0), 0.0, 1.0)
    x = (rng.random(n) < p_one).astype(np.int64)
    means = _class_means(cfg)[c]
    y = (
        means
        + x[:, None] * _private_shift(cfg)
        + cfg.cluster_scale * rng.normal(size=(n, cfg.d_y))
    )
    u = rng.random((n, 1, cfg.noise_dim))
    return DatasetBatch(y=y[:, None, :], x=x[:, None], u=u, s=None, c=c)


def gen_markov_load(cfg: SynthConfig) -> DatasetBatch:
    """Binary occupancy chain emitting a noisy load level, plus a binary
    side-information symbol tied to the dominant occupancy state."""
    if cfg.generator != "markov_load":
        raise ValidationError("config is not for markov_load")
    if not 0.0 <= cfg.stay_prob <= 1.0:
        raise ValidationError("stay_prob must lie in [0, 1] (invalid transition matrix)")
    rng = np.random.default_rng(cfg.seed)
    n, nsteps = cfg.total, cfg.num_steps
    x = np.empty((n, nsteps), dtype=np.int64)
    x[:, 0] = rng.integers(0, 2, size=n)
    for t in range(1, nsteps):
        stay = rng.random(n) < cfg.stay_prob
        x[:, t] = np.where(stay, x[:, t - 1], 1 - x[:, t - 1])
    y = (
        cfg.base_load
        + cfg.occupancy_bump * x[:, :, None]
        + cfg.load_noise * rng.normal(size=(n, nsteps, cfg.d_y))
    )
    majority = (x.mean(axis=1) > 0.5).astype(np.int64)
    honest = rng.random(n) < (1.0 + cfg.si_correlation) / 2.0
    s = np.where(honest, majority, 1 - majority).astype(np.float64)[:, None]
    u = rng.random((n, nsteps, cfg.noise_dim))
    return DatasetBatch(y=y, x=x, u=u, s=s, c=None)


def train_eval_split(cfg: SynthConfig, eval_fraction=0.2):
    """Two independently generated datasets from seed-derived streams.

    The evaluation set uses a disjoint RNG stream of the base seed, so the
    split is reproducible and the held-out samples are fresh draws.
    """
    if not 0.0 < eval_fraction < 1.0:
        raise ValidationError("eval_fraction must lie strictly between 0 and 1")
    n_eval = max(1, int(round(cfg.total * eval_fraction)))
    n_train = cfg.total - n_eval
    if n_train < 1:
        raise ValidationError("split leaves no training samples")
    train_cfg = replace(cfg, total=n_train, seed=cfg.seed)
    eval_cfg = replace(cfg, total=n_eval, seed=_derive_seed(cfg.seed, "eval"))
    return generate(train_cfg), generate(eval_cfg)


def _derive_seed(seed: int, tag: str) -> int:
    """Stable derived seed for an independent RNG stream."""
    h = 1469598103934665603
    for ch in f"{seed}:{tag}".encode():
        h = (h ^ ch) * 1099511628211 % (1 << 63)
    return h


# --- CSV persistence -------------------------------------------------------
# Wide format, one row per sample.  Columns, in order: y{t}_{j} for every
# time step and feature, x{t} per step, u{t}_{j}, then optional s_{j} and c.
# Floats are rendered with repr() so a round trip is bit exact.


def save_csv(batch: DatasetBatch, path):
    nsteps, d_y, d_u = batch.num_steps, batch.y.shape[2], batch.u.shape[2]
    header = [f"y{t}_{j}" for t in range(nsteps) for j in range(d_y)]
    header += [f"x{t}" for t in range(nsteps)]
    header += [f"u{t}_{j}" for t in range(nsteps) for j in range(d_u)]
    if batch.s is not None:
        header += [f"s_{j}" for j in range(batch.s.shape[1])]
    if batch.c is not None:
        header += ["c"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(batch.size):
            row = [repr(float(v)) for v in batch.y[i].ravel()]
            row += [str(int(v)) for v in batch.x[i]]
            row += [repr(float(v)) for v in batch.u[i].ravel()]
            if batch.s is not None:
                row += [repr(float(v)) for v in batch.s[i]]
            if batch.c is not None:
                row += [str(int(batch.c[i]))]
            writer.writerow(row)


def load_csv(path) -> DatasetBatch:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise DataFormatError(f"{path}: no rows")
    y_cols = [h for h in header if h.startswith("y")]
    x_cols = [h for h in header if h.startswith("x")]
    u_cols = [h for h in header if h.startswith("u")]
    s_cols = [h for h in header if h.startswith("s_")]
    has_c = "c" in header
    nsteps = len(x_cols)
    if nsteps == 0 or len(y_cols) % nsteps or len(u_cols) % nsteps:
        raise DataFormatError(f"{path}: header does not describe a valid layout")
    d_y, d_u = len(y_cols) // nsteps, len(u_cols) // nsteps
    n = len(rows)
    y = np.empty((n, nsteps, d_y))
    x = np.empty((n, nsteps), dtype=np.int64)
    u = np.empty((n, nsteps, d_u))
    s = np.empty((n, len(s_cols))) if s_cols else None
    c = np.empty(n, dtype=np.int64) if has_c else None
    width = len(header)
    col = {name: k for k, name in enumerate(header)}
    for i, row in enumerate(rows):
        line = i + 2  # 1-based, after the header
        if len(row) != width:
            raise DataFormatError(f"{path}: line {line}: expected {width} fields, got {len(row)}")
        try:
            for t in range(nsteps):
                for j in range(d_y):
                    y[i, t, j] = float(row[col[f"y{t}_{j}"]])
                x[i, t] = int(row[col[f"x{t}"]])
                for j in range(d_u):
                    u[i, t, j] = float(row[col[f"u{t}_{j}"]])
            for j in range(len(s_cols)):
                s[i, j] = float(row[col[f"s_{j}"]])
            if has_c:
                c[i] = int(row[col["c"]])
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {line}: {exc}") from None
    return DatasetBatch(y=y, x=x, u=u, s=s, c=c)
