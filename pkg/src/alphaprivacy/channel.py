"""Exact release-channel optimization on small discrete alphabets.

The decision variable is a row-stochastic matrix p(Z | W).  The data law
p(X, W, Y[, S]) and a distortion table d(z, y) form a world model; the
objective is expected distortion minus lambda times the Arimoto
conditional alpha-entropy of the private variable given the release (and
side information when present), with the adversary's posterior re-derived
exactly by Bayes' rule at every step.

Everything is single-sequence-element (T = 1): exact enumeration over
sequence space is out of reach for longer horizons, which the neural
pathway covers instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, ValidationError
from .measures import (
    NORMALIZATION_TOL,
    JointPmf,
    Pmf,
    _arimoto_conditional_from_table,
    _log_alpha_norm,
    _logsumexp,
    _masked_log,
    _check_alpha,
    _shannon,
)

MAX_EXACT_ALPHABET = 16


class ReleaseChannel:
    """Conditional release distribution p(Z = z | W = w) as a matrix.

    ``probs[w, z]`` holds the probability of releasing symbol z on
    observation w; every row must be a valid distribution.
    """

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 2:
            raise ValidationError(
                f"ReleaseChannel: expected |W| x |Z| matrix, got shape {probs.shape}"
            )
        if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
            raise ValidationError("ReleaseChannel: rows must be non-negative and finite")
        rowsums = probs.sum(axis=1)
        worst = np.abs(rowsums - 1.0).max()
        if worst > NORMALIZATION_TOL:
            raise ValidationError(f"ReleaseChannel: row normalization off by {worst:g}")
        self.probs = probs

    @property
    def num_observations(self):
        return self.probs.shape[0]

    @property
    def num_symbols(self):
        return self.probs.shape[1]

    def __repr__(self):
        return f"ReleaseChannel(shape={self.probs.shape})"


class WorldModel:
    """Data-generating law plus distortion table for the exact optimizer.

    ``joint`` carries axes ("X", "W", "Y") and optionally "S";
    ``distortion_table`` is |Z| x |Y| with non-negative entries, zero on
    the diagonal when Z and Y share an alphabet (square table).
    """

    def __init__(self, joint: JointPmf, distortion_table):
        labels = set(joint.axis_labels)
        if labels not in ({"X", "W", "Y"}, {"X", "W", "Y", "S"}):
            raise ValidationError(
                f"WorldModel: joint axes must be X, W, Y[, S], got {joint.axis_labels}"
            )
        table = np.asarray(distortion_table, dtype=np.float64)
        if table.ndim != 2:
            raise ValidationError("WorldModel: distortion table must be 2-D (|Z| x |Y|)")
        if not np.all(np.isfinite(table)) or np.any(table < 0.0):
            raise ValidationError("WorldModel: distortion entries must be finite and >= 0")
        ny = joint.probs.shape[joint.axis("Y")]
        if table.shape[1] != ny:
            raise ValidationError(
                f"WorldModel: distortion has {table.shape[1]} columns, |Y| = {ny}"
            )
        if table.shape[0] == table.shape[1] and np.any(np.diag(table) != 0.0):
            raise ValidationError(
                "WorldModel: d(z, y) must vanish at z = y for a shared alphabet"
            )
        self.joint = joint
        self.distortion_table = table

    @property
    def has_side_information(self):
        return "S" in self.joint.axis_labels

    @property
    def num_symbols(self):
        """Size of the release alphabet |Z|."""
        return self.distortion_table.shape[0]

    def size(self, label):
        return self.joint.probs.shape[self.joint.axis(label)]

    # --- JSON round trip ------------------------------------------------
    # Schema: {"axes": ["X","W","Y"(,"S")], "sizes": {axis: int, "Z": int},
    #          "joint": [row-major flat probabilities over the axes],
    #          "distortion": [[d(z,y) ...] per z]}

    def to_dict(self):
        return {
            "axes": list(self.joint.axis_labels),
            "sizes": {
                **{lbl: int(self.size(lbl)) for lbl in self.joint.axis_labels},
                "Z": int(self.num_symbols),
            },
            "joint": self.joint.probs.ravel().tolist(),
            "distortion": self.distortion_table.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            axes = tuple(doc["axes"])
            sizes = doc["sizes"]
            shape = tuple(int(sizes[a]) for a in axes)
            flat = np.asarray(doc["joint"], dtype=np.float64)
            table = np.asarray(doc["distortion"], dtype=np.float64)
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"world document missing/invalid field: {exc}") from exc
        if flat.size != int(np.prod(shape)):
            raise DataFormatError(
                f"world joint has {flat.size} entries, expected {int(np.prod(shape))}"
            )
        if "Z" in sizes and table.shape[0] != int(sizes["Z"]):
            raise DataFormatError(
                f"distortion table has {table.shape[0]} rows, sizes.Z = {sizes['Z']}"
            )
        return cls(JointPmf(flat.reshape(shape), axes), table)

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(doc)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


@dataclass
class ChannelOptConfig:
    """Optimizer settings; ``lam`` is the privacy weight."""

    alpha: float = 1.0
    lam: float = 0.0
    step_size: float = 0.5
    max_iters: int = 500
    tolerance: float = 1e-10
    restarts: int = 4

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.lam < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        if self.step_size <= 0:
            raise ValidationError("step_size must be positive")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.tolerance <= 0:
            raise ValidationError("tolerance must be positive")
        if self.restarts < 1:
            raise ValidationError("restarts must be >= 1")


@dataclass
class BayesPosterior:
    """Exact adversary best response to a fixed channel.

    ``conditional[x, z(, s)]`` is p(x | z[, s]); cells with zero release
    probability are filled with the prior on X and flagged dead in
    ``support`` so downstream expectations can skip them.
    """

    joint: JointPmf
    conditional: np.ndarray
    support: np.ndarray


@dataclass
class ChannelOptResult:
    channel: ReleaseChannel
    trace: list
    converged: bool


def _private_joint_table(world: WorldModel, channel_probs: np.ndarray):
    """Induced joint over (X, Z[, S]) given the channel, as a raw table."""
    if channel_probs.shape[0] != world.size("W"):
        raise ValidationError(
            f"channel has {channel_probs.shape[0]} rows, |W| = {world.size('W')}"
        )
    if channel_probs.shape[1] != world.num_symbols:
        raise ValidationError(
            f"channel has {channel_probs.shape[1]} columns, |Z| = {world.num_symbols}"
        )
    if world.has_side_information:
        xws = world.joint.marginal(("X", "W", "S")).probs
        return np.einsum("xws,wz->xzs", xws, channel_probs)
    xw = world.joint.marginal(("X", "W")).probs
    return np.einsum("xw,wz->xz", xw, channel_probs)


def bayes_posterior(world: WorldModel, channel: ReleaseChannel) -> BayesPosterior:
    """Exact posterior p(X | Z[, S]) induced by the world and the channel.

    This is the minimizer of the KL divergence from the true posterior,
    i.e. the best possible adversary for the given release mechanism.
    """
    table = _private_joint_table(world, channel.probs)
    cond_mass = table.sum(axis=0)
    support = cond_mass > 0.0
    prior = world.joint.marginal(("X",)).probs
    cond = np.empty_like(table)
    safe = np.where(support, cond_mass, 1.0)
    cond[:] = table / safe
    # dead cells: fall back to the prior, flagged via `support`
    if not support.all():
        shape = (len(prior),) + (1,) * (table.ndim - 1)
        cond = np.where(support, cond, prior.reshape(shape))
    labels = ("X", "Z", "S") if world.has_side_information else ("X", "Z")
    return BayesPosterior(JointPmf(table, labels), cond, support)


def expected_distortion(world: WorldModel, channel: ReleaseChannel) -> float:
    """E[d(Z, Y)] under the induced joint, by exact summation."""
    cost = _distortion_cost_matrix(world)
    return float(np.sum(channel.probs * cost))


def _distortion_cost_matrix(world: WorldModel):
    """C[w, z] = sum_y p(w, y) d(z, y); E[d] = sum_{w,z} p(z|w) C[w, z]."""
    wy = world.joint.marginal(("W", "Y")).probs
    return wy @ world.distortion_table.T


def _conditional_entropy_from_table(table, alpha):
    """Arimoto conditional entropy of X (axis 0) given the rest."""
    return _arimoto_conditional_from_table(table, 0, alpha)


def releaser_objective(
    world: WorldModel, channel: ReleaseChannel, cfg: ChannelOptConfig
) -> float:
    """Expected distortion minus lambda times the adversary's residual
    alpha-entropy about X, at the exact Bayes best response."""
    value = expected_distortion(world, channel)
    if cfg.lam != 0.0:
        table = _private_joint_table(world, channel.probs)
        value -= cfg.lam * _conditional_entropy_from_table(table, cfg.alpha)
    return value


def project_to_simplex(v) -> Pmf:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValidationError("project_to_simplex: need a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValidationError("project_to_simplex: entries must be finite")
    return Pmf(_project_rows(v[None, :])[0])


def _project_rows(mat):
    """Row-wise simplex projection of a 2-D array."""
    n = mat.shape[1]
    u = -np.sort(-mat, axis=1)
    css = np.cumsum(u, axis=1)
    ks = np.arange(1, n + 1)
    cond = u + (1.0 - css) / ks > 0.0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)  # last index satisfying cond
    tau = (1.0 - css[np.arange(mat.shape[0]), rho]) / (rho + 1.0)
    return np.maximum(mat + tau[:, None], 0.0)


def _entropy_gradient(world: WorldModel, channel_probs, alpha):
    """d H_alpha(X | Z[, S]) / d p(z|w), treating the Bayes adversary as
    re-solved at the current channel.

    Boundary convention: coordinates whose induced joint mass is zero get
    gradient 0 (the objective is evaluated with the 0 log 0 convention, so
    these terms are flat from inside the feasible set for alpha >= 1 and
    we pin them for alpha < 1 as well; finite-difference cross-checks run
    on strictly positive channels).
    """
    table = _private_joint_table(world, channel_probs)  # (x, z[, s])
    if world.has_side_information:
        contract = world.joint.marginal(("X", "W", "S")).probs  # (x, w, s)
    else:
        contract = world.joint.marginal(("X", "W")).probs[:, :, None]  # (x, w, 1)
        table = table[:, :, None]
    logj = _masked_log(table)
    finite = np.isfinite(logj)
    if alpha == 1.0:
        cond_mass = table.sum(axis=0, keepdims=True)
        log_cond = _masked_log(cond_mass)
        dj = np.zeros_like(table)
        np.subtract(
            np.broadcast_to(log_cond, table.shape), logj, out=dj, where=finite
        )
    else:
        log_norms = _log_alpha_norm(table, alpha, axis=0)  # (z, s)
        log_total = _logsumexp(log_norms.ravel(), axis=0)
        logj_safe = np.where(finite, logj, 0.0)
        norms_safe = np.where(np.isfinite(log_norms), log_norms, 0.0)
        expo = (1.0 - alpha) * norms_safe[None, :, :] + (alpha - 1.0) * logj_safe - log_total
        dj = np.zeros_like(table)
        np.exp(expo, out=dj, where=finite)
        dj *= alpha / (1.0 - alpha)
    return np.einsum("xzs,xws->wz", dj, contract)


def objective_gradient(world: WorldModel, channel: ReleaseChannel, cfg: ChannelOptConfig):
    """Analytic gradient of :func:`releaser_objective` in the channel entries."""
    grad = _distortion_cost_matrix(world).copy()
    if cfg.lam != 0.0:
        grad -= cfg.lam * _entropy_gradient(world, channel.probs, cfg.alpha)
    return grad


def optimize_channel(
    world: WorldModel, cfg: ChannelOptConfig, seed: int
) -> ChannelOptResult:
    """Projected gradient descent on the channel against the exact Bayes
    adversary.

    Rows are initialized from a flat Dirichlet; each iteration takes a
    gradient step with backtracking (step halved until the objective does
    not increase) and re-projects every row onto the simplex.  Runs
    ``cfg.restarts`` independent starts and keeps the best; the returned
    trace belongs to the winning start and is non-increasing.  A start
    stops once the per-iteration improvement falls below ``cfg.tolerance``;
    ``converged`` is False if the winner ran out of iterations instead.
    """
    for lbl in world.joint.axis_labels:
        if world.size(lbl) > MAX_EXACT_ALPHABET:
            raise ValidationError(
                f"alphabet {lbl} larger than {MAX_EXACT_ALPHABET}: out of the exact regime"
            )
    if world.num_symbols > MAX_EXACT_ALPHABET:
        raise ValidationError("release alphabet larger than the exact regime allows")

    best = None
    for restart in range(cfg.restarts):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), restart]))
        probs = rng.dirichlet(np.ones(world.num_symbols), size=world.size("W"))
        channel = ReleaseChannel(probs)
        obj = releaser_objective(world, channel, cfg)
        trace = [obj]
        converged = False
        for _ in range(cfg.max_iters):
            grad = objective_gradient(world, channel, cfg)
            step = cfg.step_size
            cand, cand_obj = channel, obj
            for _ in range(40):
                trial = ReleaseChannel(_project_rows(channel.probs - step * grad))
                trial_obj = releaser_objective(world, trial, cfg)
                if trial_obj <= obj:
                    cand, cand_obj = trial, trial_obj
                    break
                step *= 0.5
            improvement = obj - cand_obj
            channel, obj = cand, cand_obj
            trace.append(obj)
            if improvement < cfg.tolerance:
                converged = True
                break
        if best is None or obj < best.trace[-1]:
            best = ChannelOptResult(channel, trace, converged)
    return best


def free_parameter_count(world: WorldModel) -> int:
    """Free channel parameters: |W| rows with |Z| - 1 degrees each."""
    return world.size("W") * (world.num_symbols - 1)


def enumerate_grid_rows(num_symbols: int, resolution: int):
    """All grid rows of a single channel row: each of the |Z| - 1 leading
    entries ranges over ``resolution`` uniform points in [0, 1]; the last
    entry absorbs the remainder and infeasible combinations are skipped.
    Rows appear in lexicographic order of the leading entries."""
    if resolution < 2:
        raise ValidationError("grid resolution must be >= 2")
    pts = np.linspace(0.0, 1.0, resolution)
    if num_symbols == 2:
        rows = np.stack([pts, 1.0 - pts], axis=1)
        return np.clip(rows, 0.0, 1.0)
    grids = np.meshgrid(*([pts] * (num_symbols - 1)), indexing="ij")
    lead = np.stack([g.ravel() for g in grids], axis=1)
    remainder = 1.0 - lead.sum(axis=1)
    keep = remainder >= -1e-12
    rows = np.concatenate([lead[keep], np.clip(remainder[keep], 0.0, None)[:, None]], axis=1)
    return rows


def _batch_objective(world: WorldModel, channels, cfg: ChannelOptConfig):
    """releaser_objective evaluated on a stack of channels (n, |W|, |Z|)."""
    cost = _distortion_cost_matrix(world)
    values = np.einsum("nwz,wz->n", channels, cost)
    if cfg.lam == 0.0:
        return values
    if world.has_side_information:
        contract = world.joint.marginal(("X", "W", "S")).probs
        tables = np.einsum("xws,nwz->nxzs", contract, channels)
    else:
        contract = world.joint.marginal(("X", "W")).probs
        tables = np.einsum("xw,nwz->nxz", contract, channels)[..., None]
    n, nx = tables.shape[0], tables.shape[1]
    flat = tables.reshape(n, nx, -1)  # (n, x, conditioning cell)
    alpha = cfg.alpha
    if alpha == 1.0:
        ent = _shannon(flat.reshape(n, -1), axis=1) - _shannon(flat.sum(axis=1), axis=1)
    else:
        log_norms = _log_alpha_norm(flat, alpha, axis=1)  # (n, cell)
        ent = alpha / (1.0 - alpha) * _logsumexp(log_norms, axis=1)
    return values - cfg.lam * ent


def grid_oracle(
    world: WorldModel, cfg: ChannelOptConfig, resolution: int, chunk: int = 65536
):
    """Exhaustive grid search over the channel, for verifying the optimizer.

    Evaluates the releaser objective at every combination of per-row grid
    rows (``resolution`` points per free parameter) and returns the best
    ``(ReleaseChannel, objective)``.  Ties break to the first candidate in
    lexicographic enumeration order.
    """
    nfree = free_parameter_count(world)
    if nfree > 4:
        raise ValidationError(
            f"grid oracle limited to 4 free parameters, instance has {nfree}"
        )
    rows = enumerate_grid_rows(world.num_symbols, resolution)
    nrows = world.size("W")
    counts = [rows.shape[0]] * nrows
    total = int(np.prod(counts))
    best_obj = np.inf
    best_index = -1
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        # mixed-radix decode: row choice per w, first row = most significant
        combos = np.empty((idx.size, nrows), dtype=np.int64)
        rem = idx.copy()
        for w in range(nrows - 1, -1, -1):
            combos[:, w] = rem % counts[w]
            rem //= counts[w]
        channels = rows[combos]  # (n, |W|, |Z|)
        values = _batch_objective(world, channels, cfg)
        local = int(np.argmin(values))
        if values[local] < best_obj:
            best_obj = float(values[local])
            best_index = int(idx[local])
    rem = best_index
    choice = [0] * nrows
    for w in range(nrows - 1, -1, -1):
        choice[w] = rem % counts[w]
        rem //= counts[w]
    channel = ReleaseChannel(rows[np.array(choice)])
    return channel, best_obj
