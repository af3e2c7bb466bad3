"""Trajectory generation: integrated paths and exact stationary samples.

Two sources of trajectories with different roles:

* :func:`integrate_path` -- per-mode exponential-Euler recursion
  ``x_k(t_{j+1}) = e^{-a_k dt} x_k(t_j) + phi_k dB_j^k`` driven by exact fGN
  increments.  The scheme applies the semigroup to the state but adds the bare
  noise increment, so it carries an O(dt) weak bias at fixed step size; it is
  the tool for transient/consistency studies where the bias vanishes under
  grid refinement.
* :func:`sample_stationary_sequence` -- an exact draw of the stationary
  solution at the observation times, obtained by factoring the (block-)
  Toeplitz covariance assembled from the autocovariance tables.  Bias-free;
  the default source for distribution-level experiments.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from ._rng import substream
from .covariance import mode_lag_table
from .fgn import TOL_EIG, circulant_embedding_eigs, sample_fgn, validate_hurst
from .models import DIAGONAL, ModelConfig, ProjectionVector

__all__ = [
    "TrajectoryGrid",
    "Trajectory",
    "default_burn_in_steps",
    "integrate_path",
    "StationaryModeSampler",
    "sample_stationary_sequence",
    "attach_projection",
    "trajectory_to_csv",
    "trajectory_from_csv",
    "trajectory_to_npz",
    "trajectory_from_npz",
]

#: Dense-factorization guard for the stacked rank-one covariance.
DENSE_GUARD = 20_000

#: Cache format version for the binary trajectory format.
NPZ_FORMAT_VERSION = 1

_FGN_STREAM = 0x0F61
_STATIONARY_STREAM = 0x57A7


@dataclass(frozen=True)
class TrajectoryGrid:
    """Observation grid: step ``dt``, ``n_steps`` steps, discarded burn-in."""

    dt: float
    n_steps: int
    burn_in_steps: int = 0

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.burn_in_steps < 0:
            raise ValueError("burn_in_steps must be >= 0")

    @property
    def horizon(self) -> float:
        return self.dt * self.n_steps


@dataclass(frozen=True)
class Trajectory:
    """Observed path: times, squared norms, optional projections and modes."""

    grid: TrajectoryGrid
    t: np.ndarray
    sq_norms: np.ndarray
    init_kind: str
    projections: np.ndarray | None = None
    modes: np.ndarray | None = None  # shape (N, len(t))

    def subsample(self, stride: int) -> "Trajectory":
        """Keep every ``stride``-th observation (including the first)."""
        stride = int(stride)
        if stride < 1:
            raise ValueError("stride must be >= 1")
        sl = slice(None, None, stride)
        n_kept = len(self.t[sl])
        grid = TrajectoryGrid(self.grid.dt * stride, max(n_kept - 1, 1), self.grid.burn_in_steps)
        return Trajectory(
            grid=grid,
            t=self.t[sl],
            sq_norms=self.sq_norms[sl],
            init_kind=self.init_kind,
            projections=None if self.projections is None else self.projections[sl],
            modes=None if self.modes is None else self.modes[:, sl],
        )


def default_burn_in_steps(model: ModelConfig, dt: float) -> int:
    """Steps covering 20 relaxation times of the slowest mode
    (residual initial-condition correlation ~ e^{-20})."""
    a1 = float(model.rates[0])
    return int(math.ceil(20.0 / (a1 * dt)))


def _mode_increments(model: ModelConfig, n: int, seed: int) -> np.ndarray:
    """Unit-step fGN drivers, shape (N, n).

    Diagonal noise: one independent stream per mode.  Rank-one noise: a single
    shared stream replicated across modes (the loadings are applied later).
    """
    h = model.hurst
    if model.noise.kind == DIAGONAL:
        rows = [
            sample_fgn(h, n, 0, rng=substream(seed, _FGN_STREAM, k))
            for k in range(model.n_modes)
        ]
        return np.vstack(rows)
    shared = sample_fgn(h, n, 0, rng=substream(seed, _FGN_STREAM, 0))
    return np.broadcast_to(shared, (model.n_modes, n))


def integrate_path(
    model: ModelConfig,
    grid: TrajectoryGrid,
    init,
    seed: int,
    store_modes: bool = True,
    observe_every: int = 1,
) -> Trajectory:
    """Exponential-Euler path started from ``init``.

    ``init`` is one of ``"zero"``, ``"burn_in"``, ``"stationary"`` or an array
    of initial mode coordinates.  ``"burn_in"`` simulates ``grid.burn_in_steps``
    extra steps (the default amount if the grid carries none) and discards
    them.  ``"stationary"`` draws the initial state from the stationary
    marginal, independently of the subsequent noise; for H != 1/2 this is only
    marginally (not jointly) stationary -- use
    :func:`sample_stationary_sequence` where that matters.

    ``observe_every`` subsamples the simulated grid on output, so a fine
    integration step can feed coarsely observed estimators.
    """
    from scipy.signal import lfilter

    validate_hurst(model.hurst)
    observe_every = int(observe_every)
    if observe_every < 1 or grid.n_steps % observe_every:
        raise ValueError("observe_every must be >= 1 and divide n_steps")

    burn = 0
    x0 = np.zeros(model.n_modes)
    kind = init if isinstance(init, str) else "given"
    if kind == "burn_in":
        burn = grid.burn_in_steps or default_burn_in_steps(model, grid.dt)
    elif kind == "stationary":
        from .covariance import stationary_variance_mode

        rng0 = substream(seed, _FGN_STREAM, 0x1217)
        std = np.sqrt([
            stationary_variance_mode(float(a), float(p), model.hurst)
            for a, p in zip(model.rates, model.noise.loadings)
        ])
        x0 = rng0.standard_normal(model.n_modes) * std
    elif kind == "given":
        x0 = np.asarray(init, dtype=float)
        if x0.shape != (model.n_modes,):
            raise ValueError("initial state must have one coordinate per mode")
    elif kind != "zero":
        raise ValueError(f"unknown init {init!r}")

    n_total = grid.n_steps + burn
    incr = _mode_increments(model, n_total, seed) * grid.dt**model.hurst
    rho = np.exp(-model.rates * grid.dt)
    phi = model.noise.loadings

    states = np.empty((model.n_modes, n_total + 1))
    states[:, 0] = x0
    for k in range(model.n_modes):
        states[k, 1:] = lfilter(
            [1.0], [1.0, -rho[k]], phi[k] * incr[k], zi=np.array([rho[k] * x0[k]])
        )[0]

    kept = states[:, burn::observe_every]
    n_obs = grid.n_steps // observe_every
    kept = kept[:, : n_obs + 1]
    dt_out = grid.dt * observe_every
    traj = Trajectory(
        grid=TrajectoryGrid(dt_out, n_obs, burn),
        t=np.arange(n_obs + 1) * dt_out,
        sq_norms=np.sum(kept**2, axis=0),
        init_kind=kind,
        modes=kept if store_modes else None,
    )
    return traj


# --------------------------------------------------------------------------
# Exact stationary sampling.
# --------------------------------------------------------------------------

def _toeplitz_factor(autocov: np.ndarray, what: str) -> np.ndarray:
    from scipy.linalg import cholesky, toeplitz

    cov = toeplitz(autocov)
    return _dense_factor(cov, what)


def _dense_factor(cov: np.ndarray, what: str) -> np.ndarray:
    from scipy.linalg import cholesky

    trace = float(np.trace(cov))
    jitter = 0.0
    while True:
        try:
            return cholesky(cov + jitter * np.eye(len(cov)), lower=True)
        except np.linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-16 * trace)
            if jitter * len(cov) > 1e-10 * trace:
                raise np.linalg.LinAlgError(
                    f"stationary covariance of {what} is not positive definite "
                    "beyond jitter tolerance; autocovariance quadrature may be "
                    "inaccurate for this model"
                )


class StationaryModeSampler:
    """Exact stationary draws of single-mode sequences for diagonal models.

    Factors each mode's Toeplitz covariance once (circulant embedding when the
    embedding is nonnegative, dense Cholesky otherwise) and then produces
    batches of replications with plain matrix products / FFTs.
    """

    def __init__(self, model: ModelConfig, n: int, dt: float):
        if model.noise.kind != DIAGONAL:
            raise ValueError("StationaryModeSampler requires diagonal noise")
        self.model = model
        self.n = int(n)
        self.dt = float(dt)
        m = 1 << max(self.n - 1, 1).bit_length()
        self._lag_table = mode_lag_table(model, dt, m + 1)
        self._factors: dict[int, tuple[str, np.ndarray]] = {}

    def factor(self, k: int) -> tuple[str, np.ndarray]:
        """Factor mode ``k`` (idempotent); returns (method, factor)."""
        if k not in self._factors:
            r = self._lag_table[k]
            eigs = circulant_embedding_eigs(r)
            if eigs.min() >= -TOL_EIG * eigs.max():
                self._factors[k] = ("circulant", np.maximum(eigs, 0.0))
            else:
                self._factors[k] = (
                    "cholesky",
                    _toeplitz_factor(r[: self.n], f"mode {k} of {self.model.operator.basis_id}"),
                )
        return self._factors[k]

    def draw(self, k: int, rng: np.random.Generator, n_reps: int) -> np.ndarray:
        """Sample ``n_reps`` independent stationary sequences of mode ``k``;
        returns shape (n, n_reps)."""
        method, factor = self.factor(k)
        if method == "cholesky":
            return factor @ rng.standard_normal((self.n, n_reps))
        eigs = factor
        m = len(eigs) - 1
        length = 2 * m
        g = rng.standard_normal((2, n_reps, m + 1))
        amp = np.sqrt(eigs * length)
        spec = amp * (g[0] + 1j * g[1]) / np.sqrt(2.0)
        spec[:, 0] = amp[0] * g[0, :, 0]
        spec[:, m] = amp[m] * g[0, :, m]
        x = np.fft.irfft(spec, n=length, axis=1)
        return x[:, : self.n].T


def sample_stationary_sequence(
    model: ModelConfig,
    n: int,
    dt: float,
    seed: int,
    dense_guard: int = DENSE_GUARD,
) -> Trajectory:
    """Exact draw of the stationary solution at ``t = dt, 2 dt, ..., n dt``.

    Diagonal models factor per mode; rank-one models factor the full stacked
    ``nN x nN`` covariance (guarded by ``dense_guard``).
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if model.noise.kind == DIAGONAL:
        sampler = StationaryModeSampler(model, n, dt)
        modes = np.empty((model.n_modes, n))
        for k in range(model.n_modes):
            modes[k] = sampler.draw(k, substream(seed, _STATIONARY_STREAM, k), 1)[:, 0]
    else:
        if n * model.n_modes > dense_guard:
            raise ValueError(
                f"stacked dimension n*N = {n * model.n_modes} exceeds the dense "
                f"factorization guard {dense_guard}; reduce n or raise the guard"
            )
        from .covariance import block_covariance

        cov = block_covariance(model, n, dt)
        lower = _dense_factor(
            cov, f"rank-one stationary block of {model.operator.basis_id}"
        )
        z = lower @ substream(seed, _STATIONARY_STREAM, 0).standard_normal(n * model.n_modes)
        modes = z.reshape(model.n_modes, n)
    return Trajectory(
        grid=TrajectoryGrid(dt, n, 0),
        t=dt * np.arange(1, n + 1),
        sq_norms=np.sum(modes**2, axis=0),
        init_kind="stationary",
        modes=modes,
    )


def attach_projection(traj: Trajectory, w: ProjectionVector) -> Trajectory:
    """Add the series ``<X(t_i), w>``; requires stored mode coordinates."""
    if traj.modes is None:
        raise ValueError("trajectory must carry mode coordinates to project")
    if len(w.coefficients) != traj.modes.shape[0]:
        raise ValueError("projection length must match the stored modes")
    return replace(traj, projections=w.coefficients @ traj.modes)


# --------------------------------------------------------------------------
# Export formats.
# --------------------------------------------------------------------------

def trajectory_to_csv(traj: Trajectory) -> str:
    """Columnar CSV ``t, sq_norm[, projection]`` with full-precision floats."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if traj.projections is not None:
        writer.writerow(["t", "sq_norm", "projection"])
        for t, s, p in zip(traj.t, traj.sq_norms, traj.projections):
            writer.writerow([repr(float(t)), repr(float(s)), repr(float(p))])
    else:
        writer.writerow(["t", "sq_norm"])
        for t, s in zip(traj.t, traj.sq_norms):
            writer.writerow([repr(float(t)), repr(float(s))])
    return buf.getvalue()


def trajectory_from_csv(text: str) -> Trajectory:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header[:2]] != ["t", "sq_norm"]:
        raise ValueError("trajectory CSV must start with header 't,sq_norm[,projection]'")
    has_proj = len(header) >= 3 and header[2].strip() == "projection"
    ts, sq, proj = [], [], []
    for row in reader:
        if not row:
            continue
        ts.append(float(row[0]))
        sq.append(float(row[1]))
        if has_proj:
            proj.append(float(row[2]))
    if len(ts) < 2:
        raise ValueError("trajectory CSV needs at least two rows")
    t = np.asarray(ts)
    dts = np.diff(t)
    if np.any(dts <= 0) or not np.allclose(dts, dts[0], rtol=1e-9, atol=0):
        raise ValueError("trajectory time grid must be uniform and increasing")
    return Trajectory(
        grid=TrajectoryGrid(float(dts[0]), len(t) - 1, 0),
        t=t,
        sq_norms=np.asarray(sq),
        init_kind="given",
        projections=np.asarray(proj) if has_proj else None,
    )


def trajectory_to_npz(traj: Trajectory, path) -> None:
    arrays = {
        "format_version": np.array(NPZ_FORMAT_VERSION),
        "t": traj.t,
        "sq_norms": traj.sq_norms,
        "dt": np.array(traj.grid.dt),
        "burn_in_steps": np.array(traj.grid.burn_in_steps),
        "init_kind": np.array(traj.init_kind),
    }
    if traj.projections is not None:
        arrays["projections"] = traj.projections
    if traj.modes is not None:
        arrays["modes"] = traj.modes
    np.savez_compressed(path, **arrays)


def trajectory_from_npz(path) -> Trajectory:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != NPZ_FORMAT_VERSION:
            raise ValueError(f"unsupported trajectory cache version {version}")
        t = data["t"]
        return Trajectory(
            grid=TrajectoryGrid(float(data["dt"]), len(t) - 1, int(data["burn_in_steps"])),
            t=t,
            sq_norms=data["sq_norms"],
            init_kind=str(data["init_kind"]),
            projections=data["projections"] if "projections" in data else None,
            modes=data["modes"] if "modes" in data else None,
        )
