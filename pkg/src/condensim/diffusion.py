"""Euler-Maruyama integration of the absorbed simplex diffusion.

Between absorptions the process solves

    dX = b * sum_{j in B} (m_j / X_j) v^B_j dt + noise,

where the noise columns reproduce twice the symmetrized Dirichlet
matrix of the trace chain on the active set B.  When a coordinate
reaches the absorption threshold (or is driven negative within one
step) it is glued to 0 forever, the remaining coordinates are
renormalized, and the integration continues with the trace chain of
the surviving set, recursively, until a single vertex remains.

The ensemble engine steps all paths in lockstep with numpy; every path
consumes a fixed number of gaussians per step from its own
counter-based stream, so trajectories are reproducible per
(config, seed, path index) regardless of batching.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .chain import ChainSpec, TraceChainSpec, trace_rates
from .errors import (
    NonSimplexStartError,
    StepBlowupError,
    ZeroCoordinateError,
)
from .paths import PathSample
from .rng import PathStreams, derive_seed

# Hyperplane drift tolerance: increments sum to zero analytically, so
# any larger deviation signals a step-size blowup.
SUM_TOL = 1e-9
# Maximum relative coordinate move per step allowed by the clamped rule.
MAX_RELATIVE_MOVE = 0.25


@dataclass(frozen=True)
class DiffusionConfig:
    """Parameters of the absorbed-diffusion integrator.

    ``horizon=None`` runs every path to its trapped vertex (capped at
    ``t_max``).  ``noise_scale=0`` turns the engine into a drift-only
    ODE integrator for deterministic cross-checks.  ``cond_delta``
    optionally records the first time the maximal coordinate reaches
    1 - cond_delta, the same functional reported by the particle
    engine.
    """

    chain: ChainSpec
    b: float
    seed: int
    dt_base: float = 1e-3
    eps_abs: float = 1e-4
    noise_scale: float = 1.0
    dt_rule: str = "clamped"  # "clamped" | "quadratic"
    horizon: float | None = None
    t_max: float = 100.0
    sample_times: tuple[float, ...] = ()
    cond_delta: float | None = None
    allow_small_b: bool = False

    def __post_init__(self):
        if self.dt_base <= 0:
            raise ValueError("dt_base must be positive")
        if not 0 < self.eps_abs < 0.1:
            raise ValueError("eps_abs must be a small positive threshold")
        if not 0.0 <= self.noise_scale <= 1.0:
            raise ValueError("noise_scale must be in [0, 1]")
        if self.dt_rule not in ("clamped", "quadratic"):
            raise ValueError(f"unknown dt rule {self.dt_rule!r}")
        st = np.asarray(self.sample_times, dtype=float)
        if st.size and np.any(np.diff(st) <= 0):
            raise ValueError("sample_times must be strictly increasing")
        object.__setattr__(self, "sample_times", tuple(st.tolist()))
        if self.b <= 1.0:
            if not self.allow_small_b:
                raise ValueError(
                    "b <= 1 gives a diffusion that is not expected to be "
                    "absorbed; pass allow_small_b=True to experiment anyway"
                )
            warnings.warn("running the diffusion with b <= 1", stacklevel=2)

    @property
    def eps_guard(self) -> float:
        return 10.0 * self.eps_abs

    def digest(self) -> str:
        """Stable hash of the physics and integrator parameters."""
        import hashlib

        payload = (
            self.chain.fingerprint(), self.b, self.seed, self.dt_base,
            self.eps_abs, self.noise_scale, self.dt_rule, self.horizon,
            self.t_max, self.sample_times, self.cond_delta,
        )
        return hashlib.sha256(repr(payload).encode()).hexdigest()[:16]


@dataclass
class DiffusionState:
    """Current face, position and trace data of one path."""

    B: tuple[int, ...]
    x: np.ndarray  # full-length vector, exact zeros off B
    t: float
    trace: TraceChainSpec | None  # None when the path is trapped

    @property
    def trapped(self) -> bool:
        return len(self.B) == 1


def make_state(chain: ChainSpec, x, t: float = 0.0) -> DiffusionState:
    """State with active set read off the strictly positive coordinates."""
    x = np.asarray(x, dtype=float).copy()
    if x.shape != (chain.size,) or np.any(x < 0):
        raise NonSimplexStartError("point must be a nonnegative vector on the simplex")
    if abs(x.sum() - 1.0) > SUM_TOL:
        raise NonSimplexStartError(f"coordinates sum to {x.sum()}, not 1")
    x /= x.sum()
    b_set = tuple(int(j) for j in np.nonzero(x > 0)[0])
    trace = trace_rates(chain, b_set) if len(b_set) >= 2 else None
    return DiffusionState(B=b_set, x=x, t=t, trace=trace)


def drift(state: DiffusionState, b: float) -> np.ndarray:
    """Restricted drift b * sum_j (m_j / x_j) v^B_j, a length-|B| vector.

    Components sum to zero because every v^B_j does.
    """
    if state.trace is None:
        raise ZeroCoordinateError("drift undefined on a trapped path")
    xb = state.x[list(state.B)]
    if np.any(xb <= 0):
        raise ZeroCoordinateError(
            "zero coordinate inside the active set: absorption was missed"
        )
    w = state.trace.m_B / xb
    return b * (w @ state.trace.drift_vectors)


def noise_basis(trace: TraceChainSpec) -> np.ndarray:
    """Noise columns sqrt(m_j r^B(j,k)) (e_k - e_j), one per ordered pair.

    Shape (|B|*(|B|-1), |B|); the columns c satisfy
    sum_c c c^T = 2 * a_s^B, so Euler-Maruyama driven by one standard
    gaussian per column realizes the Tr[a_s Hess] diffusion term.
    """
    nb = trace.size
    cols = []
    for j in range(nb):
        for k in range(nb):
            if j == k:
                continue
            col = np.zeros(nb)
            amp = np.sqrt(trace.m_B[j] * trace.rates[j, k])
            col[k] = amp
            col[j] = -amp
            cols.append(col)
    return np.asarray(cols)


def em_step(
    state: DiffusionState,
    dt: float,
    draws: np.ndarray,
    b: float,
    noise_scale: float = 1.0,
) -> DiffusionState:
    """One explicit Euler-Maruyama step; absorption is NOT applied here.

    ``draws`` holds one standard gaussian per ordered pair of active
    sites, shape (|B|, |B|) with the diagonal ignored.  The candidate
    may carry negative coordinates; absorption detection owns their
    handling.  Raises StepBlowupError when the hyperplane constraint
    drifts beyond tolerance, which signals dt too large near the
    singular drift.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    trace = state.trace
    if trace is None:
        return DiffusionState(state.B, state.x.copy(), state.t + dt, None)
    nb = trace.size
    draws = np.asarray(draws, dtype=float)
    if draws.shape != (nb, nb):
        raise ValueError(f"need draws of shape ({nb}, {nb})")
    xb = state.x[list(state.B)]
    incr = drift(state, b) * dt
    if noise_scale > 0:
        c = np.sqrt(trace.m_B[:, None] * trace.rates)
        w = c * draws * noise_scale
        incr = incr + np.sqrt(dt) * (w.sum(axis=0) - w.sum(axis=1))
    xb_new = xb + incr
    total = xb_new.sum()
    if abs(total - 1.0) > SUM_TOL:
        raise StepBlowupError(
            f"hyperplane violated by {total - 1.0:.3e} at t={state.t}: dt too large"
        )
    x_new = np.zeros_like(state.x)
    x_new[list(state.B)] = xb_new / total
    return DiffusionState(state.B, x_new, state.t + dt, trace)


@dataclass(frozen=True)
class AbsorptionTrace:
    """Realized absorption record of one path.

    ``events[n]`` is (sigma_{n+1}, surviving set after the event); the
    recorded sets decrease strictly.  ``trapped_vertex`` is None for
    paths that did not reach a vertex before their time cap.
    """

    events: tuple[tuple[float, tuple[int, ...]], ...]
    trapped_vertex: int | None
    trapped_time: float | None

    @property
    def sigma1(self) -> float | None:
        return self.events[0][0] if self.events else None


class FaceTable:
    """Dense per-face drift and noise data for the ensemble engine.

    Index by bitmask of the active set (bit j <-> site j).  Faces with
    fewer than two sites stay zero; a trapped path never gathers them.
    """

    def __init__(self, chain: ChainSpec):
        if chain.size > 12:
            raise ValueError("ensemble engine precomputes 2^L faces; L > 12 unsupported")
        size = chain.size
        n_masks = 1 << size
        self.drift_v = np.zeros((n_masks, size, size))
        self.noise_c = np.zeros((n_masks, size, size))
        self.noise_diag = np.zeros((n_masks, size))
        self.active = np.zeros((n_masks, size), dtype=bool)
        self.popcount = np.zeros(n_masks, dtype=np.int64)
        for mask in range(1, n_masks):
            members = [j for j in range(size) if mask >> j & 1]
            self.active[mask, members] = True
            self.popcount[mask] = len(members)
            if len(members) < 2:
                continue
            trace = trace_rates(chain, members)
            ix = np.ix_(members, members)
            self.drift_v[mask][ix] = trace.drift_vectors
            self.noise_c[mask][ix] = np.sqrt(trace.m_B[:, None] * trace.rates)
            self.noise_diag[mask, members] = 2.0 * np.diag(trace.dirichlet)


@dataclass
class DiffusionEnsemble:
    """Results of a batch of absorbed-diffusion paths."""

    config: DiffusionConfig
    x0: np.ndarray
    n_paths: int
    times: np.ndarray
    samples: np.ndarray | None  # (n_paths, T, L)
    sample_masks: np.ndarray | None  # (n_paths, T) active-set bitmasks
    sigma1: np.ndarray  # first absorption time per path (nan if none)
    trapped_vertex: np.ndarray  # site index, -1 if not trapped
    trapped_time: np.ndarray  # nan if not trapped
    t_cond: np.ndarray  # first time max coordinate >= 1 - cond_delta
    events: list  # per path: list of (time, surviving bitmask)

    def trace(self, i: int) -> AbsorptionTrace:
        evs = tuple(
            (t, tuple(j for j in range(self.config.chain.size) if mask >> j & 1))
            for t, mask in self.events[i]
        )
        vertex = int(self.trapped_vertex[i]) if self.trapped_vertex[i] >= 0 else None
        time = float(self.trapped_time[i]) if vertex is not None else None
        return AbsorptionTrace(events=evs, trapped_vertex=vertex, trapped_time=time)

    def path(self, i: int) -> PathSample:
        size = self.config.chain.size
        pts = self.samples[i] if self.samples is not None else np.empty((0, size))
        return PathSample(
            times=self.times.copy(),
            points=pts.copy(),
            meta={
                "engine": "diffusion",
                "seed": self.config.seed,
                "path": i,
                "config": self.config.digest(),
            },
        )


def simulate_diffusion_ensemble(
    config: DiffusionConfig, x0, n_paths: int
) -> DiffusionEnsemble:
    """Integrate ``n_paths`` paths of the absorbed diffusion from x0."""
    chain = config.chain
    size = chain.size
    state0 = make_state(chain, x0)
    x0 = state0.x
    faces = FaceTable(chain)
    mask0 = 0
    for j in state0.B:
        mask0 |= 1 << j

    sample_times = np.asarray(config.sample_times, dtype=float)
    n_samp = sample_times.size
    run_to_trap = config.horizon is None
    end_time = config.t_max if run_to_trap else config.horizon
    cond_level = None if config.cond_delta is None else 1.0 - config.cond_delta

    sigma1 = np.full(n_paths, np.nan)
    trapped_vertex = np.full(n_paths, -1, dtype=np.int64)
    trapped_time = np.full(n_paths, np.nan)
    t_cond = np.full(n_paths, np.nan)
    events: list[list] = [[] for _ in range(n_paths)]
    samples = np.full((n_paths, n_samp, size), np.nan) if n_samp else None
    sample_masks = np.zeros((n_paths, n_samp), dtype=np.int64) if n_samp else None

    ids = np.arange(n_paths)
    x = np.tile(x0, (n_paths, 1))
    t = np.zeros(n_paths)
    masks = np.full(n_paths, mask0, dtype=np.int64)
    next_samp = np.zeros(n_paths, dtype=np.int64)

    if cond_level is not None and x0.max() >= cond_level:
        t_cond[:] = 0.0

    def flush(row: int, value: np.ndarray, mask: int) -> None:
        while next_samp[row] < n_samp and sample_times[next_samp[row]] <= end_time:
            samples[ids[row], next_samp[row]] = value
            sample_masks[ids[row], next_samp[row]] = mask
            next_samp[row] += 1

    if len(state0.B) == 1:
        # Started at a vertex: trapped forever at time zero.
        vertex = state0.B[0]
        trapped_vertex[:] = vertex
        trapped_time[:] = 0.0
        t_cond[:] = 0.0
        if n_samp:
            for row in range(n_paths):
                flush(row, x0, mask0)
        return DiffusionEnsemble(
            config, x0, n_paths, sample_times, samples, sample_masks,
            sigma1, trapped_vertex, trapped_time, t_cond, events,
        )

    if n_samp and sample_times[0] == 0.0:
        samples[:, 0] = x0
        sample_masks[:, 0] = mask0
        next_samp[:] = 1

    streams = PathStreams(
        derive_seed(config.seed, "diffusion"),
        n_paths,
        values_per_step=size * size,
        block=64,
        gaussian=True,
    )
    eta = MAX_RELATIVE_MOVE
    eps_guard = config.eps_guard
    ns2 = config.noise_scale**2

    while ids.size:
        m_act = ids.size
        active = faces.active[masks]  # (M, L)
        if np.any(x[active] <= 0):
            raise ZeroCoordinateError("zero coordinate inside an active set")
        vv = faces.drift_v[masks]  # (M, L, L)
        w = np.where(active, chain.m / np.where(active, x, 1.0), 0.0)
        drift_vec = config.b * np.einsum("pj,pjk->pk", w, vv)

        xa = np.where(active, x, np.inf)
        xmin = xa.min(axis=1)
        dt = config.dt_base * np.minimum(1.0, (xmin / eps_guard) ** 2)
        if config.dt_rule == "clamped":
            # Keep both |drift| dt and the noise std within a fraction
            # of every active coordinate: the quadratic rule alone does
            # not bound the relative move at desk-scale dt_base.
            with np.errstate(divide="ignore", invalid="ignore"):
                cap_d = np.where(
                    np.abs(drift_vec) > 0, eta * xa / np.abs(drift_vec), np.inf
                ).min(axis=1)
                if ns2 > 0:
                    diag = faces.noise_diag[masks]
                    cap_n = np.where(
                        diag > 0, (eta * xa) ** 2 / (ns2 * diag), np.inf
                    ).min(axis=1)
                else:
                    cap_n = np.inf
            dt = np.minimum(dt, np.minimum(cap_d, cap_n))

        xb_new = x + drift_vec * dt[:, None]
        if config.noise_scale > 0:
            xi = streams.take(ids).reshape(m_act, size, size)
            wn = faces.noise_c[masks] * xi * config.noise_scale
            incr = wn.sum(axis=1) - wn.sum(axis=2)
            xb_new = xb_new + np.sqrt(dt)[:, None] * incr

        total = xb_new.sum(axis=1)
        bad = np.abs(total - 1.0) > SUM_TOL
        if bad.any():
            row = int(np.nonzero(bad)[0][0])
            raise StepBlowupError(
                f"hyperplane violated by {total[row] - 1.0:.3e} on path "
                f"{ids[row]} at t={t[row]:.6g}, x={x[row]}"
            )
        x_new = xb_new / total[:, None]
        t_new = t + dt

        # Absorption: coordinates at or below the threshold (including
        # negatives) are glued to zero; simultaneous hits allowed.
        hit = (x_new <= config.eps_abs) & active
        hit_rows = np.nonzero(hit.any(axis=1))[0]
        for row in hit_rows:
            keep = active[row] & ~hit[row]
            new_mask = int(sum(1 << j for j in np.nonzero(keep)[0]))
            x_new[row, ~keep] = 0.0
            rem = x_new[row, keep].sum()
            x_new[row, keep] /= rem
            pid = int(ids[row])
            events[pid].append((float(t_new[row]), new_mask))
            if np.isnan(sigma1[pid]):
                sigma1[pid] = t_new[row]
            masks[row] = new_mask

        if cond_level is not None:
            crossed = (x_new.max(axis=1) >= cond_level) & np.isnan(t_cond[ids])
            if crossed.any():
                t_cond[ids[crossed]] = t_new[crossed]

        # Sample emission: post-step state stands for times in (t, t_new],
        # never past the configured horizon.
        if n_samp:
            while True:
                pending = next_samp < n_samp
                idx = np.minimum(next_samp, n_samp - 1)
                pending &= sample_times[idx] <= np.minimum(t_new, end_time)
                if not pending.any():
                    break
                pr = np.nonzero(pending)[0]
                samples[ids[pr], next_samp[pr]] = x_new[pr]
                sample_masks[ids[pr], next_samp[pr]] = masks[pr]
                next_samp[pr] += 1

        trapped = faces.popcount[masks] == 1
        if trapped.any():
            for row in np.nonzero(trapped)[0]:
                pid = int(ids[row])
                trapped_vertex[pid] = int(masks[row]).bit_length() - 1
                trapped_time[pid] = t_new[row]
                if np.isnan(t_cond[pid]) and cond_level is not None:
                    t_cond[pid] = t_new[row]
                if n_samp:
                    # Trapped forever: the vertex stands for the rest of
                    # the grid.
                    flush(row, x_new[row], int(masks[row]))

        retire = trapped | (t_new >= end_time)
        x = x_new
        t = t_new
        if retire.any():
            keep = ~retire
            ids = ids[keep]
            x = x[keep]
            t = t[keep]
            masks = masks[keep]
            next_samp = next_samp[keep]

    return DiffusionEnsemble(
        config, x0, n_paths, sample_times, samples, sample_masks,
        sigma1, trapped_vertex, trapped_time, t_cond, events,
    )


def simulate_diffusion_path(
    config: DiffusionConfig, x0
) -> tuple[PathSample, AbsorptionTrace]:
    """Single-path convenience wrapper around the ensemble engine."""
    ens = simulate_diffusion_ensemble(config, x0, n_paths=1)
    return ens.path(0), ens.trace(0)


def drift_field(chain: ChainSpec, b: float, x: np.ndarray) -> np.ndarray:
    """Full-chain singular drift b sum_j 1{x_j > 0} (m_j / x_j) v_j.

    Vectorized over points of shape (..., L).  Intended for states
    whose coordinates are either exactly zero or macroscopic.
    """
    x = np.asarray(x, dtype=float)
    w = np.where(x > 0, chain.m / np.where(x > 0, x, 1.0), 0.0)
    return b * (w @ chain.generator)


def generator_apply(chain: ChainSpec, b: float, h, x: np.ndarray) -> np.ndarray:
    """Limit generator b(x) . grad H + Tr[a_s Hess H] at points x.

    ``h`` must expose ``gradient`` and ``hessian`` (see
    :class:`condensim.bumps.BumpFunction`).
    """
    from .chain import dirichlet_matrix

    x = np.asarray(x, dtype=float)
    grad = h.gradient(x)
    hess = h.hessian(x)
    a_s = dirichlet_matrix(chain)
    first = (drift_field(chain, b, x) * grad).sum(axis=-1)
    second = np.einsum("jk,...jk->...", a_s, hess)
    return first + second
