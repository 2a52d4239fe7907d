"""Brownian particle simulator for the spheroidal receiver link.

Independent random walkers are released at the transmitter and stepped
with Gaussian displacements (variance 2*D_local*dt per Cartesian axis,
D_local chosen by the region the step starts in).  A step that crosses
the sphere surface is split at the crossing point and the portion inside
(entering) is shrunk by sqrt(D_eff/D); symmetrically, an exiting portion
is stretched by sqrt(D/D_eff).  A sub-segment that re-crosses within the
same step is not re-processed, which is why configs must keep the step
length sqrt(2*D*dt) below R/10.  Inside the sphere each walker is
absorbed with probability k_f*dt per step, tested after the move at the
end-of-step position.

Concentration probes count alive walkers in small transparent spheres
each sampling step; boundary probes straddling the surface split their
count by hemisphere to estimate the inner and outer surface values.

Determinism: walkers are partitioned into fixed blocks of 65536 and each
(seed, block, step) triple keys its own counter-based Philox stream, so
results are a pure function of (config, seed) regardless of how many
worker threads execute the blocks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .model import MediumModel, SphericalCoord, SpheroidGeometry
from .signal import TimeSeries

__all__ = [
    "BLOCK_SIZE",
    "ProbeSpec",
    "SimConfig",
    "ParticleEnsemble",
    "SimResult",
    "step_particles",
    "handle_boundary_crossing",
    "apply_absorption",
    "estimate_concentration",
    "run_simulation",
]

BLOCK_SIZE = 65536  # fixed walker partition; part of the determinism contract
WORKERS_ENV = "SPHEROMC_WORKERS"


@dataclass(frozen=True)
class ProbeSpec:
    """Transparent counting sphere; ``kind='boundary'`` splits by hemisphere."""

    name: str
    center: SphericalCoord
    radius_m: float
    kind: str = "sphere"

    def __post_init__(self):
        if self.kind not in ("sphere", "boundary"):
            raise ValueError(f"probe kind must be 'sphere' or 'boundary', got {self.kind!r}")


@dataclass(frozen=True)
class SimConfig:
    dt: float
    n_particles: int
    seed: int
    t_end: float
    geom: SpheroidGeometry
    medium: MediumModel
    probes: tuple[ProbeSpec, ...] = ()
    record_absorption: bool = True
    sample_stride: int = 1
    absorption_bin_s: float = 1.0
    workers: int | None = None

    def __post_init__(self):
        problems = []
        if self.dt <= 0:
            problems.append(f"dt: must be positive, got {self.dt}")
        if self.n_particles < 0:
            problems.append(f"n_particles: must be non-negative, got {self.n_particles}")
        if self.t_end <= 0:
            problems.append(f"t_end: must be positive, got {self.t_end}")
        if self.dt > 0 and self.medium.k_f * self.dt > 0.1:
            problems.append(
                f"dt: k_f*dt = {self.medium.k_f * self.dt:.3g} exceeds 0.1, the "
                "first-order absorption probability approximation breaks down"
            )
        if self.dt > 0 and math.sqrt(2 * self.medium.d_free * self.dt) > self.geom.radius_m / 10:
            problems.append(
                f"dt: step length sqrt(2*D*dt) = "
                f"{math.sqrt(2 * self.medium.d_free * self.dt):.3g} m exceeds a tenth "
                f"of the spheroid radius; multi-crossing steps would not be rare"
            )
        if self.sample_stride < 1:
            problems.append(f"sample_stride: must be >= 1, got {self.sample_stride}")
        if self.absorption_bin_s <= 0:
            problems.append(f"absorption_bin_s: must be positive, got {self.absorption_bin_s}")
        names = [p.name for p in self.probes]
        if len(set(names)) != len(names):
            problems.append("probes: names must be unique")
        for p in self.probes:
            if not 0 < p.radius_m <= self.geom.radius_m / 5:
                problems.append(
                    f"probes[{p.name}].radius_m: must be in (0, R/5] = "
                    f"(0, {self.geom.radius_m / 5:.3g}], got {p.radius_m}"
                )
        if problems:
            raise ValueError("invalid simulation config:\n  " + "\n  ".join(problems))

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


@dataclass
class ParticleEnsemble:
    """Walker state; absorbed walkers (alive = False) never move again."""

    positions: np.ndarray        # (n, 3) Cartesian, meters
    alive: np.ndarray            # (n,) bool
    absorption_time: np.ndarray  # (n,) seconds, NaN while alive
    seed: int
    block_size: int = BLOCK_SIZE

    @property
    def n_particles(self) -> int:
        return len(self.alive)

    @property
    def n_absorbed(self) -> int:
        return int(np.count_nonzero(~self.alive))


@dataclass
class SimResult:
    probes: dict[str, TimeSeries]
    absorption_rate: TimeSeries | None
    cumulative_absorbed: TimeSeries | None
    ensemble: ParticleEnsemble


def _stream(seed: int, block: int, step: int) -> Generator:
    key = SeedSequence(entropy=(int(seed), int(block), int(step))).generate_state(2, np.uint64)
    return Generator(Philox(key=key))


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------

def step_particles(positions: np.ndarray, dt: float, local_d, rng: Generator) -> np.ndarray:
    """Displace each walker by independent Gaussians, variance 2*local_d*dt per axis.

    ``local_d`` is a scalar or per-walker array of diffusion coefficients.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    sigma = np.sqrt(2.0 * np.asarray(local_d, dtype=float) * dt)
    disp = rng.standard_normal(positions.shape)
    if sigma.ndim:
        return positions + disp * sigma[:, None]
    return positions + disp * sigma


def handle_boundary_crossing(starts: np.ndarray, ends: np.ndarray,
                             geom: SpheroidGeometry, medium: MediumModel) -> np.ndarray:
    """Split boundary-crossing segments and rescale the far-side portion.

    Rows whose start/end radii straddle r = R are split at the surface
    crossing; the portion beyond the surface is scaled by sqrt(D_eff/D)
    when entering and sqrt(D/D_eff) when exiting.  Non-crossing rows pass
    through unchanged (including rare out-to-out chords, consistent with
    the single-scaling approximation).
    """
    if medium.d_eff == medium.d_free:
        return ends
    rs2 = geom.radius_m**2
    r0sq = np.einsum("ij,ij->i", starts, starts)
    r1sq = np.einsum("ij,ij->i", ends, ends)
    crossed = (r0sq < rs2) != (r1sq < rs2)
    if not np.any(crossed):
        return ends
    out = ends.copy()
    p = starts[crossed]
    q = ends[crossed]
    d = q - p
    a = np.einsum("ij,ij->i", d, d)
    b = 2.0 * np.einsum("ij,ij->i", p, d)
    c = r0sq[crossed] - rs2
    disc = np.maximum(b * b - 4.0 * a * c, 0.0)
    sq = np.sqrt(disc)
    entering = c > 0  # started outside
    t = np.where(entering, -b - sq, -b + sq) / (2.0 * a)
    t = np.clip(t, 0.0, 1.0)
    xc = p + t[:, None] * d
    s_in = math.sqrt(medium.d_eff / medium.d_free)
    scale = np.where(entering, s_in, 1.0 / s_in)
    out[crossed] = xc + scale[:, None] * (q - xc)
    return out


def apply_absorption(positions: np.ndarray, alive: np.ndarray,
                     absorption_time: np.ndarray, step: int, dt: float,
                     medium: MediumModel, geom: SpheroidGeometry,
                     rng: Generator) -> int:
    """Absorb alive walkers strictly inside the sphere with probability k_f*dt.

    Absorption times are recorded at the step midpoint.  Arrays are
    updated in place; returns the number of walkers absorbed this step.
    """
    if medium.k_f == 0.0:
        return 0
    idx = np.flatnonzero(alive)
    if idx.size == 0:
        return 0
    p = positions[idx]
    inside = np.einsum("ij,ij->i", p, p) < geom.radius_m**2
    u = rng.random(idx.size)
    hit = inside & (u < medium.k_f * dt)
    if not np.any(hit):
        return 0
    taken = idx[hit]
    alive[taken] = False
    absorption_time[taken] = (step + 0.5) * dt
    return int(taken.size)


def estimate_concentration(ensemble: ParticleEnsemble, probe_center: SphericalCoord,
                           probe_radius: float, n_released: int) -> float:
    """Alive-walker count inside the probe over probe volume, per released walker."""
    if probe_radius <= 0:
        raise ValueError("probe_radius must be positive")
    center = np.array(probe_center.to_cartesian())
    p = ensemble.positions[ensemble.alive]
    d2 = np.einsum("ij,ij->i", p - center, p - center)
    count = int(np.count_nonzero(d2 < probe_radius**2))
    volume = 4.0 / 3.0 * math.pi * probe_radius**3
    return count / (volume * max(n_released, 1))


# ---------------------------------------------------------------------------
# full simulation
# ---------------------------------------------------------------------------

def _probe_tables(probes: tuple[ProbeSpec, ...], rs: float):
    """Flatten probes into (name, center, radius^2, hemisphere) count channels."""
    channels = []
    for p in probes:
        center = np.array(p.center.to_cartesian())
        if p.kind == "sphere":
            channels.append((p.name, center, p.radius_m**2, None))
        else:
            channels.append((f"{p.name}_in", center, p.radius_m**2, "in"))
            channels.append((f"{p.name}_out", center, p.radius_m**2, "out"))
    return channels


def _probe_groups(channels):
    """Group count channels by probe center so distances are computed once."""
    groups = []
    for ci, (_, center, rad2, hemi) in enumerate(channels):
        for g in groups:
            if np.array_equal(g[0], center) and g[1] == rad2:
                g[2].append((ci, hemi))
                break
        else:
            groups.append((center, rad2, [(ci, hemi)]))
    return groups


def _run_block(cfg: SimConfig, block: int, lo: int, hi: int, channels) -> tuple:
    geom, medium = cfg.geom, cfg.medium
    rs2 = geom.radius_m**2
    dt = cfg.dt
    n = hi - lo
    n_steps = cfg.n_steps
    stride = cfg.sample_stride
    n_rows = n_steps // stride
    two_media = medium.d_eff != medium.d_free
    k_f = medium.k_f
    p_abs = k_f * dt
    sig_out = math.sqrt(2.0 * medium.d_free * dt)
    sig_in = math.sqrt(2.0 * medium.d_eff * dt)
    s_enter = math.sqrt(medium.d_eff / medium.d_free)
    groups = _probe_groups(channels)

    # dense active-walker arrays; absorbed rows are written back to the
    # full-block arrays at removal time
    all_pos = np.empty((n, 3))
    all_pos[:] = geom.tx_position.to_cartesian()
    alive = np.ones(n, dtype=bool)
    t_abs = np.full(n, np.nan)
    counts = np.zeros((n_rows, len(channels)), dtype=np.int64)

    active = all_pos.copy()
    ids = np.arange(n)
    r2 = np.full(n, cfg.geom.tx_position.r ** 2)

    for step in range(n_steps):
        m = len(ids)
        if m:
            rng = _stream(cfg.seed, block, step)
            disp = rng.standard_normal((m, 3))
            if two_media:
                inside0 = r2 < rs2
                sigma = np.where(inside0, sig_in, sig_out)
                disp *= sigma[:, None]
                disp += active
                q = disp
                new_r2 = np.einsum("ij,ij->i", q, q)
                crossed = (new_r2 < rs2) != inside0
                if np.any(crossed):
                    p_c = active[crossed]
                    q_c = q[crossed]
                    d = q_c - p_c
                    a = np.einsum("ij,ij->i", d, d)
                    b = 2.0 * np.einsum("ij,ij->i", p_c, d)
                    c = r2[crossed] - rs2
                    sq = np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))
                    entering = c > 0
                    t = np.clip(np.where(entering, -b - sq, -b + sq) / (2.0 * a),
                                0.0, 1.0)
                    xc = p_c + t[:, None] * d
                    scale = np.where(entering, s_enter, 1.0 / s_enter)
                    q_adj = xc + scale[:, None] * (q_c - xc)
                    q[crossed] = q_adj
                    new_r2[crossed] = np.einsum("ij,ij->i", q_adj, q_adj)
            else:
                disp *= sig_out
                disp += active
                q = disp
                new_r2 = np.einsum("ij,ij->i", q, q)
            active, r2 = q, new_r2
            if p_abs > 0.0:
                u = rng.random(m)
                hit = (r2 < rs2) & (u < p_abs)
                if np.any(hit):
                    taken = ids[hit]
                    alive[taken] = False
                    t_abs[taken] = (step + 0.5) * dt
                    all_pos[taken] = active[hit]
                    keep = ~hit
                    active, ids, r2 = active[keep], ids[keep], r2[keep]
        if (step + 1) % stride == 0 and channels:
            row = (step + 1) // stride - 1
            if len(ids):
                for center, rad2, members in groups:
                    if center[0] == 0.0 and center[1] == 0.0 and center[2] == 0.0:
                        d2 = r2
                    else:
                        delta = active - center
                        d2 = np.einsum("ij,ij->i", delta, delta)
                    near = d2 < rad2
                    for ci, hemi in members:
                        if hemi == "in":
                            counts[row, ci] = np.count_nonzero(near & (r2 < rs2))
                        elif hemi == "out":
                            counts[row, ci] = np.count_nonzero(near & (r2 >= rs2))
                        else:
                            counts[row, ci] = np.count_nonzero(near)
    all_pos[ids] = active
    return counts, all_pos, alive, t_abs


def run_simulation(config: SimConfig) -> SimResult:
    """Run the full walker simulation: displace, interface-adjust, absorb, count.

    All walkers start at the transmitter at t = 0.  Results are a pure
    function of (config, seed) and independent of the worker count.
    """
    geom = config.geom
    channels = _probe_tables(config.probes, geom.radius_m)
    n = config.n_particles
    blocks = [(b, lo, min(lo + BLOCK_SIZE, n))
              for b, lo in enumerate(range(0, n, BLOCK_SIZE))]

    workers = config.workers
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    workers = max(1, workers)

    if blocks:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(
                    lambda blk: _run_block(config, blk[0], blk[1], blk[2], channels),
                    blocks))
        else:
            parts = [_run_block(config, b, lo, hi, channels) for b, lo, hi in blocks]
        counts = np.sum([p[0] for p in parts], axis=0)
        positions = np.concatenate([p[1] for p in parts], axis=0)
        alive = np.concatenate([p[2] for p in parts])
        t_abs = np.concatenate([p[3] for p in parts])
    else:
        counts = np.zeros((config.n_steps // config.sample_stride, len(channels)),
                          dtype=np.int64)
        positions = np.zeros((0, 3))
        alive = np.zeros(0, dtype=bool)
        t_abs = np.zeros(0)

    ensemble = ParticleEnsemble(positions=positions, alive=alive,
                                absorption_time=t_abs, seed=config.seed)

    dt_s = config.dt * config.sample_stride
    norm = max(config.n_particles, 1)
    probes: dict[str, TimeSeries] = {}
    for ci, (name, _, rad2, hemi) in enumerate(channels):
        volume = 4.0 / 3.0 * math.pi * rad2**1.5
        if hemi is not None:
            volume *= 0.5
        probes[name] = TimeSeries(
            t0=dt_s, dt_sample=dt_s,
            values=counts[:, ci] / (volume * norm),
            unit="m^-3", provenance="pbs")

    absorption_rate = None
    cumulative = None
    if config.record_absorption:
        bin_s = config.absorption_bin_s
        n_bins = max(1, int(math.ceil(config.t_end / bin_s)))
        edges = np.arange(n_bins + 1) * bin_s
        hist, _ = np.histogram(t_abs[~alive], bins=edges)
        absorption_rate = TimeSeries(
            t0=bin_s / 2.0, dt_sample=bin_s,
            values=hist / (bin_s * norm),
            unit="s^-1", provenance="pbs")
        cumulative = TimeSeries(
            t0=bin_s, dt_sample=bin_s,
            values=np.cumsum(hist).astype(float),
            unit="count", provenance="pbs")

    return SimResult(probes=probes, absorption_rate=absorption_rate,
                     cumulative_absorbed=cumulative, ensemble=ensemble)
