"""Classical atom motion in the trap and the resulting position statistics.

Trajectories are integrated with a fourth-order symplectic scheme built by
composing velocity-Verlet steps (Suzuki's five-stage fractal), vectorized
over many atoms at once. Positions are histogrammed on a fixed grid around
the trap centre; histograms for a grid of total energies are weighted by an
energy distribution and averaged.

All energies handed to or returned from this module are measured from the
bottom of the trap, ``E = kinetic + U(r) - U(r_min)``.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special

__all__ = [
    "HarmonicPotential",
    "EnergyDistribution",
    "Trajectory",
    "HistogramGrid",
    "PositionHistogram",
    "UntrappedError",
    "suzuki_coefficients",
    "sample_initial_conditions",
    "integrate_trajectory",
    "integrate_batch",
    "position_distribution",
    "adiabatic_survival",
    "reconstruct_energy_distribution",
]


class UntrappedError(ValueError):
    """Requested total energy is at or above the trap depth."""


# ---------------------------------------------------------------- potentials

@dataclass
class HarmonicPotential:
    """Separable harmonic test potential with the trap-potential interface."""

    omegas: Sequence[float]
    mass: float
    center: Sequence[float] = (0.0, 0.0, 0.0)
    depth_value: float = math.inf

    def __call__(self, r):
        d = np.asarray(r, dtype=float) - np.asarray(self.center)
        k = self.mass * np.asarray(self.omegas) ** 2
        return 0.5 * np.sum(k * d * d, axis=-1)

    def gradient(self, r):
        d = np.asarray(r, dtype=float) - np.asarray(self.center)
        return self.mass * np.asarray(self.omegas) ** 2 * d

    def minimum(self):
        return np.asarray(self.center, dtype=float)

    def depth(self):
        return self.depth_value

    def barrier_positions(self):
        return None


def _barrier_positions(potential) -> tuple[float, float] | None:
    """Axial barrier positions bracketing the minimum, if the potential has them."""
    fn = getattr(potential, "barrier_positions", None)
    return fn() if fn is not None else None


# ---------------------------------------------------------------- energy distribution

@dataclass(frozen=True)
class EnergyDistribution:
    """Total-energy distribution clipped to ``[0, U0]``.

    ``kind='gaussian'`` uses ``E0`` and ``sigma`` (J), truncated and
    renormalized on the support; ``kind='empirical'`` holds a density
    sampled at ``grid`` points (piecewise linear).
    """

    kind: str
    U0: float
    E0: float = 0.0
    sigma: float = 0.0
    grid: tuple = ()
    density: tuple = ()

    def __post_init__(self):
        if self.kind not in ("gaussian", "empirical"):
            raise ValueError("kind must be 'gaussian' or 'empirical'")
        if self.kind == "gaussian" and not (self.sigma > 0 and 0 <= self.E0 <= self.U0):
            raise ValueError("gaussian energy distribution needs sigma > 0 and 0 <= E0 <= U0")

    @classmethod
    def gaussian(cls, E0: float, sigma: float, U0: float) -> "EnergyDistribution":
        return cls("gaussian", U0, E0=E0, sigma=sigma)

    @classmethod
    def empirical(cls, grid, density, U0: float) -> "EnergyDistribution":
        g = np.asarray(grid, dtype=float)
        d = np.clip(np.asarray(density, dtype=float), 0, None)
        return cls("empirical", U0, grid=tuple(g), density=tuple(d))

    def _norm(self) -> float:
        if self.kind == "gaussian":
            a = (0 - self.E0) / self.sigma
            b = (self.U0 - self.E0) / self.sigma
            return 0.5 * (special.erf(b / math.sqrt(2)) - special.erf(a / math.sqrt(2)))
        g = np.asarray(self.grid)
        d = np.asarray(self.density)
        m = (g >= 0) & (g <= self.U0)
        return float(integrate.trapezoid(d[m], g[m]))

    def pdf(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        inside = (E >= 0) & (E <= self.U0)
        if self.kind == "gaussian":
            p = np.exp(-0.5 * ((E - self.E0) / self.sigma) ** 2) / (self.sigma * math.sqrt(2 * math.pi))
        else:
            p = np.interp(E, self.grid, self.density, left=0.0, right=0.0)
        return np.where(inside, p / self._norm(), 0.0)

    def cdf(self, E) -> np.ndarray:
        E = np.clip(np.asarray(E, dtype=float), 0, self.U0)
        if self.kind == "gaussian":
            a = special.erf((0 - self.E0) / (self.sigma * math.sqrt(2)))
            val = 0.5 * (special.erf((E - self.E0) / (self.sigma * math.sqrt(2))) - a)
            return val / self._norm()
        g = np.asarray(self.grid)
        d = np.interp(g, self.grid, self.density)
        m = (g >= 0) & (g <= self.U0)
        g, d = g[m], d[m]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(g))])
        return np.interp(E, g, cum, left=0.0, right=cum[-1]) / self._norm()

    def weights(self, energies) -> np.ndarray:
        """Normalized quadrature weights of the density on an energy grid."""
        w = self.pdf(energies)
        s = w.sum()
        if s <= 0:
            raise ValueError("energy distribution has no weight on the grid")
        return w / s

    @property
    def mode(self) -> float:
        if self.kind == "gaussian":
            return float(np.clip(self.E0, 0, self.U0))
        return float(self.grid[int(np.argmax(self.density))])


# ---------------------------------------------------------------- integration

def suzuki_coefficients() -> tuple[float, ...]:
    """Sub-step fractions of the five-stage fourth-order composition."""
    p = 1.0 / (4.0 - 4.0 ** (1.0 / 3.0))
    return (p, p, 1.0 - 4.0 * p, p, p)


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    total_energy: np.ndarray
    escaped: bool = False

    @property
    def energy_drift(self) -> float:
        E0 = self.total_energy[0]
        return float(np.max(np.abs(self.total_energy - E0)) / abs(E0))


def _energy(potential, U_min, mass, r, v):
    return 0.5 * mass * np.sum(v * v, axis=-1) + potential(r) - U_min


def integrate_batch(potential, r, v, dt: float, n_steps: int, mass: float | None = None,
                    callback=None, every: int = 1, bounds=None):
    """Advance many atoms at once; returns final ``(r, v, escaped)``.

    ``callback(step, r, v)`` is called at step 0 and then every ``every``
    steps. Atoms that leave ``bounds`` (a ``(lo, hi)`` pair of 3-vectors)
    are frozen and flagged.
    """
    mass = mass if mass is not None else potential.mass
    r = np.array(r, dtype=float)
    v = np.array(v, dtype=float)
    escaped = np.zeros(r.shape[0], dtype=bool)
    coeffs = suzuki_coefficients()
    a = -potential.gradient(r) / mass
    if callback is not None:
        callback(0, r, v, escaped)
    for step in range(1, n_steps + 1):
        for cfrac in coeffs:
            hstep = cfrac * dt
            v += 0.5 * hstep * a
            r += hstep * v
            a = -potential.gradient(r) / mass
            v += 0.5 * hstep * a
        if bounds is not None:
            out = np.any((r < bounds[0]) | (r > bounds[1]), axis=-1) & ~escaped
            if np.any(out):
                escaped |= out
                # park escaped atoms where they are and stop them
                v[escaped] = 0.0
                a[escaped] = 0.0
        if callback is not None and step % every == 0:
            callback(step, r, v, escaped)
    return r, v, escaped


def integrate_trajectory(potential, ic, dt: float, duration: float, record_every: int = 1,
                         bounds=None) -> Trajectory:
    """Integrate one atom from ``ic = (r0, v0)`` and record the path.

    Raises ``ValueError`` if ``dt`` does not resolve the fastest trap period
    by at least 50 steps (when the potential exposes its frequencies).
    """
    r0, v0 = (np.asarray(a, dtype=float) for a in ic)
    mass = potential.mass
    rmin = potential.minimum()
    U_min = float(potential(rmin))
    omegas = getattr(potential, "omegas", None)
    if omegas is not None and dt > 2 * math.pi / (50 * max(omegas)):
        raise ValueError("dt must resolve the fastest period with at least 50 steps")
    n_steps = int(round(duration / dt))
    ts, rs, vs = [], [], []
    state = {"escaped": False}

    def cb(step, r, v, esc):
        ts.append(step * dt)
        rs.append(r[0].copy())
        vs.append(v[0].copy())
        state["escaped"] = bool(esc[0])

    integrate_batch(potential, r0[None, :], v0[None, :], dt, n_steps, mass, cb, record_every, bounds)
    rs_a, vs_a = np.array(rs), np.array(vs)
    E = _energy(potential, U_min, mass, rs_a, vs_a)
    return Trajectory(np.array(ts), rs_a, vs_a, E, state["escaped"])


# ---------------------------------------------------------------- sampling

def _sampling_box(potential, E: float):
    """Axis-aligned box that contains the classically allowed region at E."""
    rmin = potential.minimum()
    mass = potential.mass
    try:
        from .trapfield import trap_frequencies
        om = trap_frequencies(potential, rmin, mass)
    except Exception:  # noqa: BLE001 - harmonic helpers expose omegas directly
        om = np.asarray(potential.omegas, dtype=float)
    # twice the harmonic turning point covers the softening of a Gaussian well
    half = 2.0 * np.sqrt(2 * max(E, 0.0) / mass) / om
    lo, hi = rmin - half, rmin + half
    bar = _barrier_positions(potential)
    if bar is not None:
        lo[0] = max(lo[0], bar[0])
        hi[0] = min(hi[0], bar[1])
    return lo, hi


def sample_initial_conditions(E_total: float, potential, rng_seed, batch: int = 256, box=None):
    """Random start ``(r0, v0)`` with total energy ``E_total`` above the trap bottom.

    Position is uniform over the classically allowed region (rejection from
    a bounding box, computed here unless ``box`` is passed); velocity
    direction is isotropic and its magnitude carries the remaining kinetic
    energy.
    """
    depth = potential.depth()
    if not 0 < E_total < depth:
        raise UntrappedError(f"total energy {float(E_total):.6g} J outside (0, trap depth {float(depth):.6g} J)")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    rmin = potential.minimum()
    U_min = float(potential(rmin))
    lo, hi = box if box is not None else _sampling_box(potential, E_total)
    while True:
        cand = lo + (hi - lo) * rng.random((batch, 3))
        ok = np.flatnonzero(potential(cand) - U_min <= E_total)
        if ok.size:
            r0 = cand[ok[0]]
            break
    kin = max(E_total - (float(potential(r0)) - U_min), 0.0)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    v0 = direction * math.sqrt(2 * kin / potential.mass)
    return r0, v0


# ---------------------------------------------------------------- histograms

@dataclass(frozen=True)
class HistogramGrid:
    """Regular 3D grid: ``origin`` is the lower corner, ``shape`` the bin counts."""

    origin: tuple
    bin_size: tuple
    shape: tuple

    @classmethod
    def around(cls, center, bin_size=(20e-9, 100e-9, 100e-9), half_width=(200e-9, 2e-6, 2e-6)):
        center = np.asarray(center, dtype=float)
        bs = np.asarray(bin_size, dtype=float)
        hw = np.asarray(half_width, dtype=float)
        shape = tuple(int(round(2 * h / b)) for h, b in zip(hw, bs))
        return cls(tuple(float(c) for c in center - hw), tuple(float(b) for b in bs), shape)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.bin_size) * np.asarray(self.shape)))

    def centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.bin_size[axis]

    def bin_centers(self) -> np.ndarray:
        """All bin centres as an array of shape ``shape + (3,)``."""
        X, Y, Z = np.meshgrid(self.centers(0), self.centers(1), self.centers(2), indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    def flat_index(self, r) -> np.ndarray:
        """Flat bin index per position; -1 outside the grid."""
        idx = np.floor((np.asarray(r) - np.asarray(self.origin)) / np.asarray(self.bin_size)).astype(np.int64)
        shp = np.asarray(self.shape)
        inside = np.all((idx >= 0) & (idx < shp), axis=-1)
        flat = np.ravel_multi_index(tuple(np.clip(idx, 0, shp - 1).T), self.shape)
        return np.where(inside, flat, -1)


@dataclass
class PositionHistogram:
    """Energy-averaged occupation probability on a :class:`HistogramGrid`.

    ``pmf`` sums to one over the grid. ``per_energy`` keeps the normalized
    histogram of each grid energy and ``outside`` the fraction of samples
    that fell outside the grid at that energy.
    """

    grid: HistogramGrid
    pmf: np.ndarray
    energies: np.ndarray = field(default_factory=lambda: np.zeros(0))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    per_energy: np.ndarray | None = None
    outside: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_escaped: int = 0

    def marginal(self, axis: int) -> np.ndarray:
        other = tuple(a for a in range(3) if a != axis)
        return self.pmf.sum(axis=other)

    def mean(self) -> np.ndarray:
        c = self.grid.bin_centers()
        return np.tensordot(self.pmf, c, axes=3)

    def expectation(self, values) -> float:
        return float(np.sum(self.pmf * values))

    def nonzero(self):
        """``(centers (N,3), probabilities (N,))`` for occupied bins."""
        idx = np.flatnonzero(self.pmf)
        c = self.grid.bin_centers().reshape(-1, 3)
        return c[idx], self.pmf.ravel()[idx]

    def to_text(self) -> str:
        """Header lines starting with ``#`` then one ``ix iy iz p`` row per non-empty bin."""
        lines = [
            "# wgmtrap position histogram v1",
            "# origin_m " + " ".join(repr(float(v)) for v in self.grid.origin),
            "# bin_size_m " + " ".join(repr(float(v)) for v in self.grid.bin_size),
            f"# shape {self.grid.shape[0]} {self.grid.shape[1]} {self.grid.shape[2]}",
        ]
        for flat in np.flatnonzero(self.pmf):
            i, j, k = np.unravel_index(flat, self.grid.shape)
            lines.append(f"{i} {j} {k} {float(self.pmf.ravel()[flat])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PositionHistogram":
        head = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) >= 2:
                    head[parts[0]] = parts[1:]
            elif line.strip():
                i, j, k, p = line.split()
                rows.append((int(i), int(j), int(k), float(p)))
        grid = HistogramGrid(tuple(float(v) for v in head["origin_m"]),
                             tuple(float(v) for v in head["bin_size_m"]),
                             tuple(int(v) for v in head["shape"]))
        pmf = np.zeros(grid.shape)
        for i, j, k, p in rows:
            pmf[i, j, k] = p
        return cls(grid, pmf)


def _run_chunk(args):
    """Integrate a batch of atoms (possibly at different energies) and bin them.

    Returns per-energy counts of shape ``(n_energies, n_bins + 1)``; the
    last column collects samples outside the grid.
    """
    potential, energies, items, dt, n_steps, grid, every, bounds = args
    n = len(items)
    r0 = np.empty((n, 3))
    v0 = np.empty((n, 3))
    boxes = {}
    for k, (ie, seed) in enumerate(items):
        if ie not in boxes:
            boxes[ie] = _sampling_box(potential, energies[ie])
        r0[k], v0[k] = sample_initial_conditions(energies[ie], potential, np.random.default_rng(seed),
                                                 box=boxes[ie])
    nbins = int(np.prod(grid.shape))
    ne = len(energies)
    counts = np.zeros(ne * (nbins + 1), dtype=np.int64)
    offset = np.array([ie for ie, _ in items], dtype=np.int64) * (nbins + 1)

    def cb(step, r, v, esc):
        idx = grid.flat_index(r)
        idx = np.where((idx < 0) | esc, nbins, idx)
        counts[:] += np.bincount(offset + idx, minlength=counts.size)

    _, _, escaped = integrate_batch(potential, r0, v0, dt, n_steps, potential.mass, cb, every, bounds)
    return counts.reshape(ne, nbins + 1), int(escaped.sum())


def position_distribution(
    potential,
    dist: EnergyDistribution,
    n_traj_per_energy: int = 500,
    rng_seed: int = 0,
    energies=None,
    duration: float = 200e-6,
    dt: float | None = None,
    grid: HistogramGrid | None = None,
    sample_every: int = 4,
    jobs: int = 1,
    chunk: int = 2500,
) -> PositionHistogram:
    """Energy-averaged position histogram from classical trajectories.

    For each grid energy, ``n_traj_per_energy`` atoms are started by
    :func:`sample_initial_conditions` (seed derived from ``rng_seed``, the
    energy index and the atom index, so results do not depend on ``jobs``
    or ``chunk``), integrated for ``duration`` and their positions binned
    every ``sample_every`` steps. Sub-histograms are normalized, then
    averaged with the weights of ``dist`` on the grid.
    """
    U0 = potential.depth()
    if energies is None:
        energies = np.linspace(0.05, 0.95, 25) * U0
    energies = np.asarray(energies, dtype=float)
    rmin = potential.minimum()
    if dt is None:
        from .trapfield import trap_frequencies
        try:
            wmax = float(np.max(trap_frequencies(potential, rmin, potential.mass)))
        except Exception:  # noqa: BLE001
            wmax = float(np.max(potential.omegas))
        dt = 2 * math.pi / wmax / 100
    n_steps = int(round(duration / dt))
    grid = grid or HistogramGrid.around(rmin)
    if hasattr(potential, "primary"):
        w = potential.primary.radius_at_surface
        bounds = (np.array([1e-9, -10 * w, -10 * w]), np.array([rmin[0] + 5e-6, 10 * w, 10 * w]))
    else:
        bounds = None

    weights = dist.weights(energies)
    items = [(ie, np.random.SeedSequence(rng_seed, spawn_key=(ie, n)))
             for ie in range(len(energies)) for n in range(n_traj_per_energy)]
    tasks = [(potential, tuple(float(E) for E in energies), items[k:k + chunk], dt, n_steps, grid,
              sample_every, bounds) for k in range(0, len(items), chunk)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_chunk, tasks))
    else:
        results = [_run_chunk(t) for t in tasks]

    nb = int(np.prod(grid.shape))
    per_counts = np.zeros((len(energies), nb + 1), dtype=np.int64)
    n_esc = 0
    for counts, esc in results:
        per_counts += counts
        n_esc += esc
    if n_esc:
        warnings.warn(f"{n_esc} trajectories left the modelled volume", RuntimeWarning, stacklevel=2)
    inside = per_counts[:, :nb].astype(float)
    totals = per_counts.sum(axis=1).astype(float)
    outside = per_counts[:, nb] / totals
    per_energy = np.zeros_like(inside)
    nz = inside.sum(axis=1) > 0
    per_energy[nz] = inside[nz] / inside[nz].sum(axis=1, keepdims=True)
    pmf = np.tensordot(weights, per_energy, axes=1)
    pmf = pmf / pmf.sum()
    return PositionHistogram(grid, pmf.reshape(grid.shape), energies, weights,
                             per_energy.reshape((len(energies),) + grid.shape), outside, n_esc)


# ---------------------------------------------------------------- adiabatic lowering

def _rescaled_threshold(U_low, U0):
    """Largest initial energy that stays trapped after lowering to ``U_low``.

    Harmonic action conservation scales energies by ``sqrt(U_low/U0)``, so
    an atom survives iff ``E sqrt(U_low/U0) <= U_low``.
    """
    U_low = np.clip(np.asarray(U_low, dtype=float), 0, U0)
    return np.sqrt(U_low * U0)


def adiabatic_survival(dist: EnergyDistribution, U_low) -> np.ndarray:
    """Fraction of atoms remaining after adiabatic lowering to ``U_low``."""
    U_low = np.asarray(U_low, dtype=float)
    if np.any(U_low < 0) or np.any(U_low > dist.U0 * (1 + 1e-12)):
        raise ValueError("U_low must lie in [0, U0]")
    return dist.cdf(_rescaled_threshold(U_low, dist.U0))


@dataclass
class ReconstructedDistribution:
    empirical: EnergyDistribution
    gaussian: EnergyDistribution | None
    energies: np.ndarray
    density: np.ndarray


def reconstruct_energy_distribution(U_low, eta, U0: float, monotone_tol: float = 0.02) -> ReconstructedDistribution:
    """Invert survival data into an energy density at full trap depth.

    The finite-difference slope ``d eta / d E`` on the rescaled-energy axis
    gives the empirical density at interval midpoints; a Gaussian is fitted
    to it when at least three intervals are available.
    """
    U_low = np.asarray(U_low, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if U_low.size < 2 or U_low.size != eta.size:
        raise ValueError("need at least two (U_low, eta) points of equal length")
    order = np.argsort(U_low)
    U_low, eta = U_low[order], eta[order]
    drops = np.diff(eta)
    if np.any(drops < -monotone_tol):
        warnings.warn("survival data not monotone; clamping", RuntimeWarning, stacklevel=2)
    eta = np.maximum.accumulate(eta)
    E = _rescaled_threshold(U_low, U0)
    dens = np.diff(eta) / np.diff(E)
    mids = 0.5 * (E[1:] + E[:-1])
    emp = EnergyDistribution.empirical(mids, dens, U0) if dens.size > 1 else EnergyDistribution.empirical(
        [E[0], E[1]], [dens[0], dens[0]], U0)
    gauss = None
    if dens.size >= 3:
        k = int(np.argmax(dens))
        p0 = (dens[k], mids[k], max((mids[-1] - mids[0]) / 4, 1e-30))

        def model(x, A, mu, s):
            return A * np.exp(-0.5 * ((x - mu) / s) ** 2)

        try:
            (A, mu, s), _ = optimize.curve_fit(model, mids, dens, p0=p0, maxfev=20000)
            gauss = EnergyDistribution.gaussian(float(np.clip(mu, 0, U0)), abs(float(s)), U0)
        except (RuntimeError, ValueError):
            gauss = None
    return ReconstructedDistribution(emp, gauss, mids, dens)
