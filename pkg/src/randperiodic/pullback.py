"""Path simulation and pull-back constructions of random periodic solutions.

A random periodic solution is reached by *pull-back*: start the scheme far in
the past at ``-k * tau`` and integrate forward on a fixed realization of the
noise.  The spectral gap makes any two starting states contract against each
other at a known geometric envelope, so after enough whole periods the
trajectory on the window of interest no longer depends on the starting state;
what remains is the random periodic path of that noise realization.

Time never accumulates through floating-point addition here.  Grid nodes are
integer indices, coefficient times are computed from ``(index mod n) * h``
with ``n`` steps per period, and period shifts of the noise are integer
offsets into the lattice.  Two runs that the shift identity says should agree
therefore see bitwise-identical inputs at every step and produce
bitwise-identical trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import InitialCondition, ModelSpec
from .noise import AlignmentError, GridSpec, NoiseLattice, shift
from .stepper import SolverConfig, DEFAULT_CONFIG, _bem_step_batch, _em_step_batch

DIVERGENCE_THRESHOLD = 1e12

SCHEMES = ("bem", "em")

_CHUNK_WORDS = 4_000_000


@dataclass(frozen=True)
class SolverSummary:
    """Aggregate implicit-solver statistics over a whole run."""

    max_newton_iters: int = 0
    max_residual: float = 0.0
    any_fallback: bool = False


@dataclass(frozen=True, eq=False)
class PathResult:
    """One simulated trajectory on a grid.

    ``states`` has shape ``(grid.count + 1, d)`` with ``states[0]`` equal to
    the initial condition.  All entries are finite unless ``scheme == "em"``
    and ``diverged`` is set, in which case entries from ``diverged_at`` on
    are NaN.
    """

    grid: GridSpec
    states: np.ndarray
    scheme: str
    seed: int
    solver_stats: SolverSummary
    diverged: bool = False
    diverged_at: int | None = None

    @property
    def times(self) -> np.ndarray:
        return self.grid.times()

    def state_at(self, t: float) -> np.ndarray:
        """State at grid time ``t`` (must be a node)."""
        return self.states[self.grid.node_index(t)]


def make_grid(
    model: ModelSpec, lattice: NoiseLattice, h: float, t_start: float, t_end: float
) -> GridSpec:
    """Build a grid with step ``h`` covering ``[t_start, t_end]``.

    All three ratios ``h / base_step``, ``period / h`` and ``t_start / h``
    must be whole numbers; violations raise :class:`AlignmentError` naming
    the failing ratio.
    """
    mult = _int_ratio(h, lattice.base_step, "h / lattice base_step")
    n = _int_ratio(model.period, h, "period / h")
    start = _int_ratio(t_start, h, "t_start / h")
    count = _int_ratio(t_end - t_start, h, "(t_end - t_start) / h")
    if count < 1:
        raise ValueError(f"t_end must lie at least one step after t_start, got [{t_start}, {t_end}]")
    return GridSpec(
        start_index=start, step_mult=mult, count=count, period_steps=n,
        base_step=lattice.base_step,
    )


def _int_ratio(num: float, den: float, what: str, tol: float = 1e-9) -> int:
    ratio = num / den
    r = round(ratio)
    if abs(ratio - r) > tol * max(1.0, abs(ratio)):
        raise AlignmentError(f"{what} = {ratio!r} is not a whole number")
    return int(r)


def _validate_run(model: ModelSpec, grid: GridSpec, lattice: NoiseLattice) -> None:
    if lattice.dimension != model.dimension:
        raise ValueError(
            f"lattice dimension {lattice.dimension} does not match model dimension {model.dimension}"
        )
    if grid.base_step != lattice.base_step:
        raise AlignmentError(
            f"grid base_step {grid.base_step!r} does not match lattice base_step "
            f"{lattice.base_step!r}"
        )
    tau = grid.period_steps * grid.h
    if abs(tau - model.period) > 1e-9 * max(1.0, model.period):
        raise AlignmentError(
            f"period_steps * h = {tau!r} does not equal the model period {model.period!r}"
        )


def _check_scheme(scheme: str) -> str:
    s = scheme.lower()
    if s not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    return s


def _drive(
    model: ModelSpec,
    grid: GridSpec,
    scheme: str,
    x0: np.ndarray,
    lattices: list[NoiseLattice],
    config: SolverConfig,
    record_nodes: np.ndarray | None = None,
    full_states: bool = False,
):
    """Advance a batch of paths over the grid, one lattice per path.

    Returns ``(states or recorded, diverged_at, summary)`` where
    ``diverged_at[p]`` is the node index at which path ``p`` crossed the
    divergence threshold (-1 if it never did).  Batch composition does not
    affect any path's arithmetic, so identical inputs give identical outputs
    for any partition of the paths into batches.
    """
    m_paths, d = x0.shape
    n = grid.period_steps
    h = grid.h
    mult = grid.step_mult
    a0 = grid.start_index
    count = grid.count

    states = None
    if full_states:
        states = np.empty((m_paths, count + 1, d))
        states[:, 0] = x0
    rec = None
    rec_pos: dict[int, int] = {}
    if record_nodes is not None:
        record_nodes = np.asarray(record_nodes, dtype=np.int64)
        rec = np.full((m_paths, record_nodes.size, d), np.nan)
        rec_pos = {int(v): i for i, v in enumerate(record_nodes)}
        if 0 in rec_pos:
            rec[:, rec_pos[0]] = x0

    x = x0.copy()
    diverged_at = np.full(m_paths, -1, dtype=np.int64)
    active = np.ones(m_paths, dtype=bool)
    max_iters = 0
    max_resid = 0.0
    any_fb = False

    chunk = max(1, _CHUNK_WORDS // max(1, m_paths * mult * d))
    j = 0
    dw = np.empty((m_paths, min(chunk, count), d))
    while j < count:
        c = min(chunk, count - j)
        for p, lat in enumerate(lattices):
            fine = lat.increments((a0 + j) * mult, c * mult)
            dw[p, :c] = fine.reshape(c, mult, d).sum(axis=1)
        for i in range(c):
            a = a0 + j + i
            t_prev = (a % n) * h
            t_next = ((a + 1) % n) * h
            if scheme == "bem":
                x, iters, rn, fb = _bem_step_batch(model, t_prev, t_next, h, x, dw[:, i], config)
                max_iters = max(max_iters, int(iters.max()))
                max_resid = max(max_resid, float(rn.max()))
                any_fb = any_fb or bool(fb.any())
            else:
                if active.all():
                    x = _em_step_batch(model, t_prev, h, x, dw[:, i])
                elif active.any():
                    x[active] = _em_step_batch(model, t_prev, h, x[active], dw[active, i])
                norms = np.linalg.norm(x, axis=1)
                bad = active & (~np.isfinite(norms) | (norms > DIVERGENCE_THRESHOLD))
                if bad.any():
                    diverged_at[bad] = j + i + 1
                    x[bad] = np.nan
                    active &= ~bad
            node = j + i + 1
            if states is not None:
                states[:, node] = x
            pos = rec_pos.get(node)
            if pos is not None:
                rec[:, pos] = x
        j += c

    summary = SolverSummary(max_iters, max_resid, any_fb)
    out = states if full_states else rec
    return out, diverged_at, summary


def simulate(
    model: ModelSpec,
    grid: GridSpec,
    scheme: str,
    init: InitialCondition,
    lattice: NoiseLattice,
    config: SolverConfig | None = None,
) -> PathResult:
    """Run one path of the chosen scheme over the grid.

    The implicit scheme completes on any grid satisfying the model
    assumptions.  The explicit scheme may diverge at large steps; a path
    whose norm exceeds ``1e12`` (or turns non-finite) is truncated, the
    remaining states are NaN, and the result carries a divergence flag
    instead of raising.

    Raises:
        AlignmentError: grid/lattice/period misalignment.
        NonConvergenceError: the implicit solve failed (with step context).
    """
    scheme = _check_scheme(scheme)
    _validate_run(model, grid, lattice)
    cfg = config or DEFAULT_CONFIG
    x0 = init.resolve(lattice.seed, model.dimension)[None, :]
    states, div_at, summary = _drive(
        model, grid, scheme, x0, [lattice], cfg, full_states=True
    )
    d_at = int(div_at[0])
    return PathResult(
        grid=grid,
        states=states[0],
        scheme=scheme,
        seed=lattice.seed,
        solver_stats=summary,
        diverged=d_at >= 0,
        diverged_at=d_at if d_at >= 0 else None,
    )


@dataclass(frozen=True, eq=False)
class CoalescenceReport:
    """Distance of two same-noise runs against the contraction envelope."""

    grid: GridSpec
    distances: np.ndarray
    envelope: np.ndarray
    threshold: float
    first_below: int | None
    path_a: PathResult
    path_b: PathResult

    @property
    def times(self) -> np.ndarray:
        return self.grid.times()


def coalescence(
    model: ModelSpec,
    grid: GridSpec,
    init_a: InitialCondition,
    init_b: InitialCondition,
    lattice: NoiseLattice,
    config: SolverConfig | None = None,
    threshold: float = 1e-6,
) -> CoalescenceReport:
    """Run the implicit scheme from two starting states on shared noise.

    Reports the pathwise distance series, the geometric envelope
    ``(1 + 2h(lambda_1 - C_f))**(-N/2) * |D_0|`` it must stay under, and the
    first node where the distance drops below ``threshold``.
    """
    c_f = model.constants.get("C_f")
    if c_f is None:
        raise ValueError("coalescence requires the model to declare C_f")
    path_a = simulate(model, grid, "bem", init_a, lattice, config)
    path_b = simulate(model, grid, "bem", init_b, lattice, config)
    dist = np.linalg.norm(path_a.states - path_b.states, axis=1)
    rho = 1.0 + 2.0 * grid.h * (model.lambda_min - c_f)
    steps = np.arange(grid.count + 1)
    envelope = rho ** (-steps / 2.0) * dist[0]
    below = np.nonzero(dist < threshold)[0]
    return CoalescenceReport(
        grid=grid,
        distances=dist,
        envelope=envelope,
        threshold=float(threshold),
        first_below=int(below[0]) if below.size else None,
        path_a=path_a,
        path_b=path_b,
    )


def default_pullback_periods(model: ModelSpec, h: float, target: float = 1e-8) -> int:
    """Smallest whole number of periods at which the contraction envelope
    ``(1 + 2h(lambda_1 - C_f))**(-N/2)`` falls below ``target``."""
    c_f = model.constants.get("C_f")
    if c_f is None:
        raise ValueError("default pull-back depth requires the model to declare C_f")
    if not 0.0 < target < 1.0:
        raise ValueError(f"target must lie in (0, 1), got {target}")
    rho = 1.0 + 2.0 * h * (model.lambda_min - c_f)
    steps = 2.0 * math.log(1.0 / target) / math.log(rho)
    per_period = model.period / h
    return max(1, math.ceil(steps / per_period))


def random_periodic_path(
    model: ModelSpec,
    lattice: NoiseLattice,
    h: float,
    pullback_periods: int | None = None,
    horizon: tuple[float, float] = (0.0, 1.0),
    scheme: str = "bem",
    config: SolverConfig | None = None,
    init: InitialCondition | None = None,
) -> PathResult:
    """Pull-back approximation of the random periodic path on ``horizon``.

    Integrates from ``-pullback_periods * tau`` (default: deep enough that
    the contraction envelope is below 1e-8) and returns the trajectory
    restricted to ``horizon``.  The starting state (zeros by default) only
    matters below the envelope's magnitude.
    """
    scheme = _check_scheme(scheme)
    k = default_pullback_periods(model, h) if pullback_periods is None else int(pullback_periods)
    if k < 1:
        raise ValueError(f"pullback_periods must be >= 1, got {k}")
    t0, t1 = horizon
    start = -k * model.period
    if t0 < start - 1e-12 or t1 <= t0:
        raise ValueError(f"horizon {horizon} must satisfy -k*tau <= t0 < t1")
    grid = make_grid(model, lattice, h, start, t1)
    x0 = init if init is not None else InitialCondition(value=np.zeros(model.dimension))
    full = simulate(model, grid, scheme, x0, lattice, config)
    i0 = grid.node_index(t0)
    sub = GridSpec(
        start_index=grid.start_index + i0,
        step_mult=grid.step_mult,
        count=grid.count - i0,
        period_steps=grid.period_steps,
        base_step=grid.base_step,
    )
    return PathResult(
        grid=sub,
        states=full.states[i0:].copy(),
        scheme=full.scheme,
        seed=full.seed,
        solver_stats=full.solver_stats,
        diverged=full.diverged,
        diverged_at=None if full.diverged_at is None else max(0, full.diverged_at - i0),
    )


@dataclass(frozen=True, eq=False)
class ShiftPeriodicityReport:
    """Outcome of the one-period shift identity check.

    ``path_shifted`` starts ``k`` periods back and reads the noise through a
    one-period shift; ``path_reference`` starts ``k - 1`` periods back on the
    unshifted noise.  Node for node the two runs see identical inputs, so
    ``max_discrepancy`` is zero up to solver determinism.
    """

    max_discrepancy: float
    pullback_periods: int
    path_shifted: PathResult
    path_reference: PathResult


def verify_shift_periodicity(
    model: ModelSpec,
    lattice: NoiseLattice,
    h: float,
    pullback_periods: int = 30,
    config: SolverConfig | None = None,
    init: InitialCondition | None = None,
) -> ShiftPeriodicityReport:
    """Check the defining identity of a random periodic path numerically.

    The path started at ``-k*tau`` under noise shifted by one period,
    evaluated ``tau`` earlier, must equal the path started at ``-(k-1)*tau``
    under the original noise.  Both runs use the same starting state.
    """
    k = int(pullback_periods)
    if k < 2:
        raise ValueError(f"pullback_periods must be >= 2, got {k}")
    dummy_grid = make_grid(model, lattice, h, -k * model.period, 0.0)
    n = dummy_grid.period_steps
    lat_shifted = shift(lattice, dummy_grid, n)
    grid_a = dummy_grid
    grid_b = make_grid(model, lattice, h, -(k - 1) * model.period, model.period)
    x0 = init if init is not None else InitialCondition(value=np.zeros(model.dimension))
    path_a = simulate(model, grid_a, "bem", x0, lat_shifted, config)
    path_b = simulate(model, grid_b, "bem", x0, lattice, config)
    disc = float(np.max(np.linalg.norm(path_a.states - path_b.states, axis=1)))
    return ShiftPeriodicityReport(
        max_discrepancy=disc,
        pullback_periods=k,
        path_shifted=path_a,
        path_reference=path_b,
    )


@dataclass(frozen=True, eq=False)
class PinnedPullbackResult:
    """Value at time 0 as a function of the pull-back depth.

    ``values[i]`` is the state at time 0 of the run started at ``-depths[i]``
    (depth 0 is the starting state itself).  All depths read one noise
    realization, so the curve converges to the random periodic value pinned
    at time 0 as the depth grows.  ``diverged_depths`` lists indices whose
    run blew up (explicit scheme only); their values are NaN.
    """

    depths: np.ndarray
    values: np.ndarray
    scheme: str
    seed: int
    solver_stats: SolverSummary
    diverged_depths: np.ndarray


def pullback_pinned_path(
    model: ModelSpec,
    lattice: NoiseLattice,
    h: float,
    r_max: float,
    config: SolverConfig | None = None,
    init: InitialCondition | None = None,
    scheme: str = "bem",
) -> PinnedPullbackResult:
    """Map each depth ``r`` to the value at time 0 pulled back through ``r``.

    For every grid depth ``r`` in ``(0, r_max]`` the scheme runs from time
    ``-r`` to 0 on the shared lattice, and the state at time 0 is recorded.
    Runs at different depths are independent integrations over one noise
    realization; as ``r`` grows the recorded values contract onto a single
    point, which makes the convergence of the pull-back visible directly.
    """
    scheme = _check_scheme(scheme)
    cfg = config or DEFAULT_CONFIG
    mult = _int_ratio(h, lattice.base_step, "h / lattice base_step")
    n = _int_ratio(model.period, h, "period / h")
    steps_total = _int_ratio(r_max, h, "r_max / h")
    if steps_total < 1:
        raise ValueError(f"r_max must be at least one step, got {r_max}")
    x0 = init if init is not None else InitialCondition(value=np.zeros(model.dimension))
    x0_vec = x0.resolve(lattice.seed, model.dimension)

    values = np.empty((steps_total + 1, model.dimension))
    values[0] = x0_vec
    diverged = []
    max_iters = 0
    max_resid = 0.0
    any_fb = False
    for i in range(1, steps_total + 1):
        grid_i = GridSpec(
            start_index=-i, step_mult=mult, count=i, period_steps=n,
            base_step=lattice.base_step,
        )
        out, div_at, summary = _drive(
            model, grid_i, scheme, x0_vec[None, :], [lattice], cfg,
            record_nodes=np.array([i], dtype=np.int64),
        )
        values[i] = out[0, 0]
        max_iters = max(max_iters, summary.max_newton_iters)
        max_resid = max(max_resid, summary.max_residual)
        any_fb = any_fb or summary.any_fallback
        if div_at[0] >= 0:
            diverged.append(i)
    return PinnedPullbackResult(
        depths=np.arange(steps_total + 1) * h,
        values=values,
        scheme=scheme,
        seed=lattice.seed,
        solver_stats=SolverSummary(max_iters, max_resid, any_fb),
        diverged_depths=np.array(diverged, dtype=np.int64),
    )


def write_trajectory_csv(
    result: PathResult, path: str, pullback_periods: int | None = None
) -> None:
    """Write a trajectory as CSV with metadata comment lines.

    Format: ``#scheme=``, ``#seed=``, ``#h=``, ``#k=`` comments, then a
    ``t,x_1,...,x_d`` header and one row per grid node.  ``#k`` is taken
    from ``pullback_periods`` or derived when the grid starts a whole number
    of periods below zero.
    """
    grid = result.grid
    k = pullback_periods
    if k is None and grid.start_index < 0 and grid.start_index % grid.period_steps == 0:
        k = -grid.start_index // grid.period_steps
    d = result.states.shape[1]
    times = result.times
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"#scheme={result.scheme}\n")
        fh.write(f"#seed={result.seed}\n")
        fh.write(f"#h={grid.h!r}\n")
        if k is not None:
            fh.write(f"#k={k}\n")
        fh.write("t," + ",".join(f"x_{c + 1}" for c in range(d)) + "\n")
        for i in range(grid.count + 1):
            row = [repr(float(times[i]))] + [repr(float(v)) for v in result.states[i]]
            fh.write(",".join(row) + "\n")


def read_trajectory_csv(path: str) -> tuple[dict[str, str], np.ndarray, np.ndarray]:
    """Read back a trajectory CSV; returns (metadata, times, states)."""
    meta: dict[str, str] = {}
    times = []
    states = []
    with open(path, "r", encoding="utf-8") as fh:
        header_seen = False
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key] = value
                continue
            if not header_seen:
                header_seen = True
                continue
            parts = line.split(",")
            times.append(float(parts[0]))
            states.append([float(v) for v in parts[1:]])
    return meta, np.asarray(times), np.asarray(states)
