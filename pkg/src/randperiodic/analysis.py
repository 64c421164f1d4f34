"""Monte Carlo analysis: strong errors, moments, and empirical measures.

Every routine here is deterministic given its seeds.  Path seeds are derived
from one master seed, each path owns its own noise lattice, and paths are
processed in fixed-size blocks whose composition never changes a path's
arithmetic; the worker count only distributes blocks, so results are
identical for any ``workers`` value.

Strong errors couple resolutions through the increment lattice: the
reference run reads fine increments, coarse runs read exact sums of the same
increments, and both are compared pathwise at matching grid times.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import InitialCondition, ModelSpec
from .noise import GridSpec, NoiseLattice, derive_seeds
from .pullback import _drive, _int_ratio
from .stepper import SolverConfig, DEFAULT_CONFIG

DEFAULT_BLOCK_SIZE = 256


@dataclass(frozen=True)
class ErrorRow:
    """Strong error of one step size against the shared-noise reference.

    ``rms_error`` is the root mean square over paths at the evaluation time;
    ``sup_rms_error`` is the largest rms over the grid nodes of the final
    period.  A row is ``diverged`` when any path of the explicit scheme blew
    up at this step size, in which case the errors are NaN.
    """

    h: float
    rms_error: float
    standard_error: float
    sup_rms_error: float
    num_paths: int
    diverged: bool


@dataclass(eq=False)
class ErrorTable:
    """Strong-error rows for one scheme plus the fitted convergence order."""

    scheme: str
    h_ref: float
    t_eval: float
    rows: list[ErrorRow]
    fitted_order: float | None = None
    fit_intercept: float | None = None

    def valid_rows(self) -> list[ErrorRow]:
        return [r for r in self.rows if not r.diverged]


@dataclass(frozen=True)
class OrderFit:
    """Least-squares line through ``(log2 h, log2 rms_error)``."""

    order: float
    intercept: float
    residuals: np.ndarray


def fit_order(table: ErrorTable) -> OrderFit:
    """Fit the convergence order from the non-diverged rows.

    The order is the signed slope in log2-log2 coordinates, so an error that
    halves with the step gives 1.0 and an inverted trend goes negative
    rather than being masked.

    Raises:
        ValueError: fewer than 3 usable rows.
    """
    rows = table.valid_rows()
    if len(rows) < 3:
        raise ValueError(f"order fit needs at least 3 non-diverged rows, got {len(rows)}")
    x = np.log2([r.h for r in rows])
    y = np.log2([r.rms_error for r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    return OrderFit(order=float(slope), intercept=float(intercept), residuals=residuals)


def strong_error(
    model: ModelSpec,
    h_ref: float,
    h_list: Sequence[float],
    pullback_periods: int,
    num_paths: int,
    t_eval: float = 0.0,
    config: SolverConfig | None = None,
    seed: int = 0,
    scheme: str = "bem",
    init: InitialCondition | None = None,
    block_size: int | None = None,
    workers: int = 1,
) -> ErrorTable:
    """Pathwise error of coarse runs against a fine implicit reference.

    Every path gets its own lattice at resolution ``h_ref``.  The reference
    is always the implicit scheme at ``h_ref``; each ``h`` in ``h_list`` is
    run with ``scheme`` on exact sums of the same increments, both pulled
    back from ``t_eval - pullback_periods * tau``.  Errors are compared at
    ``t_eval`` and across the final period.

    Returns an :class:`ErrorTable` with the order fitted over non-diverged
    rows when at least three are available.
    """
    if not h_list:
        raise ValueError("h_list must not be empty")
    if num_paths < 2:
        raise ValueError(f"num_paths must be >= 2, got {num_paths}")
    k = int(pullback_periods)
    if k < 1:
        raise ValueError(f"pullback_periods must be >= 1, got {k}")
    scheme = scheme.lower()
    cfg = config or DEFAULT_CONFIG
    tau = model.period
    d = model.dimension
    x0_spec = init if init is not None else InitialCondition(value=np.zeros(d))

    n_ref = _int_ratio(tau, h_ref, "period / h_ref")
    e_ref = _int_ratio(t_eval, h_ref, "t_eval / h_ref")
    mults = [_int_ratio(h, h_ref, f"h={h} / h_ref") for h in h_list]
    n_list = [_int_ratio(tau, h, f"period / h={h}") for h in h_list]
    for h in h_list:
        _int_ratio(t_eval, h, f"t_eval / h={h}")

    ref_grid = GridSpec(
        start_index=e_ref - k * n_ref, step_mult=1, count=k * n_ref,
        period_steps=n_ref, base_step=h_ref,
    )
    # union of all coarse final-period nodes, in reference-grid node indices
    node_sets = []
    for m, n_h in zip(mults, n_list):
        node_sets.append(ref_grid.count - n_ref + np.arange(n_h + 1) * m)
    union_nodes = np.unique(np.concatenate(node_sets))
    pos_of = {int(v): i for i, v in enumerate(union_nodes)}
    ref_maps = [
        np.array([pos_of[int(v)] for v in nodes], dtype=np.int64) for nodes in node_sets
    ]
    coarse_grids = [
        GridSpec(
            start_index=_int_ratio(t_eval, h, f"t_eval / h={h}") - k * n_h,
            step_mult=m, count=k * n_h, period_steps=n_h, base_step=h_ref,
        )
        for h, m, n_h in zip(h_list, mults, n_list)
    ]

    seeds = derive_seeds(seed, num_paths)
    blocks = _make_blocks(num_paths, block_size)

    def run_block(span: tuple[int, int]):
        b0, b1 = span
        lats = [NoiseLattice(int(s), h_ref, d) for s in seeds[b0:b1]]
        x0 = np.stack([x0_spec.resolve(int(s), d) for s in seeds[b0:b1]])
        ref_rec, _, _ = _drive(model, ref_grid, "bem", x0, lats, cfg, record_nodes=union_nodes)
        out = []
        for grid, n_h, ref_map in zip(coarse_grids, n_list, ref_maps):
            nodes = grid.count - n_h + np.arange(n_h + 1)
            rec, div_at, _ = _drive(model, grid, scheme, x0, lats, cfg, record_nodes=nodes)
            diff = rec - ref_rec[:, ref_map, :]
            sq = np.einsum("ijk,ijk->ij", diff, diff)
            out.append((sq, div_at >= 0))
        return out

    per_level_sq: list[list[np.ndarray]] = [[] for _ in h_list]
    per_level_div: list[list[np.ndarray]] = [[] for _ in h_list]
    for result in _map_blocks(run_block, blocks, workers):
        for lvl, (sq, div) in enumerate(result):
            per_level_sq[lvl].append(sq)
            per_level_div[lvl].append(div)

    rows = []
    for h, n_h, sq_parts, div_parts in zip(h_list, n_list, per_level_sq, per_level_div):
        sq = np.vstack(sq_parts)  # (num_paths, n_h + 1), final node is t_eval
        diverged = bool(np.concatenate(div_parts).any())
        if diverged:
            rows.append(ErrorRow(float(h), math.nan, math.nan, math.nan, num_paths, True))
            continue
        sq_eval = sq[:, -1]
        mean_sq = math.fsum(sq_eval) / num_paths
        rms = math.sqrt(mean_sq)
        var_sq = float(np.var(sq_eval, ddof=1))
        se_mean = math.sqrt(var_sq / num_paths)
        se_rms = se_mean / (2.0 * rms) if rms > 0.0 else 0.0
        node_rms = np.sqrt([math.fsum(sq[:, i]) / num_paths for i in range(sq.shape[1])])
        rows.append(
            ErrorRow(float(h), rms, se_rms, float(np.max(node_rms)), num_paths, False)
        )

    table = ErrorTable(scheme=scheme, h_ref=float(h_ref), t_eval=float(t_eval), rows=rows)
    if len(table.valid_rows()) >= 3:
        fit = fit_order(table)
        table.fitted_order = fit.order
        table.fit_intercept = fit.intercept
    return table


@dataclass(frozen=True)
class MomentEstimate:
    """Worst second moment over a grid against the theoretical bound.

    ``bound`` is ``E|xi|^2 + alpha`` with
    ``alpha = (2*C_f + sigma**2) / (2*(lambda_1 - C_f))``; ``within_bound``
    allows three standard errors of slack at the maximizing node.
    """

    sup_mean_square: float
    standard_error: float
    node_index: int
    time: float
    alpha: float
    bound: float
    within_bound: bool
    num_paths: int


def moment_estimate(
    model: ModelSpec,
    grid: GridSpec,
    scheme: str,
    init: InitialCondition,
    num_paths: int,
    seed: int = 0,
    config: SolverConfig | None = None,
    block_size: int | None = None,
    workers: int = 1,
) -> MomentEstimate:
    """Estimate ``sup_N E|X_N|^2`` over the grid by Monte Carlo.

    Requires declared ``C_f`` and ``sigma`` to form the bound.
    """
    c_f = model.constants.get("C_f")
    sigma = model.constants.get("sigma")
    if c_f is None or sigma is None:
        raise ValueError("moment_estimate requires declared C_f and sigma")
    if num_paths < 2:
        raise ValueError(f"num_paths must be >= 2, got {num_paths}")
    cfg = config or DEFAULT_CONFIG
    d = model.dimension
    seeds = derive_seeds(seed, num_paths)
    blocks = _make_blocks(num_paths, block_size)

    def run_block(span: tuple[int, int]):
        b0, b1 = span
        lats = [NoiseLattice(int(s), grid.base_step, d) for s in seeds[b0:b1]]
        x0 = np.stack([init.resolve(int(s), d) for s in seeds[b0:b1]])
        states, _, _ = _drive(model, grid, scheme.lower(), x0, lats, cfg, full_states=True)
        sq = np.einsum("ijk,ijk->ij", states, states)  # (B, count + 1)
        return sq

    parts = list(_map_blocks(run_block, blocks, workers))
    sq = np.vstack(parts)  # (num_paths, count + 1)
    mean_sq = np.array([math.fsum(sq[:, i]) / num_paths for i in range(sq.shape[1])])
    node = int(np.argmax(mean_sq))
    se = math.sqrt(float(np.var(sq[:, node], ddof=1)) / num_paths)
    alpha = (2.0 * c_f + sigma**2) / (2.0 * (model.lambda_min - c_f))
    bound = float(mean_sq[0]) + alpha
    sup = float(mean_sq[node])
    return MomentEstimate(
        sup_mean_square=sup,
        standard_error=se,
        node_index=node,
        time=float(grid.times()[node]),
        alpha=float(alpha),
        bound=bound,
        within_bound=sup <= bound + 3.0 * se,
        num_paths=num_paths,
    )


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Samples of the state distribution at one time."""

    t: float
    h: float
    samples: np.ndarray  # (num_samples, d)

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.shape[0] < 2:
            raise ValueError("an empirical measure needs at least 2 samples")
        if not np.all(np.isfinite(samples)):
            raise ValueError("empirical measure samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[0])


def periodic_measure(
    model: ModelSpec,
    lattice_seeds: Sequence[int],
    h: float,
    pullback_periods: int,
    t_list: Sequence[float],
    config: SolverConfig | None = None,
    init: InitialCondition | None = None,
    base_step: float | None = None,
    block_size: int | None = None,
    workers: int = 1,
) -> list[EmpiricalMeasure]:
    """Empirical laws of the pulled-back state at the requested times.

    One independent lattice per seed; all paths start at
    ``-pullback_periods * tau`` and are recorded at each time in ``t_list``.
    ``base_step`` (default ``h``) sets the lattice resolution so that runs
    at different step sizes can share one driving path.
    """
    seeds = np.asarray(lattice_seeds, dtype=np.uint64)
    if seeds.ndim != 1 or seeds.size < 2:
        raise ValueError("lattice_seeds must be a 1-d sequence with at least 2 seeds")
    if not t_list:
        raise ValueError("t_list must not be empty")
    k = int(pullback_periods)
    if k < 1:
        raise ValueError(f"pullback_periods must be >= 1, got {k}")
    cfg = config or DEFAULT_CONFIG
    d = model.dimension
    base = h if base_step is None else base_step
    mult = _int_ratio(h, base, "h / base_step")
    n = _int_ratio(model.period, h, "period / h")
    start = -k * n
    t_arr = [float(t) for t in t_list]
    nodes = np.array(
        [_int_ratio(t, h, f"t={t} / h") - start for t in t_arr], dtype=np.int64
    )
    if np.unique(nodes).size != nodes.size:
        raise ValueError("t_list contains duplicate times")
    count = int(nodes.max())
    if count < 1 or nodes.min() < 0:
        raise ValueError("every time in t_list must lie at or after the pull-back start")
    grid = GridSpec(start_index=start, step_mult=mult, count=count, period_steps=n, base_step=base)
    x0_spec = init if init is not None else InitialCondition(value=np.zeros(d))

    blocks = _make_blocks(seeds.size, block_size)

    def run_block(span: tuple[int, int]):
        b0, b1 = span
        lats = [NoiseLattice(int(s), base, d) for s in seeds[b0:b1]]
        x0 = np.stack([x0_spec.resolve(int(s), d) for s in seeds[b0:b1]])
        rec, div_at, _ = _drive(model, grid, "bem", x0, lats, cfg, record_nodes=nodes)
        return rec

    rec = np.vstack(list(_map_blocks(run_block, blocks, workers)))
    return [
        EmpiricalMeasure(t=t_arr[i], h=float(h), samples=rec[:, i, :].copy())
        for i in range(len(t_arr))
    ]


def weak_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Upper bound on the dual distance over 1-Lipschitz test functions
    bounded by one, for equal-size scalar samples.

    Pairs order statistics and averages the differences clamped at 2 (the
    diameter of the test class).  Symmetric, zero on identical samples, and
    satisfies the triangle inequality.

    Raises:
        ValueError: multi-dimensional samples or unequal sample counts
            (subsample to a common size first).
    """
    a = mu.samples
    b = nu.samples
    if a.shape[1] != 1 or b.shape[1] != 1:
        raise ValueError("weak_distance supports scalar samples only")
    if a.shape[0] != b.shape[0]:
        raise ValueError(
            f"sample counts differ ({a.shape[0]} vs {b.shape[0]}); subsample to a common size"
        )
    return _w1_sorted(np.sort(a[:, 0]), np.sort(b[:, 0]))


def _w1_sorted(a: np.ndarray, b: np.ndarray) -> float:
    gaps = np.minimum(np.abs(a - b), 2.0)
    return math.fsum(gaps) / a.size


def bootstrap_noise_floor(
    measure: EmpiricalMeasure, n_bootstrap: int = 100, seed: int = 0
) -> float:
    """Expected weak distance between two same-law resamples of ``measure``.

    Distances at or below this floor are statistically indistinguishable
    from sampling noise at this sample count.
    """
    if measure.samples.shape[1] != 1:
        raise ValueError("bootstrap_noise_floor supports scalar samples only")
    rng = np.random.default_rng(seed)
    values = measure.samples[:, 0]
    m = values.size
    dists = []
    for _ in range(int(n_bootstrap)):
        a = np.sort(rng.choice(values, size=m, replace=True))
        b = np.sort(rng.choice(values, size=m, replace=True))
        dists.append(_w1_sorted(a, b))
    return math.fsum(dists) / len(dists)


@dataclass(frozen=True)
class MeasurePair:
    """Weak distance between runs at ``h`` and ``h_half`` on shared noise."""

    h: float
    h_half: float
    distance: float
    ratio_to_sqrt_h: float


@dataclass(frozen=True)
class MeasureStudy:
    """Distances across step halvings at one evaluation time."""

    t: float
    num_paths: int
    pairs: tuple[MeasurePair, ...]

    def distances(self) -> list[float]:
        return [p.distance for p in self.pairs]

    @property
    def monotone_decreasing(self) -> bool:
        d = self.distances()
        return all(d[i] > d[i + 1] for i in range(len(d) - 1))


def measure_convergence_study(
    model: ModelSpec,
    h_pairs: Sequence,
    num_paths: int,
    t: float,
    pullback_periods: int,
    seed: int = 0,
    config: SolverConfig | None = None,
    init: InitialCondition | None = None,
    block_size: int | None = None,
    workers: int = 1,
) -> MeasureStudy:
    """Distance between empirical laws at ``h`` and ``h/2`` per halving.

    Each pair shares per-path lattices at the finer resolution, so the two
    runs differ only through the scheme's step size.  One common set of path
    seeds is reused across pairs, which removes sampling noise from the
    comparison between rows.  Entries of ``h_pairs`` may be ``(h, h/2)``
    tuples or bare ``h`` values.
    """
    pairs_in: list[tuple[float, float]] = []
    for entry in h_pairs:
        if np.isscalar(entry):
            pairs_in.append((float(entry), float(entry) / 2.0))
        else:
            h, h2 = entry
            pairs_in.append((float(h), float(h2)))
    if not pairs_in:
        raise ValueError("h_pairs must not be empty")
    seeds = derive_seeds(seed, num_paths)
    rows = []
    for h, h2 in pairs_in:
        if _int_ratio(h, h2, f"h={h} / h_half={h2}") < 2:
            raise ValueError(f"pair ({h}, {h2}) must refine the step")
        mu_coarse = periodic_measure(
            model, seeds, h, pullback_periods, [t], config=config, init=init,
            base_step=h2, block_size=block_size, workers=workers,
        )[0]
        mu_fine = periodic_measure(
            model, seeds, h2, pullback_periods, [t], config=config, init=init,
            base_step=h2, block_size=block_size, workers=workers,
        )[0]
        dist = weak_distance(mu_coarse, mu_fine)
        rows.append(MeasurePair(h, h2, dist, dist / math.sqrt(h)))
    return MeasureStudy(t=float(t), num_paths=num_paths, pairs=tuple(rows))


def write_error_table_csv(table: ErrorTable, path: str) -> None:
    """Write rows as ``h,rms_error,standard_error,num_paths,diverged``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("h,rms_error,standard_error,num_paths,diverged\n")
        for r in table.rows:
            fh.write(
                f"{r.h!r},{r.rms_error!r},{r.standard_error!r},{r.num_paths},"
                f"{'true' if r.diverged else 'false'}\n"
            )


def write_order_csv(table: ErrorTable, path: str) -> None:
    """Write fit coordinates as ``log2_h,log2_error`` (non-diverged rows)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("log2_h,log2_error\n")
        for r in table.valid_rows():
            fh.write(f"{math.log2(r.h)!r},{math.log2(r.rms_error)!r}\n")


def write_measure_csv(measure: EmpiricalMeasure, path: str) -> None:
    """Write samples as ``t,sample_index,value`` (scalar measures)."""
    if measure.samples.shape[1] != 1:
        raise ValueError("measure CSV supports scalar samples only")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,sample_index,value\n")
        for i, v in enumerate(measure.samples[:, 0]):
            fh.write(f"{measure.t!r},{i},{float(v)!r}\n")


def _make_blocks(total: int, block_size: int | None) -> list[tuple[int, int]]:
    size = DEFAULT_BLOCK_SIZE if block_size is None else int(block_size)
    if size < 1:
        raise ValueError(f"block_size must be >= 1, got {size}")
    return [(b, min(b + size, total)) for b in range(0, total, size)]


def _map_blocks(fn, blocks, workers: int):
    if workers <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=int(workers)) as ex:
        return list(ex.map(fn, blocks))
