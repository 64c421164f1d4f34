"""Implicit and explicit one-step integrators for the monotone SDE family.

The implicit (drift-implicit backward Euler) step solves

    G(z) = z + h*A*z - h*f(t_next, z) = y,    y = x_prev + g(t_prev)*dW

for the next state ``z``.  Because ``f`` is one-sided Lipschitz with constant
``C_f`` below the smallest eigenvalue of ``A``, the map ``G`` is uniformly
monotone with modulus ``1 + h*(lambda_1 - C_f) > 1`` for every ``h > 0``:
the root exists, is unique, and solving for it is well conditioned at any
step size.  The explicit step trades that robustness for speed and is kept
as the comparison scheme; its instability at large ``h`` is an observable
outcome, not an error.

All solver kernels operate on batches of states with shape ``(M, d)`` and
make per-path decisions (convergence, damping) independently, so a path's
arithmetic never depends on what else happens to be in its batch.  The
public single-path functions wrap the batch kernels with ``M = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelSpec


class NonConvergenceError(RuntimeError):
    """The implicit solve exhausted its iteration caps."""


class NonFiniteEvaluationError(RuntimeError):
    """A model coefficient returned a non-finite value."""


@dataclass(frozen=True)
class SolverConfig:
    """Tunables for the implicit solve.

    ``residual_tol`` is relative: a solve with right-hand side ``y`` accepts
    ``z`` once ``|G(z) - y| <= residual_tol * (1 + |y|)``.

    ``jacobian_mode`` is ``"analytic"`` (requires ``model.drift_jacobian``),
    ``"fd"`` (one-sided differences with step ``fd_epsilon * (1 + |x|)``),
    or ``"auto"`` (analytic when available).
    """

    residual_tol: float = 1e-12
    max_newton_iters: int = 50
    max_bisection_iters: int = 200
    jacobian_mode: str = "auto"
    fd_epsilon: float = 1e-7
    max_damping_halvings: int = 30

    def __post_init__(self) -> None:
        if self.jacobian_mode not in ("auto", "analytic", "fd"):
            raise ValueError(f"unknown jacobian_mode {self.jacobian_mode!r}")
        if not self.residual_tol > 0.0:
            raise ValueError("residual_tol must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")
        if self.max_bisection_iters < 1:
            raise ValueError("max_bisection_iters must be >= 1")
        if self.max_damping_halvings < 0:
            raise ValueError("max_damping_halvings must be >= 0")
        if not self.fd_epsilon > 0.0:
            raise ValueError("fd_epsilon must be positive")


@dataclass(frozen=True)
class StepStats:
    """Work and accuracy record of one implicit solve."""

    newton_iters: int
    final_residual: float
    fallback_used: bool


DEFAULT_CONFIG = SolverConfig()


def _check_h(h: float) -> None:
    if not 0.0 < h < 1.0:
        raise ValueError(f"step size h must lie in (0, 1), got {h}")


def _drift(model: ModelSpec, t: float, x: np.ndarray) -> np.ndarray:
    fx = np.asarray(model.drift(t, x), dtype=np.float64)
    if fx.shape != x.shape:
        raise ValueError(f"drift returned shape {fx.shape}, expected {x.shape}")
    return fx


def _implicit_solve_batch(
    model: ModelSpec,
    t: float,
    h: float,
    rhs: np.ndarray,
    config: SolverConfig,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Solve ``G(z) = rhs`` rowwise for ``rhs`` of shape ``(M, d)``.

    Returns ``(z, newton_iters, final_residual, fallback_used)`` with the
    last three per path.  Damped Newton with per-path step halving; for
    scalar models a bracketing bisection on the monotone ``G`` catches any
    path Newton fails on.
    """
    lam = model.eigenvalues
    denom = 1.0 + h * lam
    m_paths, d = rhs.shape
    tol = config.residual_tol * (1.0 + np.linalg.norm(rhs, axis=1))

    use_analytic = config.jacobian_mode == "analytic" or (
        config.jacobian_mode == "auto" and model.drift_jacobian is not None
    )
    if config.jacobian_mode == "analytic" and model.drift_jacobian is None:
        raise ValueError("jacobian_mode='analytic' but the model declares no drift_jacobian")

    x = np.array(x0, dtype=np.float64) if x0 is not None else rhs / denom

    r, fx = _residual_masked(model, t, denom, h, rhs, x)
    if not np.all(np.isfinite(fx)):
        raise NonFiniteEvaluationError(f"drift returned non-finite values at t={t}")
    rn = np.linalg.norm(r, axis=1)
    iters = np.zeros(m_paths, dtype=np.int64)
    fallback = np.zeros(m_paths, dtype=bool)

    for _ in range(config.max_newton_iters):
        active = rn > tol
        if not active.any():
            break
        xa = x[active]
        ra = r[active]
        rna = rn[active]

        if d == 1:
            if use_analytic:
                jf = np.asarray(model.drift_jacobian(t, xa))[:, 0, 0]
            else:
                eps = config.fd_epsilon * (1.0 + np.abs(xa[:, 0]))
                jf = (_drift(model, t, xa + eps[:, None]) - fx[active])[:, 0] / eps
            delta = (-ra[:, 0] / (denom[0] - h * jf))[:, None]
        else:
            if use_analytic:
                jf = np.asarray(model.drift_jacobian(t, xa), dtype=np.float64)
            else:
                jf = np.empty((xa.shape[0], d, d))
                fxa = fx[active]
                for c in range(d):
                    eps = config.fd_epsilon * (1.0 + np.abs(xa[:, c]))
                    xp = xa.copy()
                    xp[:, c] += eps
                    jf[:, :, c] = (_drift(model, t, xp) - fxa) / eps[:, None]
            jac = -h * jf
            idx = np.arange(d)
            jac[:, idx, idx] += denom
            delta = np.linalg.solve(jac, -ra[..., None])[..., 0]

        prop = xa + delta
        rp, fp = _residual_masked(model, t, denom, h, rhs[active], prop)
        rpn = _safe_norm(rp)
        worse = rpn >= rna
        alpha = np.ones(xa.shape[0])
        halvings = 0
        while worse.any() and halvings < config.max_damping_halvings:
            alpha[worse] *= 0.5
            prop[worse] = xa[worse] + alpha[worse, None] * delta[worse]
            rp, fp = _residual_masked(model, t, denom, h, rhs[active], prop)
            rpn = _safe_norm(rp)
            worse = rpn >= rna
            halvings += 1

        x[active] = prop
        r[active] = rp
        fx[active] = fp
        rn[active] = rpn
        iters[active] += 1

    stuck = rn > tol
    if stuck.any():
        if d != 1:
            worst = float(np.max(rn[stuck]))
            raise NonConvergenceError(
                f"implicit solve did not converge for {int(stuck.sum())} path(s) "
                f"at t={t} (worst residual {worst:.3e})"
            )
        for i in np.nonzero(stuck)[0]:
            z, res = _bisect_scalar(
                model, t, h, float(denom[0]), float(rhs[i, 0]), float(x[i, 0]),
                float(tol[i]), config.max_bisection_iters,
            )
            x[i, 0] = z
            rn[i] = res
            fallback[i] = True

    assert np.all(rn <= tol), "implicit solve returned with residual above tolerance"
    return x, iters, rn, fallback


def _residual_masked(
    model: ModelSpec, t: float, denom: np.ndarray, h: float, rhs: np.ndarray, z: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    fz = _drift(model, t, z)
    return z * denom - h * fz - rhs, fz


def _safe_norm(r: np.ndarray) -> np.ndarray:
    rn = np.linalg.norm(r, axis=1)
    # non-finite trial residuals count as arbitrarily bad, so damping backs off
    return np.where(np.isfinite(rn), rn, np.inf)


def _bisect_scalar(
    model: ModelSpec,
    t: float,
    h: float,
    denom0: float,
    y: float,
    z0: float,
    tol: float,
    max_iters: int,
) -> tuple[float, float]:
    """Bracketing bisection for scalar models; relies on G being increasing."""

    def gval(z: float) -> float:
        fz = _drift(model, t, np.array([[z]]))[0, 0]
        return z * denom0 - h * float(fz) - y

    g0 = gval(z0)
    lo = hi = z0
    glo = ghi = g0
    step = 1.0 + abs(g0)
    for _ in range(200):
        if glo <= 0.0:
            break
        lo -= step
        glo = gval(lo)
        step *= 2.0
    step = 1.0 + abs(g0)
    for _ in range(200):
        if ghi >= 0.0:
            break
        hi += step
        ghi = gval(hi)
        step *= 2.0
    if glo > 0.0 or ghi < 0.0:
        raise NonConvergenceError(f"could not bracket the implicit-step root at t={t}")

    mid, gm = z0, g0
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        gm = gval(mid)
        if abs(gm) <= tol:
            return mid, abs(gm)
        if gm > 0.0:
            hi = mid
        else:
            lo = mid
    raise NonConvergenceError(
        f"bisection exhausted {max_iters} iterations at t={t} (residual {abs(gm):.3e})"
    )


def implicit_solve(
    model: ModelSpec,
    t: float,
    h: float,
    rhs: np.ndarray,
    config: SolverConfig | None = None,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, StepStats]:
    """Solve ``z + h*A*z - h*f(t, z) = rhs`` for one state vector.

    Args:
        model: Model supplying ``A`` (eigenvalues) and the drift.
        t: Drift evaluation time.
        h: Step size in ``(0, 1)``.
        rhs: Right-hand side vector of shape ``(d,)``.
        config: Solver tunables; defaults used when omitted.
        x0: Optional initial guess (defaults to the linear-part solution).

    Returns:
        The solution vector and per-solve :class:`StepStats`.

    Raises:
        NonConvergenceError: iteration caps exhausted.
        NonFiniteEvaluationError: the drift produced non-finite values.
    """
    _check_h(h)
    cfg = config or DEFAULT_CONFIG
    rhs = np.atleast_1d(np.asarray(rhs, dtype=np.float64))
    guess = None if x0 is None else np.atleast_1d(np.asarray(x0, dtype=np.float64))[None, :]
    z, iters, rn, fb = _implicit_solve_batch(model, t, h, rhs[None, :], cfg, guess)
    return z[0], StepStats(int(iters[0]), float(rn[0]), bool(fb[0]))


def bem_step(
    model: ModelSpec,
    t_next: float,
    h: float,
    x_prev: np.ndarray,
    dW: np.ndarray,
    config: SolverConfig | None = None,
) -> tuple[np.ndarray, StepStats]:
    """One drift-implicit step to time ``t_next``.

    The drift is evaluated implicitly at ``t_next`` and the diffusion
    explicitly at ``t_next - h``; both times are reduced modulo the model
    period before evaluating the coefficients.
    """
    _check_h(h)
    tau = model.period
    return _bem_step_reduced(model, (t_next - h) % tau, t_next % tau, h, x_prev, dW, config)


def _bem_step_reduced(model, t_prev, t_next, h, x_prev, dW, config=None):
    cfg = config or DEFAULT_CONFIG
    x_prev = np.atleast_1d(np.asarray(x_prev, dtype=np.float64))
    dW = np.atleast_1d(np.asarray(dW, dtype=np.float64))
    rhs = x_prev + float(model.diffusion(t_prev)) * dW
    z, iters, rn, fb = _implicit_solve_batch(model, t_next, h, rhs[None, :], cfg, x_prev[None, :])
    return z[0], StepStats(int(iters[0]), float(rn[0]), bool(fb[0]))


def _bem_step_batch(
    model: ModelSpec,
    t_prev: float,
    t_next: float,
    h: float,
    x_prev: np.ndarray,
    dW: np.ndarray,
    config: SolverConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batch implicit step; times must already be reduced to ``[0, tau)``."""
    rhs = x_prev + float(model.diffusion(t_prev)) * dW
    return _implicit_solve_batch(model, t_next, h, rhs, config, x_prev)


def em_step(
    model: ModelSpec,
    t_prev: float,
    h: float,
    x_prev: np.ndarray,
    dW: np.ndarray,
) -> np.ndarray:
    """One explicit step from time ``t_prev``; never damps divergence.

    Raises:
        NonFiniteEvaluationError: the drift produced non-finite values at a
            finite state.
    """
    _check_h(h)
    x_prev = np.atleast_1d(np.asarray(x_prev, dtype=np.float64))
    dW = np.atleast_1d(np.asarray(dW, dtype=np.float64))
    return _em_step_batch(model, t_prev % model.period, h, x_prev[None, :], dW[None, :])[0]


def _em_step_batch(
    model: ModelSpec, t_prev: float, h: float, x_prev: np.ndarray, dW: np.ndarray
) -> np.ndarray:
    fx = _drift(model, t_prev, x_prev)
    if not np.all(np.isfinite(fx)):
        raise NonFiniteEvaluationError(f"drift returned non-finite values at t={t_prev}")
    return x_prev + h * (-model.eigenvalues * x_prev + fx) + float(model.diffusion(t_prev)) * dW
