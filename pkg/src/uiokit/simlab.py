"""Closed-loop simulation of a plant/observer pair and error-trace analysis.

`run` advances plant and observer side by side:

    y(t)     = C x(t) + D u(t) + F d(t)
    x_hat(t) = z(t) + D_u u(t) + D_y y(t)
    e(t)     = x(t) - x_hat(t)
    z(t+1)   = A_uio z(t) + B_u u(t) + B_y y(t)
    x(t+1)   = A x(t) + B u(t) + E d(t)

For a true acceptor the error obeys e(t+1) = A_uio e(t) exactly, whatever
the disturbance does — `check_error_recursion` measures exactly that
residual on a recorded trace, and `convergence_stats` summarizes how fast
the error actually decayed.  The simulator emits numbers, not plots; traces
can be written to the trajectory file format extended with z/x_hat/e
columns.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .datalog import Uniform, _resolve_vector, resolve_policy
from .plant import StateSpaceModel, UioRealization, require_valid, step

__all__ = [
    "ConvergenceStats", "RunTrace", "Uniform", "check_error_recursion",
    "convergence_stats", "exact_observer_init", "render_trace", "run",
    "save_trace",
]

__all__ = [
    "RunTrace",
    "ConvergenceStats",
    "run",
    "exact_observer_init",
    "check_error_recursion",
    "convergence_stats",
    "render_trace",
    "save_trace",
]

#: Error norms at or below this are treated as exactly zero when fitting
#: decay rates (log of a numerical zero is meaningless).
ZERO_ERROR_FLOOR = 1e-14


@dataclass(frozen=True)
class RunTrace:
    """Time-major record of one closed-loop run (all arrays have T rows)."""

    x: np.ndarray
    u: np.ndarray
    d: np.ndarray
    y: np.ndarray
    z: np.ndarray
    x_hat: np.ndarray
    e: np.ndarray

    @property
    def T(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class ConvergenceStats:
    """Final error norm and fitted log-decay slope (None when undefined)."""

    final_error_norm: float
    decay_rate: float | None


def run(
    model: StateSpaceModel,
    uio: UioRealization,
    T: int,
    input_policy=None,
    disturbance_policy=None,
    x0=None,
    z0=None,
    seed: int = 0,
) -> RunTrace:
    """Simulate plant and observer for T steps.

    Policies and initial conditions follow the datalog conventions: None
    means zeros, `Uniform` draws from one generator seeded with ``seed``
    (draw order: x0, z0, input sequence, disturbance sequence), and explicit
    arrays are validated.  The observer state starts at z0 (default 0).
    """
    require_valid(model)
    if (uio.n, uio.m, uio.p) != (model.n, model.m, model.p):
        raise ValueError(
            f"observer dims (n, m, p) = {(uio.n, uio.m, uio.p)} do not match "
            f"model dims {(model.n, model.m, model.p)}"
        )
    if T < 1:
        raise ValueError("need T >= 1")
    rng = np.random.default_rng(seed)
    x0 = _resolve_vector(x0, model.n, rng, "x0")
    z0 = _resolve_vector(z0, model.n, rng, "z0")
    u_seq = resolve_policy(input_policy, T, model.m, rng, "input sequence")
    d_seq = resolve_policy(disturbance_policy, T, model.r, rng,
                           "disturbance sequence")

    x_seq = np.zeros((T, model.n))
    y_seq = np.zeros((T, model.p))
    z_seq = np.zeros((T, model.n))
    xh_seq = np.zeros((T, model.n))
    x, z = x0, z0
    for t in range(T):
        x_seq[t] = x
        z_seq[t] = z
        x_next, y = step(model, x, u_seq[t], d_seq[t])
        y_seq[t] = y
        xh_seq[t] = z + uio.D_u @ u_seq[t] + uio.D_y @ y
        z = uio.A_uio @ z + uio.B_u @ u_seq[t] + uio.B_y @ y
        x = x_next
    return RunTrace(
        x=x_seq, u=u_seq, d=d_seq, y=y_seq,
        z=z_seq, x_hat=xh_seq, e=x_seq - xh_seq,
    )


def exact_observer_init(
    model: StateSpaceModel, uio: UioRealization, x0, u0, d0
) -> np.ndarray:
    """The z0 that makes e(0) = 0 for the given first sample.

    Uses z0 = x0 - D_u u(0) - D_y y(0); for acceptors D_y F = 0, so the
    result does not actually depend on d0 and the whole error trace stays
    at zero.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    _, y0 = step(model, x0, u0, d0)
    u0 = np.asarray(u0, dtype=float).reshape(-1)
    return x0 - uio.D_u @ u0 - uio.D_y @ y0


def check_error_recursion(
    trace: RunTrace, uio: UioRealization, tol: float = 1e-10
) -> tuple[bool, float]:
    """Does the trace's error follow e(t+1) = A_uio e(t)?

    Returns (verdict, residual) where residual is the max-abs one-step
    defect; the verdict compares it against ``tol * (1 + max |e|)``.  A
    single-sample or all-zero trace passes vacuously.
    """
    e = trace.e
    if e.shape[0] < 2:
        return True, 0.0
    defect = e[1:].T - uio.A_uio @ e[:-1].T
    residual = float(np.abs(defect).max()) if defect.size else 0.0
    scale = float(np.abs(e).max()) if e.size else 0.0
    return residual < tol * (1.0 + scale), residual


def convergence_stats(trace: RunTrace) -> ConvergenceStats:
    """Final error norm and least-squares slope of log ||e(t)|| on the tail.

    The tail is the second half of the run (t >= T // 2); samples with
    ||e|| <= 1e-14 are ignored as exact zeros.  With fewer than two usable
    tail samples the decay rate is undefined and reported as None.
    """
    norms = np.linalg.norm(trace.e, axis=1)
    final = float(norms[-1]) if norms.size else 0.0
    t_all = np.arange(trace.T)
    keep = (norms > ZERO_ERROR_FLOOR) & (t_all >= trace.T // 2)
    if np.count_nonzero(keep) < 2:
        return ConvergenceStats(final_error_norm=final, decay_rate=None)
    slope = np.polyfit(t_all[keep], np.log(norms[keep]), 1)[0]
    return ConvergenceStats(final_error_norm=final, decay_rate=float(slope))


# --------------------------------------------------------------------------
# Trace files: trajectory format extended with z_*, xhat_*, e_* columns.
# Values are written as shortest round-trip decimals, matching the
# trajectory files.


def render_trace(trace: RunTrace) -> str:
    n = trace.x.shape[1]
    m = trace.u.shape[1]
    p = trace.y.shape[1]
    r = trace.d.shape[1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = (["t"]
              + [f"x_{i + 1}" for i in range(n)]
              + [f"u_{i + 1}" for i in range(m)]
              + [f"y_{i + 1}" for i in range(p)]
              + [f"d_{i + 1}" for i in range(r)]
              + [f"z_{i + 1}" for i in range(n)]
              + [f"xhat_{i + 1}" for i in range(n)]
              + [f"e_{i + 1}" for i in range(n)])
    writer.writerow(header)
    for t in range(trace.T):
        row = [str(t)]
        for block in (trace.x, trace.u, trace.y, trace.d,
                      trace.z, trace.x_hat, trace.e):
            row += [repr(float(v)) for v in block[t]]
        writer.writerow(row)
    return buf.getvalue()


def save_trace(path, trace: RunTrace) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_trace(trace))
