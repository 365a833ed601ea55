"""Trajectory collection, one-step data blocks, and excitation checks.

The data-driven design route never sees the plant matrices; it works from a
recorded trajectory (x(t), u(t), y(t)) of length T, arranged into one-step
"past/future" blocks, each with T-1 columns:

    X_p = [x(0) ... x(T-2)],   X_f = [x(1) ... x(T-1)]

and likewise U_p/U_f, Y_p/Y_f (and D_p/D_f when the disturbance happens to
be recorded, which only a simulator can do).  The row-stacked matrix

    Phi = [X_p; X_f; U_p; U_f; Y_p; Y_f]

collects every recorded one-step window as a column.  The excitation
assumption under which Im(Phi) captures the whole plant behaviour is:

    [X_p; U_p; U_f; D_p; D_f] has full row rank n + 2m + 2r.

That stack involves the *unmeasured* disturbance, so it is only checkable on
synthetic data; for ingested logs a weaker surrogate on (X_p, U_p, U_f) is
reported together with a warning instead.

File format: delimited text with header ``t,x_1..x_n,u_1..u_m,y_1..y_p``
plus optional ``d_1..d_r`` columns, one row per sample, t ascending from 0,
values printed with 12 significant digits.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .numkit import DEFAULT_TOL, RankTolerance, rank
from .plant import StateSpaceModel, require_valid, step

__all__ = [
    "Uniform",
    "HistoricalData",
    "DataBlocks",
    "MissingDisturbanceRecord",
    "TrajectoryFormatError",
    "ExcitationReport",
    "resolve_policy",
    "collect",
    "build_blocks",
    "assumption_holds",
    "excitation_report",
    "pe_order",
    "compatible",
    "save_trajectory",
    "load_trajectory",
]


class MissingDisturbanceRecord(ValueError):
    """The operation needs recorded disturbances and the data has none."""


class TrajectoryFormatError(ValueError):
    """A trajectory file could not be parsed."""


@dataclass(frozen=True)
class Uniform:
    """Independent uniform(low, high) draws for every entry of a signal."""

    low: float
    high: float

    def __post_init__(self) -> None:
        if not self.low <= self.high:
            raise ValueError(f"empty range [{self.low}, {self.high}]")


def resolve_policy(policy, T: int, width: int, rng: np.random.Generator,
                   what: str = "signal") -> np.ndarray:
    """Materialize a signal policy into a (T, width) array.

    ``policy`` may be None (zeros), a `Uniform` (seeded draws from ``rng``),
    or an explicit array of shape (T, width) — a 1-D array of length T is
    accepted when width == 1.
    """
    if policy is None:
        return np.zeros((T, width))
    if isinstance(policy, Uniform):
        return rng.uniform(policy.low, policy.high, size=(T, width))
    arr = np.asarray(policy, dtype=float)
    if arr.ndim == 1 and width == 1:
        arr = arr.reshape(-1, 1)
    if arr.shape != (T, width):
        raise ValueError(
            f"{what} must have shape ({T}, {width}), got {arr.shape}"
        )
    return arr.copy()


def _resolve_vector(value, width: int, rng: np.random.Generator,
                    what: str) -> np.ndarray:
    if value is None:
        return np.zeros(width)
    if isinstance(value, Uniform):
        return rng.uniform(value.low, value.high, size=width)
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (width,):
        raise ValueError(f"{what} must have length {width}, got {arr.shape}")
    return arr.copy()


@dataclass(frozen=True)
class HistoricalData:
    """A recorded trajectory, time-major: x is (T, n), u is (T, m), y is (T, p).

    ``d`` is (T, r) when the disturbance was recorded (synthetic data) and
    None otherwise.
    """

    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    d: np.ndarray | None = None

    def __post_init__(self) -> None:
        for attr in ("x", "u", "y"):
            arr = np.asarray(getattr(self, attr), dtype=float)
            if arr.ndim != 2:
                raise ValueError(f"{attr} must be 2-D (time-major)")
            object.__setattr__(self, attr, arr)
        if self.d is not None:
            arr = np.asarray(self.d, dtype=float)
            if arr.ndim != 2:
                raise ValueError("d must be 2-D (time-major)")
            object.__setattr__(self, "d", arr)
        T = self.x.shape[0]
        for attr in ("u", "y") + (("d",) if self.d is not None else ()):
            if getattr(self, attr).shape[0] != T:
                raise ValueError(f"{attr} must have {T} samples like x")

    @property
    def T(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class DataBlocks:
    """Past/future one-step blocks, each with T-1 columns."""

    X_p: np.ndarray
    X_f: np.ndarray
    U_p: np.ndarray
    U_f: np.ndarray
    Y_p: np.ndarray
    Y_f: np.ndarray
    D_p: np.ndarray | None = None
    D_f: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.X_p.shape[0]

    @property
    def m(self) -> int:
        return self.U_p.shape[0]

    @property
    def p(self) -> int:
        return self.Y_p.shape[0]

    @property
    def columns(self) -> int:
        return self.X_p.shape[1]

    @property
    def Phi(self) -> np.ndarray:
        """Row stack (X_p; X_f; U_p; U_f; Y_p; Y_f) of all recorded windows."""
        return np.vstack(
            [self.X_p, self.X_f, self.U_p, self.U_f, self.Y_p, self.Y_f]
        )


def collect(
    model: StateSpaceModel,
    T: int,
    input_policy=None,
    disturbance_policy=None,
    x0=None,
    seed: int = 0,
) -> HistoricalData:
    """Simulate the plant for T steps and record everything, d included.

    Policies follow `resolve_policy` semantics (None means zeros); ``x0``
    additionally accepts a `Uniform`.  All randomness comes from one
    generator seeded with ``seed``; the draw order is fixed (x0, then the
    whole input sequence, then the whole disturbance sequence) so collected
    data is reproducible byte for byte.
    """
    require_valid(model)
    if T < 2:
        raise ValueError(f"need at least 2 samples to form one window, got T={T}")
    rng = np.random.default_rng(seed)
    x0 = _resolve_vector(x0, model.n, rng, "x0")
    u_seq = resolve_policy(input_policy, T, model.m, rng, "input sequence")
    d_seq = resolve_policy(disturbance_policy, T, model.r, rng,
                           "disturbance sequence")
    x_seq = np.zeros((T, model.n))
    y_seq = np.zeros((T, model.p))
    x = x0
    for t in range(T):
        x_seq[t] = x
        x_next, y_seq[t] = step(model, x, u_seq[t], d_seq[t])
        x = x_next
    return HistoricalData(x=x_seq, u=u_seq, y=y_seq, d=d_seq)


def build_blocks(data: HistoricalData, dims=None) -> DataBlocks:
    """Slice a trajectory into past/future blocks.

    ``dims`` is an optional (n, m, p) or (n, m, p, r) tuple cross-checked
    against the recorded signal widths (a mismatch raises ValueError) — use
    it when the widths are claimed externally, e.g. on the command line.
    """
    if data.T < 2:
        raise ValueError("need at least 2 samples to form one window")
    if dims is not None:
        dims = tuple(int(v) for v in dims)
        have = (data.x.shape[1], data.u.shape[1], data.y.shape[1])
        have_r = data.d.shape[1] if data.d is not None else None
        if dims[:3] != have:
            raise ValueError(
                f"declared dims (n, m, p) = {dims[:3]} do not match recorded "
                f"widths {have}"
            )
        if len(dims) == 4 and have_r is not None and dims[3] != have_r:
            raise ValueError(
                f"declared r = {dims[3]} does not match recorded width {have_r}"
            )
    kw = {}
    if data.d is not None:
        kw = {"D_p": data.d[:-1].T.copy(), "D_f": data.d[1:].T.copy()}
    return DataBlocks(
        X_p=data.x[:-1].T.copy(), X_f=data.x[1:].T.copy(),
        U_p=data.u[:-1].T.copy(), U_f=data.u[1:].T.copy(),
        Y_p=data.y[:-1].T.copy(), Y_f=data.y[1:].T.copy(),
        **kw,
    )


def assumption_holds(blocks: DataBlocks, tol: RankTolerance = DEFAULT_TOL) -> bool:
    """Excitation assumption: [X_p; U_p; U_f; D_p; D_f] has full row rank.

    Raises:
        MissingDisturbanceRecord: if the blocks carry no disturbance record —
            the stack cannot even be formed from measured data.
    """
    if blocks.D_p is None or blocks.D_f is None:
        raise MissingDisturbanceRecord(
            "the excitation assumption involves the recorded disturbance; "
            "this data has none"
        )
    stack = np.vstack([blocks.X_p, blocks.U_p, blocks.U_f, blocks.D_p, blocks.D_f])
    return rank(stack, tol) == stack.shape[0]


@dataclass(frozen=True)
class ExcitationReport:
    """Outcome of the excitation check (full or surrogate)."""

    mode: str          # "assumption" or "surrogate"
    ok: bool
    rank: int
    required: int
    message: str


def excitation_report(
    blocks: DataBlocks, tol: RankTolerance = DEFAULT_TOL
) -> ExcitationReport:
    """Run `assumption_holds` when possible, else the measured-data surrogate.

    The surrogate checks full row rank of [X_p; U_p; U_f] only; it is
    necessary but not sufficient, which the message spells out.
    """
    if blocks.D_p is not None and blocks.D_f is not None:
        stack = np.vstack(
            [blocks.X_p, blocks.U_p, blocks.U_f, blocks.D_p, blocks.D_f]
        )
        got = rank(stack, tol)
        ok = got == stack.shape[0]
        return ExcitationReport(
            mode="assumption", ok=ok, rank=got, required=stack.shape[0],
            message="excitation assumption "
                    + ("holds" if ok else "FAILS")
                    + f" (rank {got} of {stack.shape[0]})",
        )
    stack = np.vstack([blocks.X_p, blocks.U_p, blocks.U_f])
    got = rank(stack, tol)
    ok = got == stack.shape[0]
    return ExcitationReport(
        mode="surrogate", ok=ok, rank=got, required=stack.shape[0],
        message="warning: no disturbance record; the excitation assumption "
                "is unverifiable from measured data. Surrogate rank check on "
                f"[X_p; U_p; U_f] {'passes' if ok else 'FAILS'} "
                f"(rank {got} of {stack.shape[0]}).",
    )


def pe_order(signal, order: int, tol: RankTolerance = DEFAULT_TOL) -> bool:
    """Persistency of excitation of a signal up to the given order.

    ``signal`` is (L, q) time-major (1-D input is treated as q = 1).  True
    iff the depth-``order`` block Hankel matrix has full row rank q*order.
    """
    s = np.asarray(signal, dtype=float)
    if s.ndim == 1:
        s = s.reshape(-1, 1)
    if s.ndim != 2:
        raise ValueError("signal must be 1-D or 2-D (time-major)")
    L, q = s.shape
    if order < 1:
        raise ValueError("order must be >= 1")
    if L < order:
        raise ValueError(f"signal of length {L} is too short for order {order}")
    cols = L - order + 1
    H = np.zeros((q * order, cols))
    for i in range(order):
        H[i * q:(i + 1) * q] = s[i:i + cols].T
    return rank(H, tol) == q * order


def compatible(window, blocks: DataBlocks,
               tol: RankTolerance = DEFAULT_TOL) -> bool:
    """Is a stacked window (x, x+, u, u+, y, y+) explainable by the data?

    Projects the window onto Im(Phi) and accepts when the projection
    residual is below the rank threshold of Phi, scaled by the window size.
    """
    w = np.asarray(window, dtype=float).reshape(-1)
    Phi = blocks.Phi
    if w.shape[0] != Phi.shape[0]:
        raise ValueError(
            f"window must have length {Phi.shape[0]}, got {w.shape[0]}"
        )
    if min(Phi.shape) == 0:
        return bool(np.linalg.norm(w) <= tol.absolute_floor)
    U, s, _ = np.linalg.svd(Phi)
    cut = max(max(Phi.shape) * tol.relative * (s[0] if s.size else 0.0),
              tol.absolute_floor)
    k = int(np.count_nonzero(s > cut)) if s.size else 0
    Q = U[:, :k]
    resid = np.linalg.norm(w - Q @ (Q.T @ w))
    return bool(resid <= cut * (1.0 + np.linalg.norm(w)) + tol.absolute_floor)


# --------------------------------------------------------------------------
# Trajectory files.

def _cell(v) -> str:
    # Shortest decimal string that parses back to the identical float.  The
    # file is the data of record for the synthesis route, and the kernel
    # computation is only meaningful when reading a file back reproduces the
    # recorded samples bit for bit; 12-digit rounding would lift the trailing
    # singular values of the block matrix and destroy its rank structure.
    return repr(float(v))


def _header(n: int, m: int, p: int, r: int | None) -> list[str]:
    cols = ["t"]
    cols += [f"x_{i + 1}" for i in range(n)]
    cols += [f"u_{i + 1}" for i in range(m)]
    cols += [f"y_{i + 1}" for i in range(p)]
    if r is not None:
        cols += [f"d_{i + 1}" for i in range(r)]
    return cols


def save_trajectory(path, data: HistoricalData) -> None:
    """Write a comma-delimited trajectory file (exact round-trip values)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_trajectory(data))


def render_trajectory(data: HistoricalData) -> str:
    """Trajectory file contents as a string (used by file and stdout paths)."""
    n, m, p = data.x.shape[1], data.u.shape[1], data.y.shape[1]
    r = data.d.shape[1] if data.d is not None else None
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_header(n, m, p, r))
    for t in range(data.T):
        row = [str(t)]
        row += [_cell(v) for v in data.x[t]]
        row += [_cell(v) for v in data.u[t]]
        row += [_cell(v) for v in data.y[t]]
        if r is not None:
            row += [_cell(v) for v in data.d[t]]
        writer.writerow(row)
    return buf.getvalue()


def _split_header(fields: list[str]) -> tuple[int, int, int, int | None]:
    names = [f.strip() for f in fields]
    if not names or names[0] != "t":
        raise TrajectoryFormatError('first column must be "t"')
    counts = {"x": 0, "u": 0, "y": 0, "d": 0}
    order = ["x", "u", "y", "d"]
    pos = 0
    for name in names[1:]:
        if "_" not in name:
            raise TrajectoryFormatError(f"unexpected column {name!r}")
        base, _, idx = name.partition("_")
        while pos < len(order) and base != order[pos]:
            pos += 1
        if pos >= len(order):
            raise TrajectoryFormatError(
                f"column {name!r} out of order (expected t,x_*,u_*,y_*,d_*)"
            )
        counts[base] += 1
        if idx != str(counts[base]):
            raise TrajectoryFormatError(
                f"column {name!r} breaks the 1..k numbering of {base}_*"
            )
    if counts["y"] == 0:
        raise TrajectoryFormatError("trajectory must contain y_* columns")
    return (
        counts["x"],
        counts["u"],
        counts["y"],
        counts["d"] if counts["d"] > 0 else None,
    )


def load_trajectory(path) -> HistoricalData:
    """Parse a trajectory file; raises TrajectoryFormatError on any defect."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and any(f.strip() for f in row)]
    if not rows:
        raise TrajectoryFormatError("empty trajectory file")
    n, m, p, r = _split_header(rows[0])
    width = 1 + n + m + p + (r or 0)
    T = len(rows) - 1
    if T < 1:
        raise TrajectoryFormatError("no data rows")
    x = np.zeros((T, n))
    u = np.zeros((T, m))
    y = np.zeros((T, p))
    d = np.zeros((T, r)) if r is not None else None
    for t, row in enumerate(rows[1:]):
        if len(row) != width:
            raise TrajectoryFormatError(
                f"row {t}: expected {width} fields, got {len(row)}"
            )
        try:
            vals = [float(v) for v in row]
        except ValueError as exc:
            raise TrajectoryFormatError(f"row {t}: non-numeric field") from exc
        if int(vals[0]) != t or vals[0] != int(vals[0]):
            raise TrajectoryFormatError(
                f"row {t}: t must ascend from 0, got {row[0]!r}"
            )
        ofs = 1
        x[t] = vals[ofs:ofs + n]; ofs += n
        u[t] = vals[ofs:ofs + m]; ofs += m
        y[t] = vals[ofs:ofs + p]; ofs += p
        if d is not None:
            d[t] = vals[ofs:ofs + r]
    return HistoricalData(x=x, u=u, y=y, d=d)
