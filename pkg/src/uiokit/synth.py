"""Observer synthesis from kernel representations, plus acceptor checks.

Both design routes reduce to the same two steps.  First, obtain a kernel
representation of the plant's one-step behaviour: a full-row-rank matrix

    Psi = [V_p  V_f  W_p  W_f  R_p  R_f]

whose kernel equals the span of the achievable stacked windows
(x, x+, u, u+, y, y+).  The model route annihilates the consistency matrix
Gamma, the data route annihilates the recorded-window matrix Phi; under the
excitation assumption the two spans coincide, so the designs agree.

Second, turn the kernel representation into an observer.  With
Omega_bar a left inverse of V_f and Delta_f a maximal left annihilator of
V_f, the pair

    A_bar = Omega_bar @ V_p,    C_bar = Delta_f @ V_p

is detectable exactly when an observer exists for this kernel; any gain L
with A_bar + L @ C_bar Schur yields, via Omega = Omega_bar + L @ Delta_f,

    A_uio = -(Omega @ V_p)            D_u = -(Omega @ W_f)
    B_u   = S3 + A_uio @ D_u          D_y = -(Omega @ R_f)
    B_y   = S5 + A_uio @ D_y

with S3 = -(Omega @ W_p), S5 = -(Omega @ R_p).  Note the sign convention:
the gain stage shapes the spectrum of A_bar + L @ C_bar, whose *negative*
becomes A_uio — `synthesize` therefore negates requested pole locations
internally, so the poles a caller asks for are the eigenvalues the returned
A_uio actually has.

`verify_acceptor` / `verify_uio` check candidate observers against a model
through the three acceptor identities (unknown-input rejection, recursion
consistency, known-input feedthrough) plus the Schur requirement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .numkit import (
    DEFAULT_TOL,
    SCHUR_MARGIN,
    RankTolerance,
    SpectrumReport,
    left_inverse,
    left_null_basis,
    place_poles,
    rank,
    spectrum,
    stabilizing_gain,
    undetectable_modes,
)
from .plant import StateSpaceModel, UioRealization, consistency_matrix, require_valid

__all__ = [
    "NoUio",
    "VF_RANK_DEFICIENT",
    "NOT_DETECTABLE",
    "KernelRep",
    "SynthesisOptions",
    "SynthesisDiagnostics",
    "AcceptorReport",
    "UioVerification",
    "UioFormatError",
    "kernel_representation",
    "synthesize",
    "design_from_model",
    "design_from_data",
    "verify_acceptor",
    "verify_uio",
    "uio_to_dict",
    "uio_from_dict",
    "save_uio",
    "load_uio",
]

#: NoUio cause tags.
VF_RANK_DEFICIENT = "VfRankDeficient"
NOT_DETECTABLE = "NotDetectable"


class NoUio(Exception):
    """The pipeline certifies that no unknown-input observer exists.

    Attributes:
        cause: one of VF_RANK_DEFICIENT, NOT_DETECTABLE.
        evidence: the offending ranks / eigenvalues.
    """

    def __init__(self, cause: str, detail: str, evidence: dict | None = None):
        super().__init__(f"{cause}: {detail}")
        self.cause = cause
        self.detail = detail
        self.evidence = dict(evidence or {})


class UioFormatError(ValueError):
    """An observer file could not be parsed."""


@dataclass(frozen=True)
class KernelRep:
    """Partitioned kernel representation [V_p V_f W_p W_f R_p R_f].

    ``rank_V_f`` is the rank of the V_f block as decided against the
    generating matrix itself (see `kernel_representation`); None means no
    such data-aware decision is available and consumers fall back to a
    plain rank of the stored block.
    """

    V_p: np.ndarray
    V_f: np.ndarray
    W_p: np.ndarray
    W_f: np.ndarray
    R_p: np.ndarray
    R_f: np.ndarray
    rank_V_f: int | None = None

    @property
    def k(self) -> int:
        return self.V_p.shape[0]

    @property
    def n(self) -> int:
        return self.V_p.shape[1]

    @property
    def m(self) -> int:
        return self.W_p.shape[1]

    @property
    def p(self) -> int:
        return self.R_p.shape[1]

    def matrix(self) -> np.ndarray:
        """Reassembled k x 2(n+m+p) matrix."""
        return np.hstack(
            [self.V_p, self.V_f, self.W_p, self.W_f, self.R_p, self.R_f]
        )

    @classmethod
    def from_matrix(cls, Psi, dims) -> "KernelRep":
        """Slice a stacked matrix by dims = (n, m, p)."""
        n, m, p = (int(v) for v in dims)
        Psi = np.asarray(Psi, dtype=float)
        if Psi.ndim != 2 or Psi.shape[1] != 2 * (n + m + p):
            raise ValueError(
                f"kernel matrix must have {2 * (n + m + p)} columns, "
                f"got shape {Psi.shape}"
            )
        c = np.cumsum([n, n, m, m, p, p])
        return cls(
            V_p=Psi[:, :c[0]].copy(), V_f=Psi[:, c[0]:c[1]].copy(),
            W_p=Psi[:, c[1]:c[2]].copy(), W_f=Psi[:, c[2]:c[3]].copy(),
            R_p=Psi[:, c[3]:c[4]].copy(), R_f=Psi[:, c[4]:c[5]].copy(),
        )


@dataclass(frozen=True)
class SynthesisOptions:
    """Knobs for `synthesize` and the two design entry points.

    gain: "riccati" (default, deterministic) or "place" (needs ``poles``).
    poles: requested A_uio eigenvalues for the "place" gain; must be a
        conjugation-closed Schur multiset.
    kernel_style: "orthonormal" (default) or "reduced-echelon" for an
        echelon-normalized annihilator (cosmetic; same row space).
    placement_seed: seed for the randomized output-combination step of
        multi-output pole placement.
    """

    gain: str = "riccati"
    poles: tuple | None = None
    tol: RankTolerance = DEFAULT_TOL
    schur_margin: float = SCHUR_MARGIN
    kernel_style: str = "orthonormal"
    placement_seed: int = 0


@dataclass(frozen=True)
class SynthesisDiagnostics:
    """Intermediate objects and self-check residuals from one synthesis run."""

    Omega_bar: np.ndarray
    Delta_f: np.ndarray
    A_bar: np.ndarray
    C_bar: np.ndarray
    L: np.ndarray
    Omega: np.ndarray
    S3: np.ndarray
    S4: np.ndarray
    S5: np.ndarray
    S6: np.ndarray
    gain: str
    spectrum: SpectrumReport
    residuals: dict = field(default_factory=dict)


def _reduced_echelon(rows: np.ndarray, zero_cut: float) -> np.ndarray:
    """Gauss-Jordan with partial pivoting; pivots normalized to 1."""
    M = rows.copy()
    k, w = M.shape
    row = 0
    for col in range(w):
        if row >= k:
            break
        piv = row + int(np.argmax(np.abs(M[row:, col])))
        if abs(M[piv, col]) <= zero_cut:
            continue
        M[[row, piv]] = M[[piv, row]]
        M[row] = M[row] / M[row, col]
        others = [i for i in range(k) if i != row]
        if others:
            M[others] = M[others] - np.outer(M[others, col], M[row])
        row += 1
    scale = max(1.0, float(np.abs(M).max()) if M.size else 1.0)
    M[np.abs(M) <= zero_cut * scale] = 0.0
    return M


def kernel_representation(
    G,
    dims,
    tol: RankTolerance = DEFAULT_TOL,
    style: str = "orthonormal",
) -> KernelRep:
    """Kernel representation of the behaviour spanned by the columns of G.

    ``G`` is the window-generating matrix (consistency matrix on the model
    route, recorded-window matrix Phi on the data route) with 2(n+m+p) rows;
    ``dims`` is (n, m, p).  The result has k = 2(n+m+p) - rank(G) rows with
    full row rank and annihilates G.  k = 0 is legal (empty kernel); later
    synthesis stages then fail with NoUio.
    """
    n, m, p = (int(v) for v in dims)
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != 2 * (n + m + p):
        raise ValueError(
            f"window matrix must have {2 * (n + m + p)} rows, got {G.shape}"
        )
    basis = left_null_basis(G, tol)
    if style == "reduced-echelon":
        zero_cut = max(max(basis.shape), 1) * tol.relative
        basis = _reduced_echelon(basis, zero_cut)
    elif style != "orthonormal":
        raise ValueError(f"unknown kernel style {style!r}")

    # Rank of the V_f block, decided against G itself rather than the
    # computed basis: each kernel direction visible in the x+ coordinates
    # adds exactly one rank unit when the (scaled) x+ selectors are appended
    # to G, so rank(V_f) = rank([G, S]) - rank(G).  A basis of the kernel of
    # a badly scaled G (unstable plants reach ~1e4 within a few samples) is
    # only accurate to eps * sigma_max / sigma_min_kept, and that leakage
    # can lift a truly deficient V_f block to full numerical rank; the
    # augmented-rank decision stays on the data's own scale.
    selector = np.zeros((G.shape[0], n))
    selector[n:2 * n, :] = np.eye(n)
    g_scale = float(np.linalg.norm(G, 2)) if G.size else 0.0
    if g_scale > 0.0:
        selector *= g_scale
    rank_vf = rank(np.hstack([G, selector]), tol) - rank(G, tol) if n else 0

    rep = KernelRep.from_matrix(basis, (n, m, p))
    return replace(rep, rank_V_f=rank_vf)


def synthesize(
    ker: KernelRep, options: SynthesisOptions | None = None
) -> tuple[UioRealization, SynthesisDiagnostics]:
    """Turn a kernel representation into a verified-stable observer.

    Pipeline: check rank(V_f) = n; build Omega_bar (Moore-Penrose left
    inverse) and Delta_f (orthonormal left annihilator); form the pair
    (A_bar, C_bar); check PBH detectability; compute the gain (Riccati or
    pole placement with negated pole requests — see module docstring); read
    off the observer matrices.

    Raises:
        NoUio: with cause VF_RANK_DEFICIENT or NOT_DETECTABLE.
        ValueError: for bad options (e.g. "place" without poles, or a
            requested pole multiset that is not Schur).
        NotObservable / PlacementFailed / NumericalFailure: propagated from
            the gain stage.
    """
    opt = options or SynthesisOptions()
    n = ker.n
    # prefer the data-aware rank decision recorded at extraction time
    r_vf = ker.rank_V_f
    if r_vf is None:
        r_vf = rank(ker.V_f, opt.tol)
    if r_vf < n:
        raise NoUio(
            VF_RANK_DEFICIENT,
            f"rank(V_f) = {r_vf} < n = {n}",
            evidence={"rank_V_f": r_vf, "n": n, "k": ker.k},
        )
    Omega_bar = left_inverse(ker.V_f, opt.tol)
    Delta_f = left_null_basis(ker.V_f, opt.tol)
    A_bar = Omega_bar @ ker.V_p
    C_bar = Delta_f @ ker.V_p

    bad = undetectable_modes(A_bar, C_bar, opt.tol, opt.schur_margin)
    if bad:
        raise NoUio(
            NOT_DETECTABLE,
            f"(A_bar, C_bar) has undetectable unstable modes {bad}",
            evidence={"undetectable_modes": bad,
                      "A_bar_eigenvalues": np.linalg.eigvals(A_bar).tolist()},
        )

    if opt.gain == "riccati":
        L = stabilizing_gain(A_bar, C_bar, opt.tol, opt.schur_margin)
    elif opt.gain == "place":
        if opt.poles is None:
            raise ValueError('gain "place" needs a pole multiset in options.poles')
        poles = np.atleast_1d(np.asarray(opt.poles, dtype=complex))
        if poles.size and np.max(np.abs(poles)) >= 1.0 - opt.schur_margin:
            raise ValueError(
                "requested poles must be strictly inside the unit circle"
            )
        # The caller requests eigenvalues of A_uio = -(A_bar + L C_bar);
        # place the negated set so the request is what comes out.
        L = place_poles(A_bar, C_bar, -poles, opt.tol, seed=opt.placement_seed)
    else:
        raise ValueError(f"unknown gain method {opt.gain!r}")

    Omega = Omega_bar + L @ Delta_f
    A_star = -(Omega @ ker.V_p)
    S3 = -(Omega @ ker.W_p)
    S4 = -(Omega @ ker.W_f)
    S5 = -(Omega @ ker.R_p)
    S6 = -(Omega @ ker.R_f)
    uio = UioRealization(
        A_uio=A_star,
        B_u=S3 + A_star @ S4,
        B_y=S5 + A_star @ S6,
        D_u=S4,
        D_y=S6,
    )
    spec_report = spectrum(A_star, opt.schur_margin)
    residuals = {
        "omega_identity": float(
            np.abs(Omega @ ker.V_f - np.eye(n)).max() if n else 0.0
        ),
        "sign_identity": float(
            np.abs(A_star + (A_bar + L @ C_bar)).max() if n else 0.0
        ),
    }
    diag = SynthesisDiagnostics(
        Omega_bar=Omega_bar, Delta_f=Delta_f, A_bar=A_bar, C_bar=C_bar,
        L=L, Omega=Omega, S3=S3, S4=S4, S5=S5, S6=S6,
        gain=opt.gain, spectrum=spec_report, residuals=residuals,
    )
    return uio, diag


def design_from_model(
    model: StateSpaceModel, options: SynthesisOptions | None = None
) -> tuple[UioRealization, SynthesisDiagnostics]:
    """Model route: kernel of the consistency matrix, then `synthesize`."""
    opt = options or SynthesisOptions()
    require_valid(model, opt.tol)
    ker = kernel_representation(
        consistency_matrix(model), (model.n, model.m, model.p),
        opt.tol, opt.kernel_style,
    )
    return synthesize(ker, opt)


def design_from_data(
    blocks, dims=None, options: SynthesisOptions | None = None
) -> tuple[UioRealization, SynthesisDiagnostics]:
    """Data route: kernel of the recorded-window matrix, then `synthesize`.

    ``blocks`` is a `datalog.DataBlocks`; ``dims`` optionally cross-checks
    (n, m, p) against the recorded widths.
    """
    opt = options or SynthesisOptions()
    have = (blocks.n, blocks.m, blocks.p)
    if dims is not None:
        dims = tuple(int(v) for v in dims)
        if tuple(dims[:3]) != have:
            raise ValueError(
                f"declared dims {tuple(dims[:3])} do not match data widths {have}"
            )
    ker = kernel_representation(blocks.Phi, have, opt.tol, opt.kernel_style)
    return synthesize(ker, opt)


# --------------------------------------------------------------------------
# Acceptor verification.


@dataclass(frozen=True)
class AcceptorReport:
    """Max-abs residuals of the three acceptor identities."""

    residuals: dict
    max_residual: float
    tol: float
    is_acceptor: bool


@dataclass(frozen=True)
class UioVerification:
    """Acceptor residuals plus the Schur verdict for a candidate observer."""

    acceptor: AcceptorReport
    spectrum: SpectrumReport
    is_uio: bool
    failures: tuple


def _max_abs(M: np.ndarray) -> float:
    return float(np.abs(M).max()) if M.size else 0.0


def verify_acceptor(
    model: StateSpaceModel, uio: UioRealization, tol: float = 1e-8
) -> AcceptorReport:
    """Check the three acceptor identities of an observer against a model.

    With T = [-D_y, A_uio D_y - B_y] the identities are

        acc1:  T @ [[CE, F], [F, 0]] = [-E, 0]
        acc2:  A_uio = A + T @ [[CA], [C]]
        acc3:  [B_u; D_u] = [[(I - D_y C) B - B_y D], [-D_y D]]

    Residuals are max-abs per identity; the observer is an acceptor iff all
    three stay below ``tol``.
    """
    n, m, p, r = model.n, model.m, model.p, model.r
    if (uio.n, uio.m, uio.p) != (n, m, p):
        raise ValueError(
            f"observer dims (n, m, p) = {(uio.n, uio.m, uio.p)} do not match "
            f"model dims {(n, m, p)}"
        )
    A, B, C, D, E, F = model.A, model.B, model.C, model.D, model.E, model.F
    T_blk = np.hstack([-uio.D_y, uio.A_uio @ uio.D_y - uio.B_y])
    ce_f = np.zeros((2 * p, 2 * r))
    ce_f[:p, :r] = C @ E
    ce_f[:p, r:] = F
    ce_f[p:, :r] = F
    acc1 = T_blk @ ce_f - np.hstack([-E, np.zeros((n, r))])
    acc2 = uio.A_uio - A - T_blk @ np.vstack([C @ A, C])
    acc3 = np.vstack([uio.B_u, uio.D_u]) - np.vstack(
        [(np.eye(n) - uio.D_y @ C) @ B - uio.B_y @ D, -uio.D_y @ D]
    )
    residuals = {
        "acc1": _max_abs(acc1),
        "acc2": _max_abs(acc2),
        "acc3": _max_abs(acc3),
    }
    worst = max(residuals.values())
    return AcceptorReport(
        residuals=residuals, max_residual=worst, tol=tol,
        is_acceptor=worst < tol,
    )


def verify_uio(
    model: StateSpaceModel,
    uio: UioRealization,
    tol: float = 1e-8,
    margin: float = SCHUR_MARGIN,
) -> UioVerification:
    """Acceptor check plus Schur check; reports every failure by name."""
    acc = verify_acceptor(model, uio, tol)
    spec_report = spectrum(uio.A_uio, margin)
    failures = [
        f"{name} residual {value:.3e} exceeds {tol:.1e}"
        for name, value in acc.residuals.items()
        if value >= tol
    ]
    if not spec_report.is_schur:
        failures.append(
            f"A_uio is not Schur: spectral radius {spec_report.spectral_radius:.6g}"
        )
    return UioVerification(
        acceptor=acc,
        spectrum=spec_report,
        is_uio=acc.is_acceptor and spec_report.is_schur,
        failures=tuple(failures),
    )


# --------------------------------------------------------------------------
# Observer files: JSON, mirroring the model file conventions.


def uio_to_dict(uio: UioRealization, diagnostics: SynthesisDiagnostics | None = None) -> dict:
    doc: dict = {
        key: getattr(uio, key).tolist()
        for key in ("A_uio", "B_u", "B_y", "D_u", "D_y")
    }
    if diagnostics is not None:
        doc["diagnostics"] = {
            "gain": diagnostics.gain,
            "eigenvalues": [
                [float(ev.real), float(ev.imag)]
                for ev in diagnostics.spectrum.eigenvalues
            ],
            "spectral_radius": float(diagnostics.spectrum.spectral_radius),
            "schur": bool(diagnostics.spectrum.is_schur),
            "residuals": {k: float(v) for k, v in diagnostics.residuals.items()},
        }
    return doc


def uio_from_dict(doc: dict) -> UioRealization:
    if not isinstance(doc, dict):
        raise UioFormatError("observer document must be a JSON object")
    missing = [k for k in ("A_uio", "B_u", "B_y", "D_u", "D_y") if k not in doc]
    if missing:
        raise UioFormatError(f"missing fields: {', '.join(missing)}")
    mats = {}
    for key in ("A_uio", "B_u", "B_y", "D_u", "D_y"):
        try:
            arr = np.asarray(doc[key], dtype=float)
        except (TypeError, ValueError) as exc:
            raise UioFormatError(f'field "{key}" is not numeric') from exc
        if arr.ndim != 2:
            raise UioFormatError(f'field "{key}" must be an array of arrays')
        mats[key] = arr
    n = mats["A_uio"].shape[0]
    if mats["A_uio"].shape != (n, n):
        raise UioFormatError("A_uio must be square")
    for key in ("B_u", "B_y", "D_u", "D_y"):
        if mats[key].shape[0] != n:
            raise UioFormatError(f'field "{key}" must have {n} rows')
    if mats["B_u"].shape[1] != mats["D_u"].shape[1]:
        raise UioFormatError("B_u and D_u must have equal width")
    if mats["B_y"].shape[1] != mats["D_y"].shape[1]:
        raise UioFormatError("B_y and D_y must have equal width")
    return UioRealization(**mats)


def save_uio(path, uio: UioRealization,
             diagnostics: SynthesisDiagnostics | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(uio_to_dict(uio, diagnostics), fh, indent=2)
        fh.write("\n")


def load_uio(path) -> UioRealization:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UioFormatError(f"not valid JSON: {exc}") from exc
    return uio_from_dict(doc)
