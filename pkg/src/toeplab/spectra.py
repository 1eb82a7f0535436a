"""Spectral decompositions, projectors and finite-size Mourre, Virial and LAP checks."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .opforge import HalfLine, LatticeBox, OperatorMatrix
from .symbolkit import MourreConstants

__all__ = [
    "SpectralData",
    "Bump",
    "MourreReport",
    "EigenvalueCountReport",
    "LapProfile",
    "eigh",
    "spectral_projector",
    "smoothed_function",
    "boundary_mask",
    "boundary_leakage",
    "count_eigenvalues",
    "virial_check",
    "mourre_verify",
    "lap_probe",
    "classify_lap",
    "level_spacing_floor",
    "ks_distance",
    "write_mourre_csv",
]

LEAKAGE_MAX = 0.01
TAIL_FRACTION = 0.1
KEEP_RATIO = 1e-2
MOURRE_TOL = 0.15


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    space: HalfLine | LatticeBox
    source_label: str = ""

    def residual(self, H: OperatorMatrix) -> float:
        V = self.eigenvectors
        return float(np.abs(H.data @ V - V * self.eigenvalues).max())

    def orthonormality_defect(self) -> float:
        V = self.eigenvectors
        return float(np.abs(V.conj().T @ V - np.eye(V.shape[1])).max())

    def apply(self, weights: np.ndarray) -> np.ndarray:
        """``sum_i w_i v_i v_i^*`` as a dense array."""
        V = self.eigenvectors
        return (V * weights) @ V.conj().T


def eigh(H: OperatorMatrix) -> SpectralData:
    if not H.hermitian:
        raise ValueError(f"{H.label or 'operator'} is not Hermitian")
    data = H.data
    if np.iscomplexobj(data) and not np.any(data.imag):
        data = data.real  # real symmetric path is several times faster
    w, V = np.linalg.eigh(data)
    w.setflags(write=False)
    V.setflags(write=False)
    return SpectralData(w, V, H.space, H.label)


def spectral_projector(sd: SpectralData, interval) -> OperatorMatrix:
    lo, hi = interval
    inside = ((sd.eigenvalues >= lo) & (sd.eigenvalues <= hi)).astype(float)
    P = sd.apply(inside)
    return OperatorMatrix(sd.space, 0.5 * (P + P.conj().T), hermitian=True, label=f"E[{lo},{hi}]")


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)


@dataclass(frozen=True)
class Bump:
    """C^2 bump: 1 on the central ``plateau`` fraction of ``[lo, hi]``, quintic edges, 0 outside."""

    lo: float
    hi: float
    plateau: float = 0.5

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bump needs lo < hi, got [{self.lo}, {self.hi}]")
        if not 0.0 <= self.plateau < 1.0:
            raise ValueError("plateau fraction must lie in [0, 1)")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        edge = 0.5 * (1.0 - self.plateau) * (self.hi - self.lo)
        up = _smoothstep((x - self.lo) / edge)
        down = _smoothstep((self.hi - x) / edge)
        return np.where((x <= self.lo) | (x >= self.hi), 0.0, np.minimum(up, down))


def smoothed_function(sd: SpectralData, phi: Callable) -> OperatorMatrix:
    """``phi(H) = sum_i phi(lambda_i) v_i v_i^*``."""
    vals = np.asarray(phi(sd.eigenvalues), dtype=float)
    M = sd.apply(vals)
    return OperatorMatrix(sd.space, 0.5 * (M + M.conj().T), hermitian=True, label="phi(H)")


# ---------------------------------------------------------------------------
# boundary diagnostics


def boundary_mask(space, fraction: float = TAIL_FRACTION) -> np.ndarray:
    """Sites in the outer ``fraction`` of the truncation: ``n > (1-fraction)N`` on the
    half-line, ``max_j |alpha_j| > (1-fraction)N`` on a box."""
    if isinstance(space, HalfLine):
        n = np.arange(1, space.N + 1)
        return n > (1.0 - fraction) * space.N
    coords = np.abs(space.coordinates()).max(axis=1)
    return coords > (1.0 - fraction) * space.N


def boundary_leakage(vectors: np.ndarray, space, fraction: float = TAIL_FRACTION) -> np.ndarray:
    """Tail mass ``sum_{n in tail} |v_n|^2`` of each column."""
    tail = boundary_mask(space, fraction)
    v = np.asarray(vectors)
    if v.ndim == 1:
        v = v[:, None]
    return (np.abs(v[tail]) ** 2).sum(axis=0)


# ---------------------------------------------------------------------------
# eigenvalue counting


@dataclass(frozen=True)
class EigenvalueCountReport:
    interval: tuple[float, float]
    counts: dict
    stabilized_count: int | str
    eigenvalues: tuple[float, ...]
    multiplicities: tuple[int, ...]
    distance_to_thresholds: float


def count_eigenvalues(builder: Callable[[int], OperatorMatrix], interval, ladder: Sequence[int],
                      thresholds: Sequence[float] = (), leakage_max: float = LEAKAGE_MAX,
                      cluster_tol: float = 1e-8) -> EigenvalueCountReport:
    """Count localized eigenvalues of ``builder(N)`` in ``interval`` along ``ladder``.

    An eigenvalue counts when its eigenvector has boundary leakage below
    ``leakage_max``; the count is stabilized when the last three rungs agree.
    """
    lo, hi = float(interval[0]), float(interval[1])
    dist = min((max(lo - t, t - hi, 0.0) for t in thresholds), default=math.inf)
    if dist == 0.0:
        warnings.warn(f"interval [{lo}, {hi}] meets a threshold", stacklevel=2)
    counts = {}
    found = np.zeros(0)
    for N in ladder:
        sd = eigh(builder(N))
        sel = (sd.eigenvalues >= lo) & (sd.eigenvalues <= hi)
        leak = boundary_leakage(sd.eigenvectors[:, sel], sd.space)
        found = sd.eigenvalues[sel][leak < leakage_max]
        counts[int(N)] = int(len(found))
    tail = list(counts.values())[-3:]
    stable = tail[0] if len(tail) == 3 and len(set(tail)) == 1 else "unstable"
    values, mult = [], []
    for lam in found:
        if values and abs(lam - values[-1]) <= cluster_tol:
            mult[-1] += 1
        else:
            values.append(float(lam))
            mult.append(1)
    return EigenvalueCountReport((lo, hi), counts, stable, tuple(values), tuple(mult), float(dist))


# ---------------------------------------------------------------------------
# virial


def virial_check(sd: SpectralData, C: OperatorMatrix, leakage_max: float | None = None) -> float:
    """``max |<v, C v>|`` over eigenvectors, optionally only those with leakage below ``leakage_max``."""
    V = sd.eigenvectors
    if leakage_max is not None:
        V = V[:, boundary_leakage(V, sd.space) < leakage_max]
    if not V.shape[1]:
        return 0.0
    diag = np.einsum("ij,ij->j", V.conj(), C.data @ V)
    return float(np.abs(diag).max())


# ---------------------------------------------------------------------------
# Mourre certificate


@dataclass(frozen=True)
class MourreReport:
    interval: tuple[float, float]
    constants: MourreConstants
    n: int
    lambda_min_projected: float
    lambda_min_interior: float
    lambda_max_interior: float
    n_test_vectors: int
    boundary_leakage: float
    interior_fraction: float
    tol: float
    verdict: str
    notes: str = ""

    def csv_row(self) -> list:
        c = self.constants
        return [self.n, self.interval[0], self.interval[1], c.c, c.c_sharp,
                self.lambda_min_interior, self.boundary_leakage, self.verdict]


def _probe_basis(Phi: np.ndarray, N: int, fraction: float):
    lo = int(round(N * (1.0 - fraction) / 2))
    hi = N - lo
    B = Phi[:, lo:hi]
    G = B.conj().T @ B
    gw, gv = np.linalg.eigh(0.5 * (G + G.conj().T))
    if gw.size == 0 or gw[-1] <= 0:
        return np.zeros((N, 0))
    keep = gw >= KEEP_RATIO * gw[-1]
    return B @ (gv[:, keep] / np.sqrt(gw[keep]))


def mourre_verify(H: OperatorMatrix, C: OperatorMatrix, interval, constants: MourreConstants,
                  interior_fraction: float = 0.5, plateau: float = 0.5, tol: float | None = None,
                  sd: SpectralData | None = None) -> MourreReport:
    """Test ``phi(H) C phi(H) >= c phi(H)^2`` on ``span{phi(H) e_n}`` for interior sites ``n``.

    ``lambda_min_interior`` is the smallest Rayleigh quotient of ``C`` on that
    span; ``lambda_min_projected`` uses every eigenvector with ``phi > 0``.
    """
    if not C.hermitian:
        raise ValueError("commutator must be Hermitian")
    if not isinstance(H.space, HalfLine):
        raise ValueError("interior probes are defined on the half-line")
    lo, hi = float(interval[0]), float(interval[1])
    sd = sd or eigh(H)
    N = H.space.N
    phi = Bump(lo, hi, plateau)
    weights = phi(sd.eigenvalues)
    c = constants.c
    tol = MOURRE_TOL * c if tol is None else tol

    sel = weights > 0
    U = sd.eigenvectors[:, sel]
    proj_min = float(np.linalg.eigvalsh(U.conj().T @ C.data @ U).min()) if sel.any() else math.nan

    Phi = sd.apply(weights)
    notes = ""
    Q = _probe_basis(Phi, N, interior_fraction)
    if Q.shape[1] == 0 and interior_fraction < 0.8:
        notes = "probe span empty at requested fraction; enlarged to 0.8"
        interior_fraction = 0.8
        Q = _probe_basis(Phi, N, interior_fraction)
    if Q.shape[1] == 0:
        return MourreReport((lo, hi), constants, N, proj_min, math.nan, math.nan, 0, math.nan,
                            interior_fraction, tol, "boundary-contaminated", "empty probe span")
    R = Q.conj().T @ C.data @ Q
    ev = np.linalg.eigvalsh(0.5 * (R + R.conj().T))
    tail = boundary_mask(H.space)
    leak = float(np.linalg.norm(Q[tail], 2) ** 2) if tail.any() else 0.0
    lam_min, lam_max = float(ev[0]), float(ev[-1])
    if c <= 1e-12:
        verdict = "failed"
    elif leak >= LEAKAGE_MAX:
        verdict = "boundary-contaminated"
    elif lam_min < c - tol:
        verdict = "failed"
    else:
        verdict = "certified"
    return MourreReport((lo, hi), constants, N, proj_min, lam_min, lam_max, Q.shape[1], leak,
                        interior_fraction, tol, verdict, notes)


def write_mourre_csv(reports: Sequence[MourreReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "lambda_lo", "lambda_hi", "c", "c_sharp", "lam_min_interior", "leakage",
                    "verdict"])
        for rep in reports:
            w.writerow([_fmt(x) for x in rep.csv_row()])


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


# ---------------------------------------------------------------------------
# limiting absorption


@dataclass(frozen=True)
class LapProfile:
    lam: float
    etas: np.ndarray
    norms: np.ndarray
    floor: float
    slope: float
    per_decade_variation: float
    monotone: bool
    classification: str
    resolved: np.ndarray = field(repr=False, default=None)


def level_spacing_floor(eigenvalues: np.ndarray, lam: float, width: float = 0.1,
                        factor: float = 1.0) -> float:
    """``factor`` times the mean level spacing within ``width`` of ``lam``; zero when at
    most one eigenvalue lies there."""
    count = int(np.count_nonzero(np.abs(np.asarray(eigenvalues) - lam) <= width))
    if count <= 1:
        return 0.0
    return factor * 2.0 * width / count


def lap_probe(H: OperatorMatrix, A: OperatorMatrix, lam: float, etas: Sequence[float],
              sd: SpectralData | None = None) -> np.ndarray:
    """``||<A>^-1 (lam + i eta - H)^-1 <A>^-1||`` for each ``eta``."""
    etas = np.asarray(etas, dtype=float)
    if np.any(etas <= 0):
        raise ValueError("eta must be positive")
    if not A.hermitian:
        raise ValueError("A must be Hermitian")
    a, Va = np.linalg.eigh(A.data)
    weight = (Va / np.sqrt(1.0 + a * a)) @ Va.conj().T
    sd = sd or eigh(H)
    UW = sd.eigenvectors.conj().T @ weight
    out = np.empty(len(etas))
    for i, eta in enumerate(etas):
        R = (UW.conj().T / (lam + 1j * eta - sd.eigenvalues)) @ UW
        out[i] = np.linalg.norm(R, 2)
    return out


def classify_lap(lam: float, etas, norms, floor: float, plateau_tol: float = 0.1) -> LapProfile:
    """Plateau, divergent or intermediate, judged on the points with ``eta >= floor``."""
    etas = np.asarray(etas, dtype=float)
    norms = np.asarray(norms, dtype=float)
    above = etas >= floor
    order = np.argsort(-etas[above])
    e, n = etas[above][order], norms[above][order]
    if len(e) < 2:
        return LapProfile(lam, etas, norms, floor, math.nan, math.nan, True, "unresolved", above)
    slope = float(np.polyfit(np.log10(e), np.log10(n), 1)[0])
    variation = _per_decade_variation(e, n, slope)
    monotone = bool(np.all(np.diff(n) >= -1e-12 * n[:-1]))
    if variation < plateau_tol:
        label = "plateau"
    elif slope <= -0.5:
        label = "divergent"
    else:
        label = "intermediate"
    return LapProfile(lam, etas, norms, floor, slope, variation, monotone, label, above)


def _per_decade_variation(etas, norms, slope) -> float:
    """Largest ``max/min - 1`` over one-decade windows; the fitted slope stands in
    when the sampled range is shorter than a decade."""
    logs = np.log10(etas)
    if logs[0] - logs[-1] < 1.0 - 1e-9:
        return float(10.0 ** abs(slope) - 1.0)
    worst = 0.0
    for i, top in enumerate(logs):
        if top - logs[-1] < 1.0 - 1e-9:
            break
        win = norms[(logs <= top + 1e-12) & (logs >= top - 1.0 - 1e-12)]
        worst = max(worst, win.max() / win.min() - 1.0)
    return float(worst)


def ks_distance(a, b, interval) -> float:
    """Kolmogorov-Smirnov distance of two eigenvalue samples restricted to ``interval``."""
    lo, hi = interval
    a = np.asarray(a)
    b = np.asarray(b)
    a = a[(a >= lo) & (a <= hi)]
    b = b[(b >= lo) & (b <= hi)]
    if not len(a) or not len(b):
        return math.nan
    return float(stats.ks_2samp(a, b).statistic)
