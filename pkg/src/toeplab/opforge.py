"""Truncated Toeplitz, Hankel and Laurent matrices and the commutator identities they satisfy.

Half-line matrices act on ``e_1 .. e_N``. Lattice matrices act on the box
``{-N..N}^d`` with sites enumerated in row-major order.
"""

from __future__ import annotations

import csv
import itertools
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
from scipy.sparse.linalg import eigsh

from .symbolkit import Symbol, derivative, multiply

__all__ = [
    "HalfLine",
    "LatticeBox",
    "OperatorMatrix",
    "DefectReport",
    "toeplitz_matrix",
    "laurent_matrix",
    "hankel_matrix",
    "position_matrix",
    "conjugate_operator",
    "commutator",
    "icommutator",
    "defect_report",
    "hankel_correction",
    "sarason_defect",
    "position_commutator_defect",
    "commutator_formula_rhs",
    "compact_part",
    "product_operator",
    "product_decomposition_defect",
    "singular_decay",
    "holder_bound_check",
    "relbound_norms",
    "write_binary",
    "read_binary",
    "write_csv",
]

HERM_TOL = 1e-13
LANCZOS_MIN = 1000
SPARSE_MIN = 500
SPARSE_DENSITY = 0.05
MAGIC = b"TMLB"
VERSION = 1
HEADER = struct.Struct("<4sIIQIII")  # magic, version, space tag, N, d, hermitian, reserved


@dataclass(frozen=True)
class HalfLine:
    N: int
    tag = 1

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")

    @property
    def d(self) -> int:
        return 1

    @property
    def size(self) -> int:
        return self.N

    def coordinates(self) -> np.ndarray:
        return np.arange(1, self.N + 1, dtype=float)[:, None]


@dataclass(frozen=True)
class LatticeBox:
    d: int
    N: int
    tag = 2

    def __post_init__(self):
        if self.d < 1 or self.N < 0:
            raise ValueError(f"invalid lattice box d={self.d}, N={self.N}")

    @property
    def side(self) -> int:
        return 2 * self.N + 1

    @property
    def size(self) -> int:
        return self.side ** self.d

    def coordinates(self) -> np.ndarray:
        """Site coordinates, shape ``(size, d)``, row-major."""
        axes = [np.arange(-self.N, self.N + 1)] * self.d
        return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, self.d)

    def index(self, alpha) -> int:
        alpha = np.atleast_1d(alpha)
        return int(np.ravel_multi_index(tuple(int(a) + self.N for a in alpha), (self.side,) * self.d))


Space = HalfLine | LatticeBox


class OperatorMatrix:
    """Dense complex matrix tied to a truncation space. The array is read-only."""

    __slots__ = ("space", "data", "hermitian", "label")

    def __init__(self, space: Space, data, hermitian: bool | None = None, label: str = ""):
        data = np.array(data, dtype=complex)
        if data.shape != (space.size, space.size):
            raise ValueError(f"matrix shape {data.shape} does not match space of size {space.size}")
        if hermitian is None:
            hermitian = _is_hermitian(data)
        elif hermitian and not _is_hermitian(data):
            raise ValueError(f"{label or 'matrix'} flagged Hermitian but is not")
        data.setflags(write=False)
        self.space = space
        self.data = data
        self.hermitian = bool(hermitian)
        self.label = label

    def __repr__(self):
        return f"<OperatorMatrix {self.label!r} {self.space} hermitian={self.hermitian}>"

    @property
    def shape(self):
        return self.data.shape

    def _check(self, other: "OperatorMatrix"):
        if self.space != other.space:
            raise ValueError(f"space mismatch: {self.space} vs {other.space}")

    def __add__(self, other):
        self._check(other)
        return OperatorMatrix(self.space, self.data + other.data, label=f"{self.label}+{other.label}")

    def __sub__(self, other):
        self._check(other)
        return OperatorMatrix(self.space, self.data - other.data, label=f"{self.label}-{other.label}")

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            self._check(other)
            return OperatorMatrix(self.space, self.data @ other.data, hermitian=False,
                                  label=f"{self.label}{other.label}")
        return self.data @ other

    def scale(self, z: complex, label: str | None = None) -> "OperatorMatrix":
        return OperatorMatrix(self.space, z * self.data, label=label or f"{z}*{self.label}")

    def adjoint(self) -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.data.conj().T, hermitian=self.hermitian,
                              label=f"{self.label}^*")

    def norm(self) -> float:
        n = self.data.shape[0]
        if self.hermitian and n > LANCZOS_MIN:
            # largest |eigenvalue| of a Hermitian matrix is its spectral norm
            top = eigsh(self.data, k=1, which="LM", return_eigenvectors=False, tol=1e-12)
            return float(abs(top[0]))
        return float(np.linalg.norm(self.data, 2))

    def relabel(self, label: str) -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.data, hermitian=self.hermitian, label=label)


def _is_hermitian(a: np.ndarray) -> bool:
    scale = np.abs(a).max() if a.size else 0.0
    return bool(np.abs(a - a.conj().T).max(initial=0.0) <= HERM_TOL * max(scale, 1e-300))


def _require_1d(f: Symbol):
    if f.dim != 1:
        raise ValueError(f"half-line operators need a symbol on T^1, got d={f.dim}")


def _coeff_vector(f: Symbol, lo: int, hi: int) -> np.ndarray:
    """``[f_lo, ..., f_hi]``."""
    return np.array([f.coefficient(n) for n in range(lo, hi + 1)], dtype=complex)


# ---------------------------------------------------------------------------
# builders


def _toeplitz_data(f: Symbol, N: int) -> np.ndarray:
    col = _coeff_vector(f, 0, N - 1)
    row = np.array([f.coefficient(-n) for n in range(N)], dtype=complex)
    return sla.toeplitz(col, row)


def _hankel_data(f: Symbol, N: int) -> np.ndarray:
    return sla.hankel(_coeff_vector(f, 1, N), _coeff_vector(f, N, 2 * N - 1))


def toeplitz_matrix(f: Symbol, N: int) -> OperatorMatrix:
    """``(T_f)_{nk} = f_{n-k}`` for ``1 <= n, k <= N``."""
    _require_1d(f)
    return OperatorMatrix(HalfLine(N), _toeplitz_data(f, N), hermitian=f.is_real_within(),
                          label=f"T[{f.label or 'f'}]")


def hankel_matrix(f: Symbol, N: int) -> OperatorMatrix:
    """``(H_f)_{nk} = f_{n+k-1}``."""
    _require_1d(f)
    data = _hankel_data(f, N)
    return OperatorMatrix(HalfLine(N), data, label=f"H[{f.label or 'f'}]")


def laurent_matrix(f: Symbol, N: int, boundary: str = "truncate") -> OperatorMatrix:
    """Convolution ``(L_f psi)_beta = sum_alpha f_alpha psi_{beta - alpha}`` on the box."""
    if boundary not in ("truncate", "periodic"):
        raise ValueError(f"boundary must be 'truncate' or 'periodic', got {boundary!r}")
    box = LatticeBox(f.dim, N)
    side = box.side
    if boundary == "periodic" and any(side <= 2 * b + 1 for b in f.bandwidth):
        raise ValueError(f"box side {side} too small for bandwidth {f.bandwidth} in periodic mode")
    coords = box.coordinates().astype(np.int64) + N
    rows = np.arange(box.size)
    data = np.zeros((box.size, box.size), dtype=complex)
    shape = (side,) * f.dim
    for alpha, c in f.coeffs.items():
        src = coords - np.array(alpha)
        if boundary == "periodic":
            src %= side
            keep = np.ones(box.size, dtype=bool)
        else:
            keep = np.all((src >= 0) & (src < side), axis=1)
        cols = np.ravel_multi_index(tuple(src[keep].T), shape)
        data[rows[keep], cols] += c
    return OperatorMatrix(box, data, hermitian=f.is_real_within(), label=f"L[{f.label or 'f'}]")


def position_matrix(space: Space, axis: int = 0) -> OperatorMatrix:
    """``X e_n = n e_n`` on the half-line, ``X_j e_alpha = alpha_j e_alpha`` on a box."""
    coords = space.coordinates()
    if not 0 <= axis < coords.shape[1]:
        raise ValueError(f"axis {axis} out of range")
    return OperatorMatrix(space, np.diag(coords[:, axis]).astype(complex), hermitian=True,
                          label=f"X{axis + 1}" if isinstance(space, LatticeBox) else "X")


def conjugate_operator(g, space: Space, boundary: str = "truncate") -> OperatorMatrix:
    """``A_g = (T_g X + X T_g)/2`` on the half-line; on a box ``g`` is one symbol per axis."""
    if isinstance(space, HalfLine):
        if isinstance(g, (list, tuple)):
            (g,) = g
        if not g.is_real_within():
            raise ValueError("conjugate operator needs a real-valued symbol")
        T = _toeplitz_data(g, space.N)
        x = np.arange(1, space.N + 1, dtype=float)
        data = 0.5 * (T * x[None, :] + x[:, None] * T)
        return OperatorMatrix(space, data, hermitian=True, label=f"A[{g.label or 'g'}]")
    parts = [g] if isinstance(g, Symbol) else list(g)
    if len(parts) != space.d:
        raise ValueError(f"need {space.d} component symbols, got {len(parts)}")
    coords = space.coordinates()
    data = np.zeros((space.size, space.size), dtype=complex)
    for j, gj in enumerate(parts):
        if not gj.is_real_within():
            raise ValueError("conjugate operator needs real-valued symbols")
        L = laurent_matrix(gj, space.N, boundary).data
        x = coords[:, j]
        data += 0.5 * (L * x[None, :] + x[:, None] * L)
    return OperatorMatrix(space, data, hermitian=True, label="A[grad]")


def _bracket(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``ab - ba``, through CSR when one factor is mostly zeros."""
    n = a.shape[0]
    if n > SPARSE_MIN:
        for x, y, sign in ((a, b, 1.0), (b, a, -1.0)):
            if np.count_nonzero(x) < SPARSE_DENSITY * x.size:
                xs = sps.csr_array(x)
                return sign * (xs @ y - (xs.T @ y.T).T)
    return a @ b - b @ a


def commutator(A: OperatorMatrix, B: OperatorMatrix) -> OperatorMatrix:
    """``AB - BA``."""
    A._check(B)
    a, b = A.data, B.data
    return OperatorMatrix(A.space, _bracket(a, b), hermitian=False, label=f"[{A.label},{B.label}]")


def icommutator(A: OperatorMatrix, B: OperatorMatrix) -> OperatorMatrix:
    """``i(AB - BA)``, Hermitian for Hermitian inputs (symmetrized to kill rounding)."""
    A._check(B)
    c = 1j * _bracket(A.data, B.data)
    if A.hermitian and B.hermitian:
        c = 0.5 * (c + c.conj().T)
    return OperatorMatrix(A.space, c, hermitian=A.hermitian and B.hermitian,
                          label=f"i[{A.label},{B.label}]")


# ---------------------------------------------------------------------------
# identities


@dataclass(frozen=True)
class DefectReport:
    name: str
    interior_max: float
    boundary_max: float
    interior_size: int

    @property
    def total_max(self) -> float:
        return max(self.interior_max, self.boundary_max)


def defect_report(D: np.ndarray, trim: int, name: str, trim_front: int = 0) -> DefectReport:
    """Split ``|D|`` into the block ``[trim_front, N - trim)^2`` and its complement."""
    D = np.abs(np.asarray(D))
    n = D.shape[0]
    lo, hi = trim_front, max(trim_front, n - trim)
    inner = D[lo:hi, lo:hi]
    mask = np.ones_like(D, dtype=bool)
    mask[lo:hi, lo:hi] = False
    return DefectReport(name, float(inner.max(initial=0.0)), float(D[mask].max(initial=0.0)),
                        trim)


def _reflect(f: Symbol) -> Symbol:
    """``f(-theta)``."""
    return Symbol(f.dim, {tuple(-a for a in alpha): c for alpha, c in f.coeffs.items()})


def hankel_correction(f: Symbol, g: Symbol, N: int) -> np.ndarray:
    """``T_{fg} - T_f T_g`` on the half-line, compressed to ``N x N``.

    With ``(H_f)_{nk} = f_{n+k-1}`` this is ``H_f H_{g~}`` where ``g~(theta) = g(-theta)``;
    it coincides with ``H_{conj f}^* H_g`` only when both symbols are even.
    """
    _require_1d(f)
    _require_1d(g)
    return _hankel_data(f, N) @ _hankel_data(_reflect(g), N)


def sarason_defect(f: Symbol, g: Symbol, N: int) -> DefectReport:
    """Defect of ``T_f T_g = T_{fg} - H_f H_{g~}`` at truncation ``N``."""
    _require_1d(f)
    _require_1d(g)
    Tf, Tg = _toeplitz_data(f, N), _toeplitz_data(g, N)
    Tfg = _toeplitz_data(multiply(f, g), N)
    D = Tf @ Tg - Tfg + hankel_correction(f, g, N)
    return defect_report(D, f.bandwidth[0] + g.bandwidth[0], "toeplitz-product")


def position_commutator_defect(h: Symbol, N: int) -> DefectReport:
    """Defect of ``[X, T_h] = -i T_{h'}``."""
    _require_1d(h)
    X = position_matrix(HalfLine(N))
    T = toeplitz_matrix(h, N)
    D = commutator(X, T).data + 1j * _toeplitz_data(derivative(h), N)
    return defect_report(D, h.bandwidth[0], "position-commutator")


def _padded(f: Symbol, g: Symbol, N: int) -> int:
    return N + 2 * (f.bandwidth[0] + g.bandwidth[0]) + 2


def commutator_formula_rhs(f: Symbol, g: Symbol, N: int, compressed: bool = True) -> OperatorMatrix:
    """Right-hand side of the formula for ``i[A_g, T_f]``:

        (T_g T_f' + T_f' T_g)/2 + (i/2)([T_g, T_f] X + X [T_g, T_f]).

    With ``compressed`` (default) every product is the exact ``N x N`` compression
    of the half-line operator, evaluated at a padded size and cropped. Without
    it the pieces are multiplied at size ``N``, which reproduces the bracket of
    truncations identically.
    """
    _require_1d(f)
    _require_1d(g)
    if not (f.is_real_within() and g.is_real_within()):
        raise ValueError("formula needs real-valued symbols")
    M = _padded(f, g, N) if compressed else N
    Tg, Tf = _toeplitz_data(g, M), _toeplitz_data(f, M)
    Tdf = _toeplitz_data(derivative(f), M)
    x = np.arange(1, M + 1, dtype=float)
    K = Tg @ Tf - Tf @ Tg
    rhs = 0.5 * (Tg @ Tdf + Tdf @ Tg) + 0.5j * (K * x[None, :] + x[:, None] * K)
    rhs = rhs[:N, :N]
    rhs = 0.5 * (rhs + rhs.conj().T)
    return OperatorMatrix(HalfLine(N), rhs, hermitian=True, label="formula-rhs")


def compact_part(f: Symbol, g: Symbol, N: int, compressed: bool = True) -> OperatorMatrix:
    """``[T_g, T_f] X + X [T_g, T_f]`` (exact compression by default)."""
    _require_1d(f)
    _require_1d(g)
    M = _padded(f, g, N) if compressed else N
    Tg, Tf = _toeplitz_data(g, M), _toeplitz_data(f, M)
    x = np.arange(1, M + 1, dtype=float)
    K = Tg @ Tf - Tf @ Tg
    return OperatorMatrix(HalfLine(N), (K * x[None, :] + x[:, None] * K)[:N, :N], hermitian=False,
                          label="compact-part")


def product_operator(f: Symbol, g: Symbol, N: int) -> OperatorMatrix:
    """``Re(T_f T_g)`` for real ``f, g`` as ``T_fg - (K + K^*)/2`` with ``K = H_f H_{g~}``.

    This is the exact compression of the half-line operator.
    """
    _require_1d(f)
    _require_1d(g)
    if not (f.is_real_within() and g.is_real_within()):
        raise ValueError("product operator needs real-valued symbols")
    K = hankel_correction(f, g, N)
    data = _toeplitz_data(multiply(f, g), N) - 0.5 * (K + K.conj().T)
    return OperatorMatrix(HalfLine(N), 0.5 * (data + data.conj().T), hermitian=True, label="Re(TfTg)")


def product_decomposition_defect(f: Symbol, g: Symbol, N: int) -> DefectReport:
    """``(T_f T_g + T_g T_f)/2`` at truncation against :func:`product_operator`."""
    Tf, Tg = _toeplitz_data(f, N), _toeplitz_data(g, N)
    D = 0.5 * (Tf @ Tg + Tg @ Tf) - product_operator(f, g, N).data
    return defect_report(D, f.bandwidth[0] + g.bandwidth[0], "product")


def singular_decay(M, k: int) -> np.ndarray:
    """Top ``k`` singular values, descending."""
    a = M.data if isinstance(M, OperatorMatrix) else np.asarray(M)
    if k > a.shape[0]:
        raise ValueError(f"k={k} exceeds matrix dimension {a.shape[0]}")
    return sla.svdvals(a)[:k]


def holder_bound_check(f: Symbol, g: Symbol, Phi: Callable, Psi: Callable, p: int, q: int,
                       alpha: float) -> tuple[float, float]:
    """``|<e_p, Phi(X) H_f^* H_g Psi(X) e_q>|`` and its Hoelder bound with ``beta = alpha/(alpha-1)``."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    beta = alpha / (alpha - 1.0)
    bw = max(f.bandwidth[0], g.bandwidth[0])
    N = max(p, q) + bw + 1
    Hf, Hg = _hankel_data(f, N), _hankel_data(g, N)
    entry = (Hf.conj().T @ Hg)[p - 1, q - 1]
    lhs = abs(np.conj(Phi(p)) * Psi(q) * entry)
    tail_f = np.abs(_coeff_vector(f, p, max(p, bw)))
    tail_g = np.abs(_coeff_vector(g, q, max(q, bw)))
    rhs = abs(Phi(p)) * abs(Psi(q)) * (tail_f ** alpha).sum() ** (1 / alpha) \
        * (tail_g ** beta).sum() ** (1 / beta)
    return float(lhs), float(rhs)


def relbound_norms(g: Symbol, N: int) -> tuple[float, float]:
    """``||A_g X^{-1}||`` and ``||A_g^2 X^{-2}||`` at truncation ``N``."""
    A = conjugate_operator(g, HalfLine(N)).data
    xinv = 1.0 / np.arange(1, N + 1, dtype=float)
    first = np.linalg.norm(A * xinv[None, :], 2)
    second = np.linalg.norm((A @ A) * (xinv ** 2)[None, :], 2)
    return float(first), float(second)


# ---------------------------------------------------------------------------
# export


def write_binary(M: OperatorMatrix, path) -> None:
    """32-byte header then column-major ``(re, im)`` float64 pairs."""
    sp = M.space
    N, d = (sp.N, 1) if isinstance(sp, HalfLine) else (sp.N, sp.d)
    header = HEADER.pack(MAGIC, VERSION, sp.tag, N, d, int(M.hermitian), 0)
    body = np.asarray(M.data, dtype="<c16").ravel(order="F").view("<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())


def read_binary(path, label: str = "") -> OperatorMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ValueError("file too short for a matrix header")
    magic, version, tag, N, d, herm, _ = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    if tag == HalfLine.tag:
        space = HalfLine(N)
    elif tag == LatticeBox.tag:
        space = LatticeBox(d, N)
    else:
        raise ValueError(f"unknown space tag {tag}")
    vals = np.frombuffer(raw, dtype="<f8", offset=HEADER.size)
    if vals.size != 2 * space.size ** 2:
        raise ValueError("payload size does not match header")
    data = vals.view("<c16").reshape((space.size, space.size), order="F")
    return OperatorMatrix(space, data, hermitian=bool(herm), label=label)


def write_csv(M: OperatorMatrix, path, threshold: float = 1e-14) -> None:
    """Debug export ``row,col,re,im`` of entries with modulus above ``threshold`` (0-based)."""
    rows, cols = np.nonzero(np.abs(M.data) > threshold)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "re", "im"])
        for r, c in zip(rows, cols):
            z = M.data[r, c]
            w.writerow([int(r), int(c), f"{z.real:.17g}", f"{z.imag:.17g}"])
