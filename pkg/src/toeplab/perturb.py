"""Perturbations of half-line Toeplitz operators and their admissibility tests.

Improper integrals over ``r in [1, inf)`` are judged by sampling the integrand on
a log-spaced grid and fitting a power law to its last decade: exponent below
``-1 - margin`` converges, at or above ``-1 + margin`` diverges, anything else
(or a poor fit) is inconclusive, except that a tail within ``0.01`` of ``r^-1``
counts as the logarithmic divergence it resolves to.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .opforge import HalfLine, OperatorMatrix

__all__ = [
    "SequenceSpec",
    "AdmissibilityReport",
    "diagonal_potential",
    "seminorm_q",
    "admissibility_check",
    "finite_rank",
    "gsah_probe",
    "log_grid",
    "fit_tail",
]

MARGIN = 0.05
MIN_R2 = 0.99
HARMONIC_TOL = 0.01
GRID_POINTS = 200
KINDS = ("power", "log_power", "oscillatory", "explicit", "sparse", "sum")


@dataclass(frozen=True)
class SequenceSpec:
    """A real sequence ``gamma_1, gamma_2, ...``.

    ``power(p)``: ``n^-p``; ``log_power(p)``: ``log(n+2)^-p``;
    ``oscillatory(p)``: ``(-1)^n n^-p``; ``explicit``: the listed values then
    zeros; ``sparse``: values on a support; ``sum``: sum of ``parts``.
    Every kind carries a multiplicative ``scale``.
    """

    kind: str
    p: float = 0.0
    values: tuple[float, ...] = ()
    support: tuple[int, ...] = ()
    parts: tuple["SequenceSpec", ...] = ()
    scale: float = 1.0
    horizon: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sequence kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "sparse":
            if len(self.support) != len(self.values):
                raise ValueError("sparse support and values differ in length")
            if any(s < 1 for s in self.support):
                raise ValueError("sparse support indices start at 1")
        if self.horizon is not None:
            top = len(self.values) if self.kind == "explicit" else max(self.support, default=0)
            if top > self.horizon:
                raise ValueError(f"{self.kind} data reaches index {top} beyond horizon {self.horizon}")
        if not all(math.isfinite(v) for v in self.values) or not math.isfinite(self.scale):
            raise ValueError("sequence data must be finite")

    # constructors
    @classmethod
    def power(cls, p, scale=1.0):
        return cls("power", p=float(p), scale=scale)

    @classmethod
    def log_power(cls, p, scale=1.0):
        return cls("log_power", p=float(p), scale=scale)

    @classmethod
    def oscillatory(cls, p, scale=1.0):
        return cls("oscillatory", p=float(p), scale=scale)

    @classmethod
    def explicit(cls, values, scale=1.0, horizon=None):
        return cls("explicit", values=tuple(float(v) for v in values), scale=scale, horizon=horizon)

    @classmethod
    def sparse(cls, support, values, scale=1.0):
        return cls("sparse", support=tuple(int(s) for s in support),
                   values=tuple(float(v) for v in values), scale=scale)

    def __add__(self, other: "SequenceSpec") -> "SequenceSpec":
        mine = self.parts if self.kind == "sum" and self.scale == 1.0 else (self,)
        theirs = other.parts if other.kind == "sum" and other.scale == 1.0 else (other,)
        return SequenceSpec("sum", parts=mine + theirs)

    def materialize(self, n_max: int) -> np.ndarray:
        """``gamma_1 .. gamma_{n_max}``."""
        if self.horizon is not None and n_max > self.horizon:
            raise ValueError(f"horizon {self.horizon} < requested length {n_max}")
        n = np.arange(1, n_max + 1, dtype=float)
        if self.kind == "power":
            out = n ** -self.p
        elif self.kind == "log_power":
            out = np.log(n + 2.0) ** -self.p
        elif self.kind == "oscillatory":
            out = np.where(n % 2 == 0, 1.0, -1.0) * n ** -self.p
        elif self.kind == "explicit":
            out = np.zeros(n_max)
            k = min(n_max, len(self.values))
            out[:k] = self.values[:k]
        elif self.kind == "sparse":
            out = np.zeros(n_max)
            for s, v in zip(self.support, self.values):
                if s <= n_max:
                    out[s - 1] += v
        else:
            out = np.zeros(n_max)
            for part in self.parts:
                out += part.materialize(n_max)
        out = self.scale * out
        if not np.all(np.isfinite(out)):
            raise ValueError(f"non-finite values in {self.to_text()}")
        return out

    # text form
    def to_text(self) -> str:
        if self.kind == "sum":
            body = " + ".join(p.to_text() for p in self.parts)
            return body if self.scale == 1.0 else f"{self.scale!r}*({body})"
        if self.kind in ("power", "log_power", "oscillatory"):
            body = f"{self.kind}:{_num(self.p)}"
        elif self.kind == "explicit":
            body = "explicit:" + ",".join(_num(v) for v in self.values)
        else:
            body = "sparse:" + ",".join(str(s) for s in self.support) + "@" + \
                ",".join(_num(v) for v in self.values)
        return body if self.scale == 1.0 else f"{_num(self.scale)}*{body}"

    @classmethod
    def parse(cls, text: str) -> "SequenceSpec":
        """Parse ``[scale*]kind:args`` terms joined by `` + ``."""
        terms = [t.strip() for t in re.split(r"\s\+\s", text.strip()) if t.strip()]
        if not terms:
            raise ValueError("empty sequence spec")
        specs = [cls._parse_term(t) for t in terms]
        return specs[0] if len(specs) == 1 else SequenceSpec("sum", parts=tuple(specs))

    @classmethod
    def _parse_term(cls, term: str) -> "SequenceSpec":
        scale = 1.0
        m = re.match(r"^([-+0-9.eE]+)\s*\*\s*(.+)$", term)
        if m:
            scale, term = float(m.group(1)), m.group(2)
        kind, sep, args = term.partition(":")
        kind = kind.strip()
        if not sep:
            raise ValueError(f"sequence term {term!r} lacks ':'")
        try:
            if kind in ("power", "log_power", "oscillatory"):
                return cls(kind, p=float(args), scale=scale)
            if kind == "explicit":
                return cls.explicit([float(v) for v in args.split(",") if v.strip()], scale=scale)
            if kind == "sparse":
                sup, _, vals = args.partition("@")
                return cls.sparse([int(s) for s in sup.split(",")], [float(v) for v in vals.split(",")],
                                  scale=scale)
        except ValueError as exc:
            raise ValueError(f"bad arguments in {term!r}: {exc}") from None
        raise ValueError(f"unknown sequence kind {kind!r}")


def _num(x: float) -> str:
    short = f"{x:g}"
    return short if float(short) == x else repr(float(x))


@dataclass(frozen=True)
class AdmissibilityReport:
    condition: str
    window: tuple[float, float]
    r_max: float
    integral_estimate: float
    tail_exponent: float
    verdict: str
    r_squared: float = float("nan")
    seminorm: float | None = None
    truncated: bool = False
    details: dict = field(default_factory=dict)

    @property
    def converges(self) -> bool:
        return self.verdict == "converges"


# ---------------------------------------------------------------------------
# operators


def diagonal_potential(spec: SequenceSpec, N: int, hermitian: bool = True) -> OperatorMatrix:
    """``V e_n = v_n e_n`` for ``n = 1..N``."""
    v = spec.materialize(N)
    return OperatorMatrix(HalfLine(N), np.diag(v).astype(complex), hermitian=hermitian,
                          label=f"V[{spec.to_text()}]")


def finite_rank(vectors, betas, N: int) -> OperatorMatrix:
    """``sum_k beta_k |psi_k><psi_k|``; vectors are used as given."""
    vectors = [np.asarray(v, dtype=complex) for v in vectors]
    betas = [float(b) for b in betas]
    if len(vectors) != len(betas):
        raise ValueError(f"{len(vectors)} vectors but {len(betas)} couplings")
    data = np.zeros((N, N), dtype=complex)
    for v, b in zip(vectors, betas):
        if v.shape != (N,):
            raise ValueError(f"vector of shape {v.shape} does not live in C^{N}")
        data += b * np.outer(v, v.conj())
    data = 0.5 * (data + data.conj().T)
    return OperatorMatrix(HalfLine(N), data, hermitian=True, label="V[finite-rank]")


def _weighted_differences(gamma: np.ndarray, k: int, N: int) -> list[np.ndarray]:
    """``n^j (Delta^j gamma)_n`` for ``j = 0..k`` and ``n = 1..N``."""
    n = np.arange(1, N + 1, dtype=float)
    out = [gamma[:N]]
    d = gamma
    for j in range(1, k + 1):
        d = d[:-1] - d[1:]
        out.append(n ** j * d[:N])
    return out


def seminorm_q(spec: SequenceSpec, k: int, N: int) -> float:
    """``q_k`` over indices ``1..N``."""
    if not 0 <= k <= 3:
        raise ValueError("k must lie in 0..3")
    gamma = spec.materialize(N + k)
    return float(sum(np.abs(w).max() for w in _weighted_differences(gamma, k, N)))


# ---------------------------------------------------------------------------
# tail fits


def log_grid(r_max: float, points: int = GRID_POINTS) -> np.ndarray:
    return np.logspace(0.0, math.log10(r_max), points)


def fit_tail(r: np.ndarray, y: np.ndarray, start: float) -> tuple[float, float]:
    """Power-law exponent and R^2 of ``y`` against ``r`` over ``r >= start``.

    An identically vanishing tail returns ``(-inf, 1.0)``.
    """
    m = (r >= start) & np.isfinite(y)
    r, y = r[m], np.abs(y[m])
    if len(r) < 3:
        return float("nan"), float("nan")
    if np.all(y == 0):
        return float("-inf"), 1.0
    if np.any(y == 0):
        return float("nan"), float("nan")
    X, Y = np.log(r), np.log(y)
    slope, icept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + icept)
    var = Y.var()
    r2 = 1.0 if var == 0 else 1.0 - resid.var() / var
    return float(slope), float(r2)


def _verdict(exponent: float, r2: float, margin: float = MARGIN) -> str:
    if not (r2 >= MIN_R2) or math.isnan(exponent):
        return "inconclusive"
    if exponent < -1.0 - margin:
        return "converges"
    if exponent >= -1.0 + margin:
        return "diverges"
    # a clean r^-1 tail integrates to a logarithm
    if abs(exponent + 1.0) <= HARMONIC_TOL:
        return "diverges"
    return "inconclusive"


def _windows(r, a, b):
    lo = np.ceil(a * r).astype(np.int64)
    hi = np.floor(b * r).astype(np.int64)
    lo = np.maximum(lo, 1)
    return lo, hi


def _window_sup(values: np.ndarray, r, a, b) -> np.ndarray:
    lo, hi = _windows(r, a, b)
    out = np.full(len(r), np.nan)
    for i, (l, h) in enumerate(zip(lo, hi)):
        if h >= l:
            out[i] = np.abs(values[l - 1:h]).max()
    return out


def _window_l2(values: np.ndarray, r, a, b) -> np.ndarray:
    lo, hi = _windows(r, a, b)
    out = np.full(len(r), np.nan)
    for i, (l, h) in enumerate(zip(lo, hi)):
        if h >= l:
            out[i] = np.linalg.norm(values[l - 1:h])
    return out


def _integral(r, y) -> float:
    m = np.isfinite(y)
    return float(np.trapezoid(y[m], r[m]))


def _integral_report(cond, integrand, r, window, r_max, **extra) -> AdmissibilityReport:
    e, r2 = fit_tail(r, integrand, r_max / 10.0)
    return AdmissibilityReport(cond, window, r_max, _integral(r, integrand), e, _verdict(e, r2), r2,
                               **extra)


def admissibility_check(spec: SequenceSpec, condition: str, window=(1.0, 2.0),
                        r_max: float = 1e4) -> AdmissibilityReport:
    """Decide condition ``S``, ``M``, ``L`` or ``H`` for ``spec`` on ``[1, r_max]``."""
    a, b = float(window[0]), float(window[1])
    if not 0 < a < b:
        raise ValueError(f"window needs 0 < a < b, got {window}")
    if r_max < 1e3:
        raise ValueError(f"r_max must be at least 1e3, got {r_max}")
    condition = condition.upper()
    r = log_grid(r_max)
    n_max = int(math.floor(b * r_max)) + 3
    gamma = spec.materialize(n_max)
    if condition == "S":
        return _integral_report("S", _window_sup(gamma, r, a, b), r, (a, b), r_max)
    if condition == "H":
        return _integral_report("H", _window_l2(gamma, r, a, b), r, (a, b), r_max)
    if condition == "M":
        step = np.abs(gamma[1:] - gamma[:-1])
        base = _integral_report("M", _window_sup(step, r, a, b), r, (a, b), r_max)
        q_full = seminorm_q(spec, 1, n_max - 3)
        q_tenth = seminorm_q(spec, 1, (n_max - 3) // 10)
        stable = abs(q_full - q_tenth) <= 1e-3 * max(q_full, 1e-300)
        vanish = _vanishes(gamma)
        verdict = base.verdict
        if verdict == "converges" and not (stable and vanish):
            verdict = "diverges" if not vanish else "inconclusive"
        return AdmissibilityReport("M", (a, b), r_max, base.integral_estimate, base.tail_exponent,
                                   verdict, base.r_squared, q_full,
                                   details={"q1_stable": stable, "vanishes": vanish})
    if condition == "L":
        return _condition_l(spec, gamma, r, (a, b), r_max)
    raise ValueError(f"unknown condition {condition!r}; expected S, M, L or H")


def _vanishes(gamma: np.ndarray) -> bool:
    # |gamma_n| < 1e-6 beyond half the horizon, or a decaying monotone envelope
    tail = np.abs(gamma[len(gamma) // 2:])
    if tail.max() < 1e-6:
        return True
    env = np.maximum.accumulate(np.abs(gamma)[::-1])[::-1]
    r = log_grid(len(gamma) - 1)
    e, r2 = fit_tail(r, env[np.floor(r).astype(int) - 1], len(gamma) / 10.0)
    return bool(r2 >= MIN_R2 and e <= -MARGIN)


def _condition_l(spec, gamma, r, window, r_max) -> AdmissibilityReport:
    a, b = window
    N = len(gamma) - 3
    parts = _weighted_differences(gamma, 2, N)
    density = np.abs(parts[0]) + np.abs(parts[1]) + np.abs(parts[2])
    q2 = seminorm_q(spec, 2, N)
    q2_tenth = seminorm_q(spec, 2, N // 10)
    stable = abs(q2 - q2_tenth) <= 1e-3 * max(q2, 1e-300)
    dens_exp, dens_r2 = fit_tail(r, _window_sup(density, r, a, b), r_max / 10.0)
    gam_exp, gam_r2 = fit_tail(r, _window_sup(gamma, r, a, b), r_max / 10.0)
    bounded = dens_r2 >= MIN_R2 and dens_exp <= MARGIN
    vanish = gam_r2 >= MIN_R2 and gam_exp <= -MARGIN
    if stable and bounded and vanish:
        verdict = "converges"
    elif (dens_r2 >= MIN_R2 and dens_exp >= MARGIN) or (gam_r2 >= MIN_R2 and gam_exp >= -MARGIN):
        verdict = "diverges"
    else:
        verdict = "inconclusive"
    return AdmissibilityReport("L", window, r_max, q2, gam_exp, verdict, min(dens_r2, gam_r2), q2,
                               details={"q2_stable": stable, "density_exponent": dens_exp})


def gsah_probe(V: OperatorMatrix, s: float, window=(1.0, 2.0), r=None) -> AdmissibilityReport:
    """``int_1^inf ||r^s chi(X/r) V|| dr/r`` with ``chi`` the indicator of ``[a, b]``.

    The reported exponent refers to the integrand against ``dr``. Radii whose
    window leaves ``{1..N}`` are dropped and the report is flagged truncated.
    """
    if not isinstance(V.space, HalfLine):
        raise ValueError("the integral probe needs a half-line operator")
    if not 0 <= s < 2:
        raise ValueError("s must lie in [0, 2)")
    a, b = float(window[0]), float(window[1])
    if not 0 < a < b:
        raise ValueError(f"window needs 0 < a < b, got {window}")
    N = V.space.N
    r = log_grid(N / b) if r is None else np.asarray(r, dtype=float)
    truncated = bool(np.any(b * r > N * (1 + 1e-12)))
    r = r[b * r <= N * (1 + 1e-12)]
    data = V.data
    diagonal = not np.any(data - np.diag(np.diag(data)))
    lo, hi = _windows(r, a, b)
    norms = np.zeros(len(r))
    for i, (l, h) in enumerate(zip(lo, hi)):
        if h < l:
            continue
        if diagonal:
            norms[i] = np.abs(np.diag(data)[l - 1:h]).max()
        else:
            norms[i] = np.linalg.norm(data[l - 1:h, :], 2)
    integrand = r ** (s - 1.0) * norms
    r_max = float(r[-1]) if len(r) else 1.0
    e, r2 = fit_tail(r, integrand, r_max / 10.0)
    return AdmissibilityReport(f"probe(s={s:g})", (a, b), r_max, _integral(r, integrand), e,
                               _verdict(e, r2), r2, truncated=truncated)
