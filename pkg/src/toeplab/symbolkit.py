"""Band-limited symbols on the torus and the function-level quantities built on them.

A :class:`Symbol` stores finitely many Fourier coefficients ``c[alpha]`` so that

    f(theta) = sum_alpha c[alpha] * exp(i alpha . theta),   theta in [0, 2 pi)^d.

Everything downstream (Toeplitz/Laurent matrices, derivatives, products,
critical points, Mourre constants) is derived from that coefficient map.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize

__all__ = [
    "Symbol",
    "CriticalSet",
    "MourreConstants",
    "from_coefficients",
    "sample_fourier",
    "derivative",
    "gradient",
    "gradient_norm_sq",
    "multiply",
    "constant",
    "cosine",
    "sine",
    "laplacian",
    "critical_set",
    "thresholds",
    "mourre_constants",
    "torus_grid",
]

PRUNE = 1e-15
TWO_PI = 2.0 * np.pi


class Symbol:
    """Trigonometric polynomial on ``T^d`` held as Fourier data.

    Instances are immutable; arithmetic returns new symbols.
    """

    __slots__ = ("_dim", "_coeffs", "_alphas", "_values", "_real", "_closed_form", "label")

    def __init__(self, dim: int, coeffs: Mapping[tuple[int, ...], complex],
                 closed_form: Callable | None = None, label: str = ""):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        clean = {}
        for alpha, c in coeffs.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != dim:
                raise ValueError(f"index {alpha} does not live in Z^{dim}")
            c = complex(c)
            if abs(c) > PRUNE:
                clean[alpha] = c
        ordered = dict(sorted(clean.items()))
        self._dim = dim
        self._coeffs = MappingProxyType(ordered)
        if ordered:
            self._alphas = np.array(list(ordered), dtype=np.int64).reshape(-1, dim)
            self._values = np.array(list(ordered.values()), dtype=complex)
        else:
            self._alphas = np.zeros((0, dim), dtype=np.int64)
            self._values = np.zeros(0, dtype=complex)
        self._real = all(
            ordered.get(tuple(-a for a in alpha), 0.0) == c.conjugate()
            for alpha, c in ordered.items()
        )
        self._closed_form = closed_form
        self.label = label

    # -- basic data -------------------------------------------------------
    @property
    def dim(self) -> int:
        return self._dim

    @property
    def coeffs(self) -> Mapping[tuple[int, ...], complex]:
        return self._coeffs

    @property
    def bandwidth(self) -> tuple[int, ...]:
        if not len(self._alphas):
            return (0,) * self._dim
        return tuple(int(b) for b in np.abs(self._alphas).max(axis=0))

    @property
    def is_real(self) -> bool:
        """True iff ``c[-alpha] == conj(c[alpha])`` for every stored index."""
        return self._real

    def is_real_within(self, tol: float = 1e-12) -> bool:
        for alpha, c in self._coeffs.items():
            partner = self._coeffs.get(tuple(-a for a in alpha), 0.0)
            if abs(partner - c.conjugate()) > tol:
                return False
        return True

    @property
    def is_constant(self) -> bool:
        return all(not any(alpha) for alpha in self._coeffs)

    def coefficient(self, alpha) -> complex:
        if np.isscalar(alpha):
            alpha = (int(alpha),)
        return self._coeffs.get(tuple(int(a) for a in alpha), 0j)

    def l1_norm(self) -> float:
        return float(np.abs(self._values).sum())

    # -- evaluation -------------------------------------------------------
    def __call__(self, theta) -> np.ndarray:
        """Evaluate the finite Fourier sum.

        ``theta`` has shape ``(..., d)``; for ``d == 1`` a scalar or 1-D array of
        angles is also accepted.
        """
        theta = np.asarray(theta, dtype=float)
        if self._dim == 1 and (theta.ndim <= 1 or theta.shape[-1] != 1):
            theta = theta[..., None]
        if theta.shape[-1] != self._dim:
            raise ValueError(f"expected points in T^{self._dim}, got shape {theta.shape}")
        if not len(self._values):
            return np.zeros(theta.shape[:-1], dtype=complex)
        phase = theta @ self._alphas.T.astype(float)
        return np.exp(1j * phase) @ self._values

    def real_values(self, theta) -> np.ndarray:
        return self(theta).real

    def closed_form(self, theta):
        if self._closed_form is None:
            return None
        return self._closed_form(theta)

    def check_closed_form(self, points: int = 64, tol: float = 1e-10) -> bool:
        if self._closed_form is None:
            return True
        if self._dim == 1:
            theta = torus_grid(1, points)[..., 0]
        else:
            theta = torus_grid(self._dim, max(8, round(points ** (1 / self._dim))))
        return bool(np.max(np.abs(self(theta) - self._closed_form(theta))) <= tol)

    # -- arithmetic ---------------------------------------------------------
    def _combine(self, other: "Symbol", sign: float) -> "Symbol":
        if other.dim != self.dim:
            raise ValueError("symbols live on tori of different dimension")
        out = dict(self._coeffs)
        for alpha, c in other.coeffs.items():
            out[alpha] = out.get(alpha, 0.0) + sign * c
        return Symbol(self.dim, out)

    def __add__(self, other):
        if isinstance(other, Symbol):
            return self._combine(other, 1.0)
        return self._combine(constant(other, self.dim), 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Symbol):
            return self._combine(other, -1.0)
        return self._combine(constant(other, self.dim), -1.0)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Symbol(self.dim, {a: -c for a, c in self._coeffs.items()})

    def __mul__(self, other):
        if isinstance(other, Symbol):
            return multiply(self, other)
        return Symbol(self.dim, {a: other * c for a, c in self._coeffs.items()})

    __rmul__ = __mul__

    def conj(self) -> "Symbol":
        """Symbol of the pointwise complex conjugate."""
        return Symbol(self.dim, {tuple(-a for a in alpha): c.conjugate()
                                 for alpha, c in self._coeffs.items()})

    def __eq__(self, other):
        if not isinstance(other, Symbol):
            return NotImplemented
        return self.dim == other.dim and dict(self._coeffs) == dict(other.coeffs)

    def __hash__(self):
        return hash((self.dim, tuple(self._coeffs.items())))

    def allclose(self, other: "Symbol", atol: float = 1e-12) -> bool:
        keys = set(self._coeffs) | set(other.coeffs)
        return all(abs(self.coefficient(k) - other.coefficient(k)) <= atol for k in keys)

    def __repr__(self):
        name = f" {self.label!r}" if self.label else ""
        return f"<Symbol{name} d={self.dim} terms={len(self._coeffs)} bandwidth={self.bandwidth}>"

    # -- serialization ----------------------------------------------------
    def to_text(self) -> str:
        lines = [f"dim={self.dim}"]
        for alpha, c in self._coeffs.items():
            lines.append(" ".join(str(a) for a in alpha) + f" {c.real!r} {c.imag!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Symbol":
        rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not rows or not rows[0].startswith("dim="):
            raise ValueError("symbol text must start with a 'dim=<d>' header")
        dim = int(rows[0][4:])
        entries = []
        for ln in rows[1:]:
            parts = ln.split()
            if len(parts) != dim + 2:
                raise ValueError(f"malformed coefficient line: {ln!r}")
            alpha = tuple(int(p) for p in parts[:dim])
            entries.append((alpha, complex(float(parts[dim]), float(parts[dim + 1]))))
        return from_coefficients(entries, dim)


def torus_grid(dim: int, points: int | Sequence[int]) -> np.ndarray:
    """Uniform grid on ``[0, 2pi)^d`` with shape ``(*points, d)``."""
    if np.isscalar(points):
        points = (int(points),) * dim
    axes = [TWO_PI * np.arange(m) / m for m in points]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


# ---------------------------------------------------------------------------
# constructors


def from_coefficients(entries, dim: int, prune: float = PRUNE) -> Symbol:
    """Build a symbol from ``(multi-index, amplitude)`` pairs.

    A dict is also accepted. Integer indices are promoted to 1-tuples when
    ``dim == 1``. Duplicate indices are rejected.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if isinstance(entries, Mapping):
        entries = list(entries.items())
    coeffs: dict[tuple[int, ...], complex] = {}
    for alpha, c in entries:
        if np.isscalar(alpha):
            alpha = (alpha,)
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != dim:
            raise ValueError(f"index {alpha} does not live in Z^{dim}")
        if alpha in coeffs:
            raise ValueError(f"duplicate Fourier index {alpha}")
        coeffs[alpha] = complex(c)
    return Symbol(dim, {a: c for a, c in coeffs.items() if abs(c) > prune})


def constant(value: complex, dim: int = 1) -> Symbol:
    return Symbol(dim, {(0,) * dim: value}, label=f"{value}")


def cosine(k: int = 1, amplitude: float = 1.0, axis: int = 0, dim: int = 1) -> Symbol:
    """``amplitude * cos(k * theta_axis)``."""
    e = [0] * dim
    e[axis] = k
    m = [-x for x in e]
    return Symbol(dim, {tuple(e): amplitude / 2, tuple(m): amplitude / 2})


def sine(k: int = 1, amplitude: float = 1.0, axis: int = 0, dim: int = 1) -> Symbol:
    """``amplitude * sin(k * theta_axis)``."""
    e = [0] * dim
    e[axis] = k
    m = [-x for x in e]
    return Symbol(dim, {tuple(e): -0.5j * amplitude, tuple(m): 0.5j * amplitude})


def laplacian(dim: int) -> Symbol:
    """Symbol ``2 sum_j cos(theta_j)`` of the discrete Laplacian on ``Z^d``."""
    s = Symbol(dim, {})
    for j in range(dim):
        s = s + cosine(1, 2.0, axis=j, dim=dim)

    def exact(theta):
        theta = np.asarray(theta, dtype=float)
        return 2.0 * np.cos(theta) if dim == 1 else 2.0 * np.cos(theta).sum(axis=-1)

    return Symbol(dim, s.coeffs, closed_form=exact, label=f"laplacian-d{dim}")


def sample_fourier(evaluator: Callable, bandwidth, grid, dim: int | None = None,
                   prune: float = PRUNE) -> Symbol:
    """Fourier coefficients of ``evaluator`` by the trapezoid rule.

    The rule is exact for trigonometric polynomials whose degree stays below
    the grid size, so ``grid >= 4 * bandwidth + 4`` per axis is enforced.
    Coefficients with ``|alpha_j| > bandwidth_j`` are discarded.
    """
    if np.isscalar(bandwidth):
        dim = dim or 1
        bandwidth = (int(bandwidth),) * dim
    bandwidth = tuple(int(b) for b in bandwidth)
    dim = len(bandwidth)
    if np.isscalar(grid):
        grid = (int(grid),) * dim
    grid = tuple(int(g) for g in grid)
    for b, g in zip(bandwidth, grid):
        if g < 4 * b + 4:
            raise ValueError(f"grid {g} too coarse for bandwidth {b}; need >= {4 * b + 4}")
    theta = torus_grid(dim, grid)
    vals = np.asarray(evaluator(theta[..., 0] if dim == 1 else theta), dtype=complex)
    if vals.shape != grid:
        vals = np.broadcast_to(vals, grid)
    bad = ~np.isfinite(vals)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"non-finite evaluator output at grid point theta={theta[idx].tolist()}")
    spec = np.fft.fftn(vals) / float(np.prod(grid))
    coeffs = {}
    for alpha in itertools.product(*[range(-b, b + 1) for b in bandwidth]):
        idx = tuple(a % g for a, g in zip(alpha, grid))
        c = spec[idx]
        if abs(c) > prune:
            coeffs[alpha] = complex(c)
    return Symbol(dim, coeffs, closed_form=evaluator)


# ---------------------------------------------------------------------------
# calculus


def derivative(s: Symbol, axis: int = 0) -> Symbol:
    """Partial derivative along ``axis``: ``c[alpha] -> i alpha_axis c[alpha]``."""
    if not 0 <= axis < s.dim:
        raise ValueError(f"axis {axis} out of range for d={s.dim}")
    return Symbol(s.dim, {a: 1j * a[axis] * c for a, c in s.coeffs.items()})


def gradient(s: Symbol) -> list[Symbol]:
    return [derivative(s, j) for j in range(s.dim)]


def multiply(a: Symbol, b: Symbol) -> Symbol:
    """Pointwise product, i.e. convolution of the coefficient maps."""
    if a.dim != b.dim:
        raise ValueError("symbols live on tori of different dimension")
    out: dict[tuple[int, ...], complex] = {}
    for alpha, ca in a.coeffs.items():
        for beta, cb in b.coeffs.items():
            key = tuple(x + y for x, y in zip(alpha, beta))
            out[key] = out.get(key, 0.0) + ca * cb
    return Symbol(a.dim, out)


def gradient_norm_sq(s: Symbol) -> Symbol:
    """``|grad f|^2`` for a real symbol (``|f'|^2`` when ``d == 1``)."""
    total = Symbol(s.dim, {})
    for g in gradient(s):
        total = total + multiply(g, g.conj())
    return total


def _second_derivative_bound(s: Symbol) -> float:
    # sup |d^2 f / d theta_i d theta_j| <= sum |alpha|^2 |c|
    if not len(s.coeffs):
        return 0.0
    a = np.array(list(s.coeffs), dtype=float)
    c = np.abs(np.array(list(s.coeffs.values())))
    return float(((a ** 2).sum(axis=1) * c).sum())


# ---------------------------------------------------------------------------
# critical points


@dataclass(frozen=True)
class CriticalSet:
    points: tuple[tuple[float, ...], ...]
    resolution: float
    tol: float
    is_exhaustive: bool
    degenerate: tuple[bool, ...] = ()

    def __len__(self):
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=float).reshape(len(self.points), -1)


def _torus_distance(p, q) -> float:
    d = np.abs(np.asarray(p) - np.asarray(q)) % TWO_PI
    return float(np.linalg.norm(np.minimum(d, TWO_PI - d)))


def _dedup(points, min_sep):
    kept = []
    for p in points:
        if all(_torus_distance(p, q) > min_sep for q in kept):
            kept.append(p)
    return kept


def _bisect_vec(fun, lo, hi, iters=60):
    """Vectorized bisection; ``fun(lo)`` and ``fun(hi)`` must differ in sign."""
    flo = fun(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def critical_set(s: Symbol, initial_grid: int | None = None, tol: float = 1e-10) -> CriticalSet:
    """Zeros of the gradient of a real, non-constant symbol.

    ``d == 1``: every grid cell is either certified root-free through a
    Lipschitz bound on ``f'``, or bracketed and bisected (sign change of
    ``f'``, or of ``f''`` for double roots).
    ``d >= 2``: grid minima of ``|grad f|^2`` seed a damped Newton iteration.
    """
    if not s.is_real_within(1e-12):
        raise ValueError("critical set requires a real-valued symbol")
    if s.is_constant:
        raise ValueError("constant symbol has no Mourre theory")
    if s.dim == 1:
        return _critical_set_1d(s, initial_grid or 4096, tol)
    return _critical_set_nd(s, initial_grid or 64, tol)


def _critical_set_1d(s: Symbol, m: int, tol: float) -> CriticalSet:
    d1 = derivative(s)
    d2 = derivative(d1)
    f1 = lambda t: d1(t).real
    f2 = lambda t: d2(t).real
    h = TWO_PI / m
    theta = np.arange(m) * h
    v = f1(theta)
    v_next = np.roll(v, -1)
    lip = _second_derivative_bound(s)
    roots = []
    # exact grid zeros
    roots.extend(theta[np.abs(v) <= tol].tolist())
    sign_change = (np.sign(v) * np.sign(v_next) < 0)
    idx = np.nonzero(sign_change)[0]
    if len(idx):
        r = _bisect_vec(f1, theta[idx], theta[idx] + h)
        roots.extend((r % TWO_PI).tolist())
    # cells that the Lipschitz bound cannot clear and that show no sign change
    suspicious = (~sign_change) & (np.abs(v) > tol) & (np.abs(v_next) > tol) & \
        (np.abs(v) + np.abs(v_next) <= lip * h)
    exhaustive = True
    w = f2(theta)
    w_next = np.roll(w, -1)
    # f'' keeps its sign on the cell, so f' is monotone there and cannot vanish
    lip3 = float(sum(abs(k[0]) ** 3 * abs(c) for k, c in s.coeffs.items()))
    monotone = (np.sign(w) * np.sign(w_next) > 0) & (np.abs(w) + np.abs(w_next) > lip3 * h)
    suspicious &= ~monotone
    for i in np.nonzero(suspicious)[0]:
        # look for an extremum of f' (double root of f') in the cell or its neighbours
        found = False
        for j in (i - 1, i, i + 1):
            j %= m
            a, b = theta[j], theta[j] + h
            fa, fb = w[j], w[(j + 1) % m]
            if np.sign(fa) * np.sign(fb) <= 0:
                t = float(_bisect_vec(f2, np.array([a]), np.array([b]))[0]) if fa * fb < 0 else (a if fa == 0 else b)
                if abs(f1(np.array([t]))[0]) <= tol:
                    roots.append(t % TWO_PI)
                    found = True
                else:
                    found = True  # extremum of f' away from zero clears the cell
        if not found:
            exhaustive = False
    roots = sorted(_dedup([(float(r),) for r in roots], h / 2))
    # polish with Newton steps on f'
    polished = []
    for (t,) in roots:
        for _ in range(3):
            fp, fpp = f1(np.array([t]))[0], f2(np.array([t]))[0]
            if abs(fp) <= tol or fpp == 0:
                break
            step = fp / fpp
            if abs(step) > h:
                break
            t -= step
        polished.append((float(t % TWO_PI),))
    polished = _dedup(polished, h / 2)
    f2max = max(float(np.abs(w).max()), 1e-300)
    degenerate = tuple(bool(abs(f2(np.array([p[0]]))[0]) < 1e-6 * f2max) for p in polished)
    pts = [p for p in polished if abs(f1(np.array([p[0]]))[0]) <= max(tol, 1e-9)]
    return CriticalSet(tuple(pts), h, tol, exhaustive, degenerate[: len(pts)])


def _critical_set_nd(s: Symbol, m: int, tol: float) -> CriticalSet:
    d = s.dim
    grads = gradient(s)
    hess = [[derivative(g, k) for k in range(d)] for g in grads]

    def grad_at(x):
        return np.array([g(x).real for g in grads])

    def hess_at(x):
        return np.array([[hk(x).real for hk in row] for row in hess])

    theta = torus_grid(d, m)
    gv = np.stack([g(theta).real for g in grads], axis=-1)
    norm2 = (gv ** 2).sum(axis=-1)
    is_min = np.ones(norm2.shape, dtype=bool)
    for ax in range(d):
        for shift in (-1, 1):
            is_min &= norm2 <= np.roll(norm2, shift, axis=ax)
    h = TWO_PI / m
    lip = _second_derivative_bound(s)
    seeds = theta[is_min & (np.sqrt(norm2) <= lip * h * math.sqrt(d))]
    found = []
    for x0 in seeds.reshape(-1, d):
        x = x0.astype(float).copy()
        ok = False
        for _ in range(50):
            gx = grad_at(x)
            nx = np.linalg.norm(gx)
            if nx <= tol:
                ok = True
                break
            try:
                step = np.linalg.solve(hess_at(x), gx)
            except np.linalg.LinAlgError:
                step = gx
            lam = 1.0
            while lam > 1e-6:
                y = x - lam * step
                if np.linalg.norm(grad_at(y)) < nx:
                    break
                lam *= 0.5
            x = y
        if ok:
            found.append(tuple(float(c) for c in (x % TWO_PI)))
    pts = _dedup(found, h / 2)
    # every grid point that could sit next to a zero must be near a found point
    possible = theta[np.sqrt(norm2) <= lip * h * math.sqrt(d) / 2].reshape(-1, d)
    exhaustive = all(any(_torus_distance(p, q) <= 2 * h * math.sqrt(d) for q in pts) for p in possible)
    degenerate = []
    for p in pts:
        ev = np.linalg.eigvalsh(hess_at(np.array(p)))
        degenerate.append(bool(np.min(np.abs(ev)) < 1e-6 * max(lip, 1e-300)))
    return CriticalSet(tuple(pts), h, tol, exhaustive, tuple(degenerate))


def thresholds(s: Symbol, k: CriticalSet, tol: float = 1e-9) -> list[float]:
    """Sorted, deduplicated values of ``s`` on its critical set."""
    if not len(k):
        return []
    vals = sorted(float(v) for v in s(k.as_array()).real)
    out = [vals[0]]
    for v in vals[1:]:
        if abs(v - out[-1]) > tol:
            out.append(v)
    return out


# ---------------------------------------------------------------------------
# Mourre constants


@dataclass(frozen=True)
class MourreConstants:
    interval: tuple[float, float]
    c: float
    C: float
    c_sharp: float
    C_flat: float
    preimage_measure: float
    enlargements: tuple[tuple[float, float, float], ...] = field(default=())

    def __post_init__(self):
        if not (0 <= self.c_sharp <= self.c <= self.C <= self.C_flat):
            raise ValueError(f"constants violate 0 <= c# <= c <= C <= Cb: {self}")


def _default_grid(dim: int) -> int:
    return 4096 if dim == 1 else 512


def _extrema_on_preimage(f: Symbol, g: Symbol, lo: float, hi: float, grid: int):
    """min/max of ``g`` over the closure of ``f^{-1}([lo, hi])`` and the grid fraction inside."""
    d = f.dim
    theta = torus_grid(d, grid)
    fv = f(theta).real
    gv = g(theta).real
    inside = (fv >= lo) & (fv <= hi)
    cand_pts = [theta[inside]]
    h = TWO_PI / grid
    # points where f crosses the interval ends, located on grid edges
    for level in {lo, hi}:
        for ax in range(d):
            nxt = np.roll(fv, -1, axis=ax)
            cross = (fv - level) * (nxt - level) < 0
            if not cross.any():
                continue
            start = theta[cross]
            step = np.zeros(d)
            step[ax] = h

            def along(t, start=start, step=step):
                return f(start + t[:, None] * step).real - level

            t = _bisect_vec(along, np.zeros(len(start)), np.ones(len(start)))
            cand_pts.append(start + t[:, None] * step)
    # tangential touches: critical points of f whose value lies in the interval
    try:
        crit = critical_set(f)
        cp = crit.as_array()
        if len(cp):
            cv = f(cp).real
            cand_pts.append(cp[(cv >= lo - 1e-12) & (cv <= hi + 1e-12)])
    except ValueError:
        pass
    pts = np.concatenate([p.reshape(-1, d) for p in cand_pts], axis=0)
    if not len(pts):
        return None
    vals = g(pts).real
    gmin, gmax = float(vals.min()), float(vals.max())

    # local refinement of extrema reached strictly inside the preimage
    def refine(sign):
        x0 = pts[np.argmin(sign * vals)]
        fx = f(x0).real
        bounds = [(c - h, c + h) for c in x0]
        if lo < fx < hi:
            res = optimize.minimize(lambda x: sign * g(x).real, x0, bounds=bounds, method="L-BFGS-B",
                                    options={"ftol": 1e-15, "gtol": 1e-12})
        elif d > 1:
            # extremum on the level set f = lo or f = hi
            level = lo if abs(fx - lo) <= abs(fx - hi) else hi
            res = optimize.minimize(lambda x: sign * g(x).real, x0, bounds=bounds, method="SLSQP",
                                    constraints=[{"type": "eq", "fun": lambda x: f(x).real - level}],
                                    options={"ftol": 1e-14, "maxiter": 200})
        else:
            return None
        # SLSQP may stop on a line-search message at a feasible optimum; judge feasibility instead
        if lo - 1e-9 <= f(res.x).real <= hi + 1e-9 and np.all(np.isfinite(res.x)):
            return sign * float(res.fun)
        return None

    rmin, rmax = refine(1.0), refine(-1.0)
    if rmin is not None:
        gmin = min(gmin, rmin)
    if rmax is not None:
        gmax = max(gmax, rmax)
    return gmin, gmax, float(inside.mean())


def mourre_constants(f: Symbol, g: Symbol, interval, grid: int | None = None,
                     enlargements: Iterable[float] = (0.1, 0.05, 0.02, 0.01)) -> MourreConstants:
    """Extremal values of ``g`` over the closure of ``f^{-1}(interval)``.

    ``c_sharp``/``C_flat`` come from the open enlargements
    ``(lo - m*w, hi + m*w)`` with ``w`` the interval width (the range of ``f``
    for a degenerate interval); the smallest margin gives the reported value
    and the whole sequence is kept in ``enlargements`` as
    ``(margin, c, C)`` rows.
    """
    if f.dim != g.dim:
        raise ValueError("f and g must live on the same torus")
    if not (f.is_real_within() and g.is_real_within()):
        raise ValueError("f and g must be real-valued")
    lo, hi = (float(interval[0]), float(interval[1]))
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    grid = grid or _default_grid(f.dim)
    ext = _extrema_on_preimage(f, g, lo, hi, grid)
    if ext is None:
        raise ValueError("Λ ∩ Ran f = ∅")
    c, C, measure = ext
    width = hi - lo
    if width == 0:
        samples = f(torus_grid(f.dim, min(grid, 256))).real
        width = float(samples.max() - samples.min())
    table = []
    for margin in sorted(enlargements, reverse=True):
        e = _extrema_on_preimage(f, g, lo - margin * width, hi + margin * width, grid)
        table.append((float(margin), e[0], e[1]))
    # enlargements can only shrink c and grow C; clip quadrature noise
    c_sharp = min(table[-1][1], c) if table else c
    C_flat = max(table[-1][2], C) if table else C
    return MourreConstants((lo, hi), _clip(c), _clip(C), _clip(c_sharp), _clip(C_flat),
                           measure, tuple(table))


def _clip(x: float, noise: float = 1e-12) -> float:
    return 0.0 if -noise < x < 0.0 else x
