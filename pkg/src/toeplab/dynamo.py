"""Time evolution ``e^{iHt}`` at truncation and ballistic-transport measurements.

The propagator is applied through the eigendecomposition of ``H``. Integrals in
time are evaluated by composite Simpson on a fine grid of step at most
``0.05 / max|grad f|`` that contains every requested output time.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .opforge import (HalfLine, LatticeBox, OperatorMatrix, commutator_formula_rhs,
                      conjugate_operator, icommutator, laurent_matrix, toeplitz_matrix)
from .spectra import Bump, SpectralData, eigh
from .symbolkit import Symbol, derivative, gradient, gradient_norm_sq, mourre_constants, torus_grid

__all__ = [
    "LightconeError",
    "EmptyBandError",
    "Lightcone",
    "PropagationTrace",
    "BandRate",
    "evolve",
    "max_velocity",
    "edge_distance",
    "lightcone_guard",
    "build_hamiltonian",
    "propagation_trace",
    "band_filtered_rate",
    "heisenberg_limit",
    "ballistic_upper_bound",
    "write_trace_csv",
]

STEP_SCALE = 0.05
CHUNK = 256
SUPPORT_MASS = 1e-10


class LightconeError(ValueError):
    def __init__(self, max_safe_t: float, t_max: float):
        super().__init__(f"t_max={t_max:g} exceeds the light cone; max_safe_t={max_safe_t:.6g}")
        self.max_safe_t = max_safe_t


class EmptyBandError(ValueError):
    pass


def evolve(sd: SpectralData, phi, times) -> np.ndarray:
    """States ``e^{iHt} phi`` as rows, one per time."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be ascending")
    phi = np.asarray(phi, dtype=complex)
    nrm = np.linalg.norm(phi)
    if abs(nrm - 1.0) > 1e-12:
        warnings.warn(f"initial state has norm {nrm:.6g}; normalizing", stacklevel=2)
        phi = phi / nrm
    U = sd.eigenvectors
    coef = U.conj().T @ phi
    return (U @ (np.exp(1j * np.outer(sd.eigenvalues, times)) * coef[:, None])).T


# ---------------------------------------------------------------------------
# light cone


@dataclass(frozen=True)
class Lightcone:
    ok: bool
    max_safe_t: float
    velocity: float
    distance: float


def max_velocity(f: Symbol, grid: int | None = None) -> float:
    """``max |grad f|`` on a uniform grid."""
    grid = grid or (4096 if f.dim == 1 else 256)
    theta = torus_grid(f.dim, grid)
    g2 = gradient_norm_sq(f)(theta).real
    return float(np.sqrt(max(g2.max(), 0.0)))


def edge_distance(phi, space, mass: float = SUPPORT_MASS) -> float:
    """Distance from the effective support of ``phi`` to the far truncation edge.

    The support is the smallest radius outside which ``phi`` carries at most
    ``mass`` of its squared norm.
    """
    w = np.abs(np.asarray(phi)) ** 2
    w = w / w.sum()
    if isinstance(space, HalfLine):
        radius = np.arange(1, space.N + 1)
    else:
        radius = np.abs(space.coordinates()).max(axis=1).astype(int)
    order = np.argsort(radius, kind="stable")
    outside = w.sum() - np.cumsum(w[order])
    reach = radius[order][np.argmax(outside <= mass)]
    return float(space.N - reach)


def lightcone_guard(f: Symbol, distance: float, t_max: float, velocity: float | None = None) -> Lightcone:
    """``ok`` iff ``t_max * max|grad f| <= 0.8 * distance``."""
    v = max_velocity(f) if velocity is None else velocity
    safe = math.inf if v == 0 else 0.8 * distance / v
    return Lightcone(bool(t_max <= safe), safe, v, distance)


# ---------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class PropagationTrace:
    times: np.ndarray
    x_norms: np.ndarray
    cesaro: np.ndarray
    rate: float
    rate_stderr: float
    rate_sensitivity: tuple[float, float]
    fit_window: tuple[float, float]
    lightcone_ok: bool
    identity_lhs: float
    identity_rhs: float
    norm_drift: float
    energy_drift: float

    @property
    def rate_running(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.times > 0, self.x_norms / np.where(self.times > 0, self.times, 1), np.nan)

    @property
    def identity_error(self) -> float:
        """Relative mismatch of the position-growth identity."""
        scale = max(abs(self.identity_lhs), self.x_norms[0] ** 2)
        return abs(self.identity_lhs - self.identity_rhs) / scale

    @property
    def cesaro_rate(self) -> float:
        return float(np.sqrt(self.cesaro[-1]))


def build_hamiltonian(f: Symbol, space, V: OperatorMatrix | None = None) -> OperatorMatrix:
    """``T_f + V`` on the half-line, ``L_f + V`` (truncate mode) on a box."""
    H = toeplitz_matrix(f, space.N) if isinstance(space, HalfLine) else laurent_matrix(f, space.N)
    if V is not None:
        H = (H + V).relabel(f"{H.label}+V")
    return H


def _fine_grid(times: np.ndarray, h_max: float):
    pieces = [times[:1]]
    index = [0]
    for a, b in zip(times[:-1], times[1:]):
        m = max(2, int(math.ceil((b - a) / h_max)))
        m += m % 2
        pieces.append(np.linspace(a, b, m + 1)[1:])
        index.append(index[-1] + m)
    return np.concatenate(pieces), np.array(index)


def _fit(t, y):
    (slope, icept), cov = np.polyfit(t, y, 1, cov="unscaled")
    resid = y - (slope * t + icept)
    dof = max(len(t) - 2, 1)
    s2 = float(resid @ resid) / dof
    return float(slope), float(math.sqrt(max(cov[0, 0] * s2, 0.0)))


def propagation_trace(f: Symbol, space, phi, times, fit_window=(0.5, 1.0),
                      V: OperatorMatrix | None = None, sd: SpectralData | None = None,
                      direction: int = 1, check_lightcone: bool = True) -> PropagationTrace:
    """Track ``||e^{iHt} phi||_X`` and the Cesaro mean of ``||i[X,H] e^{iHs} phi||^2``.

    ``direction=-1`` evolves backward (``t -> -t``). The rate is the
    least-squares slope over ``[a t_max, b t_max]``.
    """
    times = np.asarray(times, dtype=float)
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must start at 0 and increase strictly")
    H = build_hamiltonian(f, space, V)
    sd = sd or eigh(H)
    phi = np.asarray(phi, dtype=complex)
    phi = phi / np.linalg.norm(phi)
    v = max_velocity(f)
    cone = lightcone_guard(f, edge_distance(phi, space), times[-1], v)
    if check_lightcone and not cone.ok:
        raise LightconeError(cone.max_safe_t, times[-1])

    coords = space.coordinates()
    Hd = H.data
    # i[X_j, H]
    grads = [1j * (coords[:, j][:, None] * Hd - Hd * coords[:, j][None, :]) for j in range(coords.shape[1])]
    h_max = STEP_SCALE / v if v > 0 else float(times[-1] - times[0]) or 1.0
    fine, out_idx = _fine_grid(times, h_max)
    U = sd.eigenvectors
    coef = U.conj().T @ phi
    n = len(fine)
    mass = np.empty(n)
    xsq = np.empty(n)
    speed = np.empty(n)
    growth = np.empty(n)
    energy = np.empty(n)
    for start in range(0, n, CHUNK):
        ts = direction * fine[start:start + CHUNK]
        psi = U @ (np.exp(1j * np.outer(sd.eigenvalues, ts)) * coef[:, None])
        sl = slice(start, start + len(ts))
        p2 = np.abs(psi) ** 2
        mass[sl] = p2.sum(axis=0)
        xsq[sl] = ((coords ** 2).sum(axis=1)[:, None] * p2).sum(axis=0)
        sp = np.zeros(len(ts))
        gr = np.zeros(len(ts))
        for j, B in enumerate(grads):
            Bpsi = B @ psi
            sp += (np.abs(Bpsi) ** 2).sum(axis=0)
            gr += 2.0 * np.real((Bpsi.conj() * (coords[:, j][:, None] * psi)).sum(axis=0))
        speed[sl] = sp
        growth[sl] = direction * gr
        energy[sl] = np.real((psi.conj() * (Hd @ psi)).sum(axis=0))

    xnorm_fine = np.sqrt(mass + xsq)
    cum_speed = cumulative_simpson(speed, x=fine, initial=0.0)
    cum_growth = cumulative_simpson(growth, x=fine, initial=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cesaro_fine = np.where(fine > 0, cum_speed / np.where(fine > 0, fine, 1.0), speed[0])

    t_out = times
    x_out = xnorm_fine[out_idx]
    lo, hi = fit_window
    t_max = t_out[-1]
    sel = (t_out >= lo * t_max - 1e-12) & (t_out <= hi * t_max + 1e-12)
    rate, err = _fit(t_out[sel], x_out[sel])
    sens = []
    for shift in (-0.1, 0.1):
        s = (t_out >= (lo + shift) * t_max - 1e-12) & (t_out <= hi * t_max + 1e-12)
        sens.append(_fit(t_out[s], x_out[s])[0] if s.sum() >= 3 else math.nan)
    return PropagationTrace(
        times=t_out, x_norms=x_out, cesaro=cesaro_fine[out_idx], rate=rate, rate_stderr=err,
        rate_sensitivity=(sens[0], sens[1]), fit_window=(lo, hi), lightcone_ok=cone.ok,
        identity_lhs=float(xnorm_fine[-1] ** 2 - xnorm_fine[0] ** 2),
        identity_rhs=float(cum_growth[-1]),
        norm_drift=float(np.abs(np.sqrt(mass) - 1.0).max()),
        energy_drift=float(np.abs(energy - energy[0]).max()),
    )


# ---------------------------------------------------------------------------
# band-filtered transport


@dataclass(frozen=True)
class BandRate:
    rate: float
    bounds: tuple[float, float]
    bounds_sharp: tuple[float, float]
    filtered_norm: float
    trace: PropagationTrace

    @property
    def in_sandwich(self) -> bool:
        tol = 0.1 * self.bounds[1]
        return self.bounds[0] - tol <= self.rate <= self.bounds[1] + tol


def band_filtered_rate(f: Symbol, space, interval, seed, times, V: OperatorMatrix | None = None,
                       plateau: float = 0.5, fit_window=(0.5, 1.0),
                       sd: SpectralData | None = None) -> BandRate:
    """Ballistic rate of ``phi(H) seed`` (renormalized) for a bump ``phi`` on ``interval``,
    with the constant sandwiches ``(sqrt c, sqrt C)`` and ``(sqrt c#, sqrt Cb)``."""
    H = build_hamiltonian(f, space, V)
    sd = sd or eigh(H)
    lo, hi = interval
    weights = Bump(lo, hi, plateau)(sd.eigenvalues)
    U = sd.eigenvectors
    filtered = U @ (weights * (U.conj().T @ np.asarray(seed, dtype=complex)))
    nrm = float(np.linalg.norm(filtered))
    if nrm < 1e-6:
        raise EmptyBandError(f"||phi(H) seed|| = {nrm:.3g} < 1e-6 on [{lo}, {hi}]")
    trace = propagation_trace(f, space, filtered / nrm, times, fit_window, V=V, sd=sd)
    k = mourre_constants(f, gradient_norm_sq(f), (lo, hi))
    return BandRate(trace.rate, (math.sqrt(k.c), math.sqrt(k.C)),
                    (math.sqrt(k.c_sharp), math.sqrt(k.C_flat)), nrm, trace)


# ---------------------------------------------------------------------------
# Heisenberg picture on the lattice


def heisenberg_limit(f: Symbol, phi, N: int, times, boundary: str = "truncate",
                     check_lightcone: bool = True) -> np.ndarray:
    """``||(1/t)(e^{-iLt} A e^{iLt} - A) phi - L_{|grad f|^2} phi||`` with ``A`` built from ``grad f``."""
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise ValueError("times must be positive")
    box = LatticeBox(f.dim, N)
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != (box.size,):
        raise ValueError(f"phi has shape {phi.shape}, box needs ({box.size},)")
    phi = phi / np.linalg.norm(phi)
    if check_lightcone and boundary == "truncate":
        cone = lightcone_guard(f, edge_distance(phi, box), times.max())
        if not cone.ok:
            raise LightconeError(cone.max_safe_t, times.max())
    L = laurent_matrix(f, N, boundary)
    A = conjugate_operator(gradient(f), box, boundary).data
    target = laurent_matrix(gradient_norm_sq(f), N, boundary).data @ phi
    sd = eigh(L)
    U, w = sd.eigenvectors, sd.eigenvalues
    coef = U.conj().T @ phi
    Aphi = A @ phi
    out = np.empty(len(times))
    for i, t in enumerate(times):
        psi = U @ (np.exp(1j * w * t) * coef)
        back = U @ (np.exp(-1j * w * t) * (U.conj().T @ (A @ psi)))
        out[i] = np.linalg.norm((back - Aphi) / t - target)
    return out


def ballistic_upper_bound(f: Symbol, N: int, V: OperatorMatrix | None = None) -> float:
    """``sqrt(||i[A_f', H]||)`` with the exact compression for ``T_f`` plus ``i[A_f', V]``."""
    fp = derivative(f)
    C = commutator_formula_rhs(f, fp, N).data
    if V is not None:
        C = C + icommutator(conjugate_operator(fp, HalfLine(N)), V).data
    return float(math.sqrt(np.linalg.norm(C, 2)))


def write_trace_csv(trace: PropagationTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x_norm", "cesaro", "rate_running"])
        for row in zip(trace.times, trace.x_norms, trace.cesaro, trace.rate_running):
            w.writerow([f"{float(x):.17g}" for x in row])
