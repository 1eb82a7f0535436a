"""Manifest-driven experiment runner.

A manifest is UTF-8 ``key = value`` text with ``#`` comments. ``run`` resolves
it against defaults, executes each listed experiment and writes CSV reports,
``manifest.resolved`` and ``summary.txt`` into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import dynamo, opforge, perturb, spectra, symbolkit
from .opforge import HalfLine, LatticeBox
from .perturb import SequenceSpec
from .symbolkit import Symbol

EXIT_OK = 0
EXIT_MANIFEST = 2
EXIT_GUARD = 3

EXPERIMENTS = ("spectrum", "thresholds", "mourre", "count", "lap", "evolve", "band-rate", "probe",
               "virial", "admissibility")

DEFAULTS = {
    "experiment": "spectrum",
    "preset": "",
    "symbol": "2*cos:1",
    "product_with": "",
    "space": "halfline:256",
    "boundary": "truncate",
    "potential": "",
    "rank1": "",
    "interval": "-1,1",
    "ladder": "",
    "times": "linspace:0,100,201",
    "fit_window": "0.5,1.0",
    "initial": "e1",
    "lambda": "0",
    "etas": "logspace:-1,-2.5,7",
    "admissibility": "",
    "window": "1,2",
    "r_max": "10000",
    "probe_s": "1",
    "interior_fraction": "0.5",
    "plateau": "0.5",
    "seed": "0",
    "threads": "1",
    "out": "out",
}

PRESETS = {
    "schro-SML": """\
# discrete Schroedinger operator on the half-line with v = s + m + l
experiment = admissibility, mourre, virial
symbol = 2*cos:1
space = halfline:1024
potential = power:2 + oscillatory:2 + 0.1*log_power:1
admissibility = S:power:2; M:oscillatory:2; L:0.1*log_power:1
interval = -1,1
ladder = 256,512,1024
""",
    "rank1": """\
# rank-one boundary perturbation beta |e1><e1|
experiment = count, spectrum, virial
symbol = 2*cos:1
space = halfline:400
rank1 = beta:2 vector:e1
interval = 2.1,3
ladder = 100,200,400
""",
    "product": """\
# real part of a product of two Toeplitz operators
experiment = thresholds, mourre, virial
symbol = 2*cos:1
product_with = 2*cos:1 + cos:2
space = halfline:512
interval = 3,5
ladder = 512
""",
    "lattice-laplacian-d1": """\
# discrete Laplacian on Z, ballistic spreading from the origin
experiment = thresholds, evolve, virial
symbol = laplacian:1
space = lattice:1,600
initial = e0
times = linspace:0,200,401
""",
    "lattice-laplacian-d2": """\
# discrete Laplacian on Z^2
experiment = thresholds, evolve, virial
symbol = laplacian:2
space = lattice:2,30
initial = e0
times = linspace:0,8,33
""",
    "free-toeplitz": """\
# unperturbed Toeplitz operator of 2cos
experiment = spectrum, thresholds, virial
symbol = 2*cos:1
space = halfline:200
""",
}

ANCHORS = {
    "spectrum": "spectrum inside the symbol range",
    "thresholds": "critical values of the symbol",
    "mourre": "Mourre estimate on the band",
    "count": "finitely many eigenvalues away from thresholds",
    "lap": "limiting absorption principle",
    "evolve": "ballistic propagation",
    "band-rate": "band-filtered ballistic bounds",
    "probe": "fractional regularity integral test",
    "virial": "virial identity",
    "admissibility": "perturbation admissibility conditions",
}


class ManifestError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parsing


def parse_manifest(text: str, source: str = "<manifest>") -> dict:
    """``key = value`` lines; unknown or repeated keys are errors carrying the line number."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ManifestError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in DEFAULTS:
            raise ManifestError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ManifestError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = (value.strip(), lineno)
    return values


def parse_symbol(text: str) -> Symbol:
    """Sum of ``[scale*]name[:args]`` terms: ``cos:k[:axis[:d]]``, ``sin:k[:axis[:d]]``,
    ``const:c``, ``laplacian:d``, ``file:path``."""
    total = None
    for term in re.split(r"\s\+\s", text.strip()):
        term = term.strip()
        scale = 1.0
        m = re.match(r"^([-+0-9.eE]+)\s*\*\s*(.+)$", term)
        if m:
            scale, term = float(m.group(1)), m.group(2)
        name, _, args = term.partition(":")
        parts = [a for a in args.split(":") if a]
        if name in ("cos", "sin"):
            k = int(parts[0]) if parts else 1
            axis = int(parts[1]) if len(parts) > 1 else 0
            dim = int(parts[2]) if len(parts) > 2 else 1
            build = symbolkit.cosine if name == "cos" else symbolkit.sine
            s = build(k, 1.0, axis=axis, dim=dim)
        elif name == "const":
            s = symbolkit.constant(float(parts[0]))
        elif name == "laplacian":
            s = symbolkit.laplacian(int(parts[0]) if parts else 1)
        elif name == "file":
            s = Symbol.from_text(Path(args).read_text(encoding="utf-8"))
        else:
            raise ValueError(f"unknown symbol term {term!r}")
        s = s * scale
        total = s if total is None else total + s
    if total is None:
        raise ValueError("empty symbol")
    return total


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _grid(text: str) -> np.ndarray:
    kind, _, args = text.partition(":")
    a, b, n = args.split(",")
    if kind == "linspace":
        return np.linspace(float(a), float(b), int(n))
    if kind == "logspace":
        return np.logspace(float(a), float(b), int(n))
    raise ValueError(f"unknown grid {kind!r}")


def _space(text: str):
    kind, _, args = text.partition(":")
    if kind == "halfline":
        return HalfLine(int(args))
    if kind == "lattice":
        d, N = _ints(args)
        return LatticeBox(d, N)
    raise ValueError(f"unknown space {text!r}")


def _rank1(text: str, N: int):
    beta, vector = None, "e1"
    for tok in text.split():
        key, _, val = tok.partition(":")
        if key == "beta":
            beta = float(val)
        elif key == "vector":
            vector = tok.partition(":")[2]
        else:
            raise ValueError(f"unknown rank1 field {key!r}")
    if beta is None:
        raise ValueError("rank1 needs beta:<value>")
    if re.fullmatch(r"e\d+", vector):
        k = int(vector[1:])
        if not 1 <= k <= N:
            raise ValueError(f"basis vector {vector} outside 1..{N}")
        v = np.zeros(N)
        v[k - 1] = 1.0
    else:
        v = SequenceSpec.parse(vector).materialize(N)
        v = v / np.linalg.norm(v)
    return beta, v


@dataclass
class Config:
    raw: dict
    experiments: list
    symbol: Symbol
    product_with: Symbol | None
    space: object
    boundary: str
    potential: SequenceSpec | None
    rank1: tuple | None
    interval: tuple
    ladder: list
    times: np.ndarray
    fit_window: tuple
    initial: str
    lam: float
    etas: np.ndarray
    admissibility: list
    window: tuple
    r_max: float
    probe_s: float
    interior_fraction: float
    plateau: float
    seed: int
    threads: int
    out: Path


def resolve(values: dict, source: str = "<manifest>") -> Config:
    """Merge onto defaults (expanding ``experiment = preset``) and type-check every key."""
    lines = {k: ln for k, (_, ln) in values.items()}
    raw = {k: v for k, (v, _) in values.items()}
    if raw.get("experiment", "").strip() == "preset":
        name = raw.get("preset", "")
        if name not in PRESETS:
            raise ManifestError(f"{source}:{lines.get('preset', lines['experiment'])}: unknown preset "
                                f"{name!r}; available: {', '.join(PRESETS)}")
        base = {k: v for k, (v, _) in parse_manifest(PRESETS[name], f"preset:{name}").items()}
        rest = {k: v for k, v in raw.items() if k not in ("experiment",)}
        raw = {**base, **rest}
    merged = {**DEFAULTS, **raw}

    def fail(key, exc):
        where = f"{source}:{lines[key]}" if key in lines else source
        raise ManifestError(f"{where}: bad value for {key!r}: {exc}")

    def conv(key, fn):
        try:
            return fn(merged[key])
        except (ValueError, TypeError, IndexError, OSError) as exc:
            fail(key, exc)

    experiments = [e.strip() for e in merged["experiment"].split(",") if e.strip()]
    for e in experiments:
        if e not in EXPERIMENTS:
            fail("experiment", f"unknown experiment {e!r}; expected one of {', '.join(EXPERIMENTS)}")
    space = conv("space", _space)
    symbol = conv("symbol", parse_symbol)
    if symbol.dim != space.d:
        fail("symbol", f"symbol lives on T^{symbol.dim} but space has d={space.d}")
    product = conv("product_with", lambda s: parse_symbol(s) if s else None)
    if product is not None and not isinstance(space, HalfLine):
        fail("product_with", "products are defined on the half-line")
    boundary = merged["boundary"]
    if boundary not in ("truncate", "periodic"):
        fail("boundary", f"expected truncate or periodic, got {boundary!r}")
    interval = tuple(conv("interval", _floats))
    if len(interval) != 2 or interval[0] > interval[1]:
        fail("interval", "expected lo,hi with lo <= hi")
    adm = []
    if merged["admissibility"]:
        for chunk in merged["admissibility"].split(";"):
            cond, _, spec = chunk.strip().partition(":")
            if cond.upper() not in ("S", "M", "L", "H"):
                fail("admissibility", f"unknown condition {cond!r}")
            adm.append((cond.upper(), conv("admissibility", lambda _: SequenceSpec.parse(spec))))
    potential = conv("potential", lambda s: SequenceSpec.parse(s) if s else None)
    if potential is not None and not isinstance(space, HalfLine):
        fail("potential", "diagonal potentials are defined on the half-line")
    rank1 = conv("rank1", lambda s: _rank1(s, space.N) if s else None)
    if rank1 is not None and not isinstance(space, HalfLine):
        fail("rank1", "finite-rank perturbations are defined on the half-line")
    ladder = conv("ladder", _ints) or [space.N]
    times = conv("times", _grid)
    fit = tuple(conv("fit_window", _floats))
    if len(fit) != 2 or not 0 <= fit[0] < fit[1] <= 1:
        fail("fit_window", "expected a,b with 0 <= a < b <= 1")
    window = tuple(conv("window", _floats))
    if len(window) != 2 or not 0 < window[0] < window[1]:
        fail("window", "expected a,b with 0 < a < b")
    initial = merged["initial"]
    if not (initial == "bound" or re.fullmatch(r"e\d+", initial)):
        fail("initial", f"expected e<k> or bound, got {initial!r}")
    return Config(
        raw=merged, experiments=experiments, symbol=symbol, product_with=product, space=space,
        boundary=boundary, potential=potential, rank1=rank1, interval=interval, ladder=ladder,
        times=times, fit_window=fit, initial=initial, lam=conv("lambda", float),
        etas=conv("etas", _grid), admissibility=adm, window=window, r_max=conv("r_max", float),
        probe_s=conv("probe_s", float), interior_fraction=conv("interior_fraction", float),
        plateau=conv("plateau", float), seed=conv("seed", int), threads=conv("threads", int),
        out=Path(merged["out"]),
    )


def resolved_text(cfg: Config) -> str:
    lines = [f"{k} = {cfg.raw[k]}" for k in DEFAULTS]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# model assembly


def _effective_symbol(cfg: Config) -> Symbol:
    if cfg.product_with is not None:
        return symbolkit.multiply(cfg.symbol, cfg.product_with)
    return cfg.symbol


def _perturbation(cfg: Config, N: int):
    V = None
    if cfg.potential is not None:
        V = perturb.diagonal_potential(cfg.potential, N)
    if cfg.rank1 is not None:
        beta, v = cfg.rank1
        if len(v) != N:
            v = _rank1(cfg.raw["rank1"], N)[1]
        R = perturb.finite_rank([v], [beta], N)
        V = R if V is None else V + R
    return V


def _hamiltonian(cfg: Config, N: int):
    if isinstance(cfg.space, LatticeBox):
        return opforge.laurent_matrix(cfg.symbol, N, cfg.boundary)
    if cfg.product_with is not None:
        H = opforge.product_operator(cfg.symbol, cfg.product_with, N)
    else:
        H = opforge.toeplitz_matrix(cfg.symbol, N)
    V = _perturbation(cfg, N)
    return H if V is None else H + V


_CACHE: dict = {}


def _spectral(cfg: Config, N: int):
    """``(H, eigh(H))`` at size ``N``, shared between experiments of one run."""
    key = (id(cfg), N)
    if key not in _CACHE:
        H = _hamiltonian(cfg, N)
        _CACHE[key] = (H, spectra.eigh(H))
    return _CACHE[key]


def _conjugate(cfg: Config, N: int):
    f = _effective_symbol(cfg)
    if isinstance(cfg.space, LatticeBox):
        return opforge.conjugate_operator(symbolkit.gradient(f), LatticeBox(f.dim, N), cfg.boundary)
    return opforge.conjugate_operator(symbolkit.derivative(f), HalfLine(N))


def _space_at(cfg: Config, N: int):
    return HalfLine(N) if isinstance(cfg.space, HalfLine) else LatticeBox(cfg.space.d, N)


def _initial(cfg: Config, sd: spectra.SpectralData | None = None):
    space = cfg.space
    if cfg.initial == "bound":
        lo, hi = cfg.interval
        sel = np.nonzero((sd.eigenvalues >= lo) & (sd.eigenvalues <= hi))[0]
        if not len(sel):
            raise dynamo.EmptyBandError(f"no eigenvalue in [{lo}, {hi}] to seed a bound state")
        leak = spectra.boundary_leakage(sd.eigenvectors[:, sel], space)
        return sd.eigenvectors[:, sel[np.argmin(leak)]]
    k = int(cfg.initial[1:])
    v = np.zeros(space.size, dtype=complex)
    if isinstance(space, HalfLine):
        if not 1 <= k <= space.N:
            raise ValueError(f"initial site {k} outside 1..{space.N}")
        v[k - 1] = 1.0
    else:
        alpha = [0] * space.d
        alpha[0] = k
        v[space.index(alpha)] = 1.0
    return v


# ---------------------------------------------------------------------------
# experiments


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _range(f: Symbol) -> tuple[float, float]:
    vals = f(symbolkit.torus_grid(f.dim, 4096 if f.dim == 1 else 256)).real
    return float(vals.min()), float(vals.max())


def exp_spectrum(cfg, out, summary):
    H, sd = _spectral(cfg, cfg.space.N)
    leak = spectra.boundary_leakage(sd.eigenvectors, sd.space)
    _write_rows(out / "spectrum.csv", ["index", "eigenvalue", "leakage"],
                [(i, float(lam), float(l)) for i, (lam, l) in enumerate(zip(sd.eigenvalues, leak))])
    lo, hi = _range(_effective_symbol(cfg))
    inside = bool(np.all((sd.eigenvalues >= lo - 1e-9) & (sd.eigenvalues <= hi + 1e-9)))
    outside = int(np.count_nonzero((sd.eigenvalues < lo - 1e-9) | (sd.eigenvalues > hi + 1e-9)))
    summary.append(f"spectrum: {len(sd.eigenvalues)} eigenvalues in [{sd.eigenvalues[0]:.6g}, "
                   f"{sd.eigenvalues[-1]:.6g}], range [{lo:.6g}, {hi:.6g}], outside {outside}, "
                   f"{'inside' if inside else 'outside'} ({ANCHORS['spectrum']})")


def exp_thresholds(cfg, out, summary):
    f = _effective_symbol(cfg)
    k = symbolkit.critical_set(f)
    th = symbolkit.thresholds(f, k)
    _write_rows(out / "thresholds.csv", ["threshold"], [(t,) for t in th])
    shown = ", ".join(f"{t:.12g}" for t in th)
    summary.append(f"thresholds: {{{shown}}} exhaustive={k.is_exhaustive} ({ANCHORS['thresholds']})")


def exp_mourre(cfg, out, summary):
    f = _effective_symbol(cfg)
    if not isinstance(cfg.space, HalfLine):
        raise ValueError("the Mourre certificate runs on the half-line")
    consts = symbolkit.mourre_constants(f, symbolkit.gradient_norm_sq(f), cfg.interval)
    reports = []
    for N in cfg.ladder:
        H, sd = _spectral(cfg, N)
        C = opforge.icommutator(_conjugate(cfg, N), H)
        reports.append(spectra.mourre_verify(H, C, cfg.interval, consts, cfg.interior_fraction,
                                             cfg.plateau, sd=sd))
    spectra.write_mourre_csv(reports, out / "mourre.csv")
    last = reports[-1]
    ladder = [r.lambda_min_interior for r in reports]
    monotone = all(b <= a + 1e-9 for a, b in zip(ladder, ladder[1:]))
    summary.append(f"mourre: {last.verdict} c={consts.c:.12g} C={consts.C:.12g} "
                   f"lam_min_interior={last.lambda_min_interior:.12g} ladder_monotone={monotone} "
                   f"({ANCHORS['mourre']})")


def exp_count(cfg, out, summary):
    f = _effective_symbol(cfg)
    th = symbolkit.thresholds(f, symbolkit.critical_set(f))
    rep = spectra.count_eigenvalues(lambda N: _spectral(cfg, N)[0], cfg.interval, cfg.ladder, th)
    _write_rows(out / "count.csv", ["n", "count"], list(rep.counts.items()))
    vals = ", ".join(f"{v:.12g}" for v in rep.eigenvalues)
    summary.append(f"count: stabilized_count={rep.stabilized_count} eigenvalues={{{vals}}} "
                   f"({ANCHORS['count']})")


def exp_lap(cfg, out, summary):
    N = cfg.space.N
    H, sd = _spectral(cfg, N)
    prof = spectra.lap_probe(H, _conjugate(cfg, N), cfg.lam, cfg.etas, sd)
    floor = spectra.level_spacing_floor(sd.eigenvalues, cfg.lam)
    cls = spectra.classify_lap(cfg.lam, cfg.etas, prof, floor)
    _write_rows(out / "lap.csv", ["eta", "norm", "above_floor"],
                [(float(e), float(p), int(e >= floor)) for e, p in zip(cfg.etas, prof)])
    summary.append(f"lap: {cls.classification} slope={cls.slope:.6g} "
                   f"variation_per_decade={cls.per_decade_variation:.6g} floor={floor:.6g} "
                   f"({ANCHORS['lap']})")


def exp_evolve(cfg, out, summary):
    H, sd = _spectral(cfg, cfg.space.N)
    phi = _initial(cfg, sd)
    V = _perturbation(cfg, cfg.space.N) if isinstance(cfg.space, HalfLine) else None
    if cfg.product_with is not None:
        raise ValueError("evolve supports T_f + V and L_f only")
    tr = dynamo.propagation_trace(cfg.symbol, cfg.space, phi, cfg.times, cfg.fit_window, V=V, sd=sd)
    dynamo.write_trace_csv(tr, out / "trace.csv")
    summary.append(f"evolve: rate={tr.rate:.12g} stderr={tr.rate_stderr:.3g} "
                   f"cesaro_rate={tr.cesaro_rate:.12g} identity_error={tr.identity_error:.3g} "
                   f"({ANCHORS['evolve']})")


def exp_band_rate(cfg, out, summary):
    if cfg.product_with is not None:
        raise ValueError("band-rate supports T_f + V and L_f only")
    H, sd = _spectral(cfg, cfg.space.N)
    seed = _initial(cfg, sd)
    V = _perturbation(cfg, cfg.space.N) if isinstance(cfg.space, HalfLine) else None
    br = dynamo.band_filtered_rate(cfg.symbol, cfg.space, cfg.interval, seed, cfg.times, V=V,
                                   plateau=cfg.plateau, fit_window=cfg.fit_window, sd=sd)
    dynamo.write_trace_csv(br.trace, out / "trace.csv")
    _write_rows(out / "band_rate.csv",
                ["rate", "sqrt_c", "sqrt_C", "sqrt_c_sharp", "sqrt_C_flat", "filtered_norm"],
                [(br.rate, *br.bounds, *br.bounds_sharp, br.filtered_norm)])
    verdict = "within" if br.in_sandwich else "outside"
    summary.append(f"band-rate: rate={br.rate:.12g} {verdict} [{br.bounds[0]:.6g}, {br.bounds[1]:.6g}] "
                   f"identity_error={br.trace.identity_error:.3g} ({ANCHORS['band-rate']})")


def exp_probe(cfg, out, summary):
    if not isinstance(cfg.space, HalfLine):
        raise ValueError("the integral probe runs on the half-line")
    V = _perturbation(cfg, cfg.space.N)
    if V is None:
        raise ValueError("probe needs a potential or rank1 perturbation")
    rep = perturb.gsah_probe(V, cfg.probe_s, cfg.window)
    _write_rows(out / "probe.csv", ["s", "r_max", "integral_estimate", "tail_exponent", "r_squared",
                                    "truncated", "verdict"],
                [(cfg.probe_s, rep.r_max, rep.integral_estimate, rep.tail_exponent, rep.r_squared,
                  int(rep.truncated), rep.verdict)])
    summary.append(f"probe: {rep.verdict} exponent={rep.tail_exponent:.6g} ({ANCHORS['probe']})")


def exp_virial(cfg, out, summary):
    N = cfg.space.N
    H, sd = _spectral(cfg, N)
    C = opforge.icommutator(_conjugate(cfg, N), H)
    worst = spectra.virial_check(sd, C) / max(C.norm(), 1e-300)
    _write_rows(out / "virial.csv", ["n", "max_relative"], [(N, worst)])
    verdict = "holds" if worst < 1e-12 else "violated"
    summary.append(f"virial: {verdict} max_relative={worst:.3g} ({ANCHORS['virial']})")


def exp_admissibility(cfg, out, summary):
    if not cfg.admissibility:
        raise ValueError("admissibility needs an 'admissibility' key")
    rows, verdicts = [], []
    for cond, spec in cfg.admissibility:
        rep = perturb.admissibility_check(spec, cond, cfg.window, cfg.r_max)
        rows.append((cond, spec.to_text(), rep.window[0], rep.window[1], rep.r_max,
                     rep.integral_estimate, rep.tail_exponent, rep.r_squared, rep.verdict))
        verdicts.append(f"{cond}={rep.verdict}")
    _write_rows(out / "admissibility.csv",
                ["condition", "sequence", "a", "b", "r_max", "integral_estimate", "tail_exponent",
                 "r_squared", "verdict"], rows)
    summary.append(f"admissibility: {' '.join(verdicts)} ({ANCHORS['admissibility']})")


RUNNERS = {
    "spectrum": exp_spectrum,
    "thresholds": exp_thresholds,
    "mourre": exp_mourre,
    "count": exp_count,
    "lap": exp_lap,
    "evolve": exp_evolve,
    "band-rate": exp_band_rate,
    "probe": exp_probe,
    "virial": exp_virial,
    "admissibility": exp_admissibility,
}


def execute(cfg: Config, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.resolved").write_text(resolved_text(cfg), encoding="utf-8")
    summary: list[str] = []
    status = EXIT_OK
    try:
        with threadpool_limits(limits=max(cfg.threads, 1)):
            for name in cfg.experiments:
                try:
                    RUNNERS[name](cfg, out, summary)
                except (dynamo.LightconeError, dynamo.EmptyBandError) as exc:
                    summary.append(f"{name}: guard violation: {exc}")
                    status = EXIT_GUARD
                    break
    finally:
        for key in [k for k in _CACHE if k[0] == id(cfg)]:
            del _CACHE[key]
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    return status


def run(path, out: str | None = None, threads: int | None = None, seed: int | None = None) -> int:
    path = Path(path)
    try:
        values = parse_manifest(path.read_text(encoding="utf-8"), str(path))
        for key, val in (("out", out), ("threads", threads), ("seed", seed)):
            if val is not None:
                values[key] = (str(val), 0)
        cfg = resolve(values, str(path))
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    except OSError as exc:
        print(f"error: cannot read manifest: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    status = execute(cfg, cfg.out)
    sys.stdout.write((cfg.out / "summary.txt").read_text(encoding="utf-8"))
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="toeplab", description=__doc__.splitlines()[0])
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int, help="BLAS threads")
    parser.add_argument("--seed", type=int, help="seed recorded with the run")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a manifest")
    p_run.add_argument("manifest")
    p_pre = sub.add_parser("preset", help="run a named preset or write its manifest")
    p_pre.add_argument("name")
    p_pre.add_argument("--emit", metavar="PATH", help="write the preset manifest instead of running")
    args = parser.parse_args(argv)

    if args.command == "run":
        return run(args.manifest, args.out, args.threads, args.seed)
    if args.name not in PRESETS:
        print(f"error: unknown preset {args.name!r}; available: {', '.join(PRESETS)}", file=sys.stderr)
        return EXIT_MANIFEST
    if args.emit:
        Path(args.emit).write_text(PRESETS[args.name], encoding="utf-8")
        return EXIT_OK
    values = parse_manifest(PRESETS[args.name], f"preset:{args.name}")
    for key, val in (("out", args.out), ("threads", args.threads), ("seed", args.seed)):
        if val is not None:
            values[key] = (str(val), 0)
    cfg = resolve(values, f"preset:{args.name}")
    status = execute(cfg, cfg.out)
    sys.stdout.write((cfg.out / "summary.txt").read_text(encoding="utf-8"))
    return status


if __name__ == "__main__":
    sys.exit(main())
