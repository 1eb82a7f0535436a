"""The thirteen acceptance criteria, each timed and reported on one line."""

import dataclasses
import math
import time

import numpy as np
import pytest

from toeplab import cli
from toeplab import dynamo as dy
from toeplab import opforge as of
from toeplab import perturb as pt
from toeplab import spectra as sp
from toeplab import symbolkit as sk
from toeplab.opforge import HalfLine, LatticeBox

from conftest import random_real_symbol

F = sk.cosine(1, 2.0)
pytestmark = pytest.mark.acceptance


def report(log, number, title, passed, detail, elapsed, limit=None):
    budget = f" (limit {limit:g} s)" if limit is not None else ""
    ok = passed and (limit is None or elapsed < limit)
    log.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} {title}: {detail}; "
               f"{elapsed:.2f} s{budget}")
    print(log[-1])
    assert passed, detail
    if limit is not None:
        assert elapsed < limit, f"{elapsed:.1f} s exceeds {limit} s"


def test_criterion_01_product_identity(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(25):
        f = random_real_symbol(rng, int(rng.integers(1, 5)))
        g = random_real_symbol(rng, int(rng.integers(1, 5)))
        worst = max(worst, of.sarason_defect(f, g, 64).interior_max)
    report(acceptance_log, 1, "Toeplitz product identity, 25 pairs at N=64", worst < 1e-12,
           f"max interior defect {worst:.2e} < 1e-12", time.perf_counter() - t0, 5)


def test_criterion_02_position_commutator(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(10):
        h = random_real_symbol(rng, int(rng.integers(1, 5)))
        worst = max(worst, of.position_commutator_defect(h, 128).interior_max)
    report(acceptance_log, 2, "[X,T_h] + i T_h' at N=128, 10 symbols", worst < 1e-12,
           f"max interior defect {worst:.2e} < 1e-12", time.perf_counter() - t0, 5)


def test_criterion_03_formula_rhs(acceptance_log):
    t0 = time.perf_counter()
    N = 256
    worst = 0.0
    for f in (sk.cosine(1, 2.0), sk.cosine(1, 2.0) + sk.cosine(2)):
        g = sk.derivative(f)
        bracket = of.icommutator(of.conjugate_operator(g, HalfLine(N)), of.toeplitz_matrix(f, N)).data
        rhs = of.commutator_formula_rhs(f, g, N).data
        worst = max(worst, of.defect_report(bracket - rhs, f.bandwidth[0] + g.bandwidth[0],
                                            "formula").interior_max)
    report(acceptance_log, 3, "formula RHS against bracket at N=256", worst < 1e-10,
           f"max interior defect {worst:.2e} < 1e-10", time.perf_counter() - t0, 30)


def test_criterion_04_thresholds(acceptance_log):
    t0 = time.perf_counter()
    cases = {
        "2cos": (F, [-2.0, 2.0]),
        "laplacian d=1": (sk.laplacian(1), [-2.0, 2.0]),
        "laplacian d=2": (sk.laplacian(2), [-4.0, 0.0, 4.0]),
    }
    bad = []
    for name, (f, expect) in cases.items():
        th = sk.thresholds(f, sk.critical_set(f))
        if len(th) != len(expect) or np.abs(np.array(th) - expect).max() > 1e-9:
            bad.append(f"{name}: {th}")
    report(acceptance_log, 4, "threshold sets", not bad,
           "all sets exact to 1e-9" if not bad else "; ".join(bad), time.perf_counter() - t0, 1)


def test_criterion_05_mourre(acceptance_log):
    t0 = time.perf_counter()
    k = sk.mourre_constants(F, sk.gradient_norm_sq(F), (-1, 1))
    analytic = 4 - max(lam * lam for lam in (-1.0, 1.0))
    mins, verdicts = [], []
    for N in (256, 512, 1024):
        H = of.toeplitz_matrix(F, N)
        A = of.conjugate_operator(sk.derivative(F), HalfLine(N))
        rep = sp.mourre_verify(H, of.icommutator(A, H), (-1, 1), k)
        mins.append(rep.lambda_min_interior)
        verdicts.append(rep.verdict)
    monotone = mins[0] >= mins[1] >= mins[2]
    ok = abs(k.c - analytic) < 1e-6 and mins[-1] >= 2.85 and monotone
    report(acceptance_log, 5, "Mourre constant and certificate", ok,
           f"c={k.c:.9f} (analytic {analytic:g}), ladder lam_min={[round(m, 4) for m in mins]}, "
           f"verdicts={verdicts}", time.perf_counter() - t0, 120)


def test_criterion_06_virial_presets(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    worst = {}
    for name, text in cli.PRESETS.items():
        cfg = cli.resolve(cli.parse_manifest(text, name))
        cfg = dataclasses.replace(cfg, experiments=["virial"])
        out = tmp_path / name
        assert cli.execute(cfg, out) == 0
        worst[name] = float((out / "virial.csv").read_text().splitlines()[1].split(",")[1])
    top = max(worst.values())
    report(acceptance_log, 6, "virial in bracket form on every preset", top < 1e-12,
           f"max relative {top:.2e} < 1e-12 over {len(worst)} presets", time.perf_counter() - t0)


def test_criterion_07_bound_state(acceptance_log):
    t0 = time.perf_counter()

    def build(beta):
        return lambda N: (of.toeplitz_matrix(F, N) + pt.finite_rank([np.eye(N)[0]], [beta], N))

    strong = sp.count_eigenvalues(build(2.0), (2.1, 3), [100, 200, 400])
    weak = sp.count_eigenvalues(build(0.5), (2.05, 3), [100, 200, 400])
    err = abs(strong.eigenvalues[0] - 2.5) if strong.eigenvalues else math.inf
    ok = strong.stabilized_count == 1 and err < 1e-6 and weak.stabilized_count == 0
    report(acceptance_log, 7, "bound state beta + 1/beta", ok,
           f"beta=2 count {strong.stabilized_count}, |lambda-2.5|={err:.1e}; "
           f"beta=0.5 count {weak.stabilized_count}", time.perf_counter() - t0, 10)


def test_criterion_08_admissibility(acceptance_log):
    t0 = time.perf_counter()
    cases = [
        (pt.SequenceSpec.power(2), "S", "converges"),
        (pt.SequenceSpec.power(1), "S", "diverges"),
        (pt.SequenceSpec.power(2), "H", "converges"),
        (pt.SequenceSpec.power(1), "H", "diverges"),
        (pt.SequenceSpec.log_power(1), "L", "converges"),
    ]
    bad, fits = [], []
    for spec, cond, want in cases:
        rep = pt.admissibility_check(spec, cond, r_max=1e4)
        fits.append(rep.r_squared)
        if rep.verdict != want or rep.r_squared < 0.99:
            bad.append(f"{cond}[{spec.to_text()}]={rep.verdict} R2={rep.r_squared:.4f}")
    report(acceptance_log, 8, "admissibility verdicts", not bad,
           f"all five verdicts as expected, min R2={min(fits):.4f}" if not bad else "; ".join(bad),
           time.perf_counter() - t0, 30)


# --- dynamics: runs are shared by criteria 9, 10 and 11 ---------------------------------------------


@pytest.fixture(scope="module")
def dynamics():
    runs = {}
    t0 = time.perf_counter()
    box = LatticeBox(1, 600)
    e0 = np.zeros(box.size)
    e0[600] = 1
    runs["lattice"] = dy.propagation_trace(F, box, e0, np.linspace(0, 200, 401))
    runs["lattice_time"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    N = 1024
    hl = HalfLine(N)
    seed = np.eye(N)[N // 8]
    for label, V in (("free", None), ("potential", pt.diagonal_potential(pt.SequenceSpec.power(2), N))):
        sd = sp.eigh(dy.build_hamiltonian(F, hl, V))
        w = sp.Bump(-1, 1)(sd.eigenvalues)
        filtered = sd.eigenvectors @ (w * (sd.eigenvectors.T @ seed))
        t_max = 0.9 * 0.8 * dy.edge_distance(filtered, hl) / 2
        runs[label] = dy.band_filtered_rate(F, hl, (-1, 1), seed, np.linspace(0, t_max, 201),
                                            V=V, sd=sd)
    runs["band_time"] = time.perf_counter() - t0
    return runs


def test_criterion_09_ballistic_rate(acceptance_log, dynamics):
    tr = dynamics["lattice"]
    rel = abs(tr.rate / math.sqrt(2) - 1)
    report(acceptance_log, 9, "lattice ballistic rate, N=600, t_max=200", rel < 0.02 and tr.lightcone_ok,
           f"rate {tr.rate:.6f} vs sqrt2, rel err {rel:.1e}", dynamics["lattice_time"], 120)


def test_criterion_10_band_sandwich(acceptance_log, dynamics):
    lo, hi = math.sqrt(3) - 0.1, 2 + 0.1
    rates = {k: dynamics[k].rate for k in ("free", "potential")}
    ok = all(lo <= r <= hi for r in rates.values())
    report(acceptance_log, 10, "band-filtered rate on [-1,1], N=1024", ok,
           ", ".join(f"{k} {r:.4f}" for k, r in rates.items()) + f" in [{lo:.4f}, {hi:.4f}]",
           dynamics["band_time"], 180)


def test_criterion_11_position_identity(acceptance_log, dynamics):
    errors = [dynamics["lattice"].identity_error,
              dynamics["free"].trace.identity_error,
              dynamics["potential"].trace.identity_error]
    worst = max(errors)
    report(acceptance_log, 11, "position-growth identity on every dynamics run", worst < 1e-6,
           f"max relative mismatch {worst:.1e} < 1e-6 over {len(errors)} runs", 0.0)


def test_criterion_12_lap(acceptance_log):
    t0 = time.perf_counter()
    N = 1024
    H = of.toeplitz_matrix(F, N)
    A = of.conjugate_operator(sk.derivative(F), HalfLine(N))
    sd = sp.eigh(H)
    etas = np.logspace(-1, -2.5, 7)
    floor = sp.level_spacing_floor(sd.eigenvalues, 0.0)
    free = sp.classify_lap(0.0, etas, sp.lap_probe(H, A, 0.0, etas, sd), floor)

    M = 400
    Hb = of.toeplitz_matrix(F, M) + pt.finite_rank([np.eye(M)[0]], [2.0], M)
    Ab = of.conjugate_operator(sk.derivative(F), HalfLine(M))
    etas_b = np.logspace(-1, -4, 13)
    bound = sp.classify_lap(2.5, etas_b, sp.lap_probe(Hb, Ab, 2.5, etas_b), 0.0)
    ok = (free.classification == "plateau" and free.per_decade_variation < 0.1
          and abs(bound.slope + 1) <= 0.05)
    report(acceptance_log, 12, "LAP plateau at 0 and divergence at 2.5", ok,
           f"variation {free.per_decade_variation:.3f} above floor {floor:.2e}; "
           f"bound-state slope {bound.slope:.4f}", time.perf_counter() - t0, 120)


def test_criterion_13_compactness(acceptance_log):
    t0 = time.perf_counter()
    fp = sk.derivative(F)
    s64 = of.singular_decay(of.compact_part(F, fp, 64), 10)
    s128 = of.singular_decay(of.compact_part(F, fp, 128), 10)
    gap = float(np.abs(s64 - s128).max())
    x64 = of.singular_decay(of.position_matrix(HalfLine(64)), 10)
    x128 = of.singular_decay(of.position_matrix(HalfLine(128)), 10)
    control = float(np.abs(x64 - x128).min())
    ok = gap < 1e-8 and control > 1
    report(acceptance_log, 13, "compact part singular values stable in N", ok,
           f"max gap {gap:.1e} < 1e-8; X control min gap {control:g}", time.perf_counter() - t0, 30)
