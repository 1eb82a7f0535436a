import math

import numpy as np
import pytest

from toeplab import dynamo as dy
from toeplab import opforge as of
from toeplab import perturb as pt
from toeplab import spectra as sp
from toeplab import symbolkit as sk

F = sk.cosine(1, 2.0)


def site(space, n):
    v = np.zeros(space.size if hasattr(space, "size") else space.N)
    v[n] = 1.0
    return v


# --- propagator --------------------------------------------------------------------------------


def test_evolve_time_zero_and_identity():
    N = 30
    sd = sp.eigh(of.toeplitz_matrix(F, N))
    phi = np.random.default_rng(1).standard_normal(N)
    phi /= np.linalg.norm(phi)
    np.testing.assert_allclose(dy.evolve(sd, phi, [0.0])[0], phi, atol=1e-13)
    sd1 = sp.eigh(of.toeplitz_matrix(sk.constant(1.0), N))
    ts = np.array([0.3, 1.0, 7.5])
    psi = dy.evolve(sd1, phi, ts)
    for t, row in zip(ts, psi):
        assert np.linalg.norm(row - np.exp(1j * t) * phi) < 1e-12


def test_evolve_taylor_oracle():
    N = 60
    H = of.toeplitz_matrix(F, N).data
    e1 = np.eye(N)[0].astype(complex)
    term, series = e1.copy(), e1.copy()
    for k in range(1, 41):
        term = (1j / k) * (H @ term)
        series += term
    psi = dy.evolve(sp.eigh(of.toeplitz_matrix(F, N)), e1, [1.0])[0]
    assert np.abs(psi - series).max() < 1e-10


def test_evolve_unitarity_energy_and_guards():
    N = 80
    Hm = of.toeplitz_matrix(F, N) + pt.diagonal_potential(pt.SequenceSpec.power(2), N)
    sd = sp.eigh(Hm)
    phi = np.exp(-0.1 * (np.arange(N) - 20.0) ** 2)
    phi /= np.linalg.norm(phi)
    psi = dy.evolve(sd, phi, np.linspace(0, 20, 41))
    assert np.abs(np.linalg.norm(psi, axis=1) - 1).max() < 1e-11
    energy = np.real(np.einsum("ti,ij,tj->t", psi.conj(), Hm.data, psi))
    assert np.abs(energy - energy[0]).max() < 1e-11
    with pytest.raises(ValueError):
        dy.evolve(sd, phi, [1.0, 0.5])
    with pytest.warns(UserWarning):
        dy.evolve(sd, 2 * phi, [0.0])


# --- light cone --------------------------------------------------------------------------------


def test_lightcone_examples():
    hl = of.HalfLine(1000)
    d = dy.edge_distance(np.eye(1000)[0], hl)
    assert d == 999
    assert dy.max_velocity(F) == pytest.approx(2.0, abs=1e-9)
    assert dy.lightcone_guard(F, d, 100).ok
    bad = dy.lightcone_guard(F, d, 500)
    assert not bad.ok
    assert bad.max_safe_t == pytest.approx(0.8 * 999 / 2)
    flat = dy.lightcone_guard(sk.constant(3.0), 5, 1e9)
    assert flat.ok and flat.max_safe_t == math.inf


def test_edge_distance_box():
    box = of.LatticeBox(2, 10)
    phi = np.zeros(box.size)
    phi[np.flatnonzero(np.all(box.coordinates() == [3, -2], axis=1))] = 1
    assert dy.edge_distance(phi, box) == 7


def test_trace_refuses_outside_cone():
    hl = of.HalfLine(100)
    with pytest.raises(dy.LightconeError) as err:
        dy.propagation_trace(F, hl, np.eye(100)[0], np.linspace(0, 60, 31))
    assert err.value.max_safe_t == pytest.approx(0.8 * 99 / 2)


# --- propagation traces ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def lattice_trace():
    box = of.LatticeBox(1, 600)
    return dy.propagation_trace(F, box, site(box, 600), np.linspace(0, 200, 401))


def test_lattice_ballistic_rate(lattice_trace):
    assert lattice_trace.rate == pytest.approx(math.sqrt(2), rel=0.02)
    assert lattice_trace.lightcone_ok
    assert np.all(lattice_trace.x_norms >= 1 - 1e-12)
    assert lattice_trace.norm_drift < 1e-11
    assert lattice_trace.energy_drift < 1e-11
    assert lattice_trace.identity_error < 1e-6


def test_lattice_cesaro_limit(lattice_trace):
    # mean of |f'|^2 = 4 sin^2 over the torus is 2
    assert lattice_trace.cesaro_rate == pytest.approx(math.sqrt(2), rel=0.02)


def test_bound_state_does_not_move():
    N = 400
    V = pt.finite_rank([np.eye(N)[0]], [2.0], N)
    sd = sp.eigh(dy.build_hamiltonian(F, of.HalfLine(N), V))
    bound = sd.eigenvectors[:, -1]
    assert sd.eigenvalues[-1] == pytest.approx(2.5, abs=1e-10)
    tr = dy.propagation_trace(F, of.HalfLine(N), bound, np.linspace(0, 100, 101), V=V, sd=sd)
    assert abs(tr.rate) < 0.01
    assert tr.identity_error < 1e-6


@pytest.fixture(scope="module")
def halfline_pair():
    hl = of.HalfLine(1000)
    times = np.linspace(0, 390, 781)
    fwd = dy.propagation_trace(F, hl, np.eye(1000)[0], times)
    bwd = dy.propagation_trace(F, hl, np.eye(1000)[0], times, direction=-1)
    return fwd, bwd


def test_rate_matches_cesaro(halfline_pair):
    fwd, _ = halfline_pair
    assert fwd.rate == pytest.approx(fwd.cesaro_rate, rel=0.03)
    assert fwd.identity_error < 1e-6


def test_time_reversal(halfline_pair):
    fwd, bwd = halfline_pair
    assert abs(fwd.rate - bwd.rate) <= 3 * max(fwd.rate_stderr, bwd.rate_stderr, 1e-12)
    assert bwd.identity_error < 1e-6


def test_upper_bound(halfline_pair):
    fwd, _ = halfline_pair
    bound = dy.ballistic_upper_bound(F, 1000)
    assert bound == pytest.approx(2.0, abs=1e-3)
    assert fwd.rate <= bound + 0.1 * bound
    V = pt.diagonal_potential(pt.SequenceSpec.power(2), 400)
    assert dy.ballistic_upper_bound(F, 400, V) > 0


def test_trace_time_validation():
    hl = of.HalfLine(50)
    with pytest.raises(ValueError):
        dy.propagation_trace(F, hl, np.eye(50)[0], [0.5, 1.0])
    with pytest.raises(ValueError):
        dy.propagation_trace(F, hl, np.eye(50)[0], [0.0, 1.0, 1.0])


def test_trace_csv(tmp_path):
    tr = dy.propagation_trace(F, of.HalfLine(60), np.eye(60)[0], np.linspace(0, 10, 6))
    dy.write_trace_csv(tr, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,x_norm,cesaro,rate_running"
    assert len(lines) == 7
    assert lines[1].split(",")[3] == "nan"


# --- band-filtered transport ----------------------------------------------------------------------


def test_band_sandwich_lattice():
    box = of.LatticeBox(1, 600)
    br = dy.band_filtered_rate(F, box, (-1, 1), site(box, 600), np.linspace(0, 120, 241))
    assert br.bounds == pytest.approx((math.sqrt(3), 2.0), abs=1e-6)
    assert math.sqrt(3) - 0.1 <= br.rate <= 2 + 0.05
    assert br.in_sandwich
    assert br.trace.identity_error < 1e-6


@pytest.mark.parametrize("N", [512, 1024])
@pytest.mark.parametrize("with_potential", [False, True])
def test_band_sandwich_halfline(N, with_potential):
    hl = of.HalfLine(N)
    V = pt.diagonal_potential(pt.SequenceSpec.power(2), N) if with_potential else None
    sd = sp.eigh(dy.build_hamiltonian(F, hl, V))
    seed = np.eye(N)[N // 8]
    w = sp.Bump(-1, 1)(sd.eigenvalues)
    filtered = sd.eigenvectors @ (w * (sd.eigenvectors.T @ seed))
    t_max = 0.9 * 0.8 * dy.edge_distance(filtered, hl) / 2
    br = dy.band_filtered_rate(F, hl, (-1, 1), seed, np.linspace(0, t_max, 201), V=V, sd=sd)
    assert math.sqrt(3) - 0.1 <= br.rate <= 2 + 0.1
    assert br.trace.identity_error < 1e-6


@pytest.mark.slow
def test_band_narrow_rate_near_two():
    box = of.LatticeBox(1, 2000)
    br = dy.band_filtered_rate(F, box, (-0.2, 0.2), site(box, 2000), np.linspace(0, 200, 41))
    assert br.rate == pytest.approx(2.0, rel=0.03)


def test_empty_band():
    box = of.LatticeBox(1, 50)
    with pytest.raises(dy.EmptyBandError):
        dy.band_filtered_rate(F, box, (2.5, 3.0), site(box, 50), np.linspace(0, 5, 11))


# --- Heisenberg picture -------------------------------------------------------------------------------


def test_heisenberg_limit():
    N = 400
    phi = np.zeros(2 * N + 1)
    phi[N] = 1
    res = dy.heisenberg_limit(F, phi, N, [10, 25, 50])
    target = np.linalg.norm(of.laurent_matrix(sk.gradient_norm_sq(F), N).data @ phi)
    assert np.all(res < 0.05 * target)
    small = np.zeros(41)
    small[20] = 1
    flat = dy.heisenberg_limit(sk.constant(1.0), small, 20, [1.0, 5.0])
    np.testing.assert_allclose(flat, 0.0, atol=1e-14)


def test_heisenberg_guards():
    phi = np.zeros(41)
    phi[20] = 1
    with pytest.raises(ValueError):
        dy.heisenberg_limit(F, phi, 20, [0.0])
    with pytest.raises(dy.LightconeError):
        dy.heisenberg_limit(F, phi, 20, [50.0])
    with pytest.raises(ValueError):
        dy.heisenberg_limit(F, phi, 30, [1.0])


def test_heisenberg_wave_packet():
    N = 400
    n = np.arange(-N, N + 1)
    phi = np.exp(-n**2 / 1600.0 + 1j * np.pi / 3 * n)
    res = dy.heisenberg_limit(F, phi, N, [10, 25, 50, 100])
    assert np.all(res < 1e-10)


def test_heisenberg_periodic_mode_keeps_its_eigenvalue():
    # a Fourier mode is an eigenvector of the periodic L, so <phi, residual> stays at -mu
    M = 64
    n = np.arange(-M, M + 1)
    k = 2 * np.pi * 10 / (2 * M + 1)
    mu = 4 * np.sin(k) ** 2
    res = dy.heisenberg_limit(F, np.exp(1j * k * n), M, [5.0, 50.0, 500.0], boundary="periodic")
    assert res[0] > res[1] > res[2]
    assert res[-1] == pytest.approx(mu, rel=0.02)
