import numpy as np
import pytest
import scipy.linalg
from scipy.integrate import quad

from forge.control import ControlSchedule, fourier_data
from forge.generators import coarse_grained_lindbladian, to_coarse
from forge.linalg import SuperOperator, ad, pauli, spin_operators
from forge.montecarlo import (EnsembleResult, SimConfig, compare, evolve_generator,
                              fit_decay_rate, run_ensemble, run_trajectory, trace_distance)
from forge.noise import NoiseModel, gamma_of_t

X, Y, Z = spin_operators(0.5)
TAU = 20.0
OU = NoiseModel("ou", sigma=1.0, tau=TAU)


def config(**kw):
    base = dict(noise=OU, control=ControlSchedule.none(), ops=(Z,), eps=0.3, dt=1.0, n_traj=64,
                horizon=1.0, n_points=5, seed=7)
    base.update(kw)
    return SimConfig(**base)


def bloch(states):
    return np.stack([np.einsum("...ij,ji->...", states, s).real for s in pauli()], axis=-1)


@pytest.mark.parametrize("kw, msg", [
    (dict(eps=1.5), "eps out of"),
    (dict(eps=0.0), "eps out of"),
    (dict(n_traj=0), "n_traj"),
    (dict(dt=5.0), "resolve tau"),
    (dict(control=ControlSchedule.bangbang_pi(0.5)), "omega_c"),
])
def test_sim_config_validation(kw, msg):
    with pytest.raises(ValueError, match=msg):
        config(**kw)


def test_zero_noise_gives_identity():
    cfg = config()
    n = int(cfg.record_steps()[-1])
    t, states = run_trajectory(cfg, 0, noise=np.zeros((1, n)))
    assert np.allclose(states, cfg.rho0, atol=1e-14)


def test_non_finite_noise_rejected():
    cfg = config()
    n = int(cfg.record_steps()[-1])
    bad = np.zeros((1, n))
    bad[0, 3] = np.nan
    with pytest.raises(ValueError):
        run_trajectory(cfg, 0, noise=bad)


def test_commuting_case_matches_accumulated_phase():
    cfg = config(control=ControlSchedule.bangbang_pi(0.03))
    n = int(cfg.record_steps()[-1])
    xi = np.random.default_rng(3).normal(size=(1, n))
    t, states = run_trajectory(cfg, 0, noise=xi)
    # H^I = +-g Sz: the phase is the signed integral of the noise
    mid = (np.arange(n) + 0.5) * cfg.dt
    sign = np.where(cfg.control.segment_index(mid) == 0, 1.0, -1.0)
    phi = np.concatenate([[0.0], np.cumsum(sign * xi[0] * cfg.dt)]) * cfg.g
    for k, step in enumerate(cfg.record_steps()):
        u = scipy.linalg.expm(-1j * phi[step] * Z)
        assert np.allclose(states[k], u @ cfg.rho0 @ u.conj().T, atol=1e-9)


def test_two_seeds_differ_and_same_seed_repeats():
    cfg = config()
    a = run_trajectory(cfg, 0)[1]
    b = run_trajectory(cfg, 1)[1]
    c = run_trajectory(cfg, 0)[1]
    assert not np.allclose(a[-1], b[-1])
    assert np.array_equal(a, c)


def test_ensemble_is_bit_stable_across_threads_and_batches(monkeypatch):
    import forge.montecarlo as mc

    cfg = config(n_traj=40)
    one = run_ensemble(cfg, threads=1)
    monkeypatch.setattr(mc, "BATCH", 7)
    many = run_ensemble(cfg, threads=4)
    assert np.array_equal(one.states, many.states)
    assert np.array_equal(one.purity, many.purity)


def test_unitarity_over_long_horizon():
    cfg = config(eps=0.08, horizon=1.0, n_points=2, n_traj=2)
    t, states = run_trajectory(cfg, 0)
    # pure input stays pure under any unitary path
    assert abs(np.trace(states[-1] @ states[-1]).real - 1) < 1e-9


def test_ensemble_invariants():
    ens = run_ensemble(config(n_traj=200, control=ControlSchedule.constant(0.01 * Z), ops=(X,)))
    tr = np.einsum("pii->p", ens.mean_rho)
    assert np.allclose(tr, 1, atol=1e-10)
    assert np.all(np.linalg.eigvalsh(ens.mean_rho) > -1e-8)
    assert np.all((ens.purity > 0.5 - 1e-10) & (ens.purity <= 1 + 1e-10))


def test_mixed_state_is_fixed():
    ens = run_ensemble(config(n_traj=20, rho0=np.eye(2) / 2))
    assert np.allclose(ens.mean_rho, np.eye(2) / 2, atol=1e-12)


def test_jackknife_purity_on_known_ensemble():
    # two trajectories, pure states |0> and |1>: mean is I/2
    states = np.zeros((2, 1, 2, 2), dtype=complex)
    states[0, 0, 0, 0] = 1
    states[1, 0, 1, 1] = 1
    ens = EnsembleResult(np.zeros(1), np.zeros(1), states)
    assert ens.purity[0] == pytest.approx(0.5)
    # unbiased estimate of Tr(E[rho]^2) from the pair: sum_{i != j} Tr(rho_i rho_j)/2 = 0
    assert ens.purity_bc[0] == pytest.approx(0.0)


def test_no_control_dephasing_rate():
    """Coherence decays at J~(0) g^2 in lab time, i.e. 2 per unit s at this eps."""
    cfg = config(eps=0.15, n_traj=1000, horizon=1.0, n_points=9, seed=11)
    ens = run_ensemble(cfg)
    rate, se = fit_decay_rate(ens, s_min=0.25)
    assert abs(rate - 2.0) < 3 * se


def test_gaussian_phase_average_commuting_noise():
    dc = NoiseModel("damped-cosine", sigma=1.0, tau=1.0, omega0=4.0)
    cfg = SimConfig(noise=dc, control=ControlSchedule.none(), ops=(Z,), eps=0.5, dt=0.02, n_traj=3000,
                    coupling=2.0, times=(0.0, 0.5, 1.0, 2.0, 3.0), seed=0)
    ens = run_ensemble(cfg)
    r = bloch(ens.mean_rho)[:, 0]
    # <exp(i phi)> = exp(-<phi^2>/2), <phi^2> = g^2 int_0^t gamma
    expected = [np.exp(-0.5 * 4.0 * quad(lambda u: gamma_of_t(dc, u), 0, t)[0]) for t in ens.t]
    assert np.all(np.abs(r - expected) <= 3 * ens.bloch_vec_se[:, 0] + 1e-12)


@pytest.mark.slow
def test_coherence_revives_where_gamma_is_negative():
    """gamma(t) < 0 on (1.034, 1.337) for J = exp(-|t|) cos 4t: coherence grows there."""
    dc = NoiseModel("damped-cosine", sigma=1.0, tau=1.0, omega0=4.0)
    cfg = SimConfig(noise=dc, control=ControlSchedule.none(), ops=(Z,), eps=0.5, dt=0.02,
                    n_traj=120000, coupling=2.8, times=(0.0, 1.04, 1.34), seed=0)
    ens = run_ensemble(cfg)
    x = np.einsum("npij,ji->np", ens.states, pauli()[0]).real
    d = x[:, 2] - x[:, 1]
    gain, se = d.mean(), d.std(ddof=1) / np.sqrt(d.size)
    assert gain > 3 * se


def test_white_noise_bangbang_matches_generator():
    from forge.generators import white_noise_generator

    white = NoiseModel("white", sigma=1.0)
    sched = ControlSchedule.bangbang_pi(0.2)
    cfg = SimConfig(noise=white, control=sched, ops=(Z,), eps=0.3, dt=0.1, n_traj=1000, horizon=1.0,
                    n_points=5, seed=2)
    ens = run_ensemble(cfg)
    pred = evolve_generator(lambda t: white_noise_generator(white, sched, [cfg.g * Z], t), cfg.rho0,
                            ens.t, step=cfg.dt, period=sched.period)
    assert compare(ens, pred)["within"]


def test_precession_follows_k_tilde_over_four():
    """Constant control: MC Bloch vector matches the K~/4 Lamb shift, not half of it."""
    w = 1.0 / TAU
    sched = ControlSchedule.constant(w * Z)
    cfg = config(control=sched, ops=(X,), eps=0.15, n_traj=2000, horizon=1.0, n_points=3, seed=0)
    ens = run_ensemble(cfg)
    parts = to_coarse(coarse_grained_lindbladian(fourier_data(sched, [cfg.g * X]), OU), cfg.eps, TAU)
    half = 0.5 * parts.hamiltonian_part + parts.dissipative_part
    b_full = bloch(evolve_generator(parts, cfg.rho0, ens.s))[-1]
    b_half = bloch(evolve_generator(half, cfg.rho0, ens.s))[-1]
    mc, se = ens.bloch[-1], ens.bloch_vec_se[-1]
    assert np.all(np.abs(mc[:2] - b_full[:2]) < 3 * se[:2])
    assert abs(mc[1] - b_half[1]) > 5 * se[1]
    assert b_full[1] > 0


# evolve_generator

def test_zero_generator_keeps_state():
    rho = np.array([[0.6, 0.2], [0.2, 0.4]])
    out = evolve_generator(SuperOperator.zero(2), rho, [0.0, 1.0, 5.0])
    assert np.allclose(out, rho)


def test_dephasing_evolution_closed_form():
    g = 0.7
    L = -0.5 * g * (ad(Z) @ ad(Z))
    rho = np.full((2, 2), 0.5)
    s = np.array([0.0, 0.5, 2.0])
    out = evolve_generator(L, rho, s)
    assert np.allclose(out[:, 0, 1], 0.5 * np.exp(-0.5 * g * s))
    assert np.allclose(out[:, 0, 0], 0.5)


def test_constant_control_two_level_solution():
    model = NoiseModel("ou", tau=1.0)
    w = 1.0
    parts = coarse_grained_lindbladian(fourier_data(ControlSchedule.constant(w * Z), [X]), model)
    from forge.noise import k_tilde, spectral_density

    J, K = spectral_density(model, w), k_tilde(model, w)
    rho = np.array([[0.8, 0.3 - 0.1j], [0.3 + 0.1j, 0.2]])
    t = np.array([0.0, 0.7, 3.0])
    out = evolve_generator(parts, rho, t)
    assert np.allclose(out[:, 0, 0] - out[:, 1, 1], 0.6 * np.exp(-J * t / 2))
    assert np.allclose(out[:, 0, 1], rho[0, 1] * np.exp((-J / 4 + 1j * K / 4) * t))


def test_time_dependent_generator_and_step_check():
    # L(t) = -(1/2)(1 + sin t) ad(Z)^2 integrates to exp(-(t + 1 - cos t)/2) coherence
    A = ad(Z) @ ad(Z)
    gen = lambda t: -0.5 * (1 + np.sin(t)) * A
    rho = np.full((2, 2), 0.5)
    t = np.array([0.0, 1.0, 2.5])
    out = evolve_generator(gen, rho, t, step=0.01, period=2 * np.pi, check_step=True, step_tol=1e-4)
    exact = 0.5 * np.exp(-0.5 * (t + 1 - np.cos(t)))
    assert np.allclose(out[:, 0, 1], exact, atol=1e-5)
    with pytest.raises(ValueError, match="step-halving"):
        evolve_generator(gen, rho, t, step=0.5, check_step=True)
    with pytest.raises(ValueError, match="step"):
        evolve_generator(gen, rho, t)


def test_evolve_dimension_mismatch():
    with pytest.raises(ValueError):
        evolve_generator(SuperOperator.zero(3), np.eye(2) / 2, [1.0])


# compare

def test_compare_with_itself():
    ens = run_ensemble(config(n_traj=50))
    rep = compare(ens, ens.mean_rho)
    assert np.allclose(rep["trace_distance"], 0)
    assert rep["max_gap"] < 0.05
    assert np.allclose(trace_distance(ens.mean_rho, ens.mean_rho), 0)


def test_compare_grid_mismatch():
    ens = run_ensemble(config(n_traj=5))
    with pytest.raises(ValueError, match="grid"):
        compare(ens, ens.mean_rho[:-1])


def test_fit_decay_rate_on_exact_states():
    s = np.linspace(0, 1, 6)
    r = np.exp(-1.5 * s)
    rho = 0.5 * (np.eye(2)[None] + r[:, None, None] * pauli()[0][None])
    states = np.stack([rho, rho, rho])
    rate, se = fit_decay_rate(EnsembleResult(s, s, states))
    assert rate == pytest.approx(1.5)
    assert se == pytest.approx(0.0, abs=1e-12)


def test_csv_export(tmp_path):
    ens = run_ensemble(config(n_traj=10))
    path = tmp_path / "e.csv"
    ens.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "s,t,purity,purity_se,bloch_lognorm,bloch_se"
    assert len(lines) == 1 + ens.s.size
