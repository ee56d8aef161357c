import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.linalg import expm

from petcons import agents as ag
from petcons import graph, netsim
from petcons import synthesis as sy

A6 = np.array([[0.2, -0.8], [0.26, 0.05]])
B6 = np.array([[0.7], [-1.1]])
P6 = np.array([[0.5859, -0.1575], [-0.1575, 0.4274]])
X0 = np.array([[-5.5, -6.1], [-1.6, -1.5], [5.9, 2.5], [12.35, 15.1]])
PATH4 = graph.Topology.from_edges(4, [(0, 1), (1, 2), (2, 3)])
G6 = expm(A6 * 0.002)


def make_agent(i=0, nbrs=(1,), x=(1.0, 2.0)):
    return ag.AgentRuntime(i, nbrs, np.array(x, dtype=float), 1)


# ---------------------------------------------------------------- model bank

def test_propagate_identity_keeps_state():
    bank = ag.ModelBank(0, (0, 1), 2)
    bank[1].y = np.array([1.0, -1.0])
    ag.propagate_models(bank, np.eye(2))
    assert np.array_equal(bank.y(1), [1.0, -1.0])
    assert np.array_equal(bank[1].y_prev, [1.0, -1.0])


def test_propagate_k_steps_matches_power():
    bank = ag.ModelBank(0, (0,), 2)
    x = np.array([0.3, -2.0])
    ag.apply_update(bank, 0, x, 0, G6)
    for _ in range(25):
        ag.propagate_models(bank, G6)
    assert np.max(np.abs(bank.y(0) - np.linalg.matrix_power(G6, 25) @ x)) < 1e-12
    ref = x.copy()
    for _ in range(25):
        ref = G6 @ ref
    assert np.max(np.abs(bank.y(0) - ref)) < 1e-12


def test_apply_update_delay_free_and_delayed():
    bank = ag.ModelBank(0, (0, 1), 2)
    x = np.array([1.0, 2.0])
    ag.apply_update(bank, 1, x, 0, G6)
    assert np.array_equal(bank.y(1), x)
    prev = bank[1].y_prev.copy()
    ag.apply_update(bank, 1, x, 5, G6, send_step=3)
    assert np.allclose(bank.y(1), np.linalg.matrix_power(G6, 5) @ x, atol=1e-14)
    assert np.array_equal(bank[1].y_prev, prev)


def test_apply_update_with_cached_powers():
    powers = [np.eye(2)]
    for _ in range(7):
        powers.append(G6 @ powers[-1])
    a, b = ag.ModelBank(0, (0, 1), 2), ag.ModelBank(0, (0, 1), 2)
    x = np.array([3.0, -4.0])
    for p in range(8):
        ag.apply_update(a, 1, x, p, G6)
        ag.apply_update(b, 1, x, p, G6, powers=powers)
        assert np.max(np.abs(a.y(1) - b.y(1))) < 1e-14


def test_control_input_reuses_given_z():
    a = make_agent()
    a.bank[1].y = np.array([0.0, 1.0])
    F = np.array([[0.5, -1.0]])
    z = ag.compute_z(a)
    assert np.array_equal(ag.control_input(a, F, 2.0, z), ag.control_input(a, F, 2.0))


def test_apply_update_unknown_sender_and_stale():
    bank = ag.ModelBank(0, (0, 1), 2)
    with pytest.raises(KeyError):
        ag.apply_update(bank, 7, np.zeros(2), 0, G6)
    with pytest.raises(ValueError):
        ag.apply_update(bank, 1, np.zeros(2), -1, G6)
    assert ag.apply_update(bank, 1, np.ones(2), 2, G6, send_step=10)
    assert not ag.apply_update(bank, 1, np.full(2, 9.0), 1, G6, send_step=8)
    assert np.allclose(bank.y(1), G6 @ G6 @ np.ones(2))


# ---------------------------------------------------------------- z and u

def test_compute_z_simple_cases():
    a = make_agent()
    a.bank[1].y = a.x_now.copy()
    assert np.array_equal(ag.compute_z(a), [0.0, 0.0])
    v = np.array([0.5, -0.25])
    a.bank[1].y = a.x_now - v
    assert np.allclose(ag.compute_z(a), v)


def test_compute_z_matches_stacked_form():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(4, 2))
    Y = X + 0.1 * rng.normal(size=(4, 2))
    agents = [ag.AgentRuntime(i, PATH4.neighbor_lists[i], X[i], 1) for i in range(4)]
    for a in agents:
        for j in a.bank.entries:
            a.bank[j].y = Y[j].copy()
    L = graph.laplacian(PATH4).laplacian
    # z = (L kron I) x - (Adj kron I) e with e = y - x
    Z = L @ X - PATH4.adjacency @ (Y - X)
    for i, a in enumerate(agents):
        assert np.max(np.abs(ag.compute_z(a) - Z[i])) < 1e-12


def test_control_input_matches_compact_form():
    spec = graph.laplacian(PATH4)
    gains = sy.design_gains(sy.PlantModel(A6, B6), spec, 0.01, P=P6)
    world = netsim.SimWorld(sy.PlantModel(A6, B6), PATH4, X0, 0.002, gains=gains,
                            policy="never", steps=1)
    logs = world.run(1)
    BF = B6 @ gains.F
    D = np.diag(PATH4.degrees)
    x, y = X0.ravel(), X0.ravel()
    Bu = gains.c1 * (np.kron(D, BF) @ x - np.kron(PATH4.adjacency, BF) @ y)
    assert np.max(np.abs((logs.U[0] @ B6.T).ravel() - Bu)) < 1e-12


def test_control_zero_at_consensus():
    gains = SimpleNamespace(F=np.array([[1.0, -2.0]]))
    a = make_agent()
    a.bank[1].y = a.x_now.copy()
    assert np.array_equal(ag.control_input(a, gains.F, 3.0), [0.0])


# ---------------------------------------------------------------- discretization errors

def test_disc_errors_zero_at_start_and_constant_trajectories():
    a = make_agent()
    errs = ag.disc_errors(a)
    assert not errs.z_breve.any() and not errs.e_breve.any()
    ag.propagate_models(a.bank, np.eye(2))
    a.sample(a.x_now, 1)
    errs = ag.disc_errors(a)
    assert not errs.x_breve.any() and not errs.z_breve.any() and not errs.e_breve.any()


def test_disc_errors_log_replay():
    rng = np.random.default_rng(3)
    plant = sy.PlantModel(rng.normal(size=(3, 3)), rng.normal(size=(3, 1)))
    topo = graph.Topology.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    gains = sy.design_gains(plant, graph.laplacian(topo), 1.0)
    world = netsim.SimWorld(plant, topo, rng.normal(size=(3, 3)), 0.01, gains=gains,
                            policy="never", steps=3, record_models=True)
    logs = world.run(3)
    M, X = logs.models, logs.X
    for i, a in enumerate(world.agents):
        errs = ag.disc_errors(a)
        xb = X[1, i] - X[2, i]
        yb = {j: M[1, i, j] - M[2, i, j] for j in a.bank.entries}
        zb = sum(xb - yb[j] for j in topo.neighbor_lists[i])
        assert np.max(np.abs(errs.x_breve - xb)) < 1e-12
        assert np.max(np.abs(errs.e_breve - (yb[i] - xb))) < 1e-12
        assert np.max(np.abs(errs.z_breve - zb)) < 1e-12


def test_first_step_after_event_e_breve_equals_E_z():
    spec = graph.laplacian(PATH4)
    plant = sy.PlantModel(A6, B6)
    gains = sy.design_gains(plant, spec, 0.01, P=P6)
    world = netsim.SimWorld(plant, PATH4, X0, 0.002, gains=gains, policy="never",
                            forced={5: {2}}, steps=7)
    world.run(6)
    z5 = world.logs.Z[5, 2].copy()
    world.step()
    E = expm(np.block([[A6, gains.c1 * B6 @ gains.F], [np.zeros((2, 4))]]) * 0.002)[:2, 2:]
    errs = ag.disc_errors(world.agents[2])
    assert np.max(np.abs(errs.e_breve - E @ z5)) < 1e-12


# ---------------------------------------------------------------- triggers

def _design(**kw):
    base = dict(N=4, b=1.0, sigma=0.5, eta=0.2)
    base.update(kw)
    return SimpleNamespace(**base)


def test_trigger_no_delay_hand_formula():
    rng = np.random.default_rng(1)
    F = rng.normal(size=(1, 2))
    gains = SimpleNamespace(F=F, c=1.3, c1=2.6)
    M = F.T @ F           # PBB^TP with F = -B^T P
    a = ag.AgentRuntime(1, (0, 2), rng.normal(size=2), 1)
    a.e_local = rng.normal(size=2)
    errs = ag.DiscErrors(rng.normal(size=2), {}, rng.normal(size=2), rng.normal(size=2))
    z = rng.normal(size=2)
    dsg = _design(b=0.7)
    N, Ni, b, c, c1 = 4, 2, 0.7, 1.3, 2.6
    delta = (c * Ni * (b * (N - 1) + (3 * N - 1) / b) * a.e_local @ M @ a.e_local
             + c1 * (1 + 2 * b * Ni) * errs.z_breve @ M @ errs.z_breve
             + c * Ni * ((N + 1) / b + 3 * b * (N - 1)) * errs.e_breve @ M @ errs.e_breve)
    thr = 0.5 * c1 * z @ M @ z + 0.2
    dec = ag.trigger_no_delay(a, dsg, gains, errs, z)
    assert dec.delta == pytest.approx(delta, rel=1e-12)
    assert dec.threshold == pytest.approx(thr, rel=1e-12)
    assert dec.fired == (delta > thr)
    assert all(v >= 0 for v in dec.components.values())


def test_trigger_no_delay_silent_after_event_and_for_huge_eta():
    a = make_agent()
    gains = SimpleNamespace(F=np.array([[1.0, 0.5]]), c=1.0, c1=2.0)
    zero = ag.DiscErrors(np.zeros(2), {}, np.zeros(2), np.zeros(2))
    dec = ag.trigger_no_delay(a, _design(), gains, zero, np.ones(2))
    assert dec.delta == 0.0 and not dec.fired
    a.e_local = np.array([1e3, -1e3])
    assert not ag.trigger_no_delay(a, _design(eta=math.inf), gains, zero, np.ones(2)).fired


def _delay_design(n, **kw):
    base = dict(N=2, b=1.0, sigma=0.5, eta=0.1, lambda_bar=0.0, z_bar=(3.0, 3.0),
                Upsilon=0.05, Upsilon_h=0.04, norm_GmI=0.01, norm_E=0.002,
                G_p=np.eye(n), GmI_Gp1=np.zeros((n, n)))
    base.update(kw)
    return SimpleNamespace(**base)


def test_trigger_delay_scalar_hand_formula():
    f, c1, b, lam = -0.8, 2.0, 1.5, 0.64
    gp, g1 = 1.07, 0.011
    gains = SimpleNamespace(F=np.array([[f]]), c=1.0, c1=c1)
    dsg = _delay_design(1, b=b, lambda_bar=lam, G_p=np.array([[gp]]), GmI_Gp1=np.array([[g1]]))
    a = ag.AgentRuntime(0, (1,), np.array([0.4]), 1)
    e, zb, z = 0.3, -0.2, 0.9
    a.e_local = np.array([e])
    errs = ag.DiscErrors(np.zeros(1), {}, np.zeros(1), np.array([zb]))
    zbar = 3.0
    t1 = c1 * (1 + b) ** 2 * f * f * zb * zb
    t2 = c1 * (1 + 1 / b) * lam * (abs(gp * e) + 0.05 * zbar) ** 2
    t3 = c1 * (1 + b) * (1 + 1 / b) * lam * (abs(g1 * e) + (0.01 * 0.04 + 0.002) * zbar) ** 2
    dec = ag.trigger_delay(a, dsg, gains, errs, np.array([z]))
    assert dec.delta == pytest.approx(t1 + t2 + t3, rel=1e-12, abs=1e-15)
    assert dec.threshold == pytest.approx(0.5 * c1 * f * f * z * z + 0.1, rel=1e-12)


def test_trigger_delay_floor_with_zero_errors():
    gains = SimpleNamespace(F=np.array([[0.3, -0.4]]), c=1.0, c1=3.0)
    dsg = _delay_design(2, lambda_bar=2.0, b=1.0)
    a = make_agent()
    zero = ag.DiscErrors(np.zeros(2), {}, np.zeros(2), np.zeros(2))
    dec = ag.trigger_delay(a, dsg, gains, zero, np.zeros(2))
    floor = (3.0 * 2 * 2.0 * (0.05 * 3.0) ** 2
             + 3.0 * 2 * 2 * 2.0 * ((0.01 * 0.04 + 0.002) * 3.0) ** 2)
    assert dec.delta == pytest.approx(floor, rel=1e-12)
    assert dec.fired == (floor > 0.1)


def test_on_fire_resets_and_builds_message():
    a = make_agent(x=(3.0, -1.0))
    a.e_local = np.array([0.5, 0.5])
    msg = ag.on_fire(a, 12)
    assert not a.e_local.any()
    assert np.array_equal(a.bank.y(0), [3.0, -1.0])
    assert a.last_event_step == 12 and a.bank[0].last_send_step == 12
    assert msg.sender == 0 and msg.send_step == 12 and np.array_equal(msg.x, [3.0, -1.0])
    a.sample(a.x_now, 13)
    assert not a.e_local.any()
