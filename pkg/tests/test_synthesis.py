import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from petcons import graph
from petcons import synthesis as sy
from petcons.errors import (ConfigError, ConvergenceError, DisconnectedGraphError,
                            InfeasibleDesignError, UncontrollableError)

A6 = np.array([[0.2, -0.8], [0.26, 0.05]])
B6 = np.array([[0.7], [-1.1]])
P6 = np.array([[0.5859, -0.1575], [-0.1575, 0.4274]])
X0 = np.array([[-5.5, -6.1], [-1.6, -1.5], [5.9, 2.5], [12.35, 15.1]])
PATH4 = graph.Topology.from_edges(4, [(0, 1), (1, 2), (2, 3)])
PLANT6 = sy.PlantModel(A6, B6)


@pytest.fixture(scope="module")
def ref():
    spec = graph.laplacian(PATH4)
    gains = sy.design_gains(PLANT6, spec, 0.01, P=P6)
    return spec, gains, sy.closed_loop_analysis(PLANT6, gains, spec)


def test_reference_gains(ref):
    _, gains, _ = ref
    assert gains.c == pytest.approx(1 / (2 - math.sqrt(2)), rel=1e-12)
    assert gains.c1 == pytest.approx(2 / (2 - math.sqrt(2)), rel=1e-12)
    assert np.allclose(gains.F, -B6.T @ P6)


def test_scalar_design():
    spec = graph.laplacian(graph.Topology.from_edges(2, [(0, 1)]))
    g = sy.design_gains(sy.PlantModel([[0.0]], [[1.0]]), spec, 0.5, eps=0.0)
    assert g.P[0, 0] == pytest.approx(0.5, rel=1e-12)
    assert g.F[0, 0] == pytest.approx(-0.5, rel=1e-12)
    assert g.c == pytest.approx(0.5, rel=1e-12)


def test_design_rejections():
    spec = graph.laplacian(PATH4)
    with pytest.raises(UncontrollableError):
        sy.design_gains(sy.PlantModel(A6, np.zeros((2, 1))), spec, 0.1)
    with pytest.raises(ConfigError):
        sy.design_gains(PLANT6, spec, 0.1, c=0.5)
    with pytest.raises(ConfigError):
        sy.design_gains(PLANT6, spec, 0.01, P=-P6)
    with pytest.raises(ConfigError):
        sy.design_gains(PLANT6, spec, 0.01, P=[[1.0, 0.2], [0.0, 1.0]])
    with pytest.raises(ConfigError):
        # a tiny multiple of P fails the inequality (the quadratic term vanishes)
        sy.design_gains(PLANT6, spec, 0.01, P=1e-3 * P6)
    disc = graph.laplacian(graph.Topology.from_edges(4, [(0, 1), (2, 3)]))
    with pytest.raises(DisconnectedGraphError):
        sy.design_gains(PLANT6, disc, 0.1)


def test_closed_loop_kernel_and_beta(ref):
    spec, gains, an = ref
    w = an.L_bar_eigenvalues
    wn = w / np.max(np.abs(w))
    assert np.count_nonzero(np.abs(wn) < 1e-8) == 2
    assert np.all(w[np.abs(wn) >= 1e-8] < 0)
    # independent beta from an explicit Kronecker build
    L = spec.laplacian
    Lh = np.kron(L, P6)
    Ac = np.kron(np.eye(4), A6) + gains.c * np.kron(L, B6 @ gains.F)
    ev = np.sort(np.linalg.eigvals(Lh @ Ac + Ac.T @ Lh).real)
    beta = -ev[-3] / np.max(np.linalg.eigvals(Lh).real)
    assert an.beta == pytest.approx(beta, rel=1e-9)
    assert an.beta == pytest.approx(0.0411, abs=5e-5)
    # closed form for a symmetric 2x2 matrix
    tr, det = P6[0, 0] + P6[1, 1], np.linalg.det(P6)
    assert an.lambda_min_P == pytest.approx(tr / 2 - math.sqrt(tr * tr / 4 - det), rel=1e-12)
    assert an.lambda_min_P == pytest.approx(0.33034, abs=1e-5)
    assert an.lambda_min_Lhat == pytest.approx((2 - math.sqrt(2)) * an.lambda_min_P, rel=1e-12)


def test_lambda_bar_kronecker_oracle(ref):
    _, gains, _ = ref
    Adj = PATH4.adjacency
    direct = np.max(np.linalg.eigvalsh(np.kron(Adj @ Adj, gains.PBBP)))
    assert sy.lambda_bar(PATH4, gains) == pytest.approx(direct, abs=1e-10)


def test_lambda_bar_trivial_graphs(ref):
    _, gains, _ = ref
    k2 = graph.Topology.from_edges(2, [(0, 1)])
    assert sy.lambda_bar(k2, gains) == pytest.approx(np.max(np.linalg.eigvalsh(gains.PBBP)))
    assert sy.lambda_bar(graph.Topology.from_edges(3, []), gains) == 0.0


def test_b_e_formula():
    assert sy.b_e(4, 2, 1.0) == pytest.approx(math.sqrt(2 * 4 * 3 * 1.0))
    assert sy.b_e(3, 1, 2.0) == pytest.approx(math.sqrt(6 * (1.0 + 0.25)))


def _upsilon_oracle(T, c1, F):
    M = c1 * B6 @ F
    val, _ = quad(lambda s: np.linalg.norm(expm(A6 * (T - s)) @ M, 2), 0, T, epsabs=1e-14)
    return val


def test_upsilon_against_quadrature(ref):
    _, gains, _ = ref
    for T in (0.014, 0.012):
        assert sy.upsilon(PLANT6, gains, T) == pytest.approx(
            _upsilon_oracle(T, gains.c1, gains.F), rel=1e-9)


def test_delay_design_reference(ref):
    spec, gains, an = ref
    res = sy.eta_delay(PLANT6, gains, spec, PATH4, an, sigma=0.5, b=1.0, h=0.002, d=0.014,
                       V0=100.0, check_only=True)
    x = res.extras
    assert x["p"] == 7
    assert np.all(x["margins"] > 0)
    assert np.allclose(x["G_p"], expm(A6 * 0.014), atol=1e-13)


def test_reference_eta_fixed_point_has_no_finite_solution(ref):
    """The eta bound is linear in V_M with slope far above beta / N here."""
    spec, gains, an = ref
    N = 4
    E = expm(np.block([[A6, gains.c1 * B6 @ gains.F], [np.zeros((2, 4))]]) * 0.002)[:2, 2:]
    nE, nM = np.linalg.norm(E, 2), np.linalg.norm(gains.PBBP, 2)
    lmax = 2 + math.sqrt(2)
    slope = 0.0
    for Ni in PATH4.degrees:
        be = math.sqrt(Ni * N * (N - 1))
        coef = (2 * gains.c1 * Ni * ((N - 1) + N) * nE ** 2
                + gains.c1 * (1 + 2 * Ni) * (2 + be * nE) ** 2) * nM
        slope = max(slope, coef * lmax ** 2 / an.lambda_min_Lhat)
    loop_gain = 1.01 * slope * N / an.beta
    assert loop_gain > 1e5
    with pytest.raises(ConvergenceError) as info:
        sy.eta_no_delay(PLANT6, gains, spec, PATH4, an, sigma=0.5, b=1.0, h=0.002, V0=100.0)
    assert info.value.diagnostics["loop_gain"] == pytest.approx(loop_gain, rel=1e-9)
    with pytest.raises(ConvergenceError):
        sy.eta_delay(PLANT6, gains, spec, PATH4, an, sigma=0.5, b=1.0, h=0.002, d=0.014, V0=100.0)


def test_no_delay_bound_small_h_limit(ref):
    spec, gains, an = ref
    x = sy._no_delay_bound(PLANT6, gains, spec, PATH4, an, 1.0, 1e-12)
    V = 7.0
    lead = np.array([gains.c1 * (1 + 2 * k) * 4 for k in PATH4.degrees]) * np.linalg.norm(gains.PBBP, 2)
    assert np.allclose(x["rhs_fn"](V) / x["zbar_fn"](V) ** 2, lead, rtol=1e-8)


def test_delay_rhs_monotone_in_p():
    plant = sy.PlantModel([[0.3]], [[1.0]])
    topo = graph.Topology.from_edges(2, [(0, 1)])
    spec = graph.laplacian(topo)
    gains = sy.design_gains(plant, spec, 0.5)
    an = sy.closed_loop_analysis(plant, gains, spec)
    prev = 0.0
    for p in range(1, 8):
        r = sy.eta_delay(plant, gains, spec, topo, an, sigma=0.5, b=1.0, h=0.002, d=0.002 * p,
                         V0=1.0, check_only=True)
        cur = float(np.max(r.rhs))
        assert cur > prev
        prev = cur


def test_infeasible_delay_reports_max_d(ref):
    spec, gains, an = ref
    with pytest.raises(InfeasibleDesignError) as info:
        sy.eta_delay(PLANT6, gains, spec, PATH4, an, sigma=0.5, b=1.0, h=0.002, d=0.2,
                     V0=1.0, check_only=True)
    d_ok = info.value.max_feasible_d
    assert 0.014 <= d_ok < 0.2
    # the reported delay is feasible and one more step is not
    be = math.sqrt(2 * 4 * 3)
    assert be * _upsilon_oracle(d_ok, gains.c1, gains.F) < 1
    assert be * _upsilon_oracle(d_ok + 0.002, gains.c1, gains.F) >= 1


def test_delay_steps():
    assert sy.delay_steps(0.014, 0.002) == 7
    for d in (0.013, 0.0, -0.002):
        with pytest.raises(ConfigError):
            sy.delay_steps(d, 0.002)


@pytest.mark.parametrize("sigma,b", [(0.0, 1.0), (1.0, 1.0), (0.5, 0.0)])
def test_sigma_b_validation(ref, sigma, b):
    spec, gains, an = ref
    with pytest.raises(ConfigError):
        sy.eta_no_delay(PLANT6, gains, spec, PATH4, an, sigma=sigma, b=b, h=0.002, V0=1.0)


def test_disagreement_bound_and_envelope():
    d = type("D", (), {"eta": 0.0})()
    an = type("A", (), {"beta": 0.5, "lambda_min_P": 2.0})()
    assert sy.disagreement_bound(d, an, 3) == 0.0
    t = np.array([0.0, 1.0, 10.0])
    env = sy.envelope(t, 5.0, 0.1, 0.5, 4)
    assert env[0] == pytest.approx(5.0)
    assert env[1] == pytest.approx((5.0 - 0.8) * math.exp(-0.5) + 0.8)


def test_override_reference_design():
    syn = sy.synthesize(PLANT6, PATH4, mode="delay", h=0.002, d=0.014, alpha=0.01, P=P6,
                        eta=10.85, x0=X0)
    dsg = syn.design
    V0 = graph.disagreement(X0.ravel(), graph.laplacian(PATH4).laplacian, P6)
    assert dsg.V0 == pytest.approx(V0) and dsg.V0 == pytest.approx(109.278, abs=1e-3)
    assert dsg.V_M == pytest.approx(max(V0, 4 * 10.85 / syn.analysis.beta))
    assert dsg.p == 7 and dsg.eta_source == "override"
    assert not dsg.eta_bound_satisfied
    assert syn.disagreement_bound == pytest.approx(4 * 10.85 / (syn.analysis.beta * syn.analysis.lambda_min_P))
    rep = sy.report(syn)
    assert rep["design"]["p"]["value"] == 7
    assert min(rep["design"]["feasibility_margin"]["value"]) > 0
    assert all("formula" in v for v in rep["gains"].values())


def test_synthesized_eta_is_a_fixed_point():
    plant = sy.PlantModel([[-1.0, 0.3], [0.0, -0.8]], [[0.0], [1.0]])
    topo = graph.Topology.from_edges(3, [(0, 1), (1, 2)])
    x0 = np.array([[1.0, 0.0], [0.0, 2.0], [-1.0, 1.0]])
    syn = sy.synthesize(plant, topo, mode="no_delay", h=0.01, alpha=0.4, eps=1e-4, x0=x0)
    dsg = syn.design
    assert dsg.eta_source == "synthesized"
    assert dsg.V_M == pytest.approx(max(dsg.V0, 3 * dsg.eta / dsg.beta), rel=1e-9)
    assert dsg.eta == pytest.approx(1.01 * dsg.eta_required, rel=1e-9)
    assert dsg.eta_bound_satisfied


def test_synthesize_rejects_bad_mode_and_graph():
    with pytest.raises(ConfigError):
        sy.synthesize(PLANT6, PATH4, mode="bogus", h=0.002)
    with pytest.raises(DisconnectedGraphError, match="graph not connected"):
        sy.synthesize(PLANT6, graph.Topology.from_edges(4, [(0, 1), (2, 3)]),
                      mode="no_delay", h=0.002)
