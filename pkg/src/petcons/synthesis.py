"""Gain synthesis, closed-loop spectral analysis and trigger constants.

Turns a plant, a topology and timing parameters into an :class:`EventDesign`
holding everything the agents need at run time. The threshold offset ``eta``
and the level ``V_M = max(V(0), N eta / beta)`` refer to each other; both are
resolved here by fixed-point iteration.

All coupling-dependent integrals (``E``, ``Upsilon``, ``Upsilon_h``) use the
coupling ``c1 = 2c`` that the sampled protocol actually applies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import matlib
from .errors import (ConfigError, ConvergenceError, DimensionError,
                     DisconnectedGraphError, InfeasibleDesignError,
                     UncontrollableError)
from .graph import LaplacianSpectrum, Topology, disagreement, kron_lift, laplacian
from .matlib import TOL, spectral_norm

MODES = ("no_delay", "delay")


@dataclass(frozen=True)
class PlantModel:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = matlib.as_matrix(self.A, "A")
        B = matlib.as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def is_controllable(self) -> bool:
        return matlib.is_controllable(self.A, self.B)


@dataclass(frozen=True)
class GainSet:
    P: np.ndarray
    F: np.ndarray
    c: float
    c1: float
    alpha: float

    @property
    def PBBP(self) -> np.ndarray:
        BtP = -self.F
        return BtP.T @ BtP


@dataclass(frozen=True)
class ClosedLoopAnalysis:
    L_hat: np.ndarray
    A_c: np.ndarray
    L_bar: np.ndarray
    L_bar_eigenvalues: np.ndarray
    beta: float
    lambda_min_P: float
    lambda_max_Lhat: float
    lambda_min_Lhat: float   # smallest nonzero eigenvalue of L kron P


@dataclass(frozen=True)
class EventDesign:
    mode: str
    N: int
    sigma: float
    b: float
    h: float
    d: float
    p: int
    G: np.ndarray
    H: np.ndarray
    E: np.ndarray
    Upsilon: float
    Upsilon_h: float
    b_e: tuple
    lambda_bar: float
    z_bar: tuple
    V0: float
    V_M: float
    eta: float
    eta_required: float
    eta_source: str           # "synthesized" or "override"
    beta: float
    M_PBBP: np.ndarray
    norm_PBBP: float
    G_p: np.ndarray           # G^p
    GmI_Gp1: np.ndarray       # (G - I) G^(p-1)
    norm_E: float
    norm_GmI: float
    norm_G_p: float
    norm_GmI_Gp1: float
    iterations: int = 0

    @property
    def eta_bound_satisfied(self) -> bool:
        return self.eta > self.eta_required

    @property
    def margins(self) -> tuple:
        """Per-agent ``1 - b_e,i * Upsilon`` (all 1.0 without delay)."""
        return tuple(1.0 - be * self.Upsilon for be in self.b_e)

    @property
    def inter_event_bound(self) -> float:
        return self.d if self.mode == "delay" else self.h


# ---------------------------------------------------------------- gains

def design_gains(plant: PlantModel, spectrum: LaplacianSpectrum, alpha: float,
                 eps: float | None = None, c: float | None = None,
                 P=None) -> GainSet:
    """P from the shifted Riccati equation (or a supplied witness), F = -B^T P.

    The coupling defaults to ``1 / lambda_2``; a user value below that is
    rejected.
    """
    if not plant.is_controllable():
        raise UncontrollableError("(A, B) is not controllable")
    if not alpha > 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    N = len(spectrum.eigenvalues)
    lam2 = spectrum.lambda2
    if N > 1 and lam2 <= TOL.connectivity:
        raise DisconnectedGraphError("graph not connected")
    c_min = 1.0 / lam2 if N > 1 else 0.0
    if c is None:
        c = c_min if N > 1 else 1.0
    elif c < c_min - 1e-12:
        raise ConfigError(f"coupling c={c} is below 1/lambda_2={c_min}")

    if P is None:
        P = matlib.care_solve(plant.A, plant.B, alpha, eps)
    else:
        P = matlib.as_matrix(P, "P")
        if P.shape != (plant.n, plant.n):
            raise DimensionError(f"P must be {plant.n}x{plant.n}")
        if not np.allclose(P, P.T, rtol=0, atol=1e-12 * max(1.0, np.abs(P).max())):
            raise ConfigError("P must be symmetric")
        P = 0.5 * (P + P.T)
        if np.linalg.eigvalsh(P)[0] <= 0:
            raise ConfigError("P must be positive definite")
        if np.linalg.eigvalsh(matlib.riccati_lhs(P, plant.A, plant.B, alpha))[-1] >= 0:
            raise ConfigError(f"supplied P does not satisfy the Riccati inequality at alpha={alpha}")
    F = -plant.B.T @ P
    return GainSet(P=P, F=F, c=float(c), c1=2.0 * float(c), alpha=float(alpha))


def closed_loop_analysis(plant: PlantModel, gains: GainSet,
                         spectrum: LaplacianSpectrum) -> ClosedLoopAnalysis:
    """Build L_hat = L kron P, A_c and L_bar = L_hat A_c + A_c^T L_hat.

    Raises :class:`InfeasibleDesignError` unless L_bar has exactly ``n``
    (normalized) zero eigenvalues, all others negative, and annihilates the
    consensus subspace.
    """
    L = spectrum.laplacian
    N, n = L.shape[0], plant.n
    if N < 2:
        raise ConfigError("closed-loop analysis needs at least two agents")
    P = gains.P
    L_hat = kron_lift(L, P)
    A_c = kron_lift(np.eye(N), plant.A) + gains.c * kron_lift(L, plant.B @ gains.F)
    L_bar = L_hat @ A_c + A_c.T @ L_hat
    L_bar = 0.5 * (L_bar + L_bar.T)
    w = matlib.sym_eig(L_bar).eigenvalues
    scale = max(np.abs(w).max(), np.finfo(float).tiny)
    near_zero = np.abs(w) / scale < TOL.zero_eig
    if near_zero.sum() != n or np.any(w[~near_zero] >= 0):
        raise InfeasibleDesignError(
            f"L_bar must have exactly {n} zero eigenvalues and the rest negative; "
            f"spectrum {w}")
    kernel = kron_lift(np.ones((N, 1)), np.eye(n))
    if np.linalg.norm(L_bar @ kernel) > 1e-9 * scale * math.sqrt(N):
        raise InfeasibleDesignError("consensus subspace is not in the kernel of L_bar")
    neg = np.sort(-w[~near_zero])
    lh = matlib.sym_eig(L_hat).eigenvalues
    lam_min_P = float(np.linalg.eigvalsh(P)[0])
    return ClosedLoopAnalysis(
        L_hat=L_hat, A_c=A_c, L_bar=L_bar, L_bar_eigenvalues=w,
        beta=float(neg[0] / lh[-1]),
        lambda_min_P=lam_min_P,
        lambda_max_Lhat=float(lh[-1]),
        lambda_min_Lhat=float(spectrum.lambda2 * lam_min_P),
    )


def lambda_bar(topology: Topology, gains: GainSet) -> float:
    """lambda_max(Adj^2 kron PBB^TP), factorized over the two PSD factors."""
    Adj = topology.adjacency
    a2 = np.linalg.eigvalsh(Adj @ Adj)[-1]
    m = np.linalg.eigvalsh(gains.PBBP)[-1]
    return float(max(a2, 0.0) * max(m, 0.0))


def b_e(N: int, N_i: int, b: float) -> float:
    return math.sqrt(N_i * N * (N - 1) * (b / 2.0 + 1.0 / (2.0 * b)))


def disagreement_bound(design: EventDesign, analysis: ClosedLoopAnalysis, N: int) -> float:
    """Asymptotic bound on ||x_i - x_j||^2: N eta / (beta lambda_min(P))."""
    return N * design.eta / (analysis.beta * analysis.lambda_min_P)


def envelope(t, V0: float, eta: float, beta: float, N: int):
    """(V0 - N eta/beta) e^{-beta t} + N eta/beta."""
    ss = N * eta / beta
    return (V0 - ss) * np.exp(-beta * np.asarray(t, dtype=float)) + ss


# ---------------------------------------------------------------- eta

@dataclass
class EtaResult:
    eta: float
    z_bar: np.ndarray
    V_M: float
    rhs: np.ndarray            # per-agent lower bound evaluated at V_M
    iterations: int
    extras: dict = field(default_factory=dict)


def _resolve_eta(rhs_fn: Callable[[float], np.ndarray], zbar_fn, V0: float,
                 N: int, beta: float) -> EtaResult:
    """Solve eta = safety * max_i rhs_i(V_M), V_M = max(V0, N eta / beta)."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _iterate_eta(rhs_fn, zbar_fn, V0, N, beta)


def _iterate_eta(rhs_fn, zbar_fn, V0, N, beta) -> EtaResult:
    safety = TOL.eta_safety
    V_M = V0
    prev_delta = 0.0
    for it in range(1, TOL.fixed_point_max_iter + 1):
        eta = safety * float(np.max(rhs_fn(V_M)))
        V_new = max(V0, N * eta / beta)
        if not math.isfinite(V_new):
            break
        delta = V_new - V_M
        if abs(delta) <= TOL.fixed_point_rtol * max(V_new, np.finfo(float).tiny) or delta == 0.0:
            rhs = rhs_fn(V_new)
            return EtaResult(eta=eta, z_bar=zbar_fn(V_new), V_M=V_new, rhs=rhs, iterations=it)
        if prev_delta * delta < 0:
            V_M = 0.5 * (V_M + V_new)
        else:
            V_M = V_new
        prev_delta = delta
    gain = safety * float(np.max(rhs_fn(1.0))) * N / beta
    raise ConvergenceError(
        "eta / V_M fixed point diverged: a finite eta needs "
        f"safety*max_i(dRHS_i/dV_M)*N/beta < 1, got {gain:.4g}",
        diagnostics={"loop_gain": gain})


def _no_delay_bound(plant, gains, spectrum, topology, analysis, b, h):
    """Per-agent inter-event bound on eta as a function of V_M, plus z_bar."""
    N = topology.agent_count
    E = matlib.input_integral(plant.A, plant.B, gains.c1, gains.F, h)
    nE, nM = spectral_norm(E), spectral_norm(gains.PBBP)
    Ni = np.array(topology.degrees, dtype=float)
    be = np.array([b_e(N, k, b) for k in topology.degrees])
    c1 = gains.c1
    coef = (2 * c1 * Ni * (b * (N - 1) + N / b) * nE ** 2
            + c1 * (1 + 2 * b * Ni) * (2 + be * nE) ** 2) * nM
    lmax, lmin_hat = spectrum.lambda_max, analysis.lambda_min_Lhat

    def zbar(V_M):
        return np.full(N, lmax * math.sqrt(V_M / lmin_hat))

    def rhs(V_M):
        return coef * zbar(V_M) ** 2

    return {"rhs_fn": rhs, "zbar_fn": zbar, "b_e": be, "E": E}


def eta_no_delay(plant: PlantModel, gains: GainSet, spectrum: LaplacianSpectrum,
                 topology: Topology, analysis: ClosedLoopAnalysis, *, sigma: float,
                 b: float, h: float, V0: float) -> EtaResult:
    """Smallest admissible eta (times the safety factor) without delays."""
    _check_sigma_b(sigma, b, h)
    x = _no_delay_bound(plant, gains, spectrum, topology, analysis, b, h)
    res = _resolve_eta(x["rhs_fn"], x["zbar_fn"], V0, topology.agent_count, analysis.beta)
    res.extras = x
    return res


def upsilon(plant: PlantModel, gains: GainSet, T: float) -> float:
    M = gains.c1 * (plant.B @ gains.F)
    return matlib.norm_integral(plant.A, M, T)


def eta_delay(plant: PlantModel, gains: GainSet, spectrum: LaplacianSpectrum,
              topology: Topology, analysis: ClosedLoopAnalysis, *, sigma: float,
              b: float, h: float, d: float, V0: float, check_only: bool = False) -> EtaResult:
    """Admissible eta under delays bounded by ``d = p h``.

    Raises :class:`InfeasibleDesignError` carrying the largest feasible grid
    delay when ``Upsilon >= 1 / b_e,i`` for some agent.
    """
    _check_sigma_b(sigma, b, h)
    p = delay_steps(d, h)
    N = topology.agent_count
    be = np.array([b_e(N, k, b) for k in topology.degrees])
    Ups = upsilon(plant, gains, d)
    Ups_h = upsilon(plant, gains, d - h) if p > 1 else 0.0
    be_max = float(be.max())
    if be_max * Ups >= 1.0:
        p_ok = _max_feasible_p(plant, gains, h, p, be_max)
        raise InfeasibleDesignError(
            f"delay bound d={d} infeasible: Upsilon={Ups:.6g} >= 1/b_e={1 / be_max:.6g}; "
            f"maximal feasible d={p_ok * h:.6g}",
            max_feasible_d=p_ok * h,
            diagnostics={"Upsilon": Ups, "b_e_max": be_max})

    G, _ = matlib.zoh_pair(plant.A, plant.B, h)
    E = matlib.input_integral(plant.A, plant.B, gains.c1, gains.F, h)
    nM = spectral_norm(gains.PBBP)
    n = plant.n
    G_p = np.linalg.matrix_power(G, p)
    GmI_Gp1 = (G - np.eye(n)) @ np.linalg.matrix_power(G, p - 1)
    nE, nGmI = spectral_norm(E), spectral_norm(G - np.eye(n))
    nGp, nGmIGp1 = spectral_norm(G_p), spectral_norm(GmI_Gp1)
    c1 = gains.c1
    lmax, lmin_hat = spectrum.lambda_max, analysis.lambda_min_Lhat
    m1 = 1.0 - be * Ups
    m2 = 1.0 - be * Ups_h

    def zbar(V_M):
        return lmax / m1 * math.sqrt(V_M / lmin_hat)

    def rhs(V_M):
        z2 = zbar(V_M) ** 2
        t1 = c1 * (1 + b) ** 2 * nM * lmax ** 2 / lmin_hat * V_M * (1 / m1 + 1 / m2) ** 2
        t2 = c1 * (1 + 1 / b) * (nGp + 1) ** 2 * Ups ** 2 * z2
        t3 = c1 * (1 + b) * (1 + 1 / b) * (nGmIGp1 * Ups + nGmI * Ups_h + nE) ** 2 * z2
        return t1 + t2 + t3

    extras = {"rhs_fn": rhs, "zbar_fn": zbar, "b_e": be, "E": E, "G": G, "G_p": G_p,
              "GmI_Gp1": GmI_Gp1, "Upsilon": Ups, "Upsilon_h": Ups_h, "p": p,
              "margins": m1}
    if check_only:
        return EtaResult(eta=math.nan, z_bar=zbar(V0), V_M=V0, rhs=rhs(V0),
                         iterations=0, extras=extras)
    res = _resolve_eta(rhs, zbar, V0, N, analysis.beta)
    res.extras = extras
    return res


def _max_feasible_p(plant, gains, h, p, be_max) -> int:
    lo, hi = 0, p  # feasible(lo) holds (zero delay), feasible(hi) does not
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if be_max * upsilon(plant, gains, mid * h) < 1.0:
            lo = mid
        else:
            hi = mid
    return lo


def delay_steps(d: float, h: float) -> int:
    """Integer p with d = p h; raises ConfigError when d is off the grid."""
    if not h > 0:
        raise ConfigError(f"h must be positive, got {h}")
    ratio = d / h
    p = int(round(ratio))
    if p < 1 or abs(ratio - p) > 1e-9 * max(1.0, ratio):
        raise ConfigError(f"d={d} is not a positive integer multiple of h={h}")
    return p


def _check_sigma_b(sigma, b, h):
    if not 0 < sigma < 1:
        raise ConfigError(f"sigma must lie in (0, 1), got {sigma}")
    if not b > 0:
        raise ConfigError(f"b must be positive, got {b}")
    if not h > 0:
        raise ConfigError(f"h must be positive, got {h}")


# ---------------------------------------------------------------- assembly

@dataclass(frozen=True)
class Synthesis:
    plant: PlantModel
    topology: Topology
    spectrum: LaplacianSpectrum
    gains: GainSet
    analysis: ClosedLoopAnalysis
    design: EventDesign

    @property
    def disagreement_bound(self) -> float:
        return disagreement_bound(self.design, self.analysis, self.topology.agent_count)


def synthesize(plant: PlantModel, topology: Topology, *, mode: str, h: float,
               d: float = 0.0, sigma: float = 0.5, b: float = 1.0,
               alpha: float | None = None, eps: float | None = None,
               c: float | None = None, P=None, eta: float | None = None,
               V0: float = 0.0, x0=None) -> Synthesis:
    """Full design pipeline; ``eta`` overrides the synthesized threshold.

    If initial states ``x0`` (one row per agent) are given, V0 is evaluated
    from them with the designed P and replaces the ``V0`` argument.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    spectrum = laplacian(topology)
    N = topology.agent_count
    if N > 1 and spectrum.lambda2 <= TOL.connectivity:
        raise DisconnectedGraphError("graph not connected")
    if alpha is None:
        alpha = 0.1 * max(spectral_norm(plant.A), 1e-3)
    gains = design_gains(plant, spectrum, alpha, eps=eps, c=c, P=P)
    analysis = closed_loop_analysis(plant, gains, spectrum)
    if x0 is not None:
        # rounding can leave a tiny negative value at consensus
        V0 = max(disagreement(np.asarray(x0, dtype=float).ravel(), spectrum.laplacian, gains.P), 0.0)
    kw = dict(sigma=sigma, b=b, h=h, V0=V0)

    if mode == "no_delay":
        if eta is None:
            res = eta_no_delay(plant, gains, spectrum, topology, analysis, **kw)
        else:
            res = eta_no_delay_at(plant, gains, spectrum, topology, analysis, eta=eta, **kw)
        p, dd = 0, 0.0
        G, _ = matlib.zoh_pair(plant.A, plant.B, h)
        G_p = np.eye(plant.n)
        GmI_Gp1 = np.zeros((plant.n, plant.n))
        Ups = Ups_h = 0.0
    else:
        if eta is None:
            res = eta_delay(plant, gains, spectrum, topology, analysis, d=d, **kw)
        else:
            res = _override(eta_delay(plant, gains, spectrum, topology, analysis, d=d,
                                      check_only=True, **kw), eta, V0, N, analysis.beta)
        x = res.extras
        p, dd, G, G_p, GmI_Gp1 = x["p"], d, x["G"], x["G_p"], x["GmI_Gp1"]
        Ups, Ups_h = x["Upsilon"], x["Upsilon_h"]

    _, H = matlib.zoh_pair(plant.A, plant.B, h)
    E = res.extras["E"]
    M = gains.PBBP
    n = plant.n
    design = EventDesign(
        mode=mode, N=N, sigma=float(sigma), b=float(b), h=float(h), d=float(dd), p=p,
        G=G, H=H, E=E, Upsilon=Ups, Upsilon_h=Ups_h,
        b_e=tuple(float(v) for v in res.extras["b_e"]),
        lambda_bar=lambda_bar(topology, gains),
        z_bar=tuple(float(v) for v in np.broadcast_to(res.z_bar, (N,))),
        V0=float(V0), V_M=float(res.V_M), eta=float(res.eta),
        eta_required=float(np.max(res.rhs)),
        eta_source="synthesized" if eta is None else "override",
        beta=analysis.beta, M_PBBP=M, norm_PBBP=spectral_norm(M),
        G_p=G_p, GmI_Gp1=GmI_Gp1,
        norm_E=spectral_norm(E), norm_GmI=spectral_norm(G - np.eye(n)),
        norm_G_p=spectral_norm(G_p), norm_GmI_Gp1=spectral_norm(GmI_Gp1),
        iterations=res.iterations,
    )
    return Synthesis(plant, topology, spectrum, gains, analysis, design)


def _override(res: EtaResult, eta: float, V0: float, N: int, beta: float) -> EtaResult:
    if not eta > 0:
        raise ConfigError(f"eta must be positive, got {eta}")
    V_M = max(V0, N * eta / beta)
    x = res.extras
    return EtaResult(eta=float(eta), z_bar=x["zbar_fn"](V_M), V_M=V_M,
                     rhs=x["rhs_fn"](V_M), iterations=0, extras=x)


def eta_no_delay_at(plant, gains, spectrum, topology, analysis, *, eta, sigma, b, h, V0):
    """Constants for a user-fixed eta (no fixed point; V_M follows from eta)."""
    _check_sigma_b(sigma, b, h)
    x = _no_delay_bound(plant, gains, spectrum, topology, analysis, b, h)
    base = EtaResult(eta=math.nan, z_bar=x["zbar_fn"](V0), V_M=V0, rhs=x["rhs_fn"](V0),
                     iterations=0, extras=x)
    return _override(base, eta, V0, topology.agent_count, analysis.beta)


def report(syn: Synthesis) -> dict:
    """JSON-ready synthesis summary: each constant with the formula behind it."""
    g, a, dsg = syn.gains, syn.analysis, syn.design

    def item(value, formula):
        if isinstance(value, np.ndarray):
            value = value.tolist()
        elif isinstance(value, tuple):
            value = list(value)
        return {"value": value, "formula": formula}

    out = {
        "mode": dsg.mode,
        "agents": syn.topology.agent_count,
        "gains": {
            "P": item(g.P, "Riccati solution: PA + A^T P - 2PBB^TP + 2 alpha P = -eps I (or supplied witness)"),
            "F": item(g.F, "-B^T P"),
            "c": item(g.c, "coupling, >= 1/lambda_2"),
            "c1": item(g.c1, "2c (coupling used by the sampled protocol)"),
            "alpha": item(g.alpha, "Riccati decay shift"),
        },
        "analysis": {
            "lambda_2": item(syn.spectrum.lambda2, "second smallest Laplacian eigenvalue"),
            "lambda_max_L": item(syn.spectrum.lambda_max, "largest Laplacian eigenvalue"),
            "beta": item(a.beta, "lambda_min_nonzero(-L_bar) / lambda_max(L kron P)"),
            "lambda_min_P": item(a.lambda_min_P, "smallest eigenvalue of P"),
            "lambda_max_Lhat": item(a.lambda_max_Lhat, "lambda_max(L kron P)"),
            "lambda_min_Lhat": item(a.lambda_min_Lhat, "lambda_2 * lambda_min(P), smallest nonzero eigenvalue of L kron P"),
        },
        "design": {
            "sigma": item(dsg.sigma, "threshold weight in (0, 1)"),
            "b": item(dsg.b, "Young's inequality weight"),
            "h": item(dsg.h, "sampling period"),
            "d": item(dsg.d, "delay bound p*h (0 without delays)"),
            "p": item(dsg.p, "d / h"),
            "norm_E": item(dsg.norm_E, "||int_0^h e^{A(h-s)} c1 B F ds||"),
            "Upsilon": item(dsg.Upsilon, "int_0^d ||e^{A(d-s)} c1 B F|| ds"),
            "Upsilon_h": item(dsg.Upsilon_h, "int_0^{d-h} ||e^{A(d-h-s)} c1 B F|| ds"),
            "b_e": item(dsg.b_e, "sqrt(N_i N (N-1) (b/2 + 1/(2b)))"),
            "feasibility_margin": item(dsg.margins, "1 - b_e,i * Upsilon"),
            "lambda_bar": item(dsg.lambda_bar, "lambda_max(Adj^2) * lambda_max(PBB^TP)"),
            "norm_PBBP": item(dsg.norm_PBBP, "||PBB^TP||"),
            "V0": item(dsg.V0, "x(0)^T (L kron P) x(0)"),
            "V_M": item(dsg.V_M, "max(V0, N eta / beta)"),
            "z_bar": item(dsg.z_bar, "worst-case ||z_i|| bound from V_M"),
            "eta": item(dsg.eta, "threshold offset (" + dsg.eta_source + ")"),
            "eta_required": item(dsg.eta_required, "inter-event lower bound on eta at V_M"),
            "eta_bound_satisfied": item(bool(dsg.eta_bound_satisfied), "eta > eta_required"),
            "fixed_point_iterations": item(dsg.iterations, "eta / V_M iterations"),
        },
        "disagreement_bound": item(syn.disagreement_bound, "N eta / (beta lambda_min(P))"),
    }
    return out
