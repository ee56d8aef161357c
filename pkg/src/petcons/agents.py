"""Per-agent runtime: model bank, error bookkeeping, control input, triggers.

Everything here uses only data local to one agent: its own sampled state and
its copies of its own and its neighbors' discretized models.

Discretization errors are taken against the propagated model value *before*
any update at the current instant, so a received broadcast shows up as a
jump in the model and not as a discretization error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ModelEntry:
    y: np.ndarray
    y_prev: np.ndarray
    y_minus: np.ndarray        # G @ y_prev, i.e. y before updates at this instant
    last_send_step: int = -1   # send step of the newest update applied


class ModelBank:
    """Copies of the decoupled models ``y <- G y`` kept by one agent."""

    def __init__(self, owner: int, tracked, n: int):
        self.owner = owner
        self.entries: dict[int, ModelEntry] = {}
        for j in tracked:
            z = np.zeros(n)
            self.entries[j] = ModelEntry(z.copy(), z.copy(), z.copy())

    def __getitem__(self, j) -> ModelEntry:
        return self.entries[j]

    def __contains__(self, j) -> bool:
        return j in self.entries

    def y(self, j) -> np.ndarray:
        return self.entries[j].y

    def snapshot(self) -> dict[int, np.ndarray]:
        return {j: e.y.copy() for j, e in self.entries.items()}


def propagate_models(bank: ModelBank, G: np.ndarray) -> ModelBank:
    for e in bank.entries.values():
        e.y_prev = e.y
        e.y = G @ e.y
        e.y_minus = e.y
    return bank


def apply_update(bank: ModelBank, sender: int, x_sent, p_elapsed: int, G: np.ndarray,
                 send_step: int | None = None, powers=None) -> bool:
    """Overwrite the model of ``sender`` with ``G^p x_sent``.

    ``powers[k]`` may hold a precomputed G^k. Returns False (and changes
    nothing) for an update older than one already applied, which can happen
    when random delays reorder messages.
    """
    if sender not in bank:
        raise KeyError(f"agent {bank.owner} does not track agent {sender}")
    if p_elapsed < 0:
        raise ValueError("p_elapsed must be >= 0")
    entry = bank[sender]
    if send_step is not None:
        if send_step <= entry.last_send_step:
            return False
        entry.last_send_step = send_step
    y = np.array(x_sent, dtype=float)
    if powers is not None and p_elapsed > 0:
        y = powers[p_elapsed] @ y
    else:
        for _ in range(p_elapsed):
            y = G @ y
    entry.y = y
    return True


@dataclass
class DiscErrors:
    x_breve: np.ndarray
    y_breve: dict
    e_breve: np.ndarray
    z_breve: np.ndarray


@dataclass
class TriggerDecision:
    fired: bool
    delta: float
    threshold: float
    components: dict = field(default_factory=dict)


@dataclass
class Message:
    sender: int
    x: np.ndarray
    send_step: int
    deliver_steps: dict        # recipient -> step at which it is applied


class AgentRuntime:
    def __init__(self, agent_id: int, neighbors, x0, m: int):
        self.id = agent_id
        self.neighbors = tuple(neighbors)
        x0 = np.array(x0, dtype=float)
        n = x0.size
        self.x_now = x0.copy()
        self.x_prev = x0.copy()
        self.bank = ModelBank(agent_id, (agent_id,) + self.neighbors, n)
        self.e_local = np.zeros(n)
        self.last_event_step = -1
        self.u_held = np.zeros(m)
        self.z = np.zeros(n)
        self.step_index = 0

    def sample(self, x, step: int):
        self.x_prev = self.x_now
        self.x_now = np.array(x, dtype=float)
        self.step_index = step
        self.e_local = self.bank.y(self.id) - self.x_now


def compute_z(agent: AgentRuntime) -> np.ndarray:
    """sum over neighbors of (x_i - y_j), with this agent's copies of y_j."""
    z = np.zeros_like(agent.x_now)
    for j in agent.neighbors:
        z += agent.x_now - agent.bank.y(j)
    return z


def control_input(agent: AgentRuntime, F: np.ndarray, coupling: float, z=None) -> np.ndarray:
    """u = coupling * F z_i; stored as the held input.

    Pass ``z`` only if no neighbor model changed since it was computed.
    """
    agent.z = compute_z(agent) if z is None else z
    agent.u_held = coupling * (F @ agent.z)
    return agent.u_held


def disc_errors(agent: AgentRuntime) -> DiscErrors:
    n = agent.x_now.size
    if agent.step_index == 0:
        zero = np.zeros(n)
        return DiscErrors(zero, {j: zero for j in agent.bank.entries}, zero, zero)
    xb = agent.x_prev - agent.x_now
    yb = {j: e.y_prev - e.y_minus for j, e in agent.bank.entries.items()}
    zb = np.zeros(n)
    for j in agent.neighbors:
        zb += xb - yb[j]
    return DiscErrors(xb, yb, yb[agent.id] - xb, zb)


def _norm(v) -> float:
    return math.sqrt(float(v @ v))


def _q(BtP, v) -> float:
    # v^T PBB^TP v written as ||B^T P v||^2, which is nonnegative by construction;
    # the sign of BtP does not matter
    w = BtP @ v
    return float(w @ w)


def trigger_no_delay(agent: AgentRuntime, design, gains, errs: DiscErrors | None = None,
                     z=None) -> TriggerDecision:
    """delta_i > sigma c1 z^T PBB^TP z + eta, delta_i from e, z_breve, e_breve."""
    errs = errs if errs is not None else disc_errors(agent)
    z = compute_z(agent) if z is None else z
    # ||B^T P v|| = ||F v|| since F = -B^T P
    F = gains.F
    N, Ni, b, c, c1 = design.N, len(agent.neighbors), design.b, gains.c, gains.c1
    s_e = max(c * Ni * (b * (N - 1) + (3 * N - 1) / b) * _q(F, agent.e_local), 0.0)
    s_z = max(c1 * (1 + 2 * b * Ni) * _q(F, errs.z_breve), 0.0)
    s_eb = max(c * Ni * ((N + 1) / b + 3 * b * (N - 1)) * _q(F, errs.e_breve), 0.0)
    comps = {"e": s_e, "z_breve": s_z, "e_breve": s_eb}
    delta = s_e + s_z + s_eb
    threshold = design.sigma * c1 * _q(F, z) + design.eta
    return TriggerDecision(delta > threshold, delta, threshold, comps)


def trigger_delay(agent: AgentRuntime, design, gains, errs: DiscErrors | None = None,
                  z=None) -> TriggerDecision:
    """Delay-robust rule evaluated from the local error e_ii only.

    The neighbors' (unknown) views of this agent are majorized by propagating
    e_ii over the worst-case delay with the design-time constants.
    """
    errs = errs if errs is not None else disc_errors(agent)
    z = compute_z(agent) if z is None else z
    F = gains.F
    b, c1, lam = design.b, gains.c1, design.lambda_bar
    zbar = design.z_bar[agent.id]
    e = agent.e_local
    gpe = _norm(design.G_p @ e)
    ge = _norm(design.GmI_Gp1 @ e)
    uz = design.Upsilon * zbar
    kz = (design.norm_GmI * design.Upsilon_h + design.norm_E) * zbar
    s_z = max(c1 * (1 + b) ** 2 * _q(F, errs.z_breve), 0.0)
    s_d = max(c1 * (1 + 1 / b) * lam * (gpe * gpe + 2 * gpe * uz + uz * uz), 0.0)
    s_db = max(c1 * (1 + b) * (1 + 1 / b) * lam * (ge * ge + 2 * ge * kz + kz * kz), 0.0)
    comps = {"z_breve": s_z, "delayed": s_d, "delayed_breve": s_db}
    delta = s_z + s_d + s_db
    threshold = design.sigma * c1 * _q(F, z) + design.eta
    return TriggerDecision(delta > threshold, delta, threshold, comps)


def on_fire(agent: AgentRuntime, step: int) -> Message:
    """Reset the local model to the current sample and build the broadcast."""
    entry = agent.bank[agent.id]
    entry.y = agent.x_now.copy()
    entry.last_send_step = step
    agent.e_local = np.zeros_like(agent.x_now)
    agent.last_event_step = step
    return Message(sender=agent.id, x=agent.x_now.copy(), send_step=step, deliver_steps={})
