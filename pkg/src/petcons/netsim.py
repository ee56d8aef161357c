"""Sampled-time world: exact plant advance, delayed broadcast channel, logs.

One call to ``SimWorld.step`` handles one sampling instant t_mu = mu*h:

1. propagate every model bank one step (mu > 0)
2. deliver messages whose delivery step is mu
3. sample the plant states
4. compute discretization errors against the stored previous values
5. evaluate triggers in agent-id order; fired agents reset and broadcast
6. apply zero-delay broadcasts (delay-free mode and the initial broadcast)
7. compute and hold u_i
8. advance every plant exactly over [t_mu, t_mu+1) under the held input

Randomness: the delay of the k-th broadcast of agent i is drawn from
``default_rng(SeedSequence([seed, i, k]))``. With a shared delay one value is
drawn per broadcast; with per-recipient delays one value per neighbor, in
ascending neighbor order. Runs are therefore reproducible and independent of
the order in which agents are processed.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import agents as ag
from . import matlib
from .config import ScenarioConfig
from .errors import ConfigError, DivergenceError
from .graph import Topology, laplacian
from .matlib import TOL
from .synthesis import (PlantModel, Synthesis, closed_loop_analysis, design_gains,
                        envelope, synthesize)

POLICIES = ("event", "always", "never")


def round_delay(raw: float, h: float, p_max: int | None = None) -> int:
    """Delay in whole sampling periods, rounded up to the next instant."""
    if raw < 0 or not math.isfinite(raw):
        raise ConfigError(f"delay must be finite and >= 0, got {raw}")
    if raw == 0:
        return 0
    p = int(math.ceil(raw / h - 1e-12))
    if p_max is not None and p > p_max:
        raise ConfigError(f"delay {raw} s rounds to {p} steps, above the bound of {p_max}")
    return p


@dataclass
class SimClock:
    h: float
    step: int = 0

    @property
    def t(self) -> float:
        return self.step * self.h


class Channel:
    """In-flight broadcasts keyed by (deliver_step, send_step, sender, recipient)."""

    def __init__(self, delays=(), h: float = 1.0, p_max: int = 0, seed: int = 0,
                 per_recipient: bool = False):
        self.delay_steps = tuple(round_delay(d, h, p_max) for d in delays)
        self.p_max = p_max
        self.seed = int(seed)
        self.per_recipient = per_recipient
        self._heap: list = []

    def __len__(self):
        return len(self._heap)

    def draw(self, sender: int, event_index: int, recipients) -> dict:
        """Delay in steps for each recipient of one broadcast."""
        if not self.delay_steps:
            return {j: 0 for j in recipients}
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, sender, event_index]))
        choices = self.delay_steps
        if self.per_recipient:
            return {j: choices[int(rng.integers(len(choices)))] for j in sorted(recipients)}
        p = choices[int(rng.integers(len(choices)))]
        return {j: p for j in recipients}

    def push(self, msg: ag.Message):
        for j, step in msg.deliver_steps.items():
            heapq.heappush(self._heap, (step, msg.send_step, msg.sender, j, msg.x))

    def due(self, step: int):
        out = []
        while self._heap and self._heap[0][0] <= step:
            out.append(heapq.heappop(self._heap))
        return out


@dataclass
class SimLogs:
    h: float
    X: np.ndarray              # (steps, N, n) sampled states
    U: np.ndarray              # (steps, N, m) held inputs
    Z: np.ndarray              # (steps, N, n) z_i used for the input
    E_pre: np.ndarray          # (steps, N, n) local model error before any reset
    fired: np.ndarray          # (steps, N) bool
    delta: np.ndarray          # (steps, N) trigger left-hand side (nan when forced)
    threshold: np.ndarray      # (steps, N)
    events: list = field(default_factory=list)       # (step, agent)
    deliveries: list = field(default_factory=list)   # (send, deliver, sender, recipient, applied)
    models: np.ndarray | None = None   # (steps, N, N, n) y held by i for j, post-pipeline
    X_fine: np.ndarray | None = None   # (steps*substeps, N, n) when substeps > 1
    steps_done: int = 0

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.steps_done) * self.h

    def event_steps(self, agent: int) -> np.ndarray:
        return np.array([s for s, i in self.events if i == agent], dtype=int)


class SimWorld:
    """N agents, their plants and the channel between them."""

    def __init__(self, plant: PlantModel, topology: Topology, x0, h: float, *,
                 mode: str = "no_delay", gains=None, design=None, coupling: float | None = None,
                 policy: str = "event", delays=(), p_max: int = 0, per_recipient: bool = False,
                 seed: int = 0, substeps: int = 1, steps: int = 0, record_models: bool = False,
                 forced=None):
        if policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        x0 = np.array(x0, dtype=float)
        N, n = topology.agent_count, plant.n
        if x0.shape != (N, n):
            raise ConfigError(f"initial states must be {N}x{n}, got {x0.shape}")
        if policy == "event" and design is None:
            raise ValueError("event policy needs a design")
        self.plant, self.topology, self.h = plant, topology, float(h)
        self.mode, self.policy = mode, policy
        self.gains, self.design = gains, design
        m = plant.m
        self.F = gains.F if gains is not None else np.zeros((m, n))
        if coupling is None:
            coupling = gains.c1 if gains is not None else 0.0
        self.coupling = float(coupling)
        self.G, self.H = matlib.zoh_pair(plant.A, plant.B, h)
        # G^k for in-flight delays, built by repeated products like step-wise propagation
        self.G_pow = [np.eye(n)]
        for _ in range(max(int(p_max), 0)):
            self.G_pow.append(self.G @ self.G_pow[-1])
        self.substeps = int(substeps)
        self.G_sub, self.H_sub = matlib.zoh_pair(plant.A, plant.B, h / self.substeps)
        self.clock = SimClock(self.h)
        self.channel = Channel(delays if mode == "delay" else (), self.h, p_max, seed,
                               per_recipient)
        self.x = x0.copy()
        self.agents = [ag.AgentRuntime(i, topology.neighbor_lists[i], x0[i], m)
                       for i in range(N)]
        self.event_counts = [0] * N
        self.forced = {int(k): set(v) for k, v in (forced or {}).items()}  # step -> agents
        self._trigger = ag.trigger_delay if mode == "delay" else ag.trigger_no_delay
        self.logs = SimLogs(
            h=self.h,
            X=np.zeros((steps, N, n)), U=np.zeros((steps, N, m)), Z=np.zeros((steps, N, n)),
            E_pre=np.zeros((steps, N, n)), fired=np.zeros((steps, N), dtype=bool),
            delta=np.full((steps, N), np.nan), threshold=np.full((steps, N), np.nan),
            models=np.full((steps, N, N, n), np.nan) if record_models else None,
            X_fine=np.zeros((steps * self.substeps, N, n)) if self.substeps > 1 else None,
        )

    # -- one sampling instant ------------------------------------------------
    def step(self):
        mu = self.clock.step
        logs = self.logs
        if mu > 0:
            for a in self.agents:
                ag.propagate_models(a.bank, self.G)
        for deliver, send, sender, j, x in self.channel.due(mu):
            ok = ag.apply_update(self.agents[j].bank, sender, x, deliver - send, self.G, send,
                                 self.G_pow)
            logs.deliveries.append((send, deliver, sender, j, ok))
        for i, a in enumerate(self.agents):
            a.sample(self.x[i], mu)

        immediate = []
        zs = [None] * len(self.agents)
        for i, a in enumerate(self.agents):
            logs.E_pre[mu, i] = a.e_local
            if mu == 0 or self.policy == "always" or i in self.forced.get(mu, ()):
                fire = True
            elif self.policy == "never":
                fire = False
            else:
                zs[i] = ag.compute_z(a)
                dec = self._trigger(a, self.design, self.gains, ag.disc_errors(a), zs[i])
                logs.delta[mu, i], logs.threshold[mu, i] = dec.delta, dec.threshold
                fire = dec.fired
            if fire:
                msg = ag.on_fire(a, mu)
                k = self.event_counts[i]
                self.event_counts[i] += 1
                logs.fired[mu, i] = True
                logs.events.append((mu, i))
                if mu == 0 or self.mode != "delay" or self.policy == "always":
                    immediate.append(msg)
                else:
                    p = self.channel.draw(i, k, a.neighbors)
                    msg.deliver_steps = {j: mu + pj for j, pj in p.items()}
                    self.channel.push(msg)
        for msg in immediate:
            for j in self.agents[msg.sender].neighbors:
                ok = ag.apply_update(self.agents[j].bank, msg.sender, msg.x, 0, self.G,
                                     msg.send_step)
                zs[j] = None
                logs.deliveries.append((mu, mu, msg.sender, j, ok))

        u = np.empty((len(self.agents), self.plant.m))
        for i, a in enumerate(self.agents):
            # z from the trigger stays valid unless an immediate delivery changed a model
            u[i] = ag.control_input(a, self.F, self.coupling, zs[i])
            logs.Z[mu, i] = a.z
        logs.X[mu] = self.x
        logs.U[mu] = u
        if logs.models is not None:
            for i, a in enumerate(self.agents):
                for j, e in a.bank.entries.items():
                    logs.models[mu, i, j] = e.y

        self._advance(u, mu)
        self.clock.step += 1
        logs.steps_done = self.clock.step

    def _advance(self, u, mu):
        if self.substeps == 1:
            x = self.x @ self.G.T + u @ self.H.T
        else:
            x = self.x
            k = self.substeps
            for s in range(k):
                self.logs.X_fine[mu * k + s] = x
                x = x @ self.G_sub.T + u @ self.H_sub.T
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > TOL.divergence_norm:
            self.x = x
            raise DivergenceError(
                f"state norm exceeded {TOL.divergence_norm:g} after step {mu} "
                f"(t = {(mu + 1) * self.h:.6g} s)", logs=self.logs)
        self.x = x

    def run(self, steps: int) -> SimLogs:
        for _ in range(steps):
            self.step()
        return self.logs


# ---------------------------------------------------------------- metrics

@dataclass
class MetricsReport:
    t: np.ndarray
    V: np.ndarray
    envelope: np.ndarray | None
    max_disagreement: np.ndarray
    min_interval: tuple            # per agent, seconds (inf if fewer than 2 events)
    event_counts: np.ndarray       # (windows, N) events per window
    window: float
    disagreement_bound: float | None
    tail_max_disagreement: float
    envelope_violations: int
    flags: dict                    # name -> True when the guarantee is violated

    @property
    def violated(self) -> bool:
        return any(self.flags.values())


def disagreement_series(X: np.ndarray, L: np.ndarray, P: np.ndarray) -> np.ndarray:
    """V(t_mu) = x^T (L kron P) x for each row of X (steps, N, n)."""
    LX = np.einsum("ij,tjk->tik", L, X)
    return np.einsum("tik,kl,til->t", X, P, LX)


def max_pairwise(X: np.ndarray) -> np.ndarray:
    """max_{i,j} ||x_i - x_j||^2 per step."""
    if X.shape[1] < 2:
        return np.zeros(X.shape[0])
    D = X[:, :, None, :] - X[:, None, :, :]
    return np.max(np.sum(D * D, axis=-1), axis=(1, 2))


def count_events(logs: SimLogs, agent: int, t0: float, t1: float) -> int:
    """Events of one agent with t0 <= t <= t1 (grid times, half-step tolerance)."""
    lo, hi = t0 / logs.h - 0.5, t1 / logs.h + 0.5
    return sum(1 for s, i in logs.events if i == agent and lo <= s <= hi)


def metrics(logs: SimLogs, syn: Synthesis, *, window: float = 1.0,
            inter_event: bool = True) -> MetricsReport:
    N = syn.topology.agent_count
    X = logs.X[:logs.steps_done]
    t = logs.t
    V = disagreement_series(X, syn.spectrum.laplacian, syn.gains.P)
    dis = max_pairwise(X)
    dsg = syn.design
    flags = {}
    env = None
    bound = None
    violations = 0
    tail = float(np.max(dis[int(math.floor(0.9 * len(dis))):])) if len(dis) else 0.0
    if dsg is not None and len(V):
        env = envelope(t, V[0], dsg.eta, dsg.beta, N)
        violations = int(np.count_nonzero(V > env * (1 + TOL.envelope_slack)))
        flags["envelope"] = violations > 0
        bound = syn.disagreement_bound
        flags["disagreement_bound"] = tail > bound
    min_int = []
    for i in range(N):
        s = logs.event_steps(i)
        min_int.append(float(np.min(np.diff(s)) * logs.h) if len(s) > 1 else math.inf)
    if dsg is not None and inter_event:
        lim = dsg.inter_event_bound
        flags["inter_event"] = any(v <= lim * (1 + 1e-9) for v in min_int)
    nwin = max(1, int(math.ceil(logs.steps_done * logs.h / window - 1e-9)))
    counts = np.zeros((nwin, N), dtype=int)
    for s, i in logs.events:
        counts[min(int(s * logs.h / window + 1e-9), nwin - 1), i] += 1
    return MetricsReport(t=t, V=V, envelope=env, max_disagreement=dis,
                         min_interval=tuple(min_int), event_counts=counts, window=window,
                         disagreement_bound=bound, tail_max_disagreement=tail,
                         envelope_violations=violations, flags=flags)


# ---------------------------------------------------------------- drivers

@dataclass
class RunResult:
    config: ScenarioConfig
    synthesis: Synthesis | None
    logs: SimLogs
    metrics: MetricsReport | None


def synthesize_config(cfg: ScenarioConfig) -> Synthesis:
    return synthesize(cfg.plant, cfg.topology, mode=cfg.mode, h=cfg.h, d=cfg.d,
                      sigma=cfg.sigma, b=cfg.b, alpha=cfg.alpha, eps=cfg.eps, c=cfg.c,
                      P=cfg.P, eta=cfg.eta, x0=cfg.initial_states)


def run(cfg: ScenarioConfig, *, record_models: bool = False, syn: Synthesis | None = None) -> RunResult:
    """Synthesize (unless ``syn`` is given) and simulate ``cfg.duration`` seconds."""
    if cfg.N == 1:
        world = SimWorld(cfg.plant, cfg.topology, cfg.initial_states, cfg.h, mode=cfg.mode,
                         policy="never", steps=cfg.steps, substeps=cfg.substeps)
        return RunResult(cfg, None, world.run(cfg.steps), None)
    syn = syn or synthesize_config(cfg)
    world = SimWorld(cfg.plant, cfg.topology, cfg.initial_states, cfg.h, mode=cfg.mode,
                     gains=syn.gains, design=syn.design, delays=cfg.delays, p_max=cfg.p_max,
                     per_recipient=cfg.per_recipient_delays, seed=cfg.seed,
                     substeps=cfg.substeps, steps=cfg.steps, record_models=record_models)
    logs = world.run(cfg.steps)
    return RunResult(cfg, syn, logs, metrics(logs, syn))


@dataclass(frozen=True)
class BaselineSetup:
    """Gains and closed-loop analysis without any event design."""
    plant: PlantModel
    topology: Topology
    spectrum: object
    gains: object
    analysis: object
    design: None = None


def continuous_baseline(cfg: ScenarioConfig) -> RunResult:
    """Broadcast every step with zero delay and couple with c instead of c1."""
    spectrum = laplacian(cfg.topology)
    alpha = cfg.alpha if cfg.alpha is not None else 0.1 * max(matlib.spectral_norm(cfg.plant.A), 1e-3)
    gains = design_gains(cfg.plant, spectrum, alpha, eps=cfg.eps, c=cfg.c, P=cfg.P)
    analysis = closed_loop_analysis(cfg.plant, gains, spectrum)
    setup = BaselineSetup(cfg.plant, cfg.topology, spectrum, gains, analysis)
    world = SimWorld(cfg.plant, cfg.topology, cfg.initial_states, cfg.h, mode="no_delay",
                     gains=gains, coupling=gains.c, policy="always", steps=cfg.steps,
                     substeps=cfg.substeps)
    logs = world.run(cfg.steps)
    X = logs.X[:logs.steps_done]
    V = disagreement_series(X, spectrum.laplacian, gains.P)
    dis = max_pairwise(X)
    rep = MetricsReport(t=logs.t, V=V, envelope=None, max_disagreement=dis,
                        min_interval=tuple([cfg.h] * cfg.N), event_counts=np.zeros((0, cfg.N)),
                        window=1.0, disagreement_bound=None,
                        tail_max_disagreement=float(dis[-1]) if len(dis) else 0.0,
                        envelope_violations=0, flags={})
    return RunResult(cfg, setup, logs, rep)


# ---------------------------------------------------------------- replay checks

def replication_residuals(logs: SimLogs, topology: Topology, G: np.ndarray) -> dict:
    """Delay-mode model consistency, replayed from recorded model banks.

    For every applied delivery of agent i's broadcast to neighbor j:

    * ``y_ji == y_ii`` from delivery until i's next event;
    * the offset ``nu = y_ji - y_ii`` equals ``e_ii(t_k^-)`` at the event,
      evolves as ``nu <- G nu`` while the message is in transit and is 0 from
      delivery on.

    The offset law presumes i's previous broadcast reached j by the event
    and that no other broadcast of i lands or is sent during transit.
    Windows where i's broadcasts overlap in flight are counted in
    ``overlapping`` and not replayed. Residuals are relative to
    ``1 + max|y_ii|`` over the window.
    """
    if logs.models is None:
        raise ValueError("run with record_models=True")
    M = logs.models
    steps = logs.steps_done
    N = topology.agent_count
    ev = [logs.event_steps(i) for i in range(N)]
    applied: dict = {}
    landed: dict = {}      # (sender, recipient, send step) -> delivery step if applied
    for send, deliver, i, j, ok in logs.deliveries:
        if ok:
            applied.setdefault((i, j), []).append((send, deliver))
            landed[(i, j, send)] = deliver
    worst_equal = worst_nu = 0.0
    checked = overlapping = replayed = 0
    for (i, j), lst in applied.items():
        lst.sort()
        dsteps = np.array([d for _, d in lst])
        for send, deliver in lst:
            k = int(np.searchsorted(ev[i], send, side="right"))
            stop = min(int(ev[i][k]) if k < len(ev[i]) else steps, steps)
            if stop <= send:
                continue
            scale = 1.0 + float(np.max(np.abs(M[send:stop, i, i])))
            if deliver < stop:
                r = np.max(np.abs(M[deliver:stop, j, i] - M[deliver:stop, i, i]))
                worst_equal = max(worst_equal, float(r) / scale)
            checked += 1
            if deliver == send:
                continue
            # the sender's previous broadcast must have reached j by now
            prev_send = int(ev[i][k - 2]) if k >= 2 else None
            prev_ok = prev_send is not None and landed.get((i, j, prev_send), steps) <= send
            # another broadcast of i landing at j inside (send, deliver)
            landing = np.any((dsteps > send) & (dsteps < deliver))
            if not prev_ok or landing or stop < deliver:
                overlapping += 1
                continue
            replayed += 1
            nu = M[send, j, i] - M[send, i, i]
            worst_nu = max(worst_nu, float(np.max(np.abs(nu - logs.E_pre[send, i]))) / scale)
            for mu in range(send + 1, deliver):
                nu = G @ nu
                obs = M[mu, j, i] - M[mu, i, i]
                worst_nu = max(worst_nu, float(np.max(np.abs(obs - nu))) / scale)
    return {"equal_after_delivery": worst_equal, "nu_law": worst_nu,
            "deliveries": checked, "overlapping": overlapping, "replayed": replayed}
