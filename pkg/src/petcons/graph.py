"""Undirected 0/1 topologies, Laplacians and their spectra."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PetconsError
from .matlib import TOL, sym_eig


@dataclass(frozen=True)
class Topology:
    agent_count: int
    adjacency: np.ndarray
    neighbor_lists: tuple[tuple[int, ...], ...] = field(init=False)
    degrees: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=float)
        N = self.agent_count
        if adj.shape != (N, N):
            raise ConfigError(f"adjacency must be {N}x{N}, got {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ConfigError("adjacency must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise ConfigError("adjacency must have a zero diagonal")
        if not np.all((adj == 0) | (adj == 1)):
            raise ConfigError("adjacency entries must be 0 or 1")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        nbrs = tuple(tuple(int(j) for j in np.flatnonzero(adj[i])) for i in range(N))
        object.__setattr__(self, "neighbor_lists", nbrs)
        object.__setattr__(self, "degrees", tuple(len(nb) for nb in nbrs))

    @classmethod
    def from_edges(cls, agent_count: int, edges) -> "Topology":
        """Build from 0-based undirected edge pairs; duplicates are ignored."""
        if agent_count < 1:
            raise ConfigError("need at least one agent")
        adj = np.zeros((agent_count, agent_count))
        for edge in edges:
            if len(edge) != 2:
                raise ConfigError(f"edge {edge!r} is not a pair")
            i, j = int(edge[0]), int(edge[1])
            if i == j:
                raise ConfigError(f"self-loop on agent {i}")
            if not (0 <= i < agent_count and 0 <= j < agent_count):
                raise ConfigError(f"edge {edge!r} out of range for {agent_count} agents")
            adj[i, j] = adj[j, i] = 1.0
        return cls(agent_count, adj)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.agent_count)
                for j in self.neighbor_lists[i] if i < j]


@dataclass(frozen=True)
class LaplacianSpectrum:
    laplacian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1]) if len(self.eigenvalues) > 1 else 0.0

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])


def laplacian(topology: Topology) -> LaplacianSpectrum:
    A = topology.adjacency
    L = np.diag(A.sum(axis=1)) - A
    spec = sym_eig(L)
    w = spec.eigenvalues.copy()
    # rows sum to zero by construction; pin the rounding noise on lambda_1
    w[0] = 0.0 if abs(w[0]) < 1e-10 * max(1.0, abs(w[-1])) else w[0]
    return LaplacianSpectrum(laplacian=L, eigenvalues=w, eigenvectors=spec.eigenvectors)


def _reachable_all(topology: Topology) -> bool:
    N = topology.agent_count
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in topology.neighbor_lists[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == N


def is_connected(topology: Topology) -> bool:
    """Spectral connectivity test, cross-checked by breadth-first search."""
    if topology.agent_count == 1:
        return True
    spectral = laplacian(topology).lambda2 > TOL.connectivity
    if spectral != _reachable_all(topology):
        raise PetconsError("spectral and BFS connectivity disagree")
    return spectral


def kron_lift(S, M) -> np.ndarray:
    """Block matrix whose (i, j) block is ``S[i, j] * M``."""
    return np.kron(np.atleast_2d(S), np.atleast_2d(M))


def disagreement(x, L, Q) -> float:
    """V = x^T (L kron Q) x for stacked agent states ``x`` (length N*n)."""
    x = np.asarray(x, dtype=float).ravel()
    return float(x @ kron_lift(L, Q) @ x)


def disagreement_by_edges(states, topology: Topology, Q) -> float:
    """Same quantity written as a sum over ordered neighbor pairs.

    ``states`` has one row per agent.
    """
    states = np.asarray(states, dtype=float)
    total = 0.0
    for i, nbrs in enumerate(topology.neighbor_lists):
        for j in nbrs:
            dx = states[i] - states[j]
            total += 0.5 * dx @ Q @ dx
    return float(total)
