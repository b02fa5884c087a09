"""Most-probable state sequences between fixed start and end states.

The production route is Dijkstra over the nonnegative edge weights of a
TransitionGraph; the negative total weight equals the log path probability up
to the constant initial term, which is dropped throughout because the start
state is fixed. Two reference solvers exist purely for validation: an
exhaustive enumerator that scores sequences (repeats permitted) with the
history-dependent freshness rule, and a deliberately naive trellis Viterbi
that ignores that history dependence and is therefore wrong on instances
where revisiting a fragment changes later costs.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .transitions import State, TransitionGraph

BRUTE_FORCE_MAX_STATES = 12
BRUTE_FORCE_MAX_LENGTH = 8


class NoPathError(RuntimeError):
    """End state unreachable from the start state."""


class NegativeWeightError(ValueError):
    """An edge weight is negative, violating the unit-cap contract."""


@dataclass
class TracePath:
    states: list[int]
    total_weight: float
    log_path_prob: float
    polyline: np.ndarray  # (N, 3) µm

    def to_dict(self) -> dict:
        return {
            "states": list(self.states),
            "weight": self.total_weight,
            "log_prob": self.log_path_prob,
            "polyline_um": self.polyline.tolist(),
        }


def sequence_to_polyline(sequence: list[int], states: list[State]) -> np.ndarray:
    """Concatenated state endpoints with consecutive duplicates merged."""
    if not sequence:
        raise ValueError("empty state sequence")
    by_id = {s.state_id: s for s in states}
    points: list[np.ndarray] = []
    for sid in sequence:
        s = by_id[sid]
        for p in (np.asarray(s.x0, float), np.asarray(s.x1, float)):
            if not points or not np.allclose(points[-1], p, atol=1e-9):
                points.append(p)
    return np.asarray(points)


def _finish(graph: TransitionGraph, sequence: list[int], weight: float) -> TracePath:
    polyline = (
        sequence_to_polyline(sequence, graph.states)
        if graph.states is not None
        else np.empty((0, 3))
    )
    return TracePath(sequence, weight, -weight, polyline)


def shortest_path(
    graph: TransitionGraph, start: int, end: int, method: str = "dijkstra"
) -> TracePath | None:
    """Minimum-weight path from start to end, or None when unreachable.

    Ties in total weight resolve to the lexicographically smaller state-id
    sequence. The terminal state simply ends the path (conceptually it only
    transitions to itself from there on). ``method="bellman-ford"`` runs the
    slower reference recursion for integrity checking.
    """
    n = graph.n_states
    if not (0 <= start < n and 0 <= end < n):
        raise KeyError(f"state ids must lie in [0, {n}), got {start}, {end}")
    if method == "bellman-ford":
        return _bellman_ford(graph, start, end)
    if method != "dijkstra":
        raise ValueError(f"unknown method {method!r}")

    # heap entries (weight, path): tuple order gives weight-then-lex ties
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (start,))]
    settled: set[int] = set()
    while heap:
        weight, path = heapq.heappop(heap)
        u = path[-1]
        if u in settled:
            continue
        settled.add(u)
        if u == end:
            return _finish(graph, list(path), weight)
        for v in graph.successors(u):
            if v in settled:
                continue
            w = graph.weight(u, v)
            if w < 0:
                raise NegativeWeightError(f"edge ({u}, {v}) has weight {w}")
            heapq.heappush(heap, (weight + w, path + (v,)))
    return None


def _bellman_ford(graph: TransitionGraph, start: int, end: int) -> TracePath | None:
    n = graph.n_states
    dist = {start: 0.0}
    pred: dict[int, int] = {}
    for _ in range(n - 1):
        changed = False
        for (u, v), _e in sorted(graph.edges.items()):
            if u not in dist:
                continue
            w = graph.weight(u, v)
            if w < 0:
                raise NegativeWeightError(f"edge ({u}, {v}) has weight {w}")
            cand = dist[u] + w
            if cand < dist.get(v, np.inf) - 1e-15:
                dist[v] = cand
                pred[v] = u
                changed = True
        if not changed:
            break
    if end not in dist:
        return None
    sequence = [end]
    while sequence[-1] != start:
        sequence.append(pred[sequence[-1]])
    sequence.reverse()
    return _finish(graph, sequence, dist[end])


def _step_terms(graph: TransitionGraph, u: int, v: int, fresh: bool) -> float:
    e = graph.edges[(u, v)]
    frag_term = graph.log_a1_frag[v] if fresh else 0.0
    return frag_term + e.log_lik_gap + e.log_prior


def path_log_prob(sequence: list[int], graph: TransitionGraph) -> float:
    """Log path probability of a state sequence (constant initial term = 0).

    A fragment's likelihood is counted only on its first appearance in the
    sequence (including the start state); gap and transition terms are counted
    on every step.
    """
    if not sequence:
        raise ValueError("empty state sequence")
    seen = {graph.fragment_of[sequence[0]]}
    total = 0.0
    for u, v in zip(sequence[:-1], sequence[1:]):
        if (u, v) not in graph.edges:
            raise KeyError(f"({u}, {v}) is not a graph edge")
        frag = graph.fragment_of[v]
        total += _step_terms(graph, u, v, fresh=frag not in seen)
        seen.add(frag)
    return total


def joint_increment(graph: TransitionGraph, u: int, v: int, fresh: bool) -> float:
    """One step of the full-image joint recursion (ratio form)."""
    if graph.log_a0_frag is None:
        raise ValueError("graph lacks background likelihoods")
    e = graph.edges[(u, v)]
    ratio = graph.log_a1_frag[v] - graph.log_a0_frag[v] if fresh else 0.0
    return ratio + e.log_prior


def joint_log_prob_full(sequence: list[int], graph: TransitionGraph) -> float:
    """Full-image joint log probability up to the constant first-state term.

    Uses the foreground/background ratio, which may exceed 1 per fragment, so
    this quantity is for analysis only and never drives routing.
    """
    if not sequence:
        raise ValueError("empty state sequence")
    seen = {graph.fragment_of[sequence[0]]}
    total = 0.0
    for u, v in zip(sequence[:-1], sequence[1:]):
        if (u, v) not in graph.edges:
            raise KeyError(f"({u}, {v}) is not a graph edge")
        frag = graph.fragment_of[v]
        total += joint_increment(graph, u, v, fresh=frag not in seen)
        seen.add(frag)
    return total


@dataclass
class TermTable:
    """Explicit per-step transition factors for the reference solvers.

    ``terms[(u, v)] = (fresh, repeat)`` gives the multiplicative contribution
    of step u -> v depending on whether v's fragment has already appeared in
    the sequence (the start state's fragment counts as appeared). Values may
    be Fractions for exact arithmetic.
    """

    states: list
    fragment_of: dict
    terms: dict[tuple, tuple]

    def successors(self, u) -> list:
        return sorted(v for (uu, v) in self.terms if uu == u)

    def step(self, u, v, fresh: bool):
        fresh_term, repeat_term = self.terms[(u, v)]
        return fresh_term if fresh else repeat_term

    def path_prob(self, sequence):
        """Exact path probability under the history-dependent rule."""
        seen = {self.fragment_of[sequence[0]]}
        total = Fraction(1) if self._exact() else 1.0
        for u, v in zip(sequence[:-1], sequence[1:]):
            total = total * self.step(u, v, self.fragment_of[v] not in seen)
            seen.add(self.fragment_of[v])
        return total

    def _exact(self) -> bool:
        return any(isinstance(t, Fraction) for pair in self.terms.values() for t in pair)


def _enumerate_best_table(table: TermTable, start, end, n_max: int, exact_length: bool):
    best: tuple | None = None  # (prob, sequence)

    def consider(seq, prob):
        nonlocal best
        if best is None or prob > best[0] or (prob == best[0] and seq < best[1]):
            best = (prob, list(seq))

    def dfs(seq, prob, seen):
        if seq[-1] == end and (len(seq) == n_max if exact_length else True):
            consider(seq, prob)
        if len(seq) == n_max:
            return
        u = seq[-1]
        for v in table.successors(u):
            fresh = table.fragment_of[v] not in seen
            factor = table.step(u, v, fresh)
            if factor == 0:
                continue
            if fresh:
                seen.add(table.fragment_of[v])
            seq.append(v)
            dfs(seq, prob * factor, seen)
            seq.pop()
            if fresh:
                seen.remove(table.fragment_of[v])

    one = Fraction(1) if table._exact() else 1.0
    dfs([start], one, {table.fragment_of[start]})
    return best


def brute_force_best(
    instance, start, end, n_max: int, exact_length: bool = False
):
    """Exhaustively score all start->end sequences of length <= n_max.

    Repeated states are permitted and scored with the history-dependent
    freshness rule. For a TransitionGraph the return is (sequence, log_prob);
    for a TermTable it is (sequence, probability), exact when the table holds
    Fractions. ``exact_length=True`` restricts to sequences of exactly n_max
    states, matching fixed-horizon trellis formulations. Guarded to at most
    12 states and length 8.
    """
    if n_max > BRUTE_FORCE_MAX_LENGTH:
        raise ValueError(f"n_max > {BRUTE_FORCE_MAX_LENGTH} is not tractable")
    if isinstance(instance, TermTable):
        if len(instance.states) > BRUTE_FORCE_MAX_STATES:
            raise ValueError("too many states for exhaustive enumeration")
        result = _enumerate_best_table(instance, start, end, n_max, exact_length)
        if result is None:
            return None
        prob, seq = result
        return seq, prob

    graph: TransitionGraph = instance
    if graph.n_states > BRUTE_FORCE_MAX_STATES:
        raise ValueError("too many states for exhaustive enumeration")

    # every step term is <= 0 when alpha_1 <= 1, so a partial sum bounds any
    # completion and branch-and-bound pruning is sound; disable it otherwise
    prunable = all(a <= 1e-12 for a in graph.log_a1_frag) and all(
        e.log_prior <= 1e-12 and e.log_lik_gap <= 1e-12 for e in graph.edges.values()
    )
    best: tuple[float, list[int]] | None = None

    def consider(seq, logp):
        nonlocal best
        if best is None or logp > best[0] + 1e-15 or (
            abs(logp - best[0]) <= 1e-15 and seq < best[1]
        ):
            best = (logp, list(seq))

    def dfs(seq, logp, seen):
        nonlocal best
        if prunable and best is not None and logp < best[0] - 1e-12:
            return
        if seq[-1] == end and (len(seq) == n_max if exact_length else True):
            consider(seq, logp)
        if len(seq) == n_max:
            return
        u = seq[-1]
        for v in graph.successors(u):
            frag = graph.fragment_of[v]
            fresh = frag not in seen
            if fresh:
                seen.add(frag)
            seq.append(v)
            dfs(seq, logp + _step_terms(graph, u, v, fresh), seen)
            seq.pop()
            if fresh:
                seen.remove(frag)

    dfs([start], 0.0, {graph.fragment_of[start]})
    if best is None:
        return None
    return best[1], best[0]


def naive_viterbi(table: TermTable, start, end, n: int):
    """Classic fixed-horizon trellis DP, intentionally blind to history.

    Stores one best (score, path) per (state, step) and judges each
    extension's freshness only against that single stored path, exactly the
    assumption that breaks when an abandoned prefix would make a later
    transition cheap. Returns (sequence, probability) where the probability
    is the true history-aware score of the returned sequence.
    """
    one = Fraction(1) if table._exact() else 1.0
    layer: dict = {start: (one, [start])}
    for _ in range(n - 1):
        nxt: dict = {}
        for u, (score, path) in layer.items():
            seen = {table.fragment_of[s] for s in path}
            for v in table.successors(u):
                cand = score * table.step(u, v, table.fragment_of[v] not in seen)
                incumbent = nxt.get(v)
                if (
                    incumbent is None
                    or cand > incumbent[0]
                    or (cand == incumbent[0] and path + [v] < incumbent[1])
                ):
                    nxt[v] = (cand, path + [v])
        layer = nxt
        if not layer:
            return None
    if end not in layer:
        return None
    sequence = layer[end][1]
    return sequence, table.path_prob(sequence)


def viterbi_counterexample() -> TermTable:
    """Two-state instance where the naive trellis misses the optimum.

    Fragment 2 contributes a fresh likelihood factor of 1/100 (so the fresh
    1 -> 2 step costs 1/200 and drops to 1/2 once fragment 2 has been seen);
    fragment 1 contributes 2 when fresh. Over sequences of length 4 from
    state 1 to state 2 the true optimum is (1, 2, 1, 2) with probability
    1/400, while the naive trellis returns (1, 1, 1, 2) with probability
    1/800.
    """
    half = Fraction(1, 2)
    ratio = {1: Fraction(2), 2: Fraction(1, 100)}
    p = {(1, 1): half, (1, 2): half, (2, 1): Fraction(1), (2, 2): Fraction(0)}
    terms = {uv: (ratio[uv[1]] * pv, pv) for uv, pv in p.items()}
    return TermTable(states=[1, 2], fragment_of={1: 1, 2: 2}, terms=terms)
