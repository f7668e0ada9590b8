"""Distributed topology bookkeeping and repair.

Every vehicle broadcasts a row ``(pred_id, succ_id)`` (0 meaning none). The
stacked rows form the topology matrix. When the rows stop describing a
single consistent chain, each vehicle independently searches for the chain
that keeps as many of the current entries as possible, skipping links that
are no longer trusted. The search and the tie-break are deterministic, so all
vehicles reach the same answer without further negotiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .attacks import DeltaVec

Edge = tuple[int, int]


class MalformedMatrixError(ValueError):
    pass


class InfeasibleTopologyError(ValueError):
    pass


class AmbiguousClaimsError(ValueError):
    """More than one vehicle is contradicted by a majority at the same time."""


@dataclass(frozen=True)
class TopologyMatrix:
    rows: Mapping[int, DeltaVec]

    def __post_init__(self):
        # canonical ordering so equal matrices compare and print identically
        object.__setattr__(self, "rows", dict(sorted(self.rows.items())))
        for vid, row in self.rows.items():
            if vid <= 0:
                raise MalformedMatrixError(f"vehicle ids must be positive, got {vid}")
            if row.pred_id == vid or row.succ_id == vid:
                raise MalformedMatrixError(f"vehicle {vid} references itself: {row}")

    @classmethod
    def from_rows(cls, rows: Mapping[int, Sequence[int]] | Sequence[Sequence[int]],
                  ids: Sequence[int] | None = None) -> "TopologyMatrix":
        """Build from ``{id: (pred, succ)}`` or from a list of rows with ids 1..N."""
        if isinstance(rows, Mapping):
            return cls({int(k): DeltaVec(int(v[0]), int(v[1])) for k, v in rows.items()})
        rows = list(rows)
        ids = list(ids) if ids is not None else list(range(1, len(rows) + 1))
        if len(ids) != len(rows):
            raise MalformedMatrixError("ids and rows differ in length")
        return cls({i: DeltaVec(int(r[0]), int(r[1])) for i, r in zip(ids, rows)})

    @classmethod
    def chain(cls, order: Sequence[int]) -> "TopologyMatrix":
        """Matrix of the linear platoon ``order[0]`` (leader) -> ... -> ``order[-1]``."""
        rows = {}
        for pos, vid in enumerate(order):
            pred = order[pos - 1] if pos > 0 else 0
            succ = order[pos + 1] if pos + 1 < len(order) else 0
            rows[vid] = DeltaVec(pred, succ)
        return cls(rows)

    @property
    def ids(self) -> list[int]:
        return list(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def as_list(self) -> list[list[int]]:
        return [[r.pred_id, r.succ_id] for r in self.rows.values()]

    def with_row(self, vid: int, row: DeltaVec) -> "TopologyMatrix":
        rows = dict(self.rows)
        rows[vid] = row
        return TopologyMatrix(rows)

    def order(self) -> list[int]:
        """Vehicle ids from leader to tail; only defined for valid matrices."""
        report = check_conditions(self)
        if not report.valid:
            raise MalformedMatrixError("; ".join(report.violations))
        leader = next(v for v, r in self.rows.items() if r.pred_id == 0)
        out = [leader]
        while self.rows[out[-1]].succ_id:
            out.append(self.rows[out[-1]].succ_id)
        return out

    def leader(self) -> int | None:
        leaders = [v for v, r in self.rows.items() if r.pred_id == 0]
        return leaders[0] if len(leaders) == 1 else None

    def to_text(self) -> str:
        return "".join(f"{vid} {r.pred_id} {r.succ_id}\n" for vid, r in self.rows.items())

    @classmethod
    def from_text(cls, text: str) -> "TopologyMatrix":
        rows = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 3:
                raise MalformedMatrixError(f"line {lineno}: expected 'id pred succ', got {line!r}")
            vid, pred, succ = (int(x) for x in parts)
            if vid in rows:
                raise MalformedMatrixError(f"line {lineno}: duplicate id {vid}")
            rows[vid] = DeltaVec(pred, succ)
        return cls(rows)


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    violations: tuple[str, ...] = ()


def check_conditions(D: TopologyMatrix) -> ValidityReport:
    """Unique leader and tail, consistent pred/succ pairs, one connected chain."""
    ids = set(D.rows)
    for vid, row in D.rows.items():
        for ref in row.as_tuple():
            if ref and ref not in ids:
                raise MalformedMatrixError(f"vehicle {vid} references unknown id {ref}")
    if not ids:
        return ValidityReport(False, ("empty matrix",))

    problems = []
    leaders = sorted(v for v, r in D.rows.items() if r.pred_id == 0)
    tails = sorted(v for v, r in D.rows.items() if r.succ_id == 0)
    if len(leaders) != 1:
        problems.append(f"expected exactly one leader, found {len(leaders)}: {leaders}")
    if len(tails) != 1:
        problems.append(f"expected exactly one tail, found {len(tails)}: {tails}")
    for vid, row in D.rows.items():
        if row.pred_id and D.rows[row.pred_id].succ_id != vid:
            problems.append(f"inconsistent: {vid} names {row.pred_id} as predecessor, "
                            f"but {row.pred_id} names {D.rows[row.pred_id].succ_id} as follower")
        if row.succ_id and D.rows[row.succ_id].pred_id != vid:
            problems.append(f"inconsistent: {vid} names {row.succ_id} as follower, "
                            f"but {row.succ_id} names {D.rows[row.succ_id].pred_id} as predecessor")
        if row.pred_id and row.pred_id == row.succ_id:
            problems.append(f"vehicle {vid} has the same predecessor and follower")
    if len(leaders) == 1:
        seen = {leaders[0]}
        cur = leaders[0]
        while D.rows[cur].succ_id and D.rows[cur].succ_id not in seen:
            cur = D.rows[cur].succ_id
            seen.add(cur)
        if seen != ids:
            problems.append(f"not connected: chain from leader {leaders[0]} misses "
                            f"{sorted(ids - seen)}")
    return ValidityReport(not problems, tuple(problems))


def score(D: TopologyMatrix, candidate: TopologyMatrix) -> int:
    """Number of entries kept unchanged when moving from ``D`` to ``candidate``."""
    total = 0
    for vid, row in D.rows.items():
        new = candidate.rows[vid]
        total += (row.pred_id == new.pred_id) + (row.succ_id == new.succ_id)
    return total


def solve_topology(D: TopologyMatrix, forbidden: Iterable[Edge] = ()) -> list[TopologyMatrix]:
    """All chains over the vehicles of ``D`` that keep the most entries of ``D``.

    ``forbidden`` holds (predecessor, follower) pairs that may not appear.
    Exact depth-first search over chain orderings, pruned by an optimistic
    bound on the entries still obtainable. Results come back in
    lexicographic order of the vehicle sequence.
    """
    ids = sorted(D.rows)
    if not ids:
        raise InfeasibleTopologyError("no vehicles to arrange")
    banned = set(forbidden)
    for a, b in banned:
        if a not in D.rows or b not in D.rows:
            raise MalformedMatrixError(f"forbidden link ({a}, {b}) references an unknown id")
    n = len(ids)
    pred = {v: D.rows[v].pred_id for v in ids}
    succ = {v: D.rows[v].succ_id for v in ids}

    best_score = -1
    best: list[tuple[int, ...]] = []
    order: list[int] = []
    used: set[int] = set()

    def place_gain(prev: int, nxt: int) -> int:
        # entries gained by linking prev -> nxt (0 stands for the chain ends)
        g = 0
        if prev:
            g += succ[prev] == nxt
        if nxt:
            g += pred[nxt] == prev
        return g

    def dfs(acc: int) -> None:
        nonlocal best_score, best
        # each unplaced vehicle can still gain at most 2, the last placed at most 1
        remaining = 2 * (n - len(order)) + (1 if order else 0)
        if acc + remaining < best_score:
            return
        if len(order) == n:
            total = acc + place_gain(order[-1], 0)
            if total > best_score:
                best_score, best = total, [tuple(order)]
            elif total == best_score:
                best.append(tuple(order))
            return
        prev = order[-1] if order else 0
        for v in ids:
            if v in used or (prev, v) in banned:
                continue
            order.append(v)
            used.add(v)
            dfs(acc + place_gain(prev, v))
            used.discard(v)
            order.pop()

    dfs(0)
    if not best:
        raise InfeasibleTopologyError(f"every ordering uses a forbidden link: {sorted(banned)}")
    return [TopologyMatrix.chain(o) for o in sorted(best)]


def tie_break(optima: Sequence[TopologyMatrix], leader: int | None = None) -> TopologyMatrix:
    """Prefer optima that keep ``leader`` in front, then the smallest id sequence."""
    if not optima:
        raise ValueError("no candidate topologies")
    if len(optima) == 1:
        return optima[0]
    pool = list(optima)
    if leader is not None:
        keep = [D for D in pool if D.leader() == leader]
        if keep:
            pool = keep
    return min(pool, key=lambda D: D.order())


def severed_links(previous: TopologyMatrix, current: TopologyMatrix) -> set[Edge]:
    """Links of ``previous`` that a follower has since dropped by zeroing its predecessor."""
    out = set()
    for vid, row in previous.rows.items():
        if row.pred_id and vid in current.rows and current.rows[vid].pred_id == 0:
            out.add((row.pred_id, vid))
    return out


def isolate_compromised(D: TopologyMatrix, compromised_id: int,
                        forbidden: Iterable[Edge] = (),
                        leader: int | None = None) -> TopologyMatrix:
    """Repair after the follower of ``compromised_id`` stopped trusting it.

    The compromised vehicle ends up at the tail, where nobody consumes its data.
    """
    if compromised_id not in D.rows:
        raise MalformedMatrixError(f"unknown vehicle {compromised_id}")
    banned = set(forbidden)
    succ = D.rows[compromised_id].succ_id
    for v, r in D.rows.items():
        if v == succ or r.pred_id == compromised_id:
            banned.add((compromised_id, v))
    if leader is None:
        leader = _pre_event_leader(D)
    if leader == compromised_id:
        leader = None
    result = tie_break(solve_topology(D, banned), leader)
    if result.rows[compromised_id].succ_id != 0:
        # single severed link: every optimum must end with the compromised vehicle
        raise InfeasibleTopologyError(
            f"repair left {compromised_id} with follower {result.rows[compromised_id].succ_id}")
    return result


def _pre_event_leader(D: TopologyMatrix) -> int | None:
    # the true leader is the vehicle without predecessor that nobody names as follower
    named = {r.succ_id for r in D.rows.values() if r.succ_id}
    cands = [v for v, r in D.rows.items() if r.pred_id == 0 and v not in named]
    return cands[0] if len(cands) == 1 else None


def handle_merge(D: TopologyMatrix, new_id: int, leader: int | None = None) -> TopologyMatrix:
    if new_id in D.rows:
        raise MalformedMatrixError(f"vehicle {new_id} is already in the platoon")
    if leader is None:
        leader = D.leader()
    merged = D.with_row(new_id, DeltaVec(0, 0))
    return tie_break(solve_topology(merged), leader)


def handle_split(D: TopologyMatrix, leaving_id: int, leader: int | None = None) -> TopologyMatrix:
    if leaving_id not in D.rows:
        raise MalformedMatrixError(f"vehicle {leaving_id} is not in the platoon")
    if leader is None:
        leader = D.leader()
    rows = {v: r for v, r in D.rows.items() if v != leaving_id}
    for v, r in list(rows.items()):
        rows[v] = DeltaVec(0 if r.pred_id == leaving_id else r.pred_id,
                           0 if r.succ_id == leaving_id else r.succ_id)
    if not rows:
        raise InfeasibleTopologyError("platoon would be empty")
    remaining = TopologyMatrix(rows)
    if leader == leaving_id:
        leader = None
    return tie_break(solve_topology(remaining), leader)


@dataclass(frozen=True)
class BroadcastVerdict:
    status: str  # "consistent", "suspect" or "not_identifiable"
    suspect: int | None = None
    contradictions: Mapping[int, tuple[int, ...]] = field(default_factory=dict)


def _contradictors(claims: Mapping[int, DeltaVec], j: int) -> set[int]:
    """Vehicles whose own rows disagree with what ``j`` claims about its neighbours."""
    row = claims[j]
    against = set()
    for x, other in claims.items():
        if x == j:
            continue
        if row.pred_id:
            # the claimed predecessor denies it, or someone else claims either role
            if x == row.pred_id:
                if other.succ_id != j:
                    against.add(x)
            elif other.succ_id == j or other.pred_id == row.pred_id:
                against.add(x)
        elif other.succ_id == j:
            against.add(x)
        if row.succ_id:
            if x == row.succ_id:
                if other.pred_id != j:
                    against.add(x)
            elif other.pred_id == j or other.succ_id == row.succ_id:
                against.add(x)
        elif other.pred_id == j:
            against.add(x)
    return against


ClaimSet = TopologyMatrix | Mapping[int, DeltaVec] | Mapping[int, TopologyMatrix]


def _own_rows(claims: ClaimSet) -> dict[int, DeltaVec]:
    if isinstance(claims, TopologyMatrix):
        return dict(claims.rows)
    out = {}
    for vid, claim in claims.items():
        # a full matrix per claimer: only the claimer's own row is first-hand
        out[vid] = claim.rows[vid] if isinstance(claim, TopologyMatrix) else claim
    return out


def detect_false_broadcast(claims: ClaimSet) -> BroadcastVerdict:
    """Identify a single vehicle broadcasting a forged row by majority vote.

    ``claims`` maps each vehicle to its own row (or to the whole matrix it
    broadcast, of which only its own row is used). A vehicle whose row is
    disputed by at least two others is the suspect. A vehicle that merely
    claims to have no predecessor cannot be told apart from a genuine loss of
    trust, so that pattern comes back as not identifiable.
    """
    rows = _own_rows(claims)
    if check_conditions(TopologyMatrix(rows)).valid:
        return BroadcastVerdict("consistent")
    disputes = {j: tuple(sorted(_contradictors(rows, j))) for j in rows}
    suspects = sorted(j for j, who in disputes.items() if len(who) >= 2)
    if len(rows) <= 3 or not suspects:
        return BroadcastVerdict("not_identifiable", None, disputes)
    if len(suspects) > 1:
        raise AmbiguousClaimsError(f"several vehicles are disputed by a majority: {suspects}")
    return BroadcastVerdict("suspect", suspects[0], disputes)


def repair_row(claims: TopologyMatrix, suspect: int) -> TopologyMatrix:
    """Replace the suspect's row with the one implied by its neighbours' claims."""
    rows = claims.rows
    preds = [v for v, r in rows.items() if v != suspect and r.succ_id == suspect]
    succs = [v for v, r in rows.items() if v != suspect and r.pred_id == suspect]
    pred = preds[0] if len(preds) == 1 else 0
    succ = succs[0] if len(succs) == 1 else 0
    return claims.with_row(suspect, DeltaVec(pred, succ))
