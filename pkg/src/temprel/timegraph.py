"""Conflict-free temporal graph over entities.

Overlap is treated as an equivalence relation (disjoint-set classes) and
Before/After as a strict partial order between classes (a DAG). Each query
runs a fresh breadth-first search, so a single query costs O(v + e) and the
complexity contract stays auditable.

Mutations require exclusive access; queries on a frozen graph may run
concurrently.
"""
from __future__ import annotations

from collections import deque

from .rules import AFTER, BEFORE, OVERLAP

UNKNOWN = "Unknown"


class UnknownEntityError(KeyError):
    pass


class TimeGraph:
    """Before/After/Overlap graph that rejects inconsistent insertions."""

    def __init__(self) -> None:
        self._parent: dict[str, str] = {}
        self._members: dict[str, set[str]] = {}  # class rep -> entities
        self._out: dict[str, set[str]] = {}  # rep -> reps strictly after it
        self._in: dict[str, set[str]] = {}

    # -- node / class bookkeeping --------------------------------------

    @property
    def nodes(self) -> set[str]:
        return set(self._parent)

    def _ensure(self, x: str) -> str:
        if x not in self._parent:
            self._parent[x] = x
            self._members[x] = {x}
            self._out[x] = set()
            self._in[x] = set()
        return self._find(x)

    def _find(self, x: str) -> str:
        root = x
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[x] != root:  # path compression
            self._parent[x], x = root, self._parent[x]
        return root

    def _reaches(self, src: str, dst: str) -> bool:
        seen = {src}
        queue = deque([src])
        while queue:
            node = queue.popleft()
            if node == dst:
                return True
            for nxt in self._out[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return False

    # -- queries ---------------------------------------------------------

    def query(self, a: str, b: str) -> str:
        """Relation of a to b: Before, After, Overlap or Unknown."""
        if a not in self._parent:
            raise UnknownEntityError(a)
        if b not in self._parent:
            raise UnknownEntityError(b)
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            return OVERLAP
        if self._reaches(ra, rb):
            return BEFORE
        if self._reaches(rb, ra):
            return AFTER
        return UNKNOWN

    # -- mutations ---------------------------------------------------------

    def add_before(self, a: str, b: str) -> bool:
        """Insert a-before-b; returns False (conflict) if it contradicts."""
        ra, rb = self._ensure(a), self._ensure(b)
        if ra == rb:
            return False  # same overlap class
        if self._reaches(rb, ra):
            return False  # b already (transitively) before a
        self._out[ra].add(rb)
        self._in[rb].add(ra)
        return True

    def add_overlap(self, a: str, b: str) -> bool:
        """Merge a and b into one overlap class; False on conflict."""
        ra, rb = self._ensure(a), self._ensure(b)
        if ra == rb:
            return True  # idempotent no-op
        if self._reaches(ra, rb) or self._reaches(rb, ra):
            return False  # a strict order already separates the classes
        # Union by size; re-target the loser's edges onto the winner. A
        # self-edge cannot arise: no path existed between the classes.
        if len(self._members[ra]) < len(self._members[rb]):
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._members[ra].update(self._members.pop(rb))
        for succ in self._out.pop(rb):
            self._in[succ].discard(rb)
            self._in[succ].add(ra)
            self._out[ra].add(succ)
        for pred in self._in.pop(rb):
            self._out[pred].discard(rb)
            self._out[pred].add(ra)
            self._in[ra].add(pred)
        return True

    # -- introspection / debugging ----------------------------------------

    def classes(self) -> list[frozenset[str]]:
        """Current overlap classes, ordered by smallest member."""
        return sorted(
            (frozenset(m) for m in self._members.values()), key=lambda c: min(c)
        )

    def class_edges(self) -> list[tuple[frozenset[str], frozenset[str]]]:
        """Before-edges between classes, as (earlier, later) member sets."""
        edges = []
        for src, succs in self._out.items():
            for dst in succs:
                edges.append(
                    (frozenset(self._members[src]), frozenset(self._members[dst]))
                )
        return sorted(edges, key=lambda e: (min(e[0]), min(e[1])))

    def to_text(self) -> str:
        """Edge-list dump: one line per class, one per before-edge."""
        lines = []
        for cls in self.classes():
            lines.append("class " + " ".join(sorted(cls)))
        for src, dst in self.class_edges():
            lines.append(f"before {min(src)} {min(dst)}")
        return "\n".join(lines) + ("\n" if lines else "")
