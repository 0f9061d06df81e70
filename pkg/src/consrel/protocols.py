"""Communication-component algebra for consensus protocols.

A protocol's normal-case message exchange is modelled as an ordered list of
components.  Each component has a graph kind (one-to-many ``A``, many-to-one
``B``, many-to-many ``C``), a dependence offset ``r`` (nodes active in phase
``j`` must have been active in phase ``j - r``), and a minimum activated-node
threshold ``m`` (usually ``n - f`` or ``f + 1``).  Phase 0 is reserved for the
fault status of the nodes: the phase-0 activated set is the non-faulty set.

The dependence offsets of a valid structure always form a tree rooted at
phase 0; its root-to-leaf paths drive all first-order approximations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .errors import StructureError


class GraphKind(Enum):
    """Per-phase communication graph."""

    ONE_TO_MANY = "A"
    MANY_TO_ONE = "B"
    MANY_TO_MANY = "C"


@dataclass(frozen=True)
class Threshold:
    """Minimum activated-node count, possibly symbolic in (n, f)."""

    kind: str  # "n-f" | "f+1" | "explicit"
    value: int | None = None

    def __post_init__(self):
        if self.kind not in ("n-f", "f+1", "explicit"):
            raise StructureError("M_OUT_OF_RANGE", f"unknown threshold kind {self.kind!r}")
        if self.kind == "explicit":
            if self.value is None or int(self.value) < 1:
                raise StructureError("M_OUT_OF_RANGE", "explicit threshold must be a positive integer")
        elif self.value is not None:
            raise StructureError("M_OUT_OF_RANGE", f"threshold {self.kind!r} takes no value")

    def resolve(self, n: int, f: int) -> int:
        if self.kind == "n-f":
            return n - f
        if self.kind == "f+1":
            return f + 1
        return int(self.value)

    def spec(self) -> str | int:
        """JSON form: the symbolic name, or the bare integer for explicit."""
        return int(self.value) if self.kind == "explicit" else self.kind


N_MINUS_F = Threshold("n-f")
F_PLUS_ONE = Threshold("f+1")


def explicit(value: int) -> Threshold:
    return Threshold("explicit", value)


@dataclass(frozen=True)
class Component:
    """One phase: graph kind, dependence offset r >= 1, threshold m."""

    kind: GraphKind
    r: int
    m: Threshold

    def __post_init__(self):
        if self.r < 1:
            raise StructureError("R_OUT_OF_RANGE", f"dependence offset must be >= 1, got {self.r}")


@dataclass(frozen=True)
class ProtocolStructure:
    name: str
    components: tuple[Component, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    def __len__(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class ResolvedStructure:
    """A structure with thresholds made concrete for a given (n, f).

    ``m[j]``, ``kinds[j]`` and ``parents[j]`` are indexed by phase ``j`` in
    ``1..len(structure)``; index 0 is a placeholder for the fault phase
    (its implicit threshold is ``n - f``).
    """

    structure: ProtocolStructure
    n: int
    f: int
    m: tuple[int, ...]
    kinds: tuple[GraphKind | None, ...]
    parents: tuple[int, ...]

    @property
    def n_phases(self) -> int:
        return len(self.structure)

    def has_c_graph(self) -> bool:
        return GraphKind.MANY_TO_MANY in self.kinds[1:]


def validate_structure(g: ProtocolStructure, n: int, f: int) -> ResolvedStructure:
    """Resolve thresholds against a cluster of ``n`` backups tolerating ``f`` faults.

    Raises StructureError with code EMPTY_STRUCTURE, R_OUT_OF_RANGE or
    M_OUT_OF_RANGE.
    """
    if n < 1 or f < 0 or f >= n:
        raise StructureError("M_OUT_OF_RANGE", f"need n >= 1 and 0 <= f < n, got n={n}, f={f}")
    if not g.components:
        raise StructureError("EMPTY_STRUCTURE", f"protocol {g.name!r} has no components")
    m = [n - f]
    kinds: list[GraphKind | None] = [None]
    parents = [0]
    for j, comp in enumerate(g.components, start=1):
        if comp.r > j:
            raise StructureError(
                "R_OUT_OF_RANGE", f"phase {j} of {g.name!r} has r={comp.r} > {j}"
            )
        mj = comp.m.resolve(n, f)
        if not 1 <= mj <= n:
            raise StructureError(
                "M_OUT_OF_RANGE", f"phase {j} of {g.name!r} resolves to M={mj}, outside [1, {n}]"
            )
        m.append(mj)
        kinds.append(comp.kind)
        parents.append(j - comp.r)
    return ResolvedStructure(g, n, f, tuple(m), tuple(kinds), tuple(parents))


# Table of built-in structures: (category, [(kind, r, threshold), ...]).
_A, _B, _C = GraphKind.ONE_TO_MANY, GraphKind.MANY_TO_ONE, GraphKind.MANY_TO_MANY
_BUILTINS: dict[str, tuple[str, list[tuple[GraphKind, int, Threshold]]]] = {
    "raft": ("cft", [(_A, 1, N_MINUS_F), (_B, 1, N_MINUS_F)]),
    "paxos": (
        "cft",
        [(_A, 1, N_MINUS_F), (_B, 1, N_MINUS_F), (_A, 3, N_MINUS_F), (_B, 1, N_MINUS_F)],
    ),
    "pbft": (
        "bft",
        [(_A, 1, N_MINUS_F), (_C, 1, N_MINUS_F), (_C, 1, F_PLUS_ONE), (_B, 1, F_PLUS_ONE)],
    ),
    "hotstuff": (
        "bft",
        [
            (_A, 1, N_MINUS_F), (_B, 1, N_MINUS_F),
            (_A, 2, N_MINUS_F), (_B, 1, N_MINUS_F),
            (_A, 2, N_MINUS_F), (_B, 1, N_MINUS_F),
            (_A, 2, N_MINUS_F), (_B, 1, F_PLUS_ONE),
        ],
    ),
    # Hotstuff with threshold-signature carryover: every one-to-many phase
    # depends directly on phase 0 instead of the previous one-to-many phase.
    "hotstuff_variant": (
        "bft",
        [
            (_A, 1, N_MINUS_F), (_B, 1, N_MINUS_F),
            (_A, 3, N_MINUS_F), (_B, 1, N_MINUS_F),
            (_A, 5, N_MINUS_F), (_B, 1, N_MINUS_F),
            (_A, 7, N_MINUS_F), (_B, 1, F_PLUS_ONE),
        ],
    ),
}

BUILTIN_NAMES = tuple(_BUILTINS)


def builtin_protocol(name: str) -> ProtocolStructure:
    """Return a built-in structure: raft, paxos, pbft, hotstuff or hotstuff_variant."""
    try:
        _, comps = _BUILTINS[name]
    except KeyError:
        raise StructureError("UNKNOWN_PROTOCOL", f"no built-in protocol named {name!r}") from None
    return ProtocolStructure(name, tuple(Component(k, r, m) for k, r, m in comps))


def protocol_family(name: str) -> str:
    """'cft' or 'bft' for a built-in protocol name."""
    try:
        return _BUILTINS[name][0]
    except KeyError:
        raise StructureError("UNKNOWN_PROTOCOL", f"no built-in protocol named {name!r}") from None


def default_fault_threshold(family: str, n: int) -> int:
    """Customary tolerance: floor(n/2) for CFT, floor(n/3) for BFT."""
    if family not in ("cft", "bft"):
        raise StructureError("UNKNOWN_PROTOCOL", f"family must be 'cft' or 'bft', got {family!r}")
    return n // 2 if family == "cft" else n // 3


@dataclass(frozen=True)
class DependenceTree:
    """Phase-dependence tree: edges (j - r_j) -> j, rooted at phase 0."""

    children: dict[int, tuple[int, ...]]
    leaves: tuple[int, ...]
    paths: tuple[tuple[int, ...], ...]


def dependence_tree(g: ProtocolStructure) -> DependenceTree:
    """Build the dependence tree and its root-to-leaf paths (ascending leaf order)."""
    n_phases = len(g.components)
    children: dict[int, list[int]] = {j: [] for j in range(n_phases + 1)}
    for j, comp in enumerate(g.components, start=1):
        if comp.r > j:
            raise StructureError("R_OUT_OF_RANGE", f"phase {j} has r={comp.r} > {j}")
        children[j - comp.r].append(j)
    leaves = tuple(j for j in range(n_phases + 1) if not children[j])
    paths = []
    for leaf in leaves:
        path = [leaf]
        while path[-1] != 0:
            j = path[-1]
            path.append(j - g.components[j - 1].r)
        paths.append(tuple(reversed(path)))
    return DependenceTree(
        {j: tuple(c) for j, c in children.items()}, leaves, tuple(paths)
    )


def first_order_paths(g: ProtocolStructure, n: int, f: int) -> list[tuple[int, ...]]:
    """Root-to-leaf paths restricted to phases carrying the n - f threshold.

    Phases declared with the f + 1 threshold are omitted: violating an
    (f+1)-of-n quorum needs at least n - f simultaneous joint failures, which
    is beyond the first-order failure term.  The cut is by declared threshold,
    not its resolved value, so it is stable even where n - f and f + 1
    coincide numerically.  Explicit thresholds are kept when they are at least
    n - f.  Paths left with no communication phase are dropped; duplicate
    truncated paths are kept because each contributes its own failure term.
    """
    validate_structure(g, n, f)
    tree = dependence_tree(g)

    def keep(j: int) -> bool:
        if j == 0:
            return True
        m = g.components[j - 1].m
        if m.kind == "n-f":
            return True
        if m.kind == "f+1":
            return False
        return m.value >= n - f

    out = []
    for path in tree.paths:
        kept = tuple(j for j in path if keep(j))
        if len(kept) > 1:
            out.append(kept)
    return out


def emit_json(g: ProtocolStructure) -> str:
    """Byte-stable JSON description (fixed key order, no extra whitespace)."""
    doc = {
        "name": g.name,
        "components": [
            {"kind": c.kind.value, "r": c.r, "m": c.m.spec()} for c in g.components
        ],
    }
    return json.dumps(doc, separators=(",", ":"))


def parse_json(text: str) -> ProtocolStructure:
    """Parse a structure emitted by :func:`emit_json` (or written by hand)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StructureError("EMPTY_STRUCTURE", f"not valid JSON: {exc}") from None
    try:
        name = doc["name"]
        raw = doc["components"]
    except (TypeError, KeyError):
        raise StructureError("EMPTY_STRUCTURE", "expected object with 'name' and 'components'") from None
    comps = []
    for entry in raw:
        kind = GraphKind(entry["kind"])
        m = entry["m"]
        thr = explicit(m) if isinstance(m, int) else Threshold(m)
        comps.append(Component(kind, int(entry["r"]), thr))
    return ProtocolStructure(name, tuple(comps))
