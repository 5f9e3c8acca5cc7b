"""Numbered generic train tracks carried as ribbon graphs.

A track is a trivalent ribbon graph.  Each switch lists its three
half-branches in counterclockwise order and designates one of them as the
large half-branch; the cusp of the switch sits between the two small ones.
Complementary regions are the boundary walks of the ribbon structure, so no
ambient surface is needed.

Half-branches are referenced as ``(branch_id, end)`` with ``end in {0, 1}``.
Matrices are always indexed by branch *number* (``1..p`` mapped to rows
``0..p-1``), which is what the numbering of a numbered track is for.
"""
from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

HalfBranch = tuple[int, int]

LEFT = "left"
RIGHT = "right"


class TrackError(ValueError):
    """Base class for train track failures."""


class MalformedTrack(TrackError):
    pass


class ForbiddenFace(TrackError):
    pass


class ExceptionalSurface(TrackError):
    pass


class TypeSumMismatch(TrackError):
    pass


class NotLargeBranch(TrackError):
    pass


class IncompleteChoices(TrackError):
    pass


class NoLargeBranches(TrackError):
    pass


@dataclass(frozen=True)
class Branch:
    id: int
    number: int
    ends: tuple[tuple[int, int], tuple[int, int]]  # (switch id, slot) per end
    orient: int | None = None  # +1: runs end0 -> end1


@dataclass(frozen=True)
class Switch:
    id: int
    slots: tuple[HalfBranch, HalfBranch, HalfBranch]  # counterclockwise
    large_slot: int

    @property
    def large(self) -> HalfBranch:
        return self.slots[self.large_slot]

    @property
    def small(self) -> tuple[HalfBranch, HalfBranch]:
        """The two small half-branches in counterclockwise order after the large one."""
        L = self.large_slot
        return self.slots[(L + 1) % 3], self.slots[(L + 2) % 3]


@dataclass(frozen=True)
class TopType:
    disc_degrees: tuple[int, ...]
    punctures: int

    def __str__(self) -> str:
        return "(" + ",".join(map(str, self.disc_degrees)) + f";{-self.punctures})"


@dataclass(frozen=True)
class SplitMove:
    branch: int  # branch id
    direction: str  # LEFT | RIGHT


@dataclass
class ValidationReport:
    faces: list[list[HalfBranch]]
    cusps: list[int]
    punctured: list[bool]
    euler_characteristic: int
    genus_from_euler: int
    passed: bool = True
    problems: list[str] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class TrainTrack:
    branches: tuple[Branch, ...]
    switches: tuple[Switch, ...]
    genus: int
    punctures: int
    punctured_faces: frozenset[HalfBranch] = frozenset()

    # ------------------------------------------------------------------ lookup
    @cached_property
    def _branch_by_id(self) -> dict[int, Branch]:
        return {b.id: b for b in self.branches}

    @cached_property
    def _switch_by_id(self) -> dict[int, Switch]:
        return {s.id: s for s in self.switches}

    def branch(self, bid: int) -> Branch:
        return self._branch_by_id[bid]

    def switch(self, sid: int) -> Switch:
        return self._switch_by_id[sid]

    @property
    def num_branches(self) -> int:
        return len(self.branches)

    @cached_property
    def numbers(self) -> dict[int, int]:
        """branch id -> row index (number - 1)."""
        return {b.id: b.number - 1 for b in self.branches}

    @cached_property
    def id_of_number(self) -> dict[int, int]:
        return {b.number: b.id for b in self.branches}

    def switch_of(self, h: HalfBranch) -> tuple[int, int]:
        return self.branch(h[0]).ends[h[1]]

    def is_large_half(self, h: HalfBranch) -> bool:
        sid, slot = self.switch_of(h)
        return self.switch(sid).large_slot == slot

    # ------------------------------------------------------- linear structure
    @cached_property
    def switch_matrix(self) -> np.ndarray:
        """Rows are switch conditions ``large - small - small = 0`` in number order."""
        A = np.zeros((len(self.switches), self.num_branches), dtype=np.int64)
        for r, s in enumerate(sorted(self.switches, key=lambda s: s.id)):
            A[r, self.numbers[s.large[0]]] += 1
            for h in s.small:
                A[r, self.numbers[h[0]]] -= 1
        return A

    # ------------------------------------------------------------ ribbon walk
    def _next_ccw(self, h: HalfBranch) -> HalfBranch:
        sid, slot = self.switch_of(h)
        return self.switch(sid).slots[(slot + 1) % 3]

    def face_walks(self) -> list[list[HalfBranch]]:
        """Orbits of ``h -> next_ccw(opposite(h))`` on half-branches.

        The corner crossed when stepping from ``opposite(h)`` to its
        counterclockwise successor belongs to the face.
        """
        seen: set[HalfBranch] = set()
        faces = []
        for b in sorted(self.branches, key=lambda b: b.id):
            for end in (0, 1):
                h0 = (b.id, end)
                if h0 in seen:
                    continue
                walk = []
                h = h0
                while h not in seen:
                    seen.add(h)
                    walk.append(h)
                    h = self._next_ccw((h[0], 1 - h[1]))
                faces.append(walk)
        return faces

    def _face_cusps(self, walk: list[HalfBranch]) -> int:
        c = 0
        for h in walk:
            arrive = (h[0], 1 - h[1])
            if not self.is_large_half(arrive) and not self.is_large_half(self._next_ccw(arrive)):
                c += 1
        return c

    # --------------------------------------------------------------- I/O form
    def to_dict(self) -> dict:
        return {
            "surface": {"genus": self.genus, "punctures": self.punctures},
            "switches": [
                {"id": s.id, "slots": [list(h) for h in s.slots], "large_slot": s.large_slot}
                for s in sorted(self.switches, key=lambda s: s.id)
            ],
            "branches": [
                {"id": b.id, "number": b.number, "ends": [list(e) for e in b.ends], "orient": b.orient}
                for b in sorted(self.branches, key=lambda b: b.id)
            ],
            "punctured_faces": sorted([list(h) for h in self.punctured_faces]),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def canonical_key(self) -> str:
        return canonical_form(self)

    def __eq__(self, other):
        if not isinstance(other, TrainTrack):
            return NotImplemented
        return self.canonical_key() == other.canonical_key()

    def __hash__(self):
        return hash(self.canonical_key())


# ---------------------------------------------------------------------- build
def from_dict(d: Mapping) -> TrainTrack:
    """Build a track from the file schema; branch ends are derived from the slots.

    If ``ends`` are given they must agree with the switch slots.
    """
    try:
        surf = d["surface"]
        raw_sw = d["switches"]
        raw_br = d["branches"]
    except KeyError as exc:
        raise MalformedTrack(f"missing field {exc}") from None
    switches = []
    attach: dict[HalfBranch, tuple[int, int]] = {}
    for s in raw_sw:
        slots = tuple((int(h[0]), int(h[1])) for h in s["slots"])
        if len(slots) != 3:
            raise MalformedTrack(f"switch {s['id']} is not trivalent")
        large = s.get("large_slot")
        if large not in (0, 1, 2):
            raise MalformedTrack(f"switch {s['id']} has no large half-branch")
        for k, h in enumerate(slots):
            if h in attach:
                raise MalformedTrack(f"half-branch {h} attached twice")
            attach[h] = (int(s["id"]), k)
        switches.append(Switch(int(s["id"]), slots, int(large)))
    branches = []
    for b in raw_br:
        bid = int(b["id"])
        ends = []
        for end in (0, 1):
            if (bid, end) not in attach:
                raise MalformedTrack(f"dangling end {end} of branch {bid}")
            ends.append(attach.pop((bid, end)))
        if b.get("ends") is not None:
            given = tuple(tuple(int(v) for v in e) for e in b["ends"])
            if given != tuple(ends):
                raise MalformedTrack(f"branch {bid} ends disagree with switch slots")
        orient = b.get("orient")
        branches.append(Branch(bid, int(b.get("number", bid)), tuple(ends), orient))
    if attach:
        raise MalformedTrack(f"slots reference unknown branches: {sorted(attach)}")
    nums = sorted(b.number for b in branches)
    if nums != list(range(1, len(branches) + 1)):
        raise MalformedTrack("branch numbers must be a permutation of 1..p")
    punct = frozenset((int(h[0]), int(h[1])) for h in d.get("punctured_faces", []))
    return TrainTrack(tuple(branches), tuple(switches), int(surf["genus"]), int(surf["punctures"]), punct)


def loads(text: str) -> TrainTrack:
    return from_dict(json.loads(text))


def load(path) -> TrainTrack:
    with open(path) as fh:
        return loads(fh.read())


def from_rotation(rot: Iterable[Iterable[HalfBranch]], genus: int, punctures: int = 0,
                  punctured_faces: Iterable[HalfBranch] = (), numbers: Mapping[int, int] | None = None) -> TrainTrack:
    """Convenience builder: ``rot[s]`` is ``(large, small, small)`` counterclockwise."""
    sw = [{"id": i, "slots": [list(h) for h in r], "large_slot": 0} for i, r in enumerate(rot)]
    ids = sorted({h[0] for r in rot for h in r})
    numbers = numbers or {bid: k + 1 for k, bid in enumerate(ids)}
    br = [{"id": bid, "number": numbers[bid]} for bid in ids]
    return from_dict({"surface": {"genus": genus, "punctures": punctures}, "switches": sw,
                      "branches": br, "punctured_faces": [list(h) for h in punctured_faces]})


def random_track(switches: int, genus: int, punctures: int, rng: random.Random) -> TrainTrack | None:
    """Random trivalent ribbon graph with large slot 0 at every switch.

    With punctures, the monogon faces are marked punctured; ``None`` is
    returned when their number differs from ``punctures``.  The result is not
    validated.
    """
    slots = [(s, k) for s in range(switches) for k in range(3)]
    rng.shuffle(slots)
    rot = [[None] * 3 for _ in range(switches)]
    for b in range(3 * switches // 2):
        (s0, k0), (s1, k1) = slots[2 * b], slots[2 * b + 1]
        rot[s0][k0] = (b, 0)
        rot[s1][k1] = (b, 1)
    t = from_rotation(rot, genus, punctures)
    if punctures:
        rep = inspect(t)
        monogons = [w[0] for w, c in zip(rep.faces, rep.cusps) if c == 1]
        if len(monogons) != punctures:
            return None
        t = from_rotation(rot, genus, punctures, punctured_faces=monogons)
    return t


# ----------------------------------------------------------------- validation
def _face_of(track: TrainTrack, faces: list[list[HalfBranch]]) -> dict[HalfBranch, int]:
    return {h: i for i, walk in enumerate(faces) for h in walk}


def _connected(track: TrainTrack) -> bool:
    adj: dict[int, set[int]] = {s.id: set() for s in track.switches}
    for b in track.branches:
        u, v = b.ends[0][0], b.ends[1][0]
        adj[u].add(v)
        adj[v].add(u)
    start = track.switches[0].id
    seen = {start}
    todo = [start]
    while todo:
        for v in adj[todo.pop()]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return len(seen) == len(adj)


def inspect(track: TrainTrack) -> ValidationReport:
    """Face walks, cusp counts and Euler bookkeeping; never raises on faces."""
    faces = track.face_walks()
    face_index = _face_of(track, faces)
    punctured = [False] * len(faces)
    for h in track.punctured_faces:
        punctured[face_index[h]] = True
    cusps = [track._face_cusps(w) for w in faces]
    V, E, F = len(track.switches), len(track.branches), len(faces)
    chi = V - E + F
    return ValidationReport(faces, cusps, punctured, chi, (2 - chi) // 2)


def validate(track: TrainTrack) -> ValidationReport:
    if not track.switches or not track.branches:
        raise MalformedTrack("empty track")
    for s in track.switches:
        for k, h in enumerate(s.slots):
            b = track._branch_by_id.get(h[0])
            if b is None or h[1] not in (0, 1) or b.ends[h[1]] != (s.id, k):
                raise MalformedTrack(f"slot {k} of switch {s.id} is dangling")
    if not _connected(track):
        raise MalformedTrack("track is disconnected")
    face_hs = {h for w in track.face_walks() for h in w}
    for h in track.punctured_faces:
        if h not in face_hs:
            raise MalformedTrack(f"punctured face reference {h} is not a half-branch")
    if 3 * track.genus - 3 + track.punctures < 2:
        raise ExceptionalSurface(f"3g-3+m = {3 * track.genus - 3 + track.punctures} < 2")
    rep = inspect(track)
    for walk, c, p in zip(rep.faces, rep.cusps, rep.punctured):
        if p and c == 0:
            raise ForbiddenFace(f"once-punctured disc without cusps at {walk[0]}")
        if not p and c <= 2:
            raise ForbiddenFace(f"disc with {c} cusps at {walk[0]}")
    if sum(rep.punctured) != track.punctures:
        rep.problems.append(
            f"{sum(rep.punctured)} punctured faces but surface declares {track.punctures}")
    for b in track.branches:
        if b.orient is not None and b.orient not in (1, -1):
            raise MalformedTrack(f"branch {b.id} has orientation flag {b.orient}")
    return rep


def topological_type(track: TrainTrack) -> TopType:
    rep = validate(track)
    degrees = []
    for c, p in zip(rep.cusps, rep.punctured):
        if p:
            if c != 1:
                raise TypeSumMismatch(f"punctured face with {c} cusps is not a monogon")
            continue
        degrees.append(c - 2)
    total = sum(degrees)
    expected = 4 * track.genus - 4 + track.punctures
    if total != expected or sum(rep.punctured) != track.punctures:
        raise TypeSumMismatch(f"sum m_i = {total} but 4g-4+m = {expected}")
    return TopType(tuple(sorted(degrees)), track.punctures)


def orientation(track: TrainTrack) -> dict[int, int] | None:
    """A consistent branch orientation (+1 = end0 -> end1) or ``None``.

    At every switch the large half-branch must point the opposite way to
    both small ones.  Each connected constraint component is 2-colored by
    breadth-first search; any parity clash means non-orientable.
    """
    # variable: direction d[b]; "inward at end e" == (d[b] == +1) if e == 1 else (d[b] == -1)
    # constraint at a switch: inward(large) != inward(small) for both small.
    def inward_sign(h: HalfBranch) -> int:
        return 1 if h[1] == 1 else -1  # inward iff d[b] == inward_sign

    edges: dict[int, list[tuple[int, int]]] = {b.id: [] for b in track.branches}
    for s in track.switches:
        L = s.large
        for h in s.small:
            # inward(L) != inward(h)  <=>  d[L]*sL == -(d[h]*sh)  <=>  d[h] = -d[L]*sL*sh
            rel = -inward_sign(L) * inward_sign(h)
            edges[L[0]].append((h[0], rel))
            edges[h[0]].append((L[0], rel))
    d: dict[int, int] = {}
    for start in sorted(edges):
        if start in d:
            continue
        d[start] = 1
        todo = deque([start])
        while todo:
            u = todo.popleft()
            for v, rel in edges[u]:
                want = d[u] * rel
                if v not in d:
                    d[v] = want
                    todo.append(v)
                elif d[v] != want:
                    return None
    return d


def is_orientable(track: TrainTrack) -> bool:
    validate(track)
    return orientation(track) is not None


def large_branches(track: TrainTrack) -> list[int]:
    out = []
    for b in track.branches:
        if all(track.switch(sid).large_slot == slot for sid, slot in b.ends):
            out.append(b.id)
    return sorted(out, key=lambda bid: track.branch(bid).number)


# --------------------------------------------------------------------- splits
def _rebuild(track: TrainTrack, new_switches: dict[int, Switch]) -> TrainTrack:
    switches = tuple(new_switches.get(s.id, s) for s in track.switches)
    attach = {h: (s.id, k) for s in switches for k, h in enumerate(s.slots)}
    branches = tuple(replace(b, ends=(attach[(b.id, 0)], attach[(b.id, 1)])) for b in track.branches)
    return TrainTrack(branches, switches, track.genus, track.punctures, track.punctured_faces)


def _split_once(track: TrainTrack, e: int, direction: str) -> tuple[TrainTrack, np.ndarray]:
    """Split at large branch ``e``.

    With ``e`` drawn left to right from its end-0 switch ``v`` to its end-1
    switch ``w``, the small half-branches are ``a`` (upper left), ``b`` (lower
    left) at ``v`` and ``c`` (upper right), ``d`` (lower right) at ``w``.  A
    left split keeps the diagonal from lower left to upper right, a right
    split the one from upper left to lower right; in both the diagonal
    inherits the number of ``e``.
    """
    br = track.branch(e)
    v, w = track.switch(br.ends[0][0]), track.switch(br.ends[1][0])
    a, b = v.small
    d, c = w.small
    e0, e1 = (e, 0), (e, 1)
    if direction == LEFT:
        sv = Switch(v.id, (b, d, e0), 0)
        sw = Switch(w.id, (c, a, e1), 0)
        extra = (a, d)
    elif direction == RIGHT:
        sv = Switch(v.id, (a, e0, c), 0)
        sw = Switch(w.id, (d, e1, b), 0)
        extra = (b, c)
    else:
        raise ValueError(f"unknown split direction {direction!r}")
    new = _rebuild(track, {v.id: sv, w.id: sw})
    p = track.num_branches
    E = np.eye(p, dtype=np.int64)
    row = track.numbers[e]
    for h in extra:
        E[row, track.numbers[h[0]]] += 1
    if track.punctured_faces:
        new = _transport_punctures(track, new)
    return new, E


def _transport_punctures(old: TrainTrack, new: TrainTrack) -> TrainTrack:
    # a split preserves the cusp count of every complementary region, and
    # unpunctured regions have at least three cusps, so the punctured
    # monogons are exactly the one-cusp faces of the new track
    n_old = sum(inspect(old).punctured)
    walks = [w for w in new.face_walks() if new._face_cusps(w) == 1]
    if len(walks) != n_old:
        raise TrackError(f"{len(walks)} monogons after the split, expected {n_old}")
    return replace(new, punctured_faces=frozenset(min(w) for w in walks))


def split(track: TrainTrack, move: SplitMove) -> tuple[TrainTrack, np.ndarray]:
    """Split ``track`` at a large branch.

    Returns the split track and the elementary carrying matrix ``E`` with
    ``mu_old = E @ mu_new`` in branch-number coordinates.
    """
    if move.branch not in large_branches(track):
        raise NotLargeBranch(f"branch {move.branch} is not large")
    return _split_once(track, move.branch, move.direction)


def full_numbered_split(track: TrainTrack, choices: Mapping[int, str]) -> tuple[TrainTrack, np.ndarray]:
    """Split at every large branch; composition in ascending branch number."""
    large = large_branches(track)
    if not large:
        raise NoLargeBranches("track has no large branch")
    if set(choices) != set(large):
        raise IncompleteChoices(f"choices {sorted(choices)} do not cover large branches {large}")
    M = np.eye(track.num_branches, dtype=np.int64)
    cur = track
    for e in large:  # already ascending by number
        cur, E = _split_once(cur, e, choices[e])
        M = M @ E
    return cur, M


def all_choices(track: TrainTrack) -> list[dict[int, str]]:
    """The ``2**k`` choice maps over the ``k`` large branches, in a fixed order."""
    large = large_branches(track)
    out = []
    for mask in range(2 ** len(large)):
        out.append({e: (RIGHT if (mask >> i) & 1 else LEFT) for i, e in enumerate(large)})
    return out


def choice_label(track: TrainTrack, choices: Mapping[int, str]) -> str:
    return "".join(("R" if choices[e] == RIGHT else "L") for e in large_branches(track))


# ------------------------------------------------------------------ relabels
def relabel_numbers(track: TrainTrack, perm: Mapping[int, int]) -> TrainTrack:
    """Renumber branches: branch with number ``n`` gets number ``perm[n]``."""
    branches = tuple(replace(b, number=perm[b.number]) for b in track.branches)
    return replace(track, branches=branches)


def canonical_form(track: TrainTrack) -> str:
    """Serialization invariant under orientation-preserving ribbon isomorphisms
    that respect branch numbers.

    Once the image of one half-branch is fixed the whole relabeling is forced,
    so it suffices to try both ends of the branch numbered 1.
    """
    best = None
    start_branch = track.id_of_number[1]
    for end0 in (0, 1):
        s = _canonical_from(track, (start_branch, end0))
        if best is None or s < best:
            best = s
    return best


def _canonical_from(track: TrainTrack, start: HalfBranch) -> str:
    sw_label: dict[int, int] = {}
    end_flip: dict[int, int] = {}  # branch id -> which original end becomes canonical end 0
    order = deque()

    def visit_half(h: HalfBranch):
        if h[0] not in end_flip:
            end_flip[h[0]] = h[1]
        sid = track.switch_of(h)[0]
        if sid not in sw_label:
            sw_label[sid] = len(sw_label)
            order.append(sid)

    visit_half(start)
    while order:
        sid = order.popleft()
        s = track.switch(sid)
        for k in range(3):
            h = s.slots[(s.large_slot + k) % 3]
            visit_half(h)
            visit_half((h[0], 1 - h[1]))
    rows = []
    for b in sorted(track.branches, key=lambda b: b.number):
        f = end_flip[b.id]
        cells = []
        for ce in (0, 1):
            sid, slot = b.ends[f ^ ce]
            s = track.switch(sid)
            cells.append(f"{sw_label[sid]}.{(slot - s.large_slot) % 3}")
        o = "" if b.orient is None else ("+" if (b.orient == 1) == (f == 0) else "-")
        rows.append(f"{b.number}:{cells[0]}-{cells[1]}{o}")
    punct = []
    if track.punctured_faces:
        rep = inspect(track)
        for walk, p in zip(rep.faces, rep.punctured):
            if p:
                punct.append(min((track.branch(h[0]).number, h[1] ^ end_flip[h[0]]) for h in walk))
    tail = f"|g{track.genus}m{track.punctures}|" + ",".join(f"{n}.{e}" for n, e in sorted(punct))
    return " ".join(rows) + tail


def unnumbered_form(track: TrainTrack) -> tuple[str, dict[int, int]]:
    """Canonical form ignoring numbers, plus the renumbering realizing it.

    Returns ``(key, perm)`` where ``perm`` maps old numbers to canonical numbers.
    """
    best = None
    for b in track.branches:
        for end in (0, 1):
            perm = _bfs_numbering(track, (b.id, end))
            t = relabel_numbers(track, perm)
            key = _canonical_from(t, (b.id, end))
            if best is None or key < best[0]:
                best = (key, perm)
    return best


def _bfs_numbering(track: TrainTrack, start: HalfBranch) -> dict[int, int]:
    seen_sw: set[int] = set()
    num: dict[int, int] = {}
    order = deque()

    def visit(h):
        if h[0] not in num:
            num[h[0]] = len(num) + 1
        sid = track.switch_of(h)[0]
        if sid not in seen_sw:
            seen_sw.add(sid)
            order.append(sid)

    visit(start)
    while order:
        s = track.switch(order.popleft())
        for k in range(3):
            h = s.slots[(s.large_slot + k) % 3]
            visit(h)
            visit((h[0], 1 - h[1]))
    return {track.branch(bid).number: n for bid, n in num.items()}
