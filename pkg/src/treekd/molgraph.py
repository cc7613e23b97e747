"""SMILES parsing into an attributed molecular graph.

Supported subset: organic-subset bare atoms (B C N O P S F Cl Br I and the
aromatic b c n o p s), bracket atoms with optional isotope, element, H count
and charge, the bonds ``- = # :``, branches, ring closures (single digit or
``%nn``) and ``.`` disconnection. Stereo markers (``/ \\ @ @@``) are accepted
and thrown away. Aromaticity is taken from lowercase symbols as written.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Literal

from .errors import (
    SmilesError,
    UnbalancedBranch,
    UnbalancedRing,
    UnknownAtomSymbol,
    ValenceOverflow,
)

BondOrder = Literal["single", "double", "triple", "aromatic"]

MAX_SMILES_LENGTH = 4096

ELEMENTS: tuple[str, ...] = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr",
    "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb",
    "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn",
)
ATOMIC_NUMBER: dict[str, int] = {sym: i + 1 for i, sym in enumerate(ELEMENTS)}

STANDARD_VALENCE: dict[str, tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

ORGANIC_SUBSET = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC_BARE = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
AROMATIC_BRACKET = {"se": "Se", "as": "As", **AROMATIC_BARE}
AROMATIC_ELEMENTS = frozenset({"B", "C", "N", "O", "P", "S", "As", "Se"})

BOND_SYMBOLS: dict[str, BondOrder] = {
    "-": "single",
    "=": "double",
    "#": "triple",
    ":": "aromatic",
    "/": "single",
    "\\": "single",
}
# aromatic bonds count 1 toward the integer sum; the aromatic atom then
# claims one extra valence unit if it still fits
BOND_VALENCE: dict[str, int] = {"single": 1, "double": 2, "triple": 3, "aromatic": 1}


@dataclass(frozen=True, slots=True)
class Atom:
    index: int
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    explicit_h: int | None = None
    implicit_h: int = 0
    in_ring: bool = False

    @property
    def atomic_number(self) -> int:
        return ATOMIC_NUMBER[self.element]

    @property
    def is_bracket(self) -> bool:
        return self.explicit_h is not None


@dataclass(frozen=True, slots=True)
class Bond:
    begin: int
    end: int
    order: BondOrder

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.begin, self.end)


@dataclass(frozen=True)
class Molecule:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    source_smiles: str = ""

    def __len__(self) -> int:
        return len(self.atoms)

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, BondOrder], ...], ...]:
        """Per atom, the ``(neighbor index, bond order)`` pairs in bond order."""
        adj: list[list[tuple[int, BondOrder]]] = [[] for _ in self.atoms]
        for b in self.bonds:
            adj[b.begin].append((b.end, b.order))
            adj[b.end].append((b.begin, b.order))
        return tuple(tuple(a) for a in adj)

    @cached_property
    def bond_lookup(self) -> dict[tuple[int, int], BondOrder]:
        out: dict[tuple[int, int], BondOrder] = {}
        for b in self.bonds:
            out[(b.begin, b.end)] = b.order
            out[(b.end, b.begin)] = b.order
        return out

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    def bond_order(self, i: int, j: int) -> BondOrder | None:
        return self.bond_lookup.get((i, j))


class _Cursor:
    __slots__ = ("text", "pos")

    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def peek(self, offset: int = 0) -> str:
        p = self.pos + offset
        return self.text[p] if p < len(self.text) else ""

    def take(self) -> str:
        ch = self.peek()
        self.pos += 1
        return ch

    def digits(self) -> str:
        start = self.pos
        while self.peek().isdigit():
            self.pos += 1
        return self.text[start:self.pos]

    def error(self, cls: type[SmilesError], msg: str) -> SmilesError:
        return cls(f"{msg} at position {self.pos} in {self.text!r}")


@dataclass
class _AtomSpec:
    element: str
    aromatic: bool
    charge: int = 0
    hcount: int | None = None


def _read_bracket(cur: _Cursor) -> _AtomSpec:
    cur.take()  # "["
    cur.digits()  # isotope, ignored
    ch, nxt = cur.peek(), cur.peek(1)
    two = ch + nxt
    if ch.isupper():
        if nxt.islower() and two in ATOMIC_NUMBER:
            element, aromatic = two, False
            cur.pos += 2
        elif ch in ATOMIC_NUMBER:
            element, aromatic = ch, False
            cur.pos += 1
        else:
            raise cur.error(UnknownAtomSymbol, f"unknown element {ch!r}")
    elif ch.islower():
        if two in AROMATIC_BRACKET:
            element, aromatic = AROMATIC_BRACKET[two], True
            cur.pos += 2
        elif ch in AROMATIC_BRACKET:
            element, aromatic = AROMATIC_BRACKET[ch], True
            cur.pos += 1
        else:
            raise cur.error(UnknownAtomSymbol, f"unknown aromatic symbol {ch!r}")
    else:
        raise cur.error(UnknownAtomSymbol, f"expected element symbol, got {ch!r}")

    if cur.peek() == "@":
        cur.take()
        if cur.peek() == "@":
            cur.take()
        elif cur.text.startswith(("TH", "AL", "SP", "TB", "OH"), cur.pos):
            cur.pos += 2
            cur.digits()

    hcount = 0
    if cur.peek() == "H":
        cur.take()
        d = cur.digits()
        hcount = int(d) if d else 1

    charge = 0
    sign = cur.peek()
    if sign in "+-":
        cur.take()
        unit = 1 if sign == "+" else -1
        d = cur.digits()
        if d:
            charge = unit * int(d)
        else:
            charge = unit
            while cur.peek() == sign:
                cur.take()
                charge += unit

    if cur.peek() == ":":  # atom class
        cur.take()
        if not cur.digits():
            raise cur.error(SmilesError, "atom class needs digits")

    if cur.take() != "]":
        raise cur.error(SmilesError, "unterminated bracket atom")
    return _AtomSpec(element, aromatic, charge, hcount)


def _read_bare(cur: _Cursor) -> _AtomSpec:
    ch = cur.peek()
    for sym in ORGANIC_SUBSET:
        if cur.text.startswith(sym, cur.pos):
            cur.pos += len(sym)
            return _AtomSpec(sym, False)
    if ch in AROMATIC_BARE:
        cur.pos += 1
        return _AtomSpec(AROMATIC_BARE[ch], True)
    if ch == "*":
        raise cur.error(UnknownAtomSymbol, "wildcard atoms are not supported")
    raise cur.error(UnknownAtomSymbol, f"unknown atom symbol {ch!r}")


def _default_order(a: _AtomSpec, b: _AtomSpec) -> BondOrder:
    return "aromatic" if a.aromatic and b.aromatic else "single"


def parse_smiles(text: str) -> Molecule:
    """Parse ``text`` into a ring-perceived :class:`Molecule`.

    Raises:
        UnbalancedRing: a ring-closure digit was never paired.
        UnbalancedBranch: mismatched parentheses.
        UnknownAtomSymbol: an atom symbol outside the supported subset.
        ValenceOverflow: explicit bonds exceed the element's maximum valence.
        SmilesError: any other syntax problem.
    """
    if not isinstance(text, str) or not text:
        raise SmilesError("SMILES must be a non-empty string")
    if len(text) > MAX_SMILES_LENGTH:
        raise SmilesError(f"SMILES longer than {MAX_SMILES_LENGTH} characters")

    cur = _Cursor(text)
    specs: list[_AtomSpec] = []
    bonds: dict[tuple[int, int], BondOrder] = {}
    stack: list[int | None] = []
    rings: dict[int, tuple[int, BondOrder | None]] = {}
    prev: int | None = None
    pending: BondOrder | None = None
    branch_open = False  # "(" seen and no atom yet inside it

    def add_bond(i: int, j: int, order: BondOrder) -> None:
        if i == j:
            raise cur.error(SmilesError, "ring closure onto the same atom")
        key = (min(i, j), max(i, j))
        if key in bonds:
            raise cur.error(SmilesError, f"duplicate bond between atoms {i} and {j}")
        bonds[key] = order

    while cur.pos < len(text):
        ch = cur.peek()
        if ch == "(":
            if prev is None:
                raise cur.error(UnbalancedBranch, "branch without a preceding atom")
            if pending is not None:
                raise cur.error(SmilesError, "bond symbol before '('")
            stack.append(prev)
            cur.take()
            branch_open = True
        elif ch == ")":
            if not stack:
                raise cur.error(UnbalancedBranch, "unmatched ')'")
            if pending is not None or branch_open:
                raise cur.error(SmilesError, "empty branch or dangling bond")
            prev = stack.pop()
            cur.take()
        elif ch in BOND_SYMBOLS:
            if pending is not None or prev is None:
                raise cur.error(SmilesError, f"unexpected bond symbol {ch!r}")
            pending = BOND_SYMBOLS[ch]
            cur.take()
        elif ch == "$":
            raise cur.error(SmilesError, "quadruple bonds are not supported")
        elif ch == ".":
            if pending is not None or prev is None or stack:
                raise cur.error(SmilesError, "misplaced '.'")
            prev = None
            cur.take()
        elif ch.isdigit() or ch == "%":
            if prev is None:
                raise cur.error(UnbalancedRing, "ring closure without a preceding atom")
            cur.take()
            if ch == "%":
                d = cur.take() + cur.take()
                if len(d) != 2 or not d.isdigit():
                    raise cur.error(SmilesError, "'%' must be followed by two digits")
                label = int(d)
            else:
                label = int(ch)
            if label in rings:
                other, order = rings.pop(label)
                if order is not None and pending is not None and order != pending:
                    raise cur.error(SmilesError, f"conflicting bond orders on ring {label}")
                order = pending or order or _default_order(specs[other], specs[prev])
                add_bond(other, prev, order)
            else:
                rings[label] = (prev, pending)
            pending = None
        else:
            spec = _read_bracket(cur) if ch == "[" else _read_bare(cur)
            idx = len(specs)
            specs.append(spec)
            if prev is not None:
                add_bond(prev, idx, pending or _default_order(specs[prev], spec))
            elif pending is not None:
                raise cur.error(SmilesError, "bond symbol with no left atom")
            pending = None
            prev = idx
            branch_open = False

    if rings:
        raise UnbalancedRing(f"unclosed ring bond(s) {sorted(rings)} in {text!r}")
    if stack:
        raise UnbalancedBranch(f"unclosed '(' in {text!r}")
    if pending is not None:
        raise SmilesError(f"dangling bond at end of {text!r}")
    if not specs:
        raise SmilesError(f"no atoms in {text!r}")

    for spec in specs:
        if spec.aromatic and spec.element not in AROMATIC_ELEMENTS:
            raise UnknownAtomSymbol(f"{spec.element} cannot be aromatic")

    bond_objs = tuple(Bond(i, j, o) for (i, j), o in bonds.items())
    bond_sum = [0] * len(specs)
    for b in bond_objs:
        bond_sum[b.begin] += BOND_VALENCE[b.order]
        bond_sum[b.end] += BOND_VALENCE[b.order]

    atoms = []
    for i, spec in enumerate(specs):
        implicit = _hydrogens(spec, bond_sum[i], text)
        atoms.append(
            Atom(
                index=i,
                element=spec.element,
                aromatic=spec.aromatic,
                formal_charge=spec.charge,
                explicit_h=spec.hcount,
                implicit_h=implicit,
            )
        )
    return perceive_rings(Molecule(tuple(atoms), bond_objs, text))


def max_valence(element: str, charge: int = 0) -> int | None:
    """Largest allowed bond-order sum for ``element``, or None if unchecked."""
    vals = STANDARD_VALENCE.get(element)
    if vals is None:
        return None
    return max(vals) + abs(charge)


def _hydrogens(spec: _AtomSpec, bonded: int, text: str) -> int:
    limit = max_valence(spec.element, spec.charge)
    if spec.hcount is not None:
        if limit is not None and bonded + spec.hcount > limit:
            raise ValenceOverflow(f"[{spec.element}] exceeds valence {limit} in {text!r}")
        return spec.hcount
    vals = STANDARD_VALENCE[spec.element]
    if bonded > max(vals):
        raise ValenceOverflow(
            f"{spec.element} has bond-order sum {bonded} > {max(vals)} in {text!r}"
        )
    if spec.aromatic:
        # only the lowest valence applies; the ring's pi bond takes one unit
        return max(vals[0] - bonded - 1, 0)
    for v in vals:
        if v >= bonded:
            return v - bonded
    return 0


def perceive_rings(molecule: Molecule) -> Molecule:
    """Return ``molecule`` with ``in_ring`` set for atoms lying on a cycle.

    An atom is on a cycle iff it touches a bond that is not a bridge; bridges
    come from an iterative Tarjan low-link pass.
    """
    n = len(molecule.atoms)
    adj = molecule.neighbors
    disc = [-1] * n
    low = [0] * n
    ring_atoms = [False] * n
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = timer
        timer += 1
        # (node, parent, neighbor iterator position)
        stack = [(root, -1, 0)]
        while stack:
            v, parent, k = stack[-1]
            if k < len(adj[v]):
                stack[-1] = (v, parent, k + 1)
                w = adj[v][k][0]
                if disc[w] == -1:
                    disc[w] = low[w] = timer
                    timer += 1
                    stack.append((w, v, 0))
                elif w != parent:
                    low[v] = min(low[v], disc[w])
            else:
                stack.pop()
                if parent >= 0:
                    low[parent] = min(low[parent], low[v])
                    if low[v] <= disc[parent]:  # edge parent-v is not a bridge
                        ring_atoms[v] = ring_atoms[parent] = True
    if all(a.in_ring == r for a, r in zip(molecule.atoms, ring_atoms)):
        return molecule
    atoms = tuple(replace(a, in_ring=r) for a, r in zip(molecule.atoms, ring_atoms))
    return Molecule(atoms, molecule.bonds, molecule.source_smiles)
