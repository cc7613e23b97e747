"""Circular fingerprints, Tanimoto similarity, and Murcko scaffold keys."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from ._hashing import h64
from .errors import WidthMismatch
from .molgraph import Molecule

FP_WIDTH = 2048
FP_RADIUS = 2
FP_TAG = "circular-r2-2048"
SCAFFOLD_ALGO = "murcko-wl3"
WL_ROUNDS = 3

_BOND_CODE = {"single": 1, "double": 2, "triple": 3, "aromatic": 4}


@dataclass(frozen=True)
class Fingerprint:
    bits: int
    width: int = FP_WIDTH
    algorithm_tag: str = FP_TAG

    def popcount(self) -> int:
        return self.bits.bit_count()

    def on_bits(self) -> list[int]:
        return [i for i in range(self.width) if self.bits >> i & 1]


def fingerprint(molecule: Molecule, width: int = FP_WIDTH, radius: int = FP_RADIUS) -> Fingerprint:
    """ECFP-style hashed fingerprint.

    Radius 0 hashes each atom's invariant (element, charge, degree, H count,
    aromatic, ring). Each further round hashes an atom's previous identifier
    with the sorted ``(bond order, neighbor identifier)`` pairs. Every
    ``(radius, identifier)`` sets bit ``hash mod width``.
    """
    ids = [
        h64(a.atomic_number, a.formal_charge, molecule.degree(a.index), a.implicit_h, a.aromatic, a.in_ring)
        for a in molecule.atoms
    ]
    bits = 0
    for r in range(radius + 1):
        if r > 0:
            ids = [
                h64(r, ids[i], tuple(sorted((_BOND_CODE[o], ids[j]) for j, o in molecule.neighbors[i])))
                for i in range(len(ids))
            ]
        for ident in ids:
            bits |= 1 << (h64(r, ident) % width)
    return Fingerprint(bits, width)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """``|a & b| / |a | b|``; two empty fingerprints count as identical."""
    if a.width != b.width:
        raise WidthMismatch(f"fingerprint widths differ: {a.width} vs {b.width}")
    union = (a.bits | b.bits).bit_count()
    if union == 0:
        return 1.0
    return (a.bits & b.bits).bit_count() / union


@dataclass(frozen=True)
class ScaffoldKey:
    hash: int
    is_empty: bool


EMPTY_SCAFFOLD = ScaffoldKey(0, True)


def scaffold_atoms(molecule: Molecule, order: Iterable[int] | None = None) -> frozenset[int]:
    """Atoms left after repeatedly deleting non-ring atoms of degree <= 1.

    ``order`` only changes which removable atom is visited first; the
    fixpoint is the same for any order.
    """
    alive = set(range(len(molecule.atoms)))
    deg = [molecule.degree(i) for i in range(len(molecule.atoms))]
    ring = [a.in_ring for a in molecule.atoms]
    visit = list(order) if order is not None else list(range(len(deg)))
    queue = [i for i in visit if not ring[i] and deg[i] <= 1]
    while queue:
        i = queue.pop(0)
        if i not in alive:
            continue
        alive.discard(i)
        for j, _ in molecule.neighbors[i]:
            if j in alive:
                deg[j] -= 1
                if not ring[j] and deg[j] <= 1:
                    queue.append(j)
    return frozenset(alive)


def wl_hash(molecule: Molecule, atoms: frozenset[int], rounds: int = WL_ROUNDS) -> int:
    """Weisfeiler-Lehman hash of the subgraph induced by ``atoms``."""
    labels = {i: h64(molecule.atoms[i].atomic_number, molecule.atoms[i].aromatic, molecule.atoms[i].in_ring) for i in atoms}
    history = [tuple(sorted(labels.values()))]
    for r in range(rounds):
        labels = {
            i: h64(r, labels[i], tuple(sorted(labels[j] for j, _ in molecule.neighbors[i] if j in atoms)))
            for i in atoms
        }
        history.append(tuple(sorted(labels.values())))
    return h64(len(atoms), tuple(history))


def murcko_scaffold(molecule: Molecule) -> ScaffoldKey:
    if not any(a.in_ring for a in molecule.atoms):
        return EMPTY_SCAFFOLD
    key = wl_hash(molecule, scaffold_atoms(molecule))
    return ScaffoldKey(key or 1, False)
