"""Random small-molecule graphs and their mini-InChI labels.

Labels look like InChI (header, Hill formula, ``/c`` connectivity) but use a
simple BFS numbering instead of real InChI canonicalisation.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass

from molvit.data.splitmix import SplitMix64

ELEMENTS = ("C", "N", "O", "S", "Cl")
ELEMENT_WEIGHTS = (0.6, 0.15, 0.15, 0.05, 0.05)
VALENCE = {"C": 4, "N": 3, "O": 2, "S": 2, "Cl": 1}
MAX_ATOMS = 13

_HEX_DIRS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))


@dataclass(frozen=True)
class MoleculeGraph:
    atoms: tuple[str, ...]
    bonds: tuple[tuple[int, int, int], ...]
    coords: tuple[tuple[float, float], ...]

    def __post_init__(self):
        n = len(self.atoms)
        if not 1 <= n <= MAX_ATOMS:
            raise ValueError(f"molecule must have 1..{MAX_ATOMS} atoms, got {n}")
        if len(self.coords) != n:
            raise ValueError("one coordinate pair per atom is required")
        seen = set()
        for i, j, order in self.bonds:
            if i == j:
                raise ValueError(f"self-bond on atom {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate bond {key}")
            if order not in (1, 2):
                raise ValueError(f"bond order must be 1 or 2, got {order}")
            seen.add(key)
        for a, load in enumerate(self.valence_used()):
            if load > VALENCE[self.atoms[a]]:
                raise ValueError(f"atom {a} ({self.atoms[a]}) exceeds its valence")
        if not self._connected():
            raise ValueError("molecule graph is not connected")

    def neighbors(self) -> list[list[int]]:
        nb = [[] for _ in self.atoms]
        for i, j, _ in self.bonds:
            nb[i].append(j)
            nb[j].append(i)
        return nb

    def valence_used(self) -> list[int]:
        used = [0] * len(self.atoms)
        for i, j, order in self.bonds:
            used[i] += order
            used[j] += order
        return used

    def hydrogens(self) -> list[int]:
        return [VALENCE[a] - u for a, u in zip(self.atoms, self.valence_used())]

    def _connected(self) -> bool:
        nb = self.neighbors()
        seen = {0}
        stack = [0]
        while stack:
            for v in nb[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(self.atoms)


def hill_formula(mol: MoleculeGraph) -> str:
    counts = Counter(mol.atoms)
    h = sum(mol.hydrogens())
    if h:
        counts["H"] = h

    def term(el):
        n = counts[el]
        return el if n == 1 else f"{el}{n}"

    if "C" in counts:
        rest = sorted(el for el in counts if el not in ("C", "H"))
        order = ["C"] + (["H"] if "H" in counts else []) + rest
    else:
        order = sorted(counts)
    return "".join(term(el) for el in order)


def canonical_numbering(mol: MoleculeGraph) -> list[int]:
    """1-based atom numbers from a BFS rooted at the (degree, symbol, index)-smallest atom."""
    nb = mol.neighbors()

    def key(a):
        return len(nb[a]), mol.atoms[a], a

    root = min(range(len(mol.atoms)), key=key)
    number = [0] * len(mol.atoms)
    number[root] = 1
    queue = deque([root])
    nxt = 2
    while queue:
        u = queue.popleft()
        for v in sorted(nb[u], key=key):
            if not number[v]:
                number[v] = nxt
                nxt += 1
                queue.append(v)
    return number


def connectivity(mol: MoleculeGraph) -> str:
    """InChI-style ``/c`` body: DFS in atom-number order, branches in parentheses,
    ring closures written as the partner's number."""
    if len(mol.atoms) == 1:
        return ""
    number = canonical_numbering(mol)
    nb = mol.neighbors()
    root = number.index(1)
    visited: set[int] = set()
    emitted: set[tuple[int, int]] = set()

    def walk(u: int, parent: int) -> str:
        visited.add(u)
        branches = []
        for v in sorted(nb[u], key=lambda a: number[a]):
            edge = (min(u, v), max(u, v))
            if v == parent or edge in emitted:
                continue
            emitted.add(edge)
            branches.append(str(number[v]) if v in visited else walk(v, u))
        text = str(number[u])
        if not branches:
            return text
        if len(branches) == 1:
            return f"{text}-{branches[0]}"
        return text + "".join(f"({b})" for b in branches[:-1]) + branches[-1]

    return walk(root, -1)


def label(mol: MoleculeGraph) -> str:
    conn = connectivity(mol)
    return f"InChI=1S/{hill_formula(mol)}" + (f"/c{conn}" if conn else "")


def _layout(n: int, tree: list[tuple[int, int]], rng: SplitMix64) -> tuple[tuple[float, float], ...]:
    children = [[] for _ in range(n)]
    for parent, child in tree:
        children[parent].append(child)
    site = {0: (0, 0)}
    taken = {(0, 0)}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for c in children[u]:
            q, r = site[u]
            free = [(q + dq, r + dr) for dq, dr in _HEX_DIRS if (q + dq, r + dr) not in taken]
            if free:
                spot = rng.choice(free)
            else:
                spot = _nearest_free(site[u], taken)
            site[c] = spot
            taken.add(spot)
            queue.append(c)
    pts = []
    for a in range(n):
        q, r = site[a]
        x = q + r / 2 + (rng.random() - 0.5) * 0.2
        y = r * math.sqrt(3) / 2 + (rng.random() - 0.5) * 0.2
        pts.append((x, y))
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    span = max(max(xs) - min(xs), max(ys) - min(ys), 1e-9)
    scale = min(0.8 / span, 0.25)
    cx, cy = (max(xs) + min(xs)) / 2, (max(ys) + min(ys)) / 2
    return tuple((0.5 + (x - cx) * scale, 0.5 + (y - cy) * scale) for x, y in pts)


def _nearest_free(start, taken):
    queue = deque([start])
    seen = {start}
    while queue:
        q, r = queue.popleft()
        for dq, dr in _HEX_DIRS:
            cell = (q + dq, r + dr)
            if cell not in taken:
                return cell
            if cell not in seen:
                seen.add(cell)
                queue.append(cell)
    raise RuntimeError("unreachable: the hex lattice is unbounded")


def gen_molecule(rng: SplitMix64, max_atoms: int = MAX_ATOMS, max_chords: int = 2) -> tuple[MoleculeGraph, str]:
    """Random connected tree plus up to ``max_chords`` ring-closing bonds."""
    if not 1 <= max_atoms <= MAX_ATOMS:
        raise ValueError(f"max_atoms must be within 1..{MAX_ATOMS}")
    target = 1 + rng.randrange(max_atoms)
    atoms = [rng.weighted(ELEMENTS, ELEMENT_WEIGHTS)]
    free = [VALENCE[atoms[0]]]
    bonds: list[tuple[int, int, int]] = []
    tree: list[tuple[int, int]] = []
    while len(atoms) < target:
        open_atoms = [a for a in range(len(atoms)) if free[a] >= 1]
        if not open_atoms:
            break
        parent = rng.choice(open_atoms)
        el = rng.weighted(ELEMENTS, ELEMENT_WEIGHTS)
        order = 2 if min(free[parent], VALENCE[el]) >= 2 and rng.random() < 0.2 else 1
        child = len(atoms)
        atoms.append(el)
        free.append(VALENCE[el] - order)
        free[parent] -= order
        bonds.append((parent, child, order))
        tree.append((parent, child))
    bonded = {(i, j) for i, j, _ in bonds}
    for _ in range(rng.randrange(max_chords + 1)):
        pairs = [
            (i, j)
            for i in range(len(atoms))
            for j in range(i + 1, len(atoms))
            if free[i] >= 1 and free[j] >= 1 and (i, j) not in bonded
        ]
        if not pairs:
            break
        i, j = rng.choice(pairs)
        bonds.append((i, j, 1))
        bonded.add((i, j))
        free[i] -= 1
        free[j] -= 1
    mol = MoleculeGraph(tuple(atoms), tuple(bonds), _layout(len(atoms), tree, rng))
    return mol, label(mol)
