"""Hexahedral meshes: the structured unit-cube benchmark and a plain-text file format.

File format (line oriented, ``#`` starts a comment)::

    MESH v1
    NODES k          followed by k lines  "x y z"
    ELEMENTS m       followed by m lines  of 8 zero-based node indices
    DIRICHLET d      followed by d lines  "node dir value"
    LOADS l          followed by l lines  "node dir force"
    MATERIAL         followed by 1 line   "E nu"

Every section appears exactly once; unknown section names are rejected.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import MeshParseError, ValidationError
from .hex8 import gauss_points, jacobians, shape_gradients

__all__ = [
    "Material",
    "Mesh",
    "DofMap",
    "STEEL",
    "generate_cube",
    "read_mesh",
    "write_mesh",
    "build_dof_map",
]


@dataclass(frozen=True)
class Material:
    """Isotropic linear elastic material."""

    youngs_modulus: float
    poissons_ratio: float

    def __post_init__(self):
        if not self.youngs_modulus > 0:
            raise ValidationError("material.youngs_modulus", f"must be > 0, got {self.youngs_modulus}")
        if not 0.0 <= self.poissons_ratio < 0.5:
            raise ValidationError("material.poissons_ratio", f"must lie in [0, 0.5), got {self.poissons_ratio}")

    @property
    def lame_lambda(self):
        E, nu = self.youngs_modulus, self.poissons_ratio
        return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))

    @property
    def lame_mu(self):
        return self.youngs_modulus / (2.0 * (1.0 + self.poissons_ratio))


STEEL = Material(2.1e11, 0.3)


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Trilinear hexahedral mesh with boundary conditions and a single material.

    ``dirichlet`` and ``loads`` map ``(node, direction)`` to a prescribed
    displacement (m) or a nodal force (N).
    """

    nodes: np.ndarray
    elements: np.ndarray
    dirichlet: dict
    loads: dict
    material: Material = STEEL

    def __post_init__(self):
        object.__setattr__(self, "nodes", _readonly(self.nodes, float).reshape(-1, 3))
        object.__setattr__(self, "elements", _readonly(self.elements, np.int64).reshape(-1, 8))
        object.__setattr__(self, "dirichlet", {(int(n), int(d)): float(v) for (n, d), v in self.dirichlet.items()})
        object.__setattr__(self, "loads", {(int(n), int(d)): float(v) for (n, d), v in self.loads.items()})

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_dofs(self):
        return 3 * len(self.nodes)

    def element_coords(self, elements=None):
        idx = self.elements if elements is None else self.elements[elements]
        return self.nodes[idx]

    def load_vector(self):
        f = np.zeros(self.n_dofs)
        for (n, d), v in self.loads.items():
            f[3 * n + d] += v
        return f

    def validate(self):
        """Check every structural invariant; raise ValidationError naming the first failure."""
        n = self.n_nodes
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= n):
            bad = int(np.flatnonzero((self.elements < 0) | (self.elements >= n)).min() // 8)
            raise ValidationError("element.node_index", f"element {bad} references a node outside [0, {n})")
        srt = np.sort(self.elements, axis=1)
        dup = np.flatnonzero((np.diff(srt, axis=1) == 0).any(axis=1))
        if dup.size:
            raise ValidationError("element.distinct_nodes", f"element {int(dup[0])} repeats a node")
        for name, table in (("dirichlet", self.dirichlet), ("loads", self.loads)):
            for node, d in table:
                if not (0 <= node < n and 0 <= d < 3):
                    raise ValidationError(f"{name}.index", f"invalid (node, direction) = ({node}, {d})")
        if not self.dirichlet:
            raise ValidationError("dirichlet.nonempty", "at least one Dirichlet condition is required")
        pts, _ = gauss_points(2)
        dN = shape_gradients(pts)
        for start in range(0, self.n_elements, 4096):
            J = jacobians(self.element_coords(slice(start, start + 4096)), dN)
            detJ = np.linalg.det(J)
            if (detJ <= 0).any():
                bad = start + int(np.flatnonzero((detJ <= 0).any(axis=1))[0])
                raise ValidationError("element.jacobian", f"element {bad} has a non-positive Jacobian")
        return self

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.elements, other.elements)
            and self.dirichlet == other.dirichlet
            and self.loads == other.loads
            and self.material == other.material
        )

    __hash__ = None


@dataclass(frozen=True)
class DofMap:
    """Global dof numbering ``dof = 3 * node + direction``."""

    n_nodes: int
    fixed: np.ndarray
    fixed_values: np.ndarray

    @property
    def n_dofs(self):
        return 3 * self.n_nodes

    @property
    def free(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)

    @staticmethod
    def dof(node, direction):
        return 3 * node + direction


def build_dof_map(mesh):
    keys = sorted(mesh.dirichlet)
    fixed = np.array([3 * n + d for n, d in keys], dtype=np.int64)
    values = np.array([mesh.dirichlet[k] for k in keys], dtype=float)
    return DofMap(mesh.n_nodes, fixed, values)


def generate_cube(n_elements_per_edge, material=STEEL, load_magnitude=1000.0):
    """Unit cube of n^3 trilinear hexahedra, clamped at x=0, loaded on the edge x=1, z=1.

    The total force acts in +z and is shared equally by the edge nodes.
    Nodes are numbered lexicographically with x fastest.
    """
    n = int(n_elements_per_edge)
    if n != n_elements_per_edge or n < 1:
        raise ValueError(f"n_elements_per_edge must be a positive integer, got {n_elements_per_edge!r}")
    m = n + 1
    t = np.linspace(0.0, 1.0, m)
    z, y, x = np.meshgrid(t, t, t, indexing="ij")
    nodes = np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    def nid(i, j, k):
        return i + m * j + m * m * k

    k, j, i = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    elements = np.column_stack(
        [
            nid(i, j, k),
            nid(i + 1, j, k),
            nid(i + 1, j + 1, k),
            nid(i, j + 1, k),
            nid(i, j, k + 1),
            nid(i + 1, j, k + 1),
            nid(i + 1, j + 1, k + 1),
            nid(i, j + 1, k + 1),
        ]
    )

    jj, kk = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    clamped = np.sort(nid(0, jj, kk).ravel())
    dirichlet = {(int(p), d): 0.0 for p in clamped for d in range(3)}
    edge = nid(n, np.arange(m), n)
    share = load_magnitude / len(edge)
    loads = {(int(p), 2): share for p in edge}
    return Mesh(nodes, elements, dirichlet, loads, material)


_SECTIONS = ("NODES", "ELEMENTS", "DIRICHLET", "LOADS", "MATERIAL")


def write_mesh(mesh, path):
    lines = ["MESH v1", f"NODES {mesh.n_nodes}"]
    lines += [" ".join(repr(float(c)) for c in xyz) for xyz in mesh.nodes]
    lines.append(f"ELEMENTS {mesh.n_elements}")
    lines += [" ".join(str(int(v)) for v in row) for row in mesh.elements]
    lines.append(f"DIRICHLET {len(mesh.dirichlet)}")
    lines += [f"{n} {d} {v!r}" for (n, d), v in sorted(mesh.dirichlet.items())]
    lines.append(f"LOADS {len(mesh.loads)}")
    lines += [f"{n} {d} {v!r}" for (n, d), v in sorted(mesh.loads.items())]
    lines.append("MATERIAL")
    lines.append(f"{mesh.material.youngs_modulus!r} {mesh.material.poissons_ratio!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _tokens(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def read_mesh(path):
    """Parse and validate a mesh file; see the module docstring for the format."""
    rows = list(_tokens(Path(path).read_text()))
    if not rows or rows[0][1] != ["MESH", "v1"]:
        raise MeshParseError("expected header 'MESH v1'", rows[0][0] if rows else 1)

    seen = {}
    pos = 1

    def take(count, width, conv, lineno_hdr):
        nonlocal pos
        out = []
        for _ in range(count):
            if pos >= len(rows):
                raise MeshParseError("unexpected end of file", lineno_hdr)
            lineno, toks = rows[pos]
            if len(toks) != width:
                raise MeshParseError(f"expected {width} values, got {len(toks)}", lineno)
            try:
                out.append([c(t) for c, t in zip(conv, toks)])
            except ValueError as exc:
                raise MeshParseError(str(exc), lineno) from None
            pos += 1
        return out

    while pos < len(rows):
        lineno, toks = rows[pos]
        name = toks[0]
        if name not in _SECTIONS:
            raise MeshParseError(f"unknown section {name!r}", lineno)
        if name in seen:
            raise MeshParseError(f"duplicate section {name}", lineno)
        pos += 1
        if name == "MATERIAL":
            if len(toks) != 1:
                raise MeshParseError("MATERIAL takes no count", lineno)
            seen[name] = take(1, 2, (float, float), lineno)[0]
            continue
        if len(toks) != 2:
            raise MeshParseError(f"section {name} needs a count", lineno)
        try:
            count = int(toks[1])
        except ValueError:
            raise MeshParseError(f"bad count {toks[1]!r}", lineno) from None
        if count < 0:
            raise MeshParseError("negative count", lineno)
        if name == "NODES":
            seen[name] = take(count, 3, (float,) * 3, lineno)
        elif name == "ELEMENTS":
            seen[name] = take(count, 8, (int,) * 8, lineno)
        else:
            seen[name] = take(count, 3, (int, int, float), lineno)

    missing = [s for s in _SECTIONS if s not in seen]
    if missing:
        raise MeshParseError(f"missing sections: {', '.join(missing)}", rows[-1][0])

    E, nu = seen["MATERIAL"]
    mesh = Mesh(
        nodes=np.array(seen["NODES"], dtype=float).reshape(-1, 3),
        elements=np.array(seen["ELEMENTS"], dtype=np.int64).reshape(-1, 8),
        dirichlet={(n, d): v for n, d, v in seen["DIRICHLET"]},
        loads={(n, d): v for n, d, v in seen["LOADS"]},
        material=Material(E, nu),
    )
    return mesh.validate()
