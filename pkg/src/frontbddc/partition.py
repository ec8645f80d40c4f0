"""Nonoverlapping decompositions, interface globs, and coarse-constraint plans.

Interface nodes are grouped by their sharing set (the subdomains that own
them) and split into connected components. Components shared by two
subdomains are faces, by three or more are edges. The initial corners are

* crosspoints: single-node components whose sharing set is not contained in
  the sharing set of any adjacent interface node;
* the ends of every edge that do not already touch a crosspoint;
* for a subdomain pair sharing fewer than three corners, the four extremal
  nodes of each face between them.

Plan dump format, one record per line::

    CORNER <node>
    GLOB <index> <face|edge> <s1,s2,...> <node> <node> ...
    AVERAGE <row> <glob> <direction> <coefficient> <node> <node> ...
"""
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from ._parallel import pmap
from .constrained_solver import factor
from .exceptions import SingularBlockError

__all__ = [
    "Decomposition",
    "InterfaceGlob",
    "AverageRow",
    "CoarsePlan",
    "PlanCheck",
    "divide_regular",
    "divide_rcb",
    "classify_interface",
    "initial_plan",
    "enrich_corners",
    "add_averages",
    "validate_plan",
    "dump_plan",
    "local_fixed_dofs",
]

AVERAGE_KINDS = {
    "": frozenset(),
    "none": frozenset(),
    "edges": frozenset({"edge"}),
    "faces": frozenset({"face"}),
    "edges+faces": frozenset({"edge", "face"}),
}


@dataclass(eq=False)
class Decomposition:
    mesh: object
    element_part: np.ndarray
    n_parts: int
    subdomain_elements: list = field(init=False)
    subdomain_nodes: list = field(init=False)
    # Boolean (n_nodes, n_parts) ownership matrix.
    membership: np.ndarray = field(init=False, repr=False)
    interface_nodes: np.ndarray = field(init=False)
    node_owner: np.ndarray = field(init=False)

    def __post_init__(self):
        mesh = self.mesh
        part = np.asarray(self.element_part, dtype=np.int64)
        self.element_part = part
        if len(part) != mesh.n_elements:
            raise ValueError("element_part must assign every element")
        if part.min(initial=0) < 0 or part.max(initial=-1) >= self.n_parts:
            raise ValueError("element_part entries must lie in [0, n_parts)")
        self.subdomain_elements = [np.flatnonzero(part == i) for i in range(self.n_parts)]
        if any(len(e) == 0 for e in self.subdomain_elements):
            raise ValueError("every subdomain needs at least one element")
        member = np.zeros((mesh.n_nodes, self.n_parts), dtype=bool)
        member[mesh.elements.ravel(), np.repeat(part, 8)] = True
        self.membership = member
        self.subdomain_nodes = [np.flatnonzero(member[:, i]) for i in range(self.n_parts)]
        self.interface_nodes = np.flatnonzero(member.sum(axis=1) >= 2)
        self.node_owner = np.argmax(member, axis=1)

    def sharing_set(self, node):
        return tuple(int(s) for s in np.flatnonzero(self.membership[node]))

    def global_to_local(self, i):
        g2l = np.full(self.mesh.n_nodes, -1, dtype=np.int64)
        g2l[self.subdomain_nodes[i]] = np.arange(len(self.subdomain_nodes[i]))
        return g2l

    def node_adjacency(self, nodes=None):
        """Symmetric node graph, nodes adjacent when they share an element.

        With ``nodes`` given the graph is restricted to (and indexed by) them.
        """
        conn = self.mesh.elements
        iu, ju = np.triu_indices(8, k=1)
        a, b = conn[:, iu].ravel(), conn[:, ju].ravel()
        n = self.mesh.n_nodes
        if nodes is not None:
            pos = np.full(n, -1, dtype=np.int64)
            pos[nodes] = np.arange(len(nodes))
            a, b = pos[a], pos[b]
            keep = (a >= 0) & (b >= 0)
            a, b = a[keep], b[keep]
            n = len(nodes)
        G = sp.coo_matrix((np.ones(len(a), dtype=np.int8), (a, b)), shape=(n, n)).tocsr()
        G = ((G + G.T) > 0).astype(np.int8)
        return G


def _element_centroids(mesh):
    return mesh.nodes[mesh.elements].mean(axis=1)


def divide_regular(mesh, parts_per_axis):
    """Axis-aligned block division of a structured box mesh, numbered x fastest."""
    px, py, pz = (int(p) for p in parts_per_axis)
    if min(px, py, pz) < 1:
        raise ValueError("parts per axis must be positive")
    c = _element_centroids(mesh)
    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    block = np.empty_like(c, dtype=np.int64)
    for ax, p in enumerate((px, py, pz)):
        layers = np.unique(np.round((c[:, ax] - lo[ax]) / (hi[ax] - lo[ax]), 10))
        if len(layers) % p:
            raise ValueError(f"{len(layers)} element layers along axis {ax} are not divisible by {p}")
        idx = np.searchsorted(layers, np.round((c[:, ax] - lo[ax]) / (hi[ax] - lo[ax]), 10))
        block[:, ax] = idx // (len(layers) // p)
    part = block[:, 0] + px * (block[:, 1] + py * block[:, 2])
    return Decomposition(mesh, part, px * py * pz)


def divide_rcb(mesh, n_parts):
    """Recursive coordinate bisection of element centroids into ``n_parts`` subdomains.

    Each bisection cuts along the axis of largest centroid extent and splits
    the element count in proportion to the subdomains on either side.
    """
    n_parts = int(n_parts)
    if n_parts < 1:
        raise ValueError("n_parts must be >= 1")
    if n_parts > mesh.n_elements:
        raise ValueError(f"cannot make {n_parts} subdomains out of {mesh.n_elements} elements")
    c = _element_centroids(mesh)
    part = np.empty(mesh.n_elements, dtype=np.int64)

    def bisect(elems, k, first):
        if k == 1:
            part[elems] = first
            return
        pts = c[elems]
        ext = pts.max(axis=0) - pts.min(axis=0)
        ax = int(np.argmax(np.round(ext, 12)))
        order = elems[np.lexsort((elems, pts[:, ax]))]
        k1 = k // 2
        cut = int(round(len(elems) * k1 / k))
        bisect(order[:cut], k1, first)
        bisect(order[cut:], k - k1, first + k1)

    bisect(np.arange(mesh.n_elements), n_parts, 0)
    return Decomposition(mesh, part, n_parts)


@dataclass(frozen=True)
class InterfaceGlob:
    kind: str
    sharing: tuple
    nodes: tuple

    def without(self, removed):
        return replace(self, nodes=tuple(n for n in self.nodes if n not in removed))


def _farthest(G, source, members):
    dist = csgraph.shortest_path(G, unweighted=True, indices=source)
    dist = np.where(np.isinf(dist), -1, dist)
    best = dist[members].max()
    return int(members[np.flatnonzero(dist[members] == best)[0]])


def _extremal_nodes(nodes, coords):
    """Up to four nodes extremal along the two widest coordinate directions."""
    ext = np.round(coords.max(axis=0) - coords.min(axis=0), 12)
    a1, a2 = np.argsort(-ext, kind="stable")[:2]
    mid = (coords.max(axis=0) + coords.min(axis=0)) / 2
    span = np.where(ext > 0, ext, 1.0)
    u = (coords[:, a1] - mid[a1]) / span[a1]
    v = (coords[:, a2] - mid[a2]) / span[a2]
    chosen = []
    for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        score = np.round(su * u + sv * v, 12)
        k = int(np.flatnonzero(score == score.max())[0])
        if nodes[k] not in chosen:
            chosen.append(nodes[k])
    return chosen


def classify_interface(decomposition):
    """Split interface nodes into globs and pick the initial corners.

    Returns ``(globs, corners)``: globs are sorted, exclude the corners, and
    are never empty; corners is a sorted node array.
    """
    dec = decomposition
    iface = dec.interface_nodes
    if len(iface) == 0:
        return [], np.zeros(0, dtype=np.int64)
    M = dec.membership[iface]
    _, key = np.unique(M, axis=0, return_inverse=True)
    key = key.ravel()
    G = dec.node_adjacency(iface).tocoo()
    same = key[G.row] == key[G.col]
    Gs = sp.csr_matrix((np.ones(same.sum(), dtype=np.int8), (G.row[same], G.col[same])), shape=G.shape)
    n_comp, comp = csgraph.connected_components(Gs, directed=False)
    comp_size = np.bincount(comp, minlength=n_comp)

    # a node is contained in a neighbor when its sharing set is a subset of the neighbor's
    contained = np.zeros(len(iface), dtype=bool)
    sub = ~(M[G.row] & ~M[G.col]).any(axis=1)
    contained[G.row[sub]] = True
    cross = (comp_size[comp] == 1) & ~contained

    corners = set(int(n) for n in iface[cross])
    Gcsr = G.tocsr()

    groups = {}
    for local in np.flatnonzero(~cross):
        groups.setdefault(int(comp[local]), []).append(int(local))

    raw = []
    for members in groups.values():
        members = np.array(sorted(members))
        sharing = tuple(int(s) for s in np.flatnonzero(M[members[0]]))
        kind = "face" if len(sharing) == 2 else "edge"
        raw.append((kind, sharing, members))

    cross_local = np.zeros(len(iface), dtype=bool)
    cross_local[cross] = True
    for kind, sharing, members in raw:
        if kind != "edge":
            continue
        sub_g = Gs[members][:, members]
        a = _farthest(sub_g, 0, np.arange(len(members)))
        b = _farthest(sub_g, a, np.arange(len(members)))
        for end in {a, b}:
            loc = members[end]
            neigh = Gcsr.indices[Gcsr.indptr[loc] : Gcsr.indptr[loc + 1]]
            if not cross_local[neigh].any():
                corners.add(int(iface[loc]))

    # pairs connected through faces only need their own corners
    raw.sort(key=lambda g: (g[0], g[1], int(iface[g[2][0]])))
    for kind, sharing, members in raw:
        if kind != "face":
            continue
        a, b = sharing
        shared = [c for c in corners if dec.membership[c, a] and dec.membership[c, b]]
        if len(shared) >= 3:
            continue
        nodes = iface[members]
        for n in _extremal_nodes(list(int(x) for x in nodes), dec.mesh.nodes[nodes]):
            corners.add(n)

    globs = []
    for kind, sharing, members in raw:
        nodes = tuple(int(n) for n in iface[members] if int(n) not in corners)
        if nodes:
            globs.append(InterfaceGlob(kind, sharing, nodes))
    globs.sort(key=lambda g: (0 if g.kind == "edge" else 1, g.sharing, g.nodes[0]))
    return globs, np.array(sorted(corners), dtype=np.int64)


@dataclass(frozen=True)
class AverageRow:
    glob: int
    direction: int
    nodes: tuple
    coefficient: float


@dataclass(frozen=True, eq=False)
class CoarsePlan:
    """Coarse degrees of freedom: corner nodes plus averages over selected glob kinds."""

    decomposition: Decomposition
    corners: np.ndarray
    globs: tuple
    averaged: frozenset = frozenset()

    @property
    def n_edges(self):
        return sum(g.kind == "edge" for g in self.globs)

    @property
    def n_faces(self):
        return sum(g.kind == "face" for g in self.globs)

    @property
    def average_rows(self):
        """One row per averaged glob and direction, skipping directions that are fully Dirichlet."""
        dirichlet = self.decomposition.mesh.dirichlet
        rows = []
        for gi, g in enumerate(self.globs):
            if g.kind not in self.averaged:
                continue
            for d in range(3):
                active = tuple(n for n in g.nodes if (n, d) not in dirichlet)
                if active:
                    rows.append(AverageRow(gi, d, active, 1.0 / len(active)))
        return rows

    @property
    def coarse_dimension(self):
        return 3 * len(self.corners) + len(self.average_rows)

    def subdomain_coarse_counts(self):
        """Number of coarse dofs n_ci touching each subdomain."""
        dec = self.decomposition
        counts = 3 * dec.membership[self.corners].sum(axis=0).astype(int)
        for row in self.average_rows:
            for s in self.globs[row.glob].sharing:
                counts[s] += 1
        return counts

    def equals(self, other):
        return (
            np.array_equal(self.corners, other.corners)
            and self.globs == other.globs
            and self.averaged == other.averaged
        )


def initial_plan(decomposition):
    globs, corners = classify_interface(decomposition)
    return CoarsePlan(decomposition, corners, tuple(globs))


def _with_corners(plan, corners):
    corners = np.array(sorted(set(int(c) for c in corners)), dtype=np.int64)
    cset = set(corners.tolist())
    globs = tuple(g2 for g2 in (g.without(cset) for g in plan.globs) if g2.nodes)
    return replace(plan, corners=corners, globs=globs)


def enrich_corners(plan, decomposition, extra, seed):
    """Promote ``extra`` randomly chosen non-corner interface nodes to corners."""
    extra = int(extra)
    eligible = np.setdiff1d(decomposition.interface_nodes, plan.corners)
    if extra < 0 or extra > len(eligible):
        raise ValueError(f"extra={extra} outside [0, {len(eligible)}]")
    if extra == 0:
        return plan
    rng = np.random.default_rng(seed)
    picked = rng.permutation(eligible)[:extra]
    return _with_corners(plan, np.concatenate([plan.corners, picked]))


def add_averages(plan, which):
    """Request arithmetic averages over ``edges``, ``faces`` or ``edges+faces``."""
    if isinstance(which, str):
        if which not in AVERAGE_KINDS:
            raise ValueError(f"unknown average selection {which!r}")
        kinds = AVERAGE_KINDS[which]
    else:
        kinds = frozenset(which)
    return replace(plan, averaged=plan.averaged | kinds)


def local_fixed_dofs(decomposition, i, nodes, include_dirichlet=True):
    """Sorted local dofs of subdomain ``i`` for all directions of ``nodes`` plus its Dirichlet dofs."""
    g2l = decomposition.global_to_local(i)
    loc = g2l[np.asarray(nodes, dtype=np.int64)]
    loc = loc[loc >= 0]
    dofs = (3 * loc[:, None] + np.arange(3)).ravel()
    if include_dirichlet:
        dofs = np.union1d(dofs, local_dirichlet(decomposition, i)[0])
    return np.unique(dofs)


def local_dirichlet(decomposition, i):
    """Local Dirichlet dofs of subdomain ``i`` and their prescribed values."""
    g2l = decomposition.global_to_local(i)
    items = sorted((3 * g2l[n] + d, v) for (n, d), v in decomposition.mesh.dirichlet.items() if g2l[n] >= 0)
    dofs = np.array([k for k, _ in items], dtype=np.int64)
    vals = np.array([v for _, v in items], dtype=float)
    return dofs, vals


@dataclass(frozen=True)
class PlanCheck:
    subdomain: int
    ok: bool
    message: str = ""


def validate_plan(plan, stiffnesses, n_jobs=None):
    """Try to factor each K_ff (corners and Dirichlet dofs fixed); report, never raise."""
    dec = plan.decomposition

    def check(st):
        fixed = local_fixed_dofs(dec, st.index, plan.corners)
        try:
            factor(st.K, fixed)
        except SingularBlockError as exc:
            return PlanCheck(st.index, False, str(exc))
        return PlanCheck(st.index, True)

    return pmap(check, stiffnesses, n_jobs)


def dump_plan(plan):
    lines = [f"CORNER {c}" for c in plan.corners]
    for gi, g in enumerate(plan.globs):
        lines.append(f"GLOB {gi} {g.kind} {','.join(map(str, g.sharing))} {' '.join(map(str, g.nodes))}")
    for ri, row in enumerate(plan.average_rows):
        lines.append(
            f"AVERAGE {ri} {row.glob} {row.direction} {row.coefficient!r} {' '.join(map(str, row.nodes))}"
        )
    return "\n".join(lines) + "\n"
