"""Input checks used by the estimator and the CLI."""
import numpy as np

from .mesh import Mesh
from .partition import AVERAGE_KINDS, Decomposition

COARSE_SPACES = ("corners", "corners+edges", "corners+faces", "corners+edges+faces")


def check_mesh(mesh):
    if not isinstance(mesh, Mesh):
        raise TypeError(f"expected a Mesh, got {type(mesh).__name__}")
    return mesh.validate()


def check_decomposition(decomposition, mesh):
    if not isinstance(decomposition, Decomposition):
        raise TypeError(f"expected a Decomposition, got {type(decomposition).__name__}")
    if decomposition.mesh is not mesh:
        raise ValueError("decomposition was built for a different mesh")
    return decomposition


def check_coarse(coarse):
    """Map a coarse-space name to the average selection understood by add_averages."""
    if coarse not in COARSE_SPACES:
        raise ValueError(f"coarse must be one of {', '.join(COARSE_SPACES)}; got {coarse!r}")
    which = coarse[len("corners+") :] if "+" in coarse else "none"
    assert which in AVERAGE_KINDS
    return which


def check_partition(partition):
    """Normalize a partition spec: an int (RCB count) or a 3-tuple (regular blocks)."""
    if isinstance(partition, (int, np.integer)):
        if partition < 1:
            raise ValueError("subdomain count must be positive")
        return int(partition)
    parts = tuple(int(p) for p in partition)
    if len(parts) != 3 or min(parts) < 1:
        raise ValueError(f"regular partition needs three positive counts, got {partition!r}")
    return parts


def check_load(f, n_dofs):
    f = np.asarray(f, dtype=float)
    if f.shape != (n_dofs,):
        raise ValueError(f"load vector must have shape ({n_dofs},), got {f.shape}")
    if not np.isfinite(f).all():
        raise ValueError("load vector contains non-finite values")
    return f
