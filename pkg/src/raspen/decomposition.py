"""Overlapping Schwarz decompositions of 1D and structured 2D cell meshes.

A layout splits the global cell set {0..M-1} into a nonoverlapping partition
(owned cells) plus overlapping supersets obtained by adding k layers of cells
toward the neighbours.  The index sets induce the restriction operator R_i
(select overlap cells), the prolongation P_i (zero extension from the overlap
set) and the restricted prolongation (extension writing owned cells only), so
that sum_i restricted_prolong(restrict(v)) == v holds exactly.

The coarse space has one degree of freedom per subdomain: R0 averages over the
owned cells, R0_sum adds them (the residual-space restriction), and P0
interpolates linearly (1D) or bilinearly (2D) through the owned-block centers.
Toward a boundary whose Dirichlet datum is zero, P0 pins the interpolant to 0
(corrections vanish there); toward a Neumann boundary or a boundary with
nonzero Dirichlet datum it extends the nearest nodal value constantly.  Early
iterates have not absorbed a nonzero datum yet, so their corrections carry the
full boundary mismatch; pinning 0 there would exclude that error from the
coarse space and noticeably slow both the two-level fixed point and Newton on
the two-level function.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Subdomain",
    "DecompositionLayout",
    "build_1d_layout",
    "build_2d_layout",
    "restrict",
    "prolong",
    "restricted_prolong",
    "coarse_restrict_mean",
    "coarse_restrict_sum",
    "coarse_prolong",
]


@dataclass(frozen=True, eq=False)
class Subdomain:
    """Index sets of one subdomain (sorted, 0-based global cell indices)."""

    owned: np.ndarray        # nonoverlapping partition member
    overlap: np.ndarray      # owned plus k layers into the neighbours
    owned_local: np.ndarray  # positions of the owned cells inside `overlap`


@dataclass(frozen=True, eq=False)
class DecompositionLayout:
    """Immutable decomposition of {0..n_cells-1} with coarse-space operators.

    coarse_cells[i] is the cell set aggregated into coarse DOF i (the owned
    set of subdomain i).  R0 / R0_sum / P0 are sparse operator matrices.
    """

    n_cells: int
    subdomains: tuple
    overlap_layers: int
    coarse_cells: tuple
    R0: sp.csr_matrix = field(repr=False)
    R0_sum: sp.csr_matrix = field(repr=False)
    P0: sp.csr_matrix = field(repr=False)

    @property
    def n_subdomains(self):
        return len(self.subdomains)

    @property
    def n_coarse(self):
        return len(self.coarse_cells)


def _partition_blocks(n, parts):
    """Split n items into `parts` contiguous blocks, remainders to the front."""
    base, extra = divmod(n, parts)
    sizes = np.full(parts, base, dtype=int)
    sizes[:extra] += 1
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    return starts, sizes


def _coarse_operators(coarse_cells, n_cells):
    rows, cols, mean_data, sum_data = [], [], [], []
    for i, cells in enumerate(coarse_cells):
        rows.extend([i] * len(cells))
        cols.extend(cells.tolist())
        mean_data.extend([1.0 / len(cells)] * len(cells))
        sum_data.extend([1.0] * len(cells))
    shape = (len(coarse_cells), n_cells)
    R0 = sp.csr_matrix((mean_data, (rows, cols)), shape=shape)
    R0_sum = sp.csr_matrix((sum_data, (rows, cols)), shape=shape)
    return R0, R0_sum


def _linear_weights(targets, nodes, left, right):
    """1D interpolation weight matrix through (nodes, values).

    left/right select the boundary rule on each side: "zero" interpolates to
    the value 0 at coordinate 0 resp. 1 (Dirichlet), "const" extends the
    nearest nodal value (Neumann).  Returns a (len(targets), len(nodes))
    CSR matrix W with (W @ values)[k] = interpolant(targets[k]).
    """
    n = len(nodes)
    rows, cols, data = [], [], []
    for k, x in enumerate(targets):
        if x <= nodes[0]:
            if left == "const" or nodes[0] == 0.0:
                rows.append(k), cols.append(0), data.append(1.0)
            else:
                rows.append(k), cols.append(0), data.append(x / nodes[0])
        elif x >= nodes[-1]:
            if right == "const" or nodes[-1] == 1.0:
                rows.append(k), cols.append(n - 1), data.append(1.0)
            else:
                w = (1.0 - x) / (1.0 - nodes[-1])
                rows.append(k), cols.append(n - 1), data.append(w)
        else:
            j = int(np.searchsorted(nodes, x, side="right")) - 1
            j = min(j, n - 2)
            t = (x - nodes[j]) / (nodes[j + 1] - nodes[j])
            rows.extend([k, k])
            cols.extend([j, j + 1])
            data.extend([1.0 - t, t])
    return sp.csr_matrix((data, (rows, cols)), shape=(len(targets), n))


def build_1d_layout(n_cells, n_subdomains, overlap_layers, dirichlet=(0.0, 1.0)):
    """Contiguous-block 1D layout with k overlap layers per side.

    Owned blocks are near-equal (remainder cells go to the leading
    subdomains); subdomain i overlaps k cells into neighbours i-1 and i+1,
    clipped at the domain ends.  Rejects overlaps that would extend past a
    neighbour's entire owned block (an overlap may reach a neighbour's far
    edge, but not into the subdomain beyond it).

    dirichlet holds the boundary data of the problem the layout will serve;
    each end of P0 is pinned to 0 when the datum there is zero and extends
    the nearest coarse value constantly otherwise (see module docstring).
    """
    M, I, k = int(n_cells), int(n_subdomains), int(overlap_layers)
    if not (M >= I >= 1):
        raise ValueError(f"need n_cells >= n_subdomains >= 1, got {M}, {I}")
    if k < 0:
        raise ValueError("overlap_layers must be nonnegative")
    starts, sizes = _partition_blocks(M, I)
    if I > 1 and k > sizes.min():
        raise ValueError(
            f"overlap of {k} layers extends past an entire owned block "
            f"(smallest block has {sizes.min()} cells)"
        )
    subdomains = []
    for i in range(I):
        owned = np.arange(starts[i], starts[i] + sizes[i])
        lo = max(starts[i] - k, 0)
        hi = min(starts[i] + sizes[i] + k, M)
        overlap = np.arange(lo, hi)
        owned_local = np.searchsorted(overlap, owned)
        subdomains.append(Subdomain(owned, overlap, owned_local))

    coarse_cells = tuple(s.owned for s in subdomains)
    R0, R0_sum = _coarse_operators(coarse_cells, M)
    centers = (np.arange(M) + 0.5) / M
    nodes = np.array([centers[c].mean() for c in coarse_cells])
    left, right = ("zero" if d == 0.0 else "const" for d in dirichlet)
    P0 = _linear_weights(centers, nodes, left=left, right=right)
    return DecompositionLayout(M, tuple(subdomains), k, coarse_cells, R0, R0_sum, P0)


def build_2d_layout(nx, ny, n_per_side, overlap_layers, dirichlet_value=1.0):
    """Tensor-product layout of an nx-by-ny cell grid into N x N subdomains.

    nx and ny must be divisible by n_per_side.  Cells are numbered row-major,
    cell (ix, iy) -> iy*nx + ix.  The overlap adds k grid layers in all four
    directions, clipped at the boundary.  The coarse space has one DOF per
    subdomain at its geometric center; P0 is bilinear on that lattice and
    extends constantly toward the three Neumann edges.  Toward the Dirichlet
    edge x=1 it is pinned to 0 when dirichlet_value is zero and extends
    constantly otherwise (see module docstring).
    """
    nx, ny, N, k = int(nx), int(ny), int(n_per_side), int(overlap_layers)
    if N < 1 or nx < 1 or ny < 1:
        raise ValueError("grid sizes and subdomain count must be positive")
    if nx % N or ny % N:
        raise ValueError(f"nx={nx}, ny={ny} must be divisible by n_per_side={N}")
    if k < 0:
        raise ValueError("overlap_layers must be nonnegative")
    sx, sy = nx // N, ny // N
    if N > 1 and k > min(sx, sy):
        raise ValueError(
            f"overlap of {k} layers extends past an entire owned block "
            f"({sx}x{sy} cells per subdomain)"
        )
    grid = np.arange(nx * ny).reshape(ny, nx)
    subdomains = []
    for cy in range(N):
        for cx in range(N):
            i0, i1 = cx * sx, (cx + 1) * sx
            j0, j1 = cy * sy, (cy + 1) * sy
            owned = grid[j0:j1, i0:i1].ravel()
            overlap = grid[
                max(j0 - k, 0) : min(j1 + k, ny),
                max(i0 - k, 0) : min(i1 + k, nx),
            ].ravel()
            owned_local = np.searchsorted(overlap, owned)
            subdomains.append(Subdomain(owned, overlap, owned_local))

    coarse_cells = tuple(s.owned for s in subdomains)
    R0, R0_sum = _coarse_operators(coarse_cells, nx * ny)
    # P0 = kron(Wy, Wx): coarse DOF (cx, cy) -> cy*N + cx matches the
    # subdomain enumeration above; x=1 is the Dirichlet edge.
    xc = (np.arange(nx) + 0.5) / nx
    yc = (np.arange(ny) + 0.5) / ny
    xn = (np.arange(N) + 0.5) / N
    right = "zero" if dirichlet_value == 0.0 else "const"
    Wx = _linear_weights(xc, xn, left="const", right=right)
    Wy = _linear_weights(yc, xn, left="const", right="const")
    P0 = sp.kron(Wy, Wx, format="csr")
    return DecompositionLayout(
        nx * ny, tuple(subdomains), k, coarse_cells, R0, R0_sum, P0
    )


def restrict(layout, i, v):
    """R_i v: select the overlap-cell entries of a global vector."""
    v = np.asarray(v)
    if v.shape != (layout.n_cells,):
        raise ValueError(f"expected global vector of length {layout.n_cells}")
    return v[layout.subdomains[i].overlap]


def prolong(layout, i, v_i):
    """P_i v_i: write the overlap cells, zero elsewhere."""
    sub = layout.subdomains[i]
    v_i = np.asarray(v_i)
    if v_i.shape != sub.overlap.shape:
        raise ValueError(f"expected local vector of length {len(sub.overlap)}")
    out = np.zeros(layout.n_cells)
    out[sub.overlap] = v_i
    return out


def restricted_prolong(layout, i, v_i):
    """Restricted prolongation: write only the owned cells, zero elsewhere."""
    sub = layout.subdomains[i]
    v_i = np.asarray(v_i)
    if v_i.shape != sub.overlap.shape:
        raise ValueError(f"expected local vector of length {len(sub.overlap)}")
    out = np.zeros(layout.n_cells)
    out[sub.owned] = v_i[sub.owned_local]
    return out


def coarse_restrict_mean(layout, v):
    """R0 v: per-coarse-cell mean of a global vector."""
    v = np.asarray(v)
    if v.shape != (layout.n_cells,):
        raise ValueError(f"expected global vector of length {layout.n_cells}")
    return layout.R0 @ v


def coarse_restrict_sum(layout, r):
    """R0_sum r: per-coarse-cell sum (residual-space restriction)."""
    r = np.asarray(r)
    if r.shape != (layout.n_cells,):
        raise ValueError(f"expected global vector of length {layout.n_cells}")
    return layout.R0_sum @ r


def coarse_prolong(layout, v0):
    """P0 v0: interpolate a coarse vector onto the fine cell centers."""
    v0 = np.asarray(v0)
    if v0.shape != (layout.n_coarse,):
        raise ValueError(f"expected coarse vector of length {layout.n_coarse}")
    return layout.P0 @ v0
