"""Finite probability measures on R^n: weighted atoms or cell masses on a
rectangular grid."""

import hashlib

import numpy as np

from .exceptions import BadDimension, IncompatibleGrid, OutOfBox

MASS_TOL = 1e-12


def _frozen(arr, dtype=float):
    arr = np.array(arr, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


class GridSpec:
    """Tensor grid given by strictly increasing cell edges along each axis."""

    def __init__(self, edges):
        edges = tuple(_frozen(np.ravel(e)) for e in edges)
        if not edges:
            raise BadDimension("a grid needs at least one axis")
        for e in edges:
            if e.size < 2 or np.any(np.diff(e) <= 0) or not np.all(np.isfinite(e)):
                raise IncompatibleGrid("grid edges must be finite and strictly increasing")
        self.edges = edges

    @classmethod
    def uniform(cls, lows, highs, cells):
        lows, highs = np.atleast_1d(lows), np.atleast_1d(highs)
        cells = np.broadcast_to(np.atleast_1d(cells), lows.shape)
        return cls([np.linspace(lo, hi, int(c) + 1) for lo, hi, c in zip(lows, highs, cells)])

    @property
    def dim(self):
        return len(self.edges)

    @property
    def shape(self):
        return tuple(e.size - 1 for e in self.edges)

    @property
    def size(self):
        return int(np.prod(self.shape))

    def axis_centers(self):
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges]

    def axis_widths(self):
        return [np.diff(e) for e in self.edges]

    def volumes(self):
        vol = np.ones(())
        for w in self.axis_widths():
            vol = np.multiply.outer(vol, w)
        return vol

    def cell_centers(self):
        """All cell centers, shape (size, dim), C order."""
        mesh = np.meshgrid(*self.axis_centers(), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def marginal(self, k):
        if not 1 <= k <= self.dim:
            raise BadDimension(f"cannot keep {k} of {self.dim} axes")
        return GridSpec(self.edges[:k])

    def snap(self, points, masses):
        """Assign each atom to the cell with the nearest center, axis by axis.

        Returns the array of cell masses. Raises ``OutOfBox`` for atoms
        outside the grid's bounding box.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        masses = np.asarray(masses, dtype=float)
        if points.shape[1] != self.dim:
            raise IncompatibleGrid(f"points have dimension {points.shape[1]}, grid {self.dim}")
        index = []
        for axis, (e, c) in enumerate(zip(self.edges, self.axis_centers())):
            x = points[:, axis]
            slack = 1e-9 * (e[-1] - e[0])
            outside = (x < e[0] - slack) | (x > e[-1] + slack)
            if np.any(outside & (masses > 0)):
                raise OutOfBox(f"mass outside the grid along axis {axis}")
            mids = 0.5 * (c[1:] + c[:-1])
            index.append(np.clip(np.searchsorted(mids, x), 0, c.size - 1))
        out = np.zeros(self.shape)
        np.add.at(out, tuple(index), masses)
        return out

    def same_as(self, other):
        return self.dim == other.dim and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.edges, other.edges)
        )

    def to_dict(self):
        return {"edges": [e.tolist() for e in self.edges]}

    def __repr__(self):
        return f"GridSpec(shape={self.shape})"


class DiscreteMeasure:
    """Probability measure with finitely many atoms or grid cells.

    Use :meth:`from_atoms` or :meth:`from_grid`; instances are immutable.
    Masses must be nonnegative and sum to one within ``1e-12``.
    """

    def __init__(self, form, points=None, masses=None, grid=None):
        if form not in ("atoms", "grid"):
            raise ValueError(f"unknown measure form {form!r}")
        masses = np.asarray(masses, dtype=float)
        if np.any(~np.isfinite(masses)) or np.any(masses < 0):
            raise ValueError("masses must be finite and nonnegative")
        if abs(masses.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"total mass {masses.sum()!r} is not 1")
        self.form = form
        if form == "atoms":
            points = np.asarray(points, dtype=float)
            if points.ndim == 1:
                points = points[:, None]
            if points.ndim != 2 or points.shape[0] != masses.shape[0] or masses.ndim != 1:
                raise ValueError("points must be (k, d) with one mass per point")
            if points.shape[1] < 1:
                raise BadDimension("points need at least one coordinate")
            self.points = _frozen(points)
            self.grid = None
        else:
            if not isinstance(grid, GridSpec):
                raise TypeError("grid form needs a GridSpec")
            if masses.shape != grid.shape:
                raise IncompatibleGrid(f"mass array {masses.shape} vs grid {grid.shape}")
            self.points = None
            self.grid = grid
        self.masses = _frozen(masses)

    @classmethod
    def from_atoms(cls, points, masses=None, normalize=False):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if masses is None:
            masses = np.full(points.shape[0], 1.0 / points.shape[0])
        masses = np.asarray(masses, dtype=float)
        if normalize:
            masses = masses / masses.sum()
        return cls("atoms", points=points, masses=masses)

    @classmethod
    def from_grid(cls, grid, masses):
        return cls("grid", masses=masses, grid=grid)

    @property
    def dim(self):
        return self.points.shape[1] if self.form == "atoms" else self.grid.dim

    def __len__(self):
        return self.masses.size

    def atoms(self, drop_zero=True):
        """``(points, masses)``; grid cells become their centers."""
        if self.form == "atoms":
            pts, w = self.points, self.masses
        else:
            pts, w = self.grid.cell_centers(), self.masses.ravel()
        if drop_zero:
            keep = w > 0
            pts, w = pts[keep], w[keep]
        return np.array(pts), np.array(w)

    def to_atoms(self):
        pts, w = self.atoms()
        return DiscreteMeasure.from_atoms(pts, w)

    def coalesce(self):
        """Merge exactly coincident atoms, keeping first-occurrence order."""
        if self.form == "grid":
            return self
        _, first, inv = np.unique(self.points, axis=0, return_index=True, return_inverse=True)
        inv = np.ravel(inv)
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        w = np.zeros(order.size)
        np.add.at(w, rank[inv], self.masses)
        return DiscreteMeasure("atoms", points=self.points[np.sort(first)], masses=w)

    def fingerprint(self):
        """Content hash used to check that two objects refer to the same measure."""
        h = hashlib.sha256(self.form.encode())
        if self.form == "atoms":
            h.update(np.ascontiguousarray(self.points).tobytes())
        else:
            for e in self.grid.edges:
                h.update(np.ascontiguousarray(e).tobytes())
        h.update(np.ascontiguousarray(self.masses).tobytes())
        return h.hexdigest()[:16]

    def mean(self):
        pts, w = self.atoms()
        return w @ pts

    def allclose(self, other, atol=1e-12):
        if self.form != other.form or self.dim != other.dim:
            return False
        if self.form == "grid":
            return self.grid.same_as(other.grid) and np.allclose(self.masses, other.masses, atol=atol, rtol=0)
        a, b = self.coalesce(), other.coalesce()
        if len(a) != len(b):
            return False
        ia = np.lexsort(a.points.T[::-1])
        ib = np.lexsort(b.points.T[::-1])
        return np.allclose(a.points[ia], b.points[ib], atol=atol, rtol=0) and np.allclose(
            a.masses[ia], b.masses[ib], atol=atol, rtol=0
        )

    def __repr__(self):
        return f"DiscreteMeasure(form={self.form!r}, dim={self.dim}, size={len(self)})"
