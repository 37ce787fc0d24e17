"""Linear algebra of the Minkowski space R^{n+1,1} and its complexification.

The light-cone model of the conformal n-sphere places everything in R^{n+1,1}
with bilinear form diag(+1,...,+1,-1), timelike direction last.  The inner
product is complex-bilinear (no conjugation) so that null lines, isotropic
planes and complex orthogonal gauges make sense after complexification;
Hermitian norms are used only for conditioning and normalisation.

Skew maps are stored as plain (d, d) matrices A with A^T G + G A = 0; the
2-vector u^v acts as w -> (u,w)v - (v,w)u.  All operations broadcast over
leading grid axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COMPLEMENTARITY_EPS = 1e-6
STRUCT_TOL = 1e-9


@dataclass(frozen=True)
class MinkowskiSpace:
    """R^{n+1,1}; dim = n + 2, signature (n+1, 1), timelike last."""

    n: int = 4

    @property
    def dim(self) -> int:
        return self.n + 2

    @property
    def gram(self) -> np.ndarray:
        g = np.ones(self.dim)
        g[-1] = -1.0
        return g

    @property
    def timelike(self) -> np.ndarray:
        t = np.zeros(self.dim)
        t[-1] = 1.0
        return t


MINK = MinkowskiSpace(4)


def inner(u: np.ndarray, v: np.ndarray, gram: np.ndarray | None = None) -> np.ndarray:
    """Complex-bilinear inner product, broadcasting over leading axes."""
    g = MINK.gram if gram is None else gram
    return np.einsum("...i,i,...i->...", u, g, v)


def hnorm(u: np.ndarray) -> np.ndarray:
    """Hermitian norm, the conditioning yardstick."""
    return np.sqrt(np.einsum("...i,...i->...", np.conj(u), u).real)


def hdot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", np.conj(u), v)


def normalize(u: np.ndarray) -> np.ndarray:
    return u / hnorm(u)[..., None]


def real_residual(u: np.ndarray) -> float:
    return float(np.max(np.abs(u.imag))) if np.iscomplexobj(u) else 0.0


def wedge(u: np.ndarray, v: np.ndarray, gram: np.ndarray | None = None) -> np.ndarray:
    """Matrix of u^v: w -> (u,w)v - (v,w)u."""
    g = MINK.gram if gram is None else gram
    gu = u * g
    gv = v * g
    return v[..., :, None] * gu[..., None, :] - u[..., :, None] * gv[..., None, :]


def wedge_action(u: np.ndarray, v: np.ndarray, w: np.ndarray,
                 gram: np.ndarray | None = None) -> np.ndarray:
    return inner(u, w, gram)[..., None] * v - inner(v, w, gram)[..., None] * u


def skew_pair(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Inner product on 2-vectors/skew maps: (u^v, p^q) = (u,p)(v,q) - (u,q)(v,p).

    In matrix form this is -tr(ab)/2.
    """
    return -0.5 * np.einsum("...ij,...ji->...", a, b)


def skew_residual(a: np.ndarray, gram: np.ndarray | None = None) -> float:
    """Max violation of A^T G + G A = 0 over all leading axes."""
    g = MINK.gram if gram is None else gram
    ga = g[:, None] * a
    r = ga + np.swapaxes(ga, -1, -2)
    return float(np.max(np.abs(r)))


def metric_residual(m: np.ndarray, gram: np.ndarray | None = None) -> float:
    """Deviation of m from complex orthogonality: m^T G m = G."""
    g = MINK.gram if gram is None else gram
    gm = g[:, None] * m
    r = np.swapaxes(m, -1, -2) @ gm - np.diag(g)
    return float(np.max(np.abs(r)))


# ---------------------------------------------------------------------------
# subspaces: bases are (..., dim, r) arrays with Hermitian-orthonormal columns

def orthonormalize(basis: np.ndarray) -> np.ndarray:
    """Hermitian-orthonormal column basis via QR."""
    q, _ = np.linalg.qr(basis)
    return q


def gram_matrix(basis: np.ndarray, gram: np.ndarray | None = None) -> np.ndarray:
    g = MINK.gram if gram is None else gram
    return np.einsum("...ia,i,...ib->...ab", basis, g, basis)


def mink_projector(basis: np.ndarray, gram: np.ndarray | None = None) -> np.ndarray:
    """Orthogonal projector onto span(basis) w.r.t. the bilinear form.

    Requires the restriction of the form to be non-degenerate.
    """
    g = MINK.gram if gram is None else gram
    gb = gram_matrix(basis, g)
    sol = np.linalg.solve(gb, np.swapaxes(basis, -1, -2) * g)
    return basis @ sol


def hermitian_projector(basis: np.ndarray) -> np.ndarray:
    q = orthonormalize(basis)
    return q @ np.conj(np.swapaxes(q, -1, -2))


def reflector(basis: np.ndarray, gram: np.ndarray | None = None) -> np.ndarray:
    """Reflection across span(basis): +1 on it, -1 on its orthogonal complement."""
    d = basis.shape[-2]
    return 2.0 * mink_projector(basis, gram) - np.eye(d)


def subspace_distance(b1: np.ndarray, b2: np.ndarray) -> float:
    """sin of the largest principal angle between the spans."""
    p1 = hermitian_projector(b1)
    p2 = hermitian_projector(b2)
    s = np.linalg.svd(p1 - p2, compute_uv=False)
    return float(np.max(s))


def line_distance(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Projective distance (sine of the angle) between the lines of u and v."""
    un = normalize(u)
    vn = normalize(v)
    # rejection form: stable down to machine zero, unlike sqrt(1 - cos^2)
    rej = vn - un * hdot(un, vn)[..., None]
    return hnorm(rej)


def complementarity(u: np.ndarray, v: np.ndarray,
                    gram: np.ndarray | None = None) -> np.ndarray:
    """|(u,v)| / (|u||v|); two null lines are complementary iff this is > 0."""
    val = np.abs(inner(u, v, gram))
    return val / (hnorm(u) * hnorm(v))


def signature(basis: np.ndarray, gram: np.ndarray | None = None,
              tol: float = 1e-9) -> tuple[int, int]:
    """(plus, minus) inertia of the form restricted to a (non-grid) subspace."""
    gb = gram_matrix(basis, gram)
    gb = 0.5 * (gb + np.swapaxes(gb, -1, -2))
    ev = np.linalg.eigvalsh(gb) if np.allclose(gb.imag, 0, atol=1e-12) else \
        np.linalg.eigvals(gb).real
    return int(np.sum(ev > tol)), int(np.sum(ev < -tol))


def gauge_form(g: np.ndarray, omega_x: np.ndarray, omega_y: np.ndarray,
               spec, backend: str = "fd2") -> tuple[np.ndarray, np.ndarray]:
    """Connection form of g.(d + omega): Ad_g omega - (dg) g^{-1}."""
    from . import grid as _grid
    ginv = np.linalg.inv(g)
    dgx = _grid.diff(g, spec, 0, backend)
    dgy = _grid.diff(g, spec, 1, backend)
    wx = g @ omega_x @ ginv - dgx @ ginv
    wy = g @ omega_y @ ginv - dgy @ ginv
    return wx, wy


def random_real_null(rng: np.random.Generator, space: MinkowskiSpace = MINK) -> np.ndarray:
    """Seeded random real null vector (w, 1) with w a random unit spatial vector."""
    w = rng.standard_normal(space.dim - 1)
    w = w / np.linalg.norm(w)
    return np.concatenate([w, [1.0]]).astype(complex)
