"""Surfaces in the conformal 4-sphere as sampled null-line bundles.

A surface is a grid of real null lift vectors sigma in R^{5,1}.  From sigma
the module builds the central sphere congruence V = span(sigma, sigma_x,
sigma_y, sigma_xx + sigma_yy) (a (3,1)-plane bundle), splits the trivial
connection d into the V-decomposable part D and the off-block part N, fits a
conserved multiplier 1-form q with quadratic differential Q = c dz^2, and
evaluates the Willmore energy.  Conformal coordinates are assumed: the grid is
a chart in which (sigma_z, sigma_z) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grid as g
from . import lorentz as lz

GENERATORS = ("clifford_torus", "round_sphere", "cmc_cylinder")


@dataclass
class SurfaceGrid:
    """Sampled conformal immersion into the projective light cone."""

    spec: g.GridSpec
    sigma: np.ndarray                       # (nx, ny, 6) complex with real values
    kind: str = "file"
    backend: str = g.FD2
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sigma = np.ascontiguousarray(self.sigma, dtype=complex)

    # derived samples ------------------------------------------------------
    def d_sigma(self):
        sx = g.diff(self.sigma, self.spec, 0, self.backend)
        sy = g.diff(self.sigma, self.spec, 1, self.backend)
        return sx, sy

    def sigma_z(self):
        sx, sy = self.d_sigma()
        return 0.5 * (sx - 1j * sy), 0.5 * (sx + 1j * sy)

    def nullity_residual(self) -> float:
        n = lz.inner(self.sigma, self.sigma)
        return float(np.max(np.abs(n)) / np.max(lz.hnorm(self.sigma)) ** 2)

    def conformality_residual(self) -> float:
        sz, _ = self.sigma_z()
        val = np.abs(lz.inner(sz, sz))
        scale = np.maximum(lz.hnorm(sz) ** 2, 1e-300)
        return g.max_norm((val / scale)[..., None], self.spec)

    def immersion_mask(self, tol: float = 1e-6) -> np.ndarray:
        sx, sy = self.d_sigma()
        b = np.stack([lz.normalize(self.sigma), sx, sy], axis=-1)
        s = np.linalg.svd(b, compute_uv=False)
        return s[..., -1] > tol * s[..., 0]


# ---------------------------------------------------------------------------
# generators

def generate_surface(kind: str, nx: int = 64, ny: int = 64,
                     lx: float | None = None, ly: float | None = None,
                     backend: str = g.FD2, **params) -> SurfaceGrid:
    """Sample one of the built-in conformal immersions."""
    if kind == "clifford_torus":
        spec = g.GridSpec(nx, ny, lx or 2 * np.pi, ly or 2 * np.pi, True, True)
        x, y = spec.meshgrid()
        c = 1.0 / np.sqrt(2.0)
        sigma = np.stack([
            c * np.cos(x), c * np.sin(x), c * np.cos(y), c * np.sin(y),
            np.zeros_like(x), np.ones_like(x),
        ], axis=-1)
    elif kind == "round_sphere":
        spec = g.GridSpec(nx, ny, lx or 2 * np.pi, ly or 4.0, True, False)
        x, y = spec.meshgrid()
        yc = y - spec.ly / 2.0  # center the strip on the equator
        sech = 1.0 / np.cosh(yc)
        sigma = np.stack([
            sech * np.cos(x), sech * np.sin(x), np.tanh(yc),
            np.zeros_like(x), np.zeros_like(x), np.ones_like(x),
        ], axis=-1)
    elif kind == "cmc_cylinder":
        r = float(params.get("radius", 1.0))
        spec = g.GridSpec(nx, ny, lx or 2 * np.pi * r, ly or 2.0, True, False)
        x, y = spec.meshgrid()
        yc = y - spec.ly / 2.0
        rho2 = r * r + yc * yc
        # conformal embedding of R^3; the (1+|v|^2)/2 slot is the timelike one
        sigma = np.stack([
            r * np.cos(x / r), r * np.sin(x / r), yc,
            0.5 * (1.0 - rho2), np.zeros_like(x), 0.5 * (1.0 + rho2),
        ], axis=-1)
    else:
        raise ValueError(f"unknown surface kind {kind!r}")
    return SurfaceGrid(spec, sigma.astype(complex), kind=kind, backend=backend,
                       params=dict(params))


# ---------------------------------------------------------------------------
# central sphere congruence

@dataclass
class CSCBundle:
    """Central sphere congruence: (3,1)-plane bundle through the surface."""

    surf: SurfaceGrid
    basis: np.ndarray          # (nx, ny, 6, 4) Hermitian-orthonormal
    projector: np.ndarray      # (nx, ny, 6, 6) bilinear-orthogonal projector
    raw: np.ndarray            # (nx, ny, 6, 4) ordered (sigma, sx, sy, lap)
    rank_ok: np.ndarray        # mask where the raw frame has full rank

    @property
    def spec(self):
        return self.surf.spec

    def reflector(self) -> np.ndarray:
        d = self.projector.shape[-1]
        return 2.0 * self.projector - np.eye(d)

    def signature_counts(self) -> tuple[int, int]:
        gb = lz.gram_matrix(self.basis)
        gb = 0.5 * (gb + np.swapaxes(gb, -1, -2))
        # the bundle is real: the complex-symmetric Gram has real spectrum
        ev = np.linalg.eigvals(gb).real
        plus = int(np.min(np.sum(ev > 1e-9, axis=-1)))
        minus = int(np.min(np.sum(ev < -1e-9, axis=-1)))
        return plus, minus


def central_sphere(surf: SurfaceGrid) -> CSCBundle:
    """V = span(sigma, sigma_x, sigma_y, sigma_xx + sigma_yy)."""
    sx, sy = surf.d_sigma()
    lap = g.laplace_coordinate(surf.sigma, surf.spec, surf.backend)
    raw = np.stack([surf.sigma, sx, sy, lap], axis=-1)
    sv = np.linalg.svd(raw, compute_uv=False)
    rank_ok = sv[..., -1] > 1e-9 * sv[..., 0]
    basis = lz.orthonormalize(raw)
    projector = lz.mink_projector(basis)
    return CSCBundle(surf, basis, projector, raw, rank_ok)


@dataclass
class NVForms:
    """Split d = D + N along V: N is the off-block derivative of the projector."""

    csc: CSCBundle
    nx_: np.ndarray            # N_x, (nx, ny, 6, 6)
    ny_: np.ndarray            # N_y
    backend: str

    @property
    def spec(self):
        return self.csc.spec

    def n10(self) -> np.ndarray:
        """dz-coefficient of the (1,0) part of N."""
        return 0.5 * (self.nx_ - 1j * self.ny_)

    def n01(self) -> np.ndarray:
        return 0.5 * (self.nx_ + 1j * self.ny_)

    def dform(self) -> tuple[np.ndarray, np.ndarray]:
        """Connection form of D relative to the trivial connection (= -N)."""
        return -self.nx_, -self.ny_

    def covariant_d(self, ax: np.ndarray, ay: np.ndarray):
        """(d^D a) two-form coefficient for an o-valued 1-form a = ax dx + ay dy."""
        dax = g.diff(ay, self.spec, 0, self.backend) \
            - g.diff(ax, self.spec, 1, self.backend)
        comm = (-self.nx_) @ ay - ay @ (-self.nx_) \
            - ((-self.ny_) @ ax - ax @ (-self.ny_))
        return dax + comm


def split_connection(csc: CSCBundle) -> NVForms:
    """N = [d pi, pi]; D = d - N preserves V and its orthogonal complement."""
    backend = csc.surf.backend
    dpx = g.diff(csc.projector, csc.spec, 0, backend)
    dpy = g.diff(csc.projector, csc.spec, 1, backend)
    pi = csc.projector
    nx_ = dpx @ pi - pi @ dpx
    ny_ = dpy @ pi - pi @ dpy
    return NVForms(csc, nx_, ny_, backend)


# ---------------------------------------------------------------------------
# conserved multiplier

@dataclass
class MultiplierForm:
    """q = c-weighted isotropic 1-form with quadratic differential c dz^2."""

    c: complex
    q10: np.ndarray            # dz-coefficient, (nx, ny, 6, 6)
    residual_closed: float     # |d^D q|
    residual_cw: float         # |d^D *N - 2 [q ^ *N]|
    scale: float               # Frobenius scale of d^D *N used for reporting
    basis10: np.ndarray | None = None   # unit-c building block of q10

    def q_xy(self) -> tuple[np.ndarray, np.ndarray]:
        q01 = np.conj(self.q10)
        return self.q10 + q01, 1j * self.q10 - 1j * q01


def _normalized_lift(surf: SurfaceGrid):
    sz, szb = surf.sigma_z()
    w = lz.inner(sz, szb).real
    s = np.sqrt(np.maximum(w, 1e-300))
    sig = surf.sigma / s[..., None]
    sig_z = g.dz(sig, surf.spec, surf.backend)
    sig_zb = g.dzbar(sig, surf.spec, surf.backend)
    return sig, sig_z, sig_zb


def fit_multiplier(nv: NVForms, cw_tol: float = 1e-2) -> MultiplierForm:
    """Least-squares fit of the constant c in Q = c dz^2.

    The conservation law d^D *N = 2 [q ^ *N] is affine in (Re c, Im c); the
    minimum-norm solution of the 2x2 normal system is returned, so surfaces
    with N = 0 get c = 0.
    """
    surf = nv.csc.surf
    spec = nv.spec
    sig, sig_z, sig_zb = _normalized_lift(surf)
    base10 = -(lz.wedge(sig, sig_zb))          # q10 = c * base10
    nx_, ny_ = nv.nx_, nv.ny_

    # lhs: d^D *N  with (*N)_x = N_y, (*N)_y = -N_x
    lhs = nv.covariant_d(ny_, -nx_)

    def rhs(q10):
        q01 = np.conj(q10)
        qx = q10 + q01
        qy = 1j * (q10 - q01)
        return -2.0 * ((qx @ nx_ - nx_ @ qx) + (qy @ ny_ - ny_ @ qy))

    # residual(c) = lhs - rhs(c*base10) is affine in (re c, im c); the lhs
    # stacks two one-sided derivatives near open edges, so keep 4 rows clear
    r_re = rhs(base10)
    r_im = rhs(1j * base10)
    keep = spec.interior(margin=4)

    def flat(a):
        return a[keep].reshape(-1)

    m = np.stack([flat(r_re), flat(r_im)], axis=1)
    b = flat(lhs)
    mr = np.concatenate([m.real, m.imag], axis=0)
    br = np.concatenate([b.real, b.imag], axis=0)
    # isothermic surfaces carry a one-parameter family of multipliers, which
    # makes one direction of the normal system (near-)singular; truncate it
    # so the reported c is the minimal representative
    sol, *_ = np.linalg.lstsq(mr, br, rcond=1e-4)
    c = complex(sol[0], sol[1])

    q10 = c * base10
    res_closed, res_cw, scale = _pair_residuals(nv, q10)
    mult = MultiplierForm(c, q10, res_closed, res_cw, scale, basis10=base10)
    return mult


def _pair_residuals(nv: NVForms, q10: np.ndarray) -> tuple[float, float, float]:
    spec = nv.spec
    nx_, ny_ = nv.nx_, nv.ny_
    lhs = nv.covariant_d(ny_, -nx_)
    q01 = np.conj(q10)
    qx, qy = q10 + q01, 1j * (q10 - q01)
    rhs = -2.0 * ((qx @ nx_ - nx_ @ qx) + (qy @ ny_ - ny_ @ qy))
    # two stacked one-sided derivatives contaminate 4 rows at open edges
    res_cw = g.max_norm(lhs - rhs, spec, margin=4)
    res_closed = g.max_norm(nv.covariant_d(qx, qy), spec, margin=4)
    scale = max(g.max_norm(lhs, spec, margin=4), 1e-30)
    return res_closed, res_cw, scale


def quadratic_differential(nv: NVForms, q10: np.ndarray):
    """Q(Z,Z) coefficient field of a multiplier form: q_Z(d_Z sigma) = Q sigma."""
    surf = nv.csc.surf
    sig, sig_z, _ = _normalized_lift(surf)
    u = np.einsum("...ij,...j->...i", q10, sig_z)
    denom = np.einsum("...i,...i->...", np.conj(sig), sig)
    qzz = np.einsum("...i,...i->...", np.conj(sig), u) / denom
    off = u - qzz[..., None] * sig
    off_res = g.max_norm(off, surf.spec) / max(g.max_norm(u, surf.spec), 1e-30)
    return qzz, off_res


def cw_residual_pair(nv: NVForms, mult) -> tuple[float, float]:
    """Max-norm residuals of the two conserved-multiplier equations.

    Accepts a fitted MultiplierForm (returns its stored residuals) or a raw
    dz-coefficient field, e.g. a transformed multiplier on a new surface.
    """
    if isinstance(mult, MultiplierForm):
        return mult.residual_closed, mult.residual_cw
    res_closed, res_cw, _ = _pair_residuals(nv, np.asarray(mult))
    return res_closed, res_cw


# ---------------------------------------------------------------------------
# Willmore energy

def willmore_energy(nv: NVForms) -> float:
    """W = 1/2 int (N o J ^ N); equals the classical Willmore functional."""
    dens = willmore_density(nv)
    return g.integrate(dens, nv.spec)


def willmore_density(nv: NVForms) -> np.ndarray:
    nx_, ny_ = nv.nx_, nv.ny_
    return 0.5 * (lz.skew_pair(nx_, nx_) + lz.skew_pair(ny_, ny_)).real


# ---------------------------------------------------------------------------
# CWSURF file format

def write_cwsurf(path, surf: SurfaceGrid) -> None:
    """Plain-text samples: header then nx*ny rows of 6 reals, row-major."""
    spec = surf.spec
    with open(path, "w") as fh:
        fh.write(f"CWSURF 1 {spec.nx} {spec.ny} {spec.lx!r} {spec.ly!r} "
                 f"{int(spec.periodic_x)} {int(spec.periodic_y)}\n")
        flat = surf.sigma.real.reshape(-1, surf.sigma.shape[-1])
        for row in flat:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_cwsurf(path, backend: str = g.FD2) -> SurfaceGrid:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 8 or header[0] != "CWSURF" or header[1] != "1":
            raise ValueError("not a CWSURF version-1 file")
        nx, ny = int(header[2]), int(header[3])
        lx, ly = float(header[4]), float(header[5])
        px, py = bool(int(header[6])), bool(int(header[7]))
        data = np.loadtxt(fh, dtype=float)
    if data.shape != (nx * ny, 6):
        raise ValueError(f"expected {nx * ny} rows of 6 reals, got {data.shape}")
    spec = g.GridSpec(nx, ny, lx, ly, px, py)
    sigma = data.reshape(nx, ny, 6).astype(complex)
    return SurfaceGrid(spec, sigma, kind="file", backend=backend)
