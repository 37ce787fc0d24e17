"""Simple-factor dressing of the flat family.

A dressing gauge is a rational map lam -> r(lam) into complex orthogonal
transformations with r(lam*) = conj(r(lam)) for lam* = 1/conj(lam), which
conjugates the reflection rho_V to a lam-independent rho_{V'}, and for which
r(lam) . d^lam again extends holomorphically with value d at lam = 1.  The
building block is the diagonal factor

    Gamma^{l+}_{l-}(t) = t on l+, 1 on (l+ + l-)^perp, 1/t on l-

for complementary null lines, composed with the Moebius map
psi(lam) = (1+a)(lam-a) / ((1-a)(lam+a)).  A product of two such factors,
the second built from the transformed data, satisfies all gauge axioms
pointwise-algebraically once the line bundle L is parallel for d^a.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid as g
from . import lorentz as lz
from .connections import ConnectionFamily, energy_density, transport_line
from .surface import CSCBundle, SurfaceGrid

INTERSECT_TOL = 1e-8


def moebius(alpha: complex):
    """psi(lam) = (1+a)(lam-a)/((1-a)(lam+a)); psi(1) = 1."""
    a = complex(alpha)
    if a in (1.0, -1.0, 0.0):
        raise ValueError("alpha must avoid 0 and +-1")

    def psi(lam: complex) -> complex:
        if lam is np.inf:
            return (1.0 + a) / (1.0 - a)
        lam = complex(lam)
        if lam == -a:
            raise ValueError("simple factor evaluated at its pole")
        return (1.0 + a) * (lam - a) / ((1.0 - a) * (lam + a))

    return psi


def line_projectors(u: np.ndarray, v: np.ndarray):
    """Projectors onto span(u) and span(v) along the Gamma eigendecomposition.

    u, v span complementary null lines: (u, v) != 0.
    """
    gram = lz.MINK.gram
    s = lz.inner(u, v)
    pu = np.einsum("...i,...j->...ij", u, gram * v) / s[..., None, None]
    pv = np.einsum("...i,...j->...ij", v, gram * u) / s[..., None, None]
    return pu, pv


def gamma_factor(u: np.ndarray, v: np.ndarray, t: complex) -> np.ndarray:
    """Gamma^{span u}_{span v}(t); complex orthogonal for every t != 0."""
    t = complex(t)
    if t == 0:
        raise ValueError("Gamma is singular at t = 0")
    pu, pv = line_projectors(u, v)
    d = u.shape[-1]
    return np.eye(d) + (t - 1.0) * pu + (1.0 / t - 1.0) * pv


@dataclass
class SimpleFactor:
    """p(lam) = Gamma^L_{rho_V L}(psi(lam)) for a null line bundle L."""

    alpha: complex
    u: np.ndarray              # spans L
    v: np.ndarray              # spans rho_V L

    def __call__(self, lam: complex) -> np.ndarray:
        psi = moebius(self.alpha)
        return gamma_factor(self.u, self.v, psi(lam))

    def at_zero(self) -> np.ndarray:
        a = self.alpha
        return gamma_factor(self.u, self.v, -(1.0 + a) / (1.0 - a))

    def at_inf(self) -> np.ndarray:
        a = self.alpha
        return gamma_factor(self.u, self.v, (1.0 + a) / (1.0 - a))

    def log_derivative_zero(self):
        """chi(lam) = p^-1 dp/dlam = g(lam) (pi_L - pi_rhoL); returns g(0), D."""
        a = self.alpha
        pu, pv = line_projectors(self.u, self.v)
        return -2.0 / a, pu - pv


def conj_star(alpha: complex) -> complex:
    return 1.0 / np.conj(alpha)


@dataclass
class BacklundGauge:
    """Two-factor dressing gauge from a d^alpha-parallel null line bundle."""

    alpha: complex
    inner: SimpleFactor        # p^V_{alpha, L}
    outer: SimpleFactor        # p^{V'}_{alpha*, L'}
    vbasis: np.ndarray         # basis of V
    vpbasis: np.ndarray        # basis of V' = p(0) V
    mask: np.ndarray           # where both factors are well conditioned
    monodromy_x: np.ndarray | None = None
    monodromy_y: np.ndarray | None = None

    def __call__(self, lam: complex) -> np.ndarray:
        return self.outer(lam) @ self.inner(lam)

    def at_zero(self) -> np.ndarray:
        return self.outer.at_zero() @ self.inner.at_zero()

    def at_inf(self) -> np.ndarray:
        return self.outer.at_inf() @ self.inner.at_inf()

    def chi_zero(self):
        """chi0(0) and chi0'(0) of r^-1 dr/dlam, in closed form."""
        gq, dq = self.outer.log_derivative_zero()
        gp, dp = self.inner.log_derivative_zero()
        p0 = self.inner.at_zero()
        p0inv = np.linalg.inv(p0)
        adq = p0inv @ dq @ p0
        chi0 = gq * adq + gp * dp
        bracket = dq @ (gp * dp) - (gp * dp) @ dq
        chi0p = gq * (p0inv @ bracket @ p0)
        return chi0, chi0p

    def reality_residual(self, lam: complex) -> float:
        a = self(lam)
        b = self(conj_star(lam))
        r = np.conj(b) - a
        return float(np.max(np.abs(r[self.mask]))) if np.any(self.mask) else float("nan")

    def det_residual(self) -> float:
        """det of r(0)^-1 r(infty) restricted to V must be 1."""
        m = np.linalg.solve(self.at_zero(), self.at_inf())
        bh = np.conj(np.swapaxes(self.vbasis, -1, -2))
        mv = bh @ m @ self.vbasis
        det = np.linalg.det(mv)
        vals = np.abs(det[self.mask] - 1.0)
        return float(np.max(vals)) if np.any(self.mask) else float("nan")

    def twist_residual(self, lams=(2.0 + 0.5j, 0.3 - 1.1j)) -> float:
        """r(-lam) rho_V r(lam)^-1 must be lam-independent (= rho_{r(0)V})."""
        rho = 2.0 * lz.mink_projector(self.vbasis) - np.eye(6)
        vhat = lz.orthonormalize(self.at_zero() @ self.vbasis)
        rhohat = 2.0 * lz.mink_projector(vhat) - np.eye(6)
        worst = 0.0
        for lam in lams:
            m = self(-lam) @ rho @ np.linalg.inv(self(lam))
            r = np.abs(m - rhohat)[self.mask]
            if r.size:
                worst = max(worst, float(np.max(r)))
        return worst


def algebraic_backlund(vbasis: np.ndarray, alpha: complex, u: np.ndarray,
                       eps: float = lz.COMPLEMENTARITY_EPS) -> BacklundGauge:
    """Assemble the two-factor gauge from an already-parallel line field."""
    alpha = complex(alpha)
    if abs(abs(alpha) - 1.0) < 1e-12:
        raise ValueError("alpha must avoid the unit circle")
    rho = 2.0 * lz.mink_projector(vbasis) - np.eye(6)
    u = lz.normalize(u)
    v = lz.normalize(np.einsum("...ij,...j->...i", rho, u))
    mask = lz.complementarity(u, v) >= eps
    inner = SimpleFactor(alpha, u, v)

    astar = conj_star(alpha)
    up = np.einsum("...ij,...j->...i", inner(astar), np.conj(u))
    up = lz.normalize(up)
    p0 = inner.at_zero()
    vpbasis = lz.orthonormalize(p0 @ vbasis)
    rhop = 2.0 * lz.mink_projector(vpbasis) - np.eye(6)
    vp = lz.normalize(np.einsum("...ij,...j->...i", rhop, up))
    mask &= lz.complementarity(up, vp) >= eps
    outer = SimpleFactor(astar, up, vp)
    return BacklundGauge(alpha, inner, outer, vbasis, vpbasis, mask)


def backlund_gauge(fam: ConnectionFamily, csc: CSCBundle, alpha: complex,
                   l0: np.ndarray | None = None,
                   rng: np.random.Generator | None = None,
                   substeps: int = 3) -> BacklundGauge:
    """Dressing gauge from transporting an initial null line under d^alpha."""
    if l0 is None:
        l0 = default_initial_line(csc, rng or np.random.default_rng(0))
    res = transport_line(fam, alpha, l0, substeps=substeps)
    bg = algebraic_backlund(csc.basis, alpha, res.frames)
    bg.monodromy_x = res.monodromy_x
    bg.monodromy_y = res.monodromy_y
    return bg


def default_initial_line(csc: CSCBundle, rng: np.random.Generator,
                         eps: float = lz.COMPLEMENTARITY_EPS,
                         tries: int = 64) -> np.ndarray:
    """Seeded real null line transverse to V and V^perp at the basepoint."""
    v0 = csc.basis[0, 0]
    pi = csc.projector[0, 0]
    for _ in range(tries):
        u = lz.random_real_null(rng)
        pu = pi @ u
        qu = u - pu
        if lz.hnorm(pu) > eps and lz.hnorm(qu) > eps:
            rho = 2.0 * pi - np.eye(6)
            if lz.complementarity(u, rho @ u) >= eps:
                return u
    raise RuntimeError("no transverse real null line found (degenerate V?)")


def monodromy_initial_line(fam: ConnectionFamily, alpha: complex,
                           csc: CSCBundle, substeps: int = 3,
                           eps: float = lz.COMPLEMENTARITY_EPS) -> np.ndarray | None:
    """Common null eigenline of the monodromies of d^alpha along the periodic
    directions, if any is transverse; makes the transported bundle (hence the
    transform) close up over the chart.  The line is complex in general: the
    connection matrices at non-unimodular alpha are not real-entried, reality
    of the transform comes from the paired factor construction instead."""
    probe = transport_line(fam, alpha, np.eye(6, dtype=complex)[0],
                           substeps=substeps)
    mx, my = probe.monodromy_x, probe.monodromy_y
    if mx is None:
        mx, my = my, None
    if mx is None:
        return None
    vals, vecs = np.linalg.eig(mx)
    best = None
    best_score = eps
    rho = 2.0 * csc.projector[0, 0] - np.eye(6)
    # prefer non-unit eigenvalues (eigenvectors automatically null); an
    # elliptic monodromy still closes the line projectively, so unit-modulus
    # candidates stay eligible and the explicit null check gates them
    for idx in np.argsort(-np.abs(np.abs(vals) - 1.0)):
        u = vecs[:, idx]
        if abs(lz.inner(u, u)) > 1e-6:
            continue
        if my is not None:
            yres = lz.line_distance(np.einsum("ij,j->i", my, u), u)
            if yres > 1e-6:
                continue
        score = float(lz.complementarity(u, rho @ u))
        if score > best_score:
            best = u
            best_score = score
    return best


# ---------------------------------------------------------------------------
# dressing a surface and its family

def dress_family(fam: ConnectionFamily, bg: BacklundGauge) -> ConnectionFamily:
    """New Laurent coefficients; top coefficients conjugate, the next ones pick
    up a bracket with the closed-form log-derivative of the gauge."""
    r0 = bg.at_zero()
    rinf = bg.at_inf()
    rinf_inv = np.linalg.inv(rinf)
    chi0, _ = bg.chi_zero()
    chi_inf = np.conj(chi0)        # chi_infty(infty) = conj(chi0(0))
    k = fam.k
    new = []
    if k == 1:
        new.append(rinf @ fam.zcoeffs[0] @ rinf_inv)
    elif k == 2:
        z1, z2 = fam.zcoeffs
        new.append(rinf @ (z1 + chi_inf @ z2 - z2 @ chi_inf) @ rinf_inv)
        new.append(rinf @ z2 @ rinf_inv)
    else:
        raise ValueError("families of order k <= 2 are supported")
    return ConnectionFamily(fam.spec, new, csc=None, backend=fam.backend)


def intersect_planes(p1: np.ndarray, p2: np.ndarray):
    """Line of intersection of two 2-planes (batched); returns vector + gap."""
    m = np.concatenate([p1, -p2], axis=-1)
    u_, s, vh = np.linalg.svd(m)
    coef = np.conj(vh[..., -1, :])
    v = np.einsum("...ik,...k->...i", p1, coef[..., :2])
    gap = s[..., -1] / np.maximum(s[..., 0], 1e-300)
    sep = s[..., -2] / np.maximum(s[..., 0], 1e-300)
    return v, gap, sep


def real_line_representative(v: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Real unit representative of a real point bundle, sign-propagated.

    Uses the dominant eigenvector of 2 Re(v vbar^T), which is invariant under
    the arbitrary per-point phase of v; a branch on v + conj(v) versus
    i(v - conj(v)) would imprint that phase noise on the field at grid scale
    and wreck any measurement that differentiates the result."""
    m = np.einsum("...i,...j->...ij", v, np.conj(v))
    m = (m + np.conj(m)).real
    _, vecs = np.linalg.eigh(m)
    w = vecs[..., :, -1]
    norm = np.maximum(np.linalg.norm(w, axis=-1), 1e-300)
    w = w / norm[..., None]
    # propagate a consistent sign along row 0, then along every column
    nx, ny = w.shape[:2]
    sgn_row = np.sign(np.einsum("xi,xi->x", w[:-1, 0], w[1:, 0]))
    sgn_row[sgn_row == 0] = 1.0
    srow = np.concatenate([[1.0], np.cumprod(sgn_row)])
    w[:, 0] *= srow[:, None]
    sgn_col = np.sign(np.einsum("xyi,xyi->xy", w[:, :-1], w[:, 1:]))
    sgn_col[sgn_col == 0] = 1.0
    scol = np.concatenate([np.ones((nx, 1)), np.cumprod(sgn_col, axis=1)], axis=1)
    return w * scol[..., None]


@dataclass
class DressResult:
    surface: SurfaceGrid               # hat sigma on a chart grid
    family: ConnectionFamily
    q10: np.ndarray
    vbasis: np.ndarray                 # hat V = r(0) V
    mask: np.ndarray
    lam10: np.ndarray                  # plane basis r(0) Lambda^{1,0}
    lam01: np.ndarray
    gauge: BacklundGauge
    intersection_gap: float
    coverage: float


def dress(fam: ConnectionFamily, csc: CSCBundle, q10: np.ndarray | None,
          bg: BacklundGauge, immersion_tol: float = 1e-6) -> DressResult:
    """Transform the surface: hat Lambda = r(0) Lambda^{1,0}  ^  r(infty) Lambda^{0,1}."""
    surf = csc.surf
    r0 = bg.at_zero()
    rinf = bg.at_inf()
    sz, szb = surf.sigma_z()
    p10 = np.stack([surf.sigma, sz], axis=-1)
    p01 = np.stack([surf.sigma, szb], axis=-1)
    lam10 = r0 @ p10
    lam01 = rinf @ p01
    v, gap, sep = intersect_planes(lam10, lam01)
    # gap measures how well the planes meet (a residual of the construction);
    # sep guards against a degenerate two-dimensional intersection
    mask = bg.mask & (sep >= 1e-6)
    sigma_hat = real_line_representative(lz.normalize(v), mask)

    spec2 = surf.spec.cut_open()
    surf_hat = SurfaceGrid(spec2, sigma_hat.astype(complex),
                           kind=surf.kind + "_dressed", backend=g.FD2)
    mask &= surf_hat.immersion_mask(immersion_tol)

    fam_hat = dress_family(fam, bg)
    qhat10 = rinf @ q10 @ np.linalg.inv(rinf) if q10 is not None else None
    vbasis = lz.orthonormalize(r0 @ csc.basis)
    gapmax = float(np.max(gap[mask])) if np.any(mask) else float("nan")
    coverage = float(np.mean(mask))
    return DressResult(surf_hat, fam_hat, qhat10, vbasis, mask, lam10, lam01,
                       bg, gapmax, coverage)


def plane_isotropy_residual(basis: np.ndarray, mask: np.ndarray,
                            spec: g.GridSpec | None = None) -> float:
    """Max |(a,b)| over a Hermitian-orthonormal basis of the plane."""
    q = lz.orthonormalize(basis)
    gr = lz.gram_matrix(q)
    vals = np.max(np.abs(gr), axis=(-2, -1))
    keep = mask.copy()
    if spec is not None:
        keep &= spec.interior()
    return float(np.max(vals[keep])) if np.any(keep) else float("nan")


# ---------------------------------------------------------------------------
# permutability

@dataclass
class PermuteResult:
    gauge_mismatch: float
    surface_distance: float
    mask: np.ndarray


def _sample_lams_avoiding_poles(a1: complex, a2: complex) -> tuple:
    """Three evaluation points staying clear of the gauge poles +-a, +-1/conj(a)."""
    poles = []
    for a in (a1, a2):
        poles += [a, -a, conj_star(a), -conj_star(a)]
    candidates = (3.0, 1j, -0.3 + 0.4j, -3.0, 2.0j, 1.7 - 0.6j, 0.5j,
                  -2.0, 2.0, 0.4 - 0.3j)
    picked = [lam for lam in candidates
              if min(abs(lam - p) for p in poles) > 0.25]
    if len(picked) < 3:
        raise ValueError("could not find sample points away from the poles; "
                         "pass sample_lams explicitly")
    return tuple(picked[:3])


def permute(fam: ConnectionFamily, csc: CSCBundle, bg1: BacklundGauge,
            bg2: BacklundGauge, sample_lams=None) -> PermuteResult:
    """Bianchi permutability: the second-generation lines come from evaluating
    the first gauges, and the composed gauges agree."""
    a1, a2 = bg1.alpha, bg2.alpha
    if min(abs(a2 - a1), abs(a2 + a1),
           abs(a2 - conj_star(a1)), abs(a2 + conj_star(a1))) < 1e-9:
        raise ValueError("parameters must satisfy a2 notin {+-a1, +-a1*}")
    if sample_lams is None:
        sample_lams = _sample_lams_avoiding_poles(a1, a2)
    l2 = bg1(a2) @ bg2.inner.u[..., None]
    l1 = bg2(a1) @ bg1.inner.u[..., None]
    bg21 = algebraic_backlund(lz.orthonormalize(bg1.at_zero() @ csc.basis), a2,
                              l2[..., 0])
    bg12 = algebraic_backlund(lz.orthonormalize(bg2.at_zero() @ csc.basis), a1,
                              l1[..., 0])
    mask = bg1.mask & bg2.mask & bg21.mask & bg12.mask
    worst = 0.0
    for lam in sample_lams:
        ra = bg21(lam) @ bg1(lam)
        rb = bg12(lam) @ bg2(lam)
        scale = np.maximum(np.sqrt(np.einsum("...ij,...ij->...",
                                             np.abs(ra), np.abs(ra))), 1e-30)
        diff = np.sqrt(np.einsum("...ij,...ij->...",
                                 np.abs(ra - rb), np.abs(ra - rb))) / scale
        if np.any(mask):
            worst = max(worst, float(np.max(diff[mask])))

    # the doubly-transformed surface agrees through both orders
    surf = csc.surf
    sz, szb = surf.sigma_z()
    p10 = np.stack([surf.sigma, sz], axis=-1)
    p01 = np.stack([surf.sigma, szb], axis=-1)
    dist = 0.0
    va, _, _ = intersect_planes((bg21.at_zero() @ bg1.at_zero()) @ p10,
                                (bg21.at_inf() @ bg1.at_inf()) @ p01)
    vb, _, _ = intersect_planes((bg12.at_zero() @ bg2.at_zero()) @ p10,
                                (bg12.at_inf() @ bg2.at_inf()) @ p01)
    d = lz.line_distance(va, vb)
    if np.any(mask):
        dist = float(np.max(d[mask]))
    return PermuteResult(worst, dist, mask)


# ---------------------------------------------------------------------------
# energy exactness under dressing

def energy_exactness_field(fam: ConnectionFamily, fam_hat: ConnectionFamily,
                           bg: BacklundGauge,
                           backend: str | None = None) -> np.ndarray:
    """Pointwise residual of e(V_hat) = e(V) - i d Res_{lam=0}(chi0, A_-).

    By default the residue term is differentiated on the cut-open chart: a
    gauge seeded off a monodromy eigenline does not close up, and a seam
    poisons periodic derivatives globally.  Pass an explicit backend to use
    the family's own chart (valid when the gauge closes)."""
    chi0, chi0p = bg.chi_zero()
    theta_x = np.zeros(fam.zcoeffs[0].shape[:2], dtype=complex)
    for i, z in enumerate(fam.zcoeffs, start=1):
        chi = chi0 if i == 1 else chi0p
        theta_x += lz.skew_pair(chi, np.conj(z))
    theta_y = -1j * theta_x            # A_{-i} is a (0,1)-form: y-comp = -i x-comp
    if backend is None:
        dtheta = g.two_form(theta_x, theta_y, fam.spec.cut_open(), g.FD2)
    else:
        dtheta = g.two_form(theta_x, theta_y, fam.spec, backend)
    return energy_density(fam_hat) - energy_density(fam) + (1j * dtheta).real
