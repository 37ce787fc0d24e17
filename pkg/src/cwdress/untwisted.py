"""Untwisting the family over the double cover lam -> mu = lam^2.

The normal bundle of the central sphere congruence is an oriented spacelike
2-plane bundle; its 90-degree rotation J splits the complexified normal
bundle into null line bundles W+ (the +i eigenline) and W- = conj(W+).  The
diagonal gauge tau(lam) = lam on W+, lam^-1 on W-, 1 on V satisfies
tau(-1) = rho_V, so tau(lam) . d^lam depends on mu = lam^2 only and the
twisted family becomes an untwisted one with a shifted pole order.  Dressing
with a single untwisted factor built on a parallel null line M is equivalent
to the two-factor twisted dressing with alpha = sqrt(nu), L = tau(alpha)^-1 M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid as g
from . import lorentz as lz
from .connections import ConnectionFamily, transport_line
from .dressing import BacklundGauge, algebraic_backlund, gamma_factor
from .surface import CSCBundle

TRIM_TOL = 1e-11


# ---------------------------------------------------------------------------
# oriented normal splitting

@dataclass
class NormalSplit:
    """Oriented splitting (V, W+, W-) of R^{5,1} tensored with C."""

    csc: CSCBundle
    w1: np.ndarray             # real orthonormal normal frame, (nx, ny, 6)
    w2: np.ndarray
    wplus: np.ndarray          # spans W+ = (w1 - i w2)/sqrt2
    wminus: np.ndarray
    pv: np.ndarray             # projector onto V along the normal lines
    pp: np.ndarray             # projector onto W+
    pm: np.ndarray             # projector onto W-
    flipped: np.ndarray        # where the SVD frame needed reorientation

    @property
    def spec(self):
        return self.csc.spec

    def tau(self, lam: complex) -> np.ndarray:
        """Diagonal gauge: lam on W+, 1/lam on W-, identity on V."""
        return gamma_factor(self.wplus, self.wminus, lam)

    def rotation(self) -> np.ndarray:
        """J = i (pi_+ - pi_-): rotation by 90 degrees on the normal plane."""
        return 1j * (self.pp - self.pm)

    def blocks(self, a: np.ndarray) -> "Blocks":
        """Decompose a matrix field by its weight under Ad tau(lam)."""
        pv, pp, pm = self.pv, self.pp, self.pm
        return Blocks(
            plus=pp @ a @ pv + pv @ a @ pm,
            minus=pm @ a @ pv + pv @ a @ pp,
            zero=pv @ a @ pv + pp @ a @ pp + pm @ a @ pm,
            up2=pp @ a @ pm,
            down2=pm @ a @ pp,
        )

    def projector_residual(self) -> float:
        return float(np.max(np.abs(self.pv - self.csc.projector)))


@dataclass
class Blocks:
    """Weight decomposition: Ad tau(lam) a = lam a+ + lam^-1 a- + a0
    + lam^2 a++ + lam^-2 a--."""

    plus: np.ndarray
    minus: np.ndarray
    zero: np.ndarray
    up2: np.ndarray
    down2: np.ndarray

    def items(self):
        return ((1, self.plus), (-1, self.minus), (0, self.zero),
                (2, self.up2), (-2, self.down2))


def normal_split(csc: CSCBundle) -> NormalSplit:
    """Orient the normal bundle against the coordinate frame of V."""
    qperp = (np.eye(6) - csc.projector).real
    u, s, _ = np.linalg.svd(qperp)
    w1 = u[..., :, 0]
    w2 = u[..., :, 1]
    # nullity of w1 - i w2 needs the frame orthonormal for the bilinear
    # form, not the Euclidean one the SVD returns; the plane is spacelike
    w1 = w1 / np.sqrt(lz.inner(w1, w1).real)[..., None]
    w2 = w2 - lz.inner(w2, w1).real[..., None] * w1
    w2 = w2 / np.sqrt(lz.inner(w2, w2).real)[..., None]
    frame = np.concatenate([csc.raw.real, w1[..., None], w2[..., None]], axis=-1)
    det = np.linalg.det(frame)
    flipped = det < 0.0
    w2 = np.where(flipped[..., None], -w2, w2)
    c = 1.0 / np.sqrt(2.0)
    wplus = c * (w1 - 1j * w2)
    wminus = np.conj(wplus)
    pp, pm = _null_pair_projectors(wplus, wminus)
    pv = np.eye(6) - pp - pm
    return NormalSplit(csc, w1, w2, wplus, wminus, pv, pp, pm, flipped)


def _null_pair_projectors(u: np.ndarray, v: np.ndarray):
    gram = lz.MINK.gram
    s = lz.inner(u, v)
    pu = np.einsum("...i,...j->...ij", u, gram * v) / s[..., None, None]
    pv_ = np.einsum("...i,...j->...ij", v, gram * u) / s[..., None, None]
    return pu, pv_


# ---------------------------------------------------------------------------
# conformal-type split of N

@dataclass
class AQSplit:
    """N = A + H: A pairs W+ with (1,0) directions, H is the opposite pairing."""

    a10: np.ndarray
    h10: np.ndarray
    offdiag_residual: float    # size of the blocks N should not have

    def a_xy(self):
        a01 = np.conj(self.a10)
        return self.a10 + a01, 1j * (self.a10 - a01)

    def h_xy(self):
        h01 = np.conj(self.h10)
        return self.h10 + h01, 1j * (self.h10 - h01)


def aq_split(split: NormalSplit, n10: np.ndarray) -> AQSplit:
    b = split.blocks(n10)
    spill = max(float(np.max(np.abs(b.zero))), float(np.max(np.abs(b.up2))),
                float(np.max(np.abs(b.down2))))
    scale = max(float(np.max(np.abs(n10))), 1e-30)
    return AQSplit(b.plus, b.minus, spill / scale)


def jstar(split: NormalSplit, ax: np.ndarray, ay: np.ndarray):
    """(J * a) for an off-block 1-form: rotate values, star the form indices."""
    ti = split.tau(1j)
    ti_inv = split.tau(-1j)    # tau(1/i)
    return ti @ ay @ ti_inv, -(ti @ ax @ ti_inv)


# ---------------------------------------------------------------------------
# untwist / retwist of Laurent coefficients

def _collect(terms, offsets):
    """Accumulate weight-shifted contributions into power -> (dz, dzb) slots."""
    out: dict[int, list] = {}
    for base, sign, mat, slot, blocks in terms:
        for off, blk in blocks.items():
            m = base + offsets[off]
            if m not in out:
                out[m] = [None, None]
            cur = out[m][slot]
            val = sign * blk
            out[m][slot] = val if cur is None else cur + val
    return out


_UNTWIST_OFFSETS = {1: 1, -1: -1, 0: 0, 2: 2, -2: -2}
_RETWIST_OFFSETS = {1: -1, -1: 1, 0: 0, 2: -2, -2: 2}


def _family_terms(split: NormalSplit, zcoeffs, n10, power_of_index):
    """Terms of the tensorial part relative to the V-preserving connection:
    the off-block form plus every (power - 1) coefficient, with conjugates."""
    terms = []
    nb = split.blocks(n10)
    nbc = split.blocks(np.conj(n10))
    terms.append((0, 1.0, n10, 0, nb))
    terms.append((0, 1.0, np.conj(n10), 1, nbc))
    for i, z in enumerate(zcoeffs, start=1):
        b = split.blocks(z)
        bc = split.blocks(np.conj(z))
        terms.append((power_of_index(i), 1.0, z, 0, b))
        terms.append((0, -1.0, z, 0, b))
        terms.append((-power_of_index(i), 1.0, np.conj(z), 1, bc))
        terms.append((0, -1.0, np.conj(z), 1, bc))
    return terms


def _extract_positive(out, shape):
    """Positive-power dz coefficients + residuals of the storage contract."""
    top = max(m for m in out)
    coeffs = []
    bad = 0.0
    for m, (dz_, dzb_) in out.items():
        for slot, valid in ((dz_, m > 0), (dzb_, m < 0)):
            if slot is not None and not valid and m != 0:
                bad = max(bad, float(np.max(np.abs(slot))))
    for j in range(1, top + 1):
        pair = out.get(j)
        coeffs.append(np.zeros(shape, dtype=complex) if pair is None or
                      pair[0] is None else pair[0])
    while coeffs and float(np.max(np.abs(coeffs[-1]))) < TRIM_TOL:
        coeffs.pop()
    if not coeffs:
        # totally umbilic data: the family is trivial but must stay evaluable
        coeffs = [np.zeros(shape, dtype=complex)]
    return coeffs, bad


@dataclass
class UntwistResult:
    family: ConnectionFamily
    parity_residual: float     # odd powers of lam must cancel
    storage_residual: float    # wrong-slot (dz vs dzbar) leakage


def untwist(fam: ConnectionFamily, split: NormalSplit) -> UntwistResult:
    """tau(lam) . d^lam as a Laurent family in mu = lam^2.

    Assumes the family's first coefficient is the off-block derivative form of
    its surface (true for every family this package constructs).
    """
    n10 = fam.zcoeffs[0]
    terms = _family_terms(split, fam.zcoeffs, n10, lambda i: i)
    out = _collect(terms, _UNTWIST_OFFSETS)
    parity = 0.0
    even: dict[int, list] = {}
    for m, pair in out.items():
        vals = [v for v in pair if v is not None]
        if m % 2 != 0:
            for v in vals:
                parity = max(parity, float(np.max(np.abs(v))))
        else:
            even[m // 2] = pair
    coeffs, bad = _extract_positive(even, n10.shape)
    newfam = ConnectionFamily(fam.spec, coeffs, csc=None, backend=fam.backend)
    return UntwistResult(newfam, parity, bad)


def retwist(untw: ConnectionFamily, split: NormalSplit,
            n10: np.ndarray) -> UntwistResult:
    """Inverse gauge tau(lam)^-1 . nabla^{lam^2}: back to a twisted family.

    n10 is the off-block form of the surface carrying the untwisted family.
    """
    terms = _family_terms(split, untw.zcoeffs, n10, lambda j: 2 * j)
    out = _collect(terms, _RETWIST_OFFSETS)
    coeffs, bad = _extract_positive(out, n10.shape)
    newfam = ConnectionFamily(untw.spec, coeffs, csc=None, backend=untw.backend)
    return UntwistResult(newfam, 0.0, bad)


def pole_orders(k: int, top_plus_vanishes: bool | None = None) -> int:
    """Untwisted pole order for a twisted family of order k: (k-1)/2 when the
    top odd coefficient has no weight-lam block, else k/2 rounded up."""
    if k % 2 == 0:
        return k // 2
    if top_plus_vanishes:
        return (k - 1) // 2
    return (k + 1) // 2


def retwist_pole_order(l: int, top_minus_vanishes: bool,
                       top_zero_vanishes: bool) -> int:
    """Twisted pole order for an untwisted family of order l: the top
    coefficient's weight-(-1) block lands at power 2l+1 and its weight-0
    block at 2l, so the order drops as those blocks vanish."""
    if not top_minus_vanishes:
        return 2 * l + 1
    if not top_zero_vanishes:
        return 2 * l
    return 2 * l - 1


# ---------------------------------------------------------------------------
# untwisted simple-factor dressing

def untwisted_moebius(nu: complex):
    """phi(mu) = (1-nu*)(mu-nu) / ((1-nu)(mu-nu*)), nu* = 1/conj(nu); phi(1)=1."""
    nu = complex(nu)
    if nu == 0 or abs(abs(nu) - 1.0) < 1e-12:
        raise ValueError("nu must avoid 0 and the unit circle")
    nus = 1.0 / np.conj(nu)

    def phi(mu: complex) -> complex:
        if mu is np.inf:
            return (1.0 - nus) / (1.0 - nu)
        mu = complex(mu)
        if mu == nus:
            raise ValueError("untwisted factor evaluated at its pole")
        return (1.0 - nus) * (mu - nu) / ((1.0 - nu) * (mu - nus))

    return phi


@dataclass
class UntwistedFactor:
    """P(mu) = Gamma^M_{conj M}(phi(mu)) on a null line bundle M."""

    nu: complex
    u: np.ndarray              # spans M

    def __call__(self, mu: complex) -> np.ndarray:
        phi = untwisted_moebius(self.nu)
        return gamma_factor(self.u, np.conj(self.u), phi(mu))

    def at_zero(self) -> np.ndarray:
        return self(0.0)

    def at_inf(self) -> np.ndarray:
        return self(np.inf)

    def reality_residual(self, mu: complex, mask=None) -> float:
        a = self(mu)
        b = np.conj(self(1.0 / np.conj(mu)))
        r = np.abs(a - b)
        return float(np.max(r if mask is None else r[mask]))


@dataclass
class UntwistedDressResult:
    factor: UntwistedFactor
    split: NormalSplit
    wplus_hat: np.ndarray      # spans hat W+ = R(infty) W+
    wminus_hat: np.ndarray     # spans hat W- = R(0) W-
    equivalent: BacklundGauge  # twisted gauge with alpha = sqrt(nu)
    mask: np.ndarray
    equivalence_residual: float
    projection_residual: float

    def tau_hat(self, lam: complex) -> np.ndarray:
        return gamma_factor(self.wplus_hat, self.wminus_hat, lam)

    def twisted_gauge(self, lam: complex) -> np.ndarray:
        """r(lam) = tau_hat(lam)^-1 R(lam^2) tau(lam); finite at lam = 0 via
        the weight-matched projection of R(0)."""
        return self.tau_hat(1.0 / lam) @ self.factor(lam * lam) @ self.split.tau(lam)


def untwisted_dress(untw: ConnectionFamily, split: NormalSplit, nu: complex,
                    m0: np.ndarray | None = None,
                    rng: np.random.Generator | None = None,
                    substeps: int = 3,
                    sample_lams=(2.0, 0.7 - 0.4j)) -> UntwistedDressResult:
    """Dress with one untwisted factor on a nabla^nu-parallel null line M and
    verify the equivalence with the twisted two-factor gauge."""
    nu = complex(nu)
    if m0 is None:
        rng = rng or np.random.default_rng(0)
        m0 = _default_m0(split, rng)
    res = transport_line(untw, nu, m0, substeps=substeps)
    m = res.frames
    factor = UntwistedFactor(nu, m)
    mask = lz.complementarity(m, np.conj(m)) >= lz.COMPLEMENTARITY_EPS

    r0 = factor.at_zero()
    rinf = factor.at_inf()
    wplus_hat = lz.normalize(np.einsum("...ij,...j->...i", rinf, split.wplus))
    wminus_hat = lz.normalize(np.einsum("...ij,...j->...i", r0, split.wminus))

    alpha = complex(np.sqrt(nu))
    tau_inv = split.tau(1.0 / alpha)
    l0field = np.einsum("...ij,...j->...i", tau_inv, m)
    bg = algebraic_backlund(split.csc.basis, alpha, l0field)
    mask &= bg.mask

    out = UntwistedDressResult(factor, split, wplus_hat, wminus_hat, bg, mask,
                               0.0, 0.0)

    worst = 0.0
    for lam in sample_lams:
        a = out.twisted_gauge(lam)
        b = bg(lam)
        d = np.abs(a - b)
        if np.any(mask):
            worst = max(worst, float(np.max(d[mask])))
    out.equivalence_residual = worst

    # r(0) in closed form: only weight-matched blocks of R(0) survive the limit
    php, phm = _null_pair_projectors(wplus_hat, wminus_hat)
    phv = np.eye(6) - php - phm
    r0_proj = phv @ r0 @ split.pv + php @ r0 @ split.pp + phm @ r0 @ split.pm
    d = np.abs(r0_proj - bg.at_zero())
    out.projection_residual = float(np.max(d[mask])) if np.any(mask) else float("nan")
    return out


def _default_m0(split: NormalSplit, rng: np.random.Generator,
                tries: int = 64) -> np.ndarray:
    """Random complex null start transverse to its conjugate line.

    A real start would coincide with its conjugate, so the line is made
    genuinely complex and then pushed back onto the null cone along a
    transverse null helper direction.
    """
    h = split.wplus[0, 0]
    for _ in range(tries):
        v = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        vh = lz.inner(v, h)
        if abs(vh) < 1e-8:
            continue
        u = v - (lz.inner(v, v) / (2.0 * vh)) * h
        u = lz.normalize(u)
        if lz.complementarity(u, np.conj(u)) >= lz.COMPLEMENTARITY_EPS:
            return u
    raise RuntimeError("no transverse null start found")


def pole_scan(untw: ConnectionFamily, factor: UntwistedFactor, nu: complex,
              radii=(0.3, 0.1, 0.03), nsamp: int = 6) -> np.ndarray:
    """Max norm of the gauged connection on circles shrinking towards mu = nu.

    Bounded for a parallel line bundle (the singularity is removable); grows
    like 1/|mu - nu| otherwise.  Used as a negative control.
    """
    cut = untw.spec.cut_open()    # the line field carries monodromy
    vals = np.zeros(len(radii))
    for ir, r in enumerate(radii):
        worst = 0.0
        for t in range(nsamp):
            mu = nu + r * abs(nu) * np.exp(2j * np.pi * (t + 0.37) / nsamp)
            wx, wy = untw.omega(mu)
            gx, gy = lz.gauge_form(factor(mu), wx, wy, cut, g.FD2)
            worst = max(worst, g.max_norm(gx, cut), g.max_norm(gy, cut))
        vals[ir] = worst
    return vals
