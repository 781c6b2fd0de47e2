"""Separability, SSC and p-SSC verifiers with certificates.

The dual cone of the rows of a nonnegative matrix ``h`` is
``{y : h @ y >= 0}``; its cross-section against ``sum(y) == 1`` is a
polytope whose vertices decide SSC1 (all norms at most one), SSC2 (norm-one
vertices sit at unit vectors) and p-SSC (all vertices inside the dual of the
expanded cone ``C_p = {x >= 0 : sum(x) >= p*||x||}``).  Exact SSC checking
is NP-hard in general, so enumeration is capped and a refutation search
takes over beyond the cap: a returned certificate proves SSC1 fails, but
absence of one proves nothing.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EnumerationCapError, UsageError, WitnessError
from .lp import linprog_dense

ENUM_CAP_R = 8
ENUM_CAP_N = 60
_DEDUP_TOL = 1e-9


def _validate_nonneg(h, name="h"):
    h = np.asarray(h, dtype=float)
    if h.ndim != 2:
        raise UsageError(f"{name} must be a matrix")
    if h.size and h.min() < -1e-12:
        raise UsageError(f"{name} has negative entries")
    return np.maximum(h, 0.0)


def check_separable(h, tol=1e-9):
    """Anchor-row test: one row proportional to each unit vector.

    Returns ``(flag, anchors)`` with one anchor row index per column when
    separable, else ``(False, None)``.
    """
    h = _validate_nonneg(h)
    n, r = h.shape
    anchors = []
    for k in range(r):
        rows = None
        for i in range(n):
            m = h[i].max()
            if h[i, k] > 0 and h[i].sum() - h[i, k] <= tol * m:
                rows = i
                break
        if rows is None:
            return False, None
        anchors.append(rows)
    return True, anchors


def enumerate_dual_vertices(h, tol=1e-9):
    """Vertices of ``{y : h y >= 0, sum(y) = 1}`` plus an unboundedness flag.

    Every vertex activates the normalization and r-1 rows of ``h``; all
    such subsets are solved, feasibility-filtered and deduplicated.  The
    polytope is unbounded iff a nonzero recession direction ``h z >= 0``,
    ``sum(z) = 0`` exists, which 2r small LPs detect.
    """
    h = np.asarray(h, dtype=float)
    n, r = h.shape
    if r < 2:
        raise UsageError("dual-vertex enumeration needs r >= 2")
    if r > ENUM_CAP_R or n > ENUM_CAP_N:
        raise EnumerationCapError(
            f"enumeration cap exceeded (r={r} > {ENUM_CAP_R} or "
            f"n={n} > {ENUM_CAP_N})"
        )
    scale = max(1.0, float(np.abs(h).max(initial=0.0)))

    combos = list(itertools.combinations(range(n), r - 1))
    vertices = []
    if combos:
        M = np.empty((len(combos), r, r))
        for idx, combo in enumerate(combos):
            M[idx, : r - 1] = h[list(combo)]
            M[idx, r - 1] = 1.0
        dets = np.abs(np.linalg.det(M))
        good = dets > 1e-12 * scale ** (r - 1)
        if good.any():
            rhs = np.zeros(r)
            rhs[-1] = 1.0
            ys = np.linalg.solve(M[good], rhs)
            feas = (h @ ys.T).min(axis=0) >= -tol * scale
            for y in ys[feas]:
                if not any(np.abs(y - v).max() <= _DEDUP_TOL
                           for v in vertices):
                    vertices.append(y)
    vertices.sort(key=tuple)
    verts = np.array(vertices).reshape(len(vertices), r)

    unbounded = False
    ones = np.ones((1, r))
    box = [(-1.0, 1.0)] * r
    for k in range(r):
        for sgn in (1.0, -1.0):
            c = np.zeros(r)
            c[k] = sgn
            res = linprog_dense(c, a_ub=-h, b_ub=np.zeros(n),
                                a_eq=ones, b_eq=[0.0], bounds=box,
                                maximize=True)
            if res.status == "optimal" and res.value > 1e-7:
                unbounded = True
                break
        if unbounded:
            break
    return verts, unbounded


def _project_simplex(y):
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, y.size + 1)
    idx = np.nonzero(u - css / ks > 0)[0][-1]
    tau = css[idx] / (idx + 1.0)
    return np.maximum(y - tau, 0.0)


def _polish_feasible(x, p):
    """Exact point of {x >= 0, sum(x)=1, ||x|| <= 1/p} near x."""
    r = x.size
    x = _project_simplex(x)
    center = np.full(r, 1.0 / r)
    radius = math.sqrt(max(1.0 / p**2 - 1.0 / r, 0.0))
    dev = x - center
    nrm = np.linalg.norm(dev)
    if nrm > radius:
        x = center + dev * (radius / nrm if nrm > 0 else 0.0)
    return x


def _cp_dual_margin(v, p, tol=1e-9):
    """min { x.v : x in C_p, sum(x) = 1 }, >= 0 iff v is in the dual of C_p.

    The feasible set is simplex-intersect-ball; a linear objective attains
    its minimum at an extreme point, and every extreme point is either a
    feasible unit vector or, on the face supported on S, one of the two
    KKT points ``e/|S| +- rho * unit(v_S - mean(v_S))`` of the active
    sphere.  Dimension r is capped at 8, so enumerating all supports is
    exact and cheap.  The minimizer over the enclosing disc
    ``{sum(x)=1, ||x|| <= 1/p}`` is used first: when it is nonnegative it
    is the exact optimum, and its value is always a valid lower bound, so
    a value clearing ``-tol`` certifies membership outright.
    """
    v = np.asarray(v, dtype=float)
    r = v.size
    center = np.full(r, 1.0 / r)
    radius = math.sqrt(max(1.0 / p**2 - 1.0 / r, 0.0))
    g = v - (v.sum() / r)
    gn = np.linalg.norm(g)
    disc = center - radius * g / gn if gn > 1e-300 else center.copy()
    disc_val = float(v @ disc)
    if disc.min() >= -1e-12:
        return disc_val
    if disc_val >= -tol:  # lower bound over a superset already clears -tol
        return disc_val

    best = math.inf
    if p <= 1.0 + 1e-12:
        best = float(v.min())  # unit vectors are feasible only when p <= 1
    for s in range(2, r + 1):
        if p > math.sqrt(s) + 1e-12:
            continue
        rho = math.sqrt(max(1.0 / p**2 - 1.0 / s, 0.0))
        idx = np.array(list(itertools.combinations(range(r), s)))
        vs = v[idx]                                   # (K, s)
        dev = vs - vs.mean(axis=1, keepdims=True)
        dn = np.linalg.norm(dev, axis=1, keepdims=True)
        unit = np.divide(dev, dn, out=np.zeros_like(dev), where=dn > 1e-300)
        for sign in (-1.0, 1.0):
            x = 1.0 / s + sign * rho * unit
            feas = x.min(axis=1) >= -1e-12
            if feas.any():
                vals = np.einsum("ks,ks->k", vs[feas], x[feas])
                best = min(best, float(vals.min()))
    return best


def _pssc_from_vertices(vertices, unbounded, p, tol):
    if unbounded:
        return False
    if len(vertices):
        # Likely violators first: large-norm vertices sit furthest outside.
        order = np.argsort(-np.linalg.norm(vertices, axis=1))
        for v in vertices[order]:
            if _cp_dual_margin(v, p, tol=tol) < -tol:
                return False
    return True


def check_pssc(h, p, tol=1e-9):
    """Does ``cone(h.T)`` contain ``C_p``?  Decided on the dual side.

    p = 1 is separability, p = sqrt(r-1) is SSC1.
    """
    h = _validate_nonneg(h)
    r = h.shape[1]
    if r < 2:
        raise UsageError("p-SSC needs r >= 2")
    if not 1.0 - 1e-12 <= p <= math.sqrt(r) + 1e-12:
        raise UsageError(f"p={p} outside [1, sqrt(r)] for r={r}")
    vertices, unbounded = enumerate_dual_vertices(h, tol=max(tol, 1e-9))
    return _pssc_from_vertices(vertices, unbounded, p, tol)


def estimate_min_p(h, tol=1e-6):
    """Smallest p with the p-SSC, by bisection; inf when SSC1 fails."""
    h = _validate_nonneg(h)
    r = h.shape[1]
    if r < 2:
        raise UsageError("p-SSC needs r >= 2")
    vertices, unbounded = enumerate_dual_vertices(h)
    hi = math.sqrt(r - 1.0)
    if not _pssc_from_vertices(vertices, unbounded, hi, 1e-9):
        return math.inf
    lo = 1.0
    if _pssc_from_vertices(vertices, unbounded, lo, 1e-9):
        return 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _pssc_from_vertices(vertices, unbounded, mid, 1e-9):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class SscReport:
    """Verdicts and certificates for one matrix.

    ``ssc1``/``ssc2`` are None when undetermined (enumeration over the cap
    and no refutation found).  A ``refutation`` vector certifies an SSC1
    failure: ``h y >= -tol``, ``sum(y) = 1`` and ``||y|| > 1 + tol``.
    """

    separable: bool
    anchors: Optional[list]
    ssc1: Optional[bool]
    ssc2: Optional[bool]
    dual_vertices: Optional[np.ndarray]
    max_vertex_norm: Optional[float]
    unbounded: Optional[bool]
    refutation: Optional[np.ndarray]
    method: str  # "exact-enumeration" | "refutation-search-only"

    @property
    def ssc(self) -> Optional[bool]:
        if self.ssc1 is False or self.ssc2 is False:
            return False
        if self.ssc1 is None or self.ssc2 is None:
            return None
        return bool(self.ssc1 and self.ssc2)

    @property
    def undetermined(self) -> bool:
        return self.ssc is None

    def to_json(self) -> dict:
        return {
            "separable": self.separable,
            "anchors": self.anchors,
            "ssc1": self.ssc1,
            "ssc2": self.ssc2,
            "ssc": self.ssc,
            "dual_vertices": None if self.dual_vertices is None
            else self.dual_vertices.tolist(),
            "max_vertex_norm": self.max_vertex_norm,
            "unbounded": self.unbounded,
            "refutation": None if self.refutation is None
            else self.refutation.tolist(),
            "method": self.method,
        }


def check_ssc(h, tol=1e-7, feas_tol=1e-9, rng=None) -> SscReport:
    """Full SSC report via dual-vertex enumeration when feasible.

    SSC1 holds iff the cross-section is bounded and every vertex has norm
    at most one (the maximum of a convex function over a polytope sits at a
    vertex); SSC2 additionally pins every norm-one vertex to a unit vector.
    """
    h = _validate_nonneg(h)
    n, r = h.shape
    if r < 2:
        raise UsageError("the SSC is defined for r >= 2")
    if np.any(h.sum(axis=0) <= 0):
        raise UsageError("zero column in h")
    separable, anchors = check_separable(h)
    try:
        vertices, unbounded = enumerate_dual_vertices(h, tol=feas_tol)
    except EnumerationCapError:
        y = ssc1_refute(h, rng=rng, tol=tol, feas_tol=feas_tol)
        return SscReport(
            separable=separable, anchors=anchors,
            ssc1=False if y is not None else None, ssc2=None,
            dual_vertices=None, max_vertex_norm=None, unbounded=None,
            refutation=y, method="refutation-search-only",
        )
    norms = np.linalg.norm(vertices, axis=1) if vertices.size else np.zeros(0)
    max_norm = float(norms.max()) if norms.size else 0.0
    ssc1 = (not unbounded) and max_norm <= 1.0 + tol
    ssc2 = True
    for v, nv in zip(vertices, norms):
        if nv >= 1.0 - tol:
            dist = min(np.linalg.norm(v - np.eye(r)[k]) for k in range(r))
            if dist > tol:
                ssc2 = False
                break
    refutation = None
    if not ssc1:
        if norms.size and max_norm > 1.0 + tol:
            refutation = vertices[int(np.argmax(norms))]
        else:
            refutation = ssc1_refute(h, rng=rng, tol=tol, feas_tol=feas_tol)
    return SscReport(
        separable=separable, anchors=anchors, ssc1=ssc1, ssc2=ssc2,
        dual_vertices=vertices, max_vertex_norm=max_norm,
        unbounded=unbounded, refutation=refutation,
        method="exact-enumeration",
    )


def ssc1_refute(h, rng=None, starts=10, iters=60, tol=1e-7,
                feas_tol=1e-9, seeds=None):
    """Search for a certificate that SSC1 fails.

    Frank-Wolfe steps maximize the norm over the dual cross-section: from
    the current point, an LP moves to the vertex maximizing the linearized
    objective, which can only increase the norm.  ``seeds`` may supply
    analytic starting points.  Returning None proves nothing.
    """
    h = np.asarray(h, dtype=float)
    n, r = h.shape
    if rng is None:
        rng = np.random.default_rng(0)
    elif isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    scale = max(1.0, float(np.abs(h).max(initial=0.0)))
    a_ub, b_ub = -h, np.zeros(n)
    ones = np.ones((1, r))

    def feasible(y):
        return (h @ y).min() >= -feas_tol * scale and abs(y.sum() - 1) <= 1e-7

    cands = []
    if seeds is not None:
        for s in seeds:
            s = np.asarray(s, dtype=float).ravel()
            if abs(s.sum()) > 1e-12:
                cands.append(s / s.sum())
    cands.append(np.full(r, 1.0 / r))
    directions = [sgn * np.eye(r)[k] for k in range(r) for sgn in (1., -1.)]
    directions += [rng.standard_normal(r) for _ in range(starts)]
    for c in directions:
        res = linprog_dense(c, a_ub=a_ub, b_ub=b_ub,
                            a_eq=ones, b_eq=[1.0], maximize=True)
        if res.status == "optimal":
            cands.append(res.x)
        elif res.status == "unbounded":
            cands.append(_walk_ray(res.x, res.ray))

    best = None
    for y0 in cands:
        if not feasible(y0):
            continue
        y = y0.copy()
        for _ in range(iters):
            res = linprog_dense(y, a_ub=a_ub, b_ub=b_ub, a_eq=ones,
                                b_eq=[1.0], maximize=True)
            if res.status == "unbounded":
                y = _walk_ray(res.x, res.ray)
                break
            if res.status != "optimal":
                break
            z = res.x
            if np.linalg.norm(z) <= np.linalg.norm(y) * (1 + 1e-12):
                break
            y = z
        if best is None or np.linalg.norm(y) > np.linalg.norm(best):
            best = y
    if best is not None and np.linalg.norm(best) > 1.0 + tol \
            and feasible(best):
        return best
    return None


def _walk_ray(x, ray, target_norm=10.0):
    nr = np.linalg.norm(ray)
    if nr < 1e-300:
        return x
    t = (target_norm + np.linalg.norm(x)) / nr
    return x + t * ray


def kron_ssc_margin(r1, p1_sq, r2, p2_sq) -> float:
    """Left side of the Kronecker-SSC sufficient condition.

    The product of an SSC + p1-SSC factor with an SSC + p2-SSC factor
    satisfies the SSC when this quantity is at least one.
    """
    for r, psq in ((r1, p1_sq), (r2, p2_sq)):
        if r < 2:
            raise UsageError("factors need r >= 2")
        if not 1.0 - 1e-12 <= psq <= r - 1.0 + 1e-9:
            raise UsageError(f"p^2={psq} outside [1, r-1] for r={r}")
    t1 = math.sqrt((r1 - p1_sq) / (p1_sq * (r1 - 1.0)))
    t2 = math.sqrt((r2 - p2_sq) / (p2_sq * (r2 - 1.0)))
    return t1 + t2


def kron_ssc_sufficient(r1, p1, r2, p2) -> bool:
    return kron_ssc_margin(r1, p1 * p1, r2, p2 * p2) >= 1.0


def counterexample_dims_ok(r1, r2) -> bool:
    """Dimension condition under which SSC factors with a non-SSC Kronecker
    product exist: r1*r2 - 1 < (r1-1)^2 (r2-1), with r1 <= r2."""
    r1, r2 = int(r1), int(r2)
    if r1 > r2:
        r1, r2 = r2, r1
    return r1 * r2 - 1 < (r1 - 1) ** 2 * (r2 - 1)


def _ones_complement_basis(r, k):
    """k orthonormal columns orthogonal to the all-ones vector.

    Deterministic: the Householder reflection mapping e_1 to e/sqrt(r) has
    the remaining columns orthogonal to e; keep the first k of them.
    """
    target = np.full(r, 1.0 / math.sqrt(r))
    w = np.eye(r)[0] - target
    nw = np.linalg.norm(w)
    H = np.eye(r) if nw < 1e-15 else np.eye(r) - 2.0 * np.outer(w, w) / nw**2
    return H[:, 1:k + 1]


def ssc1_violation_witness(u1, u2, feas_tol=1e-12):
    """Analytic SSC1 refutation for a Kronecker product of row-stochastic
    factors whose rows cluster around the simplex center.

    With ``c_i`` the largest squared row distance to ``e/r_i`` and
    ``c1*c2 < (r1-1) / (r1*r2*(r1*r2-1))``, the matrix
    ``V = lam*E/sqrt(r1*r2) + B`` (``lam = sqrt(c1*c2*r1*r2)``, ``B`` a
    norm-one bilinear form vanishing on the ones vectors with
    ``||B||_F^2 = r1-1``) satisfies ``u1 V u2' >= 0`` while
    ``sum(V) < ||V||_F``; its vectorization refutes SSC1 of the product.
    Returns None when the bound does not hold.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    for u, name in ((u1, "u1"), (u2, "u2")):
        if u.ndim != 2 or u.shape[1] < 2:
            raise UsageError(f"{name} must be a matrix with r >= 2")
        if u.min() < -1e-12:
            raise UsageError(f"{name} has negative entries")
        if np.abs(u.sum(axis=1) - 1.0).max() > 1e-9:
            raise UsageError(f"{name} is not row-stochastic")
    r1, r2 = u1.shape[1], u2.shape[1]
    if r1 > r2:
        W = ssc1_violation_witness(u2, u1, feas_tol)
        return None if W is None else W.T
    c1 = float((np.linalg.norm(u1 - 1.0 / r1, axis=1) ** 2).max())
    c2 = float((np.linalg.norm(u2 - 1.0 / r2, axis=1) ** 2).max())
    bound = (r1 - 1.0) / (r1 * r2 * (r1 * r2 - 1.0))
    if not c1 * c2 < bound:
        return None
    lam = math.sqrt(c1 * c2 * r1 * r2)
    if not lam**2 < (r1 - 1.0) / (r1 * r2 - 1.0):
        raise WitnessError("lambda bound failed despite c1*c2 < bound")
    B = _ones_complement_basis(r1, r1 - 1) @ _ones_complement_basis(
        r2, r1 - 1).T
    V = lam * np.ones((r1, r2)) / math.sqrt(r1 * r2) + B
    if (u1 @ V @ u2.T).min() < -feas_tol:
        raise WitnessError("constructed V is not nonnegative on the factors")
    if not V.sum() < np.linalg.norm(V):
        raise WitnessError("constructed V does not violate the norm bound")
    return V
