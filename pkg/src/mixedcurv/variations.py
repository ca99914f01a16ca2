"""First-variation checks: metric families, frame evolution, action derivatives.

The left-hand side of every variation formula is measured by central finite
differences of the relevant scalar invariant along the metric family; the
right-hand side is assembled from the unvaried geometry bundle and the
infinitesimal variation, with every divergence evaluated through jets.  The
two sides never share a differentiation mechanism, so their agreement (and
its second-order convergence in the step) is evidence, not bookkeeping.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from . import exprlang
from .errors import ClassificationError, SpecializationError, SupportError
from .geometry import (PointGeometry, _t1, jet_matrix_inverse,
                       smix_density_fast, val)
from .jets import value_of
from .euler_lagrange import (QuadratureSpec, domain_mean, grid_points,
                             integrate, pairwise_sum, s_star, volume)

FD_STEPS = (1e-3, 5e-4, 2.5e-4)
ZERO_FLOOR = 5e-10


# ----------------------------------------------------------------------
# projector onto the distribution, closed form (no frame, jet-safe)

def tangent_projector_jets(struct, xs, metric_fn=None, gmat=None):
    """P[sigma][nu] jets of the g-orthogonal projector onto D-tilde.

    ``gmat`` lets callers reuse an already evaluated metric matrix."""
    d = struct.dim
    g = gmat if gmat is not None else (metric_fn or struct.metric_at)(xs)
    W = struct.dtilde_at(xs)                       # n rows of d components
    n = len(W)
    Wg = [[sum_s(W[k][m] * g[m][nu] for m in range(d)) for nu in range(d)]
          for k in range(n)]
    gram = [[sum_s(Wg[k][nn] * W[l][nn] for nn in range(d))
             for l in range(n)] for k in range(n)]
    ginv = jet_matrix_inverse(gram, n)
    GWg = [[sum_s(ginv[k][l] * Wg[l][nu] for l in range(n)) for nu in range(d)]
           for k in range(n)]
    P = [[sum_s(W[k][sig] * GWg[k][nu] for k in range(n))
          for nu in range(d)] for sig in range(d)]
    return P


def sum_s(items):
    acc = 0.0
    for x in items:
        acc = acc + x
    return acc


# ----------------------------------------------------------------------
# metric variations

@dataclass
class MetricVariation:
    """A symmetric (0,2) field B and the one-parameter family g + t B.

    ``klass`` declares the block structure: 'perp' keeps the metric on the
    distribution fixed (B vanishes on the D-tilde x D-tilde block), 'tan'
    varies it only there, 'general' is unrestricted.  With ``project`` the
    raw entries are block-projected pointwise so the class holds by
    construction; without it :func:`classify` validates the declaration.
    """

    struct: object
    raw: list                       # d x d matrix of expression ASTs (symmetric)
    klass: str = "perp"
    project: bool = True
    box: tuple = None               # support box of the bump, if any
    seed: int = None
    params: dict = field(default_factory=dict)

    def raw_at(self, xs):
        d = self.struct.dim
        env = list(xs)
        pr = {**self.struct.params, **self.params}
        out = [[0.0] * d for _ in range(d)]
        if self.box is not None:
            # exact compact support: the window expressions vanish to high
            # order at the box faces, and outside the box the field is zero
            for mu, (lo, hi) in enumerate(self.box):
                x = value_of(env[mu])
                if x <= lo or x >= hi:
                    return out
        for i in range(d):
            for j in range(i, d):
                v = exprlang.evaluate(self.raw[i][j], env, pr)
                out[i][j] = v
                if i != j:
                    out[j][i] = v
        return out

    def B_at(self, xs, metric_fn=None, gmat=None):
        B = self.raw_at(xs)
        if not self.project or self.klass == "general":
            return B
        if all(isinstance(x, float) and x == 0.0 for row in B for x in row):
            return B                      # outside the support: stay exactly zero
        d = self.struct.dim
        P = tangent_projector_jets(self.struct, xs, metric_fn=metric_fn,
                                   gmat=gmat)
        BP = [[sum_s(B[s][t] * P[t][j] for t in range(d)) for j in range(d)]
              for s in range(d)]
        PBP = [[sum_s(P[s][i] * BP[s][j] for s in range(d)) for j in range(d)]
               for i in range(d)]
        if self.klass == "tan":
            return PBP
        if self.klass == "perp":
            return [[B[i][j] - PBP[i][j] for j in range(d)] for i in range(d)]
        raise ClassificationError(f"unknown variation class {self.klass!r}")

    def metric_fn(self, t, base_metric_fn=None):
        base = base_metric_fn or self.struct.metric_at
        if t == 0.0:
            return base

        def fam(xs):
            g = base(xs)
            B = self.B_at(xs, metric_fn=base_metric_fn, gmat=g)
            d = len(g)
            return [[g[i][j] + t * B[i][j] for j in range(d)] for i in range(d)]

        return fam


def classify(v, points, tol=1e-12):
    """Block decomposition of the effective B; validates the declared class."""
    worst = {"tan": 0.0, "perp": 0.0, "mixed": 0.0}
    for pt in points:
        geom = PointGeometry(v.struct, pt)
        B0 = np.array([[val(x) for x in row] for row in v.B_at(list(pt))])
        Bfr = geom.F @ B0 @ geom.F.T
        n = geom.n
        worst["tan"] = max(worst["tan"], float(np.max(np.abs(Bfr[:n, :n]))))
        worst["perp"] = max(worst["perp"], float(np.max(np.abs(Bfr[n:, n:]))))
        worst["mixed"] = max(worst["mixed"], float(np.max(np.abs(Bfr[:n, n:]))))
    scale = max(1.0, *worst.values())
    if v.klass == "perp" and worst["tan"] > tol * scale:
        raise ClassificationError(
            f"declared perp-variation has a tangent block of size {worst['tan']:.2e}")
    if v.klass == "tan" and worst["perp"] + worst["mixed"] > tol * scale:
        raise ClassificationError(
            f"declared tan-variation leaks off the tangent block "
            f"(perp {worst['perp']:.2e}, mixed {worst['mixed']:.2e})")
    return worst


def random_variation(struct, klass, seed, box=None, degree=1):
    """Seeded bump-times-polynomial variation supported in ``box``."""
    rng = random.Random(seed)
    d = struct.dim
    if box is None:
        box = tuple((lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo))
                    for lo, hi in struct.domain)
    bump = None
    for mu, (lo, hi) in enumerate(box):
        mid, halfw = 0.5 * (lo + hi), 0.5 * (hi - lo)
        u = exprlang.mul(exprlang.const(math.pi / (2.0 * halfw)),
                         exprlang.sub(exprlang.var(mu), exprlang.const(mid)))
        w = exprlang.powc(exprlang.call("cos", u), 4)
        bump = w if bump is None else exprlang.mul(bump, w)
    raw = [[exprlang.const(0.0)] * d for _ in range(d)]
    for i in range(d):
        for j in range(i, d):
            poly = exprlang.const(rng.uniform(-1.0, 1.0))
            for k in range(degree):
                mu = rng.randrange(d)
                poly = exprlang.add(poly, exprlang.mul(
                    exprlang.const(rng.uniform(-1.0, 1.0)), exprlang.var(mu)))
            entry = exprlang.mul(bump, poly)
            raw[i][j] = entry
            raw[j][i] = entry
    return MetricVariation(struct=struct, raw=raw, klass=klass, box=box, seed=seed)


# ----------------------------------------------------------------------
# evolving adapted frames along a family

def evolve_frame(struct, v, point, t_end=0.1, steps=64, metric_fn=None):
    """4th-order integration of the adapted-frame evolution equations.

    Returns the frame path and the worst orthonormality/adaptedness drift,
    measured by recomputing g_t-inner-products directly at every grid time.
    """
    base = PointGeometry(struct, point, metric_fn=metric_fn)
    d, n = base.d, base.n
    frame = [list(map(float, vec)) for vec in base.F]
    signs = list(base.eps)
    B0 = np.array([[val(x) for x in row]
                   for row in v.B_at(list(point), metric_fn=metric_fn)])
    g_base = base.g0
    W = np.array([[val(c) for c in vec] for vec in struct.dtilde_at(list(point))]).T

    def g_at(t):
        return g_base + t * B0

    def rhs(t, fr):
        gt = g_at(t)
        try:
            gtinv = np.linalg.inv(gt)
        except np.linalg.LinAlgError:
            raise SpecializationError(f"family degenerates at t={t}")
        Bsharp = gtinv @ B0
        E = np.array(fr[:n])

        def tan_part(x):
            return sum(signs[a] * float(E[a] @ gt @ x) * E[a] for a in range(n))

        out = []
        for a in range(n):
            if v.klass in ("tan", "general"):
                out.append(-0.5 * tan_part(Bsharp @ np.array(fr[a])))
            else:
                out.append(np.zeros(d))
        for i in range(n, d):
            if v.klass == "tan":
                out.append(np.zeros(d))
            else:
                bx = Bsharp @ np.array(fr[i])
                tanp = tan_part(bx)
                out.append(-0.5 * (bx - tanp) - tanp)
        return out

    ts = [k * t_end / steps for k in range(steps + 1)]
    drift = 0.0
    path = [np.array(frame)]
    WtW = np.linalg.pinv(W.T @ W) @ W.T
    for k in range(steps):
        t0, t1 = ts[k], ts[k + 1]
        h = t1 - t0
        y = [np.array(row, float) for row in frame]
        k1 = rhs(t0, y)
        k2 = rhs(t0 + h / 2, [y[q] + h / 2 * k1[q] for q in range(d)])
        k3 = rhs(t0 + h / 2, [y[q] + h / 2 * k2[q] for q in range(d)])
        k4 = rhs(t1, [y[q] + h * k3[q] for q in range(d)])
        frame = [y[q] + h / 6 * (k1[q] + 2 * k2[q] + 2 * k3[q] + k4[q])
                 for q in range(d)]
        path.append(np.array(frame))
        gt = g_at(t1)
        G = np.array(frame) @ gt @ np.array(frame).T
        drift = max(drift, float(np.max(np.abs(G - np.diag(signs)))))
        for a in range(n):
            resid = frame[a] - W @ (WtW @ frame[a])
            drift = max(drift, float(np.max(np.abs(resid))))
    return path, drift


# ----------------------------------------------------------------------
# first-variation formulas

@dataclass
class VariationReport:
    formula: str
    lhs_fd: list
    rhs: float
    discrepancies: list
    order: float        # None when both sides vanish
    verdict: bool

    def to_dict(self):
        return self.__dict__ | {"verdict": bool(self.verdict)}


_SCALARS = {
    "E-tildeh-gen": ("norm_ht", "perp"),
    "E-tildeH-gen": ("gHtHt", "perp"),
    "E-h-gen": ("norm_h", "perp"),
    "E-H-gen": ("gHH", "perp"),
    "E-tildeT-gen": ("norm_Tt", "perp"),
    "E-T-gen": ("norm_T", "perp"),
    "E-h2T2-D1": ("s_ex_tilde", "perp"),
    "E-h2T2-D1b": ("s_ex", "perp"),
    "E-tildeh-gen2": ("norm_ht", "tan"),
    "E-tildeH-gen2": ("gHtHt", "tan"),
    "E-h-gen2": ("norm_h", "tan"),
    "E-H-gen2": ("gHH", "tan"),
    "E-tildeT-gen2": ("norm_Tt", "tan"),
    "E-T-gen2": ("norm_T", "tan"),
}

PERP_FORMULAS = [k for k, (_, c) in _SCALARS.items() if c == "perp"]
TAN_FORMULAS = [k for k, (_, c) in _SCALARS.items() if c == "tan"]


class _RHS:
    """Right-hand sides of the first-variation formulas at one point."""

    def __init__(self, geom, v, metric_fn=None):
        self.g = geom
        d = geom.d
        self.BJ = v.B_at(geom.seeds, metric_fn=metric_fn)
        self.B0 = np.array([[val(x) for x in row] for row in self.BJ])
        self.Bfr = geom.F @ self.B0 @ geom.F.T
        # raised-index B as order-1 jets for contractions with jet fields
        ginv1 = [[_t1(x) for x in row] for row in geom.ginvJ]
        B1 = [[_t1(x) for x in row] for row in self.BJ]
        self.Braised = [[sum_s(ginv1[nu][a] * B1[a][b] * ginv1[b][rho]
                               for a in range(d) for b in range(d))
                         for rho in range(d)] for nu in range(d)]

    # -- helpers ---------------------------------------------------------
    def pair(self, C_frame_full):
        return self.g.frame_pairing(np.asarray(C_frame_full), self.Bfr)

    def embed_perp(self, M):
        out = np.zeros((self.g.d, self.g.d))
        out[self.g.n:, self.g.n:] = M
        return out

    def embed_tan(self, M):
        out = np.zeros((self.g.d, self.g.d))
        out[:self.g.n, :self.g.n] = M
        return out

    def mixed_blocks(self, M_frame):
        out = np.zeros_like(M_frame)
        n = self.g.n
        out[:n, n:] = M_frame[:n, n:]
        out[n:, :n] = M_frame[n:, :n]
        return out

    def contract_field(self, PJ):
        """Vector jets <P, B>: P^s_{nu rho} B-raised^{nu rho}."""
        d = self.g.d
        return [sum_s(PJ[s][nu][rho] * self.Braised[nu][rho]
                      for nu in range(d) for rho in range(d)) for s in range(d)]

    def trace_block(self, side):
        """Tr_block B-sharp as a jet scalar (sum eps B(E, E) over the block)."""
        g = self.g
        d = g.d
        idx = range(g.n) if side == "tan" else range(g.n, d)
        B1 = [[_t1(x) for x in row] for row in self.BJ]
        acc = 0.0
        for k in idx:
            e = g.frame1[k]
            acc = acc + g.eps[k] * sum_s(e[nu] * B1[nu][rho] * e[rho]
                                         for nu in range(d) for rho in range(d))
        return acc

    def bsharp_vec(self, VJ):
        d = self.g.d
        return [sum_s(self.Braised[s][rho] * _gflat(self.g, VJ)[rho]
                      for rho in range(d)) for s in range(d)]

    # -- formula table ----------------------------------------------------
    def rhs(self, formula):
        g = self.g
        if formula == "E-tildeh-gen":
            div_ht = g.to_frame02(g.div_12(g.htilde_field))
            C = (div_ht - 4.0 * g.lam(g.alpha_tilde_b, g.theta_b)
                 + self.embed_perp(g.flat_perp(g.kcal_tilde)))
            return self.pair(C) - g.div_vector(self.contract_field(g.htilde_field))
        if formula == "E-tildeH-gen":
            C = (g.div_Ht * self.embed_perp(np.diag(g.eps_perp))
                 + 4.0 * g.pair_vec_12(g.theta_b, g.Htb_frame))
            trJ = self.trace_block("perp")
            VJ = [trJ * g.HtJ[s] for s in range(g.d)]
            return self.pair(C) - g.div_vector(VJ)
        if formula == "E-h-gen":
            div_a = g.to_frame02(g.div_12(g.alpha_field))
            C = (self.mixed_blocks(div_a)
                 + g.lam(g.alpha_b, g.alpha_tilde_b + g.theta_tilde_b))
            out = 2.0 * g.div_vector(self.contract_field(g.alpha_field))
            out -= 2.0 * self.pair(C)
            out += self.pair(g.phi_h)
            out -= float(g.H0 @ self.B0 @ g.H0)
            return out
        if formula == "E-H-gen":
            delta = np.zeros((g.d, g.d))
            blk = g.delta_tilde_of(g.HJ)
            delta[:g.n, g.n:] = blk
            delta[g.n:, :g.n] = blk.T
            C = g.pair_vec_12(g.theta_tilde_b - g.alpha_tilde_b, g.Hb_frame) - delta
            BH = self.bsharp_vec(g.HJ)
            BHtan = g.project1(BH, "tan")
            return (-float(g.H0 @ self.B0 @ g.H0)
                    + 2.0 * self.pair(C)
                    + 2.0 * float(g.H0 @ self.B0 @ g.Ht0)
                    + 2.0 * g.div_vector(BHtan))
        if formula == "E-tildeT-gen":
            div_tt = g.to_frame02(g.div_12(g.theta_tilde_field))
            C = (self.embed_perp(g.flat_perp(g.tcal_tilde))
                 + g.lam(g.theta_tilde_b, g.theta_b - g.alpha_b)
                 - self.mixed_blocks(div_tt))
            return (2.0 * self.pair(C)
                    + 2.0 * g.div_vector(self.contract_field(g.theta_tilde_field)))
        if formula == "E-T-gen":
            return -self.pair(g.phi_T)
        if formula == "E-h2T2-D1":
            return self.rhs("E-tildeH-gen") - self.rhs("E-tildeh-gen")
        if formula == "E-h2T2-D1b":
            return self.rhs("E-H-gen") - self.rhs("E-h-gen")
        if formula == "E-tildeh-gen2":
            return self.pair(g.phi_h_tilde) - float(g.Ht0 @ self.B0 @ g.Ht0)
        if formula == "E-tildeH-gen2":
            return -float(g.Ht0 @ self.B0 @ g.Ht0)
        if formula == "E-h-gen2":
            div_h = g.to_frame02(g.div_12(g.h_field))
            C = div_h + self.embed_tan(g.flat_tan(g.kcal))
            return self.pair(C) - g.div_vector(self.contract_field(g.h_field))
        if formula == "E-H-gen2":
            C = g.div_H * self.embed_tan(np.diag(g.eps_tan))
            trJ = self.trace_block("tan")
            VJ = [trJ * g.HJ[s] for s in range(g.d)]
            return self.pair(C) - g.div_vector(VJ)
        if formula == "E-tildeT-gen2":
            return -self.pair(g.phi_T_tilde)
        if formula == "E-T-gen2":
            return 2.0 * self.pair(self.embed_tan(g.flat_tan(g.tcal)))
        raise SpecializationError(f"unknown variation formula {formula!r}")


def _gflat(geom, VJ):
    d = geom.d
    return [sum_s(geom.g1[nu][rho] * VJ[rho] for rho in range(d)) for nu in range(d)]


def verify_first_variation(struct, v, point, formulas=None, steps=FD_STEPS,
                           tol=1e-5, metric_fn=None):
    """Central-difference LHS against jet-assembled RHS for each formula."""
    if formulas is None:
        formulas = PERP_FORMULAS if v.klass == "perp" else TAN_FORMULAS
    if isinstance(formulas, str):
        formulas = [formulas]
    for f in formulas:
        want = _SCALARS[f][1]
        if v.klass != want:
            raise ClassificationError(
                f"{f} applies to {want}-variations, got {v.klass!r}")

    geom0 = PointGeometry(struct, point, metric_fn=metric_fn)
    det0 = abs(np.linalg.det(geom0.g0))
    gmax = PointGeometry(struct, point, metric_fn=v.metric_fn(max(steps), metric_fn),
                         check_domain=False)
    if abs(np.linalg.det(gmax.g0)) < 0.5 * det0:
        raise SpecializationError("variation step leaves the metric cone")

    bundles = {}
    for h in steps:
        for s in (h, -h):
            if s not in bundles:
                bundles[s] = PointGeometry(struct, point,
                                           metric_fn=v.metric_fn(s, metric_fn))
    rhs_eng = _RHS(geom0, v, metric_fn=metric_fn)

    out = {}
    for f in formulas:
        attr = _SCALARS[f][0]
        fd = []
        for h in steps:
            fp = getattr(bundles[h], attr)
            fm = getattr(bundles[-h], attr)
            fd.append((fp - fm) / (2.0 * h))
        rhs = rhs_eng.rhs(f)
        disc = [abs(d_ - rhs) for d_ in fd]
        scale = max(abs(rhs), max(abs(d_) for d_ in fd))
        if scale < ZERO_FLOOR:
            out[f] = VariationReport(f, fd, rhs, disc, None, True)
            continue
        # second-order Richardson extrapolation of the FD sequence
        r = steps[-2] / steps[-1]
        fd_ext = (fd[-1] * r * r - fd[-2]) / (r * r - 1.0)
        disc_ext = abs(fd_ext - rhs)
        if disc[-1] < 5e-11 * max(1.0, scale):
            order = None
        else:
            order = math.log(max(disc[0], 1e-300) / disc[-1]) / math.log(
                steps[0] / steps[-1])
        verdict = min(disc[-1], disc_ext) <= tol * max(1.0, scale)
        out[f] = VariationReport(f, fd, rhs, disc, order, verdict)
    return out


# ----------------------------------------------------------------------
# the projection lemma for t-dependent vectors

def verify_projection_lemma(struct, v, point, xfield, steps=FD_STEPS,
                            metric_fn=None):
    """FD of the g_t-projections of X(t) against the stated formulas."""
    if v.klass != "perp":
        raise ClassificationError("the projection lemma is for perp-variations")
    d = struct.dim

    def proj_parts(t):
        fn = v.metric_fn(t, metric_fn)
        P = np.array([[val(x) for x in row]
                      for row in tangent_projector_jets(struct, list(point), fn)])
        X = np.asarray(xfield(t), float)
        return P @ X, X - P @ X

    geom0 = PointGeometry(struct, point, metric_fn=metric_fn)
    P0 = np.array([[val(x) for x in row]
                   for row in tangent_projector_jets(struct, list(point), metric_fn)])
    B0 = np.array([[val(x) for x in row]
                   for row in v.B_at(list(point), metric_fn=metric_fn)])
    X0 = np.asarray(xfield(0.0), float)
    h0 = steps[-1]
    dX = (np.asarray(xfield(h0), float) - np.asarray(xfield(-h0), float)) / (2 * h0)
    Xperp = X0 - P0 @ X0
    corr = P0 @ (geom0.ginv0 @ (B0 @ Xperp))
    rhs_tan = P0 @ dX + corr
    rhs_perp = dX - P0 @ dX - corr

    worst = 0.0
    for h in steps[-1:]:
        tp, tm = proj_parts(h), proj_parts(-h)
        fd_tan = (tp[0] - tm[0]) / (2 * h)
        fd_perp = (tp[1] - tm[1]) / (2 * h)
        worst = max(worst, float(np.max(np.abs(fd_tan - rhs_tan))),
                    float(np.max(np.abs(fd_perp - rhs_perp))))
    # the sharp-top identity (B-sharp X)^tan = (B-sharp X-perp)^tan
    lhs = P0 @ (geom0.ginv0 @ (B0 @ X0))
    worst_id = float(np.max(np.abs(lhs - corr)))
    return {"fd_vs_formula": worst, "bsharp_top_identity": worst_id}


# ----------------------------------------------------------------------
# action derivatives by quadrature

def _integrand(action):
    if action == "J_mix":
        def f(struct, pt, metric_fn):
            s, dens = smix_density_fast(struct, pt, metric_fn)
            return s * dens
    elif action == "J_Ttilde":
        def f(struct, pt, metric_fn):
            geom = PointGeometry(struct, pt, metric_fn=metric_fn,
                                 check_domain=False)
            return geom.norm_Tt * geom.volume_density
    elif action == "J_T":
        def f(struct, pt, metric_fn):
            geom = PointGeometry(struct, pt, metric_fn=metric_fn,
                                 check_domain=False)
            return geom.norm_T * geom.volume_density
    else:
        raise SpecializationError(f"unknown action {action!r}")
    return f


def check_support(struct, v, q, rtol=1e-9):
    """The variation must be negligible on the quadrature box boundary."""
    mid = [0.5 * (lo + hi) for lo, hi in q.box]
    interior = float(np.max(np.abs(v.raw_at(mid))))
    worst = 0.0
    for mu, (lo, hi) in enumerate(q.box):
        for edge in (lo, hi):
            pt = list(mid)
            pt[mu] = edge
            worst = max(worst, float(np.max(np.abs(v.raw_at(pt)))))
    if worst > rtol * max(1.0, interior):
        raise SupportError(
            f"variation is {worst:.2e} on the box boundary (support leak)")
    return worst


def action_value(struct, q, action, metric_fn=None):
    f = _integrand(action)
    pts, wts = grid_points(q)
    return pairwise_sum(f(struct, pt, metric_fn) * w for pt, w in zip(pts, wts))


def action_derivative(struct, v, q, action="J_mix", t_step=1e-3,
                      metric_fn=None, enforce_support=True):
    """d/dt at t=0 of the quadrature action along the family, by central FD.

    Quadrature nodes where the variation vanishes identically contribute the
    same value at +t and -t, so only nodes inside the support enter the
    difference; this is exact, not an approximation.
    """
    if enforce_support:
        check_support(struct, v, q)
    f = _integrand(action)
    fp = v.metric_fn(t_step, metric_fn)
    fm = v.metric_fn(-t_step, metric_fn)
    pts, wts = grid_points(q)

    def node(pt, w):
        if v.box is not None and not _inside(pt, v.box):
            return 0.0
        return (f(struct, pt, fp) - f(struct, pt, fm)) * w

    return pairwise_sum(node(pt, w) for pt, w in zip(pts, wts)) / (2.0 * t_step)


def _inside(pt, box):
    return all(lo < x < hi for x, (lo, hi) in zip(pt, box))


def jmix_gradient_pairing(struct, v, q, metric_fn=None):
    """The assembled gradient form of the mixed-curvature action paired with B,
    integrated over the box: the independent side of the action-derivative
    consistency check."""
    pts, wts = grid_points(q)

    def one(pt, w):
        geom = PointGeometry(struct, pt, metric_fn=metric_fn, check_domain=False)
        e = _RHS(geom, v, metric_fn=metric_fn)
        g = geom
        n = g.n
        div_ht = g.to_frame02(g.div_12(g.htilde_field))
        div_a = g.to_frame02(g.div_12(g.alpha_field))
        div_tt = g.to_frame02(g.div_12(g.theta_tilde_field))
        delta = np.zeros((g.d, g.d))
        blk = g.delta_tilde_of(g.HJ)
        delta[:n, n:] = blk
        delta[n:, :n] = blk.T
        C = (4.0 * g.lam(g.alpha_tilde_b, g.theta_b)
             - div_ht
             - e.embed_perp(g.flat_perp(g.kcal_tilde))
             - g.phi_h - g.phi_T
             + 2.0 * e.embed_perp(g.flat_perp(g.tcal_tilde))
             + 4.0 * g.pair_vec_12(g.theta_b, g.Htb_frame)
             + 2.0 * e.mixed_blocks(div_a - div_tt)
             + 2.0 * g.lam(g.alpha_b, g.alpha_tilde_b + g.theta_tilde_b)
             + 2.0 * g.pair_vec_12(g.theta_tilde_b - g.alpha_tilde_b, g.Hb_frame)
             - 2.0 * delta
             + 2.0 * g.lam(g.theta_tilde_b, g.theta_b - g.alpha_b))
        C += (np.outer(g.Hb_frame, g.Htb_frame) + np.outer(g.Htb_frame, g.Hb_frame))
        C += 0.5 * (g.smix + g.div_Ht - g.div_H) * e.embed_perp(np.diag(g.eps_perp))
        return e.pair(C) * g.volume_density * w

    return pairwise_sum(one(pt, w) for pt, w in zip(pts, wts))


# ----------------------------------------------------------------------
# volume-normalized families

def _perp_scaled_metric(struct, factor, base_metric_fn=None):
    """Scale the complement block of the metric by a spatially constant factor."""
    base = base_metric_fn or struct.metric_at

    def fn(xs):
        g = base(xs)
        d = len(g)
        P = tangent_projector_jets(struct, xs, metric_fn=base, gmat=g)
        # g(QX, QY) with Q = I - P equals g - gP - (gP)^T + P^T g P
        gP = [[sum_s(g[i][s] * P[s][j] for s in range(d)) for j in range(d)]
              for i in range(d)]
        PgP = [[sum_s(P[s][i] * gP[s][j] for s in range(d)) for j in range(d)]
               for i in range(d)]
        scale = factor - 1.0
        return [[g[i][j] + scale * (g[i][j] - gP[i][j] - gP[j][i] + PgP[i][j])
                 for j in range(d)] for i in range(d)]

    return fn


def bar_family_metric(struct, v, q, t, base_metric_fn=None):
    """The volume-normalized family: complement block rescaled so that the
    box volume is preserved along the variation."""
    gt = v.metric_fn(t, base_metric_fn)
    vol0 = volume(struct, q, metric_fn=base_metric_fn)
    volt = volume(struct, q, metric_fn=gt)
    phi = (volt / vol0) ** (-2.0 / (struct.dim - struct.n))
    return _perp_scaled_metric(struct, phi, base_metric_fn=gt), phi


def verify_bar_relation(struct, v, q, t_step=2e-3, metric_fn=None,
                        sstar_grid=None):
    """Volume constancy of the normalized family and the action relation
    linking its derivative to the unnormalized one.

    ``sstar_grid`` controls the quadrature resolution of the starred-scalar
    mean entering the relation; it is a constant of the check, so a coarser
    grid than the action quadrature is usually enough.
    """
    if v.klass != "perp":
        raise ClassificationError("the bar construction starts from a perp-variation")
    check_support(struct, v, q)
    vol0 = volume(struct, q, metric_fn=metric_fn)
    p = struct.dim - struct.n
    q_star = q if sstar_grid is None else QuadratureSpec(
        box=q.box, grid=sstar_grid, rule=q.rule)

    vols, jbars, phis = {}, {}, {}
    for s in (t_step, -t_step):
        fn, phi = bar_family_metric(struct, v, q, s, base_metric_fn=metric_fn)
        vols[s] = volume(struct, q, metric_fn=fn)
        jbars[s] = action_value(struct, q, "J_mix", metric_fn=fn)
        phis[s] = phi
    vol_drift = max(abs(vols[s] - vol0) / vol0 for s in vols)

    djbar = (jbars[t_step] - jbars[-t_step]) / (2.0 * t_step)
    dj = action_derivative(struct, v, q, "J_mix", t_step=t_step,
                           metric_fn=metric_fn, enforce_support=False)
    dphi = (phis[t_step] - phis[-t_step]) / (2.0 * t_step)

    def sstar_field(s, pt, m):
        return s_star(PointGeometry(s, pt, metric_fn=m, check_domain=False), "perp")

    star_mean = domain_mean(struct, sstar_field, q_star, metric_fn=metric_fn)

    def trb_field(s, pt, m):
        B0 = np.array([[val(x) for x in row] for row in v.B_at(list(pt), m)])
        if not B0.any():
            return 0.0
        rows = (m or s.metric_at)(list(pt))
        g0 = np.array([[val(x) for x in row] for row in rows])
        return float(np.trace(np.linalg.inv(g0) @ B0))

    int_trB = integrate(struct, lambda s, pt, m: trb_field(s, pt, m)
                        * _dens(s, pt, m), q, metric_fn=metric_fn)
    relation_residual = abs(djbar - (dj - 0.5 * star_mean * int_trB))
    dphi_expected = -(1.0 / p) * int_trB / vol0
    return {
        "volume_drift": vol_drift,
        "dJ_bar": djbar,
        "dJ": dj,
        "s_star_mean": star_mean,
        "int_trace_B": int_trB,
        "relation_residual": relation_residual,
        "dphi_fd": dphi,
        "dphi_expected": dphi_expected,
        "dphi_residual": abs(dphi - dphi_expected),
    }


def _dens(struct, pt, metric_fn):
    return PointGeometry(struct, pt, metric_fn=metric_fn,
                         check_domain=False).volume_density


def tildeT_scaling_check(struct, point, factor, metric_fn=None):
    """Exact scaling laws of the integrability norms under a constant
    rescaling of the complement block."""
    if factor <= 0:
        raise SpecializationError("block scaling needs a positive factor")
    base = PointGeometry(struct, point, metric_fn=metric_fn)
    fn = _perp_scaled_metric(struct, factor, base_metric_fn=metric_fn)
    scaled = PointGeometry(struct, point, metric_fn=fn)
    return {
        "norm_Tt_scaled": scaled.norm_Tt,
        "norm_Tt_expected": base.norm_Tt / factor ** 2,
        "norm_T_scaled": scaled.norm_T,
        "norm_T_expected": factor * base.norm_T,
        "residual": max(abs(scaled.norm_Tt - base.norm_Tt / factor ** 2),
                        abs(scaled.norm_T - factor * base.norm_T)),
    }
