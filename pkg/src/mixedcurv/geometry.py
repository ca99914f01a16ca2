"""Extrinsic geometry of an adapted splitting at a chart point.

One evaluation pass drives everything: the metric (and the distribution's
spanning fields) are evaluated on order-2 jets, the adapted frame is built by
Gram-Schmidt *on jets*, and every first-derivative tensor (second fundamental
forms, integrability tensors, mean curvatures, the alpha/theta families) is
assembled in jet arithmetic so that its chart components carry their own
spatial gradients.  Divergences, deformation tensors and gradients of derived
scalars then read those gradients directly; curvature uses the order-2
information of the Christoffel jets.  No finite differencing happens anywhere
in this module.

Curvature convention: R(X,Y) = nabla_Y nabla_X - nabla_X nabla_Y + nabla_[X,Y],
the sign for which round spheres have sectional curvature +1 under
K(X^Y) = g(R(X,Y)X, Y) / W(X,Y).
"""

from __future__ import annotations

import math
import random
from functools import cached_property

import numpy as np

from .errors import SingularEvaluationError, SpecializationError
from .jets import Jet, seed, value_of
from .structure import orthonormal_frame


def val(x):
    return value_of(x)


def grad_vals(x, d):
    if isinstance(x, Jet):
        return [value_of(c) for c in x.g]
    return [0.0] * d


def _promote(x, d):
    """Coerce a plain scalar to a zero-derivative order-2 jet."""
    if isinstance(x, Jet):
        return x
    z = (0.0,) * d
    return Jet(float(x), z, tuple(z for _ in range(d)))


def _t1(x):
    """Truncate to order 1 (used for field-level algebra)."""
    if isinstance(x, Jet) and x.h is not None:
        return Jet(x.v, x.g, None)
    return x


def _dshift(x, mu, d):
    """The partial derivative of an order-2 jet, as an order-1 jet."""
    if isinstance(x, Jet):
        if x.h is None:
            raise SingularEvaluationError("second-order jet required for field derivative")
        return Jet(x.g[mu], x.h[mu], None)
    return 0.0


def jet_matrix_inverse(M, d, point=None):
    """Gauss-Jordan inverse over jet scalars, pivoting on absolute values."""
    A = [[M[i][j] for j in range(d)] for i in range(d)]
    I = [[1.0 if i == j else 0.0 for j in range(d)] for i in range(d)]
    scale = max(abs(val(M[i][j])) for i in range(d) for j in range(d))
    for col in range(d):
        piv = max(range(col, d), key=lambda r: abs(val(A[r][col])))
        if abs(val(A[piv][col])) < 1e-14 * max(scale, 1e-300):
            raise SingularEvaluationError("singular metric", point=point)
        A[col], A[piv] = A[piv], A[col]
        I[col], I[piv] = I[piv], I[col]
        inv = 1.0 / A[col][col]
        A[col] = [x * inv for x in A[col]]
        I[col] = [x * inv for x in I[col]]
        for r in range(d):
            if r == col:
                continue
            f = A[r][col]
            if isinstance(f, Jet) or f != 0.0:
                A[r] = [A[r][j] - f * A[col][j] for j in range(d)]
                I[r] = [I[r][j] - f * I[col][j] for j in range(d)]
    return I


class PointGeometry:
    """Geometry bundle of (structure, metric) at one interior chart point.

    ``metric_fn``/``dtilde_fn`` default to the structure's own expressions;
    passing replacements evaluates a modified metric (variations, conformal
    changes, block rescalings) over the same distribution.
    """

    def __init__(self, struct, point, metric_fn=None, dtilde_fn=None, check_domain=True):
        self.struct = struct
        self.point = tuple(float(x) for x in point)
        if check_domain:
            struct.require_inside(self.point)
        self.d = struct.dim
        self.n = struct.n
        self.p = struct.dim - struct.n
        self._metric_fn = metric_fn or struct.metric_at
        self._dtilde_fn = dtilde_fn or struct.dtilde_at

    # ------------------------------------------------------------------
    # jets of the raw data

    @cached_property
    def seeds(self):
        return seed(self.point, 2)

    @cached_property
    def gJ(self):
        d = self.d
        try:
            rows = self._metric_fn(self.seeds)
        except SingularEvaluationError as exc:
            if exc.point is None:
                raise SingularEvaluationError(str(exc), point=self.point) from exc
            raise
        return [[_promote(rows[i][j], d) for j in range(d)] for i in range(d)]

    @cached_property
    def ginvJ(self):
        return jet_matrix_inverse(self.gJ, self.d, point=self.point)

    @cached_property
    def GammaJ(self):
        """Christoffel symbols as order-1 jets; index order [sigma][mu][nu].

        Built from dshift of the metric jets, so the jet gradient of an entry
        is the chart derivative of that Christoffel symbol.
        """
        d, g, ginv = self.d, self.gJ, self.ginvJ
        dg = [[[_dshift(g[m][nn], r, d) for nn in range(d)] for m in range(d)]
              for r in range(d)]
        # dsym[t][m][nn] = d_m g_{t nn} + d_nn g_{t m} - d_t g_{m nn}
        dsym = [[[dg[m][t][nn] + dg[nn][t][m] - dg[t][m][nn]
                  for nn in range(d)] for m in range(d)] for t in range(d)]
        gi1 = [[_t1(x) for x in row] for row in ginv]
        out = []
        for s in range(d):
            gs = gi1[s]
            mat = []
            for m in range(d):
                row = []
                for nn in range(d):
                    acc = gs[0] * dsym[0][m][nn]
                    for t in range(1, d):
                        acc = acc + gs[t] * dsym[t][m][nn]
                    row.append(0.5 * acc)
                mat.append(row)
            out.append(mat)
        return out

    @cached_property
    def frameJ(self):
        span = [[_promote(c, self.d) for c in vec] for vec in self._dtilde_fn(self.seeds)]
        return orthonormal_frame(self.gJ, span, self.d, point=self.point)

    @cached_property
    def eps(self):
        return np.array(self.frameJ.signs)

    @property
    def eps_tan(self):
        return self.frameJ.eps_tan

    @property
    def eps_perp(self):
        return self.frameJ.eps_perp

    @cached_property
    def framevecsJ(self):
        return list(self.frameJ.vectors)

    # order-1 views used by the field algebra
    @cached_property
    def g1(self):
        return [[_t1(x) for x in row] for row in self.gJ]

    @cached_property
    def frame1(self):
        return [[_t1(c) for c in vec] for vec in self.framevecsJ]

    # ------------------------------------------------------------------
    # float extracts

    @cached_property
    def g0(self):
        return np.array([[val(x) for x in row] for row in self.gJ])

    @cached_property
    def ginv0(self):
        return np.array([[val(x) for x in row] for row in self.ginvJ])

    @cached_property
    def Gamma0(self):
        d = self.d
        return np.array([[[val(self.GammaJ[s][m][nn]) for nn in range(d)]
                          for m in range(d)] for s in range(d)])

    @cached_property
    def F(self):
        """Frame vector components (rows), tangent block first."""
        return np.array([[val(c) for c in vec] for vec in self.framevecsJ])

    @cached_property
    def Fb(self):
        """Frame covectors: Fb[alpha] = g(e_alpha, .) in chart components."""
        return self.F @ self.g0

    @cached_property
    def volume_density(self):
        det = float(np.linalg.det(self.g0))
        if det == 0.0:
            raise SingularEvaluationError("degenerate metric", point=self.point)
        return math.sqrt(abs(det))

    # ------------------------------------------------------------------
    # curvature

    @cached_property
    def Rcoord(self):
        """R(d_mu, d_nu) d_gamma = Rcoord[sigma, mu, nu, gamma] d_sigma."""
        d = self.d
        dG = np.array([[[[grad_vals(self.GammaJ[s][m][nn], d)[r]
                          for nn in range(d)] for m in range(d)] for s in range(d)]
                       for r in range(d)])
        G = self.Gamma0
        R = np.einsum("nsmg->smng", dG) - np.einsum("msng->smng", dG)
        R += np.einsum("snk,kmg->smng", G, G) - np.einsum("smk,kng->smng", G, G)
        return R

    @cached_property
    def R04(self):
        return np.einsum("smng,sd->mngd", self.Rcoord, self.g0)

    @cached_property
    def R4(self):
        """Frame components g(R(e_a, e_b) e_c, e_d)."""
        F = self.F
        return np.einsum("am,bn,cg,dk,mngk->abcd", F, F, F, F, self.R04)

    def riemann(self, X, Y, Z):
        """R(X, Y) Z for chart-component vectors, as chart components."""
        X, Y, Z = (np.asarray(v, dtype=float) for v in (X, Y, Z))
        return np.einsum("smng,m,n,g->s", self.Rcoord, X, Y, Z)

    def sectional(self, X, Y):
        X, Y = np.asarray(X, float), np.asarray(Y, float)
        gXX = X @ self.g0 @ X
        gYY = Y @ self.g0 @ Y
        gXY = X @ self.g0 @ Y
        W = gXX * gYY - gXY * gXY
        if abs(W) < 1e-14:
            raise SingularEvaluationError("degenerate plane section", point=self.point)
        return float(self.riemann(X, Y, X) @ self.g0 @ Y / W)

    @cached_property
    def smix(self):
        n, e = self.n, self.eps
        acc = 0.0
        for a in range(n):
            for i in range(n, self.d):
                acc += e[a] * e[i] * self.R4[a, i, a, i]
        return float(acc)

    @cached_property
    def r_perp(self):
        """Partial Ricci tensor of the complement block, frame components (p x p)."""
        n, p, e = self.n, self.p, self.eps
        out = np.zeros((p, p))
        for i in range(p):
            for j in range(p):
                out[i, j] = sum(e[a] * self.R4[a, n + i, a, n + j] for a in range(n))
        return out

    @cached_property
    def r_tan(self):
        n, e = self.n, self.eps
        out = np.zeros((n, n))
        for a in range(n):
            for b in range(n):
                out[a, b] = sum(e[n + i] * self.R4[n + i, a, n + i, b]
                                for i in range(self.p))
        return out

    @cached_property
    def ricci_frame(self):
        """Ric(e_a, e_b) = sum_l eps_l g(R(e_a, e_l) e_b, e_l)."""
        return np.einsum("l,albl->ab", self.eps, self.R4)

    @property
    def ric_N(self):
        if self.n != 1:
            raise SpecializationError("Ric_N is reported only for rank-one D-tilde")
        return float(self.ricci_frame[0, 0])

    @cached_property
    def jacobi_N(self):
        """(R_N)-flat on the complement block: g(R(N, E_i) N, E_j), n = 1."""
        if self.n != 1:
            raise SpecializationError("the Jacobi operator needs rank-one D-tilde")
        p = self.p
        return np.array([[self.R4[0, 1 + i, 0, 1 + j] for j in range(p)]
                         for i in range(p)])

    # ------------------------------------------------------------------
    # first-derivative field algebra (order-1 jets throughout)

    def _nabla_matrix(self, VJ):
        """(nabla_m V)^s as order-1 jets, index order [m][s]."""
        d = self.d
        G = self.GammaJ
        V1 = [_t1(x) for x in VJ]
        out = []
        for m in range(d):
            row = []
            for s in range(d):
                term = _dshift(VJ[s], m, d)
                Gsm = G[s][m]
                for nn in range(d):
                    term = term + Gsm[nn] * V1[nn]
                row.append(term)
            out.append(row)
        return out

    def _nabla_vec(self, Xdir1, VJ, nabM=None):
        """nabla_X V chart components as order-1 jets."""
        d = self.d
        M = nabM if nabM is not None else self._nabla_matrix(VJ)
        out = []
        for s in range(d):
            acc = 0.0
            for m in range(d):
                acc = acc + Xdir1[m] * M[m][s]
            out.append(acc)
        return out

    @cached_property
    def _nabla_frame(self):
        """Covariant-derivative matrices of every frame field."""
        return [self._nabla_matrix(vec) for vec in self.framevecsJ]

    def cd(self, a, b):
        """nabla_{e_a} e_b, order-1 jet chart components (cached per pair)."""
        cache = self.__dict__.setdefault("_cd_cache", {})
        key = (a, b)
        if key not in cache:
            cache[key] = self._nabla_vec(self.frame1[a], None,
                                         nabM=self._nabla_frame[b])
        return cache[key]

    def inner1(self, U, V):
        """g(U, V) for order-1 jet chart components."""
        acc = 0.0
        for i in range(self.d):
            row = self.g1[i]
            ui = U[i]
            for j in range(self.d):
                acc = acc + ui * row[j] * V[j]
        return acc

    @cached_property
    def proj_tan1(self):
        """Orthogonal projector onto the distribution, as order-1 jets."""
        d, n = self.d, self.n
        P = [[0.0] * d for _ in range(d)]
        for a in range(n):
            ea = self.frame1[a]
            eb = self._flat1(ea)
            s = self.eps_tan[a]
            for sig in range(d):
                esig = s * ea[sig]
                for nu in range(d):
                    P[sig][nu] = P[sig][nu] + esig * eb[nu]
        return P

    def project1(self, V, side):
        """Project jet vector components onto D-tilde ('tan') or D ('perp')."""
        P = self.proj_tan1
        d = self.d
        tang = [sum_scalars(P[s][nu] * V[nu] for nu in range(d)) for s in range(d)]
        if side == "tan":
            return tang
        return [V[s] - tang[s] for s in range(d)]

    def _flat1(self, vec1):
        d = self.d
        return [sum_scalars(self.g1[nu][k] * vec1[k] for k in range(d)) for nu in range(d)]

    @cached_property
    def _ff(self):
        """Frame scalars of the fundamental forms, as jets.

        hfrJ[a][b][i] = g(h(E_a, E_b), Eperp_i), TfrJ antisymmetric part;
        htfrJ/TtfrJ are the complement-side duals.  Pairing with the
        complementary frame covectors performs the block projection.
        """
        n, p = self.n, self.p
        hfr = [[[None] * p for _ in range(n)] for _ in range(n)]
        Tfr = [[[None] * p for _ in range(n)] for _ in range(n)]
        for a in range(n):
            for b in range(a, n):
                for i in range(p):
                    ei = self.frame1[n + i]
                    u = self.inner1(self.cd(a, b), ei)
                    w = self.inner1(self.cd(b, a), ei)
                    hfr[a][b][i] = 0.5 * (u + w)
                    hfr[b][a][i] = hfr[a][b][i]
                    Tfr[a][b][i] = 0.5 * (u - w)
                    Tfr[b][a][i] = -1.0 * Tfr[a][b][i]
        htfr = [[[None] * n for _ in range(p)] for _ in range(p)]
        Ttfr = [[[None] * n for _ in range(p)] for _ in range(p)]
        for i in range(p):
            for j in range(i, p):
                for a in range(n):
                    ea = self.frame1[a]
                    u = self.inner1(self.cd(n + i, n + j), ea)
                    w = self.inner1(self.cd(n + j, n + i), ea)
                    htfr[i][j][a] = 0.5 * (u + w)
                    htfr[j][i][a] = htfr[i][j][a]
                    Ttfr[i][j][a] = 0.5 * (u - w)
                    Ttfr[j][i][a] = -1.0 * Ttfr[i][j][a]
        return {"hfrJ": hfr, "TfrJ": Tfr, "htfrJ": htfr, "TtfrJ": Ttfr}

    @cached_property
    def hfr(self):
        return np.array([[[val(x) for x in r] for r in m] for m in self._ff["hfrJ"]])

    @cached_property
    def Tfr(self):
        return np.array([[[val(x) for x in r] for r in m] for m in self._ff["TfrJ"]])

    @cached_property
    def htfr(self):
        return np.array([[[val(x) for x in r] for r in m] for m in self._ff["htfrJ"]])

    @cached_property
    def Ttfr(self):
        return np.array([[[val(x) for x in r] for r in m] for m in self._ff["TtfrJ"]])

    # mean curvature vector fields, jet chart components
    @cached_property
    def HJ(self):
        n, p, d = self.n, self.p, self.d
        out = [0.0] * d
        for a in range(n):
            for i in range(p):
                c = self.eps_tan[a] * self.eps_perp[i] * self._ff["hfrJ"][a][a][i]
                ei = self.frame1[n + i]
                for s in range(d):
                    out[s] = out[s] + c * ei[s]
        return out

    @cached_property
    def HtJ(self):
        n, p, d = self.n, self.p, self.d
        out = [0.0] * d
        for i in range(p):
            for a in range(n):
                c = self.eps_perp[i] * self.eps_tan[a] * self._ff["htfrJ"][i][i][a]
                ea = self.frame1[a]
                for s in range(d):
                    out[s] = out[s] + c * ea[s]
        return out

    @cached_property
    def H0(self):
        return np.array([val(x) for x in self.HJ])

    @cached_property
    def Ht0(self):
        return np.array([val(x) for x in self.HtJ])

    @cached_property
    def Hb_frame(self):
        return self.Fb @ self.H0

    @cached_property
    def Htb_frame(self):
        return self.Fb @ self.Ht0

    # ------------------------------------------------------------------
    # scalar invariants

    @cached_property
    def norm_h(self):
        et, ep = np.array(self.eps_tan), np.array(self.eps_perp)
        return float(np.einsum("a,b,i,abi,abi->", et, et, ep, self.hfr, self.hfr))

    @cached_property
    def norm_T(self):
        et, ep = np.array(self.eps_tan), np.array(self.eps_perp)
        return float(np.einsum("a,b,i,abi,abi->", et, et, ep, self.Tfr, self.Tfr))

    @cached_property
    def norm_ht(self):
        et, ep = np.array(self.eps_tan), np.array(self.eps_perp)
        return float(np.einsum("i,j,a,ija,ija->", ep, ep, et, self.htfr, self.htfr))

    @cached_property
    def norm_Tt(self):
        et, ep = np.array(self.eps_tan), np.array(self.eps_perp)
        return float(np.einsum("i,j,a,ija,ija->", ep, ep, et, self.Ttfr, self.Ttfr))

    @cached_property
    def gHH(self):
        return float(self.H0 @ self.g0 @ self.H0)

    @cached_property
    def gHtHt(self):
        return float(self.Ht0 @ self.g0 @ self.Ht0)

    @property
    def s_ex(self):
        return self.gHH - self.norm_h

    @property
    def s_ex_tilde(self):
        return self.gHtHt - self.norm_ht

    # ------------------------------------------------------------------
    # Weingarten-type operators (float matrices, frame basis; column = input)

    @cached_property
    def A_ops(self):
        n, p, et = self.n, self.p, self.eps_tan
        return [np.array([[et[b] * self.hfr[a, b, i] for a in range(n)]
                          for b in range(n)]) for i in range(p)]

    @cached_property
    def Tsharp_ops(self):
        n, p, et = self.n, self.p, self.eps_tan
        return [np.array([[et[b] * self.Tfr[a, b, i] for a in range(n)]
                          for b in range(n)]) for i in range(p)]

    @cached_property
    def At_ops(self):
        n, p, ep = self.n, self.p, self.eps_perp
        return [np.array([[ep[j] * self.htfr[i, j, a] for i in range(p)]
                          for j in range(p)]) for a in range(n)]

    @cached_property
    def Ttsharp_ops(self):
        n, p, ep = self.n, self.p, self.eps_perp
        return [np.array([[ep[j] * self.Ttfr[i, j, a] for i in range(p)]
                          for j in range(p)]) for a in range(n)]

    @cached_property
    def casorati(self):
        out = np.zeros((self.n, self.n))
        for i in range(self.p):
            out += self.eps_perp[i] * (self.A_ops[i] @ self.A_ops[i])
        return out

    @cached_property
    def casorati_tilde(self):
        out = np.zeros((self.p, self.p))
        for a in range(self.n):
            out += self.eps_tan[a] * (self.At_ops[a] @ self.At_ops[a])
        return out

    @cached_property
    def tcal(self):
        out = np.zeros((self.n, self.n))
        for i in range(self.p):
            out += self.eps_perp[i] * (self.Tsharp_ops[i] @ self.Tsharp_ops[i])
        return out

    @cached_property
    def tcal_tilde(self):
        out = np.zeros((self.p, self.p))
        for a in range(self.n):
            out += self.eps_tan[a] * (self.Ttsharp_ops[a] @ self.Ttsharp_ops[a])
        return out

    @cached_property
    def kcal(self):
        out = np.zeros((self.n, self.n))
        for i in range(self.p):
            Ai, Ti = self.A_ops[i], self.Tsharp_ops[i]
            out += self.eps_perp[i] * (Ti @ Ai - Ai @ Ti)
        return out

    @cached_property
    def kcal_tilde(self):
        out = np.zeros((self.p, self.p))
        for a in range(self.n):
            Aa, Ta = self.At_ops[a], self.Ttsharp_ops[a]
            out += self.eps_tan[a] * (Ta @ Aa - Aa @ Ta)
        return out

    def flat_tan(self, op):
        """(0,2) frame form of an operator acting on the tangent block."""
        return np.array([[self.eps_tan[b] * op[b, a] for b in range(self.n)]
                         for a in range(self.n)])

    def flat_perp(self, op):
        return np.array([[self.eps_perp[j] * op[j, i] for j in range(self.p)]
                         for i in range(self.p)])

    @cached_property
    def psi(self):
        p = self.p
        out = np.zeros((p, p))
        for i in range(p):
            for j in range(p):
                out[i, j] = np.trace(self.A_ops[j] @ self.A_ops[i]
                                     + self.Tsharp_ops[j] @ self.Tsharp_ops[i])
        return out

    @cached_property
    def psi_tilde(self):
        n = self.n
        out = np.zeros((n, n))
        for a in range(n):
            for b in range(n):
                out[a, b] = np.trace(self.At_ops[b] @ self.At_ops[a]
                                     + self.Ttsharp_ops[b] @ self.Ttsharp_ops[a])
        return out

    # ------------------------------------------------------------------
    # (1,2)-tensors in full-frame flat components and the Lambda bilinear

    @cached_property
    def hb_full(self):
        """hb[l, m, k] = g(h(e_l, e_m), e_k) over the full frame."""
        k, n = self.d, self.n
        out = np.zeros((k, k, k))
        out[:n, :n, n:] = self.hfr
        return out

    @cached_property
    def Tb_full(self):
        k, n = self.d, self.n
        out = np.zeros((k, k, k))
        out[:n, :n, n:] = self.Tfr
        return out

    @cached_property
    def htb_full(self):
        k, n = self.d, self.n
        out = np.zeros((k, k, k))
        out[n:, n:, :n] = self.htfr
        return out

    @cached_property
    def Ttb_full(self):
        k, n = self.d, self.n
        out = np.zeros((k, k, k))
        out[n:, n:, :n] = self.Ttfr
        return out

    @cached_property
    def alpha_b(self):
        """alpha(X,Y) = (A_{X perp}(Y tan) + A_{Y perp}(X tan))/2, flat comps."""
        k, n = self.d, self.n
        out = np.zeros((k, k, k))
        for i in range(self.p):
            for a in range(n):
                for b in range(n):
                    c = 0.5 * self.hfr[a, b, i]      # g(A_i E_a, E_b)/2
                    out[a, n + i, b] = c
                    out[n + i, a, b] = c
        return out

    @cached_property
    def theta_b(self):
        k, n = self.d, self.n
        out = np.zeros((k, k, k))
        for i in range(self.p):
            for a in range(n):
                for b in range(n):
                    c = 0.5 * self.Tfr[a, b, i]
                    out[a, n + i, b] = c
                    out[n + i, a, b] = c
        return out

    @cached_property
    def alpha_tilde_b(self):
        k, n = self.d, self.n
        out = np.zeros((k, k, k))
        for a in range(n):
            for i in range(self.p):
                for j in range(self.p):
                    c = 0.5 * self.htfr[i, j, a]
                    out[n + i, a, n + j] = c
                    out[a, n + i, n + j] = c
        return out

    @cached_property
    def theta_tilde_b(self):
        k, n = self.d, self.n
        out = np.zeros((k, k, k))
        for a in range(n):
            for i in range(self.p):
                for j in range(self.p):
                    c = 0.5 * self.Ttfr[i, j, a]
                    out[n + i, a, n + j] = c
                    out[a, n + i, n + j] = c
        return out

    def lam(self, Pb, Qb):
        """Lambda_{P,Q}: the symmetric frame (0,2) tensor defined by
        <Lambda_{P,Q}, S> = sum eps eps [S(P, Q) + S(Q, P)]."""
        e = self.eps
        E = np.einsum("l,m,lmk,lmn->kn", e, e, Pb, Qb)
        return E + E.T

    @cached_property
    def phi_h(self):
        return np.outer(self.Hb_frame, self.Hb_frame) - 0.5 * self.lam(self.hb_full, self.hb_full)

    @cached_property
    def phi_T(self):
        return -0.5 * self.lam(self.Tb_full, self.Tb_full)

    @cached_property
    def phi_h_tilde(self):
        return np.outer(self.Htb_frame, self.Htb_frame) - 0.5 * self.lam(self.htb_full, self.htb_full)

    @cached_property
    def phi_T_tilde(self):
        return -0.5 * self.lam(self.Ttb_full, self.Ttb_full)

    # ------------------------------------------------------------------
    # jet chart components of derived tensor fields

    @cached_property
    def htilde_field(self):
        """h~ as a (1,2) chart-component jet field (projection-extended)."""
        n, p, d = self.n, self.p, self.d
        perp_fl = [self._flat1(self.frame1[n + i]) for i in range(p)]
        out = _zeros3(d)
        for i in range(p):
            for j in range(i, p):
                u, w = self.cd(n + i, n + j), self.cd(n + j, n + i)
                sym = [0.5 * (u[s] + w[s]) for s in range(d)]
                v = self.project1(sym, "tan")
                e = self.eps_perp[i] * self.eps_perp[j]
                _accumulate12(out, v, perp_fl[i], perp_fl[j], e, d, sym_pair=(i != j))
        return out

    @cached_property
    def h_field(self):
        n, d = self.n, self.d
        tan_fl = [self._flat1(self.frame1[a]) for a in range(n)]
        out = _zeros3(d)
        for a in range(n):
            for b in range(a, n):
                u, w = self.cd(a, b), self.cd(b, a)
                sym = [0.5 * (u[s] + w[s]) for s in range(d)]
                v = self.project1(sym, "perp")
                e = self.eps_tan[a] * self.eps_tan[b]
                _accumulate12(out, v, tan_fl[a], tan_fl[b], e, d, sym_pair=(a != b))
        return out

    @cached_property
    def alpha_field(self):
        """alpha as a (1,2) chart jet field."""
        n, p, d = self.n, self.p, self.d
        hfrJ = self._ff["hfrJ"]
        tan_fl = [self._flat1(self.frame1[a]) for a in range(n)]
        perp_fl = [self._flat1(self.frame1[n + i]) for i in range(p)]
        out = _zeros3(d)
        for i in range(p):
            for a in range(n):
                vec = [0.0] * d
                for b in range(n):
                    c = self.eps_tan[b] * hfrJ[a][b][i]   # A_i E_a along E_b
                    eb = self.frame1[b]
                    for s in range(d):
                        vec[s] = vec[s] + c * eb[s]
                half = [0.5 * x for x in vec]
                e = self.eps_perp[i] * self.eps_tan[a]
                _accumulate12(out, half, perp_fl[i], tan_fl[a], e, d, sym_pair=True)
        return out

    @cached_property
    def theta_tilde_field(self):
        n, p, d = self.n, self.p, self.d
        TtfrJ = self._ff["TtfrJ"]
        tan_fl = [self._flat1(self.frame1[a]) for a in range(n)]
        perp_fl = [self._flat1(self.frame1[n + i]) for i in range(p)]
        out = _zeros3(d)
        for a in range(n):
            for i in range(p):
                vec = [0.0] * d
                for j in range(p):
                    c = self.eps_perp[j] * TtfrJ[i][j][a]   # T~sharp_a E_i along E_j
                    ej = self.frame1[n + j]
                    for s in range(d):
                        vec[s] = vec[s] + c * ej[s]
                half = [0.5 * x for x in vec]
                e = self.eps_tan[a] * self.eps_perp[i]
                _accumulate12(out, half, tan_fl[a], perp_fl[i], e, d, sym_pair=True)
        return out

    def ttsharp_field(self, along="N"):
        """T~sharp_N as a (1,1) chart jet field (rank-one distribution)."""
        if self.n != 1:
            raise SpecializationError("T~sharp_N needs rank-one D-tilde")
        d, p = self.d, self.p
        TtfrJ = self._ff["TtfrJ"]
        perp_fl = [self._flat1(self.frame1[1 + i]) for i in range(p)]
        out = [[0.0] * d for _ in range(d)]
        for i in range(p):
            for j in range(p):
                c = self.eps_perp[i] * self.eps_perp[j] * TtfrJ[i][j][0]
                ej = self.frame1[1 + j]
                for s in range(d):
                    cjs = c * ej[s]
                    for nu in range(d):
                        out[s][nu] = out[s][nu] + cjs * perp_fl[i][nu]
        return out

    def weingarten_normal_field(self):
        """A_N as a (1,1) chart jet field for a rank-one complement (p = 1)."""
        if self.p != 1:
            raise SpecializationError("A_N needs a rank-one complement")
        d, n = self.d, self.n
        hfrJ = self._ff["hfrJ"]
        tan_fl = [self._flat1(self.frame1[a]) for a in range(n)]
        out = [[0.0] * d for _ in range(d)]
        for a in range(n):
            for b in range(n):
                c = self.eps_tan[a] * self.eps_tan[b] * hfrJ[a][b][0]
                eb = self.frame1[b]
                for s in range(d):
                    cbs = c * eb[s]
                    for nu in range(d):
                        out[s][nu] = out[s][nu] + cbs * tan_fl[a][nu]
        return out

    # ------------------------------------------------------------------
    # divergences and derivative-bearing tensors

    def nabla_vec_values(self, VJ):
        """(nabla_m V)^s float matrix from a jet vector field."""
        d = self.d
        dV = np.array([[grad_vals(VJ[s], d)[m] for m in range(d)] for s in range(d)])
        V0 = np.array([val(x) for x in VJ])
        return dV + np.einsum("smn,n->sm", self.Gamma0, V0)

    def div_vector(self, VJ, mode="full"):
        nabla = self.nabla_vec_values(VJ)
        if mode == "full":
            return float(np.trace(nabla))
        W = self._weight(mode)
        return float(np.einsum("ms,sm->", W, nabla))

    def _weight(self, mode):
        """W[m, s] = sum_block eps e^m (e-flat)_s."""
        n = self.n
        if mode == "tan":
            idx = range(0, n)
        elif mode == "perp":
            idx = range(n, self.d)
        else:
            raise SpecializationError(f"unknown divergence mode {mode!r}")
        W = np.zeros((self.d, self.d))
        for k in idx:
            W += self.eps[k] * np.outer(self.F[k], self.Fb[k])
        return W

    def nabla12_values(self, PJ):
        """(nabla_m P)^s_{nu rho} float array from a (1,2) jet field."""
        d = self.d
        G = self.Gamma0
        P0 = np.array([[[val(PJ[s][nu][rho]) for rho in range(d)] for nu in range(d)]
                       for s in range(d)])
        dP = np.array([[[[grad_vals(PJ[s][nu][rho], d)[m] for rho in range(d)]
                         for nu in range(d)] for s in range(d)] for m in range(d)])
        out = dP + np.einsum("smk,knr->msnr", G, P0)
        out -= np.einsum("kmn,skr->msnr", G, P0)
        out -= np.einsum("kmr,snk->msnr", G, P0)
        return out, P0

    def div_12(self, PJ, mode="full"):
        """Divergence of a (1,2) jet tensor field, chart (0,2) components."""
        nab, _ = self.nabla12_values(PJ)
        W = np.eye(self.d) if mode == "full" else self._weight(mode)
        return np.einsum("msnr,ms->nr", nab, W)

    def div_11(self, SJ, mode="perp"):
        """(div S) 1-form chart components for a (1,1) jet field."""
        d = self.d
        G = self.Gamma0
        S0 = np.array([[val(SJ[s][nu]) for nu in range(d)] for s in range(d)])
        dS = np.array([[[grad_vals(SJ[s][nu], d)[m] for nu in range(d)]
                        for s in range(d)] for m in range(d)])
        nab = dS + np.einsum("smk,kn->msn", G, S0) - np.einsum("kmn,sk->msn", G, S0)
        W = np.eye(d) if mode == "full" else self._weight(mode)
        return np.einsum("msn,ms->n", nab, W)

    def to_frame02(self, coord02):
        return self.F @ np.asarray(coord02) @ self.F.T

    def frame_pairing(self, C_frame, B_frame):
        """<C, B> = sum eps eps C(e_k, e_l) B(e_k, e_l), frame components."""
        return float(np.einsum("k,l,kl,kl->", self.eps, self.eps, C_frame, B_frame))

    def def_perp_of(self, ZJ):
        """Def_D Z: symmetrized nabla Z on the complement block (p x p)."""
        return self._def_block(ZJ, range(self.n, self.d))

    def def_tan_of(self, ZJ):
        return self._def_block(ZJ, range(0, self.n))

    def _def_block(self, ZJ, idx):
        nabla = self.nabla_vec_values(ZJ)
        idx = list(idx)
        out = np.zeros((len(idx), len(idx)))
        for ii, u in enumerate(idx):
            nu_u = np.einsum("sm,m->s", nabla, self.F[u])
            for jj, w in enumerate(idx):
                nu_w = np.einsum("sm,m->s", nabla, self.F[w])
                out[ii, jj] = 0.5 * (self.Fb[w] @ nu_u + self.Fb[u] @ nu_w)
        return out

    def delta_tilde_of(self, ZJ):
        """delta~_Z block on (E_a, Eperp_i) pairs (n x p)."""
        nabla = self.nabla_vec_values(ZJ)
        n, p = self.n, self.p
        out = np.zeros((n, p))
        for a in range(n):
            nu_a = np.einsum("sm,m->s", nabla, self.F[a])
            for i in range(p):
                out[a, i] = 0.5 * (self.Fb[n + i] @ nu_a)
        return out

    @cached_property
    def div_H(self):
        return self.div_vector(self.HJ)

    @cached_property
    def div_Ht(self):
        return self.div_vector(self.HtJ)

    @cached_property
    def tau1_tilde_J(self):
        """tau~_1 = Tr A~_N of the complement for n = 1, as a jet scalar."""
        if self.n != 1:
            raise SpecializationError("tau~_1 requires rank-one D-tilde")
        acc = 0.0
        for i in range(self.p):
            acc = acc + self.eps_perp[i] * self._ff["htfrJ"][i][i][0]
        return acc

    def nabla02_in_direction(self, TJ, X0):
        """(nabla_X T) chart components for a (0,2) jet field and float X."""
        d = self.d
        G = self.Gamma0
        T0 = np.array([[val(TJ[nu][rho]) for rho in range(d)] for nu in range(d)])
        dT = np.array([[[grad_vals(TJ[nu][rho], d)[m] for rho in range(d)]
                        for nu in range(d)] for m in range(d)])
        nab = dT - np.einsum("kmn,kr->mnr", G, T0) - np.einsum("kmr,nk->mnr", G, T0)
        return np.einsum("mnr,m->nr", nab, np.asarray(X0, float))

    def pair_vec_12(self, Pb_full, Vb_frame):
        """(0,2) frame tensor g(P(e_l, e_m), V) from flat comps of P and V."""
        return np.einsum("lmk,k,k->lm", np.asarray(Pb_full), self.eps,
                         np.asarray(Vb_frame))

    def pair_tensor_vec_perp(self):
        """<h~, H~>(E_i, E_j) = g(h~(E_i, E_j), H~) on the complement block."""
        n, p = self.n, self.p
        Ht_tan = self.Fb[:n] @ self.Ht0
        out = np.zeros((p, p))
        for i in range(p):
            for j in range(p):
                out[i, j] = sum(self.eps_tan[a] * self.htfr[i, j, a] * Ht_tan[a]
                                for a in range(n))
        return out

    def pair_tensor_vec_tan(self):
        """<h, H>(E_a, E_b) = g(h(E_a, E_b), H) on the tangent block."""
        n, p = self.n, self.p
        H_perp = self.Fb[n:] @ self.H0
        out = np.zeros((n, n))
        for a in range(n):
            for b in range(n):
                out[a, b] = sum(self.eps_perp[i] * self.hfr[a, b, i] * H_perp[i]
                                for i in range(p))
        return out

    @cached_property
    def tau1_perp_J(self):
        """tau_1 = Tr A_N of the foliation for p = 1, as a jet scalar."""
        if self.p != 1:
            raise SpecializationError("tau_1 requires a rank-one complement")
        acc = 0.0
        for a in range(self.n):
            acc = acc + self.eps_tan[a] * self._ff["hfrJ"][a][a][0]
        return acc

    @cached_property
    def unit_normal_field_J(self):
        """The perp frame field (p = 1 unit normal), jet chart components."""
        if self.p != 1:
            raise SpecializationError("unit normal requires a rank-one complement")
        return self.frame1[self.n]

    @cached_property
    def tangent_unit_field_J(self):
        """The tangent frame field (n = 1 unit N), jet chart components."""
        if self.n != 1:
            raise SpecializationError("unit tangent requires rank-one D-tilde")
        return self.frame1[0]

    # ------------------------------------------------------------------

    def summary(self):
        out = {
            "point": list(self.point),
            "eps_tan": list(self.eps_tan),
            "eps_perp": list(self.eps_perp),
            "S_mix": self.smix,
            "S_ex": self.s_ex,
            "S_ex_tilde": self.s_ex_tilde,
            "norm_h": self.norm_h,
            "norm_h_tilde": self.norm_ht,
            "norm_T": self.norm_T,
            "norm_T_tilde": self.norm_Tt,
            "g_HH": self.gHH,
            "g_HtHt": self.gHtHt,
            "div_H": self.div_H,
            "div_H_tilde": self.div_Ht,
            "r_perp": self.r_perp.tolist(),
            "r_tan": self.r_tan.tolist(),
            "H_frame": self.Hb_frame.tolist(),
            "Ht_frame": self.Htb_frame.tolist(),
        }
        if self.n == 1:
            out["ric_N"] = self.ric_N
        return out


def sum_scalars(items):
    acc = 0.0
    for x in items:
        acc = acc + x
    return acc


def _zeros3(d):
    return [[[0.0] * d for _ in range(d)] for _ in range(d)]


def _accumulate12(out, vec, left_fl, right_fl, e, d, sym_pair):
    """out^s_{nu rho} += e * vec^s * left_nu * right_rho (+ mirrored pair)."""
    for nu in range(d):
        lnu = left_fl[nu]
        rnu = right_fl[nu]
        for rho in range(d):
            f = e * (lnu * right_fl[rho])
            if sym_pair:
                f = f + e * (rnu * left_fl[rho])
            for s in range(d):
                out[s][nu][rho] = out[s][nu][rho] + f * vec[s]


# ----------------------------------------------------------------------
# module-level operations

def christoffel(struct, point, metric_fn=None):
    return PointGeometry(struct, point, metric_fn=metric_fn).Gamma0


def riemann(struct, point, X, Y, Z, metric_fn=None):
    return PointGeometry(struct, point, metric_fn=metric_fn).riemann(X, Y, Z)


def mixed_scalar(struct, point, metric_fn=None):
    return PointGeometry(struct, point, metric_fn=metric_fn).smix


def partial_ricci(struct, point, side="perp", metric_fn=None):
    g = PointGeometry(struct, point, metric_fn=metric_fn)
    return g.r_perp if side == "perp" else g.r_tan


def extrinsic_bundle(struct, point, metric_fn=None):
    return PointGeometry(struct, point, metric_fn=metric_fn)


def lambda_pq(geom, Pb, Qb):
    return geom.lam(np.asarray(Pb, float), np.asarray(Qb, float))


def divergence(struct, point, field, mode="full", metric_fn=None):
    """Divergence of a user field along the chart.

    ``field(geom)`` must return jet chart components built from the bundle
    (a length-d vector or a d*d*d (1,2)-tensor); the adapted frame at the
    displaced jet points is available through ``geom``.  Vector fields give a
    scalar, (1,2)-tensors a (0,2) chart matrix.  ``mode`` selects the full
    trace or the block-restricted sums ('perp' / 'tan')."""
    geom = PointGeometry(struct, point, metric_fn=metric_fn)
    values = field(geom)
    if values and isinstance(values[0], list):
        return geom.div_12(values, mode=mode)
    return geom.div_vector(values, mode=mode)


def smix_density_fast(struct, point, metric_fn=None):
    """(S_mix, sqrt|det g|) without frames; quadrature inner loop."""
    geom = PointGeometry(struct, point, metric_fn=metric_fn, check_domain=False)
    W = [[val(x) for x in vec] for vec in geom._dtilde_fn(geom.seeds)]
    Wm = np.array(W).T
    g0 = geom.g0
    gram = Wm.T @ g0 @ Wm
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        raise SingularEvaluationError("degenerate distribution", point=geom.point)
    PiT = Wm @ gram_inv @ Wm.T
    PiP = geom.ginv0 - PiT
    smix = float(np.einsum("mg,nd,mngd->", PiT, PiP, geom.R04))
    return smix, geom.volume_density


def random_perp_field(geom, rng_seed):
    """Deterministic smooth complement-valued field, jet chart components."""
    rng = random.Random(rng_seed)
    d, n, p = geom.d, geom.n, geom.p
    coeffs = [[rng.uniform(-1, 1) for _ in range(d + 1)] for _ in range(p)]
    xs = geom.seeds
    out = [0.0] * d
    for i in range(p):
        c = coeffs[i][0]
        for m in range(d):
            c = c + coeffs[i][m + 1] * _t1(xs[m])
        vec = geom.frame1[n + i]
        for s in range(d):
            out[s] = out[s] + c * vec[s]
    return out


def identity_suite(struct, point, metric_fn=None, rng_seed=7):
    """Residual norms of the structural identities; each equation's two sides
    travel independent code paths (curvature vs. first-derivative assembly)."""
    g = PointGeometry(struct, point, metric_fn=metric_fn)
    n, p = g.n, g.p
    res = {}

    # (a) partial Ricci tensor vs the divergence identity, complement block
    div_ht = g.to_frame02(g.div_12(g.htilde_field, mode="full"))[n:, n:]
    pair_htH = np.zeros((p, p))
    Ht_tan = g.Fb[:n] @ g.Ht0
    for i in range(p):
        for j in range(p):
            pair_htH[i, j] = sum(g.eps_tan[a] * g.htfr[i, j, a] * Ht_tan[a]
                                 for a in range(n))
    rhs = (div_ht + pair_htH - g.flat_perp(g.casorati_tilde)
           - g.flat_perp(g.tcal_tilde) - g.psi + g.def_perp_of(g.HJ))
    res["partial_ricci_identity"] = float(np.max(np.abs(g.r_perp - rhs)))

    # (b) S_mix from extrinsic invariants
    res["smix_decomposition"] = abs(
        g.smix - (g.s_ex + g.s_ex_tilde + g.norm_T + g.norm_Tt + g.div_H + g.div_Ht))

    # (c) trace of the partial Ricci tensor
    trace_r = sum(g.eps_perp[i] * g.r_perp[i, i] for i in range(p))
    res["partial_ricci_trace"] = abs(trace_r - g.smix)

    # (d) trace of Psi
    tr_psi = sum(g.eps_perp[i] * g.psi[i, i] for i in range(p))
    res["psi_trace"] = abs(tr_psi - g.norm_h + g.norm_T)

    # (e) trace of Def_D H
    defH = g.def_perp_of(g.HJ)
    tr_def = sum(g.eps_perp[i] * defH[i, i] for i in range(p))
    res["def_trace"] = abs(tr_def - g.div_H - g.gHH)

    # (f) traceless commutator operators
    res["kcal_trace"] = abs(float(np.trace(g.kcal))) + abs(float(np.trace(g.kcal_tilde)))

    # (g) Phi tensors against their defining contraction on a random S
    rng = random.Random(rng_seed)
    S = np.array([[rng.uniform(-1, 1) for _ in range(g.d)] for _ in range(g.d)])
    S = 0.5 * (S + S.T)
    direct_h = float(g.H0 @ S @ g.H0)
    direct_T = 0.0
    for a in range(n):
        for b in range(n):
            vh = sum(g.eps_perp[i] * g.hfr[a, b, i] * g.F[n + i] for i in range(p))
            vT = sum(g.eps_perp[i] * g.Tfr[a, b, i] * g.F[n + i] for i in range(p))
            e = g.eps_tan[a] * g.eps_tan[b]
            direct_h -= e * float(vh @ S @ vh)
            direct_T -= e * float(vT @ S @ vT)
    S_frame = g.F @ S @ g.F.T
    res["phi_h_identity"] = abs(g.frame_pairing(g.phi_h, S_frame) - direct_h)
    res["phi_T_identity"] = abs(g.frame_pairing(g.phi_T, S_frame) - direct_T)

    # (E-divN) with a seeded random complement-valued field
    xi = random_perp_field(g, rng_seed)
    xi0 = np.array([val(x) for x in xi])
    res["div_perp_vector"] = abs(
        g.div_vector(xi, mode="perp") - (g.div_vector(xi) + float(xi0 @ g.g0 @ g.H0)))

    # (E-divP) with P = h (complement-valued (1,2) tensor), tangent block
    hfield = g.h_field
    lhsP = g.to_frame02(g.div_12(hfield, mode="perp"))[:n, :n]
    rhsP = g.to_frame02(g.div_12(hfield, mode="full"))[:n, :n]
    pair_hH = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            vec = sum(g.eps_perp[i] * g.hfr[a, b, i] * g.F[n + i] for i in range(p))
            pair_hH[a, b] = float(vec @ g.g0 @ g.H0)
    res["div_perp_tensor"] = float(np.max(np.abs(lhsP - rhsP - pair_hH)))

    res["max"] = max(res.values())
    return res
