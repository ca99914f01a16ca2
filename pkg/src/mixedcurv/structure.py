"""Charts carrying a pseudo-Riemannian metric and a distinguished distribution.

A structure spec is a line-oriented text format::

    name = r3_contact            # optional
    dim = 3
    dtilde_dim = 1
    params = c1: 1.0, c2: 0.25   # optional
    metric 0 0 = (1 + x1^2 + x2^2) / 4
    metric 0 1 = x2 / 4          # upper triangle only; omitted entries are 0
    dtilde 0 = 0, 0, 1           # spanning field, one expression per coordinate
    domain = [-1, 1] x [-1, 1] x [-1, 1]

Comments start with ``#``.  The metric matrix is stored upper-triangular and
mirrored on evaluation, so symmetry is exact by construction.
"""

from __future__ import annotations

import hashlib
import math
import random
import re
from dataclasses import dataclass, field

from . import exprlang
from .errors import (DegenerateDistributionError, DomainError,
                     SignatureInstabilityError, SpecFormatError)
from .jets import Jet, check_finite, jsqrt, value_of

DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class ProductStructure:
    dim: int
    n: int                      # rank of the distinguished distribution
    metric_upper: dict          # (i, j) -> AST with i <= j
    dtilde: tuple               # n tuples of dim ASTs
    params: dict
    domain: tuple               # dim pairs (lo, hi)
    name: str = ""
    source_text: str = ""

    @property
    def p(self):
        return self.dim - self.n

    @property
    def content_hash(self):
        return hashlib.sha256(self.source_text.encode()).hexdigest()

    def metric_at(self, point):
        """Symmetric dim x dim matrix of scalars (floats or jets)."""
        env = list(point)
        d = self.dim
        rows = [[0.0] * d for _ in range(d)]
        for (i, j), ast in self.metric_upper.items():
            v = check_finite(exprlang.evaluate(ast, env, self.params), point=_values(point))
            rows[i][j] = v
            if i != j:
                rows[j][i] = v
        return rows

    def dtilde_at(self, point):
        env = list(point)
        return [[exprlang.evaluate(c, env, self.params) for c in vec]
                for vec in self.dtilde]

    def contains(self, point):
        return all(lo - 1e-12 <= value_of(x) <= hi + 1e-12
                   for x, (lo, hi) in zip(point, self.domain))

    def require_inside(self, point):
        if not self.contains(point):
            raise DomainError(f"point {tuple(value_of(x) for x in point)} outside "
                              f"domain box {self.domain}")

    def interior_points(self, count, rng_seed, margin=0.15):
        """Deterministic sample of interior points, away from the box edges."""
        rng = random.Random(rng_seed)
        pts = []
        for _ in range(count):
            pt = []
            for lo, hi in self.domain:
                w = hi - lo
                pt.append(lo + w * (margin + (1.0 - 2.0 * margin) * rng.random()))
            pts.append(tuple(pt))
        return pts


def _values(point):
    return [value_of(x) for x in point]


# ----------------------------------------------------------------------
# Spec file format

_METRIC_RE = re.compile(r"^metric\s+(\d+)\s+(\d+)$")
_DTILDE_RE = re.compile(r"^dtilde\s+(\d+)$")
_INTERVAL_RE = re.compile(r"^\[\s*([^,\]]+)\s*,\s*([^,\]]+)\s*\]$")


def load_structure(text):
    """Parse a structure spec; validates dimensions, names and symmetry."""
    data = {"metric": {}, "dtilde": {}}
    scalars = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecFormatError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        m = _METRIC_RE.match(key)
        if m:
            i, j = int(m.group(1)), int(m.group(2))
            if (i, j) in data["metric"]:
                raise SpecFormatError(f"line {lineno}: duplicate metric entry {i} {j}")
            data["metric"][(i, j)] = value
            continue
        m = _DTILDE_RE.match(key)
        if m:
            k = int(m.group(1))
            if k in data["dtilde"]:
                raise SpecFormatError(f"line {lineno}: duplicate dtilde entry {k}")
            data["dtilde"][k] = value
            continue
        if key in scalars:
            raise SpecFormatError(f"line {lineno}: duplicate key {key!r}")
        scalars[key] = value

    for req in ("dim", "dtilde_dim", "domain"):
        if req not in scalars:
            raise SpecFormatError(f"missing required key {req!r}")
    try:
        dim = int(scalars["dim"])
        n = int(scalars["dtilde_dim"])
    except ValueError as e:
        raise SpecFormatError(f"dim/dtilde_dim must be integers: {e}")
    if not (1 <= n < dim):
        raise SpecFormatError(f"need 1 <= dtilde_dim < dim, got {n} and {dim}")

    params = {}
    if "params" in scalars:
        for item in scalars["params"].split(","):
            item = item.strip()
            if not item:
                continue
            if ":" not in item:
                raise SpecFormatError(f"params entry {item!r} must be 'name: value'")
            pname, _, pval = item.partition(":")
            pname = pname.strip()
            if not pname.isidentifier():
                raise SpecFormatError(f"bad parameter name {pname!r}")
            try:
                params[pname] = float(pval)
            except ValueError:
                raise SpecFormatError(f"bad parameter value for {pname!r}")

    pnames = set(params)
    metric_upper = {}
    for (i, j), expr_text in data["metric"].items():
        if i > j:
            raise SpecFormatError(
                f"metric {i} {j}: declare the upper triangle only (i <= j); "
                "the matrix is mirrored automatically")
        if j >= dim:
            raise SpecFormatError(f"metric {i} {j}: index out of range for dim {dim}")
        metric_upper[(i, j)] = exprlang.parse(expr_text, dim, pnames)
    if not any(i == j for (i, j) in metric_upper):
        raise SpecFormatError("metric has no diagonal entries")

    dtilde = []
    for k in range(n):
        if k not in data["dtilde"]:
            raise SpecFormatError(f"missing dtilde {k}")
        comps = _split_top_level(data["dtilde"][k])
        if len(comps) != dim:
            raise SpecFormatError(
                f"dtilde {k}: expected {dim} components, got {len(comps)}")
        dtilde.append(tuple(exprlang.parse(c, dim, pnames) for c in comps))
    extra = set(data["dtilde"]) - set(range(n))
    if extra:
        raise SpecFormatError(f"dtilde indices out of range: {sorted(extra)}")

    intervals = []
    for part in scalars["domain"].split("x"):
        part = part.strip()
        m = _INTERVAL_RE.match(part)
        if not m:
            raise SpecFormatError(f"bad domain interval {part!r}")
        lo, hi = float(m.group(1)), float(m.group(2))
        if not lo < hi:
            raise SpecFormatError(f"empty domain interval {part!r}")
        intervals.append((lo, hi))
    if len(intervals) != dim:
        raise SpecFormatError(f"domain needs {dim} intervals, got {len(intervals)}")

    return ProductStructure(
        dim=dim,
        n=n,
        metric_upper=metric_upper,
        dtilde=tuple(dtilde),
        params=params,
        domain=tuple(intervals),
        name=scalars.get("name", ""),
        source_text=text,
    )


def _split_top_level(text):
    parts, depth_, start = [], 0, 0
    for i, c in enumerate(text):
        if c == "(":
            depth_ += 1
        elif c == ")":
            depth_ -= 1
        elif c == "," and depth_ == 0:
            parts.append(text[start:i].strip())
            start = i + 1
    parts.append(text[start:].strip())
    return [p for p in parts if p]


# ----------------------------------------------------------------------
# Adapted orthonormal frames under indefinite metrics

@dataclass
class AdaptedFrame:
    E: list            # n frame vectors tangent to the distribution (chart comps)
    eps_tan: list      # their signs g(E_a, E_a)
    Eperp: list        # p frame vectors spanning the orthogonal complement
    eps_perp: list
    point: tuple = field(default_factory=tuple)

    @property
    def vectors(self):
        return list(self.E) + list(self.Eperp)

    @property
    def signs(self):
        return list(self.eps_tan) + list(self.eps_perp)


def _inner(gmat, v, w):
    total = 0.0
    for i, vi in enumerate(v):
        row = gmat[i]
        for j, wj in enumerate(w):
            total = total + vi * row[j] * wj
    return total


def _euclid2(v):
    return sum(value_of(x) ** 2 for x in v)


def _gs_pass(gmat, seq, n_span, dim, tol, gscale, point, record_pivots=None):
    """One indefinite Gram-Schmidt sweep over the vector sequence ``seq``.

    ``seq`` yields (tag, vector); span vectors must come first.  Projection
    coefficients reuse cached covectors g(e_k, .) so each step is O(dim^2).
    Returns (frame, signs, accepted tags).
    """
    frame, flats, signs, tags = [], [], [], []
    for tag, w in seq:
        v = list(w)
        for e, fl, s in zip(frame, flats, signs):
            c = 0.0
            for i in range(dim):
                c = c + fl[i] * v[i]
            for i in range(dim):
                v[i] = v[i] - s * c * e[i]
        q = _inner(gmat, v, v)
        if abs(value_of(q)) < tol * max(_euclid2(v), 1e-300) * gscale:
            if len(frame) < n_span:
                raise DegenerateDistributionError(
                    "distribution vector is null or dependent", point=point)
            continue
        s = 1.0 if value_of(q) > 0.0 else -1.0
        norm = jsqrt(s * q)
        e = [x / norm for x in v]
        frame.append(e)
        flats.append([sum(gmat[i][j] * e[j] for j in range(dim)) for i in range(dim)])
        signs.append(s)
        tags.append(tag)
        if len(frame) == dim:
            break
    if len(frame) < dim:
        raise DegenerateDistributionError(
            "no non-null candidate for the orthogonal complement", point=point)
    return frame, signs, tags


def orthonormal_frame(gmat, span_vectors, dim, tol=DEGENERACY_TOL, point=None):
    """Pivoted indefinite Gram-Schmidt, generic over floats and jets.

    Span vectors are orthogonalized in declared order; the complement is
    filled from coordinate basis vectors.  Pivoting (on the largest |g(v,v)|
    among the reduced candidates, to avoid near-null vectors) is decided on a
    cheap float pass over the value parts; the jet pass then runs the chosen
    order, so the selection is locally constant and jet-differentiable.
    """
    gscale = max(abs(value_of(gmat[i][j])) for i in range(dim) for j in range(dim))
    gscale = max(gscale, 1e-300)
    n = len(span_vectors)

    g0 = [[value_of(x) for x in row] for row in gmat]
    frame0, signs0 = [], []
    for w in span_vectors:
        v = [value_of(x) for x in w]
        for e, s in zip(frame0, signs0):
            c = _inner(g0, v, e)
            v = [v[i] - s * c * e[i] for i in range(dim)]
        q = _inner(g0, v, v)
        if abs(q) < tol * max(_euclid2(v), 1e-300) * gscale:
            raise DegenerateDistributionError(
                "distribution vector is null or dependent", point=point)
        s = 1.0 if q > 0.0 else -1.0
        frame0.append([x / math.sqrt(s * q) for x in v])
        signs0.append(s)
    pivots = []
    candidates = set(range(dim))
    while len(frame0) < dim:
        best, best_v, best_q = None, None, -1.0
        for mu in sorted(candidates):
            v = [1.0 if i == mu else 0.0 for i in range(dim)]
            for e, s in zip(frame0, signs0):
                c = _inner(g0, v, e)
                v = [v[i] - s * c * e[i] for i in range(dim)]
            q = _inner(g0, v, v)
            if abs(q) > best_q:
                best, best_v, best_q = mu, v, abs(q)
        if best is None or best_q < tol * max(_euclid2(best_v), 1e-300) * gscale:
            raise DegenerateDistributionError(
                "no non-null candidate for the orthogonal complement", point=point)
        candidates.discard(best)
        pivots.append(best)
        q = _inner(g0, best_v, best_v)
        s = 1.0 if q > 0.0 else -1.0
        frame0.append([x / math.sqrt(s * q) for x in best_v])
        signs0.append(s)

    any_jet = any(isinstance(gmat[i][j], Jet) for i in range(dim) for j in range(dim)) \
        or any(isinstance(c, Jet) for w in span_vectors for c in w)
    if not any_jet:
        frame, signs = frame0, signs0
    else:
        seq = [(("span", k), list(w)) for k, w in enumerate(span_vectors)]
        seq += [(("basis", mu), [1.0 if i == mu else 0.0 for i in range(dim)])
                for mu in pivots]
        frame, signs, _ = _gs_pass(gmat, seq, n, dim, tol, gscale, point)

    return AdaptedFrame(
        E=frame[:n],
        eps_tan=[float(s) for s in signs[:n]],
        Eperp=frame[n:],
        eps_perp=[float(s) for s in signs[n:]],
        point=tuple(value_of(x) for x in (point or ())),
    )


def adapted_frame(s, point, metric=None, dtilde=None):
    """Adapted orthonormal frame of a structure at a point (floats or jets)."""
    gmat = s.metric_at(point) if metric is None else metric
    span = s.dtilde_at(point) if dtilde is None else dtilde
    return orthonormal_frame(gmat, span, s.dim, point=_values(point))


def signature(s, point, samples=16, rng_seed=20260505):
    """Frame signs at ``point``; checks sign stability over domain samples."""
    fr = adapted_frame(s, point)
    base = (tuple(fr.eps_tan), tuple(fr.eps_perp))
    for q in s.interior_points(samples, rng_seed):
        other = adapted_frame(s, q)
        if (tuple(other.eps_tan), tuple(other.eps_perp)) != base:
            raise SignatureInstabilityError(
                f"frame signs {base} at {tuple(_values(point))} flip to "
                f"{(tuple(other.eps_tan), tuple(other.eps_perp))} at {q}")
    return base
