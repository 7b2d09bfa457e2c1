"""Exact algebra of the non-isotropic Heisenberg group H^n_omega.

Points are stored in coordinates ``(x_1, y_1, ..., x_n, y_n, z)``.  All array
functions accept a trailing axis of length ``2n + 1`` and broadcast over the
leading axes; the :class:`GroupElement` wrapper is used at API boundaries.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class GroupContext:
    """Dimension ``n`` and the ascending parameters ``alphas``.

    ``permutation[k]`` is the position in the caller's original sequence of
    the k-th sorted parameter.
    """

    alphas: tuple
    permutation: tuple

    def __init__(self, alphas):
        a = np.atleast_1d(np.asarray(alphas, dtype=float))
        if a.ndim != 1 or a.size == 0:
            raise InputError("alphas must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise InputError(f"alphas must be finite and positive, got {list(a)}")
        order = np.argsort(a, kind="stable")
        object.__setattr__(self, "alphas", tuple(float(x) for x in a[order]))
        object.__setattr__(self, "permutation", tuple(int(i) for i in order))

    @property
    def n(self):
        return len(self.alphas)

    @property
    def dim(self):
        return 2 * len(self.alphas) + 1

    @property
    def alpha_array(self):
        return np.array(self.alphas)

    @property
    def original_alphas(self):
        """Parameters in the caller's order."""
        out = [0.0] * self.n
        for k, i in enumerate(self.permutation):
            out[i] = self.alphas[k]
        return out

    def to_json(self):
        return json.dumps({"alphas": list(self.alphas), "original": self.original_alphas})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(data.get("original", data["alphas"]))

    @classmethod
    def isotropic(cls, n=1):
        return cls([1.0] * n)


@dataclass(frozen=True)
class GroupElement:
    v: np.ndarray
    z: float

    def __init__(self, v, z=0.0):
        v = np.asarray(v, dtype=float).ravel().copy()
        if v.size % 2 or not np.all(np.isfinite(v)) or not np.isfinite(z):
            raise InputError("group element needs an even-length finite v and finite z")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "z", float(z))

    @classmethod
    def from_coords(cls, coords):
        coords = np.asarray(coords, dtype=float)
        return cls(coords[:-1], coords[-1])

    @property
    def coords(self):
        return np.append(self.v, self.z)

    def __array__(self, dtype=None, copy=None):
        return self.coords if dtype is None else self.coords.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return np.array_equal(self.v, other.v) and self.z == other.z

    def __hash__(self):
        return hash((self.v.tobytes(), self.z))

    def to_json(self):
        return json.dumps({"v": [float(x) for x in self.v], "z": self.z})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(data["v"], data["z"])


@dataclass(frozen=True)
class AlgebraElement:
    """Element ``(a, c)`` of the Lie algebra; kept distinct from group points."""

    a: np.ndarray
    c: float

    def __init__(self, a, c=0.0):
        a = np.asarray(a, dtype=float).ravel().copy()
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", float(c))

    @property
    def coords(self):
        return np.append(self.a, self.c)

    def __array__(self, dtype=None, copy=None):
        return self.coords if dtype is None else self.coords.astype(dtype)


def identity(ctx):
    return GroupElement(np.zeros(2 * ctx.n), 0.0)


def exp(X):
    """Exponential map; the identity in these coordinates."""
    return GroupElement(X.a, X.c)


def log(g):
    return AlgebraElement(g.v, g.z)


def _arr(g, ctx=None):
    p = np.asarray(g, dtype=float)
    if ctx is not None and p.shape[-1] != ctx.dim:
        raise InputError(f"expected trailing dimension {ctx.dim}, got {p.shape[-1]}")
    return p


def _wrap(like, coords):
    if isinstance(like, GroupElement):
        return GroupElement.from_coords(coords)
    if isinstance(like, AlgebraElement):
        return AlgebraElement(coords[:-1], coords[-1])
    return coords


def omega(ctx, v, w):
    """``sum_i a_i (x_i y'_i - x'_i y_i)``, broadcasting over leading axes."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape[-1] != 2 * ctx.n or w.shape[-1] != 2 * ctx.n:
        raise InputError(
            f"expected vectors of length {2 * ctx.n}, got {v.shape[-1]} and {w.shape[-1]}"
        )
    a = ctx.alpha_array
    return np.sum(a * (v[..., 0::2] * w[..., 1::2] - w[..., 0::2] * v[..., 1::2]), axis=-1)


def multiply(ctx, g1, g2):
    p, q = _arr(g1, ctx), _arr(g2, ctx)
    out = p + q
    out[..., -1] += 0.5 * omega(ctx, p[..., :-1], q[..., :-1])
    return _wrap(g1, out)


def inverse(g):
    return _wrap(g, -_arr(g))


def dilate(ctx, lam, g):
    if not lam > 0:
        raise InputError(f"dilation factor must be positive, got {lam}")
    p = _arr(g, ctx).copy()
    p[..., :-1] *= lam
    p[..., -1] *= lam * lam
    return _wrap(g, p)


def lie_bracket(ctx, X1, X2):
    p, q = _arr(X1, ctx), _arr(X2, ctx)
    out = np.zeros(np.broadcast_shapes(p.shape, q.shape))
    out[..., -1] = omega(ctx, p[..., :-1], q[..., :-1])
    if isinstance(X1, (AlgebraElement, GroupElement)):
        return AlgebraElement(out[:-1], out[-1])
    return out


def frame(ctx, g):
    """Coordinate coefficients of ``X_1, Y_1, ..., X_n, Y_n, Z`` at ``g``.

    Returns an array of shape ``(..., 2n + 1, 2n + 1)``; row ``k`` is the
    k-th vector field.
    """
    p = _arr(g, ctx)
    n = ctx.n
    a = ctx.alpha_array
    F = np.zeros(p.shape[:-1] + (2 * n + 1, 2 * n + 1))
    idx = np.arange(2 * n + 1)
    F[..., idx, idx] = 1.0
    F[..., 0:2 * n:2, -1] = -0.5 * a * p[..., 1:2 * n:2]
    F[..., 1:2 * n:2, -1] = 0.5 * a * p[..., 0:2 * n:2]
    return F


def map_F(alpha, g):
    """``(x, y, z) -> (x, y, alpha z)`` from H^1 (alpha = 1) to H^1 with ``alpha``."""
    p = _arr(g)
    if p.shape[-1] != 3:
        raise InputError("map_F is defined on the three-dimensional group only")
    if not alpha > 0:
        raise InputError(f"alpha must be positive, got {alpha}")
    out = p.copy()
    out[..., -1] *= alpha
    return _wrap(g, out)


def _project(ctx, gs, weights):
    gs = [np.asarray(g, dtype=float) for g in gs]
    if len(gs) != ctx.n:
        raise InputError(f"expected {ctx.n} factors, got {len(gs)}")
    if any(g.shape[-1] != 3 for g in gs):
        raise InputError("each factor must be a point of the three-dimensional group")
    stacked = np.stack(gs, axis=-2)  # (..., n, 3), caller order
    stacked = stacked[..., list(ctx.permutation), :]
    w = np.asarray(weights)[list(ctx.permutation)]
    out = np.empty(stacked.shape[:-2] + (ctx.dim,))
    out[..., :-1] = stacked[..., :2].reshape(stacked.shape[:-2] + (2 * ctx.n,))
    out[..., -1] = np.sum(w * stacked[..., 2], axis=-1)
    return out


def project_pi(ctx, gs):
    """Product of H^1 factors (parameters in ``ctx``, caller order) onto H^n.

    Factor ``i`` carries parameter ``alphas_original[i]``; blocks are placed
    in the sorted order of ``ctx``.
    """
    out = _project(ctx, gs, np.ones(ctx.n))
    return GroupElement.from_coords(out) if isinstance(gs[0], GroupElement) else out


def project_pi_omega(ctx, gs, original_alphas=None):
    """Product of isotropic H^1 factors onto H^n with weighted vertical sum.

    ``original_alphas`` gives the weight of each factor in caller order;
    by default the sorted parameters of ``ctx`` are used in that order.
    """
    if original_alphas is None:
        weights = np.empty(ctx.n)
        weights[list(ctx.permutation)] = ctx.alphas
    else:
        weights = np.asarray(original_alphas, dtype=float)
    out = _project(ctx, gs, weights)
    return GroupElement.from_coords(out) if isinstance(gs[0], GroupElement) else out


def product_multiply(ctxs, gs1, gs2):
    """Componentwise multiplication on a product of H^1 groups."""
    return [multiply(c, a, b) for c, a, b in zip(ctxs, gs1, gs2)]
