"""Secrecy-capacity bounds for wiretap channels with causal state and secure feedback.

The evaluators work on exact joint tables built from a ``WiretapSystem`` and a
policy. ``optimize`` maximizes the bound expressions over p(x|s); binary inputs
use a grid plus golden-section refinement, larger alphabets a multi-start SLSQP
on the epigraph of the min-objective.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize

from .channels import BscScenario, WiretapSystem, check_degraded, check_reverse_degraded
from .errors import NotDegraded, StructuralAssumptionViolated, ValidationError
from .prob import (
    MASS_TOL,
    JointPmf,
    Pmf,
    binary_convolve,
    binary_entropy,
    conditional_entropy,
    entropy_of_array,
    mutual_information,
)

GOLDEN_TOL = 1e-7
TIE_TOL = 1e-12
INDEPENDENCE_TOL = 1e-12


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InputPolicy:
    """p(x|s), indexed ``table[s, x]``."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 2:
            raise ValidationError("InputPolicy table must be [s, x]")
        if np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > MASS_TOL):
            raise ValidationError("each row of p(x|s) must be a valid pmf")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def uniform(cls, n_states: int, n_inputs: int) -> "InputPolicy":
        return cls(np.full((n_states, n_inputs), 1.0 / n_inputs))

    @property
    def state_independent(self) -> bool:
        return bool(np.allclose(self.table, self.table[:1], rtol=0, atol=INDEPENDENCE_TOL))

    def __repr__(self) -> str:
        return f"InputPolicy({np.round(self.table, 9).tolist()})"


@dataclass(frozen=True, eq=False)
class AuxPolicy:
    """Auxiliary representation p(u'), u = u_map[u', s], p(x|u,s).

    ``p_x_given_us`` is indexed ``[u, s, x]``; the U alphabet size is its first
    dimension.
    """

    p_u: Pmf
    u_map: np.ndarray
    p_x_given_us: np.ndarray

    def __post_init__(self):
        p_u = self.p_u if isinstance(self.p_u, Pmf) else Pmf(self.p_u)
        umap = np.array(self.u_map, dtype=np.int64)
        pxus = np.array(self.p_x_given_us, dtype=float)
        if umap.ndim != 2 or umap.shape[0] != p_u.support_size:
            raise ValidationError("u_map must be indexed [u', s]")
        if pxus.ndim != 3 or pxus.shape[1] != umap.shape[1]:
            raise ValidationError("p_x_given_us must be indexed [u, s, x]")
        if umap.min() < 0 or umap.max() >= pxus.shape[0]:
            raise ValidationError("u_map values out of range")
        if np.any(pxus < 0) or np.any(np.abs(pxus.sum(axis=2) - 1.0) > MASS_TOL):
            raise ValidationError("rows of p(x|u,s) must be valid pmfs")
        for a in (umap, pxus):
            a.setflags(write=False)
        object.__setattr__(self, "p_u", p_u)
        object.__setattr__(self, "u_map", umap)
        object.__setattr__(self, "p_x_given_us", pxus)

    @property
    def aux_size(self) -> int:
        return self.p_u.support_size

    @property
    def u_size(self) -> int:
        return self.p_x_given_us.shape[0]

    @property
    def n_states(self) -> int:
        return self.u_map.shape[1]

    @classmethod
    def identity(cls, n_states: int, p_x) -> "AuxPolicy":
        """U' = U = X with X ~ p_x independent of the state."""
        p_x = p_x if isinstance(p_x, Pmf) else Pmf(p_x)
        k = p_x.support_size
        umap = np.repeat(np.arange(k)[:, None], n_states, axis=1)
        pxus = np.repeat(np.eye(k)[:, None, :], n_states, axis=1)
        return cls(p_x, umap, pxus)

    @classmethod
    def shannon_strategies(cls, n_states: int, n_inputs: int, weights) -> "AuxPolicy":
        """U' ranges over all maps S -> X; X = u'(s) deterministically, U = U'."""
        strategies = list(itertools.product(range(n_inputs), repeat=n_states))
        k = len(strategies)
        pxus = np.zeros((k, n_states, n_inputs))
        for u, strat in enumerate(strategies):
            for s, x in enumerate(strat):
                pxus[u, s, x] = 1.0
        umap = np.repeat(np.arange(k)[:, None], n_states, axis=1)
        return cls(Pmf(weights), umap, pxus)

    def to_json(self) -> dict:
        return {
            "p_u": self.p_u.probs.tolist(),
            "u_map": self.u_map.tolist(),
            "p_x_given_us": self.p_x_given_us.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AuxPolicy":
        return cls(Pmf(doc["p_u"]), doc["u_map"], doc["p_x_given_us"])


def _check_dims(sys: WiretapSystem, policy) -> None:
    ns, nx = sys.law.shape[:2]
    if isinstance(policy, InputPolicy):
        if policy.table.shape != (ns, nx):
            raise ValidationError(f"policy shape {policy.table.shape} != (|S|,|X|)=({ns},{nx})")
    elif isinstance(policy, AuxPolicy):
        if policy.n_states != ns or policy.p_x_given_us.shape[2] != nx:
            raise ValidationError("aux policy dimensions do not match the system")
    else:
        raise ValidationError(f"unsupported policy type {type(policy).__name__}")


def policy_joint(sys: WiretapSystem, policy) -> JointPmf:
    """Joint law over (S, U', U, X, Y, Z); U' = U = X for an ``InputPolicy``."""
    _check_dims(sys, policy)
    ps = sys.state_law.probs
    if isinstance(policy, InputPolicy):
        j = ps[:, None, None, None] * policy.table[:, :, None, None] * sys.law
        nx = j.shape[1]
        eye = np.eye(nx)
        # copy X into the U' and U axes so both representations share one code path
        full = np.einsum("sxyz,ax,bx->sabxyz", j, eye, eye)
        return JointPmf(full, names=("S", "U'", "U", "X", "Y", "Z"))
    ns = ps.size
    nup, nu = policy.aux_size, policy.u_size
    delta = np.zeros((ns, nup, nu))
    for s in range(ns):
        delta[s, np.arange(nup), policy.u_map[:, s]] = 1.0
    pxus = np.transpose(policy.p_x_given_us, (1, 0, 2))  # [s, u, x]
    full = np.einsum(
        "s,a,sab,sbx,sxyz->sabxyz", ps, policy.p_u.probs, delta, pxus, sys.law
    )
    return JointPmf(full, names=("S", "U'", "U", "X", "Y", "Z"))


@dataclass(frozen=True)
class InfoTerms:
    i_xy_s: float
    i_xz_s: float
    h_s_z: float
    i_xy_zs: float
    i_uy_s: float
    i_uz_s: float
    h_s_zu: float
    i_us: float = 0.0

    def to_json(self) -> dict:
        return dict(self.__dict__)


def info_terms(sys: WiretapSystem, policy) -> InfoTerms:
    """All mutual informations entering the bounds, evaluated exactly."""
    j = policy_joint(sys, policy)
    return InfoTerms(
        i_xy_s=mutual_information(j, "X", "Y", "S"),
        i_xz_s=mutual_information(j, "X", "Z", "S"),
        h_s_z=conditional_entropy(j, "S", "Z"),
        i_xy_zs=mutual_information(j, "X", "Y", ["Z", "S"]),
        i_uy_s=mutual_information(j, "U", "Y", "S"),
        i_uz_s=mutual_information(j, "U", "Z", "S"),
        h_s_zu=conditional_entropy(j, "S", ["Z", "U"]),
        i_us=mutual_information(j, "U", "S"),
    )


def aux_channel_rates(sys: WiretapSystem, aux: AuxPolicy) -> dict:
    """I(U';Y,S), I(U';Z,S) and H(S|Z) used to size the codebook and its bins."""
    j = policy_joint(sys, aux)
    return {
        "i_uy": mutual_information(j, "U'", ["Y", "S"]),
        "i_uz": mutual_information(j, "U'", ["Z", "S"]),
        "h_s_z": conditional_entropy(j, "S", "Z"),
        "h_s_zu": conditional_entropy(j, "S", ["Z", "U"]),
    }


# ---------------------------------------------------------------------------
# bound evaluators
# ---------------------------------------------------------------------------


class LowerBound(NamedTuple):
    r_hat1: float
    r_hat2: float
    r_hat3: Optional[float]
    value: float
    branch: int


def lower_bound(sys: WiretapSystem, policy, R_f: float) -> LowerBound:
    """Achievable rate of the two-key scheme for one auxiliary policy.

    Branch 1 (wiretap coding plus both keys) is always admissible because every
    policy here has the p(u|s)p(x|u,s) form. Branch 2 (keys only) needs U
    independent of S; otherwise ``r_hat3`` is None.
    """
    if R_f < 0:
        raise ValidationError("feedback rate must be non-negative")
    t = info_terms(sys, policy)
    r1 = t.i_uy_s - t.i_uz_s + t.h_s_z + R_f
    r2 = t.i_uy_s
    r3 = t.h_s_zu + R_f if t.i_us <= INDEPENDENCE_TOL else None
    b1 = min(r1, r2)
    b2 = min(r3, r2) if r3 is not None else -np.inf
    branch = 1 if b1 >= b2 else 2
    return LowerBound(r1, r2, r3, max(0.0, b1, b2), branch)


def upper_bound(sys: WiretapSystem, policy: InputPolicy, R_f: float) -> float:
    """min{ I(X;Y|Z,S) + H(S|Z) + R_f, I(X;Y|S) } for a fixed p(x|s)."""
    if not isinstance(policy, InputPolicy):
        raise ValidationError("the upper bound is evaluated on p(x|s) policies")
    if R_f < 0:
        raise ValidationError("feedback rate must be non-negative")
    t = info_terms(sys, policy)
    return max(0.0, min(t.i_xy_zs + t.h_s_z + R_f, t.i_xy_s))


# ---------------------------------------------------------------------------
# batched term evaluation used by the optimizer
# ---------------------------------------------------------------------------




def _h(m: np.ndarray) -> np.ndarray:
    flat = m.reshape(m.shape[0], -1)
    safe = np.where(flat > 1e-15, flat, 1.0)
    return -(flat * np.log2(safe)).sum(axis=1)


_TERM_ENTROPIES = {
    "i_xy_s": (("sx", 1), ("sy", 1), ("sxy", -1), ("s", -1)),
    "i_xz_s": (("sx", 1), ("sz", 1), ("sxz", -1), ("s", -1)),
    "h_s_z": (("sz", 1), ("z", -1)),
    "i_xy_zs": (("sxz", 1), ("syz", 1), ("sxyz", -1), ("sz", -1)),
    "h_s_zx": (("sxz", 1), ("xz", -1)),
    "h_s": (("s", 1),),
    "i_xy": (("x", 1), ("y", 1), ("xy", -1)),
    "i_xz": (("x", 1), ("z", 1), ("xz", -1)),
    "i_xy_z": (("xz", 1), ("yz", 1), ("xyz", -1), ("z", -1)),
    "h_y_xz": (("xyz", 1), ("xz", -1)),
}


class _BatchTerms:
    """Lazily evaluated information terms for a batch of p(x|s) tables."""

    def __init__(self, sys: WiretapSystem, tables: np.ndarray):
        ps = sys.state_law.probs
        self._joint = ps[None, :, None, None, None] * tables[:, :, :, None, None] * sys.law[None]
        self._h: dict = {}

    def entropy(self, axes: str) -> np.ndarray:
        if axes not in self._h:
            drop = tuple(1 + i for i, a in enumerate("sxyz") if a not in axes)
            self._h[axes] = _h(self._joint.sum(axis=drop) if drop else self._joint)
        return self._h[axes]

    def __getitem__(self, name: str) -> np.ndarray:
        return sum(sign * self.entropy(axes) for axes, sign in _TERM_ENTROPIES[name])


def batch_terms(sys: WiretapSystem, tables: np.ndarray) -> dict:
    """Information terms for a batch of p(x|s) tables of shape (N, S, X)."""
    t = _BatchTerms(sys, np.asarray(tables, dtype=float))
    return {name: t[name] for name in _TERM_ENTROPIES}


# objective name -> (pieces of the min, input tied across states)
_OBJECTIVES: dict[str, tuple[Callable, bool]] = {
    "corollary": (lambda t, rf: [t["i_xy_s"] - t["i_xz_s"] + t["h_s_z"] + rf, t["i_xy_s"]], False),
    "upper": (lambda t, rf: [t["i_xy_zs"] + t["h_s_z"] + rf, t["i_xy_s"]], False),
    "lower-keys": (lambda t, rf: [t["h_s_zx"] + rf, t["i_xy_s"]], True),
    "degraded-no-state": (lambda t, rf: [t["i_xy"] - t["i_xz"] + t["h_s"] + rf, t["i_xy"]], True),
    "less-noisy-eve": (lambda t, rf: [t["h_s"] + rf, t["i_xy"]], True),
    "output-feedback": (lambda t, rf: [t["i_xy_z"] + t["h_y_xz"], t["i_xy"]], True),
    "feedback-only": (lambda t, rf: [t["i_xy_z"] + rf, t["i_xy"]], True),
    "decoder-only-csi": (
        lambda t, rf: [t["i_xy_s"] - t["i_xz_s"] + t["h_s_z"] + (rf - t["h_s"]), t["i_xy_s"]],
        False,
    ),
}


class _Problem:
    """Vectorized min-objective over p(x|s) tables."""

    def __init__(self, sys: WiretapSystem, name: str, R_f: float):
        self.sys = sys
        self.pieces_fn, self.tied = _OBJECTIVES[name]
        self.R_f = R_f
        self.ns, self.nx = sys.law.shape[:2]
        self.rows = 1 if self.tied else self.ns

    def tables(self, rows: np.ndarray) -> np.ndarray:
        """(N, rows, X) -> (N, S, X)."""
        return np.broadcast_to(rows, (rows.shape[0], self.ns, self.nx)) if self.tied else rows

    def pieces(self, rows: np.ndarray) -> np.ndarray:
        t = _BatchTerms(self.sys, self.tables(rows))
        return np.stack(self.pieces_fn(t, self.R_f))

    def value(self, rows: np.ndarray) -> np.ndarray:
        return self.pieces(rows).min(axis=0)


def _golden_max(f, a: float, b: float, tol: float = GOLDEN_TOL):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _binary_rows(theta: np.ndarray) -> np.ndarray:
    theta = np.clip(theta, 0.0, 1.0)
    return np.stack([theta, 1.0 - theta], axis=-1)


def _first_near_max(v: np.ndarray) -> int:
    """First index within TIE_TOL of the maximum (grids run in ascending p(x=0|s))."""
    return int(np.flatnonzero(v >= v.max() - TIE_TOL)[0])


def _maximize_binary(prob: _Problem, resolution: float):
    grid = np.arange(0.0, 1.0 + resolution / 2, resolution)
    grid = np.clip(grid, 0.0, 1.0)
    d = prob.rows

    def f_batch(thetas):
        return prob.value(_binary_rows(thetas))

    # diagonal grid: every state uses the same p(x=0|s)
    vals = f_batch(np.repeat(grid[:, None], d, axis=1))
    k = _first_near_max(vals)
    theta = np.full(d, grid[k])
    best = float(vals[k])

    def refine(coord, theta, best):
        cand = np.repeat(theta[None], grid.size, axis=0)
        cand[:, coord] = grid
        v = f_batch(cand)
        k = _first_near_max(v)
        if v[k] > best + TIE_TOL or (abs(v[k] - best) <= TIE_TOL and grid[k] < theta[coord]):
            theta = cand[k].copy()
            best = float(v[k])
        lo = max(0.0, theta[coord] - resolution)
        hi = min(1.0, theta[coord] + resolution)

        def f1(t):
            c = theta.copy()
            c[coord] = t
            return float(f_batch(c[None])[0])

        t, fv = _golden_max(f1, lo, hi)
        if fv > best + TIE_TOL:
            theta = theta.copy()
            theta[coord] = t
            best = fv
        return theta, best

    for _ in range(50):
        before = best
        for coord in range(d):
            theta, best = refine(coord, theta, best)
        if d == 1 or best - before <= 1e-13:
            break
    rows = _binary_rows(theta)
    if d > 1:
        rows, best = _polish(prob, rows, best)
    return rows, best


def _polish(prob: _Problem, rows: np.ndarray, best: float):
    """SLSQP on the epigraph max t s.t. t <= every piece; keeps the better point."""
    cand_rows, cand_val = _slsqp(prob, rows)
    if cand_val > best + TIE_TOL:
        return cand_rows, cand_val
    return rows, best


def _normalize(v: np.ndarray, shape) -> np.ndarray:
    p = np.clip(v.reshape(shape), 0.0, None)
    s = p.sum(axis=1, keepdims=True)
    s[s <= 0] = 1.0
    return p / s


def _slsqp(prob: _Problem, start_rows: np.ndarray):
    shape = (prob.rows, prob.nx)
    npar = prob.rows * prob.nx
    cache: dict = {}

    def pieces(v):
        key = v[:npar].tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = prob.pieces(_normalize(v[:npar], shape)[None])[:, 0]
        return cache[key]

    x0 = np.concatenate([start_rows.ravel(), [float(prob.value(start_rows[None])[0])]])
    cons = [
        {"type": "ineq", "fun": lambda v: pieces(v) - v[-1]},
        {"type": "eq", "fun": lambda v: v[:npar].reshape(shape).sum(axis=1) - 1.0},
    ]
    bounds = [(0.0, 1.0)] * npar + [(None, None)]
    res = minimize(lambda v: -v[-1], x0, jac=lambda v: np.r_[np.zeros(npar), -1.0],
                   method="SLSQP", bounds=bounds, constraints=cons,
                   options={"ftol": 1e-13, "maxiter": 300})
    rows = _normalize(res.x[:npar], shape)
    return rows, float(prob.value(rows[None])[0])


def _maximize_general(prob: _Problem, starts: int, seed: int):
    rng = np.random.default_rng(seed)
    shape = (prob.rows, prob.nx)
    inits = [np.full(shape, 1.0 / prob.nx)]
    inits += [rng.dirichlet(np.ones(prob.nx), size=prob.rows) for _ in range(starts - 1)]
    cands = []
    for r0 in inits:
        cands.append((float(prob.value(r0[None])[0]), r0))
        cands.append(_slsqp(prob, r0)[::-1])
    return _pick(cands)


def _pick(cands):
    """Highest value; among near-ties the lexicographically smallest policy."""
    best = max(v for v, _ in cands)
    tied = [(tuple(np.round(r.ravel(), 12)), v, r) for v, r in cands if v >= best - TIE_TOL]
    tied.sort(key=lambda c: c[0])
    _, v, r = tied[0]
    return r, v


def maximize_policy(sys: WiretapSystem, objective: str, R_f: float,
                    resolution: float = 1e-3, starts: int = 6, seed: int = 0):
    """Maximize a named min-objective over p(x|s). Returns (InputPolicy, value)."""
    if objective not in _OBJECTIVES:
        raise ValidationError(f"unknown objective {objective!r}")
    if not resolution > 0:
        raise ValidationError("resolution must be positive")
    prob = _Problem(sys, objective, R_f)
    if prob.nx == 1:
        rows = np.ones((prob.rows, 1))
        val = float(prob.value(rows[None])[0])
    elif prob.nx == 2:
        rows, val = _maximize_binary(prob, resolution)
    else:
        rows, val = _maximize_general(prob, starts, seed)
    table = prob.tables(rows[None])[0]
    return InputPolicy(np.array(table)), val


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class BoundReport:
    objective: str
    value: float
    feedback_rate: float
    policy: InputPolicy
    r_hat1: Optional[float] = None
    r_hat2: Optional[float] = None
    r_hat3: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    branch: Optional[int] = None
    resolution: float = 1e-3
    aux: Optional[AuxPolicy] = None

    def to_json(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("policy", "aux")}
        d["policy"] = self.policy.table.tolist()
        if self.aux is not None:
            d["aux"] = self.aux.to_json()
        return d


OBJECTIVES = ("lower", "upper", "corollary")


def optimize(sys: WiretapSystem, R_f: float, objective: str = "corollary",
             resolution: float = 1e-3, starts: int = 6, seed: int = 0) -> BoundReport:
    """Optimize a bound over p(x|s).

    ``lower`` takes U = X and evaluates both outer branches of the achievable
    rate (the key-only branch over state-independent inputs), ``upper`` the
    converse expression, ``corollary`` the degraded-eavesdropper capacity.
    """
    if R_f < 0:
        raise ValidationError("feedback rate must be non-negative")
    if objective not in OBJECTIVES:
        raise ValidationError(f"objective must be one of {OBJECTIVES}")
    if objective == "corollary" and not check_degraded(sys):
        raise NotDegraded("corollary objective needs a degraded eavesdropper channel")
    kw = dict(resolution=resolution, starts=starts, seed=seed)
    branch = None
    if objective == "lower":
        p1, v1 = maximize_policy(sys, "corollary", R_f, **kw)
        p2, v2 = maximize_policy(sys, "lower-keys", R_f, **kw)
        policy, val, branch = (p1, v1, 1) if v1 >= v2 - TIE_TOL else (p2, v2, 2)
    else:
        policy, val = maximize_policy(sys, objective, R_f, **kw)
    val = max(0.0, val)
    lb = lower_bound(sys, policy, R_f)
    rep = BoundReport(objective, val, R_f, policy, lb.r_hat1, lb.r_hat2, lb.r_hat3,
                      branch=branch, resolution=resolution)
    if objective == "lower":
        rep.lower = val
    elif objective == "upper":
        rep.upper = val
    return rep


def corollary_capacity(sys: WiretapSystem, R_f: float, resolution: float = 1e-3) -> BoundReport:
    """Secrecy capacity when the eavesdropper is degraded."""
    return optimize(sys, R_f, "corollary", resolution)


def search_aux(sys: WiretapSystem, R_f: float, levels: int = 10):
    """Exhaustive quantized search over Shannon-strategy auxiliaries.

    U' ranges over the maps S -> X (so U is independent of S and both outer
    branches are admissible) with p(u') on a grid of step 1/levels. Only run
    when the number of strategies is at most |X|*|S|.
    Returns (AuxPolicy, LowerBound).
    """
    ns, nx = sys.law.shape[:2]
    k = nx ** ns
    if k > nx * ns:
        raise ValidationError(f"{k} strategies exceed the |X|*|S| = {nx * ns} search cap")
    best = None
    for comp in _compositions(levels, k):
        aux = AuxPolicy.shannon_strategies(ns, nx, np.array(comp, dtype=float) / levels)
        lb = lower_bound(sys, aux, R_f)
        if best is None or lb.value > best[1].value + TIE_TOL:
            best = (aux, lb)
    return best


def _compositions(total: int, parts: int):
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for c in cuts + (total + parts - 1,):
            out.append(c - prev - 1)
            prev = c
        yield out


def theorem1_lower(sys: WiretapSystem, R_f: float, resolution: float = 1e-3,
                   aux_levels: Optional[int] = None) -> BoundReport:
    """Best achievable rate over U = X policies and, optionally, strategy auxiliaries."""
    rep = optimize(sys, R_f, "lower", resolution)
    if aux_levels:
        ns, nx = sys.law.shape[:2]
        if nx ** ns <= nx * ns:
            aux, lb = search_aux(sys, R_f, aux_levels)
            if lb.value > rep.value + TIE_TOL:
                rep = BoundReport("lower", lb.value, R_f, rep.policy, lb.r_hat1, lb.r_hat2,
                                  lb.r_hat3, lower=lb.value, branch=lb.branch,
                                  resolution=resolution, aux=aux)
    return rep


# ---------------------------------------------------------------------------
# binary symmetric closed forms
# ---------------------------------------------------------------------------


def bsc_nostate_capacity(scn: BscScenario, R_f: float) -> float:
    """min{1 - h(p_y), h(p_y * p_z) - h(p_y) + R_f}."""
    hy = binary_entropy(scn.p_y)
    return min(1.0 - hy, binary_entropy(binary_convolve(scn.p_y, scn.p_z)) - hy + R_f)


def bsc_state_capacity(scn: BscScenario, R_f: float) -> float:
    q = scn.q
    h0, h1 = binary_entropy(scn.p_s0), binary_entropy(scn.p_s1)
    main = 1.0 - (1 - q) * h0 - q * h1
    keyed = ((1 - q) * binary_entropy(binary_convolve(scn.p_s0, scn.p_z))
             + q * binary_entropy(binary_convolve(scn.p_s1, scn.p_z))
             - (1 - q) * h0 - q * h1 + binary_entropy(q) + R_f)
    return min(main, keyed)


# ---------------------------------------------------------------------------
# special cases
# ---------------------------------------------------------------------------

SPECIAL_CASES = (
    "degraded-no-state",
    "less-noisy-eve",
    "no-feedback",
    "decoder-only-csi",
    "output-feedback",
    "feedback-only",
)


def special_case(sys: WiretapSystem, R_f: float, case_tag: str, resolution: float = 1e-3) -> float:
    """Evaluate one of the reduced capacity expressions after checking its assumptions."""
    if case_tag not in SPECIAL_CASES:
        raise ValidationError(f"case_tag must be one of {SPECIAL_CASES}")
    if case_tag == "no-feedback":
        return optimize(sys, 0.0, "lower", resolution).value
    if case_tag in ("degraded-no-state", "less-noisy-eve", "output-feedback", "feedback-only"):
        if not sys.is_state_independent():
            raise StructuralAssumptionViolated(
                f"{case_tag}: p(y,z|x,s) depends on s; the reduction needs p(y,z|x,s)=p(y,z|x)"
            )
    if case_tag == "degraded-no-state":
        v = check_degraded(sys)
        if not v:
            raise StructuralAssumptionViolated(
                f"degraded-no-state: no stochastic p(z|y) reproduces p(z|x) (residual {v.residual:.3g})"
            )
    if case_tag == "less-noisy-eve":
        v = check_reverse_degraded(sys)
        if not v:
            raise StructuralAssumptionViolated(
                "less-noisy-eve: could not certify that Y is a degraded version of Z "
                f"(residual {v.residual:.3g}); this sufficient check is the only one implemented"
            )
    if case_tag == "decoder-only-csi":
        h_s = entropy_of_array(sys.state_law.probs)
        if R_f < h_s - 1e-12:
            raise StructuralAssumptionViolated(
                f"decoder-only-csi: needs R_f >= H(S) = {h_s:.6f} to forward the state"
            )
    _, val = maximize_policy(sys, case_tag, R_f, resolution)
    return max(0.0, val)


# ---------------------------------------------------------------------------
# decoder-only CSI identity
# ---------------------------------------------------------------------------


def decoder_only_csi_sides(ps, pu, px_u, py_xs, pz_x):
    """Both sides of the identity I(U;Y|S)-I(U;Z)+H(S) = I(U;Y|S)-I(U;Z|S)+H(S|Z).

    The joint is p(s)p(u)p(x|u)p(y|x,s)p(z|x), so S - U - Z is Markov.
    Also returns the gap I(U;Y,S) - I(U;Y|S), which vanishes because U and S
    are independent.
    """
    j = JointPmf(np.einsum("s,u,ux,sxy,xz->suxyz", ps, pu, px_u, py_xs, pz_x),
                 names=("S", "U", "X", "Y", "Z"))
    i_uy_s = mutual_information(j, "U", "Y", "S")
    lhs = i_uy_s - mutual_information(j, "U", "Z") + j.entropy("S")
    rhs = i_uy_s - mutual_information(j, "U", "Z", "S") + conditional_entropy(j, "S", "Z")
    chain_gap = mutual_information(j, "U", ["Y", "S"]) - i_uy_s
    return lhs, rhs, chain_gap


@dataclass
class IdentityReport:
    trials: int
    max_deviation: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def identity_check_decoder_only_csi(trials: int, rng: np.random.Generator,
                                    max_size: int = 3, tol: float = 1e-10) -> IdentityReport:
    """Check the decoder-only CSI identity on random structured systems."""
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    worst = 0.0
    bad = []
    for t in range(trials):
        ns, nu, nx, ny, nz = rng.integers(1, max_size + 1, size=5)
        args = (
            rng.dirichlet(np.ones(ns)),
            rng.dirichlet(np.ones(nu)),
            rng.dirichlet(np.ones(nx), size=nu),
            rng.dirichlet(np.ones(ny), size=(ns, nx)),
            rng.dirichlet(np.ones(nz), size=nx),
        )
        lhs, rhs, gap = decoder_only_csi_sides(*args)
        dev = max(abs(lhs - rhs), abs(gap))
        worst = max(worst, dev)
        if dev > tol:
            bad.append({"trial": t, "lhs": lhs, "rhs": rhs, "chain_gap": gap})
    return IdentityReport(trials, worst, bad)
