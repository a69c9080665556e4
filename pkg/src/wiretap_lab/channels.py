"""State-dependent wiretap systems, binary symmetric building blocks and sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .errors import ValidationError
from .prob import MASS_TOL, Channel, Pmf, _check_unit, binary_convolve

DEGRADED_TOL = 1e-9


def make_bsc(p: float) -> Channel:
    p = _check_unit(p, "crossover")
    return Channel([[1.0 - p, p], [p, 1.0 - p]])


def cascade(c1: Channel, c2: Channel) -> Channel:
    """Channel obtained by feeding the output of ``c1`` into ``c2``."""
    if c1.output_size != c2.input_size:
        raise ValidationError(
            f"cannot cascade {c1.input_size}x{c1.output_size} into "
            f"{c2.input_size}x{c2.output_size}"
        )
    return Channel(c1.matrix @ c2.matrix)


def _stochastic(table: np.ndarray, what: str) -> np.ndarray:
    table = np.array(table, dtype=float)
    if np.any(~np.isfinite(table)) or np.any(table < 0):
        raise ValidationError(f"{what}: entries must be finite and non-negative")
    sums = table.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > MASS_TOL):
        raise ValidationError(f"{what}: rows do not sum to one")
    return table


@dataclass(frozen=True, eq=False)
class WiretapSystem:
    """Memoryless wiretap channel with a state known to both legitimate ends.

    ``law[s, x, y, z]`` is p(y, z | x, s). ``eve_given_y`` is set when the
    system was built as a degraded cascade p(y|x,s) p(z|y).
    """

    state_law: Pmf
    law: np.ndarray
    eve_given_y: Optional[np.ndarray] = None

    def __post_init__(self):
        if not isinstance(self.state_law, Pmf):
            object.__setattr__(self, "state_law", Pmf(self.state_law))
        law = np.array(self.law, dtype=float)
        if law.ndim != 4:
            raise ValidationError("law must be indexed [s, x, y, z]")
        if law.shape[0] != self.state_law.support_size:
            raise ValidationError("state law and law disagree on |S|")
        flat = law.reshape(law.shape[0], law.shape[1], -1)
        _stochastic(flat, "p(y,z|x,s)")
        law.setflags(write=False)
        object.__setattr__(self, "law", law)
        if self.eve_given_y is not None:
            w = _stochastic(self.eve_given_y, "p(z|y)")
            w.setflags(write=False)
            object.__setattr__(self, "eve_given_y", w)

    @classmethod
    def degraded(cls, state_law, main, eve_given_y) -> "WiretapSystem":
        """p(y,z|x,s) = p(y|x,s) p(z|y)."""
        state_law = state_law if isinstance(state_law, Pmf) else Pmf(state_law)
        main = _stochastic(main, "p(y|x,s)")
        w = _stochastic(eve_given_y, "p(z|y)")
        if main.ndim != 3 or w.ndim != 2 or main.shape[2] != w.shape[0]:
            raise ValidationError("main must be [s,x,y] and eve_given_y [y,z]")
        law = main[:, :, :, None] * w[None, None, :, :]
        return cls(state_law, law, w)

    @classmethod
    def general(cls, state_law, main, eve) -> "WiretapSystem":
        """Separate marginals p(y|x,s), p(z|x,s), noises conditionally independent."""
        state_law = state_law if isinstance(state_law, Pmf) else Pmf(state_law)
        main = _stochastic(main, "p(y|x,s)")
        eve = _stochastic(eve, "p(z|x,s)")
        if main.ndim != 3 or eve.ndim != 3 or main.shape[:2] != eve.shape[:2]:
            raise ValidationError("main must be [s,x,y] and eve [s,x,z]")
        return cls(state_law, main[:, :, :, None] * eve[:, :, None, :])

    @property
    def sizes(self) -> dict:
        s, x, y, z = self.law.shape
        return {"S": s, "X": x, "Y": y, "Z": z}

    @property
    def main(self) -> np.ndarray:
        """p(y|x,s) indexed [s, x, y]."""
        return self.law.sum(axis=3)

    @property
    def eve(self) -> np.ndarray:
        """p(z|x,s) indexed [s, x, z]."""
        return self.law.sum(axis=2)

    def is_state_independent(self, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.law, self.law[:1], rtol=0, atol=atol))

    def to_json(self) -> dict:
        doc = {"state_law": self.state_law.probs.tolist(), "main": self.main.tolist()}
        if self.eve_given_y is not None:
            doc["eve_degraded"] = self.eve_given_y.tolist()
        else:
            doc["joint"] = self.law.tolist()
        return doc


@dataclass(frozen=True)
class BscScenario:
    p_y: float = 0.1
    p_z: float = 0.1
    p_s0: float = 0.05
    p_s1: float = 0.15
    q: float = 0.1

    def __post_init__(self):
        for name in ("p_y", "p_z", "p_s0", "p_s1", "q"):
            _check_unit(getattr(self, name), name)

    def replace(self, **kw) -> "BscScenario":
        d = dict(self.__dict__)
        d.update(kw)
        return BscScenario(**d)

    def to_json(self) -> dict:
        return dict(self.__dict__)


def make_state_bsc(scn: BscScenario, with_state: bool = True) -> WiretapSystem:
    """Degraded binary wiretap system with (or without) a two-valued state."""
    eve = make_bsc(scn.p_z).matrix
    if not with_state:
        main = make_bsc(scn.p_y).matrix[None]
        return WiretapSystem.degraded([1.0], main, eve)
    main = np.stack([make_bsc(scn.p_s0).matrix, make_bsc(scn.p_s1).matrix])
    return WiretapSystem.degraded([1.0 - scn.q, scn.q], main, eve)


@dataclass(frozen=True, eq=False)
class DegradedVerdict:
    degraded: bool
    witness: Optional[np.ndarray] = None
    residual: float = float("nan")

    def __bool__(self) -> bool:
        return self.degraded


def find_degrading_channel(source: np.ndarray, target: np.ndarray, tol: float = DEGRADED_TOL):
    """Search a row-stochastic W with source[r] @ W = target[r] for every row r.

    ``source`` is (rows, Y), ``target`` is (rows, Z). Returns (W or None, residual).
    The search is an LP minimizing the L1 mismatch subject to W stochastic.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    r, ny = source.shape
    nz = target.shape[1]
    nw = ny * nz
    nslack = r * nz
    # variables: W (ny*nz), slack_plus, slack_minus (each r*nz)
    c = np.concatenate([np.zeros(nw), np.ones(2 * nslack)])
    a_eq = np.zeros((nslack + ny, nw + 2 * nslack))
    b_eq = np.zeros(nslack + ny)
    for i in range(r):
        for z in range(nz):
            row = i * nz + z
            for y in range(ny):
                a_eq[row, y * nz + z] = source[i, y]
            a_eq[row, nw + row] = 1.0
            a_eq[row, nw + nslack + row] = -1.0
            b_eq[row] = target[i, z]
    for y in range(ny):
        a_eq[nslack + y, y * nz:(y + 1) * nz] = 1.0
        b_eq[nslack + y] = 1.0
    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        return None, float("inf")
    w = np.clip(res.x[:nw].reshape(ny, nz), 0.0, None)
    w /= w.sum(axis=1, keepdims=True)
    resid = float(np.abs(source @ w - target).max())
    return (w if resid <= tol else None), resid


def check_degraded(sys: WiretapSystem, tol: float = DEGRADED_TOL) -> DegradedVerdict:
    """Is p(z|x,s) = sum_y p(y|x,s) W(z|y) for some stochastic W?"""
    if sys.eve_given_y is not None:
        return DegradedVerdict(True, sys.eve_given_y, 0.0)
    nz = sys.law.shape[3]
    ny = sys.law.shape[2]
    source = sys.main.reshape(-1, ny)
    target = sys.eve.reshape(-1, nz)
    w, resid = find_degrading_channel(source, target, tol)
    return DegradedVerdict(w is not None, w, resid)


def check_reverse_degraded(sys: WiretapSystem, tol: float = DEGRADED_TOL) -> DegradedVerdict:
    """Is the main output a degraded version of the eavesdropper output?"""
    ny = sys.law.shape[2]
    nz = sys.law.shape[3]
    w, resid = find_degrading_channel(sys.eve.reshape(-1, nz), sys.main.reshape(-1, ny), tol)
    return DegradedVerdict(w is not None, w, resid)


def _inverse_cdf(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = (u[:, None] >= cdf_rows).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def sample_block(sys: WiretapSystem, x_seq, s_seq, rng: np.random.Generator):
    """Draw (y^n, z^n) from prod_i p(y_i, z_i | x_i, s_i)."""
    x = np.asarray(x_seq, dtype=np.int64)
    s = np.asarray(s_seq, dtype=np.int64)
    if x.shape != s.shape or x.ndim != 1:
        raise ValidationError("x and s sequences must be 1-D and of equal length")
    ns, nx, ny, nz = sys.law.shape
    if x.size and (x.min() < 0 or x.max() >= nx or s.min() < 0 or s.max() >= ns):
        raise ValidationError("symbol out of alphabet range")
    cdf = np.cumsum(sys.law.reshape(ns, nx, ny * nz), axis=2)[s, x]
    yz = _inverse_cdf(cdf, rng.random(x.size))
    return yz // nz, yz % nz


def sample_states(sys: WiretapSystem, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValidationError("n must be at least 1")
    if sys.state_law.support_size == 1:
        return np.zeros(n, dtype=np.int64)
    cdf = np.cumsum(sys.state_law.probs)
    return _inverse_cdf(np.broadcast_to(cdf, (n, cdf.size)), rng.random(n))


def system_from_json(doc: dict) -> tuple[WiretapSystem, Optional[BscScenario]]:
    """Scenario document to system.

    Accepts the BSC parameter form ``{"p_y", "p_z", "p_s0", "p_s1", "q"}``
    (plus optional ``"with_state"``) or the explicit-matrix form
    ``{"state_law", "main", "eve_degraded" | "eve" | "joint"}``.
    """
    if "main" in doc:
        state_law = doc.get("state_law", [1.0])
        if "eve_degraded" in doc:
            return WiretapSystem.degraded(state_law, doc["main"], doc["eve_degraded"]), None
        if "eve" in doc:
            return WiretapSystem.general(state_law, doc["main"], doc["eve"]), None
        if "joint" in doc:
            return WiretapSystem(Pmf(state_law), doc["joint"]), None
        raise ValidationError("explicit system needs eve_degraded, eve or joint")
    keys = {"p_y", "p_z", "p_s0", "p_s1", "q"}
    unknown = set(doc) - keys - {"with_state"}
    if unknown:
        raise ValidationError(f"unknown scenario keys {sorted(unknown)}")
    scn = BscScenario(**{k: float(v) for k, v in doc.items() if k in keys})
    return make_state_bsc(scn, bool(doc.get("with_state", True))), scn


def load_scenario(path) -> tuple[WiretapSystem, Optional[BscScenario]]:
    with open(path) as fh:
        return system_from_json(json.load(fh))


__all__ = [
    "BscScenario",
    "DegradedVerdict",
    "WiretapSystem",
    "binary_convolve",
    "cascade",
    "check_degraded",
    "check_reverse_degraded",
    "load_scenario",
    "make_bsc",
    "make_state_bsc",
    "sample_block",
    "sample_states",
    "system_from_json",
]
