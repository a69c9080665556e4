"""Desk-scale block-Markov wiretap code with state and feedback keys.

A codebook of i.i.d. u'-words is randomly partitioned into bins addressed by
a triple (j0, j1, j2). In the ``wiretap`` mode j0 carries the message part m0
in the clear, j1 = m1 + k_s and j2 = m2 + k_f (modulo the bin counts), where
k_s is the bin index of the previous block's state sequence and k_f a fresh
key sent over the feedback link. In the ``key-split`` mode j0 is also driven
by the state key and there is no m0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np

from .capacity import AuxPolicy, aux_channel_rates
from .channels import WiretapSystem, sample_block, sample_states
from .errors import BudgetExceeded, DecodingFailure, InfeasibleSpec, ValidationError

MAX_WORDS = 2 ** 22
MAX_STATE_SEQUENCES = 2 ** 22
MODES = ("wiretap", "key-split")


def bin_count(n: int, rate: float) -> int:
    """floor(2^{n rate}), guarded against rounding just below an integer."""
    return int(math.floor(2.0 ** (n * rate) * (1 + 1e-12)))


@dataclass(frozen=True)
class CodebookSpec:
    n: int
    num_blocks: int
    r0: float
    r1: float
    r2: float
    codebook_rate: float
    aux: AuxPolicy
    epsilon: float = 0.05
    seed: int = 0
    mode: str = "wiretap"
    feedback_rate: Optional[float] = None

    def __post_init__(self):
        if self.n < 1 or self.num_blocks < 1:
            raise ValidationError("n and num_blocks must be positive")
        for name in ("r0", "r1", "r2", "codebook_rate", "epsilon"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.feedback_rate is None:
            object.__setattr__(self, "feedback_rate", self.r2)
        if self.r2 > self.feedback_rate + 1e-12:
            raise ValidationError("feedback key rate r2 exceeds the feedback rate")

    @property
    def bins(self) -> tuple:
        return bin_count(self.n, self.r0), bin_count(self.n, self.r1), bin_count(self.n, self.r2)

    @property
    def triples(self) -> int:
        n0, n1, n2 = self.bins
        return n0 * n1 * n2

    @property
    def nominal_words(self) -> int:
        return bin_count(self.n, self.codebook_rate)

    @property
    def per_bin(self) -> int:
        return self.nominal_words // self.triples

    @property
    def num_words(self) -> int:
        return self.per_bin * self.triples

    @property
    def state_keys(self) -> int:
        n0, n1, _ = self.bins
        return n0 * n1 if self.mode == "key-split" else n1

    @property
    def message_sizes(self) -> tuple:
        n0, n1, n2 = self.bins
        return (1 if self.mode == "key-split" else n0), n1, n2

    @property
    def message_count(self) -> int:
        return int(np.prod(self.message_sizes))

    @property
    def message_rate(self) -> float:
        """Bits per channel use carried by one protected block."""
        return math.log2(self.message_count) / self.n

    def validate(self) -> None:
        if self.nominal_words > MAX_WORDS:
            raise InfeasibleSpec(f"{self.nominal_words} codewords exceed the 2^22 cap")
        if self.per_bin < 1:
            raise InfeasibleSpec(
                f"{self.triples} bins but only {self.nominal_words} codewords; bins would be empty"
            )

    def to_json(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "aux"}
        d["aux"] = self.aux.to_json()
        d["bins"] = list(self.bins)
        d["num_words"] = self.num_words
        d["nominal_words"] = self.nominal_words
        d["residual_words"] = self.nominal_words - self.num_words
        d["message_rate"] = self.message_rate
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "CodebookSpec":
        keys = ("n", "num_blocks", "r0", "r1", "r2", "codebook_rate", "epsilon", "seed",
                "mode", "feedback_rate")
        return cls(aux=AuxPolicy.from_json(doc["aux"]), **{k: doc[k] for k in keys if k in doc})


def design_spec(sys: WiretapSystem, aux: AuxPolicy, R_f: float, *, n: int, num_blocks: int,
                fraction: float = 1.0, epsilon: float = 0.05, seed: int = 0,
                mode: str = "auto", key_split: float = 0.5) -> CodebookSpec:
    """Pick bin rates for the scheme with every message rate scaled by ``fraction``.

    ``mode`` is ``wiretap`` (first case), ``key-split`` (second case, the
    state key also addresses the top-level bins, ``key_split`` being its
    share of the state-key rate), ``pure-key`` (no Wyner layer, the key-only
    branch) or ``auto``. The codebook rate is the message rate plus enough
    randomization (unknown keys count) to cover I(U';Z,S) + epsilon, capped
    at I(U';Y,S) - epsilon; at ``fraction=1`` the two coincide. Message rates
    that do not fit under the codebook rate are trimmed.
    """
    if not 0 <= key_split <= 1:
        raise ValidationError("key_split must lie in [0, 1]")
    if fraction < 0:
        raise ValidationError("fraction must be non-negative")
    r = aux_channel_rates(sys, aux)
    i_y, i_z, eps = r["i_uy"], r["i_uz"], epsilon
    cap = max(0.0, i_y - eps)
    if mode == "auto":
        mode = "wiretap" if i_y >= i_z else "key-split"
    r2 = fraction * R_f
    if mode == "wiretap":
        r0 = fraction * max(0.0, i_y - i_z - 2 * eps)
        r1 = fraction * max(0.0, r["h_s_z"] - eps)
        rc = r0 + max(r1 + r2, i_z + eps)
        trim_order = ("r0", "r2", "r1")
    elif mode == "pure-key":
        r0 = 0.0
        r1 = fraction * max(0.0, r["h_s_zu"] - eps)
        rc = r1 + r2
        trim_order = ("r2", "r1")
        mode = "wiretap"
    elif mode == "key-split":
        key = fraction * max(0.0, r["h_s_z"] - eps)
        r0, r1 = key_split * key, (1 - key_split) * key
        rc = r0 + r1 + r2
        trim_order = ("r2", "r1", "r0")
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    rates = {"r0": r0, "r1": r1, "r2": r2}
    rc = min(rc, cap)
    excess = sum(rates.values()) - rc
    for name in trim_order:
        if excess <= 0:
            break
        cut = min(rates[name], excess)
        rates[name] -= cut
        excess -= cut
    return CodebookSpec(n=n, num_blocks=num_blocks, codebook_rate=rc, aux=aux, epsilon=eps,
                        seed=seed, mode=mode, feedback_rate=R_f, **rates)


@dataclass(frozen=True, eq=False)
class Codebook:
    spec: CodebookSpec
    words: np.ndarray
    members: np.ndarray
    bin_index: np.ndarray

    @property
    def size(self) -> int:
        return self.words.shape[0]

    @classmethod
    def from_words(cls, spec: CodebookSpec, words, rng: np.random.Generator) -> "Codebook":
        """Randomly partition given words (exactly ``spec.num_words`` of them)."""
        words = np.asarray(words, dtype=np.int64)
        n0, n1, n2 = spec.bins
        if words.shape != (spec.num_words, spec.n):
            raise InfeasibleSpec(f"need {spec.num_words} words of length {spec.n}")
        members = rng.permutation(spec.num_words).reshape(n0, n1, n2, spec.per_bin)
        bin_index = np.zeros((spec.num_words, 3), dtype=np.int64)
        for idx in np.ndindex(n0, n1, n2):
            bin_index[members[idx]] = idx
        for a in (words, members, bin_index):
            a.setflags(write=False)
        return cls(spec, words, members, bin_index)


def build_codebook(spec: CodebookSpec, rng: Optional[np.random.Generator] = None) -> Codebook:
    """Draw i.i.d. words from p(u') and split them into equal-size bin triples."""
    spec.validate()
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    p_u = spec.aux.p_u.probs
    drawn = rng.choice(p_u.size, size=(spec.nominal_words, spec.n), p=p_u)
    return Codebook.from_words(spec, drawn[: spec.num_words], rng)


@dataclass(frozen=True, eq=False)
class StateKeyBinning:
    n: int
    n_states: int
    n_keys: int
    table: np.ndarray

    def index_of(self, s_seq) -> int:
        s = np.asarray(s_seq, dtype=np.int64)
        if s.shape != (self.n,):
            raise ValidationError(f"state sequence must have length {self.n}")
        idx = 0
        for v in s:
            idx = idx * self.n_states + int(v)
        return idx


def build_state_binning(n: int, n_states: int, n_keys: int,
                        rng: np.random.Generator) -> StateKeyBinning:
    """Random balanced assignment of the |S|^n state sequences to key bins."""
    total = n_states ** n
    if total > MAX_STATE_SEQUENCES:
        raise InfeasibleSpec(f"{total} state sequences exceed the binning cap")
    table = np.empty(total, dtype=np.int64)
    table[rng.permutation(total)] = np.arange(total) % n_keys
    table.setflags(write=False)
    return StateKeyBinning(n, n_states, n_keys, table)


def state_key(binning: StateKeyBinning, s_seq) -> int:
    """Bin index of a state sequence."""
    return int(binning.table[binning.index_of(s_seq)])


@dataclass
class FeedbackLedger:
    """Running log-cardinality of feedback symbols against n * B * R_f bits."""

    n: int
    num_blocks: int
    rate: float
    bits: list = field(default_factory=list)

    @property
    def budget_bits(self) -> float:
        return self.n * self.num_blocks * self.rate

    @property
    def used_bits(self) -> float:
        return float(sum(self.bits))

    @property
    def normalized(self) -> float:
        return self.used_bits / (self.n * self.num_blocks)

    def consume(self, bits: float) -> None:
        if self.used_bits + bits > self.budget_bits + 1e-12 * self.n * self.num_blocks:
            raise BudgetExceeded(
                f"feedback needs {self.used_bits + bits:.6g} bits, budget {self.budget_bits:.6g}"
            )
        self.bits.append(bits)

    def satisfied(self) -> bool:
        return self.normalized <= self.rate + 1e-12


def draw_feedback_key(rng: np.random.Generator, n: int, r2: float,
                      ledger: Optional[FeedbackLedger] = None) -> int:
    """Uniform key over floor(2^{n r2}) values, charged to the ledger."""
    if r2 < 0:
        raise ValidationError("feedback key rate must be non-negative")
    count = bin_count(n, r2)
    if ledger is not None:
        ledger.consume(math.log2(count))
    return int(rng.integers(count))


def effective_channels(sys: WiretapSystem, aux: AuxPolicy):
    """p(y|u',s) and p(z|u',s), indexed [u', s, out]."""
    ns = sys.law.shape[0]
    main, eve = sys.main, sys.eve
    nup = aux.aux_size
    w = np.zeros((nup, ns, main.shape[2]))
    v = np.zeros((nup, ns, eve.shape[2]))
    for a in range(nup):
        for s in range(ns):
            px = aux.p_x_given_us[aux.u_map[a, s], s]
            w[a, s] = px @ main[s]
            v[a, s] = px @ eve[s]
    return w, v


@dataclass(frozen=True, eq=False)
class Scheme:
    """Codebook, state binning and decoding tables shared by every session."""

    sys: WiretapSystem
    spec: CodebookSpec
    codebook: Codebook
    binning: StateKeyBinning
    log_main: np.ndarray

    @classmethod
    def build(cls, sys: WiretapSystem, spec: CodebookSpec,
              codebook: Optional[Codebook] = None) -> "Scheme":
        ns, nx = sys.law.shape[:2]
        if spec.aux.n_states != ns or spec.aux.p_x_given_us.shape[2] != nx:
            raise ValidationError("aux policy does not match the system")
        rng = np.random.default_rng(spec.seed)
        if codebook is None:
            codebook = build_codebook(spec, rng)
        elif codebook.spec is not spec:
            raise ValidationError("codebook was built for a different spec")
        binning = build_state_binning(spec.n, ns, spec.state_keys, rng)
        w, _ = effective_channels(sys, spec.aux)
        with np.errstate(divide="ignore"):
            log_w = np.log(w)
        log_w.setflags(write=False)
        return cls(sys, spec, codebook, binning, log_w)


def bin_address(spec: CodebookSpec, m0: int, m1: int, m2: int, k_s: int, k_f: int) -> tuple:
    n0, n1, n2 = spec.bins
    s0, s1, s2 = spec.message_sizes
    for name, v, hi in (("m0", m0, s0), ("m1", m1, s1), ("m2", m2, s2),
                        ("k_s", k_s, spec.state_keys), ("k_f", k_f, n2)):
        if not 0 <= v < hi:
            raise ValidationError(f"{name}={v} outside [0, {hi})")
    if spec.mode == "key-split":
        return k_s // n1, (m1 + k_s % n1) % n1, (m2 + k_f) % n2
    return m0, (m1 + k_s) % n1, (m2 + k_f) % n2


class BlockEncoder:
    """Causal encoder: ``step(s_i)`` returns x_i using only s_1..s_i."""

    def __init__(self, codebook: Codebook, m0: int, m1: int, m2: int, k_s: int, k_f: int,
                 rng: np.random.Generator):
        spec = codebook.spec
        self.address = bin_address(spec, m0, m1, m2, k_s, k_f)
        self.codeword = int(codebook.members[self.address][rng.integers(spec.per_bin)])
        self._word = codebook.words[self.codeword]
        self._aux = spec.aux
        self._cdf = np.cumsum(spec.aux.p_x_given_us, axis=2)
        self._rng = rng
        self._i = 0

    def step(self, s: int) -> int:
        if self._i >= self._word.size:
            raise ValidationError("block already complete")
        u = self._aux.u_map[self._word[self._i], s]
        cdf = self._cdf[u, s]
        x = min(int(np.searchsorted(cdf, self._rng.random(), side="right")), cdf.size - 1)
        self._i += 1
        return x


def encode_block(codebook: Codebook, m0: int, m1: int, m2: int, k_s_prev: int, k_f_prev: int,
                 state_stream: Iterable[int], rng: np.random.Generator):
    """Encode one block from a state stream. Returns (x^n, codeword index)."""
    enc = BlockEncoder(codebook, m0, m1, m2, k_s_prev, k_f_prev, rng)
    x = []
    for s in state_stream:
        x.append(enc.step(int(s)))
        if len(x) == codebook.spec.n:
            break
    if len(x) != codebook.spec.n:
        raise ValidationError("state stream ended before the block was complete")
    return np.array(x, dtype=np.int64), enc.codeword


@dataclass(frozen=True)
class Decoded:
    m0: int
    m1: int
    m2: int
    codeword: int


def _unkey(spec: CodebookSpec, triple, k_s: int, k_f: int) -> tuple:
    j0, j1, j2 = (int(v) for v in triple)
    _, n1, n2 = spec.bins
    if spec.mode == "key-split":
        return 0, (j1 - k_s % n1) % n1, (j2 - k_f) % n2
    return j0, (j1 - k_s) % n1, (j2 - k_f) % n2


def ml_codeword(scheme: Scheme, y_seq, s_seq) -> int:
    """argmax_l prod_i p(y_i | u'_i(l), s_i); ties go to the lowest index."""
    words = scheme.codebook.words
    ll = scheme.log_main[words, np.asarray(s_seq)[None, :], np.asarray(y_seq)[None, :]].sum(axis=1)
    return int(np.argmax(ll))


def typical_codewords(scheme: Scheme, y_seq, s_seq, epsilon: float) -> np.ndarray:
    """Indices of words jointly epsilon-typical with (y^n, s^n) under p(u')p(s)p(y|u',s)."""
    aux = scheme.spec.aux
    w, _ = effective_channels(scheme.sys, aux)
    p = aux.p_u.probs[:, None, None] * scheme.sys.state_law.probs[None, :, None] * w
    nup, ns, ny = p.shape
    n = scheme.spec.n
    codes = (scheme.codebook.words * ns + np.asarray(s_seq)[None]) * ny + np.asarray(y_seq)[None]
    counts = np.zeros((codes.shape[0], p.size))
    np.add.at(counts, (np.arange(codes.shape[0])[:, None], codes), 1.0)
    emp = counts / n
    flat = p.ravel()
    ok = np.all(np.abs(emp - flat[None]) <= epsilon * flat[None] + 1e-15, axis=1)
    return np.flatnonzero(ok)


def decode_block(scheme: Scheme, y_seq, s_seq, k_s_prev: int, k_f_prev: int,
                 mode: str = "ml", epsilon: Optional[float] = None) -> Decoded:
    """Recover (m0, m1, m2) from y^n, s^n and the two keys."""
    if len(y_seq) != scheme.spec.n or len(s_seq) != scheme.spec.n:
        raise ValidationError("sequences must have the block length")
    if mode == "ml":
        l = ml_codeword(scheme, y_seq, s_seq)
    elif mode == "typicality":
        eps = scheme.spec.epsilon if epsilon is None else epsilon
        hits = typical_codewords(scheme, y_seq, s_seq, eps)
        if hits.size != 1:
            raise DecodingFailure(f"{hits.size} jointly typical codewords")
        l = int(hits[0])
    else:
        raise ValidationError("mode must be 'ml' or 'typicality'")
    m = _unkey(scheme.spec, scheme.codebook.bin_index[l], k_s_prev, k_f_prev)
    return Decoded(*m, codeword=l)


@dataclass
class BlockRecord:
    block: int
    protected: bool
    messages: tuple
    keys: tuple
    codeword: int
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    z: np.ndarray
    decoded: Optional[tuple]

    @property
    def error(self) -> bool:
        return self.decoded is None or tuple(self.decoded) != tuple(self.messages)

    def to_json(self) -> dict:
        return {
            "block": self.block,
            "protected": self.protected,
            "messages": list(self.messages),
            "keys": list(self.keys),
            "codeword": self.codeword,
            "x": self.x.tolist(),
            "s": self.s.tolist(),
            "y": self.y.tolist(),
            "z": self.z.tolist(),
            "decoded": None if self.decoded is None else list(self.decoded),
            "error": self.error,
        }


@dataclass
class SessionTranscript:
    spec: CodebookSpec
    blocks: list
    ledger: FeedbackLedger

    @property
    def protected_blocks(self) -> list:
        return [b for b in self.blocks if b.protected]

    @property
    def any_protected_error(self) -> bool:
        return any(b.error for b in self.protected_blocks)

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "blocks": [b.to_json() for b in self.blocks],
            "ledger": {
                "bits": self.ledger.bits,
                "budget_bits": self.ledger.budget_bits,
                "normalized": self.ledger.normalized,
                "rate": self.ledger.rate,
                "satisfied": self.ledger.satisfied(),
            },
        }


def run_session(sys: WiretapSystem, spec: CodebookSpec, rng: np.random.Generator,
                scheme: Optional[Scheme] = None, decode_mode: str = "ml") -> SessionTranscript:
    """Transmit ``spec.num_blocks`` blocks; keys from block j protect block j+1."""
    scheme = Scheme.build(sys, spec) if scheme is None else scheme
    n = spec.n
    sizes = spec.message_sizes
    ledger = FeedbackLedger(n, spec.num_blocks, spec.feedback_rate)
    k_s = k_f = 0
    blocks = []
    for j in range(spec.num_blocks):
        protected = j > 0
        s = sample_states(sys, n, rng)
        m = tuple(int(rng.integers(k)) for k in sizes)
        x, l = encode_block(scheme.codebook, *m, k_s, k_f, s, rng)
        y, z = sample_block(sys, x, s, rng)
        try:
            d = decode_block(scheme, y, s, k_s, k_f, mode=decode_mode)
            decoded = (d.m0, d.m1, d.m2)
        except DecodingFailure:
            decoded = None
        blocks.append(BlockRecord(j + 1, protected, m, (k_s, k_f), l, x, s, y, z, decoded))
        if j < spec.num_blocks - 1:
            k_s = state_key(scheme.binning, s)
            k_f = draw_feedback_key(rng, n, spec.r2, ledger)
    return SessionTranscript(spec, blocks, ledger)
