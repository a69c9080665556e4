"""Error probability, equivocation and leakage of the block code.

The exact oracle enumerates every outcome. Eve is given the codebook and the
state binning and observes two consecutive blocks (Z_{j-1}^n, Z_j^n): the
previous block carries the information about the state key that protects
block j, and the feedback key is never seen. Messages are uniform.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channels import WiretapSystem
from .codec import Scheme, SessionTranscript, bin_address, effective_channels
from .errors import TooLargeForExact, ValidationError
from .prob import entropy_of_array

EXACT_CAP = 2 ** 26
SEQUENCE_STAT_CAP = 2 ** 16


@dataclass
class SecrecyReport:
    p_e: Optional[float]
    equivocation_ratio: float
    leakage_per_use: float
    method: str
    sample_count: Optional[int] = None
    leakage_bits: float = 0.0
    summand_keys: Optional[float] = None
    summand_feedback: Optional[float] = None
    message_entropy: float = 0.0
    n: int = 1
    blocks: int = 1
    notes: list = field(default_factory=list)
    flagged: bool = False

    def to_json(self) -> dict:
        return asdict(self)


def _sequence_likelihoods(table: np.ndarray, words: np.ndarray) -> np.ndarray:
    """prod_i table[word_i, s_i, out_i] as [L, |S|^n, |O|^n].

    A two-axis ``table[word, out]`` gives [L, |O|^n]. Sequences are indexed
    big-endian, matching the state binning.
    """
    n = words.shape[1]
    if table.ndim == 2:
        acc = np.ones((words.shape[0], 1))
        for i in range(n):
            acc = (acc[:, :, None] * table[words[:, i]][:, None, :]).reshape(words.shape[0], -1)
        return acc
    ns, no = table.shape[1], table.shape[2]
    acc = np.ones((words.shape[0], 1, 1))
    for i in range(n):
        step = table[words[:, i]]  # [L, S, O]
        acc = (acc[:, :, None, :, None] * step[:, None, :, None, :]).reshape(
            words.shape[0], acc.shape[1] * ns, acc.shape[2] * no
        )
    return acc


def _state_seq_probs(sys: WiretapSystem, n: int) -> np.ndarray:
    p = np.ones(1)
    for _ in range(n):
        p = np.outer(p, sys.state_law.probs).ravel()
    return p


def _rows_entropy(p: np.ndarray) -> np.ndarray:
    mask = p > 1e-300
    logs = np.zeros_like(p)
    logs[mask] = np.log2(p[mask])
    return np.maximum(-(p * logs).sum(axis=-1), 0.0)


def exact_leakage(scheme: Scheme, sys: Optional[WiretapSystem] = None,
                  with_error: bool = True) -> SecrecyReport:
    """Exact I(M; Z_{j-1}^n, Z_j^n) for a protected block, with its chain-rule split.

    The two summands are I(M0, M1; Z) (Wyner layer plus state key) and
    I(M2; Z | M0, M1) (feedback key). ``p_e`` is the exact ML block error.
    """
    sys = scheme.sys if sys is None else sys
    spec, cb = scheme.spec, scheme.codebook
    n = spec.n
    ns, nz = sys.law.shape[0], sys.law.shape[3]
    n0, n1, n2 = spec.bins
    sizes = spec.message_sizes
    m_count = spec.message_count
    product = m_count * spec.state_keys * n2 * spec.per_bin * ns ** n * nz ** n
    pair_space = m_count * nz ** (2 * n)
    if product > EXACT_CAP or pair_space > EXACT_CAP:
        raise TooLargeForExact(f"outcome space {max(product, pair_space)} exceeds 2^26")

    _, v = effective_channels(sys, spec.aux)
    words = cb.words
    p_s = _state_seq_probs(sys, n)
    # previous block: codeword uniform over the codebook
    lik_prev = _sequence_likelihoods(v, words)  # [L, S^n, Z^n]
    z_given_s = lik_prev.mean(axis=0)  # [S^n, Z^n]
    keys = scheme.binning.table
    a = np.zeros((spec.state_keys, z_given_s.shape[1]))
    np.add.at(a, keys, p_s[:, None] * z_given_s)

    # current block: state marginalized, averaged within each bin triple
    q = np.einsum("s,usz->uz", sys.state_law.probs, v)
    lik_cur = _sequence_likelihoods(q, words)  # [L, Z^n]
    g = lik_cur[cb.members].mean(axis=3)  # [n0, n1, n2, Z^n]

    dist = np.zeros(sizes + (a.shape[1], g.shape[-1]))
    for m in np.ndindex(*sizes):
        h = np.zeros((spec.state_keys, g.shape[-1]))
        for ks in range(spec.state_keys):
            for kf in range(n2):
                h[ks] += g[bin_address(spec, *m, ks, kf)]
        dist[m] = a.T @ (h / n2)
    flat = dist.reshape(m_count, -1)
    h_z = entropy_of_array(flat.mean(axis=0))
    h_z_m = float(_rows_entropy(flat).mean())
    total = max(0.0, h_z - h_z_m)
    outer = dist.reshape(sizes[0] * sizes[1], sizes[2], -1)
    h_z_m01 = float(_rows_entropy(outer.mean(axis=1)).mean())
    summand_keys = h_z - h_z_m01
    summand_feedback = h_z_m01 - h_z_m
    h_m = math.log2(m_count)
    d_hat = 1.0 if m_count == 1 else min(1.0, max(0.0, 1.0 - total / h_m))
    p_e = exact_block_error(scheme, sys) if with_error else None
    return SecrecyReport(
        p_e=p_e,
        equivocation_ratio=d_hat,
        leakage_per_use=total / n,
        method="exact",
        leakage_bits=total,
        summand_keys=summand_keys,
        summand_feedback=summand_feedback,
        message_entropy=h_m,
        n=n,
        blocks=1,
        notes=["two-block window: Eve observes the previous and the current block"],
    )


def _message_triples(scheme: Scheme, triples: np.ndarray) -> np.ndarray:
    if scheme.spec.mode == "key-split":
        return triples[..., 1:]
    return triples


def exact_block_error(scheme: Scheme, sys: Optional[WiretapSystem] = None,
                      mode: str = "ml", epsilon: Optional[float] = None) -> float:
    """Exact message error of one block, enumerating codewords, states and outputs."""
    sys = scheme.sys if sys is None else sys
    spec, cb = scheme.spec, scheme.codebook
    n = spec.n
    ns, ny = sys.law.shape[0], sys.law.shape[2]
    if cb.size * ns ** n * ny ** n * n > EXACT_CAP:
        raise TooLargeForExact("error enumeration exceeds 2^26")
    w, _ = effective_channels(sys, spec.aux)
    lik = _sequence_likelihoods(w, cb.words)  # [L, S^n, Y^n]
    p_s = _state_seq_probs(sys, n)
    labels = _message_triples(scheme, cb.bin_index)
    if mode == "ml":
        decided = np.argmax(lik, axis=0)  # first maximum, lowest index
        wrong = np.any(labels[decided][None] != labels[:, None, None], axis=-1)
    elif mode == "typicality":
        wrong = _typicality_wrong(scheme, sys, lik, labels, spec.epsilon if epsilon is None else epsilon)
    else:
        raise ValidationError("mode must be 'ml' or 'typicality'")
    return float((lik * wrong * p_s[None, :, None]).sum() / cb.size)


def _typicality_wrong(scheme, sys, lik, labels, epsilon):
    spec, cb = scheme.spec, scheme.codebook
    n = spec.n
    ns, ny = sys.law.shape[0], sys.law.shape[2]
    w, _ = effective_channels(sys, spec.aux)
    target = (spec.aux.p_u.probs[:, None, None] * sys.state_law.probs[None, :, None] * w).ravel()
    s_all = np.array(list(np.ndindex(*(ns,) * n)), dtype=np.int64).reshape(-1, n)
    y_all = np.array(list(np.ndindex(*(ny,) * n)), dtype=np.int64).reshape(-1, n)
    onehot = np.eye(target.size)
    counts = np.zeros((cb.size, s_all.shape[0], y_all.shape[0], target.size))
    for i in range(n):
        code = (cb.words[:, i][:, None, None] * ns + s_all[:, i][None, :, None]) * ny \
            + y_all[:, i][None, None, :]
        counts += onehot[code]
    emp = counts / n
    typical = np.all(np.abs(emp - target) <= epsilon * target + 1e-15, axis=-1)  # [L, S, Y]
    unique = typical.sum(axis=0) == 1
    chosen = np.argmax(typical, axis=0)
    same = np.all(labels[chosen][None] == labels[:, None, None], axis=-1)
    return ~(unique[None] & same)


@dataclass(frozen=True)
class OtpVerdict:
    passed: bool
    max_leakage: float
    checked: int
    control_leakage: float


def otp_leakage(p_m, p_k) -> float:
    """Exact I(M; M + K mod K) for independent M ~ p_m, K ~ p_k."""
    p_m = np.asarray(p_m, dtype=float)
    p_k = np.asarray(p_k, dtype=float)
    k = p_m.size
    if p_k.size != k:
        raise ValidationError("message and key alphabets must match")
    joint = np.zeros((k, k))
    for m in range(k):
        joint[m] = p_m[m] * np.roll(p_k, m)
    return max(0.0, entropy_of_array(joint.sum(0)) + entropy_of_array(p_m) - entropy_of_array(joint))


def otp_unit_check(max_size: int = 64, seed: int = 0, tol: float = 1e-12) -> OtpVerdict:
    """Uniform keys leak nothing for every K up to ``max_size``; a biased key does."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(1, max_size + 1):
        for p_m in (np.full(k, 1.0 / k), rng.dirichlet(np.full(k, 0.3))):
            worst = max(worst, otp_leakage(p_m, np.full(k, 1.0 / k)))
    biased = np.full(8, 0.1 / 7)
    biased[0] = 0.9
    control = otp_leakage(np.full(8, 1 / 8), biased)
    return OtpVerdict(worst <= tol and control > 1e-3, worst, max_size, control)


def _plugin_entropy(counts) -> tuple[float, int]:
    c = np.asarray(list(counts), dtype=float)
    return entropy_of_array(c / c.sum()), int((c > 0).sum())


def estimate_secrecy(transcripts: Sequence[SessionTranscript],
                     config: Optional[dict] = None) -> SecrecyReport:
    """Plug-in estimate from session transcripts.

    Pairs (M_j, T(Z_{j-1}, Z_j)) are pooled over protected blocks; T is the
    pair of sequences when that space has at most ``sequence_cap`` points,
    otherwise the pair of types.
    """
    config = dict(config or {})
    if not transcripts:
        raise ValidationError("need at least one transcript")
    spec = transcripts[0].spec
    ref = spec.to_json()
    if any(t.spec is not spec and t.spec.to_json() != ref for t in transcripts):
        raise ValidationError("transcripts come from different specs")
    n = spec.n
    nz = int(config.get("z_alphabet", 1 + max(int(b.z.max()) for t in transcripts for b in t.blocks)))
    cap = int(config.get("sequence_cap", SEQUENCE_STAT_CAP))
    use_sequence = nz ** (2 * n) <= cap

    def stat(z_prev, z_cur):
        if use_sequence:
            return tuple(z_prev.tolist()) + tuple(z_cur.tolist())
        return tuple(np.bincount(z_prev, minlength=nz)) + tuple(np.bincount(z_cur, minlength=nz))

    joint, m_counts, t_counts = Counter(), Counter(), Counter()
    errors = 0
    for tr in transcripts:
        errors += tr.any_protected_error
        for prev, cur in zip(tr.blocks, tr.blocks[1:]):
            t = stat(prev.z, cur.z)
            m = tuple(cur.messages)
            joint[m, t] += 1
            m_counts[m] += 1
            t_counts[t] += 1
    samples = sum(m_counts.values())
    if samples == 0:
        return SecrecyReport(
            p_e=errors / len(transcripts), equivocation_ratio=1.0, leakage_per_use=0.0,
            method="plug-in-MC", sample_count=0, n=n, notes=["no protected blocks"],
        )
    h_m, k_m = _plugin_entropy(m_counts.values())
    h_t, k_t = _plugin_entropy(t_counts.values())
    h_mt, k_mt = _plugin_entropy(joint.values())
    leak = max(0.0, h_m + h_t - h_mt)
    d_hat = 1.0 if h_m == 0 else min(1.0, max(0.0, (h_mt - h_t) / h_m))
    if use_sequence:
        space = spec.message_count * nz ** (2 * n)
    else:
        space = spec.message_count * math.comb(n + nz - 1, nz - 1) ** 2
    flagged = samples < 10 * space
    mm = (k_m + k_t - k_mt - 1) / (2 * samples * math.log(2))
    notes = [
        "estimate",
        f"statistic: {'sequence pair' if use_sequence else 'type pair'}",
        f"Miller-Madow corrected leakage {max(0.0, leak + mm):.6g} bits (not applied)",
    ]
    if flagged:
        notes.append(f"sparse: {samples} samples for an outcome space of {space}")
    return SecrecyReport(
        p_e=errors / len(transcripts),
        equivocation_ratio=d_hat,
        leakage_per_use=leak / n,
        method="plug-in-MC",
        sample_count=samples,
        leakage_bits=leak,
        message_entropy=h_m,
        n=n,
        blocks=1,
        notes=notes,
        flagged=flagged,
    )


@dataclass(frozen=True)
class Verdict:
    passed: bool
    rate: float
    epsilon: float
    reasons: tuple = ()

    def __bool__(self) -> bool:
        return self.passed


def achievability_verdict(report: SecrecyReport, rate: float, epsilon: float) -> Verdict:
    """Pass iff d_hat >= 1 - epsilon and P_e <= epsilon."""
    if report.p_e is None:
        raise ValidationError("report has no error probability")
    reasons = []
    if report.equivocation_ratio < 1.0 - epsilon:
        reasons.append(f"equivocation {report.equivocation_ratio:.4g} < {1 - epsilon:.4g}")
    if report.p_e > epsilon:
        reasons.append(f"error probability {report.p_e:.4g} > {epsilon:.4g}")
    return Verdict(not reasons, rate, epsilon, tuple(reasons))
