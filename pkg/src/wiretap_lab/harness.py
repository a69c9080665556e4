"""Experiment configuration, sweeps, consistency checks and CSV output."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .capacity import (
    AuxPolicy,
    bsc_nostate_capacity,
    bsc_state_capacity,
    identity_check_decoder_only_csi,
    optimize,
    special_case,
)
from .channels import (
    BscScenario,
    WiretapSystem,
    check_degraded,
    make_state_bsc,
    system_from_json,
)
from .codec import Scheme, design_spec, run_session
from .errors import InfeasibleSpec, NotDegraded, TooLargeForExact, ValidationError
from .secrecy import achievability_verdict, estimate_secrecy, exact_leakage, otp_unit_check

THREADS_ENV = "WIRETAP_LAB_THREADS"
TIGHTNESS_TOL = 1e-3
CONSISTENCY_TOL = 1e-9
RATE_SLACK = 1e-6


def _grid(start: float, stop: float, step: float) -> list:
    k = int(round((stop - start) / step))
    return [round(start + i * step, 12) for i in range(k + 1)]


DEFAULT_RF_GRID = _grid(0.0, 1.0, 0.02)
DEFAULT_Q_GRID = _grid(0.0, 0.5, 0.01)
DEFAULT_CODEC = {
    "n": 12,
    "num_blocks": 5,
    "fraction": 0.5,
    "epsilon": 0.05,
    "mode": "auto",
    "key_split": 0.5,
    "decode": "ml",
}


def max_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return min(8, os.cpu_count() or 1)
    try:
        k = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if k < 1:
        raise ValidationError(f"{THREADS_ENV} must be at least 1")
    return k


def _ordered_map(fn, items) -> list:
    items = list(items)
    workers = min(max_threads(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class ExperimentConfig:
    scenario: dict = field(default_factory=lambda: BscScenario().to_json())
    axis: str = "rf"
    rf_grid: list = field(default_factory=lambda: list(DEFAULT_RF_GRID))
    q_grid: list = field(default_factory=lambda: list(DEFAULT_Q_GRID))
    rf: float = 0.0
    objectives: list = field(default_factory=lambda: ["lower", "upper", "corollary"])
    resolution: float = 1e-3
    codec: dict = field(default_factory=lambda: dict(DEFAULT_CODEC))
    sessions: int = 200
    seed: int = 0
    verdict_epsilon: float = 0.1
    output: Optional[str] = None

    def __post_init__(self):
        self.codec = {**DEFAULT_CODEC, **(self.codec or {})}
        self.validate()

    def validate(self) -> None:
        if self.axis not in ("rf", "q"):
            raise ValidationError("axis must be 'rf' or 'q'")
        for name in ("rf_grid", "q_grid"):
            g = [float(v) for v in getattr(self, name)]
            if not g:
                raise ValidationError(f"{name} must be non-empty")
            if any(b <= a for a, b in zip(g, g[1:])):
                raise ValidationError(f"{name} must be strictly increasing")
            if any(not math.isfinite(v) or v < 0 for v in g):
                raise ValidationError(f"{name} entries must be finite and non-negative")
            setattr(self, name, g)
        if any(v > 1 for v in self.q_grid):
            raise ValidationError("q_grid entries must lie in [0, 1]")
        if self.rf < 0:
            raise ValidationError("rf must be non-negative")
        bad = set(self.objectives) - {"lower", "upper", "corollary"}
        if bad:
            raise ValidationError(f"unknown objectives {sorted(bad)}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ValidationError("seed must be an explicit non-negative integer")
        if self.sessions < 1:
            raise ValidationError("sessions must be positive")
        if not 0 < self.resolution < 1:
            raise ValidationError("resolution must lie in (0, 1)")
        unknown = set(self.codec) - set(DEFAULT_CODEC)
        if unknown:
            raise ValidationError(f"unknown codec keys {sorted(unknown)}")
        system_from_json(self.scenario)

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from None
        return cls.from_json(doc)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_json(self) -> dict:
        return asdict(self)

    def system(self, q: Optional[float] = None) -> tuple[WiretapSystem, Optional[BscScenario]]:
        doc = dict(self.scenario)
        if q is not None:
            if "main" in doc:
                raise ValidationError("a q override needs a BSC-parameter scenario")
            doc["q"] = q
        return system_from_json(doc)


@dataclass
class ResultRow:
    axis: str
    value: float
    c_ns: Optional[float] = None
    c_s: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    corollary: Optional[float] = None
    attempted_rate: Optional[float] = None
    achieved_rate: Optional[float] = None
    p_e: Optional[float] = None
    d_hat: Optional[float] = None
    leakage: Optional[float] = None
    verdict: Optional[str] = None


ROW_FIELDS = [f.name for f in fields(ResultRow)]
_TEXT_FIELDS = {"axis", "verdict"}


def _bound_columns(sys: WiretapSystem, scn: Optional[BscScenario], R_f: float,
                   config: ExperimentConfig) -> dict:
    out = {}
    if scn is not None:
        out["c_ns"] = bsc_nostate_capacity(scn, R_f)
        out["c_s"] = bsc_state_capacity(scn, R_f)
    for name in config.objectives:
        try:
            out[name] = optimize(sys, R_f, name, config.resolution, seed=config.seed).value
        except NotDegraded:
            out[name] = None
    return out


def sweep_rf(config: ExperimentConfig) -> list:
    sys, scn = config.system()

    def point(rf):
        return ResultRow("rf", rf, **_bound_columns(sys, scn, rf, config))

    return _ordered_map(point, config.rf_grid)


def sweep_q(config: ExperimentConfig) -> list:
    def point(q):
        sys, scn = config.system(q)
        return ResultRow("q", q, **_bound_columns(sys, scn, config.rf, config))

    return _ordered_map(point, config.q_grid)


def sweep(config: ExperimentConfig) -> list:
    return sweep_rf(config) if config.axis == "rf" else sweep_q(config)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, path, config: Optional[ExperimentConfig] = None) -> Path:
    """CSV with a header row; floats in repr form so they parse back exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in rows:
            w.writerow([_fmt(getattr(r, k)) for k in ROW_FIELDS])
    if config is not None:
        meta = {"config": config.to_json(), "columns": ROW_FIELDS,
                "threads_env": THREADS_ENV}
        path.with_name(path.name + ".meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n"
        )
    return path


def read_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            kw = {}
            for k in ROW_FIELDS:
                raw = rec[k]
                if raw == "":
                    kw[k] = None
                elif k in _TEXT_FIELDS:
                    kw[k] = raw
                else:
                    kw[k] = float(raw)
            rows.append(ResultRow(**kw))
    return rows


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    skipped: bool = False


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed or c.skipped for c in self.checks)

    def add(self, name, passed, detail="", skipped=False) -> None:
        self.checks.append(CheckResult(name, bool(passed), detail, skipped))

    def to_json(self) -> dict:
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks]}


def random_degraded_system(rng: np.random.Generator, max_size: int = 3) -> WiretapSystem:
    """|S| in 1..max_size, |X|, |Y|, |Z| in 2..max_size, Dirichlet(1) rows."""
    ns = int(rng.integers(1, max_size + 1))
    nx, ny, nz = (int(v) for v in rng.integers(2, max_size + 1, size=3))
    return WiretapSystem.degraded(
        rng.dirichlet(np.ones(ns)),
        rng.dirichlet(np.ones(ny), size=(ns, nx)),
        rng.dirichlet(np.ones(nz), size=ny),
    )


def verify_consistency(config: Optional[ExperimentConfig] = None, trials: int = 20,
                       seed: int = 0,
                       closed_form: Callable[[BscScenario, float], float] = bsc_state_capacity
                       ) -> VerificationReport:
    """Run every cross-check; the report lists failures instead of raising."""
    config = ExperimentConfig() if config is None else config
    rng = np.random.default_rng(seed)
    rep = VerificationReport()
    res = config.resolution
    sys, scn = config.system()

    if scn is None:
        rep.add("closed-form-vs-optimizer", False, "scenario is not a BSC family", skipped=True)
    else:
        worst = 0.0
        for q in (0.0, 0.01, 0.1, 0.3, 0.5):
            s_q = scn.replace(q=q)
            for rf in (0.0, 0.2, 0.6):
                got = optimize(make_state_bsc(s_q), rf, "corollary", res).value
                worst = max(worst, abs(got - closed_form(s_q, rf)))
        rep.add("closed-form-vs-optimizer", worst <= 2 * res + 1e-6, f"max deviation {worst:.3g}")

    verdict = check_degraded(sys)
    if not verdict:
        rep.add("tightness-config-system", False,
                f"system is not degraded (residual {verdict.residual:.3g}); tightness does not apply",
                skipped=True)
    else:
        gap = abs(optimize(sys, config.rf, "lower", res).value
                  - optimize(sys, config.rf, "upper", res).value)
        rep.add("tightness-config-system", gap <= TIGHTNESS_TOL, f"gap {gap:.3g}")

    worst = 0.0
    for _ in range(trials):
        s = random_degraded_system(rng)
        rf = float(rng.uniform(0, 0.5))
        lo = optimize(s, rf, "lower", res, seed=seed).value
        hi = optimize(s, rf, "upper", res, seed=seed).value
        worst = max(worst, abs(hi - lo))
    rep.add("tightness-fuzz", worst <= TIGHTNESS_TOL, f"{trials} systems, max gap {worst:.3g}")

    # reductions that must agree exactly: the same objective reached by different routes
    single = make_state_bsc(scn if scn is not None else BscScenario(), with_state=False)
    dev = 0.0
    for rf in (0.0, 0.15, 0.5):
        fb = special_case(single, rf, "feedback-only", res)
        lo = optimize(single, rf, "lower", res).value
        dev = max(dev, abs(fb - lo))
    nf = special_case(sys, 0.0, "no-feedback", res)
    dev = max(dev, abs(nf - optimize(sys, 0.0, "lower", res).value))
    dev = max(dev, abs(special_case(single, 0.0, "feedback-only", res)
                       - special_case(single, 0.0, "no-feedback", res)))
    rep.add("special-case-consistency", dev <= CONSISTENCY_TOL, f"max deviation {dev:.3g}")

    ident = identity_check_decoder_only_csi(max(trials, 1), rng)
    rep.add("decoder-only-csi-identity", ident.passed,
            f"{ident.trials} systems, max deviation {ident.max_deviation:.3g}")

    otp = otp_unit_check()
    rep.add("one-time-pad", otp.passed,
            f"max leakage {otp.max_leakage:.3g}, biased-key control {otp.control_leakage:.3g}")

    worst = 0.0
    for _ in range(max(1, trials // 4)):
        spec, s = _tiny_exact_spec(rng)
        r = exact_leakage(Scheme.build(s, spec), with_error=False)
        worst = max(worst, abs(r.summand_feedback))
    rep.add("feedback-summand-zero", worst <= 1e-10, f"max |summand| {worst:.3g}")
    return rep


def _tiny_exact_spec(rng: np.random.Generator):
    from .codec import CodebookSpec

    while True:
        s = random_degraded_system(rng, max_size=2)
        ns, nx = s.law.shape[:2]
        n = int(rng.integers(1, 4))
        r0, r1 = (float(v) for v in rng.choice([0.0, 1.0 / n, 2.0 / n], size=2))
        r2 = float(rng.choice([1.0 / n, 2.0 / n]))
        aux = AuxPolicy.identity(ns, rng.dirichlet(np.ones(nx)))
        spec = CodebookSpec(n=n, num_blocks=3, r0=r0, r1=r1, r2=r2,
                            codebook_rate=r0 + r1 + r2 + float(rng.choice([0.0, 1.0 / n])),
                            aux=aux, seed=int(rng.integers(2 ** 31)))
        try:
            spec.validate()
        except InfeasibleSpec:
            continue
        return spec, s


def simulate(config: ExperimentConfig, out_dir=None, sessions: Optional[int] = None,
             seed: Optional[int] = None) -> list:
    """Run sessions at each sweep point, attach secrecy reports and verdicts."""
    sessions = config.sessions if sessions is None else sessions
    seed = config.seed if seed is None else seed
    c = config.codec
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    if config.axis == "rf":
        points = [(rf, None) for rf in config.rf_grid]
    else:
        points = [(config.rf, q) for q in config.q_grid]
    seeds = np.random.SeedSequence(seed).spawn(len(points))

    def point(args):
        (rf, q), ss = args
        sys, scn = config.system(q)
        row = ResultRow(config.axis, rf if q is None else q, **_bound_columns(sys, scn, rf, config))
        lower = optimize(sys, rf, "lower", config.resolution, seed=config.seed)
        aux = AuxPolicy.identity(sys.law.shape[0], lower.policy.table[0]) \
            if lower.policy.state_independent else _aux_from_policy(lower.policy)
        spec = design_spec(sys, aux, rf, n=c["n"], num_blocks=c["num_blocks"],
                           fraction=c["fraction"], epsilon=c["epsilon"],
                           seed=int(ss.generate_state(1)[0]),
                           mode=c["mode"], key_split=c["key_split"])
        scheme = Scheme.build(sys, spec)
        rng = np.random.default_rng(ss)
        transcripts = [run_session(sys, spec, rng, scheme=scheme, decode_mode=c["decode"])
                       for _ in range(sessions)]
        try:
            report = exact_leakage(scheme, with_error=False)
            est = estimate_secrecy(transcripts)
            report.p_e = est.p_e
            report.sample_count = est.sample_count
            report.notes.append("p_e estimated from sessions")
        except TooLargeForExact:
            report = estimate_secrecy(transcripts)
        rate = spec.message_rate * (spec.num_blocks - 1) / spec.num_blocks
        verdict = achievability_verdict(report, rate, config.verdict_epsilon)
        row.attempted_rate = rate
        row.achieved_rate = rate if verdict.passed else 0.0
        row.p_e = report.p_e
        row.d_hat = report.equivocation_ratio
        row.leakage = report.leakage_per_use
        row.verdict = "pass" if verdict.passed else "fail"
        if row.upper is not None and row.achieved_rate > row.upper + RATE_SLACK:
            row.verdict = "fail"
            row.achieved_rate = 0.0
        if out_dir is not None:
            tag = f"{config.axis}={row.value!r}"
            with open(out_dir / f"sessions_{tag}.jsonl", "w") as fh:
                for t in transcripts:
                    fh.write(json.dumps(t.to_json(), sort_keys=True) + "\n")
            (out_dir / f"report_{tag}.json").write_text(
                json.dumps({"report": report.to_json(), "verdict": asdict(verdict)},
                           indent=2, sort_keys=True) + "\n"
            )
        return row

    rows = _ordered_map(point, list(zip(points, seeds)))
    if out_dir is not None:
        write_csv(rows, out_dir / "simulate.csv", config)
    return rows


def _aux_from_policy(policy) -> AuxPolicy:
    """U' = X with a state-dependent input law, realized as Shannon strategies."""
    table = policy.table
    ns, nx = table.shape
    # U' indexes maps s -> x; weight of a map is prod_s p(x_s | s)
    weights = np.ones([nx] * ns)
    for s in range(ns):
        shape = [1] * ns
        shape[s] = nx
        weights = weights * table[s].reshape(shape)
    return AuxPolicy.shannon_strategies(ns, nx, weights.ravel())
