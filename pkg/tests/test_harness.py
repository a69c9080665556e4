import json

import pytest

from conftest import C_NS_SAT_RF, C_S_Q01
from wiretap_lab import cli
from wiretap_lab.capacity import bsc_state_capacity
from wiretap_lab.errors import ValidationError
from wiretap_lab.harness import (
    ROW_FIELDS,
    THREADS_ENV,
    ExperimentConfig,
    ResultRow,
    max_threads,
    read_csv,
    simulate,
    sweep,
    sweep_q,
    sweep_rf,
    verify_consistency,
    write_csv,
)
from wiretap_lab.prob import binary_entropy

TINY_CODEC = {"n": 4, "num_blocks": 3, "fraction": 1.0}

EVE_BETTER = {
    "state_law": [1.0],
    "main": [[[0.8, 0.2], [0.2, 0.8]]],
    "eve": [[[0.95, 0.05], [0.05, 0.95]]],
}


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.rf_grid[0] == 0.0 and cfg.rf_grid[-1] == 1.0 and len(cfg.rf_grid) == 51
        assert len(cfg.q_grid) == 51 and cfg.codec["n"] == 12

    @pytest.mark.parametrize("bad", [
        {"rf_grid": []},
        {"rf_grid": [0.2, 0.1]},
        {"q_grid": [0.0, 1.5]},
        {"axis": "p"},
        {"seed": -1},
        {"seed": None},
        {"objectives": ["lower", "best"]},
        {"codec": {"n": 4, "blocksize": 3}},
        {"scenario": {"p_y": 2.0}},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ValidationError):
            ExperimentConfig(**bad)

    def test_unknown_key(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.from_json({"grid": [0.1]})

    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig(rf_grid=[0.0, 0.3], seed=5, codec=TINY_CODEC)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_json()))
        assert ExperimentConfig.load(path).to_json() == cfg.to_json()

    def test_bad_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ValidationError):
            ExperimentConfig.load(path)

    def test_q_override_needs_bsc(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(scenario=EVE_BETTER).system(0.2)


class TestSweeps:
    def test_rf_state_curve_flat(self):
        rows = sweep_rf(ExperimentConfig(rf_grid=[0.0, 0.2, 0.6, 1.0]))
        for r in rows:
            assert r.c_s == pytest.approx(C_S_Q01, abs=1e-4)
            assert r.lower == pytest.approx(r.upper, abs=1e-3)
            assert r.corollary == pytest.approx(r.c_s, abs=2e-3)

    def test_rf_no_state_saturates(self):
        rows = sweep_rf(ExperimentConfig(rf_grid=[0.0, 0.3199, 0.5, 1.0]))
        c_ns = [r.c_ns for r in rows]
        assert c_ns == sorted(c_ns)
        assert c_ns[2] == pytest.approx(c_ns[3], abs=1e-12)
        assert c_ns[1] == pytest.approx(0.21108 + 0.3199, abs=1e-4)
        assert C_NS_SAT_RF < 0.5

    def test_q_sweep(self):
        rows = sweep_q(ExperimentConfig(axis="q", q_grid=[0.0, 0.1, 0.5], rf=0.0))
        assert [r.axis for r in rows] == ["q"] * 3
        assert [r.value for r in rows] == [0.0, 0.1, 0.5]
        assert rows[1].c_s == pytest.approx(C_S_Q01, abs=1e-4)

    def test_non_degraded_columns_empty(self):
        rows = sweep(ExperimentConfig(scenario=EVE_BETTER, rf_grid=[0.0, 0.3]))
        assert all(r.c_ns is None and r.c_s is None for r in rows)
        assert all(r.upper is not None and r.lower is not None for r in rows)

    def test_threads_do_not_change_output(self, monkeypatch):
        cfg = ExperimentConfig(rf_grid=[0.0, 0.1, 0.4])
        monkeypatch.setenv(THREADS_ENV, "1")
        assert max_threads() == 1
        one = sweep(cfg)
        monkeypatch.setenv(THREADS_ENV, "4")
        assert max_threads() == 4
        assert sweep(cfg) == one

    def test_bad_thread_count(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "zero")
        with pytest.raises(ValidationError):
            max_threads()


class TestCsv:
    def test_round_trip_bit_identical(self, tmp_path):
        rows = sweep(ExperimentConfig(rf_grid=[0.0, 0.13, 0.7]))
        rows.append(ResultRow("rf", 0.9, verdict="fail", p_e=1 / 3))
        path = write_csv(rows, tmp_path / "out.csv")
        back = read_csv(path)
        assert back == rows
        assert path.read_text().splitlines()[0] == ",".join(ROW_FIELDS)

    def test_same_seed_same_bytes(self, tmp_path):
        cfg = ExperimentConfig(rf_grid=[0.0, 0.25, 0.5], seed=3)
        a = write_csv(sweep(cfg), tmp_path / "a.csv", cfg)
        b = write_csv(sweep(cfg), tmp_path / "b.csv", cfg)
        assert a.read_bytes() == b.read_bytes()
        meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
        assert meta["config"]["seed"] == 3


class TestVerify:
    def test_default_passes(self):
        rep = verify_consistency(trials=6)
        assert rep.passed, [c for c in rep.checks if not c.passed and not c.skipped]
        names = {c.name for c in rep.checks}
        assert {"closed-form-vs-optimizer", "tightness-fuzz", "one-time-pad",
                "decoder-only-csi-identity", "feedback-summand-zero"} <= names

    def test_non_degraded_is_skipped_with_reason(self):
        rep = verify_consistency(ExperimentConfig(scenario=EVE_BETTER), trials=3)
        check = next(c for c in rep.checks if c.name == "tightness-config-system")
        assert check.skipped and "not degraded" in check.detail
        assert rep.passed

    def test_detects_wrong_closed_form(self):
        def off_by_state_entropy(scn, rf):
            return bsc_state_capacity(scn, rf) - binary_entropy(scn.q)

        rep = verify_consistency(trials=2, closed_form=off_by_state_entropy)
        assert not rep.passed
        assert not next(c for c in rep.checks if c.name == "closed-form-vs-optimizer").passed

    def test_report_json(self):
        doc = json.loads(json.dumps(verify_consistency(trials=2).to_json()))
        assert doc["passed"] is True and len(doc["checks"]) >= 7


class TestSimulate:
    def test_tiny_exact(self, tmp_path):
        cfg = ExperimentConfig(rf_grid=[0.0, 0.5], codec=TINY_CODEC, sessions=30, seed=1)
        rows = simulate(cfg, out_dir=tmp_path)
        for r in rows:
            assert r.attempted_rate is not None and r.attempted_rate > 0
            assert r.d_hat is not None and r.leakage is not None and r.p_e is not None
            assert r.verdict in ("pass", "fail")
            assert r.achieved_rate <= r.upper + 1e-6
        rep = json.loads((tmp_path / "report_rf=0.5.json").read_text())
        assert rep["report"]["method"] == "exact"
        assert read_csv(tmp_path / "simulate.csv") == rows
        lines = (tmp_path / "sessions_rf=0.0.jsonl").read_text().splitlines()
        assert len(lines) == 30

    def test_reproducible(self):
        cfg = ExperimentConfig(rf_grid=[0.2], codec=TINY_CODEC, sessions=20, seed=7)
        assert simulate(cfg) == simulate(cfg)

    def test_rate_above_upper_bound_fails(self, monkeypatch):
        from dataclasses import replace

        from wiretap_lab import harness

        real = harness.design_spec

        def in_clear(*a, **kw):
            # every codeword carries a distinct message, nothing is randomized
            return replace(real(*a, **kw), mode="wiretap", r0=0.75, r1=0.0, r2=0.0,
                           codebook_rate=0.75)

        monkeypatch.setattr(harness, "design_spec", in_clear)
        cfg = ExperimentConfig(scenario={"p_y": 0.1, "p_z": 0.0, "p_s0": 0.05, "p_s1": 0.15, "q": 0.1},
                               rf_grid=[0.0], codec=TINY_CODEC, sessions=20)
        row = simulate(cfg)[0]
        assert row.attempted_rate > row.upper + 1e-6
        assert row.verdict == "fail" and row.achieved_rate == 0.0


class TestCli:
    def write(self, tmp_path, doc, name="cfg.json"):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return str(p)

    def test_capacity(self, tmp_path, capsys):
        scn = self.write(tmp_path, {"p_y": 0.1, "p_z": 0.1, "p_s0": 0.05, "p_s1": 0.15, "q": 0.1})
        assert cli.main(["capacity", "--config", scn, "--rf", "0.2"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["c_s"] == pytest.approx(C_S_Q01, abs=1e-4)
        assert out["lower"]["value"] == pytest.approx(out["upper"]["value"], abs=1e-3)

    def test_sweep(self, tmp_path):
        cfg = self.write(tmp_path, {"rf_grid": [0.0, 0.5]})
        out = tmp_path / "rf.csv"
        assert cli.main(["sweep", "--axis", "rf", "--config", cfg, "--out", str(out)]) == 0
        assert len(read_csv(out)) == 2

    def test_simulate(self, tmp_path):
        cfg = self.write(tmp_path, {"codec": TINY_CODEC})
        out = tmp_path / "runs"
        code = cli.main(["simulate", "--config", cfg, "--sessions", "10", "--seed", "3",
                         "--out", str(out), "--points", "0.1"])
        assert code == 0 and (out / "simulate.csv").exists()

    def test_verify_ok(self):
        assert cli.main(["verify", "--trials", "2"]) == 0

    def test_invalid_config(self, tmp_path, capsys):
        cfg = self.write(tmp_path, {"rf_grid": [0.5, 0.1]})
        assert cli.main(["sweep", "--axis", "rf", "--config", cfg, "--out", str(tmp_path / "x.csv")]) == 1
        assert "strictly increasing" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["capacity", "--config", str(tmp_path / "nope.json")]) == 1

    def test_negative_seed(self, tmp_path):
        assert cli.main(["sweep", "--axis", "rf", "--seed", "-2", "--out", str(tmp_path / "x.csv")]) == 1

    def test_verification_failure_exit_code(self, monkeypatch):
        from wiretap_lab import harness

        real = harness.verify_consistency
        monkeypatch.setattr(cli, "verify_consistency",
                            lambda cfg, trials, seed: real(cfg, trials, seed,
                                                           closed_form=lambda s, r: -1.0))
        assert cli.main(["verify", "--trials", "2"]) == 2
