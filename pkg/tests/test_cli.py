import hashlib
import json

import numpy as np
import pytest

from ergoforge.cli import (
    CSV_HEADER,
    ExperimentConfig,
    cmd_exact,
    cmd_pvqd,
    cmd_report,
    cmd_vqergo,
    load_config,
    main,
    parse_records,
    summarize_records,
)

H, J = 0.6, 2.0


def write_config(tmp_path, **kwargs):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(kwargs))
    return path


class TestConfig:
    def test_defaults_resolve(self):
        cfg = ExperimentConfig(protocol="rxx-exact", n=3)
        assert cfg.m_list == [1, 2, 3]
        assert cfg.t_stop == pytest.approx(np.pi / 2)
        assert cfg.max_iterations == 500
        assert cfg.pvqd_steps == 14

    def test_tfim_defaults(self):
        cfg = ExperimentConfig(protocol="tfim-pvqd", n=8)
        assert cfg.t_stop == 1.4
        assert cfg.t_points == 29
        assert cfg.pvqd_steps == 7

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, n=2, protockol="rxx-exact")
        with pytest.raises(ValueError, match="unknown config keys: protockol"):
            load_config(path)

    def test_validation(self):
        with pytest.raises(ValueError, match="h must be"):
            ExperimentConfig(h=0.0)
        with pytest.raises(ValueError, match="m_list"):
            ExperimentConfig(n=2, m_list=[3])
        with pytest.raises(ValueError, match="strictly increasing"):
            ExperimentConfig(t_start=1.0, t_stop=0.5, t_points=5)
        with pytest.raises(ValueError, match="backend"):
            ExperimentConfig(backend="gpu")

    def test_hash_tracks_content(self):
        a = ExperimentConfig(n=3, master_seed=1)
        b = ExperimentConfig(n=3, master_seed=2)
        assert a.config_hash() != b.config_hash()
        assert a.config_hash() == ExperimentConfig(n=3, master_seed=1).config_hash()


class TestExact:
    def test_records_schema_and_invariants(self, tmp_path):
        cfg = ExperimentConfig(protocol="rxx-exact", n=3, t_points=7, seeds=1)
        path = cmd_exact(cfg, tmp_path)
        rows = parse_records(path)
        assert len(rows) == 7 * 3
        text = path.read_text().splitlines()
        assert text[0] == ",".join(CSV_HEADER)
        for r in rows:
            assert r["method"] == "exact"
            assert r["ergotropy"] <= r["work"] + 1e-9
            if r["efficiency"] is not None:
                assert r["efficiency"] <= 1.0 + 1e-9
            if r["m"] == 3:  # full register: pure reduced state
                assert abs(r["ergotropy"] - r["work"]) < 1e-9

    def test_correlation_csv(self, tmp_path):
        cfg = ExperimentConfig(protocol="rxx-exact", n=3, t_points=2, correlations=True)
        cmd_exact(cfg, tmp_path)
        lines = (tmp_path / "correlations.csv").read_text().splitlines()
        assert lines[0] == "site,ell,axis,t,value,config_hash"
        assert len(lines) > 1

    def test_size_cap(self, tmp_path):
        with pytest.raises(ValueError, match="capped"):
            cmd_exact(ExperimentConfig(n=13, t_points=2), tmp_path)


class TestPvqd:
    def test_infidelity_columns(self, tmp_path):
        cfg = ExperimentConfig(
            protocol="tfim-pvqd", n=2, t_stop=0.4, pvqd_steps=4, depths=[1, 2],
            seeds=2, optimizer="BFGS", m_list=[1],
        )
        cmd_pvqd(cfg, tmp_path)
        lines = (tmp_path / "infidelity.csv").read_text().splitlines()
        rows = [line.split(",") for line in lines[1:]]
        # t=0 rows carry zero infidelity
        for r in rows:
            if r[2] == "0":
                assert float(r[6]) < 1e-9
        # low-depth short chain tracks the exact state tightly
        finals = {}
        for r in rows:
            depth, seed, infid, best = int(r[0]), int(r[1]), float(r[6]), int(r[7])
            if r[2] == "4":
                finals[(depth, seed)] = (infid, best)
        d1 = [v[0] for k, v in finals.items() if k[0] == 1]
        assert all(v < 1e-3 for v in d1)
        # best-of-seeds marked, non-increasing in depth
        best = {d: min(v[0] for k, v in finals.items() if k[0] == d) for d in (1, 2)}
        assert best[2] <= best[1] + 1e-9
        flagged = {k for k, v in finals.items() if v[1] == 1}
        assert len(flagged) == 2  # one per depth
        # trajectories saved per (depth, seed)
        assert len(list(tmp_path.glob("trajectory_d*_s*.json"))) == 4


class TestVqergo:
    def test_rxx_sweep_with_aggregates(self, tmp_path):
        cfg = ExperimentConfig(
            protocol="rxx-exact", n=3, t_points=3, seeds=3, m_list=[1, 2],
            optimizer="BFGS", cost_tolerance=1e-8,
        )
        path = cmd_vqergo(cfg, tmp_path)
        lines = path.read_text().splitlines()
        methods = {line.split(",")[4] for line in lines[1:]}
        assert methods == {"exact", "statevector-vq", "statevector-vq-mean", "statevector-vq-std"}
        rows = parse_records(path)
        per_seed = [r for r in rows if r["method"] == "statevector-vq"]
        assert len(per_seed) == 3 * 2 * 3

    def test_byte_determinism(self, tmp_path):
        cfg_kwargs = dict(
            protocol="rxx-exact", n=2, t_points=3, seeds=2, m_list=[1],
            backend="shots", optimizer="SPSA", max_iterations=40, shots=256,
        )
        a = cmd_vqergo(ExperimentConfig(**cfg_kwargs), tmp_path / "a")
        b = cmd_vqergo(ExperimentConfig(**cfg_kwargs), tmp_path / "b")
        assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()

    def test_noisy_std_exceeds_statevector_std(self, tmp_path):
        common = dict(protocol="rxx-exact", n=2, t_points=3, t_start=0.3, t_stop=0.7, seeds=8, m_list=[1])
        sv = cmd_vqergo(
            ExperimentConfig(optimizer="BFGS", cost_tolerance=1e-8, **common), tmp_path / "sv"
        )
        noisy = cmd_vqergo(
            ExperimentConfig(
                optimizer="SPSA", max_iterations=120, backend="noisy", shots=512,
                noise_p1=0.002, noise_p2=0.02, noise_readout_01=0.02, noise_readout_10=0.02,
                **common,
            ),
            tmp_path / "noisy",
        )

        def stds(path, method):
            return {
                (r["t"], r["m"]): r["ergotropy"]
                for r in parse_records(path)
                if r["method"] == method
            }

        sv_stds = stds(sv, "statevector-vq-std")
        noisy_stds = stds(noisy, "noisy-vq-std")
        assert set(sv_stds) == set(noisy_stds)
        for key in sv_stds:
            assert noisy_stds[key] > sv_stds[key]

    def test_missing_trajectory_file(self, tmp_path):
        cfg = ExperimentConfig(protocol="tfim-pvqd", n=2, trajectory=str(tmp_path / "nope.json"))
        with pytest.raises(ValueError, match="missing trajectory"):
            cmd_vqergo(cfg, tmp_path)

    def test_trajectory_key_required(self, tmp_path):
        with pytest.raises(ValueError, match="trajectory"):
            cmd_vqergo(ExperimentConfig(protocol="tfim-pvqd", n=2), tmp_path)


class TestReport:
    def test_summary_of_exact_records(self, tmp_path):
        cfg = ExperimentConfig(protocol="rxx-exact", n=3, t_points=9, m_list=[1, 2])
        records = cmd_exact(cfg, tmp_path)
        summary_path = cmd_report(records, tmp_path / "report", figures=True)
        summary = json.loads(summary_path.read_text())
        assert not summary["empty"]
        m1 = next(g for g in summary["groups"] if g["M"] == 1)
        # the single-cell peak sits at Jt = pi/2 and stores 2h
        assert m1["peak_ergotropy"] == pytest.approx(1.2, abs=1e-9)
        assert m1["argmax_t"] == pytest.approx(np.pi / 4, abs=1e-9)
        figures = sorted(p.name for p in (tmp_path / "report" / "figures").glob("*.png"))
        assert "exact_dynamics.png" in figures

    def test_default_quench_report_facts(self, tmp_path):
        # the exact sweep at the default settings supports the three headline
        # observations: a locked single cell early and late, peaks growing
        # with M, and unit efficiency for the whole register
        cfg = ExperimentConfig(protocol="tfim-pvqd", n=8)
        records = cmd_exact(cfg, tmp_path)
        rows = parse_records(records)
        m1 = {r["t"]: r["ergotropy"] for r in rows if r["m"] == 1}
        assert all(v < 1e-12 for t, v in m1.items() if t < 0.4 or t >= 1.2)
        summary = json.loads(cmd_report(records, tmp_path / "rep", figures=False).read_text())
        peaks = {g["M"]: g["peak_ergotropy"] for g in summary["groups"]}
        assert all(peaks[m + 1] > peaks[m] for m in range(1, 8))
        for r in rows:
            if r["m"] == 8 and r["work"] > 1e-6:
                assert r["efficiency"] == pytest.approx(1.0, abs=1e-9)

    def test_empty_records(self, tmp_path):
        path = tmp_path / "records.csv"
        path.write_text(",".join(CSV_HEADER) + "\n")
        summary = json.loads(cmd_report(path, tmp_path / "r", figures=False).read_text())
        assert summary == {"empty": True, "n_records": 0, "groups": [], "config_hashes": []}

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "records.csv"
        path.write_text(",".join(CSV_HEADER) + "\n0.1,1,,,exact,nan_oops,0,,0,0,abc\n")
        with pytest.raises(ValueError, match="records.csv:2"):
            parse_records(path)

    def test_summarize_groups_argmax(self):
        rows = [
            {"t": t, "m": 1, "depth": None, "seed": None, "method": "exact",
             "work": 1.0, "ergotropy": e, "efficiency": None, "e_mean": 0.0,
             "e_pass": 0.0, "config_hash": "x"}
            for t, e in [(0.0, 0.0), (0.5, 1.0), (1.0, 0.3)]
        ]
        summary = summarize_records(rows)
        assert summary["groups"][0]["argmax_t"] == 0.5


class TestMain:
    def test_cli_roundtrip(self, tmp_path, monkeypatch, capsys):
        config = write_config(
            tmp_path, protocol="rxx-exact", n=2, t_points=3, seeds=2, m_list=[1],
            optimizer="BFGS",
        )
        monkeypatch.chdir(tmp_path)
        assert main(["exact", "--config", str(config), "--out", "o"]) == 0
        assert main(["report", "o/records.csv", "--out", "r", "--no-figures"]) == 0
        assert (tmp_path / "r" / "summary.json").exists()

    def test_seed_env_override(self, tmp_path, monkeypatch):
        config = write_config(tmp_path, protocol="rxx-exact", n=2, t_points=2, seeds=1, m_list=[1])
        monkeypatch.setenv("ERGOFORGE_SEED", "123")
        monkeypatch.chdir(tmp_path)
        main(["exact", "--config", str(config), "--out", "env_o"])
        rows = parse_records(tmp_path / "env_o" / "records.csv")
        reference = ExperimentConfig(
            protocol="rxx-exact", n=2, t_points=2, seeds=1, m_list=[1], master_seed=123
        )
        assert rows[0]["config_hash"] == reference.config_hash()
