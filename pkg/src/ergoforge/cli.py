"""Reproduction harness: config parsing, sweeps, and CSV/JSON emission.

Every output byte is a function of the resolved configuration and the master
seed (override with the ERGOFORGE_SEED environment variable): sweep cells draw
their generators from per-cell seed sequences and rows are merged in a fixed
order, so repeated invocations are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .ansatz import AnsatzSpec
from .ergotropy import ErgotropyRecord, correlation, ergotropy_exact
from .hamiltonians import build_h0, build_h1_tfim, diagonalize, evolve_exact
from .optimizers import OptimizerConfig
from .pvqd import PvqdConfig, PvqdTrajectory, run_pvqd
from .sim import NoiseModel, zero_state
from .vqergo import NoisyBackend, ShotBackend, StatevectorBackend, vqergo_pipeline

CSV_HEADER = ["t", "M", "depth", "seed", "method", "work", "ergotropy", "efficiency", "e_mean", "e_pass", "config_hash"]
CORRELATION_HEADER = ["site", "ell", "axis", "t", "value", "config_hash"]
INFIDELITY_HEADER = ["depth", "seed", "step", "t", "cost", "infidelity", "oracle_infidelity", "best", "config_hash"]

PROTOCOLS = ("tfim-pvqd", "rxx-exact")
BACKENDS = ("statevector", "shots", "noisy")
SEED_ENV = "ERGOFORGE_SEED"
DENSE_CAP = 12


@dataclass
class ExperimentConfig:
    """Flat experiment description; unknown JSON keys are rejected."""

    protocol: str = "rxx-exact"
    n: int = 4
    m_list: list[int] | None = None
    t_start: float = 0.0
    t_stop: float | None = None
    t_points: int = 29
    h: float = 0.6
    J: float = 2.0
    depths: list[int] = field(default_factory=lambda: [1])
    optimizer: str = "BFGS"
    max_iterations: int | None = None
    cost_tolerance: float = 1e-6
    backend: str = "statevector"
    shots: int = 2048
    noise_p1: float = 0.0
    noise_p2: float = 0.0
    noise_readout_01: float = 0.0
    noise_readout_10: float = 0.0
    seeds: int = 100
    master_seed: int = 7
    subsystem: str | list[int] = "prefix"
    trajectory: str | None = None
    pvqd_steps: int | None = None
    trotter_order: int = 2
    fidelity_mode: str = "exact-overlap"
    spsa_step_clip: float | None = None
    correlations: bool = False

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if not math.isfinite(self.J):
            raise ValueError("J must be finite")
        if self.m_list is None:
            self.m_list = list(range(1, self.n + 1))
        if max(self.m_list) > self.n or min(self.m_list) < 1:
            raise ValueError(f"m_list {self.m_list} outside 1..{self.n}")
        if self.t_stop is None:
            self.t_stop = 1.4 if self.protocol == "tfim-pvqd" else math.pi / self.J
        if self.t_points < 1:
            raise ValueError("t_points must be >= 1")
        if self.t_points > 1 and not self.t_stop > self.t_start:
            raise ValueError("t grid must be strictly increasing")
        if self.optimizer not in ("BFGS", "SPSA"):
            raise ValueError(f"optimizer must be BFGS or SPSA, got {self.optimizer!r}")
        if self.max_iterations is None:
            self.max_iterations = 500 if self.optimizer == "BFGS" else 250
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if self.pvqd_steps is None:
            self.pvqd_steps = 14 if self.n <= 4 else 7
        if isinstance(self.subsystem, str) and self.subsystem != "prefix":
            raise ValueError("subsystem is 'prefix' or an explicit site list")

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_stop, self.t_points)

    def resolved_dict(self) -> dict:
        out = {}
        for f in fields(self):
            out[f.name] = getattr(self, f.name)
        return out

    def config_hash(self) -> str:
        payload = json.dumps(self.resolved_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def optimizer_config(self, seed: int = 0) -> OptimizerConfig:
        return OptimizerConfig(
            method=self.optimizer,
            max_iterations=self.max_iterations,
            cost_tolerance=self.cost_tolerance,
            shots=None if self.backend == "statevector" else self.shots,
            spsa_step_clip=self.spsa_step_clip,
            seed=seed,
        )

    def noise_model(self) -> NoiseModel:
        return NoiseModel(
            p1=self.noise_p1,
            p2=self.noise_p2,
            readout_01=self.noise_readout_01,
            readout_10=self.noise_readout_10,
        )

    def backend_instance(self):
        if self.backend == "statevector":
            return StatevectorBackend()
        if self.backend == "shots":
            return ShotBackend(shots=self.shots)
        return NoisyBackend(noise=self.noise_model(), shots=self.shots)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError("config must be a flat JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    if overrides:
        data.update(overrides)
    return ExperimentConfig(**data)


# ---------------------------------------------------------------------------
# CSV helpers


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _record_row(rec: ErgotropyRecord, h: float, cfg_hash: str) -> list:
    e_mean = rec.work - h * rec.m
    e_pass = e_mean - rec.ergotropy
    return [rec.t, rec.m, rec.depth, rec.seed, rec.method, rec.work, rec.ergotropy, rec.efficiency, e_mean, e_pass, cfg_hash]


def _aggregate_rows(records: list[ErgotropyRecord], h: float, cfg_hash: str) -> list[list]:
    """Per-(t, M, depth) mean and std over seeds, appended as extra rows."""
    groups: dict[tuple, list[ErgotropyRecord]] = {}
    for rec in records:
        if rec.seed is None:
            continue
        groups.setdefault((rec.t, rec.m, rec.depth, rec.method), []).append(rec)
    rows = []
    for (t, m, depth, method), cell in sorted(groups.items()):
        works = np.array([r.work for r in cell])
        ergs = np.array([r.ergotropy for r in cell])
        effs = [r.efficiency for r in cell if r.efficiency is not None]
        for stat, suffix in ((np.mean, "-mean"), (np.std, "-std")):
            w, e = float(stat(works)), float(stat(ergs))
            eff = float(stat(effs)) if effs else None
            e_mean = float(stat(works - h * m)) if suffix == "-std" else w - h * m
            e_pass = float(stat(works - h * m - ergs)) if suffix == "-std" else e_mean - e
            rows.append([t, m, depth, None, method + suffix, w, e, eff, e_mean, e_pass, cfg_hash])
    return rows


# ---------------------------------------------------------------------------
# subcommands


def cmd_exact(config: ExperimentConfig, out_dir: Path) -> Path:
    """Exact work/ergotropy/efficiency sweep from the spectral oracle."""
    if config.n > DENSE_CAP:
        raise ValueError(f"exact sweeps are capped at {DENSE_CAP} qubits")
    cfg_hash = config.config_hash()
    sites = None if config.subsystem == "prefix" else config.subsystem
    if config.protocol == "tfim-pvqd":
        op = build_h1_tfim(config.n, config.h, config.J)
    else:
        op = build_h1_tfim(config.n, 0.0, config.J)
    spectrum = diagonalize(op)
    h0_by_m = {m: build_h0(m, config.h) for m in config.m_list}

    rows = []
    corr_rows = []
    for t in config.t_grid:
        psi = evolve_exact(zero_state(config.n), op, float(t), spectrum)
        for m in config.m_list:
            m_sites = None if sites is None else sites[:m]
            rec = ergotropy_exact(psi, m, h0_by_m[m], t=float(t), sites=m_sites)
            rows.append(_record_row(rec, config.h, cfg_hash))
        if config.correlations:
            for site in range(config.n):
                for ell in range(-site, config.n - site):
                    if ell == 0:
                        continue
                    for axis in ("X", "Z"):
                        corr_rows.append(
                            [site, ell, axis, float(t), correlation(psi, site, ell, axis), cfg_hash]
                        )
    records_path = _write_csv(out_dir / "records.csv", CSV_HEADER, rows)
    if config.correlations:
        _write_csv(out_dir / "correlations.csv", CORRELATION_HEADER, corr_rows)
    return records_path


def cmd_pvqd(config: ExperimentConfig, out_dir: Path) -> Path:
    """Fit the charging dynamics per (depth, seed); emit trajectories and infidelities."""
    cfg_hash = config.config_hash()
    op = build_h1_tfim(config.n, config.h, config.J)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    trajectories = {}
    for depth in config.depths:
        for seed_idx in range(config.seeds):
            seed = int(np.random.SeedSequence([config.master_seed, depth, seed_idx]).generate_state(1)[0])
            pvqd_config = PvqdConfig(
                total_time=config.t_stop,
                n_steps=config.pvqd_steps,
                ansatz=AnsatzSpec(config.n, depth),
                optimizer=config.optimizer_config(seed),
                fidelity_mode=config.fidelity_mode,
                trotter_order=config.trotter_order,
                seed=seed,
            )
            traj = run_pvqd(pvqd_config, op)
            traj.save_json(out_dir / f"trajectory_d{depth}_s{seed_idx}.json")
            trajectories[(depth, seed_idx)] = traj
        # mark the seed whose final state tracks the exact evolution best
        finals = {
            s: 1.0 - (trajectories[(depth, s)].steps[-1].oracle_fidelity or 0.0)
            for s in range(config.seeds)
        }
        best_seed = min(sorted(finals), key=finals.get)
        for seed_idx in range(config.seeds):
            traj = trajectories[(depth, seed_idx)]
            for step_idx, step in enumerate(traj.steps):
                oracle_infid = None if step.oracle_fidelity is None else 1.0 - step.oracle_fidelity
                rows.append(
                    [depth, seed_idx, step_idx, step.t, step.cost, step.infidelity,
                     oracle_infid, int(seed_idx == best_seed), cfg_hash]
                )
    return _write_csv(out_dir / "infidelity.csv", INFIDELITY_HEADER, rows)


def _vqergo_depth(args):
    """Worker for one (depth, t-slice) cell of the sweep; module-level for pickling."""
    cfg_dict, depth, t_values, traj_dict = args
    config = ExperimentConfig(**cfg_dict)
    trajectory = None if traj_dict is None else PvqdTrajectory.from_dict(traj_dict)
    records = vqergo_pipeline(
        config.protocol,
        n=config.n,
        m_list=config.m_list,
        t_grid=t_values,
        h=config.h,
        J=config.J,
        depth=depth,
        optimizer=config.optimizer_config(),
        backend=config.backend_instance(),
        seeds=config.seeds,
        trajectory=trajectory,
        master_seed=config.master_seed,
        subsystem=None if config.subsystem == "prefix" else config.subsystem,
    )
    return records


def cmd_vqergo(config: ExperimentConfig, out_dir: Path, threads: int = 1) -> Path:
    """Variational sweep: per-seed record rows, aggregates, and exact reference rows."""
    cfg_hash = config.config_hash()
    trajectory = None
    if config.protocol == "tfim-pvqd":
        if config.trajectory is None:
            raise ValueError("protocol tfim-pvqd needs a trajectory file (config key 'trajectory')")
        traj_path = Path(config.trajectory)
        if not traj_path.exists():
            raise ValueError(f"missing trajectory file: {traj_path}")
        trajectory = PvqdTrajectory.load_json(traj_path)
    traj_dict = None if trajectory is None else trajectory.to_dict()

    t_values = [float(t) for t in config.t_grid]
    jobs = [(config.resolved_dict(), depth, t_values, traj_dict) for depth in config.depths]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            per_depth = list(pool.map(_vqergo_depth, jobs))
    else:
        per_depth = [_vqergo_depth(job) for job in jobs]

    records = [rec for batch in per_depth for rec in batch]
    rows = [_record_row(r, config.h, cfg_hash) for r in records]
    rows += _aggregate_rows(records, config.h, cfg_hash)

    if config.n <= DENSE_CAP:
        h1 = (
            build_h1_tfim(config.n, config.h, config.J)
            if config.protocol == "tfim-pvqd"
            else build_h1_tfim(config.n, 0.0, config.J)
        )
        spectrum = diagonalize(h1)
        h0_by_m = {m: build_h0(m, config.h) for m in config.m_list}
        sites = None if config.subsystem == "prefix" else config.subsystem
        for t in t_values:
            psi = evolve_exact(zero_state(config.n), h1, t, spectrum)
            for m in config.m_list:
                m_sites = None if sites is None else sites[:m]
                rec = ergotropy_exact(psi, m, h0_by_m[m], t=t, sites=m_sites)
                rows.append(_record_row(rec, config.h, cfg_hash))

    rows.sort(key=_row_order)
    return _write_csv(out_dir / "records.csv", CSV_HEADER, rows)


def _row_order(row):
    t, m, depth, seed, method = row[0], row[1], row[2], row[3], row[4]
    return (
        float(t),
        int(m),
        -1 if depth is None else int(depth),
        method,
        -1 if seed is None else int(seed),
    )


# ---------------------------------------------------------------------------
# report


def parse_records(path) -> list[dict]:
    """Read a records CSV back into typed rows; malformed lines report their number."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a records header")
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(CSV_HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(raw)}")
            try:
                rows.append(
                    {
                        "t": float(raw[0]),
                        "m": int(raw[1]),
                        "depth": None if raw[2] == "" else int(raw[2]),
                        "seed": None if raw[3] == "" else int(raw[3]),
                        "method": raw[4],
                        "work": float(raw[5]),
                        "ergotropy": float(raw[6]),
                        "efficiency": None if raw[7] == "" else float(raw[7]),
                        "e_mean": float(raw[8]),
                        "e_pass": float(raw[9]),
                        "config_hash": raw[10],
                    }
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row ({exc})") from None
    return rows


def summarize_records(rows: list[dict]) -> dict:
    """Argmax time, peak ergotropy, and error-vs-exact per (M, depth, method)."""
    if not rows:
        return {"empty": True, "n_records": 0, "groups": [], "config_hashes": []}
    exact = {}
    for r in rows:
        if r["method"] == "exact":
            exact[(r["m"], round(r["t"], 12))] = r["ergotropy"]

    cells: dict[tuple, dict[float, list[float]]] = {}
    for r in rows:
        if r["method"] == "exact":
            cells.setdefault((r["m"], None, "exact"), {}).setdefault(r["t"], []).append(r["ergotropy"])
        elif r["method"].endswith("-vq") and r["seed"] is not None:
            key = (r["m"], r["depth"], r["method"])
            cells.setdefault(key, {}).setdefault(r["t"], []).append(r["ergotropy"])

    groups = []
    for (m, depth, method), by_t in sorted(
        cells.items(), key=lambda kv: (kv[0][0], -1 if kv[0][1] is None else kv[0][1], kv[0][2])
    ):
        ts = sorted(by_t)
        means = [float(np.mean(by_t[t])) for t in ts]
        peak_idx = int(np.argmax(means))
        errors = [
            abs(mean - exact[(m, round(t, 12))])
            for t, mean in zip(ts, means)
            if method != "exact" and (m, round(t, 12)) in exact
        ]
        groups.append(
            {
                "M": m,
                "depth": depth,
                "method": method,
                "argmax_t": ts[peak_idx],
                "peak_ergotropy": means[peak_idx],
                "max_abs_error": max(errors) if errors else None,
            }
        )
    return {
        "empty": False,
        "n_records": len(rows),
        "config_hashes": sorted({r["config_hash"] for r in rows}),
        "groups": groups,
    }


def cmd_report(records_path, out_dir: Path, figures: bool = True) -> Path:
    rows = parse_records(records_path)
    summary = summarize_records(rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    if figures and rows:
        from .figures import render_report_figures

        render_report_figures(rows, out_dir / "figures")
    return summary_path


# ---------------------------------------------------------------------------
# entry point


def _add_common(parser):
    parser.add_argument("--config", required=True, help="experiment config JSON")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seeds", type=int, default=None, help="override seed count")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ergoforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("exact", "pvqd", "vqergo"):
        _add_common(sub.add_parser(name))
    report = sub.add_parser("report")
    report.add_argument("records", help="records CSV produced by exact/vqergo")
    report.add_argument("--out", default="out", help="output directory")
    report.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    args = parser.parse_args(argv)
    out_dir = Path(args.out)

    if args.command == "report":
        path = cmd_report(args.records, out_dir, figures=not args.no_figures)
        print(path)
        return 0

    overrides = {}
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    if SEED_ENV in os.environ:
        overrides["master_seed"] = int(os.environ[SEED_ENV])
    config = load_config(args.config, overrides)

    if args.command == "exact":
        path = cmd_exact(config, out_dir)
    elif args.command == "pvqd":
        path = cmd_pvqd(config, out_dir)
    else:
        path = cmd_vqergo(config, out_dir, threads=args.threads)
    print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
