"""Replicate execution and the analysis pipeline behind the command line."""
from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import gamma_determ, gamma_lb_sto
from .config import ConfigError, RunConfig
from .events import EventStream, substream
from .grid import EventCapExceeded, new_grid, run_until_barrier, write_pgm, write_rle_csv
from .metrics import FrontRecorder, HittingRecord, SnapshotRecorder, detect_detach_time
from .stats import (ReplicateEnsemble, fit_fluctuation_exponents, fit_speed,
                    fit_variance_exponent, sigma_minus_tau_series)

FLOAT_FMT = "%.9g"


class RunAborted(RuntimeError):
    """A replicate stopped before reaching the barrier."""


def fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def replicate_dir(out, index: int) -> Path:
    return Path(out) / f"rep_{index:05d}"


def _write_manifest(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def run_replicate(cfg: RunConfig, index: int) -> dict:
    """Simulate replicate ``index`` to the barrier and write its output files.

    Returns the manifest.  Raises ``RunAborted`` when the event cap is hit;
    the manifest on disk is then marked incomplete.
    """
    geom = cfg.geometry()
    mu = cfg.distribution()
    d = replicate_dir(cfg.out, index)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config_hash": cfg.config_hash(),
        "setting": cfg.label(),
        "master_seed": cfg.seed,
        "replicate": index,
        "complete": False,
    }
    mpath = d / "manifest.json"
    _write_manifest(mpath, manifest)

    start = time.perf_counter()
    grid = new_grid(geom)
    stream = EventStream(geom, mu, substream(cfg.seed, index))
    front = FrontRecorder(geom, dt=cfg.sample_dt(), row_window=cfg.row_window)
    recorders = [front]
    if cfg.snapshot_times:
        writer, suffix = (write_pgm, ".pgm") if cfg.snapshot_format == "pgm" else (write_rle_csv, ".csv")
        recorders.append(SnapshotRecorder(cfg.snapshot_times, d, writer, suffix))
    try:
        result = run_until_barrier(grid, stream, recorders, max_events=cfg.max_events or None)
    except EventCapExceeded as exc:
        manifest.update(error=str(exc), events_drawn=stream.drawn,
                        wall_time=time.perf_counter() - start)
        _write_manifest(mpath, manifest)
        raise RunAborted(f"replicate {index}: {exc}") from None

    rec = HittingRecord.from_grid(grid)
    write_csv(d / "hitting.csv", ["x", "tau", "sigma"], zip(rec.x, rec.tau, rec.sigma))
    s = front.series
    write_csv(d / "front_sd.csv", ["t", "sd", "detached"], zip(s.sample_times, s.sd, s.detached))
    split = detect_detach_time(s) if s.sample_times else None
    manifest.update(
        complete=True,
        barrier_time=result.barrier_time,
        events_applied=result.events_applied,
        events_ignored=result.events_ignored,
        events_drawn=result.events_drawn,
        detach_time=None if split is None else split.detach_time,
        front_sample_dt=front.dt,
        row_window=list(front.row_window),
        wall_time=time.perf_counter() - start,
    )
    _write_manifest(mpath, manifest)
    return manifest


def _run_one(args):
    cfg_dict, index = args
    return run_replicate(RunConfig.from_dict(cfg_dict), index)


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        env = os.environ.get("SLFV_JOBS")
        if env:
            try:
                jobs = int(env)
            except ValueError:
                raise ConfigError(f"SLFV_JOBS must be an integer, got {env!r}") from None
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return jobs


def simulate(cfg: RunConfig, jobs: int | None = None, progress=None) -> list[dict]:
    """Run every replicate of ``cfg``; outputs go to ``cfg.out``."""
    cfg.validate()
    jobs = resolve_jobs(jobs if jobs is not None else cfg.jobs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    # run-defining fields only, so the file does not depend on where it was written
    content = {k: v for k, v in cfg.to_dict().items() if k not in RunConfig._UNHASHED}
    (out / "config.json").write_text(json.dumps(content, indent=2, sort_keys=True) + "\n")
    tasks = [(cfg.to_dict(), i) for i in range(cfg.replicates)]
    manifests = []
    if jobs == 1:
        it = map(_run_one, tasks)
        for m in it:
            manifests.append(m)
            if progress:
                progress(m)
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            for m in ex.map(_run_one, tasks):
                manifests.append(m)
                if progress:
                    progress(m)
    return manifests


# ---------------------------------------------------------------------------

def read_csv_columns(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: cols[:, k] for k, name in enumerate(header)}


@dataclass
class AnalysisResult:
    label: str
    replicates: int
    speed_rows: list
    var_rows: list
    beta_rows: list
    plateau: object


def load_replicates(results_dir) -> tuple[RunConfig, list[Path], list[dict]]:
    root = Path(results_dir)
    dirs, manifests = [], []
    for d in sorted(root.glob("rep_*")):
        mp = d / "manifest.json"
        if not mp.exists():
            continue
        m = json.loads(mp.read_text())
        if m.get("complete"):
            dirs.append(d)
            manifests.append(m)
    if len(dirs) < 2:
        raise ConfigError(f"{root}: need at least 2 complete replicates, found {len(dirs)}")
    hashes = {m["config_hash"] for m in manifests}
    if len(hashes) > 1:
        raise ConfigError(f"{root}: replicates come from {len(hashes)} different configs")
    cfg_path = root / "config.json"
    if not cfg_path.exists():
        raise ConfigError(f"{root}: missing config.json")
    cfg = RunConfig.from_dict(json.loads(cfg_path.read_text()))
    if cfg.config_hash() not in hashes:
        raise ConfigError(f"{root}: config.json does not match the replicate manifests")
    return cfg, dirs, manifests


def build_ensemble(cfg: RunConfig, dirs, manifests) -> ReplicateEnsemble:
    geom = cfg.geometry()
    ens = None
    for d, m in zip(dirs, manifests):
        h = read_csv_columns(d / "hitting.csv")
        rec = HittingRecord(h["x"], h["tau"], h["sigma"])
        if ens is None:
            ens = ReplicateEnsemble.for_record(rec, geom.delta)
        ens.add_hitting(rec)
        f = read_csv_columns(d / "front_sd.csv")
        ens.add_front(f["t"], f["sd"], m.get("detach_time"))
    return ens


def analyze(results_dir, var_window=None) -> AnalysisResult:
    """Fold the replicates in ``results_dir`` and compute every estimator."""
    cfg, dirs, manifests = load_replicates(results_dir)
    geom = cfg.geometry()
    mu = cfg.distribution()
    ens = build_ensemble(cfg, dirs, manifests)
    label = cfg.label()

    sp = fit_speed(ens)
    gd, gl = gamma_determ(mu, geom.C), gamma_lb_sto(mu, geom.C)
    speed_rows = [(label, sp.nu, sp.speed, gd, gl, sp.speed / gd, sp.fit.window[0],
                   sp.fit.window[1], sp.fit.n_points, sp.fit.r2)]

    var_rows = []
    for name, which in (("a", "tau"), ("b", "sigma")):
        try:
            f = fit_variance_exponent(ens, which, var_window)
        except ValueError as exc:
            # too few positions reached in every replicate; report the gap, keep the rest
            warnings.warn(f"variance exponent {name} ({which}) not estimated: {exc}")
            var_rows.append((label, name, which, math.nan, math.nan, math.nan, math.nan, math.nan,
                             int(ens.valid_for(which).sum())))
            continue
        var_rows.append((label, name, which, f.slope, f.stderr, f.r2, f.window[0], f.window[1], f.n_points))

    times, sd = ens.mean_front_sd()
    split = ens.median_detach()
    beta_rows = []
    if split.reached:
        b1, b2 = fit_fluctuation_exponents(times, sd, split)
        for name, f in (("beta1", b1), ("beta2", b2)):
            beta_rows.append((label, name, f.slope, f.stderr, f.r2, f.window[0], f.window[1],
                              f.n_points, split.detach_time))
    try:
        plateau = sigma_minus_tau_series(ens)
    except ValueError as exc:
        warnings.warn(f"sigma - tau plateau not estimated: {exc}")
        plateau = None
    return AnalysisResult(label, ens.n, speed_rows, var_rows, beta_rows, plateau)


SPEED_HEADER = ["setting", "nu", "speed", "gamma_determ", "gamma_lb_sto", "quotient",
                "window_lo", "window_hi", "n_points", "r2"]
VAR_HEADER = ["setting", "exponent", "quantity", "value", "stderr", "r2",
              "window_lo", "window_hi", "n_points"]
BETA_HEADER = ["setting", "exponent", "value", "stderr", "r2", "window_lo", "window_hi",
               "n_points", "detach_time"]
PLATEAU_HEADER = ["x", "mean_sigma_minus_tau"]


def write_analysis(res: AnalysisResult, out) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "speeds.csv", SPEED_HEADER, res.speed_rows)
    write_csv(out / "var_exponents.csv", VAR_HEADER, res.var_rows)
    write_csv(out / "beta_exponents.csv", BETA_HEADER, res.beta_rows)
    p = res.plateau
    write_csv(out / "sigma_minus_tau.csv", PLATEAU_HEADER, [] if p is None else zip(p.x, p.diff))
