"""Command-line entry point: scenario runs, benchmarks and the self test.

    eikf run config.json --out results [--seed 7] [--jobs 4] [--override k=v]
    eikf emit-default-config --scenario vio
    eikf bench-update --n-list 1000,10000,100000 --sensor lidar
    eikf bench-core --steps 2000
    eikf selftest

Exit codes: 0 success, 1 selftest failures, 2 configuration errors,
3 runtime failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, filters, kernels, selfcheck, sim
from .errors import ConfigError, EikfError


def _apply_override(d: dict, key: str, raw: str) -> None:
    parts = key.split(".")
    node = d
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"override path {key!r} not in config")
        node = node[p]
    leaf = parts[-1]
    if leaf not in node:
        raise ConfigError(f"override key {key!r} not in config")
    try:
        node[leaf] = json.loads(raw)
    except json.JSONDecodeError:
        node[leaf] = raw


def load_config(path: str, overrides: list[str], seed: int | None) -> sim.ScenarioConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} must look like key=value")
        key, raw_v = ov.split("=", 1)
        _apply_override(raw, key, raw_v)
    if seed is not None:
        raw["seed"] = seed
    return sim.ScenarioConfig.from_dict(raw)


def default_config(scenario: str) -> dict:
    name = f"{scenario}_default.json"
    with resources.files("eikf.configs").joinpath(name).open() as f:
        return json.load(f)


def _write_rmse_csv(path: Path, times, series, variants) -> None:
    with open(path, "w") as f:
        f.write("t," + ",".join(variants) + "\n")
        for i, t in enumerate(times):
            row = [f"{t:.6g}"] + [f"{series[v][i]:.9g}" for v in variants]
            f.write(",".join(row) + "\n")


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.override, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        started = time.time()
        outputs = []
        avg_rmse: dict = {}
        variants = list(cfg.filters)
        if cfg.sweep_axis == "none" or not cfg.sweep_values:
            results = sim.run_scenario(cfg, jobs=args.jobs)
            for quantity, stem in (
                ("orientation_deg", "rmse_orientation_deg.csv"),
                ("position_m", "rmse_position_m.csv"),
            ):
                times, series, scalars = sim.rmse(results, quantity)
                _write_rmse_csv(out_dir / stem, times, series, variants)
                outputs.append(stem)
                avg_rmse[quantity] = scalars
        else:
            rows = []
            for value, group in sim.run_sweep(cfg, jobs=args.jobs):
                _, _, ori = sim.rmse(group, "orientation_deg")
                _, _, pos = sim.rmse(group, "position_m")
                for v in variants:
                    ms = [float(np.mean(r.update_ms[v])) for r in group if not r.diverged[v]]
                    rows.append(
                        (value, v, ori[v], pos[v], float(np.mean(ms)) if ms else math.nan)
                    )
            with open(out_dir / "sweep.csv", "w") as f:
                f.write("sweep_value,filter,avg_rmse_orient_deg,avg_rmse_pos_m,avg_update_ms\n")
                for r in rows:
                    f.write(f"{r[0]:.6g},{r[1]},{r[2]:.9g},{r[3]:.9g},{r[4]:.6g}\n")
            outputs.append("sweep.csv")
            avg_rmse["sweep"] = [
                {"value": r[0], "filter": r[1], "orient_deg": r[2], "pos_m": r[3]}
                for r in rows
            ]
        manifest = {
            "config": cfg.to_dict(),
            "config_hash": cfg.config_hash(),
            "seed": cfg.seed,
            "version": __version__,
            "kernel_backend": kernels.BACKEND,
            "started_unix": started,
            "finished_unix": time.time(),
            "avg_rmse": avg_rmse,
            "outputs": outputs,
        }
        with open(out_dir / "manifest.json", "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
        print(f"wrote {', '.join(outputs + ['manifest.json'])} to {out_dir}")
        return 0
    except EikfError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


def cmd_emit_default_config(args) -> int:
    json.dump(default_config(args.scenario), sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def _bench_scene(sensor: str, n: int, rng):
    """Static well-conditioned scene with n features for update timing."""
    from .gaussian import NoiseParams
    from .lie import Pose, so3_exp
    from .sensors import CameraBatch, CameraIntrinsics, Extrinsics, LandmarkMap, LidarBatch

    params = NoiseParams()
    extr = Extrinsics.identity()
    truth = sim.ground_truth(1.0, sim.ScenarioConfig())[0]
    if sensor == "camera":
        intr = CameraIntrinsics()
        t_c = truth.pose()
        dirs = rng.normal(size=(n, 3))
        dirs[:, 2] = np.abs(dirs[:, 2]) + 1.0
        pts_cam = dirs / np.linalg.norm(dirs, axis=1, keepdims=True) * rng.uniform(
            5.0, 40.0, size=(n, 1)
        )
        p_w = pts_cam @ t_c.rotation.T + t_c.translation
        pix = np.column_stack(
            [
                intr.f_x * pts_cam[:, 0] / pts_cam[:, 2] + intr.u_0,
                intr.f_y * pts_cam[:, 1] / pts_cam[:, 2] + intr.v_0,
            ]
        )
        pix += params.sigma_c * rng.standard_normal(pix.shape)
        batch = CameraBatch(np.arange(n), pix)
        lm = LandmarkMap.from_positions(p_w)
        return filters.CameraModel(batch, lm, intr, extr, params.sigma_c), truth
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    q = truth.position + rng.normal(size=(n, 3)) * 30.0
    z = (q - truth.position) @ truth.rotation + params.sigma_l * rng.standard_normal((n, 3))
    batch = LidarBatch(z, normals, q)
    return filters.LidarModel(batch, extr, params.sigma_l), truth


def bench_update(n_list, sensor: str, reps: int, variants=("eikf_c", "iekf", "inekf")):
    """Median update wall time per variant and batch size.

    BLAS thread pools are pinned to one thread during timing when
    threadpoolctl is available, so the fitted exponent reflects the
    algorithmic scaling rather than thread ramp-up.
    """
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - optional
        from contextlib import nullcontext

        def threadpool_limits(limits):
            return nullcontext()

    with threadpool_limits(limits=1):
        return _bench_update_inner(n_list, sensor, reps, variants)


def _bench_update_inner(n_list, sensor, reps, variants):
    rng = np.random.default_rng(0)
    rows = {}
    for n in n_list:
        model, truth = _bench_scene(sensor, n, rng)
        belief = filters.BeliefState(truth, cov=np.eye(15) * 1e-2)
        for v in variants:
            cfg = filters.UpdateConfig(n_threshold=50)

            def one_update(v=v, cfg=cfg):
                if v == "eikf_c":
                    filters.eikf_update(belief, model, cfg)
                elif v == "iekf":
                    filters.baseline_update(belief, model, cfg)
                elif v == "inekf":
                    filters.iterated_update(belief, model, replace(cfg, l_max=1))
                else:
                    raise ConfigError(f"unknown bench variant {v!r}")

            one_update()  # warm caches and allocator before timing
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                one_update()
                times.append((time.perf_counter() - t0) * 1e3)
            rows[(n, v)] = float(np.median(times))
    exponents = {}
    for v in variants:
        if len(n_list) < 2:
            exponents[v] = math.nan
        else:
            logs_n = np.log(np.asarray(n_list, dtype=float))
            logs_t = np.log([rows[(n, v)] for n in n_list])
            exponents[v] = float(np.polyfit(logs_n, logs_t, 1)[0])
    return rows, exponents


def cmd_bench_update(args) -> int:
    try:
        n_list = [int(x) for x in args.n_list.split(",")]
        if sorted(n_list) != n_list:
            raise ConfigError("n-list must be ascending")
        variants = tuple(args.filters.split(","))
        rows, exponents = bench_update(n_list, args.sensor, args.reps, variants)
    except EikfError as exc:
        print(f"benchmark failure: {exc}", file=sys.stderr)
        return 3
    out = Path(args.out) if args.out else None
    lines = ["n," + ",".join(variants)]
    for n in n_list:
        lines.append(f"{n}," + ",".join(f"{rows[(n, v)]:.6g}" for v in variants))
    csv = "\n".join(lines) + "\n"
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench_update.csv").write_text(csv)
    print(csv, end="")
    for v in variants:
        e = exponents[v]
        if math.isnan(e):
            print(f"{v}: exponent NaN (need >= 2 batch sizes)")
        else:
            print(f"{v}: fitted log-log exponent {e:.3f}")
    return 0


def cmd_bench_core(args) -> int:
    rng = np.random.default_rng(0)
    from .lie import so3_exp

    rot = so3_exp(rng.normal(size=3))
    pos = rng.normal(size=3) * 10
    vel = rng.normal(size=3)
    l = rng.normal(size=(15, 15)) * 0.05
    cov = l @ l.T + 1e-3 * np.eye(15)
    om = rng.normal(size=(args.steps, 3)) * 0.3
    ac = rng.normal(size=(args.steps, 3)) + [0.0, 0.0, 9.81]
    dts = np.full(args.steps, 0.01)
    call_args = (
        rot, pos, vel, np.zeros(3), np.zeros(3), cov, om, ac, dts,
        np.array([0.0, 0.0, -9.81]), 0.01, 0.01, 0.001, 0.001,
    )
    t0 = time.perf_counter()
    ref = kernels.predict_window_py(*call_args)
    t_py = time.perf_counter() - t0
    print(f"python backend : {t_py * 1e6 / args.steps:8.2f} us/step")
    if kernels.predict_window_compiled is None:
        print("compiled backend: not available (pure-python install)")
        return 0
    t0 = time.perf_counter()
    fast = kernels.predict_window_compiled(*call_args)
    t_c = time.perf_counter() - t0
    err = max(
        float(np.abs(a - b).max() / max(np.abs(a).max(), 1e-300))
        for a, b in zip(ref, fast)
    )
    print(f"compiled backend: {t_c * 1e6 / args.steps:8.2f} us/step")
    print(f"speedup {t_py / t_c:.1f}x, max relative deviation {err:.2e}")
    return 0


def cmd_selftest(args) -> int:
    failures = []
    for name, fn in selfcheck.CHECKS:
        t0 = time.perf_counter()
        try:
            fn()
            print(f"PASS {name} ({time.perf_counter() - t0:.1f}s)")
        except Exception as exc:
            print(f"FAIL {name}: {exc}")
            failures.append(name)
    if failures:
        print("failed checks: " + ", ".join(failures))
        return 1
    print("all self checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eikf", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario config")
    run.add_argument("config")
    run.add_argument("--out", default="eikf_out")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--override", action="append", default=[], metavar="K=V")
    run.set_defaults(fn=cmd_run)

    emit = sub.add_parser("emit-default-config", help="print a bundled default config")
    emit.add_argument("--scenario", choices=("vio", "lio"), default="vio")
    emit.set_defaults(fn=cmd_emit_default_config)

    bu = sub.add_parser("bench-update", help="update-step timing vs batch size")
    bu.add_argument("--n-list", default="1000,10000,100000")
    bu.add_argument("--sensor", choices=("camera", "lidar"), default="camera")
    bu.add_argument("--reps", type=int, default=5)
    bu.add_argument("--filters", default="eikf_c,iekf,inekf")
    bu.add_argument("--out", default=None)
    bu.set_defaults(fn=cmd_bench_update)

    bc = sub.add_parser("bench-core", help="compare predict kernel backends")
    bc.add_argument("--steps", type=int, default=2000)
    bc.set_defaults(fn=cmd_bench_core)

    st = sub.add_parser("selftest", help="run the fast property checks")
    st.set_defaults(fn=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
