"""Batch front-end: reproducible experiments with manifests.

Every subcommand resolves its configuration (TOML/JSON config file, then
flag overrides), runs deterministically for the given seed and worker count,
writes CSV/JSON artifacts prefixed by --out, and records a manifest.  The
``rerun`` subcommand replays a manifest's embedded config; outputs are
byte-identical.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, bounds
from . import agy as agy_mod
from . import dimension as dim_mod
from . import dynamics as dyn_mod
from . import lattice as lat_mod
from . import mixing as mix_mod
from . import observables as obs_mod
from .errors import ConfigError, HorolabError
from .reporting import write_csv, write_json, write_manifest
from .rng import Stream

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


_COMMON = {
    "seed": (int, 20260809),
    "workers": (int, 1),
    "out": (str, "horolab_run"),
}

# command -> {field: (type, default)}; list fields hold floats.
_SCHEMA = {
    "sample": {"n": (int, 1000)},
    "orbit-average": {
        "observable": (str, "bulk"),
        "n": (int, 100),
        "T": (float, 10.0),
        "step": (float, 0.01),
    },
    "mixing": {
        "observable": (str, "horizontal"),
        "t_grid": (list, [1.0, 1.26, 1.58, 2.0, 2.51, 3.16, 3.98, 5.01, 6.31, 7.94]),
        "n": (int, 100000),
    },
    "variance": {
        "observable": (str, "horizontal"),
        "t_grid": (list, [1.0, 1.26, 1.58, 2.0, 2.51, 3.16, 3.98, 5.01, 6.31, 7.94]),
        "T_grid": (list, [10.0, 50.0, 250.0]),
        "n_corr": (int, 100000),
        "n_var": (int, 4096),
        "step": (float, 0.02),
        "gamma_cap": (float, 0.9),
    },
    "subdiv-check": {"n": (int, 10000), "t_grid": (list, [2.0, 10.0, 100.0])},
    "clustering-check": {
        "observable": (str, "bulk"),
        "T": (float, 10.0),
        "kappa": (float, 0.2),
        "alpha": (float, 2.0),
        "n_pairs": (int, 200),
        "step": (float, 0.01),
    },
    "cover-dim": {
        "input": (str, ""),
        "demo": (str, ""),
        "scales": (list, []),
    },
    "scan-exceptional": {
        "observable": (str, "horizontal"),
        "epsilon": (float, 0.2),
        "kappa": (float, 0.3),
        "m": (int, 16),
        "grid_n": (int, 48),
        "step": (float, 0.1),
        "scales": (list, []),
    },
    "bound": {
        "alpha": (list, [2.0]),
        "beta": (list, [3.0]),
        "gamma": (list, [0.5]),
        "kappa": (list, [0.1]),
        "xi": (list, [0.0]),
        "rho": (list, [1.0]),
        "epsilon": (list, [0.1]),
    },
    "verify-all": {"quick": (bool, True)},
}


def _parse_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v != ""]


def resolve_config(command: str, file_values: dict, overrides: dict) -> dict:
    """Merge schema defaults, config-file values, and flag overrides; validate."""
    if command not in _SCHEMA:
        raise ConfigError(f"unknown command {command!r}")
    schema = {**_COMMON, **_SCHEMA[command]}
    merged = {}
    for source in (file_values, overrides):
        for key, value in source.items():
            if value is None:
                continue
            if key not in schema:
                raise ConfigError(f"unknown config key {key!r} for {command}")
            merged[key] = value
    out = {}
    for key, (typ, default) in schema.items():
        value = merged.get(key, default)
        try:
            if typ is list:
                value = _parse_list(value)
            elif typ is bool:
                value = bool(value) if not isinstance(value, str) else value.lower() in ("1", "true", "yes")
            else:
                value = typ(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
        out[key] = value
    if not 0 <= out["seed"] < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if out["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    return out


def load_config_file(path: str) -> dict:
    text = Path(path).read_bytes()
    if path.endswith(".json"):
        return json.loads(text)
    return tomllib.loads(text.decode())


def _observable(cfg) -> obs_mod.Observable:
    name = cfg["observable"]
    if name.startswith("{"):
        return obs_mod.Observable.from_json(name)
    return obs_mod.get_preset(name)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_sample(cfg) -> list:
    samples = lat_mod.sample_haar(Stream(cfg["seed"], 0), cfg["n"])
    rows = [
        (s.stream_id, s.index, *(s.point.coords), *s.point.entries.ravel())
        for s in samples
    ]
    path = f"{cfg['out']}_samples.csv"
    write_csv(
        path,
        {"seed": cfg["seed"], "n": cfg["n"]},
        ["stream", "index", "x", "y", "theta", "a", "b", "c", "d"],
        rows,
    )
    return [path]


def cmd_orbit_average(cfg) -> list:
    f = _observable(cfg)
    samples = lat_mod.sample_haar(Stream(cfg["seed"], 0), cfg["n"])
    mats = np.stack([s.point.entries for s in samples])
    values, h, qb = dyn_mod.orbit_average_batch(f, mats, cfg["T"], cfg["step"])
    rows = [
        (cfg["seed"], *(s.point.coords), cfg["T"], values[i], qb)
        for i, s in enumerate(samples)
    ]
    path = f"{cfg['out']}_orbit_averages.csv"
    write_csv(
        path,
        {"seed": cfg["seed"], "observable": cfg["observable"], "T": cfg["T"], "step": h},
        ["seed", "x", "y", "theta", "T", "value", "error_bound"],
        rows,
    )
    return [path]


def cmd_mixing(cfg) -> list:
    f = obs_mod.normalize_zero_mean(_observable(cfg), max(cfg["n"], 10**4), Stream(cfg["seed"], 1))
    est = mix_mod.estimate_correlation(f, cfg["t_grid"], cfg["n"], Stream(cfg["seed"], 2))
    csv_path = f"{cfg['out']}_correlations.csv"
    write_csv(
        csv_path,
        {"seed": cfg["seed"], "observable": cfg["observable"], "n": cfg["n"]},
        ["t", "value", "stderr", "n"],
        [(e.t, e.value, e.stderr, e.n) for e in est],
    )
    report = {"seed": cfg["seed"], "n": cfg["n"], "fit": None}
    try:
        fit = mix_mod.fit_rate(est)
        report["fit"] = {
            "gamma_hat": fit.gamma_hat, "C_hat": fit.C_hat, "r_squared": fit.r_squared,
            "t_range": list(fit.t_range), "se_gamma": fit.se_gamma, "se_log_c": fit.se_log_c,
        }
    except HorolabError as exc:
        report["fit_error"] = str(exc)
    json_path = f"{cfg['out']}_ratefit.json"
    write_json(json_path, report)
    return [csv_path, json_path]


def cmd_variance(cfg) -> list:
    f = obs_mod.normalize_zero_mean(_observable(cfg), max(cfg["n_corr"], 10**4), Stream(cfg["seed"], 1))
    est = mix_mod.estimate_correlation(f, cfg["t_grid"], cfg["n_corr"], Stream(cfg["seed"], 2))
    fit = mix_mod.fit_rate(est)
    usable = mix_mod.majorant_rate(est, fit, cfg["gamma_cap"])
    var = mix_mod.estimate_variance(f, cfg["T_grid"], cfg["n_var"], cfg["step"], Stream(cfg["seed"], 3))
    rows = mix_mod.check_variance_bound(usable, var)
    csv_path = f"{cfg['out']}_variance.csv"
    write_csv(
        csv_path,
        {"seed": cfg["seed"], "observable": cfg["observable"], "n": cfg["n_var"]},
        ["T", "variance", "stderr", "bound", "slack"],
        [(r.T, r.variance, var.stderr[i], r.bound, r.slack) for i, r in enumerate(rows)],
    )
    json_path = f"{cfg['out']}_variance.json"
    write_json(
        json_path,
        {
            "seed": cfg["seed"],
            "fitted": {"gamma_hat": fit.gamma_hat, "C_hat": fit.C_hat, "r_squared": fit.r_squared},
            "used": {"gamma": usable.gamma_hat, "C": usable.C_hat},
            "bound_constant": mix_mod.variance_bound_constant(f.sup_norm, usable.C_hat, usable.gamma_hat),
            "rows": [{"T": r.T, "variance": r.variance, "bound": r.bound, "ok": r.ok} for r in rows],
        },
    )
    return [csv_path, json_path]


def cmd_subdiv_check(cfg) -> list:
    stream = Stream(cfg["seed"], 0)
    samples = lat_mod.sample_haar(stream, cfg["n"])
    gen = stream.generator
    vecs = []
    for s in samples:
        w = gen.normal(size=4)
        w /= np.linalg.norm(w)
        vecs.append(agy_mod.TangentVec(complex(w[0], w[1]), complex(w[2], w[3]), s.point))
    s_min = min(lat_mod.systole(s.point) for s in samples)
    cert = agy_mod.check_subdivergence(vecs, cfg["t_grid"], s_min, seed=cfg["seed"])
    path = f"{cfg['out']}_subdivergence.json"
    Path(path).write_text(cert.to_json() + "\n")
    return [path]


def cmd_clustering_check(cfg) -> list:
    f = obs_mod.normalize_zero_mean(_observable(cfg), 10**4, Stream(cfg["seed"], 1))
    gen = Stream(cfg["seed"], 2).generator
    T, kappa, alpha = cfg["T"], cfg["kappa"], cfg["alpha"]
    radius = T ** (-alpha - kappa)
    centers = dim_mod.haar_centers_in_compact(Stream(cfg["seed"], 3), cfg["n_pairs"], 0.5)
    pairs = []
    for c in centers:
        direction = gen.normal(size=3)
        direction *= gen.uniform(0, radius) / np.linalg.norm(direction)
        p = lat_mod.from_coords(*c)
        q = lat_mod.from_coords(c[0] + direction[0], c[1] + direction[1], c[2] + direction[2])
        pairs.append((p, q))
    C_K = dim_mod.empirical_subdivergence_constant(
        pairs[: min(64, len(pairs))], t_grid=np.geomspace(1.5, T, 8)
    )
    report = dim_mod.verify_clustering(f, pairs, T, kappa, alpha, C_K, cfg["step"])
    path = f"{cfg['out']}_clustering.json"
    write_json(
        path,
        {
            "seed": cfg["seed"], "T": T, "kappa": kappa, "alpha": alpha, "C_K": C_K,
            "D": report.D, "kappa_prime": dim_mod.shifted_kappa(T, kappa, report.D).kappa_prime,
            "n_pairs": report.n_pairs, "n_direct": report.n_direct,
            "n_contrapositive": report.n_contrapositive,
            "worst_direct_margin": report.worst_direct_margin,
            "worst_contra_margin": report.worst_contra_margin,
        },
    )
    return [path]


def _demo_cloud(name: str) -> tuple[np.ndarray, list]:
    if name == "cantor":
        pts = np.zeros(1)
        for _ in range(12):
            pts = np.concatenate([pts / 3.0, pts / 3.0 + 2.0 / 3.0])
        pts += 0.5 * 3.0**-12  # interval midpoints keep boxes unambiguous
        cloud = np.column_stack([np.zeros_like(pts), pts, np.zeros_like(pts)])
        return cloud, [3.0**-k for k in range(2, 8)]
    if name == "cube":
        side = (np.arange(128) + 0.5) / 128.0
        xs, ys, zs = np.meshgrid(side, side, side, indexing="ij")
        cloud = np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()])
        return cloud, [1.0 / 2**k for k in range(1, 7)]
    raise ConfigError(f"unknown demo {name!r}")


def cmd_cover_dim(cfg) -> list:
    if cfg["demo"]:
        cloud, default_scales = _demo_cloud(cfg["demo"])
    elif cfg["input"]:
        cloud, default_scales = dim_mod.read_point_cloud(cfg["input"]), []
    else:
        raise ConfigError("cover-dim needs --input or --demo")
    scales = cfg["scales"] or default_scales
    if not scales:
        raise ConfigError("cover-dim needs --scales for file input")
    est = dim_mod.box_dimension(cloud, scales)
    path = f"{cfg['out']}_boxdim.json"
    write_json(
        path,
        {"scales": list(est.scales), "counts": list(est.counts),
         "dim_hat": est.dim_hat, "r_squared": est.r_squared, "n_points": int(cloud.shape[0])},
    )
    return [path]


def _scan_grid(n: int) -> np.ndarray:
    """Aligned scan box: x in [-0.45, 0.45), y in [1.05, 1.95), theta in [0.0, 0.9)."""
    side = (np.arange(n) + 0.5) / n * 0.9
    xs, ys, zs = np.meshgrid(side - 0.45, side + 1.05, side, indexing="ij")
    return np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()])


def cmd_scan_exceptional(cfg) -> list:
    f = obs_mod.normalize_zero_mean(_observable(cfg), 10**4, Stream(cfg["seed"], 1))
    grid = _scan_grid(cfg["grid_n"])
    lac = dyn_mod.LacunaryGrid.build(cfg["epsilon"], cfg["m"])
    scales = cfg["scales"] or [0.9 / 2**k for k in range(1, 7)]
    report = dim_mod.exceptional_set_scan(
        f, grid, lac, cfg["kappa"], cfg["m"], scales, cfg["step"],
        grid_resolution=0.9 / cfg["grid_n"],
    )
    cloud_path = f"{cfg['out']}_members.hlab"
    mats = lat_mod.coords_to_matrices(grid[:, 0], grid[:, 1], grid[:, 2])
    mask, _, _ = dyn_mod.exceptional_mask_batch(f, mats, lac, cfg["kappa"], cfg["m"], cfg["step"])
    dim_mod.write_point_cloud(cloud_path, grid[mask])
    json_path = f"{cfg['out']}_scan.json"
    write_json(
        json_path,
        {
            "seed": cfg["seed"], "epsilon": cfg["epsilon"], "kappa": cfg["kappa"], "m": cfg["m"],
            "T_m": float(lac.times[cfg["m"]]), "threshold": report.threshold,
            "n_members": report.n_members, "n_grid": report.n_grid,
            "dim_hat": report.estimate.dim_hat, "r_squared": report.estimate.r_squared,
            "counts": list(report.estimate.counts), "scales": list(report.estimate.scales),
        },
    )
    return [json_path, cloud_path]


def cmd_bound(cfg) -> list:
    rows = []
    for alpha in cfg["alpha"]:
        for beta in cfg["beta"]:
            for gamma in cfg["gamma"]:
                for kappa in cfg["kappa"]:
                    for xi in cfg["xi"]:
                        for rho in cfg["rho"]:
                            for eps in cfg["epsilon"]:
                                import warnings

                                with warnings.catch_warnings():
                                    warnings.simplefilter("ignore")
                                    p = bounds.BoundParams(alpha, beta, gamma, eps, kappa, xi, rho)
                                res = bounds.evaluate_bounds(p)
                                rows.append(
                                    (alpha, beta, gamma, kappa, xi, rho, eps,
                                     res.main_bound, res.critical_eta,
                                     res.time_change_bound, res.sigma)
                                )
    if len(rows) == 1:
        print(f"{rows[0][7]:.6g}")
    else:
        for r in rows:
            print(",".join(f"{v:.6g}" for v in r))
    path = f"{cfg['out']}_bounds.csv"
    write_csv(
        path,
        {"seed": cfg["seed"]},
        ["alpha", "beta", "gamma", "kappa", "xi", "rho", "epsilon",
         "main_bound", "critical_eta", "time_change_bound", "sigma"],
        rows,
    )
    return [path]


# ---------------------------------------------------------------------------
# verify-all
# ---------------------------------------------------------------------------

def _verify_all(cfg) -> list:
    quick = cfg["quick"]
    seed = cfg["seed"]
    results = []

    def check(name, fn):
        try:
            fn()
            results.append((name, True, ""))
            print(f"PASS {name}")
        except Exception as exc:  # noqa: BLE001 - report and continue
            results.append((name, False, str(exc)))
            print(f"FAIL {name}: {exc}")

    def bounds_exact():
        p = bounds.BoundParams(2.0, 3.0, 0.5, kappa=0.1)
        assert abs(bounds.main_bound(p) - 2.75) < 1e-12
        assert abs(bounds.teichmuller_bound(3.0, 0.5) - 2.75) < 1e-12
        assert abs(bounds.time_change_bound(bounds.BoundParams(2, 3, 0.5, rho=4.0)) - 2.875) < 1e-12
        assert abs(bounds.critical_eta(p) - 6.0 / 2.1) < 1e-9
        assert bounds.summability_flips_at_critical(p)

    def haar_marginal():
        n = 10**5 if quick else 10**6
        _, y, _ = lat_mod.sample_haar_coords(Stream(seed, 10).generator, n)
        target = 3.0 / (2.0 * math.pi)
        tol = 4.0 * math.sqrt(target * (1 - target) / n)
        assert abs(float(np.mean(y > 2.0)) - target) < tol

    def subdivergence():
        sub_cfg = {"seed": seed, "n": 500 if quick else 10000,
                   "t_grid": [2.0, 10.0], "out": cfg["out"] + "_v"}
        cmd_subdiv_check(resolve_config("subdiv-check", {}, sub_cfg))

    def elementary():
        phis = np.linspace(0, 2 * math.pi, 512, endpoint=False)
        ts = np.arange(-100.0, 100.0, 1.0 if quick else 0.01)
        up, low = agy_mod.elementary_shear_bounds(
            np.cos(phis)[:, None], np.sin(phis)[:, None], ts[None, :]
        )
        assert up.all() and low.all()

    def gap():
        f = obs_mod.get_preset("bulk")
        gen = Stream(seed, 11).generator
        samples = lat_mod.sample_haar(Stream(seed, 12), 20 if quick else 100)
        for s in samples:
            T = float(gen.uniform(2.0, 30.0))
            eps = float(gen.uniform(0.01, 0.5))
            dyn_mod.lacunary_gap_check(f, s.point, T, eps, step=T / 200.0)

    def chebyshev():
        f = obs_mod.normalize_zero_mean(obs_mod.get_preset("bulk"), 10**4, Stream(seed, 13))
        mix_mod.chebyshev_report(f, 0.3, 0.3, [4, 8], 256 if quick else 2048, 0.05, Stream(seed, 14))

    def packing_duality():
        gen = Stream(seed, 15).generator
        cloud = gen.uniform(0, 1, size=(300, 2))
        delta = 0.1
        p_big = dim_mod.greedy_packing(cloud, 2 * delta).count
        p_small = dim_mod.greedy_packing(cloud, delta).count
        assert p_big <= p_small

    def clustering_d():
        assert abs(dim_mod.clustering_constant(1.0, 2.0, 1.0, 2.0) - 11.0 / 3.0) < 1e-12

    def box_dim():
        cloud, scales = _demo_cloud("cantor")
        est = dim_mod.box_dimension(cloud, scales)
        assert abs(est.dim_hat - math.log(2) / math.log(3)) < 0.05

    def determinism():
        with tempfile.TemporaryDirectory() as tmp:
            paths = []
            for tag in ("a", "b"):
                sub = resolve_config("sample", {}, {"seed": seed, "n": 200, "out": f"{tmp}/{tag}"})
                paths.append(Path(cmd_sample(sub)[0]).read_bytes())
            assert paths[0] == paths[1]

    check("bound-formulas", bounds_exact)
    check("haar-marginal", haar_marginal)
    check("subdivergence", subdivergence)
    check("elementary-inequality", elementary)
    check("lacunary-gap", gap)
    check("chebyshev-mass", chebyshev)
    check("packing-duality", packing_duality)
    check("clustering-constant", clustering_d)
    check("box-dimension", box_dim)
    check("determinism", determinism)

    path = f"{cfg['out']}_verify.json"
    write_json(path, {"results": [{"name": n, "ok": ok, "error": e} for n, ok, e in results]})
    if not all(ok for _, ok, _ in results):
        raise HorolabError("verification suite failed")
    return [path]


_COMMANDS = {
    "sample": cmd_sample,
    "orbit-average": cmd_orbit_average,
    "mixing": cmd_mixing,
    "variance": cmd_variance,
    "subdiv-check": cmd_subdiv_check,
    "clustering-check": cmd_clustering_check,
    "cover-dim": cmd_cover_dim,
    "scan-exceptional": cmd_scan_exceptional,
    "bound": cmd_bound,
    "verify-all": _verify_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="horolab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in _SCHEMA.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="TOML or JSON config file")
        for key, (typ, default) in {**_COMMON, **schema}.items():
            flag = "--" + key.replace("_", "-")
            if typ is list:
                p.add_argument(flag, dest=key, default=None, help="comma-separated floats")
            elif typ is bool:
                p.add_argument(flag, dest=key, action="store_true", default=None)
            else:
                p.add_argument(flag, dest=key, type=typ, default=None)
    rerun = sub.add_parser("rerun")
    rerun.add_argument("manifest")
    return parser


def run(command: str, cfg: dict) -> int:
    outputs = _COMMANDS[command](cfg)
    write_manifest(f"{cfg['out']}_manifest.json", command, cfg, cfg["seed"], cfg["workers"], outputs)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rerun":
            manifest = json.loads(Path(args.manifest).read_text())
            cfg = resolve_config(manifest["command"], manifest["config"], {})
            return run(manifest["command"], cfg)
        file_values = load_config_file(args.config) if args.config else {}
        overrides = {
            k: v
            for k, v in vars(args).items()
            if k not in ("command", "config") and v is not None
        }
        cfg = resolve_config(args.command, file_values, overrides)
        return run(args.command, cfg)
    except HorolabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
