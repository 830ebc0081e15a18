"""Command line entry point.

Every subcommand takes ``--config`` (a JSON object, or ``key = value`` lines
with dotted keys for nesting), ``--seed`` and ``--out``. Exit codes: 0 on
success, 2 on a configuration error, 3 on a runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import expharness as xh
from ._seeding import derive_seed
from .datasets import SyntheticSpec, generate_synthetic, load_idx
from .dibs import DEFAULT_MAX_NODES, consistency_report, dibs_bounds
from .noise import NoiseSpec
from .pairgraph import ScenarioConfig, build_scenario, graph_of, load_pairs, save_pairs
from .snn import LossSpec, MlpConfig, TrainConfig, train

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(ValueError):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text: str) -> dict:
    """JSON object, or one ``key = value`` per line (``#`` starts a comment)."""
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return doc
    doc: dict = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {n}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"config line {n}: {key!r} nests under a scalar")
        node[parts[-1]] = _parse_value(value)
    return doc


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        return parse_config_text(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _noise_from(d, default: NoiseSpec = NoiseSpec()) -> NoiseSpec:
    try:
        return _noise_spec(d, default)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"noise: {exc}") from exc


def _noise_spec(d, default: NoiseSpec) -> NoiseSpec:
    if isinstance(d, NoiseSpec):
        return d
    d = dict(d)
    unknown = set(d) - {"kind", "rate", "effective", "seed"}
    if unknown:
        raise ConfigError(f"unknown noise keys: {sorted(unknown)}")
    if "effective" in d:
        if "rate" in d:
            raise ConfigError("give either noise.rate or noise.effective, not both")
        return NoiseSpec.matched(d.get("kind", default.kind), float(d["effective"]),
                                 d.get("seed", 0))
    return NoiseSpec(d.get("kind", default.kind), float(d.get("rate", default.rate)),
                     d.get("seed", default.seed))


def build(cls_default, d: dict, where: str = "config"):
    """Overlay a config dict on a dataclass default, recursing into nested specs."""
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls_default)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    changes = {}
    for key, value in d.items():
        current = getattr(cls_default, key)
        if isinstance(current, NoiseSpec):
            changes[key] = _noise_from(value, current)
        elif dataclasses.is_dataclass(current):
            changes[key] = build(current, value, f"{where}.{key}")
        elif isinstance(current, tuple):
            if not isinstance(value, list):
                raise ConfigError(f"{where}.{key} must be a list")
            changes[key] = tuple(value)
        else:
            changes[key] = value
    try:
        return dataclasses.replace(cls_default, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _dump(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_dataset(cfg: dict, seed: int):
    if "idx" in cfg:
        idx = cfg["idx"]
        return load_idx(idx["images"], idx["labels"])
    spec = build(SyntheticSpec(), cfg.get("data", {}), "data")
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(f"data: {exc}") from exc
    return generate_synthetic(dataclasses.replace(spec, seed=seed))


# --- subcommands -------------------------------------------------------------

def cmd_build_pairs(cfg: dict, seed: int, out: Path):
    allowed = {"data", "idx", "scenario", "noise"}
    if set(cfg) - allowed:
        raise ConfigError(f"unknown keys: {sorted(set(cfg) - allowed)}")
    ds = _load_dataset(cfg, seed)
    scen = build(ScenarioConfig(), cfg.get("scenario", {}), "scenario")
    noise = _noise_from(cfg.get("noise", {}))
    scen = dataclasses.replace(scen, seed=seed)
    noise = dataclasses.replace(noise, seed=seed)
    try:
        scen.validate(ds.n_c)
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc
    sets = build_scenario(ds, scen, noise)
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    for i, pd in enumerate(sets):
        save_pairs(pd, out / f"run_{i}.csv", {"seed": seed})
        g = graph_of(pd)
        runs.append({"index": i, "n_pairs": len(pd), "n_positive": pd.n_positive,
                     "n_nodes": g.n_nodes, "density": g.density,
                     "noisy_fraction": float(np.mean(pd.noise_mask())) if len(pd) else 0.0})
    _dump(out / "summary.json", {"dataset": ds.name, "n_items": len(ds), "n_c": ds.n_c,
                                 "scenario": scen.to_dict(), "noise": noise.to_dict(),
                                 "runs": runs})


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def cmd_bounds(cfg: dict, seed: int, out: Path | None):
    allowed = {"P", "n_c", "N_c"}
    if set(cfg) - allowed:
        raise ConfigError(f"unknown keys: {sorted(set(cfg) - allowed)}")
    cols = ["P", "n_c", "N_c", "e_sim", "e_diff", "lower", "upper"]
    lines = [",".join(cols)]
    for P in _as_list(cfg.get("P", [0.05, 0.1, 0.2])):
        for n_c in _as_list(cfg.get("n_c", [2, 10])):
            for N_c in _as_list(cfg.get("N_c", [50])):
                try:
                    b = dibs_bounds(float(P), int(n_c), int(N_c))
                except (TypeError, ValueError) as exc:
                    raise ConfigError(str(exc)) from exc
                lines.append(",".join([repr(b.P), str(b.n_c), str(b.N_c)] +
                                      [repr(getattr(b, c)) for c in cols[3:]]))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "curves.csv").write_text(text)


def cmd_analyze(cfg: dict, seed: int, out: Path):
    if "pairs" not in cfg:
        raise ConfigError("analyze needs 'pairs', the path of a pair CSV")
    allowed = {"pairs", "max_nodes"}
    if set(cfg) - allowed:
        raise ConfigError(f"unknown keys: {sorted(set(cfg) - allowed)}")
    pd = load_pairs(cfg["pairs"])
    report = consistency_report(pd, int(cfg.get("max_nodes", DEFAULT_MAX_NODES)))
    out.mkdir(parents=True, exist_ok=True)
    text = report.to_json()
    (out / "summary.json").write_text(text)
    sys.stdout.write(text)


def cmd_train(cfg: dict, seed: int, out: Path):
    allowed = {"data", "idx", "scenario", "noise", "width", "output_dim", "loss", "train",
               "n_test_pairs", "dump_params"}
    if set(cfg) - allowed:
        raise ConfigError(f"unknown keys: {sorted(set(cfg) - allowed)}")
    ds = _load_dataset(cfg, derive_seed(seed, "train-data"))
    scen = build(ScenarioConfig(), cfg.get("scenario", {}), "scenario")
    scen = dataclasses.replace(scen, runs=1, seed=derive_seed(seed, "pairs"))
    noise = dataclasses.replace(_noise_from(cfg.get("noise", {})),
                                seed=derive_seed(seed, "noise"))
    loss = build(LossSpec(), cfg.get("loss", {}), "loss")
    tcfg = build(TrainConfig(eval_every=10), cfg.get("train", {}), "train")
    tcfg = dataclasses.replace(tcfg, seed=derive_seed(seed, "shuffle"))
    mlp = MlpConfig(ds.dim, int(cfg.get("width", 64)), cfg.get("output_dim"),
                    seed=derive_seed(seed, "net"))
    try:
        scen.validate(ds.n_c)
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc
    pairs = build_scenario(ds, scen, noise)[0]
    test_ds = test_pairs = None
    if "idx" not in cfg:
        spec = build(SyntheticSpec(), cfg.get("data", {}), "data")
        test_ds, test_pairs = xh.clean_test_pairs(spec, int(cfg.get("n_test_pairs", 2000)), seed)
    rec = train(ds, pairs, mlp, loss, tcfg, eval_pairs=test_pairs, eval_ds=test_ds,
                keep_params=bool(cfg.get("dump_params", False)))
    out.mkdir(parents=True, exist_ok=True)
    rec.to_csv(out / "run_0.csv")
    rec.to_csv(out / "curves.csv")
    _dump(out / "summary.json", {
        "config": rec.config, "n_noisy_pairs": int(np.sum(pairs.noise_mask())),
        "final_train_error": rec.asymptotic("train_error", xh.TAIL),
        "final_test_error": rec.asymptotic("test_error", xh.TAIL),
        "last_train_error": rec.train_error[-1], "last_test_error": rec.test_error[-1]})
    if rec.params is not None:
        rec.dump_params(out / "params.bin", out / "params.json", mlp.layer_sizes(loss))


def cmd_dd_sweep(cfg: dict, seed: int, out: Path):
    sweep = dataclasses.replace(build(xh.SweepConfig(), cfg, "config"), seed=seed)
    res = xh.dd_sweep(sweep, out)
    for row in res.rows:
        print(f"width {row['width']:>5}  train {row['median_train_error']:.4f}  "
              f"test {row['median_test_error']:.4f}")
    print(f"peak width: {res.peak()}")


def cmd_online_offline(cfg: dict, seed: int, out: Path):
    oo = dataclasses.replace(build(xh.OnlineOfflineConfig(), cfg, "config"), seed=seed)
    res = xh.online_offline(oo, out)
    for (world, kind), v in sorted(res.final_test.items()):
        print(f"{world:>7} {kind:>4}  final test error {v:.4f}")


def cmd_dibs_exp(cfg: dict, seed: int, out: Path):
    de = dataclasses.replace(build(xh.DibsExperimentConfig(), cfg, "config"), seed=seed)
    for row in xh.dibs_experiment(de, out):
        print(f"n_c={row['n_c']:>3} P={row['P']:<5} {row['method']:>6}  mean {row['mean']:.5f}"
              f" +- {row['stderr']:.5f}  bounds [{row['lower']:.5f}, {row['upper']:.5f}]"
              f"  inside={row['inside']}")


COMMANDS = {
    "build-pairs": (cmd_build_pairs, "build scenario pair sets and write them as CSV"),
    "bounds": (cmd_bounds, "print the analytic DIBS bounds as CSV"),
    "analyze": (cmd_analyze, "consistency report of a pair CSV"),
    "train": (cmd_train, "train one Siamese MLP"),
    "dd-sweep": (cmd_dd_sweep, "width sweep for double descent"),
    "online-offline": (cmd_online_offline, "online vs. offline training curves"),
    "dibs-exp": (cmd_dibs_exp, "trained/oracle DIBS error against the bounds"),
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="siamdibs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON or key=value config file")
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument("--out", help="output directory")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    fn = COMMANDS[args.command][0]
    if args.out is None and args.command != "bounds":
        args.out = "siamdibs-out"
    out = Path(args.out) if args.out is not None else None
    try:
        cfg = load_config(args.config)
        fn(cfg, args.seed, out)
    except (ConfigError, xh.ExperimentConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure maps to the runtime exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
