"""Command-line interface: ``flowembed <command> [options]``.

Commands: generate, build-graph, embed, diffuse, eval, plot.

Settings come from three layers, highest first: command-line flags, a JSON
file passed with ``--config``, built-in defaults.  Every command writes the
resolved settings to ``run.json`` in its output directory; that file can be
passed back through ``--config`` to repeat the run.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .data import GeneratorSpec, NoiseSpec, SchemaError, add_noise, generate_dataset, load_csv, save_csv
from .diffusion import propagate, shannon_entropy
from .metrics import (MetricReport, default_start, diffusion_entropy_comparison, evaluate_metrics,
                      pca_baseline, strand_separability)
from .pipeline import GraphConfig, build_graph
from .plotting import PlotSpec, render_svg
from .store import EMBEDDING_CSV, load_result, save_result
from .trainer import TrainerConfig, train

logger = logging.getLogger("flowembed")

DEFAULTS = {
    "seed": 0,
    "generate": {"shape": "circle", "n": 500, "speed": 1.0, "params": {}, "noise": 0.0, "noise_seed": None},
    "graph": asdict(GraphConfig()),
    "trainer": {k: v for k, v in TrainerConfig().to_dict().items() if k != "seed"},
    "diffuse": {"start": None, "t": [1, 10, 20, 40]},
    "eval": {"entropy_t": [10, 20, 40]},
    "plot": asdict(PlotSpec()),
}


class UsageError(Exception):
    """Bad configuration or missing precondition (exit status 2)."""


# --- configuration ------------------------------------------------------------

def _check_keys(cfg, reference, where=""):
    for key, value in cfg.items():
        path = f"{where}.{key}" if where else key
        if key not in reference:
            raise UsageError(f"config error: unknown field '{path}'")
        if isinstance(reference[key], dict) and key != "params":
            if not isinstance(value, dict):
                raise UsageError(f"config error: '{path}' must be an object")
            _check_keys(value, reference[key], path)


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "params":
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config_file(path):
    """Read a JSON config; a ``run.json`` is accepted and its resolved config used."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        blob = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config error: {path} is not valid JSON ({exc})") from None
    inputs = {}
    if "command" in blob and "config" in blob:
        inputs = blob.get("inputs", {})
        blob = blob["config"]
    if not isinstance(blob, dict):
        raise UsageError("config error: top level must be an object")
    _check_keys(blob, DEFAULTS)
    return blob, inputs


def resolve_config(args) -> tuple[dict, dict]:
    cfg = copy.deepcopy(DEFAULTS)
    inputs = {}
    if getattr(args, "config", None):
        file_cfg, inputs = load_config_file(args.config)
        cfg = _merge(cfg, file_cfg)
    for dest, value in vars(args).items():
        if value is None or "." not in dest:
            continue
        section, key = dest.split(".", 1)
        cfg[section][key] = value
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg, inputs


def _build(factory, section, fields):
    try:
        return factory(**fields)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config error [{section}]: {exc}") from None


def graph_config(cfg) -> GraphConfig:
    return _build(GraphConfig, "graph", cfg["graph"])


def trainer_config(cfg) -> TrainerConfig:
    fields = dict(cfg["trainer"])
    fields["seed"] = cfg["seed"]
    return _build(TrainerConfig, "trainer", fields)


def _input_path(args, inputs, key="in"):
    value = getattr(args, key, None) or inputs.get(key)
    if value is None:
        raise UsageError(f"missing required --{key}")
    path = Path(value)
    if not path.exists():
        raise UsageError(f"input not found: {path}")
    return path


def _load_dataset(path):
    try:
        return load_csv(path)
    except SchemaError as exc:
        raise UsageError(f"invalid dataset {path}: {exc}") from None


def write_run_json(out: Path, command: str, cfg: dict, inputs: dict, outputs: list) -> None:
    blob = {
        "command": command,
        "version": __version__,
        "config": cfg,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": sorted(str(o) for o in outputs),
    }
    (out / "run.json").write_text(json.dumps(blob, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(args, default=None) -> Path:
    out = Path(args.out) if args.out else default
    if out is None:
        raise UsageError("missing required --out")
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- commands -------------------------------------------------------------------

def cmd_generate(args, cfg, inputs):
    g = cfg["generate"]
    spec = _build(GeneratorSpec, "generate",
                  dict(shape=g["shape"], n_points=g["n"], speed=g["speed"], shape_params=g["params"], seed=cfg["seed"]))
    ds = generate_dataset(spec)
    noise_seed = cfg["seed"] if g["noise_seed"] is None else g["noise_seed"]
    ds = add_noise(ds, _build(NoiseSpec, "generate", dict(sigma=g["noise"], seed=noise_seed)))
    out = _out_dir(args)
    save_csv(ds, out / "dataset.csv")
    write_run_json(out, "generate", cfg, {}, ["dataset.csv"])
    print(f"generate: wrote {ds.n_points} {spec.shape} points (n={ds.dim}) to {out / 'dataset.csv'}")


def _write_matrix(path, matrix, header=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow(header)
        for row in matrix:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row])


def cmd_build_graph(args, cfg, inputs):
    src = _input_path(args, inputs)
    ds = _load_dataset(src)
    graph = build_graph(ds, graph_config(cfg))
    out = _out_dir(args)
    _write_matrix(out / "affinity.csv", graph.affinity.weights)
    k = graph.neighborhoods.k
    _write_matrix(out / "neighbors.csv",
                  [[i, *map(int, row)] for i, row in enumerate(graph.neighborhoods.neighbors)],
                  ["id"] + [f"n{j}" for j in range(k)])
    m = graph.dmap.coords.shape[1]
    _write_matrix(out / "diffusion_coords.csv", graph.dmap.coords, [f"phi{j}" for j in range(m)])
    (out / "graph.json").write_text(json.dumps(graph.summary(), indent=2) + "\n", encoding="utf-8")
    outputs = ["affinity.csv", "neighbors.csv", "diffusion_coords.csv", "graph.json"]
    write_run_json(out, "build-graph", cfg, {"in": src.resolve()}, outputs)
    print(f"build-graph: N={ds.n_points} sigma={graph.params.sigma:.6g} beta={graph.params.beta:g} "
          f"k={k} m={m} -> {out}")


def cmd_embed(args, cfg, inputs):
    src = _input_path(args, inputs)
    ds = _load_dataset(src)
    tcfg = trainer_config(cfg)
    gcfg = graph_config(cfg)
    if tcfg.k > gcfg.k:
        raise UsageError(f"config error: trainer.k={tcfg.k} exceeds graph.k={gcfg.k}")
    graph = build_graph(ds, gcfg)
    result = train(ds, graph.affinity, graph.neighborhoods, graph.D_manifold, tcfg,
                   laplacian_sigma=graph.params.sigma)
    result.metadata["graph"] = graph.summary()
    out = _out_dir(args)
    save_result(result, out)
    outputs = [EMBEDDING_CSV, "embedding.json", "xi.json", "psi.json"]
    write_run_json(out, "embed", cfg, {"in": src.resolve()}, outputs)
    curves = result.loss_curves["train"]["total"]
    print(f"embed: N={ds.n_points} epochs={len(curves)} total loss "
          f"{result.loss_curves['initial']['train']['total']:.4g} -> {curves[-1]:.4g}; wrote {out / EMBEDDING_CSV}")


def _layout(ds):
    if ds.dim == 2:
        return ds.positions
    return pca_baseline(ds)[0]


def cmd_diffuse(args, cfg, inputs):
    src = _input_path(args, inputs)
    ds = _load_dataset(src)
    graph = build_graph(ds, graph_config(cfg))
    start = cfg["diffuse"]["start"]
    start = default_start(ds) if start is None else int(start)
    if not 0 <= start < ds.n_points:
        raise UsageError(f"config error [diffuse]: start index {start} out of range")
    out = _out_dir(args)
    layout = _layout(ds)
    outputs, entropies = [], {}
    for t in cfg["diffuse"]["t"]:
        p = propagate(graph.P_d, start, int(t))
        name = f"diffusion_t{int(t)}"
        _write_matrix(out / f"{name}.csv", [[i, float(v)] for i, v in enumerate(p)], ["index", "probability"])
        render_svg(layout, PlotSpec(mode="diffusion_heat", color_by="none"), out / f"{name}.svg",
                   values=p, title=f"directed diffusion from {start}, t={int(t)}")
        entropies[int(t)] = shannon_entropy(p)
        outputs += [f"{name}.csv", f"{name}.svg"]
    (out / "diffuse.json").write_text(
        json.dumps({"start": start, "entropy": {str(t): e for t, e in entropies.items()}}, indent=2) + "\n",
        encoding="utf-8")
    write_run_json(out, "diffuse", cfg, {"in": src.resolve()}, outputs + ["diffuse.json"])
    print(f"diffuse: start={start} t={list(entropies)} entropies="
          f"{[round(e, 4) for e in entropies.values()]} -> {out}")


def _run_dir(args) -> Path:
    run = Path(args.run)
    missing = [run / name for name in (EMBEDDING_CSV, "embedding.json", "xi.json", "psi.json")
               if not (run / name).is_file()]
    if missing:
        raise UsageError(f"missing file: {missing[0]} (run 'embed' first)")
    return run


def _run_inputs(run: Path):
    path = run / "run.json"
    if not path.is_file():
        return {}, {}
    blob = json.loads(path.read_text(encoding="utf-8"))
    return blob.get("config", {}), blob.get("inputs", {})


def cmd_eval(args, cfg, inputs):
    run = _run_dir(args)
    run_cfg, run_inputs = _run_inputs(run)
    if "graph" in run_cfg and not args.config:
        cfg["graph"] = _merge(cfg["graph"], run_cfg["graph"])
    src = _input_path(args, {**run_inputs, **inputs})
    ds = _load_dataset(src)
    result = load_result(run)
    if result.n_points != ds.n_points:
        raise UsageError(f"dataset {src} has {ds.n_points} points but the embedding has {result.n_points}")
    graph = build_graph(ds, graph_config(cfg))
    report = evaluate_metrics(result, graph.D_manifold, graph.neighborhoods)
    if ds.labels is not None and np.unique(ds.labels).size >= 2:
        plain, vel, meta = strand_separability(result, ds.labels, return_metadata=True)
        report.strand_accuracy_plain, report.strand_accuracy_velocity = plain, vel
        report.preprocessing = meta
    report.diffusion_entropies = diffusion_entropy_comparison(ds, graph.params, cfg["eval"]["entropy_t"])
    out = _out_dir(args, run / "eval")
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    write_run_json(out, "eval", cfg, {"in": src.resolve(), "run": run.resolve()}, ["metrics.json"])
    print(report.table())


def cmd_plot(args, cfg, inputs):
    run = _run_dir(args)
    spec = _build(PlotSpec, "plot", cfg["plot"])
    result = load_result(run)
    out = _out_dir(args, run / "plot")
    name = f"plot_{spec.mode}.svg"
    if spec.mode == "diffusion_heat":
        raise UsageError("config error [plot]: diffusion_heat plots are produced by 'diffuse'")
    render_svg(result, spec, out / name, title=f"embedding ({spec.mode})")
    write_run_json(out, "plot", cfg, {"run": run.resolve()}, [name])
    print(f"plot: wrote {out / name}")


COMMANDS = {
    "generate": cmd_generate,
    "build-graph": cmd_build_graph,
    "embed": cmd_embed,
    "diffuse": cmd_diffuse,
    "eval": cmd_eval,
    "plot": cmd_plot,
}


# --- argument parsing ----------------------------------------------------------

def _graph_flags(p):
    p.add_argument("--beta", dest="graph.beta", type=float, help="flow penalty weight (default 1.0)")
    p.add_argument("--sigma", dest="graph.sigma", type=float, help="kernel bandwidth (default: median heuristic)")
    p.add_argument("--k", dest="graph.k", type=int, help="flow-neighbourhood size (default 10)")
    p.add_argument("--sigma-k", dest="graph.sigma_k", type=int, help="neighbour rank for the median heuristic")
    p.add_argument("--m", dest="graph.m", type=int, help="number of diffusion eigenpairs (default 25)")
    p.add_argument("--t", dest="graph.t", type=int, help="diffusion time for the distance target (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowembed", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"flowembed {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    def common(p, needs_in=True):
        p.add_argument("--config", help="JSON config file or a previous run.json")
        p.add_argument("--seed", type=int, help="global seed (default 0)")
        p.add_argument("--out", help="output directory")
        if needs_in:
            p.add_argument("--in", dest="in", help="input dataset CSV")

    p = sub.add_parser("generate", help="write a synthetic dataset")
    common(p, needs_in=False)
    p.add_argument("--shape", dest="generate.shape", choices=["circle", "branch", "spiral", "double_helix"])
    p.add_argument("--n", dest="generate.n", type=int, help="number of points")
    p.add_argument("--speed", dest="generate.speed", type=float)
    p.add_argument("--noise", dest="generate.noise", type=float, help="std. dev. of position noise")
    p.add_argument("--noise-seed", dest="generate.noise_seed", type=int)
    p.add_argument("--param", action="append", default=None, metavar="KEY=VALUE",
                   help="shape parameter override (repeatable)")

    p = sub.add_parser("build-graph", help="affinity matrix, neighbourhoods and diffusion coordinates")
    common(p)
    _graph_flags(p)

    p = sub.add_parser("embed", help="train the embedder and vector field")
    common(p)
    _graph_flags(p)
    p.add_argument("--epochs", dest="trainer.epochs", type=int)
    p.add_argument("--lr", dest="trainer.lr", type=float)
    p.add_argument("--n-random", dest="trainer.n_random", type=int)
    p.add_argument("--batch-k", dest="trainer.k", type=int, help="flow neighbours per batch")
    p.add_argument("--weight-flow", dest="trainer.weight_flow", type=float)
    p.add_argument("--weight-dist", dest="trainer.weight_dist", type=float)
    p.add_argument("--weight-smooth", dest="trainer.weight_smooth", type=float)
    p.add_argument("--test-fraction", dest="trainer.test_fraction", type=float)
    p.add_argument("--early-stopping", dest="trainer.early_stopping", action="store_const", const=True)

    p = sub.add_parser("diffuse", help="propagate directed diffusion from one point")
    common(p)
    _graph_flags(p)
    p.add_argument("--start", dest="diffuse.start", type=int, help="start index (default: start of flow)")
    p.add_argument("--steps", dest="diffuse.t", type=int, nargs="+", help="diffusion times")

    p = sub.add_parser("eval", help="metrics for a finished embed run")
    common(p)
    p.add_argument("--run", required=True, help="embed output directory")
    p.add_argument("--entropy-t", dest="eval.entropy_t", type=int, nargs="+")

    p = sub.add_parser("plot", help="SVG of a finished embed run")
    common(p, needs_in=False)
    p.add_argument("--run", required=True, help="embed output directory")
    p.add_argument("--mode", dest="plot.mode", choices=["scatter", "quiver", "streamlines"])
    p.add_argument("--color-by", dest="plot.color_by", choices=["label", "pseudotime", "none"])
    p.add_argument("--grid", dest="plot.grid", type=int)
    p.add_argument("--width", dest="plot.width", type=int)
    p.add_argument("--height", dest="plot.height", type=int)
    return parser


def _apply_params(args, cfg):
    params = getattr(args, "param", None)
    if not params:
        return
    extra = dict(cfg["generate"]["params"])
    for item in params:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"config error: --param expects KEY=VALUE, got {item!r}")
        try:
            extra[key] = float(value)
        except ValueError:
            raise UsageError(f"config error: --param {key} needs a number, got {value!r}") from None
    cfg["generate"]["params"] = extra


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, inputs = resolve_config(args)
        _apply_params(args, cfg)
        COMMANDS[args.command](args, cfg, inputs)
    except UsageError as exc:
        print(f"flowembed {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"flowembed {args.command}: error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
    return 0


def main(argv=None):
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
