"""Command-line pipeline: generate-data, train, infer, evaluate, compare, binarize.

Every subcommand is deterministic given --seed; all outputs of one stage
are directly consumable by the next.  Failures print one machine-readable
ERROR line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import baselines, dataio, evaluation, gnn
from .core import IsingModel
from .sampler import generate_training_ensemble


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--config", default=None, help="run config JSON")
    parser.add_argument("--out-dir", default=".", help="output directory")


def _load_config(args) -> dataio.RunConfig:
    config = dataio.load_run_config(args.config) if args.config else dataio.RunConfig()
    if args.seed is not None:
        config.seed = args.seed
    return config


def cmd_generate_data(args) -> int:
    config = _load_config(args)
    spec = config.ensemble_spec()
    pairs = generate_training_ensemble(spec, seed=config.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    manifest = {"seed": config.seed, "pairs": []}
    for k, (model, batch) in enumerate(pairs):
        model_file = f"model_{k:04d}.json"
        sample_file = f"samples_{k:04d}.txt"
        dataio.save_model(model, os.path.join(args.out_dir, model_file))
        dataio.save_batch(batch, os.path.join(args.out_dir, sample_file))
        manifest["pairs"].append({
            "model": model_file,
            "samples": sample_file,
            "converged": batch.converged,
        })
    with open(os.path.join(args.out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    with open(os.path.join(args.data_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    dataset = []
    for entry in manifest["pairs"]:
        model = dataio.load_model(os.path.join(args.data_dir, entry["model"]))
        batch = dataio.load_batch(os.path.join(args.data_dir, entry["samples"]))
        dataset.append((model, batch))
    os.makedirs(args.out_dir, exist_ok=True)
    train_config = config.train_config(
        log_path=os.path.join(args.out_dir, "training_log.csv"))
    params = gnn.train(dataset, train_config)
    gnn.save_checkpoint(params, args.out)
    return 0


def cmd_infer(args) -> int:
    params = gnn.load_checkpoint(args.checkpoint)
    batch = dataio.load_batch(args.samples)
    model = gnn.infer(params, batch, beta_assumed=args.beta)
    dataio.save_model(model, args.out)
    return 0


def _evaluate_pair(pred: IsingModel, truth, config: dataio.RunConfig,
                   out_dir: str, prefix: str = ""):
    eval_opts = config.eval
    report = evaluation.evaluate(
        pred, truth,
        num_strings=eval_opts.get("num_strings", 2000),
        num_moment_samples=eval_opts.get("num_moment_samples", 5000),
        seed=config.seed,
        mc=config.mc_config(),
    )
    report.save(os.path.join(out_dir, f"{prefix}report.json"))
    pairs, _ = evaluation.boltzmann_scatter(
        pred, truth, eval_opts.get("num_strings", 2000), seed=config.seed)
    evaluation.write_scatter_csv(os.path.join(out_dir, f"{prefix}scatter.csv"), pairs)
    return report


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    pred = dataio.load_model(args.pred)
    if args.truth:
        truth = dataio.load_model(args.truth)
    elif args.samples:
        truth = dataio.load_batch(args.samples)
    else:
        raise ValueError("evaluate needs --truth or --samples")
    os.makedirs(args.out_dir, exist_ok=True)
    _evaluate_pair(pred, truth, config, args.out_dir)
    return 0


def cmd_compare(args) -> int:
    config = _load_config(args)
    pred = dataio.load_model(args.pred)
    truth = dataio.load_model(args.truth)
    mat = baselines.import_external_matrix(args.external)
    if mat.shape[0] != truth.n:
        raise ValueError(f"external matrix is {mat.shape[0]}x{mat.shape[0]}, "
                         f"truth has n = {truth.n}")
    u = 0.5 * (mat + mat.T)
    np.fill_diagonal(u, 0.0)
    external = IsingModel(n=truth.n, h=np.zeros(truth.n), u=u, beta=1.0,
                          meta={"estimator": "external", "path": args.external})
    os.makedirs(args.out_dir, exist_ok=True)
    ours = _evaluate_pair(pred, truth, config, args.out_dir, prefix="pred_")
    theirs = _evaluate_pair(external, truth, config, args.out_dir, prefix="external_")
    side_by_side = {
        "pred": json.loads(ours.to_json()),
        "external": json.loads(theirs.to_json()),
    }
    with open(os.path.join(args.out_dir, "comparison.json"), "w") as fh:
        json.dump(side_by_side, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


def cmd_binarize(args) -> int:
    matrix = dataio.read_expression_csv(args.input)
    batch = dataio.binarize(matrix, q=args.q)
    dataio.save_batch(batch, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isingnet",
        description="Inverse Ising inference pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="ensemble spec -> model+sample files")
    _add_common(p)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="dataset dir -> network checkpoint")
    _add_common(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="checkpoint + samples -> model file")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="pred vs truth model or samples -> report")
    _add_common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--samples", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="pred + external matrix vs truth")
    _add_common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--external", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("binarize", help="expression CSV -> sample file")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--q", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_binarize)

    return parser


def cli_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.func(args)
    except Exception as exc:  # one machine-readable line, nonzero exit
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(f"ERROR {json.dumps(error, sort_keys=True)}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
