"""Command line: generate, train, eval, sweep.

Exit codes: 0 success, 2 configuration/usage error, 3 runtime error.
Set XPCL_LOG=error|info|debug to control console logging.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import encoder as enc
from .config import ABLATIONS, RunConfig
from .data import SynthConfig, generate_synthetic, load_features, save_csv, save_xpcl
from .errors import InvalidConfig, PCLMPError
from .trainer import EpochReport, TrainResult, TrainState, evaluate, load_data, train, write_outputs

log = logging.getLogger("pclmp")

EXIT_CONFIG = 2
EXIT_RUNTIME = 3
SWEEP_PARAMS = {"lambda": ("lam", float), "k": ("k", int)}


def setup_logging(out_dir=None) -> None:
    level = getattr(logging, os.environ.get("XPCL_LOG", "info").upper(), logging.INFO)
    root = logging.getLogger()
    root.setLevel(logging.DEBUG)
    for h in list(root.handlers):
        root.removeHandler(h)
        h.close()
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(level)
    console.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    root.addHandler(console)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(Path(out_dir) / "run.log", mode="w")
        fh.setLevel(level)
        fh.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
        root.addHandler(fh)


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "data", None):
        cfg = cfg.replace(synth=None, input_path=str(args.data))
    if getattr(args, "ablate", None):
        cfg = cfg.with_ablation(args.ablate)
    if getattr(args, "epochs", None) is not None:
        cfg = cfg.replace(epochs=args.epochs)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg.validate()


def cmd_generate(args) -> int:
    cfg = SynthConfig(n_identities=args.identities, d_in=args.dim, samples_per_id_per_modality=args.samples,
                      intra_id_spread=args.spread, modality_shift=args.shift,
                      noise_fraction=args.noise_fraction, seed=args.seed)
    fs = generate_synthetic(cfg)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_xpcl(out, fs)
    save_csv(out.with_suffix(".csv"), fs)
    log.info("wrote %d records to %s (+ %s)", len(fs), out, out.with_suffix(".csv").name)
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    setup_logging(args.out)
    resume = enc.load_checkpoint(args.resume) if args.resume else None
    result = train(cfg, args.out, resume=resume)
    f = result.final
    log.info("finished epoch %d: map=%s ari_all=%s", f.epoch, f.map, f.ari_all)
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    setup_logging(args.out)
    data = load_features(args.data) if args.data else load_data(cfg)
    ckpt = enc.load_checkpoint(args.checkpoint)
    state = TrainState.from_checkpoint(ckpt)
    report, match, emb = evaluate(state, data, cfg, ckpt.epoch)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_outputs(TrainResult(state, [report], match, emb), data, out)
    print(json.dumps(asdict(report), indent=2))
    return 0


def _sweep_one(job):
    cfg_dict, out = job
    cfg = RunConfig.from_dict(cfg_dict)
    return asdict(train(cfg, out).final)


def parse_values(param: str, raw: str):
    kind = SWEEP_PARAMS[param][1]
    items = [v for v in (s.strip() for s in raw.split(",")) if v]
    if not items:
        raise InvalidConfig("values: at least one value is required")
    try:
        return [kind(v) for v in items]
    except ValueError:
        raise InvalidConfig(f"values: cannot parse {raw!r} as {kind.__name__}") from None


def cmd_sweep(args) -> int:
    base = resolve_config(args)
    values = parse_values(args.param, args.values)
    field = SWEEP_PARAMS[args.param][0]
    configs = [base.replace(**{field: v}) for v in values]  # validates every value up front
    out = Path(args.out)
    setup_logging(out)
    jobs = [(c.to_dict(), str(out / f"{args.param}_{v}")) for c, v in zip(configs, values)]
    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            finals = list(pool.map(_sweep_one, jobs))
    else:
        finals = [_sweep_one(j) for j in jobs]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([args.param] + EpochReport.columns())
        for v, f in zip(values, finals):
            w.writerow([v] + ["" if x is None else repr(x) for x in f.values()])
    log.info("sweep over %s finished: %d runs", args.param, len(values))
    return 0


class UsageParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = UsageParser(prog="pclmp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=UsageParser)

    g = sub.add_parser("generate", help="write a synthetic two-modality dataset")
    g.add_argument("-o", "--output", required=True, help="xpcl file; a .csv sidecar is written next to it")
    g.add_argument("--identities", type=int, default=50)
    g.add_argument("--dim", type=int, default=32)
    g.add_argument("--samples", type=int, default=16, help="samples per identity per modality")
    g.add_argument("--spread", type=float, default=0.05)
    g.add_argument("--shift", type=float, default=0.5)
    g.add_argument("--noise-fraction", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=7)
    g.set_defaults(func=cmd_generate)

    def run_args(sp):
        sp.add_argument("--config", help="run config JSON")
        sp.add_argument("--data", help="feature file (xpcl or csv) instead of the synthetic config")
        sp.add_argument("--ablate", choices=sorted(ABLATIONS))
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default="run", help="output directory")

    t = sub.add_parser("train", help="train and write metrics, report, checkpoint and embeddings")
    run_args(t)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    run_args(e)
    e.add_argument("--checkpoint", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="one training run per parameter value")
    run_args(s)
    s.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    s.add_argument("--values", required=True, help="comma separated")
    s.add_argument("--parallel", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    try:
        return args.func(args)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PCLMPError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
