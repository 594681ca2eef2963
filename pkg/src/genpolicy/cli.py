"""Command-line runner: train, eval, baseline, refine, sweep."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from .checkpoint import CheckpointError, dumps, load_trainer, save_checkpoint, write_atomic
from .config import ConfigError, config_from_dict, dump_config, parse_config
from .evaluate import baseline_generate, class_batch, sample_metrics

log = logging.getLogger("genpolicy")

LAMBDAS = (0.0, 0.25, 0.5, 0.75, 1.0)


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _write_csv(path, rows):
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    write_atomic(path, buf.getvalue())


def _report(out, command, cfg, seed, summary, per_class, notes, rows=None, extra=None):
    doc = {"command": command, "seed": seed, "config": cfg.to_dict(), "metrics": summary,
           "notes": notes, "per_class": per_class}
    if extra:
        doc.update(extra)
    write_atomic(os.path.join(out, "report.json"), dumps(doc))
    _write_csv(os.path.join(out, "eval.csv"), rows if rows is not None else per_class)
    return doc


def _out_dir(args, cfg):
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    return out


# -- subcommands ---------------------------------------------------------------

def cmd_train(args):
    from .training import Trainer

    if args.ckpt:
        trainer = load_trainer(args.ckpt)
        cfg = trainer.cfg
    else:
        if not args.config:
            raise ConfigError("--config", "train needs --config or --ckpt")
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        trainer = Trainer(cfg)
    out = _out_dir(args, cfg)
    write_atomic(os.path.join(out, "config.json"), dump_config(cfg) + "\n")
    ckpt = os.path.join(out, "ckpt.json")
    trainer.run(args.iterations, log_path=os.path.join(out, "train_log.csv"), ckpt_path=ckpt)
    if trainer.stopped:
        print(f"warning: stopped early: {trainer.stopped}", file=sys.stderr)
    print(ckpt)
    return 0


def _eval_trainer(trainer, n, seed, lam=None):
    rng = np.random.default_rng(seed)
    if lam is not None:
        if not hasattr(trainer, "original"):
            raise CheckpointError("--lambda needs a checkpoint with a fidelity agent (run sweep first)")
        return trainer.evaluate(n, rng, lam=lam)
    if hasattr(trainer, "original"):
        return trainer.evaluate(n, rng, lam=1.0)
    return trainer.evaluate(n, rng)


def cmd_eval(args):
    trainer = load_trainer(args.ckpt)
    cfg = trainer.cfg
    seed = cfg.seed if args.seed is None else args.seed
    n = args.samples or cfg.eval.samples
    lam = None if args.lam is None else _floats(args.lam)[0]
    summary, rows, notes = _eval_trainer(trainer, n, seed, lam)
    out = _out_dir(args, cfg)
    _report(out, "eval", cfg, seed, summary, rows, notes, extra={"samples_per_class": n, "lambda": lam})
    print(json.dumps(summary, sort_keys=True))
    return 0


def _parse_rules(items):
    rules = {}
    for item in items or []:
        key, _, text = item.partition("=")
        if not text:
            raise ConfigError("--rule", f"expected key=rule[:C[:C2]], got {item!r}")
        parts = text.split(":")
        rules[key] = {"rule": parts[0], **({"C": float(parts[1])} if len(parts) > 1 else {}),
                      **({"C2": float(parts[2])} if len(parts) > 2 else {})}
    return rules


def cmd_baseline(args):
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    else:
        data = {}
    for key, val in (("paradigm", args.paradigm), ("T", args.T), ("seed", args.seed)):
        if val is not None:
            data[key] = val
    data.setdefault("seed", 0)
    rules = _parse_rules(args.rule)
    if rules:
        data["schedule"] = {**(data.get("schedule") or {}), **rules}
    cfg = config_from_dict(data)
    world = cfg.make_world()
    schedule = cfg.make_schedule()
    n = args.samples or cfg.eval.samples
    classes = class_batch(world, n)
    x = baseline_generate(world, schedule, cfg.T, classes, np.random.default_rng(cfg.seed))
    summary, rows, notes = sample_metrics(world, x, classes, cfg.eval.radius_multiplier)
    out = _out_dir(args, cfg)
    _report(out, "baseline", cfg, cfg.seed, summary, rows, notes,
            extra={"samples_per_class": n, "schedule": schedule.to_dict()})
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_refine(args):
    from .refine import refine_generate

    trainer = load_trainer(args.ckpt)
    cfg = trainer.cfg
    if trainer.reward_model is None:
        raise CheckpointError("refinement needs an adversarial reward model in the checkpoint")
    lookahead = args.lookahead or cfg.refine.lookahead
    if lookahead and cfg.paradigm in ("diffusion", "flow"):
        raise ConfigError("--lookahead", "refused: state transition is deterministic for ODE paradigms")
    seed = cfg.seed if args.seed is None else args.seed
    n = args.samples or cfg.eval.samples
    Ms = _ints(args.refine_m) if args.refine_m else [cfg.refine.M]
    Ks = _ints(args.refine_k) if args.refine_k else [cfg.refine.K]
    agent = trainer.agent
    partner = lam = None
    if hasattr(trainer, "original"):
        partner = trainer.original
    classes = class_batch(trainer.world, n)
    if partner is not None:
        lam = np.full(len(classes), 1.0 if args.lam is None else _floats(args.lam)[0])
    settings, first = [], None
    for M in Ms:
        for K in Ks:
            x, best, trials = refine_generate(trainer.world, agent, trainer.reward_model, cfg.T, classes,
                                              np.random.default_rng(seed), M=M, K=K,
                                              lookahead=lookahead, beta=cfg.smoothing_beta,
                                              partner=partner, lam=lam)
            summary, rows, notes = sample_metrics(trainer.world, x, classes, cfg.eval.radius_multiplier)
            settings.append({"M": M, "K": K if lookahead else 1, "mean_reward": float(best.mean()), **summary})
            if first is None:
                first = (summary, rows, notes)
    out = _out_dir(args, cfg)
    summary, rows, notes = first
    _report(out, "refine", cfg, seed, summary, rows, notes, rows=settings,
            extra={"samples_per_class": n, "settings": settings, "lookahead": lookahead})
    print(json.dumps(settings, sort_keys=True))
    return 0


def cmd_sweep(args):
    from .blend import FidelityTrainer, lambda_sweep, train_fidelity_policy

    trainer = load_trainer(args.ckpt)
    cfg = trainer.cfg
    out = _out_dir(args, cfg)
    if not isinstance(trainer, FidelityTrainer):
        trainer = train_fidelity_policy(None, trainer, iterations=args.iterations,
                                        ckpt_path=os.path.join(out, "ckpt.json"),
                                        log_path=os.path.join(out, "train_log.csv"))
    lambdas = _floats(args.lam) if args.lam else list(cfg.blend.lambdas or LAMBDAS)
    seed = cfg.seed if args.seed is None else args.seed
    n = args.samples or cfg.eval.samples
    rows = lambda_sweep(trainer, lambdas, n, seed)
    _report(out, "sweep", cfg, seed, {}, [], [], rows=rows, extra={"samples_per_class": n, "sweep": rows})
    print(json.dumps(rows, sort_keys=True))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="genpolicy", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, ckpt=True):
        if ckpt:
            sp.add_argument("--ckpt")
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--samples", type=int, help="samples per class")

    t = sub.add_parser("train")
    t.add_argument("--config")
    t.add_argument("--iterations", type=int)
    common(t)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval")
    common(e)
    e.add_argument("--lambda", dest="lam")
    e.set_defaults(fn=cmd_eval)

    b = sub.add_parser("baseline")
    b.add_argument("--config")
    b.add_argument("--paradigm")
    b.add_argument("--T", type=int)
    b.add_argument("--rule", action="append", help="key=rule[:C[:C2]], repeatable")
    common(b, ckpt=False)
    b.set_defaults(fn=cmd_baseline)

    r = sub.add_parser("refine")
    common(r)
    r.add_argument("--refine-m", help="comma-separated list of M")
    r.add_argument("--refine-k", help="comma-separated list of K")
    r.add_argument("--lookahead", action="store_true")
    r.add_argument("--lambda", dest="lam")
    r.set_defaults(fn=cmd_refine)

    s = sub.add_parser("sweep")
    common(s)
    s.add_argument("--lambda", dest="lam", help="comma-separated lambdas")
    s.add_argument("--iterations", type=int, help="fidelity-training iterations when the checkpoint has none")
    s.set_defaults(fn=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "ckpt", None) is None and args.command in ("eval", "refine", "sweep"):
        print(f"error: {args.command} needs --ckpt", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (ConfigError, CheckpointError, ValueError, OSError, RuntimeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
