"""Command-line entry point.

Exit codes: 0 success, 2 invalid configuration or inputs, 3 numeric failure.
"""
import argparse
import os
import sys

import numpy as np

from .config import format_config, load_config, parse_config, validate_paths
from .data_io import apply_policy, load_dataset, subset, write_tensor
from .errors import FormatError, MSPyrPoolError, NumericError, ValidationError
from .netgraph import build_network, load_checkpoint, net_forward, save_checkpoint
from .training import EpochReport, evaluate, grad_check, train

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
GRADCHECK_TOLERANCE = 1e-5


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_split(cfg, data, labels, n):
    ds = load_dataset(cfg.resolve(data), cfg.resolve(labels))
    ds = subset(ds, n, cfg.train.seed)
    return apply_policy(ds, cfg.policy)


def _config_for(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_train(args):
    cfg = _config_for(args)
    problems = validate_paths(cfg)
    if problems:
        raise ValidationError(problems)
    train_set = _load_split(cfg, cfg.train_data, cfg.train_labels, cfg.train_subset)
    val_set = None
    if cfg.val_data is not None:
        val_set = _load_split(cfg, cfg.val_data, cfg.val_labels, cfg.val_subset)
    out_dir = args.out or cfg.resolve(cfg.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    meta = format_config(cfg)
    net = build_network(cfg.network, cfg.train.seed)

    csv = open(os.path.join(out_dir, "epochs.csv"), "w")
    csv.write(EpochReport.CSV_HEADER + "\n")

    def on_epoch(report):
        csv.write(report.csv_row() + "\n")
        csv.flush()
        val = "" if report.val_acc is None else f" val_acc={report.val_acc:.4f}"
        print(f"epoch {report.epoch} lr={report.lr:.6g} loss={report.mean_loss:.5f} "
              f"train_acc={report.train_acc:.4f}{val}", flush=True)
        every = cfg.checkpoint_every
        if every and (report.epoch + 1) % every == 0:
            save_checkpoint(os.path.join(out_dir, f"checkpoint-epoch{report.epoch:03d}.ckpt"), net, meta)

    with csv:
        reports = train(net, train_set, cfg.train, val_set, on_epoch)
    save_checkpoint(os.path.join(out_dir, "checkpoint.ckpt"), net, meta)

    summary = [f"epochs {len(reports)}", f"final_train_acc {reports[-1].train_acc!r}"]
    if val_set is not None:
        ev = evaluate(net, val_set)
        summary += [f"val_overall {ev.overall!r}", f"val_per_class {ev.per_class!r}"]
    with open(os.path.join(out_dir, "summary.txt"), "w") as f:
        f.write("\n".join(summary) + "\n")
    print("\n".join(summary))
    return EXIT_OK


def _checkpoint_and_data(args):
    net, meta = load_checkpoint(args.checkpoint)
    cfg = parse_config(meta) if meta.strip() else None
    data = args.data
    ds = load_dataset(data[0], data[1] if len(data) > 1 else None)
    if cfg is not None:
        ds = apply_policy(ds, cfg.policy)
    if ds.n_classes != net.spec.classes:
        raise ValidationError(
            f"dataset has {ds.n_classes} classes, checkpoint network has {net.spec.classes}"
        )
    return net, ds


def cmd_eval(args):
    net, ds = _checkpoint_and_data(args)
    ev = evaluate(net, ds)
    print(f"samples {len(ds)}")
    print(f"overall_accuracy {ev.overall:.6f}")
    print(f"per_class_accuracy {ev.per_class:.6f}")
    print(f"mean_loss {ev.mean_loss:.6f}")
    print("confusion (rows = true class, cols = predicted)")
    for row in ev.confusion:
        print(" ".join(f"{v:5d}" for v in row))
    return EXIT_OK


def cmd_gradcheck(args):
    cfg = _config_for(args)
    net = build_network(cfg.network, cfg.train.seed)
    rng = np.random.default_rng(cfg.train.seed)
    rows, cols = cfg.network.min_size
    image = rng.normal(size=(rows, cols, cfg.network.input_maps))
    label = int(rng.integers(cfg.network.classes))
    err = grad_check(net, (image, label), epsilon=1e-5, seed=cfg.train.seed,
                     max_entries=args.max_entries)
    ok = err < GRADCHECK_TOLERANCE
    print(f"parameters {net.n_params}")
    print(f"max_relative_error {err:.3e}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_dims(args):
    cfg = _config_for(args)
    spec = cfg.network
    shapes = spec.trunk_shapes()
    for j, (tap, dim) in enumerate(zip(spec.taps, spec.tap_dims())):
        r, c, m = shapes[tap.position]
        enc = f" dict {tap.dict_size}" if tap.dict_size is not None else ""
        levels = ",".join(map(str, tap.levels))
        print(f"tap {j}: position {tap.position} ({r}x{c}x{m}){enc} levels {levels} -> {dim}")
    print(f"min_size {spec.min_size[0]} {spec.min_size[1]}")
    print(f"total {spec.feature_dim}")
    return EXIT_OK


def cmd_features(args):
    net, ds = _checkpoint_and_data(args)
    feats = np.stack([net_forward(net, s.image)[1].features for s in ds.samples])
    out = args.out
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    write_tensor(out, feats[:, :, None])
    print(f"wrote {feats.shape[0]} feature vectors of length {feats.shape[1]} to {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="mspyrpool", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network from a run configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", help="output directory (default: out_dir from the config)")
    p.set_defaults(func=cmd_train)

    for name, func, hlp in (("eval", cmd_eval, "evaluate a checkpoint"),
                            ("features", cmd_features, "export concatenated features")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True, nargs="+",
                       help="image directory, or IDX images and labels files")
        if name == "features":
            p.add_argument("--out", required=True, help="output .tensor file")
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", help="finite-difference check of the configured network")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-entries", type=int, default=None,
                   help="check at most this many entries per parameter array")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("dims", help="print per-tap and total feature dimensions")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_dims)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        return _fail(EXIT_INVALID, "invalid configuration:\n  " + "\n  ".join(exc.violations))
    except NumericError as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    except (FormatError, MSPyrPoolError, OSError) as exc:
        return _fail(EXIT_INVALID, str(exc))


if __name__ == "__main__":
    sys.exit(main())
