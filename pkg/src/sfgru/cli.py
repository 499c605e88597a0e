"""Command-line entry point: ``sfgru <command> [flags]``.

Every command that writes a file also writes ``<out>.manifest.json`` with the
resolved configuration and SHA-256 digests of its inputs.
"""

import argparse
import hashlib
import json
import logging
import sys

from . import __version__
from .architectures import DEFAULT_FUSION_ORDER, FEATURE_DIMS, Kind, ModelSpec, load_checkpoint, save_checkpoint
from .dataset import SamplingSpec, SynthConfig, load_tracks, save_tracks, seconds_to_frames, split_train_test, synth_generate
from .errors import NumericalError, SchemaError, SfGruError
from .gradcheck import check_model_gradients, random_instance
from .sweeps import (FUSION_ORDERS, SweepResult, SweepRow, ablate_features, sweep_fusion_order,
                     sweep_obs_length, sweep_tte)
from .training import TrainConfig, evaluate, prepare, train_prepared

EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("sfgru")


class UsageError(SfGruError):
    pass


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {s}")
    return v


def _nonneg_float(s):
    v = float(s)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {s}")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def _seed(s):
    v = int(s)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {s}")
    return v


def _feature_list(s):
    keys = tuple(k.strip() for k in s.split(",") if k.strip())
    bad = [k for k in keys if k not in FEATURE_DIMS]
    if not keys or bad:
        raise argparse.ArgumentTypeError(f"unknown feature keys {bad or s!r}; choose from {sorted(FEATURE_DIMS)}")
    if len(set(keys)) != len(keys):
        raise argparse.ArgumentTypeError(f"duplicate feature keys in {s!r}")
    return keys


def _model_list(s):
    names = [n.strip() for n in s.split(",") if n.strip()]
    try:
        return [Kind(n) for n in names]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown model in {s!r}; choose from {[k.value for k in Kind]}") from None


def _add_tracks(p, required=True):
    p.add_argument("--tracks", required=required, help="track file (JSON lines)")


def _add_out(p):
    p.add_argument("--out", required=True, help="output path")


def _add_model(p, default="sf-gru", multiple=False):
    if multiple:
        p.add_argument("--model", type=_model_list, default=list(Kind),
                       help="comma-separated architectures (default: all six)")
    else:
        p.add_argument("--model", type=Kind, default=Kind(default), choices=list(Kind),
                       metavar="{" + ",".join(k.value for k in Kind) + "}")
    p.add_argument("--features", type=_feature_list, default=None,
                   help="feature keys, e.g. Cp,Cs,P,B,S")
    p.add_argument("--fusion-order", type=_feature_list, default=None,
                   help="bottom-to-top level order for sf-gru")
    p.add_argument("--hidden", type=_positive_int, default=256)


def _add_training(p):
    p.add_argument("--mode", choices=("paper", "synth"), default="paper",
                   help="hyperparameter defaults: paper (lr 5e-6) or synth (lr 1e-3)")
    p.add_argument("--lr", type=_nonneg_float, default=None)
    p.add_argument("--epochs", type=_nonneg_int, default=60)
    p.add_argument("--batch", type=_positive_int, default=32)
    p.add_argument("--l2", type=_nonneg_float, default=1e-4)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--no-balance", action="store_true")
    p.add_argument("--no-flip", action="store_true")
    p.add_argument("--obs-len-s", type=_positive_float, default=0.5)


def _add_jobs(p):
    p.add_argument("--jobs", type=_positive_int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(prog="sfgru", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic tracks")
    p.add_argument("--n", type=_positive_int, default=140)
    p.add_argument("--ratio", type=_positive_float, default=2.5, help="non-crossing : crossing")
    p.add_argument("--snr", type=_nonneg_float, default=8.0)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--track-len", type=_positive_int, default=150, help="frames per track")
    p.add_argument("--flip-context", action="store_true", help="also emit mirrored context vectors")
    p.add_argument("--no-full-context", action="store_true", help="omit the c_ps vectors")
    _add_out(p)

    p = sub.add_parser("train", help="train one model on the training split")
    _add_tracks(p)
    _add_out(p)
    _add_model(p)
    _add_training(p)
    p.add_argument("--tte-s", type=_nonneg_float, default=2.0)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _add_tracks(p)
    _add_out(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tte-s", type=_nonneg_float, default=2.0)
    p.add_argument("--seed", type=_seed, default=0, help="split seed used at training time")
    p.add_argument("--split", choices=("test", "train", "all"), default="test")

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--model", type=Kind, default=Kind.STACKED_FUSION_GRU, choices=list(Kind),
                   metavar="{" + ",".join(k.value for k in Kind) + "}")
    p.add_argument("--hidden", type=_positive_int, default=4)
    p.add_argument("--m", type=_positive_int, default=3)
    p.add_argument("--seed", type=_seed, default=1)
    p.add_argument("--features", type=_feature_list, default=None)
    p.add_argument("--fusion-order", type=_feature_list, default=None)
    p.add_argument("--tol", type=_positive_float, default=1e-4)
    p.add_argument("--out", default=None, help="optional JSON report path")

    p = sub.add_parser("sweep-tte", help="all models across the 19 TTE points")
    _add_tracks(p)
    _add_out(p)
    _add_model(p, multiple=True)
    _add_training(p)
    _add_jobs(p)

    p = sub.add_parser("sweep-obs", help="observation length x TTE grid")
    _add_tracks(p)
    _add_out(p)
    _add_model(p)
    _add_training(p)
    _add_jobs(p)

    for name, help_ in (("ablate", "feature-set ablation"), ("fusion-order", "fusion-order permutations")):
        p = sub.add_parser(name, help=help_)
        _add_tracks(p)
        _add_out(p)
        p.add_argument("--hidden", type=_positive_int, default=256)
        _add_training(p)
        p.add_argument("--tte-s", type=_nonneg_float, default=2.0)
        _add_jobs(p)
    return parser


# helpers

def _spec_from_args(args, kind=None):
    kind = kind or args.model
    if kind is Kind.STACKED_FUSION_GRU:
        order = args.fusion_order or args.features
    else:
        if args.fusion_order and kind is not Kind.STACKED_FUSION_GRU:
            raise UsageError("--fusion-order only applies to sf-gru")
        order = args.features
    if order is None:
        order = ("Cp", "Cs") if kind is Kind.STATIC else DEFAULT_FUSION_ORDER
    m = seconds_to_frames(getattr(args, "obs_len_s", 0.5))
    return ModelSpec(kind=kind, fusion_order=order, hidden_dim=args.hidden, obs_len=m)


def _train_config(args):
    return TrainConfig.for_mode(
        args.mode,
        **({"lr": args.lr} if args.lr is not None else {}),
        epochs=args.epochs, batch_size=args.batch, l2=args.l2, seed=args.seed,
        flip_augment=not args.no_flip, balance=not args.no_balance,
    )


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, Kind):
        return v.value
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_manifest(out, args, inputs=(), extra=None):
    manifest = {
        "command": args.command,
        "config": {k: _jsonable(v) for k, v in sorted(vars(args).items())},
        "inputs": {p: _digest(p) for p in inputs},
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    with open(out + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _split_tracks(tracks, seed):
    split = split_train_test(tracks, 0.6, seed)
    by_id = {t.id: t for t in tracks}
    return [by_id[i] for i in split.train], [by_id[i] for i in split.test]


# commands

def cmd_synth(args):
    cfg = SynthConfig(n_tracks=args.n, track_len_frames=args.track_len, class_ratio=args.ratio,
                      snr=args.snr, seed=args.seed, flip_context=args.flip_context,
                      full_context=not args.no_full_context)
    tracks = synth_generate(cfg)
    save_tracks(tracks, args.out)
    write_manifest(args.out, args)
    n_non, n_cross = cfg.class_counts()
    print(f"wrote {len(tracks)} tracks ({n_non} non-crossing, {n_cross} crossing) to {args.out}")


def cmd_train(args):
    spec = _spec_from_args(args)
    cfg = _train_config(args)
    tracks = load_tracks(args.tracks)
    train_tracks, _ = _split_tracks(tracks, args.seed)
    sampling = SamplingSpec(spec.obs_len, seconds_to_frames(args.tte_s))
    data = prepare(spec, train_tracks, sampling, with_flips=cfg.flip_augment)
    if len(data) == 0:
        raise UsageError("no training track has enough history for the requested window")
    result = train_prepared(spec, data, cfg)
    save_checkpoint(args.out, spec, result.params)
    write_manifest(args.out, args, [args.tracks], {
        "loss_curve": result.loss_curve, "n_train_windows": result.n_train_windows,
        "spec": spec.to_dict(), "train_config": cfg.to_dict(),
    })
    print(f"trained {spec.kind.label} on {len(data)} windows; final loss {result.loss_curve[-1]:.4f}"
          if result.loss_curve else f"initialised {spec.kind.label} (0 epochs)")


def cmd_eval(args):
    spec, params = load_checkpoint(args.checkpoint)
    tracks = load_tracks(args.tracks)
    if args.split == "all":
        subset = tracks
    else:
        train_tracks, test_tracks = _split_tracks(tracks, args.seed)
        subset = test_tracks if args.split == "test" else train_tracks
    fps = tracks[0].fps if tracks else 30.0
    tte = seconds_to_frames(args.tte_s, fps)
    data = prepare(spec, subset, SamplingSpec(spec.obs_len, tte))
    if len(data) == 0:
        raise UsageError("no evaluation track has enough history for the requested window")
    report = evaluate(spec, params, data.inputs, data.labels)
    order = ",".join(spec.fusion_order)
    row = SweepRow(spec.kind.label, order if spec.kind is Kind.STACKED_FUSION_GRU else "", order,
                   tte / fps, spec.obs_len / fps, report, 0, len(data), args.seed)
    SweepResult([row]).write_csv(args.out)
    write_manifest(args.out, args, [args.tracks, args.checkpoint])
    auc = "NA" if report.auc is None else f"{report.auc:.4f}"
    print(f"acc {report.accuracy:.4f} auc {auc} f1 {report.f1:.4f} "
          f"precision {report.precision:.4f} recall {report.recall:.4f} (n={report.n_samples})")


def cmd_gradcheck(args):
    order = args.fusion_order or args.features
    if order is None:
        order = ("Cp", "Cs") if args.model is Kind.STATIC else DEFAULT_FUSION_ORDER
    spec = ModelSpec(kind=args.model, fusion_order=order, hidden_dim=args.hidden, obs_len=args.m)
    result = check_model_gradients(spec, *random_instance(spec, args.seed))
    ok = result.passed(args.tol)
    print(f"{spec.kind.label}: max relative error {result.max_rel_error:.3e} over "
          f"{result.n_checked} parameters -> {'PASS' if ok else 'FAIL'} (tol {args.tol:g})")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"model": spec.kind.value, "max_rel_error": result.max_rel_error,
                       "per_array": result.per_array, "passed": ok}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        write_manifest(args.out, args)
    if not ok:
        raise NumericalError(f"gradient check failed: {result.max_rel_error:.3e} >= {args.tol:g}")


def _finish_sweep(args, result):
    result.write_csv(args.out)
    write_manifest(args.out, args, [args.tracks])
    skipped = sum(r.skipped is not None for r in result.rows)
    print(f"wrote {len(result)} rows ({skipped} skipped) to {args.out}")


def cmd_sweep_tte(args):
    specs = [_spec_from_args(args, kind=k) for k in args.model]
    tracks = load_tracks(args.tracks)
    m = seconds_to_frames(args.obs_len_s)
    _finish_sweep(args, sweep_tte(specs, tracks, _train_config(args), m=m,
                                  split_seed=args.seed, jobs=args.jobs))


def cmd_sweep_obs(args):
    spec = _spec_from_args(args)
    tracks = load_tracks(args.tracks)
    _finish_sweep(args, sweep_obs_length(spec, tracks, _train_config(args),
                                         split_seed=args.seed, jobs=args.jobs))


def cmd_ablate(args):
    spec = ModelSpec(Kind.STACKED_FUSION_GRU, hidden_dim=args.hidden,
                     obs_len=seconds_to_frames(args.obs_len_s))
    tracks = load_tracks(args.tracks)
    _finish_sweep(args, ablate_features(spec, tracks, _train_config(args),
                                        tte_frames=seconds_to_frames(args.tte_s),
                                        split_seed=args.seed, jobs=args.jobs))


def cmd_fusion_order(args):
    spec = ModelSpec(Kind.STACKED_FUSION_GRU, hidden_dim=args.hidden,
                     obs_len=seconds_to_frames(args.obs_len_s))
    tracks = load_tracks(args.tracks)
    _finish_sweep(args, sweep_fusion_order(tracks, _train_config(args), FUSION_ORDERS, spec,
                                           tte_frames=seconds_to_frames(args.tte_s),
                                           split_seed=args.seed, jobs=args.jobs))


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
    "sweep-tte": cmd_sweep_tte, "sweep-obs": cmd_sweep_obs, "ablate": cmd_ablate,
    "fusion-order": cmd_fusion_order,
}


def run(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except (SchemaError, FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as e:
        print(f"sfgru: input error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except NumericalError as e:
        print(f"sfgru: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except SfGruError as e:
        print(f"sfgru: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main():
    sys.exit(run())
