"""Command line front end: ``rago gen|train|infer|baseline|eval``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
failure.
"""

import argparse
import csv
import dataclasses
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import classical, synth
from .errors import (
    ConfigError,
    CorruptFile,
    DegenerateInput,
    NonFiniteLoss,
    ParseError,
    RagoError,
    VersionMismatch,
)
from .evaluation import mn_md_error
from .model import TRACE_FIELDS, ArchConfig, infer
from .nn.io import load_weights, save_weights
from .training import TrainConfig, load_dataset, train
from .viewgraph import load, read_vertices, write_vertices

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

logger = logging.getLogger("rago")

# keys a gen config must define; seed comes from --seed
GEN_REQUIRED = ("n_nodes_range", "edge_fraction_range", "sigma_deg_range", "outlier_fraction_range")


class _IOFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# config files


def read_kv(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _IOFailure(f"cannot read {path}: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def _coerce(key, raw, default):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.replace("[", "").replace("]", "").split(",")]
            if len(parts) != 2:
                raise ValueError(raw)
            kind = type(default[0])
            return tuple(kind(float(p)) if kind is int else kind(p) for p in parts)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def _build(cls, values, required=()):
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    for key in required:
        if key not in values:
            raise ConfigError(f"missing config key {key!r}")
    defaults = cls()
    kwargs = {k: _coerce(k, v, getattr(defaults, k)) for k, v in values.items()}
    return cls(**kwargs)


def synth_config_from_file(path, seed):
    values = read_kv(path)
    values.pop("seed", None)
    cfg = _build(synth.SynthConfig, values, GEN_REQUIRED)
    return dataclasses.replace(cfg, seed=seed).validate()


def arch_config_from_file(path):
    if path is None:
        return ArchConfig().validate()
    return _build(ArchConfig, read_kv(path)).validate()


# ---------------------------------------------------------------------------
# helpers


def _header(cmd, args, **extra):
    fields = [f"seed={args.seed}"] + [f"{k}={v}" for k, v in extra.items()]
    print(f"# rago {cmd} " + " ".join(fields))


def _print_errors(mn, md):
    print(f"mn={mn:.3f} md={md:.3f}")


def _load_graph(path):
    try:
        return load(path)
    except OSError as exc:
        raise _IOFailure(f"cannot read {path}: {exc}") from exc
    except ParseError as exc:
        raise _IOFailure(f"{path}: {exc}") from exc


def _write_csv(path, fieldnames, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fieldnames)
        w.writerows(rows)


def _png_path(csv_path):
    return Path(csv_path).with_suffix(".png")


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args):
    if args.config is not None:
        cfg = synth_config_from_file(args.config, args.seed)
    else:
        cfg = dataclasses.replace(DESK_SYNTH, seed=args.seed).validate()
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    _header("gen", args, count=args.count)
    try:
        manifest = synth.make_dataset(cfg, args.count, args.out)
    except OSError as exc:
        raise _IOFailure(f"cannot write to {args.out}: {exc}") from exc
    print(f"wrote {args.count} graphs, manifest {manifest}")
    return EXIT_OK


def cmd_train(args):
    arch = arch_config_from_file(args.arch)
    tcfg = TrainConfig(epochs=args.epochs, gamma=args.gamma, edge_dropout=args.edge_dropout,
                       seed=args.seed, lr=args.lr, init=args.init).validate()
    try:
        graphs = load_dataset(args.data)
    except (OSError, ParseError) as exc:
        raise _IOFailure(f"cannot load dataset {args.data}: {exc}") from exc
    _header("train", args, epochs=tcfg.epochs, gamma=tcfg.gamma, graphs=len(graphs))

    def report(epoch, loss, lr, _w):
        print(f"epoch {epoch} loss {loss:.6f} lr {lr:.6g}", flush=True)

    weights, curve = train(graphs, arch, tcfg, on_epoch=report)
    out = Path(args.out)
    loss_csv = Path(args.loss) if args.loss else out.parent / "loss.csv"
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        meta = {"arch": arch.to_dict(), "seed": args.seed, "epochs": tcfg.epochs}
        save_weights(weights, out, metadata=meta)
        _write_csv(loss_csv, ["epoch", "loss", "lr"],
                   [(e, format(l, ".17g"), format(lr, ".17g")) for e, l, lr in curve])
        if args.plot:
            from .plotting import plot_loss_curve

            plot_loss_curve(curve, _png_path(loss_csv))
    except OSError as exc:
        raise _IOFailure(f"cannot write outputs: {exc}") from exc
    print(f"wrote {out} and {loss_csv}")
    return EXIT_OK


def _load_model(path, arch_path):
    try:
        weights, meta = load_weights(path, with_metadata=True)
    except OSError as exc:
        raise _IOFailure(f"cannot read {path}: {exc}") from exc
    except (CorruptFile, VersionMismatch) as exc:
        raise _IOFailure(f"{path}: {exc}") from exc
    if arch_path is not None:
        arch = arch_config_from_file(arch_path)
    elif "arch" in meta:
        arch = ArchConfig.from_dict(meta["arch"])
    else:
        arch = ArchConfig().validate()
    return weights, arch


def cmd_infer(args):
    g = _load_graph(args.graph)
    weights, arch = _load_model(args.weights, args.arch)
    if args.tg is not None and args.tg < 1:
        raise ConfigError("--tg must be >= 1")
    _header("infer", args, init=args.init, tg=args.tg or arch.t_g_test)
    res = infer(g, weights, arch, init=args.init, seed=args.seed, t_g=args.tg)
    rows = [[r[k] if k in ("iter", "phase") else format(r[k], ".17g") for k in TRACE_FIELDS]
            for r in res.trace]
    try:
        if args.trace:
            _write_csv(args.trace, TRACE_FIELDS, rows)
            if args.plot:
                from .plotting import plot_trace

                plot_trace(res.trace, _png_path(args.trace))
        if args.out:
            write_vertices(res.est_abs, args.out)
    except OSError as exc:
        raise _IOFailure(f"cannot write outputs: {exc}") from exc
    if g.gt_abs is not None:
        _print_errors(res.trace[-1]["mn_deg"], res.trace[-1]["md_deg"])
    return EXIT_OK


def cmd_baseline(args):
    if args.method not in ("spt", "weiszfeld"):
        raise ConfigError(f"unknown method {args.method!r} (spt|weiszfeld)")
    g = _load_graph(args.graph)
    _header("baseline", args, method=args.method, sweeps=args.sweeps)
    est = classical.spt_init(g, "max-degree-root")
    history = []

    def record(sweep, r):
        if g.gt_abs is not None:
            history.append((sweep, *mn_md_error(r, g.gt_abs)))

    if g.gt_abs is not None:
        record(0, est)
    if args.method == "weiszfeld":
        est = classical.weiszfeld_mra(g, est, sweeps=args.sweeps, callback=record)
    try:
        if args.trace:
            _write_csv(args.trace, ["sweep", "mn_deg", "md_deg"],
                       [(s, format(a, ".17g"), format(b, ".17g")) for s, a, b in history])
            if args.plot:
                from .plotting import plot_sweeps

                plot_sweeps(history, _png_path(args.trace))
        if args.out:
            write_vertices(est, args.out)
    except OSError as exc:
        raise _IOFailure(f"cannot write outputs: {exc}") from exc
    if g.gt_abs is not None:
        _print_errors(*mn_md_error(est, g.gt_abs))
    return EXIT_OK


def _read_rotations(path):
    try:
        return read_vertices(path)
    except OSError as exc:
        raise _IOFailure(f"cannot read {path}: {exc}") from exc
    except ParseError as exc:
        raise _IOFailure(f"{path}: {exc}") from exc


def cmd_eval(args):
    est = _read_rotations(args.est)
    gt = _read_rotations(args.gt)
    if est.shape != gt.shape:
        raise ConfigError(f"est has {len(est)} rotations, gt has {len(gt)}")
    _header("eval", args)
    _print_errors(*mn_md_error(est, gt))
    return EXIT_OK


# small graphs used when gen runs without a config file
DESK_SYNTH = synth.SynthConfig((40, 120), (0.1, 0.2), (5.0, 15.0), (0.0, 0.15))


def build_parser():
    p = argparse.ArgumentParser(prog="rago", description="Learned rotation averaging toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        return sp

    sp = common(sub.add_parser("gen", help="generate synthetic view-graphs"))
    sp.add_argument("--config", help="key = value file with SynthConfig fields")
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen)

    sp = common(sub.add_parser("train", help="train the optimizer"))
    sp.add_argument("--data", required=True, help="manifest.csv")
    sp.add_argument("--arch", help="key = value file with ArchConfig fields")
    sp.add_argument("--epochs", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--edge-dropout", type=float, default=0.2)
    sp.add_argument("--gamma", type=float, default=0.8)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--init", default="random", choices=["random", "spt", "random-spt"])
    sp.add_argument("--loss", help="loss CSV path (default: loss.csv next to --out)")
    sp.add_argument("--plot", action="store_true", help="also render the loss curve as PNG")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("infer", help="run a trained optimizer on one graph"))
    sp.add_argument("--graph", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--arch", help="override the architecture stored with the weights")
    sp.add_argument("--tg", type=int, default=None)
    sp.add_argument("--init", default="random", choices=["random", "spt", "random-spt"])
    sp.add_argument("--trace")
    sp.add_argument("--out", help="write estimated rotations as a vertex file")
    sp.add_argument("--plot", action="store_true", help="also render the trace as PNG")
    sp.set_defaults(func=cmd_infer)

    sp = common(sub.add_parser("baseline", help="classical baselines"))
    sp.add_argument("--graph", required=True)
    sp.add_argument("--method", required=True)
    sp.add_argument("--sweeps", type=int, default=20)
    sp.add_argument("--trace", help="per-sweep error CSV")
    sp.add_argument("--out")
    sp.add_argument("--plot", action="store_true")
    sp.set_defaults(func=cmd_baseline)

    sp = common(sub.add_parser("eval", help="compare two vertex files"))
    sp.add_argument("--est", required=True)
    sp.add_argument("--gt", required=True)
    sp.set_defaults(func=cmd_eval)
    return p


def _thread_limit():
    raw = os.environ.get("RAGO_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"RAGO_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("RAGO_THREADS must be >= 0")
    return n or None


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=_thread_limit()):
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _IOFailure as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NonFiniteLoss, DegenerateInput, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RagoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
