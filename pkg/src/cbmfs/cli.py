"""Command-line front end.

Exit codes: 0 success, 1 usage/config error, 2 data or file-format error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from collections import OrderedDict
from pathlib import Path

from . import __version__, kernels
from .cbm import CbmConfig, table5_variants
from .embedding_store import (
    BaseMatrix,
    SyntheticSpec,
    build_base_matrix,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split_classes,
)
from .errors import CbmError, InvalidConfig, RoleMismatch
from .harness import CBM, CBM_LLE, INDUCTIVE, Method, ProtocolConfig, SweepGrid, alpha_grid, evaluate, sweep
from .lle import LleConfig

SIGMA_NAMES = {"cos": "cosine", "euclid": "neg_euclidean", "kl": "neg_kl"}
METHOD_NAMES = {"inductive": INDUCTIVE, "cbm": CBM, "cbm-lle": CBM_LLE}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_threads():
    try:
        return max(1, int(os.environ.get("CBM_DEFAULT_THREADS", "1")))
    except ValueError:
        return 1


def _int_list(text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _alpha_spec(text):
    parts = text.split(":")
    try:
        if len(parts) == 3:
            return tuple(alpha_grid(*(float(p) for p in parts)))
        return tuple(float(p) for p in text.split(","))
    except (ValueError, InvalidConfig) as exc:
        raise argparse.ArgumentTypeError(f"bad alpha grid {text!r}: {exc}")


def _add_protocol(p):
    p.add_argument("--n-way", type=int, default=5)
    p.add_argument("--k-shot", type=int, default=1)
    p.add_argument("--n-query", type=int, default=15)
    p.add_argument("--n-tasks", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker cap (env CBM_DEFAULT_THREADS)")


def _add_inputs(p):
    p.add_argument("--base", required=True, help="base CBME file or cached base matrix (.npz)")
    p.add_argument("--novel", required=True, help="novel CBME file")


def _add_variant(p, sweep_mode=False):
    p.add_argument("--sigma-prime", choices=["cos", "euclid"], default="cos")
    p.add_argument("--softmax", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--sigma", choices=["cos", "euclid", "kl"], default="cos")
    p.add_argument("--lle-reg", type=float, default=1e-3)
    if sweep_mode:
        p.add_argument("--lle-k", type=_int_list, default=(10,), help="comma-separated k values")
        p.add_argument("--lle-dim", type=_int_list, default=(63,), help="comma-separated c' values")
        p.add_argument("--l2-normalize", choices=["off", "on", "both"], default="off")
    else:
        p.add_argument("--lle-k", type=int, default=10)
        p.add_argument("--lle-dim", type=int, default=63)
        p.add_argument("--l2-normalize", action="store_true")


def build_parser():
    parser = _Parser(prog="cbmfs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cbmfs {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-synthetic", help="write synthetic base/novel CBME files")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--dim", type=int, default=64)
    g.add_argument("--n-base", type=int, default=64)
    g.add_argument("--n-novel", type=int, default=20)
    g.add_argument("--samples-per-class", type=int, default=600)
    g.add_argument("--center-scale", type=float, default=1.0)
    g.add_argument("--noise-scale", type=float, default=0.3)
    g.add_argument("--base-noise-scale", type=float, default=None)
    g.add_argument("--latent-dim", type=int, default=None)
    g.add_argument("--split-val", type=int, default=0, metavar="N",
                   help="also write novel_val.cbme with the first N novel classes")
    g.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("base-matrix", help="compute and cache the base-class mean matrix")
    b.add_argument("--base", required=True)
    b.add_argument("--out", required=True, help="output .npz")

    e = sub.add_parser("eval", help="evaluate one method over seeded episodes")
    _add_inputs(e)
    e.add_argument("--method", choices=sorted(METHOD_NAMES), default="inductive")
    _add_variant(e)
    e.add_argument("--alpha", type=float, default=CbmConfig().alpha)
    _add_protocol(e)
    e.add_argument("--out", default=None)
    e.add_argument("--format", choices=["json", "csv"], default="json")
    e.add_argument("--per-task", action="store_true", help="include per-task accuracies")

    s = sub.add_parser("sweep", help="rank a hyperparameter grid on shared episodes")
    _add_inputs(s)
    s.add_argument("--method", choices=["cbm", "cbm-lle"], default="cbm")
    _add_variant(s, sweep_mode=True)
    s.add_argument("--alpha-grid", type=_alpha_spec, default=tuple(alpha_grid()),
                   help="start:stop:step or comma list")
    s.add_argument("--all-variants", action="store_true", help="sweep all ten similarity variants")
    _add_protocol(s)
    s.add_argument("--out", required=True, help="ranked CSV path; best config goes to <out>.best.json")
    s.add_argument("--format", choices=["csv", "json"], default="csv")

    r = sub.add_parser("report", help="turn a sweep CSV into accuracy-vs-alpha series")
    r.add_argument("sweep_csv")
    r.add_argument("--out", default=None)
    r.add_argument("--format", choices=["json", "csv"], default="csv")
    return parser


# ----------------------------------------------------------------- helpers


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path, args, argv, inputs):
    manifest = {
        "tool": "cbmfs",
        "version": __version__,
        "subcommand": args.command,
        "argv": list(argv),
        "flags": {k: v for k, v in sorted(vars(args).items()) if k != "command"},
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "kernel_backend": kernels.BACKEND,
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=list) + "\n")
    return path


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _load_base(path):
    if str(path).endswith(".npz"):
        return BaseMatrix.load(path)
    ds = load_dataset(path)
    if ds.role != "base":
        raise RoleMismatch(f"{path}: expected a base dataset, got role {ds.role!r}")
    return build_base_matrix(ds)


def _cbm_config(args, alpha=1.0):
    return CbmConfig(SIGMA_NAMES[args.sigma_prime], args.softmax, SIGMA_NAMES[args.sigma], alpha)


def _protocol(args):
    return ProtocolConfig(args.n_way, args.k_shot, args.n_query, args.n_tasks, args.seed)


def _threads(args):
    return args.threads if args.threads is not None else _default_threads()


# ------------------------------------------------------------- subcommands


def cmd_gen_synthetic(args, argv):
    spec = SyntheticSpec(args.dim, args.n_base, args.n_novel, args.samples_per_class,
                         args.center_scale, args.noise_scale, args.base_noise_scale, args.latent_dim)
    base, novel = generate_synthetic(spec, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(base, out / "base.cbme")
    if args.split_val:
        val, novel = split_classes(novel, args.split_val)
        save_dataset(val, out / "novel_val.cbme")
    save_dataset(novel, out / "novel.cbme")
    write_manifest(out / "synthetic", args, argv, [])
    return 0


def cmd_base_matrix(args, argv):
    base = build_base_matrix(load_dataset(args.base))
    base.save(args.out)
    write_manifest(args.out, args, argv, [args.base])
    return 0


def cmd_eval(args, argv):
    kind = METHOD_NAMES[args.method]
    cbm = lle = None
    if kind != INDUCTIVE:
        cbm = _cbm_config(args, args.alpha)
    if kind == CBM_LLE:
        lle = LleConfig(args.lle_k, args.lle_dim, args.l2_normalize, args.lle_reg)
    method = Method(kind, cbm, lle)
    cfg = _protocol(args)
    base = _load_base(args.base)
    novel = load_dataset(args.novel)
    report = evaluate(novel, base, method, cfg, threads=_threads(args))
    if args.format == "json":
        text = report.to_json(include_per_task=args.per_task) + "\n"
    else:
        d = report.to_dict()
        d["config"] = json.dumps(d["config"], sort_keys=True)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(d), lineterminator="\n")
        w.writeheader()
        w.writerow(d)
        text = buf.getvalue()
    _emit(text, args.out)
    if args.out:
        write_manifest(args.out, args, argv, [args.base, args.novel])
    return 0


def cmd_sweep(args, argv):
    kind = METHOD_NAMES[args.method]
    variants = tuple(table5_variants()) if args.all_variants else (_cbm_config(args).variant,)
    l2 = {"off": (False,), "on": (True,), "both": (False, True)}[args.l2_normalize]
    grid = SweepGrid(kind, args.alpha_grid, variants, args.lle_k, args.lle_dim, l2, args.lle_reg)
    cfg = _protocol(args)
    base = _load_base(args.base)
    novel = load_dataset(args.novel)
    result = sweep(novel, base, grid, cfg, threads=_threads(args))
    if args.format == "csv":
        text = result.to_csv()
    else:
        text = json.dumps(result.rows(), indent=2) + "\n"
    _emit(text, args.out)
    best_method, best_report = result.best
    best = {"method": best_method.kind, "config": best_method.describe(), "accuracy": best_report.accuracy,
            "ci95": best_report.ci95, "n_tasks": cfg.n_tasks, "seed": cfg.seed}
    Path(args.out + ".best.json").write_text(json.dumps(best, indent=2, sort_keys=True) + "\n")
    write_manifest(args.out, args, argv, [args.base, args.novel])
    return 0


def alpha_series(rows):
    """Group sweep rows by everything except alpha; each series sorted by alpha."""
    series = OrderedDict()
    for row in rows:
        key = tuple((k, row[k]) for k in ("method", "sigma_prime", "softmax", "sigma", "l2_normalize", "k", "c_prime"))
        series.setdefault(key, []).append(row)
    out = []
    for key, items in series.items():
        items.sort(key=lambda r: float(r["alpha"]))
        label = "/".join(f"{k}={v}" for k, v in key if v != "")
        out.append({
            "label": label,
            "alpha": [float(r["alpha"]) for r in items],
            "accuracy": [float(r["accuracy"]) for r in items],
            "ci95": [float(r["ci95"]) for r in items],
        })
    return out


def cmd_report(args, argv):
    with open(args.sweep_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidConfig(f"{args.sweep_csv}: no rows")
    series = alpha_series(rows)
    if args.format == "json":
        text = json.dumps({"series": series}, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["series", "alpha", "accuracy", "ci95"])
        for s in series:
            for a, acc, ci in zip(s["alpha"], s["accuracy"], s["ci95"]):
                w.writerow([s["label"], a, repr(acc), repr(ci)])
        text = buf.getvalue()
    _emit(text, args.out)
    if args.out:
        write_manifest(args.out, args, argv, [args.sweep_csv])
    return 0


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "base-matrix": cmd_base_matrix,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CbmError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
