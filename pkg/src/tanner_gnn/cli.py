"""Command-line front end: ``tanner-gnn <command> ...``.

Every command prints (or writes) a result carrying ``config_hash`` and
``seed``. The hash is the first 16 hex digits of the SHA-256 of the
command's effective configuration serialised as sorted JSON.

Exit codes: 0 success, 1 usage error (bad arguments, missing or malformed
inputs), 2 numeric failure (non-finite loss, diverged training, a syndrome
no error can produce).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, codes, gnn, noise, train
from .osd import InconsistentSyndromeError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("tanner_gnn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _emit(result: dict, out: str | None = None) -> None:
    text = json.dumps(result, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _load_code(source: str) -> codes.CssCode:
    try:
        return codes.load_code(source)
    except (FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load code {source!r}: {exc}") from exc


def _load_model(path: str) -> gnn.GnnModel:
    try:
        return gnn.load_model(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load checkpoint {path!r}: {exc}") from exc


# ------------------------------------------------------------------ commands

def cmd_code_build(args) -> int:
    if args.family == "surface":
        if args.d is None:
            raise UsageError("--d is required for surface codes")
        definition = {"family": "surface", "d": args.d}
    elif args.family == "bb":
        if None in (args.l, args.m, args.a, args.b):
            raise UsageError("--l, --m, --a and --b are required for bivariate bicycle codes")
        definition = {"family": "bivariate_bicycle", "l": args.l, "m": args.m,
                      "a": json.loads(args.a), "b": json.loads(args.b), "d": args.d or 0}
    else:
        code = _load_code(args.name)
        definition = dict(code.definition)
    if args.name_tag:
        definition["name"] = args.name_tag
    try:
        code = codes.code_from_definition(definition)
        codes.check_css(code)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    if args.output:
        codes.save_code(code, args.output)
    _emit({"command": "code build", "definition": definition, "n": code.n, "k": code.k,
           "d": code.d, "num_x_checks": int(code.h_x.shape[0]), "num_z_checks": int(code.h_z.shape[0]),
           "config_hash": config_hash(definition), "seed": None, "output": args.output})
    return EXIT_OK


def cmd_sample(args) -> int:
    code = _load_code(args.code)
    cfg = {"code": code.definition, "p_max": args.p_max, "count": args.count, "seed": args.seed,
           "fixed_p": args.fixed_p}
    if not 0 < args.p_max < 1 or args.count < 1:
        raise UsageError("need 0 < p_max < 1 and count >= 1")
    ds = noise.generate_dataset(code, args.p_max, args.count, seed=args.seed, fixed_p=args.fixed_p)
    noise.save_dataset(ds, args.output)
    _emit({"command": "sample", "output": args.output, "count": len(ds), "n": code.n,
           "config_hash": config_hash(cfg), "seed": args.seed})
    return EXIT_OK


def cmd_train(args) -> int:
    code = _load_code(args.code)
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    for key in ("epochs", "seed", "learning_rate", "samples_per_epoch"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    try:
        config = train.TrainConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad training config: {exc}") from exc
    if args.init:
        model = _load_model(args.init)
    else:
        model = gnn.GnnModel.init(config.node_dim, config.msg_hidden, config.edge_dim, seed=config.seed)
    h = config_hash({"code": code.definition, "train": config.to_dict(), "init": args.init})
    if args.init:
        model, history = train.warm_start(model, code, config, log_path=args.log,
                                          checkpoint_path=args.output)
    else:
        model, history = train.train(model, code, config, log_path=args.log, checkpoint_path=args.output)
    model.meta["config_hash"] = h
    gnn.save_model(model, args.output)
    last = history[-1] if history else {}
    _emit({"command": "train", "output": args.output, "log": args.log, "epochs_run": len(history),
           "final": last, "config_hash": h, "seed": config.seed})
    return EXIT_OK


def _read_syndrome(args, m: int) -> np.ndarray:
    text = Path(args.syndrome_file).read_text() if args.syndrome_file else sys.stdin.read()
    text = text.strip()
    try:
        if text.startswith("["):
            bits = json.loads(text)
        else:
            bits = [int(c) for c in text if c in "01"] if " " not in text and "," not in text \
                else [int(t) for t in text.replace(",", " ").split()]
        syndrome = np.asarray(bits, dtype=np.int64)
    except (ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot parse syndrome: {exc}") from exc
    if syndrome.shape != (m,) or np.any((syndrome != 0) & (syndrome != 1)):
        raise UsageError(f"syndrome must be {m} bits of 0/1, got shape {syndrome.shape}")
    return syndrome.astype(np.uint8)


def cmd_decode(args) -> int:
    code = _load_code(args.code)
    syndrome = _read_syndrome(args, code.num_checks)
    if args.decoder.startswith("gnn"):
        if not args.model:
            raise UsageError("--model is required for the gnn decoder")
        stage = bench.GnnStage(_load_model(args.model), code, args.iterations)
    else:
        stage = bench.BpStage(code, args.scaling, args.schedule, args.iterations)
    use_osd = args.decoder.endswith("+osd")
    out, words, osd_used = bench.decode_with_osd(stage, code, syndrome[None, :], args.p, use_osd)
    word = words[0]
    satisfied = bool(np.array_equal(noise.compute_syndrome(code, word[None, :])[0], syndrome))
    cfg = {"code": code.definition, "decoder": args.decoder, "model": args.model, "p": args.p,
           "iterations": args.iterations, "scaling": args.scaling, "schedule": args.schedule}
    _emit({"command": "decode", "error": "".join("IXZY"[v] for v in word), "error_classes": word.tolist(),
           "converged_first_stage": bool(out.converged[0]), "osd_invoked": bool(osd_used[0]),
           "syndrome_satisfied": satisfied, "iterations_used": int(out.iterations[0]),
           "config_hash": config_hash(cfg), "seed": None})
    return EXIT_OK


def _bench_config(path: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read bench config: {exc}") from exc
    missing = {"codes", "decoders", "p_grid", "trials"} - set(cfg)
    if missing:
        raise UsageError(f"bench config lacks {sorted(missing)}")
    cfg.setdefault("seed", 0)
    cfg.setdefault("bp", {})
    cfg.setdefault("gnn_iterations", 30)
    return cfg


def _stage(name: str, code: codes.CssCode, cfg: dict):
    base = name.split("+")[0]
    if base == "bp":
        bp = cfg["bp"]
        return bench.BpStage(code, bp.get("scaling_factor", 1.0), bp.get("schedule", "serial"),
                             bp.get("max_iterations", 100))
    if base == "gnn":
        model_path = cfg.get("model")
        if isinstance(model_path, dict):
            model_path = model_path.get(code.name) or model_path.get(str(code.d))
        if not model_path:
            raise UsageError("gnn decoder requested but no model given")
        return bench.GnnStage(_load_model(model_path), code, cfg["gnn_iterations"])
    raise UsageError(f"unknown decoder {name!r} (use bp, bp+osd, gnn, gnn+osd)")


def run_bench(cfg: dict, out_dir: Path) -> tuple[list[dict], str]:
    h = config_hash(cfg)
    rows = []
    out_dir.mkdir(parents=True, exist_ok=True)
    for code_src in cfg["codes"]:
        code = _load_code(code_src)
        for dec in cfg["decoders"]:
            stage = _stage(dec, code, cfg)
            for p in cfg["p_grid"]:
                pt, trials = bench.estimate_ler(stage, dec.endswith("+osd"), code, float(p),
                                                int(cfg["trials"]), seed=int(cfg["seed"]))
                rows.append(bench.point_row(code, dec, pt, trials, int(cfg["seed"]), h))
                log.info("%s %s p=%.4f ler=%.4g", code.name, dec, p, pt.ler)
    return rows, h


def cmd_bench(args) -> int:
    cfg = _bench_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    out_dir = Path(args.out_dir)
    rows, h = run_bench(cfg, out_dir)
    csv_path = out_dir / "ler.csv"
    bench.write_csv(rows, csv_path)
    series = {}
    for row in rows:
        key = f"{row['code']} {row['decoder']}"
        series.setdefault(key, []).append(bench.LerPoint.from_counts(row["p"], row["failures"], row["trials"]))
    svg_path = out_dir / "ler.svg"
    bench.svg_plot(series, svg_path, title=f"config {h} seed {cfg['seed']}")
    _emit({"command": "bench", "csv": str(csv_path), "svg": str(svg_path), "points": len(rows),
           "config_hash": h, "seed": cfg["seed"]})
    return EXIT_OK


def cmd_threshold(args) -> int:
    if args.csv:
        rows = bench.read_csv(args.csv)
        h = rows[0]["config_hash"] if rows else config_hash({"csv": args.csv})
        seed = int(rows[0]["seed"]) if rows else None
    else:
        cfg = _bench_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        rows, h = run_bench(cfg, Path(args.out_dir))
        bench.write_csv(rows, Path(args.out_dir) / "ler.csv")
        seed = cfg["seed"]
    if not rows:
        raise UsageError("no LER points")
    decoder = args.decoder or rows[0]["decoder"]
    curves = bench.curves_from_rows(rows, decoder)
    if len(curves) < 2:
        raise UsageError(f"decoder {decoder!r} has curves for fewer than two distances")
    res = bench.threshold_estimate(curves)
    if args.svg:
        bench.svg_plot({f"d={d}": pts for d, pts in sorted(curves.items())}, args.svg,
                       title=f"{decoder} config {h} seed {seed}")
    _emit({"command": "threshold", "decoder": decoder, "found": res.found,
           "low": res.low if res.found else None, "high": res.high if res.found else None,
           "crossings": {f"{a}-{b}": c for (a, b), c in res.crossings.items()},
           "config_hash": h, "seed": seed})
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tanner-gnn", description="Message-passing decoders for CSS codes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    code = sub.add_parser("code", help="code definitions")
    code_sub = code.add_subparsers(dest="code_command", parser_class=_Parser, required=True)
    build = code_sub.add_parser("build", help="build and validate a code, optionally save its JSON")
    build.add_argument("--family", choices=("surface", "bb", "named"), default="named")
    build.add_argument("--name", default="surface_d3", help="bundled code name (family=named)")
    build.add_argument("--d", type=int)
    build.add_argument("--l", type=int)
    build.add_argument("--m", type=int)
    build.add_argument("--a", help='monomials of A as JSON, e.g. "[[3,0],[0,1],[0,2]]"')
    build.add_argument("--b", help="monomials of B as JSON")
    build.add_argument("--name-tag", dest="name_tag", default="")
    build.add_argument("-o", "--output")
    build.set_defaults(func=cmd_code_build)

    sample = sub.add_parser("sample", help="draw a dataset of depolarising errors")
    sample.add_argument("--code", required=True)
    sample.add_argument("--p-max", dest="p_max", type=float, default=0.15)
    sample.add_argument("--count", type=int, required=True)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--fixed-p", dest="fixed_p", action="store_true")
    sample.add_argument("-o", "--output", required=True)
    sample.set_defaults(func=cmd_sample)

    tr = sub.add_parser("train", help="train (or warm-start) a decoder")
    tr.add_argument("--code", required=True)
    tr.add_argument("--config", help="JSON training config")
    tr.add_argument("--init", help="checkpoint to warm-start from")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--learning-rate", dest="learning_rate", type=float)
    tr.add_argument("--samples-per-epoch", dest="samples_per_epoch", type=int)
    tr.add_argument("--log", help="per-epoch CSV log")
    tr.add_argument("-o", "--output", required=True, help="checkpoint path")
    tr.set_defaults(func=cmd_train)

    dec = sub.add_parser("decode", help="decode one syndrome (file or stdin)")
    dec.add_argument("--code", required=True)
    dec.add_argument("--decoder", choices=("gnn", "gnn+osd", "bp", "bp+osd"), default="gnn+osd")
    dec.add_argument("--model")
    dec.add_argument("--syndrome-file", dest="syndrome_file")
    dec.add_argument("--p", type=float, default=0.05, help="channel prior for BP")
    dec.add_argument("--iterations", type=int, default=30)
    dec.add_argument("--scaling", type=float, default=1.0)
    dec.add_argument("--schedule", choices=("serial", "flooding"), default="serial")
    dec.set_defaults(func=cmd_decode)

    be = sub.add_parser("bench", help="LER sweep from a config file; writes CSV and SVG")
    be.add_argument("--config", required=True)
    be.add_argument("--out-dir", dest="out_dir", default="bench_out")
    be.add_argument("--seed", type=int)
    be.set_defaults(func=cmd_bench)

    th = sub.add_parser("threshold", help="crossing-point threshold from a CSV or a bench config")
    src = th.add_mutually_exclusive_group(required=True)
    src.add_argument("--csv")
    src.add_argument("--config")
    th.add_argument("--decoder")
    th.add_argument("--out-dir", dest="out_dir", default="bench_out")
    th.add_argument("--seed", type=int)
    th.add_argument("--svg")
    th.set_defaults(func=cmd_threshold)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tanner-gnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"tanner-gnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, InconsistentSyndromeError, train.TrainingDivergedError) as exc:
        print(f"tanner-gnn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
