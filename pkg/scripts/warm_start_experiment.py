"""Warm start versus cold start on the distance-5 surface code.

For each seed, one run continues training the distance-3 checkpoint on d=5
and one run trains a freshly initialised model with the same config. Both
stop at the first epoch whose test LER at ``test_p`` falls below
``stop_ler_factor * test_p``. The epoch counts go to a JSON record that the
acceptance suite reads::

    python scripts/warm_start_experiment.py --init models/surface_d3.ckpt \
        --out models/warm_start_d5.json
"""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path

from tanner_gnn import codes, gnn, train
from tanner_gnn.cli import config_hash

log = logging.getLogger("warm_start")


def run(init: gnn.GnnModel, seeds, max_epochs: int, samples: int, test_size: int, base: dict,
        log_dir: Path | None) -> list[dict]:
    code = codes.rotated_surface_code(5)
    runs = []
    for seed in seeds:
        for mode in ("warm", "cold"):
            cfg = train.TrainConfig.from_dict({**base, "epochs": max_epochs, "samples_per_epoch": samples,
                                               "test_size": test_size, "seed": seed, "stop_rule": "ler"})
            log_path = log_dir / f"d5_{mode}_seed{seed}.csv" if log_dir else None
            if mode == "warm":
                _, hist = train.warm_start(init, code, cfg, log_path=log_path)
            else:
                model = gnn.GnnModel.init(cfg.node_dim, cfg.msg_hidden, cfg.edge_dim, seed=seed)
                _, hist = train.train(model, code, cfg, log_path=log_path)
            hit = next((r["epoch"] for r in hist if r["criterion_met"]), None)
            runs.append({"seed": seed, "mode": mode, "epochs_to_target": hit,
                         "test_ler": [r["test_ler"] for r in hist]})
            log.info("seed %d %s: target reached at epoch %s", seed, mode, hit)
    return runs


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--init", required=True, help="distance-3 checkpoint")
    ap.add_argument("--out", required=True)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--max-epochs", type=int, default=6)
    ap.add_argument("--samples-per-epoch", type=int, default=20_000)
    ap.add_argument("--test-size", type=int, default=5_000)
    ap.add_argument("--log-dir", help="directory for per-run CSV logs")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    init = gnn.load_model(args.init)
    base = dict(init.meta["config"])
    log_dir = Path(args.log_dir) if args.log_dir else None
    if log_dir:
        log_dir.mkdir(parents=True, exist_ok=True)
    runs = run(init, args.seeds, args.max_epochs, args.samples_per_epoch, args.test_size, base, log_dir)
    protocol = {"init": Path(args.init).name, "init_epochs": init.meta.get("epochs"), "base_config": base,
                "max_epochs": args.max_epochs, "samples_per_epoch": args.samples_per_epoch,
                "test_size": args.test_size, "seeds": args.seeds}
    record = {**protocol, "test_p": base["test_p"],
              "target_ler": base["stop_ler_factor"] * base["test_p"],
              "config_hash": config_hash(protocol), "runs": runs}
    Path(args.out).write_text(json.dumps(record, indent=2) + "\n")


if __name__ == "__main__":
    main()
