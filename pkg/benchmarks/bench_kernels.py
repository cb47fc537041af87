"""Time the hot kernels under the numba and the pure-numpy backend.

Each backend runs in its own interpreter because the choice is fixed at
import time. Usage::

    python benchmarks/bench_kernels.py [--repeats 3]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from tanner_gnn import _accel, bp, codes, gf2, gnn, noise

repeats = int(sys.argv[1])
code = codes.load_code("bb_72_12_6")
surf = codes.rotated_surface_code(5)
rng = np.random.default_rng(0)
mat = rng.integers(0, 2, (200, 400)).astype(np.uint8)
errs = noise.error_stream(code, 0.06, 200, seed=1)
syn = noise.compute_syndrome(code, errs)[:, code.h_x.shape[0]:]
dec = bp.BpDecoder(code.h_z, bp.BpConfig(50, "serial", 0.8, 0.04))
model = gnn.GnnModel.init(64, 128, 64, seed=0)
gi = gnn.GraphIndex.from_code(surf)
gsyn = noise.compute_syndrome(surf, noise.error_stream(surf, 0.05, 256, seed=2))

def timed(fn):
    fn()  # warm-up, includes JIT compilation
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best

res = {
    "backend": _accel.backend(),
    "gf2_rref_200x400": timed(lambda: gf2.rref(mat)),
    "bp_serial_bb72_200_shots": timed(lambda: [dec.decode(s) for s in syn]),
    "gnn_decode_d5_256_shots": timed(lambda: gnn.decode_batch(model, gi, gsyn, 30, early_stop=False)),
}
print(json.dumps(res))
"""


def run(disable: bool, repeats: int) -> dict:
    env = dict(os.environ, TANNER_GNN_NO_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, str(repeats)], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(out.stdout)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    fast, slow = run(False, args.repeats), run(True, args.repeats)
    print(f"{'kernel':32s} {fast['backend']:>10s} {slow['backend']:>10s} {'speedup':>8s}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:32s} {fast[key]:10.4f} {slow[key]:10.4f} {slow[key] / fast[key]:8.1f}x")


if __name__ == "__main__":
    main()
