"""Monte-Carlo logical error rates, OSD-call accounting and thresholds.

A pipeline is a first-stage decoder (min-sum BP or the GNN), optionally
followed by OSD-0 whenever the first stage leaves the syndrome unsatisfied.
A trial fails when the final correction misses the syndrome or when the
residual ``truth + correction`` flips any logical qubit; all ``k`` logicals
are judged jointly, so one flip fails the shot.

Decoders compared on the same ``(p, seed)`` see byte-identical error
streams, which is what makes OSD-call ratios meaningful.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import gf2, gnn, noise
from .bp import BpConfig, BpDecoder, depolarizing_marginal
from .codes import CssCode
from .osd import osd0_decode


def decoding_failures(code: CssCode, truth, correction) -> np.ndarray:
    """Per-shot failure flags for ``(batch, n)`` truth and correction words."""
    truth = np.atleast_2d(truth)
    correction = np.atleast_2d(correction)
    rx = noise.x_part(truth) ^ noise.x_part(correction)
    rz = noise.z_part(truth) ^ noise.z_part(correction)
    bad = gf2.matvec_mod2(code.h_z, rx).any(axis=1) | gf2.matvec_mod2(code.h_x, rz).any(axis=1)
    if code.k:
        bad |= gf2.matvec_mod2(code.logicals_z, rx).any(axis=1)
        bad |= gf2.matvec_mod2(code.logicals_x, rz).any(axis=1)
    return bad


@dataclass
class StageOutput:
    words: np.ndarray  # (B, n) Pauli words
    converged: np.ndarray  # (B,)
    iterations: np.ndarray  # (B,)
    rel_x: np.ndarray  # (B, n) higher = X component more likely flipped
    rel_z: np.ndarray


class BpStage:
    """Uncorrelated min-sum BP: ``H_Z`` decodes X errors, ``H_X`` decodes Z errors."""

    def __init__(self, code: CssCode, scaling_factor: float = 1.0, schedule: str = "serial",
                 max_iterations: int = 100):
        self.code = code
        self.name = "bp"
        cfg = BpConfig(max_iterations, schedule, scaling_factor, 0.05)
        self.dec_x = BpDecoder(code.h_z, cfg)
        self.dec_z = BpDecoder(code.h_x, cfg)

    def decode_batch(self, syndromes, p: float) -> StageOutput:
        syndromes = np.atleast_2d(syndromes)
        mx = self.code.h_x.shape[0]
        prior = depolarizing_marginal(p)
        bsz, n = syndromes.shape[0], self.code.n
        ex = np.zeros((bsz, n), dtype=np.uint8)
        ez = np.zeros((bsz, n), dtype=np.uint8)
        rel_x = np.zeros((bsz, n))
        rel_z = np.zeros((bsz, n))
        conv = np.zeros(bsz, dtype=bool)
        its = np.zeros(bsz, dtype=np.int64)
        for b, s in enumerate(syndromes):
            rx = self.dec_x.decode(s[mx:], prior)
            rz = self.dec_z.decode(s[:mx], prior)
            ex[b], ez[b] = rx.hard_decision, rz.hard_decision
            rel_x[b], rel_z[b] = -rx.soft_llrs, -rz.soft_llrs
            conv[b] = rx.converged and rz.converged
            its[b] = max(rx.iterations_used, rz.iterations_used)
        return StageOutput(noise.combine(ex, ez), conv, its, rel_x, rel_z)


class GnnStage:
    """The learned decoder; OSD reliabilities are ``P(T) + P(Y)`` per qubit."""

    def __init__(self, model: gnn.GnnModel, code: CssCode, max_iterations: int = 30, batch_size: int = 1024):
        self.model = model
        self.code = code
        self.name = "gnn"
        self.max_iterations = max_iterations
        self.batch_size = batch_size
        self.gi = gnn.GraphIndex.from_code(code)

    def decode_batch(self, syndromes, p: float | None = None) -> StageOutput:
        syndromes = np.atleast_2d(syndromes)
        parts = []
        for lo in range(0, syndromes.shape[0], self.batch_size):
            parts.append(gnn.decode_batch(self.model, self.gi, syndromes[lo:lo + self.batch_size],
                                          self.max_iterations))
        probs = np.concatenate([o.class_probs for o in parts]).astype(np.float64)
        return StageOutput(
            np.concatenate([o.hard_error for o in parts]),
            np.concatenate([o.converged for o in parts]),
            np.concatenate([o.iterations_used for o in parts]),
            probs[..., 1] + probs[..., 3],
            probs[..., 2] + probs[..., 3],
        )


@dataclass
class TrialRecord:
    p: float
    decoder_id: str
    converged_first_stage: bool
    osd_invoked: bool
    logical_failure: bool
    iterations_used: int


@dataclass
class Trials:
    """Columnar trial records of one pipeline on one error stream."""

    p: float
    decoder_id: str
    converged_first_stage: np.ndarray
    osd_invoked: np.ndarray
    logical_failure: np.ndarray
    iterations_used: np.ndarray

    def __len__(self) -> int:
        return len(self.logical_failure)

    def records(self) -> list[TrialRecord]:
        return [TrialRecord(self.p, self.decoder_id, bool(c), bool(o), bool(f), int(i))
                for c, o, f, i in zip(self.converged_first_stage, self.osd_invoked,
                                      self.logical_failure, self.iterations_used)]


def _pipeline_id(stage, use_osd: bool) -> str:
    return stage.name + ("+osd" if use_osd else "")


def decode_with_osd(first_stage, code: CssCode, syndromes, p: float, use_osd: bool = True):
    """First-stage decode plus OSD-0 on unconverged shots.

    Returns ``(stage_output, words, osd_used)``. Only the sectors whose
    syndrome is still unsatisfied are handed to OSD.
    """
    syndromes = np.atleast_2d(syndromes)
    out = first_stage.decode_batch(syndromes, p)
    words = out.words.copy()
    osd_used = np.zeros(len(words), dtype=bool)
    if use_osd:
        mx = code.h_x.shape[0]
        for b in np.flatnonzero(~out.converged):
            ex, ez = noise.x_part(words[b]), noise.z_part(words[b])
            sx, sz = syndromes[b, :mx], syndromes[b, mx:]
            if not np.array_equal(gf2.matvec_mod2(code.h_z, ex), sz):
                ex = osd0_decode(code.h_z, sz, out.rel_x[b])
                osd_used[b] = True
            if not np.array_equal(gf2.matvec_mod2(code.h_x, ez), sx):
                ez = osd0_decode(code.h_x, sx, out.rel_z[b])
                osd_used[b] = True
            words[b] = noise.combine(ex, ez)
    return out, words, osd_used


def run_pipeline_batch(first_stage, use_osd: bool, code: CssCode, syndromes, truths, p: float) -> Trials:
    out, words, osd_used = decode_with_osd(first_stage, code, syndromes, p, use_osd)
    fails = decoding_failures(code, np.atleast_2d(truths), words)
    return Trials(float(p), _pipeline_id(first_stage, use_osd), out.converged.copy(), osd_used, fails,
                  out.iterations.copy())


def run_pipeline(first_stage, use_osd: bool, code: CssCode, syndrome, truth, p: float = 0.05) -> TrialRecord:
    """Decode one syndrome and judge it against ``truth``."""
    return run_pipeline_batch(first_stage, use_osd, code, np.asarray(syndrome)[None, :],
                              np.asarray(truth)[None, :], p).records()[0]


def wilson_interval(failures: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    phat = failures / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if failures == 0 else max(0.0, centre - half)
    hi = 1.0 if failures == trials else min(1.0, centre + half)
    return lo, hi


@dataclass
class LerPoint:
    p: float
    trials: int
    failures: int
    ler: float
    ci_low: float
    ci_high: float

    @classmethod
    def from_counts(cls, p: float, failures: int, trials: int) -> "LerPoint":
        lo, hi = wilson_interval(failures, trials)
        ler = failures / trials
        return cls(float(p), int(trials), int(failures), ler, min(lo, ler), max(hi, ler))


def estimate_ler(first_stage, use_osd: bool, code: CssCode, p: float, num_trials: int,
                 seed: int = 0, chunk: int = 4096) -> tuple[LerPoint, Trials]:
    """LER at fixed ``p`` over ``num_trials`` i.i.d. shots drawn from ``seed``."""
    if num_trials < 1:
        raise ValueError("num_trials must be >= 1")
    errors = noise.error_stream(code, p, num_trials, seed)
    syndromes = noise.compute_syndrome(code, errors)
    parts = [run_pipeline_batch(first_stage, use_osd, code, syndromes[lo:lo + chunk],
                                errors[lo:lo + chunk], p)
             for lo in range(0, num_trials, chunk)]
    trials = Trials(float(p), parts[0].decoder_id,
                    *(np.concatenate([getattr(t, f) for t in parts])
                      for f in ("converged_first_stage", "osd_invoked", "logical_failure", "iterations_used")))
    return LerPoint.from_counts(p, int(trials.logical_failure.sum()), num_trials), trials


@dataclass
class SpeedupResult:
    ratio: float
    baseline_failures: int
    subject_failures: int
    defined: bool


def speedup(baseline: Trials, subject: Trials) -> SpeedupResult:
    """Ratio of first-stage failures (= OSD calls) baseline / subject.

    ``math.inf`` when the subject never fails; ``1.0`` with ``defined=False``
    when the baseline never fails.
    """
    if len(baseline) != len(subject):
        raise ValueError("speedup needs the same trial stream for both decoders")
    fb = int((~np.asarray(baseline.converged_first_stage)).sum())
    fs = int((~np.asarray(subject.converged_first_stage)).sum())
    if fb == 0:
        return SpeedupResult(1.0, fb, fs, False)
    if fs == 0:
        return SpeedupResult(math.inf, fb, fs, True)
    return SpeedupResult(fb / fs, fb, fs, True)


@dataclass
class ThresholdResult:
    found: bool
    low: float
    high: float
    crossings: dict  # (d_small, d_large) -> p or None

    @property
    def estimate(self) -> float:
        return 0.5 * (self.low + self.high) if self.found else float("nan")


def _log_ler(pt: LerPoint) -> float:
    return math.log(max(pt.ler, 0.5 / pt.trials))


def pair_crossing(small: list[LerPoint], large: list[LerPoint]) -> float | None:
    """First ``p`` where the larger code stops beating the smaller one.

    Interpolates linearly in ``log LER`` between grid points. ``None`` when
    the sign of ``log LER_large - log LER_small`` never goes from negative
    to non-negative on the common grid.
    """
    a = {round(pt.p, 12): pt for pt in small}
    b = {round(pt.p, 12): pt for pt in large}
    grid = sorted(set(a) & set(b))
    diffs = [(p, _log_ler(b[p]) - _log_ler(a[p])) for p in grid]
    for (p0, f0), (p1, f1) in zip(diffs, diffs[1:]):
        if f0 < 0 <= f1:
            return p0 + (p1 - p0) * (-f0) / (f1 - f0)
    return None


def threshold_estimate(curves: dict[int, list[LerPoint]]) -> ThresholdResult:
    """Bracket of all pairwise crossings of LER curves keyed by distance."""
    if len(curves) < 2:
        raise ValueError("need curves for at least two distances")
    ds = sorted(curves)
    crossings = {}
    for i, d1 in enumerate(ds):
        for d2 in ds[i + 1:]:
            crossings[(d1, d2)] = pair_crossing(curves[d1], curves[d2])
    found = [c for c in crossings.values() if c is not None]
    if not found:
        return ThresholdResult(False, float("nan"), float("nan"), crossings)
    return ThresholdResult(True, min(found), max(found), crossings)


CSV_FIELDS = ("code", "distance", "decoder", "p", "trials", "failures", "ler", "ci_low", "ci_high",
              "osd_calls", "first_stage_failures", "seed", "config_hash")


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in CSV_FIELDS})


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def curves_from_rows(rows: list[dict], decoder: str) -> dict[int, list[LerPoint]]:
    curves: dict[int, list[LerPoint]] = {}
    for row in rows:
        if row["decoder"] != decoder:
            continue
        pt = LerPoint.from_counts(float(row["p"]), int(row["failures"]), int(row["trials"]))
        curves.setdefault(int(row["distance"]), []).append(pt)
    return {d: sorted(v, key=lambda pt: pt.p) for d, v in curves.items()}


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def svg_plot(series: dict[str, list[LerPoint]], path, title: str = "") -> None:
    """Log-log LER vs p plot written as a standalone SVG file."""
    w, h, ml, mr, mt, mb = 640, 440, 70, 150, 30, 50
    pts = [pt for s in series.values() for pt in s]
    xs = [pt.p for pt in pts if pt.p > 0]
    floor = min((0.5 / pt.trials for pt in pts), default=1e-4)
    ys = [max(pt.ler, floor) for pt in pts]
    if not xs:
        xs = [1e-2, 1e-1]
    x0, x1 = math.log10(min(xs)), math.log10(max(xs))
    y0, y1 = math.floor(math.log10(min(ys or [1e-4]))), 0.0
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.1, x1 + 0.1

    def sx(p):
        return ml + (math.log10(p) - x0) / (x1 - x0) * (w - ml - mr)

    def sy(v):
        return mt + (y1 - math.log10(max(v, floor))) / (y1 - y0) * (h - mt - mb)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">',
           f'<rect width="{w}" height="{h}" fill="white"/>',
           f'<text x="{w / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
           f'<rect x="{ml}" y="{mt}" width="{w - ml - mr}" height="{h - mt - mb}" fill="none" stroke="black"/>']
    for e in range(int(y0), 1):
        y = sy(10.0 ** e)
        out.append(f'<line x1="{ml}" y1="{y:.1f}" x2="{w - mr}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{ml - 6}" y="{y + 4:.1f}" text-anchor="end">1e{e}</text>')
    for p in sorted(set(round(x, 6) for x in xs)):
        x = sx(p)
        out.append(f'<line x1="{x:.1f}" y1="{h - mb}" x2="{x:.1f}" y2="{h - mb + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{h - mb + 16}" text-anchor="middle">{p:g}</text>')
    out.append(f'<text x="{(ml + w - mr) / 2}" y="{h - 10}" text-anchor="middle">physical error rate p</text>')
    out.append(f'<text x="16" y="{(mt + h - mb) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(mt + h - mb) / 2})">logical error rate</text>')
    for i, (label, s) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        s = sorted(s, key=lambda pt: pt.p)
        path_d = " ".join(f"{'M' if j == 0 else 'L'}{sx(pt.p):.1f},{sy(pt.ler):.1f}" for j, pt in enumerate(s))
        out.append(f'<path d="{path_d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for pt in s:
            out.append(f'<circle cx="{sx(pt.p):.1f}" cy="{sy(pt.ler):.1f}" r="2.5" fill="{color}"/>')
        ly = mt + 14 + 16 * i
        out.append(f'<line x1="{w - mr + 10}" y1="{ly - 4}" x2="{w - mr + 28}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{w - mr + 32}" y="{ly}">{label}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def point_row(code: CssCode, decoder: str, pt: LerPoint, trials: Trials, seed: int, config_hash: str) -> dict:
    row = {"code": code.name, "distance": code.d, "decoder": decoder, **asdict(pt),
           "osd_calls": int(trials.osd_invoked.sum()),
           "first_stage_failures": int((~trials.converged_first_stage).sum()),
           "seed": seed, "config_hash": config_hash}
    return row
