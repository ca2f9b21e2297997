"""Agreement metrics (PCC, SRCC) and per-canceller stack ranking.

Correlations that are undefined (fewer than two points once grouped, or a
zero-variance side) are reported as None rather than 0 or NaN, and serialized
as JSON null; consumers must handle the flag explicitly.

Axis conventions for pooled per-clip metrics and per-model means: the echo
axis uses far-end single talk and double talk clips, the other axis uses
near-end single talk and double talk clips (the remaining scenario pins that
axis at 5 by construction, which would only dilute the comparison).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    LengthMismatchError,
    MissingPredictionError,
    SingleModelError,
    TooShortError,
)
from .synthdata import DatasetManifest
from .types import MosPair, Scenario

VARIANCE_FLOOR = 1e-15

ECHO_SCENARIOS = (Scenario.FAR_END_SINGLE_TALK, Scenario.DOUBLE_TALK)
OTHER_SCENARIOS = (Scenario.NEAR_END_SINGLE_TALK, Scenario.DOUBLE_TALK)


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("inputs must be 1-D sequences")
    if x.size != y.size:
        raise LengthMismatchError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise TooShortError("correlation needs at least two points")
    return x, y


def pearson(x, y) -> Optional[float]:
    """Sample Pearson correlation; None when either side has ~zero variance."""
    x, y = _check_pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    ssx = float(xc @ xc)
    ssy = float(yc @ yc)
    n1 = x.size - 1
    if ssx / n1 < VARIANCE_FLOOR or ssy / n1 < VARIANCE_FLOOR:
        return None
    r = float(xc @ yc) / float(np.sqrt(ssx * ssy))
    return float(np.clip(r, -1.0, 1.0))


def fractional_ranks(x) -> np.ndarray:
    """1-based ranks; ties receive the average of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> Optional[float]:
    """Spearman rank correlation: Pearson over fractional ranks."""
    x, y = _check_pair(x, y)
    return pearson(fractional_ranks(x), fractional_ranks(y))


@dataclass
class EvalReport:
    per_clip_pcc: dict
    per_scenario: dict
    per_model_pcc: dict
    per_model_srcc: dict
    model_means: dict
    n_clips: int
    version: int = 1

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "n_clips": self.n_clips,
            "per_clip_pcc": self.per_clip_pcc,
            "per_scenario": self.per_scenario,
            "per_model_pcc": self.per_model_pcc,
            "per_model_srcc": self.per_model_srcc,
            "model_means": self.model_means,
            "ranking_by_echo": self.ranking_by_echo(),
            "ranking_by_other": self.ranking_by_other(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def _ranking(self, key: str) -> list:
        # models whose mean is undefined (no clips on that axis) sort last
        def sort_key(mid):
            value = self.model_means[mid][key]
            return (value is None, -value if value is not None else 0.0, mid)
        return sorted(self.model_means, key=sort_key)

    def ranking_by_echo(self) -> list:
        return self._ranking("pred_echo")

    def ranking_by_other(self) -> list:
        return self._ranking("pred_other")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "n_clips_echo", "n_clips_other",
                         "pred_echo", "oracle_echo", "pred_other", "oracle_other"])
        for mid in sorted(self.model_means):
            m = self.model_means[mid]
            writer.writerow([mid, m["n_echo"], m["n_other"],
                             m["pred_echo"], m["oracle_echo"],
                             m["pred_other"], m["oracle_other"]])
        writer.writerow([])
        writer.writerow(["metric", "axis", "value"])
        for metric, table in (("per_clip_pcc", self.per_clip_pcc),
                              ("per_model_pcc", self.per_model_pcc),
                              ("per_model_srcc", self.per_model_srcc)):
            for axis in ("echo", "other"):
                value = table[axis]
                writer.writerow([metric, axis, "" if value is None else value])
        return buf.getvalue()


def _mean(values: list) -> Optional[float]:
    return float(np.mean(values)) if values else None


def rank_models(manifest: DatasetManifest, predictions: dict) -> EvalReport:
    """Compare predictions against oracle labels clip-by-clip and model-by-model.

    `predictions` maps each entry's enhanced-clip path (as recorded in the
    manifest) to a MosPair. Per-model scores are means over that model's
    clips; PCC/SRCC between mean vectors need at least two models.
    """
    for entry in manifest.entries:
        if entry.enhanced not in predictions:
            raise MissingPredictionError(f"no prediction for {entry.enhanced}")
    # canonical clip order makes the report exactly permutation-invariant
    entries = sorted(manifest.entries, key=lambda e: e.enhanced)

    def collect(scenarios, axis: str):
        oracle, pred = [], []
        for e in entries:
            if e.scenario in scenarios:
                p = predictions[e.enhanced]
                oracle.append(getattr(e, axis))
                pred.append(getattr(p, axis))
        return oracle, pred

    def safe_pcc(oracle, pred) -> Optional[float]:
        if len(oracle) < 2:
            return None
        return pearson(oracle, pred)

    per_clip = {
        "echo": safe_pcc(*collect(ECHO_SCENARIOS, "echo_mos")),
        "other": safe_pcc(*collect(OTHER_SCENARIOS, "other_mos")),
    }
    per_scenario = {}
    for scenario in Scenario:
        per_scenario[scenario.value] = {
            "echo": safe_pcc(*collect((scenario,), "echo_mos")),
            "other": safe_pcc(*collect((scenario,), "other_mos")),
        }

    by_model: dict = {}
    for e in entries:
        by_model.setdefault(e.aec_id, []).append(e)
    if len(by_model) < 2:
        raise SingleModelError("per-model correlations need at least two models")

    model_means = {}
    for mid in sorted(by_model):
        rows = by_model[mid]
        echo_rows = [e for e in rows if e.scenario in ECHO_SCENARIOS]
        other_rows = [e for e in rows if e.scenario in OTHER_SCENARIOS]
        model_means[mid] = {
            "pred_echo": _mean([predictions[e.enhanced].echo_mos for e in echo_rows]),
            "oracle_echo": _mean([e.echo_mos for e in echo_rows]),
            "pred_other": _mean([predictions[e.enhanced].other_mos for e in other_rows]),
            "oracle_other": _mean([e.other_mos for e in other_rows]),
            "n_echo": len(echo_rows),
            "n_other": len(other_rows),
        }

    def model_corr(metric: Callable, axis: str) -> Optional[float]:
        ids = [mid for mid in sorted(model_means)
               if model_means[mid][f"pred_{axis}"] is not None]
        if len(ids) < 2:
            return None
        oracle = [model_means[mid][f"oracle_{axis}"] for mid in ids]
        pred = [model_means[mid][f"pred_{axis}"] for mid in ids]
        return metric(oracle, pred)

    per_model_pcc = {"echo": model_corr(pearson, "echo"),
                     "other": model_corr(pearson, "other")}
    per_model_srcc = {"echo": model_corr(spearman, "echo"),
                      "other": model_corr(spearman, "other")}

    return EvalReport(per_clip_pcc=per_clip, per_scenario=per_scenario,
                      per_model_pcc=per_model_pcc, per_model_srcc=per_model_srcc,
                      model_means=model_means, n_clips=len(manifest.entries))


def save_report(report: EvalReport, json_path=None, csv_path=None) -> None:
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
