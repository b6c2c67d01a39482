"""Dataset ingestion, split protocols, the multi-round experiment and ablations.

The standard protocol draws 5 independent random train/test splits from
recorded seeds (400/100 for the 500-image preset) and reports the arithmetic
mean of the per-round metrics. Datasets that ship predefined splits load them
verbatim from one-id-per-line files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, IngestionError
from .metrics import mae, pearson, rmse
from .ridge import RidgeHyperPrior, fit, predict

DEFAULT_TAU1 = 2.75
DEFAULT_TAU2 = 0.02


@dataclass(frozen=True)
class ManifestRow:
    image_id: str
    path: str
    score: float


@dataclass
class DatasetManifest:
    name: str
    rows: list[ManifestRow]

    def __post_init__(self) -> None:
        seen = set()
        for row in self.rows:
            if row.image_id in seen:
                raise IngestionError(f"duplicate image id {row.image_id!r}")
            seen.add(row.image_id)
            if not np.isfinite(row.score):
                raise IngestionError(f"non-finite score for {row.image_id!r}")

    @property
    def ids(self) -> list[str]:
        return [r.image_id for r in self.rows]

    def scores(self) -> dict[str, float]:
        return {r.image_id: r.score for r in self.rows}


def load_manifest(path, name: str | None = None) -> DatasetManifest:
    """Read the `id,path,score` CSV (with header)."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "path", "score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise IngestionError(f"manifest {path} must have columns id,path,score")
        for record in reader:
            try:
                score = float(record["score"])
            except ValueError:
                raise IngestionError(
                    f"bad score {record['score']!r} for id {record['id']!r}"
                ) from None
            rows.append(ManifestRow(record["id"], record["path"], score))
    from pathlib import Path

    return DatasetManifest(name=name or Path(path).stem, rows=rows)


@dataclass(frozen=True)
class SplitPlan:
    round_index: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int | None = None

    def __post_init__(self) -> None:
        if set(self.train_ids) & set(self.test_ids):
            raise IngestionError(
                f"round {self.round_index}: train and test sets overlap"
            )


@dataclass(frozen=True)
class RandomSplitProtocol:
    """Per-round seeded random splits; the 500-image preset is 400/100 x 5."""

    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    train_size: int = 400
    test_size: int = 100


@dataclass(frozen=True)
class PredefinedSplitProtocol:
    """Pairs of (train file, test file), one id per line, loaded verbatim."""

    pairs: tuple[tuple[str, str], ...]


def _read_id_file(path) -> tuple[str, ...]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return tuple(line.strip() for line in fh if line.strip())
    except OSError as exc:
        raise IngestionError(f"cannot read split file {path}: {exc}") from None


def make_splits(
    manifest: DatasetManifest,
    protocol: RandomSplitProtocol | PredefinedSplitProtocol,
) -> list[SplitPlan]:
    if isinstance(protocol, PredefinedSplitProtocol):
        plans = []
        known = set(manifest.ids)
        for i, (train_path, test_path) in enumerate(protocol.pairs, start=1):
            train = _read_id_file(train_path)
            test = _read_id_file(test_path)
            missing = [x for x in (*train, *test) if x not in known]
            if missing:
                raise IngestionError(
                    f"split round {i} references unknown id {missing[0]!r}"
                )
            plans.append(SplitPlan(i, train, test))
        return plans

    total = protocol.train_size + protocol.test_size
    ids = sorted(manifest.ids)
    if len(ids) < total:
        raise IngestionError(
            f"protocol needs at least {total} rows, manifest has {len(ids)}"
        )
    plans = []
    for i, seed in enumerate(protocol.seeds, start=1):
        order = np.random.default_rng(seed).permutation(len(ids))
        chosen = [ids[j] for j in order[:total]]
        plans.append(
            SplitPlan(
                i,
                tuple(chosen[: protocol.train_size]),
                tuple(chosen[protocol.train_size:]),
                seed=seed,
            )
        )
    return plans


@dataclass(frozen=True)
class SamplePrediction:
    image_id: str
    actual: float
    predicted: float

    @property
    def eps(self) -> float:
        return abs(self.actual - self.predicted)


@dataclass
class RoundResult:
    round_index: int
    mae: float
    rmse: float
    pc: float
    samples: list[SamplePrediction]


@dataclass
class ExperimentReport:
    config: dict
    rounds: list[RoundResult]

    @property
    def mae(self) -> float:
        return float(np.mean([r.mae for r in self.rounds]))

    @property
    def rmse(self) -> float:
        return float(np.mean([r.rmse for r in self.rounds]))

    @property
    def pc(self) -> float:
        return float(np.mean([r.pc for r in self.rounds]))

    def samples(self) -> list[SamplePrediction]:
        return [s for r in self.rounds for s in r.samples]

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "rounds": [
                {
                    "round": r.round_index,
                    "mae": r.mae,
                    "rmse": r.rmse,
                    "pc": r.pc,
                    "samples": [
                        {
                            "id": s.image_id,
                            "actual": s.actual,
                            "predicted": s.predicted,
                            "eps": s.eps,
                        }
                        for s in r.samples
                    ],
                }
                for r in self.rounds
            ],
            "average": {"mae": self.mae, "rmse": self.rmse, "pc": self.pc},
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def summary_csv(self) -> str:
        lines = ["round,mae,rmse,pc"]
        for r in self.rounds:
            lines.append(f"{r.round_index},{r.mae!r},{r.rmse!r},{r.pc!r}")
        lines.append(f"avg,{self.mae!r},{self.rmse!r},{self.pc!r}")
        return "\n".join(lines) + "\n"


def report_from_json(text: str) -> ExperimentReport:
    doc = json.loads(text)
    rounds = [
        RoundResult(
            round_index=int(r["round"]),
            mae=float(r["mae"]),
            rmse=float(r["rmse"]),
            pc=float(r["pc"]),
            samples=[
                SamplePrediction(s["id"], float(s["actual"]), float(s["predicted"]))
                for s in r["samples"]
            ],
        )
        for r in doc["rounds"]
    ]
    return ExperimentReport(config=doc.get("config", {}), rounds=rounds)


def _bayes_ridge_regressor(prior: RidgeHyperPrior):
    def train(x_train, y_train):
        model = fit(x_train, y_train, prior)
        return lambda x_test: predict(model, x_test)

    return train


def run_experiment(
    manifest: DatasetManifest,
    splits: Sequence[SplitPlan],
    features: Mapping[str, np.ndarray],
    prior: RidgeHyperPrior = RidgeHyperPrior(),
    config: dict | None = None,
    regressor: Callable | None = None,
) -> ExperimentReport:
    """Fit on each round's train split, predict its test split, average.

    ``regressor(x_train, y_train)`` must return a predictor callable; the
    default trains the Bayesian ridge under ``prior``.
    """
    scores = manifest.scores()
    for plan in splits:
        for image_id in (*plan.train_ids, *plan.test_ids):
            if image_id not in features:
                raise IngestionError(f"missing feature row for id {image_id!r}")
            if image_id not in scores:
                raise IngestionError(f"id {image_id!r} not present in the manifest")
    train = regressor if regressor is not None else _bayes_ridge_regressor(prior)

    rounds = []
    for plan in splits:
        x_train = np.stack([features[i] for i in plan.train_ids])
        y_train = np.array([scores[i] for i in plan.train_ids])
        x_test = np.stack([features[i] for i in plan.test_ids])
        y_test = np.array([scores[i] for i in plan.test_ids])
        y_hat = np.asarray(train(x_train, y_train)(x_test), dtype=np.float64)
        samples = [
            SamplePrediction(i, float(a), float(p))
            for i, a, p in zip(plan.test_ids, y_test, y_hat)
        ]
        round_mae = mae(y_hat, y_test)
        round_rmse = rmse(y_hat, y_test)
        assert round_rmse >= round_mae - 1e-12  # power-mean inequality
        rounds.append(
            RoundResult(
                round_index=plan.round_index,
                mae=round_mae,
                rmse=round_rmse,
                pc=pearson(y_hat, y_test),
                samples=samples,
            )
        )
    return ExperimentReport(config=dict(config or {}), rounds=rounds)


def epsilon_analysis(
    report: ExperimentReport,
    tau1: float = DEFAULT_TAU1,
    tau2: float = DEFAULT_TAU2,
) -> tuple[list[SamplePrediction], list[SamplePrediction]]:
    """Partition per-sample predictions into badly predicted (eps >= tau1)
    and well fitted (eps <= tau2) groups."""
    if not tau1 > tau2 >= 0:
        raise ConfigurationError(f"need tau1 > tau2 >= 0, got {tau1} and {tau2}")
    samples = report.samples()
    bad = [s for s in samples if s.eps >= tau1]
    good = [s for s in samples if s.eps <= tau2]
    return bad, good


@dataclass
class ComparisonTable:
    """One experiment per variant, with the best-PC row flagged."""

    reports: dict[str, ExperimentReport]

    def best_variant(self) -> str:
        return max(self.reports, key=lambda v: self.reports[v].pc)

    def to_csv(self) -> str:
        best = self.best_variant()
        lines = ["variant,mae,rmse,pc,best"]
        for variant, report in self.reports.items():
            flag = "yes" if variant == best else "no"
            lines.append(f"{variant},{report.mae!r},{report.rmse!r},{report.pc!r},{flag}")
        return "\n".join(lines) + "\n"

    def pc_series_csv(self) -> str:
        lines = ["variant,pc"]
        for variant, report in self.reports.items():
            lines.append(f"{variant},{report.pc!r}")
        return "\n".join(lines) + "\n"


def ablation_suite(
    manifest: DatasetManifest,
    splits: Sequence[SplitPlan],
    variant_features: Mapping[str, Mapping[str, np.ndarray] | Callable[[], Mapping[str, np.ndarray]]],
    prior: RidgeHyperPrior = RidgeHyperPrior(),
) -> ComparisonTable:
    """Run one experiment per variant over the same split plans.

    ``variant_features`` maps a variant label to its feature rows, or to a
    zero-argument callable producing them (so expensive extractions stay lazy).
    """
    if not variant_features:
        raise ConfigurationError("ablation needs at least one variant")
    reports = {}
    for variant, source in variant_features.items():
        features = source() if callable(source) else source
        reports[variant] = run_experiment(
            manifest, splits, features, prior, config={"variant": variant}
        )
    return ComparisonTable(reports=reports)
