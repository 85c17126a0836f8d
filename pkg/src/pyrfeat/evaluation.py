"""Stratified validation schemes and binary classification metrics.

Schemes are the five holdout ratios 90:10, 80:20, 70:30, 60:40, 50:50
(train fraction first) plus stratified 10-fold cross-validation. Splits
are drawn per class from a seeded generator, so class ratios are preserved
within one sample and every split is reproducible from (scheme, seed).

For k-fold runs the per-fold predictions are pooled into one confusion
matrix for the primary metrics; per-fold metric mean and standard
deviation are reported alongside. Holdout schemes support R repeated
draws (repeat r reseeds with [seed, r]) aggregated the same way.

Positive class is label 1 (malign). Metrics with a zero denominator
evaluate to 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .imagecore import DatasetManifest
from .svm import KernelParams, SvmModel, train

HOLDOUT_RATIOS = {"90:10": 0.9, "80:20": 0.8, "70:30": 0.7, "60:40": 0.6, "50:50": 0.5}
KFOLD_K = 10

METRIC_NAMES = ("sensitivity", "specificity", "accuracy", "f1", "gmean")


@dataclass(frozen=True)
class SplitScheme:
    """kind="holdout" with a train fraction from the fixed ratio set, or
    kind="kfold" with k=10."""

    kind: str
    train_fraction: float | None = None
    k: int | None = None

    def __post_init__(self) -> None:
        if self.kind == "holdout":
            if self.train_fraction not in HOLDOUT_RATIOS.values():
                raise ValidationError(
                    f"holdout train fraction must be one of "
                    f"{sorted(HOLDOUT_RATIOS.values())}, got {self.train_fraction}"
                )
        elif self.kind == "kfold":
            if self.k != KFOLD_K:
                raise ValidationError(f"kfold uses k={KFOLD_K}, got {self.k}")
        else:
            raise ValidationError(f"unknown scheme kind {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "holdout":
            train = int(round(self.train_fraction * 100))
            return f"{train}:{100 - train}"
        return f"{self.k}-fold"


def parse_scheme(text: str) -> SplitScheme:
    """"90:10" ... "50:50" -> holdout; "kfold" or "10-fold" -> k-fold."""
    text = text.strip().lower()
    if text in ("kfold", "10-fold", "k-fold"):
        return SplitScheme(kind="kfold", k=KFOLD_K)
    if text in HOLDOUT_RATIOS:
        return SplitScheme(kind="holdout", train_fraction=HOLDOUT_RATIOS[text])
    raise ValidationError(
        f"unknown scheme {text!r}; expected one of "
        f"{', '.join(HOLDOUT_RATIOS)} or 'kfold'"
    )


ALL_SCHEMES = tuple(list(HOLDOUT_RATIOS) + ["kfold"])


@dataclass(frozen=True)
class SplitPlan:
    """Sample assignments for one seeded draw of a scheme.

    holdout: assignment 0 = train, 1 = test.
    kfold:   assignment = fold index in 0..k-1 (the held-out fold per round).
    """

    scheme: SplitScheme
    seed: int
    assignments: np.ndarray

    def train_test(self, fold: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        if self.scheme.kind == "holdout":
            return np.flatnonzero(self.assignments == 0), np.flatnonzero(self.assignments == 1)
        if fold is None:
            raise ValidationError("kfold plans need a fold index")
        return np.flatnonzero(self.assignments != fold), np.flatnonzero(self.assignments == fold)


def _labels_of(source: DatasetManifest | np.ndarray) -> np.ndarray:
    if isinstance(source, DatasetManifest):
        return source.labels
    labels = np.asarray(source)
    if labels.ndim != 1:
        raise ValidationError("labels must be 1-D")
    return labels


def make_splits(
    source: DatasetManifest | np.ndarray, scheme: SplitScheme, seed: int
) -> SplitPlan:
    """Draw one stratified split plan; per-class counts differ by at most
    one from exact proportionality (rounding)."""
    labels = _labels_of(source)
    n = len(labels)
    rng = np.random.default_rng(seed)
    assignments = np.full(n, -1, dtype=np.int64)
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        order = rng.permutation(len(members))
        shuffled = members[order]
        if scheme.kind == "holdout":
            n_train = int(round(scheme.train_fraction * len(members)))
            if n_train == 0 or n_train == len(members):
                raise ValidationError(
                    f"class {cls}: {len(members)} samples cannot stratify "
                    f"a {scheme.name} holdout (empty partition)"
                )
            assignments[shuffled[:n_train]] = 0
            assignments[shuffled[n_train:]] = 1
        else:
            if len(members) < scheme.k:
                raise ValidationError(
                    f"class {cls}: {len(members)} samples cannot fill {scheme.k} folds"
                )
            assignments[shuffled] = np.arange(len(members)) % scheme.k
    return SplitPlan(scheme=scheme, seed=seed, assignments=assignments)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts; positive class = 1."""

    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_predictions(cls, y_true: np.ndarray, y_pred: np.ndarray) -> ConfusionMatrix:
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        if y_true.shape != y_pred.shape:
            raise ValidationError("prediction/label length mismatch")
        return cls(
            tp=int(np.sum((y_true == 1) & (y_pred == 1))),
            fp=int(np.sum((y_true == 0) & (y_pred == 1))),
            tn=int(np.sum((y_true == 0) & (y_pred == 0))),
            fn=int(np.sum((y_true == 1) & (y_pred == 0))),
        )

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(
            self.tp + other.tp, self.fp + other.fp,
            self.tn + other.tn, self.fn + other.fn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


@dataclass(frozen=True)
class MetricReport:
    """Sensitivity, specificity, accuracy, F1 and geometric mean."""

    sensitivity: float
    specificity: float
    accuracy: float
    f1: float
    gmean: float

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix) -> MetricReport:
        sens = _ratio(cm.tp, cm.tp + cm.fn)
        spec = _ratio(cm.tn, cm.tn + cm.fp)
        return cls(
            sensitivity=sens,
            specificity=spec,
            accuracy=_ratio(cm.tp + cm.tn, cm.total),
            f1=_ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn),
            gmean=float(np.sqrt(sens * spec)),
        )

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def aggregate_metrics(reports: list[MetricReport]) -> dict[str, dict[str, float]]:
    """Mean and (population) standard deviation per metric over repeats."""
    if not reports:
        raise ValidationError("no reports to aggregate")
    out: dict[str, dict[str, float]] = {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) for r in reports])
        out[name] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


@dataclass
class SchemeResult:
    """Primary pooled metrics for one seeded run of one scheme."""

    scheme: str
    seed: int
    confusion: ConfusionMatrix
    report: MetricReport
    fold_reports: list[MetricReport] = field(default_factory=list)

    def as_dict(self) -> dict:
        out = {
            "scheme": self.scheme,
            "seed": self.seed,
            "confusion": {
                "tp": self.confusion.tp, "fp": self.confusion.fp,
                "tn": self.confusion.tn, "fn": self.confusion.fn,
            },
            "metrics": self.report.as_dict(),
        }
        if self.fold_reports:
            out["fold_aggregate"] = aggregate_metrics(self.fold_reports)
        return out


def _check_two_classes(labels: np.ndarray, what: str) -> None:
    if len(np.unique(labels)) < 2:
        raise ValidationError(f"{what} contains a single class")


def run_scheme(
    features: np.ndarray,
    labels: np.ndarray,
    plan: SplitPlan,
    params: KernelParams | None = None,
    tol: float = 1e-3,
    fit_hook=None,
) -> SchemeResult:
    """Train/evaluate one plan.

    holdout: one model on the train partition, scored on the test partition.
    kfold: one model per fold; per-fold predictions pool into the primary
    confusion matrix and per-fold metrics feed the mean/std aggregate.

    ``fit_hook(train_idx) -> column indices`` supports leakage-free
    selection: when given, each fold trains and scores on the returned
    column subset (refit inside the fold).
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    params = params or KernelParams()

    def fit_and_score(train_idx: np.ndarray, test_idx: np.ndarray):
        _check_two_classes(labels[train_idx], "training fold")
        cols = fit_hook(train_idx) if fit_hook is not None else slice(None)
        model = train(features[train_idx][:, cols], labels[train_idx], params, tol=tol)
        pred = model.predict(features[test_idx][:, cols])
        return ConfusionMatrix.from_predictions(labels[test_idx], pred)

    if plan.scheme.kind == "holdout":
        train_idx, test_idx = plan.train_test()
        cm = fit_and_score(train_idx, test_idx)
        return SchemeResult(
            scheme=plan.scheme.name, seed=plan.seed,
            confusion=cm, report=MetricReport.from_confusion(cm),
        )

    fold_cms: list[ConfusionMatrix] = []
    for fold in range(plan.scheme.k):
        train_idx, test_idx = plan.train_test(fold)
        fold_cms.append(fit_and_score(train_idx, test_idx))
    pooled = fold_cms[0]
    for cm in fold_cms[1:]:
        pooled = pooled + cm
    return SchemeResult(
        scheme=plan.scheme.name, seed=plan.seed,
        confusion=pooled, report=MetricReport.from_confusion(pooled),
        fold_reports=[MetricReport.from_confusion(cm) for cm in fold_cms],
    )


def run_holdout_repeats(
    features: np.ndarray,
    labels: np.ndarray,
    scheme: SplitScheme,
    seed: int,
    repeats: int,
    params: KernelParams | None = None,
    tol: float = 1e-3,
    fit_hook=None,
) -> tuple[SchemeResult, list[SchemeResult], dict[str, dict[str, float]]]:
    """R seeded draws of one holdout scheme: (primary first-draw result,
    all results, mean/std aggregate). Repeat r reseeds with [seed, r]."""
    if scheme.kind != "holdout":
        raise ValidationError("repeats apply to holdout schemes")
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    results = []
    for r in range(repeats):
        plan = make_splits(labels, scheme, seed=repeat_seed(seed, r))
        results.append(run_scheme(features, labels, plan, params, tol, fit_hook))
    aggregate = aggregate_metrics([res.report for res in results])
    return results[0], results, aggregate


def repeat_seed(seed: int, r: int) -> int:
    """Child seed for repeat r of base ``seed`` (r=0 keeps the base)."""
    if r == 0:
        return seed
    return int(np.random.SeedSequence([seed, r]).generate_state(1)[0])
