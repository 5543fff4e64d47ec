"""Identification and verification attack evaluation over feature datasets.

Identification: a deterministic one-vs-rest linear hinge-loss classifier is
trained on original-image features; the attack success rate is the fraction
of protected images it misclassifies. Verification: a match threshold is
calibrated on impostor scores at a fixed false acceptance rate, and the
attack success rate is the fraction of genuine (original, protected) pairs
that fail the match rule.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imagecore import load_image


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class FeatureEntry:
    subject_id: str
    image_id: str
    features: np.ndarray


@dataclass(frozen=True)
class FeatureDataset:
    entries: list[FeatureEntry]
    extractor_desc: str = ""

    def __post_init__(self):
        if self.entries:
            d = self.entries[0].features.shape[0]
            for e in self.entries:
                if e.features.shape[0] != d:
                    raise EvalError("inconsistent feature lengths in dataset")
                if not e.subject_id:
                    raise EvalError("empty subject id")

    @property
    def dim(self) -> int:
        return self.entries[0].features.shape[0]

    def subjects(self) -> list[str]:
        return sorted({e.subject_id for e in self.entries})

    def matrix(self) -> np.ndarray:
        return np.stack([e.features for e in self.entries])


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.05
    l2: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class LinearIdentifier:
    weights: np.ndarray  # (n_classes, dim)
    biases: np.ndarray  # (n_classes,)
    classes: list[str]
    config: TrainConfig

    def scores(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights.T + self.biases

    def predict(self, features: np.ndarray) -> list[str]:
        # argmax with ties going to the lowest class index
        idx = np.argmax(self.scores(features), axis=1)
        return [self.classes[i] for i in idx]


def extract_dataset(manifest, extractor, extractor_desc: str = "") -> tuple[FeatureDataset, list[str]]:
    """manifest is a list of (subject_id, image_path); extractor maps an
    Image to a 1-d feature array. Unreadable images are skipped and listed
    in the returned failure report."""
    manifest = list(manifest)
    if not manifest:
        raise EvalError("empty manifest")
    entries: list[FeatureEntry] = []
    failures: list[str] = []
    for subject_id, path in manifest:
        try:
            img = load_image(path)
            feats = np.asarray(extractor(img), dtype=np.float64).reshape(-1)
        except Exception as e:
            failures.append(f"{path}: {e}")
            continue
        entries.append(FeatureEntry(str(subject_id), Path(path).name, feats))
    return FeatureDataset(entries, extractor_desc), failures


def train_identifier(train: FeatureDataset, cfg: TrainConfig = TrainConfig()) -> LinearIdentifier:
    """One-vs-rest linear hinge-loss classifier via deterministic full-batch
    subgradient descent with L2 regularization."""
    classes = train.subjects()
    if len(classes) < 2:
        raise EvalError("need at least 2 classes to train an identifier")
    x = train.matrix()
    n, d = x.shape
    weights = np.zeros((len(classes), d))
    biases = np.zeros(len(classes))
    for ci, cls in enumerate(classes):
        y = np.array([1.0 if e.subject_id == cls else -1.0 for e in train.entries])
        w = np.zeros(d)
        b = 0.0
        for _ in range(cfg.epochs):
            margins = y * (x @ w + b)
            active = margins < 1.0
            gw = cfg.l2 * w - (y[active, None] * x[active]).sum(axis=0) / n
            gb = -y[active].sum() / n
            w = w - cfg.learning_rate * gw
            b = b - cfg.learning_rate * gb
        weights[ci] = w
        biases[ci] = b
    return LinearIdentifier(weights, biases, classes, cfg)


def identification_asr(
    model: LinearIdentifier, protected: FeatureDataset
) -> tuple[float, list[dict]]:
    """ASR = misclassified / total over the protected set, with per-image
    outcomes."""
    if not protected.entries:
        raise EvalError("empty protected set")
    if protected.dim != model.weights.shape[1]:
        raise EvalError("feature dimension mismatch with classifier")
    preds = model.predict(protected.matrix())
    outcomes = []
    successes = 0
    for e, pred in zip(protected.entries, preds):
        success = pred != e.subject_id
        successes += success
        outcomes.append(
            {
                "subject_id": e.subject_id,
                "image_id": e.image_id,
                "predicted": pred,
                "deidentified": success,
            }
        )
    return successes / len(preds), outcomes


def calibrate_threshold(
    impostor_scores, far_target: float, comparator: str = "distance"
) -> float:
    """Threshold at the given false acceptance rate over impostor scores.

    Distance comparator: accept iff distance < tau; tau is the k-th smallest
    impostor distance with k = floor(far_target * N), giving exactly k-1
    strict accepts for distinct scores. far_target >= 1 accepts everything.
    Similarity comparator is symmetric (accept iff similarity > tau).
    """
    scores = np.sort(np.asarray(list(impostor_scores), dtype=np.float64))
    if scores.size == 0:
        raise EvalError("empty impostor score list")
    if not (0.0 < far_target <= 1.0):
        raise EvalError("far_target must be in (0, 1]")
    if comparator not in ("distance", "similarity"):
        raise EvalError(f"unknown comparator {comparator!r}")
    n = scores.size
    if n * far_target < 1.0 and far_target < 1.0:
        warnings.warn(
            f"only {n} impostor scores for far_target {far_target}; "
            "threshold admits zero accepts",
            stacklevel=2,
        )
    if far_target >= 1.0:
        return math.inf if comparator == "distance" else -math.inf
    k = int(math.floor(far_target * n))
    if comparator == "distance":
        if k == 0:
            return math.nextafter(float(scores[0]), -math.inf)
        return float(scores[k - 1])
    else:
        if k == 0:
            return math.nextafter(float(scores[-1]), math.inf)
        return float(scores[n - k])


def accepts(score: float, tau: float, comparator: str = "distance") -> bool:
    return score < tau if comparator == "distance" else score > tau


def verification_asr(
    genuine_pairs, tau: float, comparator: str = "distance"
) -> tuple[float, list[dict]]:
    """ASR = fraction of genuine (original, protected) feature pairs whose
    score fails the match rule at tau."""
    pairs = list(genuine_pairs)
    if not pairs:
        raise EvalError("empty genuine pair list")
    outcomes = []
    fails = 0
    for orig, prot in pairs:
        orig = np.asarray(orig, dtype=np.float64).reshape(-1)
        prot = np.asarray(prot, dtype=np.float64).reshape(-1)
        if comparator == "distance":
            score = float(np.linalg.norm(orig - prot))
        else:
            denom = np.linalg.norm(orig) * np.linalg.norm(prot)
            score = float(orig @ prot / denom) if denom > 0 else 0.0
        matched = accepts(score, tau, comparator)
        fails += not matched
        outcomes.append({"score": score, "matched": matched})
    return fails / len(pairs), outcomes


def impostor_scores(
    dataset: FeatureDataset,
    comparator: str = "distance",
    max_pairs: int = 100_000,
    seed: int = 0,
) -> list[float]:
    """Scores of all cross-subject pairs, subsampled with a seeded RNG when
    there are more than max_pairs."""
    entries = dataset.entries
    pairs = [
        (i, j)
        for i in range(len(entries))
        for j in range(i + 1, len(entries))
        if entries[i].subject_id != entries[j].subject_id
    ]
    if len(pairs) > max_pairs:
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[i] for i in sorted(idx)]
    scores = []
    for i, j in pairs:
        a, b = entries[i].features, entries[j].features
        if comparator == "distance":
            scores.append(float(np.linalg.norm(a - b)))
        else:
            denom = np.linalg.norm(a) * np.linalg.norm(b)
            scores.append(float(a @ b / denom) if denom > 0 else 0.0)
    return scores


def genuine_pairs_first_original(
    originals: FeatureDataset, protected: FeatureDataset
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pair the lexicographically-first original image per subject with each
    protected image of that subject."""
    first: dict[str, FeatureEntry] = {}
    for e in sorted(originals.entries, key=lambda e: (e.subject_id, e.image_id)):
        first.setdefault(e.subject_id, e)
    pairs = []
    for p in protected.entries:
        if p.subject_id in first:
            pairs.append((first[p.subject_id].features, p.features))
    return pairs


def read_manifest_csv(path) -> list[tuple[str, str, str | None]]:
    """CSV manifest rows: subject_id,image_path[,landmark_path]."""
    rows = []
    base = Path(path).parent
    with open(path, newline="") as f:
        for rec in csv.reader(f):
            if not rec or rec[0].startswith("#") or rec[0] == "subject_id":
                continue
            if len(rec) < 2:
                raise EvalError(f"malformed manifest row: {rec}")
            img = str(base / rec[1]) if not Path(rec[1]).is_absolute() else rec[1]
            lmk = None
            if len(rec) > 2 and rec[2]:
                lmk = str(base / rec[2]) if not Path(rec[2]).is_absolute() else rec[2]
            rows.append((rec[0], img, lmk))
    if not rows:
        raise EvalError(f"empty manifest: {path}")
    return rows


def write_report(report: dict, json_path=None, csv_path=None) -> None:
    if json_path:
        Path(json_path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if csv_path:
        summary = report.get("summary", report)
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            keys = sorted(summary)
            writer.writerow(keys)
            writer.writerow([summary[k] for k in keys])
