"""Multi-domain dataset container, the evaluation split, and the CSV format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

EVAL_PERCENT = 20


@dataclass(frozen=True)
class Sample:
    support_id: int
    domain: str
    label: int
    features: tuple[float, ...]


def support_hash(support_ids) -> np.ndarray:
    """splitmix64 finaliser, vectorised; stable across platforms and runs."""
    z = np.asarray(support_ids, dtype=np.uint64) + np.uint64(0x9E3779B97F4A7C15)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def eval_mask(support_ids) -> np.ndarray:
    """True for supports in the held-out 20%; the same support is held out in every domain."""
    return (support_hash(support_ids) % np.uint64(100)) < np.uint64(EVAL_PERCENT)


@dataclass
class Dataset:
    domains: list[str]
    concept_dim: int
    num_classes: int
    block_slices: dict[str, slice]
    features: np.ndarray
    labels: np.ndarray
    domain_idx: np.ndarray
    support_ids: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def index_of(self, domain: str) -> int:
        try:
            return self.domains.index(domain)
        except ValueError:
            raise KeyError(f"unknown domain {domain!r}; dataset has {self.domains}") from None

    def domain_mask(self, domain: str) -> np.ndarray:
        return self.domain_idx == self.index_of(domain)

    def eval_mask(self) -> np.ndarray:
        return eval_mask(self.support_ids)

    def subset(self, mask) -> "Dataset":
        return Dataset(
            self.domains,
            self.concept_dim,
            self.num_classes,
            self.block_slices,
            self.features[mask],
            self.labels[mask],
            self.domain_idx[mask],
            self.support_ids[mask],
            self.meta,
        )

    def split(self, part: str) -> "Dataset":
        if part == "all":
            return self
        held = self.eval_mask()
        if part == "eval":
            return self.subset(held)
        if part == "train":
            return self.subset(~held)
        raise ValueError(f"split must be train, eval or all, got {part!r}")

    def domain_view(self, domain: str, with_concept: bool = True) -> np.ndarray:
        """Features of one domain restricted to the concept block and that domain's own block."""
        rows = self.features[self.domain_mask(domain)]
        own = rows[:, self.block_slices[domain]]
        return np.hstack([rows[:, : self.concept_dim], own]) if with_concept else own

    def counts(self) -> dict[str, int]:
        return {d: int((self.domain_idx == i).sum()) for i, d in enumerate(self.domains)}

    def samples(self) -> Iterator[Sample]:
        for f, y, d, s in zip(self.features, self.labels, self.domain_idx, self.support_ids):
            yield Sample(int(s), self.domains[d], int(y), tuple(float(v) for v in f))


def concat_datasets(parts: list[Dataset]) -> Dataset:
    first = parts[0]
    return Dataset(
        first.domains,
        first.concept_dim,
        first.num_classes,
        first.block_slices,
        np.vstack([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
        np.concatenate([p.domain_idx for p in parts]),
        np.concatenate([p.support_ids for p in parts]),
        first.meta,
    )


# ---------------------------------------------------------------- file format


def _fmt(v: float) -> str:
    s = f"{v:.9g}"
    return "0" if s == "-0" else s


def write_csv(dataset: Dataset, path: str | Path) -> Path:
    """Rows sorted by (domain name, support_id); floats at 9 significant digits.

    A ``<path>.meta.json`` sidecar holds the layout and the generating config.
    """
    path = Path(path)
    names = np.array(dataset.domains, dtype=object)[dataset.domain_idx]
    order = np.lexsort((dataset.support_ids, names.astype(str)))
    header = ["support_id", "domain", "label"] + [f"f{j}" for j in range(dataset.dim)]
    lines = [",".join(header)]
    for i in order:
        row = [str(int(dataset.support_ids[i])), names[i], str(int(dataset.labels[i]))]
        row += [_fmt(v) for v in dataset.features[i]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    meta = {
        "domains": dataset.domains,
        "concept_dim": dataset.concept_dim,
        "num_classes": dataset.num_classes,
        "blocks": {d: [s.start, s.stop] for d, s in dataset.block_slices.items()},
        **dataset.meta,
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_csv(path: str | Path) -> Dataset:
    path = Path(path)
    meta_path = Path(str(path) + ".meta.json")
    if not meta_path.exists():
        raise FileNotFoundError(f"missing metadata sidecar {meta_path}")
    meta = json.loads(meta_path.read_text())
    domains = list(meta["domains"])
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        if header[:3] != ["support_id", "domain", "label"]:
            raise ValueError(f"{path}: unexpected header {header[:3]}")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    sids = np.array([int(r[0]) for r in rows], dtype=np.int64)
    didx = np.array([domains.index(r[1]) for r in rows], dtype=np.int64)
    labels = np.array([int(r[2]) for r in rows], dtype=np.int64)
    feats = np.array([[float(v) for v in r[3:]] for r in rows], dtype=np.float64).reshape(len(rows), len(header) - 3)
    blocks = {d: slice(a, b) for d, (a, b) in meta["blocks"].items()}
    extra = {k: v for k, v in meta.items() if k not in ("domains", "concept_dim", "num_classes", "blocks")}
    return Dataset(domains, int(meta["concept_dim"]), int(meta["num_classes"]), blocks, feats, labels, didx, sids, extra)
