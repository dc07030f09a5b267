"""Synthetic multi-domain data with block-disjoint domain subspaces.

Each sample is ``[concept | block_1 | ... | block_D]``. A domain writes only
into the concept block and its own block, so blocks of different domains never
overlap. Labels come from a fixed linear scorer on the clean concept; a domain
gains label information through ``label_leak`` in its own block and loses it
through ``concept_noise`` on the concept block.
"""
from __future__ import annotations

import logging
import zlib

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .data import Dataset

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class DomainSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    concept_noise: float = Field(0.0, ge=0)
    label_leak: float = Field(0.0, ge=0)
    block_dim: int = Field(4, gt=0)
    block_noise: float = Field(1.0, ge=0)


class DatasetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = 0
    concept_dim: int = Field(8, gt=0)
    num_classes: int = Field(4, ge=2)
    num_supports: int = Field(1000, gt=0)
    domains: list[DomainSpec]
    shared_fraction: float = Field(1.0, ge=0, le=1)
    unique_fraction: float = Field(0.0, ge=0, le=1)
    samples_per_domain: int | None = Field(None, gt=0)

    @model_validator(mode="after")
    def _check(self):
        names = [d.name for d in self.domains]
        if not names:
            raise ValueError("at least one domain is required")
        if len(set(names)) != len(names):
            raise ValueError(f"domain names must be unique, got {names}")
        return self


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode())


def assign_supports(config: DatasetConfig) -> dict[str, np.ndarray]:
    """Support ids per domain from the shared/unique fractions.

    Unique pools are ``floor(u * N)`` each and the rounding remainder joins the
    shared pool, so every support lands in at least one domain. Pools are handed
    out in sorted domain-name order so they do not depend on listing order.
    """
    n = config.num_supports
    k = len(config.domains)
    rho, u = config.shared_fraction, config.unique_fraction
    total = rho + k * u
    if total > 1 + 1e-9:
        raise ConfigError(f"shared_fraction + {k} * unique_fraction = {total:.6g} exceeds 1")
    if total < 1 - 1e-9:
        raise ConfigError(
            f"shared_fraction + {k} * unique_fraction = {total:.6g} < 1 leaves supports in no domain"
        )
    q = int(np.floor(u * n + 1e-9))
    shared = n - k * q
    out = {}
    for j, name in enumerate(sorted(d.name for d in config.domains)):
        unique = np.arange(shared + j * q, shared + (j + 1) * q)
        out[name] = np.concatenate([np.arange(shared), unique]).astype(np.int64)
    return out


def scorer(config: DatasetConfig) -> np.ndarray:
    return np.random.default_rng([config.seed, 0]).standard_normal((config.concept_dim, config.num_classes))


def concepts(config: DatasetConfig, support_ids) -> np.ndarray:
    """Clean concept vector of each support; depends only on (seed, support id)."""
    ids = np.asarray(support_ids, dtype=np.int64)
    out = np.empty((len(ids), config.concept_dim))
    for row, s in enumerate(ids):
        out[row] = np.random.default_rng([config.seed, 3, int(s)]).standard_normal(config.concept_dim)
    return out


def domain_matrix(config: DatasetConfig, spec: DomainSpec) -> np.ndarray:
    rng = np.random.default_rng([config.seed, 1, _name_key(spec.name)])
    return rng.standard_normal((config.num_classes, spec.block_dim))


def render(config: DatasetConfig, assignment: dict[str, np.ndarray], noise_stream: int = 0) -> Dataset:
    """Render every domain on its assigned supports.

    With ``samples_per_domain`` set, each domain draws that many renderings by
    cycling through its supports; otherwise each support is rendered once.
    """
    if config.num_classes > 2**config.concept_dim:
        log.warning("num_classes=%d exceeds 2**concept_dim; classes may not be separable", config.num_classes)
    w = scorer(config)
    cd = config.concept_dim
    slices, offset = {}, cd
    for spec in config.domains:
        slices[spec.name] = slice(offset, offset + spec.block_dim)
        offset += spec.block_dim
    feats, labels, didx, sids = [], [], [], []
    for i, spec in enumerate(config.domains):
        ids = np.asarray(assignment.get(spec.name, []), dtype=np.int64)
        if config.samples_per_domain is not None and len(ids):
            ids = ids[np.arange(config.samples_per_domain) % len(ids)]
        c = concepts(config, ids)
        y = np.argmax(c @ w, axis=1) if len(ids) else np.zeros(0, dtype=np.int64)
        rng = np.random.default_rng([config.seed, 2, _name_key(spec.name), noise_stream])
        x = np.zeros((len(ids), offset))
        x[:, :cd] = c + spec.concept_noise * rng.standard_normal(c.shape)
        onehot = np.eye(config.num_classes)[y]
        x[:, slices[spec.name]] = spec.label_leak * onehot @ domain_matrix(config, spec) + spec.block_noise * rng.standard_normal(
            (len(ids), spec.block_dim)
        )
        feats.append(x)
        labels.append(y)
        didx.append(np.full(len(ids), i))
        sids.append(ids)
    return Dataset(
        domains=[d.name for d in config.domains],
        concept_dim=cd,
        num_classes=config.num_classes,
        block_slices=slices,
        features=np.vstack(feats),
        labels=np.concatenate(labels).astype(np.int64),
        domain_idx=np.concatenate(didx).astype(np.int64),
        support_ids=np.concatenate(sids).astype(np.int64),
        meta={"config": config.model_dump(mode="json")},
    )


def generate(config: DatasetConfig) -> Dataset:
    return render(config, assign_supports(config))


def cross_block_products(dataset: Dataset) -> np.ndarray:
    """Pairwise overlap of the domain-specific parts of each domain.

    Entry (i, j) is the L1 norm of the coordinate-wise product of the absolute
    column sums of domain i's and domain j's non-concept coordinates. It is
    exactly zero iff the two domains never write to a common coordinate.
    """
    cd = dataset.concept_dim
    sums = [np.abs(dataset.features[dataset.domain_idx == i, cd:]).sum(axis=0) for i in range(len(dataset.domains))]
    k = len(sums)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            out[i, j] = float(np.sum(sums[i] * sums[j]))
    return out


def verify_orthogonality(dataset: Dataset) -> bool:
    g = cross_block_products(dataset)
    off = ~np.eye(len(g), dtype=bool)
    return bool(np.all(g[off] == 0.0))


def probe_label_information(dataset: Dataset, domain: str, seed: int = 0, epochs: int = 40) -> float:
    """Held-out accuracy of a fresh one-hidden-layer classifier on one domain.

    Stands in for the mutual information between an optimally encoded domain
    and the label. Trains on the domain's concept block plus its own block.
    """
    from .training import fit_classifier

    mask = dataset.domain_mask(domain)
    if mask.sum() < 200:
        raise ValueError(f"domain {domain!r} has {int(mask.sum())} samples; the probe needs at least 200")
    x = dataset.domain_view(domain)
    y = dataset.labels[mask]
    held = dataset.eval_mask()[mask]
    model = fit_classifier(x[~held], y[~held], dataset.num_classes, hidden=16, epochs=epochs, seed=seed)
    return float(np.mean(model.predict_labels(x[held]) == y[held]))


def interpolate_domains(spec_a: DomainSpec, spec_b: DomainSpec, k: int, prefix: str = "grid") -> list[DomainSpec]:
    """``k`` specs linearly spaced from ``spec_a`` to ``spec_b`` (endpoints are the inputs)."""
    if k < 2:
        raise ValueError(f"grid size must be at least 2, got {k}")
    if spec_a.block_dim != spec_b.block_dim:
        raise ValueError("interpolated domains must share block_dim")
    out = []
    for i, t in enumerate(np.linspace(0.0, 1.0, k)):
        if i == 0:
            out.append(spec_a)
        elif i == k - 1:
            out.append(spec_b)
        else:
            out.append(
                DomainSpec(
                    name=f"{prefix}{i}",
                    concept_noise=(1 - t) * spec_a.concept_noise + t * spec_b.concept_noise,
                    label_leak=(1 - t) * spec_a.label_leak + t * spec_b.label_leak,
                    block_dim=spec_a.block_dim,
                    block_noise=(1 - t) * spec_a.block_noise + t * spec_b.block_noise,
                )
            )
    return out
