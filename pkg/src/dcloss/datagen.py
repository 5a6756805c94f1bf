"""Synthetic multi-domain, multi-subject age data and the SC split.

Each domain stands in for a dataset with its own capture conditions: a
linear mixing of a fixed age basis, an offset and a noise level. Subjects
carry one latent age; each of their images jitters it by at most one bin.

File format (text, comma-delimited, ``\\n`` line endings)::

    # dcloss-samples v1 D=<D> L=<L>
    # <key> = <value>            (zero or more provenance lines)
    subject_id,domain_id,age,f_0,...,f_{D-1}
    <int>,<int>,<int>,<float repr>,...

Floats are written with ``repr`` so a save/load round trip is exact.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError

FORMAT_TAG = "dcloss-samples"
FORMAT_VERSION = 1
BASIS_DIM = 5


@dataclass
class DomainSpec:
    domain_id: int
    mixing: np.ndarray  # (D, BASIS_DIM)
    offset: np.ndarray  # (D,)
    noise_std: float

    def __post_init__(self):
        if self.noise_std < 0:
            raise DomainError("noise_std must be non-negative")
        self.mixing = np.asarray(self.mixing, dtype=np.float64)
        self.offset = np.asarray(self.offset, dtype=np.float64)


@dataclass
class SampleSet:
    subject_ids: np.ndarray
    domain_ids: np.ndarray
    ages: np.ndarray
    features: np.ndarray
    L: int
    dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        self.subject_ids = np.asarray(self.subject_ids, dtype=np.int64)
        self.domain_ids = np.asarray(self.domain_ids, dtype=np.int64)
        self.ages = np.asarray(self.ages, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        n = self.ages.shape[0]
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DomainError("features must be an (N, D) array matching the labels")
        if not (self.subject_ids.shape == self.domain_ids.shape == (n,)):
            raise DomainError("id arrays must match the number of samples")
        if n and (self.ages.min() < 1 or self.ages.max() > self.L):
            raise DomainError(f"ages must lie in [1, {self.L}]")

    def __len__(self):
        return self.ages.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return (
            self.L == other.L
            and np.array_equal(self.subject_ids, other.subject_ids)
            and np.array_equal(self.domain_ids, other.domain_ids)
            and np.array_equal(self.ages, other.ages)
            and np.array_equal(self.features, other.features)
        )

    @property
    def D(self):
        return self.features.shape[1]

    def subset(self, mask):
        return SampleSet(
            self.subject_ids[mask],
            self.domain_ids[mask],
            self.ages[mask],
            self.features[mask],
            self.L,
        )

    def subjects(self):
        return set(self.subject_ids.tolist())

    def domains(self):
        return set(self.domain_ids.tolist())


def age_basis(ages, L):
    a = np.asarray(ages, dtype=np.float64) / L
    return np.stack(
        [a, a * a, a * a * a, np.sin(2 * math.pi * a), np.cos(2 * math.pi * a)], axis=-1
    )


def make_domains(n_domains, D, severity=0.5, noise_std=0.05, noise_step=0.02, seed=0):
    """Domains sharing a base mixing matrix, each perturbed by ``severity``.

    Domain ``d`` gets ``W_d = W + severity * E_d`` and ``b_d = severity * e_d``
    with standard normal ``E_d, e_d``, and noise ``noise_std + d * noise_step``.
    ``severity = 0`` makes all domains identical up to noise.
    """
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((D, BASIS_DIM))
    out = []
    for d in range(n_domains):
        W = base + severity * rng.standard_normal((D, BASIS_DIM))
        b = severity * rng.standard_normal(D)
        out.append(DomainSpec(d, W, b, noise_std + d * noise_step))
    return out


def generate(domains, subjects_per_domain, images_per_subject, L, D, seed=0, jitter=1):
    """Draw a SampleSet; subject ids are unique across all domains."""
    if D < 2 or L < 2:
        raise DomainError("D and L must both be at least 2")
    if subjects_per_domain < 1 or images_per_subject < 1:
        raise DomainError("subject and image counts must be >= 1")
    rng = np.random.default_rng(seed)
    sids, dids, ages, feats = [], [], [], []
    next_subject = 0
    for dom in domains:
        if dom.mixing.shape != (D, BASIS_DIM) or dom.offset.shape != (D,):
            raise DomainError(f"domain {dom.domain_id} does not match D={D}")
        latent = rng.integers(1, L + 1, size=subjects_per_domain)
        for a in latent:
            shift = rng.integers(-jitter, jitter + 1, size=images_per_subject)
            img_ages = np.clip(a + shift, 1, L)
            noise = rng.normal(0.0, 1.0, size=(images_per_subject, D)) * dom.noise_std
            x = age_basis(img_ages, L) @ dom.mixing.T + dom.offset + noise
            sids.append(np.full(images_per_subject, next_subject))
            dids.append(np.full(images_per_subject, dom.domain_id))
            ages.append(img_ages)
            feats.append(x)
            next_subject += 1
    return SampleSet(
        np.concatenate(sids), np.concatenate(dids), np.concatenate(ages), np.vstack(feats), L
    )


def split_sc(data, train_domains, test_domains):
    """Subject-exclusive cross-domain split.

    A subject appearing on both sides stays in train; its test-domain images
    are dropped and counted in ``test.dropped``.
    """
    train_domains, test_domains = set(train_domains), set(test_domains)
    if train_domains & test_domains:
        raise DomainError(f"domain sets overlap: {sorted(train_domains & test_domains)}")
    train_mask = np.isin(data.domain_ids, sorted(train_domains))
    test_mask = np.isin(data.domain_ids, sorted(test_domains))
    train_subjects = np.unique(data.subject_ids[train_mask])
    clash = test_mask & np.isin(data.subject_ids, train_subjects)
    test_mask &= ~clash
    if not train_mask.any() or not test_mask.any():
        raise DomainError("split leaves one side empty")
    test = data.subset(test_mask)
    test.dropped = int(clash.sum())
    return data.subset(train_mask), test


def split_subjects(data, fraction, seed=0):
    """Hold out a random ``fraction`` of subjects (intra-domain evaluation)."""
    rng = np.random.default_rng(seed)
    subjects = np.unique(data.subject_ids)
    n_out = max(1, int(round(fraction * subjects.size)))
    held = rng.permutation(subjects)[:n_out]
    mask = np.isin(data.subject_ids, held)
    return data.subset(~mask), data.subset(mask)


def save(path, data, meta=None):
    """Write ``data``; ``meta`` items become ``# key = value`` comment lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {FORMAT_TAG} v{FORMAT_VERSION} D={data.D} L={data.L}\n")
        for k, v in (meta or {}).items():
            fh.write(f"# {k} = {v}\n")
        fh.write(
            "subject_id,domain_id,age," + ",".join(f"f_{j}" for j in range(data.D)) + "\n"
        )
        for s, d, a, x in zip(data.subject_ids, data.domain_ids, data.ages, data.features):
            fh.write(f"{s},{d},{a}," + ",".join(repr(float(v)) for v in x) + "\n")


def _parse_header(line):
    parts = line.strip().split()
    if len(parts) != 5 or parts[0] != "#" or parts[1] != FORMAT_TAG:
        raise FormatError("missing dataset header", 1)
    if parts[2] != f"v{FORMAT_VERSION}":
        raise FormatError(f"unsupported format version {parts[2]!r}, expected v{FORMAT_VERSION}", 1)
    try:
        fields = dict(p.split("=", 1) for p in parts[3:])
        return int(fields["D"]), int(fields["L"])
    except (KeyError, ValueError):
        raise FormatError("header must carry D=<int> L=<int>", 1) from None


def load(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if not text:
        raise FormatError("empty file", 1)
    lines = text.split("\n")
    if not text.endswith("\n"):
        raise FormatError("truncated line (file does not end with a newline)", len(lines))
    D, L = _parse_header(lines[0])
    first = 1
    while first < len(lines) and lines[first].startswith("#"):
        first += 1
    if first >= len(lines) or not lines[first].startswith("subject_id,"):
        raise FormatError("missing column header", first + 1)
    if lines[-1] == "":
        lines.pop()
    body = lines[first + 1 :]
    n = len(body)
    sids = np.empty(n, dtype=np.int64)
    dids = np.empty(n, dtype=np.int64)
    ages = np.empty(n, dtype=np.int64)
    feats = np.empty((n, D))
    for k, line in enumerate(body):
        lineno = first + 2 + k
        cells = line.split(",")
        if len(cells) != D + 3:
            raise FormatError(f"expected {D + 3} fields, found {len(cells)}", lineno)
        try:
            sids[k], dids[k], ages[k] = int(cells[0]), int(cells[1]), int(cells[2])
            feats[k] = [float(c) for c in cells[3:]]
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
        if not 1 <= ages[k] <= L:
            raise FormatError(f"age {ages[k]} outside [1, {L}]", lineno)
    if n == 0:
        raise FormatError("no samples", first + 2)
    return SampleSet(sids, dids, ages, feats, L)
