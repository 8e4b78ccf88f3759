"""Synthetic markets: Gaussian contexts, distance-based preferences, example
matchings from DA / EH / MH, and JSONL persistence."""
from __future__ import annotations

import gzip
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .core import Instance, PreferenceProfile, matching_from_partners, partners, validate_matching
from .mechanisms import RewardSpec, deferred_acceptance, hungarian_matching

FORMAT_VERSION = 1
GENERATOR = "numpy.PCG64"
MECHANISMS = ("DA", "EH", "MH")


@dataclass(frozen=True)
class DataConfig:
    n: int
    m: int
    count: int
    mechanism: str = "DA"
    seed: int = 0
    t: float = 8.0
    d: int = 10
    squared: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mechanism", self.mechanism.upper())
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}")
        if self.n < 1 or self.m < 1 or self.d < 1 or self.count < 0:
            raise ValueError("n, m, d must be positive and count non-negative")


@dataclass
class DatasetRecord:
    instance: Instance
    profile: PreferenceProfile
    example: np.ndarray
    mechanism: str
    mh_selected: tuple | None = None
    seed: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.profile.n

    @property
    def m(self) -> int:
        return self.profile.m

    def reward_spec(self) -> RewardSpec | None:
        if self.mechanism == "EH":
            return RewardSpec.eh(self.n)
        if self.mechanism == "MH":
            return RewardSpec("MH", self.n, self.mh_selected)
        return None


def sample_contexts(n: int, m: int, d: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Workers ~ N(+1, I), firms ~ N(-1, I)."""
    xw = rng.normal(1.0, 1.0, size=(n, d))
    xf = rng.normal(-1.0, 1.0, size=(m, d))
    return xw, xf


def euclidean_preferences(X_W, X_F, t: float = 8.0, squared: bool = False) -> PreferenceProfile:
    """Closer is better; a partner beats the unmatch option when its distance is within ``t``.

    With ``squared=True`` the squared distance is compared with ``t``.
    Ties are broken toward the lower index, and the unmatch option loses a
    tie with a partner exactly at the threshold.
    """
    X_W, X_F = np.asarray(X_W, dtype=np.float64), np.asarray(X_F, dtype=np.float64)
    D = np.sqrt(((X_W[:, None, :] - X_F[None, :, :]) ** 2).sum(axis=2))
    if squared:
        D = D**2

    def ranks(dist):
        k = dist.shape[1]
        # the unmatch option sits at distance t and after every index at a tie
        key = np.concatenate([dist, np.full((dist.shape[0], 1), t)], axis=1)
        order = np.lexsort((np.broadcast_to(np.arange(k + 1), key.shape), key), axis=1)
        out = np.empty_like(order)
        np.put_along_axis(out, order, np.arange(1, k + 2)[None, :].repeat(len(key), 0), axis=1)
        return out

    return PreferenceProfile(ranks(D), ranks(D.T))


def run_mechanism(kind: str, profile: PreferenceProfile, rng: np.random.Generator):
    """``(example matching, mh_selected or None)``."""
    if kind == "DA":
        return deferred_acceptance(profile), None
    if kind == "EH":
        return hungarian_matching(profile, RewardSpec.eh(profile.n)), None
    spec = RewardSpec.mh(profile.n, rng)
    return hungarian_matching(profile, spec), spec.selected


def make_record(config: DataConfig, index: int) -> DatasetRecord:
    seed_path = [int(config.seed), int(index)]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_path)))
    xw, xf = sample_contexts(config.n, config.m, config.d, rng)
    profile = euclidean_preferences(xw, xf, config.t, config.squared)
    example, sel = run_mechanism(config.mechanism, profile, rng)
    return DatasetRecord(Instance(xw, xf), profile, example, config.mechanism, sel, seed_path)


def generate_dataset(config: DataConfig) -> Iterator[DatasetRecord]:
    """Records are independent: record ``k`` uses the seed sequence ``(seed, k)``."""
    for k in range(config.count):
        yield make_record(config, k)


# --------------------------------------------------------------------------
# JSONL persistence

def record_to_dict(rec: DatasetRecord) -> dict:
    wp, fp = partners(rec.example)
    n, m = rec.n, rec.m
    return {
        "n": n,
        "m": m,
        "contexts_w": rec.instance.contexts_w.tolist(),
        "contexts_f": rec.instance.contexts_f.tolist(),
        "worker_ranks": rec.profile.worker_ranks.tolist(),
        "firm_ranks": rec.profile.firm_ranks.tolist(),
        "pairs": [[int(i), int(j)] for i, j in enumerate(wp) if j < m],
        "unmatched_workers": [int(i) for i in range(n) if wp[i] == m],
        "unmatched_firms": [int(j) for j in range(m) if fp[j] == n],
        "mechanism": rec.mechanism,
        "mh_selected": None if rec.mh_selected is None else list(rec.mh_selected),
        "seed": list(rec.seed),
    }


def record_from_dict(obj: dict) -> DatasetRecord:
    n, m = int(obj["n"]), int(obj["m"])
    wp = np.full(n, m)
    for i, j in obj["pairs"]:
        wp[i] = j
    M = matching_from_partners(wp, m)
    bad = validate_matching(M, n, m)
    if bad:
        raise ValueError(f"stored matching is invalid: {bad}")
    unmatched_w = sorted(int(i) for i in range(n) if wp[i] == m)
    if unmatched_w != sorted(obj["unmatched_workers"]):
        raise ValueError("unmatched worker list disagrees with the pair list")
    taken = {j for _, j in obj["pairs"]}
    if sorted(j for j in range(m) if j not in taken) != sorted(obj["unmatched_firms"]):
        raise ValueError("unmatched firm list disagrees with the pair list")
    sel = obj.get("mh_selected")
    return DatasetRecord(
        Instance(np.array(obj["contexts_w"]), np.array(obj["contexts_f"])),
        PreferenceProfile(np.array(obj["worker_ranks"]), np.array(obj["firm_ranks"])),
        M,
        obj["mechanism"],
        None if sel is None else tuple(sel),
        list(obj.get("seed", [])),
    )


def _open(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        # no mtime or file name in the header: bytes depend on content only
        raw = open(path, mode + "b")
        return gzip.GzipFile(filename="", fileobj=raw, mode=mode + "b", mtime=0), raw
    return open(path, mode + "b"), None


def write_dataset(path, config: DataConfig, records: Iterable[DatasetRecord]) -> int:
    header = {"format_version": FORMAT_VERSION, "generator": GENERATOR, "config": asdict(config)}
    fh, raw = _open(path, "w")
    count = 0
    try:
        fh.write((json.dumps(header) + "\n").encode())
        for rec in records:
            fh.write((json.dumps(record_to_dict(rec)) + "\n").encode())
            count += 1
    finally:
        fh.close()
        if raw is not None:
            raw.close()
    return count


def read_dataset(path) -> tuple[dict, list[DatasetRecord]]:
    fh, raw = _open(path, "r")
    try:
        lines = fh.read().decode("utf-8").splitlines()
    finally:
        fh.close()
        if raw is not None:
            raw.close()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    header = json.loads(lines[0])
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {header.get('format_version')}")
    return header, [record_from_dict(json.loads(line)) for line in lines[1:] if line.strip()]
