"""On-disk format for per-position loss logs and run manifests.

A run consists of two files:

* a manifest (JSON object) with keys ``run_id``, ``n_tot``, ``n_warmup``,
  ``seq_len``, ``checkpoint_interval``;
* a loss log with one JSON record per line:
  ``{"tokens_trained": <int>, "loss_by_position": [<float>, ...]}``.
  An optional ``positions`` key must equal ``[1..seq_len]`` when present.

Losses are natural-log cross entropies (nats), already averaged over the
validation sequences for each position. Positions are 1-indexed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from tempscale.errors import LogParseError

MANIFEST_KEYS = ("run_id", "n_tot", "n_warmup", "seq_len", "checkpoint_interval")


@dataclass(frozen=True)
class RunManifest:
    """Schedule metadata for one pre-training run."""

    run_id: str
    n_tot: int
    n_warmup: int
    seq_len: int
    checkpoint_interval: int

    def __post_init__(self):
        if self.n_tot <= 0:
            raise ValueError("n_tot must be positive")
        if not 0 <= self.n_warmup < self.n_tot:
            raise ValueError("n_warmup must satisfy 0 <= n_warmup < n_tot")
        if self.seq_len < 2:
            raise ValueError("seq_len must be >= 2")
        if self.checkpoint_interval <= 0:
            raise ValueError("checkpoint_interval must be positive")


@dataclass(frozen=True, eq=False)
class TokenLossProfile:
    """Per-position mean validation losses at one checkpoint."""

    tokens_trained: int
    loss_by_position: np.ndarray = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, TokenLossProfile):
            return NotImplemented
        return (self.tokens_trained == other.tokens_trained
                and np.array_equal(self.loss_by_position, other.loss_by_position))

    def __hash__(self):
        return hash((self.tokens_trained, self.loss_by_position.tobytes()))

    def __post_init__(self):
        arr = np.asarray(self.loss_by_position, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "loss_by_position", arr)
        if self.tokens_trained <= 0:
            raise ValueError("tokens_trained must be positive")
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("loss_by_position must be a non-empty vector")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("losses must be finite and non-negative")


@dataclass(frozen=True)
class Trajectory:
    """Checkpoint series of loss profiles for a single run."""

    manifest: RunManifest
    profiles: tuple[TokenLossProfile, ...]

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        n = self.manifest.seq_len
        for p in self.profiles:
            if p.loss_by_position.size != n:
                raise ValueError(
                    f"profile at {p.tokens_trained} tokens has "
                    f"{p.loss_by_position.size} positions, expected {n}"
                )
        tokens = [p.tokens_trained for p in self.profiles]
        if any(b <= a for a, b in zip(tokens, tokens[1:])):
            raise ValueError("profiles must be strictly increasing in tokens_trained")

    @property
    def tokens(self) -> np.ndarray:
        return np.array([p.tokens_trained for p in self.profiles], dtype=float)

    @property
    def mean_losses(self) -> np.ndarray:
        return np.array([mean_loss(p) for p in self.profiles])


def parse_manifest(manifest_path) -> RunManifest:
    """Read and validate a manifest file."""
    try:
        with open(manifest_path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise LogParseError(f"manifest {manifest_path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise LogParseError(f"manifest {manifest_path}: expected a JSON object")
    missing = [k for k in MANIFEST_KEYS if k not in raw]
    if missing:
        raise LogParseError(f"manifest {manifest_path}: missing keys {missing}")
    try:
        return RunManifest(
            run_id=str(raw["run_id"]),
            n_tot=int(raw["n_tot"]),
            n_warmup=int(raw["n_warmup"]),
            seq_len=int(raw["seq_len"]),
            checkpoint_interval=int(raw["checkpoint_interval"]),
        )
    except (TypeError, ValueError) as exc:
        raise LogParseError(f"manifest {manifest_path}: {exc}") from exc


def parse_trajectory(manifest_path, log_path) -> Trajectory:
    """Parse a manifest plus loss log into a validated Trajectory.

    Records are sorted by ``tokens_trained``. Malformed lines report their
    1-based line number; duplicate checkpoints, length mismatches and
    non-finite losses are rejected.
    """
    manifest = parse_manifest(manifest_path)
    profiles = []
    seen = set()
    with open(log_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogParseError(f"line {lineno}: invalid JSON: {exc}", lineno) from exc
            if not isinstance(rec, dict) or "tokens_trained" not in rec \
                    or "loss_by_position" not in rec:
                raise LogParseError(
                    f"line {lineno}: record needs tokens_trained and loss_by_position",
                    lineno,
                )
            tokens = rec["tokens_trained"]
            losses = rec["loss_by_position"]
            if not isinstance(tokens, int) or tokens <= 0:
                raise LogParseError(
                    f"line {lineno}: tokens_trained must be a positive integer", lineno
                )
            if tokens in seen:
                raise LogParseError(
                    f"line {lineno}: duplicate checkpoint at tokens_trained={tokens}",
                    lineno,
                )
            if not isinstance(losses, list) or len(losses) != manifest.seq_len:
                got = len(losses) if isinstance(losses, list) else "non-list"
                raise LogParseError(
                    f"line {lineno}: loss_by_position has {got} entries, "
                    f"expected seq_len={manifest.seq_len}",
                    lineno,
                )
            if "positions" in rec:
                expected = list(range(1, manifest.seq_len + 1))
                if rec["positions"] != expected:
                    raise LogParseError(
                        f"line {lineno}: positions key must equal [1..seq_len]", lineno
                    )
            arr = np.asarray(losses, dtype=float)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise LogParseError(
                    f"line {lineno}: losses must be finite and non-negative", lineno
                )
            seen.add(tokens)
            profiles.append(TokenLossProfile(tokens, arr))
    profiles.sort(key=lambda p: p.tokens_trained)
    return Trajectory(manifest, tuple(profiles))


def emit_trajectory(traj: Trajectory, manifest_path, log_path) -> None:
    """Write a Trajectory back to disk in the canonical format.

    ``parse_trajectory(emit_trajectory(T)) == T`` bit-exactly: floats are
    serialized with repr round-tripping.
    """
    m = traj.manifest
    with open(manifest_path, "w") as fh:
        json.dump(
            {
                "run_id": m.run_id,
                "n_tot": m.n_tot,
                "n_warmup": m.n_warmup,
                "seq_len": m.seq_len,
                "checkpoint_interval": m.checkpoint_interval,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    with open(log_path, "w") as fh:
        for p in traj.profiles:
            rec = {
                "tokens_trained": int(p.tokens_trained),
                "loss_by_position": [float(x) for x in p.loss_by_position],
            }
            fh.write(json.dumps(rec))
            fh.write("\n")


def mean_loss(profile: TokenLossProfile) -> float:
    """Arithmetic mean of the per-position losses (sequence loss)."""
    return float(np.mean(profile.loss_by_position))


def perplexity(mean_loss_value: float) -> float:
    """Perplexity corresponding to a mean cross-entropy loss in nats."""
    if not math.isfinite(mean_loss_value) or mean_loss_value < 0:
        raise ValueError("mean loss must be finite and non-negative")
    return math.exp(mean_loss_value)
