"""
Provenance helpers: config hashing, run identifiers, artifact digests and the
seed-splitting rule.

Every random draw in obscert comes from

    numpy.random.SeedSequence(entropy=master_seed, spawn_key=(stage, index))

where ``stage`` is a fixed ``Stage`` value and ``index`` is the sample index
inside that stage. Streams therefore do not depend on how work is spread over
threads.

Usage:
    from src.provenance import config_hash, run_iri, seed_sequence, Stage

    digest = config_hash(config_mapping)
    iri = run_iri(digest, seed=7)
    rng = numpy.random.default_rng(seed_sequence(7, Stage.FIT, 3))
"""

import hashlib
import json
import platform
import uuid
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, Mapping, Union

import numpy as np

# Fixed namespace so run IRIs are reproducible across machines (UUID v5).
RUN_NAMESPACE = uuid.UUID("5b1f7c1e-3a47-4d0e-9a53-0b5e9c2f6d11")
CERTIFICATE_NAMESPACE = uuid.UUID("8d2c4a90-6f13-4b8e-a1d7-3c9e5f0b2a64")

MAX_SEED = 2 ** 64 - 1


class Stage(IntEnum):
    """Seed stream per experiment stage."""

    FIT = 1
    OBSERVABILITY = 2
    CONTROL = 3
    MASK = 4


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(config: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a config mapping."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def run_iri(config_digest: str, seed: int) -> str:
    """Deterministic run identifier: same config and seed, same IRI."""
    return f"urn:uuid:{uuid.uuid5(RUN_NAMESPACE, f'{config_digest}:{seed}')}"


def certificate_iri(run_id: str, name: str) -> str:
    return f"urn:uuid:{uuid.uuid5(CERTIFICATE_NAMESPACE, f'{run_id}:{name}')}"


def validate_seed(seed: Any) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValueError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def seed_sequence(master_seed: int, stage: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(stage), int(index)))


def library_versions() -> Dict[str, str]:
    """Versions of the numerical stack, recorded in every manifest."""
    import scipy
    import sqlalchemy
    import yaml

    from . import __version__

    return {
        "obscert": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pyyaml": getattr(yaml, "__version__", "unknown"),
        "sqlalchemy": sqlalchemy.__version__,
    }
