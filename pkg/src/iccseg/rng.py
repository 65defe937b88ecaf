"""Deterministic random-stream derivation.

All randomness in a run flows from one root seed. Independent parts of the
pipeline (splitting, frame sampling, clustering, weight init, window
augmentation, ...) each draw from a named child stream so that changing one
component's consumption never perturbs another's. Child seeds are derived by
hashing ``"<root>:<name>"``, which makes a stream a pure function of
(root seed, name) regardless of call order — this is what allows interrupted
runs to resume exactly.
"""
from __future__ import annotations

import hashlib

import numpy as np
import torch


def child_seed(root_seed: int, name: str) -> int:
    """Derive a 63-bit child seed from a root seed and a stream name."""
    digest = hashlib.sha256(f"{root_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def child_rng(root_seed: int, name: str) -> np.random.Generator:
    """NumPy generator for the named child stream."""
    return np.random.Generator(np.random.PCG64(child_seed(root_seed, name)))


def torch_generator(root_seed: int, name: str) -> torch.Generator:
    """Torch CPU generator for the named child stream."""
    gen = torch.Generator(device="cpu")
    gen.manual_seed(child_seed(root_seed, name))
    return gen
