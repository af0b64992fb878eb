"""Run configuration and seed derivation."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

SEED_BITS = 63


def derive_seed(master: int, *labels) -> int:
    """Counter-based sub-seed: a hash of the master seed and a label path.

    Adding a new label never perturbs streams derived from other labels.
    """
    key = json.dumps([int(master), *[str(x) for x in labels]], separators=(",", ":"))
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> (64 - SEED_BITS)


@dataclass
class RunConfig:
    """Command-specific parameter blocks plus the master seed.

    Blocks are plain dicts (``model``, ``cesium``, ``optimizer``, ``errors``,
    ``output`` ...) so any run's effective config can be echoed verbatim
    into its output metadata.
    """

    command: str
    master_seed: int = 0
    blocks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "master_seed": self.master_seed, **copy.deepcopy(self.blocks)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        command = d.pop("command")
        seed = int(d.pop("master_seed", 0))
        return cls(command, seed, d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def save(self, path):
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.loads(Path(path).read_text())

    def merged(self, overrides: dict) -> "RunConfig":
        """New config with ``overrides`` (nested dicts) applied on top; ``None`` values are ignored."""
        out = self.to_dict()
        _deep_update(out, overrides)
        return RunConfig.from_dict(out)


def _deep_update(base: dict, upd: dict):
    for k, v in upd.items():
        if v is None:
            continue
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
