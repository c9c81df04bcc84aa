"""Run configuration: defaults, flat key=value files, and hashing.

Config files hold one ``key = value`` pair per line (# comments allowed);
command-line flags override file values. A short hash of the settings that
affect the learned parameters is embedded in checkpoints so that resuming
with a different configuration is refused.
"""

import dataclasses
import hashlib
from dataclasses import dataclass

from .errors import DataError


@dataclass
class TrainConfig:
    dim: int = 64
    layers_pretrain: int = 2
    layers_enhance: int = 2
    batch_size: int = 1024
    negatives: int = 4
    bpr_negatives: int = 1
    lr: float = 1e-3
    beta: float = 0.5
    l2: float = 1e-4
    epochs: int = 10
    seed: int = 0
    blend: str = "inverse-count"
    cutoff: int = 10
    grad_clip: float = 10.0
    resample_cap: int = 100
    no_pretrain: bool = False
    no_enhancement: bool = False
    no_prefnet: bool = False
    no_prefilter: bool = False
    no_postfilter: bool = False
    pretrain_strategy: str = "agg"
    aux_in_pretrain: bool = True
    aux_in_prefnet: bool = True
    trainable_codes: bool = False
    freeze_enhancement_input: bool = False
    sparse_updates: bool = True

    def validate(self):
        if self.dim < 1:
            raise DataError("dim must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise DataError("beta must lie in [0, 1]")
        if self.l2 < 0.0:
            raise DataError("l2 must be non-negative")
        if self.lr <= 0.0:
            raise DataError("lr must be positive")
        if self.layers_pretrain < 0 or self.layers_enhance < 0:
            raise DataError("layer counts must be >= 0")
        if self.batch_size < 1 or self.negatives < 0 or self.bpr_negatives < 1:
            raise DataError("bad batch/negative sizes")
        if self.cutoff < 1:
            raise DataError("cutoff must be >= 1")
        if self.pretrain_strategy not in ("agg", "sep"):
            raise DataError(f"unknown pretrain strategy {self.pretrain_strategy!r}")
        if self.no_enhancement and self.no_prefnet:
            raise DataError("cannot disable both score routes")
        # parse eagerly so bad blend strings fail at config time
        from .fusion import LambdaPolicy
        LambdaPolicy.parse(self.blend)
        return self


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(field, text):
    if field.type is bool or isinstance(field.default, bool):
        key = text.strip().lower()
        if key not in _BOOL:
            raise DataError(f"bad boolean for {field.name}: {text!r}")
        return _BOOL[key]
    if isinstance(field.default, int):
        return int(text)
    if isinstance(field.default, float):
        return float(text)
    return text.strip()


def coerce_value(key, text):
    """Parse one override value with the same rules as config files."""
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    if key not in fields:
        raise DataError(f"unknown config key {key!r}")
    try:
        return _coerce(fields[key], text)
    except ValueError:
        raise DataError(f"bad value for {key}: {text!r}") from None


def parse_text(text, base=None, origin="<config>"):
    cfg = dataclasses.replace(base) if base is not None else TrainConfig()
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{origin}:{lineno}: expected key = value")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in fields:
            raise DataError(f"{origin}:{lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, _coerce(fields[key], val))
        except ValueError:
            raise DataError(f"{origin}:{lineno}: bad value for {key}: {val!r}") from None
    return cfg


def parse_file(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_text(fh.read(), base=base, origin=str(path))


def apply_overrides(cfg, overrides):
    """Apply {name: value} pairs (already typed) on top of cfg."""
    names = {f.name for f in dataclasses.fields(TrainConfig)}
    for key, val in overrides.items():
        if key not in names:
            raise DataError(f"unknown config key {key!r}")
        if val is not None:
            setattr(cfg, key, val)
    return cfg


def to_text(cfg):
    lines = []
    for f in dataclasses.fields(TrainConfig):
        val = getattr(cfg, f.name)
        if isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{f.name} = {val}")
    return "\n".join(lines) + "\n"


def config_hash(cfg, num_users, num_items, num_behaviors):
    """Hash of everything a checkpoint's tensors depend on.

    epochs and cutoff only change how long/what we report, so they are
    left out and may differ between a run and its resume.
    """
    skip = {"epochs", "cutoff"}
    parts = [f"M={num_users}", f"N={num_items}", f"K={num_behaviors}"]
    for f in dataclasses.fields(TrainConfig):
        if f.name in skip:
            continue
        parts.append(f"{f.name}={getattr(cfg, f.name)!r}")
    return hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()[:16]
