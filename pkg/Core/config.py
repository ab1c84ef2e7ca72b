"""Experiment configuration: JSON documents, dotted overrides and validation."""

import copy
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Sequence

from Core.exceptions import ConfigError
from Core.utils.constants import (DEFAULT_ALPHA, DEFAULT_DELTA, DEFAULT_SECURITY_BITS, DEFAULT_SPLIT,
                                  DEFAULT_TAU, DEFAULT_TOP_K, DEFAULT_TRIALS, FilterLevel, ProtocolKind)
from Core.utils.helpers import config_hash

logger = logging.getLogger(__name__)

SWEEP_KINDS = ("mse", "collusion", "gain", "efficiency", "b_grid")

def _default_dataset() -> Dict[str, Any]:
    return {'synthetic': {'kind': 'zipf', 'n': 1000, 'd': 100, 'exponent': 1.0}}

def _default_budget() -> Dict[str, Any]:
    return {'eps': 1.0, 'delta': DEFAULT_DELTA, 'split': DEFAULT_SPLIT}

def _default_cipher() -> Dict[str, Any]:
    return {'kind': 'mock', 'tau': list(DEFAULT_TAU), 'security_bits': DEFAULT_SECURITY_BITS}

@dataclass
class ExperimentConfig:
    """One experiment: protocol, data, budget, protocol parameters and output."""
    protocol: str = "fme"
    dataset: Dict[str, Any] = field(default_factory=_default_dataset)
    budget: Dict[str, Any] = field(default_factory=_default_budget)
    beta: float = 1.0
    alpha: float = DEFAULT_ALPHA
    l_policy: Any = "max"
    b: Optional[int] = None
    kappa: int = 1
    groups: int = 1
    extra_eps: Optional[float] = None
    eps0: Optional[float] = None
    filter_level: str = "key"
    user_sample: float = 1.0
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    top_k: int = DEFAULT_TOP_K
    clip: bool = False
    cipher: Dict[str, Any] = field(default_factory=_default_cipher)
    dist: Optional[Dict[str, Any]] = None
    sweep: Optional[Dict[str, Any]] = None
    attack: Optional[Dict[str, Any]] = None
    workers: int = 1
    output: str = "output"
    keep_hop_log: bool = False

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(document) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        config = cls()
        for key, value in document.items():
            default = getattr(config, key)
            # Sections merge into their defaults; the dataset source is replaced whole
            if key != 'dataset' and isinstance(default, dict) and isinstance(value, dict):
                merged = copy.deepcopy(default)
                merged.update(value)
                value = merged
            setattr(config, key, value)
        return config

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def hash(self) -> str:
        """md5 of the canonical JSON form."""
        return config_hash(self.to_dict())

    @property
    def kind(self) -> ProtocolKind:
        return ProtocolKind.parse(self.protocol)

    @property
    def level(self) -> FilterLevel:
        return FilterLevel[self.filter_level.upper()]

    def set_value(self, key: str, value: Any):
        """Set a dotted key such as `budget.eps`."""
        head, _, rest = key.partition('.')
        if not hasattr(self, head):
            raise ConfigError(f"Unknown config key: {head}")
        if not rest:
            setattr(self, head, value)
            return
        target = getattr(self, head)
        if target is None:
            target = {}
            setattr(self, head, target)
        if not isinstance(target, dict):
            raise ConfigError(f"Config key {head} is not a section")
        parts = rest.split('.')
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value

    def get_value(self, key: str) -> Any:
        head, _, rest = key.partition('.')
        value = getattr(self, head)
        for part in rest.split('.') if rest else []:
            value = value[part]
        return value

    def apply_overrides(self, assignments: Sequence[str]) -> "ExperimentConfig":
        """Apply `key=value` strings; values are parsed as JSON when possible."""
        for assignment in assignments:
            key, sep, raw = assignment.partition('=')
            if not sep:
                raise ConfigError(f"Override must look like key=value: {assignment}")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            self.set_value(key.strip(), value)
        return self

    def derive(self, key: str, value: Any) -> "ExperimentConfig":
        """Copy with one dotted key changed."""
        other = copy.deepcopy(self)
        other.set_value(key, value)
        return other

    def validate(self) -> "ExperimentConfig":
        """Raise ConfigError listing every problem."""
        problems: List[str] = []
        try:
            kind = self.kind
        except ValueError as e:
            problems.append(str(e))
            kind = None

        eps = self.budget.get('eps')
        delta = self.budget.get('delta')
        split = self.budget.get('split', DEFAULT_SPLIT)
        if not isinstance(eps, (int, float)) or eps < 0:
            problems.append(f"budget.eps must be a nonnegative number, got {eps}")
        if not isinstance(delta, (int, float)) or not 0 <= delta <= 1:
            problems.append(f"budget.delta must lie in [0, 1], got {delta}")
        if split is not None and not 0 < split < 1:
            problems.append(f"budget.split must lie in (0, 1), got {split}")
        if not 0 < self.beta <= 1:
            problems.append(f"beta must lie in (0, 1], got {self.beta}")
        if not 0 <= self.alpha <= 1:
            problems.append(f"alpha must lie in [0, 1], got {self.alpha}")
        if not (self.l_policy in ("max", "b") or (isinstance(self.l_policy, int) and self.l_policy >= 1)):
            problems.append(f"l_policy must be 'max', 'b' or a positive integer, got {self.l_policy}")
        if self.b is not None and (not isinstance(self.b, int) or self.b < 2):
            problems.append(f"b must be an integer of at least 2, got {self.b}")
        if not isinstance(self.kappa, int) or self.kappa < 1:
            problems.append(f"kappa must be a positive integer, got {self.kappa}")
        if not isinstance(self.groups, int) or self.groups < 1:
            problems.append(f"groups must be a positive integer, got {self.groups}")
        if kind is ProtocolKind.PROPOSAL_STAR and not (self.extra_eps and self.extra_eps > 0):
            problems.append("proposal-star needs a positive extra_eps")
        if self.filter_level.upper() not in FilterLevel.__members__:
            problems.append(f"filter_level must be 'key' or 'pair', got {self.filter_level}")
        if not 0 < self.user_sample <= 1:
            problems.append(f"user_sample must lie in (0, 1], got {self.user_sample}")
        if not isinstance(self.trials, int) or self.trials < 1:
            problems.append(f"trials must be a positive integer, got {self.trials}")
        if not isinstance(self.workers, int) or self.workers < 1:
            problems.append(f"workers must be a positive integer, got {self.workers}")
        if self.cipher.get('kind') not in ('mock', 'real'):
            problems.append(f"cipher.kind must be 'mock' or 'real', got {self.cipher.get('kind')}")
        tau = self.cipher.get('tau', [])
        if len(tau) != 3 or any(not isinstance(t, int) or t <= 0 for t in tau):
            problems.append(f"cipher.tau must be three positive integers, got {tau}")

        source = self.dataset
        if not isinstance(source, dict) or not (('path' in source) ^ ('synthetic' in source)):
            problems.append("dataset needs exactly one of 'path' or 'synthetic'")
        elif 'synthetic' in source and source['synthetic'].get('kind') not in ('zipf', 'kv'):
            problems.append(f"dataset.synthetic.kind must be 'zipf' or 'kv', got {source['synthetic'].get('kind')}")

        if self.sweep is not None:
            if self.sweep.get('kind') not in SWEEP_KINDS:
                problems.append(f"sweep.kind must be one of {', '.join(SWEEP_KINDS)}")
            if not isinstance(self.sweep.get('values', []), list):
                problems.append("sweep.values must be a list")
        if self.attack is not None and not self.attack.get('targets'):
            problems.append("attack.targets must be a nonempty list of items")
        if self.attack is not None and self.attack.get('variant', 'colliding') not in ('colliding', 'single'):
            problems.append(f"attack.variant must be 'colliding' or 'single', got {self.attack['variant']}")
        attempts = (self.attack or {}).get('attempts', 1)
        if not (isinstance(attempts, int) and attempts >= 1):
            problems.append("attack.attempts must be at least 1")

        if problems:
            raise ConfigError("Invalid configuration:\n  - " + "\n  - ".join(problems))
        return self

def load_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read a JSON config (or defaults), apply overrides and validate."""
    document: Dict[str, Any] = {}
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                document = json.load(f)
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{e.lineno}: {e.msg}")
        if not isinstance(document, dict):
            raise ConfigError(f"{path}: top level must be an object")
    config = ExperimentConfig.from_dict(document).apply_overrides(overrides)
    logger.debug(f"Loaded config {config.hash()}")
    return config.validate()
