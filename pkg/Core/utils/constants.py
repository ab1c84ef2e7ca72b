"""Constants for the ShuffleFME framework."""

from enum import Enum, auto, IntEnum

class ProtocolKind(Enum):
    """Enumeration of the protocols the framework can run."""
    LNF = auto()
    CH = auto()
    GH = auto()
    UH = auto()
    FME = auto()
    KV = auto()
    PROPOSAL_STAR = auto()
    PURE_GRR = auto()

    @classmethod
    def parse(cls, name: str) -> "ProtocolKind":
        """Parse a protocol id such as 'fme' or 'proposal-star'."""
        key = name.strip().upper().replace('-', '_').replace('*', '_STAR')
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"Unknown protocol: {name}")

    @property
    def augmented(self) -> bool:
        """Whether the shuffler samples and adds dummies."""
        return self is not ProtocolKind.PURE_GRR

class DistributionKind(Enum):
    """Enumeration of dummy-count distribution families."""
    BINOMIAL = auto()
    ASYMMETRIC_GEOMETRIC = auto()
    POINT_MASS = auto()

class CipherKind(Enum):
    """Enumeration of cipher suites."""
    MOCK = auto()
    REAL = auto()

class PartyKind(Enum):
    """Enumeration of parties in the three-party model."""
    USER = auto()
    SHUFFLER = auto()
    COLLECTOR = auto()

class HopClass(Enum):
    """Communication buckets of the cost model."""
    USER_SHUFFLER = auto()
    SHUFFLER_COLLECTOR = auto()

class Regime(Enum):
    """Regimes of the hash-range optimizer."""
    L_EQUALS_B = auto()
    L_BELOW_BETA_N = auto()

class FilterLevel(Enum):
    """Granularity at which the KV protocol filters."""
    KEY = auto()
    PAIR = auto()

class ExitCode(IntEnum):
    """Process exit codes of the CLI."""
    SUCCESS = 0
    REPLAY_MISMATCH = 1
    CONFIG_ERROR = 2
    CALIBRATION_INFEASIBLE = 3
    DATASET_ERROR = 4

# Sentinel symbol for an unselected item or a dummy payload
BOTTOM = 0

# Ciphertext sizes (bits) of ECIES at 256-bit security
DEFAULT_TAU = (712, 1392, 2072)
DEFAULT_SECURITY_BITS = 256
MIN_PAYLOAD_BYTES = 4

# Experiment defaults
DEFAULT_ALPHA = 0.05
DEFAULT_SPLIT = 0.5
DEFAULT_DELTA = 1e-12
DEFAULT_TRIALS = 10
DEFAULT_L_FLOOR = 50
DEFAULT_TOP_K = 50

# Hash redraws the colliding CH attacker may try per trial
DEFAULT_COLLISION_ATTEMPTS = 2000

# Dummy pmf support is cut where the remaining tail mass drops below this
PMF_TAIL_CUTOFF = 1e-18

# Stream names of the deterministic randomness source
STREAM_USER = "user"
STREAM_SHUFFLER = "shuffler"
STREAM_COLLECTOR = "collector"
STREAM_ATTACK = "attack"
STREAM_SEARCH = "search"
STREAM_DATA = "data"
