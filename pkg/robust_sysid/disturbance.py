#%% Import libraries
"""
Seeded generation of the two disturbance regimes:
persistent zero-mean noise and sparse (Bernoulli-timed) attacks.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import ConfigError, DimensionError, InvalidParameterError


#%% Laws
@dataclass(frozen=True)
class NoiseLaw:
    """i.i.d. zero-mean coordinates: 'uniform' on [-scale, scale] or 'gaussian' N(0, scale^2)"""
    kind: str
    scale: float

    def __post_init__(self):
        if self.kind not in ('uniform', 'gaussian'):
            raise InvalidParameterError(f"Unknown noise law '{self.kind}' (expected uniform or gaussian)")
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise InvalidParameterError(f"Noise scale must be > 0, got {self.scale}")

    @classmethod
    def uniform_sym(cls, half_width: float) -> 'NoiseLaw':
        return cls('uniform', float(half_width))

    @classmethod
    def gaussian_iso(cls, sigma: float) -> 'NoiseLaw':
        return cls('gaussian', float(sigma))


@dataclass(frozen=True)
class AttackLaw:
    """
    Attack at each step with probability p < 0.5.

    value_rule 'paper': coordinates uniform on [c - min(||x_t||, cap), c + min(||x_t||, cap)]
    value_rule 'constant': the fixed vector `bias`
    """
    p: float
    value_rule: str = 'paper'
    center: float = 0.2
    cap: float = 1.0
    bias: Tuple[float, ...] = ()

    def __post_init__(self):
        if not (0.0 <= self.p < 0.5):
            raise InvalidParameterError(f"Attack probability must satisfy 0 <= p < 0.5, got {self.p}")
        if self.value_rule == 'paper':
            if not np.isfinite(self.center) or not np.isfinite(self.cap) or self.cap < 0:
                raise InvalidParameterError(f"Invalid state-dependent attack parameters c={self.center}, cap={self.cap}")
        elif self.value_rule == 'constant':
            bias = tuple(float(b) for b in self.bias)
            if not bias or not all(np.isfinite(bias)):
                raise InvalidParameterError("Constant attack needs a finite, non-empty bias vector")
            object.__setattr__(self, 'bias', bias)
        else:
            raise InvalidParameterError(f"Unknown attack value rule '{self.value_rule}'")

    @classmethod
    def paper_state_dependent(cls, p: float = 0.4, center: float = 0.2, cap: float = 1.0) -> 'AttackLaw':
        return cls(float(p), 'paper', float(center), float(cap))

    @classmethod
    def constant_bias(cls, p: float, bias) -> 'AttackLaw':
        return cls(float(p), 'constant', bias=tuple(bias))


@dataclass(frozen=True)
class DisturbanceSpec:
    regime: Union[NoiseLaw, AttackLaw]

    def __post_init__(self):
        if not isinstance(self.regime, (NoiseLaw, AttackLaw)):
            raise InvalidParameterError(f"Unsupported disturbance regime {self.regime!r}")

    @property
    def is_attack(self) -> bool:
        return isinstance(self.regime, AttackLaw)

    @classmethod
    def zero_mean_noise(cls, law: NoiseLaw) -> 'DisturbanceSpec':
        return cls(law)

    @classmethod
    def sparse_attack(cls, law: AttackLaw) -> 'DisturbanceSpec':
        return cls(law)

    @classmethod
    def none(cls) -> 'DisturbanceSpec':
        """Never attacks, so every disturbance is exactly zero"""
        return cls(AttackLaw.paper_state_dependent(p=0.0))

    def check_dim(self, n: int):
        if self.is_attack and self.regime.value_rule == 'constant' and len(self.regime.bias) != n:
            raise DimensionError(f"Constant attack bias has length {len(self.regime.bias)}, state dimension is {n}")

    def to_line(self) -> str:
        law = self.regime
        if isinstance(law, NoiseLaw):
            return f"noise {law.kind} {law.scale!r}"
        if law.value_rule == 'paper':
            return f"attack {law.p!r} paper {law.center!r} {law.cap!r}"
        return f"attack {law.p!r} constant " + ' '.join(repr(b) for b in law.bias)


def parse_disturbance(line: str, lineno: int = None) -> DisturbanceSpec:
    """
    Parse `noise uniform <a>`, `noise gaussian <sigma>`,
    `attack <p> paper <c> <cap>` or `attack <p> constant <b1> .. <bn>`.
    """
    parts = line.split()
    key = parts[0] if parts else ''
    try:
        if key == 'noise' and len(parts) == 3:
            return DisturbanceSpec(NoiseLaw(parts[1], float(parts[2])))
        if key == 'attack' and len(parts) >= 3:
            p = float(parts[1])
            if parts[2] == 'paper' and len(parts) == 5:
                return DisturbanceSpec(AttackLaw.paper_state_dependent(p, float(parts[3]), float(parts[4])))
            if parts[2] == 'constant' and len(parts) >= 4:
                return DisturbanceSpec(AttackLaw.constant_bias(p, [float(b) for b in parts[3:]]))
    except ValueError as e:
        raise ConfigError(f"invalid {key} directive '{line}': {e}", line=lineno, field=key or 'disturbance')
    raise ConfigError(f"malformed disturbance directive '{line}'", line=lineno, field=key or 'disturbance')


#%% Random streams
class RngStream:
    """
    Seeded stream: Philox counter-based generator keyed by (seed, stream_id).
    Owned by one task at a time; use derive_stream to get independent streams.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise InvalidParameterError("seed and stream_id must be non-negative")
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def restart(self) -> 'RngStream':
        """Fresh stream with the same key (starts from the first draw again)"""
        return RngStream(self.seed, self.stream_id)

    def random(self, size=None):
        return self.generator.random(size)

    def uniform(self, low, high, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, scale, size=None):
        return self.generator.normal(0.0, scale, size)


def derive_stream(seed: int, trial_index: int) -> RngStream:
    """Stream for one trial; distinct trial indices give independent streams"""
    return RngStream(seed, trial_index)


#%% Drawing
def draw_disturbance(spec: DisturbanceSpec, x_t, rng: RngStream) -> Tuple[np.ndarray, bool]:
    """
    Draw w_t given the current state.

    Draw order per step is fixed: noise draws n coordinates; attacks draw the
    Bernoulli flag first and, only when attacked, the n attack values.

    Returns:
        (w_t, attacked). Unattacked steps return an exact zero vector.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    n = x_t.shape[0]
    law = spec.regime

    if isinstance(law, NoiseLaw):
        if law.kind == 'uniform':
            return rng.uniform(-law.scale, law.scale, n), False
        return rng.normal(law.scale, n), False

    attacked = bool(rng.random() < law.p)
    if not attacked:
        return np.zeros(n), False
    if law.value_rule == 'paper':
        radius = min(float(np.linalg.norm(x_t)), law.cap)
        return rng.uniform(law.center - radius, law.center + radius, n), True
    if len(law.bias) != n:
        raise DimensionError(f"Constant attack bias has length {len(law.bias)}, state dimension is {n}")
    return np.array(law.bias, dtype=np.float64), True
