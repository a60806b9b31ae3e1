#%% Import libraries
"""
Domain types shared by the whole package: matrices, basis libraries,
system models and trajectories, plus the model text format.
"""

import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError, DimensionError, NonFiniteError

# Term kinds and how many state indices each one takes
TERM_ARITY = {
    'linear': 1,
    'cross': 2,
    'square': 1,
    'sinprod': 2,
    'cos': 1,
}


#%% Matrices
def as_mat(values, rows: int = None, cols: int = None, name: str = 'matrix') -> np.ndarray:
    """
    Validate and freeze a dense real matrix.

    Args:
        values: Anything numpy can turn into a 2-D float64 array
        rows: Expected number of rows (skipped when None)
        cols: Expected number of columns (skipped when None)
        name: Used in error messages

    Returns:
        np.ndarray: Read-only C-contiguous float64 copy
    """
    mat = np.array(values, dtype=np.float64, order='C', copy=True)
    if mat.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {mat.shape}")
    if rows is not None and mat.shape[0] != rows:
        raise DimensionError(f"{name} has {mat.shape[0]} rows, expected {rows}")
    if cols is not None and mat.shape[1] != cols:
        raise DimensionError(f"{name} has {mat.shape[1]} columns, expected {cols}")
    if not np.all(np.isfinite(mat)):
        raise NonFiniteError(f"{name} contains NaN or Inf entries")
    mat.setflags(write=False)
    return mat


def as_vector(values, dim: int = None, name: str = 'vector') -> np.ndarray:
    """Validate a finite 1-D float64 vector (read-only copy)"""
    if np.ndim(values) > 1:
        raise DimensionError(f"{name} must be 1-D, got shape {np.shape(values)}")
    vec = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    if dim is not None and vec.shape[0] != dim:
        raise DimensionError(f"{name} has dimension {vec.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(vec)):
        raise NonFiniteError(f"{name} contains NaN or Inf entries")
    vec.setflags(write=False)
    return vec


#%% Basis library
@dataclass(frozen=True)
class BasisTerm:
    kind: str
    indices: Tuple[int, ...]

    def __post_init__(self):
        if self.kind not in TERM_ARITY:
            raise ValueError(f"Unknown basis term kind '{self.kind}' (expected one of {sorted(TERM_ARITY)})")
        indices = tuple(int(i) for i in self.indices)
        object.__setattr__(self, 'indices', indices)
        if len(indices) != TERM_ARITY[self.kind]:
            raise ValueError(f"Term '{self.kind}' takes {TERM_ARITY[self.kind]} indices, got {len(indices)}")
        if any(i < 0 for i in indices):
            raise ValueError(f"Term indices must be non-negative, got {indices}")
        if self.kind == 'cross' and indices[0] == indices[1]:
            raise ValueError("cross term needs two different indices (use square for i == j)")

    # Convenience constructors mirroring the term names
    @classmethod
    def linear(cls, i: int) -> 'BasisTerm':
        return cls('linear', (i,))

    @classmethod
    def cross(cls, i: int, j: int) -> 'BasisTerm':
        return cls('cross', (i, j))

    @classmethod
    def square(cls, i: int) -> 'BasisTerm':
        return cls('square', (i,))

    @classmethod
    def sinprod(cls, i: int, j: int) -> 'BasisTerm':
        return cls('sinprod', (i, j))

    @classmethod
    def cos(cls, i: int) -> 'BasisTerm':
        return cls('cos', (i,))

    def to_line(self) -> str:
        return ' '.join([self.kind] + [str(i) for i in self.indices])

    @classmethod
    def from_line(cls, line: str) -> 'BasisTerm':
        parts = line.split()
        if not parts:
            raise ValueError("empty basis term line")
        return cls(parts[0].lower(), tuple(int(p) for p in parts[1:]))

    def label(self) -> str:
        """Readable label with 1-based coordinates, e.g. 'x1*x2' or 'sin(x1*x2)'"""
        names = [f"x{i + 1}" for i in self.indices]
        if self.kind == 'linear':
            return names[0]
        if self.kind == 'cross':
            return f"{names[0]}*{names[1]}"
        if self.kind == 'square':
            return f"{names[0]}^2"
        if self.kind == 'sinprod':
            return f"sin({names[0]}*{names[1]})"
        return f"cos({names[0]})"


@dataclass(frozen=True)
class BasisLibrary:
    state_dim: int
    terms: Tuple[BasisTerm, ...]

    def __post_init__(self):
        object.__setattr__(self, 'terms', tuple(self.terms))
        if self.state_dim < 1:
            raise ValueError(f"state_dim must be >= 1, got {self.state_dim}")
        if not self.terms:
            raise ValueError("basis library needs at least one term")
        for term in self.terms:
            if max(term.indices) >= self.state_dim:
                raise DimensionError(f"Term '{term.to_line()}' refers to a coordinate >= state_dim {self.state_dim}")

    @property
    def size(self) -> int:
        return len(self.terms)

    @classmethod
    def linear(cls, n: int) -> 'BasisLibrary':
        """Identity library: phi(x) = x"""
        return cls(n, tuple(BasisTerm.linear(i) for i in range(n)))

    def has_constant_offset(self) -> bool:
        """True when phi(0) != 0 (cos terms)"""
        return any(term.kind == 'cos' for term in self.terms)


def eval_basis(basis: BasisLibrary, x) -> np.ndarray:
    """
    Evaluate phi at a state, or at every row of a (T, n) array of states.

    Coordinate k of the result is term k evaluated at x:
    linear -> x_i, cross -> x_i*x_j, square -> x_i^2, sinprod -> sin(x_i*x_j), cos -> cos(x_i)
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != basis.state_dim:
        raise DimensionError(f"State has shape {x.shape}, basis expects last dimension {basis.state_dim}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("Cannot evaluate basis at a non-finite state")

    columns = []
    for term in basis.terms:
        i = term.indices[0]
        if term.kind == 'linear':
            columns.append(x[..., i])
        elif term.kind == 'cross':
            columns.append(x[..., i] * x[..., term.indices[1]])
        elif term.kind == 'square':
            columns.append(x[..., i] * x[..., i])
        elif term.kind == 'sinprod':
            columns.append(np.sin(x[..., i] * x[..., term.indices[1]]))
        else:
            columns.append(np.cos(x[..., i]))
    return np.stack(columns, axis=-1)


#%% System model
@dataclass(frozen=True)
class SystemModel:
    a_bar: np.ndarray
    basis: BasisLibrary

    def __post_init__(self):
        a_bar = as_mat(self.a_bar, name='a_bar')
        if a_bar.shape != (self.basis.state_dim, self.basis.size):
            raise DimensionError(
                f"a_bar has shape {a_bar.shape}, basis needs ({self.basis.state_dim}, {self.basis.size})")
        object.__setattr__(self, 'a_bar', a_bar)

    @property
    def n(self) -> int:
        return self.basis.state_dim

    @property
    def m(self) -> int:
        return self.basis.size

    def step(self, x) -> np.ndarray:
        """One noise-free step a_bar @ phi(x)"""
        return self.a_bar @ eval_basis(self.basis, x)

    def with_matrix(self, a) -> 'SystemModel':
        return SystemModel(a, self.basis)

    def __eq__(self, other):
        if not isinstance(other, SystemModel):
            return NotImplemented
        return self.basis == other.basis and np.array_equal(self.a_bar, other.a_bar)

    __hash__ = None


# Matrix printed in the numerical experiments; columns follow paper_basis()
PAPER_A_BAR = (
    (0.8, -0.5, 0.0, 0.0, 0.4, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0),
    (0.5, 0.8, 0.0, 0.06, 0.0, 0.0, -0.05, 0.0, 0.0, 0.0, 0.0),
    (0.0, 0.0, 0.45, 0.0, 0.0, 0.05, 0.0, 0.0, 0.0, 0.0, 0.1),
)

PAPER_X0 = (3.0, 3.0, 3.0)


def paper_basis() -> BasisLibrary:
    """[x1, x2, x3, x1x2, x2x3, x3x1, x1^2, x2^2, x3^2, sin(x1x2), cos(x3)]"""
    return BasisLibrary(3, (
        BasisTerm.linear(0),
        BasisTerm.linear(1),
        BasisTerm.linear(2),
        BasisTerm.cross(0, 1),
        BasisTerm.cross(1, 2),
        BasisTerm.cross(2, 0),
        BasisTerm.square(0),
        BasisTerm.square(1),
        BasisTerm.square(2),
        BasisTerm.sinprod(0, 1),
        BasisTerm.cos(2),
    ))


def paper_system() -> SystemModel:
    """The 3-state, 11-feature benchmark system"""
    return SystemModel(np.array(PAPER_A_BAR), paper_basis())


#%% Trajectory
@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    disturbances: np.ndarray
    attack_flags: Optional[np.ndarray] = None

    def __post_init__(self):
        states = as_mat(self.states, name='states')
        disturbances = np.array(self.disturbances, dtype=np.float64).reshape(-1, states.shape[1])
        if disturbances.shape[0] + 1 != states.shape[0]:
            raise DimensionError(
                f"Trajectory has {states.shape[0]} states but {disturbances.shape[0]} disturbances "
                f"(expected states = disturbances + 1)")
        disturbances = as_mat(disturbances, cols=states.shape[1], name='disturbances')
        object.__setattr__(self, 'states', states)
        object.__setattr__(self, 'disturbances', disturbances)
        if self.attack_flags is not None:
            flags = np.array(self.attack_flags, dtype=bool).reshape(-1)
            if flags.shape[0] != disturbances.shape[0]:
                raise DimensionError(f"attack_flags has length {flags.shape[0]}, expected {disturbances.shape[0]}")
            flags.setflags(write=False)
            object.__setattr__(self, 'attack_flags', flags)

    @property
    def length(self) -> int:
        """Number of transitions T"""
        return self.disturbances.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    def prefix(self, T: int) -> 'Trajectory':
        """First T transitions (T + 1 states)"""
        if T < 0 or T > self.length:
            raise DimensionError(f"Prefix length {T} outside [0, {self.length}]")
        flags = None if self.attack_flags is None else self.attack_flags[:T]
        return Trajectory(self.states[:T + 1], self.disturbances[:T], flags)

    def max_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.states, axis=1)))

    def attack_count(self) -> int:
        return 0 if self.attack_flags is None else int(np.sum(self.attack_flags))


#%% Model text format
def format_model(model: SystemModel) -> str:
    """Serialize a model; floats use repr() so the round trip is exact"""
    lines = [f"state_dim {model.n}", f"terms {model.m}"]
    lines += [term.to_line() for term in model.basis.terms]
    lines.append("a_bar")
    for row in model.a_bar:
        lines.append(' '.join(repr(float(v)) for v in row))
    return '\n'.join(lines) + '\n'


def parse_model(text: str, source: str = '<model>') -> SystemModel:
    """Inverse of format_model. '#' starts a comment; blank lines are ignored."""
    entries: List[Tuple[int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if line:
            entries.append((lineno, line))

    def fail(msg, lineno=None, fieldname=None):
        raise ConfigError(f"{source}: {msg}", line=lineno, field=fieldname)

    pos = 0

    def take_keyed(key):
        nonlocal pos
        if pos >= len(entries):
            fail(f"missing '{key}'", fieldname=key)
        lineno, line = entries[pos]
        parts = line.split()
        if parts[0] != key or len(parts) != 2:
            fail(f"expected '{key} <int>', got '{line}'", lineno, key)
        try:
            value = int(parts[1])
        except ValueError:
            fail(f"'{key}' must be an integer", lineno, key)
        pos += 1
        return value

    n = take_keyed('state_dim')
    m = take_keyed('terms')
    terms = []
    for _ in range(m):
        if pos >= len(entries):
            fail(f"expected {m} term lines", fieldname='terms')
        lineno, line = entries[pos]
        try:
            terms.append(BasisTerm.from_line(line))
        except ValueError as e:
            fail(str(e), lineno, 'terms')
        pos += 1

    if pos >= len(entries) or entries[pos][1] != 'a_bar':
        fail("missing 'a_bar' section", entries[pos][0] if pos < len(entries) else None, 'a_bar')
    pos += 1
    rows = []
    for _ in range(n):
        if pos >= len(entries):
            fail(f"a_bar needs {n} rows", fieldname='a_bar')
        lineno, line = entries[pos]
        try:
            row = [float(v) for v in line.split()]
        except ValueError:
            fail(f"non-numeric a_bar row '{line}'", lineno, 'a_bar')
        if len(row) != m:
            fail(f"a_bar row has {len(row)} values, expected {m}", lineno, 'a_bar')
        rows.append(row)
        pos += 1
    if pos != len(entries):
        fail(f"unexpected trailing content '{entries[pos][1]}'", entries[pos][0])

    try:
        return SystemModel(np.array(rows), BasisLibrary(n, tuple(terms)))
    except (ValueError, DimensionError) as e:
        fail(str(e))


def write_model(model: SystemModel, path: str):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    with open(path, 'w') as f:
        f.write(format_model(model))


def read_model(path: str) -> SystemModel:
    if not os.path.exists(path):
        raise ConfigError(f"Model file not found: {path}", field='model')
    with open(path) as f:
        return parse_model(f.read(), source=path)
