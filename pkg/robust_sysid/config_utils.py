#%% Import libraries
"""
Line-oriented run configuration used by the CLI.

One directive per line, '#' starts a comment:

    model paper | model <path>
    noise uniform <a> | noise gaussian <sigma>
    attack <p> paper <c> <cap> | attack <p> constant <b1> .. <bn>
    x0 <v1> .. <vn>
    T <int> | tgrid <int,int,...>
    seeds <int>
    method ls | method l1 | method huber <mu>      (repeatable)
    master_seed <int>
    out <path>

Optional extras: timing on|off, tmin <int>, mu_grid <f,f,...>, workers <int>,
region <half_width>, samples <int>.
"""

import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import PAPER_X0, SystemModel, paper_system, read_model
from .disturbance import DisturbanceSpec, parse_disturbance
from .errors import ConfigError, InvalidParameterError
from .estimators import EstimatorConfig
from .loss import Method
from .simulate import DEFAULT_LIPSCHITZ_SAMPLES, DEFAULT_REGION_HALF_WIDTH

REPEATABLE = {'method'}
KNOWN_DIRECTIVES = {
    'model', 'noise', 'attack', 'x0', 'T', 'tgrid', 'seeds', 'method', 'master_seed', 'out',
    'timing', 'tmin', 'mu_grid', 'workers', 'region', 'samples',
}


@dataclass(frozen=True)
class RunConfig:
    path: str
    model_source: str
    model: SystemModel
    spec: DisturbanceSpec
    x0: Tuple[float, ...]
    T: Optional[int] = None
    t_grid: Optional[Tuple[int, ...]] = None
    seeds: Optional[int] = None
    methods: Tuple[EstimatorConfig, ...] = (EstimatorConfig.ls(),)
    master_seed: int = 0
    out: Optional[str] = None
    timing: bool = False
    tmin: int = 100
    mu_grid: Optional[Tuple[float, ...]] = None
    workers: int = 1
    region: float = DEFAULT_REGION_HALF_WIDTH
    samples: int = DEFAULT_LIPSCHITZ_SAMPLES

    def require(self, name: str):
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"{self.path}: directive '{name}' is required for this command", field=name)
        return value


#%% Value parsers
def _int(text: str, key: str, lineno: int, minimum: int = None) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ConfigError(f"'{key}' expects an integer, got '{text}'", line=lineno, field=key)
    if minimum is not None and value < minimum:
        raise ConfigError(f"'{key}' must be >= {minimum}, got {value}", line=lineno, field=key)
    return value


def _float(text: str, key: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"'{key}' expects a number, got '{text}'", line=lineno, field=key)
    if not np.isfinite(value):
        raise ConfigError(f"'{key}' must be finite, got '{text}'", line=lineno, field=key)
    return value


def _split_list(args: List[str]) -> List[str]:
    return [item for chunk in args for item in chunk.split(',') if item]


def _expect(args: List[str], count: int, key: str, lineno: int):
    if len(args) != count:
        raise ConfigError(f"'{key}' expects {count} value(s), got {len(args)}", line=lineno, field=key)


#%% Parser
def parse_run_config(text: str, path: str = '<config>') -> RunConfig:
    """Parse and validate a config document; every problem raises ConfigError with its line number"""
    seen: Dict[str, int] = {}
    values: Dict[str, object] = {}
    methods: List[EstimatorConfig] = []
    base_dir = os.path.dirname(os.path.abspath(path)) if path != '<config>' else os.getcwd()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        if key not in KNOWN_DIRECTIVES:
            raise ConfigError(f"unknown directive '{key}'", line=lineno, field=key)
        slot = 'disturbance' if key in ('noise', 'attack') else key
        if slot in seen and key not in REPEATABLE:
            raise ConfigError(f"duplicate '{slot}' directive (first on line {seen[slot]})", line=lineno, field=key)
        seen[slot] = lineno

        if key == 'model':
            _expect(args, 1, key, lineno)
            values['model'] = (args[0], lineno)
        elif key in ('noise', 'attack'):
            values['disturbance'] = (parse_disturbance(line, lineno), lineno)
        elif key == 'x0':
            if not args:
                raise ConfigError("'x0' needs at least one value", line=lineno, field=key)
            values['x0'] = (tuple(_float(a, key, lineno) for a in args), lineno)
        elif key == 'T':
            _expect(args, 1, key, lineno)
            values['T'] = _int(args[0], key, lineno, minimum=1)
        elif key == 'tgrid':
            grid = tuple(_int(a, key, lineno, minimum=1) for a in _split_list(args))
            if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError("'tgrid' must be a strictly ascending list of positive integers", line=lineno, field=key)
            values['t_grid'] = grid
        elif key == 'seeds':
            _expect(args, 1, key, lineno)
            values['seeds'] = _int(args[0], key, lineno, minimum=1)
        elif key == 'method':
            try:
                methods.append(EstimatorConfig(Method.parse(' '.join(args))))
            except (InvalidParameterError, ValueError) as e:
                raise ConfigError(f"invalid method '{' '.join(args)}': {e}", line=lineno, field=key)
            if methods[-1].label in [m.label for m in methods[:-1]]:
                raise ConfigError(f"method '{methods[-1].label}' listed twice", line=lineno, field=key)
        elif key == 'master_seed':
            _expect(args, 1, key, lineno)
            values['master_seed'] = _int(args[0], key, lineno, minimum=0)
        elif key == 'out':
            _expect(args, 1, key, lineno)
            values['out'] = args[0] if os.path.isabs(args[0]) else os.path.join(base_dir, args[0])
        elif key == 'timing':
            _expect(args, 1, key, lineno)
            if args[0] not in ('on', 'off'):
                raise ConfigError("'timing' expects on or off", line=lineno, field=key)
            values['timing'] = args[0] == 'on'
        elif key == 'tmin':
            _expect(args, 1, key, lineno)
            values['tmin'] = _int(args[0], key, lineno, minimum=1)
        elif key == 'mu_grid':
            grid = tuple(_float(a, key, lineno) for a in _split_list(args))
            if not grid or any(mu <= 0 for mu in grid):
                raise ConfigError("'mu_grid' needs positive values", line=lineno, field=key)
            values['mu_grid'] = grid
        elif key == 'workers':
            _expect(args, 1, key, lineno)
            values['workers'] = _int(args[0], key, lineno, minimum=1)
        elif key == 'region':
            _expect(args, 1, key, lineno)
            values['region'] = _float(args[0], key, lineno)
            if values['region'] <= 0:
                raise ConfigError("'region' must be > 0", line=lineno, field=key)
        elif key == 'samples':
            _expect(args, 1, key, lineno)
            values['samples'] = _int(args[0], key, lineno, minimum=2)

    # model
    if 'model' not in values:
        raise ConfigError(f"{path}: missing 'model' directive", field='model')
    source, model_line = values.pop('model')
    if source == 'paper':
        model = paper_system()
    else:
        model_path = source if os.path.isabs(source) else os.path.join(base_dir, source)
        if not os.path.exists(model_path):
            raise ConfigError(f"model file not found: {model_path}", line=model_line, field='model')
        model = read_model(model_path)

    # disturbance (absent = no disturbance)
    if 'disturbance' in values:
        spec, spec_line = values.pop('disturbance')
        try:
            spec.check_dim(model.n)
        except ValueError as e:
            raise ConfigError(str(e), line=spec_line, field='attack')
    else:
        spec = DisturbanceSpec.none()

    # x0 (absent = the benchmark's initial value 3.0 in every coordinate)
    if 'x0' in values:
        x0, x0_line = values.pop('x0')
        if len(x0) != model.n:
            raise ConfigError(f"'x0' has {len(x0)} values, model state dimension is {model.n}", line=x0_line, field='x0')
    else:
        x0 = tuple([PAPER_X0[0]] * model.n)

    return RunConfig(
        path=path,
        model_source=source,
        model=model,
        spec=spec,
        x0=x0,
        methods=tuple(methods) if methods else (EstimatorConfig.ls(),),
        **values,
    )


def load_run_config(path: str) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}", field='config')
    with open(path) as f:
        return parse_run_config(f.read(), path=path)
