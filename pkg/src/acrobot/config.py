"""Run configuration for the command-line front end.

A config is a YAML mapping with the sections ``model``, ``params``,
``task``, ``integrator``, ``solver`` and ``output``.  Every section is
optional; omitted keys take the documented defaults below.  Unknown keys are
rejected, and every error names the offending key and its line.

Defaults
--------
params
    unit masses and lengths, ``gravity: 9.81``, elbow-only (2-link) or
    first-joint-passive (3-link) actuation.
task
    ``t_final: 3``, ``n_knots: 25``, ``scheme: trapezoid``, ``u_max: 20``;
    hanging rest to upright rest.
integrator
    ``dt: 0.001``, ``duration: 10``, ``initial_state`` with the first angle
    at ``pi/3`` and everything else zero.
solver
    the :class:`~acrobot.solver.SolverOptions` defaults, except that the
    3-link model starts from ``initial_penalty: 1`` with
    ``penalty_growth: 4``.
output
    ``directory`` unset (command line, then ``ACROBOT_OUT_DIR``, then
    ``./acrobot-out``), ``formats: [csv]``, ``frames: 3``.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dynamics import LinkChainParams
from .errors import ConfigError
from .solver import SolverOptions
from .transcription import OcpSpec

MODELS = {"acrobot2": 2, "acrobot3": 3}
FORMATS = ("csv", "svg")

_SCHEMA = {
    "model": None,
    "params": {"masses", "lengths", "gravity", "actuated"},
    "task": {
        "t_final",
        "n_knots",
        "scheme",
        "u_min",
        "u_max",
        "x_min",
        "x_max",
        "x_init",
        "x_final",
    },
    "integrator": {"dt", "duration", "initial_state"},
    "solver": {f.name for f in dataclasses.fields(SolverOptions)},
    "output": {"directory", "formats", "frames"},
}

_MODEL_SOLVER_DEFAULTS = {"acrobot3": {"initial_penalty": 1.0, "penalty_growth": 4.0}}


@dataclass(frozen=True)
class RunConfig:
    model: str
    params: LinkChainParams
    ocp: OcpSpec
    dt: float
    duration: float
    initial_state: np.ndarray
    solver: SolverOptions
    output_dir: str = None
    formats: tuple = ("csv",)
    frames: int = 3
    source: str = field(default=None, compare=False)

    @property
    def n_links(self):
        return self.params.n_links


def _line_map(node, path=(), out=None):
    """``{key path: 1-based line}`` for every mapping key in a composed YAML tree."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = (*path, str(key_node.value))
            out[key] = key_node.start_mark.line + 1
            _line_map(value_node, key, out)
    return out


class _Reader:
    def __init__(self, data, lines):
        self.data = data
        self.lines = lines

    def error(self, path, message):
        return ConfigError(message, key=".".join(path), line=self.lines.get(tuple(path)))

    def section(self, name):
        value = self.data.get(name, {})
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise self.error((name,), "section must be a mapping")
        return value

    def number(self, path, value, integer=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(path, f"expected a number, got {value!r}")
        if integer and value != int(value):
            raise self.error(path, f"expected an integer, got {value!r}")
        if not math.isfinite(value):
            raise self.error(path, f"expected a finite number, got {value!r}")
        return int(value) if integer else float(value)

    def vector(self, path, value, size=None):
        items = value if isinstance(value, list) else [value]
        out = np.array([self.number(path, v) for v in items])
        if size is not None and isinstance(value, list) and out.size != size:
            raise self.error(path, f"expected {size} values, got {out.size}")
        return out


def _check_keys(reader):
    if not isinstance(reader.data, dict):
        raise ConfigError("config must be a mapping of sections")
    for name, value in reader.data.items():
        if name not in _SCHEMA:
            raise reader.error((name,), f"unknown section {name!r}")
        allowed = _SCHEMA[name]
        if allowed is None or not isinstance(value, dict):
            continue
        for key in value:
            if key not in allowed:
                raise reader.error((name, key), f"unknown key {key!r} in section {name!r}")


def _build(reader, source):
    model = reader.data.get("model", "acrobot2")
    if model not in MODELS:
        raise reader.error(("model",), f"model must be one of {sorted(MODELS)}, got {model!r}")
    n = MODELS[model]

    p = reader.section("params")
    try:
        params = LinkChainParams(
            masses=tuple(reader.vector(("params", "masses"), p.get("masses", [1.0] * n), n)),
            lengths=tuple(reader.vector(("params", "lengths"), p.get("lengths", [1.0] * n), n)),
            gravity=reader.number(("params", "gravity"), p.get("gravity", 9.81)),
            actuated=None if "actuated" not in p else tuple(bool(a) for a in p["actuated"]),
        )
    except ValueError as exc:
        key = next((k for k in ("masses", "lengths", "gravity", "actuated") if k in p), "masses")
        raise reader.error(("params", key), str(exc)) from None

    t = reader.section("task")
    kwargs = {}
    for key in ("t_final",):
        if key in t:
            kwargs[key] = reader.number(("task", key), t[key])
    if "n_knots" in t:
        kwargs["n_knots"] = reader.number(("task", "n_knots"), t["n_knots"], integer=True)
    if "scheme" in t:
        kwargs["scheme"] = t["scheme"]
    for key in ("u_min", "u_max", "x_min", "x_max", "x_init", "x_final"):
        if key in t and t[key] is not None:
            kwargs[key] = reader.vector(("task", key), t[key])
    x_init = kwargs.pop("x_init", np.zeros(2 * n))
    x_final = kwargs.pop("x_final", None)
    if x_final is None:
        x_final = np.zeros(2 * n)
        x_final[0] = np.pi
    try:
        ocp = OcpSpec(params, x_init, x_final, **kwargs)
    except ValueError as exc:
        key = _blame(str(exc), t) or "t_final"
        raise reader.error(("task", key), str(exc)) from None

    g = reader.section("integrator")
    dt = reader.number(("integrator", "dt"), g.get("dt", 1e-3))
    duration = reader.number(("integrator", "duration"), g.get("duration", 10.0))
    for key, value in (("dt", dt), ("duration", duration)):
        if not value > 0:
            raise reader.error(("integrator", key), f"{key} must be positive, got {value}")
    default_x0 = np.zeros(2 * n)
    default_x0[0] = np.pi / 3
    x0 = g.get("initial_state")
    initial = default_x0 if x0 is None else reader.vector(("integrator", "initial_state"), x0, 2 * n)
    if initial.size != 2 * n:
        raise reader.error(("integrator", "initial_state"), f"expected {2 * n} values")

    s = dict(_MODEL_SOLVER_DEFAULTS.get(model, {}))
    for key, value in reader.section("solver").items():
        if key == "verbose":
            s[key] = bool(value)
        else:
            integer = key.startswith("max_") and key.endswith("_iters")
            s[key] = reader.number(("solver", key), value, integer=integer)
    try:
        solver = SolverOptions(**s)
    except ValueError as exc:
        key = _blame(str(exc), reader.section("solver")) or "solver"
        raise reader.error(("solver", key), str(exc)) from None

    o = reader.section("output")
    directory = o.get("directory")
    formats = o.get("formats", ["csv"])
    formats = [formats] if isinstance(formats, str) else list(formats)
    for fmt in formats:
        if fmt not in FORMATS:
            raise reader.error(("output", "formats"), f"unknown format {fmt!r}; expected {FORMATS}")
    frames = reader.number(("output", "frames"), o.get("frames", 3), integer=True)
    if frames < 1:
        raise reader.error(("output", "frames"), f"frames must be at least 1, got {frames}")

    return RunConfig(
        model=model,
        params=params,
        ocp=ocp,
        dt=dt,
        duration=duration,
        initial_state=initial,
        solver=solver,
        output_dir=None if directory is None else str(directory),
        formats=tuple(formats),
        frames=frames,
        source=source,
    )


def _blame(message, section):
    """Best guess at which key an invariant message is about."""
    for key in sorted(section, key=len, reverse=True):
        if key in message:
            return key
    return None


def parse_config(text, source=None):
    """Build a :class:`RunConfig` from YAML text."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(
            f"invalid YAML: {getattr(exc, 'problem', exc)}",
            line=None if mark is None else mark.line + 1,
        ) from None
    reader = _Reader({} if data is None else data, _line_map(root))
    _check_keys(reader)
    return _build(reader, source)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))


def default_config(model="acrobot2"):
    return parse_config(f"model: {model}\n")
