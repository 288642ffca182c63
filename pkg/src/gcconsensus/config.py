"""Run configuration: JSON loading and cross-field validation."""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DwellViolation, ParseError, ValidationError
from .graph import WeightedGraph, set_bounds
from .model import AgentModel
from .sim import generate_signal
from .synthesis import CostWeights

MODE_ALIASES = {"thm2": "nonlinear_thm2", "thm3": "linear_thm3",
                "nonlinear_thm2": "nonlinear_thm2", "linear_thm3": "linear_thm3"}


@dataclass(frozen=True, eq=False)
class SimSettings:
    t_end: float
    dt: float
    x0: np.ndarray


@dataclass(frozen=True, eq=False)
class RunConfig:
    model: AgentModel
    cost: CostWeights
    topology: object  # TopologySet
    switching: dict
    sim: SimSettings
    mode: str = "nonlinear_thm2"
    paper_literal_lmi: bool = False
    seed: int = 42
    source: dict = field(default_factory=dict, repr=False)

    @property
    def N(self):
        return self.topology.n

    def with_overrides(self, dt=None, seed=None):
        """Copy with ``--dt`` / ``--seed`` command-line overrides applied."""
        cfg = self
        if dt is not None:
            if not dt > 0 or not cfg.sim.t_end > dt:
                raise ValidationError("sim.dt", f"override {dt} must satisfy 0 < dt < t_end")
            cfg = replace(cfg, sim=replace(cfg.sim, dt=float(dt)))
        if seed is not None:
            sw = dict(cfg.switching)
            if sw.get("mode") == "random":
                sw["seed"] = int(seed)
            cfg = replace(cfg, seed=int(seed), switching=sw)
        return cfg


def _require(data, key, where):
    if not isinstance(data, dict) or key not in data:
        raise ValidationError(f"{where}.{key}" if where else key, "missing")
    return data[key]


def _matrix(value, name):
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(name, "must be a numeric matrix") from None
    if a.ndim != 2 or a.size == 0:
        raise ValidationError(name, f"must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(name, "has non-finite entries")
    return a


def _positive(value, name):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ValidationError(name, "must be a number") from None
    if not (np.isfinite(v) and v > 0):
        raise ValidationError(name, f"must be positive, got {value}")
    return v


def load_json(path):
    """Read JSON, turning syntax errors into ``ParseError`` with line and column."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def build_config(data):
    """Validate a decoded config mapping and return a ``RunConfig``.

    Graph problems (a disconnected member, mismatched node counts) are
    re-raised as-is from the graph module so the caller sees which
    topology failed.
    """
    if not isinstance(data, dict):
        raise ValidationError("<root>", "config must be a JSON object")

    mdata = _require(data, "model", "")
    try:
        model = AgentModel.from_dict({**mdata, "A": _matrix(_require(mdata, "A", "model"), "model.A"),
                                      "B": _matrix(_require(mdata, "B", "model"), "model.B")})
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError("model", str(exc)) from None

    cdata = _require(data, "cost", "")
    Q = _matrix(_require(cdata, "Q", "cost"), "cost.Q")
    R = _matrix(_require(cdata, "R", "cost"), "cost.R")
    if Q.shape != (model.d, model.d):
        raise ValidationError("cost.Q", f"shape {Q.shape} does not match d = {model.d}")
    if R.shape != (model.p, model.p):
        raise ValidationError("cost.R", f"shape {R.shape} does not match p = {model.p}")
    cost = CostWeights(Q, R)  # BadCostMatrix propagates

    gdata = _require(data, "topologies", "")
    if not isinstance(gdata, list):
        raise ValidationError("topologies", "must be a list of graphs")
    graphs = []
    for k, g in enumerate(gdata):
        try:
            graphs.append(WeightedGraph.from_dict(g))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValidationError(f"topologies[{k}]", str(exc)) from None
    topo = set_bounds(graphs)

    sdata = _require(data, "sim", "")
    t_end = _positive(_require(sdata, "t_end", "sim"), "sim.t_end")
    dt = _positive(sdata.get("dt", 1e-3), "sim.dt")
    if not t_end > dt:
        raise ValidationError("sim.t_end", f"must exceed dt = {dt}")
    x0 = _matrix(_require(sdata, "x0", "sim"), "sim.x0")
    if x0.shape[0] != topo.n:
        raise ValidationError("sim.x0", f"has {x0.shape[0]} rows but the graphs have {topo.n} nodes")
    if x0.shape[1] != model.d:
        raise ValidationError("sim.x0", f"has {x0.shape[1]} columns but d = {model.d}")

    flags = data.get("flags", {})
    mode = MODE_ALIASES.get(flags.get("mode", "thm2"))
    if mode is None:
        raise ValidationError("flags.mode", f"unknown mode {flags.get('mode')!r}")
    if mode == "linear_thm3" and model.f.kind != "zero":
        raise ValidationError("flags.mode", "thm3 requires a zero nonlinearity")
    literal = flags.get("paper_literal_lmi", False)
    if not isinstance(literal, bool):
        raise ValidationError("flags.paper_literal_lmi", "must be true or false")
    seed = flags.get("seed", 42)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ValidationError("flags.seed", "must be an integer")

    switching = dict(data.get("switching", {"mode": "schedule", "schedule": [[0.0, 1]]}))
    switching.setdefault("mode", "schedule")
    if switching["mode"] not in ("schedule", "random"):
        raise ValidationError("switching.mode", f"unknown mode {switching['mode']!r}")
    switching["dwell"] = _positive(switching.get("dwell", 0.5), "switching.dwell")
    if switching["mode"] == "random":
        switching.setdefault("seed", seed)
    for k, entry in enumerate(switching.get("schedule", [])):
        if len(entry) != 2 or not 1 <= int(entry[1]) <= len(topo):
            raise ValidationError(f"switching.schedule[{k}]", f"graph number must be in 1..{len(topo)}")
    try:
        generate_signal(dict(switching, t_end=t_end), topo)
    except DwellViolation:
        raise
    except (ValueError, TypeError) as exc:
        raise ValidationError("switching", str(exc)) from None

    return RunConfig(model, cost, topo, switching, SimSettings(t_end, dt, x0),
                     mode, literal, seed, data)


def parse_config(path):
    return build_config(load_json(path))

