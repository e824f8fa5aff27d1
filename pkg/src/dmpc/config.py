"""Line-oriented scenario config files with INI-style sections."""

from dataclasses import dataclass, field

from .graph import InfoGraph
from .dynamics import double_integrator_3d
from .simulation import SOLVER_KINDS, SimConfig


class ConfigError(ValueError):
    def __init__(self, line_no, msg):
        super().__init__(f"line {line_no}: {msg}" if line_no else msg)
        self.line_no = line_no


@dataclass
class ScenarioConfig:
    num_agents: int
    edges: list                      # (i, j, weight)
    sim: SimConfig
    agent_overrides: dict = field(default_factory=dict)  # agent -> (mass, u_max)
    out_dir: str = "out"
    formats: tuple = ("csv", "json")
    defaults_applied: list = field(default_factory=list)

    def graph(self):
        return InfoGraph(self.num_agents, {(i, j): w for i, j, w in self.edges})

    def agents(self):
        out = []
        for i in range(1, self.num_agents + 1):
            mass, u_max = self.agent_overrides.get(i, (self.sim.mass, self.sim.u_max))
            out.append(double_integrator_3d(self.sim.ts, mass, u_max))
        return out

    def to_dict(self):
        sim = self.sim
        return {
            "graph": {"n": self.num_agents,
                      "edges": [[i, j, w] for i, j, w in self.edges]},
            "agents": {"ts": sim.ts, "mass": sim.mass, "u_max": sim.u_max,
                       "overrides": {str(k): list(v) for k, v in self.agent_overrides.items()}},
            "mpc": {"horizon": sim.horizon, "rho": sim.rho,
                    "admm_iters": sim.admm_iterations, "warm_start": sim.warm_start,
                    "solver": sim.solver_kind},
            "sim": {"steps": sim.num_steps, "noise_variance": sim.noise_variance,
                    "seed": sim.rng_seed, "pos_range": list(sim.pos_range),
                    "vel_range": list(sim.vel_range)},
            "output": {"dir": self.out_dir, "formats": list(self.formats)},
            "defaults_applied": list(self.defaults_applied),
        }


_SECTIONS = ("graph", "agents", "mpc", "sim", "output")

_BOOL = {"true": True, "1": True, "yes": True, "on": True,
         "false": False, "0": False, "no": False, "off": False}


def _want(tokens, count, line_no, key):
    if len(tokens) != count:
        raise ConfigError(line_no, f"'{key}' expects {count} value(s), got {len(tokens)}")
    return tokens


def parse_config(text):
    """Parse a scenario document; unknown keys and malformed lines are errors."""
    section = None
    values = {s: {} for s in _SECTIONS}
    edges = []
    edge_seen = set()
    agent_overrides = {}
    notes = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in _SECTIONS:
                raise ConfigError(line_no, f"unknown section [{name}]")
            section = name
            continue
        if section is None:
            raise ConfigError(line_no, f"content before any section header: {line!r}")
        tokens = [t for t in line.replace("=", " ").split() if t]
        key, args = tokens[0].lower(), tokens[1:]
        try:
            _dispatch(section, key, args, line_no, values, edges, edge_seen, agent_overrides)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(line_no, str(exc))

    if "n" not in values["graph"]:
        raise ConfigError(0, "missing required section [graph] with key 'n'")
    n = values["graph"]["n"]
    for i, j, _ in edges:
        if not (1 <= i <= n and 1 <= j <= n):
            raise ConfigError(0, f"edge ({i},{j}) out of range 1..{n}")
    for i in agent_overrides:
        if not (1 <= i <= n):
            raise ConfigError(0, f"agent override for out-of-range agent {i}")

    def pick(section_name, key, default):
        if key in values[section_name]:
            return values[section_name][key]
        notes.append(f"{section_name}.{key} defaulted to {default}")
        return default

    sim = SimConfig(
        num_steps=pick("sim", "steps", 250),
        horizon=pick("mpc", "horizon", 10),
        admm_iterations=pick("mpc", "admm_iters", 30),
        rho=pick("mpc", "rho", 1.0),
        noise_variance=pick("sim", "noise_variance", 0.1),
        rng_seed=pick("sim", "seed", 0),
        solver_kind=pick("mpc", "solver", "admm"),
        warm_start=pick("mpc", "warm_start", True),
        ts=pick("agents", "ts", 0.1),
        u_max=pick("agents", "u_max", 1.0),
        mass=pick("agents", "mass", 1.0),
        pos_range=pick("sim", "pos_range", (-5.0, 5.0)),
        vel_range=pick("sim", "vel_range", (-1.0, 1.0)),
    )
    cfg = ScenarioConfig(
        num_agents=n, edges=edges, sim=sim, agent_overrides=agent_overrides,
        out_dir=pick("output", "dir", "out"),
        formats=tuple(pick("output", "formats", ("csv", "json"))),
        defaults_applied=notes,
    )
    cfg.graph()  # validates edges (weights, self-loops)
    return cfg


def _dispatch(section, key, args, line_no, values, edges, edge_seen, agent_overrides):
    if section == "graph":
        if key == "n":
            values["graph"]["n"] = _pos_int(_want(args, 1, line_no, key)[0], "n")
        elif key == "edge":
            if len(args) not in (2, 3):
                raise ConfigError(line_no, "'edge' expects: edge i j [weight]")
            i, j = int(args[0]), int(args[1])
            if i == j:
                raise ConfigError(line_no, f"self-loop on vertex {i}")
            w = float(args[2]) if len(args) == 3 else 1.0
            if w <= 0:
                raise ConfigError(line_no, f"edge weight must be positive, got {w}")
            pair = (min(i, j), max(i, j))
            if pair in edge_seen:
                raise ConfigError(line_no, f"duplicate edge {pair}")
            edge_seen.add(pair)
            edges.append((pair[0], pair[1], w))
        else:
            raise ConfigError(line_no, f"unknown key '{key}' in [graph]")
    elif section == "agents":
        if key == "ts":
            values["agents"]["ts"] = _pos_float(_want(args, 1, line_no, key)[0], "ts")
        elif key == "mass":
            values["agents"]["mass"] = _pos_float(_want(args, 1, line_no, key)[0], "mass")
        elif key == "u_max":
            values["agents"]["u_max"] = _pos_float(_want(args, 1, line_no, key)[0], "u_max")
        elif key == "agent":
            _want(args, 3, line_no, key)
            i = int(args[0])
            if i in agent_overrides:
                raise ConfigError(line_no, f"duplicate agent override for agent {i}")
            agent_overrides[i] = (_pos_float(args[1], "mass"), _pos_float(args[2], "u_max"))
        else:
            raise ConfigError(line_no, f"unknown key '{key}' in [agents]")
    elif section == "mpc":
        if key in ("horizon", "t"):
            values["mpc"]["horizon"] = _pos_int(_want(args, 1, line_no, key)[0], "horizon")
        elif key == "rho":
            values["mpc"]["rho"] = _pos_float(_want(args, 1, line_no, key)[0], "rho")
        elif key == "admm_iters":
            values["mpc"]["admm_iters"] = _pos_int(_want(args, 1, line_no, key)[0], "admm_iters")
        elif key == "warm_start":
            v = _want(args, 1, line_no, key)[0].lower()
            if v not in _BOOL:
                raise ConfigError(line_no, f"warm_start must be boolean, got {v!r}")
            values["mpc"]["warm_start"] = _BOOL[v]
        elif key == "solver":
            v = _want(args, 1, line_no, key)[0].lower()
            if v not in SOLVER_KINDS:
                raise ConfigError(line_no, f"solver must be one of {SOLVER_KINDS}, got {v!r}")
            values["mpc"]["solver"] = v
        else:
            raise ConfigError(line_no, f"unknown key '{key}' in [mpc]")
    elif section == "sim":
        if key == "steps":
            values["sim"]["steps"] = _pos_int(_want(args, 1, line_no, key)[0], "steps")
        elif key == "noise_variance":
            v = float(_want(args, 1, line_no, key)[0])
            if v < 0:
                raise ConfigError(line_no, "noise_variance must be nonnegative")
            values["sim"]["noise_variance"] = v
        elif key == "seed":
            values["sim"]["seed"] = int(_want(args, 1, line_no, key)[0])
        elif key in ("pos_range", "vel_range"):
            _want(args, 2, line_no, key)
            lo, hi = float(args[0]), float(args[1])
            if lo > hi:
                raise ConfigError(line_no, f"{key} lower bound exceeds upper")
            values["sim"][key] = (lo, hi)
        else:
            raise ConfigError(line_no, f"unknown key '{key}' in [sim]")
    elif section == "output":
        if key == "dir":
            values["output"]["dir"] = _want(args, 1, line_no, key)[0]
        elif key == "formats":
            fmts = tuple(f.lower() for a in args for f in a.split(","))
            bad = [f for f in fmts if f not in ("csv", "json")]
            if bad:
                raise ConfigError(line_no, f"unknown output format(s) {bad}")
            values["output"]["formats"] = fmts
        else:
            raise ConfigError(line_no, f"unknown key '{key}' in [output]")


def _pos_int(tok, name):
    v = int(tok)
    if v < 1:
        raise ValueError(f"{name} must be >= 1, got {v}")
    return v


def _pos_float(tok, name):
    v = float(tok)
    if v <= 0:
        raise ValueError(f"{name} must be positive, got {v}")
    return v
