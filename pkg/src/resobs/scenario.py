"""Scenario files: TOML ingestion, validation, and serialization.

A scenario bundles the plant, the sensor network, the design parameters, the
disturbance and attack specifications, and the simulation horizon. Every
validation failure names the offending field. Node indices in files are
1-based; internally everything is 0-based.

Times at which anything jumps (schedule breakpoints, attack onsets, signal
windows) must lie on the simulation grid so that the fixed-step integrators
never straddle a discontinuity; this is validated, not silently repaired.
"""

import json
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .attack import AttackSignal, make_shaper
from .errors import (
    DefinitenessError,
    DimensionError,
    ParameterError,
    ScenarioError,
)
from .matlin import eig_range
from .network import Edge, Topology
from .plant import (
    DecayingExpSignal,
    DisturbanceRealization,
    MatrixSchedule,
    NoiseSignal,
    PlantModel,
    SumSignal,
    WindowedSineSignal,
    ZeroSignal,
)

_DIST_KINDS = ("zero", "noise", "decaying_exp", "windowed_sine")


@dataclass
class Scenario:
    name: str
    seed: int | None
    plant: dict
    nodes: list
    edges: list
    design: dict
    sim: dict
    disturbances: list = field(default_factory=list)
    attacks: list = field(default_factory=list)
    output: dict = field(default_factory=lambda: {"dir": "out"})

    @property
    def n(self):
        return int(self.plant["n"])

    @property
    def N(self):
        return len(self.nodes)

    def to_dict(self):
        """Plain-python form, suitable for comparison and serialization.
        Accepted back by :func:`scenario_from_dict`."""
        return {
            "meta": _drop_none({"name": self.name, "seed": self.seed}),
            "plant": _plain(self.plant),
            "node": [_plain(nd) for nd in self.nodes],
            "edge": [_plain(e) for e in self.edges],
            "design": _plain(self.design),
            "sim": _plain(self.sim),
            "disturbance": [_plain(d) for d in self.disturbances],
            "attack": [_plain(a) for a in self.attacks],
            "output": _plain(self.output),
        }


def _sched_plain(sched):
    if sched.is_constant:
        return sched.values[0].tolist()
    return {
        "breaks": sched.breaks.tolist(),
        "values": [v.tolist() for v in sched.values],
    }


def _plain(obj):
    if isinstance(obj, MatrixSchedule):
        return _sched_plain(obj)
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _drop_none(d):
    return {k: v for k, v in d.items() if v is not None}


# ---------------------------------------------------------------------------
# parsing helpers


def _matrix(raw, fieldname, rows=None, cols=None):
    try:
        m = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as err:
        raise ScenarioError(f"{fieldname}: not a numeric matrix ({err})",
                            field=fieldname) from None
    if m.ndim != 2:
        raise ScenarioError(
            f"{fieldname}: expected a matrix (list of rows), got ndim={m.ndim}",
            field=fieldname,
        )
    if rows is not None and m.shape[0] != rows:
        raise ScenarioError(
            f"{fieldname}: expected {rows} rows, got {m.shape[0]}",
            field=fieldname,
        )
    if cols is not None and m.shape[1] != cols:
        raise ScenarioError(
            f"{fieldname}: expected {cols} columns, got {m.shape[1]}",
            field=fieldname,
        )
    if not np.all(np.isfinite(m)):
        raise ScenarioError(f"{fieldname}: non-finite entries", field=fieldname)
    return m


def _vector(raw, fieldname, length=None):
    try:
        v = np.asarray(raw, dtype=float).ravel()
    except (TypeError, ValueError):
        raise ScenarioError(f"{fieldname}: not a numeric vector",
                            field=fieldname) from None
    if length is not None and v.shape[0] != length:
        raise ScenarioError(
            f"{fieldname}: expected length {length}, got {v.shape[0]}",
            field=fieldname,
        )
    return v


def _schedule(raw, fieldname, rows=None, cols=None):
    """Either a constant matrix or {breaks = [...], values = [mat, ...]}."""
    if isinstance(raw, dict):
        if "values" not in raw:
            raise ScenarioError(f"{fieldname}: schedule needs a 'values' list",
                                field=fieldname)
        breaks = raw.get("breaks", [])
        values = [_matrix(v, f"{fieldname}.values[{k}]", rows, cols)
                  for k, v in enumerate(raw["values"])]
        if len(values) != len(breaks) + 1:
            raise ScenarioError(
                f"{fieldname}: {len(values)} segments need "
                f"{len(values) - 1} breaks, got {len(breaks)}",
                field=fieldname,
            )
        try:
            return MatrixSchedule(np.stack(values), np.asarray(breaks, float))
        except DimensionError as err:
            raise ScenarioError(f"{fieldname}: {err}", field=fieldname) from None
    return MatrixSchedule.constant(_matrix(raw, fieldname, rows, cols))


def _on_grid(value, h, fieldname):
    k = round(value / h)
    if abs(value - k * h) > 1e-9 * max(1.0, abs(value)):
        raise ScenarioError(
            f"{fieldname}: time {value} does not lie on the simulation grid "
            f"(step {h})",
            field=fieldname,
        )


# ---------------------------------------------------------------------------
# load / validate


def scenario_from_dict(raw: dict) -> Scenario:
    meta = raw.get("meta", {})
    for section in ("plant", "node", "sim", "design"):
        if section not in raw:
            raise ScenarioError(f"missing [{section}] section", field=section)

    plant_raw = raw["plant"]
    for key in ("n", "m", "A", "B", "x0"):
        if key not in plant_raw:
            raise ScenarioError(f"plant.{key}: missing", field=f"plant.{key}")
    n = int(plant_raw["n"])
    m = int(plant_raw["m"])
    if n < 1 or m < 1:
        raise ScenarioError("plant.n and plant.m must be >= 1", field="plant.n")

    sim_raw = raw.get("sim", {})
    for key in ("T", "h"):
        if key not in sim_raw:
            raise ScenarioError(f"sim.{key}: missing", field=f"sim.{key}")
    h = float(sim_raw["h"])
    T = float(sim_raw["T"])
    if h <= 0 or T <= 0:
        raise ScenarioError("sim.T and sim.h must be positive", field="sim.h")
    if abs(round(T / h) * h - T) > 1e-9 * max(1.0, T):
        raise ScenarioError(
            f"sim.T = {T} is not an integer multiple of sim.h = {h}",
            field="sim.T",
        )

    plant = {
        "n": n,
        "m": m,
        "A": _schedule(plant_raw["A"], "plant.A", n, n),
        "B": _schedule(plant_raw["B"], "plant.B", n, m),
        "x0": _vector(plant_raw["x0"], "plant.x0", n),
    }
    for sched_field in ("A", "B"):
        for b in plant[sched_field].breaks:
            _on_grid(b, h, f"plant.{sched_field}.breaks")

    nodes_raw = raw.get("node", [])
    if not nodes_raw:
        raise ScenarioError("at least one [[node]] is required", field="node")
    nodes = []
    for i, nd in enumerate(nodes_raw, start=1):
        label = f"node[{i}]"
        for key in ("C", "D", "F"):
            if key not in nd:
                raise ScenarioError(f"{label}.{key}: missing",
                                    field=f"{label}.{key}")
        c = _schedule(nd["C"], f"{label}.C", None, n)
        p_i = c.shape[0]
        d = _schedule(nd["D"], f"{label}.D", p_i, None)
        f = _matrix(nd["F"], f"{label}.F", n, None)
        g = float(nd.get("shaper_gain", 1.0))
        if g <= 0:
            raise ScenarioError(
                f"{label}.shaper_gain: must be > 0, got {g}",
                field=f"{label}.shaper_gain",
            )
        for sched_field, sched in (("C", c), ("D", d)):
            for b in sched.breaks:
                _on_grid(b, h, f"{label}.{sched_field}.breaks")
        entry = {"C": c, "D": d, "F": f, "shaper_gain": g}
        for wname, dim in (("X", n), ("X_check", f.shape[1]), ("X_bar", n)):
            if wname in nd:
                wmat = _matrix(nd[wname], f"{label}.{wname}", dim, dim)
                lmin, _ = eig_range(0.5 * (wmat + wmat.T))
                if lmin <= 0:
                    raise ScenarioError(
                        f"{label}.{wname}: must be symmetric positive "
                        f"definite (lambda_min = {lmin:.3e})",
                        field=f"{label}.{wname}",
                    )
                entry[wname] = wmat
        nodes.append(entry)
    N = len(nodes)

    edges = []
    for k, ed in enumerate(raw.get("edge", []), start=1):
        label = f"edge[{k}]"
        for key in ("to", "from"):
            if key not in ed:
                raise ScenarioError(f"{label}.{key}: missing",
                                    field=f"{label}.{key}")
        to = int(ed["to"])
        src = int(ed["from"])
        for name, idx in (("to", to), ("from", src)):
            if not (1 <= idx <= N):
                raise ScenarioError(
                    f"{label}.{name}: node index {idx} out of range 1..{N}",
                    field=f"{label}.{name}",
                )
        if to == src:
            raise ScenarioError(f"{label}: self-loop not allowed",
                                field=label)
        w = _matrix(ed.get("W"), f"{label}.W", None, n) if "W" in ed else None
        if w is None:
            raise ScenarioError(f"{label}.W: missing", field=f"{label}.W")
        p_ij = w.shape[0]
        h_mat = _matrix(ed["H"], f"{label}.H", p_ij, None) if "H" in ed else \
            np.zeros((p_ij, 1))
        entry = {"to": to, "from": src, "W": w, "H": h_mat}
        for zname in ("Z", "Z_alt"):
            if zname in ed:
                entry[zname] = _matrix(ed[zname], f"{label}.{zname}",
                                       p_ij, p_ij)
        edges.append(entry)

    design_raw = raw.get("design", {})
    for key in ("gamma", "gamma_bar"):
        if key not in design_raw:
            raise ScenarioError(f"design.{key}: missing",
                                field=f"design.{key}")
    design = {
        "gamma": float(design_raw["gamma"]),
        "gamma_bar": float(design_raw["gamma_bar"]),
        "margin": float(design_raw.get("margin", 0.01)),
        "bound_cap_factor": float(design_raw.get("bound_cap_factor", 1e6)),
        "search_gamma": bool(design_raw.get("search_gamma", False)),
        "search_gamma_bar": bool(design_raw.get("search_gamma_bar", False)),
    }
    if design["gamma"] <= 0 or design["gamma_bar"] <= 0:
        raise ScenarioError("design.gamma and design.gamma_bar must be > 0",
                            field="design.gamma")
    if "P" in design_raw:
        design["P"] = _matrix(design_raw["P"], "design.P", n * N, n * N)

    sim = {"T": T, "h": h,
           "oracle_refine": int(sim_raw.get("oracle_refine", 2))}
    if sim["oracle_refine"] < 1:
        raise ScenarioError("sim.oracle_refine must be >= 1",
                            field="sim.oracle_refine")
    if "xi" in sim_raw:
        xi = _matrix(sim_raw["xi"], "sim.xi", N, n)
        sim["xi"] = xi

    disturbances = []
    needs_seed = False
    for k, di in enumerate(raw.get("disturbance", []), start=1):
        label = f"disturbance[{k}]"
        kind = di.get("kind")
        if kind not in _DIST_KINDS:
            raise ScenarioError(
                f"{label}.kind: expected one of {_DIST_KINDS}, got {kind!r}",
                field=f"{label}.kind",
            )
        target = di.get("target")
        if not isinstance(target, str):
            raise ScenarioError(f"{label}.target: missing",
                                field=f"{label}.target")
        _parse_target(target, N, label)  # validates
        entry = dict(di)
        if kind == "noise":
            needs_seed = True
            window = entry.get("window", [0.0, T])
            if len(window) != 2 or not window[1] > window[0]:
                raise ScenarioError(f"{label}.window: need [on, off] with "
                                    f"off > on", field=f"{label}.window")
            _on_grid(float(window[0]), h, f"{label}.window")
            _on_grid(float(window[1]), h, f"{label}.window")
            if float(window[0]) != 0.0:
                raise ScenarioError(
                    f"{label}.window: noise windows start at 0",
                    field=f"{label}.window",
                )
            entry["window"] = [float(window[0]), float(window[1])]
            if "scale" not in entry:
                raise ScenarioError(f"{label}.scale: missing",
                                    field=f"{label}.scale")
        elif kind == "decaying_exp":
            if "amp" not in entry:
                raise ScenarioError(f"{label}.amp: missing",
                                    field=f"{label}.amp")
            rate = float(entry.get("rate", 1.0))
            if rate <= 0:
                raise ScenarioError(f"{label}.rate: must be > 0",
                                    field=f"{label}.rate")
            entry["rate"] = rate
            start = float(entry.get("start", 0.0))
            _on_grid(start, h, f"{label}.start")
            entry["start"] = start
        elif kind == "windowed_sine":
            for key in ("amp", "omega", "window"):
                if key not in entry:
                    raise ScenarioError(f"{label}.{key}: missing",
                                        field=f"{label}.{key}")
            window = entry["window"]
            if len(window) != 2 or not float(window[1]) > float(window[0]):
                raise ScenarioError(f"{label}.window: need [on, off] with "
                                    f"off > on", field=f"{label}.window")
            _on_grid(float(window[0]), h, f"{label}.window")
            _on_grid(float(window[1]), h, f"{label}.window")
            entry["window"] = [float(window[0]), float(window[1])]
        disturbances.append(entry)

    attacks = []
    for k, at in enumerate(raw.get("attack", []), start=1):
        label = f"attack[{k}]"
        if "node" not in at:
            raise ScenarioError(f"{label}.node: missing",
                                field=f"{label}.node")
        node = int(at["node"])
        if not (1 <= node <= N):
            raise ScenarioError(
                f"{label}.node: index {node} out of range 1..{N}",
                field=f"{label}.node",
            )
        nf = nodes[node - 1]["F"].shape[1]
        onset = float(at.get("onset", 0.0))
        _on_grid(onset, h, f"{label}.onset")
        entry = {"node": node, "onset": onset,
                 "level": _vector(at.get("level", np.zeros(nf)),
                                  f"{label}.level", nf)}
        if "decay_amp" in at:
            entry["decay_amp"] = _vector(at["decay_amp"],
                                         f"{label}.decay_amp", nf)
            entry["decay_rate"] = float(at.get("decay_rate", 1.0))
            if entry["decay_rate"] <= 0:
                raise ScenarioError(f"{label}.decay_rate: must be > 0",
                                    field=f"{label}.decay_rate")
        if "pulse_amp" in at:
            entry["pulse_amp"] = _vector(at["pulse_amp"],
                                         f"{label}.pulse_amp", nf)
            if "pulse_len" not in at:
                raise ScenarioError(f"{label}.pulse_len: missing",
                                    field=f"{label}.pulse_len")
            entry["pulse_len"] = float(at["pulse_len"])
            _on_grid(onset + entry["pulse_len"], h, f"{label}.pulse_len")
        attacks.append(entry)

    seed = meta.get("seed")
    if needs_seed and seed is None:
        raise ScenarioError(
            "meta.seed: required because the scenario has stochastic "
            "disturbances",
            field="meta.seed",
        )

    sc = Scenario(
        name=str(meta.get("name", "unnamed")),
        seed=int(seed) if seed is not None else None,
        plant=plant,
        nodes=nodes,
        edges=edges,
        design=design,
        sim=sim,
        disturbances=disturbances,
        attacks=attacks,
        output=dict(raw.get("output", {"dir": "out"})),
    )
    # building the runtime objects performs the remaining cross-checks
    # (dimension consistency, SPD channel weights, signal widths, targets)
    try:
        model, topo, _ = build_system(sc)
        build_disturbances(sc, model, topo)
        build_attacks(sc)
    except (DimensionError, DefinitenessError, ParameterError,
            ValueError) as err:
        raise ScenarioError(str(err)) from None
    return sc


def _parse_target(target, N, label):
    parts = target.split(":")
    if parts[0] == "w" and len(parts) == 1:
        return ("w",)
    if parts[0] == "v" and len(parts) == 2:
        i = int(parts[1])
        if not (1 <= i <= N):
            raise ScenarioError(
                f"{label}.target: node index {i} out of range 1..{N}",
                field=f"{label}.target",
            )
        return ("v", i - 1)
    if parts[0] == "vij" and len(parts) == 3:
        i, j = int(parts[1]), int(parts[2])
        for idx in (i, j):
            if not (1 <= idx <= N):
                raise ScenarioError(
                    f"{label}.target: node index {idx} out of range 1..{N}",
                    field=f"{label}.target",
                )
        return ("vij", i - 1, j - 1)
    raise ScenarioError(
        f"{label}.target: expected 'w', 'v:i' or 'vij:i:j', got {target!r}",
        field=f"{label}.target",
    )


def load_scenario(path) -> Scenario:
    """Parse and fully validate a scenario file."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    except tomllib.TOMLDecodeError as err:
        raise ScenarioError(f"TOML parse error in {path}: {err}") from None
    return scenario_from_dict(raw)


# ---------------------------------------------------------------------------
# building runtime objects


def build_system(sc: Scenario):
    """(PlantModel, Topology, shapers) from a validated scenario."""
    model = PlantModel(
        n=sc.n,
        m=int(sc.plant["m"]),
        A=sc.plant["A"],
        B=sc.plant["B"],
        C=[nd["C"] for nd in sc.nodes],
        D=[nd["D"] for nd in sc.nodes],
        F=[nd["F"] for nd in sc.nodes],
        x0=sc.plant["x0"],
    )
    neighbors = [[] for _ in range(sc.N)]
    for ed in sc.edges:
        i = ed["to"] - 1
        p_ij = ed["W"].shape[0]
        neighbors[i].append(Edge(
            src=ed["from"] - 1,
            W=ed["W"],
            H=ed["H"],
            Z=ed.get("Z", np.eye(p_ij)),
            Z_alt=ed.get("Z_alt"),
        ))
    topo = Topology(N=sc.N, n=sc.n, neighbors=neighbors)
    shapers = [
        make_shaper(nd["F"].shape[1], nd["shaper_gain"]) for nd in sc.nodes
    ]
    return model, topo, shapers


def _fit_channels(raw, dim, label):
    """Scalar broadcast or exact per-channel vector."""
    arr = np.atleast_1d(np.asarray(raw, dtype=float)).ravel()
    if arr.shape == (1,):
        return np.full(dim, arr[0])
    if arr.shape != (dim,):
        raise ScenarioError(
            f"{label}: expected 1 or {dim} channel values, got {arr.shape[0]}",
            field=label,
        )
    return arr


def build_disturbances(sc: Scenario, model, topo, seed=None):
    """Disturbance signals; ``seed`` overrides the scenario seed."""
    the_seed = sc.seed if seed is None else seed
    if the_seed is None and any(d["kind"] == "noise" for d in sc.disturbances):
        raise ScenarioError(
            "meta.seed: required because the scenario has stochastic "
            "disturbances",
            field="meta.seed",
        )
    w_parts = []
    v_parts = [[] for _ in range(sc.N)]
    vij_parts = {}
    noise_counter = 0
    for idx, di in enumerate(sc.disturbances, start=1):
        label = f"disturbance[{idx}]"
        target = _parse_target(di["target"], sc.N, label)
        if target[0] == "w":
            dim = model.m
        elif target[0] == "v":
            dim = model.m_v(target[1])
        else:
            i, j = target[1], target[2]
            slot = None
            for k, e in enumerate(topo.neighbors[i]):
                if e.src == j:
                    slot = k
                    break
            if slot is None:
                raise ScenarioError(
                    f"{label}.target: no edge ({target[1] + 1} <- "
                    f"{target[2] + 1}) in the topology",
                    field=f"{label}.target",
                )
            dim = topo.neighbors[i][slot].m_c
        kind = di["kind"]
        if kind == "zero":
            sig = ZeroSignal(dim)
        elif kind == "noise":
            noise_counter += 1
            sub_seed = di.get("seed_offset", noise_counter)
            sig = NoiseSignal(
                dim=dim,
                scale=_fit_channels(di["scale"], dim, f"{label}.scale"),
                seed=(int(the_seed) << 8) + int(sub_seed),
                hold=sc.sim["h"],
                t_off=float(di["window"][1]),
            )
        elif kind == "decaying_exp":
            sig = DecayingExpSignal(
                amp=_fit_channels(di["amp"], dim, f"{label}.amp"),
                rate=di["rate"],
                start=di.get("start", 0.0),
            )
        else:
            sig = WindowedSineSignal(
                amp=_fit_channels(di["amp"], dim, f"{label}.amp"),
                omega=float(di["omega"]),
                window=di["window"],
                phase=float(di.get("phase", 0.0)),
            )
        if target[0] == "w":
            w_parts.append(sig)
        elif target[0] == "v":
            v_parts[target[1]].append(sig)
        else:
            vij_parts.setdefault((target[1], target[2]), []).append(sig)

    def mk(dim, parts):
        if not parts:
            return ZeroSignal(dim)
        if len(parts) == 1:
            return parts[0]
        return SumSignal(dim, parts)

    return DisturbanceRealization(
        w=mk(model.m, w_parts),
        v=[mk(model.m_v(i), v_parts[i]) for i in range(sc.N)],
        v_edge=[
            [
                mk(e.m_c, vij_parts.get((i, e.src), []))
                for e in topo.neighbors[i]
            ]
            for i in range(sc.N)
        ],
    )


def build_attacks(sc: Scenario):
    out = []
    for at in sc.attacks:
        out.append(AttackSignal(
            node=at["node"] - 1,
            onset=at["onset"],
            level=at["level"],
            decay_amp=at.get("decay_amp"),
            decay_rate=at.get("decay_rate", 1.0),
            pulse_amp=at.get("pulse_amp"),
            pulse_len=at.get("pulse_len", 0.0),
        ))
    return out


# ---------------------------------------------------------------------------
# serialization (canonical TOML subset)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, np.ndarray):
        return _toml_value(v.tolist())
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, dict):
        inner = ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items())
        return "{" + inner + "}"
    raise ScenarioError(f"cannot serialize value of type {type(v)}")


def _emit_table(lines, name, d, array=False):
    lines.append(f"[[{name}]]" if array else f"[{name}]")
    for k, v in d.items():
        if v is None:
            continue
        lines.append(f"{k} = {_toml_value(v)}")
    lines.append("")


def scenario_to_toml(sc: Scenario) -> str:
    """Serialize a scenario back to canonical TOML (round-trips through
    :func:`load_scenario`)."""
    d = sc.to_dict()
    lines = []
    _emit_table(lines, "meta", d["meta"])
    _emit_table(lines, "plant", d["plant"])
    for nd in d["node"]:
        _emit_table(lines, "node", nd, array=True)
    for ed in d["edge"]:
        _emit_table(lines, "edge", ed, array=True)
    _emit_table(lines, "design", d["design"])
    _emit_table(lines, "sim", d["sim"])
    for di in d["disturbance"]:
        _emit_table(lines, "disturbance", di, array=True)
    for at in d["attack"]:
        _emit_table(lines, "attack", at, array=True)
    _emit_table(lines, "output", d["output"])
    return "\n".join(lines)
