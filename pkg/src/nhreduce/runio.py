"""Run configuration and CSV trajectory files."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import particle, suslov
from .dldps import DiscretePath, PathPair
from .matgroup import cay

_EMPTY = np.zeros(0)

SUSLOV_LEVELS = ("full", "eta", "momentum")
PARTICLE_LEVELS = ("full", "h_reduced", "g_reduced", "gh_reduced")
PARTICLE_STAGE = {"full": "full", "h_reduced": "H", "g_reduced": "G", "gh_reduced": "G_over_H"}


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    pass


def _mat_cols(prefix):
    return [f"{prefix}_rowmajor_{i}{j}" for i in range(3) for j in range(3)]


COLUMNS = {
    ("suslov", "full"): _mat_cols("g") + _mat_cols("gnext"),
    ("suslov", "eta"): _mat_cols("W"),
    ("suslov", "momentum"): ["p1", "p2", "p3"],
    ("particle", "full"): ["x", "y", "z", "x_next", "y_next", "z_next"],
    ("particle", "h_reduced"): ["x", "y", "w", "x_next", "y_next"],
    ("particle", "g_reduced"): ["y", "u", "w", "y_next"],
    ("particle", "gh_reduced"): ["y", "w", "u", "y_next"],
}


# ---------------------------------------------------------------- config

def _floats(value, n, name):
    try:
        arr = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected {n} numbers") from exc
    if arr.size != n or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: expected {n} finite numbers")
    return arr


@dataclass
class RunConfig:
    system: str
    level: str
    steps: int
    inertia: tuple = suslov.DEFAULT_INERTIA
    h_step: float = 0.1
    connection_h: tuple = (0.0, 0.0, 0.0)
    newton_tol: float = 1e-12
    max_iter: int = 50
    initial: dict = field(default_factory=dict)

    @property
    def h_matrix(self):
        """Connection element cay(connection_h), or None for the canonical connection."""
        if not np.any(np.asarray(self.connection_h)):
            return None
        return cay(np.asarray(self.connection_h, dtype=float))

    def to_dict(self):
        return {"system": self.system, "level": self.level, "steps": self.steps,
                "inertia": list(self.inertia), "h_step": self.h_step,
                "connection_h": list(self.connection_h), "newton_tol": self.newton_tol,
                "max_iter": self.max_iter, "initial": self.initial}


_KNOWN = {"system", "level", "steps", "inertia", "h_step", "connection_h", "newton_tol",
          "max_iter", "initial"}


def parse_config(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    system = doc.get("system")
    if system not in ("suslov", "particle"):
        raise ConfigError("system must be 'suslov' or 'particle'")
    level = doc.get("level")
    levels = SUSLOV_LEVELS if system == "suslov" else PARTICLE_LEVELS
    if level not in levels:
        raise ConfigError(f"level for {system} must be one of {levels}")
    steps = doc.get("steps")
    if isinstance(steps, bool) or not isinstance(steps, int) or steps < 0:
        raise ConfigError("steps must be a non-negative integer")
    tol = doc.get("newton_tol", 1e-12)
    if not isinstance(tol, (int, float)) or isinstance(tol, bool) or not tol > 0:
        raise ConfigError("newton_tol must be positive")
    max_iter = doc.get("max_iter", 50)
    if isinstance(max_iter, bool) or not isinstance(max_iter, int) or max_iter < 1:
        raise ConfigError("max_iter must be a positive integer")
    initial = doc.get("initial", {})
    if not isinstance(initial, dict):
        raise ConfigError("initial must be an object")
    cfg = RunConfig(system=system, level=level, steps=steps, newton_tol=float(tol),
                    max_iter=max_iter, initial=dict(initial))

    if system == "suslov":
        cfg.inertia = tuple(_floats(doc.get("inertia", suslov.DEFAULT_INERTIA), 5, "inertia"))
        try:
            suslov.InertiaParams.from_list(cfg.inertia)
        except suslov.InvalidInertia as exc:
            raise ConfigError(str(exc)) from exc
        cfg.connection_h = tuple(_floats(doc.get("connection_h", (0.0, 0.0, 0.0)), 3, "connection_h"))
        if level == "momentum" and cfg.h_matrix is not None:
            raise ConfigError("the momentum level uses the canonical connection (connection_h = 0)")
        omega = _floats(initial.get("omega", suslov.DEFAULT_OMEGA), 2, "initial.omega")
        g0 = _floats(initial.get("g0", np.eye(3)), 9, "initial.g0").reshape(3, 3)
        if np.max(np.abs(g0.T @ g0 - np.eye(3))) > 1e-10 or abs(np.linalg.det(g0) - 1) > 1e-10:
            raise ConfigError("initial.g0 must be a rotation matrix")
        cfg.initial = {"omega": omega.tolist(), "g0": g0.tolist()}
    else:
        h = doc.get("h_step", 0.1)
        if not isinstance(h, (int, float)) or isinstance(h, bool) or not h > 0:
            raise ConfigError("h_step must be positive")
        cfg.h_step = float(h)
        q0 = _floats(initial.get("q0", (0.0, 1.0, 0.0)), 3, "initial.q0")
        dxy = _floats(initial.get("dxy", (0.1, 0.05)), 2, "initial.dxy")
        cfg.initial = {"q0": q0.tolist(), "dxy": dxy.tolist()}
    return cfg


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    return parse_config(doc)


# ---------------------------------------------------------------- systems and initial data

def build_system(cfg):
    if cfg.system == "suslov":
        return suslov.build_suslov(cfg.level, cfg.inertia, h=cfg.h_matrix if cfg.level == "eta" else None)
    return particle.build_particle(PARTICLE_STAGE[cfg.level], cfg.h_step)


def initial_pair(cfg):
    ini = cfg.initial
    if cfg.system == "suslov":
        g0 = np.asarray(ini["g0"], dtype=float)
        pp = suslov.initial_pair(cfg.level, cfg.inertia, g0=g0, omega=ini["omega"])
        h = cfg.h_matrix
        if cfg.level == "eta" and h is not None:
            pp = PathPair((pp.eps[0] @ h.T, _EMPTY), _EMPTY)
        return pp
    return particle.initial_pair(PARTICLE_STAGE[cfg.level], ini["q0"], ini["dxy"])


# ---------------------------------------------------------------- CSV rows

def pair_to_row(system, level, pp):
    if system == "suslov":
        if level == "full":
            return np.concatenate([np.ravel(pp.eps[1]), np.ravel(pp.m_next)])
        return np.ravel(pp.eps[0])
    if level == "full":
        return np.concatenate([pp.eps[1], pp.m_next])
    if level == "h_reduced":
        return np.array([pp.eps[1][0], pp.eps[1][1], pp.eps[0][0], pp.m_next[0], pp.m_next[1]])
    return np.array([pp.eps[1][0], pp.eps[0][0], pp.eps[0][1], pp.m_next[0]])


def row_to_pair(system, level, row):
    row = np.asarray(row, dtype=float)
    if system == "suslov":
        if level == "full":
            return PathPair((_EMPTY, row[:9].reshape(3, 3)), row[9:].reshape(3, 3))
        if level == "eta":
            return PathPair((row.reshape(3, 3), _EMPTY), _EMPTY)
        return PathPair((row.copy(), _EMPTY), _EMPTY)
    if level == "full":
        return PathPair((_EMPTY, row[:3].copy()), row[3:].copy())
    if level == "h_reduced":
        return PathPair((row[2:3].copy(), row[0:2].copy()), row[3:5].copy())
    return PathPair((row[1:3].copy(), row[0:1].copy()), row[3:4].copy())


def format_csv(system, level, path):
    buf = io.StringIO()
    buf.write(",".join(["step"] + COLUMNS[(system, level)]) + "\n")
    for k, pp in enumerate(path):
        vals = pair_to_row(system, level, pp)
        buf.write(",".join([str(k)] + [format(float(v), ".17g") for v in vals]) + "\n")
    return buf.getvalue()


def write_csv(out, system, level, path):
    Path(out).write_text(format_csv(system, level, path))


def detect_level(header):
    """(system, level) whose column list matches a CSV header."""
    cols = list(header[1:]) if header and header[0] == "step" else None
    for key, names in COLUMNS.items():
        if cols == names:
            return key
    raise SchemaError(f"unrecognized CSV header: {','.join(header)}")


def read_csv(path, expect=None):
    """Read a trajectory file; returns ((system, level), DiscretePath)."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path} is empty")
    key = detect_level(rows[0])
    if expect is not None and key != tuple(expect):
        raise SchemaError(f"{path} holds {key[0]}/{key[1]} data, expected {expect[0]}/{expect[1]}")
    pairs = []
    n = len(COLUMNS[key])
    for i, r in enumerate(rows[1:], start=1):
        if len(r) != n + 1:
            raise SchemaError(f"{path}: row {i} has {len(r)} fields, expected {n + 1}")
        try:
            vals = [float(v) for v in r[1:]]
        except ValueError as exc:
            raise SchemaError(f"{path}: row {i} is not numeric") from exc
        pairs.append(row_to_pair(key[0], key[1], vals))
    return key, DiscretePath(pairs, check=False)
