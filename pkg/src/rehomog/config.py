"""Run configuration (TOML or JSON) and its validation."""
import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    coefficient: str = "trig_product"
    coefficient_params: dict = field(default_factory=lambda: {"dim": 1})
    gamma: float = 2.0
    epsilons: list = field(default_factory=lambda: [2.0 ** -k for k in range(3, 8)])
    deltas: list | None = None
    cell_n: int = 4096
    cell_n_y: int = 64
    cell_method: str = "direct"
    mesh_per_delta: int = 32
    mesh_m: list | None = None
    quad_order: int = 4
    fine_solver: str = "oracle"
    rhs: str = "cos"
    abscissa: str = "tau"
    thresholds: dict = field(default_factory=lambda: {"l2_error": [0.9, 1.1]})
    output_dir: str = "out"
    seed: int = 0
    write_fields: bool = False

    @property
    def dim(self):
        return int(self.coefficient_params.get("dim", 2 if self.coefficient in
                                                   ("modulated_laminate", "checkerboard",
                                                    "nonsymmetric", "constant_matrix") else 1))

    def delta(self, i):
        if self.deltas is not None:
            return float(self.deltas[i])
        return float(self.epsilons[i]) ** self.gamma

    def mesh_size(self, i):
        """Mesh resolution m for the i-th epsilon (power of two covering delta/per_delta)."""
        if self.mesh_m is not None:
            return int(self.mesh_m[i] if isinstance(self.mesh_m, list) else self.mesh_m)
        need = self.mesh_per_delta / self.delta(i)
        return int(2 ** math.ceil(math.log2(need) - 1e-12))

    def to_dict(self):
        return asdict(self)

    def digest(self):
        """Short stable hash; output_dir is excluded so moving outputs keeps the key."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


_SECTIONS = {
    ("coefficient", "name"): "coefficient",
    ("coefficient", "params"): "coefficient_params",
    ("coupling", "gamma"): "gamma",
    ("coupling", "epsilons"): "epsilons",
    ("coupling", "deltas"): "deltas",
    ("cell", "n"): "cell_n",
    ("cell", "n_y"): "cell_n_y",
    ("cell", "method"): "cell_method",
    ("mesh", "per_delta"): "mesh_per_delta",
    ("mesh", "m"): "mesh_m",
    ("quadrature", "order"): "quad_order",
    ("solve", "fine"): "fine_solver",
    ("solve", "rhs"): "rhs",
    ("acceptance", "abscissa"): "abscissa",
    ("acceptance", "slopes"): "thresholds",
    ("output", "dir"): "output_dir",
    ("output", "seed"): "seed",
    ("output", "fields"): "write_fields",
}


def config_from_dict(raw):
    raw = copy.deepcopy(raw)
    kw = {}
    for (sec, key), attr in _SECTIONS.items():
        if sec in raw and isinstance(raw[sec], dict) and key in raw[sec]:
            kw[attr] = raw[sec].pop(key)
    leftovers = {s: v for s, v in raw.items() if v}
    if leftovers:
        raise ConfigError(f"unknown config keys: {leftovers}")
    try:
        cfg = RunConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if "coefficient_params" not in kw and cfg.coefficient not in ("trig_product", "laminate", "constant"):
        cfg.coefficient_params = {}
    cfg.epsilons = [float(e) for e in cfg.epsilons]
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        if path.suffix == ".json":
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(raw)


@dataclass
class Violation:
    level: str  # "error" or "warning"
    message: str

    def __str__(self):
        return f"{self.level}: {self.message}"


def validate_config(cfg):
    """List of violations; errors make the config unusable, warnings do not."""
    out = []
    from .coefficients import CATALOG

    if cfg.coefficient not in CATALOG:
        out.append(Violation("error", f"unknown coefficient {cfg.coefficient!r}"))
    eps = cfg.epsilons
    if len(eps) == 0 or any(e <= 0 for e in eps):
        out.append(Violation("error", "epsilons must be positive"))
    if any(b >= a for a, b in zip(eps, eps[1:])):
        out.append(Violation("error", "epsilon list is not strictly decreasing"))
    if cfg.deltas is None:
        if cfg.gamma is None or cfg.gamma <= 1:
            out.append(Violation("error", f"gamma = {cfg.gamma}: delta/eps does not vanish (need gamma > 1)"))
    else:
        if len(cfg.deltas) != len(eps):
            out.append(Violation("error", "need one delta per epsilon"))
        else:
            r = [d / e for d, e in zip(cfg.deltas, eps)]
            if any(b >= a for a, b in zip(r, r[1:])):
                out.append(Violation("error", "delta/eps does not decrease along the epsilon list"))
    if cfg.cell_n < 4 or cfg.cell_n_y < 1:
        out.append(Violation("error", "cell resolution must satisfy n >= 4, n_y >= 1"))
    if cfg.cell_method not in ("krylov", "direct"):
        out.append(Violation("error", f"unknown cell method {cfg.cell_method!r}"))
    if cfg.quad_order < 2:
        out.append(Violation("error", "quadrature order must be >= 2"))
    if cfg.fine_solver not in ("oracle", "fem"):
        out.append(Violation("error", f"unknown fine solver {cfg.fine_solver!r}"))
    if cfg.abscissa not in ("tau", "epsilon"):
        out.append(Violation("error", "abscissa must be 'tau' or 'epsilon'"))
    if any(v.level == "error" for v in out):
        return out
    if cfg.fine_solver == "oracle" and cfg.dim != 1:
        out.append(Violation("error", "the quadrature oracle is only available in 1D"))
    for i, e in enumerate(eps):
        m = cfg.mesh_size(i)
        if m < 4:
            out.append(Violation("error", f"mesh m={m} for eps={e:g} is below 4"))
        elif 1.0 / m > cfg.delta(i) / 8:
            out.append(Violation("warning", f"h=1/{m} > delta/8 for eps={e:g}: fine scale under-resolved"))
    return out
