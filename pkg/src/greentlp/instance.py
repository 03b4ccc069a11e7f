"""Problem instances for the robust green transportation-location problem.

An :class:`Instance` carries every set size and parameter of the model:
link setup costs ``c[i][j][p]``, transport costs ``q[i][j][l][p]``, origin
opening costs ``h[i][l]``, shortage penalties ``w[j][l]``, truck capacities
``b[l][p]``, origin capacities ``k[i][l]``, hybrid-truck prices ``cbc[p]`` and
nominal demands ``D[j][l]``, plus the demand-uncertainty data
(:class:`RobustConfig`) and the emission data (:class:`ChanceConfig`).

Instances are immutable; all arrays are read-only float64 numpy arrays.

>>> inst = generate_family(1, Dimensions(2, 2, 1, 1), 1, 0.05)[0]
>>> validate(inst)
[]
>>> parse_instance(serialize_instance(inst)) == inst
True
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np


class InstanceFormatError(ValueError):
    """Raised when an instance document is malformed."""


@dataclass(frozen=True)
class Dimensions:
    """Set sizes: origins ``I``, destinations ``J``, trucks ``P``, products ``L``."""

    num_origins: int
    num_destinations: int
    num_trucks: int
    num_products: int

    def __iter__(self):
        return iter(self.as_tuple())

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.num_origins, self.num_destinations, self.num_trucks, self.num_products)

    @classmethod
    def parse(cls, text: str) -> "Dimensions":
        """Parse ``"I,J,P,L"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"dims must be I,J,P,L, got {text!r}")
        return cls(*(int(p) for p in parts))


def _frozen(a: Any) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _arrays_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and bool(np.array_equal(a, b))


@dataclass(frozen=True, eq=False)
class RobustConfig:
    """Demand deviation intervals ``[D - dev_minus, D + dev_plus]`` and budgets."""

    dev_plus: np.ndarray
    dev_minus: np.ndarray
    budget: np.ndarray

    def __post_init__(self):
        for name in ("dev_plus", "dev_minus", "budget"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def __eq__(self, other):
        if not isinstance(other, RobustConfig):
            return NotImplemented
        return all(
            _arrays_equal(getattr(self, n), getattr(other, n))
            for n in ("dev_plus", "dev_minus", "budget")
        )


@dataclass(frozen=True, eq=False)
class ChanceConfig:
    """Normal emission model per truck type and per-link thresholds.

    ``z`` is the standard normal quantile ``Z_{1-alpha}``; negative values are
    allowed and make the emission constraint looser than the mean.
    """

    mean: np.ndarray
    var: np.ndarray
    threshold: np.ndarray
    z: float

    def __post_init__(self):
        for name in ("mean", "var", "threshold"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "z", float(self.z))

    def __eq__(self, other):
        if not isinstance(other, ChanceConfig):
            return NotImplemented
        return (
            all(_arrays_equal(getattr(self, n), getattr(other, n)) for n in ("mean", "var", "threshold"))
            and self.z == other.z
        )


# field name -> (json key, shape builder)
_ARRAY_FIELDS = {
    "c": lambda d: (d.num_origins, d.num_destinations, d.num_trucks),
    "q": lambda d: (d.num_origins, d.num_destinations, d.num_products, d.num_trucks),
    "h": lambda d: (d.num_origins, d.num_products),
    "w": lambda d: (d.num_destinations, d.num_products),
    "b": lambda d: (d.num_products, d.num_trucks),
    "k": lambda d: (d.num_origins, d.num_products),
    "cbc": lambda d: (d.num_trucks,),
    "D": lambda d: (d.num_destinations, d.num_products),
}

_LONG_NAMES = {
    "c": "link_setup_cost",
    "q": "transport_cost",
    "h": "origin_open_cost",
    "w": "shortage_penalty",
    "b": "truck_capacity",
    "k": "origin_capacity",
    "cbc": "hybrid_truck_cost",
    "D": "nominal_demand",
}


@dataclass(frozen=True, eq=False)
class Instance:
    dims: Dimensions
    c: np.ndarray
    q: np.ndarray
    h: np.ndarray
    w: np.ndarray
    b: np.ndarray
    k: np.ndarray
    cbc: np.ndarray
    D: np.ndarray
    robust: RobustConfig
    chance: ChanceConfig
    name: str = field(default="", compare=False)

    def __post_init__(self):
        for key in _ARRAY_FIELDS:
            object.__setattr__(self, key, _frozen(getattr(self, key)))

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.dims == other.dims
            and all(_arrays_equal(getattr(self, k), getattr(other, k)) for k in _ARRAY_FIELDS)
            and self.robust == other.robust
            and self.chance == other.chance
        )

    __hash__ = None

    @property
    def link_capacity(self) -> np.ndarray:
        """``sum_l b[l][p]``, the per-truck capacity on the right side of the link constraint."""
        return self.b.sum(axis=0)

    def with_budget(self, gamma: float) -> "Instance":
        """Copy with a uniform budget ``gamma`` on every (j, l) cell."""
        rob = replace(self.robust, budget=np.full(self.D.shape, float(gamma)))
        return replace(self, robust=rob)

    def with_z(self, z: float) -> "Instance":
        return replace(self, chance=replace(self.chance, z=float(z)))

    def with_name(self, name: str) -> "Instance":
        return replace(self, name=name)


def _shape_violations(label: str, arr: np.ndarray, shape: tuple[int, ...]) -> list[str]:
    if arr.shape != shape:
        return [f"{label}: shape {arr.shape} does not match dims {shape}"]
    return []


def _sign_violations(label: str, arr: np.ndarray) -> list[str]:
    out = []
    for idx in zip(*np.nonzero(~np.isfinite(arr) | (arr < 0))):
        pos = "".join(f"[{int(i)}]" for i in idx)
        out.append(f"{label}{pos}: value {arr[idx]!r} must be finite and >= 0")
    return out


def validate(inst: Instance) -> list[str]:
    """Return human-readable invariant violations; empty when the instance is valid."""
    d = inst.dims
    problems: list[str] = []
    for n, v in zip(("num_origins", "num_destinations", "num_trucks", "num_products"), d.as_tuple()):
        if int(v) != v or v < 1:
            problems.append(f"dims.{n}: must be a positive count, got {v!r}")
    if problems:
        return problems

    for key, shaper in _ARRAY_FIELDS.items():
        label = _LONG_NAMES[key]
        arr = getattr(inst, key)
        bad_shape = _shape_violations(label, arr, shaper(d))
        problems += bad_shape or _sign_violations(label, arr)

    jl = (d.num_destinations, d.num_products)
    rob = inst.robust
    for label, arr in (("dev_plus", rob.dev_plus), ("dev_minus", rob.dev_minus), ("budget", rob.budget)):
        bad_shape = _shape_violations(label, arr, jl)
        problems += bad_shape or _sign_violations(label, arr)
    if rob.dev_minus.shape == jl and inst.D.shape == jl:
        for j, l in zip(*np.nonzero((rob.dev_minus > inst.D) & (inst.D >= 0))):
            problems.append(
                f"dev_minus[{j}][{l}]: {rob.dev_minus[j, l]!r} exceeds nominal demand {inst.D[j, l]!r}"
            )

    ch = inst.chance
    for label, arr, shape in (
        ("chance.mean", ch.mean, (d.num_trucks,)),
        ("chance.var", ch.var, (d.num_trucks,)),
        ("chance.threshold", ch.threshold, (d.num_origins, d.num_destinations)),
    ):
        bad_shape = _shape_violations(label, arr, shape)
        problems += bad_shape or _sign_violations(label, arr)
    if not math.isfinite(ch.z):
        problems.append(f"chance.z: must be finite, got {ch.z!r}")
    return problems


def require_valid(inst: Instance) -> None:
    problems = validate(inst)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))


@dataclass(frozen=True)
class GeneratorRanges:
    """Uniform sampling ranges used by :func:`generate_family`."""

    c: tuple[float, float] = (100.0, 1000.0)
    q: tuple[float, float] = (1.0, 20.0)
    h: tuple[float, float] = (500.0, 5000.0)
    w: tuple[float, float] = (50.0, 200.0)
    b: tuple[float, float] = (50.0, 150.0)
    k: tuple[float, float] = (200.0, 800.0)
    cbc: tuple[float, float] = (1000.0, 10000.0)
    D: tuple[float, float] = (50.0, 300.0)
    deviation: float = 0.1
    budget: float = 1.0
    emission_mean: tuple[float, float] = (5.0, 15.0)
    emission_var: tuple[float, float] = (1.0, 9.0)
    z: float = 3.0

    @classmethod
    def preset(cls, name: str) -> "GeneratorRanges":
        """Named range sets: ``default`` or ``low-fixed``.

        ``low-fixed`` makes link setup and hybrid-truck costs small next to
        transport and origin-opening costs and gives links ample capacity, so
        objectives are dominated by flow and origin decisions.
        """
        if name == "default":
            return cls()
        if name == "low-fixed":
            return cls(c=(0.1, 1.0), cbc=(1.0, 10.0), h=(5000.0, 50000.0),
                       b=(1500.0, 4500.0), k=(600.0, 2400.0))
        raise ValueError(f"unknown range preset {name!r}; expected one of {', '.join(RANGE_PRESETS)}")


RANGE_PRESETS = ("default", "low-fixed")


def _thresholds(rng: np.random.Generator, mean, var, shape, z: float) -> np.ndarray:
    # Td sits at or above the worst single-truck load, so every link can carry
    # some truck, and at a random quantile of the pair loads, so that about half
    # of all truck pairs break the limit.
    single = mean + z * np.sqrt(var)
    worst_single = float(single.max())
    P = len(mean)
    pairs = np.array([mean[a] + mean[b] + z * math.sqrt(var[a] + var[b])
                      for a in range(P) for b in range(a + 1, P)])
    if pairs.size == 0:
        pairs = np.array([worst_single])
    margin = max(float(pairs.min()) - worst_single, 1.0)
    knots = np.sort(np.concatenate([[pairs.min() - margin], pairs, [pairs.max() + margin]]))
    u = rng.uniform(0.0, 1.0, size=shape)
    td = np.interp(u, np.linspace(0.0, 1.0, knots.size), knots)
    return np.round(np.maximum(td, worst_single + 1e-3), 6)


def generate_family(
    seed: int,
    dims: Dimensions,
    num_instances: int,
    scale_step: float,
    ranges: GeneratorRanges | None = None,
) -> list[Instance]:
    """Draw one base instance and return ``num_instances`` demand-scaled copies.

    Instance ``t`` has demand (and demand deviations) ``D * (1 + t * scale_step)``;
    every other parameter is shared across the family.
    """
    if any(int(v) != v or v < 1 for v in dims.as_tuple()):
        raise ValueError(f"dims must be positive counts, got {dims.as_tuple()}")
    if num_instances < 1:
        raise ValueError("num_instances must be >= 1")
    if not scale_step > 0:
        raise ValueError("scale_step must be > 0")
    r = ranges or GeneratorRanges()
    rng = np.random.default_rng(seed)
    I, J, P, L = dims.as_tuple()

    def draw(bounds, shape):
        # two decimals keeps files readable; values stay exact through json
        return np.round(rng.uniform(bounds[0], bounds[1], size=shape), 2)

    c = draw(r.c, (I, J, P))
    q = draw(r.q, (I, J, L, P))
    h = draw(r.h, (I, L))
    w = draw(r.w, (J, L))
    b = draw(r.b, (L, P))
    k = draw(r.k, (I, L))
    cbc = draw(r.cbc, (P,))
    D0 = draw(r.D, (J, L))
    mean = draw(r.emission_mean, (P,))
    var = draw(r.emission_var, (P,))
    td = _thresholds(rng, mean, var, (I, J), r.z)
    chance = ChanceConfig(mean=mean, var=var, threshold=td, z=r.z)

    family = []
    for t in range(num_instances):
        D = np.round(D0 * (1.0 + t * scale_step), 6)
        dev = np.round(r.deviation * D, 6)
        robust = RobustConfig(dev_plus=dev, dev_minus=dev, budget=np.full((J, L), r.budget))
        family.append(
            Instance(
                dims=dims, c=c, q=q, h=h, w=w, b=b, k=k, cbc=cbc, D=D,
                robust=robust, chance=chance, name=f"s{seed}_{I}x{J}x{P}x{L}_{t:02d}",
            )
        )
    return family


def instance_to_dict(inst: Instance) -> dict:
    d = inst.dims
    return {
        "dims": {"I": d.num_origins, "J": d.num_destinations, "P": d.num_trucks, "L": d.num_products},
        **{key: getattr(inst, key).tolist() for key in _ARRAY_FIELDS},
        "robust": {
            "dev_plus": inst.robust.dev_plus.tolist(),
            "dev_minus": inst.robust.dev_minus.tolist(),
            "budget": inst.robust.budget.tolist(),
        },
        "chance": {
            "mean": inst.chance.mean.tolist(),
            "var": inst.chance.var.tolist(),
            "threshold": inst.chance.threshold.tolist(),
            "z": inst.chance.z,
        },
    }


def serialize_instance(inst: Instance) -> str:
    """JSON text with one top-level key per line.

    ``json`` writes floats with ``repr``, which round-trips every double exactly.
    """
    doc = instance_to_dict(inst)
    lines = [f"  {json.dumps(k)}: {json.dumps(v, separators=(', ', ': '))}" for k, v in doc.items()]
    return "{\n" + ",\n".join(lines) + "\n}\n"


def _locate(text: str, key: str) -> str:
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return f"line {lineno}"
    return "unknown line"


def _check_array(raw: Any, shape: tuple[int, ...], label: str) -> np.ndarray:
    """Walk a nested list, reporting the first row whose length or entries are wrong."""

    def walk(node, depth, index):
        pos = "".join(f"[{i}]" for i in index)
        if depth == len(shape):
            if isinstance(node, bool) or not isinstance(node, (int, float)):
                raise InstanceFormatError(f"{label}{pos}: expected a number, got {node!r}")
            return
        if not isinstance(node, list):
            raise InstanceFormatError(f"{label}{pos}: expected a list of length {shape[depth]}, got {node!r}")
        if len(node) != shape[depth]:
            raise InstanceFormatError(
                f"{label}{pos}: shape error, expected {shape[depth]} entries, found {len(node)}"
            )
        for i, child in enumerate(node):
            walk(child, depth + 1, index + (i,))

    walk(raw, 0, ())
    return np.array(raw, dtype=float).reshape(shape)


def _get(doc: dict, key: str, label: str | None = None):
    if key not in doc:
        raise InstanceFormatError(f"missing required block {label or key!r} (key {key!r})")
    return doc[key]


def parse_instance(text: str) -> Instance:
    """Parse the JSON instance format; raises :class:`InstanceFormatError`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise InstanceFormatError("top level must be a JSON object")

    raw_dims = _get(doc, "dims")
    try:
        dims = Dimensions(*(int(raw_dims[k]) for k in ("I", "J", "P", "L")))
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceFormatError(f"{_locate(text, 'dims')}: dims needs integer I, J, P, L ({exc})") from exc
    if min(dims.as_tuple()) < 1:
        raise InstanceFormatError(f"{_locate(text, 'dims')}: dims must be positive, got {dims.as_tuple()}")
    I, J, P, L = dims.as_tuple()

    arrays = {}
    for key, shaper in _ARRAY_FIELDS.items():
        label = _LONG_NAMES[key]
        raw = _get(doc, key, label)
        try:
            arrays[key] = _check_array(raw, shaper(dims), label)
        except InstanceFormatError as exc:
            raise InstanceFormatError(f"{_locate(text, key)}: {exc}") from None

    rob = _get(doc, "robust")
    ch = _get(doc, "chance")
    try:
        robust = RobustConfig(
            dev_plus=_check_array(_get(rob, "dev_plus"), (J, L), "robust.dev_plus"),
            dev_minus=_check_array(_get(rob, "dev_minus"), (J, L), "robust.dev_minus"),
            budget=_check_array(_get(rob, "budget"), (J, L), "robust.budget"),
        )
    except InstanceFormatError as exc:
        raise InstanceFormatError(f"{_locate(text, 'robust')}: {exc}") from None
    try:
        z = _get(ch, "z", "chance.z")
        if isinstance(z, bool) or not isinstance(z, (int, float)):
            raise InstanceFormatError(f"chance.z: expected a number, got {z!r}")
        chance = ChanceConfig(
            mean=_check_array(_get(ch, "mean"), (P,), "chance.mean"),
            var=_check_array(_get(ch, "var"), (P,), "chance.var"),
            threshold=_check_array(_get(ch, "threshold"), (I, J), "chance.threshold"),
            z=z,
        )
    except InstanceFormatError as exc:
        raise InstanceFormatError(f"{_locate(text, 'chance')}: {exc}") from None

    return Instance(dims=dims, robust=robust, chance=chance, **arrays)


def load_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        inst = parse_instance(fh.read())
    return inst.with_name(str(path).rsplit("/", 1)[-1].removesuffix(".json"))


def save_instance(inst: Instance, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_instance(inst))
