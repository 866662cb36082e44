"""Categorical hyperparameter space: domains, configurations, moves, run config.

Values are stored exactly: counts as ints, fractional settings as decimal
strings ("0.001"), names as plain strings. This keeps file round-trips
bit-exact and makes configurations hashable.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping

Value = int | str

#: display labels used by the archive/top-k exports
DISPLAY_LABELS = {
    "kernel_count_w3": "filter num of win 3",
    "kernel_count_w4": "filter num of win 4",
    "kernel_count_w5": "filter num of win 5",
    "conv_dropout": "Dropout Rate (conv)",
    "fc_units": "unit num of fc",
    "fc_dropout": "Dropout Rate (fc)",
    "activation": "activation function",
    "learning_rate": "Learning Rate",
    "batch_size": "Batch size",
}


def canonical_value(raw: Any) -> Value:
    """Coerce a raw domain value to its canonical stored form.

    Ints stay ints; floats become their shortest round-trip decimal string;
    strings are kept as-is.
    """
    if isinstance(raw, bool):
        raise ValueError(f"bool is not a valid domain value: {raw!r}")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, float):
        return repr(raw)
    if isinstance(raw, str):
        return raw
    raise ValueError(f"unsupported domain value type: {raw!r}")


def numeric(value: Value) -> float:
    """Interpret a stored value as a number. Raises ValueError for symbols."""
    return float(value)


def parse_value(domain: "ParamDomain", text: str) -> Value:
    """Resolve command-line text to the domain value it denotes."""
    for v in domain.values:
        if str(v) == text:
            return v
    raise ValueError(f"{text!r} is not a value of domain {domain.name!r}")


@dataclass(frozen=True)
class ParamDomain:
    """One tunable parameter: a name and its ordered finite value list."""

    name: str
    values: tuple[Value, ...]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("domain name must be non-empty")
        values = tuple(canonical_value(v) for v in self.values)
        if not values:
            raise ValueError(f"domain {self.name!r} has no values")
        if len(set(values)) != len(values):
            raise ValueError(f"domain {self.name!r} has duplicate values")
        object.__setattr__(self, "values", values)

    def index_of(self, value: Value) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise ValueError(
                f"{value!r} is not a value of domain {self.name!r}"
            ) from None


@dataclass(frozen=True)
class Configuration:
    """One concrete assignment, ordered like the owning space's domains."""

    items: tuple[tuple[str, Value], ...]

    def __getitem__(self, name: str) -> Value:
        for key, value in self.items:
            if key == name:
                return value
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(key == name for key, _ in self.items)

    def as_dict(self) -> dict[str, Value]:
        return dict(self.items)

    def replace(self, name: str, value: Value) -> "Configuration":
        return Configuration(
            tuple((k, value if k == name else v) for k, v in self.items)
        )

    def sort_key(self) -> tuple[tuple[str, str], ...]:
        """Deterministic lexicographic key, independent of domain order."""
        return tuple((k, str(v)) for k, v in sorted(self.items))


@dataclass(frozen=True)
class SearchSpace:
    """Ordered collection of categorical domains."""

    domains: tuple[ParamDomain, ...]

    def __post_init__(self) -> None:
        names = [d.name for d in self.domains]
        if len(set(names)) != len(names):
            raise ValueError("duplicate domain names in search space")
        if not self.domains:
            raise ValueError("search space needs at least one domain")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.domains)

    def domain(self, name: str) -> ParamDomain:
        for d in self.domains:
            if d.name == name:
                return d
        raise KeyError(name)

    def cardinality(self) -> int:
        n = 1
        for d in self.domains:
            n *= len(d.values)
        return n

    def mutable_domains(self) -> tuple[ParamDomain, ...]:
        return tuple(d for d in self.domains if len(d.values) >= 2)

    def configuration(self, assignments: Mapping[str, Any]) -> Configuration:
        """Build a validated Configuration (every domain, members only)."""
        extra = set(assignments) - set(self.names)
        if extra:
            raise ValueError(f"assignments for unknown domains: {sorted(extra)}")
        items = []
        for d in self.domains:
            if d.name not in assignments:
                raise ValueError(f"missing assignment for domain {d.name!r}")
            value = canonical_value(assignments[d.name])
            d.index_of(value)
            items.append((d.name, value))
        return Configuration(tuple(items))

    def validate(self, config: Configuration) -> None:
        if tuple(k for k, _ in config.items) != self.names:
            raise ValueError("configuration does not match space domains")
        for (name, value), d in zip(config.items, self.domains):
            d.index_of(value)

    def index_vector(self, config: Configuration) -> tuple[int, ...]:
        return tuple(
            d.index_of(value) for (_, value), d in zip(config.items, self.domains)
        )

    def restrict(self, subsets: Mapping[str, list[Any]]) -> "SearchSpace":
        """Restrict named domains to subsets of their values.

        Unlisted domains keep their full value lists. Subset order is kept
        as given, so restrictions may reorder values.
        """
        extra = set(subsets) - set(self.names)
        if extra:
            raise ValueError(f"restriction names unknown domains: {sorted(extra)}")
        domains = []
        for d in self.domains:
            if d.name in subsets:
                chosen = tuple(canonical_value(v) for v in subsets[d.name])
                for v in chosen:
                    d.index_of(v)
                domains.append(ParamDomain(d.name, chosen))
            else:
                domains.append(d)
        return SearchSpace(tuple(domains))

    def to_mapping(self) -> dict[str, list[Value]]:
        return {d.name: list(d.values) for d in self.domains}

    @staticmethod
    def from_mapping(mapping: Mapping[str, list[Any]]) -> "SearchSpace":
        return SearchSpace(
            tuple(ParamDomain(name, tuple(vals)) for name, vals in mapping.items())
        )


def default_search_space() -> SearchSpace:
    """The full tuning space: per-window filter counts, dropouts, fc width,
    activation, learning rate, and batch size."""
    kernel_counts = (32, 64, 96, 100, 128, 160, 256)
    dropout = ("0.1", "0.2", "0.3", "0.4", "0.5")
    return SearchSpace(
        (
            ParamDomain("kernel_count_w3", kernel_counts),
            ParamDomain("kernel_count_w4", kernel_counts),
            ParamDomain("kernel_count_w5", kernel_counts),
            ParamDomain("conv_dropout", dropout),
            ParamDomain("fc_units", (16, 32, 64, 128, 256, 512)),
            ParamDomain("fc_dropout", dropout),
            ParamDomain(
                "activation", ("relu", "leaky_relu", "elu", "tanh", "linear")
            ),
            ParamDomain(
                "learning_rate",
                (
                    "0.0001",
                    "0.001",
                    "0.01",
                    "0.0002",
                    "0.0005",
                    "0.0008",
                    "0.002",
                    "0.004",
                    "0.005",
                    "0.008",
                ),
            ),
            ParamDomain("batch_size", (64, 128, 256)),
        )
    )


def random_configuration(space: SearchSpace, rng: random.Random) -> Configuration:
    """Draw each domain's value uniformly. Deterministic given rng state."""
    return Configuration(
        tuple((d.name, rng.choice(d.values)) for d in space.domains)
    )


def neighbor(
    config: Configuration, space: SearchSpace, rng: random.Random
) -> Configuration:
    """Reassign exactly one mutable domain to a different value of itself."""
    space.validate(config)
    mutable = space.mutable_domains()
    if not mutable:
        raise ValueError("no neighbor exists: every domain has a single value")
    d = rng.choice(mutable)
    current = config[d.name]
    alternatives = [v for v in d.values if v != current]
    return config.replace(d.name, rng.choice(alternatives))


def enumerate_space(space: SearchSpace, cap: int) -> Iterator[Configuration]:
    """Return an iterator over every configuration, in lexicographic index
    order. The caller supplies an explicit cap; spaces larger than the cap
    refuse to enumerate (checked eagerly, before iteration starts).
    """
    card = space.cardinality()
    if card > cap:
        raise ValueError(f"cardinality {card} exceeds cap {cap}")

    def rec(prefix: tuple[tuple[str, Value], ...], rest: tuple[ParamDomain, ...]):
        if not rest:
            yield Configuration(prefix)
            return
        head, tail = rest[0], rest[1:]
        for value in head.values:
            yield from rec(prefix + ((head.name, value),), tail)

    return rec((), space.domains)


# --- run configuration -------------------------------------------------------

_REQUIRED_KEYS = {
    "seed_number",
    "ratio_init",
    "iteration_budget",
    "initial_acceptance_probability",
    "cooling_rate",
    "objective_kind",
}
_OPTIONAL_KEYS = {
    "dataset_path": None,
    "space": None,
    "final_acceptance_probability": 0.0357,
    "probe_count": 20,
    "max_epochs": 20,
    "early_stop_margin": 0.02,
    "early_stop_patience": 3,
    "embedding_dim": 50,
}

SYNTHETIC_PREFIX = "synthetic:"


@dataclass(frozen=True)
class RunConfig:
    """Everything one tuning run needs, loadable from a JSON file."""

    seed_number: int
    ratio_init: float
    iteration_budget: int
    initial_acceptance_probability: float
    cooling_rate: float
    objective_kind: str
    dataset_path: str | None = None
    space: SearchSpace = field(default_factory=default_search_space)
    final_acceptance_probability: float = 0.0357
    probe_count: int = 20
    max_epochs: int = 20
    early_stop_margin: float = 0.02
    early_stop_patience: int = 3
    embedding_dim: int = 50

    def __post_init__(self) -> None:
        if self.iteration_budget < 1:
            raise ValueError("iteration_budget must be >= 1")
        if not 0.0 < self.cooling_rate < 1.0:
            raise ValueError("cooling_rate must lie in (0, 1)")
        for name in (
            "initial_acceptance_probability",
            "final_acceptance_probability",
            "ratio_init",
        ):
            p = getattr(self, name)
            if not 0.0 < p < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.probe_count < 2:
            raise ValueError("probe_count must be >= 2")
        kind = self.objective_kind
        if kind != "textcnn" and not kind.startswith(SYNTHETIC_PREFIX):
            raise ValueError(f"unknown objective_kind: {kind!r}")
        if self.space.cardinality() < 2:
            raise ValueError("search space must contain at least 2 configurations")


def load_run_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return run_config_from_dict(raw)


def run_config_from_dict(raw: Mapping[str, Any]) -> RunConfig:
    if not isinstance(raw, Mapping):
        raise ValueError("run config must be a key/value mapping")
    known = _REQUIRED_KEYS | set(_OPTIONAL_KEYS)
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown run config keys: {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(raw)
    if missing:
        raise ValueError(f"missing run config keys: {sorted(missing)}")
    kwargs: dict[str, Any] = {k: raw[k] for k in raw if k != "space"}
    if raw.get("space") is not None:
        kwargs["space"] = default_search_space().restrict(raw["space"])
    return RunConfig(**kwargs)


def save_run_config(config: RunConfig, path: str) -> None:
    raw: dict[str, Any] = {
        "seed_number": config.seed_number,
        "ratio_init": config.ratio_init,
        "iteration_budget": config.iteration_budget,
        "initial_acceptance_probability": config.initial_acceptance_probability,
        "final_acceptance_probability": config.final_acceptance_probability,
        "cooling_rate": config.cooling_rate,
        "objective_kind": config.objective_kind,
        "dataset_path": config.dataset_path,
        "probe_count": config.probe_count,
        "max_epochs": config.max_epochs,
        "early_stop_margin": config.early_stop_margin,
        "early_stop_patience": config.early_stop_patience,
        "embedding_dim": config.embedding_dim,
        "space": config.space.to_mapping(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(raw, fh, indent=2)
        fh.write("\n")
