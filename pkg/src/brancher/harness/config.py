"""Experiment configuration: YAML files checked against a JSON schema.

A config names the experiment, the dimension, the law, replica counts and
the master seed; experiment-specific settings live under ``params`` and are
checked against that experiment's schema with its defaults filled in.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import yaml

from ..offspring import LawError, make_law

EXPERIMENTS = ("survival", "green", "bcap", "pair_deficit", "vacancy",
               "covariance", "decorrelation", "cover", "gumbel", "crossing",
               "embeddings")


class ConfigInvalid(ValueError):
    pass


_NUM = {"type": "number"}
_POS = {"type": "integer", "minimum": 1}
_NNINT = {"type": "integer", "minimum": 0}
_SET = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["singleton", "frame", "plane_box", "linf_ball",
                          "line", "points"]},
        "r": _NNINT,
        "center": {"type": "array", "items": {"type": "integer"}},
        "points": {"type": "array", "items": {"type": "array",
                                              "items": {"type": "integer"}}},
    },
    "required": ["kind"],
    "additionalProperties": False,
}
_LAW = {"oneOf": [{"type": "string"},
                  {"type": "array", "items": _NUM, "minItems": 1},
                  {"type": "object", "additionalProperties": _NUM}]}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


# experiment-specific params with their defaults
PARAMS: dict[str, tuple[dict, dict]] = {
    "survival": (_obj({"laws": {"type": "array", "items": _LAW, "minItems": 1},
                       "n": _POS}),
                 {"laws": ["binary", "geometric_half"], "n": 100}),
    "green": (_obj({"radii": {"type": "array", "items": _POS, "minItems": 1}}),
              {"radii": [1, 2, 4, 8, 16, 32, 64]}),
    "bcap": (_obj({"sets": {"type": "array", "items": _SET, "minItems": 1},
                   "random_sets": _NNINT, "random_size": _POS,
                   "random_radius": _POS,
                   "stop_radius": {"type": ["number", "null"]}}),
             {"sets": [{"kind": "singleton"}, {"kind": "frame", "r": 3}],
              "random_sets": 0, "random_size": 4, "random_radius": 3,
              "stop_radius": None}),
    "pair_deficit": (_obj({"distances": {"type": "array", "items": _POS,
                                         "minItems": 2}}),
                     {"distances": [8, 16, 32]}),
    "vacancy": (_obj({"K": _SET, "window": _SET,
                      "us": {"type": "array", "items": _NUM, "minItems": 1},
                      "cap_replicas": _POS,
                      "stop_radius": {"type": ["number", "null"]}}),
                {"K": {"kind": "frame", "r": 3},
                 "window": {"kind": "plane_box", "r": 4},
                 "us": [0.5, 1.0], "cap_replicas": 5000, "stop_radius": 12.0}),
    "covariance": (_obj({"distances": {"type": "array", "items": _POS,
                                       "minItems": 1},
                         "u": _NUM, "cap_replicas": _POS}),
                   {"distances": [4, 8], "u": 1.0, "cap_replicas": 20000}),
    "decorrelation": (_obj({"K": _SET,
                            "distances": {"type": "array", "items": _POS,
                                          "minItems": 1},
                            "u": _NUM, "cap_replicas": _POS,
                            "events": {"type": "array", "items": {"type": "string"},
                                       "minItems": 2, "maxItems": 2},
                            "independent": {"type": "boolean"}}),
                      {"K": {"kind": "plane_box", "r": 1}, "distances": [6, 12, 24],
                       "u": 1.0, "cap_replicas": 5000,
                       "events": ["nonempty", "nonempty"], "independent": False}),
    "cover": (_obj({"K": _SET, "cap_replicas": _POS}),
              {"K": {"kind": "singleton"}, "cap_replicas": 20000}),
    "gumbel": (_obj({"n_side": _POS, "dims": _POS, "lam": _NUM,
                     "cap_replicas": _POS}),
               {"n_side": 4, "dims": 3, "lam": 0.1, "cap_replicas": 20000}),
    "crossing": (_obj({"us": {"type": "array", "items": _NUM, "minItems": 1},
                       "levels": {"type": "array", "items": _NNINT, "minItems": 1},
                       "L0": _POS, "cap_replicas": _POS}),
                 {"us": [0.05, 0.1, 0.2, 0.5, 1.0], "levels": [0, 1], "L0": 1,
                  "cap_replicas": 300}),
    "embeddings": (_obj({"n": _NNINT, "L0": _POS, "paths": _NNINT,
                         "path_n": _NNINT, "random_embeddings": _NNINT,
                         "random_n": _NNINT}),
                   {"n": 1, "L0": 1, "paths": 200, "path_n": 2,
                    "random_embeddings": 1000, "random_n": 3}),
}

DEFAULT_REPLICAS = {"survival": 100_000, "green": 1, "bcap": 5000,
                    "pair_deficit": 20_000, "vacancy": 10_000,
                    "covariance": 20_000, "decorrelation": 5000, "cover": 5000,
                    "gumbel": 2000, "crossing": 200, "embeddings": 1}

TOP = _obj({
    "experiment": {"enum": list(EXPERIMENTS)},
    "d": {"type": "integer", "minimum": 1},
    "law": _LAW,
    "replicas": _POS,
    "seed": _NNINT,
    "out": {"type": "string"},
    "workers": _POS,
    "budget_seconds": {"type": "number", "exclusiveMinimum": 0},
    "params": {"type": "object"},
})


@dataclass
class ExperimentConfig:
    experiment: str
    d: int = 5
    law: object = "binary"
    replicas: int = 1
    seed: int = 0
    out: str = "out"
    workers: int = 1
    budget_seconds: float | None = None
    params: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"experiment": self.experiment, "d": self.d, "law": self.law,
                "replicas": self.replicas, "seed": self.seed,
                "params": copy.deepcopy(self.params)}


def _validate(schema: dict, data: dict, where: str) -> None:
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as e:
        path = ".".join(str(p) for p in e.absolute_path)
        raise ConfigInvalid(f"{where}{'.' + path if path else ''}: {e.message}") from None


def from_dict(data: dict, experiment: str | None = None) -> ExperimentConfig:
    """Validate a mapping and fill defaults; raises ConfigInvalid."""
    if not isinstance(data, dict):
        raise ConfigInvalid("config must be a mapping")
    data = copy.deepcopy(data)
    if experiment is not None:
        if data.get("experiment", experiment) != experiment:
            raise ConfigInvalid(f"config is for {data['experiment']!r}, not {experiment!r}")
        data["experiment"] = experiment
    if data.get("experiment") not in EXPERIMENTS:
        raise ConfigInvalid(f"unknown experiment {data.get('experiment')!r}; "
                            f"expected one of {', '.join(EXPERIMENTS)}")
    _validate(TOP, data, "config")
    exp = data["experiment"]
    schema, defaults = PARAMS[exp]
    params = {**copy.deepcopy(defaults), **data.get("params", {})}
    _validate(schema, params, "params")
    d = data.get("d", 2 if exp == "embeddings" else 5)
    if exp in ("bcap", "pair_deficit", "vacancy", "covariance", "decorrelation",
               "cover", "gumbel", "crossing", "green") and d < 5:
        raise ConfigInvalid(f"{exp} needs d >= 5")
    law = data.get("law", "binary")
    try:
        make_law(law)
    except (LawError, ValueError) as e:
        raise ConfigInvalid(f"law: {e}") from None
    if exp == "survival":
        for spec in params["laws"]:
            try:
                make_law(spec)
            except (LawError, ValueError) as e:
                raise ConfigInvalid(f"params.laws: {e}") from None
    return ExperimentConfig(exp, d, law, data.get("replicas", DEFAULT_REPLICAS[exp]),
                            data.get("seed", 0), data.get("out", "out"),
                            data.get("workers", 1), data.get("budget_seconds"),
                            params)


def load(path, experiment: str | None = None) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigInvalid(f"cannot read {path}: {e}") from None
    return from_dict(data or {}, experiment)
