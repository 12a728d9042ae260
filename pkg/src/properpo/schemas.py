"""JSON schemas for command configs and pipeline specs.

Every command-line config is validated against the schema of its
subcommand before any computation runs.  Bump ``SCHEMA_VERSION`` whenever a
schema changes incompatibly.
"""

from __future__ import annotations

SCHEMA_VERSION = "1"

_LOSS_IDS = ["log", "binary_entropy", "square", "matsushita", "alpha"]
_POTENTIALS = ["neg_entropy", "quadratic", "root", "cubic", "exponential", "tsallis"]
_PSI = ["softplus", "identity", "sine_ramp", "exp"]
_LINKS = ["sigmoid", "sigmoid_half", "gumbel", "matsushita", "clipped_linear"]
_STEP1 = ["neg_entropy", "itakura_saito", "squared_euclidean"]

_COMMON = {
    "seed": {"type": "integer", "minimum": 0},
    "tol": {"type": "number", "exclusiveMinimum": 0},
    "resolution": {"type": "integer", "minimum": 1},
}

_LOSS_REF = {
    "type": "object",
    "properties": {
        "id": {"enum": _LOSS_IDS},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "mu": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "minimum": 0},
    },
    "required": ["id"],
    "additionalProperties": False,
}

PIPELINE_SPEC = {
    "type": "object",
    "properties": {
        "recipe": {"enum": ["pppo", "pmpo", "phi_po"]},
        "la": _LOSS_REF,
        "lb": _LOSS_REF,
        "psi": {"enum": _PSI},
        "potential": {"enum": _POTENTIALS},
        "margin": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "length_norm": {"enum": ["none", "kl_geometric", "is_harmonic"]},
    },
    "required": ["recipe"],
    "allOf": [
        {"if": {"properties": {"recipe": {"const": "pppo"}}},
         "then": {"required": ["la", "lb"]}},
        {"if": {"properties": {"recipe": {"const": "pmpo"}}},
         "then": {"required": ["psi", "lb"]}},
        {"if": {"properties": {"recipe": {"const": "phi_po"}}},
         "then": {"required": ["potential"]}},
    ],
    "additionalProperties": False,
}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": {**_COMMON, **props},
            "required": list(required), "additionalProperties": False}


_MATRIX = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}

COMMANDS = {
    "catalog": _obj({
        "id": {"enum": _LOSS_IDS},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "mu": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "minimum": 0},
    }),
    "check-proper": _obj({
        "loss": {"enum": _LOSS_IDS},
        "n": {"type": "integer", "minimum": 2},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "mu": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "minimum": 0},
    }, ["loss", "n"]),
    "phipo-build": _obj({
        "potential": {"enum": _POTENTIALS},
        "q": {"type": "number", "exclusiveMinimum": 1},
    }, ["potential"]),
    "composite-build": _obj({
        "psi": {"enum": _PSI},
        "link": {"enum": _LINKS},
    }, ["psi", "link"]),
    "klst-verify": _obj({
        "table": {"type": "string"},
        "alphas": {"type": "array", "minItems": 1,
                   "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
        "alpha_mono": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "mono_mode": {"enum": ["auto", "exhaustive", "sampled"]},
    }, ["table"]),
    "solve-step1": _obj({
        "rewards": {"type": "array", "minItems": 2, "items": {"type": "number"}},
        "pi_ref": {"type": "array", "minItems": 2,
                   "items": {"type": "number", "exclusiveMinimum": 0}},
        "potential": {"enum": _STEP1},
        "eta": {"type": "number", "exclusiveMinimum": 0},
    }, ["rewards", "potential"]),
    "lennorm": _obj({
        "factors": {"type": "array", "minItems": 1,
                    "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
        "mode": {"enum": ["kl_geometric", "is_harmonic"]},
    }, ["factors", "mode"]),
    "train": _obj({
        "spec": PIPELINE_SPEC,
        "rewards": _MATRIX,
        "link": {"enum": _LINKS},
        "link_scale": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "n_samples": {"type": "integer", "minimum": 1},
        "steps": {"type": "integer", "minimum": 0},
        "lr": {"type": "number", "minimum": 0},
        "expected": {"type": "boolean"},
        "margin_eval": {"type": "number", "minimum": 0},
        "trace": {"type": "string"},
    }, ["spec", "rewards"]),
}
