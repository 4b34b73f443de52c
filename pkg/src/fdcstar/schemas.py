"""JSON schemas for everything the command line prints."""

_NUM = {"oneOf": [{"type": "number"}, {"enum": ["inf"]}]}
_DIST = {"oneOf": [{"type": "number"}, {"enum": ["inf", "NoCopy"]}, {"type": "null"}]}
_ELEMENT = {"type": "array", "items": {"type": "array"}}
_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}}

ERROR = {
    "type": "object",
    "required": ["error", "message"],
    "properties": {
        "error": {"type": "string"},
        "message": {"type": "string"},
        "line": {"type": "integer"},
        "column": {"type": "integer"},
    },
}

EVAL = {
    "type": "object",
    "required": ["formula", "value", "kind", "converged", "witnesses", "certified"],
    "properties": {
        "formula": {"type": "string"},
        "value": _NUM,
        "kind": {"enum": ["inf", "sup", None]},
        "converged": {"type": "boolean"},
        "spread": {"type": "number"},
        "restart_values": {"type": "array", "items": {"type": "number"}},
        "witnesses": {"type": "object", "additionalProperties": {"type": "array"}},
        "lower_bound": {"type": ["number", "null"]},
        "upper_bound": {"type": ["number", "null"]},
        "certified": {"type": "boolean"},
        "condition": {
            "type": "object",
            "required": ["verdict", "margin", "exact"],
            "properties": {
                "verdict": {"enum": ["sat", "unsat", "unknown"]},
                "margin": {"type": "number"},
                "value": {"type": "number"},
                "exact": {"type": "boolean"},
            },
        },
    },
}

FORMULA = {
    "type": "object",
    "required": ["text", "free_vars", "free_scalar_vars", "quantifier_free"],
    "properties": {
        "text": {"type": "string"},
        "free_vars": {"type": "array", "items": {"type": "integer"}},
        "free_scalar_vars": {"type": "array", "items": {"type": "integer"}},
        "quantifier_free": {"type": "boolean"},
        "modulus": {"type": "number"},
    },
}

PROBE = {
    "type": "object",
    "required": ["formula_id", "rows", "modulus"],
    "properties": {
        "formula_id": {"type": "string"},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["delta", "worst_eps", "samples", "failures"],
                "properties": {"delta": {"type": "number"}, "worst_eps": _NUM,
                               "samples": {"type": "integer"}, "failures": {"type": "integer"}},
            },
        },
        "modulus": {"type": "array", "items": {"type": "array", "items": {"type": "string"}}},
    },
}

_SUPERNATURAL = {
    "type": "array",
    "items": {"type": "object", "required": ["p", "e"],
              "properties": {"p": {"type": "integer"},
                             "e": {"oneOf": [{"type": "integer"}, {"enum": ["inf"]}]}}},
}

UHF_COMPARE = {
    "type": "object",
    "required": ["verdict"],
    "properties": {
        "verdict": {"enum": ["isomorphic_and_elementarily_equivalent", "neither"]},
        "a": _SUPERNATURAL,
        "b": _SUPERNATURAL,
    },
}

UHF_INVARIANT = {
    "type": "object",
    "required": ["presentation", "supernatural", "text"],
    "properties": {"presentation": {"type": "string"}, "supernatural": _SUPERNATURAL,
                   "text": {"type": "string"}},
}

UHF_COPY = {
    "type": "object",
    "required": ["presentation", "k", "unital_copy"],
    "properties": {"presentation": {"type": "string"}, "k": {"type": "integer"},
                   "unital_copy": {"type": "boolean"}},
}

AF_K0 = {
    "type": "object",
    "required": ["level", "rank", "unit", "forward_map"],
    "properties": {"level": {"type": "integer"}, "rank": {"type": "integer"},
                   "unit": {"type": "array", "items": {"type": "integer"}},
                   "forward_map": _MATRIX},
}

AF_COMPARE = {
    "type": "object",
    "required": ["verdict", "certificate", "witness", "reason"],
    "properties": {
        "verdict": {"enum": ["equivalent", "distinguished", "unknown"]},
        "certificate": {"type": "array"},
        "witness": {"type": ["object", "null"]},
        "reason": {"type": "string"},
    },
}

AF_VALIDATE = {
    "type": "object",
    "required": ["ok", "violations"],
    "properties": {
        "ok": {"type": "boolean"},
        "violations": {"type": "array", "items": {
            "type": "object", "required": ["level", "problem"],
            "properties": {"level": {"type": "integer"}, "problem": {"type": "string"}}}},
    },
}

OMISSION = {
    "type": "object",
    "required": ["schema", "m", "n", "table", "margin", "verdict", "certified_side", "truncated"],
    "properties": {
        "schema": {"enum": ["t", "s"]},
        "m": {"type": "integer"},
        "n": {"type": "integer"},
        "unital": {"type": "boolean"},
        "table": {"type": "array", "items": {
            "type": "object", "required": ["copy", "distance"],
            "properties": {"copy": {"type": "array", "items": {"type": "integer"}},
                           "distance": _DIST, "lower_bound": _DIST}}},
        "margin": _NUM,
        "verdict": {"enum": ["realizes", "omits", "unknown"]},
        "certified_side": {"enum": ["upper", "both"]},
        "truncated": {"type": "boolean"},
        "notes": {"type": "array", "items": {"type": "string"}},
    },
}

SCAN = {
    "type": "object",
    "required": ["schema", "m", "n", "samples", "max_margin", "worst_sample", "verdicts"],
    "properties": {
        "schema": {"enum": ["t", "s"]},
        "samples": {"type": "integer"},
        "max_margin": _NUM,
        "worst_sample": {"type": "integer"},
        "verdicts": {"type": "object", "additionalProperties": {"type": "integer"}},
    },
}

SELFTEST = {
    "type": "object",
    "required": ["passed", "failed", "cases"],
    "properties": {
        "passed": {"type": "integer"},
        "failed": {"type": "integer"},
        "cases": {"type": "array", "items": {
            "type": "object", "required": ["name", "ok"],
            "properties": {"name": {"type": "string"}, "ok": {"type": "boolean"},
                           "detail": {"type": "string"}}}},
    },
}

BY_COMMAND = {
    "eval": EVAL,
    "formula parse": FORMULA,
    "formula build": FORMULA,
    "probe": PROBE,
    "uhf compare": UHF_COMPARE,
    "uhf invariant": UHF_INVARIANT,
    "uhf copy": UHF_COPY,
    "af k0": AF_K0,
    "af compare": AF_COMPARE,
    "af validate": AF_VALIDATE,
    "omission margin": OMISSION,
    "omission scan": SCAN,
    "selftest": SELFTEST,
}
