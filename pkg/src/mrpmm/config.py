"""Run configuration: one JSON document, one master seed."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .model import ModelParams
from .presets import reference_model

RUN_SCHEMA = "mrpmm.run/1"
POLICY_NAMES = ("hold", "always_on", "eta0", "approx", "exact")

DEFAULTS = {
    "schema_version": RUN_SCHEMA,
    "seed": 0,
    "params": None,  # inline ModelParams document; or "params_file"
    "grid": {"dt": 0.01},
    "simulate": {"n_paths": 1, "horizon": None, "agent_on": True, "p0": 100.0},
    "solve": {"exact": False, "q_max": None},
    "backtest": {
        "n_paths": 10000,
        "policies": ["hold", "always_on", "eta0"],
        "p0": 100.0, "i0": 1, "s0": 0.0, "x0": 0.0, "y0": 0,
    },
    "out": "run",
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    doc: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path=None, overrides=None):
        doc = {}
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ValidationError(f"config file {path} not found")
            try:
                doc = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: invalid JSON ({exc})") from None
            base = path.parent
        if doc.get("schema_version", RUN_SCHEMA) != RUN_SCHEMA:
            raise ValidationError(f"unsupported run schema {doc.get('schema_version')!r}")
        doc = _merge(DEFAULTS, doc)
        doc = _merge(doc, overrides or {})
        cfg = cls(doc, base)
        cfg.validate()
        return cfg

    def validate(self):
        d = self.doc
        seed = d["seed"]
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if d["grid"].get("dt", 0) <= 0:
            raise ValidationError("grid.dt must be positive")
        for name in d["backtest"]["policies"]:
            if name not in POLICY_NAMES:
                raise ValidationError(f"unknown policy {name!r}")
        for sec in ("simulate", "backtest"):
            if int(d[sec]["n_paths"]) < 1:
                raise ValidationError(f"{sec}.n_paths must be at least 1")
        if "params_file" in d and not (self.base_dir / d["params_file"]).exists():
            raise ValidationError(f"params file {d['params_file']} not found")
        self.params  # parse eagerly so schema errors surface at load time

    @property
    def params(self):
        d = self.doc
        if "params_file" in d:
            p = ModelParams.from_json((self.base_dir / d["params_file"]).read_text())
        elif d.get("params") is not None:
            p = ModelParams.from_dict(d["params"])
        else:
            p = reference_model()
        if d.get("eta") is not None:
            p = p.replace(eta=float(d["eta"]))
        return p

    @property
    def seed(self):
        return int(self.doc["seed"])

    @property
    def out(self):
        return Path(self.doc["out"])

    def section(self, name):
        return self.doc[name]

    def config_hash(self):
        """SHA-256 of the resolved document (output location excluded)."""
        d = {k: v for k, v in self.doc.items() if k != "out"}
        d["params"] = self.params.to_dict()
        d.pop("params_file", None)
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()
