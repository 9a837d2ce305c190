"""Key=value configuration files and model selectors."""

import json
import math
import os
from dataclasses import fields

from .errors import ConfigError, InvalidParameter
from .models import FlowLineConfig, FlowLineModel, SyntheticConfig, SyntheticModel, slippage_config
from .procedures import ProcedureConfig

REQUIRED_KEYS = ("delta",)
# run-spec keys accepted next to the procedure parameters
SPEC_KEYS = ("model", "procedure", "executor", "clock")


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", f"expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}", "empty key")
        values[key] = value
    return values


def load_config_file(path):
    if not os.path.isfile(path):
        raise ConfigError("config", f"file not found: {path}")
    with open(path) as fh:
        return parse_config_text(fh.read(), path)


def _convert(name, kind, value):
    if not isinstance(value, str):
        return value
    try:
        if kind is int:
            return int(value, 0)
        if kind is float:
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
            return out
    except ValueError:
        raise ConfigError(name, f"cannot parse {value!r} as {kind.__name__}") from None
    return value


def build_procedure_config(values, required=REQUIRED_KEYS):
    """:class:`ProcedureConfig` from string values; errors name the key."""
    known = {f.name: f.type for f in fields(ProcedureConfig)}
    types = {"int": int, "float": float, "str": str}
    unknown = sorted(set(values) - set(known) - set(SPEC_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    for key in required:
        if values.get(key) is None:
            raise ConfigError(key, "required key is missing")
    kwargs = {}
    for name, kind in known.items():
        if values.get(name) is not None:
            kind = types.get(kind, kind) if isinstance(kind, str) else kind
            kwargs[name] = _convert(name, kind, values[name])
    try:
        return ProcedureConfig(**kwargs)
    except InvalidParameter as exc:
        key = next((k for k in known if str(exc).startswith(k + " ")), "config")
        raise ConfigError(key, str(exc)) from None


def _kv(text):
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ConfigError("model", f"expected name=value in model options, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_model(spec):
    """Build a model from a selector string.

    Accepted forms::

        flowline:R=20,B=20[,warmup_mode=lognormal,warmup_sigma2=0.5,...]
        flowline:20,20
        slippage:k=100,delta=0.1[,sigma=1,cost=0.001]
        synthetic:path/to/file.json   (keys means, variances, optional costs)
    """
    if not spec:
        raise ConfigError("model", "model selector is missing")
    kind, _, rest = spec.partition(":")
    try:
        if kind == "flowline":
            parts = [p.strip() for p in rest.split(",") if p.strip()]
            if len(parts) >= 2 and "=" not in parts[0] and "=" not in parts[1]:
                opts = {"R": parts[0], "B": parts[1], **_kv(",".join(parts[2:]))}
            else:
                opts = _kv(rest)
            known = {f.name: f.type for f in fields(FlowLineConfig)}
            kwargs = {}
            for k, v in opts.items():
                if k not in known:
                    raise ConfigError("model", f"unknown flowline option {k!r}")
                kind_ = {"int": int, "float": float, "str": str}.get(known[k], known[k])
                kwargs[k] = _convert("model", kind_, v)
            return FlowLineModel(FlowLineConfig(**kwargs))
        if kind == "slippage":
            opts = _kv(rest)
            k = _convert("model", int, opts.pop("k", "100"))
            delta = _convert("model", float, opts.pop("delta", "0.1"))
            sigma = _convert("model", float, opts.pop("sigma", "1"))
            cost = _convert("model", float, opts.pop("cost", "0.001"))
            if opts:
                raise ConfigError("model", f"unknown slippage option {sorted(opts)[0]!r}")
            return SyntheticModel(slippage_config(k, delta, sigma, cost))
        if kind == "synthetic":
            if not os.path.isfile(rest):
                raise ConfigError("model", f"synthetic model file not found: {rest}")
            with open(rest) as fh:
                data = json.load(fh)
            return SyntheticModel(SyntheticConfig(data["means"], data["variances"], data.get("costs", 1e-3)))
    except InvalidParameter as exc:
        raise ConfigError("model", str(exc)) from None
    except (KeyError, json.JSONDecodeError) as exc:
        raise ConfigError("model", f"bad synthetic model file: {exc}") from None
    raise ConfigError("model", f"unknown model kind {kind!r}")
