"""Tagged-record text form for the package's spec objects.

Every spec dataclass (distributions, measures, processes, observables,
mixing rate families) is written as ``Name(field=value, ...)``; lists are
``[a, b]``.  Parsing goes through :mod:`ast`, never ``eval``.
"""
import ast
import dataclasses
import hashlib
import json
import math

_REGISTRY = {}


class RecordError(ValueError):
    """Malformed tagged record or unknown record name."""


def register(*aliases):
    """Class decorator making a dataclass constructible from a record."""

    def deco(cls):
        for name in (cls.__name__,) + aliases:
            _REGISTRY[name] = cls
        return cls

    return deco


def registered(name):
    try:
        return _REGISTRY[name]
    except KeyError:
        raise RecordError(f"unknown record type {name!r}") from None


def dumps(obj):
    """Canonical text of a record (field order, floats via ``repr``)."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        parts = []
        for f in dataclasses.fields(obj):
            if not f.init or f.metadata.get("derived"):
                continue
            parts.append(f"{f.name}={dumps(getattr(obj, f.name))}")
        return f"{type(obj).__name__}({', '.join(parts)})"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return repr(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise RecordError("non-finite float in record")
        return repr(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if hasattr(obj, "tolist"):
        return dumps(obj.tolist())
    raise RecordError(f"cannot serialize {type(obj).__name__}")


def _convert(node):
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _convert(node.operand)
        if not isinstance(v, (int, float)):
            raise RecordError("sign applied to a non-number")
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, (ast.List, ast.Tuple)):
        return tuple(_convert(e) for e in node.elts)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        cls = registered(node.func.id)
        args = [_convert(a) for a in node.args]
        kwargs = {kw.arg: _convert(kw.value) for kw in node.keywords}
        try:
            return cls(*args, **kwargs)
        except TypeError as exc:
            raise RecordError(f"{node.func.id}: {exc}") from None
    if isinstance(node, ast.Name):
        # bare name = record with no fields, e.g. ``Uniform01``
        return registered(node.id)()
    raise RecordError(f"unsupported syntax: {ast.dump(node)}")


def loads(text):
    """Parse one tagged record (or literal) from text."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise RecordError(f"syntax error in record {text!r}: {exc.msg}") from None
    return _convert(tree.body)


def spec_hash(obj):
    return hashlib.sha256(dumps(obj).encode()).hexdigest()[:16]
