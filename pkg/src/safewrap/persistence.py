"""Portable JSON encoding for fitted estimators.

An estimator is stored as its constructor parameters plus every public
fitted attribute (the sklearn trailing-underscore convention). Arrays keep
dtype and shape; floats round-trip exactly because ``json`` writes ``repr``.
"""

import json

import numpy as np

FORMAT_VERSION = 1

_REGISTRY: dict[str, type] = {}


class PersistenceError(ValueError):
    pass


def register(cls):
    """Class decorator making ``cls`` loadable from its kind tag."""
    _REGISTRY[cls.__name__] = cls
    return cls


def _encode(value):
    if isinstance(value, np.ndarray):
        return {"__ndarray__": value.dtype.str, "shape": list(value.shape),
                "data": value.ravel().tolist()}
    if isinstance(value, np.generic):
        return value.item()
    if type(value).__name__ in _REGISTRY and hasattr(value, "get_params"):
        return estimator_to_dict(value)
    if isinstance(value, tuple):
        return {"__tuple__": [_encode(v) for v in value]}
    if isinstance(value, list):
        return [_encode(v) for v in value]
    if isinstance(value, dict):
        if not all(isinstance(k, str) for k in value):
            raise PersistenceError("only string-keyed dicts are serializable")
        return {"__dict__": {k: _encode(v) for k, v in value.items()}}
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    raise PersistenceError(f"cannot serialize {type(value).__name__}")


def _decode(value):
    if isinstance(value, list):
        return [_decode(v) for v in value]
    if isinstance(value, dict):
        if "__ndarray__" in value:
            arr = np.array(value["data"], dtype=np.dtype(value["__ndarray__"]))
            return arr.reshape(value["shape"])
        if "__tuple__" in value:
            return tuple(_decode(v) for v in value["__tuple__"])
        if "__dict__" in value:
            return {k: _decode(v) for k, v in value["__dict__"].items()}
        if "kind" in value and "params" in value:
            return estimator_from_dict(value)
        raise PersistenceError(f"unrecognized encoded object with keys {sorted(value)}")
    return value


def fitted_state(est) -> dict:
    return {k: v for k, v in vars(est).items() if k.endswith("_") and not k.startswith("_")}


def estimator_to_dict(est) -> dict:
    return {
        "kind": type(est).__name__,
        "params": {k: _encode(v) for k, v in est.get_params(deep=False).items()},
        "state": {k: _encode(v) for k, v in fitted_state(est).items()},
    }


def estimator_from_dict(d: dict):
    try:
        cls = _REGISTRY[d["kind"]]
    except KeyError:
        raise PersistenceError(f"unknown estimator kind {d.get('kind')!r}") from None
    est = cls(**{k: _decode(v) for k, v in d["params"].items()})
    for k, v in d["state"].items():
        setattr(est, k, _decode(v))
    return est


def dumps(est) -> str:
    return json.dumps({"format_version": FORMAT_VERSION, "estimator": estimator_to_dict(est)},
                      sort_keys=True)


def loads(text: str):
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise PersistenceError(f"unsupported format_version {doc.get('format_version')!r}")
    return estimator_from_dict(doc["estimator"])


def save(est, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(est))


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
