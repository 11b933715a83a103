"""File formats: JSON documents, CSV tables and run manifests.

Every JSON document carries a ``format_version``.  Writes go to a
temporary file in the target directory and are renamed into place, so a
reader never sees a partial file.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile

import numpy as np

from .dictionary import TimeSeries
from .errors import ConfigurationError
from .sampling import RNG_ALGORITHM, PoleRegion, PoleSet
from .solver.model import RafModel, _jsonable

FORMAT_VERSION = 1


def _atomic_write(path, text: str):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(obj):
    """JSON-safe copy; non-finite floats become strings ``"inf"``/``"nan"``."""
    obj = _jsonable(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj, kind: str | None = None):
    doc = dict(obj)
    doc.setdefault("format_version", FORMAT_VERSION)
    if kind is not None:
        doc.setdefault("kind", kind)
    _atomic_write(path, dumps(doc))


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: expected a JSON object")
    v = doc.get("format_version", FORMAT_VERSION)
    if v != FORMAT_VERSION:
        raise ConfigurationError(f"{path}: unsupported format_version {v}")
    return doc


def write_csv(path, header, rows):
    """Write rows (sequences or dicts keyed by ``header``); floats in repr form."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        vals = [row[h] for h in header] if isinstance(row, dict) else list(row)
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in vals])
    _atomic_write(path, buf.getvalue())


# -- time series ------------------------------------------------------------
def write_timeseries_csv(path, data: TimeSeries):
    write_csv(path, ["t", "u", "y"], ((t, float(a), float(b)) for t, (a, b)
                                      in enumerate(zip(data.u, data.y))))


def read_timeseries_csv(path) -> TimeSeries:
    """Read a ``t,u,y`` table; ``t`` must run ``0, 1, ..., N-1``."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != ["t", "u", "y"]:
        raise ConfigurationError(f"{path}: header must be 't,u,y'")
    body = [r for r in rows[1:] if r]
    try:
        arr = np.array([[float(c) for c in r] for r in body], dtype=float)
    except ValueError as exc:
        raise ConfigurationError(f"{path}: non-numeric entry ({exc})") from exc
    if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) == 0:
        raise ConfigurationError(f"{path}: expected three columns and at least one row")
    if not np.array_equal(arr[:, 0], np.arange(len(arr))):
        raise ConfigurationError(f"{path}: column t must be 0, 1, ..., N-1")
    return TimeSeries(arr[:, 1], arr[:, 2])


# -- dictionaries and models ----------------------------------------------------
def poleset_to_dict(ps: PoleSet) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "dictionary",
        "seed": ps.seed,
        "rng_algorithm": ps.rng_algorithm,
        "region": ps.region.to_dict() if ps.region is not None else None,
        "poles": [[float(p.real), float(p.imag)] for p in ps.poles],
        "pair_index": [int(j) for j in ps.pair_index],
    }


def poleset_from_dict(d: dict) -> PoleSet:
    try:
        poles = np.array([complex(a, b) for a, b in d["poles"]], dtype=complex)
        pair = np.array(d["pair_index"], dtype=int)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed dictionary file: {exc}") from exc
    region = PoleRegion.from_dict(d["region"]) if d.get("region") else None
    return PoleSet(poles, pair, seed=d.get("seed"), region=region,
                   rng_algorithm=d.get("rng_algorithm", RNG_ALGORITHM))


def write_poleset(path, ps: PoleSet):
    write_json(path, poleset_to_dict(ps))


def read_poleset(path) -> PoleSet:
    return poleset_from_dict(read_json(path))


def write_model(path, model: RafModel, extra: dict | None = None):
    doc = model.to_dict()
    doc.update(extra or {})
    write_json(path, doc, kind="model")


def read_model(path) -> RafModel:
    d = read_json(path)
    try:
        return RafModel.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: malformed model file ({exc})") from exc


# -- manifests ---------------------------------------------------------------
def config_hash(config) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, compact separators)."""
    text = json.dumps(_clean(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def manifest(command: str, config: dict, seed=None, outputs=()) -> dict:
    from . import __version__

    return {
        "format_version": FORMAT_VERSION,
        "kind": "manifest",
        "tool": "rafid",
        "version": __version__,
        "command": command,
        "seed": seed,
        "rng_algorithm": RNG_ALGORITHM,
        "config_hash": config_hash(config),
        "config": _clean(config),
        "outputs": [os.fspath(o) for o in outputs],
    }
