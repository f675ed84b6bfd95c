"""JSON, CSV and JSONL readers and writers.

Floats are written with ``repr`` precision, so every write -> read -> write
cycle reproduces the file byte for byte.
"""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from .chains import CONTINUOUS, Chain, MixtureModel
from .errors import ParameterError
from .hitting import HittingTimeEstimate
from .simulate import Trail


class FormatError(ParameterError):
    """Malformed file content."""


def _finite(obj):
    """Non-finite floats become ``null``; JSON has no spelling for them."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _dump(obj) -> str:
    return json.dumps(_finite(obj), indent=1, allow_nan=False) + "\n"


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _read(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write(path, text: str):
    Path(path).write_text(text, encoding="utf-8")


def _load_json(path):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


def chain_to_dict(chain: Chain) -> dict:
    return {"mode": chain.mode, "n": chain.n, "matrix": _floats(chain.matrix)}


def chain_from_dict(data: dict) -> Chain:
    try:
        chain = Chain(data["mode"], np.array(data["matrix"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise FormatError(f"not a chain document: {exc}") from exc
    if "n" in data and data["n"] != chain.n:
        raise FormatError(f"declared n = {data['n']} but matrix is {chain.n}x{chain.n}")
    return chain


def mixture_to_dict(mixture: MixtureModel) -> dict:
    return {"chains": [chain_to_dict(c) for c in mixture.chains], "alpha": _floats(mixture.alpha)}


def mixture_from_dict(data: dict) -> MixtureModel:
    try:
        return MixtureModel(tuple(chain_from_dict(c) for c in data["chains"]), np.array(data["alpha"], dtype=float))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"not a mixture document: {exc}") from exc


def model_from_dict(data: dict):
    """A chain or a mixture, whichever the document holds."""
    if not isinstance(data, dict):
        raise FormatError("expected a JSON object")
    return mixture_from_dict(data) if "chains" in data else chain_from_dict(data)


def write_chain(path, chain: Chain):
    _write(path, _dump(chain_to_dict(chain)))


def read_chain(path) -> Chain:
    return chain_from_dict(_load_json(path))


def write_mixture(path, mixture: MixtureModel):
    _write(path, _dump(mixture_to_dict(mixture)))


def read_mixture(path) -> MixtureModel:
    return mixture_from_dict(_load_json(path))


def read_model(path):
    return model_from_dict(_load_json(path))


def write_model(path, model):
    if isinstance(model, MixtureModel):
        write_mixture(path, model)
    else:
        write_chain(path, model)


def matrix_to_csv(matrix) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.atleast_2d(np.asarray(matrix, dtype=float)):
        writer.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(_io.StringIO(text)) if r]
    try:
        M = np.array([[float(x) for x in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise FormatError(f"non-numeric CSV entry: {exc}") from exc
    if M.ndim != 2:
        raise FormatError("CSV rows have unequal lengths")
    return M


def write_matrix_csv(path, matrix):
    _write(path, matrix_to_csv(matrix))


def read_matrix_csv(path) -> np.ndarray:
    return matrix_from_csv(_read(path))


def trail_to_dict(trail: Trail) -> dict:
    out = {"states": trail.states.tolist()}
    if trail.holds is not None:
        out["holds"] = _floats(trail.holds)
    out["weight"] = trail.weight
    if trail.label is not None:
        out["label"] = trail.label
    return out


def trail_from_dict(data: dict) -> Trail:
    try:
        mode = CONTINUOUS if "holds" in data else "discrete"
        return Trail(mode, data["states"], data.get("holds"), data.get("weight", 1.0), data.get("label"))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"not a trail record: {exc}") from exc


def trails_to_jsonl(trails) -> str:
    return "".join(json.dumps(trail_to_dict(t), allow_nan=False) + "\n" for t in trails)


def trails_from_jsonl(text: str) -> list:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {lineno}: invalid JSON ({exc})") from exc
        out.append(trail_from_dict(record))
    return out


def write_trails(path, trails):
    _write(path, trails_to_jsonl(trails))


def read_trails(path) -> list:
    return trails_from_jsonl(_read(path))


def estimate_to_dict(est: HittingTimeEstimate) -> dict:
    return {"H": _floats(est.H_hat), "mask": est.mask.astype(bool).tolist(), "weight_sum": _floats(est.weight_sum)}


def estimate_from_dict(data: dict) -> HittingTimeEstimate:
    try:
        H = np.array(data["H"], dtype=float)
        mask = np.array(data.get("mask", np.ones(H.shape, dtype=bool)), dtype=bool)
        W = np.array(data.get("weight_sum", np.zeros(H.shape)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"not an estimate document: {exc}") from exc
    if H.ndim != 2 or H.shape[0] != H.shape[1] or mask.shape != H.shape or W.shape != H.shape:
        raise FormatError("H, mask and weight_sum must be square arrays of one shape")
    return HittingTimeEstimate(H, mask, W)


def write_estimate(path, est: HittingTimeEstimate):
    _write(path, _dump(estimate_to_dict(est)))


def read_estimate(path) -> HittingTimeEstimate:
    return estimate_from_dict(_load_json(path))


def write_json(path, obj):
    _write(path, _dump(obj))


def read_json(path):
    return _load_json(path)
