"""Config-driven sweep: synthetic tensors x schemes -> CSV rows.

The config is one flat TOML document (or JSON carrying the same structure,
chosen by a ``.json`` file extension) with two arrays of tables:

    [[spec]]
    id = "gauss"            # optional, defaults to spec<i>
    generator = "gaussian"  # gaussian | channel_outlier | heavy_tail
    rows = 256
    cols = 64
    seed = 7
    # optional per generator: outlier_fraction, outlier_scale, tail_exponent

    [[scheme]]
    kind = "group_t"
    b_k = 4
    b_v = 4
    g = 16

Every (spec, scheme) pair in spec-major order becomes one CSV row. A scheme
that is malformed in isolation (unknown kind, missing required field) is a
config schema error and aborts before any evaluation; a scheme that is valid
but incompatible with a particular tensor shape (group divisibility) yields
a row with status=config_error, mirroring the dash cells of a results table.
The V tensor of each pair is drawn from the spec's seed + 1 so K and V are
independent but reproducible. Rows are evaluated in a thread pool and
emitted in deterministic order; wall_ms is the only non-deterministic field.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import IO, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cache import CacheMode, KVCache
from .errors import ConfigError, KvcompError, ShapeError
from .schemes import SchemeConfig, bits_per_element, dequantize, quantize_kv_pair
from .tensor import SyntheticSpec, Tensor2D, generate

__all__ = ["CSV_COLUMNS", "SweepJob", "load_config", "run_sweep", "write_csv"]

CSV_COLUMNS = (
    "spec_id",
    "kind",
    "b_k",
    "b_v",
    "g",
    "g1",
    "g2",
    "s",
    "mode",
    "mse",
    "max_abs_err",
    "bpe_k",
    "bpe_v",
    "wall_ms",
    "status",
)

_SPEC_FIELDS = {
    "id", "generator", "rows", "cols", "seed",
    "outlier_fraction", "outlier_scale", "tail_exponent",
}


@dataclass(frozen=True)
class SweepJob:
    specs: tuple[tuple[str, SyntheticSpec], ...]
    schemes: tuple[SchemeConfig, ...]


def _parse_spec(entry: dict, i: int) -> tuple[str, SyntheticSpec]:
    if not isinstance(entry, dict):
        raise ConfigError(f"spec[{i}]: expected a table, got {type(entry).__name__}")
    unknown = set(entry) - _SPEC_FIELDS
    if unknown:
        raise ConfigError(f"spec[{i}]: unknown fields {sorted(unknown)}")
    spec_id = str(entry.get("id", f"spec{i}"))
    try:
        spec = SyntheticSpec(
            generator=entry["generator"],
            rows=entry["rows"],
            cols=entry["cols"],
            seed=entry["seed"],
            outlier_fraction=entry.get("outlier_fraction", 0.0),
            outlier_scale=entry.get("outlier_scale", 1.0),
            tail_exponent=entry.get("tail_exponent", 3.0),
        )
        spec.validate()
    except KeyError as e:
        raise ConfigError(f"spec[{i}]: missing field {e.args[0]!r}") from None
    except KvcompError as e:
        raise ConfigError(f"spec[{i}]: {e}") from None
    return spec_id, spec


def _parse_scheme(entry: dict, i: int) -> SchemeConfig:
    if not isinstance(entry, dict):
        raise ConfigError(f"scheme[{i}]: expected a table, got {type(entry).__name__}")
    try:
        return SchemeConfig.from_dict(entry)
    except KvcompError as e:
        raise ConfigError(f"scheme[{i}]: {e}") from None


def load_config(path: str) -> SweepJob:
    """Parse and validate a sweep config file.

    Parse and schema problems raise ConfigError; an unreadable file raises
    the underlying OSError (an I/O failure, not a config one).
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        if path.endswith(".json"):
            doc = json.loads(raw.decode("utf-8"))
        else:
            doc = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as e:
        raise ConfigError(f"config {path} failed to parse: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a table/object")
    unknown = set(doc) - {"spec", "scheme"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    raw_specs = doc.get("spec", [])
    raw_schemes = doc.get("scheme", [])
    if not isinstance(raw_specs, list) or not isinstance(raw_schemes, list):
        raise ConfigError("'spec' and 'scheme' must be arrays of tables")
    specs = tuple(_parse_spec(e, i) for i, e in enumerate(raw_specs))
    schemes = tuple(_parse_scheme(e, i) for i, e in enumerate(raw_schemes))
    ids = [sid for sid, _ in specs]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate spec ids")
    return SweepJob(specs=specs, schemes=schemes)


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def _scheme_cells(cfg: SchemeConfig) -> dict:
    d = cfg.to_dict()
    return {
        "kind": d["kind"],
        "b_k": str(d["b_k"]),
        "b_v": str(d["b_v"]),
        "g": "" if d.get("g") is None else str(d["g"]),
        "g1": "" if d.get("g1") is None else str(d["g1"]),
        "g2": "" if d.get("g2") is None else str(d["g2"]),
        "s": "" if d.get("s") is None else repr(float(d["s"])),
    }


def _eval_pair(
    spec_id: str, spec: SyntheticSpec, cfg: SchemeConfig, mode: CacheMode
) -> dict:
    """One sweep row. Never raises for scheme/shape incompatibility."""
    t0 = time.perf_counter()
    row = {"spec_id": spec_id, **_scheme_cells(cfg), "mode": mode.value}
    try:
        K = generate(spec)
        V = generate(replace(spec, seed=spec.seed + 1))
        if mode is CacheMode.SIMULATION:
            q_k, q_v = quantize_kv_pair(K, V, cfg)
            k_hat, v_hat = dequantize(q_k).data, dequantize(q_v).data
            bpe_k, bpe_v = bits_per_element(q_k), bits_per_element(q_v)
        else:
            cache = KVCache(cfg, spec.cols, mode=CacheMode.STREAMING)
            half = spec.rows // 2
            if half:
                cache.prefill(Tensor2D(K.data[:half]), Tensor2D(V.data[:half]))
            for r in range(half, spec.rows):
                cache.append(K.data[r], V.data[r])
            mk, mv = cache.materialize()
            k_hat, v_hat = mk.data, mv.data
            fp = cache.footprint()
            bpe_k, bpe_v = fp.bits_per_element_k, fp.bits_per_element_v
        dk = k_hat.astype(np.float64) - K.data.astype(np.float64)
        dv = v_hat.astype(np.float64) - V.data.astype(np.float64)
        row["mse"] = _fmt((np.sum(dk * dk) + np.sum(dv * dv)) / (2 * spec.rows * spec.cols))
        row["max_abs_err"] = _fmt(max(np.abs(dk).max(), np.abs(dv).max()))
        row["bpe_k"] = _fmt(bpe_k)
        row["bpe_v"] = _fmt(bpe_v)
        row["status"] = "ok"
    except (ConfigError, ShapeError):
        row.update(mse="", max_abs_err="", bpe_k="", bpe_v="", status="config_error")
    row["wall_ms"] = "%.3f" % ((time.perf_counter() - t0) * 1e3)
    return row


def run_sweep(
    job: SweepJob, mode: CacheMode = CacheMode.SIMULATION, workers: int = 4
) -> list[dict]:
    """Evaluate the full Cartesian product; rows in spec-major order."""
    tasks = [
        (spec_id, spec, cfg)
        for spec_id, spec in job.specs
        for cfg in job.schemes
    ]
    if not tasks:
        return []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(lambda t: _eval_pair(t[0], t[1], t[2], mode), tasks))


def write_csv(rows: list[dict], fh: IO[str]) -> None:
    writer = csv.DictWriter(fh, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
