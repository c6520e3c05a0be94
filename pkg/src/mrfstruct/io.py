"""Plain-text file formats: grids, model specs, traces and checkpoints.

Grid files start with ``dims m n`` followed by ``m`` rows of ``n`` characters
from ``0``, ``1`` and ``.`` (unobserved).  Covariate layers are separate
files of whitespace-separated reals with the same shape.  Specs, traces
and checkpoints are JSON.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .lattice import CliqueType, Dims, clique_type
from .mrf import Grid, ModelSpec
from .parametrization import TiedState, beta_from_phi, expand_tied, phi_from_beta
from .priors import HyperParams
from .sampler import ChainCounters, ModelState, SamplerConfig

JSON_SEPARATORS = (",", ":")


def dumps(obj) -> str:
    return json.dumps(obj, separators=JSON_SEPARATORS)


# -- grids ---------------------------------------------------------------------

def parse_grid(text: str) -> Grid:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty grid file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "dims":
        raise ValueError("grid file must start with 'dims m n'")
    m, n = int(head[1]), int(head[2])
    rows = lines[1:]
    if len(rows) != m or any(len(r) != n for r in rows):
        raise ValueError(f"grid body does not match dims {m}x{n}")
    x = np.zeros((m, n), dtype=np.uint8)
    observed = np.ones((m, n), dtype=bool)
    for i, row in enumerate(rows):
        for j, ch in enumerate(row):
            if ch == "1":
                x[i, j] = 1
            elif ch == ".":
                observed[i, j] = False
            elif ch != "0":
                raise ValueError(f"invalid grid character {ch!r} at row {i}")
    return Grid(x, observed)


def format_grid(grid: Grid) -> str:
    m, n = grid.x.shape
    rows = ["".join("." if not grid.observed[i, j] else str(int(grid.x[i, j])) for j in range(n))
            for i in range(m)]
    return "\n".join([f"dims {m} {n}"] + rows) + "\n"


def read_covariate(path, dims: Dims) -> np.ndarray:
    values = np.loadtxt(path, dtype=float, ndmin=2)
    if values.shape != (dims.m, dims.n):
        raise ValueError(f"covariate layer {path} has shape {values.shape}, expected {dims.m}x{dims.n}")
    return values


def attach_covariates(grid: Grid, paths: Iterable, standardize: bool = False) -> Grid:
    """Grid with covariate layers read from ``paths`` (optionally standardized on observed nodes)."""
    paths = list(paths)
    if not paths:
        return grid
    layers = np.stack([read_covariate(p, grid.dims) for p in paths])
    if standardize:
        obs = grid.observed
        for k in range(len(layers)):
            vals = layers[k][obs]
            sd = vals.std()
            layers[k] = (layers[k] - vals.mean()) / (sd if sd > 0 else 1.0)
    return Grid(grid.x, grid.observed, layers, tuple(Path(p).stem for p in paths))


def read_grid(path, covariates: Iterable = (), standardize: bool = False) -> Grid:
    return attach_covariates(parse_grid(Path(path).read_text()), covariates, standardize)


def write_grid(grid: Grid, path) -> None:
    Path(path).write_text(format_grid(grid))


# -- model specs -----------------------------------------------------------------

def _parse_types(raw, dims: Dims) -> list[CliqueType]:
    return [clique_type(t, dims) for t in raw]


def parse_spec(data: dict, dims: Dims | None = None) -> tuple[str, ModelSpec]:
    """Build a ModelSpec from a spec document; ``dims`` overrides the stored dims.

    Returns the form (``"phi"`` or ``"beta"``) and the spec.
    """
    form = data.get("form")
    if dims is None:
        if "dims" not in data:
            raise ValueError("spec has no dims and none were given")
        dims = Dims(*data["dims"])
    kappa = tuple(float(k) for k in data.get("kappa", ()))
    if form == "phi":
        cells = [_parse_types(c["types"], dims) for c in data["cells"]]
        phi = [float(c["phi"]) for c in data["cells"]]
        z = TiedState.build(cells, phi)
        if sum(len(c) for c in z.cells) != sum(len(c) for c in cells):
            raise ValueError("spec lists a clique type more than once")
        beta_from_phi(expand_tied(z), dims)
        return form, ModelSpec.from_tied(z, dims, kappa)
    if form == "beta":
        beta: dict[CliqueType, float] = {}
        for item in data["beta"]:
            ct = clique_type(item["type"], dims)
            if ct in beta:
                raise ValueError(f"clique type {ct.to_text()} listed twice")
            beta[ct] = float(item["value"])
        return form, ModelSpec.from_beta(beta, dims, kappa)
    raise ValueError("spec 'form' must be 'phi' or 'beta'")


def read_spec(path, dims: Dims | None = None) -> tuple[str, ModelSpec]:
    return parse_spec(json.loads(Path(path).read_text()), dims)


def phi_document(z: TiedState, dims: Dims, kappa=()) -> dict:
    return {
        "form": "phi",
        "dims": [dims.m, dims.n],
        "cells": [{"types": [ct.to_list() for ct in sorted(c)], "phi": v}
                  for c, v in zip(z.cells, z.phi)],
        "kappa": list(kappa),
    }


def beta_document(beta: dict, dims: Dims, kappa=()) -> dict:
    return {
        "form": "beta",
        "dims": [dims.m, dims.n],
        "beta": [{"type": ct.to_list(), "value": beta[ct]} for ct in sorted(beta)],
        "kappa": list(kappa),
    }


def spec_beta(spec: ModelSpec) -> dict:
    return spec.beta


def spec_phi(spec: ModelSpec) -> dict:
    return phi_from_beta(spec.beta, spec.dims)


# -- traces ----------------------------------------------------------------------

def trace_header(dims: Dims, config: SamplerConfig, data_path: str | None = None) -> dict:
    return {"header": {"dims": [dims.m, dims.n], "config": config.to_dict(), "data": data_path}}


class TraceWriter:
    """Append-only JSON-lines trace; the first line is a header."""

    def __init__(self, path, header: dict | None = None, append: bool = False):
        self.path = Path(path)
        self._fh = open(self.path, "a" if append else "w")
        if header is not None and not append:
            self._fh.write(dumps(header) + "\n")

    def write(self, record: dict) -> None:
        self._fh.write(dumps(record) + "\n")

    def flush(self) -> None:
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def iter_trace(path) -> Iterator[dict]:
    with open(path) as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def read_trace(path) -> tuple[dict | None, list[dict]]:
    header, records = None, []
    for obj in iter_trace(path):
        if "header" in obj:
            header = obj["header"]
        else:
            records.append(obj)
    return header, records


def truncate_trace(path, last_iteration: int) -> None:
    """Drop records beyond ``last_iteration`` (used when resuming)."""
    keep = []
    for obj in iter_trace(path):
        if "header" in obj or obj["iter"] <= last_iteration:
            keep.append(dumps(obj))
    Path(path).write_text("".join(line + "\n" for line in keep))


# -- states and checkpoints -------------------------------------------------------

def state_from_json(data: dict, dims: Dims, x_b=None) -> ModelState:
    cells = [_parse_types(c, dims) for c in data["partition"]]
    z = TiedState(tuple(frozenset(c) for c in cells), tuple(float(v) for v in data["phi_S"]))
    types = frozenset(_parse_types(data["M"], dims))
    theta = HyperParams(**data["theta"])
    kappa = tuple(float(k) for k in data.get("kappa", ()))
    return ModelState(types, z, theta, kappa, None if x_b is None else np.asarray(x_b, dtype=np.uint8))


def checkpoint_document(iteration: int, state: ModelState, counters: ChainCounters,
                        aux_runs: int, config: SamplerConfig, dims: Dims) -> dict:
    return {
        "next_iteration": iteration,
        "dims": [dims.m, dims.n],
        "config": config.to_dict(),
        "state": state.to_json(),
        "x_b": None if state.x_b is None else state.x_b.tolist(),
        "counters": counters.to_json(),
        "aux_runs": aux_runs,
    }


def write_checkpoint(path, doc: dict) -> None:
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(dumps(doc))
    tmp.replace(path)


def read_checkpoint(path) -> tuple[int, ModelState, ChainCounters, int, SamplerConfig]:
    doc = json.loads(Path(path).read_text())
    dims = Dims(*doc["dims"])
    state = state_from_json(doc["state"], dims, doc.get("x_b"))
    config = SamplerConfig.from_dict(doc["config"])
    return (doc["next_iteration"], state, ChainCounters.from_json(doc["counters"]),
            doc["aux_runs"], config)
