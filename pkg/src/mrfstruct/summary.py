"""Posterior summaries of a trace: structure and partition frequencies, histograms
of phi differences relative to the empty type, and hyper-parameter intervals."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .lattice import EMPTY, CliqueType, Dims, clique_type, named_types
from .parametrization import TiedState, expand_tied, phi_of_type
from .sampler import state_beta

DEFAULT_BINS = 60
MIN_GROUP_SIZE = 10
DEFAULT_TYPE_NAMES = ("single", "hpair", "vpair", "diag", "antidiag", "triple_nw",
                      "triple_ne", "triple_sw", "triple_se", "square")


def default_types(dims: Dims) -> list[CliqueType]:
    cat = named_types(dims)
    return [cat[name] for name in DEFAULT_TYPE_NAMES]


def _key(types) -> str:
    return "[" + ",".join(ct.to_text() for ct in sorted(types)) + "]"


def _partition_key(z: TiedState) -> str:
    return "[" + ",".join(_key(c) for c in z.cells) + "]"


@dataclass
class Sample:
    types: frozenset
    z: TiedState
    theta: dict
    kappa: list

    @property
    def model_key(self) -> str:
        return _key(self.types)

    @property
    def partition_key(self) -> str:
        return _partition_key(self.z)


def parse_record(rec: dict, dims: Dims) -> Sample:
    types = frozenset(clique_type(t, dims) for t in rec["M"])
    cells = tuple(frozenset(clique_type(t, dims) for t in c) for c in rec["partition"])
    return Sample(types, TiedState(cells, tuple(rec["phi_S"])), rec["theta"], rec.get("kappa", []))


def relative_phi_value(sample: Sample, ct: CliqueType, dims: Dims) -> float:
    """phi of ``ct`` minus phi of the empty type; off-structure types use their implied value."""
    phi = expand_tied(sample.z)
    if ct in phi:
        return phi[ct] - phi[EMPTY]
    return phi_of_type(state_beta(sample.z, dims), ct, dims) - phi[EMPTY]


def histogram(values, bins: int = DEFAULT_BINS, edges=None) -> dict:
    values = np.asarray(values, dtype=float)
    if edges is None:
        lo, hi = (float(values.min()), float(values.max())) if values.size else (0.0, 1.0)
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
    counts, edges = np.histogram(values, bins=np.asarray(edges, dtype=float))
    total = counts.sum()
    mass = counts / total if total else counts.astype(float)
    return {"edges": edges.tolist(), "mass": mass.tolist(), "n": int(values.size),
            "outside": int(values.size - total)}


@dataclass
class SummaryReport:
    n_samples: int
    model_probs: list = field(default_factory=list)
    partition_probs: dict = field(default_factory=dict)
    phi_histograms: dict = field(default_factory=dict)
    grouped_histograms: dict = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)
    acceptance_rates: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "model_probs": self.model_probs,
            "partition_probs": self.partition_probs,
            "phi_histograms": self.phi_histograms,
            "grouped_histograms": self.grouped_histograms,
            "hyper": self.hyper,
            "acceptance_rates": self.acceptance_rates,
        }


def _interval(values) -> dict:
    arr = np.asarray(values, dtype=float)
    lo, med, hi = np.quantile(arr, [0.025, 0.5, 0.975])
    return {"median": float(med), "q025": float(lo), "q975": float(hi), "mean": float(arr.mean())}


def summarize(records: list[dict], dims: Dims, burn_in: int = 0, types=None,
              bins: int = DEFAULT_BINS, edges=None, grouping: bool = True,
              top: int = 10) -> SummaryReport:
    """Summarize trace records with ``iter >= burn_in``."""
    kept = [parse_record(r, dims) for r in records if r["iter"] >= burn_in]
    if not kept:
        raise ValueError("no trace records remain after burn-in")
    n = len(kept)
    types = default_types(dims) if types is None else list(types)
    report = SummaryReport(n)

    models = Counter(s.model_key for s in kept)
    report.model_probs = [{"M": k, "prob": c / n, "count": c} for k, c in
                          sorted(models.items(), key=lambda kv: (-kv[1], kv[0]))]
    for mkey, mcount in models.items():
        parts = Counter(s.partition_key for s in kept if s.model_key == mkey)
        ranked = sorted(parts.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
        report.partition_probs[mkey] = [
            {"partition": p, "prob": c / mcount, "count": c, "cells": _cell_count(p)}
            for p, c in ranked]

    values = {ct: np.array([relative_phi_value(s, ct, dims) for s in kept]) for ct in types}
    for ct, vals in values.items():
        report.phi_histograms[ct.to_text()] = histogram(vals, bins, edges)

    if grouping:
        m_max = report.model_probs[0]["M"]
        is_max = np.array([s.model_key == m_max for s in kept])
        for ct, vals in values.items():
            member = np.array([ct in s.types for s in kept])
            groups = {
                "M=M_max": is_max,
                "M!=M_max": ~is_max,
                "M!=M_max,in_M": ~is_max & member,
                "M!=M_max,not_in_M": ~is_max & ~member,
            }
            out = {}
            for name, mask in groups.items():
                k = int(mask.sum())
                out[name] = "NA" if k < MIN_GROUP_SIZE else histogram(vals[mask], bins, edges)
            report.grouped_histograms[ct.to_text()] = {"M_max": m_max, "groups": out}

    for name in ("eta", "p_star", "sigma_phi_sq"):
        report.hyper[name] = _interval([s.theta[name] for s in kept])
    if kept[0].kappa:
        for k in range(len(kept[0].kappa)):
            report.hyper[f"kappa_{k + 1}"] = _interval([s.kappa[k] for s in kept])
    return report


def _cell_count(partition_key: str) -> int:
    depth, cells = 0, 0
    for ch in partition_key:
        if ch == "[":
            depth += 1
            if depth == 2:
                cells += 1
        elif ch == "]":
            depth -= 1
    return cells


def format_report(report: SummaryReport, top: int = 10) -> str:
    lines = [f"samples: {report.n_samples}", "", "posterior structure probabilities:"]
    for row in report.model_probs[:top]:
        lines.append(f"  {row['prob']:.4f}  {row['M']}")
    if report.model_probs:
        best = report.model_probs[0]["M"]
        lines += ["", "partitions given the most probable structure:"]
        lines.append("  prob    cells  partition")
        for row in report.partition_probs[best][:top]:
            lines.append(f"  {row['prob']:.4f}  {row['cells']:5d}  {row['partition']}")
    lines += ["", "hyper-parameters (median [2.5%, 97.5%]):"]
    for name, s in report.hyper.items():
        lines.append(f"  {name}: {s['median']:.4g} [{s['q025']:.4g}, {s['q975']:.4g}]")
    if report.acceptance_rates:
        lines += ["", "acceptance rates:"]
        for name, s in report.acceptance_rates.items():
            rate = "NA" if s["rate"] is None else f"{s['rate']:.4f}"
            lines.append(f"  {name}: {rate} ({s['accepted']}/{s['proposed']})")
    return "\n".join(lines) + "\n"
