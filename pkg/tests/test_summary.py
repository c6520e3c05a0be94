import numpy as np
import pytest

from mrfstruct.lattice import EMPTY, SINGLE, Dims, named_types
from mrfstruct.parametrization import TiedState
from mrfstruct.sampler import ModelState
from mrfstruct.summary import MIN_GROUP_SIZE, histogram, summarize

D8 = Dims(8, 8)


def record(it, z, theta=None):
    state = ModelState(z.types, z)
    rec = {"iter": it}
    rec.update(state.to_json())
    if theta:
        rec["theta"] = theta
    return rec


def two_cell(value):
    return TiedState.build([[EMPTY], [SINGLE]], [value, -value])


def test_single_repeated_state():
    z = two_cell(0.5)
    report = summarize([record(i, z) for i in range(30)], D8)
    assert report.n_samples == 30
    assert report.model_probs == [{"M": "[[],[[0,0]]]", "prob": 1.0, "count": 30}]
    (part,) = report.partition_probs["[[],[[0,0]]]"]
    assert part["prob"] == 1.0 and part["cells"] == 2
    hist = report.phi_histograms[SINGLE.to_text()]
    assert sum(hist["mass"]) == pytest.approx(1.0)
    lo, hi = hist["edges"][0], hist["edges"][-1]
    assert lo < -1.0 < hi


def test_type_sharing_empty_cell_gives_spike_at_zero():
    nt = named_types(D8)
    z = TiedState.build([[EMPTY, SINGLE, nt["vpair"]], [nt["hpair"]]], [0.4, -0.4])
    recs = [record(i, z) for i in range(20)]
    report = summarize(recs, D8, types=[SINGLE, nt["vpair"]], edges=[-0.5, -0.01, 0.01, 0.5])
    assert report.phi_histograms[SINGLE.to_text()]["mass"] == [0.0, 1.0, 0.0]
    assert report.phi_histograms[nt["vpair"].to_text()]["mass"] == [0.0, 1.0, 0.0]


def test_burn_in_and_empty_remainder():
    z = two_cell(0.5)
    recs = [record(i, z) for i in range(10)]
    assert summarize(recs, D8, burn_in=7).n_samples == 3
    with pytest.raises(ValueError):
        summarize(recs, D8, burn_in=10)


def test_grouping_reports_small_groups_as_na():
    nt = named_types(D8)
    big = TiedState.build([[EMPTY], [SINGLE, nt["vpair"]]], [0.5, -0.5])
    small = two_cell(0.3)
    recs = [record(i, big) for i in range(40)] + [record(40 + i, small) for i in range(5)]
    report = summarize(recs, D8)
    groups = report.grouped_histograms[nt["vpair"].to_text()]["groups"]
    assert groups["M=M_max"]["n"] == 40
    assert groups["M!=M_max"] == "NA"
    assert groups["M!=M_max,in_M"] == "NA"
    assert 5 < MIN_GROUP_SIZE


def test_off_structure_type_uses_implied_value():
    nt = named_types(D8)
    z = two_cell(0.5)
    report = summarize([record(i, z) for i in range(12)], D8, types=[nt["vpair"]],
                       edges=[-2.5, -1.5, -0.5, 0.5])
    # beta_single = -1, so an absent pair sits at 2 * beta_single relative to the empty type
    assert report.phi_histograms[nt["vpair"].to_text()]["mass"] == [1.0, 0.0, 0.0]


def test_hyper_intervals():
    z = two_cell(0.5)
    recs = [record(i, z, {"eta": float(i), "p_star": 0.5, "sigma_phi_sq": 1.0}) for i in range(101)]
    hyper = summarize(recs, D8).hyper
    assert hyper["eta"]["median"] == pytest.approx(50.0)
    assert hyper["eta"]["q025"] == pytest.approx(2.5)
    assert hyper["p_star"]["mean"] == pytest.approx(0.5)


def test_summary_invariant_under_reordering():
    rng = np.random.default_rng(0)
    recs = [record(i, two_cell(float(v))) for i, v in enumerate(rng.normal(size=50))]
    a = summarize(recs, D8, edges=list(np.linspace(-6, 6, 13))).to_json()
    shuffled = [recs[k] for k in rng.permutation(50)]
    b = summarize(shuffled, D8, edges=list(np.linspace(-6, 6, 13))).to_json()
    assert a == b


def test_histogram_counts_outside():
    h = histogram([0.1, 0.2, 5.0], edges=[0.0, 0.5, 1.0])
    assert h["outside"] == 1 and h["mass"] == [1.0, 0.0] and h["n"] == 3
