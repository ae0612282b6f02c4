"""
Long campaigns against exact results. Each runs a configuration from
``campaigns/`` end to end through the command line.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from fracising.cli import EXIT_OK, main

CAMPAIGNS = Path(__file__).resolve().parent.parent / "campaigns"
ONSAGER_TC = 2.0 / np.log(1.0 + np.sqrt(2.0))


def _analyze(name, tmp_path):
    store, analysis = tmp_path / "store", tmp_path / "analysis"
    assert main(["run", "--config", str(CAMPAIGNS / name), "--out", str(store), "--jobs", "4"]) == EXIT_OK
    main(["analyze", str(store), "--out", str(analysis)])
    return json.loads((analysis / "report.json").read_text())


@pytest.mark.slow
def test_square_lattice_matches_onsager(tmp_path):
    (block,) = _analyze("onsager_2d.ini", tmp_path)["blocks"]
    assert block["transition_detected"]
    assert block["T_c"]["value"] == pytest.approx(ONSAGER_TC, rel=0.01)
    assert block["exponents"]["eta"]["value"] == pytest.approx(0.25, abs=0.05)
    assert block["ratios"]["gamma_over_nu"]["value"] == pytest.approx(1.75, abs=0.10)


@pytest.mark.slow
def test_short_range_chain_has_no_transition(tmp_path):
    (block,) = _analyze("chain_q2_control.ini", tmp_path)["blocks"]
    assert not block["transition_detected"]
    small = np.array(block["magnetization"]["16"]["M"])
    large = np.array(block["magnetization"]["64"]["M"])
    assert np.all(large < small)


@pytest.mark.slow
def test_transverse_field_chain(tmp_path):
    (block,) = _analyze("quantum_q2.ini", tmp_path)["blocks"]
    assert block["transition_detected"]
    assert block["g_c"]["value"] == pytest.approx(1.0, rel=0.05)
    assert block["exponents"]["nu"]["value"] == pytest.approx(1.0, abs=0.15)


@pytest.mark.slow
def test_anomalous_dimension_of_long_range_chain(tmp_path):
    report = _analyze("chain_hausdorff.ini", tmp_path)
    blocks = {b["q"]: b for b in report["blocks"]}
    middle = blocks[0.75]["exponents"]
    assert middle["eta"]["value"] == pytest.approx(1.25, abs=0.10)
    assert middle["H_D"]["value"] == pytest.approx(0.75, abs=0.10)
    etas = [blocks[q]["exponents"]["eta"] for q in (0.6, 0.75, 0.9)]
    for a, b in zip(etas, etas[1:]):
        assert a["value"] - b["value"] > -2 * np.hypot(a["stderr"], b["stderr"])
    (table,) = report["hausdorff"]
    assert table["slope"] == pytest.approx(1.0, abs=0.2)


@pytest.mark.slow
def test_mean_field_exponents_above_upper_critical_dimension(tmp_path):
    (block,) = _analyze("chain_mean_field.ini", tmp_path)["blocks"]
    exponents = block["exponents"]
    assert exponents["kappa"]["value"] == 2.0
    assert exponents["gamma"]["value"] == pytest.approx(1.0, abs=0.15)
    assert exponents["beta"]["value"] == pytest.approx(0.5, abs=0.10)
