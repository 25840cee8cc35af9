"""
End-to-end workflow through the command line:
1. Generate a noisy Tsirelson behavior
2. Write the NS polytope with a zero-iteration refinement
3. Certify entropy with PEFs over two round counts
4. Re-verify the certificates, then tamper with them and verify again
"""

import csv
import json
from pathlib import Path

import pytest

from pecert.cli.main import main
from pecert.db.session import make_session
from pecert.engine.pef import entropy_bound
from pecert.models.result import ResultRecord


@pytest.fixture(scope="module")
def workspace(tmp_path_factory: pytest.TempPathFactory) -> Path:
    root = tmp_path_factory.mktemp("workflow")
    behavior = root / "chsh.json"
    polytope = root / "ns.json"
    assert (
        main(
            [
                "generate",
                "--generator",
                "tilted-chsh",
                "--param",
                "alpha=1",
                "--param",
                "w=0.1",
                "--out",
                str(behavior),
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "refine",
                "--behavior",
                str(behavior),
                "--algorithm",
                "nearv",
                "--iterations",
                "0",
                "--level",
                "1",
                "--out",
                str(polytope),
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "certify",
                "--behavior",
                str(behavior),
                "--polytope",
                str(polytope),
                "--n",
                "1e6,1e8",
                "--betas",
                "0.02,0.1",
                "--out-dir",
                str(root / "certs"),
            ]
        )
        == 0
    )
    return root


def _certificate(workspace: Path, n: int) -> Path:
    return workspace / "certs" / f"certificate-pe-n{n}.json"


def test_generate_writes_run_record(workspace: Path) -> None:
    record = json.loads((workspace / "chsh.json.run.json").read_text())
    assert record["command"] == "generate"
    doc = json.loads((workspace / "chsh.json").read_text())
    assert doc["provenance"]["bell_values"]["chsh"] == pytest.approx(0.9 * 2 * 2**0.5)


def test_zero_iteration_refine_keeps_ns(workspace: Path) -> None:
    doc = json.loads((workspace / "ns.json").read_text())
    assert len(doc["vertices"]) == 24
    assert doc["cuts"] == []


def test_certify_outputs(workspace: Path) -> None:
    with open(workspace / "certs" / "results.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["n"]) for r in rows] == [10**6, 10**8]
    assert all(r["method"] == "pe" for r in rows)
    cert = json.loads(_certificate(workspace, 10**8).read_text())
    assert cert["total_bits"] > 0
    assert cert["reported_bits"] == cert["total_bits"]


def test_verify_passes(workspace: Path, capsys: pytest.CaptureFixture) -> None:
    for n in (10**6, 10**8):
        code = main(
            [
                "verify",
                "--certificate",
                str(_certificate(workspace, n)),
                "--polytope",
                str(workspace / "ns.json"),
            ]
        )
        assert code == 0
    assert "PASS pe" in capsys.readouterr().out


def test_verify_rejects_inflated_pef(workspace: Path, tmp_path: Path) -> None:
    doc = json.loads(_certificate(workspace, 10**6).read_text())
    doc["pef"] = [2 * f for f in doc["pef"]]
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(doc))
    code = main(
        ["verify", "--certificate", str(tampered), "--polytope", str(workspace / "ns.json")]
    )
    assert code == 1


def test_verify_rejects_inflated_total(workspace: Path, tmp_path: Path) -> None:
    doc = json.loads(_certificate(workspace, 10**6).read_text())
    doc["total_bits"] += 10.0
    doc["reported_bits"] = max(0.0, doc["total_bits"])
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(doc))
    code = main(
        ["verify", "--certificate", str(tampered), "--polytope", str(workspace / "ns.json")]
    )
    assert code == 1


def test_verify_rejects_inflated_rate(workspace: Path, tmp_path: Path) -> None:
    """A rate raised together with a matching total is caught on the typical behavior"""
    doc = json.loads(_certificate(workspace, 10**6).read_text())
    doc["rate"] += 0.01
    cert = entropy_bound(
        doc["rate"], doc["beta"], doc["kappa"], doc["epsilon"], doc["n"], doc["delta_t"]
    )
    doc["total_bits"] = cert.total
    doc["reported_bits"] = cert.reported
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(doc))
    code = main(
        ["verify", "--certificate", str(tampered), "--polytope", str(workspace / "ns.json")]
    )
    assert code == 1


def test_verify_needs_typical_behavior(workspace: Path, tmp_path: Path) -> None:
    doc = json.loads(_certificate(workspace, 10**6).read_text())
    assert len(doc["typical_behavior"]) == 16
    del doc["typical_behavior"]
    stripped = tmp_path / "stripped.json"
    stripped.write_text(json.dumps(doc))
    code = main(
        ["verify", "--certificate", str(stripped), "--polytope", str(workspace / "ns.json")]
    )
    assert code == 2


def test_certify_fills_result_store(workspace: Path, tmp_path: Path) -> None:
    store = tmp_path / "store.sqlite"
    code = main(
        [
            "certify",
            "--behavior",
            str(workspace / "chsh.json"),
            "--polytope",
            str(workspace / "ns.json"),
            "--n",
            "1e6,1e7",
            "--betas",
            "0.02",
            "--cache-db",
            str(store),
            "--out-dir",
            str(tmp_path / "certs"),
        ]
    )
    assert code == 0
    db = make_session(str(store))
    try:
        rows = db.query(ResultRecord).order_by(ResultRecord.n).all()
    finally:
        db.close()
    assert [r.n for r in rows] == [10**6, 10**7]
    assert all(r.method == "pe" and r.certificate_path.endswith(".json") for r in rows)


def test_verify_needs_polytope(workspace: Path) -> None:
    assert main(["verify", "--certificate", str(_certificate(workspace, 10**6))]) == 2


def test_verify_missing_certificate(tmp_path: Path) -> None:
    assert main(["verify", "--certificate", str(tmp_path / "missing.json")]) == 2


def test_azuma_certify_and_verify(workspace: Path, tmp_path: Path) -> None:
    code = main(
        [
            "certify",
            "--behavior",
            str(workspace / "chsh.json"),
            "--method",
            "azuma",
            "--level",
            "1",
            "--n",
            "1e7",
            "--out-dir",
            str(tmp_path),
        ]
    )
    assert code == 0
    cert = tmp_path / "certificate-azuma-n10000000.json"
    assert main(["verify", "--certificate", str(cert)]) == 0


def test_eat_is_out_of_scope(workspace: Path, tmp_path: Path) -> None:
    code = main(
        [
            "certify",
            "--behavior",
            str(workspace / "chsh.json"),
            "--method",
            "eat",
            "--out-dir",
            str(tmp_path),
        ]
    )
    assert code == 2
