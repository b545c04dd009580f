import csv
import json

import numpy as np
import pytest

from fpc_surrogate.__main__ import main
from fpc_surrogate.design_space import (
    encode_design,
    format_design_line,
    sample_design,
)
from fpc_surrogate.oracle import Dataset
from fpc_surrogate.repositories import DatasetRepository


@pytest.fixture
def dataset_file(tmp_path, capsys):
    path = tmp_path / "data.fpcd"
    args = ["gen-dataset", "--n", "40", "--seed", "7", "--out", str(path)]
    assert main(args) == 0
    capsys.readouterr()
    return path


@pytest.fixture
def checkpoint_file(tmp_path, dataset_file, capsys):
    path = tmp_path / "runs" / "gan.fpcm"
    code = main([
        "train",
        "--model",
        "gan",
        "--dataset",
        str(dataset_file),
        "--steps",
        "4",
        "--out",
        str(path),
    ])
    assert code == 0
    capsys.readouterr()
    return path


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "0.1.0" in capsys.readouterr().out


def test_gen_dataset_fingerprint_is_deterministic(tmp_path, capsys):
    first, second = tmp_path / "a.fpcd", tmp_path / "b.csv"

    assert main(["gen-dataset", "--n", "12", "--out", str(first)]) == 0
    binary = capsys.readouterr().out.strip()
    assert main(["gen-dataset", "--n", "12", "--out", str(second)]) == 0
    text = capsys.readouterr().out.strip()

    assert len(binary) == 16
    assert binary == text
    assert DatasetRepository().read(second).fingerprint() == binary


def test_gen_dataset_geometry_option(tmp_path):
    path = tmp_path / "small.fpcd"

    code = main([
        "gen-dataset",
        "--n",
        "3",
        "--geometry",
        "20",
        "2",
        "--out",
        str(path),
    ])

    assert code == 0
    assert DatasetRepository().read(path).geometry.cell_side_mm == 20.0


def test_gen_dataset_rejects_zero_entries(tmp_path, capsys):
    code = main(["gen-dataset", "--n", "0", "--out", str(tmp_path / "x")])

    assert code == 1
    assert "--n must be a positive integer" in capsys.readouterr().err


def test_gen_dataset_rejects_format_mismatch(tmp_path):
    out = tmp_path / "x.fpcd"

    assert main(["gen-dataset", "--format", "csv", "--out", str(out)]) == 1
    assert not out.exists()


def test_unknown_option_is_a_usage_error():
    assert main(["train", "--bogus"]) == 1


def test_missing_dataset_is_an_io_error(tmp_path, capsys):
    code = main([
        "train",
        "--dataset",
        str(tmp_path / "missing.fpcd"),
        "--out",
        str(tmp_path / "gan.fpcm"),
    ])

    assert code == 2
    assert "File not found" in capsys.readouterr().err


def test_foreign_oracle_is_rejected(tmp_path, small_dataset):
    foreign = Dataset(
        small_dataset.designs,
        small_dataset.responses,
        small_dataset.geometry,
        small_dataset.seed,
        oracle_version="fpc-oracle/0",
    )
    path = DatasetRepository().write(foreign, tmp_path / "foreign.fpcd")

    code = main([
        "train",
        "--dataset",
        str(path),
        "--out",
        str(tmp_path / "gan.fpcm"),
    ])

    assert code == 4


def test_non_finite_training_exits_3(tmp_path, small_dataset, capsys):
    broken = Dataset(
        small_dataset.designs,
        np.full_like(small_dataset.responses, np.nan),
        small_dataset.geometry,
        small_dataset.seed,
    )
    path = DatasetRepository().write(broken, tmp_path / "nan.fpcd")

    code = main([
        "train",
        "--dataset",
        str(path),
        "--steps",
        "2",
        "--out",
        str(tmp_path / "gan.fpcm"),
    ])

    assert code == 3
    assert "iteration=1" in capsys.readouterr().err


def test_train_gan_writes_artifacts(checkpoint_file):
    history = checkpoint_file.with_name("gan.history.csv")
    summary = json.loads(
        checkpoint_file.with_name("gan.summary.json").read_text(),
    )

    assert checkpoint_file.is_file()
    assert checkpoint_file.with_name("gan.critic.fpcm").is_file()
    assert len(history.read_text().splitlines()) == 1 + 4
    assert summary["model"] == "gan"
    assert summary["steps"] == 4
    assert summary["oracle_version"] == "fpc-oracle/1"


def test_train_mlp_reports_epochs(tmp_path, dataset_file, capsys):
    out = tmp_path / "mlp.fpcm"

    code = main([
        "train",
        "--model",
        "mlp",
        "--dataset",
        str(dataset_file),
        "--steps",
        "2",
        "--out",
        str(out),
    ])

    assert code == 0
    assert capsys.readouterr().out.startswith("mlp: 2 epochs")
    rows = list(csv.DictReader(
        out.with_name("mlp.history.csv").read_text().splitlines(),
    ))
    assert rows[0]["critic_loss"] == ""
    assert rows[-1]["val_nmse_ar"] != ""


def test_screen_with_generator(tmp_path, checkpoint_file, capsys):
    out = tmp_path / "screen.json"
    criteria = tmp_path / "criteria.toml"
    criteria.write_text("min_zbw_mhz = 0.0\nmax_ar_min_db = 1000.0\n")

    code = main([
        "screen",
        "--checkpoint",
        str(checkpoint_file),
        "--n",
        "20",
        "--seed",
        "3",
        "--top-k",
        "2",
        "--criteria",
        str(criteria),
        "--out",
        str(out),
    ])

    assert code == 0
    assert "screened 20 designs" in capsys.readouterr().out
    report = json.loads(out.read_text())
    assert report["pool_size"] == 20
    assert len(report["candidates"]) == 20
    assert report["criteria"]["max_ar_min_db"] == 1000.0
    assert len(report["selected"]) == 2
    assert {"smooth_prs", "balanced_roughness", "selected"} <= set(
        report["comparison"],
    )
    assert out.with_name("screen.hist.zbw_mhz.csv").is_file()


def test_screen_rejects_baseline_checkpoint(tmp_path, dataset_file):
    mlp = tmp_path / "mlp.fpcm"
    main([
        "train",
        "--model",
        "mlp",
        "--dataset",
        str(dataset_file),
        "--steps",
        "1",
        "--out",
        str(mlp),
    ])

    code = main([
        "screen",
        "--checkpoint",
        str(mlp),
        "--out",
        str(tmp_path / "screen.json"),
    ])

    assert code == 1


def test_export_spectra(tmp_path, geometry, checkpoint_file):
    designs = tmp_path / "designs.txt"
    designs.write_text(
        "# two designs\n"
        + format_design_line(encode_design(sample_design(geometry, 1)))
        + "\n\n"
        + format_design_line(encode_design(sample_design(geometry, 2)))
        + "\n",
    )
    out = tmp_path / "spectra.csv"

    code = main([
        "export-spectra",
        "--checkpoint",
        str(checkpoint_file),
        "--oracle",
        "--design-file",
        str(designs),
        "--out",
        str(out),
    ])

    rows = list(csv.DictReader(out.read_text().splitlines()))
    sources = {row["source"] for row in rows}
    oracle_rows = [row for row in rows if row["source"] == "oracle:0"]
    assert code == 0
    assert len(rows) == 4 * 101
    assert sources == {"surrogate:0", "surrogate:1", "oracle:0", "oracle:1"}
    assert float(oracle_rows[0]["freq_ghz"]) == pytest.approx(2.0)
    assert float(oracle_rows[-1]["freq_ghz"]) == pytest.approx(3.0)


def test_export_spectra_needs_a_source(tmp_path):
    designs = tmp_path / "designs.txt"
    designs.write_text("")

    code = main([
        "export-spectra",
        "--design-file",
        str(designs),
        "--out",
        str(tmp_path / "spectra.csv"),
    ])

    assert code == 1


def test_gradcheck_single_architecture(tmp_path, capsys):
    out = tmp_path / "gradcheck.json"

    code = main(["gradcheck", "--arch", "mlp", "--out", str(out)])

    assert code == 0
    assert "PASS" in capsys.readouterr().out
    assert json.loads(out.read_text())["passed"] is True


def test_gradcheck_fails_on_corrupted_gradients(capsys):
    code = main(["gradcheck", "--arch", "mlp", "--corrupt-gradients"])

    assert code == 1
    assert "FAIL" in capsys.readouterr().out


@pytest.mark.slow
def test_gradcheck_all_architectures(capsys):
    assert main(["gradcheck"]) == 0
    assert capsys.readouterr().out.count("PASS") == 4


def test_schemas(tmp_path):
    assert main(["schemas", "--out", str(tmp_path / "schemas")]) == 0

    written = sorted(p.name for p in (tmp_path / "schemas").iterdir())
    assert "screening_report.schema.json" in written
    assert len(written) == 6


@pytest.mark.slow
def test_benchmark_and_cross_validate(tmp_path, dataset_file, capsys):
    report = tmp_path / "report.json"
    folds = tmp_path / "cv.json"

    assert main([
        "benchmark",
        "--dataset",
        str(dataset_file),
        "--steps",
        "2",
        "--out",
        str(report),
    ]) == 0
    assert main([
        "cross-validate",
        "--dataset",
        str(dataset_file),
        "--folds",
        "2",
        "--steps",
        "2",
        "--out",
        str(folds),
    ]) == 0

    assert "mean_predictor" in capsys.readouterr().out
    assert set(json.loads(report.read_text())["models"]) == {
        "gan",
        "cnn",
        "mlp",
    }
    assert report.with_name("report.hist.zbw_mhz.validation.csv").is_file()
    assert len(json.loads(folds.read_text())["folds"]) == 2
