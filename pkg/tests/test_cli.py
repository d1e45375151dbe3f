import pytest

from photonstats.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, main
from photonstats.config import load_config
from photonstats.pipeline import run_report_stage

from conftest import write_stage_outputs

SHORT_POISSON = """\
emitter:
  poisson_rate: 50000.0
acquisition:
  duration_s: {duration}
  seed: 3
"""


@pytest.fixture
def short_config(tmp_path):
    path = tmp_path / "short.yml"
    path.write_text(SHORT_POISSON.format(duration=0.5))
    return path


def test_simulate_is_reproducible(tmp_path, short_config, capsys):
    first, second = tmp_path / "a.ttag", tmp_path / "b.ttag"
    assert main(["simulate", "--config", str(short_config), "--out", str(first)]) == EXIT_OK
    assert main(["simulate", "--config", str(short_config), "--out", str(second)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    assert "tags to" in capsys.readouterr().out


def test_simulate_rejects_zero_duration(tmp_path, capsys):
    path = tmp_path / "zero.yml"
    path.write_text(SHORT_POISSON.format(duration=0))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "x.ttag")]) == EXIT_USAGE
    assert "acquisition.duration_s" in capsys.readouterr().err
    assert not (tmp_path / "x.ttag").exists()


def test_analyze_truncated_file(tmp_path, short_config, capsys):
    tags = tmp_path / "tags.ttag"
    assert main(["simulate", "--config", str(short_config), "--out", str(tags)]) == EXIT_OK
    tags.write_bytes(tags.read_bytes()[:-5])
    code = main(["analyze", "--tags", str(tags), "--config", str(short_config), "--outdir", str(tmp_path / "out")])
    assert code == EXIT_IO
    assert "TruncatedPayloadError" in capsys.readouterr().err


def test_analyze_missing_file(tmp_path, short_config):
    code = main(["analyze", "--tags", str(tmp_path / "absent.ttag"), "--config", str(short_config),
                 "--outdir", str(tmp_path / "out")])
    assert code == EXIT_IO


def test_analyze_reference_source_reports_failed_stages(tmp_path, short_config, capsys):
    tags = tmp_path / "tags.ttag"
    main(["simulate", "--config", str(short_config), "--out", str(tags)])
    code = main(["analyze", "--tags", str(tags), "--config", str(short_config), "--outdir", str(tmp_path / "out")])
    assert code == EXIT_USAGE
    captured = capsys.readouterr()
    assert "UnimodalHistogramError" in captured.out
    assert "failed stages" in captured.err
    assert (tmp_path / "out" / "g2_all.csv").exists()


def test_report_on_empty_directory(tmp_path, capsys):
    assert main(["report", "--dir", str(tmp_path)]) == EXIT_USAGE
    assert "report.json" in capsys.readouterr().err


def test_report_two_emitters(tmp_path, capsys):
    dr1 = write_stage_outputs(tmp_path / "DR1")
    dr2 = write_stage_outputs(tmp_path / "DR2", tau_x=28.0, tau_trion=2.6, g2=(0.11, 0.47, 0.24),
                              intensities=(130.0, 24.0), fractions=(0.6, 0.2, 0.2))
    run_report_stage(dr1, load_config("dr1"))
    run_report_stage(dr2, load_config("dr2"))
    assert main(["report", "--dir", str(dr1), "--dir", str(dr2)]) == EXIT_OK
    out = capsys.readouterr().out
    rows = [line.split()[0] for line in out.splitlines()[2:4]]
    assert rows == ["DR1", "DR2"]
    assert "Warnings:" in out
    assert "DR2: note:" in out


def test_usage_errors_exit_through_argparse():
    with pytest.raises(SystemExit):
        main(["simulate", "--out", "x.ttag"])
