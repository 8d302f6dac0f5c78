import numpy as np
import pytest

from harpbd.data import Trial, load_trial, save_trial
from harpbd.data.trials import COLUMNS, COORD_COLUMNS
from harpbd.errors import TrialParseError


@pytest.fixture
def trial_file(tmp_path):
    rng = np.random.default_rng(3)
    trial = Trial(
        subject_id="C01",
        trial_kind="normal",
        frames=rng.normal(size=(8, 22, 3)),
        activity=rng.integers(0, 6, size=8),
        rater_flags=rng.random((8, 4)) < 0.5,
    )
    path = tmp_path / "C01_normal.csv"
    save_trial(trial, path)
    return path


def rewrite_line(path, number, edit):
    lines = path.read_text().splitlines()
    lines[number - 1] = edit(lines[number - 1])
    path.write_text("\n".join(lines) + "\n")


def test_header_lists_sixty_six_coordinates(trial_file):
    header = trial_file.read_text().splitlines()[2].split(",")
    assert header == COLUMNS
    assert len(COORD_COLUMNS) == 66
    assert load_trial(trial_file).frames.shape == (8, 22, 3)


def test_header_with_a_missing_coordinate_column(trial_file):
    rewrite_line(trial_file, 3, lambda line: line.replace(",z22,", ","))
    assert len(trial_file.read_text().splitlines()[2].split(",")) == len(COLUMNS) - 1
    with pytest.raises(TrialParseError) as excinfo:
        load_trial(trial_file)
    assert excinfo.value.line == 3


@pytest.mark.parametrize("line", [4, 6, 11])
def test_extra_field_reports_its_file_line(trial_file, line):
    rewrite_line(trial_file, line, lambda text: text + ",0")
    with pytest.raises(TrialParseError) as excinfo:
        load_trial(trial_file)
    assert excinfo.value.line == line
    assert f"C01_normal.csv:{line}:" in str(excinfo.value)


def replace_cell(line, index, value):
    cells = line.split(",")
    cells[index] = value
    return ",".join(cells)


def test_non_numeric_cell_reports_its_file_line(trial_file):
    rewrite_line(trial_file, 9, lambda text: replace_cell(text, 5, "oops"))
    with pytest.raises(TrialParseError) as excinfo:
        load_trial(trial_file)
    assert excinfo.value.line == 9
