from __future__ import annotations

import csv
import io
from contextlib import redirect_stdout

import pytest

from groupdht import __version__
from groupdht.cli import main
from groupdht.config import ExperimentConfig, parse_config, render_config
from groupdht.errors import InvalidConfig
from groupdht.harness import (
    AGGREGATE_FIELDS,
    ALLOWED_DELTAS,
    ExperimentCell,
    IoError,
    RunSettings,
    SweepResult,
    csv_header,
    emit_csv,
    format_number,
    paper_grid_cells,
    run_seed,
    run_single,
    run_sweep,
)
from groupdht.model import Mode
from groupdht.workload import Scenario

DESK = RunSettings(scale=0.05)


def cell(**kw) -> ExperimentCell:
    base = dict(scenario=Scenario.EXIT_ONLY, c=100, mode=Mode.FPPR, size_class="XS", delta=1, n_runs=1)
    base.update(kw)
    return ExperimentCell(**base)


class TestCells:
    def test_rejects_delta_outside_grid(self):
        with pytest.raises(InvalidConfig):
            cell(delta=3)

    def test_xl_has_seventeen_deltas(self):
        assert ALLOWED_DELTAS["XL"] == (0, 1, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30)

    def test_full_grid_count(self):
        # independent count of grid columns: 3 + 4 + 5 + 9 + 17
        columns = len([0, 1, 2]) + len([0, 1, 2, 3]) + len([0, 1, 2, 4, 6]) + 9 + 17
        cells = paper_grid_cells()
        assert len(cells) == 2 * 3 * 4 * columns == 912
        assert len({c.key for c in cells}) == 912

    def test_seed_depends_on_every_component(self):
        c = cell()
        seeds = {run_seed(0, c.key, 0), run_seed(1, c.key, 0), run_seed(0, c.key, 1), run_seed(0, cell(delta=2).key, 0)}
        assert len(seeds) == 4


class TestRuns:
    @pytest.mark.parametrize("mode", list(Mode))
    def test_xs_delta_zero_has_no_relocations(self, mode):
        m = run_single(cell(delta=0, mode=mode), 0, DESK)
        assert m.relocations_push == m.relocations_pull == 0

    def test_ninety_percent_exit_leaves_a_thousand(self):
        m = run_single(cell(c=300, delta=0), 0, RunSettings())
        assert m.final_peers == 1000

    def test_replay_identical(self):
        assert run_single(cell(), 2, DESK) == run_single(cell(), 2, DESK)

    def test_window_excludes_bootstrap(self):
        m = run_single(cell(scenario=Scenario.ENTER_EXIT), 0, DESK)
        # bootstrap joins happen before the window; only churn joins count
        assert m.joins == 30 * 5


class TestSweep:
    def test_parallelism_does_not_change_result(self):
        cells = [cell(), cell(mode=Mode.PULL)]
        one = run_sweep(cells, 1, DESK)
        four = run_sweep(cells, 4, DESK)
        assert one.cells == four.cells
        assert one.provenance == four.provenance
        assert one.provenance["version"] == __version__

    def test_ordered_by_cell_key(self):
        result = run_sweep([cell(mode=Mode.PULL), cell(mode=Mode.FPPR)], 1, DESK)
        assert [a.cell for a in result.cells] == sorted(a.cell for a in result.cells)

    def test_rejects_empty(self):
        with pytest.raises(InvalidConfig):
            run_sweep([], 1, DESK)


class TestCsv:
    def test_empty_sweep_header_only(self, tmp_path):
        path = tmp_path / "out.csv"
        emit_csv(SweepResult([]), path)
        text = path.read_text()
        assert text == ",".join(csv_header()) + "\n"

    def test_one_cell_two_lines_and_round_trip(self, tmp_path):
        result = run_sweep([cell(n_runs=3)], 1, DESK)
        path = tmp_path / "out.csv"
        emit_csv(result, path)
        text = path.read_text()
        assert text.endswith("\n") and text.count("\n") == 2
        rows = list(csv.DictReader(io.StringIO(text)))
        agg = result.cells[0]
        for name in AGGREGATE_FIELDS:
            assert float(rows[0][f"{name}_mean"]) == agg.means[name]
            assert float(rows[0][f"{name}_std"]) == agg.stds[name]
        assert rows[0]["scenario"] == "ExitOnly" and rows[0]["n_runs"] == "3"

    @pytest.mark.parametrize("x,text", [(1e22, "10000000000000000000000"), (1.5e-7, "0.00000015"), (2.0, "2"), (7, "7")])
    def test_positional_decimals(self, x, text):
        assert format_number(x) == text
        assert float(format_number(x)) == x

    def test_unwritable(self, tmp_path):
        with pytest.raises(IoError):
            emit_csv(SweepResult([]), tmp_path / "missing" / "x.csv")


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig(settings=RunSettings(scale=0.1, n_peers=500), seed_base=9, runs=3)
        cfg.modes = (Mode.PUSH,)
        back = parse_config(render_config(cfg))
        assert back.settings == cfg.settings
        assert (back.seed_base, back.runs, back.modes, back.deltas) == (9, 3, (Mode.PUSH,), None)

    def test_sections_and_comments(self):
        cfg = parse_config(
            "# desk run\n"
            "data.n_keys = 500\n"
            "data.value_mean_bytes = 5e5\n"
            "data.value_std_bytes = 1e5\n"
            "timers.load_threshold = 2.0\n"
            "maintenance.fingers_per_group = 4\n"
            "run.scale = 0.1\n"
            "grid.size_classes = XS, 64\n"
            "grid.deltas = 0,1\n"
        )
        s = cfg.settings
        assert (s.data.n_keys, s.data.value_mean_bytes, s.timers.load_threshold) == (500, 5e5, 2.0)
        assert s.maintenance.fingers_per_group == 4
        assert cfg.size_classes == ("XS", "XL")
        assert len(cfg.cells()) == 2 * 3 * 4 * 2 * 2

    @pytest.mark.parametrize(
        "text",
        ["nonsense", "data.bogus = 1", "zzz.n = 1", "data.n_keys = ten", "runs = 0", "a = 1\na = 2", "grid.size_classes = Q"],
    )
    def test_rejects(self, text):
        with pytest.raises(InvalidConfig):
            parse_config(text)

    def test_grid_file_rejects_invalid_pair(self):
        cfg = parse_config("grid.size_classes = XS\ngrid.deltas = 3\n")
        with pytest.raises(InvalidConfig):
            cfg.cells()


class TestCli:
    def test_run_prints_csv(self, capsys):
        assert main(["run", "--scale", "0.05", "--runs", "1", "--size-class", "XS", "--delta", "0"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2 and lines[1].startswith("ExitOnly,100,FPPR,XS,0,1,")

    def test_run_same_seed_same_bytes(self, tmp_path):
        outs = []
        for name in ("a.csv", "b.csv"):
            path = tmp_path / name
            assert main(["run", "--scale", "0.05", "--runs", "2", "--seed", "4", "--out", str(path)]) == 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_per_second_series(self, tmp_path):
        series = tmp_path / "ts.csv"
        assert main(["run", "--scale", "0.05", "--runs", "1", "--out", str(tmp_path / "o.csv"), "--emit-per-second", str(series)]) == 0
        rows = list(csv.DictReader(series.open()))
        assert rows[0]["run"] == "0" and {"time", "live_peers", "groups"} <= set(rows[0])
        assert [float(r["time"]) for r in rows] == sorted(float(r["time"]) for r in rows)

    def test_config_error_exit_code(self, capsys):
        assert main(["run", "--size-class", "XS", "--delta", "3"]) == 2

    def test_io_error_exit_code(self, tmp_path, capsys):
        assert main(["run", "--scale", "0.05", "--runs", "1", "--out", str(tmp_path / "no" / "x.csv")]) == 3
        assert main(["sweep", str(tmp_path / "missing.cfg")]) == 3

    def test_paper_grid_then_sweep(self, tmp_path, capsys):
        grid = tmp_path / "grid.cfg"
        assert main(["paper-grid", "--out", str(grid)]) == 0
        assert "912 cells" in capsys.readouterr().err
        assert len(parse_config(grid.read_text()).cells()) == 912
        small = tmp_path / "small.cfg"
        small.write_text(
            "run.scale = 0.05\nruns = 1\ngrid.scenarios = EnterExit\ngrid.churn = 100\n"
            "grid.modes = NPPR\ngrid.size_classes = XS\ngrid.deltas = 0,2\n"
        )
        out = tmp_path / "sweep.csv"
        assert main(["sweep", str(small), "--out", str(out)]) == 0
        assert out.read_text().count("\n") == 3

    def test_bad_argument_exit_code(self):
        with pytest.raises(SystemExit) as exc:
            with redirect_stdout(io.StringIO()):
                main(["run", "--delta", "x"])
        assert exc.value.code == 2
