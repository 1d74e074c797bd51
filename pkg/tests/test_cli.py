"""Command line behavior: exit codes, output, and file handling.

Commands run in-process through main(argv) so stdout/stderr and exit
codes can be asserted cheaply; one test shells out to the installed
console script to prove the packaging entry point resolves.
"""

import json
import shutil
import subprocess

import pytest

from stmrnav.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main

SCENE_TEXT = """\
stmr-scene v1
cell_size 5
legend 1 road
legend 2 building
legend 4 grass
under_label 1

height 4 4
0 12 0 0
0 12 0 0
0 12 0 0
0 12 0 0
label 4 4
4 2 1 4
4 2 1 4
4 2 1 4
4 2 1 4
clearance 4 4
0 0 0 0
0 0 0 0
0 0 0 0
0 0 0 0
"""

EP_TMPL = """\
stmr-episode v1
id {eid}
instruction head to the road, then stop.
start 2.5 2.5 10.0 0.0 0.0 0.0
goal {gx} {gy} {gz}
max_actions 4
path 2.5 2.5 10.0 0.0 0.0 0.0
path 2.5 7.5 10.0 0.0 0.0 0.0
"""


def write_episode(path, eid, gx=12.5, gy=12.5, gz=5.0):
    path.write_text(EP_TMPL.format(eid=eid, gx=gx, gy=gy, gz=gz),
                    encoding="utf-8")
    return path


@pytest.fixture()
def data_dir(tmp_path):
    (tmp_path / "riverside.scene").write_text(SCENE_TEXT, encoding="utf-8")
    eps = tmp_path / "eps"
    eps.mkdir()
    write_episode(eps / "ep_a.episode", "ep_a")
    write_episode(eps / "ep_b.episode", "ep_b")
    return tmp_path


def run_cli(*argv):
    return main(list(argv))


class TestRun:
    def test_echo_suite_prints_a_summary_and_writes_traces(self, data_dir,
                                                           capsys):
        out = data_dir / "out"
        code = run_cli("run", "--scene", str(data_dir / "riverside.scene"),
                       "--episodes", str(data_dir / "eps" / "*.episode"),
                       "--backend", "echo", "--out", str(out))
        captured = capsys.readouterr()
        assert code == EXIT_OK
        lines = captured.out.splitlines()
        assert lines[0] == "episodes      NE/m      SR/%     OSR/%"
        assert lines[1].split()[0] == "2"
        assert f"traces and results written to {out}" in captured.out
        assert (out / "results.csv").is_file()
        assert (out / "summary.txt").is_file()
        assert (out / "ep_a" / "step_0" / "prompt.txt").is_file()
        assert (out / "ep_b" / "step_0" / "matrix.txt").is_file()

    def test_missing_scene_is_a_data_error(self, data_dir, capsys):
        code = run_cli("run", "--scene", str(data_dir / "nope.scene"),
                       "--episodes",
                       str(data_dir / "eps" / "ep_a.episode"))
        assert code == EXIT_DATA
        assert "data error" in capsys.readouterr().err

    def test_unmatched_episode_glob_is_a_data_error(self, data_dir,
                                                    capsys):
        code = run_cli("run", "--scene", str(data_dir / "riverside.scene"),
                       "--episodes", str(data_dir / "eps" / "z*.episode"))
        assert code == EXIT_DATA

    def test_unknown_backend_is_a_usage_error(self, data_dir, capsys):
        code = run_cli("run", "--scene", str(data_dir / "riverside.scene"),
                       "--episodes",
                       str(data_dir / "eps" / "ep_a.episode"),
                       "--backend", "ouija")
        assert code == EXIT_USAGE
        assert "configuration error" in capsys.readouterr().err

    def test_out_of_range_tau_is_a_usage_error(self, data_dir, capsys):
        code = run_cli("run", "--scene", str(data_dir / "riverside.scene"),
                       "--episodes",
                       str(data_dir / "eps" / "ep_a.episode"),
                       "--tau", "2.0")
        assert code == EXIT_USAGE

    def test_nonpositive_parallel_is_a_usage_error(self, data_dir):
        code = run_cli("run", "--scene", str(data_dir / "riverside.scene"),
                       "--episodes",
                       str(data_dir / "eps" / "ep_a.episode"),
                       "--parallel", "0")
        assert code == EXIT_USAGE

    def test_config_file_keys_take_effect(self, data_dir, capsys):
        config = data_dir / "loop.json"
        config.write_text(json.dumps({"max_actions": 1}), encoding="utf-8")
        out = data_dir / "out"
        code = run_cli("run", "--scene", str(data_dir / "riverside.scene"),
                       "--episodes",
                       str(data_dir / "eps" / "ep_a.episode"),
                       "--backend", "random", "--config", str(config),
                       "--out", str(out))
        assert code == EXIT_OK
        assert (out / "ep_a" / "step_0").is_dir()
        assert not (out / "ep_a" / "step_1").exists()

    def test_unknown_config_key_is_a_usage_error(self, data_dir, capsys):
        config = data_dir / "loop.json"
        config.write_text(json.dumps({"banana": 1}), encoding="utf-8")
        code = run_cli("run", "--scene", str(data_dir / "riverside.scene"),
                       "--episodes",
                       str(data_dir / "eps" / "ep_a.episode"),
                       "--config", str(config))
        assert code == EXIT_USAGE
        assert "unknown config keys: banana" in capsys.readouterr().err

    def test_non_object_config_is_a_usage_error(self, data_dir, capsys):
        config = data_dir / "loop.json"
        config.write_text("[1, 2]", encoding="utf-8")
        code = run_cli("run", "--scene", str(data_dir / "riverside.scene"),
                       "--episodes",
                       str(data_dir / "eps" / "ep_a.episode"),
                       "--config", str(config))
        assert code == EXIT_USAGE

    def test_missing_config_file_is_a_data_error(self, data_dir, capsys):
        code = run_cli("run", "--scene", str(data_dir / "riverside.scene"),
                       "--episodes",
                       str(data_dir / "eps" / "ep_a.episode"),
                       "--config", str(data_dir / "ghost.json"))
        assert code == EXIT_DATA
        assert "cannot read config" in capsys.readouterr().err


class TestValidate:
    def test_clean_files_report_zero_violations(self, data_dir, capsys):
        code = run_cli("validate", str(data_dir / "riverside.scene"),
                       str(data_dir / "eps" / "ep_a.episode"))
        assert code == EXIT_OK
        assert capsys.readouterr().out == "0 violations\n"

    def test_out_of_bounds_goal_is_flagged(self, data_dir, capsys):
        bad = write_episode(data_dir / "far.episode", "far", gx=50.0,
                            gy=50.0)
        code = run_cli("validate", str(data_dir / "riverside.scene"),
                       str(bad))
        assert code == EXIT_DATA
        out = capsys.readouterr().out
        assert "goal (50, 50) outside scene bounds 20 x 20" in out
        assert out.endswith("1 violations\n")

    def test_underground_goal_is_flagged(self, data_dir, capsys):
        bad = write_episode(data_dir / "deep.episode", "deep", gz=0.0)
        code = run_cli("validate", str(data_dir / "riverside.scene"),
                       str(bad))
        assert code == EXIT_DATA
        assert "goal altitude 0 is not above ground" in \
            capsys.readouterr().out

    def test_unrecognized_header_is_flagged(self, data_dir, capsys):
        stray = data_dir / "notes.txt"
        stray.write_text("just some notes\n", encoding="utf-8")
        code = run_cli("validate", str(stray))
        assert code == EXIT_DATA
        assert "unrecognized header" in capsys.readouterr().out

    def test_malformed_scene_is_reported_with_its_path(self, data_dir,
                                                       capsys):
        broken = data_dir / "broken.scene"
        broken.write_text(SCENE_TEXT.replace("0 12 0 0\n", "0 12 0\n", 1),
                          encoding="utf-8")
        code = run_cli("validate", str(broken))
        assert code == EXIT_DATA
        out = capsys.readouterr().out
        assert str(broken) in out
        assert out.strip().endswith("1 violations")

    def test_episodes_without_a_scene_skip_bounds_checks(self, data_dir,
                                                         capsys):
        code = run_cli("validate", str(data_dir / "eps" / "ep_a.episode"))
        assert code == EXIT_OK
        assert capsys.readouterr().out == "0 violations\n"


class TestDumpMap:
    @pytest.fixture()
    def trace_dir(self, data_dir, capsys):
        out = data_dir / "out"
        assert run_cli("run", "--scene",
                       str(data_dir / "riverside.scene"),
                       "--episodes",
                       str(data_dir / "eps" / "ep_a.episode"),
                       "--backend", "echo", "--out", str(out)) == EXIT_OK
        capsys.readouterr()
        return out / "ep_a"

    def test_ascii_shows_matrix_then_map_with_the_uav(self, trace_dir,
                                                      capsys):
        code = run_cli("dump-map", "--trace", str(trace_dir), "--step",
                       "0")
        assert code == EXIT_OK
        out = capsys.readouterr().out
        matrix_text = (trace_dir / "step_0" / "matrix.txt").read_text(
            encoding="utf-8")
        assert out.startswith(matrix_text)
        assert "@" in out

    def test_pgm_output_is_a_plain_graymap(self, trace_dir, capsys):
        code = run_cli("dump-map", "--trace", str(trace_dir), "--step",
                       "0", "--format", "pgm")
        assert code == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "P2"
        ncols, nrows = (int(v) for v in lines[1].split())
        assert lines[2] == "255"
        assert len(lines) == 3 + nrows
        for row in lines[3:]:
            values = [int(v) for v in row.split()]
            assert len(values) == ncols
            assert all(0 <= v <= 255 for v in values)

    def test_missing_step_is_a_usage_error(self, trace_dir, capsys):
        code = run_cli("dump-map", "--trace", str(trace_dir), "--step",
                       "9")
        assert code == EXIT_USAGE
        assert "no step 9" in capsys.readouterr().err

    def test_incomplete_step_directory_is_a_data_error(self, trace_dir,
                                                       capsys):
        (trace_dir / "step_0" / "matrix.txt").unlink()
        code = run_cli("dump-map", "--trace", str(trace_dir), "--step",
                       "0")
        assert code == EXIT_DATA
        assert "cannot read trace" in capsys.readouterr().err


class TestConsoleScript:
    def test_installed_entry_point_resolves(self, data_dir):
        exe = shutil.which("stmrnav")
        assert exe is not None, "console script not on PATH"
        proc = subprocess.run(
            [exe, "validate", str(data_dir / "riverside.scene")],
            capture_output=True, text=True, timeout=60)
        assert proc.returncode == 0
        assert proc.stdout == "0 violations\n"
