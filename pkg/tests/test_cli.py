import json
import os

import pytest

from ncentre import cli
from ncentre.config import parse_config
from ncentre.errors import ParseError, ValidationError

TRIANGLE_CONF = """\
[model]
dimension = 2
centres = 0 0 ; 2 0 ; 1 1.7
strengths = 1 1 1

[energy]
value = 2.0

[integrator]
base_step = 0.002

[scatter_batch]
direction = 1 0
impact_low = -1.2
impact_high = 1.2
count = 6

[symbolic]
m_max = 2
energy = 10.0

[output]
jobs = 1
seed = 3
"""

SINGLE_CONF = """\
[model]
dimension = 2
centres = 0 0
strengths = 1

[energy]
value = 1.5

[integrator]
base_step = 0.002

[scatter_batch]
impact_low = 0.3
impact_high = 1.5
count = 5
"""


class TestParseConfig:
    def test_defaults_filled(self):
        run = parse_config(TRIANGLE_CONF)
        assert run.centres.n == 3
        assert run.gevrey.g == 2.0
        assert run.horizon == 1000.0
        assert run.ladder_jmax == 8

    def test_round_trip_byte_identical(self):
        run = parse_config(TRIANGLE_CONF)
        dump1 = run.dump()
        run2 = parse_config(dump1)
        assert run2.dump() == dump1
        assert run2.content_hash == run.content_hash

    def test_coincident_centres_named(self):
        bad = TRIANGLE_CONF.replace("0 0 ; 2 0 ; 1 1.7", "0 0 ; 0 0 ; 1 1.7")
        with pytest.raises(ValidationError, match="coincident"):
            parse_config(bad)

    def test_zero_strength_rejected(self):
        bad = TRIANGLE_CONF.replace("strengths = 1 1 1", "strengths = 1 0 1")
        with pytest.raises(ValidationError):
            parse_config(bad)

    def test_gevrey_index_must_exceed_one(self):
        bad = TRIANGLE_CONF + "\n[gevrey]\ng = 1.0\n"
        with pytest.raises(ValidationError):
            parse_config(bad)

    def test_syntax_error_has_line(self):
        bad = TRIANGLE_CONF + "\nnot a key value line\n"
        with pytest.raises(ParseError) as err:
            parse_config(bad)
        assert err.value.line is not None

    def test_bad_float_reported(self):
        bad = TRIANGLE_CONF.replace("value = 2.0", "value = twelve")
        with pytest.raises(ParseError, match="energy"):
            parse_config(bad)


class TestScatterBatch:
    def test_single_centre_batch(self, tmp_path):
        run = parse_config(SINGLE_CONF)
        path = cli.run_scatter_batch(run, SINGLE_CONF,
                                     str(tmp_path / "scatter.csv"))
        lines = [ln for ln in open(path) if not ln.startswith("#")]
        header = lines[0].strip().split(",")
        rows = [ln.strip().split(",") for ln in lines[1:]]
        assert len(rows) == 5
        i_class = header.index("class")
        i_tau = header.index("tau")
        for row in rows:
            assert row[i_class] == "Scattering"
            assert abs(float(row[i_tau])) < 1e-7

    def test_parallel_byte_identical(self, tmp_path):
        run = parse_config(TRIANGLE_CONF)
        p1 = cli.run_scatter_batch(run, TRIANGLE_CONF,
                                   str(tmp_path / "s1.csv"), jobs=1)
        p8 = cli.run_scatter_batch(run, TRIANGLE_CONF,
                                   str(tmp_path / "s8.csv"), jobs=8)
        assert open(p1, "rb").read() == open(p8, "rb").read()

    def test_classify_batch(self, tmp_path):
        run = parse_config(TRIANGLE_CONF)
        path = cli.run_classify_batch(run, TRIANGLE_CONF,
                                      str(tmp_path / "cls.csv"))
        lines = [ln for ln in open(path) if not ln.startswith("#")]
        assert len(lines) == 1 + run.batch_count

    def test_header_embeds_config_hash(self, tmp_path):
        run = parse_config(TRIANGLE_CONF)
        path = cli.run_scatter_batch(run, TRIANGLE_CONF,
                                     str(tmp_path / "s.csv"))
        first = open(path).readline()
        assert first.startswith("# config-hash: ")
        assert run.content_hash in first


class TestOrbitAtlas:
    def test_two_centre_single_class(self, tmp_path):
        conf = """\
[model]
dimension = 2
centres = -1 0 ; 1 0
strengths = 1 1

[energy]
value = 1.0

[symbolic]
m_max = 2
energy = 1.0
"""
        run = parse_config(conf)
        report, full = cli.run_orbit_atlas(run, str(tmp_path))
        assert full
        atlas = json.load(open(tmp_path / "atlas.json"))
        assert len(atlas["orbits"]) == 1
        assert atlas["orbits"][0]["word"] == [1, 2]
        assert atlas["h_est"] == 0.0

    def test_atlas_rerun_deterministic(self, tmp_path):
        run = parse_config(TRIANGLE_CONF)
        os.makedirs(tmp_path / "a")
        os.makedirs(tmp_path / "b")
        cli.run_orbit_atlas(run, str(tmp_path / "a"))
        cli.run_orbit_atlas(run, str(tmp_path / "b"))
        for name in ("atlas.json", "entropy.csv"):
            a = open(tmp_path / "a" / name, "rb").read()
            b = open(tmp_path / "b" / name, "rb").read()
            assert a == b

    def test_triangle_classes_attempted(self, tmp_path):
        conf = TRIANGLE_CONF.replace("m_max = 2", "m_max = 3")
        run = parse_config(conf)
        report, full = cli.run_orbit_atlas(run, str(tmp_path))
        # (12),(13),(23) and (123),(132): five classes in total.
        assert sum(r.attempted for r in report.rows) == 5
        assert full


class TestCheckSuite:
    def test_default_config_passes(self, tmp_path):
        run = parse_config(TRIANGLE_CONF)
        out, passed = cli.run_check_suite(run, str(tmp_path / "check.json"))
        assert passed, {k: v for k, v in out["checks"].items()
                        if not v["passed"]}
        assert "bracket_f0_f1_relative" in out["checks"]

    def test_coarse_tolerance_fails_energy_check(self, tmp_path):
        coarse = TRIANGLE_CONF.replace("base_step = 0.002",
                                       "base_step = 0.05") \
            + "\n[integrator]\nenergy_tol = 1e-14\n"
        # configparser forbids duplicate sections; patch differently:
        coarse = TRIANGLE_CONF.replace(
            "[integrator]\nbase_step = 0.002",
            "[integrator]\nbase_step = 0.05\nenergy_tol = 1e-13")
        run = parse_config(coarse)
        out, passed = cli.run_check_suite(run, str(tmp_path / "check.json"))
        assert not passed
        assert not out["checks"]["energy_drift"]["passed"]


class TestIntegralsReport:
    def test_small_report(self, tmp_path):
        run = parse_config(TRIANGLE_CONF)
        out = cli.run_integrals_report(run, str(tmp_path / "integrals.json"),
                                       n_bracket=1, n_rank=1)
        assert out["rank_fraction_full"] == 1.0
        assert all(v < 1e-4 for v in out["brackets_relative"]["f0_f1"])
        data = json.load(open(tmp_path / "integrals.json"))
        assert data["config_hash"] == run.content_hash


class TestMain:
    def test_dump_config_round_trip(self, tmp_path, capsys):
        conf_path = tmp_path / "run.conf"
        conf_path.write_text(TRIANGLE_CONF)
        assert cli.main(["dump-config", "--config", str(conf_path)]) == 0
        dumped = capsys.readouterr().out
        assert parse_config(dumped).dump() == dumped

    def test_scatter_command(self, tmp_path):
        conf_path = tmp_path / "run.conf"
        conf_path.write_text(SINGLE_CONF)
        rc = cli.main(["scatter", "--config", str(conf_path),
                       "--out", str(tmp_path / "out")])
        assert rc == 0
        assert (tmp_path / "out" / "scatter.csv").exists()

    def test_bad_config_exit_code(self, tmp_path):
        conf_path = tmp_path / "bad.conf"
        conf_path.write_text(TRIANGLE_CONF.replace("1 1 1", "1 0 1"))
        assert cli.main(["scatter", "--config", str(conf_path)]) == 2
