import math

import numpy as np
import pandas as pd
import pytest

from transit_eta.errors import DanglingScheduleKey, DanglingStopRef, NoScheduledRun, UnknownLine
from transit_eta.timetable import (LineGroup, Schedule, group_of, load_timetable, load_timetable_dir,
                                   schedule_eta, write_timetable)


def write_tt(tmp_path, stops, patterns, schedule):
    for name, rows, header in (("stops", stops, "stop_id,lat,lon"),
                               ("patterns", patterns, "line,direction,seq,stop_id"),
                               ("schedule", schedule, "line,direction,seq,run,depart_seconds")):
        (tmp_path / f"{name}.csv").write_text(header + "\n" + "".join(r + "\n" for r in rows))
    return [str(tmp_path / f"{n}.csv") for n in ("stops", "patterns", "schedule")]


def sched(rows):
    return Schedule.from_frame(pd.DataFrame(rows, columns=["line", "direction", "seq", "run", "depart_seconds"]))


class TestLoad:
    def test_minimal_two_stop_line(self, tmp_path):
        paths = write_tt(tmp_path, ["S1,52.2,21.0", "S2,52.21,21.0"],
                         ["523,A,1,S1", "523,A,2,S2"], ["523,A,1,0,36000", "523,A,2,0,36120"])
        tt = load_timetable(*paths)
        assert len(tt.pattern("523", "A")) == 2
        assert tt.schedule.departures("523", "A", 2).tolist() == [36120.0]
        assert tt.cumulative_m("523", "A")[-1] == pytest.approx(0.01 * math.pi / 180 * 6_371_000, rel=1e-6)

    def test_dangling_stop(self, tmp_path):
        paths = write_tt(tmp_path, ["S1,52.2,21.0"], ["523,A,1,S1", "523,A,2,X99"], ["523,A,1,0,36000"])
        with pytest.raises(DanglingStopRef, match="X99"):
            load_timetable(*paths)

    def test_dangling_schedule_key(self, tmp_path):
        paths = write_tt(tmp_path, ["S1,52.2,21.0", "S2,52.21,21.0"],
                         ["523,A,1,S1", "523,A,2,S2"], ["523,A,3,0,36000"])
        with pytest.raises(DanglingScheduleKey):
            load_timetable(*paths)

    def test_synthetic_30_stop_line(self, tmp_path):
        from transit_eta.synth import SynthSpec, generate
        spec = SynthSpec(seed=1, lines=("523",), stops_per_line=30, days=("2021-03-11",),
                         service_start_s=6 * 3600.0, service_end_s=6 * 3600.0 + 60 * 900.0 - 1)
        city = generate(spec, emit_pings=False)
        write_timetable(tmp_path, city.timetable)
        tt = load_timetable_dir(tmp_path)
        assert len(tt.pattern("523", "A")) == 30
        assert len(tt.schedule.departures("523", "A", 1)) == 60

    def test_write_load_round_trip(self, tmp_path, small_city):
        write_timetable(tmp_path, small_city.timetable)
        tt = load_timetable_dir(tmp_path)
        assert tt.patterns == small_city.timetable.patterns
        for key, e in small_city.timetable.schedule.entries.items():
            np.testing.assert_array_equal(tt.schedule.entries[key].times, e.times)


class TestScheduleEta:
    def test_direct_lookup(self):
        s = sched([("1", "A", 1, 0, 36000), ("1", "A", 2, 0, 36200), ("1", "A", 3, 0, 36400),
                   ("1", "A", 4, 0, 36600)])
        assert schedule_eta(s, "1", "A", 1, 4, 36010) == 600

    def test_single_hop(self):
        s = sched([("1", "A", 1, 0, 36000), ("1", "A", 2, 0, 36090)])
        assert schedule_eta(s, "1", "A", 1, 2, 36000) == 90

    def test_nearest_run_between_two(self):
        s = sched([("1", "A", 1, 0, 36000), ("1", "A", 1, 1, 37200),
                   ("1", "A", 2, 0, 36100), ("1", "A", 2, 1, 37500)])
        assert schedule_eta(s, "1", "A", 1, 2, 36500) == 100
        assert schedule_eta(s, "1", "A", 1, 2, 36700) == 300

    def test_tie_goes_to_earlier_run(self):
        s = sched([("1", "A", 1, 0, 36000), ("1", "A", 1, 1, 37000),
                   ("1", "A", 2, 0, 36100), ("1", "A", 2, 1, 37300)])
        assert schedule_eta(s, "1", "A", 1, 2, 36500) == 100

    def test_additivity_along_a_run(self):
        rows = [("1", "A", k, 0, 36000 + 95 * (k - 1) + k * k) for k in range(1, 9)]
        s = sched(rows)
        total = schedule_eta(s, "1", "A", 1, 8, 36000)
        parts = sum(schedule_eta(s, "1", "A", k, k + 1, s.departures("1", "A", k)[0]) for k in range(1, 8))
        assert total == parts

    def test_no_run_nearby(self):
        s = sched([("1", "A", 1, 0, 36000), ("1", "A", 2, 0, 36100)])
        with pytest.raises(NoScheduledRun):
            schedule_eta(s, "1", "A", 1, 2, 36000 + 3 * 3600)

    def test_run_matrix(self):
        s = sched([("1", "A", 1, 0, 100), ("1", "A", 1, 1, 200), ("1", "A", 2, 0, 150)])
        runs, times = s.run_matrix("1", "A", 2)
        assert runs.tolist() == [0, 1]
        np.testing.assert_array_equal(times, [[100, 150], [200, np.nan]])


class TestGroups:
    @pytest.mark.parametrize("line,group", [("523", LineGroup.LONG_PERIPHERY_WEST_EAST), ("158", LineGroup.EXPRESS),
                                            ("111", LineGroup.CENTRE_PRAGA), ("172", LineGroup.SHORT_PERIPHERY)])
    def test_builtin_groups(self, line, group):
        assert group_of(line) is group

    def test_group_numbers(self):
        assert int(group_of("523")) == 2 and int(group_of("158")) == 5

    def test_unknown_line(self):
        with pytest.raises(UnknownLine):
            group_of("999")

    def test_extra_assignment(self):
        assert group_of("999", {"999": LineGroup.SHORT_CENTRE}) is LineGroup.SHORT_CENTRE
