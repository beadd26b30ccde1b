"""Regenerate the line-523 fixture: timetable, 200 pings and their manifest.

The pings are one vehicle's consecutive positions from the simulator (with
light GPS noise) covering a complete run of the 28-stop pattern. Run from
the repository root: ``python3 fixtures/make_fixture.py``.
"""
import hashlib
import json
import os

from transit_eta.ingest import PING_COLUMNS
from transit_eta.synth import SynthSpec, generate
from transit_eta.timetable import write_timetable

HERE = os.path.dirname(os.path.abspath(__file__))
N_ROWS = 200


def main():
    spec = SynthSpec(seed=523, lines=("523",), stops_per_line=28, days=("2021-03-11",),
                     noise_sigma=0.1, service_start_s=7 * 3600.0, service_end_s=10 * 3600.0)
    city = generate(spec)
    tt_dir = os.path.join(HERE, "line523")
    os.makedirs(tt_dir, exist_ok=True)
    write_timetable(tt_dir, city.timetable)
    pings = city.pings.sort_values(["vehicle_id", "timestamp"], kind="stable")
    first_vehicle = pings["vehicle_id"].iloc[0]
    rows = pings[pings["vehicle_id"] == first_vehicle].head(N_ROWS)
    path = os.path.join(HERE, "pings_523_small.csv")
    rows[PING_COLUMNS].to_csv(path, index=False, lineterminator="\n")
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    manifest = {
        "file": "pings_523_small.csv",
        "rows": int(len(rows)),
        "sha256": digest,
        "first_timestamp": str(rows["timestamp"].iloc[0]),
        "last_timestamp": str(rows["timestamp"].iloc[-1]),
        "line": "523",
        "stops_in_pattern": 28,
        "generator": {"seed": spec.seed, "noise_sigma": spec.noise_sigma, "day": spec.days[0]},
    }
    with open(os.path.join(HERE, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main()
