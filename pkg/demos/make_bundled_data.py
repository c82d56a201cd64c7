# %% [markdown]
# # Bundled example data
#
# Regenerates the files in `src/geospline/data/` from fixed seeds:
#
# * `cyclone_tracks.csv`: 30 noisy sphere tracks, ten from each of three
#   two-segment cubic track shapes (subject ids carry the shape name)
# * `tracks_westward.csv`, `tracks_recurving.csv`: two of those groups on their own,
#   handy for the two-sample test
# * `synthetic_hurdat2.txt`: eight made-up storms in the HURDAT2 text layout
#
# Run from the repository root with `python demos/make_bundled_data.py`.

# %%
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from geospline.io import TrajectoryDataset, export_csv, unit_to_latlon
from geospline.manifolds import Sphere
from geospline.synthetic import cyclone_family, cyclone_tracks, noisy_samples, perturb_spline

OUT = Path(__file__).resolve().parent.parent / "src" / "geospline" / "data"
OUT.mkdir(exist_ok=True)

# %% [markdown]
# ## Track CSVs

# %%
rng = np.random.default_rng(20240611)
tracks = cyclone_tracks(rng, per_family=10)
counter = {}
subjects = {}
for family, t, q in tracks:
    counter[family] = counter.get(family, 0) + 1
    subjects[f"{family}_{counter[family]:02d}"] = (t, q)

S2 = Sphere(2)
export_csv(TrajectoryDataset(S2, subjects), OUT / "cyclone_tracks.csv")
for family in ("westward", "recurving"):
    part = {k: v for k, v in subjects.items() if k.startswith(family)}
    export_csv(TrajectoryDataset(S2, part), OUT / f"tracks_{family}.csv")
print(len(subjects), "tracks written")

# %% [markdown]
# ## A HURDAT2-style file
#
# Positions are rounded to 0.1 degree and winds to 5 kt like the real records.
# The wind profile rises to a storm-specific peak and then decays.

# %%
rng = np.random.default_rng(7)
peaks = [45, 60, 75, 90, 105, 120, 140, 55]
names = ["ALPHA", "BRAVO", "CHARLIE", "DELTA", "ECHO", "FOXTROT", "GOLF", "HOTEL"]
families = ["westward", "recurving", "northward"]
lines = []
for i, (name, peak) in enumerate(zip(names, peaks)):
    spline = perturb_spline(cyclone_family(families[i % 3]), np.radians(1.0), rng)
    days = int(rng.integers(4, 9))
    n = 4 * days + 1  # 6-hourly
    s = np.linspace(0.0, 1.0, n)
    lat, lon = unit_to_latlon(noisy_samples(spline, 2 * s, np.radians(0.2), rng))
    wind = 25 + (peak - 25) * np.sin(np.pi * s) ** 1.5
    start = datetime(2021, 8, 1) + timedelta(days=9 * i)
    lines.append(f"AL{i + 1:02d}2021, {name:>18},{n:>7},")
    for k in range(n):
        when = start + timedelta(hours=6 * k)
        la, lo = lat[k], lon[k]
        lat_tok = f"{abs(la):4.1f}{'N' if la >= 0 else 'S'}"
        lon_tok = f"{abs(lo):5.1f}{'W' if lo < 0 else 'E'}"
        w = int(5 * round(wind[k] / 5))
        status = "HU" if w >= 64 else ("TS" if w >= 34 else "TD")
        lines.append(
            f"{when:%Y%m%d}, {when:%H%M},  , {status}, {lat_tok:>5}, {lon_tok:>6}, {w:>3}, "
            f"{1010 - w // 2:>4},    0,    0,    0,    0,    0,    0,    0,    0,    0,    0,    0,    0,"
        )
(OUT / "synthetic_hurdat2.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
print(len(names), "storms written")
