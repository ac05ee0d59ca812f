#!/usr/bin/env python
"""
Generate the synthetic urban trace bundled as boston_like_trace.csv.

The vehicle drives east along a street that passes the tower at 5.02 m, turns north at the next
intersection and drives away, at a constant 1 m/s. Replay it at other speeds with
TraceTrajectory.time_scaled.
"""

# %%
import argparse

import numpy as np
import pandas as pd
from loguru import logger

from data_shower.trajectory import distances_from_positions

# %%
# configure the script

out_path = "../src/data_shower/data/boston_like_trace.csv"
speed = 1.0  # m/s
street_offset = 5.02  # m, perpendicular distance from the tower to the first street
approach = 300.0  # m driven before passing abeam of the tower
turn_x = 20.0  # m, along-track position of the intersection
leg2_length = 295.0  # m driven after the turn

# %%
# parse script arguments from command line
parser = argparse.ArgumentParser(description="Generate the synthetic urban trace.")
parser.add_argument("--f", help="ignore; used by ipykernel_launcher")
parser.add_argument("--output", type=str, default=out_path, help="Path of the trace CSV to write.")
args = parser.parse_args()

out_path = args.output

# %%
# sample both legs once per second

t_turn = (approach + turn_x) / speed
t_end = t_turn + leg2_length / speed
t = np.arange(0.0, t_end + 0.5, 1.0)
on_leg1 = t <= t_turn
x = np.where(on_leg1, -approach + speed * t, turn_x)
y = np.where(on_leg1, street_offset, street_offset + speed * (t - t_turn))

d = distances_from_positions(x, y)
logger.info(f"{len(t)} samples, minimum distance {d.min():.2f} m at t={t[np.argmin(d)]:.0f} s")

# %%
# write the trace

trace = pd.DataFrame({"t_s": t.astype(int), "x_m": x, "y_m": y})
trace.to_csv(out_path, index=False, float_format="%.2f", lineterminator="\n")
logger.info(f"Wrote {len(trace)} samples to {out_path}")
