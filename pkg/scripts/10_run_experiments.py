#!/usr/bin/env python
"""
Run every experiment against one scenario and collect the CSV results in one directory.
"""

# %%
import argparse
import os

from loguru import logger

from data_shower.experiments import EXPERIMENTS, run_experiment
from data_shower.scenario import apply_override, parse_scenario, read_raw_scenario

# %%
# configure the script

scenario_path = None  # None runs the bundled defaults
out_dir = "out"
seed = None  # None keeps the scenario's seed
runs = 100  # Monte Carlo runs for scheduler-compare and protocol-goodput; the bundled scenario asks for 1000
experiments = list(EXPERIMENTS)

# %%
# parse script arguments from command line
parser = argparse.ArgumentParser(description="Run every data shower experiment.")
parser.add_argument("--f", help="ignore; used by ipykernel_launcher")
parser.add_argument("--scenario", type=str, default=scenario_path, help="Scenario TOML file.")
parser.add_argument("--output", type=str, default=out_dir, help="Directory for the CSV results.")
parser.add_argument("--seed", type=int, default=seed, help="Master seed.")
parser.add_argument("--runs", type=int, default=runs, help="Monte Carlo runs per experiment.")
parser.add_argument("--only", nargs="*", default=experiments, choices=list(EXPERIMENTS), help="Experiments to run.")
args = parser.parse_args()

scenario_path = args.scenario
out_dir = args.output
seed = args.seed
runs = args.runs
experiments = args.only

os.makedirs(out_dir, exist_ok=True)

# %%
# load the scenario and apply the overrides

raw, base_dir = read_raw_scenario(scenario_path)
if seed is not None:
    raw = apply_override(raw, "run.seed", seed)
raw = apply_override(raw, "run.runs", runs)
scenario = parse_scenario(raw, base_dir)
logger.info(f"Scenario sha256 {scenario.sha256}, seed {scenario.run.seed}, {scenario.run.runs} runs")

# %%
# run the experiments

for name in experiments:
    written = run_experiment(name, scenario, out_dir)
    for path in written:
        logger.info(f"{name}: {path}")
