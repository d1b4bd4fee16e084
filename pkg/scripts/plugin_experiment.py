"""PCM plug-in experiment: L-only base vs base with a trained PCM stage in front, on correlated noise."""
import argparse
import json
import logging
from dataclasses import asdict

from dnlut.experiments import PLUGIN_RHO, plugin_experiment

p = argparse.ArgumentParser()
p.add_argument("--base-iters", type=int, default=4000)
p.add_argument("--plug-iters", type=int, default=4000)
p.add_argument("--rho", type=float, default=PLUGIN_RHO)
p.add_argument("--sigma", type=float, default=25.0)
p.add_argument("--seed", type=int, default=0)
a = p.parse_args()
logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
run = plugin_experiment(a.base_iters, a.plug_iters, a.sigma, a.rho, a.seed)
print(json.dumps(asdict(run) | {"gain_db": run.gain_db}, indent=2))
