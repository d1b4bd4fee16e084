"""Desk-scale denoising run: train, bake, fine-tune, score held-out images."""
import argparse
import json
import logging
from dataclasses import fields, replace

from dnlut.experiments import DESK, desk_denoise

p = argparse.ArgumentParser()
p.add_argument("--iters", type=int, default=DESK.iterations)
p.add_argument("--finetune-iters", type=int, default=2000)
p.add_argument("--seed", type=int, default=DESK.seed)
p.add_argument("--log-every", type=int, default=1000)
p.add_argument("--save", help="folder for the checkpoint and both table sets")
a = p.parse_args()
logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
run = desk_denoise(replace(DESK, iterations=a.iters, seed=a.seed), a.finetune_iters, a.log_every)
if a.save:
    run.net.save(f"{a.save}/float.dnwt")
    run.lut.save(f"{a.save}/lut")
    run.finetuned.save(f"{a.save}/lut_ft")
out = {f.name: getattr(run, f.name) for f in fields(run) if f.repr}
print(json.dumps(out | {"gain_db": run.gain_db}, indent=2))
