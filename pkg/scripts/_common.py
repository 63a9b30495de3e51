"""Shared helpers for the experiment scripts."""

import argparse
import dataclasses
import json
from pathlib import Path

from ktpfl.config import parse_config
from ktpfl.experiment import run_experiment

ROOT = Path(__file__).resolve().parent.parent


def parser(description, config="configs/ordering.yaml"):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", default=str(ROOT / config))
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--out", default=str(ROOT / "runs"))
    return p


def load(path):
    return parse_config(path)


def run(cfg, out_dir):
    """Run one config into ``out_dir`` and return its summary dict."""
    res = run_experiment(dataclasses.replace(cfg, output_dir=str(out_dir)))
    return res.summary


def save_json(path, payload):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
