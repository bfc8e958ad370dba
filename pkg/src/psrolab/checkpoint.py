"""Run checkpoints and policy serialization.

Layout under ``<out>/checkpoint``::

    meta.json            format version, iteration, episode count, member records
    config.json          the run configuration the checkpoint belongs to
    policies/            one entry per population member (see ``save_policy``)
    states/              visited-state samples per member (.npz)
    matrix.csv           player-0 payoff means, plus matrix.counts.csv
    sigma_p0.csv         meta-strategy history, one row per iteration
    sigma_p1.csv
"""

from __future__ import annotations

import csv
import json
import os
import shutil
from pathlib import Path

import numpy as np

from psrolab.conflux import RoutingPolicy
from psrolab.errors import CheckpointError
from psrolab.meta import PayoffMatrix
from psrolab.nn import QNetwork
from psrolab.policies import (MAZE_ROUTES, FunctionPolicy, QPolicy, TabularPolicy,
                              UniformPolicy, maze_scripted_policy)
from psrolab.population import Member, Population, StateBuffer

FORMAT_VERSION = 1
DIRNAME = "checkpoint"


def save_policy(policy, directory: Path, stem: str) -> dict:
    """Write ``policy`` under ``directory`` and return its JSON record."""
    directory.mkdir(parents=True, exist_ok=True)
    if isinstance(policy, QPolicy):
        name = f"{stem}.qnet"
        (directory / name).write_bytes(policy.net.to_bytes())
        return {"kind": "dqn", "file": name}
    if isinstance(policy, UniformPolicy):
        return {"kind": "uniform", "num_actions": policy.num_actions}
    if isinstance(policy, RoutingPolicy):
        name = f"{stem}.router.qnet"
        (directory / name).write_bytes(policy.router.to_bytes())
        subs = [save_policy(s, directory, f"{stem}.sub{k}") for k, s in enumerate(policy.subs)]
        return {"kind": "routing", "router": name, "subs": subs,
                "provenance": [int(p) for p in policy.provenance]}
    if isinstance(policy, TabularPolicy):
        name = f"{stem}.tabular.npz"
        keys = list(policy.table)
        with open(directory / name, "wb") as fh:
            np.savez(fh, keys=np.array([np.frombuffer(k, dtype=float) for k in keys]),
                     probs=np.array([policy.table[k] for k in keys]))
        return {"kind": "tabular", "file": name, "num_actions": policy.num_actions}
    if isinstance(policy, FunctionPolicy) and (policy.name in MAZE_ROUTES or
                                               policy.name == "monster"):
        return {"kind": "scripted", "name": policy.name}
    raise CheckpointError(f"cannot serialize {policy!r}")


def load_policy(record: dict, directory: Path):
    kind = record.get("kind")
    if kind == "dqn":
        return QPolicy(QNetwork.from_bytes((directory / record["file"]).read_bytes()))
    if kind == "uniform":
        return UniformPolicy(record["num_actions"])
    if kind == "routing":
        router = QNetwork.from_bytes((directory / record["router"]).read_bytes())
        subs = [load_policy(r, directory) for r in record["subs"]]
        return RoutingPolicy(router, subs, record["provenance"])
    if kind == "tabular":
        with np.load(directory / record["file"]) as data:
            table = {k.tobytes(): p for k, p in zip(data["keys"], data["probs"])}
        return TabularPolicy(record["num_actions"], table)
    if kind == "scripted":
        return maze_scripted_policy(record["name"])
    raise CheckpointError(f"unknown policy kind {kind!r}")


def _save_states(buf: StateBuffer, path: Path):
    with open(path, "wb") as fh:
        np.savez(fh, x=buf.x[:buf.size], mask=buf.mask[:buf.size],
                 meta=np.array([buf.capacity, buf.seen]))


def _load_states(path: Path, feature_size: int, num_actions: int) -> StateBuffer:
    with np.load(path) as data:
        capacity, seen = (int(v) for v in data["meta"])
        buf = StateBuffer(capacity, feature_size, num_actions)
        n = len(data["x"])
        buf.x[:n] = data["x"]
        buf.mask[:n] = data["mask"]
    buf.size, buf.seen = n, seen
    return buf


def _write_rows(path: Path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for r in rows:
            w.writerow([f"{v:.17g}" for v in r])


def _read_rows(path: Path):
    with open(path, newline="") as fh:
        return [np.array([float(v) for v in r]) for r in csv.reader(fh) if r]


def _read_csv(path: Path):
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def exists(out: Path) -> bool:
    return (Path(out) / DIRNAME / "meta.json").exists()


def save(out: Path, config, state):
    """Write the checkpoint atomically: build in a temp dir, then swap it in."""
    out = Path(out)
    final = out / DIRNAME
    tmp = out / (DIRNAME + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    (tmp / "policies").mkdir(parents=True)
    (tmp / "states").mkdir()
    records = [[], []]
    for p in (0, 1):
        for k, m in enumerate(state.population[p]):
            stem = f"p{p}_{k:03d}"
            rec = {"iteration": m.iteration, "tag": m.tag,
                   "policy": save_policy(m.policy, tmp / "policies", stem), "states": None}
            if m.states is not None:
                rec["states"] = f"{stem}.npz"
                _save_states(m.states, tmp / "states" / rec["states"])
            records[p].append(rec)
    state.matrix.save(tmp / "matrix.csv")
    for p in (0, 1):
        _write_rows(tmp / f"sigma_p{p}.csv", [s[p] for s in state.sigmas])
    (tmp / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    meta = {"format_version": FORMAT_VERSION, "iteration": state.iteration,
            "cumulative_episodes": state.cumulative_episodes, "members": records}
    (tmp / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    old = out / (DIRNAME + ".old")
    if final.exists():
        os.replace(final, old)
    os.replace(tmp, final)
    if old.exists():
        shutil.rmtree(old)


def read_meta(out: Path) -> dict:
    path = Path(out) / DIRNAME / "meta.json"
    if not path.exists():
        raise CheckpointError(f"no checkpoint in {out}")
    meta = json.loads(path.read_text())
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"incompatible checkpoint version {version!r}; "
                              f"this build reads version {FORMAT_VERSION}")
    return meta


def read_config(out: Path) -> dict:
    return json.loads((Path(out) / DIRNAME / "config.json").read_text())


def _comparable(d: dict) -> dict:
    d = dict(d)
    d.pop("iterations", None)
    return json.loads(json.dumps(d, sort_keys=True))


def load(out: Path, game, config=None):
    """Load a checkpoint; returns a dict of run components plus stored CSV rows.

    With ``config`` given, everything but the iteration count must match the
    stored configuration.
    """
    out = Path(out)
    meta = read_meta(out)
    root = out / DIRNAME
    if config is not None and _comparable(read_config(out)) != _comparable(config.to_dict()):
        raise CheckpointError(f"checkpoint in {out} was written by a different configuration")
    pop = Population()
    for p in (0, 1):
        for rec in meta["members"][p]:
            states = None
            if rec["states"] is not None:
                states = _load_states(root / "states" / rec["states"], game.feature_size,
                                      game.num_actions)
            pop.append(p, Member(load_policy(rec["policy"], root / "policies"),
                                 rec["iteration"], rec["tag"], states))
    matrix = PayoffMatrix.load(root / "matrix.csv")
    s0, s1 = _read_rows(root / "sigma_p0.csv"), _read_rows(root / "sigma_p1.csv")
    return {
        "population": pop,
        "matrix": matrix,
        "sigmas": list(zip(s0, s1)),
        "iteration": meta["iteration"],
        "cumulative_episodes": meta["cumulative_episodes"],
        "metrics": _read_csv(out / "metrics.csv"),
        "timing": _read_csv(out / "timing.csv"),
    }
