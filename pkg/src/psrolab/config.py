"""Run configuration files, named presets and ``key=value`` overrides.

Config files are INI text with three sections.  Every value is a Python
literal (strings quoted, tuples in parentheses)::

    [run]
    game = 'kuhn'
    variant = 'conflux'
    iterations = 15

    [dqn]
    hidden = (64, 64)
    batch_size = 128

    [conflux]
    start = 5

Overrides use dotted keys: ``iterations=2`` or ``run.iterations=2`` for the
run section, ``dqn.batch_size=64``, ``conflux.num_subs=2``.
"""

from __future__ import annotations

import ast
import configparser
import copy
import dataclasses
import io

from psrolab import tables
from psrolab.conflux import ConfluxConfig
from psrolab.errors import ConfigError
from psrolab.nn import DqnHyper
from psrolab.psro import RunConfig

SECTIONS = ("run", "dqn", "conflux")


def _fields(cls, skip=()):
    return [f.name for f in dataclasses.fields(cls) if f.name not in skip]


RUN_KEYS = _fields(RunConfig, skip=("hyper", "conflux"))
DQN_KEYS = _fields(DqnHyper, skip=("extra",))
CONFLUX_KEYS = _fields(ConfluxConfig)


def _table_hyper(t: dict) -> DqnHyper:
    h = DqnHyper(
        hidden=tuple(t["policy_network"]),
        learning_rate=t["learning_rate"],
        gamma=t["discount_factor"],
        epsilon=t["epsilon"],
        batch_size=t["mini_batch_size"],
        buffer_size=t["replay_buffer_size"],
        target_update_every=t["target_update_frequency"],
        num_inferences=t["num_inferences"],
    )
    if "soft_update_ratio" in t:
        h.soft_update = t["soft_update_ratio"]
        h.per_alpha = t["per_alpha"]
        h.per_beta = t["importance_sampling"]
        h.grad_clip = t["gradient_clip"]
        # linear decay to zero over one oracle budget of train steps
        h.lr_decay_steps = t["psro_episodes"]
    return h


def _table_conflux(t: dict) -> ConfluxConfig:
    return ConfluxConfig(start=t["conflux_start"], interval=t["conflux_interval"],
                         num_subs=t["num_subs"], pool_size=t["pool_size"])


def _table_run(game: str, t: dict, **kw) -> RunConfig:
    cfg = RunConfig(game=game, variant="conflux", iterations=50, episodes=t["psro_episodes"],
                    diversity_weight=t["diversity_weight"], hyper=_table_hyper(t),
                    conflux=_table_conflux(t))
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def _kuhn_desk() -> RunConfig:
    """Small-network Kuhn profile sized for a single CPU core."""
    hyper = DqnHyper(hidden=(64, 64), learning_rate=1e-3, gamma=1.0, epsilon=0.05,
                     batch_size=128, buffer_size=5000, target_update_every=20, train_every=2)
    conflux = ConfluxConfig(start=5, interval=2, num_subs=3, pool_size=5)
    return RunConfig(game="kuhn", variant="conflux", iterations=15, episodes=5000,
                     diversity_weight=1.0, matrix_estimator="exact", evaluation="exact",
                     hyper=hyper, conflux=conflux)


def _maze_fixture() -> RunConfig:
    hyper = DqnHyper(hidden=(64, 64), learning_rate=1e-3, epsilon=0.1, batch_size=64,
                     buffer_size=5000, target_update_every=50)
    conflux = ConfluxConfig(start=2, interval=1, num_subs=2, pool_size=2, exploiter_weight=0.0)
    return RunConfig(game="maze", variant="conflux", iterations=3, episodes=300,
                     diversity_weight=1.0, episodes_per_entry=1, evaluation="approx",
                     approx_episodes=300, eval_episodes=50, hyper=hyper, conflux=conflux)


def _presets():
    return {
        "leduc-default": _table_run("leduc", tables.LEDUC),
        "goofspiel5-default": _table_run("goofspiel5", tables.GOOFSPIEL5),
        "liars-dice-default": _table_run("liars_dice", tables.LIARS_DICE, evaluation="approx"),
        "liars-dice-ir-default": _table_run("liars_dice_ir", tables.LIARS_DICE,
                                            evaluation="approx"),
        "leduc-caption": _table_run("leduc", tables.LEDUC,
                                    episodes=tables.CAPTION_EPISODES["leduc"]),
        "goofspiel5-caption": _table_run("goofspiel5", tables.GOOFSPIEL5,
                                         episodes=tables.CAPTION_EPISODES["goofspiel5"]),
        "kuhn-desk": _kuhn_desk(),
        "maze-fixture": _maze_fixture(),
    }


PRESET_NAMES = tuple(_presets())


def preset(name: str) -> RunConfig:
    presets = _presets()
    if name not in presets:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(presets)}")
    return presets[name]


# ------------------------------------------------------------ text format

def dumps(config: RunConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    d = config.to_dict()
    cp["run"] = {k: repr(d[k]) for k in RUN_KEYS}
    hyper = d["hyper"]
    hyper["hidden"] = tuple(hyper["hidden"])
    cp["dqn"] = {k: repr(hyper[k]) for k in DQN_KEYS}
    cp["conflux"] = {k: repr(d["conflux"][k]) for k in CONFLUX_KEYS}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _literal(text: str, key: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise ConfigError(f"value of {key!r} is not a literal: {text!r}") from exc


def loads(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    config = RunConfig()
    for section in cp.sections():
        for key, text in cp[section].items():
            apply_override(config, f"{section}.{key}", _literal(text, f"{section}.{key}"))
    return config


def load(path) -> RunConfig:
    with open(path) as fh:
        return loads(fh.read())


def save(config: RunConfig, path):
    with open(path, "w") as fh:
        fh.write(dumps(config))


# -------------------------------------------------------------- overrides

def _target(config: RunConfig, key: str):
    section, _, name = key.rpartition(".")
    section = section or "run"
    if section == "run" and name in RUN_KEYS:
        return config, name
    if section == "dqn" and name in DQN_KEYS:
        return config.hyper, name
    if section == "conflux" and name in CONFLUX_KEYS:
        return config.conflux, name
    raise ConfigError(f"unknown config key {key!r}")


def apply_override(config: RunConfig, key: str, value):
    obj, name = _target(config, key)
    if name == "hidden":
        value = tuple(value)
    setattr(obj, name, value)


def parse_override(item: str):
    """``'key=value'`` -> (key, value); unquoted non-literals are taken as strings."""
    key, sep, text = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override {item!r} is not key=value")
    text = text.strip()
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        value = text
    return key, value


def with_overrides(config: RunConfig, items) -> RunConfig:
    config = copy.deepcopy(config)
    for item in items:
        apply_override(config, *parse_override(item))
    return config
