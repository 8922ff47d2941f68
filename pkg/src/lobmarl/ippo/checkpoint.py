"""Checkpoint files.

A checkpoint is a numpy ``.npz`` archive. The ``__header__`` entry holds a
JSON document (format name and version, config hash, update index, the
resolved config and one descriptor per agent group); every other entry is a
float64 array named ``<group>/<param>`` or ``<group>/adam_<m|v>/<param>``,
plus ``<group>/adam_t``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import network as net

FORMAT = "lobmarl-ippo"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict, opts: dict | None, groups, *, config: dict,
                    config_hash: str, update: int) -> None:
    header = {
        "format": FORMAT, "version": VERSION, "config_hash": config_hash, "update": update,
        "groups": [{"name": g.name, "kind": g.kind, "obs_dim": g.obs_dim,
                    "n_actions": g.n_actions, "hidden": net.hidden_size(params[g.name])}
                   for g in groups],
        "config": config,
    }
    arrays = {"__header__": np.array(json.dumps(header, sort_keys=True))}
    for g in groups:
        for k, v in params[g.name].items():
            arrays[f"{g.name}/{k}"] = v
        if opts and g.name in opts:
            o = opts[g.name]
            for k in o.m:
                arrays[f"{g.name}/adam_m/{k}"] = o.m[k]
                arrays[f"{g.name}/adam_v/{k}"] = o.v[k]
            arrays[f"{g.name}/adam_t"] = np.array(o.t)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns (header, params by group name)."""
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    with data:
        if "__header__" not in data.files:
            raise CheckpointError(f"{path}: missing header")
        header = json.loads(str(data["__header__"]))
        if header.get("format") != FORMAT or header.get("version") != VERSION:
            raise CheckpointError(f"{path}: unsupported format {header.get('format')!r} "
                                  f"v{header.get('version')}")
        params = {}
        for g in header["groups"]:
            params[g["name"]] = {k: np.array(data[f"{g['name']}/{k}"]) for k in net.PARAM_NAMES}
    return header, params


def group_descriptor(header: dict, name: str) -> dict:
    for g in header["groups"]:
        if g["name"] == name:
            return g
    raise CheckpointError(f"checkpoint has no agent group {name!r} "
                          f"(has {[g['name'] for g in header['groups']]})")
