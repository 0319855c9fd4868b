import os
import csv
import json
import random
import hashlib
import logging

import torch
import numpy as np


def set_seed(s=4):
    """set seed for controlling randomness"""
    random.seed(s)
    np.random.seed(s)
    torch.manual_seed(s)


def spawn_rngs(seed, count):
    """Independent generators for ``count`` tasks, derived from ``seed`` through ``np.random.SeedSequence``.
    Task ``i`` always gets the same stream no matter in which order the tasks are run."""
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in seq.spawn(count)]


def get_logger(name):
    logger = logging.getLogger(name)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("[%(asctime)s] [%(name)s] %(message)s", datefmt="%Y-%m-%d %H:%M:%S"))
        logger.addHandler(handler)
        logger.setLevel(os.getenv("WQR_LOG_LEVEL", "INFO").upper())
        logger.propagate = False
    return logger


def show_progress(logger):
    # tqdm bars follow the logger verbosity
    return logger.isEnabledFor(logging.INFO)


def join(x, *args):
    return os.path.join(x, *args)


# ============= serialization =============== #


def _to_builtin(x):
    if isinstance(x, dict):
        return {str(k): _to_builtin(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_builtin(v) for v in x]
    if isinstance(x, np.ndarray):
        return _to_builtin(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def dumps_json(obj):
    """canonical JSON: sorted keys, indent 2, floats as shortest round-trip decimals"""
    return json.dumps(_to_builtin(obj), indent=2, sort_keys=True)


def dump_json(obj, path):
    _j = dumps_json(obj)
    with open(path, "w") as f:
        f.write(_j + "\n")
    return _j


def load_json(path):
    with open(path, "r") as f:
        return json.load(f)


def sha256(text):
    if isinstance(text, str):
        text = text.encode()
    return hashlib.sha256(text).hexdigest()


def _cell(v):
    v = _to_builtin(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def read_csv(path):
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, [row for row in reader]


# ============= errors =============== #


class WQRError(Exception):
    """Base class for every error raised by ``wqr``. ``exit_code`` is what the CLI exits with and ``record``
    is the machine readable version written next to the artifacts."""

    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def record(self):
        return _to_builtin({"error": type(self).__name__, "message": self.message, "exit_code": self.exit_code, **self.details})
