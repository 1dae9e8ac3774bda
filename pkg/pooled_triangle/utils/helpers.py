# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import contextlib
import dataclasses
import enum
import json
import os
import tempfile
from typing import Iterator

import numpy as np
import pandas as pd


# Stream keys for derive_rng; appending new keys never changes existing streams
STREAM_SUBSETS_EVE = 1
STREAM_SETUP_A = 2
STREAM_SETUP_A_H0 = 3
STREAM_SYNTH = 4


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by (seed, *keys).

    The same key path always yields the same stream, independently of the order
    or the process in which streams are requested.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def derive_seed(seed: int, *keys: int) -> int:
    """Integer seed of the stream (seed, *keys), for APIs that take plain seeds."""
    state = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)
    return int(state[0])


def to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        fields = dataclasses.fields(obj)
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in fields}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


@contextlib.contextmanager
def atomic_path(path, mode="w") -> Iterator:
    """Yields a file handle on a temp file that replaces `path` on success."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".partial")
    try:
        with os.fdopen(fd, mode) as f:
            yield f
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def dumps_json(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)


def write_json_atomic(path, obj) -> None:
    with atomic_path(path) as f:
        f.write(dumps_json(obj) + "\n")


def read_json(path) -> dict:
    with open(path) as f:
        return json.load(f)


def write_csv_atomic(path, rows, columns=None) -> None:
    df = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows, columns=columns)
    with atomic_path(path) as f:
        df.to_csv(f, index=False, float_format="%.17g")
