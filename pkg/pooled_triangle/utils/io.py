# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import logging
import struct

import numpy as np
from PIL import Image as PILImage

from pooled_triangle.errors import ParameterError
from pooled_triangle.utils.helpers import atomic_path


logger = logging.getLogger("io")

PRNUMAT_MAGIC = b"PRNUMAT1"
PRNUMAT_HEADER = struct.Struct("<8sII")


def write_pgm(path, pixels: np.ndarray) -> None:
    """Writes an 8-bit grayscale matrix as binary PGM (P5)."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ParameterError(f"PGM needs a 2D matrix, got shape {pixels.shape}")
    if pixels.min(initial=0) < 0 or pixels.max(initial=0) > 255:
        raise ParameterError("PGM pixels must lie in [0, 255]")
    im = PILImage.fromarray(pixels.astype(np.uint8), mode="L")
    with atomic_path(path, "wb") as f:
        im.save(f, format="PPM")


def read_pgm(path) -> np.ndarray:
    with PILImage.open(path) as im:
        if im.mode != "L":
            raise ParameterError(f"{path} is not an 8-bit grayscale image ({im.mode})")
        return np.array(im, dtype=np.uint8)


def write_matrix(path, values: np.ndarray) -> None:
    """PRNUMAT1: magic, rows and cols as little-endian uint32, then float64 data."""
    values = np.asarray(values, dtype="<f8")
    if values.ndim != 2:
        raise ParameterError(f"Matrix must be 2D, got shape {values.shape}")
    rows, cols = values.shape
    with atomic_path(path, "wb") as f:
        f.write(PRNUMAT_HEADER.pack(PRNUMAT_MAGIC, rows, cols))
        f.write(np.ascontiguousarray(values).tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(PRNUMAT_HEADER.size)
        if len(header) != PRNUMAT_HEADER.size:
            raise ParameterError(f"{path}: truncated PRNUMAT1 header")
        magic, rows, cols = PRNUMAT_HEADER.unpack(header)
        if magic != PRNUMAT_MAGIC:
            raise ParameterError(f"{path}: bad magic {magic!r}")
        data = f.read()
    if len(data) != rows * cols * 8:
        raise ParameterError(
            f"{path}: expected {rows * cols * 8} bytes of data, found {len(data)}"
        )
    logger.debug(f"Read {rows}x{cols} matrix from {path}")
    return np.frombuffer(data, dtype="<f8").reshape(rows, cols).astype(np.float64)
