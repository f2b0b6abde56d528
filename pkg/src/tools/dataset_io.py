"""Dataset file readers and writers (IDX and CSV)."""

import gzip
import zlib
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import DatasetFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def read_idx(path: str, expected_magic: int) -> np.ndarray:
    """Read an unsigned-byte IDX file (big-endian header, gzip optional)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DatasetFormatError(f"{path}: {e}") from e
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as e:
            raise DatasetFormatError(f"{path}: corrupt gzip stream ({e})") from e
    if len(raw) < 4:
        raise DatasetFormatError(f"{path}: truncated header")

    magic = int.from_bytes(raw[:4], "big")
    if magic != expected_magic:
        raise DatasetFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DatasetFormatError(f"{path}: truncated dimensions")

    dims = tuple(int(d) for d in np.frombuffer(raw, dtype=">u4", count=ndim, offset=4))
    count = int(np.prod(dims))
    if len(raw) - header < count:
        raise DatasetFormatError(f"{path}: expected {count} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def write_idx(array: np.ndarray, path: str) -> Path:
    """Write a uint8 array as IDX (used to build fixtures)."""
    array = np.asarray(array, dtype=np.uint8)
    magic = (0x08 << 8) | array.ndim
    payload = magic.to_bytes(4, "big") + np.asarray(array.shape, dtype=">u4").tobytes() + array.tobytes()
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(gzip.compress(payload) if target.suffix == ".gz" else payload)
    return target


def read_labeled_csv(path: str, label_column: str = "label") -> Tuple[np.ndarray, np.ndarray]:
    """Read a headerful CSV into (features, integer labels)."""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DatasetFormatError(f"{path}: {e}") from e
    if label_column not in frame.columns:
        raise DatasetFormatError(f"{path}: no '{label_column}' column")
    if frame.empty:
        raise DatasetFormatError(f"{path}: no rows")

    try:
        numeric = frame.apply(pd.to_numeric, errors="raise")
    except (ValueError, TypeError) as e:
        raise DatasetFormatError(f"{path}: unparseable cell ({e})") from e
    if numeric.isna().any().any():
        raise DatasetFormatError(f"{path}: empty cell")

    labels = numeric[label_column].to_numpy()
    if np.any(labels != np.round(labels)) or np.any(labels < 0):
        raise DatasetFormatError(f"{path}: labels must be nonnegative integers")
    features = numeric.drop(columns=[label_column]).to_numpy(dtype=np.float64)
    return features, labels.astype(np.int64)


def write_labeled_csv(
    features: np.ndarray,
    labels: Sequence[int],
    path: str,
    label_column: str = "label",
) -> Path:
    frame = pd.DataFrame(features, columns=[f"x{k}" for k in range(np.shape(features)[1])])
    frame[label_column] = labels
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False)
    return target
