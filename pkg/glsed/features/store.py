import hashlib
import logging
import struct
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MAGIC = b"GSED"
VERSION = 1
HEADER = struct.Struct("<4sIII")


class FeatureFormatError(ValueError):
    pass


def write_matrix(path: Union[str, Path], matrix: np.ndarray) -> str:
    """
    Write a 2-D grid as header (magic, version, rows, cols) + row-major little-endian float32.
    :return digest: (str) sha1 of the written bytes.
    """
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    assert matrix.ndim == 2, "only 2-D grids are stored"
    payload = HEADER.pack(MAGIC, VERSION, matrix.shape[0], matrix.shape[1]) + matrix.tobytes()
    Path(path).write_bytes(payload)
    return hashlib.sha1(payload).hexdigest()


def read_matrix(path: Union[str, Path]) -> np.ndarray:
    payload = Path(path).read_bytes()
    if len(payload) < HEADER.size:
        raise FeatureFormatError(f"{path}: truncated header")
    magic, version, rows, cols = HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FeatureFormatError(f"{path}: unsupported version {version}")
    expected = HEADER.size + rows * cols * 4
    if len(payload) != expected:
        raise FeatureFormatError(f"{path}: expected {expected} bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f4", offset=HEADER.size).reshape(rows, cols).astype(np.float32)


def write_probabilities(path: Union[str, Path], clip_probs: np.ndarray, frame_probs: np.ndarray) -> str:
    """Row 0 holds the clip-level probabilities, rows 1.. the frame-level ones."""
    return write_matrix(path, np.vstack([clip_probs[None, :], frame_probs]))


def read_probabilities(path: Union[str, Path]):
    matrix = read_matrix(path)
    return matrix[0], matrix[1:]


def storage_name(clip_id: str) -> str:
    return Path(clip_id).stem + ".bin"


class FeatureStore:
    """
    Directory of per-clip feature containers plus an index TSV (clip_id, file, rows, cols, sha1).
    :param root: (str / Path) store directory.
    """

    INDEX = "index.tsv"

    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root)
        self.__cache: Dict[str, np.ndarray] = {}
        self.__index: Optional[pd.DataFrame] = None

    @property
    def index(self) -> pd.DataFrame:
        if self.__index is None:
            path = self.root / self.INDEX
            if not path.exists():
                raise FileNotFoundError(f"no feature index at {path}; run extract first")
            self.__index = pd.read_csv(path, sep="\t", dtype={"clip_id": str, "file": str, "sha1": str})
            self.__index = self.__index.set_index("clip_id", drop=False)
        return self.__index

    def __contains__(self, clip_id: str) -> bool:
        return clip_id in self.index.index

    def put(self, clip_id: str, features: np.ndarray) -> dict:
        self.root.mkdir(parents=True, exist_ok=True)
        name = storage_name(clip_id)
        digest = write_matrix(self.root / name, features)
        return {"clip_id": clip_id, "file": name, "rows": features.shape[0], "cols": features.shape[1],
                "sha1": digest}

    def write_index(self, rows: Iterable[dict]) -> None:
        frame = pd.DataFrame(list(rows), columns=["clip_id", "file", "rows", "cols", "sha1"])
        frame = frame.sort_values("clip_id")
        frame.to_csv(self.root / self.INDEX, sep="\t", index=False)
        self.__index = None

    def get(self, clip_id: str) -> np.ndarray:
        if clip_id not in self.__cache:
            self.__cache[clip_id] = read_matrix(self.root / self.index.loc[clip_id, "file"])
        return self.__cache[clip_id]

    def stack(self, clip_ids: Sequence[str]) -> np.ndarray:
        """N x T x F array for the given clips."""
        missing = [c for c in clip_ids if c not in self]
        if missing:
            raise KeyError(f"{len(missing)} clips have no features, e.g. {missing[:3]}")
        return np.stack([self.get(c) for c in clip_ids]).astype(np.float32)

    def clip_ids(self) -> List[str]:
        return self.index["clip_id"].tolist()
