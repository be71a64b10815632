import contextlib
import os
import struct
from concurrent.futures import ThreadPoolExecutor, as_completed

import numpy as np
from tqdm import tqdm

from mplab.common.output import verbosity
from mplab.constants import LOCK_FILENAME, MATRIX_MAGIC
from mplab.errors import FormatError, MissingInputError, WorkdirLockedError

# magic, rows, cols; everything little-endian
_HEADER = struct.Struct("<4sII")


def _pack_matrix(matrix):
    matrix = np.asarray(matrix, dtype="<f8")
    if matrix.ndim != 2:
        raise FormatError(f"expected a 2-d matrix, got shape {matrix.shape}")
    rows, cols = matrix.shape
    return _HEADER.pack(MATRIX_MAGIC, rows, cols) + np.ascontiguousarray(matrix).tobytes()


def _unpack_matrix(buf, offset, path):
    if len(buf) - offset < _HEADER.size:
        raise FormatError(f"{path}: truncated header at byte {offset}")
    magic, rows, cols = _HEADER.unpack_from(buf, offset)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte {offset}")
    offset += _HEADER.size
    nbytes = rows * cols * 8
    if len(buf) - offset < nbytes:
        raise FormatError(f"{path}: truncated payload at byte {offset}")
    matrix = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols)
    return matrix.astype(np.float64), offset + nbytes


def write_matrices(path, matrices):
    """
    Write a sequence of 2-d float matrices as concatenated records. Each record is
    the header (magic ``MPLM``, rows and cols as uint32) followed by row-major float64.
    """
    with open(path, "wb") as f:
        for matrix in matrices:
            f.write(_pack_matrix(matrix))


def read_matrices(path):
    if not os.path.isfile(path):
        raise MissingInputError(path, "matrix file")
    with open(path, "rb") as f:
        buf = f.read()
    matrices, offset = [], 0
    while offset < len(buf):
        matrix, offset = _unpack_matrix(buf, offset, path)
        matrices.append(matrix)
    return matrices


def write_transcripts(path, sentences):
    """One sentence per line, tokens separated by single spaces."""
    with open(path, "w", encoding="utf-8") as f:
        for sentence in sentences:
            f.write(" ".join(sentence) + "\n")


def read_transcripts(path):
    if not os.path.isfile(path):
        raise MissingInputError(path, "transcript file")
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f.read().splitlines()]


def process_items(items, process_func, desc, workers=1):
    """
    Run ``process_func(item, idx)`` over items on a thread pool. Results come back
    in input order regardless of completion order.
    """
    items = list(items)
    results = [None] * len(items)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = {executor.submit(process_func, item, idx): idx for idx, item in enumerate(items)}
        for future in tqdm(
            as_completed(futures), total=len(items), desc=desc, colour="cyan", disable=verbosity() < 1, leave=False
        ):
            results[futures[future]] = future.result()
    return results


@contextlib.contextmanager
def workdir_lock(workdir):
    """Hold an exclusive lock file in ``workdir`` for the duration of a command."""
    os.makedirs(workdir, exist_ok=True)
    lock_path = os.path.join(workdir, LOCK_FILENAME)
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise WorkdirLockedError(f"{workdir} is in use by another command (remove {lock_path} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield lock_path
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.remove(lock_path)
