"""Readers and writers for LIBSVM datasets and PGM images."""

import numpy as np
import scipy.sparse as sp


class DataFormatError(ValueError):
    """A data file does not follow its declared format."""


def read_libsvm(path, n_features=None):
    """Read a LIBSVM/SVMlight file into a CSR matrix and a +-1 label vector.

    Parameters
    ----------
    path : str or path-like
    n_features : int, optional
        Column count. Defaults to the largest index present.

    Returns
    -------
    A : scipy.sparse.csr_matrix, shape (n_samples, n_features)
    b : ndarray of +-1
        Labels ``> 0`` map to ``+1``, everything else to ``-1``.

    Raises
    ------
    DataFormatError
        On malformed lines, non-positive or unordered indices, or an empty file.
    """
    labels, rows, cols, vals = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: bad label {parts[0]!r}") from None
            row = len(labels)
            labels.append(1.0 if label > 0 else -1.0)
            last = 0
            for tok in parts[1:]:
                idx, sep, val = tok.partition(":")
                try:
                    j = int(idx)
                    v = float(val)
                except ValueError:
                    j = None
                if not sep or j is None:
                    raise DataFormatError(f"{path}:{lineno}: bad feature token {tok!r}")
                if j <= last:
                    raise DataFormatError(
                        f"{path}:{lineno}: indices must be positive and increasing, got {j}")
                last = j
                rows.append(row)
                cols.append(j - 1)
                vals.append(v)
    if not labels:
        raise DataFormatError(f"{path}: no samples")
    width = (max(cols) + 1) if cols else 0
    if n_features is not None:
        if n_features < width:
            raise DataFormatError(f"{path}: feature index {width} exceeds n_features={n_features}")
        width = n_features
    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(labels), width))
    return A, np.asarray(labels)


def _pgm_tokens(data, count, start):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        if j == i:
            raise DataFormatError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i


def read_pgm(path):
    """Read a P2 (ASCII) or P5 (binary) PGM image scaled to [0, 1].

    Returns
    -------
    ndarray of float, shape (height, width)
    """
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise DataFormatError(f"{path}: not a PGM file (magic {magic!r})")
    try:
        (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise DataFormatError(f"{path}: malformed PGM header") from None
    if w <= 0 or h <= 0 or not 0 < maxval <= 65535:
        raise DataFormatError(f"{path}: invalid PGM size or maxval")
    if magic == b"P5":
        # exactly one whitespace byte separates header and raster
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = w * h * dtype.itemsize
        raster = data[pos:pos + need]
        if len(raster) < need:
            raise DataFormatError(f"{path}: truncated raster")
        pixels = np.frombuffer(raster, dtype=dtype).astype(float)
    else:
        try:
            pixels = np.array([int(t) for t in data[pos:].split()], dtype=float)
        except ValueError:
            raise DataFormatError(f"{path}: non-integer pixel value") from None
        if pixels.size != w * h:
            raise DataFormatError(f"{path}: expected {w * h} pixels, found {pixels.size}")
    if np.any(pixels > maxval):
        raise DataFormatError(f"{path}: pixel value exceeds maxval")
    return pixels.reshape(h, w) / maxval


def write_pgm(path, image, maxval=255):
    """Write an image with values in [0, 1] as binary PGM (values are clipped)."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {image.shape}")
    if not 0 < maxval <= 65535:
        raise ValueError("maxval must lie in (0, 65535]")
    h, w = image.shape
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    pixels = np.rint(np.clip(image, 0.0, 1.0) * maxval).astype(dtype)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(pixels.tobytes())
