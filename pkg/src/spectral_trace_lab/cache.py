"""Text spectrum cache and atomic file writes.

A cache file holds one header line with the schema version, the content
hash and the code version, then one ``k eigenvalue`` pair per line with the
eigenvalue at 17 significant digits so doubles round-trip exactly.
"""

import os
import tempfile
from pathlib import Path

import numpy as np
from filelock import FileLock

from . import __version__
from .spectra import ClusteredSpectrum

CACHE_SCHEMA = "stlab-spectrum/1"


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def serialize_spectrum(spectrum, key):
    solver = spectrum.provenance.get("solver", "unknown")
    lines = [f"# {CACHE_SCHEMA} key={key} version={__version__} k_max_reliable={spectrum.k_max_reliable} "
             f"solver={solver}"]
    for k in sorted(spectrum.clusters):
        for lam in spectrum.clusters[k]:
            lines.append(f"{k} {lam:.17g}")
    return "\n".join(lines) + "\n"


def _parse_header(line):
    parts = line[1:].split()
    fields = dict(p.split("=", 1) for p in parts[1:])
    return parts[0], fields


def deserialize_spectrum(text, key=None):
    """Spectrum from cache text, or None when the header does not match ``key`` and this version."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        return None
    schema, header = _parse_header(lines[0])
    if schema != CACHE_SCHEMA or header.get("version") != __version__:
        return None
    if key is not None and header.get("key") != key:
        return None
    data = np.loadtxt(lines[1:], ndmin=2) if len(lines) > 1 else np.zeros((0, 2))
    ks = data[:, 0].astype(int)
    clusters = {int(k): data[ks == k, 1] for k in np.unique(ks)}
    return ClusteredSpectrum(clusters, int(header["k_max_reliable"]), {"solver": header.get("solver"), "cache": "hit"})


class SpectrumCache:
    """Directory of cached spectra keyed by content hash; writes are file-locked."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def path(self, key):
        return self.directory / f"{key}.txt"

    def load(self, key):
        p = self.path(key)
        if not p.exists():
            return None
        return deserialize_spectrum(p.read_text(encoding="utf-8"), key)

    def get_or_compute(self, key, compute):
        """Return (spectrum, text, hit) for ``key``, computing and storing on a miss."""
        self.directory.mkdir(parents=True, exist_ok=True)
        with FileLock(str(self.path(key)) + ".lock"):
            cached = self.load(key)
            if cached is not None:
                return cached, self.path(key).read_text(encoding="utf-8"), True
            spectrum = compute()
            text = serialize_spectrum(spectrum, key)
            write_atomic(self.path(key), text)
            return spectrum, text, False
