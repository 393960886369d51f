"""Content-addressed file cache for base streams and spectra.

Entries are keyed by ``(kind, seed, length, version)``; each is an ``.npz``
file with a ``.sha256`` sidecar.  A missing or mismatching checksum means
the entry is regenerated (with a warning).
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import warnings

import numpy as np

CACHE_VERSION = 1


def cache_key(kind, seed, length, version=CACHE_VERSION):
    text = json.dumps({"kind": kind, "seed": seed, "length": length, "version": version}, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


class Cache:
    def __init__(self, root, version=CACHE_VERSION):
        self.root = root
        self.version = version
        os.makedirs(root, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def _paths(self, key):
        base = os.path.join(self.root, key)
        return base + ".npz", base + ".sha256"

    def load(self, kind, seed, length):
        """Arrays of a valid entry, or ``None`` (missing or corrupted)."""
        data_path, sum_path = self._paths(cache_key(kind, seed, length, self.version))
        if not os.path.exists(data_path):
            return None
        with open(data_path, "rb") as fh:
            blob = fh.read()
        expected = open(sum_path).read().strip() if os.path.exists(sum_path) else ""
        if hashlib.sha256(blob).hexdigest() != expected:
            warnings.warn(f"cache entry {os.path.basename(data_path)} failed its checksum; regenerating")
            return None
        with np.load(io.BytesIO(blob)) as z:
            return {k: z[k] for k in z.files}

    def store(self, kind, seed, length, arrays):
        data_path, sum_path = self._paths(cache_key(kind, seed, length, self.version))
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        blob = buf.getvalue()
        with open(data_path, "wb") as fh:
            fh.write(blob)
        with open(sum_path, "w") as fh:
            fh.write(hashlib.sha256(blob).hexdigest())
        return data_path

    def get_or_create(self, kind, seed, length, build):
        """``(arrays, hit)``; ``build()`` returns a dict of arrays on a miss."""
        found = self.load(kind, seed, length)
        if found is not None:
            self.hits += 1
            return found, True
        self.misses += 1
        arrays = build()
        self.store(kind, seed, length, arrays)
        return arrays, False
