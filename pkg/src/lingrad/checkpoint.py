"""Binary network checkpoints (``LRN1``).

Layout, all integers little-endian uint32 and all reals little-endian float64::

    b"LRN1"  n_layers
    per layer:
        kind (0 dense, 1 residual)  activation (0 logistic, 1 identity)
        dense:    m_in m_out  W[m_out*m_in] (row-major)  b[m_out]
        residual: depth, then depth x (m_in m_out W b as above),
                  n_skips, then n_skips x (j t rows cols W[rows*cols])
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .net import ACTIVATIONS, Dense, LayerParams, Network, Residual

MAGIC = b"LRN1"


class CheckpointError(ValueError):
    pass


def _pack_params(p: LayerParams) -> bytes:
    return (struct.pack("<II", p.n_in, p.n_out) + p.W.astype("<f8").tobytes()
            + p.b.astype("<f8").tobytes())


def dumps(net: Network) -> bytes:
    out = [MAGIC, struct.pack("<I", len(net.layers))]
    for spec in net.to_layers():
        act = ACTIVATIONS.index(spec.activation)
        if isinstance(spec, Dense):
            out.append(struct.pack("<II", 0, act))
            out.append(_pack_params(spec.params))
        else:
            out.append(struct.pack("<III", 1, act, len(spec.layers)))
            out.extend(_pack_params(p) for p in spec.layers)
            out.append(struct.pack("<I", len(spec.skips)))
            for (j, t), w in sorted(spec.skips.items()):
                out.append(struct.pack("<IIII", j, t, *w.shape))
                out.append(w.astype("<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, raw):
        self.raw, self.pos = raw, 0

    def ints(self, n):
        end = self.pos + 4 * n
        if end > len(self.raw):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack(f"<{n}I", self.raw[self.pos:end])
        self.pos = end
        return vals

    def reals(self, shape):
        count = int(np.prod(shape))
        end = self.pos + 8 * count
        if end > len(self.raw):
            raise CheckpointError("truncated checkpoint")
        arr = np.frombuffer(self.raw, "<f8", count, self.pos).reshape(shape)
        self.pos = end
        return arr.astype(np.float64)

    def params(self):
        m_in, m_out = self.ints(2)
        return LayerParams(self.reals((m_out, m_in)), self.reals((m_out,)))


def loads(raw: bytes) -> Network:
    if raw[:4] != MAGIC:
        raise CheckpointError("not an LRN1 checkpoint")
    r = _Reader(raw)
    r.pos = 4
    (n_layers,) = r.ints(1)
    layers = []
    for _ in range(n_layers):
        kind, act = r.ints(2)
        if act >= len(ACTIVATIONS):
            raise CheckpointError(f"unknown activation tag {act}")
        if kind == 0:
            layers.append(Dense(r.params(), ACTIVATIONS[act]))
        elif kind == 1:
            (depth,) = r.ints(1)
            chain = tuple(r.params() for _ in range(depth))
            (n_skips,) = r.ints(1)
            skips = {}
            for _ in range(n_skips):
                j, t, rows, cols = r.ints(4)
                skips[(j, t)] = r.reals((rows, cols))
            layers.append(Residual(chain, skips, ACTIVATIONS[act]))
        else:
            raise CheckpointError(f"unknown layer kind {kind}")
    if r.pos != len(raw):
        raise CheckpointError(f"{len(raw) - r.pos} trailing bytes")
    return Network(layers)


def save_network(path, net: Network) -> None:
    Path(path).write_bytes(dumps(net))


def load_network(path) -> Network:
    return loads(Path(path).read_bytes())
