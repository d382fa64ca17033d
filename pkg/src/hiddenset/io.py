"""Instance files: one JSON header line, then raw little-endian float64 arrays.

Dense files carry the hidden set (as int64) followed by W (n*n, row-major).
Sparse files carry edges (int64, m*2), labels (uint8) and weights (float64).
The header lists every array with its dtype and shape, in file order.
"""
from __future__ import annotations

import json

import numpy as np

from .instances import DenseInstance, SparseInstance
from .noise import NoiseSpec

FORMAT = "hiddenset-instance"
VERSION = 1


def _noise_header(noise: NoiseSpec) -> dict:
    out = {"family": noise.family, "lambda": noise.lam, "rho": noise.rho}
    if noise.q0 is not None:
        out["q0"] = [list(map(float, a)) for a in noise.q0]
        out["q1"] = [list(map(float, a)) for a in noise.q1]
    return out


def _noise_from_header(h: dict) -> NoiseSpec:
    q0 = tuple(map(tuple, h["q0"])) if "q0" in h else None
    q1 = tuple(map(tuple, h["q1"])) if "q1" in h else None
    return NoiseSpec(h["family"], lam=h["lambda"], rho=h["rho"], q0=q0, q1=q1)


def _write(path, header: dict, arrays: list[tuple[str, np.ndarray, str]]):
    header = dict(header, format=FORMAT, version=VERSION,
                  arrays=[{"name": name, "dtype": dt, "shape": list(a.shape)} for name, a, dt in arrays])
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for _, a, dt in arrays:
            fh.write(np.ascontiguousarray(a, dtype=dt).tobytes(order="C"))


def _read(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != FORMAT:
            raise ValueError(f"{path}: not an instance file")
        arrays = {}
        for spec in header["arrays"]:
            dt = np.dtype(spec["dtype"])
            count = int(np.prod(spec["shape"], dtype=np.int64))
            data = np.frombuffer(fh.read(count * dt.itemsize), dtype=dt)
            if data.size != count:
                raise ValueError(f"{path}: truncated array {spec['name']!r}")
            arrays[spec["name"]] = data.reshape(spec["shape"]).astype(dt.newbyteorder("="))
    return header, arrays


def save_dense(path, inst: DenseInstance):
    header = {"kind": "dense", "n": inst.n, "k": inst.k, "seed": inst.seed,
              "label_mode": "fixed-size", "noise": _noise_header(inst.noise)}
    _write(path, header, [("hidden_set", inst.hidden_set, "<i8"), ("W", inst.W, "<f8")])


def save_sparse(path, inst: SparseInstance):
    header = {"kind": "sparse", "n": inst.n, "delta": inst.delta, "kappa": inst.kappa, "seed": inst.seed,
              "label_mode": inst.sampling_mode, "noise": _noise_header(inst.noise)}
    _write(path, header, [("edges", inst.edges, "<i8"), ("labels", inst.labels, "u1"),
                          ("weights", inst.weights, "<f8")])


def load(path):
    """DenseInstance or SparseInstance, as recorded in the header."""
    header, a = _read(path)
    noise = _noise_from_header(header["noise"])
    if header["kind"] == "dense":
        for x in a.values():
            x.setflags(write=False)
        return DenseInstance(n=header["n"], hidden_set=a["hidden_set"], W=a["W"], seed=header["seed"], noise=noise)
    if header["kind"] == "sparse":
        for x in a.values():
            x.setflags(write=False)
        return SparseInstance(n=header["n"], delta=header["delta"], edges=a["edges"], labels=a["labels"],
                              weights=a["weights"], kappa=header["kappa"], sampling_mode=header["label_mode"],
                              seed=header["seed"], noise=noise)
    raise ValueError(f"{path}: unknown instance kind {header['kind']!r}")
