"""Datasets of (parameter, FE solution) pairs and their binary file format.

File layout (little-endian)::

    "PPDE" | version u32 | family tag u8 | p u32 | s u32 | k u32
    | sigma f64 | mu f64 | r f64 | mesh_n u32 | D u32 | count u64 | seed u64
    | count x (p f64 parameters, D f64 coefficients)
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .coefficients import VARIANT_TAGS, ParametricFamily, Variant, parameter_box

MAGIC = b"PPDE"
VERSION = 1
HEADER = struct.Struct("<4sIBIIIdddIIQQ")
DEFAULT_RHS = "20+10x1-5x2"

_TAG_VARIANTS = {tag: v for v, tag in VARIANT_TAGS.items()}


class DatasetFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class SampleSolveError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"FEM solve failed for sample {index}: {cause}")
        self.index = index


def rhs(x1, x2):
    return 20.0 + 10.0 * x1 - 5.0 * x2


@dataclass
class Dataset:
    family: ParametricFamily
    mesh_n: int
    parameters: np.ndarray
    solutions: np.ndarray
    seed: int
    rhs_tag: str = DEFAULT_RHS

    @property
    def D(self) -> int:
        return self.mesh_n * self.mesh_n

    @property
    def p(self) -> int:
        return self.family.p

    def __len__(self) -> int:
        return len(self.parameters)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.family == other.family
            and self.mesh_n == other.mesh_n
            and self.seed == other.seed
            and self.rhs_tag == other.rhs_tag
            and self.parameters.tobytes() == other.parameters.tobytes()
            and self.solutions.tobytes() == other.solutions.tobytes()
        )

    def head(self, count: int) -> "Dataset":
        return Dataset(
            self.family, self.mesh_n, self.parameters[:count], self.solutions[:count],
            self.seed, self.rhs_tag,
        )


@dataclass
class DatasetHeader:
    family: ParametricFamily
    mesh_n: int
    D: int
    count: int
    seed: int
    version: int = field(default=VERSION)

    @property
    def p(self) -> int:
        return self.family.p


class SolutionMap:
    """Discretized parameter-to-solution map for one family on one mesh.

    The mesh, Gram matrix and load vector are built once and shared by all
    solves.
    """

    def __init__(self, family: ParametricFamily, mesh_n: int):
        self.family = family
        self.mesh = fem.build_mesh(mesh_n)
        self.gram = fem.gram_matrix(self.mesh)
        self._centers = self.mesh.barycenters()
        self._assemble = fem.StiffnessAssembler(self.mesh)
        self._load = np.where(self.mesh.boundary_mask, 0.0, fem.load_vector(self.mesh, rhs))

    def system(self, y) -> fem.FemSystem:
        coeff = self.family(y, self._centers)
        return fem.FemSystem(self._assemble(coeff), self._load, self.gram)

    def __call__(self, y) -> np.ndarray:
        return fem.solve(self.system(y))


def generate(family: ParametricFamily, mesh_n: int, count: int, seed: int,
             parameters=None) -> Dataset:
    """Sample parameters and solve the FEM problem for each of them.

    ``parameters`` overrides the sampled draws (used to probe fixed points
    such as the corner ``y = 0``).
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if parameters is None:
        parameters = family.sample(count, seed)
    parameters = np.asarray(parameters, dtype=float).reshape(count, family.p)
    solver = SolutionMap(family, mesh_n)
    solutions = np.empty((count, mesh_n * mesh_n))
    for j, y in enumerate(parameters):
        try:
            solutions[j] = solver(y)
        except Exception as exc:
            raise SampleSolveError(j, exc) from exc
    return Dataset(family, mesh_n, parameters, solutions, seed)


def generate_split(family, mesh_n, n_train, n_test, seed):
    """Train/test pair drawn from the disjoint seeds ``seed`` and ``seed + 1``."""
    return generate(family, mesh_n, n_train, seed), generate(family, mesh_n, n_test, seed + 1)


def _pack_header(d: Dataset) -> bytes:
    f = d.family
    return HEADER.pack(
        MAGIC, VERSION, VARIANT_TAGS[f.variant], f.p, f.s, f.k, f.sigma, f.mu, f.r,
        d.mesh_n, d.D, len(d), d.seed,
    )


def save(dataset: Dataset, path) -> None:
    records = np.hstack([dataset.parameters, dataset.solutions]).astype("<f8", copy=False)
    with open(path, "wb") as fh:
        fh.write(_pack_header(dataset))
        fh.write(records.tobytes())


def _parse_header(raw: bytes) -> DatasetHeader:
    if len(raw) < HEADER.size:
        raise DatasetFormatError(
            f"file too short for header ({len(raw)} < {HEADER.size} bytes)", len(raw)
        )
    magic, version, tag, p, s, k, sigma, mu, r, mesh_n, D, count, seed = HEADER.unpack(
        raw[: HEADER.size]
    )
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version}", 4)
    if tag not in _TAG_VARIANTS:
        raise DatasetFormatError(f"unknown family tag {tag}", 8)
    if D != mesh_n * mesh_n:
        raise DatasetFormatError(f"D={D} does not match mesh_n={mesh_n}", 49)
    try:
        family = ParametricFamily(_TAG_VARIANTS[tag], p=p, mu=mu, sigma=sigma, r=r, s=s, k=k)
    except ValueError as exc:
        raise DatasetFormatError(f"invalid family hyperparameters: {exc}", 9) from exc
    return DatasetHeader(family, mesh_n, D, count, seed, version)


def read_header(path) -> DatasetHeader:
    with open(path, "rb") as fh:
        return _parse_header(fh.read(HEADER.size))


def load(path) -> Dataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    header = _parse_header(raw)
    width = header.p + header.D
    expected = HEADER.size + 8 * width * header.count
    if len(raw) != expected:
        raise DatasetFormatError(
            f"expected {expected} bytes for {header.count} records, found {len(raw)}",
            min(len(raw), expected),
        )
    records = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(header.count, width)
    records = records.astype(np.float64)
    return Dataset(
        header.family, header.mesh_n, records[:, : header.p].copy(),
        records[:, header.p :].copy(), header.seed,
    )


def check_records(dataset: Dataset, gram=None) -> None:
    """Assert the dataset invariants (in-box parameters, zero boundary, |u|_G > 0)."""
    box = parameter_box(dataset.family)
    mesh = fem.build_mesh(dataset.mesh_n)
    gram = fem.gram_matrix(mesh) if gram is None else gram
    for j, (y, u) in enumerate(zip(dataset.parameters, dataset.solutions)):
        if not box.contains(y):
            raise ValueError(f"record {j}: parameters outside the box")
        if np.any(u[mesh.boundary_mask] != 0.0):
            raise ValueError(f"record {j}: nonzero boundary values")
        if fem.gram_norm(u, gram) <= 0.0:
            raise ValueError(f"record {j}: solution has zero Gram norm")


__all__ = [
    "Dataset", "DatasetHeader", "DatasetFormatError", "SampleSolveError", "SolutionMap",
    "Variant", "generate", "generate_split", "save", "load", "read_header", "check_records",
    "rhs",
]
