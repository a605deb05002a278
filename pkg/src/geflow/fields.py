"""Weights on the model fibrations: storage, jets, admissibility, dumps.

A weight is stored as

    phi = reference + psi,

where ``psi`` is a genuinely periodic real grid function and the reference
part is kept symbolic so that nothing non-periodic ever touches a stencil:

* torus fiber:       reference = kappa * |v|^2 / 2
* projective fiber:  reference = kappa * log(1 + |w|^2)   (Fubini-Study)

plus an optional constant-curvature base twist with Hermitian coefficient
matrix Q, whose only surviving jet is the constant block phi_{alpha betabar}
+= Q.  The twist models a pulled-back line bundle carrying a flat
(Hermitian-Einstein) metric on the base and is what makes scenarios with a
nonzero topological constant representable on periodic storage.

Every operation downstream consumes second- and third-order jets only; those
are periodic for any admissible weight, so plain periodic stencils apply.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FieldFormatError, NonAdmissibleError
from .grid import PROJECTIVE, TORUS, GridSpec

MAGIC = b"GEFLD1"
MAX_RANK = 6

# Fiber-Hessian positivity guard used before any inversion.
POSITIVITY_FLOOR = 1e-6


def _as_base_curvature(m: int, value) -> np.ndarray | None:
    if value is None:
        return None
    q = np.asarray(value, dtype=complex)
    if q.shape == () and m == 1:
        q = q.reshape(1, 1)
    if q.shape != (m, m):
        raise ConfigurationError(f"base curvature must be {m}x{m}, got {q.shape}")
    if np.max(np.abs(q - q.conj().T)) > 1e-12:
        raise ConfigurationError("base curvature twist must be Hermitian")
    return q


@dataclass
class JetTensor:
    """All second-order blocks of a weight at a single grid point.

    ``pbb`` is phi_{alpha betabar} (m x m Hermitian), ``pbf`` is
    phi_{alpha vbar} (m x n), ``pff`` is phi_{v vbar} (n x n Hermitian
    positive).  ``dvbar_horizontal`` holds the third-order data
    d/dvbar (phi_{alpha vbar} phi^{vbar v}) entering the Kodaira-Spencer
    action.
    """

    point: tuple[int, ...]
    pbb: np.ndarray
    pbf: np.ndarray
    pff: np.ndarray
    dvbar_horizontal: np.ndarray


class JetField:
    """Second (and third, on demand) order jets over the whole grid."""

    def __init__(self, grid: GridSpec, pbb, pbf, pff):
        self.grid = grid
        self.pbb = pbb          # (m, m, *shape) complex
        self.pbf = pbf          # (m, *shape) complex
        self.pff = pff          # (*shape) float
        self._dvbar_n = None

    def fiber_positivity_margin(self) -> float:
        """min over the grid of the fiber Hessian in reference-normalized units."""
        return float(np.min(self.pff * self._fiber_normalizer()))

    def _fiber_normalizer(self):
        if self.grid.fiber_kind == PROJECTIVE:
            t = self.grid.fiber_tan()
            return (1.0 + t * t) ** 2
        return 1.0

    def require_positive(self):
        norm = self.pff * self._fiber_normalizer()
        idx = np.unravel_index(np.argmin(norm), norm.shape)
        if norm[idx] < POSITIVITY_FLOOR:
            raise NonAdmissibleError(idx, self.pff[idx])

    def horizontal_lift_coeff(self) -> np.ndarray:
        """N_alpha = phi_{alpha vbar} / phi_{v vbar} (n = 1 scalar division)."""
        return self.pbf / self.pff

    def dvbar_horizontal(self) -> np.ndarray:
        """d/dvbar of the assembled N_alpha field (third-order jets).

        Differentiating the assembled product keeps one stencil order of
        error out of the Kodaira-Spencer action.
        """
        if self._dvbar_n is None:
            n = self.horizontal_lift_coeff()
            fiber = self.grid.base_dim
            self._dvbar_n = np.stack(
                [self.grid.d_dzbar(n[a], fiber) for a in range(self.grid.base_dim)]
            )
        return self._dvbar_n


class MetricField:
    """A weight phi = reference(kappa, Q) + psi on the chosen scenario grid."""

    def __init__(self, grid: GridSpec, kappa: float, psi=None, base_curvature=None,
                 label: str = "custom"):
        if kappa <= 0:
            raise ConfigurationError(f"kappa must be positive, got {kappa}")
        self.grid = grid
        self.kappa = float(kappa)
        if psi is None:
            psi = np.zeros(grid.shape)
        psi = np.asarray(psi, dtype=float)
        if psi.shape != grid.shape:
            raise ConfigurationError(
                f"psi shape {psi.shape} does not match grid {grid.shape}"
            )
        self.psi = psi
        self.base_curvature = _as_base_curvature(grid.base_dim, base_curvature)
        self.label = label
        self._jets: JetField | None = None

    # -- constructors ----------------------------------------------------

    def with_psi(self, psi: np.ndarray) -> "MetricField":
        return MetricField(self.grid, self.kappa, psi, self.base_curvature, self.label)

    def shifted(self, delta: np.ndarray | float) -> "MetricField":
        return self.with_psi(self.psi + delta)

    def copy(self) -> "MetricField":
        return self.with_psi(self.psi.copy())

    # -- compatibility -----------------------------------------------------

    def compatible_with(self, other: "MetricField") -> bool:
        same_q = (
            (self.base_curvature is None and other.base_curvature is None)
            or (
                self.base_curvature is not None
                and other.base_curvature is not None
                and np.array_equal(self.base_curvature, other.base_curvature)
            )
        )
        return (
            self.grid == other.grid and self.kappa == other.kappa and same_q
        )

    def require_compatible(self, other: "MetricField"):
        if not self.compatible_with(other):
            raise ConfigurationError(
                "weights live on different scenarios (grid/kappa/base twist differ)"
            )

    def relative_to(self, other: "MetricField") -> np.ndarray:
        """The globally defined periodic function phi - psi_other."""
        self.require_compatible(other)
        return self.psi - other.psi

    # -- reference jets ----------------------------------------------------

    def reference_fiber_hessian(self):
        if self.grid.fiber_kind == TORUS:
            return 0.5 * self.kappa
        t = self.grid.fiber_tan()
        return self.kappa / (1.0 + t * t) ** 2

    # -- jets ---------------------------------------------------------------

    def jets(self) -> JetField:
        if self._jets is not None:
            return self._jets
        g = self.grid
        m = g.base_dim
        fiber = m
        psi = self.psi
        pbb = np.empty((m, m) + g.shape, dtype=complex)
        dbar_cache = [g.d_dzbar(psi, b) for b in range(m)]
        for a in range(m):
            for b in range(m):
                pbb[a, b] = g.d_dz(dbar_cache[b], a)
        if self.base_curvature is not None:
            pbb += self.base_curvature.reshape((m, m) + (1,) * len(g.shape))
        dbar_fiber = g.d_dzbar(psi, fiber)
        pbf = np.stack([g.d_dz(dbar_fiber, a) for a in range(m)])
        pff_c = g.d_dz(dbar_fiber, fiber)
        ref = self.reference_fiber_hessian()
        pff = np.real(pff_c) + ref
        self._jets = JetField(g, pbb, pbf, pff)
        return self._jets

    def is_admissible(self) -> bool:
        return self.jets().fiber_positivity_margin() >= POSITIVITY_FLOOR

    def require_admissible(self):
        self.jets().require_positive()

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.psi)))


def jet_at(field: MetricField, point: tuple[int, ...]) -> JetTensor:
    """Assemble the jet blocks of ``field`` at one grid point.

    Raises NonAdmissibleError carrying the point and smallest fiber-Hessian
    eigenvalue if positivity fails there.
    """
    jets = field.jets()
    point = tuple(int(i) for i in point)
    if len(point) != len(field.grid.shape):
        raise ConfigurationError("point must index every real axis of the grid")
    pff_here = jets.pff[point]
    norm = jets._fiber_normalizer()
    scale = norm[point[-2], point[-1]] if isinstance(norm, np.ndarray) else norm
    if pff_here * scale < POSITIVITY_FLOOR:
        raise NonAdmissibleError(point, pff_here)
    m = field.grid.base_dim
    pbb = np.array([[jets.pbb[(a, b) + point] for b in range(m)] for a in range(m)])
    pbf = np.array([[jets.pbf[(a,) + point]] for a in range(m)])
    pff = np.array([[pff_here]])
    third = np.array([jets.dvbar_horizontal()[(a,) + point] for a in range(m)])
    return JetTensor(point, pbb, pbf, pff, third)


# -- seeded admissible fields -------------------------------------------------


def random_modes(grid: GridSpec, seed: int, count: int = 4, amplitude: float = 0.05,
                 max_freq: int = 2) -> np.ndarray:
    """Periodic random psi built from ``count`` cosine modes (torus grids)."""
    if grid.fiber_kind != TORUS:
        raise ConfigurationError("random_modes generates torus perturbations only")
    rng = np.random.RandomState(seed)
    shape = grid.shape
    psi = np.zeros(shape)
    axes = [grid.mesh(ax) for ax in range(len(shape))]
    for _ in range(count):
        freq = rng.randint(-max_freq, max_freq + 1, size=len(shape))
        if not np.any(freq):
            freq[rng.randint(len(shape))] = 1
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = amplitude * rng.uniform(0.3, 1.0)
        arg = sum(int(k) * ax for k, ax in zip(freq, axes)) + phase
        psi = psi + amp * np.cos(arg)
    return psi


def random_admissible(grid: GridSpec, seed: int, kappa: float = 2.0,
                      amplitude: float = 0.05, max_freq: int = 2,
                      base_curvature=None, count: int = 4) -> MetricField:
    """Seeded admissible weight; rescales the perturbation if positivity is tight."""
    psi = random_modes(grid, seed, count=count, amplitude=amplitude, max_freq=max_freq)
    field = MetricField(grid, kappa, psi, base_curvature, label=f"random-{seed}")
    floor = 0.25 * kappa  # keep a comfortable admissibility margin
    for _ in range(40):
        margin = field.jets().fiber_positivity_margin()
        if margin >= floor:
            return field
        field = MetricField(grid, kappa, 0.5 * field.psi, base_curvature,
                            label=field.label)
    raise ConfigurationError("could not scale random field into the admissible cone")


# -- serialization ------------------------------------------------------------


def _grid_to_dict(grid: GridSpec) -> dict:
    return {
        "base_dim": grid.base_dim,
        "fiber_dim": grid.fiber_dim,
        "points": grid.points,
        "fiber_kind": grid.fiber_kind,
        "fiber_points": list(grid.fiber_points),
        "derivative": grid.derivative,
    }


def _grid_from_dict(data: dict) -> GridSpec:
    return GridSpec(
        base_dim=int(data["base_dim"]),
        fiber_dim=int(data["fiber_dim"]),
        points=int(data["points"]),
        fiber_kind=str(data["fiber_kind"]),
        fiber_points=tuple(int(x) for x in data["fiber_points"]),
        derivative=str(data.get("derivative", "stencil4")),
    )


def write_array(path, array: np.ndarray):
    """Raw GEFLD1 writer: magic, u32 rank, u32 dims, float64 LE payload."""
    arr = np.ascontiguousarray(array, dtype="<f8")
    if arr.ndim > MAX_RANK:
        raise FieldFormatError(f"rank {arr.ndim} exceeds maximum {MAX_RANK}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise FieldFormatError(f"bad magic bytes in {path}")
    off = len(MAGIC)
    if len(blob) < off + 4:
        raise FieldFormatError("header truncated before rank")
    (rank,) = struct.unpack_from("<I", blob, off)
    off += 4
    if rank > MAX_RANK:
        raise FieldFormatError(f"rank {rank} exceeds maximum {MAX_RANK}")
    if len(blob) < off + 4 * rank:
        raise FieldFormatError("header truncated before dims")
    dims = struct.unpack_from(f"<{rank}I", blob, off)
    off += 4 * rank
    expected = int(np.prod(dims, dtype=np.int64)) * 8
    payload = blob[off:]
    if len(payload) != expected:
        raise FieldFormatError(
            f"payload has {len(payload)} bytes, expected {expected} "
            f"(missing {expected - len(payload)})"
        )
    return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()


def dump_field(field: MetricField, path):
    """Write psi in the GEFLD1 format plus a JSON sidecar."""
    write_array(path, field.psi)
    payload = np.ascontiguousarray(field.psi, dtype="<f8").tobytes()
    sidecar = {
        "kappa": field.kappa,
        "scenario": field.label,
        "grid": _grid_to_dict(field.grid),
        "checksum": f"{zlib.crc32(payload) & 0xFFFFFFFF:08x}",
    }
    if field.base_curvature is not None:
        sidecar["base_curvature"] = {
            "re": field.base_curvature.real.tolist(),
            "im": field.base_curvature.imag.tolist(),
        }
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_field(path) -> MetricField:
    psi = read_array(path)
    try:
        with open(str(path) + ".json", "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except FileNotFoundError as exc:
        raise FieldFormatError(f"missing sidecar for {path}") from exc
    grid = _grid_from_dict(sidecar["grid"])
    if psi.shape != grid.shape:
        raise FieldFormatError(
            f"payload shape {psi.shape} does not match sidecar grid {grid.shape}"
        )
    payload = np.ascontiguousarray(psi, dtype="<f8").tobytes()
    checksum = f"{zlib.crc32(payload) & 0xFFFFFFFF:08x}"
    if checksum != sidecar["checksum"]:
        raise FieldFormatError("checksum mismatch between payload and sidecar")
    q = None
    if "base_curvature" in sidecar:
        q = np.asarray(sidecar["base_curvature"]["re"]) + 1j * np.asarray(
            sidecar["base_curvature"]["im"]
        )
    return MetricField(grid, float(sidecar["kappa"]), psi, q,
                       label=str(sidecar["scenario"]))
