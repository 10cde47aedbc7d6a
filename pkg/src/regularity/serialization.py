"""Binary and CSV formats for fields.

Binary layout, every number an 8-byte little-endian real: ``dim``, ``N``, ``L``,
``nt``, boundary code (0 periodic, 1 dirichlet), ``dt``, ``t0``, then per space axis
``nx``, ``dx``, ``offset``, ``extent``; the payload follows in row-major
``(t, x..., c)`` order.
"""

import csv
import io
import itertools
from pathlib import Path

import numpy as np

from .errors import InputError
from .grids import Field, SpaceTimeGrid, TimeSeriesGrid

__all__ = ["field_to_bytes", "field_from_bytes", "field_to_csv", "read_field"]

_BOUNDARY_CODES = {"periodic": 0.0, "dirichlet": 1.0}
_LE = np.dtype("<f8")


def field_to_bytes(field: Field) -> bytes:
    """Little-endian float64 header followed by the values in C order.

    The header is dim, components, rows, nt, boundary code, dt, t0 and then
    nx, dx, offset and stored length for each axis.
    """
    grid = field.grid
    header = [
        grid.dim,
        field.components,
        field.n_times,
        grid.nt,
        _BOUNDARY_CODES[grid.boundary],
        grid.dt,
        field.t0,
    ]
    for i in range(grid.dim):
        header += [grid.nx[i], grid.dx[i], field.offset[i], field.spatial_shape[i]]
    head = np.asarray(header, dtype=_LE).tobytes()
    return head + np.ascontiguousarray(field.values, dtype=_LE).tobytes()


def field_from_bytes(data: bytes) -> Field:
    """Inverse of ``field_to_bytes``.

    Args:
        data: Bytes as written to trajectory.bin.

    Returns:
        The field on a rebuilt grid, with its time origin and spatial offset.

    Raises:
        InputError: The header is truncated or disagrees with the payload size.
    """
    raw = np.frombuffer(data, dtype=_LE)
    if raw.size < 7:
        raise InputError("truncated field header")
    dim, comps, rows, nt = (int(x) for x in raw[:4])
    boundary = "periodic" if raw[4] == 0.0 else "dirichlet"
    dt, t0 = float(raw[5]), float(raw[6])
    axes = raw[7 : 7 + 4 * dim].reshape(dim, 4)
    # a single one-node axis is a bare time series
    kind = TimeSeriesGrid if dim == 1 and int(axes[0][0]) == 1 else SpaceTimeGrid
    grid = kind(
        nx=tuple(int(a[0]) for a in axes),
        dx=tuple(float(a[1]) for a in axes),
        nt=nt,
        dt=dt,
        boundary=boundary,
        components=comps,
    )
    shape = (rows, *(int(a[3]) for a in axes), comps)
    payload = raw[7 + 4 * dim :]
    if payload.size != int(np.prod(shape)):
        raise InputError(f"payload holds {payload.size} values, header expects {shape}")
    return Field(
        grid,
        payload.reshape(shape).astype(np.float64),
        t0=t0,
        offset=tuple(int(a[2]) for a in axes),
    )


def field_to_csv(field: Field) -> str:
    """Long format: ``t, x1[, x2], component, value`` (one row per sample)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    axes = [f"x{i + 1}" for i in range(field.grid.dim)]
    writer.writerow(["t", *axes, "component", "value"])
    coords = [field.coords(i) for i in range(field.grid.dim)]
    for ti, t in enumerate(field.times):
        for idx in itertools.product(*(range(len(c)) for c in coords)):
            point = [repr(float(c[j])) for c, j in zip(coords, idx)]
            for comp in range(field.components):
                value = field.values[(ti, *idx, comp)]
                writer.writerow([repr(float(t)), *point, comp, repr(float(value))])
    return buf.getvalue()


def read_field(path: Path) -> Field:
    return field_from_bytes(path.read_bytes())
