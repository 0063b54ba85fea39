"""Unit-cell geometry, incident wave, assumption checks and boundary meshes.

Lengths are stored in physical units. Solvers work in the microscopic frame
where the period is 1: lengths are divided by ``delta`` and the wavenumber
is multiplied by it (see :meth:`UnitCell.scaled` and :meth:`WaveParams.scaled`).
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, replace

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

NEUMANN_MARGIN = 1e-3
WOOD_BAND = 1e-2
MIN_NODES_PER_SIDE = 2
MIN_NODES_PER_RESONATOR = 8


class GeometryError(ValueError):
    """Structurally invalid geometry or wave parameters."""


class ConfigError(ValueError):
    """Configuration file could not be parsed; carries a line number."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:" if path is not None else f"line {line}:"
        super().__init__(f"{where} {message}" if where else message)


@dataclass(frozen=True)
class Resonator:
    """Rectangular cavity ``(xi - l/2, xi + l/2) x (0, h)`` with a centered ceiling aperture."""

    h: float
    l: float
    xi: float
    eps: float
    index: int = 1

    def __post_init__(self):
        for name in ("h", "l", "xi", "eps"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise GeometryError(f"resonator {self.index}: {name} must be finite")
        if not self.h > 0 or not self.l > 0:
            raise GeometryError(f"resonator {self.index}: h and l must be positive")
        if not self.eps > 0:
            raise GeometryError(f"resonator {self.index}: aperture half-length must be positive")
        if not self.eps < self.l / 2:
            raise GeometryError(
                f"resonator {self.index}: aperture half-length {self.eps} must be < l/2 = {self.l / 2}"
            )

    @property
    def area(self) -> float:
        return self.l * self.h

    @property
    def perimeter(self) -> float:
        return 2 * (self.l + self.h)

    @property
    def aperture_center(self) -> np.ndarray:
        return np.array([self.xi, self.h])

    @property
    def x_range(self):
        return self.xi - self.l / 2, self.xi + self.l / 2

    def contains(self, p) -> np.ndarray:
        """Strict interior test for points of shape ``(..., 2)``."""
        p = np.asarray(p, dtype=float)
        a, b = self.x_range
        return (p[..., 0] > a) & (p[..., 0] < b) & (p[..., 1] > 0) & (p[..., 1] < self.h)

    def scaled(self, s: float) -> "Resonator":
        return Resonator(self.h * s, self.l * s, self.xi * s, self.eps * s, self.index)

    def neumann_eigenvalues(self, count_max=6):
        """Nonzero Neumann-Laplace eigenvalues ``pi^2 (m^2/l^2 + n^2/h^2)``."""
        m, n = np.meshgrid(np.arange(count_max), np.arange(count_max), indexing="ij")
        lam = np.pi ** 2 * (m ** 2 / self.l ** 2 + n ** 2 / self.h ** 2)
        return np.sort(lam.ravel()[1:])


@dataclass(frozen=True)
class UnitCell:
    """Period ``delta`` and an ordered tuple of resonators."""

    delta: float
    resonators: tuple

    def __post_init__(self):
        object.__setattr__(self, "resonators", tuple(self.resonators))
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise GeometryError("period delta must be positive")
        if not self.resonators:
            raise GeometryError("at least one resonator is required")
        half = self.delta / 2
        for r in self.resonators:
            a, b = r.x_range
            if not (a > -half and b < half):
                raise GeometryError(
                    f"resonator {r.index} ({a:.6g}, {b:.6g}) must lie strictly inside "
                    f"the unit strip (-{half:.6g}, {half:.6g})"
                )
        order = sorted(self.resonators, key=lambda r: r.xi)
        for p, q in zip(order[:-1], order[1:]):
            if not p.x_range[1] < q.x_range[0]:
                raise GeometryError(f"resonators {p.index} and {q.index} overlap or touch")

    @property
    def n(self) -> int:
        return len(self.resonators)

    def scaled(self) -> "UnitCell":
        """Same cell in the frame where the period is 1."""
        s = 1.0 / self.delta
        return UnitCell(1.0, tuple(r.scaled(s) for r in self.resonators))

    def with_apertures(self, eps) -> "UnitCell":
        eps = np.broadcast_to(np.asarray(eps, dtype=float), (self.n,))
        return UnitCell(self.delta, tuple(replace(r, eps=float(e)) for r, e in zip(self.resonators, eps)))

    def shifted(self, dx: float) -> "UnitCell":
        return UnitCell(self.delta, tuple(replace(r, xi=r.xi + dx) for r in self.resonators))

    def doubled(self) -> "UnitCell":
        """Two copies side by side in a cell of width ``2 delta``."""
        res = []
        for j, off in enumerate((-self.delta / 2, self.delta / 2)):
            for r in self.resonators:
                res.append(replace(r, xi=r.xi + off, index=len(res) + 1))
        return UnitCell(2 * self.delta, tuple(res))

    def in_resonator(self, p) -> np.ndarray:
        """Index (0-based) of the resonator containing each point, or -1."""
        p = np.asarray(p, dtype=float)
        out = np.full(p.shape[:-1], -1, dtype=int)
        for i, r in enumerate(self.resonators):
            out[r.contains(p)] = i
        return out


@dataclass(frozen=True)
class WaveParams:
    """Incident plane wave ``I0 exp(i (k1 x1 + k2 x2))`` with ``k2 < 0``."""

    k: float
    theta: float
    I0: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.k) and self.k > 0):
            raise GeometryError("wavenumber k must be positive")
        if not (0 < self.theta < math.pi):
            raise GeometryError("incidence angle theta must lie in (0, pi)")

    @property
    def k1(self) -> float:
        return -self.k * math.cos(self.theta)

    @property
    def k2(self) -> float:
        return -self.k * math.sin(self.theta)

    def scaled(self, delta: float) -> "WaveParams":
        return WaveParams(self.k * delta, self.theta, self.I0)


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    margin: float
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def format(self) -> str:
        lines = []
        for c in self.checks:
            flag = "PASS" if c.passed else "FAIL"
            lines.append(f"{flag}  {c.name:<20s} margin={c.margin:+.6g}  {c.detail}")
        return "\n".join(lines)


class AssumptionError(ValueError):
    """A solver was called outside the validated regime."""

    def __init__(self, report: ValidationReport):
        self.report = report
        names = ", ".join(c.name for c in report.failures())
        super().__init__(f"model assumptions violated: {names}\n{report.format()}")


def validate_assumptions(cell: UnitCell, wave: WaveParams,
                         neumann_margin: float = NEUMANN_MARGIN,
                         wood_band: float = WOOD_BAND) -> ValidationReport:
    """Check the subwavelength, single-mode, non-eigenvalue and Wood-anomaly conditions.

    All checks are evaluated in the scaled frame (period 1, wavenumber
    ``delta * k``) and depend only on the sizes ``l_i, h_i``, never on the
    positions ``xi_i``. Margins are positive when a check passes.
    """
    sc = cell.scaled()
    dk = wave.k * cell.delta
    dk1 = wave.k1 * cell.delta
    checks = []

    bound = min(min(math.pi / r.l, math.pi / r.h) for r in sc.resonators)
    checks.append(Check("subwavelength", dk < bound, bound - dk,
                        f"delta*k = {dk:.6g} < min(pi/l, pi/h) = {bound:.6g}"))

    b = 2 * math.pi - abs(dk1)
    checks.append(Check("single_mode", dk < b, b - dk,
                        f"delta*k = {dk:.6g} < 2 pi - |delta*k1| = {b:.6g}"))

    worst = math.inf
    where = ""
    for r in sc.resonators:
        lam = r.neumann_eigenvalues()
        j = int(np.argmin(np.abs(dk ** 2 - lam)))
        rel = abs(dk ** 2 - lam[j]) / dk ** 2 - neumann_margin
        if rel < worst:
            worst, where = rel, f"resonator {r.index}: nearest eigenvalue {lam[j]:.6g}"
    checks.append(Check("neumann_eigenvalue", worst >= 0, worst,
                        f"|(delta*k)^2 - lambda| >= {neumann_margin:g} (delta*k)^2; {where}"))

    nmax = int(math.ceil((dk + abs(dk1)) / (2 * math.pi))) + 2
    dist = [abs(2 * math.pi * n - dk1) for n in range(-nmax, nmax + 1) if n != 0]
    inf_q = min(dist)
    gap = (inf_q - dk) / dk - wood_band
    checks.append(Check("wood_anomaly", gap >= 0 and dk ** 2 < inf_q ** 2, gap,
                        f"(delta*k)^2 = {dk ** 2:.6g} < inf |2 pi n - delta*k1|^2 = {inf_q ** 2:.6g}, "
                        f"band {wood_band:g}"))
    return ValidationReport(tuple(checks))


def require_valid(cell: UnitCell, wave: WaveParams, **kw) -> ValidationReport:
    rep = validate_assumptions(cell, wave, **kw)
    if not rep.ok:
        raise AssumptionError(rep)
    return rep


# ----------------------------------------------------------------------
SIDE_BOTTOM, SIDE_RIGHT, SIDE_TOP, SIDE_LEFT = 0, 1, 2, 3


@dataclass(frozen=True)
class ResonatorMesh:
    """Nodes on one rectangle boundary, traversed counter-clockwise from the bottom-left corner.

    Attributes
    ----------
    points, normals : (M, 2) arrays
        Node positions and outward unit normals (pointing out of the cavity).
    weights : (M,) array
        Quadrature weights; per side they sum to the side length.
    side : (M,) int array
        0 bottom, 1 right, 2 top, 3 left.
    t : (M,) array
        Arc-length coordinate measured from the start of the side.
    corners : (4, 2) array
        Bottom-left, bottom-right, top-right, top-left.
    """

    resonator: Resonator
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    side: np.ndarray
    t: np.ndarray
    side_lengths: np.ndarray
    corners: np.ndarray
    grading: float

    @property
    def m(self) -> int:
        return len(self.weights)

    def select(self, sides) -> "ResonatorMesh":
        keep = np.isin(self.side, sides)
        return replace(self, points=self.points[keep], normals=self.normals[keep],
                       weights=self.weights[keep], side=self.side[keep], t=self.t[keep])

    def side_start(self, s):
        return self.corners[s]

    def side_direction(self, s):
        d = self.corners[(s + 1) % 4] - self.corners[s]
        return d / np.linalg.norm(d)


@dataclass(frozen=True)
class BoundaryMesh:
    meshes: tuple
    nodes_per_cell: int
    grading: float

    @property
    def total(self) -> int:
        return sum(m.m for m in self.meshes)

    def __getitem__(self, i) -> ResonatorMesh:
        return self.meshes[i]

    def __len__(self):
        return len(self.meshes)


def _graded_nodes(n, p):
    """Midpoint nodes on (0, 1) under the map ``s^p / (s^p + (1-s)^p)`` and their weights."""
    s = (np.arange(n) + 0.5) / n
    if p == 1:
        return s, np.full(n, 1.0 / n)
    a, b = s ** p, (1 - s) ** p
    w = a / (a + b)
    dw = p * (s ** (p - 1) * b + a * (1 - s) ** (p - 1)) / (a + b) ** 2
    wt = dw / n
    return w, wt / wt.sum()


def _largest_remainder(total, shares, minimum):
    shares = np.asarray(shares, dtype=float)
    raw = total * shares / shares.sum()
    base = np.maximum(np.floor(raw).astype(int), minimum)
    while base.sum() > total:
        j = int(np.argmax(np.where(base > minimum, base - raw, -np.inf)))
        base[j] -= 1
    rem = raw - base
    while base.sum() < total:
        j = int(np.argmax(rem))
        base[j] += 1
        rem[j] -= 1
    return base


def mesh_resonator(res: Resonator, m: int, grading: float = 1.0) -> ResonatorMesh:
    """Mesh of ``m`` nodes on one rectangle, split over sides in proportion to length."""
    if m < MIN_NODES_PER_RESONATOR:
        raise GeometryError(f"need at least {MIN_NODES_PER_RESONATOR} nodes per resonator, got {m}")
    a, b = res.x_range
    corners = np.array([[a, 0.0], [b, 0.0], [b, res.h], [a, res.h]])
    lengths = np.array([res.l, res.h, res.l, res.h])
    counts = _largest_remainder(m, lengths, MIN_NODES_PER_SIDE)
    normals_side = np.array([[0, -1], [1, 0], [0, 1], [-1, 0]], dtype=float)
    pts, nrm, wts, sd, ts = [], [], [], [], []
    for s in range(4):
        u, w = _graded_nodes(counts[s], grading)
        d = corners[(s + 1) % 4] - corners[s]
        L = lengths[s]
        t = u * L
        pts.append(corners[s] + np.outer(u, d))
        nrm.append(np.tile(normals_side[s], (counts[s], 1)))
        wts.append(w * L)
        sd.append(np.full(counts[s], s))
        ts.append(t)
    return ResonatorMesh(res, np.vstack(pts), np.vstack(nrm), np.concatenate(wts),
                         np.concatenate(sd), np.concatenate(ts), lengths, corners, grading)


def build_mesh(cell: UnitCell, nodes_per_cell: int, grading: float = 1.0) -> BoundaryMesh:
    """Distribute ``nodes_per_cell`` boundary nodes over all resonators.

    Counts per resonator are proportional to perimeter, per side to side
    length (largest-remainder rounding). Nodes are panel midpoints, so no
    node sits on a corner. ``grading > 1`` clusters nodes toward corners.
    """
    if grading < 1:
        raise GeometryError("grading exponent must be >= 1")
    n = cell.n
    if nodes_per_cell < MIN_NODES_PER_RESONATOR * n:
        raise GeometryError(
            f"{nodes_per_cell} nodes are too few for {n} resonators "
            f"(need >= {MIN_NODES_PER_RESONATOR} per resonator)"
        )
    counts = _largest_remainder(nodes_per_cell, [r.perimeter for r in cell.resonators],
                                MIN_NODES_PER_RESONATOR)
    meshes = tuple(mesh_resonator(r, int(c), grading) for r, c in zip(cell.resonators, counts))
    return BoundaryMesh(meshes, nodes_per_cell, grading)


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class RunConfig:
    cell: UnitCell
    wave: WaveParams
    nodes: int = 300
    extra: dict = field(default_factory=dict)


def _line_of(text, pattern, occurrence=0):
    hits = [i + 1 for i, line in enumerate(text.splitlines()) if re.search(pattern, line)]
    if len(hits) > occurrence:
        return hits[occurrence]
    return hits[-1] if hits else None


def _tomldecode_line(err):
    m = re.search(r"line (\d+)", str(err))
    return int(m.group(1)) if m else getattr(err, "lineno", None)


def parse_config(text: str, path=None) -> RunConfig:
    """Parse a TOML run configuration.

    Recognized keys: ``delta``, ``k``, ``theta``, ``I0`` (default 1), ``nodes``
    (default 300) and ``resonators``, either an array of ``[h, l, xi, eps]``
    rows or an array of tables with those keys.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(str(err), _tomldecode_line(err), path) from None

    def need(key, kind=float):
        if key not in data:
            raise ConfigError(f"missing required key '{key}'", None, path)
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"'{key}' must be a number", _line_of(text, rf"^\s*{key}\s*="), path)
        return kind(v)

    known = {"delta", "k", "theta", "I0", "nodes", "resonators"}
    for key in data:
        if key not in known and not isinstance(data[key], dict):
            raise ConfigError(f"unknown key '{key}'", _line_of(text, rf"^\s*{re.escape(key)}\s*="), path)

    delta = need("delta")
    k = need("k")
    theta = need("theta")
    I0 = float(data.get("I0", 1.0))
    nodes = int(data.get("nodes", 300))
    raw = data.get("resonators")
    if not raw:
        raise ConfigError("missing required key 'resonators'", None, path)
    res = []
    for i, item in enumerate(raw):
        if isinstance(item, dict):
            line = _line_of(text, r"^\s*\[\[\s*resonators\s*\]\]", i)
            try:
                vals = [float(item[key]) for key in ("h", "l", "xi", "eps")]
            except KeyError as e:
                raise ConfigError(f"resonator {i + 1}: missing key {e}", line, path) from None
        else:
            line = _line_of(text, r"resonators")
            if len(item) != 4:
                raise ConfigError(f"resonator {i + 1}: expected [h, l, xi, eps]", line, path)
            vals = [float(v) for v in item]
        try:
            res.append(Resonator(*vals, index=i + 1))
        except GeometryError as e:
            raise ConfigError(str(e), line, path) from None
    try:
        cell = UnitCell(delta, tuple(res))
        wave = WaveParams(k, theta, I0)
    except GeometryError as e:
        raise ConfigError(str(e), _line_of(text, r"^\s*(delta|k|theta)\s*="), path) from None
    extra = {key: v for key, v in data.items() if isinstance(v, dict)}
    return RunConfig(cell, wave, nodes, extra)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), path=str(path))


def reference_cell(eps=1e-3) -> UnitCell:
    """Four-resonator strip used throughout the demos and acceptance tests."""
    h = (0.2, 0.3, 0.4, 0.3)
    l = (0.1, 0.3, 0.25, 0.2)
    xi = (-0.43, -0.19, 0.11, 0.38)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (4,))
    return UnitCell(1.0, tuple(Resonator(h[i], l[i], xi[i], float(eps[i]), i + 1) for i in range(4)))
