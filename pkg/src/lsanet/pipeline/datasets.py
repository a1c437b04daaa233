"""Point-cloud datasets: desk-scale synthetic shapes and OFF mesh directories."""
from __future__ import annotations

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Literal, Sequence

import numpy as np
import trimesh

from lsanet.errors import DegenerateMeshError, EmptyClassError, GeometryError, OffFormatError
from lsanet.geometry import PointCloud, normalize_unit_sphere
from lsanet.settings import DEFAULT_N_POINTS, THREADS


logger = logging.getLogger(__name__)

ShapeName = Literal['sphere', 'cube', 'torus', 'plane']
SHAPES: tuple[ShapeName, ...] = ('sphere', 'cube', 'torus', 'plane')
TORUS_MAJOR = 0.7
TORUS_MINOR = 0.25
MIN_POINTS = 64


@dataclass(frozen=True)
class SyntheticShapeSpec:
    shape: ShapeName
    n_points: int = DEFAULT_N_POINTS
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        if self.shape not in SHAPES:
            raise GeometryError(f'unknown shape {self.shape!r}, expected one of {SHAPES}')
        if self.n_points < MIN_POINTS:
            raise GeometryError(f'synthetic clouds need at least {MIN_POINTS} points, got {self.n_points}')
        if self.noise_sigma < 0:
            raise GeometryError('noise sigma must be non-negative')


class PointCloudDataset:
    """Labelled clouds plus the class names their labels index"""

    def __init__(self, clouds: list[PointCloud], class_names: Sequence[str]) -> None:
        self.clouds = clouds
        self.class_names = tuple(class_names)

    def __len__(self) -> int:
        return len(self.clouds)

    def __getitem__(self, index):
        return self.clouds[index]

    def __iter__(self) -> Iterator[PointCloud]:
        return iter(self.clouds)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def labels(self) -> np.ndarray:
        return np.array([cloud.label for cloud in self.clouds], dtype=np.intp)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def _unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _cube_surface(rng: np.random.Generator, n: int) -> np.ndarray:
    # six faces of equal area: pick a face, then a uniform point on it
    axis = rng.integers(0, 3, size=n)
    side = rng.choice([-1.0, 1.0], size=n)
    points = rng.uniform(-1.0, 1.0, size=(n, 3))
    points[np.arange(n), axis] = side
    return points


def _torus_surface(rng: np.random.Generator, n: int) -> np.ndarray:
    # tube angle accepted with probability proportional to the local ring radius
    angles = np.empty(0)
    while angles.size < n:
        candidate = rng.uniform(0.0, 2.0 * np.pi, size=2 * n)
        accept = rng.uniform(0.0, 1.0, size=2 * n) < (
            (TORUS_MAJOR + TORUS_MINOR * np.cos(candidate)) / (TORUS_MAJOR + TORUS_MINOR)
        )
        angles = np.concatenate([angles, candidate[accept]])
    tube = angles[:n]
    ring = rng.uniform(0.0, 2.0 * np.pi, size=n)
    radius = TORUS_MAJOR + TORUS_MINOR * np.cos(tube)
    return np.stack([radius * np.cos(ring), radius * np.sin(ring), TORUS_MINOR * np.sin(tube)], axis=1)


def _disk(rng: np.random.Generator, n: int) -> np.ndarray:
    r = np.sqrt(rng.uniform(0.0, 1.0, size=n))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.stack([r * np.cos(theta), r * np.sin(theta), np.zeros(n)], axis=1)


SAMPLERS = {'sphere': _unit_vectors, 'cube': _cube_surface, 'torus': _torus_surface, 'plane': _disk}


def sample_shape(spec: SyntheticShapeSpec, normalize: bool = True, dtype=np.float32) -> np.ndarray:
    """Noisy surface samples of one shape, unit-sphere normalized unless told otherwise"""
    rng = np.random.default_rng(spec.seed)
    points = SAMPLERS[spec.shape](rng, spec.n_points)
    if spec.noise_sigma > 0:
        points = points + rng.normal(0.0, spec.noise_sigma, size=points.shape)
    if normalize:
        points = normalize_unit_sphere(PointCloud(points)).coords
    return points.astype(dtype)


def _synth_split(
        shapes: Sequence[ShapeName],
        n_clouds: int,
        split: int,
        seed: int,
        n_points: int,
        noise_sigma: float,
) -> PointCloudDataset:
    clouds = []
    for i in range(n_clouds):
        label = i % len(shapes)
        cloud_seed = int(np.random.SeedSequence([seed, split, i]).generate_state(1)[0])
        spec = SyntheticShapeSpec(shapes[label], n_points, noise_sigma, cloud_seed)
        clouds.append(PointCloud(sample_shape(spec), label=label))
    return PointCloudDataset(clouds, shapes)


def synth_dataset(
        shapes: Sequence[ShapeName] = SHAPES,
        n_train: int = 512,
        n_test: int = 128,
        seed: int = 0,
        n_points: int = DEFAULT_N_POINTS,
        noise_sigma: float = 0.01,
) -> tuple[PointCloudDataset, PointCloudDataset]:
    """Train and test splits with labels interleaved, so class counts differ by at most one"""
    shapes = tuple(shapes)
    if len(shapes) < 2:
        raise GeometryError('a dataset needs at least two shape classes')
    train = _synth_split(shapes, n_train, 0, seed, n_points, noise_sigma)
    test = _synth_split(shapes, n_test, 1, seed, n_points, noise_sigma)
    logger.debug('synthesized %d train / %d test clouds of %d points', n_train, n_test, n_points)
    return train, test


def _content_lines(text: str) -> Iterator[str]:
    for line in text.splitlines():
        line = line.split('#', 1)[0].strip()
        if line:
            yield line


def parse_off(text: str, source: str = '<string>') -> tuple[np.ndarray, np.ndarray]:
    """Vertices (V, 3) and triangles (T, 3) of an ASCII OFF file.

    Polygons are fan-triangulated. A counts line glued to the header
    ('OFF490 518 0') is accepted.
    """
    lines = _content_lines(text)
    header = next(lines, '')
    if not header.startswith('OFF'):
        raise OffFormatError(f'{source}: missing OFF header')
    counts = header[3:].split() or next(lines, '').split()
    try:
        n_vertices, n_faces = int(counts[0]), int(counts[1])
    except (IndexError, ValueError) as exc:
        raise OffFormatError(f'{source}: bad counts line {counts!r}') from exc

    body = list(lines)
    if len(body) < n_vertices + n_faces:
        raise OffFormatError(
            f'{source}: header declares {n_vertices} vertices and {n_faces} faces, '
            f'file holds {len(body)} data lines'
        )
    try:
        vertices = np.array([[float(v) for v in line.split()[:3]] for line in body[:n_vertices]])
    except ValueError as exc:
        raise OffFormatError(f'{source}: bad vertex line ({exc})') from exc
    if vertices.shape != (n_vertices, 3):
        raise OffFormatError(f'{source}: every vertex needs three coordinates')
    if not np.all(np.isfinite(vertices)):
        raise OffFormatError(f'{source}: non-finite vertex coordinates')

    triangles = []
    for line in body[n_vertices:n_vertices + n_faces]:
        fields = line.split()
        try:
            size = int(fields[0])
            corners = [int(c) for c in fields[1:1 + size]]
        except (IndexError, ValueError) as exc:
            raise OffFormatError(f'{source}: bad face line {line!r}') from exc
        if size < 3 or len(corners) != size:
            raise OffFormatError(f'{source}: face {line!r} does not list {size} vertices')
        if min(corners) < 0 or max(corners) >= n_vertices:
            raise OffFormatError(f'{source}: face {line!r} indexes past {n_vertices} vertices')
        triangles.extend((corners[0], corners[i], corners[i + 1]) for i in range(1, size - 1))
    return vertices, np.array(triangles, dtype=np.int64).reshape(-1, 3)


def sample_off_mesh(
        path: Path,
        n_points: int,
        seed: int,
        normalize: bool = True,
        dtype=np.float32,
) -> np.ndarray:
    """Area-weighted uniform surface samples of one OFF mesh"""
    path = Path(path)
    try:
        text = path.read_bytes().decode('utf-8')
    except UnicodeDecodeError as exc:
        raise OffFormatError(f'{path}: not an ASCII OFF file ({exc.reason} at byte {exc.start})') from exc
    vertices, faces = parse_off(text, str(path))
    mesh = trimesh.Trimesh(vertices=vertices, faces=faces, process=False)
    if not mesh.area > 0:
        raise DegenerateMeshError(f'{path}: mesh has zero surface area')
    points, _ = trimesh.sample.sample_surface(mesh, n_points, seed=seed)
    points = np.asarray(points, dtype=np.float64)
    if normalize:
        points = normalize_unit_sphere(PointCloud(points)).coords
    return points.astype(dtype)


def mesh_seed(path: Path, root: Path, seed: int) -> int:
    """Sampling seed fixed by (file, seed) and independent of directory listing order"""
    key = zlib.crc32(Path(path).relative_to(root).as_posix().encode('utf-8'))
    return int(np.random.SeedSequence([seed, key]).generate_state(1)[0])


def _class_files(class_dir: Path, split: str | None) -> list[Path]:
    if split is not None and (class_dir / split).is_dir():
        class_dir = class_dir / split
    return sorted(class_dir.glob('*.off'))


def load_off_dir(
        path: Path,
        n_points: int = DEFAULT_N_POINTS,
        seed: int = 0,
        split: str | None = 'train',
) -> PointCloudDataset:
    """One cloud per mesh in `path/<class>/[split/]*.off`, classes in name order.

    Malformed meshes are skipped with a warning; a class left without any
    usable mesh is an error.
    """
    root = Path(path)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    if not class_dirs:
        raise EmptyClassError(f'{root}: no class subdirectories')

    def load(job: tuple[int, Path]) -> PointCloud | None:
        label, file = job
        try:
            coords = sample_off_mesh(file, n_points, mesh_seed(file, root, seed))
        except (OffFormatError, DegenerateMeshError) as exc:
            logger.warning('skipping %s: %s', file, exc)
            return None
        return PointCloud(coords, label=label)

    jobs = [(label, file) for label, d in enumerate(class_dirs) for file in _class_files(d, split)]
    with ThreadPoolExecutor(max_workers=THREADS) as pool:
        loaded = list(pool.map(load, jobs))

    clouds = [cloud for cloud in loaded if cloud is not None]
    counts = np.bincount([cloud.label for cloud in clouds], minlength=len(class_dirs))
    for label, count in enumerate(counts):
        if count == 0:
            raise EmptyClassError(f'{class_dirs[label]}: no usable OFF mesh')
    logger.info('loaded %d meshes in %d classes from %s', len(clouds), len(class_dirs), root)
    return PointCloudDataset(clouds, [d.name for d in class_dirs])


def load_splits(
        data: dict,
        seed: int,
        n_points: int = DEFAULT_N_POINTS,
) -> tuple[PointCloudDataset, PointCloudDataset]:
    """Train/test splits described by a run record's `data` section.

    `{'source': 'synthetic', 'n_train': .., 'n_test': .., 'noise_sigma': ..}`
    or `{'source': <directory of OFF class folders>}`.
    """
    source = data.get('source', 'synthetic')
    if source == 'synthetic':
        return synth_dataset(
            n_train=int(data.get('n_train', 512)),
            n_test=int(data.get('n_test', 128)),
            seed=int(data.get('seed', seed)),
            n_points=n_points,
            noise_sigma=float(data.get('noise_sigma', 0.01)),
        )
    return load_off_dir(source, n_points, seed, 'train'), load_off_dir(source, n_points, seed, 'test')
