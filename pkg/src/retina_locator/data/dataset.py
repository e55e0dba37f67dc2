"""
Retina Locator - Dataset ingestion and CSV formats
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details

Canonical CSV: ``image,od_x,od_y,fov_x,fov_y`` in native pixels, three
decimals. IDRiD's two-file layout (one CSV per landmark) is read with a
best-effort header match.
"""

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from ..exceptions import DataError, GeometryError, ParseError
from ..geometry import center_to_box, point_in_bounds, rescale_point
from ..imaging.image import image_size
from ..models import (
    Annotation,
    BBox,
    DatasetRecord,
    Detection,
    EvalRecord,
    LANDMARK_CLASSES,
    LandmarkClass,
    LandmarkPoint,
)
from ..settings import GeometryConfig

logger = logging.getLogger(__name__)

UNIFIED_HEADER = ['image', 'od_x', 'od_y', 'fov_x', 'fov_y']
IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.ppm', '.tif', '.tiff', '.bmp')
COLUMN_PREFIX = {LandmarkClass.OPTIC_DISC: 'od', LandmarkClass.FOVEA: 'fov'}

PathLike = Union[str, Path]


@dataclass
class CenterRow:
    """Landmark centers of one CSV row; absent classes are left out."""

    image_id: str
    points: Dict[LandmarkClass, Tuple[float, float]] = field(default_factory=dict)
    line: int = 0


def _fmt(value: float) -> str:
    return f"{value:.3f}"


def _cell_float(cell: str, path: PathLike, line: int, column: str) -> Optional[float]:
    cell = cell.strip()
    if not cell:
        return None
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"column '{column}': not a number: {cell!r}", str(path), line)
    if value != value or value in (float('inf'), float('-inf')):
        raise ParseError(f"column '{column}': non-finite value {cell!r}", str(path), line)
    return value


def _read_rows(path: PathLike) -> Tuple[List[str], List[Tuple[int, List[str]]]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"CSV file not found: {path}")
    with open(path, 'r', newline='', encoding='utf-8-sig') as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ParseError("missing header row", str(path), 1)
    header = [h.strip() for h in rows[0]]
    body = [(i, row) for i, row in enumerate(rows[1:], start=2) if any(cell.strip() for cell in row)]
    return header, body


def is_unified_header(header: Sequence[str]) -> bool:
    lowered = [h.lower() for h in header]
    return all(name in lowered for name in UNIFIED_HEADER)


def read_unified_csv(path: PathLike) -> List[CenterRow]:
    """Parse ``image,od_x,od_y,fov_x,fov_y`` rows (extra columns are ignored).

    Empty coordinate pairs mark a class as missing for that image.

    Raises:
        ParseError: malformed header or row, with the offending line number
    """
    header, body = _read_rows(path)
    if not is_unified_header(header):
        raise ParseError(f"expected header {','.join(UNIFIED_HEADER)}, got {','.join(header)}", str(path), 1)
    index = {h.lower(): i for i, h in enumerate(header)}
    parsed = []
    for line, row in body:
        if len(row) < len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(row)}", str(path), line)
        image_id = row[index['image']].strip()
        if not image_id:
            raise ParseError("empty image id", str(path), line)
        center = CenterRow(image_id=image_id, line=line)
        for label in LANDMARK_CLASSES:
            prefix = COLUMN_PREFIX[label]
            x = _cell_float(row[index[f'{prefix}_x']], path, line, f'{prefix}_x')
            y = _cell_float(row[index[f'{prefix}_y']], path, line, f'{prefix}_y')
            if (x is None) != (y is None):
                raise ParseError(f"{prefix}: only one of x/y given", str(path), line)
            if x is not None:
                center.points[label] = (x, y)
        parsed.append(center)
    return parsed


def _idrid_columns(header: Sequence[str]) -> Tuple[int, int, int]:
    """Indices of the (image id, x, y) columns, matched by header tokens."""
    id_col = x_col = y_col = None
    for i, name in enumerate(header):
        tokens = [t for t in re.split(r'[^a-z]+', name.lower()) if t]
        if id_col is None and any(t in ('image', 'id', 'name', 'file', 'filename') for t in tokens):
            id_col = i
        elif x_col is None and 'x' in tokens:
            x_col = i
        elif y_col is None and 'y' in tokens:
            y_col = i
    if None in (id_col, x_col, y_col):
        logger.warning(f"Could not match IDRiD header {header}; assuming columns image, x, y")
        return 0, 1, 2
    return id_col, x_col, y_col


def read_idrid_csv(path: PathLike) -> Dict[str, Tuple[float, float, int]]:
    """Parse a one-landmark IDRiD CSV into {image id: (x, y, line)}."""
    header, body = _read_rows(path)
    id_col, x_col, y_col = _idrid_columns(header)
    centers = {}
    for line, row in body:
        if len(row) <= max(id_col, x_col, y_col):
            raise ParseError(f"expected at least {max(id_col, x_col, y_col) + 1} columns", str(path), line)
        image_id = row[id_col].strip()
        if not image_id:
            continue
        x = _cell_float(row[x_col], path, line, header[x_col] if x_col < len(header) else 'x')
        y = _cell_float(row[y_col], path, line, header[y_col] if y_col < len(header) else 'y')
        if x is None or y is None:
            raise ParseError("missing coordinate", str(path), line)
        centers[image_id] = (x, y, line)
    return centers


def _join_idrid(od_csv: PathLike, fovea_csv: PathLike) -> List[CenterRow]:
    od = read_idrid_csv(od_csv)
    fovea = read_idrid_csv(fovea_csv)
    unmatched = sorted(set(od) ^ set(fovea))
    if unmatched:
        logger.warning(f"{len(unmatched)} image ids appear in only one landmark CSV: {unmatched[:5]}")
    rows = []
    for image_id in sorted(set(od) | set(fovea)):
        row = CenterRow(image_id=image_id)
        if image_id in od:
            row.points[LandmarkClass.OPTIC_DISC] = od[image_id][:2]
            row.line = od[image_id][2]
        if image_id in fovea:
            row.points[LandmarkClass.FOVEA] = fovea[image_id][:2]
        rows.append(row)
    return rows


def find_image(image_dir: PathLike, image_id: str) -> Optional[Path]:
    """Image file of an id, trying the id itself then the known extensions."""
    image_dir = Path(image_dir)
    direct = image_dir / image_id
    if direct.suffix.lower() in IMAGE_EXTENSIONS and direct.is_file():
        return direct
    for ext in IMAGE_EXTENSIONS:
        for candidate in (image_dir / f"{image_id}{ext}", image_dir / f"{image_id}{ext.upper()}"):
            if candidate.is_file():
                return candidate
    return None


def build_annotation(image_id: str, points: Dict[LandmarkClass, Tuple[float, float]], width: int, height: int,
                     geometry: Optional[GeometryConfig] = None) -> Annotation:
    """Annotation at native resolution with boxes synthesized from the centers.

    Raises:
        GeometryError: if a center lies outside the image
    """
    fields = {}
    for label in LANDMARK_CLASSES:
        if label not in points:
            continue
        x, y = points[label]
        if not point_in_bounds(x, y, width, height):
            raise GeometryError(f"{label.value} center ({x}, {y}) outside {width}x{height} image")
        point = LandmarkPoint(x=x, y=y, label=label)
        key = 'optic_disc' if label is LandmarkClass.OPTIC_DISC else 'fovea'
        fields[key] = point
        fields[f'{key}_box'] = center_to_box(point, (width, height), geometry)
    return Annotation(image_id=image_id, width=width, height=height, **fields)


def load_dataset(image_dir: PathLike, od_csv: Optional[PathLike] = None, fovea_csv: Optional[PathLike] = None,
                 combined_csv: Optional[PathLike] = None,
                 geometry: Optional[GeometryConfig] = None) -> List[DatasetRecord]:
    """Load images and their landmark centers.

    Either ``combined_csv`` (unified format) or both IDRiD CSVs must be
    given. Rows whose image file is missing or whose centers fall outside
    the image are skipped with a warning.

    Args:
        image_dir: Directory holding the images
        od_csv: IDRiD optic disc CSV
        fovea_csv: IDRiD fovea CSV
        combined_csv: Unified CSV
        geometry: Box priors for the synthesized boxes

    Returns:
        Records sorted by image id

    Raises:
        DataError: no CSV given, or no usable records
        ParseError: malformed CSV row
    """
    if combined_csv is not None:
        rows = read_unified_csv(combined_csv)
        source = str(combined_csv)
    elif od_csv is not None and fovea_csv is not None:
        rows = _join_idrid(od_csv, fovea_csv)
        source = f"{od_csv} + {fovea_csv}"
    else:
        raise DataError("load_dataset needs a combined CSV or both the optic disc and fovea CSVs")

    records, missing_files, rejected = [], 0, 0
    for row in rows:
        path = find_image(image_dir, row.image_id)
        if path is None:
            logger.warning(f"{source}:{row.line}: image '{row.image_id}' not found in {image_dir}, skipped")
            missing_files += 1
            continue
        width, height = image_size(path)
        try:
            annotation = build_annotation(row.image_id, row.points, width, height, geometry)
        except GeometryError as e:
            logger.warning(f"{source}:{row.line}: '{row.image_id}' rejected: {e}")
            rejected += 1
            continue
        missing = [label for label in LANDMARK_CLASSES if label not in row.points]
        records.append(DatasetRecord(image_path=str(path), native_width=width, native_height=height,
                                     annotation=annotation, missing=missing))

    if missing_files or rejected:
        logger.warning(f"{source}: {missing_files} rows without image, {rejected} rows rejected")
    if not records:
        raise DataError(f"No usable records in {source}")
    records.sort(key=lambda r: r.image_id)
    logger.info(f"Loaded {len(records)} images from {source}")
    return records


def _center_cells(ann: Annotation) -> List[str]:
    cells = []
    for label in LANDMARK_CLASSES:
        point = ann.point(label)
        cells += [_fmt(point.x), _fmt(point.y)] if point is not None else ['', '']
    return cells


def write_unified_csv(path: PathLike, annotations: Iterable[Annotation]) -> Path:
    """Write native-resolution centers with three decimals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(UNIFIED_HEADER)
        for ann in annotations:
            writer.writerow([ann.image_id] + _center_cells(ann))
    return path


PREDICTION_HEADER = UNIFIED_HEADER + ['working_w', 'working_h'] + [
    f'{prefix}_{name}' for prefix in ('od', 'fov')
    for name in ('score', 'x_min', 'y_min', 'x_max', 'y_max', 'fallback')
]


def write_predictions_csv(path: PathLike, records: Sequence[EvalRecord]) -> Path:
    """Write predictions: native centers, then the working-resolution detections.

    Records are written sorted by image id.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(PREDICTION_HEADER)
        for record in sorted(records, key=lambda r: r.image_id):
            row = [record.image_id]
            for label in LANDMARK_CLASSES:
                native = record.native_points.get(label)
                if native is None:
                    native = rescale_point(record.predicted_points[label],
                                           (record.working_width, record.working_height),
                                           (record.annotation.width, record.annotation.height))
                row += [_fmt(native.x), _fmt(native.y)]
            row += [str(record.working_width), str(record.working_height)]
            by_label = {d.label: d for d in record.detections}
            for label in LANDMARK_CLASSES:
                det = by_label.get(label)
                if det is None:
                    row += [''] * 6
                    continue
                row += [f"{det.score:.6f}"] + [_fmt(v) for v in det.box.as_tuple()]
                row.append('1' if record.fallback.get(label, det.fallback) else '0')
            writer.writerow(row)
    return path


def read_predictions_csv(path: PathLike, ground_truth: Dict[str, Annotation], working_size: int,
                         geometry: Optional[GeometryConfig] = None) -> List[EvalRecord]:
    """Pair a predictions CSV (or a bare unified CSV) with native ground truth.

    Without detection columns every prediction becomes a score-1 detection
    whose box is synthesized from the predicted center at ``working_size``.

    Raises:
        DataError: no prediction matches the ground truth
        ParseError: malformed row
    """
    header, body = _read_rows(path)
    if not is_unified_header(header):
        raise ParseError(f"expected at least the columns {','.join(UNIFIED_HEADER)}", str(path), 1)
    index = {h.lower(): i for i, h in enumerate(header)}
    has_boxes = all(name in index for name in PREDICTION_HEADER)

    records, unknown = [], 0
    for line, row in body:
        if len(row) < len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(row)}", str(path), line)
        image_id = row[index['image']].strip()
        ann = ground_truth.get(image_id)
        if ann is None:
            unknown += 1
            continue
        if has_boxes:
            work_w = int(_cell_float(row[index['working_w']], path, line, 'working_w'))
            work_h = int(_cell_float(row[index['working_h']], path, line, 'working_h'))
        else:
            work_w = work_h = working_size

        native, predicted, detections, fallback = {}, {}, [], {}
        for label in LANDMARK_CLASSES:
            prefix = COLUMN_PREFIX[label]
            x = _cell_float(row[index[f'{prefix}_x']], path, line, f'{prefix}_x')
            y = _cell_float(row[index[f'{prefix}_y']], path, line, f'{prefix}_y')
            if x is None or y is None:
                continue
            native[label] = LandmarkPoint(x=x, y=y, label=label)
            point = rescale_point(native[label], (ann.width, ann.height), (work_w, work_h))
            predicted[label] = point
            if has_boxes and row[index[f'{prefix}_score']].strip():
                coords = [_cell_float(row[index[f'{prefix}_{n}']], path, line, f'{prefix}_{n}')
                          for n in ('x_min', 'y_min', 'x_max', 'y_max')]
                flag = row[index[f'{prefix}_fallback']].strip() == '1'
                score = _cell_float(row[index[f'{prefix}_score']], path, line, f'{prefix}_score')
                try:
                    box = BBox.from_coords(coords)
                except GeometryError as e:
                    raise ParseError(f"{prefix} box: {e}", str(path), line)
                detections.append(Detection(label=label, score=min(max(score, 0.0), 1.0), box=box, fallback=flag))
                fallback[label] = flag
            else:
                inside = LandmarkPoint(x=min(max(point.x, 0.0), work_w), y=min(max(point.y, 0.0), work_h),
                                       label=label)
                detections.append(Detection(label=label, score=1.0,
                                            box=center_to_box(inside, (work_w, work_h), geometry)))
                fallback[label] = False
        records.append(EvalRecord(image_id=image_id, annotation=ann, working_width=work_w, working_height=work_h,
                                  detections=detections, predicted_points=predicted, native_points=native,
                                  fallback=fallback))

    if unknown:
        logger.warning(f"{path}: {unknown} predictions have no ground truth and were ignored")
    missing = sorted(set(ground_truth) - {r.image_id for r in records})
    if missing:
        logger.warning(f"{len(missing)} ground-truth images have no prediction: {missing[:5]}")
    if not records:
        raise DataError(f"No predictions in {path} match the ground truth")
    return records
