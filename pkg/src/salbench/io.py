"""File formats and 8-bit export.

Binary grids (``.sald``)::

    magic   4 bytes  b"SALD"
    version uint32   little-endian, currently 1
    height  uint32
    width   uint32
    payload height*width float64, little-endian, row-major

CSV tables use the headers ``stimulus_id,x,y`` (fixations, ``x`` = column,
``y`` = row) and ``stimulus_id,width,height`` (stimulus index). Floats are
written with 17 significant digits. All writes go to a temporary file that
is then renamed over the target.
"""

import csv
import io as _io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from ._validation import check_density, check_grid
from .core import FixationDataset, FixationSet, equalize
from .exceptions import FormatError, InvariantViolation, NumericError, SaliencyError

MAGIC = b"SALD"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
FIT_VERSION = 1


def fmt(value):
    return format(float(value), ".17g")


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_grid(grid):
    arr = check_grid(grid)
    h, w = arr.shape
    return _HEADER.pack(MAGIC, VERSION, h, w) + arr.astype("<f8").tobytes(order="C")


def decode_grid(data):
    if len(data) < _HEADER.size:
        raise FormatError("file too short for a SALD header")
    magic, version, h, w = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic bytes {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported SALD version {version}")
    expected = _HEADER.size + 8 * h * w
    if h < 1 or w < 1 or len(data) != expected:
        raise FormatError(f"payload size mismatch: header says {h}x{w}, file has {len(data)} bytes")
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(h, w).astype(np.float64)


def save_grid(path, grid):
    atomic_write(path, encode_grid(grid))


def load_grid(path):
    """Load a ``.sald`` grid, or an 8-bit image as floats in 0..255."""
    path = Path(path)
    if path.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"):
        return load_png8(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise SaliencyError(f"cannot read {path}: {exc}") from exc
    return decode_grid(data)


def save_density(path, density):
    save_grid(path, check_density(density))


def load_density(path):
    grid = load_grid(path)
    try:
        return check_density(grid)
    except NumericError as exc:
        raise InvariantViolation(f"{path}: {exc}") from exc


def quantize_256(saliency_map):
    """Replace values by their index among 256 equidistant bins over [min, max]."""
    arr = check_grid(saliency_map, "map")
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    bins = np.floor((arr - lo) / (hi - lo) * 256)
    return np.clip(bins, 0, 255)


def to_uint8(saliency_map, equalize_first=False):
    """Linear map of [min, max] onto 0..255 with round-half-up; constant maps give 128."""
    arr = check_grid(saliency_map, "map")
    if equalize_first:
        arr = equalize(arr)
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return np.full(arr.shape, 128, dtype=np.uint8)
    scaled = np.floor((arr - lo) / (hi - lo) * 255 + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def _png_bytes(image):
    buf = _io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


def export_png8(saliency_map, path, equalize_first=True):
    atomic_write(path, _png_bytes(Image.fromarray(to_uint8(saliency_map, equalize_first), mode="L")))


def load_png8(path):
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L"), dtype=np.float64)
    except OSError as exc:
        raise SaliencyError(f"cannot read image {path}: {exc}") from exc


def save_map(path, saliency_map, equalize_first=True):
    """Save by extension: ``.png`` as 8-bit (equalized by default), else ``.sald``."""
    if Path(path).suffix.lower() == ".png":
        export_png8(saliency_map, path, equalize_first)
    else:
        save_grid(path, saliency_map)


def _read_csv(path, header):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SaliencyError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(_io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise FormatError(f"{path}: empty file", line=1) from None
    if [c.strip() for c in first] != list(header):
        raise FormatError(f"{path}: expected header {','.join(header)}, got {','.join(first)}", line=1)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise FormatError(f"{path}: expected {len(header)} fields, got {len(row)}", line=lineno)
        yield lineno, [c.strip() for c in row]


def _parse_int(value, path, lineno, name):
    try:
        return int(value)
    except ValueError:
        raise FormatError(f"{path}: {name} {value!r} is not an integer", line=lineno) from None


def load_stimuli(path):
    """Stimulus index as an ordered dict ``id -> (height, width)``."""
    shapes = {}
    for lineno, (sid, w, h) in _read_csv(path, ("stimulus_id", "width", "height")):
        width = _parse_int(w, path, lineno, "width")
        height = _parse_int(h, path, lineno, "height")
        if sid in shapes:
            raise InvariantViolation(f"{path}: line {lineno}: duplicate stimulus id {sid!r}")
        if width < 1 or height < 1:
            raise InvariantViolation(f"{path}: line {lineno}: sizes must be positive")
        shapes[sid] = (height, width)
    return shapes


def save_stimuli(path, shapes):
    lines = ["stimulus_id,width,height"]
    lines += [f"{sid},{w},{h}" for sid, (h, w) in shapes.items()]
    atomic_write(path, "\n".join(lines) + "\n")


def load_fixations(path, stimuli_path):
    """Fixation table joined with its stimulus index into a :class:`FixationDataset`."""
    shapes = load_stimuli(stimuli_path)
    points = {sid: [] for sid in shapes}
    for lineno, (sid, x, y) in _read_csv(path, ("stimulus_id", "x", "y")):
        col = _parse_int(x, path, lineno, "x")
        row = _parse_int(y, path, lineno, "y")
        if sid not in shapes:
            raise InvariantViolation(f"{path}: line {lineno}: unknown stimulus {sid!r}")
        h, w = shapes[sid]
        if not (0 <= col < w and 0 <= row < h):
            raise InvariantViolation(
                f"{path}: line {lineno}: fixation (x={col}, y={row}) outside {w}x{h} stimulus {sid!r}"
            )
        points[sid].append((row, col))
    dataset = FixationDataset()
    for sid, shape in shapes.items():
        dataset.add(sid, shape, FixationSet.from_points(points[sid], sid))
    return dataset


def load_fixation_points(path, shape, stimulus_id=None):
    """All fixations of a table (or of one stimulus) checked against one grid shape."""
    h, w = shape
    points = []
    for lineno, (sid, x, y) in _read_csv(path, ("stimulus_id", "x", "y")):
        col = _parse_int(x, path, lineno, "x")
        row = _parse_int(y, path, lineno, "y")
        if stimulus_id is not None and sid != stimulus_id:
            continue
        if not (0 <= col < w and 0 <= row < h):
            raise InvariantViolation(f"{path}: line {lineno}: fixation (x={col}, y={row}) outside {w}x{h} grid")
        points.append((row, col))
    return FixationSet.from_points(points, stimulus_id or "")


def fixations_csv(fixation_sets):
    lines = ["stimulus_id,x,y"]
    for fix in fixation_sets:
        lines += [f"{fix.stimulus_id},{c},{r}" for r, c in zip(fix.rows.tolist(), fix.cols.tolist())]
    return "\n".join(lines) + "\n"


def save_fixations(path, fixation_sets):
    atomic_write(path, fixations_csv(fixation_sets))


def save_fit(path, fit):
    atomic_write(path, fit_to_text(fit))


def fit_to_text(fit):
    nl = fit.nonlinearity.knot_values
    cb = fit.cb_profile.knot_values
    lines = [
        "# saliency map to density conversion",
        f"version {FIT_VERSION}",
        f"segments_nl {nl.size - 1}",
        f"segments_cb {cb.size - 1}",
        f"alpha {fmt(fit.alpha)}",
        f"map_min {fmt(fit.map_min)}",
        f"map_max {fmt(fit.map_max)}",
        "nonlinearity " + " ".join(fmt(v) for v in nl),
        "cb_profile " + " ".join(fmt(v) for v in cb),
    ]
    return "\n".join(lines) + "\n"


def fit_from_text(text):
    from .probabilistic import PiecewiseLinearFn, ProbabilisticModelFit

    fields = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        fields[key] = (lineno, rest.split())
    required = ("version", "segments_nl", "segments_cb", "alpha", "map_min", "map_max",
                "nonlinearity", "cb_profile")
    for key in required:
        if key not in fields:
            raise FormatError(f"fit file lacks {key!r}")
    try:
        version = int(fields["version"][1][0])
        if version != FIT_VERSION:
            raise FormatError(f"unsupported fit version {version}", line=fields["version"][0])
        seg_nl = int(fields["segments_nl"][1][0])
        seg_cb = int(fields["segments_cb"][1][0])
        nl = [float(v) for v in fields["nonlinearity"][1]]
        cb = [float(v) for v in fields["cb_profile"][1]]
        alpha = float(fields["alpha"][1][0])
        lo = float(fields["map_min"][1][0])
        hi = float(fields["map_max"][1][0])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed fit file: {exc}") from None
    if len(nl) != seg_nl + 1:
        raise FormatError("nonlinearity knot count does not match segments_nl",
                          line=fields["nonlinearity"][0])
    if len(cb) != seg_cb + 1:
        raise FormatError("cb_profile knot count does not match segments_cb", line=fields["cb_profile"][0])
    try:
        return ProbabilisticModelFit(
            nonlinearity=PiecewiseLinearFn(np.array(nl), monotone=True),
            cb_profile=PiecewiseLinearFn(np.array(cb)),
            alpha=alpha,
            map_min=lo,
            map_max=hi,
        )
    except ValueError as exc:
        raise InvariantViolation(str(exc)) from None


def load_fit(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SaliencyError(f"cannot read {path}: {exc}") from exc
    return fit_from_text(text)


def density_quartiles(density):
    """Split pixels into four areas of equal probability mass.

    Pixels are ranked by decreasing density (ties by flat pixel index);
    a pixel belongs to area ``k`` when the mass of all higher-ranked pixels
    has reached ``k / 4``. Returns the area label grid (0 = densest) and the
    three density values where areas 1, 2 and 3 begin.
    """
    density = check_density(density)
    flat = density.ravel()
    order = np.argsort(-flat, kind="stable")
    cum_before = np.concatenate([[0.0], np.cumsum(flat[order])[:-1]])
    cuts = np.array([0.25, 0.5, 0.75])
    sorted_area = np.searchsorted(cuts - 1e-12, cum_before, side="right")
    labels = np.empty(flat.size, dtype=np.int64)
    labels[order] = sorted_area
    thresholds = []
    for k in (1, 2, 3):
        first = np.flatnonzero(sorted_area >= k)
        thresholds.append(float(flat[order[first[0]]]) if first.size else 0.0)
    return labels.reshape(density.shape), thresholds


def quartile_report(labels, fixations):
    """Per-area fixation counts with the expected count and its binomial spread."""
    counts = np.bincount(labels[fixations.rows, fixations.cols], minlength=4)
    n = len(fixations)
    return {
        "counts": counts.tolist(),
        "expected": n / 4,
        "std": float(np.sqrt(n * 0.25 * 0.75)),
    }


_SHADES = np.array([40, 100, 160, 220], dtype=np.uint8)


def render_density_quartiles(density, fixations=None):
    """Shaded RGB image of the equal-mass areas with boundaries and fixations.

    Returns ``(image, thresholds, report)``; ``report`` is ``None`` without
    fixations.
    """
    labels, thresholds = density_quartiles(density)
    gray = _SHADES[labels]
    rgb = np.stack([gray, gray, gray], axis=-1)
    edge = np.zeros(labels.shape, dtype=bool)
    edge[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    edge[1:, :] |= labels[1:, :] != labels[:-1, :]
    rgb[edge] = (230, 60, 40)
    report = None
    if fixations is not None:
        rgb[fixations.rows, fixations.cols] = (40, 120, 255)
        report = quartile_report(labels, fixations)
    return Image.fromarray(rgb, mode="RGB"), thresholds, report


def save_image(path, image):
    atomic_write(path, _png_bytes(image))
