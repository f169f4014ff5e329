"""Procedural street-scene analogs: densely labelled 32x32 images.

A scene is a stack of horizontal layers (sky, an upper band split between two
classes, sidewalk, road, optional terrain wedge) followed by ``K`` foreground
shapes whose classes are drawn from ``class_frequency_weights``. Masks are
produced from the same rasterisation as the image so they match exactly.
Appearance = class palette colour + class texture + noise + weather.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from odics.errors import ConfigurationError

IGNORE_INDEX = 255
CANVAS = 32

TARGET_CLASSES = (
    "road", "sidewalk", "building", "wall", "fence", "pole", "traffic light",
    "traffic sign", "vegetation", "terrain", "sky", "person", "rider", "car",
    "truck", "bus", "train", "motorcycle", "bicycle",
)

# Texture codes: 0 flat, 1 horizontal stripes, 2 vertical stripes, 3 checker,
# 4 diagonal, 5 anti-diagonal, 6 coarse horizontal, 7 coarse vertical, 8 dots.
NUM_TEXTURES = 9


@dataclass(frozen=True)
class LabelSpaceSpec:
    names: tuple[str, ...]
    ignore_index: int = IGNORE_INDEX

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ConfigurationError("class names must be unique")
        if 0 <= self.ignore_index < len(self.names):
            raise ConfigurationError("ignore_index must lie outside the class id range")

    def __len__(self):
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigurationError(f"unknown class name {name!r}") from None

    @property
    def classes(self) -> list[tuple[int, str]]:
        return list(enumerate(self.names))


TARGET_SPACE = LabelSpaceSpec(TARGET_CLASSES)


@dataclass(frozen=True)
class ShapePrior:
    kind: str  # "rect" | "circle" | "triangle"
    height: tuple[int, int]
    width: tuple[int, int]
    # vertical placement of the shape's bottom edge, as fractions of the canvas
    bottom: tuple[float, float] = (0.55, 1.0)


@dataclass(frozen=True)
class Layout:
    """Class ids for the layered background; ``None`` disables a layer."""

    sky: int
    upper: tuple[int, int]
    road: int
    sidewalk: int | None = None
    terrain: int | None = None
    road_marking: int | None = None
    horizon: tuple[float, float] = (0.30, 0.45)
    band: tuple[float, float] = (0.15, 0.25)


@dataclass(frozen=True)
class DomainSpec:
    name: str
    label_space: LabelSpaceSpec
    palette: tuple[tuple[float, float, float], ...]
    textures: tuple[int, ...]
    class_frequency_weights: tuple[float, ...]
    shape_priors: dict
    layout: Layout
    texture_noise_sigma: float = 0.03
    texture_amplitude: float = 0.12
    shape_count_range: tuple[int, int] = (3, 6)
    weather: dict = field(default_factory=dict)  # {"fog"|"rain"|"snow": strength}
    camera_jitter: float = 0.03
    palette_jitter: float = 0.0  # per-sample colour randomisation (simulator style)
    brightness: float = 1.0
    seed_namespace: str = ""

    def __post_init__(self):
        c = len(self.label_space)
        if len(self.palette) != c or len(self.textures) != c or len(self.class_frequency_weights) != c:
            raise ConfigurationError(f"{self.name}: palette/textures/weights must have {c} entries")
        w = np.asarray(self.class_frequency_weights, dtype=float)
        if (w < 0).any() or (w > 0).sum() < 1:
            raise ConfigurationError(f"{self.name}: weights must be nonnegative with a positive entry")
        pal = np.asarray(self.palette, dtype=float)
        if (pal < 0).any() or (pal > 1).any():
            raise ConfigurationError(f"{self.name}: palette colours must lie in [0,1]^3")
        if self.texture_noise_sigma < 0:
            raise ConfigurationError(f"{self.name}: texture_noise_sigma must be >= 0")
        for cls, w_c in enumerate(self.class_frequency_weights):
            if w_c > 0 and cls not in self.shape_priors:
                raise ConfigurationError(f"{self.name}: class {self.label_space.names[cls]!r} has weight but no shape prior")
        lo, hi = self.shape_count_range
        if not 0 <= lo <= hi:
            raise ConfigurationError(f"{self.name}: bad shape_count_range {self.shape_count_range}")

    def __hash__(self):
        return hash((self.name, self.seed_namespace))


@dataclass
class LabeledSample:
    image: np.ndarray  # (3, H, W) in [0, 1]
    mask: np.ndarray  # (H, W) uint8, ignore = 255
    domain_tag: str
    seed: int = -1


def _sample_rng(spec: DomainSpec, sample_seed: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{spec.seed_namespace or spec.name}:{sample_seed}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _texture_field(code: int, size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size]
    patterns = {
        0: np.zeros((size, size)),
        1: (y % 2) * 2.0 - 1,
        2: (x % 2) * 2.0 - 1,
        3: ((x + y) % 2) * 2.0 - 1,
        4: (((x + y) // 2) % 2) * 2.0 - 1,
        5: (((x - y) // 2) % 2) * 2.0 - 1,
        6: ((y // 2) % 2) * 2.0 - 1,
        7: ((x // 2) % 2) * 2.0 - 1,
        8: np.where((x % 3 == 0) & (y % 3 == 0), 1.0, -0.25),
    }
    return patterns[code % NUM_TEXTURES]


_TEXTURES = np.stack([_texture_field(i, CANVAS) for i in range(NUM_TEXTURES)])


def _draw_shape(mask: np.ndarray, cls: int, prior: ShapePrior, rng: np.random.Generator) -> None:
    size = mask.shape[0]
    h = int(rng.integers(prior.height[0], prior.height[1] + 1))
    w = int(rng.integers(prior.width[0], prior.width[1] + 1))
    bottom = int(round(rng.uniform(*prior.bottom) * size))
    left = int(rng.integers(-w // 2, size - w // 2))
    top = bottom - h
    yy, xx = np.mgrid[0:size, 0:size]
    if prior.kind == "rect":
        region = (yy >= top) & (yy < bottom) & (xx >= left) & (xx < left + w)
    elif prior.kind == "circle":
        cy, cx = top + h / 2.0, left + w / 2.0
        region = ((yy + 0.5 - cy) / (h / 2.0)) ** 2 + ((xx + 0.5 - cx) / (w / 2.0)) ** 2 <= 1.0
    elif prior.kind == "triangle":
        # apex at top centre, base on the bottom edge
        frac = (yy + 0.5 - top) / max(h, 1)
        half = frac * w / 2.0
        cx = left + w / 2.0
        region = (frac >= 0) & (frac <= 1) & (np.abs(xx + 0.5 - cx) <= half)
    else:
        raise ConfigurationError(f"unknown shape kind {prior.kind!r}")
    mask[region] = cls


def render_mask(spec: DomainSpec, rng: np.random.Generator, size: int = CANVAS) -> np.ndarray:
    lay = spec.layout
    mask = np.empty((size, size), dtype=np.int64)
    jitter = rng.normal(0.0, spec.camera_jitter)
    horizon = int(np.clip(round((rng.uniform(*lay.horizon) + jitter) * size), 2, size - 8))
    ground = int(np.clip(horizon + round(rng.uniform(*lay.band) * size), horizon + 1, size - 4))
    mask[:horizon] = lay.sky
    split = int(rng.integers(size // 4, 3 * size // 4))
    left_cls, right_cls = (lay.upper if rng.random() < 0.5 else lay.upper[::-1])
    mask[horizon:ground, :split] = left_cls
    mask[horizon:ground, split:] = right_cls
    mask[ground:] = lay.road
    if lay.sidewalk is not None:
        mask[ground:ground + int(rng.integers(2, 5))] = lay.sidewalk
    if lay.terrain is not None and rng.random() < 0.7:
        width = int(rng.integers(4, 11))
        yy, xx = np.mgrid[0:size, 0:size]
        wedge = (yy >= ground) & ((xx < width + (yy - ground) // 2) if rng.random() < 0.5
                                  else (xx >= size - width - (yy - ground) // 2))
        mask[wedge] = lay.terrain
    if lay.road_marking is not None:
        row = int(rng.integers(ground + 4, size - 1)) if ground + 4 < size - 1 else size - 2
        dash = (np.arange(size) // 3) % 2 == 0
        mask[row, dash & (mask[row] == lay.road)] = lay.road_marking
    weights = np.asarray(spec.class_frequency_weights, dtype=float)
    if weights.sum() > 0:
        probs = weights / weights.sum()
        k = int(rng.integers(spec.shape_count_range[0], spec.shape_count_range[1] + 1))
        for cls in rng.choice(len(probs), size=k, p=probs):
            _draw_shape(mask, int(cls), spec.shape_priors[int(cls)], rng)
    return mask


def render_image(spec: DomainSpec, mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    size = mask.shape[0]
    palette = np.asarray(spec.palette, dtype=float)
    if spec.palette_jitter > 0:
        palette = np.clip(palette + rng.normal(0.0, spec.palette_jitter, palette.shape), 0.0, 1.0)
    textures = np.asarray(spec.textures)
    safe = np.where(mask == IGNORE_INDEX, 0, mask)
    img = palette[safe].transpose(2, 0, 1) * spec.brightness
    tex = _TEXTURES[textures[safe] % NUM_TEXTURES, np.arange(size)[:, None], np.arange(size)[None, :]]
    img = img + spec.texture_amplitude * tex[None]
    if spec.texture_noise_sigma > 0:
        img = img + rng.normal(0.0, spec.texture_noise_sigma, img.shape)
    img = _apply_weather(img, spec.weather, rng)
    return np.clip(img, 0.0, 1.0)


def _low_freq_field(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = rng.random((5, 5))
    idx = np.linspace(0, 4, size)
    i0 = np.floor(idx).astype(int).clip(0, 3)
    f = idx - i0
    rows = coarse[i0] * (1 - f)[:, None] + coarse[i0 + 1] * f[:, None]
    return rows[:, i0] * (1 - f)[None, :] + rows[:, i0 + 1] * f[None, :]


def _apply_weather(img: np.ndarray, weather: dict, rng: np.random.Generator) -> np.ndarray:
    if not weather:
        return img
    size = img.shape[-1]
    kinds = sorted(weather)
    kind = kinds[int(rng.integers(len(kinds)))]
    strength = float(weather[kind])
    if kind == "fog":
        field = 0.5 + 0.5 * _low_freq_field(rng, size)
        alpha = strength * field
        img = img * (1 - alpha) + 0.75 * alpha
    elif kind == "rain":
        img = img - 0.5 * strength * _low_freq_field(rng, size)
        cols = rng.random(size) < 0.25
        streak = (rng.random((size, size)) < 0.5) & cols[None, :]
        img = np.where(streak[None], img + 0.6 * strength, img)
    elif kind == "snow":
        img = img + 0.3 * strength * _low_freq_field(rng, size)
        flakes = rng.random((size, size)) < 0.08 * strength
        img = np.where(flakes[None], 1.0, img)
    elif kind == "night":
        img = img * (1 - 0.6 * strength)
    else:
        raise ConfigurationError(f"unknown weather overlay {kind!r}")
    return img


def generate_sample(spec: DomainSpec, sample_seed: int) -> LabeledSample:
    """Deterministic in ``(spec, sample_seed)``."""
    rng = _sample_rng(spec, sample_seed)
    mask = render_mask(spec, rng)
    image = render_image(spec, mask, rng)
    return LabeledSample(image=image, mask=mask.astype(np.uint8), domain_tag=spec.name, seed=sample_seed)


def generate_batch(spec: DomainSpec, seeds) -> tuple[np.ndarray, np.ndarray]:
    samples = [generate_sample(spec, int(s)) for s in seeds]
    return stack_samples(samples)


def stack_samples(samples, dtype="float64") -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0, 3, CANVAS, CANVAS), dtype=dtype), np.zeros((0, CANVAS, CANVAS), dtype=np.int64)
    images = np.stack([s.image for s in samples]).astype(dtype, copy=False)
    masks = np.stack([s.mask for s in samples]).astype(np.int64)
    return images, masks


def make_split(spec: DomainSpec, train_count: int, test_count: int) -> tuple[range, range]:
    """Disjoint seed ranges: train ``[0, n_train)``, test ``[n_train, n_train + n_test)``."""
    if train_count <= 0 or test_count <= 0:
        raise ConfigurationError("train_count and test_count must be positive")
    return range(0, train_count), range(train_count, train_count + test_count)


# ---------------------------------------------------------------------------
# presets

_BASE_PALETTE = {
    "road": (0.35, 0.33, 0.38),
    "sidewalk": (0.78, 0.55, 0.75),
    "building": (0.45, 0.42, 0.30),
    "wall": (0.62, 0.62, 0.42),
    "fence": (0.75, 0.62, 0.55),
    "pole": (0.60, 0.60, 0.60),
    "traffic light": (0.95, 0.65, 0.15),
    "traffic sign": (0.88, 0.88, 0.10),
    "vegetation": (0.25, 0.55, 0.15),
    "terrain": (0.60, 0.80, 0.45),
    "sky": (0.30, 0.55, 0.85),
    "person": (0.85, 0.10, 0.25),
    "rider": (1.00, 0.20, 0.10),
    "car": (0.10, 0.10, 0.65),
    "truck": (0.10, 0.15, 0.30),
    "bus": (0.10, 0.40, 0.45),
    "train": (0.15, 0.55, 0.65),
    "motorcycle": (0.20, 0.05, 0.90),
    "bicycle": (0.55, 0.10, 0.35),
}

_BASE_TEXTURE = {
    "road": 0, "sidewalk": 3, "building": 6, "wall": 7, "fence": 2, "pole": 1,
    "traffic light": 8, "traffic sign": 0, "vegetation": 4, "terrain": 5, "sky": 0,
    "person": 1, "rider": 3, "car": 6, "truck": 7, "bus": 2, "train": 4,
    "motorcycle": 5, "bicycle": 8,
}

_SHAPES = {
    "wall": ShapePrior("rect", (6, 12), (8, 16), (0.45, 0.75)),
    "fence": ShapePrior("rect", (3, 6), (8, 18), (0.55, 0.85)),
    "pole": ShapePrior("rect", (10, 20), (1, 2), (0.6, 0.95)),
    "traffic light": ShapePrior("rect", (4, 6), (2, 3), (0.2, 0.45)),
    "traffic sign": ShapePrior("triangle", (4, 7), (4, 7), (0.2, 0.5)),
    "person": ShapePrior("rect", (6, 10), (2, 4), (0.65, 1.0)),
    "rider": ShapePrior("rect", (5, 8), (3, 4), (0.6, 0.95)),
    "car": ShapePrior("rect", (4, 7), (7, 12), (0.7, 1.0)),
    "truck": ShapePrior("rect", (7, 10), (9, 14), (0.65, 1.0)),
    "bus": ShapePrior("rect", (8, 11), (12, 18), (0.65, 1.0)),
    "train": ShapePrior("rect", (6, 9), (16, 24), (0.55, 0.8)),
    "motorcycle": ShapePrior("circle", (3, 5), (4, 6), (0.75, 1.0)),
    "bicycle": ShapePrior("circle", (3, 5), (4, 6), (0.7, 1.0)),
}

_LAYER_CLASSES = ("road", "sidewalk", "building", "vegetation", "terrain", "sky")

# base foreground frequency weights (CS analog); strictly decreasing
_BASE_WEIGHTS = {
    "car": 13, "person": 12, "pole": 11, "traffic sign": 10, "fence": 9,
    "bicycle": 8, "wall": 7, "traffic light": 6, "truck": 5, "rider": 4,
    "bus": 3, "motorcycle": 2, "train": 1,
}


def _target_layout() -> Layout:
    t = TARGET_SPACE.id_of
    return Layout(sky=t("sky"), upper=(t("building"), t("vegetation")), road=t("road"),
                  sidewalk=t("sidewalk"), terrain=t("terrain"))


def _shifted_palette(shift_seed: int, magnitude: float, hue_mix: float = 0.0) -> tuple:
    """Per-class colour offsets plus an optional global channel mixing."""
    rng = np.random.default_rng(shift_seed)
    base = np.array([_BASE_PALETTE[n] for n in TARGET_CLASSES])
    if hue_mix:
        rot = np.roll(np.eye(3), 1, axis=1)
        base = (1 - hue_mix) * base + hue_mix * base @ rot
    pal = np.clip(base + rng.uniform(-magnitude, magnitude, base.shape), 0.02, 0.98)
    return tuple(tuple(float(v) for v in row) for row in pal)


def _weights(overrides: dict | None = None) -> tuple[float, ...]:
    w = dict(_BASE_WEIGHTS)
    w.update(overrides or {})
    return tuple(float(w.get(n, 0.0)) for n in TARGET_CLASSES)


def _target_priors() -> dict:
    return {TARGET_SPACE.id_of(n): p for n, p in _SHAPES.items()}


# knobs controlling how far the four real domains drift from each other
REAL_SHIFT = {
    "cs": dict(seed=11, magnitude=0.0, hue_mix=0.0),
    "idd": dict(seed=23, magnitude=0.22, hue_mix=0.35),
    "bdd": dict(seed=37, magnitude=0.22, hue_mix=0.65),
    "acdc": dict(seed=41, magnitude=0.22, hue_mix=1.0),
}


def real_domain_presets() -> list[DomainSpec]:
    """Four real-stream analogs in publication order (CS, IDD, BDD, ACDC)."""
    textures = tuple(_BASE_TEXTURE[n] for n in TARGET_CLASSES)
    common = dict(label_space=TARGET_SPACE, textures=textures, shape_priors=_target_priors(),
                  layout=_target_layout())
    specs = []
    for name, weights, extra in (
        ("cs", _weights(), dict(texture_noise_sigma=0.03)),
        # vehicle-heavy traffic mix
        ("idd", _weights({"motorcycle": 16, "truck": 15, "car": 14, "bus": 9, "rider": 10, "bicycle": 3,
                          "traffic light": 1.5, "train": 0.5}),
         dict(texture_noise_sigma=0.05, camera_jitter=0.05, shape_count_range=(4, 8))),
        ("bdd", _weights({"car": 15, "traffic light": 11, "traffic sign": 9, "person": 7}),
         dict(texture_noise_sigma=0.04, brightness=0.85)),
        ("acdc", _weights(), dict(texture_noise_sigma=0.05, weather={"fog": 0.45, "rain": 0.35, "snow": 0.5})),
    ):
        shift = REAL_SHIFT[name]
        pal = _shifted_palette(shift["seed"], shift["magnitude"], shift["hue_mix"])
        specs.append(DomainSpec(name=name, palette=pal, class_frequency_weights=weights,
                                seed_namespace=f"real/{name}", **common, **extra))
    return specs


# Simulator label spaces follow the two relabeling tables, one per simulator.
SIM_A_CLASSES = (
    "Unlabeled", "Building", "Fence", "Other", "Pedestrian", "Pole", "Road Line", "Road",
    "Side Walk", "Vegetation", "Vehicles", "Wall", "Traffic Sign", "Sky", "Ground", "Bridge",
    "Rail Track", "Guard Rail", "Traffic Light", "Static", "Dynamic", "Water", "Terrain",
)
SIM_B_CLASSES = (
    "Ambiguous", "Sky", "Road", "Side Walk", "Rail Track", "Terrain", "Tree", "Vegetation",
    "Building", "Infrastructure", "Fence", "Billboard", "Traffic Light", "Traffic Sign",
    "Mobile barrier", "Fire Hydrant", "Chair", "Trash", "Trash Can", "Person", "Animal",
    "Bicycle", "Motorcycle", "Car", "Van", "Bus", "Truck", "Trailer", "Train", "Plane", "Boat",
)
SIM_A_SPACE = LabelSpaceSpec(SIM_A_CLASSES)
SIM_B_SPACE = LabelSpaceSpec(SIM_B_CLASSES)

# which target class each simulator class *looks like*; None -> own appearance
_SIM_A_LOOKS = {
    "Building": "building", "Fence": "fence", "Pedestrian": "person", "Pole": "pole",
    "Road Line": "road", "Road": "road", "Side Walk": "sidewalk", "Vegetation": "vegetation",
    "Vehicles": "car", "Wall": "wall", "Traffic Sign": "traffic sign", "Sky": "sky",
    "Traffic Light": "traffic light", "Terrain": "terrain",
}
_SIM_B_LOOKS = {
    "Sky": "sky", "Road": "road", "Side Walk": "sidewalk", "Terrain": "terrain", "Tree": "vegetation",
    "Vegetation": "vegetation", "Building": "building", "Fence": "fence",
    "Traffic Light": "traffic light", "Traffic Sign": "traffic sign", "Person": "person",
    "Bicycle": "bicycle", "Motorcycle": "motorcycle", "Car": "car", "Van": "car", "Bus": "bus",
    "Truck": "truck", "Train": "train",
}


def _sim_spec(name: str, space: LabelSpaceSpec, looks: dict, weights: dict, layout_names: dict,
              style: dict, palette_seed: int) -> DomainSpec:
    rng = np.random.default_rng(palette_seed)
    palette, textures, priors, w = [], [], {}, []
    for cls, cname in space.classes:
        tgt = looks.get(cname)
        if tgt is not None:
            palette.append(_BASE_PALETTE[tgt])
            textures.append(_BASE_TEXTURE[tgt])
        else:
            palette.append(tuple(float(v) for v in rng.uniform(0.05, 0.95, 3)))
            textures.append(int(rng.integers(NUM_TEXTURES)))
        wt = float(weights.get(cname, 0.0))
        w.append(wt)
        if wt > 0:
            priors[cls] = _SHAPES.get(tgt, ShapePrior("rect", (3, 8), (3, 10), (0.5, 1.0)))
    lay = Layout(**{k: (tuple(space.id_of(n) for n in v) if isinstance(v, tuple) else
                        (space.id_of(v) if isinstance(v, str) else v))
                    for k, v in layout_names.items()})
    return DomainSpec(name=name, label_space=space, palette=tuple(palette), textures=tuple(textures),
                      class_frequency_weights=tuple(w), shape_priors=priors, layout=lay,
                      seed_namespace=f"sim/{name}", **style)


def sim_domain_presets() -> list[DomainSpec]:
    """Two simulator analogs with their own label spaces (23 and 31 classes)."""
    sim_a = _sim_spec(
        "SimA", SIM_A_SPACE, _SIM_A_LOOKS,
        weights={"Vehicles": 12, "Pedestrian": 10, "Pole": 9, "Traffic Sign": 7, "Fence": 6,
                 "Wall": 6, "Traffic Light": 5, "Static": 4, "Dynamic": 3, "Guard Rail": 3,
                 "Other": 2, "Water": 1},
        layout_names=dict(sky="Sky", upper=("Building", "Vegetation"), road="Road",
                          sidewalk="Side Walk", terrain="Terrain", road_marking="Road Line"),
        style=dict(texture_noise_sigma=0.01, palette_jitter=0.12, camera_jitter=0.06,
                   shape_count_range=(3, 7)),
        palette_seed=101,
    )
    sim_b = _sim_spec(
        "SimB", SIM_B_SPACE, _SIM_B_LOOKS,
        weights={"Car": 12, "Person": 11, "Van": 6, "Truck": 6, "Bus": 4, "Motorcycle": 4,
                 "Bicycle": 4, "Train": 2, "Fence": 7, "Traffic Sign": 7, "Traffic Light": 5,
                 "Billboard": 3, "Trash Can": 2, "Fire Hydrant": 2, "Animal": 1},
        layout_names=dict(sky="Sky", upper=("Building", "Tree"), road="Road",
                          sidewalk="Side Walk", terrain="Terrain"),
        style=dict(texture_noise_sigma=0.04, palette_jitter=0.15, camera_jitter=0.05,
                   shape_count_range=(3, 8), weather={"fog": 0.3, "night": 0.4}),
        palette_seed=202,
    )
    return [sim_a, sim_b]


def preset_by_name(name: str) -> DomainSpec:
    for spec in real_domain_presets() + sim_domain_presets():
        if spec.name.lower() == name.lower():
            return spec
    raise ConfigurationError(f"unknown domain preset {name!r}")


def with_weights(spec: DomainSpec, weights) -> DomainSpec:
    """Copy of ``spec`` with new foreground weights (priors added where missing)."""
    priors = dict(spec.shape_priors)
    for cls, w in enumerate(weights):
        if w > 0 and cls not in priors:
            priors[cls] = ShapePrior("rect", (3, 8), (3, 8))
    return replace(spec, class_frequency_weights=tuple(float(w) for w in weights), shape_priors=priors)
