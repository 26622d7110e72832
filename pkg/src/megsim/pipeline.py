"""Deterministic linear stand-in for the generative model.

The pipeline is built from seeded orthonormal matrices so that every protocol
manipulation has exact linear-algebra semantics: encoding/decoding round-trips
are lossless, seed-space generation preserves norms, cooperative sub-seed
merges reproduce the monolithic result exactly, and channel noise propagates
to pixel distortion in closed form (MSE = ||n||^2 / N).

Stages:
  infer     image + prompt -> task seed         (feature extraction)
  generate  task seed -> content seed           (seed-to-seed generation)
  decode    content seed -> image               (reconstruction)
  sketch    content seed -> low-res draft       (draft creation)
  complete  draft -> image                      (draft refinement, bilinear)
plus split/merge of sub-seeds and tiling/stitching of sketches for the
cooperative multi-server workflows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .content import ContentGrid, LatentSeed, SketchGrid, TextPrompt


@dataclass(frozen=True)
class PipelineParams:
    """Free parameters of the toy pipeline.

    ``basis_seed`` generates the image basis B (N x d, orthonormal columns),
    ``gen_seed`` the shared latent generator Q (d x d orthogonal), and each
    entry of ``es_gen_seeds`` a per-server variant of Q for model diversity.
    """

    latent_dim: int = 64
    height: int = 64
    width: int = 64
    pool_factor: int = 8
    basis_seed: int = 101
    gen_seed: int = 202
    es_gen_seeds: tuple[int, ...] = ()
    text_dim: int = 8
    text_seed: int = 303
    text_mix_weight: float = 0.25

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.height < 1 or self.width < 1:
            raise ValueError("image dimensions must be >= 1")
        n = self.height * self.width
        if self.latent_dim > n:
            raise ValueError(f"latent_dim {self.latent_dim} exceeds pixel count {n}")
        if self.pool_factor < 1:
            raise ValueError("pool_factor must be >= 1")
        if self.height % self.pool_factor or self.width % self.pool_factor:
            raise ValueError(
                f"pool_factor {self.pool_factor} must divide height and width"
            )
        if not 0.0 <= self.text_mix_weight <= 1.0:
            raise ValueError("text_mix_weight must be in [0, 1]")
        if self.text_dim < 1:
            raise ValueError("text_dim must be >= 1")
        object.__setattr__(self, "es_gen_seeds", tuple(self.es_gen_seeds or ()))


def _orthonormal_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    gaussian = rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(gaussian)
    # fix the QR sign ambiguity so the matrix is a well-defined function of the seed
    q = q * np.sign(np.diag(r))
    q.setflags(write=False)
    return q


class Pipeline:
    """Immutable bundle of the pipeline matrices. Build via :func:`build_pipeline`."""

    def __init__(self, params: PipelineParams, basis, generator, es_generators, text_proj):
        self.params = params
        self.basis = basis
        self.generator = generator
        self.es_generators = es_generators
        self.text_proj = text_proj

    @property
    def pixel_count(self) -> int:
        return self.params.height * self.params.width

    @property
    def sketch_shape(self) -> tuple[int, int]:
        k = self.params.pool_factor
        return self.params.height // k, self.params.width // k

    def generator_for(self, es_index: int | None) -> np.ndarray:
        """Shared Q, or the per-server Q when an index is given."""
        if es_index is None:
            return self.generator
        if not 0 <= es_index < len(self.es_generators):
            raise ValueError(f"no generator configured for server index {es_index}")
        return self.es_generators[es_index]


def build_pipeline(params: PipelineParams) -> Pipeline:
    """Construct the pipeline; identical params give bit-identical matrices."""
    n = params.height * params.width
    d = params.latent_dim
    basis = _orthonormal_columns(
        np.random.Generator(np.random.PCG64(params.basis_seed)), n, d
    )
    generator = _orthonormal_columns(
        np.random.Generator(np.random.PCG64(params.gen_seed)), d, d
    )
    es_generators = tuple(
        _orthonormal_columns(np.random.Generator(np.random.PCG64(seed)), d, d)
        for seed in params.es_gen_seeds
    )
    text_proj = np.random.Generator(np.random.PCG64(params.text_seed)).standard_normal(
        (d, params.text_dim)
    ) / np.sqrt(params.text_dim)
    text_proj.setflags(write=False)
    return Pipeline(params, basis, generator, es_generators, text_proj)


def infer(image: ContentGrid, prompt: TextPrompt, pipe: Pipeline) -> LatentSeed:
    """Extract the task seed: z = B^T (x - 0.5) + alpha * proj(embedding)."""
    p = pipe.params
    if (image.height, image.width) != (p.height, p.width):
        raise ValueError(
            f"image is {image.height}x{image.width}, pipeline expects {p.height}x{p.width}"
        )
    if prompt.embedding.size != p.text_dim:
        raise ValueError(
            f"embedding dim {prompt.embedding.size} does not match text_dim {p.text_dim}"
        )
    centered = image.values.ravel() - 0.5
    z = pipe.basis.T @ centered + p.text_mix_weight * (pipe.text_proj @ prompt.embedding)
    return LatentSeed(values=z, kind="task_seed")


def generate(seed: LatentSeed, pipe: Pipeline, es_index: int | None = None) -> LatentSeed:
    """Seed-to-seed generation z' = Q z; norm-preserving."""
    if seed.kind != "task_seed":
        raise ValueError(f"generate expects a task_seed, got {seed.kind}")
    if seed.dim != pipe.params.latent_dim:
        raise ValueError("seed dimension does not match pipeline")
    q = pipe.generator_for(es_index)
    return LatentSeed(values=q @ seed.values, kind="content_seed",
                      bits_per_feature=seed.bits_per_feature)


def decode(seed: LatentSeed, pipe: Pipeline) -> ContentGrid:
    """Reconstruct the image x = 0.5 + B z; values are clamped only at export."""
    if seed.kind == "sub_seed":
        raise ValueError("sub-seeds must be merged before decoding")
    if seed.kind != "content_seed":
        raise ValueError(f"decode expects a content_seed, got {seed.kind}")
    if seed.dim != pipe.params.latent_dim:
        raise ValueError("seed dimension does not match pipeline")
    p = pipe.params
    flat = 0.5 + pipe.basis @ seed.values
    return ContentGrid(height=p.height, width=p.width,
                       values=flat.reshape(p.height, p.width))


def _pool(values: np.ndarray, k: int) -> np.ndarray:
    h, w = values.shape
    return values.reshape(h // k, k, w // k, k).mean(axis=(1, 3))


def sketch(seed: LatentSeed, pipe: Pipeline) -> SketchGrid:
    """Decode then average-pool by the pipeline's pool factor."""
    grid = decode(seed, pipe)
    k = pipe.params.pool_factor
    return SketchGrid(values=_pool(grid.values, k), pool_factor=k)


def _axis_upsample(values: np.ndarray, k: int, out_len: int, axis: int) -> np.ndarray:
    src_len = values.shape[axis]
    pos = np.clip((np.arange(out_len) + 0.5) / k - 0.5, 0.0, src_len - 1.0)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, src_len - 1)
    w = pos - lo
    taken_lo = np.take(values, lo, axis=axis)
    taken_hi = np.take(values, hi, axis=axis)
    shape = [1, 1]
    shape[axis] = out_len
    w = w.reshape(shape)
    return taken_lo * (1.0 - w) + taken_hi * w


def complete(sk: SketchGrid, pipe: Pipeline) -> ContentGrid:
    """Bilinear upsampling of a full sketch back to the pipeline's image size."""
    if sk.tile_range is not None:
        raise ValueError("tiles must be stitched into a full sketch before completion")
    p = pipe.params
    hs, ws = pipe.sketch_shape
    if sk.values.shape != (hs, ws):
        raise ValueError(
            f"sketch is {sk.values.shape}, pipeline expects {(hs, ws)}"
        )
    k = p.pool_factor
    up = _axis_upsample(sk.values, k, p.height, axis=0)
    up = _axis_upsample(up, k, p.width, axis=1)
    return ContentGrid(height=p.height, width=p.width, values=up)


def split_ranges(total: int, parts: int) -> list[tuple[int, int]]:
    """Contiguous partition of [0, total) into ``parts`` ranges, sizes within 1.

    Larger ranges come first (ceil-first convention): total=5, parts=2 gives
    [0, 3) and [3, 5).
    """
    if not 1 <= parts <= total:
        raise ValueError(f"cannot split {total} items into {parts} parts")
    base, rem = divmod(total, parts)
    ranges = []
    lo = 0
    for i in range(parts):
        hi = lo + base + (1 if i < rem else 0)
        ranges.append((lo, hi))
        lo = hi
    return ranges


def split_seed(seed: LatentSeed, parts: int) -> list[LatentSeed]:
    """Split a seed into contiguous sub-seeds whose ranges partition [0, d)."""
    if seed.kind == "sub_seed":
        raise ValueError("cannot split a sub-seed again")
    return [
        LatentSeed(
            values=seed.values[lo:hi],
            kind="sub_seed",
            sub_range=(lo, hi),
            bits_per_feature=seed.bits_per_feature,
        )
        for lo, hi in split_ranges(seed.dim, parts)
    ]


@dataclass(frozen=True)
class PartialContent:
    """One server's additive pixel-space contribution, tagged with its sub-range."""

    values: np.ndarray
    sub_range: tuple[int, int]

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr.ravel())


def partial_generate(sub: LatentSeed, pipe: Pipeline) -> PartialContent:
    """Column-block contribution y = B Q[:, lo:hi] z[lo:hi]; linear in the sub-seed."""
    if sub.kind != "sub_seed" or sub.sub_range is None:
        raise ValueError("partial_generate expects a sub_seed")
    lo, hi = sub.sub_range
    if hi > pipe.params.latent_dim:
        raise ValueError("sub_range exceeds pipeline latent dimension")
    contribution = pipe.basis @ (pipe.generator[:, lo:hi] @ sub.values)
    return PartialContent(values=contribution, sub_range=(lo, hi))


def merge_partials(parts: list[PartialContent], pipe: Pipeline) -> ContentGrid:
    """Sum partial contributions into the final image; ranges must partition [0, d)."""
    if not parts:
        raise ValueError("no partial contents to merge")
    ranges = sorted(p.sub_range for p in parts)
    expect = 0
    for lo, hi in ranges:
        if lo != expect:
            raise ValueError(f"sub-ranges do not partition [0, d): gap/overlap at {lo}")
        expect = hi
    if expect != pipe.params.latent_dim:
        raise ValueError("sub-ranges do not cover the full latent dimension")
    p = pipe.params
    flat = 0.5 + np.sum([part.values for part in parts], axis=0)
    return ContentGrid(height=p.height, width=p.width,
                       values=flat.reshape(p.height, p.width))


def tile_row_ranges(sketch_height: int, tiles: int) -> list[tuple[int, int]]:
    """Horizontal bands for cooperative sketching; the last tile takes the remainder."""
    if not 1 <= tiles <= sketch_height:
        raise ValueError(f"cannot cut {sketch_height} sketch rows into {tiles} tiles")
    base = sketch_height // tiles
    ranges = [(i * base, (i + 1) * base) for i in range(tiles - 1)]
    ranges.append(((tiles - 1) * base, sketch_height))
    return ranges


def partial_sketch(seed: LatentSeed, tile_index: int, tiles: int, pipe: Pipeline) -> SketchGrid:
    """Compute the full sketch but emit only the rows of one tile."""
    hs, _ = pipe.sketch_shape
    ranges = tile_row_ranges(hs, tiles)
    if not 0 <= tile_index < tiles:
        raise ValueError(f"tile_index {tile_index} out of range for {tiles} tiles")
    full = sketch(seed, pipe)
    lo, hi = ranges[tile_index]
    return SketchGrid(
        values=full.values[lo:hi],
        pool_factor=full.pool_factor,
        tile_range=(lo, hi),
        bits_per_pixel=full.bits_per_pixel,
    )


def stitch_tiles(tiles: list[SketchGrid]) -> SketchGrid:
    """Row-concatenate tiles into the full sketch; bands must partition the height."""
    if not tiles:
        raise ValueError("no tiles to stitch")
    for t in tiles:
        if t.tile_range is None:
            raise ValueError("stitch_tiles expects tiles with tile_range set")
    ordered = sorted(tiles, key=lambda t: t.tile_range[0])
    expect = 0
    for t in ordered:
        lo, hi = t.tile_range
        if lo != expect:
            raise ValueError(f"tile rows do not partition the sketch: gap/overlap at {lo}")
        expect = hi
    values = np.vstack([t.values for t in ordered])
    return SketchGrid(
        values=values,
        pool_factor=ordered[0].pool_factor,
        bits_per_pixel=ordered[0].bits_per_pixel,
    )
