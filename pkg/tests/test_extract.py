import math

import numpy as np
import pytest

from matchbox import extract, synth
from matchbox.errors import InvalidInputError
from matchbox.raster import RasterImage

from oracles import crossing_number_oracle, minutiae_oracle

TWO_PI = 2.0 * math.pi


def stripes(angle_deg: float, freq=0.11, size=(128, 128), amp=110.0):
    """Ridges running along angle_deg (wave vector perpendicular)."""
    h, w = size
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    phi = math.radians(angle_deg) + math.pi / 2.0
    u = xx * math.cos(phi) + yy * math.sin(phi)
    img = 127.5 - amp * np.cos(TWO_PI * freq * u)
    return RasterImage(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8))


def skel_image(ascii_rows: list[str], pad: int = 0) -> RasterImage:
    h, w = len(ascii_rows), max(len(r) for r in ascii_rows)
    data = np.full((h + 2 * pad, w + 2 * pad), 255, np.uint8)
    for y, row in enumerate(ascii_rows):
        for x, c in enumerate(row):
            if c == "#":
                data[y + pad, x + pad] = 0
    return RasterImage(data)


# ---------------------------------------------------------------------------
# orientation field


def test_orientation_vertical_stripes():
    field = extract.orientation_field(stripes(90.0), 16)
    assert np.all(np.abs(field.angles - math.pi / 2) < 0.05)
    assert np.all(field.coherence > 0.9)


def test_orientation_flat_image_has_no_coherence():
    field = extract.orientation_field(RasterImage(np.full((64, 64), 128, np.uint8)), 16)
    assert np.all(field.coherence < 0.05)


def test_orientation_diagonal_stripes():
    field = extract.orientation_field(stripes(45.0), 16)
    # interior blocks only; border blocks see the frame edge
    inner = field.angles[1:-1, 1:-1]
    assert np.all(np.abs(inner - math.pi / 4) < 0.05)


def test_orientation_rejects_small_images():
    with pytest.raises(InvalidInputError):
        extract.orientation_field(RasterImage(np.zeros((8, 8), np.uint8)), 16)


def test_orientation_block_grid_shape():
    img = RasterImage(np.zeros((100, 70), np.uint8))
    field = extract.orientation_field(img, 16)
    assert field.angles.shape == (math.ceil(100 / 16), math.ceil(70 / 16))
    assert field.coherence.shape == field.angles.shape
    assert np.all((0 <= field.angles) & (field.angles < math.pi))
    assert np.all((0 <= field.coherence) & (field.coherence <= 1))


# ---------------------------------------------------------------------------
# enhancement


def test_enhance_improves_ridge_contrast():
    img = stripes(30.0, amp=45.0)
    field = extract.orientation_field(img, 16)
    out = extract.enhance(img, field, 0.11)
    yy, xx = np.meshgrid(np.arange(128), np.arange(128), indexing="ij")
    phi = math.radians(30.0) + math.pi / 2.0
    u = xx * math.cos(phi) + yy * math.sin(phi)
    c = np.cos(TWO_PI * 0.11 * u)
    ridge, valley = c > 0.6, c < -0.6
    sl = (slice(16, -16), slice(16, -16))
    def contrast(arr):
        return arr[sl][ridge[sl]].mean() * -1 + arr[sl][valley[sl]].mean()
    assert contrast(out.as_float()) >= contrast(img.as_float())


def test_enhance_passes_low_coherence_blocks_through():
    data = np.full((96, 96), 128, np.uint8)
    left = stripes(90.0, size=(96, 48)).data
    data[:, :48] = left
    img = RasterImage(data)
    field = extract.orientation_field(img, 16)
    out = extract.enhance(img, field, 0.11)
    # flat right side has ~zero coherence, so pixels are untouched
    assert np.array_equal(out.data[:, 64:], img.data[:, 64:])


def test_enhance_noise_recovery():
    clean = stripes(60.0, size=(160, 160))
    rng = np.random.default_rng(5)
    noisy = RasterImage(
        np.clip(clean.as_float() + rng.normal(0, 20, clean.data.shape), 0, 255).astype(np.uint8)
    )
    field = extract.orientation_field(noisy, 16)
    enhanced = extract.enhance(noisy, field, 0.11)
    ref = extract.binarize(clean)
    got = extract.binarize(enhanced)
    sl = (slice(16, -16), slice(16, -16))
    recovered = (got[sl] & ref[sl]).sum() / ref[sl].sum()
    assert recovered >= 0.95


def test_enhance_rejects_out_of_band_frequency():
    img = stripes(0.0)
    field = extract.orientation_field(img, 16)
    with pytest.raises(InvalidInputError):
        extract.enhance(img, field, 0.3)


# ---------------------------------------------------------------------------
# binarize + thinning


def test_thin_all_white_is_empty():
    img = RasterImage(np.full((64, 64), 255, np.uint8))
    skel = extract.binarize_thin(img)
    assert not extract.skeleton_mask(skel).any()


def test_thin_bar_gives_centerline():
    data = np.full((40, 60), 255, np.uint8)
    data[18:23, 5:55] = 0  # 5 px wide bar
    skel = extract.binarize_thin(RasterImage(data))
    ridge = extract.skeleton_mask(skel)
    cols = ridge[:, 20:40]
    assert np.all(cols.sum(axis=0) == 1)  # 1 px wide along the bar
    rows_hit = np.nonzero(cols.any(axis=1))[0]
    assert len(rows_hit) == 1 and 19 <= rows_hit[0] <= 21


def test_thin_ring_has_no_endpoints():
    yy, xx = np.meshgrid(np.arange(80), np.arange(80), indexing="ij")
    r = np.hypot(xx - 40, yy - 40)
    data = np.where((r > 18) & (r < 26), 0, 255).astype(np.uint8)
    skel = extract.binarize_thin(RasterImage(data))
    ridge = extract.skeleton_mask(skel)
    assert ridge.any()
    cn = extract.crossing_numbers(ridge)
    assert not ((cn == 1) & ridge).any()  # closed loop: no ridge endings


# ---------------------------------------------------------------------------
# crossing numbers: hand-built corpus vs brute-force oracle

CORPUS = [
    ["....", "####", "...."],
    ["#...", ".#..", "..#.", "...#"],
    ["..#..", "..#..", "..#..", "..#..", "..#.."],
    ["#....#", ".#..#.", "..##..", "..##..", ".#..#.", "#....#"],
    ["..#..", "..#..", "..#..", ".#.#.", "#...#"],  # Y junction
    ["#...#", ".#.#.", "..#..", ".#.#.", "#...#"],  # X cross
    ["###", "#.#", "###"],  # small ring
    [".####.", "#....#", "#....#", ".####."],
    ["#.....", ".#....", "..#...", "...###"],
    ["......", ".####.", ".#..#.", ".####.", "......"],
    ["#", "#", "#"],
    ["##"],
    ["#"],
    ["#..#", "#..#", "####"],
    [".#.", "###", ".#."],  # plus sign
    ["#....", "##...", "..#..", "...##", "....#"],
    ["..#...#", "..#..#.", "..###..", "..#....", "..#...."],
    ["####...", "...#...", "...####", "...#...", "...#..."],
    [".......", ".#####.", ".....#.", ".####.#", ".....#.", "......."],
    ["#.#.#", ".#.#.", "#.#.#"],
]


def test_crossing_numbers_match_oracle_on_corpus():
    for rows in CORPUS:
        skel = skel_image(rows, pad=2)
        ridge = extract.skeleton_mask(skel)
        cn = extract.crossing_numbers(ridge)
        for y in range(ridge.shape[0]):
            for x in range(ridge.shape[1]):
                if ridge[y, x]:
                    assert cn[y, x] == crossing_number_oracle(ridge, y, x)


def test_minutiae_match_oracle_on_corpus():
    for rows in CORPUS:
        skel = skel_image(rows, pad=2)
        got = {
            (int(m.x), int(m.y), m.kind)
            for m in extract.minutiae_from_skeleton(skel)
        }
        assert got == minutiae_oracle(extract.skeleton_mask(skel))


def test_minutiae_match_oracle_on_random_skeletons(rng):
    for _ in range(8):
        blob = rng.random((48, 48)) < 0.45
        skel_arr = extract._thin_zhang_suen(blob.astype(np.uint8))
        skel = RasterImage(np.where(skel_arr == 1, 0, 255).astype(np.uint8))
        got = {
            (int(m.x), int(m.y), m.kind)
            for m in extract.minutiae_from_skeleton(skel)
        }
        assert got == minutiae_oracle(extract.skeleton_mask(skel))


# ---------------------------------------------------------------------------
# detect_minutiae (filtered)


def test_detect_blank_is_empty():
    skel = RasterImage(np.full((64, 64), 255, np.uint8))
    assert extract.detect_minutiae(skel) == []


def test_detect_single_interior_ending():
    data = np.full((64, 64), 255, np.uint8)
    data[32, 0:33] = 0  # line from the border to the center
    out = extract.detect_minutiae(RasterImage(data))
    assert len(out) == 1
    m = out[0]
    assert m.kind == "ending" and (m.x, m.y) == (32.0, 32.0)
    # points from the termination back along the ridge (toward -x)
    assert abs((m.theta - math.pi + math.pi) % TWO_PI - math.pi) < math.pi / 8


def test_detect_single_interior_bifurcation():
    data = np.full((64, 64), 255, np.uint8)
    data[32, 0:33] = 0
    for i in range(1, 25):  # two diagonal branches leaving the fork
        data[32 - i, min(32 + i, 63)] = 0
        data[32 + i, min(32 + i, 63)] = 0
    out = extract.detect_minutiae(RasterImage(data))
    assert len(out) == 1
    assert out[0].kind == "bifurcation"
    assert (out[0].x, out[0].y) == (32.0, 32.0)
    # valley between the branches points toward +x
    assert abs((out[0].theta + math.pi) % TWO_PI - math.pi) < math.pi / 6


def test_detect_dedup_spacing(template_bank):
    # structural guarantee: detect output never packs minutiae within 6 px
    img, _ = synth.generate(synth.SynthSpec(seed=77, minutiae_count=30))
    res = extract.extract_minutiae(img)
    pts = [(m.x, m.y) for m in res.minutiae]
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            assert math.hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]) >= 6.0


def test_extract_translation_invariance():
    # whole-pixel shifts; block-multiple offsets keep the 16 px processing
    # grid aligned with the content, which is the scope of the guarantee
    img, _ = synth.generate(synth.SynthSpec(seed=31, minutiae_count=20))
    dx, dy = 32, 16
    grown = np.full((img.height + dy, img.width + dx), 255, np.uint8)
    grown[dy:, dx:] = img.data
    res_a = extract.extract_minutiae(img)
    res_b = extract.extract_minutiae(RasterImage(grown))

    a = sorted(res_a.minutiae, key=lambda m: (m.y, m.x))
    b = sorted(res_b.minutiae, key=lambda m: (m.y, m.x))
    assert len(a) == len(b)
    for ma in a:
        best = min(
            b, key=lambda mb: math.hypot(mb.x - dx - ma.x, mb.y - dy - ma.y)
        )
        assert math.hypot(best.x - dx - ma.x, best.y - dy - ma.y) <= 1.0
        d = abs((ma.theta - best.theta + math.pi) % TWO_PI - math.pi)
        assert d <= math.pi / 16


def test_extraction_recall_smoke():
    hits = total = dets = 0
    for seed, kind in ((3, "arch"), (4, "loop"), (5, "whorl")):
        img, truth = synth.generate(
            synth.SynthSpec(seed=seed, minutiae_count=30, singularity=kind)
        )
        found = extract.extract_minutiae(img).minutiae
        used = set()
        for gt in truth.minutiae:
            for i, d in enumerate(found):
                if i in used:
                    continue
                if (
                    math.hypot(d.x - gt.x, d.y - gt.y) <= 8
                    and abs((d.theta - gt.theta + math.pi) % TWO_PI - math.pi) <= math.pi / 8
                ):
                    hits += 1
                    used.add(i)
                    break
        total += len(truth.minutiae)
        dets += len(found)
    assert hits / total >= 0.8
    assert hits / dets >= 0.7
