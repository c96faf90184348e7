import itertools

import numpy as np
import pytest
from scipy import stats

from partforge.dataset import (
    COLOR_NAMES,
    COLOR_PALETTE,
    GEN_SALT,
    ROLES,
    VOCAB,
    VOCAB_SIZE,
    caption_global,
    caption_part,
    generate_object,
    tokenize,
)
from partforge.errors import ParameterError
from partforge.geometry import PRIMITIVE_KINDS, SIZE_BUCKETS, PrimitiveSpec


def test_forced_single_part():
    obj = generate_object(7, (1, 1))
    assert len(obj.parts) == 1


def test_bitwise_determinism():
    a = generate_object(7, (2, 4))
    b = generate_object(7, (2, 4))
    assert a.object_id == b.object_id and a.layout == b.layout
    assert np.array_equal(a.global_views, b.global_views)
    assert np.array_equal(a.global_mesh.vertices, b.global_mesh.vertices)
    for p, q in zip(a.parts, b.parts):
        assert np.array_equal(p.points, q.points)
        assert np.array_equal(p.normals, q.normals)
        assert np.array_equal(p.views, q.views)
        assert np.array_equal(p.mesh.vertices, q.mesh.vertices)
        assert np.array_equal(p.caption, q.caption)


def test_part_count_uniform_chi_square():
    # oracle: chi-square against the uniform distribution over {2..5}
    counts = [len(generate_object(s, (2, 5), num_surface_samples=16).parts)
              for s in range(0, 1000)]
    freq = np.bincount(counts, minlength=6)[2:6]
    assert stats.chisquare(freq).pvalue > 0.01


def test_invalid_range():
    with pytest.raises(ParameterError):
        generate_object(0, (0, 3))
    with pytest.raises(ParameterError):
        generate_object(0, (3, 2))
    with pytest.raises(ParameterError):
        generate_object(0, (1, 9))


def test_part_record_invariants():
    obj = generate_object(11, (2, 5))
    assert 2 <= len(obj.parts) <= 5
    for p in obj.parts:
        assert p.points.shape == (4096, 3)
        assert np.abs(np.linalg.norm(p.normals.astype(np.float64), axis=1) - 1).max() < 1e-5
        assert p.box.contains(p.mesh.vertices).all()
        # box is tight: computed from vertices
        assert np.allclose(p.box.lo, p.mesh.vertices.min(axis=0))
        assert np.allclose(p.box.hi, p.mesh.vertices.max(axis=0))
        # parts stay in the object domain
        assert np.all(np.abs(p.mesh.vertices) <= 1.0 + 1e-9)


def test_union_consistency():
    obj = generate_object(23, (3, 5))
    stacked = np.concatenate([p.mesh.vertices for p in obj.parts])
    assert np.array_equal(stacked, obj.global_mesh.vertices)


def test_caption_deterministic_and_injective_pairwise():
    spec = PrimitiveSpec("sphere", (0, 0, 0), (0.3, 0.3, 0.3),
                         np.asarray(COLOR_PALETTE["red"]) / 255.0, "large")
    a = caption_part(spec, "top")
    b = caption_part(spec, "top")
    assert np.array_equal(a, b)
    other = PrimitiveSpec("box", (0, 0, 0), (0.3, 0.3, 0.3),
                          np.asarray(COLOR_PALETTE["red"]) / 255.0, "large")
    assert not np.array_equal(caption_part(other, "top"), a)


def test_caption_full_enumeration_distinct():
    # brute-force oracle over the whole enum product
    seen = set()
    for kind, color, size, role in itertools.product(PRIMITIVE_KINDS, COLOR_NAMES,
                                                     SIZE_BUCKETS, ROLES):
        spec = PrimitiveSpec(kind, (0, 0, 0), (0.3, 0.3, 0.3),
                             np.asarray(COLOR_PALETTE[color]) / 255.0, size)
        seen.add(tuple(caption_part(spec, role).tolist()))
    assert len(seen) == len(PRIMITIVE_KINDS) * len(COLOR_NAMES) * len(SIZE_BUCKETS) * len(ROLES)


def test_caption_shape_and_vocab():
    assert len(VOCAB) <= VOCAB_SIZE
    cap = caption_global(3)
    assert cap.shape == (8,)
    assert cap.max() < VOCAB_SIZE and cap.min() >= 0
    with pytest.raises(ParameterError):
        caption_global(9)
    with pytest.raises(ParameterError):
        caption_part(PrimitiveSpec("box", (0, 0, 0), (0.3, 0.3, 0.3),
                                   np.asarray(COLOR_PALETTE["red"]) / 255.0, "large"),
                     "banana")
    with pytest.raises(ParameterError):
        tokenize("words not in the vocabulary at all")


def test_global_caption_varies_with_count():
    seqs = {tuple(caption_global(n).tolist()) for n in range(1, 9)}
    assert len(seqs) == 8
