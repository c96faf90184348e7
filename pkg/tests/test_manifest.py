import json

import numpy as np
import pytest

from partforge.dataset import generate_object
from partforge.errors import ManifestIOError, VersionError
from partforge.manifest import read_manifest, read_ply, write_manifest, write_ply
from partforge.rendering import default_rig


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    objects = [generate_object(s, (2, 4)) for s in range(10)]
    root = tmp_path_factory.mktemp("ds")
    rig = default_rig()
    write_manifest(objects, root, rig, meta={"n": 10})
    return objects, root, rig


def test_round_trip_field_equality(dataset):
    objects, root, rig = dataset
    loaded, rig2, meta = read_manifest(root)
    assert rig2 == rig and meta == {"n": 10}
    assert len(loaded) == len(objects)
    for a, b in zip(objects, loaded):
        assert a.object_id == b.object_id and a.layout == b.layout and a.seed == b.seed
        assert np.array_equal(a.global_caption, b.global_caption)
        assert np.array_equal(a.global_mesh.vertices, b.global_mesh.vertices)
        assert np.array_equal(a.global_mesh.faces, b.global_mesh.faces)
        assert np.array_equal(a.global_views, b.global_views)
        for p, q in zip(a.parts, b.parts):
            assert p.part_id == q.part_id and p.role == q.role
            assert np.array_equal(p.mesh.vertices, q.mesh.vertices)
            assert np.array_equal(p.points, q.points)
            assert np.array_equal(p.normals, q.normals)
            assert np.array_equal(p.views, q.views)
            assert np.array_equal(p.caption, q.caption)
            assert np.array_equal(p.box.center, q.box.center)
            assert np.array_equal(p.box.half_extents, q.box.half_extents)
            assert p.source.kind == q.source.kind
            assert np.array_equal(p.source.center, q.source.center)
            assert np.array_equal(p.source.half_extents, q.source.half_extents)
            assert np.array_equal(p.source.color, q.source.color)
            assert p.source.size_bucket == q.source.size_bucket


def test_missing_part_file_names_path(dataset, tmp_path):
    objects, root, rig = dataset
    clone = tmp_path / "clone"
    write_manifest(objects[:2], clone, rig)
    victim = next(clone.glob("objects/*/part_00.ply"))
    victim.unlink()
    with pytest.raises(ManifestIOError) as err:
        read_manifest(clone)
    assert "part_00.ply" in str(err.value)


def test_version_mismatch(dataset, tmp_path):
    objects, root, rig = dataset
    clone = tmp_path / "clone"
    write_manifest(objects[:1], clone, rig)
    doc = json.loads((clone / "manifest.json").read_text())
    doc["format_version"] = 999
    (clone / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(VersionError):
        read_manifest(clone)


def test_missing_manifest(tmp_path):
    with pytest.raises(ManifestIOError) as err:
        read_manifest(tmp_path / "nope")
    assert "manifest.json" in str(err.value)


def test_ply_round_trip_exact(tmp_path):
    mesh = generate_object(3, (1, 1)).parts[0].mesh
    path = tmp_path / "m.ply"
    write_ply(mesh, path)
    back = read_ply(path)
    assert np.array_equal(mesh.vertices, back.vertices)
    assert np.array_equal(mesh.faces, back.faces)


def test_corrupt_ply(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text("ply\nformat ascii 1.0\nelement vertex 5\nend_header\n1 2\n")
    with pytest.raises(ManifestIOError):
        read_ply(path)


def test_write_deterministic(dataset, tmp_path):
    objects, root, rig = dataset
    a, b = tmp_path / "a", tmp_path / "b"
    write_manifest(objects[:3], a, rig, meta={"x": 1})
    write_manifest(objects[:3], b, rig, meta={"x": 1})
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for f in files_a:
        assert (a / f).read_bytes() == (b / f).read_bytes()
