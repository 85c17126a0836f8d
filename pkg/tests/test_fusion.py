import numpy as np
import pytest

from pyrfeat import deepfeat, dwt, fusion, lbp, lpq
from pyrfeat.deepfeat import DeepFeatureStore
from pyrfeat.errors import MissingRecordError, StoreFormatError, ValidationError
from pyrfeat.imagecore import DatasetManifest, Image, scan_dataset

from conftest import make_image, write_dataset


def store_for(ids, seed=0):
    rng = np.random.default_rng(seed)
    store = DeepFeatureStore(metadata={"extractor_a": "netA", "extractor_b": "netB"})
    for image_id in ids:
        for level in range(4):
            store.add(image_id, level, rng.normal(size=2000).astype(np.float32))
    return store


class TestLayout:
    def test_totals(self):
        layout = fusion.FeatureLayout()
        assert len(layout) == 11780
        assert fusion.LEVEL_LEN == 2945
        assert fusion.TEXTURAL_PER_LEVEL == 945

    def test_attribution_is_bijective(self):
        layout = fusion.FeatureLayout()
        seen = set()
        for i in range(len(layout)):
            info = layout.column(i)
            key = (info.source, info.level, info.channel, info.local_index)
            assert key not in seen
            seen.add(key)
        assert len(seen) == 11780

    def test_block_order_within_level(self):
        layout = fusion.FeatureLayout()
        level1 = [layout.column(i) for i in range(2945, 2 * 2945)]
        assert all(c.level == 1 for c in level1)
        assert [c.source for c in level1[:1000]] == ["deepA"] * 1000
        assert [c.source for c in level1[1000:2000]] == ["deepB"] * 1000
        # per channel R,G,B: LPQ block then LBP block
        texture = level1[2000:]
        expect = []
        for channel in ("R", "G", "B"):
            expect += [("lpq", channel)] * 256 + [("lbp", channel)] * 59
        assert [(c.source, c.channel) for c in texture] == expect
        assert [c.local_index for c in texture[:256]] == list(range(256))

    def test_deep_indices_count(self):
        assert len(fusion.FeatureLayout().deep_indices()) == 8000

    def test_level_slices(self):
        layout = fusion.FeatureLayout()
        assert layout.level_slice(0) == slice(0, 2945)
        assert layout.level_slice(3) == slice(3 * 2945, 4 * 2945)
        with pytest.raises(ValidationError):
            layout.level_slice(4)


class TestTextural:
    def test_blocks_match_descriptors(self):
        img = make_image(0)
        planes = img.pixels.astype(np.float64)
        vec = fusion.textural_features(planes)
        assert vec.shape == (945,)
        r_plane = planes[:, :, 0]
        assert np.array_equal(vec[:256], lpq.lpq_histogram(r_plane).astype(np.float32))
        assert np.array_equal(vec[256:315], lbp.lbp_histogram(r_plane).astype(np.float32))
        g_plane = planes[:, :, 1]
        assert np.array_equal(vec[315 : 315 + 256], lpq.lpq_histogram(g_plane).astype(np.float32))

    def test_constant_image_masses(self):
        planes = np.full((32, 32, 3), 99.0)
        vec = fusion.textural_features(planes)
        per = 315
        for c in range(3):
            lpq_block = vec[c * per : c * per + 256]
            lbp_block = vec[c * per + 256 : (c + 1) * per]
            assert lpq_block[255] == lpq_block.sum()
            assert lbp_block[lbp.uniform_map()[255]] == lbp_block.sum()


class TestFuseImage:
    def test_row_layout(self):
        img = make_image(1)
        store = store_for([img.id])
        row = fusion.fuse_image(img, store)
        assert row.shape == (11780,)
        assert row.dtype == np.float32
        for level in range(4):
            base = level * 2945
            deep = deepfeat.lookup(store, img.id, level)
            assert np.array_equal(row[base : base + 2000], deep)

    def test_textural_blocks_use_quantized_ll(self):
        img = make_image(2)
        store = store_for([img.id])
        row = fusion.fuse_image(img, store)
        pyramid = dwt.build_pyramid(img)
        ll1_r = dwt.quantize_plane(pyramid.levels[1][:, :, 0]).astype(np.float64)
        base = 2945 + 2000
        assert np.array_equal(
            row[base : base + 256], lpq.lpq_histogram(ll1_r).astype(np.float32)
        )
        assert np.array_equal(
            row[base + 256 : base + 315], lbp.lbp_histogram(ll1_r).astype(np.float32)
        )

    def test_missing_deep_record_fails(self):
        img = make_image(3)
        store = store_for(["someone-else"])
        with pytest.raises(MissingRecordError):
            fusion.fuse_image(img, store)


class TestFuseDataset:
    def test_shape_row_order_and_determinism(self, dataset_dir):
        manifest = scan_dataset(dataset_dir)
        store = deepfeat.zero_stub_store(manifest)
        m1 = fusion.fuse_dataset(manifest, dataset_dir, store)
        assert m1.values.shape == (8, 11780)
        assert m1.ids == manifest.ids
        assert np.array_equal(m1.labels, manifest.labels)
        m2 = fusion.fuse_dataset(manifest, dataset_dir, store)
        assert np.array_equal(m1.values, m2.values)

    def test_thread_counts_agree_bitwise(self, dataset_dir):
        manifest = scan_dataset(dataset_dir)
        store = deepfeat.zero_stub_store(manifest)
        m1 = fusion.fuse_dataset(manifest, dataset_dir, store, jobs=1)
        m4 = fusion.fuse_dataset(manifest, dataset_dir, store, jobs=4)
        assert np.array_equal(m1.values, m4.values)

    def test_cache_hits_reproduce(self, dataset_dir, tmp_path):
        manifest = scan_dataset(dataset_dir)
        store = deepfeat.zero_stub_store(manifest)
        cache = tmp_path / "cache"
        m1 = fusion.fuse_dataset(manifest, dataset_dir, store, cache_dir=cache)
        cached_files = list(cache.glob("*.npy"))
        assert len(cached_files) == 8
        m2 = fusion.fuse_dataset(manifest, dataset_dir, store, cache_dir=cache)
        assert np.array_equal(m1.values, m2.values)

    def test_cache_key_tracks_config(self, dataset_dir, tmp_path):
        manifest = scan_dataset(dataset_dir)
        store = deepfeat.zero_stub_store(manifest)
        cache = tmp_path / "cache"
        fusion.fuse_dataset(manifest, dataset_dir, store, cache_dir=cache)
        n_before = len(list(cache.glob("*.npy")))
        other = fusion.FuseConfig(lpq=lpq.LpqConfig(window=3))
        fusion.fuse_dataset(manifest, dataset_dir, store, other, cache_dir=cache)
        assert len(list(cache.glob("*.npy"))) == 2 * n_before

    def test_incomplete_store_fails_before_fusing(self, dataset_dir):
        manifest = scan_dataset(dataset_dir)
        store = store_for(manifest.ids[:3])
        with pytest.raises(MissingRecordError):
            fusion.fuse_dataset(manifest, dataset_dir, store)


class TestMatrixFile:
    def test_roundtrip(self, dataset_dir, tmp_path):
        manifest = scan_dataset(dataset_dir)
        store = deepfeat.zero_stub_store(manifest)
        matrix = fusion.fuse_dataset(manifest, dataset_dir, store)
        path = tmp_path / "m.phfm"
        fusion.save_matrix(matrix, path)
        back = fusion.load_matrix(path)
        assert np.array_equal(back.values, matrix.values)
        assert back.ids == matrix.ids
        assert np.array_equal(back.labels, matrix.labels)
        assert back.layout_hash == matrix.layout_hash

    def test_truncated_matrix_rejected(self, tmp_path):
        values = np.zeros((2, 11780), dtype=np.float32)
        matrix = fusion.FeatureMatrix(
            values=values, labels=np.array([0, 1]), ids=("a", "b"),
            layout_hash=fusion.FeatureLayout().layout_hash(),
        )
        path = tmp_path / "m.phfm"
        fusion.save_matrix(matrix, path)
        data = path.read_bytes()
        path.write_bytes(data[:-100])
        with pytest.raises(StoreFormatError, match="bytes"):
            fusion.load_matrix(path)

    def test_csv_export_header(self, tmp_path):
        values = np.zeros((1, 11780), dtype=np.float32)
        matrix = fusion.FeatureMatrix(
            values=values, labels=np.array([0]), ids=("a",),
            layout_hash="x", provenance={},
        )
        # needs a second class? manifest rules do, matrices do not
        path = tmp_path / "m.csv"
        fusion.export_matrix_csv(matrix, path)
        head = path.read_text().splitlines()[0]
        assert head.startswith("id,label,c0,")
        assert head.endswith("c11779")


def test_zero_stub_rows_have_dead_deep_blocks(dataset_dir):
    manifest = scan_dataset(dataset_dir)
    store = deepfeat.zero_stub_store(manifest)
    matrix = fusion.fuse_dataset(manifest, dataset_dir, store)
    deep_cols = fusion.FeatureLayout().deep_indices()
    assert not matrix.values[:, deep_cols].any()
    texture_cols = np.setdiff1d(np.arange(11780), deep_cols)
    assert matrix.values[:, texture_cols].sum() > 0
