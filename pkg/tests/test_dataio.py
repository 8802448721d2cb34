import re

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from autofeat.dataio import (
    PALETTE,
    DataFormatError,
    Dataset,
    apply_scaler,
    load_csv,
    load_images,
    minmax_normalize,
    read_pnm,
    save_image,
    to_bytes,
    write_points_csv,
    write_svg_grid,
    write_svg_lines,
    write_svg_scatter,
)
from autofeat.tensor import Rng, ShapeError

tmp_settings = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])


class TestLoadCsv:
    def test_labelled_example(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,cls\n0,1,x\n1,0,y\n")
        data = load_csv(path, label_column="cls")
        np.testing.assert_array_equal(data.features, [[0, 1], [1, 0]])
        np.testing.assert_array_equal(data.labels, [0, 1])
        assert data.feature_names == ["a", "b"]
        assert data.label_names == ["x", "y"]

    def test_label_ids_in_first_appearance_order(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("v,c\n1,z\n2,a\n3,z\n4,m\n")
        np.testing.assert_array_equal(load_csv(path, label_column=1).labels, [0, 1, 0, 2])

    def test_no_label(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        assert load_csv(path).labels is None

    def test_headerless(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,2\n3,4\n")
        np.testing.assert_array_equal(load_csv(path, has_header=False).features, [[1, 2], [3, 4]])

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("")
        with pytest.raises(DataFormatError, match="empty"):
            load_csv(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n")
        with pytest.raises(DataFormatError, match="no data rows"):
            load_csv(path)

    def test_ragged_row_reports_index(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n3\n")
        with pytest.raises(DataFormatError, match="row 2"):
            load_csv(path)

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,oops\n")
        with pytest.raises(DataFormatError, match="not numeric"):
            load_csv(path)

    def test_missing_label_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(DataFormatError, match="label"):
            load_csv(path, label_column="cls")
        with pytest.raises(DataFormatError, match="label"):
            load_csv(path, label_column=5)

    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=st.floats(-1e300, 1e300)))
    @tmp_settings
    def test_write_then_load_is_identity(self, tmp_path, table):
        path = tmp_path / "t.csv"
        header = [f"c{j}" for j in range(table.shape[1])]
        write_points_csv(table.tolist(), header, path)
        np.testing.assert_array_equal(load_csv(path).features, table)


class TestNormalization:
    def test_column(self):
        out = minmax_normalize(Dataset(np.array([[2.0], [4.0], [6.0]])))
        np.testing.assert_array_equal(out.features[:, 0], [0, 0.5, 1])

    def test_constant_column(self):
        out = minmax_normalize(Dataset(np.array([[7.0, 1.0], [7.0, 3.0]])))
        np.testing.assert_array_equal(out.features[:, 0], [0, 0])
        np.testing.assert_array_equal(out.scaler.degenerate, [True, False])

    def test_apply_scaler_does_not_clip(self):
        train = minmax_normalize(Dataset(np.array([[0.0], [10.0]])))
        test = apply_scaler(Dataset(np.array([[-5.0], [20.0]])), train.scaler)
        np.testing.assert_array_equal(test.features[:, 0], [-0.5, 2.0])

    def test_scaler_width_mismatch(self):
        scaler = minmax_normalize(Dataset(np.zeros((2, 3)))).scaler
        with pytest.raises(ShapeError):
            apply_scaler(Dataset(np.zeros((2, 2))), scaler)

    @given(arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(1, 4)), elements=st.floats(-1e3, 1e3)))
    @settings(max_examples=80, deadline=None)
    def test_inverse_round_trip(self, x):
        norm = minmax_normalize(Dataset(x))
        back = norm.scaler.inverse(norm.features)
        keep = ~norm.scaler.degenerate
        np.testing.assert_allclose(back[:, keep], x[:, keep], rtol=0, atol=1e-12)
        assert np.all((norm.features >= 0) & (norm.features <= 1))

    def test_dataset_label_length_checked(self):
        with pytest.raises(ShapeError):
            Dataset(np.zeros((3, 2)), labels=[0, 1])


class TestImages:
    def test_p5_example(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 0, 255]))
        np.testing.assert_array_equal(read_pnm(path), [[[0, 1], [0, 1]]])

    def test_header_comments(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n# made by hand\n2 1\n# depth\n255\n" + bytes([10, 20]))
        np.testing.assert_array_equal(to_bytes(read_pnm(path)), [[[10, 20]]])

    def test_p6_channel_first(self, tmp_path):
        path = tmp_path / "a.ppm"
        path.write_bytes(b"P6 1 1 255\n" + bytes([255, 0, 51]))
        np.testing.assert_allclose(read_pnm(path)[:, 0, 0], [1.0, 0.0, 0.2])

    @given(arrays(np.uint8, st.tuples(st.sampled_from([1, 3]), st.integers(1, 5), st.integers(1, 5))))
    @tmp_settings
    def test_save_load_byte_identical(self, tmp_path, raster):
        c, h, w = raster.shape
        magic = b"P5" if c == 1 else b"P6"
        original = magic + f"\n{w} {h}\n255\n".encode() + raster.transpose(1, 2, 0).tobytes()
        src = tmp_path / "src.pnm"
        src.write_bytes(original)
        dst = tmp_path / "dst.pnm"
        save_image(read_pnm(src), dst)
        assert dst.read_bytes() == original
        # load, save, load is idempotent
        np.testing.assert_array_equal(read_pnm(dst), read_pnm(src))

    def test_round_half_up_and_clamp(self):
        np.testing.assert_array_equal(to_bytes(np.array([0.5 / 255, 1.5 / 255, -0.2, 1.7])), [1, 2, 0, 255])

    def test_mixed_set_rejected(self, tmp_path):
        save_image(np.zeros((1, 2, 2)), tmp_path / "a.pgm")
        save_image(np.zeros((3, 2, 2)), tmp_path / "b.ppm")
        with pytest.raises(ShapeError):
            load_images(tmp_path)

    def test_directory_order(self, tmp_path):
        for name, v in [("b.pgm", 1.0), ("a.pgm", 0.0)]:
            save_image(np.full((1, 2, 2), v), tmp_path / name)
        (tmp_path / "notes.txt").write_text("skip me")
        images = load_images(tmp_path)
        assert images.ids == ["a.pgm", "b.pgm"]
        assert images.images.shape == (2, 1, 2, 2)
        assert images.images[0].max() == 0.0

    @pytest.mark.parametrize(
        "content",
        [b"P2\n1 1\n255\n0", b"P5\n1 1\n65535\n\x00\x00", b"P5\n2 2\n255\n\x00", b"P5\nx 2\n255\n"],
    )
    def test_malformed(self, tmp_path, content):
        path = tmp_path / "bad.pgm"
        path.write_bytes(content)
        with pytest.raises(DataFormatError):
            read_pnm(path)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_images(tmp_path)


def fills(svg_text):
    return set(re.findall(r'<circle [^>]*fill="(#[0-9a-f]{6})"', svg_text))


class TestCsvWriter:
    def test_format(self, tmp_path):
        write_points_csv([(1, 0.1, None, True)], ["a", "b", "c", "d"], tmp_path / "o.csv")
        assert (tmp_path / "o.csv").read_bytes() == b"a,b,c,d\n1,0.1,,1\n"

    def test_rejects_ragged_and_non_finite(self, tmp_path):
        with pytest.raises(ShapeError):
            write_points_csv([(1, 2)], ["a"], tmp_path / "o.csv")
        with pytest.raises(ValueError):
            write_points_csv([(float("nan"),)], ["a"], tmp_path / "o.csv")


class TestSvg:
    def test_empty_scatter_has_axes(self, tmp_path):
        write_svg_scatter(np.zeros((0, 2)), None, tmp_path / "s.svg")
        text = (tmp_path / "s.svg").read_text()
        assert text.startswith("<?xml")
        assert 'width="800" height="600"' in text
        assert text.count("<line") == 2
        assert "<circle" not in text

    def test_scatter_deterministic(self, tmp_path):
        pts = Rng(0).uniform((30, 2))
        labels = np.arange(30) % 3
        write_svg_scatter(pts, labels, tmp_path / "a.svg", title="t")
        write_svg_scatter(pts, labels, tmp_path / "b.svg", title="t")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_two_labels_two_colours(self, tmp_path):
        write_svg_scatter(Rng(1).uniform((10, 2)), [0, 1] * 5, tmp_path / "s.svg")
        text = (tmp_path / "s.svg").read_text()
        assert fills(text) == {PALETTE[0], PALETTE[1]}
        assert text.count('r="3"') == 10

    def test_palette_cycles(self, tmp_path):
        write_svg_scatter(Rng(1).uniform((2, 2)), [0, 8], tmp_path / "s.svg")
        assert fills((tmp_path / "s.svg").read_text()) == {PALETTE[0]}
        assert len(PALETTE) == 8

    def test_non_finite_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_svg_scatter(np.array([[0.0, np.inf]]), None, tmp_path / "s.svg")

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError):
            write_svg_scatter(np.zeros((1, 2)), None, tmp_path / "missing" / "s.svg")

    def test_lines_with_markers(self, tmp_path):
        path = tmp_path / "l.svg"
        write_svg_lines(
            {"err": [0.1, 0.5, 0.2]},
            {"hlines": [0.3], "vlines": [1.0, 2.0], "points": [(1.0, 0.5)]},
            path,
        )
        text = path.read_text()
        assert text.count("<polyline") == 1
        assert text.count("stroke-dasharray") == 2
        assert text.count("<circle") == 1

    def test_grid_tile_count(self, tmp_path):
        imgs = [np.full((1, 4, 4), v) for v in np.linspace(0, 1, 6)]
        write_svg_grid(imgs, 3, tmp_path / "g.svg")
        text = (tmp_path / "g.svg").read_text()
        assert text.count('<g class="tile"') == 6
        assert text.count("<rect") == 1 + 6 * 16
        assert 'viewBox="0 0 800 600"' in text

    def test_grid_rejects_mixed_shapes(self, tmp_path):
        with pytest.raises(ShapeError):
            write_svg_grid([np.zeros((1, 2, 2)), np.zeros((1, 3, 3))], 1, tmp_path / "g.svg")
