import hashlib

import numpy as np
import pytest

from drenv.cluster import Cluster, forward_cluster, save_cluster
from drenv.environment import EnvironmentField
from drenv.lattice import LatticeBox
from drenv.model import e1_full_model, half_orthant_model, orthant_model
from drenv.render import PALETTES, RenderError, RenderJob, image_size, render

# frozen renders of fixed clusters (seed 1)
GOLDEN = {
    "single_ppm": "e6f5cc0b23e7613510b1b6dc9969e859074a0c060bbbea45221295efe2b74a00",
    "overlay_ppm": "e924a91aee6777d28f3079c657f8d909bdfb4a6290b8b0f82f7dfdc43a1dd2ce",
    "overlay_svg": "4b74dcf6f0066331d7815b012ca7eaf2961bf9de44d18300959ae3a75699ca3b",
    "3d_0": "fac4c18da7d6fa6ff207e2f7b209c920fb46f9dc350e0b1c2be78b4ddc56667f",
    "3d_1": "f3e3815a9f156d9a76bdcd35c4b657d33cd45908a5fe03f0831a217cf561288c",
    "3d_2": "71ab06de552ad70cd41d8f6be92a031c066edef1a3e634b09b46f933f0070f97",
    "3d_svg": "df3a83ea1bbcace020bea84c75959aa634f42d007a050699fcdb519ff7ce266a",
}

BOX2 = LatticeBox.cube(2, 30)
BOX3 = LatticeBox((-10, -30, -30), (120, 30, 30))


def sha(b):
    return hashlib.sha256(b).hexdigest()


@pytest.fixture(scope="module")
def clusters():
    a = forward_cluster(EnvironmentField(orthant_model(2, "0.7"), 1), (0, 0), BOX2)
    b = forward_cluster(EnvironmentField(half_orthant_model(2, "0.7"), 1), (0, 0), BOX2)
    c = forward_cluster(EnvironmentField(e1_full_model(3, "0.9"), 1), (0, 0, 0), BOX3)
    return a, b, c


def blank_like(c):
    return Cluster(c.box, c.origin, np.zeros_like(c.membership), c.kind, False)


def ppm_pixels(data):
    head = data.split(b"\n", 3)
    w, h = map(int, head[1].split())
    return np.frombuffer(head[3], np.uint8).reshape(h, w, 3)


class TestGolden:
    def test_single(self, clusters, tmp_path):
        data = render(RenderJob([clusters[0]], tmp_path / "a.ppm", scale=2))
        assert sha(data) == GOLDEN["single_ppm"]
        assert (tmp_path / "a.ppm").read_bytes() == data

    def test_overlay(self, clusters, tmp_path):
        a, b, _ = clusters
        assert sha(render(RenderJob([a, b], tmp_path / "o.ppm"))) == GOLDEN["overlay_ppm"]
        assert sha(render(RenderJob([a, b], tmp_path / "o.svg"))) == GOLDEN["overlay_svg"]

    @pytest.mark.parametrize("preset", [0, 1, 2])
    def test_3d_presets(self, clusters, tmp_path, preset):
        job = RenderJob([clusters[2]], tmp_path / "c.ppm", mode="3d", plane=100, preset=preset)
        assert sha(render(job)) == GOLDEN[f"3d_{preset}"]

    def test_3d_svg(self, clusters, tmp_path):
        job = RenderJob([clusters[2]], tmp_path / "c.svg", mode="3d", plane=100)
        data = render(job)
        assert sha(data) == GOLDEN["3d_svg"] and b"<svg" in data[:200]


class TestGeometry:
    @pytest.mark.parametrize("scale", [1, 3])
    def test_2d_size(self, clusters, tmp_path, scale):
        data = render(RenderJob([clusters[0]], tmp_path / "a.ppm", scale=scale))
        h, w, _ = ppm_pixels(data).shape
        assert (w, h) == image_size(BOX2.shape, scale, "2d")

    @pytest.mark.parametrize("preset", [0, 1, 2])
    def test_3d_size(self, clusters, tmp_path, preset):
        data = render(RenderJob([clusters[2]], tmp_path / "c.ppm", mode="3d", plane=100, preset=preset))
        h, w, _ = ppm_pixels(data).shape
        assert (w, h) == image_size(BOX3.shape, 1, "3d", preset)

    def test_origin_pixel_and_orientation(self, clusters, tmp_path):
        # top row is the highest x_1; the forward orthant cluster lives in x >= 0
        px = ppm_pixels(render(RenderJob([clusters[0]], tmp_path / "a.ppm")))
        first = PALETTES["default"]["first"]
        assert tuple(px[30, 30]) == first  # origin
        assert tuple(px[-1, 0]) == PALETTES["default"]["bg"]  # (-30, -30)

    def test_empty_second_layer_is_noop(self, clusters, tmp_path):
        a = clusters[0]
        empty = blank_like(a)
        one = render(RenderJob([a], tmp_path / "a.ppm"))
        two = render(RenderJob([a, empty], tmp_path / "b.ppm"))
        assert one == two

    def test_far_plane_and_blank_grid(self, clusters, tmp_path):
        c = clusters[2]
        far = render(RenderJob([c], tmp_path / "x.ppm", mode="3d", plane=-10))
        assert ppm_pixels(far).shape[:2] == image_size(BOX3.shape, 1, "3d")[::-1]
        blank = ppm_pixels(render(RenderJob([blank_like(c)], tmp_path / "y.ppm", mode="3d", plane=100)))
        assert (blank == PALETTES["default"]["bg"]).all()

    def test_grid_file_input(self, clusters, tmp_path):
        path = tmp_path / "a.grid"
        save_cluster(clusters[0], path)
        assert render(RenderJob([path], tmp_path / "f.ppm", scale=2)) == \
            render(RenderJob([clusters[0]], tmp_path / "g.ppm", scale=2))


class TestErrors:
    def test_mismatched_boxes(self, clusters, tmp_path):
        with pytest.raises(RenderError):
            RenderJob([clusters[0], clusters[2]], tmp_path / "x.ppm")

    def test_2d_needs_d2(self, clusters, tmp_path):
        with pytest.raises(RenderError):
            render(RenderJob([clusters[2]], tmp_path / "x.ppm"))

    def test_plane_outside_box(self, clusters, tmp_path):
        with pytest.raises(RenderError):
            render(RenderJob([clusters[2]], tmp_path / "x.ppm", mode="3d", plane=500))

    @pytest.mark.parametrize("kw", [{"palette": "neon"}, {"scale": 0}, {"fmt": "png"}])
    def test_bad_options(self, clusters, tmp_path, kw):
        with pytest.raises(RenderError):
            RenderJob([clusters[0]], tmp_path / "x.ppm", **kw)

    def test_too_many_inputs(self, clusters, tmp_path):
        with pytest.raises(RenderError):
            RenderJob([clusters[0]] * 3, tmp_path / "x.ppm")
