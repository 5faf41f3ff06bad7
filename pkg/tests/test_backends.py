import sys

import numpy as np
import pytest

from mapseg.backends import (
    BackendError,
    ExternBackend,
    HeuristicBackend,
    OracleBackend,
)
from mapseg.classes import LabelMask
from mapseg.colors import ColorModel, GaussianMixture, load_default_color_model
from mapseg.inference import TileContext
from mapseg.wire import BackendDeadError, ProtocolError

ECHO = [sys.executable, "-m", "mapseg.tools.echo_backend"]


def random_mask(h, w, seed=0):
    return np.random.default_rng(seed).integers(0, 6, size=(h, w)).astype(np.uint8)


class TestOracle:
    def test_argmax_equals_mask(self):
        mask = random_mask(64, 64, 1)
        backend = OracleBackend(mask)
        logits = backend.evaluate(np.zeros((64, 64, 3), np.uint8), TileContext(0, 0))
        assert (np.argmax(logits, axis=0) == mask).all()

    def test_uniform_water_mask_plane_is_ten(self):
        mask = np.full((32, 32), 4, dtype=np.uint8)
        logits = OracleBackend(mask).evaluate(np.zeros((32, 32, 3), np.uint8), TileContext(0, 0))
        assert (logits[4] == 10.0).all()
        assert (logits[[0, 1, 2, 3, 5]] == 0.0).all()

    def test_noise_below_margin_preserves_argmax(self):
        # 10-unit one-hot margin vs sigma=0.1 noise: ~6-sigma-proof on 1e6 pixels
        mask = random_mask(1024, 1024, 2)
        backend = OracleBackend(mask, noise_sigma=0.1, seed=3)
        logits = backend.evaluate(np.zeros((1024, 1024, 3), np.uint8), TileContext(0, 0))
        assert (np.argmax(logits, axis=0) == mask).all()

    def test_noise_deterministic_per_position(self):
        mask = random_mask(16, 16, 4)
        backend = OracleBackend(mask, noise_sigma=0.5, seed=9)
        a = backend.evaluate(np.zeros((16, 16, 3), np.uint8), TileContext(0, 0))
        b = backend.evaluate(np.zeros((16, 16, 3), np.uint8), TileContext(0, 0))
        assert (a == b).all()

    def test_store_mode_uncovered_tile_errors(self):
        store = {(0, 0): random_mask(8, 8, 5)}
        backend = OracleBackend(store)
        backend.evaluate(np.zeros((8, 8, 3), np.uint8), TileContext(0, 0))
        with pytest.raises(BackendError, match="does not cover"):
            backend.evaluate(np.zeros((8, 8, 3), np.uint8), TileContext(8, 0))

    def test_tile_outside_prepared_planes_errors(self):
        backend = OracleBackend(random_mask(32, 32, 6))
        with pytest.raises(BackendError):
            backend.evaluate(np.zeros((32, 32, 3), np.uint8), TileContext(16, 16, scale=0.25))


class TestHeuristic:
    def _two_class_model(self):
        mixtures = {}
        means = {0: [0, 0, 0], 1: [20, 20, 20], 2: [180, 80, 70], 3: [150, 180, 120],
                 4: [110, 150, 190], 5: [200, 170, 120]}
        for cls, m in means.items():
            mixtures[cls] = GaussianMixture(weights=[1.0], means=[m], covs=[np.eye(3) * 25.0])
        return ColorModel(mixtures=mixtures)

    def test_class_mean_pixel_wins(self):
        model = self._two_class_model()
        backend = HeuristicBackend(model)
        tile = np.full((4, 4, 3), 0, dtype=np.uint8)
        tile[:] = (110, 150, 190)
        logits = backend.evaluate(tile)
        assert (np.argmax(logits, axis=0) == 4).all()

    def test_pure_blue_wins_water_under_default_model(self):
        backend = HeuristicBackend(load_default_color_model())
        tile = np.zeros((2, 2, 3), dtype=np.uint8)
        tile[..., 2] = 255
        logits = backend.evaluate(tile)
        assert (np.argmax(logits, axis=0) == 4).all()

    def test_identical_class_models_tie_break_to_zero(self):
        gm = dict(weights=[1.0], means=[[100, 100, 100]], covs=[np.eye(3) * 30.0])
        model = ColorModel(mixtures={k: GaussianMixture(**gm) for k in range(6)})
        backend = HeuristicBackend(model)
        logits = backend.evaluate(np.full((3, 3, 3), 77, dtype=np.uint8))
        assert np.allclose(logits, logits[0])
        assert (np.argmax(logits, axis=0) == 0).all()

    def test_deterministic_and_tile_permutation_invariant(self):
        backend = HeuristicBackend(load_default_color_model())
        rng = np.random.default_rng(8)
        tile = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        a = backend.evaluate(tile)
        b = backend.evaluate(tile.copy())
        assert (a == b).all()
        # per-pixel property: any crop scores identically
        crop = backend.evaluate(tile[:8, :8])
        assert np.allclose(crop, a[:, :8, :8])

    def test_missing_class_rejected(self):
        model = ColorModel(mixtures={0: GaussianMixture(weights=[1.0], means=[[1, 1, 1]],
                                                        covs=[np.eye(3)])})
        with pytest.raises(BackendError, match="missing"):
            HeuristicBackend(model)


class TestExtern:
    def _tile(self, v=128, hw=8):
        return np.full((hw, hw, 3), v, dtype=np.uint8)

    def test_constant_logits_bit_identical_across_runs(self):
        runs = []
        for _ in range(2):
            with ExternBackend(ECHO + ["--mode", "constant", "--value", "2.5"]) as be:
                runs.append(be.evaluate(self._tile()))
        assert (runs[0] == runs[1]).all()
        assert runs[0][0, 0, 0] == pytest.approx(2.5)
        assert runs[0][5, 0, 0] == pytest.approx(2.5 - 5 * 0.01)

    def test_error_frame_surfaced_verbatim(self):
        with ExternBackend(ECHO + ["--mode", "error"]) as be:
            with pytest.raises(BackendError, match="synthetic backend failure"):
                be.evaluate(self._tile())

    def test_truncated_response_is_protocol_error(self):
        with ExternBackend(ECHO + ["--mode", "truncate"]) as be:
            with pytest.raises((ProtocolError, BackendDeadError)) as err:
                be.evaluate(self._tile())
            # either the short read surfaces, or the exit is detected first
            assert "truncated" in str(err.value) or "exited" in str(err.value) \
                or "closed" in str(err.value)

    def test_process_death_mid_stream(self):
        with ExternBackend(ECHO + ["--mode", "silent"]) as be:
            with pytest.raises(BackendDeadError):
                be.evaluate(self._tile())

    def test_handshake_sets_concurrency_flag(self):
        with ExternBackend(ECHO + ["--mode", "constant", "--handshake", "--concurrent"]) as be:
            assert be.concurrent_safe is False  # not known until first exchange
            be.evaluate(self._tile())
            assert be.concurrent_safe is True
        with ExternBackend(ECHO + ["--mode", "constant", "--handshake"]) as be:
            be.evaluate(self._tile())
            assert be.concurrent_safe is False

    def test_timeout_enforced(self):
        cmd = [sys.executable, "-c", "import time; time.sleep(30)"]
        with ExternBackend(cmd, timeout=0.5) as be:
            with pytest.raises(TimeoutError):
                be.evaluate(self._tile())
