import numpy as np
import pytest
import torch

from motiondict.data import (
    DataError,
    FrameSequence,
    PairBatcher,
    decode_image,
    encode_image,
    load_factors,
    load_frames,
    load_manifest,
    sample_training_pair,
    synthesize_dataset,
    to_uint8,
)


class TestImageCodec:
    def test_round_trip_is_bitwise_exact(self):
        rng = np.random.default_rng(0)
        original = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        from PIL import Image
        import io

        buffer = io.BytesIO()
        Image.fromarray(original).save(buffer, format="PNG")
        tensor = decode_image(buffer.getvalue())
        recovered = to_uint8(tensor)
        assert np.array_equal(recovered, original)

    def test_normalization_map(self):
        arr = np.zeros((1, 3, 3), dtype=np.uint8)
        arr = np.stack([arr[0]] * 3, axis=-1)
        arr[0, 0] = 0
        arr[0, 1] = 255
        arr[0, 2] = 128
        from PIL import Image
        import io

        buffer = io.BytesIO()
        Image.fromarray(arr).save(buffer, format="PNG")
        tensor = decode_image(buffer.getvalue())
        assert tensor[0, 0, 0].item() == pytest.approx(-1.0, abs=1e-7)
        assert tensor[0, 0, 1].item() == pytest.approx(1.0, abs=1e-7)
        assert tensor[0, 0, 2].item() == pytest.approx(128 / 255 * 2 - 1, abs=1e-7)

    def test_undecodable_bytes(self):
        with pytest.raises(DataError):
            decode_image(b"not a png")

    def test_encode_decode_tensor_round_trip(self):
        gen = torch.Generator().manual_seed(1)
        image = torch.rand((3, 8, 8), generator=gen) * 2 - 1
        once = decode_image(encode_image(image))
        twice = decode_image(encode_image(once))
        assert torch.equal(once, twice)  # lossless once quantized


class TestFrameDirectories:
    def test_load_frames_ordered(self, tmp_path):
        from motiondict.data import save_image

        clip = tmp_path / "clip_a"
        clip.mkdir()
        frames = []
        for t in range(3):
            frame = torch.full((3, 8, 8), -1.0 + t * 0.5)
            frames.append(frame)
            save_image(frame, clip / f"{t:06d}.png")
        seq = load_frames(clip)
        assert seq.clip_id == "clip_a"
        assert len(seq) == 3
        for loaded, saved in zip(seq.frames, frames):
            assert (loaded - saved).abs().max() < 1e-2  # 8-bit quantization

    def test_empty_directory(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(DataError):
            load_frames(empty)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DataError):
            load_frames(tmp_path / "nope")

    def test_short_sequence_rejected(self):
        with pytest.raises(DataError):
            FrameSequence(frames=[torch.zeros(3, 4, 4)], clip_id="x")

    def test_mixed_sizes_rejected(self):
        with pytest.raises(DataError):
            FrameSequence(
                frames=[torch.zeros(3, 4, 4), torch.zeros(3, 8, 8)], clip_id="x"
            )


class TestSynthesizeDataset:
    def test_deterministic_across_runs(self, tmp_path):
        import hashlib

        def tree_hash(root):
            digest = hashlib.sha256()
            for path in sorted(root.rglob("*")):
                if path.is_file():
                    digest.update(path.relative_to(root).as_posix().encode())
                    digest.update(path.read_bytes())
            return digest.hexdigest()

        a = synthesize_dataset(tmp_path / "a", clips=2, frames=4, size=32, seed=7)
        b = synthesize_dataset(tmp_path / "b", clips=2, frames=4, size=32, seed=7)
        assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")
        assert len(a.clips) == len(b.clips) == 2

    def test_manifest_round_trip(self, tmp_path):
        synthesize_dataset(tmp_path, clips=4, frames=3, size=32, seed=1)
        manifest = load_manifest(tmp_path)
        assert len(manifest.clips) == 4
        assert len(manifest.split("val")) >= 1
        assert not (
            {c.clip_id for c in manifest.split("train")}
            & {c.clip_id for c in manifest.split("val")}
        )
        clip = manifest.load_clip(manifest.clips[0])
        assert len(clip) == 3

    def test_factors_saved_per_clip(self, tmp_path):
        manifest = synthesize_dataset(tmp_path, clips=2, frames=4, size=32, seed=2)
        params = load_factors(tmp_path / manifest.clips[0].path)
        assert params is not None
        assert len(params) == 4


class TestPairSampling:
    def test_two_frame_clip_returns_both(self):
        seq = FrameSequence(
            frames=[torch.zeros(3, 4, 4), torch.ones(3, 4, 4)], clip_id="c"
        )
        rng = np.random.default_rng(0)
        seen = set()
        for _ in range(20):
            x_s, x_d = sample_training_pair(seq, rng)
            seen.add((float(x_s[0, 0, 0]), float(x_d[0, 0, 0])))
        assert seen == {(0.0, 1.0), (1.0, 0.0)}

    def test_pair_distribution_uniform(self):
        # chi-square style bound: every ordered pair within 3 sigma of uniform
        frames = [torch.full((1, 1, 1), float(i)) for i in range(5)]
        seq = FrameSequence(frames=frames, clip_id="c")
        rng = np.random.default_rng(42)
        counts = np.zeros((5, 5))
        draws = 10_000
        for _ in range(draws):
            x_s, x_d = sample_training_pair(seq, rng)
            counts[int(x_s.item()), int(x_d.item())] += 1
        assert counts.diagonal().sum() == 0  # never the same frame twice
        expected = draws / 20
        sigma = np.sqrt(draws * (1 / 20) * (19 / 20))
        off_diagonal = counts[~np.eye(5, dtype=bool)]
        assert np.abs(off_diagonal - expected).max() < 3 * sigma

    def test_short_clip_rejected(self):
        seq = FrameSequence(frames=[torch.zeros(3, 4, 4)] * 2, clip_id="c")
        seq.frames = seq.frames[:1]
        with pytest.raises(DataError):
            sample_training_pair(seq, np.random.default_rng(0))

    def test_batcher_deterministic(self, tmp_path):
        manifest = synthesize_dataset(tmp_path, clips=3, frames=4, size=32, seed=3)
        sequences = manifest.load_split("train")
        b1 = PairBatcher(sequences, batch_size=4, seed=5).next_batch()
        b2 = PairBatcher(sequences, batch_size=4, seed=5).next_batch()
        assert torch.equal(b1[0], b2[0])
        assert torch.equal(b1[1], b2[1])
