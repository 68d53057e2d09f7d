"""
FTS Engine - Checkpoint Tests
=============================
"""

import sys
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from core.checkpoint import MAGIC, checkpoint_from_model, load_checkpoint, model_from_checkpoint, save_checkpoint
from core.config import RunConfig
from core.errors import BadMagicError, CheckpointError, TruncatedCheckpointError, VersionMismatchError
from core.infer import answer_representations, question_representation
from core.model import encode_question
from core.optim import init_model
from utils.dataset import Answer, AnswerSet, Vocabulary


def build_snapshot(rng, variant="fts_brnn", output_mode="affine", dtype="float32"):
    vocab = Vocabulary(tokens=("<pad>", "<unk>", "china", "great", "wall", "wukong"))
    answers = AnswerSet((Answer(0, "China", ("china",), (2,)), Answer(1, "Sun Wukong", ("wukong",), (5,))))
    config = RunConfig(variant=variant, output_mode=output_mode, dim=4, embedding_dim=3,
                       seq_len=4 if variant == "fts_brnn_s" else None, checkpoint_dtype=dtype)
    model = init_model(variant, output_mode, 4, rng.uniform(-0.5, 0.5, size=(len(vocab), 3)),
                       np.ones(len(vocab), dtype=bool), rng)
    return model, checkpoint_from_model(model, config, vocab, answers, {"epoch": 3, "val_acc_innerp": 0.5})


class TestRoundTrip:
    def test_save_load_save_is_byte_identical(self, rng, tmp_path):
        _, ckpt = build_snapshot(rng)
        first = save_checkpoint(tmp_path / "a.ckpt", ckpt)
        second = save_checkpoint(tmp_path / "b.ckpt", load_checkpoint(first))
        assert first.read_bytes() == second.read_bytes()

    def test_file_starts_with_magic(self, rng, tmp_path):
        _, ckpt = build_snapshot(rng)
        assert save_checkpoint(tmp_path / "a.ckpt", ckpt).read_bytes().startswith(MAGIC)

    def test_metadata_survives(self, rng, tmp_path):
        _, ckpt = build_snapshot(rng)
        loaded = load_checkpoint(save_checkpoint(tmp_path / "a.ckpt", ckpt))
        assert loaded.best == {"epoch": 3, "val_acc_innerp": 0.5}
        assert loaded.vocabulary().tokens == ckpt.vocabulary().tokens
        assert loaded.answer_set() == ckpt.answer_set()
        assert loaded.run_config() == ckpt.run_config()
        assert list(loaded.tensors) == list(ckpt.tensors)

    def test_float32_payload_is_rounded(self, rng, tmp_path):
        _, ckpt = build_snapshot(rng)
        loaded = load_checkpoint(save_checkpoint(tmp_path / "a.ckpt", ckpt))
        for name, tensor in ckpt.tensors.items():
            np.testing.assert_array_equal(loaded.tensors[name], tensor.astype(np.float32).astype(np.float64))

    def test_float64_is_exact(self, rng, tmp_path):
        _, ckpt = build_snapshot(rng, dtype="float64")
        loaded = load_checkpoint(save_checkpoint(tmp_path / "a.ckpt", ckpt))
        for name, tensor in ckpt.tensors.items():
            assert loaded.tensors[name].tobytes() == tensor.tobytes()

    @pytest.mark.parametrize("variant,output_mode", [("fts_brnn", "affine"), ("fts_brnn_s", "concat")])
    def test_rebuilt_model_encodes_identically(self, rng, tmp_path, variant, output_mode):
        model, ckpt = build_snapshot(rng, variant, output_mode, dtype="float64")
        rebuilt = model_from_checkpoint(load_checkpoint(save_checkpoint(tmp_path / "a.ckpt", ckpt)))
        ids = [2, 3, 4]
        np.testing.assert_array_equal(encode_question(rebuilt, ids).Q_o, encode_question(model, ids).Q_o)
        seq_len = ckpt.run_config().seq_len
        np.testing.assert_array_equal(
            question_representation(rebuilt, ids, seq_len).vec, question_representation(model, ids, seq_len).vec
        )
        reps, expected = (answer_representations(m, {0: (2,), 1: (5,)}, seq_len) for m in (rebuilt, model))
        for answer_id in expected:
            np.testing.assert_array_equal(reps[answer_id], expected[answer_id])


class TestLoadErrors:
    def test_bad_magic(self, rng, tmp_path):
        _, ckpt = build_snapshot(rng)
        path = save_checkpoint(tmp_path / "a.ckpt", ckpt)
        data = bytearray(path.read_bytes())
        data[0:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(BadMagicError):
            load_checkpoint(path)

    def test_truncated_payload(self, rng, tmp_path):
        _, ckpt = build_snapshot(rng)
        path = save_checkpoint(tmp_path / "a.ckpt", ckpt)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(TruncatedCheckpointError):
            load_checkpoint(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "a.ckpt"
        path.write_bytes(MAGIC + b"\x10\x00")
        with pytest.raises(TruncatedCheckpointError):
            load_checkpoint(path)

    def test_version_mismatch(self, rng, tmp_path):
        _, ckpt = build_snapshot(rng)
        path = save_checkpoint(tmp_path / "a.ckpt", replace(ckpt, format_version=99))
        with pytest.raises(VersionMismatchError):
            load_checkpoint(path)

    def test_errors_share_base(self):
        for error in (BadMagicError, TruncatedCheckpointError, VersionMismatchError):
            assert issubclass(error, CheckpointError)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_checkpoint(tmp_path / "nope.ckpt")
