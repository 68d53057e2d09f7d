"""
FTS Engine - Dataset Pipeline Tests
===================================
Leitura, filtro, split, vocabulário, embeddings e gerador sintético.
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from core.errors import DatasetParseError, EmbeddingFormatError, EmptyDatasetError, ShapeError
from utils.dataset import (
    PAD_ID,
    UNK_ID,
    Vocabulary,
    dataset_statistics,
    encode,
    filter_min_answer_count,
    load_dataset,
    save_splits,
    split_dataset,
    tokenize,
)
from utils.embeddings import build_embedding_matrix, load_embeddings, trainable_rows
from utils.synthetic import generate_synthetic


class TestTokenize:
    def test_lowercase_and_edge_punctuation(self):
        assert tokenize("the Monkey King's travels.") == ["the", "monkey", "king's", "travels"]

    def test_drops_empty_tokens(self):
        assert tokenize(" -- Hello ,  world!! ") == ["hello", "world"]


class TestLoadDataset:
    def test_loads_records(self, quiz_file):
        d = load_dataset(quiz_file)
        assert len(d) == 20
        assert len(d.answer_set) == 4
        # ids na ordem da primeira aparição
        assert d.answer_set.phrase(0) == "Sun Wukong"
        assert d.questions[0].tokens[:3] == ("this", "figure", "is")

    def test_sentences_are_concatenated(self, quiz_file):
        q = load_dataset(quiz_file).questions[0]
        assert len(q.sentences) == 2
        assert q.tokens[-3:] == ("0", "points", "here")

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"question": ["ok"], "answer": "a"}\n{not json}\n', encoding="utf-8")
        with pytest.raises(DatasetParseError) as exc:
            load_dataset(path)
        assert exc.value.line_number == 2

    def test_schema_violation(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"question": "not a list", "answer": "a"}\n', encoding="utf-8")
        with pytest.raises(DatasetParseError):
            load_dataset(path)

    def test_empty_question_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"question": ["..."], "answer": "a"}\n{"question": ["real words"], "answer": "b"}\n', encoding="utf-8")
        d = load_dataset(path)
        assert len(d) == 1
        assert d.answer_set.phrase(0) == "b"

    def test_invalid_utf8_reports_number(self, tmp_path):
        path = tmp_path / "latin1.jsonl"
        path.write_bytes(b'{"question": ["ok"], "answer": "a"}\n{"question": ["caf\xe9"], "answer": "b"}\n')
        with pytest.raises(DatasetParseError) as exc:
            load_dataset(path)
        assert exc.value.line_number == 2

    def test_crlf_and_multibyte_text(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_bytes('{"question": ["Café com leite"], "answer": "Brasil"}\r\n'.encode("utf-8"))
        d = load_dataset(path)
        assert d.questions[0].tokens == ("café", "com", "leite")

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_dataset(tmp_path / "missing.jsonl")


class TestFilterAndSplit:
    def test_filter_drops_rare_answers(self, quiz_file):
        d = filter_min_answer_count(load_dataset(quiz_file), 6)
        assert len(d) == 18
        assert d.answer_set.ids == [0, 1, 2]
        assert "Rare" not in {a.phrase for a in d.answer_set.answers}

    def test_filter_everything_raises(self, quiz_file):
        with pytest.raises(EmptyDatasetError):
            filter_min_answer_count(load_dataset(quiz_file), 100)

    def test_split_sizes(self, quiz_file):
        d = filter_min_answer_count(load_dataset(quiz_file), 6)
        train, valid, test = split_dataset(d, seed=0)
        # 6 por classe: 1 teste, 1 validação, 4 treino
        assert (len(train), len(valid), len(test)) == (12, 3, 3)
        assert train.split_tag == "train"

    def test_split_is_deterministic_partition(self):
        data = generate_synthetic(n_answers=7, q_per_answer=11, signature_len=2, noise_len=3, seed=1)
        for seed in range(100):
            parts = split_dataset(data, seed)
            again = split_dataset(data, seed)
            assert [p.questions for p in parts] == [p.questions for p in again]
            ids = [id(q) for p in parts for q in p.questions]
            assert sorted(ids) == sorted(id(q) for q in data.questions)
            assert len(set(ids)) == len(data)

    def test_split_proportions_per_class(self):
        data = generate_synthetic(n_answers=3, q_per_answer=12, signature_len=2, noise_len=3, seed=1)
        train, valid, test = split_dataset(data, seed=3)
        for answer_id in range(3):
            assert sum(q.answer_id == answer_id for q in test.questions) == math.floor(0.2 * 12)
            assert sum(q.answer_id == answer_id for q in valid.questions) == math.floor(0.2 * 12)

    def test_save_splits(self, quiz_file, tmp_path):
        d = filter_min_answer_count(load_dataset(quiz_file), 6)
        paths = save_splits(tmp_path / "quiz", *split_dataset(d, seed=0))
        assert [p.name for p in paths] == ["quiz.train", "quiz.valid", "quiz.test"]
        assert len(load_dataset(paths[0])) == 12

    def test_statistics_table(self, quiz_file):
        d = filter_min_answer_count(load_dataset(quiz_file), 6)
        train, valid, test = split_dataset(d, seed=0)
        df = dataset_statistics({"train": train, "validation": valid, "test": test})
        assert df["questions"].tolist() == [12, 3, 3]
        assert df["answers"].tolist() == [3, 3, 3]


class TestVocabulary:
    def test_reserved_ids(self, quiz_file):
        vocab = Vocabulary.build([load_dataset(quiz_file)])
        assert vocab.tokens[PAD_ID] == "<pad>"
        assert vocab.tokens[UNK_ID] == "<unk>"
        assert list(vocab.tokens[2:]) == sorted(vocab.tokens[2:])

    def test_oov_maps_to_unk(self, quiz_file):
        d = load_dataset(quiz_file)
        vocab = Vocabulary.build([d])
        assert vocab.lookup("never-seen-token") == UNK_ID
        encoded = encode(d, vocab)
        assert encoded.is_encoded
        assert vocab.decode(encoded.questions[0].token_ids) == list(d.questions[0].tokens)

    def test_answer_tokens_included(self, quiz_file):
        vocab = Vocabulary.build([load_dataset(quiz_file)])
        assert vocab.lookup("wukong") != UNK_ID

    def test_tokens_kept_regardless_of_embedding_coverage(self, tmp_path, rng):
        path = tmp_path / "d.jsonl"
        path.write_text(
            '{"question": ["monkey king"], "answer": "Sun Wukong"}\n'
            '{"question": ["great wall"], "answer": "Qin Shi Huang"}\n',
            encoding="utf-8"
        )
        glove = tmp_path / "glove.txt"
        glove.write_text("monkey 0.1 0.2\nking 0.3 0.4\nsun 0.5 0.6\n", encoding="utf-8")
        table = load_embeddings(glove, dim=2)
        vocab = Vocabulary.build([load_dataset(path)])
        ids = {token: vocab.lookup(token) for token in ("wukong", "qin", "shi", "huang", "great", "wall")}
        assert UNK_ID not in ids.values()
        assert len(set(ids.values())) == len(ids)
        # respostas distintas sem GloVe continuam distinguíveis
        encoded = encode(load_dataset(path), vocab)
        assert encoded.answer_set[0].token_ids != encoded.answer_set[1].token_ids
        matrix = build_embedding_matrix(vocab, table, 2, rng)
        np.testing.assert_array_equal(matrix[vocab.lookup("sun")], [0.5, 0.6])
        assert np.all(np.abs(matrix[ids["wukong"]]) <= math.sqrt(6 / 3))


class TestEmbeddings:
    def test_loader_skips_malformed_lines(self, tmp_path):
        path = tmp_path / "glove.txt"
        path.write_text(
            "monkey 0.1 0.2 0.3\n"
            "king 0.4 0.5\n"           # aridade errada
            "china 0.1 nan 0.3\n"      # não finito
            "wall 0.1 abc 0.2\n"       # não numérico
            "monkey 9 9 9\n"           # duplicado
            "river -1 0 1\n",
            encoding="utf-8"
        )
        table = load_embeddings(path, dim=3)
        assert len(table) == 2
        np.testing.assert_array_equal(table.entries["monkey"], [0.1, 0.2, 0.3])

    def test_no_usable_line(self, tmp_path):
        path = tmp_path / "glove.txt"
        path.write_text("a 1\nb 2\n", encoding="utf-8")
        with pytest.raises(EmbeddingFormatError):
            load_embeddings(path, dim=3)

    def test_matrix_rows(self, tmp_path, rng):
        path = tmp_path / "glove.txt"
        path.write_text("monkey 0.1 0.2\nking 0.3 0.4\n", encoding="utf-8")
        table = load_embeddings(path, dim=2)
        vocab = Vocabulary(tokens=("<pad>", "<unk>", "king", "monkey", "staff"), unk_policy="zero")
        matrix = build_embedding_matrix(vocab, table, 2, rng)
        np.testing.assert_array_equal(matrix[vocab.lookup("monkey")], [0.1, 0.2])
        np.testing.assert_array_equal(matrix[UNK_ID], [0.0, 0.0])
        assert np.all(np.abs(matrix[vocab.lookup("staff")]) <= math.sqrt(6 / 3))

    def test_matrix_dim_mismatch(self, tmp_path, rng):
        path = tmp_path / "glove.txt"
        path.write_text("monkey 0.1 0.2\n", encoding="utf-8")
        vocab = Vocabulary(tokens=("<pad>", "<unk>", "monkey"))
        with pytest.raises(ShapeError):
            build_embedding_matrix(vocab, load_embeddings(path, dim=2), 3, rng)

    def test_loader_skips_invalid_utf8(self, tmp_path):
        path = tmp_path / "glove.txt"
        path.write_bytes(b"monkey 0.1 0.2\ncaf\xe9 0.3 0.4\nking 0.5 0.6\r\n")
        table = load_embeddings(path, dim=2)
        assert sorted(table.entries) == ["king", "monkey"]
        np.testing.assert_array_equal(table.entries["king"], [0.5, 0.6])

    def test_trainable_rows(self, tmp_path):
        path = tmp_path / "glove.txt"
        path.write_text("a 0.1 0.2\n", encoding="utf-8")
        table = load_embeddings(path, dim=2)
        vocab = Vocabulary(tokens=("<pad>", "<unk>", "a", "b"), unk_policy="trainable")
        # "b" não tem vetor GloVe: sempre atualizável
        assert trainable_rows(vocab, table, train_embeddings=False).tolist() == [True, True, False, True]
        assert trainable_rows(vocab, table, train_embeddings=True).tolist() == [True, True, True, True]
        frozen_unk = Vocabulary(tokens=vocab.tokens, unk_policy="zero")
        assert trainable_rows(frozen_unk, table, train_embeddings=False).tolist() == [True, False, False, True]

    def test_rows_trainable_without_table(self):
        vocab = Vocabulary(tokens=("<pad>", "<unk>", "a", "b"), unk_policy="zero")
        assert trainable_rows(vocab, None, train_embeddings=False).tolist() == [True, False, True, True]


class TestSynthetic:
    def test_shape(self):
        d = generate_synthetic(n_answers=4, q_per_answer=5, signature_len=3, noise_len=6, seed=7)
        assert len(d) == 20
        assert len(d.answer_set) == 4
        assert all(len(q.tokens) == 9 for q in d.questions)

    def test_signature_in_order(self):
        d = generate_synthetic(n_answers=2, q_per_answer=3, signature_len=3, noise_len=4, seed=7)
        for q in d.questions:
            signature = [t for t in q.tokens if t.startswith("sig_")]
            assert signature == [f"sig_{q.answer_id}_{j}" for j in range(3)]

    def test_deterministic(self):
        a = generate_synthetic(5, 4, 2, 3, seed=11)
        b = generate_synthetic(5, 4, 2, 3, seed=11)
        assert a == b

    def test_invalid_sizes(self):
        with pytest.raises(ValueError):
            generate_synthetic(0, 4, 2, 3, seed=1)
