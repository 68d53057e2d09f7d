"""
FTS Engine - Dataset Pipeline
=============================
Carrega datasets de QA factoide (JSON Lines), tokeniza, constrói o
vocabulário, codifica sequências e faz o split estratificado por
resposta (20% teste, 20% validação, resto treino).

Formato de entrada, um registro por linha:
    {"question": ["sentença 1", "sentença 2", ...], "answer": "china"}

As sentenças de uma pergunta são concatenadas em uma única sequência.
"""

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError

from core.errors import DatasetParseError, EmptyDatasetError
from utils.files import atomic_write_text
from utils.logger import log_component_action


PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

SplitTag = Literal["train", "validation", "test", "unsplit"]


class QuestionRecord(BaseModel):
    """Schema de um registro do arquivo JSONL. Chaves extras são ignoradas."""
    model_config = ConfigDict(extra="ignore")

    question: list[str]
    answer: str


@dataclass(frozen=True)
class Answer:
    """Uma classe de resposta (frase + tokens)."""
    answer_id: int
    phrase: str
    tokens: tuple[str, ...]
    token_ids: tuple[int, ...] = ()


@dataclass(frozen=True)
class Question:
    """Pergunta com sentenças concatenadas em uma sequência de tokens."""
    sentences: tuple[str, ...]
    tokens: tuple[str, ...]
    answer_id: int
    token_ids: tuple[int, ...] = ()


@dataclass(frozen=True)
class AnswerSet:
    """Conjunto de respostas com ids densos em [0, n)."""
    answers: tuple[Answer, ...]

    def __len__(self) -> int:
        return len(self.answers)

    def __getitem__(self, answer_id: int) -> Answer:
        return self.answers[answer_id]

    @property
    def ids(self) -> list[int]:
        return [a.answer_id for a in self.answers]

    def phrase(self, answer_id: int) -> str:
        return self.answers[answer_id].phrase


@dataclass(frozen=True)
class Dataset:
    """Perguntas + conjunto de respostas + tag do split."""
    questions: tuple[Question, ...]
    answer_set: AnswerSet
    split_tag: SplitTag = "unsplit"

    def __len__(self) -> int:
        return len(self.questions)

    @property
    def is_encoded(self) -> bool:
        return all(q.token_ids for q in self.questions)


@dataclass(frozen=True)
class Vocabulary:
    """
    Vocabulário com ids densos. id 0 = <pad>, id 1 = <unk>.
    A linha da matriz de embeddings de um token é o seu id.
    """
    tokens: tuple[str, ...]
    unk_policy: Literal["trainable", "zero"] = "trainable"
    token_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        mapping = {token: i for i, token in enumerate(self.tokens)}
        if len(mapping) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        if self.tokens[PAD_ID] != PAD_TOKEN or self.tokens[UNK_ID] != UNK_TOKEN:
            raise ValueError("vocabulary must start with <pad>, <unk>")
        object.__setattr__(self, "token_to_id", mapping)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return PAD_ID

    @property
    def unk_id(self) -> int:
        return UNK_ID

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    @classmethod
    def build(
        cls,
        datasets: Iterable[Dataset],
        unk_policy: Literal["trainable", "zero"] = "trainable"
    ) -> "Vocabulary":
        """
        Constrói o vocabulário a partir dos tokens de perguntas e respostas.

        Todos os tokens dos datasets ganham id próprio, com ou sem vetor
        GloVe; <unk> fica para tokens que só aparecem fora deles.
        """
        seen: set[str] = set()
        for dataset in datasets:
            for question in dataset.questions:
                seen.update(question.tokens)
            for answer in dataset.answer_set.answers:
                seen.update(answer.tokens)
        seen.discard(PAD_TOKEN)
        seen.discard(UNK_TOKEN)
        return cls(tokens=(PAD_TOKEN, UNK_TOKEN, *sorted(seen)), unk_policy=unk_policy)


def _strip_token(token: str) -> str:
    start, end = 0, len(token)
    while start < end and not token[start].isalnum():
        start += 1
    while end > start and not token[end - 1].isalnum():
        end -= 1
    return token[start:end]


def tokenize(text: str) -> list[str]:
    """
    Lowercase, split em whitespace, remove pontuação das bordas de cada
    token e descarta tokens vazios.

    >>> tokenize("the Monkey King's travels.")
    ['the', 'monkey', "king's", 'travels']
    """
    tokens = (_strip_token(raw) for raw in text.lower().split())
    return [token for token in tokens if token]


def _build_answers(phrases: list[str]) -> AnswerSet:
    return AnswerSet(tuple(
        Answer(answer_id=i, phrase=phrase, tokens=tuple(tokenize(phrase)))
        for i, phrase in enumerate(phrases)
    ))


def load_dataset(path: Path | str) -> Dataset:
    """
    Lê um dataset JSON Lines.

    Args:
        path: Arquivo .jsonl

    Returns:
        Dataset tokenizado (ainda sem token_ids)

    Raises:
        DatasetParseError: registro malformado (com número da linha)
        OSError: arquivo ilegível
    """
    path = Path(path)
    phrases: list[str] = []
    phrase_to_id: dict[str, int] = {}
    questions: list[Question] = []
    rejected = 0

    with path.open("rb") as handle:
        for line_number, raw in enumerate(handle, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise DatasetParseError(line_number, f"invalid UTF-8 at byte {e.start}") from None
            if not line.strip():
                continue
            try:
                record = QuestionRecord.model_validate(json.loads(line))
            except json.JSONDecodeError as e:
                raise DatasetParseError(line_number, f"invalid JSON ({e.msg})") from None
            except ValidationError as e:
                raise DatasetParseError(line_number, e.errors()[0]["msg"]) from None

            tokens = [token for sentence in record.question for token in tokenize(sentence)]
            answer_phrase = record.answer.strip()
            if not tokens or not tokenize(answer_phrase):
                rejected += 1
                log_component_action(
                    "@Loader", "Record rejected: empty question or answer after tokenization",
                    {"path": str(path), "line": line_number}, level="warning"
                )
                continue

            if answer_phrase not in phrase_to_id:
                phrase_to_id[answer_phrase] = len(phrases)
                phrases.append(answer_phrase)
            questions.append(Question(
                sentences=tuple(record.question),
                tokens=tuple(tokens),
                answer_id=phrase_to_id[answer_phrase]
            ))

    log_component_action("@Loader", "Dataset loaded", {
        "path": str(path),
        "questions": len(questions),
        "answers": len(phrases),
        "rejected": rejected
    })
    return Dataset(questions=tuple(questions), answer_set=_build_answers(phrases))


def filter_min_answer_count(d: Dataset, min_count: int) -> Dataset:
    """
    Mantém apenas perguntas cuja resposta aparece pelo menos `min_count`
    vezes. Ids de resposta são re-densificados preservando a ordem.

    Raises:
        EmptyDatasetError: nada sobrou
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(q.answer_id for q in d.questions)
    kept = sorted(answer_id for answer_id, n in counts.items() if n >= min_count)
    if not kept:
        raise EmptyDatasetError(f"no answer occurs at least {min_count} times")

    remap = {old: new for new, old in enumerate(kept)}
    answers = tuple(
        replace(d.answer_set[old], answer_id=new) for old, new in remap.items()
    )
    questions = tuple(
        replace(q, answer_id=remap[q.answer_id]) for q in d.questions if q.answer_id in remap
    )
    return Dataset(questions=questions, answer_set=AnswerSet(answers), split_tag=d.split_tag)


def split_dataset(d: Dataset, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """
    Split estratificado por resposta: para cada classe com n perguntas,
    floor(0.2n) vão para teste, floor(0.2n) para validação e o resto para
    treino. Embaralhamento com RNG semeado, classes em ordem de id.

    Returns:
        Tuple (train, validation, test), cada um em ordem original
    """
    rng = np.random.default_rng(seed)
    by_answer: dict[int, list[int]] = defaultdict(list)
    for index, question in enumerate(d.questions):
        by_answer[question.answer_id].append(index)

    train_idx: list[int] = []
    valid_idx: list[int] = []
    test_idx: list[int] = []
    for answer_id in sorted(by_answer):
        members = np.asarray(by_answer[answer_id])
        shuffled = members[rng.permutation(len(members))]
        n_holdout = len(members) // 5
        test_idx.extend(shuffled[:n_holdout].tolist())
        valid_idx.extend(shuffled[n_holdout:2 * n_holdout].tolist())
        train_idx.extend(shuffled[2 * n_holdout:].tolist())

    def subset(indices: list[int], tag: SplitTag) -> Dataset:
        return Dataset(
            questions=tuple(d.questions[i] for i in sorted(indices)),
            answer_set=d.answer_set,
            split_tag=tag
        )

    return subset(train_idx, "train"), subset(valid_idx, "validation"), subset(test_idx, "test")


def encode(d: Dataset, vocab: Vocabulary) -> Dataset:
    """Preenche token_ids de perguntas e respostas (OOV → <unk>)."""
    answers = tuple(
        replace(a, token_ids=tuple(vocab.lookup(t) for t in a.tokens))
        for a in d.answer_set.answers
    )
    questions = tuple(
        replace(q, token_ids=tuple(vocab.lookup(t) for t in q.tokens))
        for q in d.questions
    )
    return Dataset(questions=questions, answer_set=AnswerSet(answers), split_tag=d.split_tag)


def save_dataset(d: Dataset, path: Path | str) -> Path:
    """Escreve o dataset no mesmo formato JSONL de entrada."""
    lines = [
        json.dumps({"question": list(q.sentences), "answer": d.answer_set.phrase(q.answer_id)}, ensure_ascii=False)
        for q in d.questions
    ]
    return atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def save_splits(prefix: Path | str, train: Dataset, valid: Dataset, test: Dataset) -> list[Path]:
    """Escreve `<prefix>.train`, `<prefix>.valid`, `<prefix>.test`."""
    prefix = str(prefix)
    return [
        save_dataset(train, f"{prefix}.train"),
        save_dataset(valid, f"{prefix}.valid"),
        save_dataset(test, f"{prefix}.test"),
    ]


def dataset_statistics(subsets: dict[str, Dataset]) -> pd.DataFrame:
    """Tabela #questions / #answers por subset."""
    rows = [
        {
            "subset": name,
            "questions": len(d),
            "answers": len({q.answer_id for q in d.questions}),
        }
        for name, d in subsets.items()
    ]
    return pd.DataFrame(rows, columns=["subset", "questions", "answers"])
