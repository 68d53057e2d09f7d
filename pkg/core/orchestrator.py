"""
FTS Engine - Orchestrator
=========================
Fluxos de trabalho da linha de comando:

    train      treina, seleciona o melhor epoch pela validação, salva
               best.ckpt / final.ckpt e metrics.jsonl
    eval       acurácia de um checkpoint no split de teste
    predict    ranking top-5 por pergunta de teste (TSV)
    gradcheck  verificação de gradientes em instâncias aleatórias pequenas
    split      split estratificado 60/20/20 em três arquivos
    synth      gera o dataset sintético de mesa
    ablate     grade de configurações (loss × camada de saída) sobre seeds
"""

import json
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from core.checkpoint import Checkpoint, checkpoint_from_model, load_checkpoint, model_from_checkpoint, save_checkpoint
from core.config import RunConfig
from core.errors import ConfigError
from core.infer import answer_representations, answer_tokens_of, evaluate, fit_lr_head, question_representation, rank_answers
from core.loss import LossConfig
from core.model import ModelParams
from core.optim import Objective, OptimizerState, gradient_check, init_model, make_gradcheck_instance, train_epoch
from utils.dataset import (
    AnswerSet,
    Dataset,
    Vocabulary,
    dataset_statistics,
    encode,
    filter_min_answer_count,
    load_dataset,
    save_dataset,
    save_splits,
    split_dataset,
)
from utils.embeddings import EmbeddingTable, build_embedding_matrix, load_embeddings, trainable_rows
from utils.files import atomic_write_text
from utils.logger import bind_run_context, log_component_action
from utils.metrics import MetricsWriter, gradcheck_frame, print_frame, summarize_ablation
from utils.synthetic import generate_synthetic

# Configurações da grade de ablação: (nome, variante, camada de saída, loss)
ABLATION_GRID = (
    ("pooling-loss/has-output", "fts_brnn_s", "affine", "pooling"),
    ("fts-loss/no-output", "fts_brnn_s", "concat", "full_time"),
    ("fts-loss/has-output", "fts_brnn_s", "affine", "full_time"),
    ("fts-brnn", "fts_brnn", "affine", "full_time"),
)

GRADCHECK_GRID = (
    ("fts_brnn", "affine", "full_time"),
    ("fts_brnn", "affine", "pooling"),
    ("fts_brnn_s", "affine", "full_time"),
    ("fts_brnn_s", "affine", "pooling"),
    ("fts_brnn_s", "concat", "full_time"),
    ("fts_brnn_s", "concat", "pooling"),
)


# ============== DADOS ==============

@dataclass
class PreparedData:
    """Splits codificados + vocabulário + tabela de embeddings (opcional)."""
    train: Dataset
    valid: Dataset
    test: Dataset
    vocab: Vocabulary
    table: EmbeddingTable | None = None


def _require(config: RunConfig, key: str) -> Any:
    value = getattr(config, key)
    if value is None:
        raise ConfigError(key, "required for this command")
    return value


def align_answers(d: Dataset, answer_set: AnswerSet) -> Dataset:
    """Remapeia as respostas de `d` para `answer_set` pela frase; perguntas sem correspondência saem."""
    by_phrase = {a.phrase: a.answer_id for a in answer_set.answers}
    questions = []
    dropped = 0
    for q in d.questions:
        answer_id = by_phrase.get(d.answer_set.phrase(q.answer_id))
        if answer_id is None:
            dropped += 1
            continue
        questions.append(replace(q, answer_id=answer_id))
    if dropped:
        log_component_action("@Loader", "Questions with unknown answers dropped", {
            "split": d.split_tag, "dropped": dropped
        }, level="warning")
    return Dataset(questions=tuple(questions), answer_set=answer_set, split_tag=d.split_tag)


def load_splits(config: RunConfig) -> tuple[Dataset, Dataset, Dataset]:
    """
    Splits de treino/validação/teste. Com valid_dataset e test_dataset os
    três arquivos são usados como estão; senão `dataset` é filtrado por
    min_answer_count e dividido com a seed.
    """
    data = load_dataset(_require(config, "dataset"))
    if config.valid_dataset is not None and config.test_dataset is not None:
        valid = replace(load_dataset(config.valid_dataset), split_tag="validation")
        test = replace(load_dataset(config.test_dataset), split_tag="test")
        return (
            replace(data, split_tag="train"),
            align_answers(valid, data.answer_set),
            align_answers(test, data.answer_set),
        )
    return split_dataset(filter_min_answer_count(data, config.min_answer_count), config.seed)


def prepare_splits(
    config: RunConfig,
    train: Dataset,
    valid: Dataset,
    test: Dataset
) -> PreparedData:
    """Constrói o vocabulário a partir do treino e codifica os três splits."""
    table = load_embeddings(config.embeddings, config.embedding_dim) if config.embeddings is not None else None
    vocab = Vocabulary.build([train], unk_policy=config.unk_policy)
    print_frame(dataset_statistics({"train": train, "validation": valid, "test": test}), "Dataset statistics")
    log_component_action("@Loader", "Vocabulary built", {"tokens": len(vocab), "answers": len(train.answer_set)})
    return PreparedData(
        train=encode(train, vocab), valid=encode(valid, vocab), test=encode(test, vocab),
        vocab=vocab, table=table
    )


def prepare_data(config: RunConfig, dataset: Dataset | None = None) -> PreparedData:
    """Carrega (ou usa `dataset`), divide e codifica."""
    if dataset is None:
        splits = load_splits(config)
    else:
        splits = split_dataset(filter_min_answer_count(dataset, config.min_answer_count), config.seed)
    return prepare_splits(config, *splits)


# ============== TREINO ==============

@dataclass
class TrainResult:
    """Resultado de uma execução de treino."""
    model: ModelParams
    best: Checkpoint
    seq_len: int | None
    history: list[dict[str, Any]] = field(default_factory=list)
    test_acc_innerp: float | None = None
    test_acc_lr: float | None = None


class Trainer:
    """
    Treino com seleção do melhor epoch pela acurácia de validação
    (produto interno).
    """

    def __init__(self, config: RunConfig):
        self.name = "@Trainer"
        self.config = config

    def log(self, message: str, data: dict | None = None, level: str = "info"):
        """Log com estrutura padronizada."""
        log_component_action(self.name, message, data, level)

    def resolve_seq_len(self, train: Dataset) -> int | None:
        """T da variante fts_brnn_s: config, ou a maior pergunta do treino."""
        if self.config.variant != "fts_brnn_s":
            return None
        if self.config.seq_len is not None:
            return self.config.seq_len
        return max(len(q.token_ids) for q in train.questions)

    def build_model(self, data: PreparedData, rng: np.random.Generator) -> ModelParams:
        cfg = self.config
        matrix = build_embedding_matrix(data.vocab, data.table, cfg.embedding_dim, rng)
        return init_model(
            cfg.variant, cfg.output_mode, cfg.dim, matrix,
            trainable_rows(data.vocab, data.table, cfg.train_embeddings), rng, pad_id=data.vocab.pad_id
        )

    def objective(self, seq_len: int | None) -> Objective:
        cfg = self.config
        return Objective(
            variant=cfg.variant,
            loss_kind=cfg.loss_kind,
            cfg=LossConfig(margin=cfg.margin, wrong_answer_policy=cfg.wrong_answer_policy, k=cfg.sample_k, pooling=cfg.pooling),
            seq_len=seq_len,
        )

    def fit(self, data: PreparedData, out_dir: Path | None = None) -> TrainResult:
        """
        Treina por `epochs` épocas.

        Args:
            data: Splits codificados
            out_dir: Onde gravar metrics.jsonl, config.resolved e os
                checkpoints (None = nada em disco)
        """
        cfg = self.config
        if len(data.train) == 0:
            raise ConfigError("dataset", "training split is empty")
        rng = np.random.default_rng(cfg.seed)
        seq_len = self.resolve_seq_len(data.train)
        resolved = cfg.model_copy(update={"seq_len": seq_len})
        model = self.build_model(data, rng)
        objective = self.objective(seq_len)
        state = OptimizerState.for_params(model.named_tensors())
        answers = answer_tokens_of(data.train)

        writer = None
        if out_dir is not None:
            atomic_write_text(out_dir / "config.resolved", resolved.resolved_text())
            writer = MetricsWriter(out_dir / "metrics.jsonl")
        self.log("Training started", {
            "variant": cfg.variant, "output_mode": cfg.output_mode, "loss": cfg.loss_kind,
            "train": len(data.train), "validation": len(data.valid), "seq_len": seq_len
        })
        if len(data.valid) == 0:
            self.log("Empty validation split, best checkpoint follows the last epoch", level="warning")

        history: list[dict[str, Any]] = []
        best: Checkpoint | None = None
        best_acc: float | None = None
        for epoch in range(1, cfg.epochs + 1):
            stats = train_epoch(model, data.train.questions, answers, objective, cfg, state, rng)
            val_acc = evaluate(model, data.valid, "innerp", seq_len=seq_len) if len(data.valid) else None
            record = {"epoch": epoch, "mean_loss": stats.mean_loss, "val_acc_innerp": val_acc}
            history.append(record)
            if writer is not None:
                writer.append(record)
            self.log("Epoch finished", record)

            # sem validação, o melhor é sempre o último epoch
            if val_acc is None or best_acc is None or val_acc > best_acc:
                best_acc = val_acc
                best = checkpoint_from_model(
                    model, resolved, data.vocab, data.train.answer_set,
                    {"epoch": epoch, "val_acc_innerp": val_acc}
                )
                if out_dir is not None:
                    save_checkpoint(out_dir / "best.ckpt", best)

        if out_dir is not None:
            final = checkpoint_from_model(
                model, resolved, data.vocab, data.train.answer_set,
                {"epoch": cfg.epochs, "val_acc_innerp": history[-1]["val_acc_innerp"]}
            )
            save_checkpoint(out_dir / "final.ckpt", final)

        result = TrainResult(model=model, best=best, seq_len=seq_len, history=history)
        self._score_test(result, data)
        return result

    def _score_test(self, result: TrainResult, data: PreparedData) -> None:
        """Avalia o melhor epoch no teste pelos dois métodos."""
        if len(data.test) == 0:
            self.log("Empty test split, skipping test evaluation", level="warning")
            return
        cfg = self.config
        best_model = model_from_checkpoint(result.best)
        result.test_acc_innerp = evaluate(best_model, data.test, "innerp", seq_len=result.seq_len)
        if len(data.train.answer_set) >= 2:
            lr_model = fit_lr_head(
                best_model, data.train, result.seq_len,
                l2=cfg.lr_l2, iterations=cfg.lr_iterations, step_size=cfg.lr_step_size
            )
            result.test_acc_lr = evaluate(best_model, data.test, "lr", lr_model, result.seq_len)
        self.log("Test evaluation", {
            "best_epoch": result.best.best["epoch"],
            "acc_innerp": result.test_acc_innerp,
            "acc_lr": result.test_acc_lr
        })


def run_train(config: RunConfig) -> int:
    out_dir = Path(config.out)
    result = Trainer(config).fit(prepare_data(config), out_dir)
    print_frame(pd.DataFrame([{
        "best_epoch": result.best.best["epoch"],
        "val_acc_innerp": result.best.best["val_acc_innerp"],
        "test_acc_innerp": result.test_acc_innerp,
        "test_acc_lr": result.test_acc_lr,
    }]), "Training summary")
    return 0


# ============== AVALIAÇÃO / PREDIÇÃO ==============

@dataclass
class LoadedRun:
    """Modelo restaurado de um checkpoint + splits codificados com o vocabulário dele."""
    model: ModelParams
    config: RunConfig
    train: Dataset
    test: Dataset


def load_run(config: RunConfig) -> LoadedRun:
    """
    Restaura o checkpoint e refaz os splits com a seed e o filtro do
    treino; caminhos de dados passados agora têm precedência.
    """
    ckpt = load_checkpoint(_require(config, "checkpoint"))
    trained = ckpt.run_config()
    paths = {
        key: getattr(config, key)
        for key in ("dataset", "valid_dataset", "test_dataset")
        if getattr(config, key) is not None
    }
    effective = trained.model_copy(update=paths)
    train, _, test = load_splits(effective)
    vocab = ckpt.vocabulary()
    answer_set = ckpt.answer_set()
    return LoadedRun(
        model=model_from_checkpoint(ckpt),
        config=effective,
        train=encode(align_answers(train, answer_set), vocab),
        test=encode(align_answers(test, answer_set), vocab),
    )


def run_eval(config: RunConfig) -> int:
    loaded = load_run(config)
    lr_model = None
    if config.eval_method == "lr":
        lr_model = fit_lr_head(
            loaded.model, loaded.train, loaded.config.seq_len,
            l2=config.lr_l2, iterations=config.lr_iterations, step_size=config.lr_step_size
        )
    accuracy = evaluate(loaded.model, loaded.test, config.eval_method, lr_model, loaded.config.seq_len)
    report = {"split": "test", "method": config.eval_method, "questions": len(loaded.test), "accuracy": accuracy}
    log_component_action("@Evaluator", "Evaluation finished", report)
    out_dir = Path(config.out)
    atomic_write_text(out_dir / "eval.json", json.dumps(report, sort_keys=True) + "\n")
    print_frame(pd.DataFrame([report]), "Evaluation")
    return 0


def run_predict(config: RunConfig) -> int:
    """TSV: question_index, true_answer, predicted_answer, top5_ids."""
    loaded = load_run(config)
    seq_len = loaded.config.seq_len
    answers = answer_representations(loaded.model, answer_tokens_of(loaded.test), seq_len)
    lr_model = None
    if config.eval_method == "lr":
        lr_model = fit_lr_head(
            loaded.model, loaded.train, seq_len,
            l2=config.lr_l2, iterations=config.lr_iterations, step_size=config.lr_step_size
        )

    answer_set = loaded.test.answer_set
    lines = ["question_index\ttrue_answer\tpredicted_answer\ttop5_ids"]
    for index, q in enumerate(loaded.test.questions):
        rep = question_representation(loaded.model, q.token_ids, seq_len)
        top = rank_answers(rep, answers, k=5, lr_model=lr_model)
        lines.append(
            f"{index}\t{answer_set.phrase(q.answer_id)}\t{answer_set.phrase(top[0])}\t{','.join(map(str, top))}"
        )
    path = atomic_write_text(Path(config.out) / "predictions.tsv", "\n".join(lines) + "\n")
    log_component_action("@Evaluator", "Predictions written", {"path": str(path), "questions": len(loaded.test)})
    return 0


# ============== GRADCHECK ==============

def run_gradcheck(config: RunConfig) -> int:
    """Todas as combinações variante × saída × loss; falha se alguma passar da tolerância."""
    rng = np.random.default_rng(config.seed)
    rows = []
    records = []
    for variant, output_mode, loss_kind in GRADCHECK_GRID:
        name = f"{variant}/{output_mode}/{loss_kind}"
        worst = 0.0
        passed = True
        for instance in range(config.gradcheck_instances):
            model, batch, answers, seq_len = make_gradcheck_instance(variant, output_mode, rng)
            objective = Objective(variant=variant, loss_kind=loss_kind, cfg=LossConfig(margin=config.margin), seq_len=seq_len)
            report = gradient_check(
                model, batch, answers, objective,
                tolerance=config.gradcheck_tolerance, step=config.gradcheck_step
            )
            worst = max(worst, report.worst)
            passed = passed and report.passed
            records.append({
                "configuration": name, "instance": instance, "passed": report.passed,
                "max_relative_error": report.max_relative_error
            })
        rows.append({"configuration": name, "instances": config.gradcheck_instances,
                     "worst_relative_error": worst, "passed": passed})
        log_component_action("@GradCheck", "Configuration checked", rows[-1], level="info" if passed else "warning")

    writer = MetricsWriter(Path(config.out) / "gradcheck.jsonl")
    for record in records:
        writer.append(record)
    print_frame(gradcheck_frame(rows), f"Gradient check (tolerance {config.gradcheck_tolerance:g})")
    return 0 if all(row["passed"] for row in rows) else 1


# ============== SPLIT / SYNTH ==============

def run_split(config: RunConfig) -> int:
    source = Path(_require(config, "dataset"))
    data = filter_min_answer_count(load_dataset(source), config.min_answer_count)
    train, valid, test = split_dataset(data, config.seed)
    paths = save_splits(Path(config.out) / source.stem, train, valid, test)
    print_frame(dataset_statistics({"train": train, "validation": valid, "test": test}), "Dataset statistics")
    log_component_action("@Loader", "Splits written", {"paths": [str(p) for p in paths]})
    return 0


def run_synth(config: RunConfig) -> int:
    data = generate_synthetic(
        n_answers=config.n_answers, q_per_answer=config.q_per_answer,
        signature_len=config.signature_len, noise_len=config.noise_len,
        seed=config.seed, noise_pool=config.noise_pool
    )
    path = save_dataset(data, Path(config.out) / "synthetic.jsonl")
    log_component_action("@Synth", "Synthetic dataset written", {
        "path": str(path), "questions": len(data), "answers": len(data.answer_set)
    })
    return 0


# ============== ABLAÇÃO ==============

def run_ablation(config: RunConfig, data: PreparedData) -> list[dict[str, Any]]:
    """Um treino por (configuração, seed) sobre o mesmo split."""
    records = []
    for name, variant, output_mode, loss_kind in ABLATION_GRID:
        for seed in config.seeds:
            cfg = config.model_copy(update={
                "variant": variant, "output_mode": output_mode, "loss_kind": loss_kind, "seed": seed
            })
            result = Trainer(cfg).fit(data)
            records.append({
                "configuration": name, "seed": seed,
                "acc_innerp": result.test_acc_innerp, "acc_lr": result.test_acc_lr
            })
    return records


def run_ablate(config: RunConfig) -> int:
    records = run_ablation(config, prepare_data(config))
    writer = MetricsWriter(Path(config.out) / "ablation.jsonl")
    for record in records:
        writer.append(record)
    print_frame(summarize_ablation(records), f"Ablation over seeds {config.seeds}")
    return 0


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "train": run_train,
    "eval": run_eval,
    "predict": run_predict,
    "gradcheck": run_gradcheck,
    "split": run_split,
    "synth": run_synth,
    "ablate": run_ablate,
}


def run(command: str, config: RunConfig) -> int:
    """
    Executa um comando.

    Returns:
        Status de saída (0 = sucesso, 1 = gradcheck reprovado)

    Raises:
        ConfigError: comando desconhecido ou caminho obrigatório ausente
        OSError: arquivos ausentes/ilegíveis
    """
    handler = COMMANDS.get(command)
    if handler is None:
        raise ConfigError("command", f"unknown command '{command}' (expected one of {', '.join(COMMANDS)})")
    bind_run_context(command=command, seed=config.seed)
    log_component_action("@Trainer", "Run started", {"command": command})
    log_component_action("@Trainer", "Resolved config", {"config": config.resolved_text()}, level="debug")
    return handler(config)
