"""Dataset ingestion and split management.

Line-oriented loaders for the three supported corpus formats, a tokenizer,
train-only vocabulary building, cross-validation / holdout / fixed-test
split policies, and a deterministic synthetic corpus so the package tests
itself without licensed data.
"""

from __future__ import annotations

import hashlib
import os
import pickle
import random
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

TOKENIZER_VERSION = 1

_CONTROL = re.compile(r"[\x00-\x1f\x7f]")
_TOKEN = re.compile(r"\w+|[^\w\s]")


class DataError(ValueError):
    """A dataset file is missing or malformed."""


@dataclass(frozen=True)
class LabeledSentence:
    tokens: tuple[str, ...]
    label: int


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase, strip control characters, separate punctuation into
    standalone tokens, collapse whitespace."""
    cleaned = _CONTROL.sub(" ", text).lower()
    return tuple(_TOKEN.findall(cleaned))


def _read_lines(path: str) -> list[str]:
    if not os.path.exists(path):
        raise DataError(f"dataset file not found: {path}")
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        return fh.read().splitlines()


def load_mr(pos_path: str, neg_path: str) -> list[LabeledSentence]:
    """Two one-sentence-per-line files: positives (label 1), negatives (0)."""
    sentences: list[LabeledSentence] = []
    for path, label in ((neg_path, 0), (pos_path, 1)):
        lines = _read_lines(path)
        count = 0
        for line in lines:
            tokens = tokenize(line)
            if tokens:
                sentences.append(LabeledSentence(tokens, label))
                count += 1
        if count == 0:
            raise DataError(f"no sentences in {path}")
    return sentences


def load_cr(path: str) -> list[LabeledSentence]:
    """Tab-separated "label<TAB>sentence" lines with labels 0 or 1."""
    sentences: list[LabeledSentence] = []
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        head, _, text = line.partition("\t")
        if head not in ("0", "1") or not text:
            raise DataError(f"{path}:{lineno}: malformed label line: {line!r}")
        tokens = tokenize(text)
        if tokens:
            sentences.append(LabeledSentence(tokens, int(head)))
    if not sentences:
        raise DataError(f"no sentences in {path}")
    return sentences


def load_trec(
    train_path: str, test_path: str
) -> tuple[list[LabeledSentence], list[LabeledSentence], tuple[str, ...]]:
    """Question lines "COARSE:fine question ...".

    The coarse label before the colon is the class; ids follow first
    appearance in the training file. The test file becomes the fixed
    held-out split and must not introduce new classes.
    """
    class_ids: dict[str, int] = {}

    def parse(path: str, allow_new: bool) -> list[LabeledSentence]:
        out = []
        for lineno, line in enumerate(_read_lines(path), 1):
            if not line.strip():
                continue
            head, _, text = line.partition(" ")
            coarse, colon, _fine = head.partition(":")
            if not colon or not coarse or not text.strip():
                raise DataError(f"{path}:{lineno}: malformed question line: {line!r}")
            if coarse not in class_ids:
                if not allow_new:
                    raise DataError(
                        f"{path}:{lineno}: class {coarse!r} absent from training file"
                    )
                class_ids[coarse] = len(class_ids)
            tokens = tokenize(text)
            if tokens:
                out.append(LabeledSentence(tokens, class_ids[coarse]))
        if not out:
            raise DataError(f"no sentences in {path}")
        return out

    train = parse(train_path, allow_new=True)
    test = parse(test_path, allow_new=False)
    return train, test, tuple(class_ids)


# --- split policies -----------------------------------------------------------


@dataclass(frozen=True)
class CvPolicy:
    folds: int
    fold_index: int


@dataclass(frozen=True)
class HoldoutPolicy:
    test_fraction: float


@dataclass(frozen=True)
class FixedTestPolicy:
    test: tuple[LabeledSentence, ...]


SplitPolicy = CvPolicy | HoldoutPolicy | FixedTestPolicy


@dataclass(frozen=True)
class CorpusStats:
    class_count: int
    average_length: float
    dataset_size: int
    vocab_size: int


@dataclass
class PreparedCorpus:
    vocabulary: dict[str, int]
    class_names: tuple[str, ...]
    train_ids: np.ndarray
    train_labels: np.ndarray
    validation_ids: np.ndarray
    validation_labels: np.ndarray
    test_ids: np.ndarray
    test_labels: np.ndarray
    sentence_length: int
    stats: CorpusStats

    @property
    def class_count(self) -> int:
        return self.stats.class_count

    @property
    def vocab_size(self) -> int:
        return self.stats.vocab_size

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name == "train":
            return self.train_ids, self.train_labels
        if name == "validation":
            return self.validation_ids, self.validation_labels
        if name == "test":
            return self.test_ids, self.test_labels
        raise KeyError(name)


def _encode(
    sentences: Sequence[LabeledSentence], vocab: dict[str, int], length: int
) -> tuple[np.ndarray, np.ndarray]:
    ids = np.full((len(sentences), length), PAD_ID, dtype=np.int64)
    labels = np.zeros(len(sentences), dtype=np.int64)
    for row, sentence in enumerate(sentences):
        for col, token in enumerate(sentence.tokens[:length]):
            ids[row, col] = vocab.get(token, UNK_ID)
        labels[row] = sentence.label
    return ids, labels


def make_splits(
    data: Sequence[LabeledSentence],
    policy: SplitPolicy,
    ratio_init: float,
    seed: int,
    class_names: Sequence[str] | None = None,
) -> PreparedCorpus:
    """Carve test / train / validation splits and encode them.

    The policy fixes the test split; the remaining "original training set"
    is split train/validation by ratio_init, stratified per class with a
    seeded shuffle. The vocabulary comes from the train split only, so
    unknown-token handling in validation/test is exercised honestly.
    """
    if not data:
        raise DataError("empty dataset")
    if not 0.0 < ratio_init < 1.0:
        raise ValueError("ratio_init must lie in (0, 1)")
    rng = random.Random(seed)
    data = list(data)

    if isinstance(policy, CvPolicy):
        if policy.folds < 2:
            raise ValueError("cross validation needs at least 2 folds")
        if not 0 <= policy.fold_index < policy.folds:
            raise ValueError("fold_index outside range")
        indices = list(range(len(data)))
        rng.shuffle(indices)
        fold_sizes = [
            len(data) // policy.folds + (1 if i < len(data) % policy.folds else 0)
            for i in range(policy.folds)
        ]
        start = sum(fold_sizes[: policy.fold_index])
        fold = set(indices[start : start + fold_sizes[policy.fold_index]])
        test = [data[i] for i in sorted(fold)]
        original_train = [data[i] for i in range(len(data)) if i not in fold]
    elif isinstance(policy, HoldoutPolicy):
        if not 0.0 <= policy.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in [0, 1)")
        indices = list(range(len(data)))
        rng.shuffle(indices)
        n_test = round(policy.test_fraction * len(data))
        chosen = set(indices[:n_test])
        test = [data[i] for i in sorted(chosen)]
        original_train = [data[i] for i in range(len(data)) if i not in chosen]
    elif isinstance(policy, FixedTestPolicy):
        test = list(policy.test)
        original_train = data
    else:
        raise TypeError(f"unknown split policy: {policy!r}")

    # stratified train/validation split of the original training set
    by_class: dict[int, list[int]] = {}
    for i, sentence in enumerate(original_train):
        by_class.setdefault(sentence.label, []).append(i)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for label in sorted(by_class):
        group = by_class[label]
        rng.shuffle(group)
        n_train = round(ratio_init * len(group))
        if n_train == 0:
            raise DataError(
                f"stratification failed: class {label} would vanish from train"
            )
        train_idx.extend(group[:n_train])
        val_idx.extend(group[n_train:])
    train_idx.sort()
    val_idx.sort()
    train = [original_train[i] for i in train_idx]
    validation = [original_train[i] for i in val_idx]

    all_labels = {s.label for s in data} | {s.label for s in test}
    class_count = max(all_labels) + 1
    if class_names is None:
        class_names = tuple(str(c) for c in range(class_count))
    else:
        class_names = tuple(class_names)
        if len(class_names) < class_count:
            raise ValueError("fewer class names than observed classes")

    vocab = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
    for sentence in train:
        for token in sentence.tokens:
            if token not in vocab:
                vocab[token] = len(vocab)

    train_lengths = [len(s.tokens) for s in train]
    sentence_length = max(5, int(np.ceil(np.percentile(train_lengths, 95))))

    everything = list(data) + (test if isinstance(policy, FixedTestPolicy) else [])
    stats = CorpusStats(
        class_count=class_count,
        average_length=float(np.mean([len(s.tokens) for s in everything])),
        dataset_size=len(everything),
        vocab_size=len(vocab),
    )
    train_ids, train_labels = _encode(train, vocab, sentence_length)
    val_ids, val_labels = _encode(validation, vocab, sentence_length)
    test_ids, test_labels = _encode(test, vocab, sentence_length)
    return PreparedCorpus(
        vocabulary=vocab,
        class_names=class_names,
        train_ids=train_ids,
        train_labels=train_labels,
        validation_ids=val_ids,
        validation_labels=val_labels,
        test_ids=test_ids,
        test_labels=test_labels,
        sentence_length=sentence_length,
        stats=stats,
    )


def synthetic_corpus(
    class_count: int, samples_per_class: int, vocab_size: int, seed: int
) -> list[LabeledSentence]:
    """Linearly separable sentences: each class owns a disjoint keyword set,
    every sentence opens with one of its class's keywords, and filler tokens
    come from a shared pool no class owns."""
    if vocab_size < 2 * class_count:
        raise ValueError("vocab_size must be at least 2 * class_count")
    words = [f"w{i:03d}" for i in range(vocab_size)]
    chunk = vocab_size // (2 * class_count)
    keywords = [words[c * chunk : (c + 1) * chunk] for c in range(class_count)]
    shared = words[class_count * chunk :]
    rng = random.Random(seed)
    sentences = []
    for label in range(class_count):
        for _ in range(samples_per_class):
            length = rng.randint(6, 12)
            tokens = [rng.choice(keywords[label])]
            for _ in range(length - 1):
                if rng.random() < 0.6:
                    tokens.append(rng.choice(keywords[label]))
                else:
                    tokens.append(rng.choice(shared))
            sentences.append(LabeledSentence(tuple(tokens), label))
    return sentences


# --- prepared-corpus cache ----------------------------------------------------

CACHE_FORMAT_VERSION = 1


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def corpus_cache_key(
    digests: Iterable[str], policy: SplitPolicy, ratio_init: float, seed: int
) -> str:
    payload = repr((sorted(digests), TOKENIZER_VERSION, policy, ratio_init, seed))
    return hashlib.sha256(payload.encode()).hexdigest()


def save_prepared(prepared: PreparedCorpus, path: str) -> None:
    with open(path, "wb") as fh:
        pickle.dump({"version": CACHE_FORMAT_VERSION, "corpus": prepared}, fh)


def load_prepared(path: str) -> PreparedCorpus:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if payload.get("version") != CACHE_FORMAT_VERSION:
        raise DataError("incompatible prepared-corpus cache")
    return payload["corpus"]
