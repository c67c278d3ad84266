"""Two-pass training: encode every paragraph once without retaining activations,
then recompute one paragraph at a time with retention and backpropagate.

Retained memory is measured in scalars on a single :class:`Tape` that lives for
the whole question; pass 1 runs in discard mode and keeps only the pinned
mention-sum blocks, pass 2 retains one paragraph's graph at a time.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import EmptyPassage
from .optim import Optimizer, zero_grads
from .reader import Prepared, Reader
from .tensor import DISCARD, RETAIN, Tape, backward

log = logging.getLogger(__name__)


class TrainMode(str, enum.Enum):
    FAITHFUL = "faithful"
    ACCUMULATE = "accumulate"


@dataclass
class MemoryReport:
    paragraph_count: int
    peak_retained_scalars: int = 0
    pass1_peak: int = 0
    pass2_peaks: list[int] = field(default_factory=list)
    pinned_scalars: int = 0
    parameter_scalars: int = 0
    losses: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def pass1(reader: Reader, prep: Prepared, tape: Tape, params=None,
          training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> list[np.ndarray]:
    """Encode all paragraphs in discard mode; pin and return their mention-sum blocks."""
    if prep.num_paragraphs == 0:
        raise EmptyPassage(f"question {prep.question.id} has no paragraphs")
    tape.mode = DISCARD
    pins = []
    with tape:
        for k in range(prep.num_paragraphs):
            sums = reader.paragraph_sums(prep, k, params, training, dropout_key)
            tape.pin(sums)
            pins.append(sums.data)
    return pins


def pass2_step(reader: Reader, prep: Prepared, k: int, pins: list[np.ndarray], tape: Tape,
               mode: TrainMode, optimizer: Optimizer | None = None, training: bool = False,
               dropout_key: tuple[int, ...] = (0,)) -> float:
    """Recompute paragraph ``k`` with retention, backpropagate the passage loss.

    Faithful mode applies ``optimizer`` right away. Accumulate mode leaves the
    gradients on the parameters for the caller to sum across paragraphs.
    """
    if not 0 <= k < prep.num_paragraphs:
        raise IndexError(f"paragraph {k} out of range for {prep.num_paragraphs} paragraphs")
    tape.mode = RETAIN
    with tape:
        loss = reader.loss_full(prep, k, frozen=pins, training=training, dropout_key=dropout_key)
        backward(loss)
    tape.release()
    if mode is TrainMode.FAITHFUL:
        if optimizer is None:
            raise ValueError("faithful mode needs an optimizer")
        optimizer.step(reader.params)
        zero_grads(reader.params)
    return loss.item()


def two_pass_gradients(reader: Reader, prep: Prepared, tape: Tape | None = None,
                       training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> tuple[dict[str, np.ndarray], MemoryReport]:
    """Accumulate-mode gradient for one question, without touching the parameters.

    Encoder gradients are summed over every paragraph step; head gradients are
    taken from the first step only, since each step already sees the whole
    passage through the pins.
    """
    tape = tape or Tape()
    zero_grads(reader.params)
    report = MemoryReport(paragraph_count=prep.num_paragraphs)
    pins = pass1(reader, prep, tape, training=training, dropout_key=dropout_key)
    report.pass1_peak = tape.peak_scalars
    head_grads: dict[str, np.ndarray] = {}
    for k in range(prep.num_paragraphs):
        tape.reset_peak()
        report.losses.append(pass2_step(reader, prep, k, pins, tape, TrainMode.ACCUMULATE,
                                        training=training, dropout_key=dropout_key))
        report.pass2_peaks.append(tape.peak_scalars)
        if k == 0:
            head_grads = {n: p.grad.copy() for n, p in reader.head_params.items() if p.grad is not None}
    grads = {n: p.grad.copy() for n, p in reader.encoder_params.items() if p.grad is not None}
    grads.update(head_grads)
    _finish_report(report, tape)
    zero_grads(reader.params)
    return grads, report


def naive_gradients(reader: Reader, prep: Prepared, tape: Tape | None = None,
                    training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> tuple[dict[str, np.ndarray], float, Tape]:
    """Full-retention gradient: all paragraphs in one graph."""
    tape = tape or Tape(RETAIN)
    zero_grads(reader.params)
    with tape:
        loss = reader.loss_naive(prep, training=training, dropout_key=dropout_key)
        backward(loss)
    grads = {n: p.grad.copy() for n, p in reader.params.items() if p.grad is not None}
    zero_grads(reader.params)
    return grads, loss.item(), tape


def _finish_report(report: MemoryReport, tape: Tape) -> None:
    report.pinned_scalars = tape.pinned_scalars
    report.parameter_scalars = tape.leaf_scalars
    report.peak_retained_scalars = max([report.pass1_peak, *report.pass2_peaks])
    tape.unpin_all()


def train_question(reader: Reader, prep: Prepared, optimizer: Optimizer, mode: TrainMode = TrainMode.FAITHFUL,
                   training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> MemoryReport:
    """One question's update under the two-pass scheme.

    Pins come from the parameters as they stand when the question starts and
    are not refreshed inside the paragraph loop, so in faithful mode later
    steps combine stale pins with freshly updated parameters.
    """
    mode = TrainMode(mode)
    if mode is TrainMode.ACCUMULATE:
        grads, report = two_pass_gradients(reader, prep, training=training, dropout_key=dropout_key)
        optimizer.step(reader.params, grads)
        return report
    tape = Tape()
    zero_grads(reader.params)
    report = MemoryReport(paragraph_count=prep.num_paragraphs)
    pins = pass1(reader, prep, tape, training=training, dropout_key=dropout_key)
    report.pass1_peak = tape.peak_scalars
    for k in range(prep.num_paragraphs):
        tape.reset_peak()
        report.losses.append(pass2_step(reader, prep, k, pins, tape, mode, optimizer,
                                        training=training, dropout_key=dropout_key))
        report.pass2_peaks.append(tape.peak_scalars)
    _finish_report(report, tape)
    return report


def naive_train_question(reader: Reader, prep: Prepared, optimizer: Optimizer,
                         training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> tuple[float, MemoryReport]:
    grads, loss, tape = naive_gradients(reader, prep, training=training, dropout_key=dropout_key)
    optimizer.step(reader.params, grads)
    report = MemoryReport(paragraph_count=prep.num_paragraphs, losses=[loss],
                          peak_retained_scalars=tape.peak_scalars, pass1_peak=tape.peak_scalars,
                          parameter_scalars=tape.leaf_scalars)
    return loss, report


def independent_train_question(reader: Reader, prep: Prepared, optimizer: Optimizer,
                               training: bool = False, dropout_key: tuple[int, ...] = (0,)) -> float:
    """Sum of per-paragraph losses, backpropagated one paragraph at a time, one update."""
    zero_grads(reader.params)
    total = 0.0
    for k in range(prep.num_paragraphs):
        loss = reader.independent_paragraph_loss(prep, k, training=training, dropout_key=dropout_key)
        backward(loss)
        total += loss.item()
    optimizer.step(reader.params)
    zero_grads(reader.params)
    return total



MODEL_KINDS = ("full", "independent", "oracle")


@dataclass
class FitResult:
    epoch_losses: list[float]
    question_losses: list[float]


def fit_reader(reader: Reader, questions, kind: str, optimizer: Optimizer, epochs: int, seed: int,
               mode: TrainMode = TrainMode.FAITHFUL, reanonymize_pool: int | None = None,
               training: bool = True) -> FitResult:
    """Train ``reader`` question by question for ``epochs`` passes.

    ``kind`` selects the objective: the two-pass full model, the
    independent-paragraph ablation, or the full model on oracle-filtered
    passages. Question order is reshuffled every epoch; with
    ``reanonymize_pool`` the entity ids and candidate order are re-drawn too.
    """
    from .reader import oracle_filter
    from .synthetic import reanonymize

    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    rng = np.random.default_rng(seed)
    epoch_losses, question_losses = [], []
    step = 0
    for epoch in range(epochs):
        total = 0.0
        for i in rng.permutation(len(questions)):
            q = questions[int(i)]
            if reanonymize_pool:
                q = reanonymize(q, rng, reanonymize_pool)
            if kind == "oracle":
                q = oracle_filter(q)
            prep = reader.prepare(q)
            key = (seed, step)
            if kind == "independent":
                loss = independent_train_question(reader, prep, optimizer, training, key)
            else:
                report = train_question(reader, prep, optimizer, mode, training, key)
                loss = float(np.mean(report.losses))
            question_losses.append(loss)
            total += loss
            step += 1
        epoch_losses.append(total / max(len(questions), 1))
        log.info("%s epoch %d loss %.4f", kind, epoch + 1, epoch_losses[-1])
    return FitResult(epoch_losses, question_losses)


def evaluate_reader(reader: Reader, questions, kind: str) -> tuple[float, list[str]]:
    """Accuracy and predictions; ``kind`` as in :func:`fit_reader`."""
    from .metrics import accuracy
    from .reader import oracle_filter
    from .tensor import no_grad

    preds = []
    with no_grad():
        for q in questions:
            if kind == "oracle":
                q = oracle_filter(q)
            prep = reader.prepare(q)
            preds.append(reader.independent_predict(prep) if kind == "independent" else reader.predict(prep))
    return accuracy(preds, [q.answer for q in questions]), preds
