"""Experiment drivers shared by the CLI and the acceptance suite.

``default_task`` is the desk-scale stand-in for the cross-dataset setup:
two domains built from one shared age basis with a moderate mixing shift,
train on domain 0, test on held-out domain-0 subjects (intra) and on
domain 1 (cross).
"""

from dataclasses import dataclass, replace

import numpy as np

from . import datagen
from .label_codec import DEFAULT_BINS, DEFAULT_SIGMA, encode_gaussian
from .losses import LossSpec, dc_loss, kl_loss
from .metrics import evaluate
from .model import TrainConfig, predict_ages, train

TASK_DIM = 32
TASK_SEVERITY = 0.2
TASK_SUBJECTS = 500
TASK_IMAGES = 5
TASK_HOLDOUT = 0.2
# from-scratch MLP, so rates are 100x the fine-tuning schedule; same 100:1 decay
TASK_LR_START = 0.1
TASK_LR_END = 0.001


@dataclass
class TaskData:
    train: datagen.SampleSet
    intra: datagen.SampleSet
    cross: datagen.SampleSet


def default_task(seed=0, L=DEFAULT_BINS, D=TASK_DIM, severity=TASK_SEVERITY,
                 subjects=TASK_SUBJECTS, images=TASK_IMAGES, holdout=TASK_HOLDOUT):
    domains = datagen.make_domains(2, D, severity=severity, seed=seed)
    data = datagen.generate(domains, subjects, images, L, D, seed=seed)
    train_side, cross = datagen.split_sc(data, {0}, {1})
    fit, intra = datagen.split_subjects(train_side, holdout, seed=seed)
    return TaskData(fit, intra, cross)


def task_config(spec, seed=0, **overrides):
    cfg = TrainConfig(loss=spec, seed=seed, lr_start=TASK_LR_START, lr_end=TASK_LR_END)
    return replace(cfg, **overrides) if overrides else cfg


def fit_and_score(task, cfg, backend=None):
    """Train on ``task.train``; return (intra MetricsReport, cross MetricsReport)."""
    model, _ = train(task.train, cfg, backend=backend)
    intra = evaluate(predict_ages(model, task.intra.features), task.intra.ages)
    cross = evaluate(predict_ages(model, task.cross.features), task.cross.ages)
    return intra, cross


# ------------------------------------------------------------ gradient study


def shift_distribution(q, shift):
    """Move ``q`` by ``shift`` bins without wrap-around, then renormalise."""
    out = np.zeros_like(q)
    L = q.size
    if abs(shift) >= L:
        raise ValueError(f"shift {shift} moves all mass out of {L} bins")
    if shift >= 0:
        out[shift:] = q[: L - shift]
    else:
        out[:shift] = q[-shift:]
    return out / out.sum()


@dataclass
class GradCompareRow:
    shift: int
    kl_grad: np.ndarray
    dc_grad: np.ndarray

    @property
    def kl_max(self):
        return float(np.abs(self.kl_grad).max())

    @property
    def dc_max(self):
        return float(np.abs(self.dc_grad).max())


def gradient_comparison(age=50, L=100, sigma=DEFAULT_SIGMA, alpha=0.01, n_samples=100,
                        max_shift=10, noise_level=0.01, seed=0):
    """Perturbed predictions around a Gaussian target, with KL and DC logit gradients.

    Each sample shifts the target by a uniform integer in
    ``[-max_shift, max_shift]``, adds per-bin uniform noise in
    ``[0, noise_level]`` and renormalises; that vector plays the softmax
    output ``p``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    LossSpec(alpha=alpha)  # validates alpha
    rng = np.random.default_rng(seed)
    q = encode_gaussian(age, L, sigma)
    rows = []
    for _ in range(n_samples):
        shift = int(rng.integers(-max_shift, max_shift + 1))
        p = shift_distribution(q, shift) + rng.uniform(0.0, noise_level, size=L)
        p /= p.sum()
        rows.append(GradCompareRow(shift, kl_loss(p, q).grad_z, dc_loss(p, q, alpha).grad_z))
    return rows


def fraction_dc_below_kl(rows):
    return sum(r.dc_max < r.kl_max for r in rows) / len(rows)


def alpha_sweep(alphas, seeds=(0,), task_kwargs=None, backend=None):
    """Cross-domain MAE per (alpha, seed) on the default task."""
    task_kwargs = task_kwargs or {}
    table = {}
    for seed in seeds:
        task = default_task(seed, **task_kwargs)
        for a in alphas:
            _, cross = fit_and_score(task, task_config(LossSpec("dc", alpha=a), seed), backend)
            table[(a, seed)] = cross.mae
    return table
