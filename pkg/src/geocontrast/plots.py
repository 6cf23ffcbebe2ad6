"""Matplotlib figures rendered next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .downstream import EvalReport
from .pretrain import TrainingLog


def plot_training_curves(log: TrainingLog, path):
    fig, (ax_loss, ax_tau) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(log.epochs, log.train_loss, label="train")
    ax_loss.plot(log.epochs, log.val_loss, label="validation")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("contrastive loss")
    ax_loss.legend()
    ax_tau.plot(log.epochs, log.tau)
    ax_tau.set_xlabel("epoch")
    ax_tau.set_ylabel("temperature")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_eval_report(report: EvalReport, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    runs = range(1, len(report.values) + 1)
    ax.bar(runs, report.values)
    ax.axhline(report.mean, color="k", linestyle="--",
               label=f"mean {report.mean:.3f} ± {report.std:.3f}")
    ax.set_xlabel("run")
    ax.set_ylabel(report.metric)
    ax.set_title(report.task)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_explained_variance(ratios, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(range(1, len(ratios) + 1), ratios, marker="o", markersize=3)
    ax.set_xlabel("component")
    ax.set_ylabel("explained variance ratio")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
