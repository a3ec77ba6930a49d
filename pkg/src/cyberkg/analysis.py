"""PCA and logistic regression over the 4-variable risk dataset.

Both fits are first-principles: the PCA eigendecomposition uses cyclic
Jacobi rotations on the 4x4 covariance matrix and the unregularized logistic
regression is fitted by Newton-Raphson with a gradient-ascent fallback. The
report path renders the component-weight table, the confusion matrix and the
PC-score scatter both as delimited files and as matplotlib figures.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DegenerateInputError, SingleClassSplitError
from .risk import ATTACK

VARIABLES = ("C", "I", "c", "i")

PAPER_REFERENCE = {
    "note": (
        "values reported for the authors' 11,028-observation dataset; "
        "printed for comparison only, reproducible only with equivalent data"
    ),
    "observations": 11028,
    "accuracy": 0.69,
    "f1": 0.65,
    "explained_variance_two_components": 0.94,
    "explained_variance_ratios": [0.83, 0.11],
    "table1": {
        "C": {"pca1": 0.075, "pca2": -0.127, "logreg": -0.004},
        "I": {"pca1": 0.516, "pca2": -0.737, "logreg": 0.025},
        "c": {"pca1": 0.176, "pca2": -0.377, "logreg": 0.039},
        "i": {"pca1": 0.835, "pca2": 0.547, "logreg": 0.007},
    },
}


# --- PCA -----------------------------------------------------------------------

@dataclass
class PcaResult:
    components: np.ndarray                 # (k, 4) orthonormal rows
    explained_variance_ratio: np.ndarray   # (4,) descending, sums to 1
    eigenvalues: np.ndarray                # (4,) descending
    mean: np.ndarray                       # (4,)

    def scores(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=float) - self.mean) @ self.components.T


def jacobi_eigh(matrix: np.ndarray, off_tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition of a small symmetric matrix."""
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2)
        if off < off_tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    return np.diag(a).copy(), v


def pca_fit(data: list | np.ndarray, k: int = 2) -> PcaResult:
    """Eigendecomposition of the covariance matrix, components sorted by
    eigenvalue; each component's largest-magnitude loading is made positive."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[1] != 4:
        raise ValueError("expected an (n, 4) sample matrix")
    if not 1 <= k <= 4:
        raise ValueError("k must be in 1..4")
    if x.shape[0] < 5:
        raise ValueError("need at least 5 samples")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    if np.trace(cov) <= 0.0 or not np.any(np.abs(cov) > 1e-15):
        raise DegenerateInputError("covariance matrix has no variance")
    eigvals, eigvecs = jacobi_eigh(cov)
    order = np.argsort(-eigvals)
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    for j in range(eigvecs.shape[1]):
        lead = int(np.argmax(np.abs(eigvecs[:, j])))
        if eigvecs[lead, j] < 0:
            eigvecs[:, j] = -eigvecs[:, j]
    ratios = eigvals / eigvals.sum()
    return PcaResult(
        components=eigvecs.T[:k].copy(),
        explained_variance_ratio=ratios,
        eigenvalues=eigvals,
        mean=mean,
    )


# --- logistic regression ----------------------------------------------------------

@dataclass
class LogRegModel:
    coefficients: np.ndarray      # (4,)
    intercept: float
    iterations: int
    converged: bool
    seed: int

    def predict_proba(self, data: np.ndarray) -> np.ndarray:
        eta = np.asarray(data, dtype=float) @ self.coefficients + self.intercept
        return _sigmoid(eta)

    def predict(self, data: np.ndarray) -> np.ndarray:
        return (self.predict_proba(data) > 0.5).astype(int)


@dataclass
class EvalReport:
    accuracy: float
    f1: float
    confusion: list[list[float]]  # rows true class [non_attack, attack], fractions
    split: float
    seed: int


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta, dtype=float)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    expeta = np.exp(eta[~pos])
    out[~pos] = expeta / (1.0 + expeta)
    return out


def log_likelihood(beta: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """Bernoulli log-likelihood; x already carries the intercept column."""
    eta = x @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def log_likelihood_grad(beta: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return x.T @ (y - _sigmoid(x @ beta))


def _fit_mle(x: np.ndarray, y: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, int, bool]:
    beta = np.zeros(x.shape[1])
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        grad = log_likelihood_grad(beta, x, y)
        if float(np.linalg.norm(grad)) < tol:
            converged = True
            break
        p = _sigmoid(x @ beta)
        w = p * (1.0 - p)
        hessian = x.T @ (x * w[:, None])
        step: Optional[np.ndarray] = None
        try:
            np.linalg.cholesky(hessian)
            step = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            step = None
        if step is None or not np.all(np.isfinite(step)):
            # non-PD Hessian (e.g. separated data): backtracking gradient ascent
            step_size = 1.0
            base = log_likelihood(beta, x, y)
            direction = grad / max(1.0, float(np.linalg.norm(grad)))
            while step_size > 1e-12 and log_likelihood(beta + step_size * direction, x, y) <= base:
                step_size /= 2.0
            beta = beta + step_size * direction
            continue
        beta = beta + step
    return beta, iterations, converged


def logreg_fit(
    z_rows: list | np.ndarray,
    labels: list[str] | np.ndarray,
    split: float = 0.6,
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> tuple[LogRegModel, EvalReport]:
    """Seeded stratified shuffle split, Newton-Raphson MLE, held-out eval.

    The positive class is "attack". Non-convergence is reported via the
    model's flag; the partial model is still returned.
    """
    if not 0.0 < split < 1.0:
        raise ValueError("split must be in (0, 1)")
    x = np.asarray(z_rows, dtype=float)
    y = np.asarray([1 if lbl == ATTACK else 0 for lbl in labels], dtype=float)
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(len(members))]
        cut = int(round(split * len(members)))
        train_idx.extend(members[:cut])
        test_idx.extend(members[cut:])
    train_idx.sort()
    test_idx.sort()
    y_train, y_test = y[train_idx], y[test_idx]
    if len(set(y_train.tolist())) < 2 or len(set(y_test.tolist())) < 2:
        raise SingleClassSplitError("train or test split holds a single class")

    x_train = np.hstack([x[train_idx], np.ones((len(train_idx), 1))])
    beta, iterations, converged = _fit_mle(x_train, y_train, tol, max_iter)
    model = LogRegModel(
        coefficients=beta[:-1].copy(),
        intercept=float(beta[-1]),
        iterations=iterations,
        converged=converged,
        seed=seed,
    )

    predicted = model.predict(x[test_idx])
    accuracy = float(np.mean(predicted == y_test))
    tp = float(np.sum((predicted == 1) & (y_test == 1)))
    fp = float(np.sum((predicted == 1) & (y_test == 0)))
    fn = float(np.sum((predicted == 0) & (y_test == 1)))
    f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
    confusion = []
    for cls in (0, 1):
        mask = y_test == cls
        row = [
            float(np.mean(predicted[mask] == guess)) for guess in (0, 1)
        ]
        confusion.append(row)
    return model, EvalReport(
        accuracy=accuracy, f1=f1, confusion=confusion, split=split, seed=seed
    )


# --- report -----------------------------------------------------------------------

def _round(value: float, digits: int = 6) -> float:
    return round(float(value), digits)


def build_report(
    pca: PcaResult, model: LogRegModel, eval_report: EvalReport
) -> dict:
    """Single source of numbers for the JSON and markdown renderings."""
    weights = {}
    for i, var in enumerate(VARIABLES):
        weights[var] = {
            "pca1": _round(pca.components[0][i]),
            "pca2": _round(pca.components[1][i]) if pca.components.shape[0] > 1 else None,
            "logreg": _round(model.coefficients[i]),
        }
    return {
        "variables": list(VARIABLES),
        "component_weights": weights,
        "explained_variance_ratio": [_round(r) for r in pca.explained_variance_ratio],
        "intercept": _round(model.intercept),
        "converged": model.converged,
        "iterations": model.iterations,
        "eval": {
            "accuracy": _round(eval_report.accuracy),
            "f1": _round(eval_report.f1),
            "confusion": [[_round(v) for v in row] for row in eval_report.confusion],
            "split": eval_report.split,
            "seed": eval_report.seed,
        },
        "paper_reference": PAPER_REFERENCE,
    }


def render_markdown(report: dict) -> str:
    lines = [
        "# Risk analysis report",
        "",
        "## Component weights",
        "",
        "| Variable | PCA 1st component | PCA 2nd component | Logistic regression coefficient |",
        "| --- | --- | --- | --- |",
    ]
    for var in report["variables"]:
        w = report["component_weights"][var]
        lines.append(f"| {var} | {w['pca1']} | {w['pca2']} | {w['logreg']} |")
    ratios = report["explained_variance_ratio"]
    lines += [
        "",
        f"Explained variance ratios: {ratios}",
        f"Intercept: {report['intercept']}",
        "",
        "## Held-out evaluation",
        "",
        f"Accuracy: {report['eval']['accuracy']}",
        f"F1: {report['eval']['f1']}",
        f"Split: {report['eval']['split']} (seed {report['eval']['seed']})",
        "",
        "Confusion matrix (rows: true non_attack, attack; fractions per row):",
        "",
        f"| | pred non_attack | pred attack |",
        f"| --- | --- | --- |",
        f"| non_attack | {report['eval']['confusion'][0][0]} | {report['eval']['confusion'][0][1]} |",
        f"| attack | {report['eval']['confusion'][1][0]} | {report['eval']['confusion'][1][1]} |",
        "",
        "## Reported reference values (comparison only)",
        "",
        f"{report['paper_reference']['note']}.",
        "",
        f"Accuracy {report['paper_reference']['accuracy']}, "
        f"F1 {report['paper_reference']['f1']}, "
        f"two components explaining {report['paper_reference']['explained_variance_two_components']} of variance "
        f"{report['paper_reference']['explained_variance_ratios']}.",
        "",
    ]
    return "\n".join(lines)


def _figure_pc_scatter(scores: np.ndarray, labels: list[str], ratios, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 5), dpi=120)
    labels_arr = np.asarray(labels)
    for cls, color, marker in ((("non_attack"), "tab:gray", "o"), (("attack"), "tab:red", "^")):
        mask = labels_arr == cls
        ax.scatter(scores[mask, 0], scores[mask, 1], s=18, c=color, marker=marker,
                   alpha=0.7, label=cls, linewidths=0)
    ax.set_xlabel(f"PC1 ({ratios[0]:.0%} var)")
    ax.set_ylabel(f"PC2 ({ratios[1]:.0%} var)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _figure_confusion(confusion: list[list[float]], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4), dpi=120)
    data = np.asarray(confusion)
    im = ax.imshow(data, cmap="Blues", vmin=0.0, vmax=1.0)
    names = ["non_attack", "attack"]
    ax.set_xticks([0, 1], [f"pred {n}" for n in names])
    ax.set_yticks([0, 1], [f"true {n}" for n in names])
    for r in range(2):
        for c in range(2):
            ax.text(c, r, f"{data[r, c]:.2f}", ha="center", va="center",
                    color="white" if data[r, c] > 0.5 else "black")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _figure_distributions(z: np.ndarray, labels: list[str], path: Path) -> None:
    labels_arr = np.asarray(labels)
    lo = float(np.floor(z.min())) - 0.5
    hi = float(np.ceil(z.max())) + 0.5
    bins = np.linspace(lo, hi, 25)
    fig, axes = plt.subplots(2, 2, figsize=(9, 7), dpi=120, sharex=True)
    for i, (var, ax) in enumerate(zip(VARIABLES, axes.ravel())):
        for cls, color in (("non_attack", "tab:gray"), ("attack", "tab:red")):
            ax.hist(z[labels_arr == cls, i], bins=bins, alpha=0.55, color=color, label=cls)
        ax.set_title(f"standard score of {var}")
    axes[0, 0].legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def report(
    pca: PcaResult,
    model: LogRegModel,
    eval_report: EvalReport,
    z_rows: list | np.ndarray,
    labels: list[str],
    out_dir: str | Path,
    formats: tuple[str, ...] = ("json", "markdown"),
    figures: bool = True,
) -> dict:
    """Write the report and its delimited/figure companions to ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = build_report(pca, model, eval_report)
    if "json" in formats:
        (out_dir / "report.json").write_text(
            json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    if "markdown" in formats:
        (out_dir / "report.md").write_text(render_markdown(data), encoding="utf-8")

    z = np.asarray(z_rows, dtype=float)
    scores = pca.scores(z)
    with (out_dir / "pc_scores.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pc1", "pc2", "label"])
        for row, lbl in zip(scores, labels):
            pc2 = row[1] if len(row) > 1 else 0.0
            writer.writerow([f"{row[0]:.12g}", f"{pc2:.12g}", lbl])

    if figures:
        fig_dir = out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        if scores.shape[1] > 1:
            _figure_pc_scatter(scores, labels, data["explained_variance_ratio"], fig_dir / "pc_scatter.png")
        _figure_confusion(eval_report.confusion, fig_dir / "confusion_matrix.png")
        _figure_distributions(z, labels, fig_dir / "risk_distributions.png")
    return data
