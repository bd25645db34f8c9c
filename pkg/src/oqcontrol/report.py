"""PNG figures rendered from the CSVs of a run directory (Agg backend)."""
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _read(path):
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float, encoding="utf-8")
    return np.atleast_1d(data)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_history(csv_path, png_path):
    d = _read(csv_path)
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
    axes[0].semilogy(d["k"], np.maximum(d["I"], 1e-300), marker=".")
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("I")
    for name in ("u_norm", "n1_norm", "n2_norm"):
        axes[1].plot(d["k"], d[name], label=name.replace("_norm", ""))
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("control L2 norm")
    axes[1].legend()
    for name in ("Ku_norm", "Kn1_norm", "Kn2_norm"):
        axes[2].semilogy(d["k"], np.maximum(d[name], 1e-300), label=name.replace("_norm", ""))
    axes[2].set_xlabel("iteration")
    axes[2].set_ylabel("switching L2 norm")
    axes[2].legend()
    return _save(fig, png_path)


def plot_trajectory(csv_path, png_path):
    d = _read(csv_path)
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.6))
    for j in range(1, 5):
        axes[0].plot(d["t"], d[f"rho{j}{j}"], label=f"rho{j}{j}")
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("population")
    axes[0].legend()
    axes[1].plot(d["t"], d["purity"], label="purity")
    axes[1].plot(d["t"], d["entropy"], label="entropy")
    if "overlap" in d.dtype.names:
        axes[1].plot(d["t"], d["overlap"], label="overlap")
    axes[1].set_xlabel("t")
    axes[1].legend()
    return _save(fig, png_path)


def plot_controls(csv_path, png_path):
    d = _read(csv_path)
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.6))
    axes[0].plot(d["t"], d["u"], lw=0.8)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("u")
    axes[1].plot(d["t"], d["n1"], lw=0.8, label="n1")
    axes[1].plot(d["t"], d["n2"], lw=0.8, label="n2")
    axes[1].set_xlabel("t")
    axes[1].legend()
    return _save(fig, png_path)


def plot_trace(csv_path, png_path):
    d = _read(csv_path)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.step(d["evaluation"], d["best_objective"], where="post")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("best objective")
    return _save(fig, png_path)


def plot_trials(csv_path, png_path):
    d = _read(csv_path)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.bar(d["seed"].astype(int).astype(str), d["metric"])
    ax.set_xlabel("seed")
    ax.set_ylabel("metric of best point")
    return _save(fig, png_path)


def plot_batch(csv_path, png_path):
    d = _read(csv_path)
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.6))
    axes[0].bar(d["index"].astype(int), d["cauchy"])
    axes[0].set_xlabel("problem")
    axes[0].set_ylabel("Cauchy problems")
    axes[1].semilogy(d["index"], d["I"], "o", ms=3)
    axes[1].set_xlabel("problem")
    axes[1].set_ylabel("final I")
    return _save(fig, png_path)


def plot_zero_control(csv_path, png_path):
    d = _read(csv_path)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for j in (1, 2):
        ax.plot(d["t"], d[f"Kn{j}"], label=f"Kn{j} numeric")
        ax.plot(d["t"], d[f"Kn{j}_closed"], "--", label=f"Kn{j} closed form")
    ax.set_xlabel("t")
    ax.legend()
    return _save(fig, png_path)


_RENDERERS = (
    ("_history.csv", plot_history),
    ("trajectory.csv", plot_trajectory),
    ("control.csv", plot_controls),
    ("_trace.csv", plot_trace),
    ("_trials.csv", plot_trials),
    ("batch.csv", plot_batch),
    ("zero_control_K.csv", plot_zero_control),
)


def render_directory(directory):
    """Render a PNG next to every recognized CSV; returns the written paths."""
    written = []
    for name in sorted(os.listdir(directory)):
        for suffix, fn in _RENDERERS:
            if name.endswith(suffix):
                src = os.path.join(directory, name)
                written.append(fn(src, src[:-4] + ".png"))
                break
    return written
