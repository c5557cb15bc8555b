"""PNG renderings of the CSV outputs written by the command line tool."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_loss_curve(curve, path):
    """``curve`` rows are ``(epoch, loss, lr)``."""
    epochs = [r[0] for r in curve]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(epochs, [r[1] for r in curve], marker="o" if len(curve) < 30 else None, lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def plot_trace(trace, path):
    """Mean node cost and aligned errors against the update index."""
    steps = [r["iter"] for r in trace]
    fig, (a0, a1) = plt.subplots(2, 1, figsize=(5, 5), sharex=True)
    a0.plot(steps, [r["mean_node_cost"] for r in trace], marker=".")
    a0.set_ylabel("mean node cost")
    a0.grid(alpha=0.3)
    a1.plot(steps, [r["mn_deg"] for r in trace], marker=".", label="mean")
    a1.plot(steps, [r["md_deg"] for r in trace], marker=".", label="median")
    a1.set_xlabel("update")
    a1.set_ylabel("error (deg)")
    a1.legend(frameon=False)
    a1.grid(alpha=0.3)
    return _finish(fig, path)


def plot_sweeps(errors, path):
    """``errors`` rows are ``(sweep, mn, md)``."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([r[0] for r in errors], [r[1] for r in errors], marker=".", label="mean")
    ax.plot([r[0] for r in errors], [r[2] for r in errors], marker=".", label="median")
    ax.set_xlabel("sweep")
    ax.set_ylabel("error (deg)")
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    return _finish(fig, path)
