"""Figures written next to the CSV outputs (SVG, Agg backend)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "svg.hashsalt": "cohex",  # stable element ids across runs
    "svg.fonttype": "none",
}

METHOD_COLORS = {
    "cohex": "#d62728",
    "hier": "#1f77b4",
    "vine": "#2ca02c",
    "vine+gale": "#98df8a",
    "repid": "#9467bd",
    "repid+gale": "#c5b0d5",
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_sweep(summary, path):
    """Mean generalizability loss against k* with a one-stddev band per method.

    ``summary`` holds dicts with keys method, k_star, mean, std.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        for method in sorted({row["method"] for row in summary}):
            rows = sorted((r for r in summary if r["method"] == method), key=lambda r: r["k_star"])
            k = np.array([r["k_star"] for r in rows])
            mean = np.array([r["mean"] for r in rows])
            std = np.array([r["std"] for r in rows])
            color = METHOD_COLORS.get(method)
            ax.plot(k, mean, marker="o", ms=3, lw=1.2, label=method, color=color)
            ax.fill_between(k, mean - std, mean + std, alpha=0.2, color=color, lw=0)
        ax.set_xlabel("expected number of cohorts $k^*$")
        ax.set_ylabel("generalizability loss")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_cohorts(ds, sol, path, dims=(0, 1)):
    """Samples coloured by cohort (first two features) and cohort explanations."""
    with plt.rc_context(STYLE):
        two_d = ds.n_features >= 2
        fig, axes = plt.subplots(1, 2 if two_d else 1, figsize=(7.0 if two_d else 3.5, 3.0), squeeze=False)
        cmap = plt.get_cmap("tab10")
        if two_d:
            ax = axes[0, 0]
            a, b = dims
            for j in range(sol.k):
                members = sol.members(j)
                expl = ", ".join(f"{v:.2f}" for v in sol.explanations[j][:3])
                ax.scatter(ds.features[members, a], ds.features[members, b], s=6, color=cmap(j % 10),
                           label=f"{j}: ({expl})")
            if sol.centroid_indices is not None:
                c = ds.features[sol.centroid_indices]
                ax.scatter(c[:, a], c[:, b], marker="x", s=30, color="black", lw=1)
            ax.set_xlabel(ds.columns[a])
            ax.set_ylabel(ds.columns[b])
            ax.legend(frameon=False, loc="best")
        ax = axes[0, -1]
        width = 0.8 / max(sol.k, 1)
        x = np.arange(ds.n_features)
        for j in range(sol.k):
            ax.bar(x + j * width, sol.explanations[j], width=width, color=cmap(j % 10), label=f"cohort {j}")
        ax.set_xticks(x + 0.4 - width / 2)
        ax.set_xticklabels(ds.columns, rotation=45 if ds.n_features > 4 else 0, ha="right" if ds.n_features > 4 else "center")
        ax.set_ylabel("cohort importance")
        ax.set_title(sol.method)
        _save(fig, path)


def plot_locality(reports, path):
    """Locality loss against randomization probability, one line per method."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        for rep in reports:
            p = np.array([v[0] for v in rep.locality])
            val = np.array([v[1] for v in rep.locality])
            err = np.array([v[2] for v in rep.locality])
            ax.errorbar(p, val, yerr=err, marker="o", ms=3, lw=1.2, capsize=2,
                        color=METHOD_COLORS.get(rep.method), label=rep.method)
        ax.set_xlabel("randomization probability $p$")
        ax.set_ylabel("locality loss")
        ax.legend(frameon=False)
        _save(fig, path)
