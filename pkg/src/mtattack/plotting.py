"""Figures written next to the CSV/JSON outputs of ``verify``, ``ablate`` and ``attack``."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}
# no version stamp, so reruns write identical files
_SAVE_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata=_SAVE_META)
    plt.close(fig)


def plot_union_prob(estimates, path):
    """P(at least one success) against the number of methods u."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for est in estimates:
            d = est.to_dict()
            label = d["dependence"] if d["dependence"] == "independent" else f"copula rho={d['rho']}"
            ax.errorbar(d["u"], d["estimates"], yerr=[2 * s for s in d["std_errors"]],
                        marker="o", ms=3, capsize=2, label=f"{label} (MC)")
            if d["closed_form"] is not None:
                ax.plot(d["u"], d["closed_form"], "k--", lw=0.8, label="closed form")
        ax.set_xlabel("number of attack methods u")
        ax.set_ylabel("P(at least one success)")
        ax.set_xticks(estimates[0].to_dict()["u"])
        ax.legend(frameon=False)
        _save(fig, path)


def plot_ablation(rows, axis, path):
    values = [str(r["value"]) for r in rows]
    asr = [r["mean_asr"] or 0.0 for r in rows]
    bleu_keys = sorted({k for r in rows for k in r if k.startswith("bleu:")})
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.bar(values, asr, color="#4c72b0", width=0.5, label="mean ASR")
        ax.set_xlabel(axis)
        ax.set_ylabel("mean ASR (%)")
        ax.set_ylim(0, 100)
        if bleu_keys:
            ax2 = ax.twinx()
            for k in bleu_keys:
                ax2.plot(values, [r.get(k) for r in rows], "o-", color="#dd8452", label=k)
            ax2.set_ylabel("BLEU")
            ax2.set_ylim(0, 1)
            ax2.spines["right"].set_visible(True)
        ax.set_title(f"ablation: {axis}")
        _save(fig, path)


def plot_transfer_rate(table, path):
    ks = [r["k"] for r in table]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.bar(ks, [r["rate"] for r in table], color="#55a868", width=0.6)
        for r in table:
            ax.annotate(f"n={r['n']}", (r["k"], r["rate"]), ha="center", va="bottom", fontsize=7)
        ax.set_xlabel("substitutes fooled (I)")
        ax.set_ylabel("victim flip rate")
        ax.set_ylim(0, 1.05)
        _save(fig, path)
