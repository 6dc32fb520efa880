"""Figure rendering for report payloads.

Every subcommand with an output file also gets a PNG next to it.  Figures
are data-driven from the same payload dict that lands in the JSON/CSV, and
PNG metadata is stripped so repeated runs produce stable bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_figure(fig, path: Path) -> Path:
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def _bar_with_na(ax, labels, values, title, expected=None):
    xs = np.arange(len(labels))
    heights = [v if isinstance(v, (int, float)) else 0.0 for v in values]
    colors = ["tab:blue" if isinstance(v, (int, float)) else "lightgray" for v in values]
    ax.bar(xs, heights, color=colors)
    for x, v in zip(xs, values):
        if not isinstance(v, (int, float)):
            ax.text(x, 0.02, "NA", ha="center", color="gray")
    if expected is not None:
        for x, e in zip(xs, expected):
            if isinstance(e, (int, float)):
                ax.hlines(e, x - 0.4, x + 0.4, color="tab:red", linestyle="--", linewidth=1)
    ax.set_xticks(xs, labels)
    ax.set_ylim(0, 1.1)
    ax.set_title(title)


def plot_table(payload: dict):
    res = payload["results"]
    fig, (ax_q, ax_p) = plt.subplots(1, 2, figsize=(9, 3.6))
    _bar_with_na(ax_q, res["states"], res["Q"], "activation ratio Q", res["expected"]["Q"])
    _bar_with_na(ax_p, res["states"], res["P"], "positive probability P", res["expected"]["P"])
    fig.suptitle(f"device-protocol table {res['table']} ({res['mode']}, n={res['trials']})")
    fig.tight_layout()
    return fig


def plot_device(payload: dict):
    res = payload["results"]
    fig, ax = plt.subplots(figsize=(4.2, 3.4))
    vals = [res["Q"], res["P"]]
    errs = [res.get("Q_ci") or 0.0, res.get("P_ci") or 0.0]
    heights = [v if isinstance(v, (int, float)) else 0.0 for v in vals]
    ax.bar(["Q", "P"], heights, yerr=errs, capsize=4, color=["tab:blue", "tab:orange"])
    for i, v in enumerate(vals):
        if not isinstance(v, (int, float)):
            ax.text(i, 0.02, "NA", ha="center", color="gray")
    ax.set_ylim(0, 1.1)
    ax.set_title(f"model {res['kind']} single measurement")
    fig.tight_layout()
    return fig


def plot_repeat(payload: dict):
    res = payload["results"]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    labels = ["Q1", "P1", "Q2", "P2"]
    vals = [res["Q1"], res["P1"], res["Q2"], res["P2"]]
    heights = [v if isinstance(v, (int, float)) else 0.0 for v in vals]
    ax.bar(labels, heights, color="tab:blue")
    for i, v in enumerate(vals):
        if not isinstance(v, (int, float)):
            ax.text(i, 0.02, "NA", ha="center", color="gray")
    ax.set_ylim(0, 1.1)
    ax.set_title(f"model {res['kind']} repeat measurement ({res['rule']})")
    fig.tight_layout()
    return fig


def plot_qsfacts(payload: dict):
    res = payload["results"]
    facts = [v["fact"] for v in res["verdicts"]]
    fig, ax = plt.subplots(figsize=(6.4, 2.6))
    colors = {"pass": "tab:green", "fail": "tab:red", "not-applicable": "lightgray"}
    for i, v in enumerate(res["verdicts"]):
        ax.barh(0, 1, left=i, color=colors[v["verdict"]], edgecolor="white")
        ax.text(i + 0.5, 0, f"{v['fact']}\n{v['verdict']}", ha="center", va="center", fontsize=8)
    ax.set_xlim(0, len(facts))
    ax.set_yticks([])
    ax.set_xticks([])
    ax.set_title(f"model {res['kind']} ({res['rule']} rule) conformance")
    fig.tight_layout()
    return fig


def plot_singlet(payload: dict):
    rows = payload["results"]["sweep"]
    ang = [r["angle_deg"] for r in rows]
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ax.errorbar(ang, [r["E"] for r in rows], yerr=[r["E_ci"] for r in rows],
                fmt="o", ms=3.5, label="estimate")
    dense = np.linspace(min(ang), max(ang), 200)
    ax.plot(dense, -np.cos(np.radians(dense)), "-", color="tab:red", lw=1, label="-cos")
    ax.set_xlabel("angle between axes (deg)")
    ax.set_ylabel("correlation E")
    ax.legend()
    fig.tight_layout()
    return fig


def plot_chsh(payload: dict):
    res = payload["results"]
    labels = list(res["correlators"])
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    xs = np.arange(len(labels))
    ax.bar(xs - 0.18, [res["correlators"][k]["E"] for k in labels], width=0.36, label="estimate")
    ax.bar(xs + 0.18, [res["correlators"][k]["E_exact"] for k in labels], width=0.36, label="exact")
    ax.set_xticks(xs, labels)
    ax.axhline(0, color="k", lw=0.5)
    ax.set_title(f"S = {res['S']:.4f} (classical bound 2, quantum bound {res['tsirelson_bound']:.4f})")
    ax.legend()
    fig.tight_layout()
    return fig


def plot_bohm(payload: dict):
    res = payload["results"]
    fig, (ax_t, ax_f) = plt.subplots(1, 2, figsize=(9, 3.6))
    for tr in res["sample_trajectories"]:
        ax_t.plot(tr["j1"], lw=1, label=f"u={tr['u']:.3f} -> {tr['winner']}")
    ax_t.set_xlabel("step")
    ax_t.set_ylabel("branch-1 weight")
    ax_t.legend(fontsize=7)
    ax_t.set_title("collapse trajectories")
    js = [r["j1"] for r in res["results"]]
    fs = [r["winner1_frequency"] for r in res["results"]]
    ax_f.plot([0, 1], [0, 1], "--", color="gray", lw=1)
    ax_f.plot(js, fs, "o")
    ax_f.set_xlabel("initial weight J1")
    ax_f.set_ylabel("winner-1 frequency")
    ax_f.set_title("collapse frequencies")
    fig.tight_layout()
    return fig


def plot_broadcast(payload: dict):
    res = payload["results"]
    names = ("input", "joint", "reduced_object", "reduced_meter")
    fig, axes = plt.subplots(1, 4, figsize=(11, 3))
    for ax, name in zip(axes, names):
        m = np.array([[complex(re, im) for re, im in row] for row in res[name]])
        im = ax.imshow(np.abs(m), vmin=0, vmax=1, cmap="viridis")
        ax.set_title(name, fontsize=9)
        ax.set_xticks(range(m.shape[0]))
        ax.set_yticks(range(m.shape[0]))
    fig.colorbar(im, ax=axes, shrink=0.8, label="|entry|")
    return fig


def plot_inconsistency(payload: dict):
    res = payload["results"]
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.bar(["projector\nreading", "event-semantics\nreading"],
           [res["projector_up"], res["state_up"]], color=["tab:blue", "tab:orange"])
    ax.set_ylabel("up probability, two expressions")
    ax.set_title(f"kind {res['kind']}: representation mismatch")
    fig.tight_layout()
    return fig


_RENDERERS = {
    "table": plot_table,
    "device": plot_device,
    "repeat": plot_repeat,
    "qsfacts": plot_qsfacts,
    "singlet": plot_singlet,
    "chsh": plot_chsh,
    "bohm": plot_bohm,
    "broadcast": plot_broadcast,
    "inconsistency": plot_inconsistency,
}


def render(payload: dict, out_path: Path) -> Path | None:
    """Render the payload's figure next to the written report file."""
    renderer = _RENDERERS.get(payload["subcommand"])
    if renderer is None:
        return None
    fig = renderer(payload)
    return save_figure(fig, Path(out_path).with_suffix(".png"))
