from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from loguru import logger  # noqa: E402

from steinbar.repos.base import read_rows  # noqa: E402

# fixed ids and no timestamp keep reruns byte-identical
plt.rcParams["svg.hashsalt"] = "steinbar"
SVG_METADATA = {"Date": None}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.debug(f"Wrote {path}")
    return path


def plot_w1(csv_path: Path, svg_path: Path) -> Path:
    """Empirical W1 with its interval against delta, log-log, next to the bound."""
    by_config: dict[str, list[dict]] = defaultdict(list)
    for row in read_rows(csv_path):
        by_config[row["config_id"]].append(row)

    fig, ax = plt.subplots(figsize=(6, 4.5))
    for config_id, rows in sorted(by_config.items()):
        rows.sort(key=lambda r: float(r["delta"]))
        deltas = [float(r["delta"]) for r in rows]
        w1 = [float(r["w1"]) for r in rows]
        ci = [float(r["w1_ci"]) for r in rows]
        line = ax.errorbar(deltas, w1, yerr=ci, marker="o", capsize=3, label=f"{config_id} W1")
        bounds = [(d, float(r["bound_total"])) for d, r in zip(deltas, rows) if r["bound_total"]]
        if bounds:
            ax.plot(
                [d for d, _ in bounds],
                [b for _, b in bounds],
                linestyle="--",
                color=line[0].get_color(),
                label=f"{config_id} bound",
            )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("delta = 1 - rho")
    ax.set_ylabel("W1")
    ax.legend(fontsize="small")
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, svg_path)


def plot_identity_forest(csv_path: Path, svg_path: Path) -> Path:
    """Estimate minus target with its interval, one line per identity row."""
    rows = read_rows(csv_path)
    fig, ax = plt.subplots(figsize=(7, 0.3 * len(rows) + 1.5))
    for k, row in enumerate(rows):
        residual = float(row["estimate"]) - float(row["target"])
        color = "tab:blue" if row["pass"] == "true" else "tab:red"
        ax.errorbar(residual, k, xerr=float(row["half_width"]), fmt="o", color=color, capsize=2)
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels([f"{r['model_id']} {r['identity_id']}" for r in rows], fontsize="x-small")
    ax.invert_yaxis()
    ax.set_xlabel("estimate - target")
    fig.tight_layout()
    return _save(fig, svg_path)


def plot_directory(out_dir: Path) -> list[Path]:
    """Rebuild every figure whose CSV is present in ``out_dir``."""
    out_dir = Path(out_dir)
    written = []
    if (out_dir / "w1.csv").exists():
        written.append(plot_w1(out_dir / "w1.csv", out_dir / "w1_vs_delta.svg"))
    if (out_dir / "identities.csv").exists():
        written.append(
            plot_identity_forest(out_dir / "identities.csv", out_dir / "identity_forest.svg")
        )
    if not written:
        logger.warning(f"No w1.csv or identities.csv in {out_dir}, nothing to plot")
    return written
