import json
import logging
import os
from datetime import datetime
from typing import Dict, List, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402
from scipy.stats import wilcoxon  # noqa: E402

from augmenters import ExpertAugmentConfig, expert_augment, smote  # noqa: E402
from config import Config  # noqa: E402
from congan_engine import ConGANEngine  # noqa: E402
from rssi_types import GanCheckpoint, HouseDataset  # noqa: E402

logger = logging.getLogger(__name__)


def _arm_order(arms: Sequence[str]) -> List[str]:
    known = [a for a in Config.ARMS if a in set(arms)]
    return known + sorted(set(arms) - set(known))


def _acc_columns(df: pd.DataFrame) -> List[str]:
    return [c for c in df.columns if c.startswith("acc_")]


def summary_table(results: pd.DataFrame) -> pd.DataFrame:
    """One row per (house, arm): mean±std macro F1, mean MiVo and per-room accuracy deltas vs baseline

    std is the sample standard deviation over repeats (ddof=1), reported as 0 for a single repeat.
    """
    if results.empty:
        return pd.DataFrame(columns=["house_id", "arm", "n_repeats", "macro_f1_mean", "macro_f1_sample_std", "macro_f1"])
    acc_cols = _acc_columns(results)
    rows = []
    for house_id, house in results.groupby("house_id", sort=True):
        baseline = house[house["arm"] == "baseline"]
        for arm in _arm_order(house["arm"].unique()):
            group = house[house["arm"] == arm]
            mean = float(group["macro_f1"].mean())
            std = float(np.std(group["macro_f1"].to_numpy(dtype=float), ddof=1)) if len(group) > 1 else 0.0
            row = {
                "house_id": house_id,
                "arm": arm,
                "n_repeats": len(group),
                "macro_f1_mean": round(mean, 4),
                "macro_f1_sample_std": round(std, 4),
                "macro_f1": f"{mean:.2f}±{std:.2f}",
                "mivo_mean": float(pd.to_numeric(group["mivo_scalar"], errors="coerce").mean())
                if "mivo_scalar" in group else np.nan,
            }
            if not baseline.empty:
                for col in acc_cols:
                    row[f"delta_{col}"] = round(float(group[col].mean() - baseline[col].mean()), 4)
            rows.append(row)
    return pd.DataFrame(rows)


def minority_table(results: pd.DataFrame, arm: str = "t_congan", reference: str = "baseline",
                   rooms: Optional[Sequence[str]] = None,
                   minutes: Optional[Mapping[str, Mapping[str, float]]] = None) -> pd.DataFrame:
    """Per-room mean accuracy of an arm vs a reference arm, with labelled fingerprint minutes

    `minutes` maps house_id -> room name -> fingerprint minutes; houses often share room names.
    """
    rows = []
    for house_id, house in results.groupby("house_id", sort=True):
        ref = house[house["arm"] == reference]
        ours = house[house["arm"] == arm]
        if ref.empty or ours.empty:
            logger.warning(f"⚠️ {house_id}: need both {reference} and {arm} results for the minority table")
            continue
        for col in _acc_columns(house):
            room = col[len("acc_"):]
            if rooms is not None and room not in rooms:
                continue
            ref_acc, arm_acc = float(ref[col].mean()), float(ours[col].mean())
            rows.append({
                "house_id": house_id,
                "room": room,
                "fingerprint_minutes": (minutes or {}).get(house_id, {}).get(room, np.nan),
                f"{reference}_acc": round(ref_acc, 4),
                f"{arm}_acc": round(arm_acc, 4),
                "delta": round(arm_acc - ref_acc, 4),
            })
    return pd.DataFrame(rows)


def mivo_table(results: pd.DataFrame) -> pd.DataFrame:
    """Mean MiVo per arm (rows) and house (columns); arms without synthetic data are left out"""
    scored = results.assign(mivo_scalar=pd.to_numeric(results["mivo_scalar"], errors="coerce")).dropna(
        subset=["mivo_scalar"])
    if scored.empty:
        return pd.DataFrame()
    table = scored.pivot_table(index="arm", columns="house_id", values="mivo_scalar", aggfunc="mean")
    return table.reindex(_arm_order(table.index.tolist()))


def paired_comparison(results: pd.DataFrame, arm: str, reference: str,
                      metric: str = "macro_f1") -> Dict[str, Dict]:
    """One-sided paired check per house: repeats where arm beats reference, plus a Wilcoxon p-value"""
    out = {}
    for house_id, house in results.groupby("house_id", sort=True):
        a = house[house["arm"] == arm].set_index("repeat")[metric]
        b = house[house["arm"] == reference].set_index("repeat")[metric]
        shared = a.index.intersection(b.index)
        if shared.empty:
            continue
        gaps = (a.loc[shared] - b.loc[shared]).to_numpy(dtype=float)
        try:
            p_value = float(wilcoxon(gaps, alternative="greater").pvalue)
        except ValueError:
            p_value = float("nan")
        if not np.isfinite(p_value):
            # all gaps zero
            p_value = 1.0
        out[house_id] = {
            "n_pairs": int(len(gaps)),
            "wins": int(np.sum(gaps > 0)),
            "mean_gap": float(np.mean(gaps)),
            "p_value": p_value,
        }
    return out


def plot_window_grid(windows: Mapping[str, np.ndarray], path: str,
                     sample_rate_hz: float = Config.SAMPLE_RATE_HZ, ncols: int = 3) -> str:
    """Per-AP RSSI lines over each window's duration, one colour per AP, one panel per window"""
    if not windows:
        raise ValueError("plot_window_grid needs at least one window")
    names = list(windows)
    n_aps = np.asarray(windows[names[0]]).shape[0]
    palette = sns.color_palette("husl", n_aps)
    ncols = min(ncols, len(names))
    nrows = int(np.ceil(len(names) / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.5 * ncols, 3.2 * nrows), squeeze=False, sharey=True)
    for ax, name in zip(axes.flat, names):
        values = np.asarray(windows[name])
        t = np.arange(values.shape[1]) / sample_rate_hz
        for ap in range(values.shape[0]):
            ax.plot(t, values[ap], color=palette[ap], linewidth=1.2, label=f"AP {ap}")
        ax.set_title(name)
        ax.set_xlabel("time (s)")
        ax.set_ylim(-0.05, 1.05)
    for ax in list(axes.flat)[len(names):]:
        ax.axis("off")
    axes[0, 0].set_ylabel("normalized RSSI")
    handles, labels = axes[0, 0].get_legend_handles_labels()
    fig.legend(handles, labels, loc="lower center", ncol=min(n_aps, 11), fontsize="small")
    fig.tight_layout(rect=(0, 0.08, 1, 1))
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    logger.info(f"📄 Window plot written to {path}")
    return path


def augmentation_examples(ds: HouseDataset, room_id: int, seed: int = Config.DEFAULT_SEED,
                          checkpoints: Optional[Mapping[str, GanCheckpoint]] = None) -> Dict[str, np.ndarray]:
    """One real window of a room next to what each augmenter makes of that room"""
    X, y = ds.arrays("fingerprint")
    own = X[y == room_id]
    if len(own) == 0:
        raise ValueError(f"room {room_id} has no fingerprint windows")
    sentinel = ds.norm_stats.sentinel() if ds.norm_stats is not None else None
    examples = {"real": own[0]}
    for variant in ("noise", "drop", "noise+drop"):
        cfg = ExpertAugmentConfig.variant(variant)
        examples[f"expert {variant}"] = expert_augment(
            own[0], cfg.noise_sigma, cfg.drop_mode, cfg.drop_param, seed=seed, sentinel=sentinel).values
    if len(own) > 1:
        X_new, _ = smote(own, np.full(len(own), room_id), target_per_class=len(own) + 1, seed=seed)
        examples["smote"] = X_new[-1]
    for arm, ckpt in sorted((checkpoints or {}).items()):
        examples[arm] = ConGANEngine.from_checkpoint(ckpt).generate(room_id, 1, seed=seed)[0]
    return examples


class ReportGenerator:
    def __init__(self, report_dir: Optional[str] = None):
        self.report_dir = report_dir or Config.REPORT_DIR

    def generate_report(self, results: pd.DataFrame,
                        minority_rooms: Optional[Sequence[str]] = None,
                        minutes: Optional[Mapping[str, Mapping[str, float]]] = None) -> Dict[str, str]:
        """Write summary, MiVo and minority tables as CSV; returns artifact paths"""
        os.makedirs(self.report_dir, exist_ok=True)
        paths = {}
        tables = {
            "summary": summary_table(results),
            "mivo": mivo_table(results),
            "minority": minority_table(results, rooms=minority_rooms, minutes=minutes),
        }
        for name, table in tables.items():
            if table.empty:
                continue
            path = os.path.join(self.report_dir, f"{name}.csv")
            table.to_csv(path, index=(name == "mivo"), float_format="%.4f")
            paths[name] = path
        logger.info(f"📄 Report tables written to {self.report_dir}")
        return paths

    def summary_payload(self, results: pd.DataFrame) -> Dict:
        """Machine-readable summary for --json output"""
        summary = summary_table(results)
        comparisons = {}
        arms = _arm_order(results["arm"].unique()) if not results.empty else []
        for arm in arms:
            if arm != "baseline" and "baseline" in arms:
                comparisons[arm] = paired_comparison(results, arm, "baseline")
        return {
            "summary": json.loads(summary.to_json(orient="records")),
            "vs_baseline": comparisons,
        }

    def format_summary(self, results: pd.DataFrame) -> str:
        today = datetime.now().strftime('%Y-%m-%d')
        summary = summary_table(results)
        if summary.empty:
            return f"📊 Localisation Report - {today}\n\nNo results to summarize."

        lines = ["📊 Localisation Report", f"📅 Date: {today}", "macro F1 as mean±sample std (ddof=1) over repeats", ""]
        for house_id, house in summary.groupby("house_id", sort=True):
            lines.append(f"🏠 House {house_id}")
            for _, row in house.iterrows():
                mivo = "" if pd.isna(row.get("mivo_mean")) else f"  MiVo {row['mivo_mean']:.4f}"
                lines.append(f"  • {row['arm']:<16} macro F1 {row['macro_f1']:>12}{mivo}")
            lines.append("")
        return "\n".join(lines)
