"""Run the instruments over a dataset and write text, CSV and figure outputs."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from loci import runner
from loci.datagen.episode import SCENARIOS, Dataset
from loci.errors import ConfigError
from loci.evaluation import metrics as M
from loci.evaluation import tracking as TR
from loci.model import Model
from loci.trace import EpisodeTrace

METRICS = ("tracking", "mota", "voe", "image", "ari", "gates")


def parse_metrics(spec: str | None) -> tuple[str, ...]:
    if not spec:
        return METRICS
    names = tuple(s.strip() for s in spec.split(",") if s.strip())
    bad = [n for n in names if n not in METRICS]
    if bad:
        raise ConfigError(f"--metrics: unknown metric(s) {', '.join(bad)}; expected some of {', '.join(METRICS)}")
    return names


@dataclass
class EvalResult:
    episodes: list = field(default_factory=list)  # one dict per episode
    aggregate: dict = field(default_factory=dict)
    traces: list = field(default_factory=list)


def _mean(values) -> float:
    arr = np.asarray([v for v in values if v is not None], np.float64)
    arr = arr[np.isfinite(arr)]
    return float(arr.mean()) if arr.size else float("nan")


def episode_metrics(trace: EpisodeTrace, gt, preds: np.ndarray, wanted) -> dict:
    out = {"scenario": SCENARIOS[int(gt.scenario)] if int(gt.scenario) < len(SCENARIOS) else str(gt.scenario)}
    t_len = min(trace.length, gt.frames.shape[0])
    summary = None
    if "tracking" in wanted or "gates" in wanted:
        summary = TR.tracking_error(trace, gt)
    if "tracking" in wanted:
        out["tracking_visible"] = summary.visible_mean
        out["tracking_occluded"] = summary.occluded_mean
        out["tracking_final"] = _mean(summary.final)
        out["tracking_success"] = summary.success_rate
        out["tracked_objects"] = int(summary.objects.size)
    if "mota" in wanted:
        score, counts = TR.mota([trace], [gt])
        out.update(mota=score, fn=counts.fn, fp=counts.fp, ids=counts.ids, gt=counts.gt)
    if "image" in wanted and t_len > 1:
        out["psnr"] = _mean(M.psnr(preds[t], gt.frames[t + 1]) for t in range(t_len - 1))
        out["ssim"] = _mean(M.ssim(preds[t], gt.frames[t + 1]) for t in range(t_len - 1))
    if "ari" in wanted and t_len > 1:
        mh, mw = trace["visibility"].shape[-2:]
        if (mh, mw) == (trace.height, trace.width):
            vals = []
            for t in range(t_len - 1):
                vis = trace["visibility"][t]
                labels = M.segmentation_labels(vis, 1.0 - vis.sum(axis=0))
                vals.append(M.ari(labels, gt.masks[t + 1]))
            out["ari"] = _mean(vals)
    if "voe" in wanted:
        w = np.asarray(gt.windows, int)
        if w[1] > 0:
            out["voe_reappear"] = TR.window_max_slot_error(trace, int(w[0]), int(w[1]))
            out["voe_fall"] = TR.window_max_slot_error(trace, int(w[2]), int(w[3]))
    if "gates" in wanted:
        a, v = TR.trace_gate_samples(trace, gt, summary.assignment)
        stats = TR.gate_stats(a, v)
        out["inner_loop_visible"] = stats.visible
        out["inner_loop_occluded"] = stats.occluded
    return out


def evaluate(model: Model, data: Dataset, metrics=METRICS, teacher_forcing: int = 10, batch: int = 8,
             blackout=None) -> EvalResult:
    a = model.arch
    _, _, h, w, _, _ = data.shape
    if (h, w) != (a.height, a.width):
        raise ConfigError(f"dataset resolution {h}x{w} does not match checkpoint resolution {a.height}x{a.width}")
    res = EvalResult()
    for lo in range(0, len(data), batch):
        idx = np.arange(lo, min(lo + batch, len(data)))
        bo = None if blackout is None else np.asarray(blackout)[idx]
        traces, preds = runner.run(model, data.frames[idx], data.backgrounds[idx], teacher_forcing=teacher_forcing,
                                   blackout=bo)
        for j, i in enumerate(idx):
            gt = data.episode(int(i))
            res.traces.append(traces[j])
            row = episode_metrics(traces[j], gt, preds[j], metrics)
            row["episode"] = int(i)
            res.episodes.append(row)
    res.aggregate = aggregate(res, data, metrics)
    return res


def aggregate(res: EvalResult, data: Dataset, metrics) -> dict:
    agg = {"episodes": len(res.episodes)}
    keys = sorted({k for row in res.episodes for k, v in row.items() if isinstance(v, float)})
    for k in keys:
        agg[k] = _mean(row.get(k) for row in res.episodes)
    if "mota" in metrics:
        score, counts = TR.mota(res.traces, [data.episode(r["episode"]) for r in res.episodes])
        agg.update(mota=score, fn=counts.fn, fp=counts.fp, ids=counts.ids, gt=counts.gt)
    if "voe" in metrics:
        ctl = np.array([r.get("voe_reappear", np.nan) for r in res.episodes if r["scenario"] == "vanish-control"])
        sur = np.array([r.get("voe_reappear", np.nan) for r in res.episodes if r["scenario"] == "vanish-surprise"])
        if ctl.size and sur.size:
            v = TR.VoeSummary(ctl, sur)
            agg["voe_difference"] = v.difference
            agg["voe_effect_size"] = v.effect_size
    return agg


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render_text(res: EvalResult) -> str:
    lines = []
    for row in res.episodes:
        lines.append(f"# episode {row['episode']}")
        lines += [f"{k}={_fmt(v)}" for k, v in row.items()]
        lines.append("")
    lines.append("# aggregate")
    lines += [f"{k}={_fmt(v)}" for k, v in res.aggregate.items()]
    return "\n".join(lines) + "\n"


def plot_episode(trace: EpisodeTrace, path: str, title: str = ""):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    frames = trace["t"]
    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    for k in range(trace.num_slots):
        axes[0].plot(frames, trace["slot_error"][:, k], label=f"slot {k}")
        axes[1].plot(frames, trace["alpha_g"][:, k], label=f"alpha_G {k}")
        axes[1].plot(frames, trace["alpha_p"][:, k], linestyle="--", label=f"alpha_P {k}")
        axes[2].plot(frames, trace["occlusion"][:, k], label=f"slot {k}")
    dark = np.nonzero(trace["blackout"])[0]
    for ax in axes:
        for t in dark:
            ax.axvspan(t - 0.5, t + 0.5, color="0.85", zorder=0)
    axes[0].set_ylabel("slot error")
    axes[1].set_ylabel("gate opening")
    axes[2].set_ylabel("occlusion")
    axes[2].set_xlabel("frame")
    axes[0].legend(fontsize=7, loc="upper right")
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_frames(predictions: np.ndarray, truth: np.ndarray | None, path: str, every: int = 1):
    """Strip of predicted frames (top) and, when given, the matching ground-truth frames (bottom)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    idx = np.arange(0, len(predictions), max(every, 1))
    rows = 1 if truth is None else 2
    fig, axes = plt.subplots(rows, len(idx), figsize=(1.2 * len(idx), 1.3 * rows), squeeze=False)
    for j, t in enumerate(idx):
        axes[0, j].imshow(np.clip(predictions[t].transpose(1, 2, 0), 0, 1))
        axes[0, j].set_title(str(t + 1), fontsize=6)
        if truth is not None and t + 1 < len(truth):
            axes[1, j].imshow(np.clip(truth[t + 1].transpose(1, 2, 0), 0, 1))
        for r in range(rows):
            axes[r, j].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def write_report(res: EvalResult, out_dir: str, figures: int = 4):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(render_text(res))
    for row, trace in zip(res.episodes, res.traces):
        stem = os.path.join(out_dir, f"episode_{row['episode']:04d}")
        trace.save(stem + ".ltrc")
        with open(stem + ".csv", "w", encoding="utf-8") as fh:
            fh.write(trace.to_csv())
    for row, trace in list(zip(res.episodes, res.traces))[:figures]:
        plot_episode(trace, os.path.join(out_dir, f"episode_{row['episode']:04d}.png"),
                     f"episode {row['episode']} ({row['scenario']})")
