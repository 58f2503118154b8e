"""
Text formatters – turn training results, evaluation reports and synthesis
results into console text.
"""

import numpy as np


def _safe(v) -> str:
    return str(v) if v is not None else "—"


def _fmt_bytes(b) -> str:
    b = int(b)
    if b < 1024:
        return f"{b} B"
    elif b < 1024 ** 2:
        return f"{b / 1024:.1f} KB"
    elif b < 1024 ** 3:
        return f"{b / 1024 ** 2:.1f} MB"
    else:
        return f"{b / 1024 ** 3:.2f} GB"


def _fmt_duration(seconds: float) -> str:
    if seconds < 60:
        return f"{seconds:.2f}s"
    minutes, secs = divmod(seconds, 60)
    return f"{int(minutes)}m {secs:04.1f}s"


def _fmt_float(v, digits: int = 4) -> str:
    if v is None:
        return "—"
    return f"{v:.{digits}g}"


_SPARK = "▁▂▃▄▅▆▇█"


def _sparkline(values: list[float], width: int = 40) -> str:
    """Loss curve squeezed into `width` block characters."""
    if not values:
        return ""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size > width:
        edges = np.linspace(0, arr.size, width + 1).astype(int)
        arr = np.array([arr[a:b].mean() for a, b in zip(edges, edges[1:])])
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return _SPARK[0] * arr.size
    idx = ((arr - lo) / (hi - lo) * (len(_SPARK) - 1)).round().astype(int)
    return "".join(_SPARK[i] for i in idx)


# ─── Corpus ───────────────────────────────────────────────────────────────────

def fmt_corpus(corpus, path: str | None = None) -> str:
    lines = [
        f"Corpus: {len(corpus)} item(s), {corpus.total_frames} frames",
        f"  provenance: {corpus.provenance}",
        f"  feature dims: {corpus.layout.dim} ({_fmt_layout(corpus.layout)})",
    ]
    if path:
        lines.append(f"  written to: {path}")
    return "\n".join(lines)


def _fmt_layout(layout) -> str:
    return ", ".join(f"{k}={v}" for k, v in layout.to_dict().items() if v)


# ─── Training ─────────────────────────────────────────────────────────────────

def fmt_train_summary(result, path: str | None = None) -> str:
    ckpt = result.checkpoint
    losses = result.losses
    lines = [f"Trained {ckpt.kind} model: {len(losses)} epoch(s)"]
    if losses:
        first, last = losses[0], losses[-1]
        change = (last - first) / abs(first) * 100 if first else 0.0
        lines += [
            f"  loss: {_fmt_float(first)} → {_fmt_float(last)} ({change:+.1f}%)",
            f"  curve: {_sparkline(losses)}",
        ]
    else:
        lines.append("  no epochs run; checkpoint holds the initialization")
    n_params = sum(v.size for v in ckpt.params.values())
    lines.append(f"  parameters: {n_params} in {len(ckpt.params)} tensors")
    if path:
        lines.append(f"  checkpoint: {path}")
    return "\n".join(lines)


# ─── Evaluation ───────────────────────────────────────────────────────────────

def fmt_eval_report(report, by_part: bool = False) -> str:
    lines = [
        f"Evaluation of {report.kind} checkpoint: {report.items} item(s), {report.frames} frames",
        f"  NLL: {_fmt_float(report.nll, 6)} total, {_fmt_float(report.nll_per_frame)} per frame",
        f"  mel-cepstral RMS (worst, of range): {report.mgc_relative_rms * 100:.2f}%",
        f"  smoothness mean|Δ¹|: prediction {_fmt_float(report.smoothness_pred)}, "
        f"reference {_fmt_float(report.smoothness_ref)}",
        f"  roughness mean|Δ²|: prediction {_fmt_float(report.roughness_pred)}, "
        f"reference {_fmt_float(report.roughness_ref)}",
    ]
    if report.smoothness_raw is not None:
        lines.append(
            f"  before MLPG: smoothness {_fmt_float(report.smoothness_raw)}, "
            f"roughness {_fmt_float(report.roughness_raw)}"
        )

    lines.append("")
    if by_part:
        lines.append(f"  {'part':<9} {'dims':>4} {'mean rms':>11} {'max rms':>11}")
        for name, width in report.layout.to_dict().items():
            if not width:
                continue
            part = report.part_rms(name)
            lines.append(f"  {name:<9} {width:>4} {part.mean():>11.5g} {part.max():>11.5g}")
    else:
        lines.append(f"  {'dim':>4}  {'part':<9} {'rms':>11} {'range':>11}")
        for name, width in report.layout.to_dict().items():
            sl = report.layout.slice_of(name)
            for j, d in enumerate(range(sl.start, sl.stop)):
                label = f"{name}[{j}]" if width > 1 else name
                lines.append(
                    f"  {d:>4}  {label:<9} {report.rms[d]:>11.5g} {report.value_range[d]:>11.5g}"
                )
    return "\n".join(lines)


# ─── Synthesis ────────────────────────────────────────────────────────────────

def fmt_synthesis(result) -> str:
    w = result.wave
    feats = result.features
    size = result.path.stat().st_size if result.path.exists() else None
    return "\n".join([
        f"Synthesized {_fmt_duration(w.duration_s)} at {w.sample_rate} Hz → {result.path}",
        f"  frames: {feats.statics.shape[0]} in {len(feats.segments)} segment(s)",
        f"  file size: {_fmt_bytes(size) if size is not None else _safe(size)}",
        f"  peak: {float(np.max(np.abs(w.samples))) if w.samples.size else 0.0:.3f}",
    ])
