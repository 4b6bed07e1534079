"""Batch command-line front end.

Subcommands: ingest, preprocess, spectrify, label-qa, split, train, detect,
evaluate, report, synth. Every run writes a run-record JSON (resolved
config, input digests, version) next to its primary output.
"""
from __future__ import annotations

import argparse
import json
import sys
from datetime import date
from pathlib import Path

import numpy as np

from . import audio as audiomod
from . import baseline as basemod
from . import dataset as datamod
from . import dsp as dspmod
from . import spectrogram as specmod
from .config import ConfigError, config_fingerprint, load_config, write_run_record
from .metrics import confusion_and_metrics, match_detections, roc_and_auc
from .report import EvalReport, emit_report
from .training import TrainConfig, cross_validate, train
from .nn import (
    AdamState, Model, build_vanilla_cnn, load_checkpoint, restore_model,
    save_checkpoint,
)


def _spectro_params(cfg) -> specmod.SpectrogramParams:
    s = cfg["spectrogram"]
    return specmod.SpectrogramParams(
        window_len=s["window_len"], hop=s["hop"], window_kind=s["window_kind"]
    )


def _detector_params(cfg) -> basemod.DetectorParams:
    d = cfg["detector"]
    return basemod.DetectorParams(
        threshold_db=d["threshold_db"], connectivity=d["connectivity"],
        min_region_cells=d["min_region_cells"], max_gap_frames=d["max_gap_frames"],
        max_gap_bins=d["max_gap_bins"], min_duration_s=d["min_duration_s"],
        max_duration_s=d["max_duration_s"],
        median_window_frames=d["median_window_frames"],
    )


def _preprocess_clip(clip, cfg):
    if cfg["filter"]["enabled"]:
        spec = dspmod.FilterSpec(
            low_cut_hz=cfg["filter"]["low_cut_hz"],
            high_cut_hz=cfg["filter"]["high_cut_hz"],
            order=cfg["filter"]["order"],
        )
        sos = dspmod.design_bandpass(spec, clip.sample_rate)
        clip = dspmod.apply_filter_zero_phase(clip, sos)
    if cfg["whitening"]["enabled"]:
        w = cfg["whitening"]
        if w["curve_csv"]:
            curve = dspmod.WhiteningCurve.load_csv(w["curve_csv"])
        else:
            curve = dspmod.estimate_whitening(
                clip, w["n_bins"], w["smoothing_bins"], w["floor"]
            )
        clip = dspmod.apply_whitening(clip, curve)
    return clip


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def cmd_synth(args, cfg):
    clip = dspmod.synthesize(
        kind=args.kind, duration_s=args.dur, sample_rate=args.fs,
        f0_hz=args.f0, f1_hz=args.f1, amplitude=args.amp, seed=cfg["seed"],
    )
    audiomod.encode_wav(clip, args.out)
    write_run_record(f"{args.out}.run.json", cfg, [], [args.out])
    return [args.out]


def cmd_ingest(args, cfg):
    clip = audiomod.decode_wav(args.input)
    clip = audiomod.average_channels(clip)
    # QA runs on the raw signal: bias removal would shift exact-zero
    # dropout runs away from zero and hide them
    flags = audiomod.detect_cutoffs(
        clip,
        saturation_threshold=cfg["audio"]["saturation_threshold"],
        min_run=max(1, int(cfg["audio"]["min_run_ms"] * clip.sample_rate / 1000)),
    )
    if cfg["audio"]["remove_bias"]:
        clip = audiomod.remove_dc_bias(clip)
    if cfg["audio"]["denoise"]:
        clip = audiomod.denoise_transients(clip, levels=cfg["audio"]["denoise_levels"])
    audiomod.encode_wav(clip, args.out)
    outputs = [args.out]
    if args.flags:
        audiomod.export_flags_jsonl(flags, args.flags)
        outputs.append(args.flags)
    write_run_record(f"{args.out}.run.json", cfg, [args.input], outputs)
    return outputs


def cmd_preprocess(args, cfg):
    clip = audiomod.decode_wav(args.input)
    clip = audiomod.average_channels(clip)
    clip = _preprocess_clip(clip, cfg)
    peak = np.abs(clip.samples).max()
    if peak > 1.0:
        clip = clip.replace_samples(clip.samples / peak)
    audiomod.encode_wav(clip, args.out)
    write_run_record(f"{args.out}.run.json", cfg, [args.input], [args.out])
    return [args.out]


def cmd_spectrify(args, cfg):
    s = cfg["spectrogram"]
    if args.manifest:
        manifest = datamod.Manifest.load_jsonl(args.manifest)
        result = datamod.build_example_set(
            manifest, args.outdir,
            spectrogram_params=_spectro_params(cfg),
            window_dur_s=cfg["windows"]["window_dur_s"],
            shift_s=cfg["windows"]["shift_s"],
            crop_khz=(s["crop_lo_khz"], s["crop_hi_khz"]),
            image_size=s["image_size"],
            min_overlap_fraction=cfg["windows"]["min_overlap_fraction"],
        )
        write_run_record(Path(args.outdir) / "run.json", cfg, [args.manifest],
                         [args.outdir])
        if result["errors"]:
            print(json.dumps({"file_errors": result["errors"]}), file=sys.stderr)
        return [args.outdir]
    clip = audiomod.average_channels(audiomod.decode_wav(args.input))
    spec = specmod.stft(clip, _spectro_params(cfg))
    spec = specmod.power_to_db(spec, s["floor_db"])
    spec = specmod.crop_frequency(spec, s["crop_lo_khz"], s["crop_hi_khz"])
    outputs = []
    if args.png:
        specmod.save_png(spec, args.png)
        outputs.append(args.png)
    if args.csv:
        spec.save_csv(args.csv)
        outputs.append(args.csv)
    if not outputs:
        raise ConfigError("single-file spectrify needs --png and/or --csv")
    write_run_record(f"{outputs[0]}.run.json", cfg, [args.input], outputs)
    return outputs


def cmd_label_qa(args, cfg):
    manifest = datamod.Manifest.load_jsonl(args.manifest)
    annotations = [a for e in manifest.entries for a in e.annotations]
    results = []
    for ann in annotations:
        if ann.label != datamod.WHISTLE or not ann.contour:
            continue
        qa = datamod.contour_qa(
            ann, intensity_var_max_db2=cfg["dataset"]["intensity_var_max_db2"]
        )
        results.append({"file_id": ann.file_id, "start_s": ann.start_s,
                        "end_s": ann.end_s, **qa})
    tukey = datamod.tukey_duration_filter(annotations)
    out = {
        "contours": results,
        "tukey": {
            "fences_s": list(tukey["fences"]),
            "kept": len(tukey["kept"]),
            "discarded": len(tukey["discarded"]),
        },
    }
    with open(args.out, "w") as fh:
        json.dump(out, fh, sort_keys=True, indent=2)
        fh.write("\n")
    write_run_record(f"{args.out}.run.json", cfg, [args.manifest], [args.out])
    return [args.out]


def _parse_range(text: str) -> tuple[date, date]:
    a, b = text.split(":")
    return date.fromisoformat(a), date.fromisoformat(b)


def cmd_split(args, cfg):
    manifest = datamod.Manifest.load_jsonl(args.manifest)
    result = datamod.split_by_date(
        manifest, _parse_range(args.train_range), _parse_range(args.test_range)
    )
    train_path = f"{args.out_prefix}.train.jsonl"
    test_path = f"{args.out_prefix}.test.jsonl"
    excl_path = f"{args.out_prefix}.excluded.jsonl"
    result["train"].save_jsonl(train_path)
    result["test"].save_jsonl(test_path)
    datamod.Manifest(result["excluded"]).save_jsonl(excl_path)
    write_run_record(f"{args.out_prefix}.run.json", cfg, [args.manifest],
                     [train_path, test_path, excl_path])
    return [train_path, test_path, excl_path]


def cmd_train(args, cfg):
    images, labels, _ = datamod.load_example_set(args.cache)
    images = images.astype(np.float32)
    tc = TrainConfig(lr=cfg["train"]["lr"], batch_size=cfg["train"]["batch_size"],
                     max_epochs=cfg["train"]["max_epochs"],
                     patience=cfg["train"]["patience"], seed=cfg["seed"])
    input_shape = images.shape[1:]
    config = build_vanilla_cnn(input_hw=input_shape[:2], channels=input_shape[2])

    outputs = []
    if args.folds > 1:
        items = [(i, int(lbl)) for i, lbl in enumerate(labels)]
        folds = datamod.stratified_kfold(items, k=args.folds, seed=cfg["seed"])
        cv = cross_validate(lambda seed: Model(config, seed=seed),
                            images, labels, folds, tc)
        fold0 = cv["folds"][0]
        report = EvalReport.from_metrics(
            fold0["metrics"], roc=fold0["roc"],
            per_fold=[{"fold": f["fold"],
                       "accuracy": f["metrics"]["accuracy"],
                       "auc": f["roc"].auc} for f in cv["folds"]],
            config_fingerprint=config_fingerprint(cfg),
        )
        outdir = Path(args.out).with_suffix(".cv")
        outputs += [str(p) for p in emit_report(report, outdir)]

    model = Model(config, seed=cfg["seed"])
    items = [(i, int(lbl)) for i, lbl in enumerate(labels)]
    folds = datamod.stratified_kfold(items, k=max(args.folds, 2), seed=cfg["seed"])
    val_idx = np.array(sorted(folds.fold_items(0)), dtype=int)
    train_idx = np.array(sorted(set(range(len(labels))) - set(val_idx.tolist())),
                         dtype=int)
    result = train(model, (images[train_idx], labels[train_idx]),
                   (images[val_idx], labels[val_idx]), tc)
    save_checkpoint(args.out, model, optimizer=result.optimizer, metadata={
        "epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "seed": cfg["seed"],
    })
    outputs.append(args.out)
    history_path = f"{args.out}.history.json"
    with open(history_path, "w") as fh:
        json.dump(result.history, fh, sort_keys=True, indent=2)
        fh.write("\n")
    outputs.append(history_path)
    write_run_record(f"{args.out}.run.json", cfg, [str(Path(args.cache) / "index.json")],
                     outputs)
    return outputs


def _detect_baseline_file(path, cfg):
    clip = audiomod.average_channels(audiomod.decode_wav(path))
    clip = _preprocess_clip(clip, cfg)
    s = cfg["spectrogram"]
    spec = specmod.stft(clip, _spectro_params(cfg))
    spec = specmod.power_to_db(spec, s["floor_db"])
    spec = specmod.crop_frequency(spec, s["crop_lo_khz"], s["crop_hi_khz"])
    events = basemod.detect(spec, _detector_params(cfg))
    return [basemod.DetectionEvent(**{**e.to_dict(), "source_id": Path(path).stem})
            for e in events]


def _detect_cnn_file(path, cfg, model):
    clip = audiomod.average_channels(audiomod.decode_wav(path))
    clip = _preprocess_clip(clip, cfg)
    s = cfg["spectrogram"]
    events = []
    threshold = cfg["evaluate"]["decision_threshold"]
    size = model.config.input_shape[0]
    for segment, start_s in specmod.slide_windows(
        clip, cfg["windows"]["window_dur_s"], cfg["windows"]["shift_s"]
    ):
        spec = specmod.stft(segment, _spectro_params(cfg))
        spec = specmod.power_to_db(spec, s["floor_db"])
        spec = specmod.crop_frequency(spec, s["crop_lo_khz"], s["crop_hi_khz"])
        image = specmod.render_to_image(spec, size=size)
        probs, _ = model.forward(image.pixels[np.newaxis], mode="eval")
        score = float(probs[0, 1])
        if score >= threshold:
            events.append(basemod.DetectionEvent(
                start_s=start_s, end_s=start_s + cfg["windows"]["window_dur_s"],
                f_lo_khz=s["crop_lo_khz"], f_hi_khz=s["crop_hi_khz"],
                score=score, n_cells=0, source_id=Path(path).stem,
            ))
    return events


def cmd_detect(args, cfg):
    in_path = Path(args.input)
    files = sorted(in_path.glob("*.wav")) if in_path.is_dir() else [in_path]
    model = None
    if args.engine == "cnn":
        if not args.checkpoint:
            raise ConfigError("--engine cnn requires --checkpoint")
        model = restore_model(load_checkpoint(args.checkpoint))

    all_events = []
    if cfg["threads"] > 1 and len(files) > 1:
        from concurrent.futures import ThreadPoolExecutor

        def work(path):
            return (_detect_cnn_file(path, cfg, model) if args.engine == "cnn"
                    else _detect_baseline_file(path, cfg))

        with ThreadPoolExecutor(max_workers=cfg["threads"]) as pool:
            for events in pool.map(work, files):
                all_events.extend(events)
    else:
        for path in files:
            all_events.extend(
                _detect_cnn_file(path, cfg, model) if args.engine == "cnn"
                else _detect_baseline_file(path, cfg)
            )
    all_events.sort(key=lambda e: (e.source_id, e.start_s))
    basemod.export_events_jsonl(all_events, args.out)
    outputs = [args.out]
    if args.csv:
        basemod.export_events_csv(all_events, args.csv)
        outputs.append(args.csv)
    write_run_record(f"{args.out}.run.json", cfg, [str(f) for f in files], outputs)
    return outputs


def cmd_evaluate(args, cfg):
    events = basemod.load_events_jsonl(args.events)
    manifest = datamod.Manifest.load_jsonl(args.truth)
    min_overlap = (cfg["evaluate"]["min_overlap_fraction"]
                   if args.min_overlap is None else args.min_overlap)

    tp = fp = fn = 0
    for entry in manifest.entries:
        file_events = [e for e in events if e.source_id == entry.file_id]
        truths = [a for a in entry.annotations if a.label == datamod.WHISTLE]
        res = match_detections(file_events, truths, min_overlap)
        tp += res["tp"]
        fp += res["fp"]
        fn += res["fn"]

    labels = [1] * (tp + fn) + [0] * fp
    preds = [1] * tp + [0] * fn + [1] * fp
    metrics = confusion_and_metrics(labels, preds) if labels else None
    if metrics is None:
        raise ConfigError("nothing to evaluate: no events and no truths")
    report = EvalReport.from_metrics(metrics,
                                     config_fingerprint=config_fingerprint(cfg))
    outputs = [str(p) for p in emit_report(report, args.outdir)]
    write_run_record(Path(args.outdir) / "run.json", cfg,
                     [args.events, args.truth], outputs)
    return outputs


def cmd_report(args, cfg):
    with open(args.report) as fh:
        report = EvalReport.from_dict(json.load(fh))
    outputs = [str(p) for p in emit_report(report, args.outdir)]
    write_run_record(Path(args.outdir) / "run.json", cfg, [args.report], outputs)
    return outputs


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whistlekit")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (dotted path)")
    parser.add_argument("--seed", type=int, help="override the global seed")
    parser.add_argument("--threads", type=int, help="worker threads for detect")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a test signal WAV")
    p.add_argument("--kind", required=True,
                   choices=["sine", "linear_chirp", "white_noise"])
    p.add_argument("--f0", type=float, default=0.0)
    p.add_argument("--f1", type=float, default=None)
    p.add_argument("--amp", type=float, default=0.5)
    p.add_argument("--dur", type=float, required=True)
    p.add_argument("--fs", type=int, default=96000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="decode, average channels, QA")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--flags", help="QA flags JSONL output")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("preprocess", help="bandpass and whitening")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("spectrify", help="spectrogram images / example cache")
    p.add_argument("--manifest")
    p.add_argument("--outdir")
    p.add_argument("--in", dest="input")
    p.add_argument("--png")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_spectrify)

    p = sub.add_parser("label-qa", help="contour and duration QA over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label_qa)

    p = sub.add_parser("split", help="date-based train/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-range", required=True, metavar="FROM:TO")
    p.add_argument("--test-range", required=True, metavar="FROM:TO")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the CNN on an example cache")
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--folds", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="run a detector over WAV input")
    p.add_argument("--engine", choices=["cnn", "baseline"], required=True)
    p.add_argument("--in", dest="input", required=True, help="WAV file or directory")
    p.add_argument("--out", required=True, help="events JSONL output")
    p.add_argument("--csv", help="also export events as CSV")
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score events against a truth manifest")
    p.add_argument("--events", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--min-overlap", type=float, default=None)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="re-emit artifacts from a report.json")
    p.add_argument("--report", required=True)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threads is not None:
            cfg["threads"] = args.threads
        args.func(args, cfg)
    except (ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
