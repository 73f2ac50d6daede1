import copy
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import setproctitle
import torch

from glsed.algorithms.algorithm.sed_model import load_checkpoint
from glsed.algorithms.utils.cnn import EncoderConfig
from glsed.algorithms.utils.disentangled import DFConfig, assign, full_assignment
from glsed.config import get_config, parse_args, str_list, write_config_file
from glsed.corpus import EventVocabulary, count_cooccurrence, event_statistics, parse_strong_labels, read_manifest
from glsed.corpus.dataset import Corpus
from glsed.corpus.statistics import read_durations, write_durations
from glsed.corpus.toy import TOY_SIZES, generate_toy_corpus
from glsed.data.minibatch import TrainingSet, ValidationSet
from glsed.features import FeatureConfig, FeatureStore, extract_logmel, load_audio
from glsed.features.store import FeatureFormatError
from glsed.inference.postprocess import FIXED_WINDOW, WindowPlan, adaptive_windows, decode_events, write_submission
from glsed.inference.predict import ensemble, predict
from glsed.metrics.sed_metrics import clip_f1, event_based_f1, segment_based_f1, tags_from_events
from glsed.runner.sed_runner import SEDRunner
from glsed.utils.plotting import plot_class_f1, plot_duration_stats
from glsed.utils.util import set_seed

logger = logging.getLogger("glsed")

STORE_CONFIG = "feature_config.json"


def setup_logging(level):
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def get_device(all_args):
    if all_args.cuda and torch.cuda.is_available():
        logger.info("choose to use gpu...")
        device = torch.device("cuda:0")
        torch.set_num_threads(all_args.n_training_threads)
        if all_args.cuda_deterministic:
            torch.backends.cudnn.benchmark = False
            torch.backends.cudnn.deterministic = True
    else:
        logger.info("choose to use cpu...")
        device = torch.device("cpu")
        torch.set_num_threads(all_args.n_training_threads)
    return device


def make_vocabulary(all_args):
    if all_args.classes == "dcase":
        return EventVocabulary.dcase()
    return EventVocabulary.from_names(str_list(all_args.classes))


def make_feature_config(all_args):
    return FeatureConfig(sample_rate=all_args.sample_rate, n_mels=all_args.n_mels,
                         frame_length_ms=all_args.frame_length_ms, hop_ms=all_args.hop_ms,
                         fft_size=all_args.fft_size, target_frames=all_args.target_frames)


def features_dir(all_args):
    return Path(all_args.features_dir) if all_args.features_dir else Path(all_args.data_root) / "features"


def open_store(all_args, feature_config):
    """Open the feature store, refusing one extracted with another frontend config."""
    root = features_dir(all_args)
    path = root / STORE_CONFIG
    if not path.exists():
        raise FileNotFoundError(f"no feature store at {root}; run extract first")
    with open(path) as f:
        stored = json.load(f)
    if stored["fingerprint"] != feature_config.fingerprint:
        raise FeatureFormatError(f"{root} was extracted with a different feature config: {stored['config']}")
    return FeatureStore(root)


def load_corpus(all_args, vocabulary):
    return Corpus.load(all_args.data_root, vocabulary, manifest=all_args.manifest,
                       weak_labels=all_args.weak_labels, synthetic_labels=all_args.synthetic_labels,
                       validation_labels=all_args.validation_labels)


def make_window_plan(all_args, vocabulary):
    """Fixed window if asked for, adaptive windows from the durations table, fixed 27 without one."""
    classes = vocabulary.classes
    if all_args.fixed_window is not None:
        plan = WindowPlan.fixed(classes, all_args.fixed_window, all_args.hop_ms)
    elif all_args.durations is None:
        logger.info("no durations table given, using a fixed median window of %d frames", FIXED_WINDOW)
        plan = WindowPlan.fixed(classes, FIXED_WINDOW, all_args.hop_ms)
    else:
        vocabulary.avg_duration_s.update(read_durations(all_args.durations))
        plan = adaptive_windows(classes, vocabulary.durations(), all_args.beta, all_args.hop_ms)
        for name, window in zip(classes, plan.window_frames):
            logger.info("median window %-28s %d frames", name, window)
    vocabulary.window_frames.update(zip(classes, plan.window_frames.tolist()))
    return plan


def regime_name(all_args):
    """ATP-DF, or GL-<gamma>-PT for guided learning."""
    if all_args.mode == "atp_df":
        return "ATP-DF"
    return "GL-{:g}-PT".format(all_args.gamma)


def run_dir_for(all_args, seed):
    return Path(all_args.results_dir) / all_args.experiment_name / regime_name(all_args) / f"seed{seed}"


def cmd_toy(all_args, parser):
    sizes = {k: max(1, int(round(v * all_args.toy_scale))) for k, v in TOY_SIZES.items()}
    root = generate_toy_corpus(all_args.data_root, sizes, sample_rate=all_args.sample_rate, seed=all_args.seeds[0])
    logger.info("toy corpus written to %s", root)
    return 0


def _extract_one(data_root, clip, feature_config):
    path = Path(clip.audio_path)
    if not path.is_absolute():
        path = Path(data_root) / path
    try:
        waveform = load_audio(str(path), feature_config)
        return clip.clip_id, extract_logmel(waveform, feature_config.sample_rate, feature_config), None
    except Exception as e:
        return clip.clip_id, None, f"{path}: {e}"


def cmd_extract(all_args, parser):
    from joblib import Parallel, delayed
    from tqdm import tqdm

    feature_config = make_feature_config(all_args)
    clips = read_manifest(Path(all_args.data_root) / all_args.manifest)
    store = FeatureStore(features_dir(all_args))

    jobs = tqdm(clips, desc="extract", disable=all_args.quiet)
    results = Parallel(n_jobs=all_args.n_jobs)(
        delayed(_extract_one)(all_args.data_root, clip, feature_config) for clip in jobs)

    rows, failures = [], []
    for clip_id, features, error in results:
        if error is not None:
            failures.append(error)
            continue
        rows.append(store.put(clip_id, features))
    store.write_index(rows)
    with open(store.root / STORE_CONFIG, "w") as f:
        json.dump({"fingerprint": feature_config.fingerprint, "config": feature_config.__dict__}, f, indent=2)

    logger.info("extracted %d of %d clips into %s", len(rows), len(clips), store.root)
    for error in failures:
        logger.error("unreadable audio %s", error)
    return 2 if failures else 0


def cmd_stats(all_args, parser):
    vocabulary = make_vocabulary(all_args)
    corpus = load_corpus(all_args, vocabulary)
    if not corpus.synthetic:
        raise ValueError("duration statistics need strongly labeled synthetic clips")
    stats = event_statistics(corpus.synthetic, vocabulary)
    output = Path(all_args.output) if all_args.output else Path(all_args.data_root) / "durations.tsv"
    write_durations(stats, output)
    plot_duration_stats(pd.read_csv(output, sep="\t"), output.with_suffix(".png"))
    for name, avg, total, count in zip(stats.classes, stats.avg_duration_s, stats.total_duration_s,
                                       stats.event_count):
        print("{:<28s} avg {:7.3f}s  total {:9.2f}s  events {}".format(name, avg, total, count))
    logger.info("durations written to %s", output)
    return 0


def build_training_data(all_args, vocabulary, corpus, store):
    """
    Labeled set L (plus U for guided learning), DF masks and the validation set.

    :return data: (dict) train_set, valid_set, assignment.
    """
    labels = corpus.training_labels(all_args.use_synthetic)
    if not labels:
        raise ValueError("empty training set: no weakly labeled clips")
    l_ids = [w.clip_id for w in labels]
    u_ids = corpus.unlabeled_ids() if all_args.mode == "gl" else []
    y = np.stack([vocabulary.encode(w.events) for w in labels])
    targets = np.concatenate([y, np.zeros((len(u_ids), len(vocabulary)), dtype=np.float32)])
    train_set = TrainingSet(store.stack(l_ids + u_ids), targets, len(l_ids))
    logger.info("training on %d labeled and %d unlabeled clips", len(l_ids), len(u_ids))

    ps_config = EncoderConfig.ps(channels=tuple(all_args.ps_channels), n_frames=all_args.target_frames,
                                 n_mels=all_args.n_mels)
    pt_config = EncoderConfig.pt(channels=tuple(all_args.pt_channels), n_frames=all_args.target_frames,
                                 n_mels=all_args.n_mels)
    d = ps_config.output_dim
    if all_args.mode == "gl" and pt_config.output_dim != d:
        raise ValueError(f"PS-model and PT-model disagree on d: {d} vs {pt_config.output_dim}")
    if all_args.no_df:
        assignment = full_assignment(vocabulary.classes, d)
    else:
        assignment = assign(count_cooccurrence(labels, vocabulary), DFConfig(all_args.df_m, d, tuple(all_args.df_r)))
    vocabulary.df_dim.update(zip(assignment.classes, assignment.k.tolist()))

    valid_ids = [c.clip_id for c in corpus.subset("validation")]
    refs = {a.clip_id: list(a.events) for a in corpus.validation}
    durations = corpus.durations()
    valid_set = ValidationSet(store.stack(valid_ids), valid_ids, tags_from_events(refs, valid_ids, vocabulary.classes),
                              refs, {c: durations[c] for c in valid_ids})
    return {"train_set": train_set, "valid_set": valid_set, "assignment": assignment}


def train_one(all_args, seed, data, vocabulary, window_plan, feature_fingerprint):
    """
    One training run for one seed.

    :return metrics: (dict) validation scores of the best epoch.
    """
    run_args = copy.copy(all_args)
    run_args.seed = seed
    run_args.seeds = (seed,)
    run_dir = run_dir_for(run_args, seed)
    if (run_dir / "history.tsv").exists() and not run_args.resume:
        raise ValueError(f"{run_dir} already holds a run; pass --resume or pick another experiment name")
    run_dir.mkdir(parents=True, exist_ok=True)
    write_config_file(get_config(), run_args, run_dir / "config.ini")
    data["assignment"].write_report(run_dir / "df.tsv")
    vocabulary.to_frame().to_csv(run_dir / "classes.tsv", sep="\t", index=False, float_format="%.6f")

    setproctitle.setproctitle(
        str(regime_name(run_args))
        + "-"
        + str(run_args.experiment_name)
        + "@seed"
        + str(seed)
    )

    # seed
    set_seed(seed)
    device = get_device(run_args)

    config = {
        "all_args": run_args,
        "train_set": data["train_set"],
        "valid_set": data["valid_set"],
        "vocabulary": vocabulary,
        "masks": data["assignment"].masks,
        "window_plan": window_plan,
        "feature_fingerprint": feature_fingerprint,
        "device": device,
        "run_dir": run_dir,
    }
    runner = SEDRunner(config)
    if run_args.resume:
        runner.restore()
    metrics = runner.run()
    metrics["run_dir"] = str(run_dir)
    return metrics


def train_seeds(all_args, vocabulary=None):
    """Train one run per seed and print mean and std of the best-epoch validation scores."""
    if not all_args.seeds:
        raise ValueError("the seed list is empty")
    vocabulary = vocabulary or make_vocabulary(all_args)
    feature_config = make_feature_config(all_args)
    store = open_store(all_args, feature_config)
    corpus = load_corpus(all_args, vocabulary)
    window_plan = make_window_plan(all_args, vocabulary)
    data = build_training_data(all_args, vocabulary, corpus, store)

    if all_args.parallel_seeds and len(all_args.seeds) > 1:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=all_args.n_jobs)(
            delayed(train_one)(all_args, seed, data, vocabulary, window_plan, feature_config.fingerprint)
            for seed in all_args.seeds)
    else:
        results = [train_one(all_args, seed, data, vocabulary, window_plan, feature_config.fingerprint)
                   for seed in all_args.seeds]

    frame = pd.DataFrame(results)
    summary_dir = Path(all_args.results_dir) / all_args.experiment_name / regime_name(all_args)
    frame.to_csv(summary_dir / "runs.tsv", sep="\t", index=False, float_format="%.6f")
    print("\n {} over {} seed(s):".format(regime_name(all_args), len(results)))
    for column in ("event_f1", "segment_f1", "clip_f1"):
        print("   {:<10s} {:.2f}% +- {:.2f}%".format(column, frame[column].mean() * 100,
                                                     frame[column].std(ddof=0) * 100))
    return frame


def cmd_train(all_args, parser):
    train_seeds(all_args)
    return 0


def cmd_predict(all_args, parser):
    if not all_args.checkpoints:
        raise ValueError("predict needs at least one --checkpoints path")
    vocabulary = make_vocabulary(all_args)
    feature_config = make_feature_config(all_args)
    store = open_store(all_args, feature_config)
    clips = read_manifest(Path(all_args.data_root) / all_args.manifest)
    clip_ids = [c.clip_id for c in clips if c.subset == all_args.subset]
    if not clip_ids:
        raise ValueError(f"no clips in subset {all_args.subset}")
    features = store.stack(clip_ids)

    prob_sets = []
    for path in all_args.checkpoints:
        model, _ = load_checkpoint(path, vocabulary.fingerprint, feature_config.fingerprint)
        prob_sets.append(predict(model, features, clip_ids, feature_config, batch_size=all_args.batch_size))
    probs = ensemble(prob_sets)

    output = Path(all_args.output) if all_args.output else (
        Path(all_args.results_dir) / all_args.experiment_name / "predictions")
    output.mkdir(parents=True, exist_ok=True)
    probs.save(output / "probs")
    events = decode_events(probs, make_window_plan(all_args, vocabulary), all_args.alpha)
    write_submission(events, output / "predictions.tsv")
    logger.info("%d events over %d clips from %d model(s) written to %s",
                sum(len(v) for v in events.values()), len(clip_ids), len(prob_sets), output)
    return 0


def cmd_evaluate(all_args, parser):
    if all_args.refs is None or all_args.preds is None:
        raise ValueError("evaluate needs --refs and --preds")
    vocabulary = make_vocabulary(all_args)
    classes = vocabulary.classes
    refs = {a.clip_id: list(a.events)
            for a in parse_strong_labels(Path(all_args.refs).read_text(encoding="utf-8"), vocabulary)}
    preds = {a.clip_id: list(a.events)
             for a in parse_strong_labels(Path(all_args.preds).read_text(encoding="utf-8"), vocabulary)}
    unknown = sorted(set(preds) - set(refs))
    if unknown:
        raise ValueError(f"{len(unknown)} predicted clips have no reference entry, e.g. {unknown[:3]}")

    durations = {}
    manifest = Path(all_args.data_root) / all_args.manifest
    if manifest.exists():
        durations = {c.clip_id: c.duration_s for c in read_manifest(manifest)}

    clip_ids = sorted(refs)
    reports = [
        event_based_f1(refs, preds, classes, durations=durations),
        segment_based_f1(refs, preds, classes, durations=durations),
        clip_f1(tags_from_events(refs, clip_ids, classes), tags_from_events(preds, clip_ids, classes), classes),
    ]
    output = Path(all_args.output) if all_args.output else Path(all_args.preds).parent / "scores"
    for report in reports:
        report.write(output)
        print(report)
    plot_class_f1(reports, output / "class_f1.png", title=Path(all_args.preds).name)
    return 0


def expand_runs(paths):
    """Run directories hold history.tsv; other directories are searched recursively for them."""
    runs = []
    for path in paths:
        path = Path(path)
        if (path / "history.tsv").exists():
            runs.append(path)
        elif path.is_dir():
            runs.extend(sorted(p.parent for p in path.rglob("history.tsv")))
        else:
            raise FileNotFoundError(f"{path} is not a run directory")
    return runs


def rank_runs(paths, top_k=1, skip=0):
    """
    Runs ordered by the validation event-based macro F1 of their best (clip-level) epoch, ties by run id.

    :return ranked: (List[Tuple[Path, float]]) the selected (checkpoint, event F1) pairs.
    """
    assert top_k >= 1 and skip >= 0
    scored = []
    for run in expand_runs(paths):
        history = pd.read_csv(run / "history.tsv", sep="\t")
        if history.empty:
            continue
        best = history.loc[history["clip_f1"].idxmax()]
        scored.append((run, float(best["event_f1"])))
    scored.sort(key=lambda item: (-item[1], str(item[0])))
    if skip + top_k > len(scored):
        raise ValueError(f"asked for {top_k} runs after skipping {skip}, but only {len(scored)} are available")
    return [(run / "models" / "best.pt", f1) for run, f1 in scored[skip:skip + top_k]]


def cmd_rank(all_args, parser):
    if not all_args.runs:
        raise ValueError("rank needs --runs")
    ranked = rank_runs(all_args.runs, all_args.top_k, all_args.skip)
    for checkpoint, f1 in ranked:
        print("{}\t{:.4f}".format(checkpoint, f1))
    if all_args.output:
        Path(all_args.output).write_text("\n".join(str(c) for c, _ in ranked) + "\n", encoding="utf-8")
    return 0


def cmd_compare(all_args, parser):
    """ATP-DF and GL for each gamma, trained with and without synthetic labels over all seeds."""
    rows = []
    base_name = all_args.experiment_name
    for use_synthetic in (False, True):
        regimes = [("atp_df", all_args.gamma)] + [("gl", gamma) for gamma in all_args.gammas]
        for mode, gamma in regimes:
            regime_args = copy.copy(all_args)
            regime_args.mode = mode
            regime_args.gamma = gamma
            regime_args.use_synthetic = use_synthetic
            regime_args.experiment_name = "{}/{}".format(base_name, "synthetic" if use_synthetic else "weak_only")
            frame = train_seeds(regime_args)
            rows.append({
                "regime": regime_name(regime_args),
                "synthetic": use_synthetic,
                "event_f1_mean": frame["event_f1"].mean(), "event_f1_std": frame["event_f1"].std(ddof=0),
                "segment_f1_mean": frame["segment_f1"].mean(), "segment_f1_std": frame["segment_f1"].std(ddof=0),
            })

    table = pd.DataFrame(rows)
    output = Path(all_args.output) if all_args.output else (
        Path(all_args.results_dir) / base_name / "comparison.tsv")
    output.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(output, sep="\t", index=False, float_format="%.6f")
    print(table.to_string(index=False))

    for regime, group in table.groupby("regime"):
        without = group.loc[~group["synthetic"], "event_f1_mean"].iloc[0]
        with_syn = group.loc[group["synthetic"], "event_f1_mean"].iloc[0]
        logger.info("%s: event F1 %.4f without synthetic labels, %.4f with", regime, without, with_syn)
    return 0


COMMANDS = {
    "toy": cmd_toy,
    "extract": cmd_extract,
    "stats": cmd_stats,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "rank": cmd_rank,
    "compare": cmd_compare,
}


def main(args):
    """
    Run one subcommand.

    :return code: (int) 0 on success, 1 for invalid input or configuration, 2 for runtime failures.
    """
    parser = get_config()
    try:
        all_args = parse_args(args, parser)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    except (ValueError, FileNotFoundError) as e:
        setup_logging("INFO")
        logger.error("%s", e)
        return 1

    setup_logging(all_args.log_level)
    setproctitle.setproctitle("glsed-" + all_args.command + "-" + str(all_args.experiment_name))

    try:
        return COMMANDS[all_args.command](all_args, parser)
    except (ValueError, FileNotFoundError, KeyError) as e:
        logger.error("%s", e)
        return 1
    except Exception:
        logger.exception("%s failed", all_args.command)
        return 2
