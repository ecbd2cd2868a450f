"""Batch orchestration: manifests, model fitting, anonymization runs, evaluation.

All commands are plain functions so they can be driven from the CLI or from
tests. Parallel sections map over utterances with a process pool and
aggregate in utterance-id order, so the worker count never changes output
bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import deid, evaluation, fda, pitch, resynth, synth
from .audio import read_wav, write_wav

CONFIG_FORMAT_VERSION = 1


class ConfigError(Exception):
    """Bad configuration or manifest; maps to exit code 2."""


@dataclass(frozen=True)
class ManifestRow:
    utterance_id: str
    path: str
    speaker_id: str
    group: str
    condition: str
    session: str


@dataclass(frozen=True)
class Manifest:
    rows: tuple
    root: Path

    def resolve(self, row: ManifestRow) -> Path:
        p = Path(row.path)
        return p if p.is_absolute() else self.root / p

    def filter(self, groups=None, conditions=None, sessions=None, speakers=None):
        out = []
        for r in self.rows:
            if groups is not None and r.group not in groups:
                continue
            if conditions is not None and r.condition not in conditions:
                continue
            if sessions is not None and r.session not in sessions:
                continue
            if speakers is not None and r.speaker_id not in speakers:
                continue
            out.append(r)
        return out

    @property
    def groups(self):
        return sorted({r.group for r in self.rows})


def load_manifest(path) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(synth.MANIFEST_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise ConfigError(f"manifest is missing columns: {sorted(missing)}")
        for raw in reader:
            rows.append(
                ManifestRow(
                    utterance_id=raw["utterance_id"],
                    path=raw["path"],
                    speaker_id=raw["speaker_id"],
                    group=raw["group"],
                    condition=raw["condition"],
                    session=raw["session"],
                )
            )
    ids = [r.utterance_id for r in rows]
    if len(set(ids)) != len(ids):
        dupes = sorted({u for u in ids if ids.count(u) > 1})
        raise ConfigError(f"duplicate utterance ids in manifest: {dupes[:5]}")
    for r in rows:
        if not r.speaker_id or not r.group:
            raise ConfigError(f"row {r.utterance_id!r} lacks a speaker or group label")
    return Manifest(rows=tuple(rows), root=path.parent.resolve())


@dataclass(frozen=True)
class PipelineConfig:
    label: str
    pitch_ranges: dict  # group -> (floor, ceiling)
    n_basis: int
    order: int
    lam: float
    grid_points: int
    semitone_ref_hz: float
    strategy: deid.DeidStrategy
    formant_factor: float
    n_formants: int
    eval_stoi: bool
    eval_eer: bool
    raw: dict

    def pitch_config(self, group: str) -> pitch.PitchConfig:
        if group not in self.pitch_ranges:
            raise ConfigError(f"no pitch range configured for group {group!r}")
        floor, ceiling = self.pitch_ranges[group]
        return pitch.PitchConfig(floor=floor, ceiling=ceiling)

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def config_from_dict(data: dict) -> PipelineConfig:
    if data.get("version") != CONFIG_FORMAT_VERSION:
        raise ConfigError(f"unsupported config version: {data.get('version')!r}")
    try:
        pitch_ranges = {
            g: (float(v["floor"]), float(v["ceiling"])) for g, v in data["pitch"].items()
        }
        basis = data.get("basis", {})
        strat = data["strategy"]
        strategy = deid.DeidStrategy(
            kind=strat["kind"],
            shift_percent=float(strat.get("shift_percent", 0.0)),
            donor_group=strat.get("donor_group", ""),
            donor_condition=strat.get("donor_condition", "disguised"),
            variance_threshold=float(strat.get("variance_threshold", 0.9)),
            max_components=int(strat.get("max_components", 30)),
        )
        formant = data.get("formant", {})
        ev = data.get("evaluation", {})
        cfg = PipelineConfig(
            label=data.get("label", "unnamed"),
            pitch_ranges=pitch_ranges,
            n_basis=int(basis.get("n_basis", fda.DEFAULT_N_BASIS)),
            order=int(basis.get("order", fda.DEFAULT_ORDER)),
            lam=float(basis.get("lambda", fda.DEFAULT_LAMBDA)),
            grid_points=int(basis.get("grid_points", fda.DEFAULT_GRID_POINTS)),
            semitone_ref_hz=float(data.get("semitone_ref_hz", pitch.DEFAULT_SEMITONE_REF_HZ)),
            strategy=strategy,
            formant_factor=float(formant.get("factor", 1.0)),
            n_formants=int(formant.get("n_formants", 3)),
            eval_stoi=bool(ev.get("stoi", True)),
            eval_eer=bool(ev.get("eer", True)),
            raw=data,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def _map_jobs(fn, jobs, workers: int):
    """Order-preserving map, optionally through a process pool."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------- fit

def _curve_job(args) -> tuple:
    """Extract one utterance's semitone trajectory on the normalized grid."""
    wav_path, floor, ceiling, ref_hz, grid_points = args
    w = read_wav(wav_path)
    cfg = pitch.PitchConfig(floor=floor, ceiling=ceiling)
    traj = pitch.extract_f0(w, cfg)
    filled = pitch.interpolate_unvoiced(traj)
    st = pitch.hz_to_semitones(filled, ref_hz)
    return fda.uniform_resample(st.times, st.values, grid_points)


def cmd_fit(
    manifest_path,
    config_path,
    out_path,
    groups: Optional[Sequence[str]] = None,
    conditions: Optional[Sequence[str]] = None,
    sessions: Optional[Sequence[str]] = None,
    workers: int = 1,
) -> Path:
    """Fit one functional PCA model over the filtered manifest rows."""
    manifest = load_manifest(manifest_path)
    cfg = load_config(config_path)
    rows = manifest.filter(groups=groups, conditions=conditions, sessions=sessions)
    if not rows:
        raise ConfigError(
            f"no manifest rows match filter groups={groups} conditions={conditions} sessions={sessions}"
        )
    if len(rows) < 2:
        raise ConfigError("functional PCA needs at least 2 matching utterances")
    rows = sorted(rows, key=lambda r: r.utterance_id)

    jobs = []
    for r in rows:
        floor, ceiling = cfg.pitch_ranges.get(r.group, (None, None))
        if floor is None:
            raise ConfigError(f"no pitch range configured for group {r.group!r}")
        jobs.append((str(manifest.resolve(r)), floor, ceiling, cfg.semitone_ref_hz, cfg.grid_points))
    grids = _map_jobs(_curve_job, jobs, workers)

    basis = fda.build_basis(cfg.n_basis, cfg.order)
    curves, labels = [], []
    for r, grid in zip(rows, grids):
        curves.append(fda.smooth_curve(grid, basis, cfg.lam))
        labels.append(
            fda.CurveLabel(curve_id=r.utterance_id, speaker=r.speaker_id, group=r.group, condition=r.condition)
        )
    model = fda.fpca_fit(curves, labels)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fda.save_model(out_path, model)
    return out_path


# ---------------------------------------------------------------- anonymize

@lru_cache(maxsize=8)
def _cached_model(path: str) -> fda.FpcaModel:
    return fda.load_model(path)


def _anonymize_job(args) -> dict:
    (
        utt_id,
        wav_path,
        out_path,
        floor,
        ceiling,
        ref_hz,
        lam,
        grid_points,
        strategy_fields,
        speaker,
        model_path,
        formant_factor,
        n_formants,
    ) = args
    try:
        strategy = deid.DeidStrategy(**dict(strategy_fields))
        w = read_wav(wav_path)
        pcfg = pitch.PitchConfig(floor=floor, ceiling=ceiling)
        traj = pitch.extract_f0(w, pcfg)
        if traj.n_voiced == 0:
            raise ValueError("no voiced frames found")
        model = _cached_model(model_path) if model_path else None
        target = deid.anonymize_trajectory(
            traj,
            model,
            strategy,
            speaker,
            ref_hz=ref_hz,
            lam=lam,
            grid_points=grid_points,
            pitch_floor=floor,
            pitch_ceiling=ceiling,
            max_hz=w.sample_rate / 4,
        )
        shifted = resynth.psola_modify(w, traj, target)
        fcfg = resynth.FormantShiftConfig(factor=formant_factor, n_formants=n_formants)
        result = resynth.shift_formants_detailed(shifted, fcfg)
        write_wav(out_path, result.waveform, encoding="float32")
        voiced = traj.values[traj.voiced]
        tgt_voiced = target.values[target.voiced]
        return {
            "utterance_id": utt_id,
            "status": "ok",
            "message": "",
            "original_median_f0": f"{float(np.median(voiced)):.3f}",
            "target_median_f0": f"{float(np.median(tgt_voiced)):.3f}",
            "formant_factor": f"{formant_factor:.3f}",
            "clamped_poles": str(result.clamped_poles),
            # relative to the log's own directory, so runs rehash identically
            "output": Path(out_path).name,
        }
    except Exception as exc:  # per-utterance isolation: log and continue
        return {
            "utterance_id": utt_id,
            "status": "failed",
            "message": f"{type(exc).__name__}: {exc}",
            "original_median_f0": "",
            "target_median_f0": "",
            "formant_factor": f"{formant_factor:.3f}",
            "clamped_poles": "",
            "output": "",
        }


LOG_FIELDS = [
    "utterance_id",
    "status",
    "message",
    "original_median_f0",
    "target_median_f0",
    "formant_factor",
    "clamped_poles",
    "output",
]


def cmd_anonymize(
    manifest_path,
    config_path,
    model_path,
    out_dir,
    groups: Optional[Sequence[str]] = None,
    sessions: Optional[Sequence[str]] = None,
    workers: int = 1,
) -> int:
    """Run f0 replacement then formant shifting over every selected modal utterance.

    Writes <utterance_id>.anon.wav files plus anon_log.csv under out_dir.
    Returns the number of failed utterances; inputs are never modified.
    """
    manifest = load_manifest(manifest_path)
    cfg = load_config(config_path)
    if cfg.strategy.kind != deid.CONSTANT_SHIFT:
        if model_path is None:
            raise ConfigError(f"strategy {cfg.strategy.kind!r} requires a model file")
        if not Path(model_path).exists():
            raise ConfigError(f"model file not found: {model_path}")
        try:
            _cached_model(str(model_path))  # fail fast before touching any audio
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"unreadable model file {model_path}: {exc}") from exc
    rows = manifest.filter(groups=groups, conditions=(synth.CONDITION_MODAL,), sessions=sessions)
    if not rows:
        raise ConfigError("no modal utterances match the given filters")
    rows = sorted(rows, key=lambda r: r.utterance_id)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest_groups = manifest.groups
    jobs = []
    for r in rows:
        if r.group not in cfg.pitch_ranges:
            raise ConfigError(f"no pitch range configured for group {r.group!r}")
        floor, ceiling = cfg.pitch_ranges[r.group]
        strategy = cfg.strategy
        if strategy.kind == deid.CROSS_GROUP and not strategy.donor_group:
            others = [g for g in manifest_groups if g != r.group]
            if len(others) != 1:
                raise ConfigError(
                    "cross_group donor resolution needs exactly two groups; "
                    f"found {manifest_groups}; set donor_group explicitly"
                )
            strategy = dataclasses.replace(strategy, donor_group=others[0])
        jobs.append(
            (
                r.utterance_id,
                str(manifest.resolve(r)),
                str(out_dir / f"{r.utterance_id}.anon.wav"),
                floor,
                ceiling,
                cfg.semitone_ref_hz,
                cfg.lam,
                cfg.grid_points,
                tuple(sorted(dataclasses.asdict(strategy).items())),
                r.speaker_id,
                str(model_path) if model_path else "",
                cfg.formant_factor,
                cfg.n_formants,
            )
        )
    results = _map_jobs(_anonymize_job, jobs, workers)
    results = sorted(results, key=lambda d: d["utterance_id"])
    with open(out_dir / "anon_log.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
        writer.writerows(results)
    return sum(1 for d in results if d["status"] != "ok")


# ---------------------------------------------------------------- evaluate

def _embed_job(path: str) -> np.ndarray:
    return evaluation.mfcc_embed(read_wav(path))


def _stoi_job(args) -> float:
    clean_path, processed_path = args
    return evaluation.stoi(read_wav(clean_path), read_wav(processed_path))


def _find_test_audio(anon_dir: Path, utt_id: str) -> Optional[Path]:
    anon = anon_dir / f"{utt_id}.anon.wav"
    if anon.exists():
        return anon
    plain = anon_dir / f"{utt_id}.wav"
    if plain.exists():
        return plain
    return None


def cmd_evaluate(
    manifest_path,
    config_path,
    anon_dir,
    trial_path,
    out_dir,
    workers: int = 1,
) -> evaluation.EvalReport:
    """Score the trial list with original enrollment and anonymized tests.

    Enrollment embeddings come from session-1 modal originals per speaker.
    Test audio is looked up as <id>.anon.wav under anon_dir, falling back to
    <id>.wav so a corpus directory evaluates the no-anonymization baseline.
    Emits report.json, report.txt, and scores.csv under out_dir.
    """
    manifest = load_manifest(manifest_path)
    cfg = load_config(config_path)
    anon_dir = Path(anon_dir)
    trial_path = Path(trial_path)
    if not trial_path.exists():
        raise ConfigError(f"trial file not found: {trial_path}")
    trials = []
    with open(trial_path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(synth.TRIAL_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise ConfigError(f"trial file is missing columns: {sorted(missing)}")
        for raw in reader:
            if raw["label"] not in ("genuine", "impostor"):
                raise ConfigError(f"bad trial label {raw['label']!r}")
            trials.append((raw["enroll_speaker"], raw["test_utterance"], raw["label"]))
    if not trials:
        raise ConfigError("trial file contains no trials")

    by_id = {r.utterance_id: r for r in manifest.rows}
    unknown = sorted({t for _, t, _ in trials if t not in by_id})
    if unknown:
        raise ConfigError(f"trial file references unknown utterances: {unknown[:5]}")

    # enrollment: session-1 modal originals of every enroll speaker
    enroll_speakers = sorted({s for s, _, _ in trials})
    enroll_rows = {}
    for spk in enroll_speakers:
        rows = manifest.filter(conditions=(synth.CONDITION_MODAL,), sessions=("1",), speakers=(spk,))
        if not rows:
            raise ConfigError(f"no session-1 modal enrollment material for speaker {spk!r}")
        enroll_rows[spk] = sorted(rows, key=lambda r: r.utterance_id)

    test_ids = sorted({t for _, t, _ in trials})
    test_paths = {}
    row_errors = []
    for utt_id in test_ids:
        found = _find_test_audio(anon_dir, utt_id)
        if found is None:
            row_errors.append(utt_id)
        else:
            test_paths[utt_id] = found
    if row_errors:
        raise ConfigError(f"no test audio under {anon_dir} for: {row_errors[:5]}")

    enroll_paths = sorted({str(manifest.resolve(r)) for rows in enroll_rows.values() for r in rows})
    all_paths = enroll_paths + [str(test_paths[u]) for u in test_ids]
    embeddings = dict(zip(all_paths, _map_jobs(_embed_job, all_paths, workers)))

    enroll_models = {
        spk: [embeddings[str(manifest.resolve(r))] for r in rows] for spk, rows in enroll_rows.items()
    }
    scores = []
    for spk, utt_id, label in trials:
        s = evaluation.score_trials(enroll_models[spk], embeddings[str(test_paths[utt_id])])
        scores.append((f"{spk}|{utt_id}", s, label, by_id[utt_id].group))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "scores.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "score", "label"])
        for trial_id, s, label, _ in scores:
            writer.writerow([trial_id, f"{s:.8f}", label])

    stoi_by_group = {}
    all_stoi = []
    if cfg.eval_stoi:
        pairs = [(str(manifest.resolve(by_id[u])), str(test_paths[u])) for u in test_ids]
        values = _map_jobs(_stoi_job, pairs, workers)
        for utt_id, v in zip(test_ids, values):
            stoi_by_group.setdefault(by_id[utt_id].group, []).append(v)
            all_stoi.append(v)

    def make_row(label: str, subset, svals) -> evaluation.MethodResult:
        gen = np.array([s for _, s, lab, _ in subset if lab == "genuine"])
        imp = np.array([s for _, s, lab, _ in subset if lab == "impostor"])
        if cfg.eval_eer and gen.size and imp.size:
            eer, thr = evaluation.compute_eer(evaluation.TrialSet(gen, imp))
            # fold at the chance line: a worse-than-chance operating point
            # means inverted polarity, which an attacker would just flip
            eer = min(eer, 100.0 - eer)
        else:
            eer, thr = float("nan"), float("nan")
        if svals:
            s_mean, s_min, s_max = float(np.mean(svals)), float(np.min(svals)), float(np.max(svals))
        else:
            s_mean = s_min = s_max = float("nan")
        return evaluation.MethodResult(
            label=label,
            eer_percent=float(eer),
            eer_threshold=float(thr),
            stoi_mean=s_mean,
            stoi_min=s_min,
            stoi_max=s_max,
            n_genuine=int(gen.size),
            n_impostor=int(imp.size),
        )

    rows = [make_row(cfg.label, scores, all_stoi)]
    for group in sorted({g for _, _, _, g in scores}):
        subset = [t for t in scores if t[3] == group]
        rows.append(make_row(f"{cfg.label}/{group}", subset, stoi_by_group.get(group, [])))

    report = evaluation.EvalReport(
        corpus_id=Path(manifest_path).name,
        config_hash=cfg.config_hash(),
        rows=tuple(rows),
    )
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(out_dir / "report.txt", "w") as fh:
        fh.write(report.format_table() + "\n")
    return report


# ---------------------------------------------------------------- exports

def cmd_export_curves(model_path, component_index: int, n_points: int, out_dir) -> tuple:
    """Write mean/plus/minus curves for one component and the s1-s2 scatter.

    plus/minus offset the mean by one standard deviation of the component's
    training scores. Scatter rows carry a combined group:condition:speaker
    label per training curve.
    """
    model = fda.load_model(model_path)
    i = component_index
    if i < 1 or i > model.n_components:
        raise ConfigError(f"component index {i} outside 1..{model.n_components}")
    if n_points < 2:
        raise ConfigError("n_points must be at least 2")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    sd = float(np.std(model.training_scores[:, i - 1]))
    grid = np.linspace(0.0, 1.0, n_points)
    mean = model.mean(grid)
    pc = model.components[i - 1](grid)
    curves_path = out_dir / f"component_{i}_curves.csv"
    with open(curves_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mean", "plus", "minus"])
        for k in range(n_points):
            writer.writerow(
                [
                    f"{grid[k]:.8f}",
                    f"{mean[k]:.8f}",
                    f"{mean[k] + sd * pc[k]:.8f}",
                    f"{mean[k] - sd * pc[k]:.8f}",
                ]
            )

    scatter_path = out_dir / "scores_scatter.csv"
    with open(scatter_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s1", "s2", "label"])
        n_scores = model.training_scores.shape[1]
        for k in range(model.training_scores.shape[0]):
            s1 = model.training_scores[k, 0]
            s2 = model.training_scores[k, 1] if n_scores > 1 else 0.0
            if model.labels is not None:
                lab = model.labels[k]
                label = f"{lab.group}:{lab.condition}:{lab.speaker}"
            else:
                label = str(k)
            writer.writerow([f"{s1:.8f}", f"{s2:.8f}", label])
    return curves_path, scatter_path


def cmd_make_synth_corpus(seed: int, out_dir, n_per_group: int = 5, n_modal: int = 4, n_disguised: int = 2):
    return synth.generate_corpus(
        out_dir, seed=seed, n_per_group=n_per_group, n_modal=n_modal, n_disguised=n_disguised
    )
