"""End-to-end tests for the manifest pipeline and its command line."""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from voxmask import cli, fda, pipeline, synth
from voxmask.audio import read_wav
from voxmask.evaluation import stoi
from voxmask.pipeline import ConfigError


def base_config(**over) -> dict:
    cfg = {
        "version": 1,
        "label": "test",
        "pitch": {
            "low": {"floor": 65.0, "ceiling": 380.0},
            "high": {"floor": 140.0, "ceiling": 520.0},
        },
        # smaller basis than the presets so the fits stay quick
        "basis": {"n_basis": 40, "order": 4, "lambda": 1e-8, "grid_points": 200},
        "semitone_ref_hz": 100.0,
        "strategy": {
            "kind": "cross_group",
            "donor_group": "",
            "variance_threshold": 0.9,
            "max_components": 30,
        },
        "formant": {"factor": 1.0, "n_formants": 3},
        "evaluation": {"stoi": True, "eer": True},
    }
    cfg.update(over)
    return cfg


def write_config(path: Path, **over) -> Path:
    path.write_text(json.dumps(base_config(**over), indent=1))
    return path


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    return write_config(tmp_path_factory.mktemp("cfg") / "config.json")


@pytest.fixture(scope="module")
def fitted_model(small_corpus, config_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "model.json"
    pipeline.cmd_fit(small_corpus, config_path, out, conditions=("modal",), workers=2)
    return out


@pytest.fixture(scope="module")
def anon_dir(small_corpus, config_path, fitted_model, tmp_path_factory):
    out = tmp_path_factory.mktemp("anon")
    failures = pipeline.cmd_anonymize(small_corpus, config_path, fitted_model, out, workers=2)
    assert failures == 0
    return out


# ---------------------------------------------------------------- manifest


class TestManifest:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            pipeline.load_manifest(tmp_path / "nope.csv")

    def test_missing_columns(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("utterance_id,path\nu1,wav/u1.wav\n")
        with pytest.raises(ConfigError, match="missing columns"):
            pipeline.load_manifest(p)

    def test_duplicate_ids(self, tmp_path):
        p = tmp_path / "m.csv"
        header = ",".join(synth.MANIFEST_FIELDS)
        row = "u1,wav/u1.wav,s1,low,modal,1"
        p.write_text(f"{header}\n{row}\n{row}\n")
        with pytest.raises(ConfigError, match="duplicate"):
            pipeline.load_manifest(p)

    def test_filter_and_resolve(self, small_corpus):
        m = pipeline.load_manifest(small_corpus)
        # 6 speakers x 2 sessions x (2 modal + 1 disguised)
        assert len(m.rows) == 36
        assert m.groups == ["high", "low"]
        assert len(m.filter(conditions=("modal",))) == 24
        assert len(m.filter(groups=("low",))) == 18
        assert len(m.filter(sessions=("1",), groups=("high",), conditions=("modal",))) == 6
        for r in m.filter(sessions=("1",))[:3]:
            assert m.resolve(r).exists()


# ---------------------------------------------------------------- config


class TestConfig:
    def test_version_required(self, tmp_path):
        p = write_config(tmp_path / "c.json", version=2)
        with pytest.raises(ConfigError, match="version"):
            pipeline.load_config(p)

    def test_missing_strategy_block(self, tmp_path):
        data = base_config()
        del data["strategy"]
        p = tmp_path / "c.json"
        p.write_text(json.dumps(data))
        with pytest.raises(ConfigError, match="bad config"):
            pipeline.load_config(p)

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            pipeline.load_config(p)

    def test_optional_blocks_get_defaults(self):
        data = base_config()
        del data["basis"]
        del data["formant"]
        cfg = pipeline.config_from_dict(data)
        assert cfg.n_basis == fda.DEFAULT_N_BASIS
        assert cfg.order == fda.DEFAULT_ORDER
        assert cfg.formant_factor == 1.0

    def test_hash_ignores_key_order(self):
        a = base_config()
        b = {k: a[k] for k in reversed(list(a))}
        ha = pipeline.config_from_dict(a).config_hash()
        hb = pipeline.config_from_dict(b).config_hash()
        assert ha == hb
        c = base_config(label="other")
        assert pipeline.config_from_dict(c).config_hash() != ha

    def test_pitch_config_unknown_group(self):
        cfg = pipeline.config_from_dict(base_config())
        assert cfg.pitch_config("low").floor == 65.0
        with pytest.raises(ConfigError, match="pitch range"):
            cfg.pitch_config("martian")


# ---------------------------------------------------------------- fit


class TestFit:
    def test_writes_loadable_model(self, fitted_model):
        model = fda.load_model(fitted_model)
        # 24 modal curves, 40 basis functions -> 23 components
        assert model.training_scores.shape == (24, 23)
        assert model.n_components == 23
        groups = {lab.group for lab in model.labels}
        assert groups == {"low", "high"}
        conditions = {lab.condition for lab in model.labels}
        assert conditions == {"modal"}

    def test_empty_filter_names_predicate(self, small_corpus, config_path, tmp_path):
        with pytest.raises(ConfigError, match="nosuch"):
            pipeline.cmd_fit(small_corpus, config_path, tmp_path / "m.json", groups=("nosuch",))

    def test_single_utterance_rejected(self, small_corpus, config_path, tmp_path):
        src = pipeline.load_manifest(small_corpus)
        r = src.filter(conditions=("modal",))[0]
        p = tmp_path / "one.csv"
        with open(p, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=synth.MANIFEST_FIELDS)
            writer.writeheader()
            writer.writerow(
                {
                    "utterance_id": r.utterance_id,
                    "path": str(src.resolve(r)),
                    "speaker_id": r.speaker_id,
                    "group": r.group,
                    "condition": r.condition,
                    "session": r.session,
                }
            )
        with pytest.raises(ConfigError, match="at least 2"):
            pipeline.cmd_fit(p, config_path, tmp_path / "m.json")

    def test_unconfigured_group_rejected(self, small_corpus, tmp_path):
        cfg = write_config(
            tmp_path / "c.json", pitch={"low": {"floor": 65.0, "ceiling": 380.0}}
        )
        with pytest.raises(ConfigError, match="pitch range"):
            pipeline.cmd_fit(small_corpus, cfg, tmp_path / "m.json")


# ---------------------------------------------------------------- anonymize


class TestAnonymize:
    def test_outputs_and_log(self, small_corpus, anon_dir):
        m = pipeline.load_manifest(small_corpus)
        modal = m.filter(conditions=("modal",))
        wavs = sorted(anon_dir.glob("*.anon.wav"))
        assert len(wavs) == len(modal) == 24
        with open(anon_dir / "anon_log.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0].keys()) == pipeline.LOG_FIELDS
        assert len(rows) == 24
        assert all(r["status"] == "ok" for r in rows)
        for r in rows:
            assert (anon_dir / r["output"]).exists()
            assert 65.0 <= float(r["original_median_f0"]) <= 520.0
            assert 65.0 <= float(r["target_median_f0"]) <= 520.0

    def test_inputs_untouched(self, small_corpus, anon_dir, tmp_path):
        # the corpus generator is byte-deterministic, so a fresh copy is an oracle
        fresh = tmp_path / "fresh"
        synth.generate_corpus(fresh, seed=20240311, n_per_group=3, n_modal=2, n_disguised=1)
        root = Path(small_corpus).parent
        for p in sorted(root.rglob("*.wav")):
            twin = fresh / p.relative_to(root)
            assert hashlib.sha256(p.read_bytes()).digest() == hashlib.sha256(twin.read_bytes()).digest()

    def test_missing_model_is_startup_error(self, small_corpus, config_path, tmp_path):
        out = tmp_path / "anon"
        with pytest.raises(ConfigError, match="requires a model"):
            pipeline.cmd_anonymize(small_corpus, config_path, None, out)
        with pytest.raises(ConfigError, match="not found"):
            pipeline.cmd_anonymize(small_corpus, config_path, tmp_path / "ghost.json", out)
        assert not out.exists()  # fails before creating any output

    def test_constant_zero_shift_is_transparent(self, small_corpus, tmp_path):
        cfg = write_config(
            tmp_path / "c.json",
            strategy={"kind": "constant_shift", "shift_percent": 0.0},
        )
        out = tmp_path / "anon"
        failures = pipeline.cmd_anonymize(
            small_corpus, cfg, None, out, groups=("low",), sessions=("1",)
        )
        assert failures == 0
        m = pipeline.load_manifest(small_corpus)
        rows = m.filter(groups=("low",), conditions=("modal",), sessions=("1",))
        assert len(rows) == 6
        for r in rows:
            orig = read_wav(m.resolve(r))
            anon = read_wav(out / f"{r.utterance_id}.anon.wav")
            assert anon.samples.size == orig.samples.size
            assert stoi(orig, anon) >= 0.95

    def test_per_utterance_failure_isolation(self, small_corpus, tmp_path):
        src = pipeline.load_manifest(small_corpus)
        good = src.filter(conditions=("modal",))[0]
        bad_wav = tmp_path / "bad.wav"
        bad_wav.write_bytes(b"this is not audio")
        p = tmp_path / "mixed.csv"
        with open(p, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=synth.MANIFEST_FIELDS)
            writer.writeheader()
            writer.writerow(
                {
                    "utterance_id": good.utterance_id,
                    "path": str(src.resolve(good)),
                    "speaker_id": good.speaker_id,
                    "group": good.group,
                    "condition": "modal",
                    "session": "1",
                }
            )
            writer.writerow(
                {
                    "utterance_id": "broken",
                    "path": str(bad_wav),
                    "speaker_id": "s9",
                    "group": "low",
                    "condition": "modal",
                    "session": "1",
                }
            )
        cfg = write_config(
            tmp_path / "c.json", strategy={"kind": "constant_shift", "shift_percent": 5.0}
        )
        out = tmp_path / "anon"
        failures = pipeline.cmd_anonymize(p, cfg, None, out)
        assert failures == 1
        with open(out / "anon_log.csv", newline="") as fh:
            rows = {r["utterance_id"]: r for r in csv.DictReader(fh)}
        assert rows[good.utterance_id]["status"] == "ok"
        assert rows["broken"]["status"] == "failed"
        assert rows["broken"]["message"]
        assert (out / f"{good.utterance_id}.anon.wav").exists()


# ---------------------------------------------------------------- evaluate


class TestEvaluate:
    def test_baseline_originals_score_perfect_stoi(self, small_corpus, config_path, tmp_path):
        root = Path(small_corpus).parent
        report = pipeline.cmd_evaluate(
            small_corpus, config_path, root / "wav", root / "trials.csv", tmp_path, workers=2
        )
        assert report.corpus_id == "manifest.csv"
        assert [r.label for r in report.rows] == ["test", "test/high", "test/low"]
        overall = report.rows[0]
        # test audio identical to the reference: intelligibility is perfect
        assert overall.stoi_mean == pytest.approx(1.0, abs=1e-6)
        assert overall.stoi_min == pytest.approx(1.0, abs=1e-6)
        assert 0.0 <= overall.eer_percent <= 50.0
        with open(tmp_path / "scores.csv", newline="") as fh:
            scores = list(csv.DictReader(fh))
        # 12 session-2 modal utterances x 3 within-group enrollments
        assert len(scores) == 36
        assert all(-1.0 <= float(s["score"]) <= 1.0 for s in scores)
        assert (tmp_path / "report.json").exists()
        assert (tmp_path / "report.txt").exists()

    def test_anonymized_audio_degrades_stoi(self, small_corpus, config_path, anon_dir, tmp_path):
        root = Path(small_corpus).parent
        report = pipeline.cmd_evaluate(
            small_corpus, config_path, anon_dir, root / "trials.csv", tmp_path, workers=2
        )
        overall = report.rows[0]
        assert overall.stoi_mean < 0.999
        assert overall.stoi_mean > 0.2
        assert np.isfinite(overall.eer_percent)
        assert 0.0 <= overall.eer_percent <= 50.0
        assert overall.n_genuine == 12
        assert overall.n_impostor == 24

    def test_missing_trial_file(self, small_corpus, config_path, tmp_path):
        root = Path(small_corpus).parent
        with pytest.raises(ConfigError, match="trial file not found"):
            pipeline.cmd_evaluate(small_corpus, config_path, root / "wav", root / "ghost.csv", tmp_path)

    def test_empty_trial_file(self, small_corpus, config_path, tmp_path):
        t = tmp_path / "t.csv"
        t.write_text(",".join(synth.TRIAL_FIELDS) + "\n")
        root = Path(small_corpus).parent
        with pytest.raises(ConfigError, match="no trials"):
            pipeline.cmd_evaluate(small_corpus, config_path, root / "wav", t, tmp_path)

    def test_unknown_utterance_in_trials(self, small_corpus, config_path, tmp_path):
        t = tmp_path / "t.csv"
        t.write_text(",".join(synth.TRIAL_FIELDS) + "\nlow00,ghost_utt,genuine\n")
        root = Path(small_corpus).parent
        with pytest.raises(ConfigError, match="unknown utterances"):
            pipeline.cmd_evaluate(small_corpus, config_path, root / "wav", t, tmp_path)

    def test_bad_label_rejected(self, small_corpus, config_path, tmp_path):
        t = tmp_path / "t.csv"
        t.write_text(",".join(synth.TRIAL_FIELDS) + "\nlow00,x,maybe\n")
        root = Path(small_corpus).parent
        with pytest.raises(ConfigError, match="bad trial label"):
            pipeline.cmd_evaluate(small_corpus, config_path, root / "wav", t, tmp_path)

    def test_missing_test_audio(self, small_corpus, config_path, tmp_path):
        root = Path(small_corpus).parent
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(ConfigError, match="no test audio"):
            pipeline.cmd_evaluate(small_corpus, config_path, empty, root / "trials.csv", tmp_path / "o")


# ---------------------------------------------------------------- exports


class TestExportCurves:
    def test_curve_geometry_matches_model(self, fitted_model, tmp_path):
        curves_path, scatter_path = pipeline.cmd_export_curves(fitted_model, 1, 50, tmp_path)
        with open(curves_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 50
        t = np.array([float(r["t"]) for r in rows])
        mean = np.array([float(r["mean"]) for r in rows])
        plus = np.array([float(r["plus"]) for r in rows])
        minus = np.array([float(r["minus"]) for r in rows])
        assert t[0] == 0.0 and t[-1] == 1.0
        np.testing.assert_allclose(plus + minus, 2.0 * mean, atol=2e-8)

        model = fda.load_model(fitted_model)
        sd = float(np.std(model.training_scores[:, 0]))
        pc = model.components[0](np.linspace(0.0, 1.0, 50))
        np.testing.assert_allclose(plus, mean + sd * pc, atol=1e-6)

    def test_scatter_rows_cover_training_set(self, fitted_model, tmp_path):
        _, scatter_path = pipeline.cmd_export_curves(fitted_model, 1, 10, tmp_path)
        model = fda.load_model(fitted_model)
        with open(scatter_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == model.training_scores.shape[0]
        for r in rows:
            group, condition, speaker = r["label"].split(":")
            assert group in ("low", "high")
            assert condition == "modal"
        s1 = np.array([float(r["s1"]) for r in rows])
        np.testing.assert_allclose(np.sort(s1), np.sort(model.training_scores[:, 0]), atol=1e-6)

    def test_invalid_requests(self, fitted_model, tmp_path):
        with pytest.raises(ConfigError, match="component index"):
            pipeline.cmd_export_curves(fitted_model, 0, 50, tmp_path)
        with pytest.raises(ConfigError, match="component index"):
            pipeline.cmd_export_curves(fitted_model, 9999, 50, tmp_path)
        with pytest.raises(ConfigError, match="n_points"):
            pipeline.cmd_export_curves(fitted_model, 1, 1, tmp_path)


# ---------------------------------------------------------------- CLI


class TestCli:
    def test_missing_global_flag_exits_2(self):
        runner = CliRunner()
        result = runner.invoke(cli.main, ["fit"])
        assert result.exit_code == 2

    def test_bad_config_exits_2(self, small_corpus, tmp_path):
        bad = write_config(tmp_path / "c.json", version=99)
        runner = CliRunner()
        result = runner.invoke(
            cli.main,
            ["--config", str(bad), "--manifest", str(small_corpus), "--out", str(tmp_path / "m.json"), "fit"],
        )
        assert result.exit_code == 2

    def test_corpus_fit_export_round_trip(self, tmp_path):
        runner = CliRunner()
        corp = tmp_path / "corp"
        result = runner.invoke(
            cli.main,
            ["--out", str(corp), "--seed", "7", "make-synth-corpus",
             "--n-per-group", "1", "--n-modal", "1", "--n-disguised", "1"],
        )
        assert result.exit_code == 0, result.output

        cfg = write_config(tmp_path / "c.json")
        model = tmp_path / "model.json"
        result = runner.invoke(
            cli.main,
            ["--config", str(cfg), "--manifest", str(corp / "manifest.csv"),
             "--out", str(model), "fit"],
        )
        assert result.exit_code == 0, result.output
        assert model.exists()

        result = runner.invoke(
            cli.main,
            ["--out", str(tmp_path / "exp"), "export-curves", "--model", str(model)],
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "exp" / "component_1_curves.csv").exists()

    def test_anonymize_failures_exit_1(self, small_corpus, tmp_path):
        src = pipeline.load_manifest(small_corpus)
        bad_wav = tmp_path / "bad.wav"
        bad_wav.write_bytes(b"junk")
        p = tmp_path / "m.csv"
        with open(p, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=synth.MANIFEST_FIELDS)
            writer.writeheader()
            writer.writerow(
                {
                    "utterance_id": "broken",
                    "path": str(bad_wav),
                    "speaker_id": "s9",
                    "group": "low",
                    "condition": "modal",
                    "session": "1",
                }
            )
        cfg = write_config(tmp_path / "c.json", strategy={"kind": "constant_shift", "shift_percent": 0.0})
        runner = CliRunner()
        result = runner.invoke(
            cli.main,
            ["--config", str(cfg), "--manifest", str(p), "--out", str(tmp_path / "anon"), "anonymize"],
        )
        assert result.exit_code == 1
