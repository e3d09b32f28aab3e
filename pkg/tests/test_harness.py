import numpy as np
import pytest

from ctse.config import (
    paper_preset,
    resolve_config,
    toy_preset,
    validate_config,
)
from ctse.errors import ParameterError
from ctse.evaluate import aggregate_rows, evaluate_manifest, full_active_track
from ctse.fusion import FusionConfig, IdentityExtractor
from ctse.report import (
    ABLATION_FIELDS,
    REFERENCE_FULL_SCALE,
    REFERENCE_LABEL,
    csv_to_rows,
    render_ablation_markdown,
    render_overlap_sweep_csv,
    render_scores_markdown,
    rows_to_csv,
)
from ctse.simulate import MixSpec, simulate

from helpers import OracleActivity, OracleStemExtractor, StubActivity


class TestConfigs:
    def test_presets_validate(self):
        validate_config(toy_preset())
        cfg = paper_preset()
        assert cfg["version"] == 1
        assert cfg["atsvad"]["train"]["lr"] == 1e-4

    def test_unknown_preset_rejected(self):
        with pytest.raises(ParameterError):
            resolve_config("huge", None)

    def test_missing_section_rejected(self):
        cfg = toy_preset()
        del cfg["metrics" if "metrics" in cfg else "fusion"]
        with pytest.raises(ParameterError):
            validate_config(cfg)

    def test_bad_version_rejected(self):
        cfg = toy_preset()
        cfg["version"] = 99
        with pytest.raises(ParameterError):
            validate_config(cfg)

    def test_config_file_round_trip(self, tmp_path):
        import json

        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(toy_preset()))
        cfg = resolve_config(None, str(path))
        assert cfg["preset"] == "toy"


class TestEvaluateManifest:
    @pytest.fixture(scope="class")
    def manifest(self, toy_corpus_small):
        return simulate(toy_corpus_small, MixSpec(2, 0.1, (0.1, 0.5), 10.0, seed=23))

    def test_oracle_rows_all_modes(self, manifest):
        # oracle models: every fusion row is perfect, baselines behave as
        # documented (tsvad_only passes the mixture through on active spans)
        class Enc:
            def encode(self, x):
                from ctse.encoder import SpeakerEmbedding

                return SpeakerEmbedding(np.ones(256) / 16.0, x.duration_s)

        rows = evaluate_manifest(
            manifest,
            Enc(),
            OracleStemExtractor(manifest),
            OracleActivity(manifest),
            FusionConfig(),
            ["tsvad_only", "pbsrnn_only", "cascade1", "cascade2", "parallel"],
            config_name="t",
            recording_id="r0",
        )
        by_mode = {r["mode"]: r for r in rows}
        assert set(by_mode) == {"tsvad_only", "pbsrnn_only", "cascade1", "cascade2", "parallel"}
        for mode in ("cascade1", "cascade2", "parallel"):
            assert by_mode[mode]["der"] <= 1e-9
            assert by_mode[mode]["si_snr_db"] == pytest.approx(60.0)
        # timestamps-only keeps ground-truth activity but the raw mixture audio
        assert by_mode["tsvad_only"]["der"] <= 1e-9
        assert by_mode["tsvad_only"]["si_snr_db"] < 60.0
        # extraction-only claims the whole recording: FA-dominated DER
        assert by_mode["pbsrnn_only"]["der"] > 0.5

    def test_full_active_track_geometry(self):
        track = full_active_track(16.0, 0.25, 1.5)
        assert len(track) == 64
        assert np.all(track.values == 1.0)


class TestAggregation:
    def test_aggregate_means_and_none_handling(self):
        rows = [
            {"config": "0S", "mode": "cascade1", "der": 0.2, "jer": 0.1,
             "int_db": 10.0, "si_snr_db": None},
            {"config": "0S", "mode": "cascade1", "der": 0.4, "jer": 0.3,
             "int_db": None, "si_snr_db": 5.0},
        ]
        agg = aggregate_rows(rows)
        assert len(agg) == 1
        assert agg[0]["n"] == 2
        assert agg[0]["der"] == pytest.approx(0.3)
        assert agg[0]["int_db"] == pytest.approx(10.0)
        assert agg[0]["si_snr_db"] == pytest.approx(5.0)


class TestReport:
    def _rows(self):
        return [
            {"config": "0S", "mode": "cascade1", "n": 2, "der": 0.31,
             "jer": 0.21, "int_db": 12.5, "si_snr_db": 3.2},
            {"config": "0S", "mode": "pbsrnn_only", "n": 2, "der": 0.9,
             "jer": 0.4, "int_db": 8.0, "si_snr_db": 4.0},
        ]

    def test_csv_round_trip(self):
        text = rows_to_csv(self._rows())
        back = csv_to_rows(text)
        assert back[0]["mode"] == "cascade1"
        assert back[0]["der"] == pytest.approx(0.31)

    def test_markdown_includes_reference_block(self):
        md = render_scores_markdown(self._rows())
        assert REFERENCE_LABEL in md
        assert "26.5" in md  # cascade1 full-scale DER reference
        assert "| cascade1 | 31.0 |" in md

    def test_reference_values_cover_all_modes(self):
        for mode in ("tsvad_only", "pbsrnn_only", "cascade1", "cascade2", "parallel"):
            assert mode in REFERENCE_FULL_SCALE

    def test_overlap_sweep_orders_configs(self):
        rows = [
            {"config": c, "mode": "cascade1", "der": 0.1, "si_snr_db": 1.0}
            for c in ("OV40", "0S", "OV10")
        ]
        text = render_overlap_sweep_csv(rows)
        lines = text.strip().splitlines()
        assert [l.split(",")[0] for l in lines[1:]] == ["0S", "OV10", "OV40"]

    def test_ablation_markdown_schema(self):
        rows = [
            {"win_s": 0.75, "arch": "transformer", "der": 0.8, "jer": 0.7, "int_db": 9.0},
            {"win_s": 1.5, "arch": "transformer", "der": 0.5, "jer": 0.4, "int_db": 11.0},
            {"win_s": 3.0, "arch": "transformer", "der": 0.6, "jer": 0.6, "int_db": 10.0},
        ]
        md = render_ablation_markdown(rows)
        assert "| Win | Arch | DER% (down) | JER% (down) | INT dB (up) |" in md
        assert "| 0.75s | transformer |" in md
        assert ABLATION_FIELDS == ["win_s", "arch", "der", "jer", "int_db"]
