"""
Unit tests for model and observable files.
"""

import json
import math
from pathlib import Path

import pytest

from engine.errors import ModelFileError
from services.model_loader import canonical_sha256, load_model, load_observable, parse_word


SAMPLES = Path(__file__).resolve().parent.parent / "sample_models"

GOLDEN_DOC = {
    "name": "golden",
    "alphabet_size": 2,
    "transition": [[1, 1], [1, 0]],
    "functions": {
        "f": {"kind": "constant", "value": 0.0},
        "tau": {"kind": "first_symbol", "values": [1.0, 2.0]},
    },
}


class TestParseWord:
    """Tests for word keys."""

    def test_digits(self):
        assert parse_word("0110", 2) == (0, 1, 1, 0)

    def test_comma_separated(self):
        assert parse_word("0,11,3", 12) == (0, 11, 3)

    @pytest.mark.parametrize("text", ["", "012", "0a"])
    def test_rejects_bad_words(self, text):
        with pytest.raises(ValueError):
            parse_word(text, 2)


class TestLoadModel:
    """Tests for load_model."""

    def test_sample_model(self):
        model = load_model(SAMPLES / "full2_roof_sqrt2.json")
        assert model.name == "full2-roof-sqrt2"
        assert model.subshift.alphabet_size == 2
        assert model.theta.theta == 0.5
        tau = model.function("tau")
        assert tau((1,)) == pytest.approx(math.sqrt(2.0))
        # f = logp + tau
        assert model.function("f")((0,)) == pytest.approx(1.0 - math.log(2.0))
        assert len(model.sha256) == 64

    def test_every_sample_loads(self):
        for path in SAMPLES.glob("*.json"):
            model = load_model(path)
            assert "f" in model.functions
            assert "tau" in model.functions

    def test_table_function(self):
        model = load_model(SAMPLES / "full2_depth2.json")
        assert any(fn.depth == 2 for fn in model.functions.values())

    def test_hash_ignores_formatting(self, write_json, tmp_path):
        compact = write_json("a.json", GOLDEN_DOC)
        spaced = tmp_path / "b.json"
        spaced.write_text(json.dumps(GOLDEN_DOC, indent=8, sort_keys=True), encoding="utf-8")
        assert load_model(compact).sha256 == load_model(spaced).sha256
        assert load_model(compact).sha256 == canonical_sha256(GOLDEN_DOC)

    def test_missing_file_names_the_path(self, tmp_path):
        path = tmp_path / "absent.json"
        with pytest.raises(ModelFileError) as exc_info:
            load_model(path)
        assert exc_info.value.path == str(path)
        assert "not found" in str(exc_info.value)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{ not json", encoding="utf-8")
        with pytest.raises(ModelFileError, match="invalid JSON"):
            load_model(path)

    @pytest.mark.parametrize("change,message", [
        ({"transition": [[1, 2], [1, 0]]}, "0 or 1"),
        ({"transition": [[1, 1, 1], [1, 0, 1]]}, "matrix"),
        ({"theta": 1.5}, "theta"),
        ({"extra": True}, "extra"),
        ({"functions": {"tau": {"kind": "first_symbol", "values": [1.0]}}}, "first-symbol"),
        ({"functions": {"f": {"kind": "sum", "terms": [{"ref": "g"}]}}}, "unknown function"),
    ])
    def test_schema_violations(self, write_json, change, message):
        path = write_json("bad.json", {**GOLDEN_DOC, **change})
        with pytest.raises(ModelFileError, match=message):
            load_model(path)

    def test_non_primitive_transition(self, write_json):
        path = write_json("cycle.json", {**GOLDEN_DOC, "transition": [[0, 1], [1, 0]]})
        with pytest.raises(ModelFileError, match="positive power"):
            load_model(path)

    def test_reference_cycle(self, write_json):
        functions = {
            "f": {"kind": "sum", "terms": [{"ref": "g"}]},
            "g": {"kind": "sum", "terms": [{"ref": "f"}]},
        }
        path = write_json("loop.json", {**GOLDEN_DOC, "functions": functions})
        with pytest.raises(ModelFileError, match="cycle"):
            load_model(path)

    def test_table_words_must_match_depth(self, write_json):
        functions = {"f": {"kind": "table", "depth": 2, "values": {"0": 1.0}}}
        path = write_json("depth.json", {**GOLDEN_DOC, "functions": functions})
        with pytest.raises(ModelFileError, match="depth 2"):
            load_model(path)


class TestLoadObservable:
    """Tests for load_observable."""

    def setup_method(self):
        self.model = load_model(SAMPLES / "full2_roof_sqrt2.json")

    def test_sample_observables(self):
        indicator = load_observable(SAMPLES / "observables" / "first_symbol_zero.json", self.model)
        assert indicator.base((0,)) == 1.0
        assert indicator.profile.is_constant_one()
        saw = load_observable(SAMPLES / "observables" / "sawtooth.json", self.model)
        assert saw.profile.integral() == pytest.approx(0.0, abs=1e-12)

    def test_named_base(self, write_json):
        path = write_json("obs.json", {"base": "tau"})
        observable = load_observable(path, self.model)
        assert observable.base is self.model.function("tau")

    def test_unknown_name(self, write_json):
        path = write_json("obs.json", {"base": "missing"})
        with pytest.raises(ModelFileError, match="missing"):
            load_observable(path, self.model)

    def test_profile_shape(self, write_json):
        payload = {"base": "tau", "profile": {"breaks": [0.0, 0.5, 1.0], "coefficients": [[1.0]]}}
        path = write_json("obs.json", payload)
        with pytest.raises(ModelFileError, match="coefficient"):
            load_observable(path, self.model)
