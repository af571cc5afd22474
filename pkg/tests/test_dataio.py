import json
import warnings

import numpy as np
import pytest

from isingnet import dataio
from isingnet.core import IsingModel, SampleBatch, random_model
from isingnet.dataio import (
    ExpressionMatrix,
    ParseError,
    RunConfig,
    binarize,
    load_batch,
    load_model,
    load_run_config,
    read_expression_csv,
    save_batch,
    save_model,
)


class TestBinarize:
    def test_hand_case(self):
        # q=0.25 on [1,2,3,4]: threshold 1.75 -> [0,1,1,1]
        m = ExpressionMatrix(values=np.array([[1.0], [2.0], [3.0], [4.0]]),
                             columns=["g"])
        batch = binarize(m, q=0.25)
        assert batch.samples[:, 0].tolist() == [0, 1, 1, 1]

    def test_per_column_thresholds(self):
        vals = np.array([[1.0, 100.0], [2.0, 200.0], [3.0, 300.0], [4.0, 400.0]])
        m = ExpressionMatrix(values=vals, columns=["a", "b"])
        batch = binarize(m, q=0.25)
        assert np.array_equal(batch.samples[:, 0], batch.samples[:, 1])

    def test_threshold_monotone_in_q(self):
        rng = np.random.default_rng(0)
        m = ExpressionMatrix(values=rng.normal(size=(50, 4)),
                             columns=list("abcd"))
        ones = [binarize(m, q=q).samples.sum() for q in (0.1, 0.5, 0.9)]
        assert ones[0] > ones[1] > ones[2]

    def test_tie_at_threshold_maps_to_one(self):
        vals = np.array([[1.0], [1.0], [1.0], [2.0]])
        m = ExpressionMatrix(values=vals, columns=["g"])
        batch = binarize(m, q=0.25)
        # threshold = 1.0; values equal to it go to 1
        assert batch.samples[:, 0].tolist() == [1, 1, 1, 1]

    def test_constant_column_warns_all_ones(self):
        vals = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]])
        m = ExpressionMatrix(values=vals, columns=["flat", "g"])
        with pytest.warns(UserWarning, match="flat"):
            batch = binarize(m, q=0.5)
        assert np.all(batch.samples[:, 0] == 1)

    def test_bad_q(self):
        m = ExpressionMatrix(values=np.zeros((3, 1)), columns=["g"])
        with pytest.raises(ValueError):
            binarize(m, q=0.0)

    def test_deterministic_batch_id(self):
        rng = np.random.default_rng(1)
        m = ExpressionMatrix(values=rng.normal(size=(20, 3)),
                             columns=list("abc"))
        a, b = binarize(m), binarize(m)
        assert a.batch_id == b.batch_id
        assert a.batch_id.startswith("binarized:")


class TestExpressionCsv:
    def test_with_row_ids(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("gene,s1,s2\ng1,1.5,2.5\ng2,0.5,3.5\n")
        m = read_expression_csv(str(path))
        assert m.columns == ["s1", "s2"]
        assert np.allclose(m.values, [[1.5, 2.5], [0.5, 3.5]])

    def test_without_row_ids(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b\n1,2\n3,4\n")
        m = read_expression_csv(str(path))
        assert m.columns == ["a", "b"]
        assert np.allclose(m.values, [[1, 2], [3, 4]])

    def test_ragged_row_reported_with_line(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b\n1,2\n3\n")
        with pytest.raises(ParseError, match=":3:"):
            read_expression_csv(str(path))

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b\n1,2\n3,oops\n")
        with pytest.raises(ParseError, match=":3:"):
            read_expression_csv(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("")
        with pytest.raises(ParseError):
            read_expression_csv(str(path))


class TestModelFiles:
    def test_round_trip(self, tmp_path):
        m = random_model(6, 0.3, 1.0, 1.0, 2.5, seed=0)
        path = str(tmp_path / "m.json")
        save_model(m, path)
        back = load_model(path)
        assert back.n == m.n
        assert back.beta == m.beta
        assert np.array_equal(back.h, m.h)
        assert np.array_equal(back.u, m.u)
        assert back.meta == m.meta

    def test_version_checked(self, tmp_path):
        m = random_model(3, 0.5, 1.0, 1.0, 1.0, seed=0)
        path = str(tmp_path / "m.json")
        save_model(m, path)
        doc = json.loads(open(path).read())
        doc["version"] = 42
        with open(path, "w") as fh:
            json.dump(doc, fh)
        with pytest.raises(ParseError, match="version"):
            load_model(path)

    def test_wrong_u_upper_length(self, tmp_path):
        path = str(tmp_path / "m.json")
        doc = {"version": 1, "n": 3, "beta": 1.0, "h": [0, 0, 0],
               "u_upper": [1.0, 2.0], "meta": {}}
        with open(path, "w") as fh:
            json.dump(doc, fh)
        with pytest.raises(ParseError, match="u_upper"):
            load_model(path)

    def test_invalid_json_reported(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{ not json")
        with pytest.raises(ParseError, match="JSON"):
            load_model(str(path))

    def test_missing_field(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"version": 1, "n": 2, "beta": 1.0, "h": [0, 0]}))
        with pytest.raises(ParseError, match="u_upper"):
            load_model(str(path))


class TestBatchFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        batch = SampleBatch(samples=rng.integers(0, 2, size=(30, 7)))
        path = str(tmp_path / "s.txt")
        save_batch(batch, path)
        back = load_batch(path)
        assert np.array_equal(back.samples, batch.samples)
        assert back.batch_id.startswith("file:")

    def test_non_binary_character(self, tmp_path):
        path = tmp_path / "s.txt"
        path.write_text("0101\n01x1\n")
        with pytest.raises(ParseError, match=":2:"):
            load_batch(str(path))

    def test_ragged_lines(self, tmp_path):
        path = tmp_path / "s.txt"
        path.write_text("0101\n011\n")
        with pytest.raises(ParseError, match=":2:"):
            load_batch(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "s.txt"
        path.write_text("\n\n")
        with pytest.raises(ParseError, match="no samples"):
            load_batch(str(path))


class TestRunConfig:
    def test_defaults(self):
        config = RunConfig()
        assert config.seed == 0
        mc = config.mc_config()
        assert mc.seed == 0
        tc = config.train_config()
        assert tc.seed == 0

    def test_round_trip(self, tmp_path):
        doc = {"seed": 7,
               "ensemble": {"sizes": [4], "betas": [1.0], "sparsities": [0.5],
                            "models_per_cell": 2, "samples_per_model": 10},
               "mc": {"burn_in_sweeps": 25},
               "train": {"max_epochs": 2},
               "eval": {"num_strings": 100}}
        path = tmp_path / "config.json"
        path.write_text(json.dumps(doc))
        config = load_run_config(str(path))
        assert config.seed == 7
        spec = config.ensemble_spec()
        assert spec.sizes == [4]
        assert spec.mc.burn_in_sweeps == 25
        assert config.train_config().max_epochs == 2

    def test_unknown_top_level_key(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"seed": 0, "bogus": 1}))
        with pytest.raises(ParseError, match="bogus"):
            load_run_config(str(path))

    def test_unknown_section_key(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"mc": {"burn_in_sweps": 10}}))
        with pytest.raises(ParseError, match="burn_in_sweps"):
            load_run_config(str(path))

    def test_ensemble_required_for_spec(self):
        with pytest.raises(ValueError, match="ensemble"):
            RunConfig().ensemble_spec()
