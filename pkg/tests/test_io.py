import json

import numpy as np
import pytest

from gmmssl.fit import FitConfig, fit
from gmmssl.io import (
    DataError,
    ModelFile,
    RunConfig,
    atomic_write_text,
    format_dataset,
    load_model,
    load_run_config,
    parse_dataset,
    read_dataset,
    save_model,
)
from gmmssl.missingness import MissingnessParams
from gmmssl.model import GmmParams

from conftest import random_params, reference_sample


def test_parse_labels_and_truth():
    text = "f1,f2,truth,label\n1.5,2,1,1\n-3,4e-2,2,NA\n0,0,2,\n"
    d = parse_dataset(text)
    np.testing.assert_array_equal(d.y, [[1.5, 2.0], [-3.0, 0.04], [0.0, 0.0]])
    np.testing.assert_array_equal(d.label, [1, 0, 0])
    np.testing.assert_array_equal(d.truth, [1, 2, 2])
    assert d.feature_names == ("f1", "f2")


def test_feature_columns_ordered_by_index_and_named():
    d = parse_dataset("label,f2,f10,f1\n1,2,10,1\n")
    np.testing.assert_array_equal(d.y, [[1.0, 2.0, 10.0]])
    d = parse_dataset("height,weight,label\n1,2,1\n", feature_names=["weight"])
    np.testing.assert_array_equal(d.y, [[2.0]])
    d = parse_dataset("height,weight\n1,2\n")
    assert d.label is None and d.y.shape == (1, 2)


@pytest.mark.parametrize(
    "text,message",
    [
        ("f1,f2,label\n1,2,1\n3,4\n", "row 3: expected 3 fields, found 2"),
        ("f1,f2,label\n1,2,1\n3,abc,1\n", "row 3: feature 'f2' value 'abc' is not numeric"),
        ("f1,label\n1,1\n2,1\ninf,2\n", "row 4: feature 'f1' is not finite"),
        ("f1,label\n1,1.5\n", "row 2: 'label' value '1.5' is not a positive integer"),
        ("f1,label\n1,0\n", "row 2: 'label' value '0' is not a positive integer"),
        ("f1,truth\n1,NA\n", "row 2: missing value in 'truth'"),
        ("f1,f1\n1,2\n", "duplicate column"),
        ("", "empty file"),
        ("f1,label\n", "no data rows"),
    ],
)
def test_rejections_name_the_row(text, message):
    with pytest.raises(DataError, match=message.replace("(", r"\(").replace(")", r"\)")):
        parse_dataset(text)


def test_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    y = rng.normal(size=(20, 3)) * 10.0 ** rng.integers(-5, 5, size=(20, 3))
    truth = rng.integers(1, 4, 20)
    label = np.where(rng.random(20) < 0.4, 0, truth)
    path = tmp_path / "d.csv"
    path.write_text(format_dataset(y, label, truth))
    d = read_dataset(path)
    np.testing.assert_array_equal(d.y, y)
    np.testing.assert_array_equal(d.label, label)
    np.testing.assert_array_equal(d.truth, truth)
    assert "NA" in path.read_text()


def test_model_round_trip_exact(tmp_path, rng):
    for k in range(20):
        theta = random_params(rng, ncov=1 + k % 2)
        xi = MissingnessParams(rng.normal(), rng.normal(), "raw" if k % 3 == 0 else "log")
        mf = ModelFile("full", theta, xi, objective=float(rng.normal() * 1e3), converged=bool(k % 2), iterations=k)
        path = tmp_path / f"m{k}.json"
        save_model(path, mf)
        back = load_model(path)
        assert back.same_as(mf)
        for a, b in ((back.theta.pi, theta.pi), (back.theta.mu, theta.mu), (back.theta.sigma, theta.sigma)):
            assert np.array_equal(a, b)
        assert back.xi == xi
        save_model(tmp_path / "again.json", back)
        assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_model_from_fit_report(tmp_path):
    s, _ = reference_sample(0)
    r = fit(s, FitConfig("full"), g=4)
    save_model(tmp_path / "m.json", r)
    d = json.loads((tmp_path / "m.json").read_text())
    assert set(d) == {
        "format_version", "fit_type", "ncov", "g", "p", "pi", "mu", "sigma", "xi",
        "objective", "converged", "iterations",
    }
    back = load_model(tmp_path / "m.json")
    assert back.objective == r.objective and back.iterations == r.iterations
    assert np.array_equal(back.theta.sigma, r.theta.sigma)


def _model_dict():
    theta = GmmParams([0.5, 0.5], [[0.0], [1.0]], [[1.0]])
    return ModelFile("ign", theta).to_dict()


@pytest.mark.parametrize(
    "mutate,message",
    [
        (lambda d: d.pop("mu"), "lacks fields: mu"),
        (lambda d: d.update(extra=1), "unknown fields: extra"),
        (lambda d: d.update(format_version=9), "format_version"),
        (lambda d: d.update(ncov=2), "sigma has shape"),
        (lambda d: d.update(pi=[0.5, 0.6]), "invalid model parameters"),
        (lambda d: d.update(xi={"xi0": 1.0}), "invalid xi block"),
    ],
)
def test_model_validation(tmp_path, mutate, message):
    d = _model_dict()
    mutate(d)
    path = tmp_path / "m.json"
    path.write_text(json.dumps(d))
    with pytest.raises(DataError, match=message):
        load_model(path)


def test_invalid_json_is_data_error(tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{not json")
    with pytest.raises(DataError):
        load_model(path)
    with pytest.raises(DataError):
        load_model(tmp_path / "absent.json")


def test_run_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"fit-type": "ign", "ncov": 1, "iter_max": 50, "g": 3, "threads": 2}))
    rc = load_run_config(path)
    assert rc.fit == FitConfig("ign", ncov=1, iter_max=50)
    assert rc.g == 3 and rc.threads == 2
    merged = rc.merged(ncov=2, seed=None, out_model="x.json")
    assert merged.fit.ncov == 2 and merged.fit.iter_max == 50 and merged.out_model == "x.json"


@pytest.mark.parametrize(
    "cfg",
    [{"bogus": 1}, {"ncov": 3}, {"rel_tol": 2.0}, {"g": 1}, {"threads": 0}, {"entropy_covariate": "sqrt"}],
)
def test_run_config_rejects(cfg):
    with pytest.raises(ValueError):
        RunConfig.from_mapping(cfg)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write_text(target, "one")
    atomic_write_text(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
