import json
import math

import numpy as np
import pytest

from robustmdp import AmbiguitySpec, Contamination, L1Ball, Scenarios, Singleton, build_example1, build_garnet
from robustmdp import io as rio
from robustmdp.errors import ValidationError
from robustmdp.robust_eval import evaluate_robust
from robustmdp.solvers import CSV_COLUMNS, SolverConfig, rpmd_solve
from robustmdp.verify import random_bundle


def same_spec(a: AmbiguitySpec, b: AmbiguitySpec):
    assert np.array_equal(a.nominal, b.nominal)
    for name in ("kind", "param", "rows", "nrows"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


class TestBundleRoundTrip:
    @pytest.mark.parametrize("kind,param", [("contamination", 0.2), ("l1ball", 0.35),
                                            ("scenarios", 2), ("singleton", 0)])
    def test_garnet(self, tmp_path, kind, param):
        b = build_garnet(5, 3, 3, 0.9, kind, param, seed=3)
        path = tmp_path / "b.json"
        rio.save_bundle(b, path)
        back = rio.load_bundle(path)
        assert np.array_equal(back.mdp.cost, b.mdp.cost)
        assert np.array_equal(back.mdp.nominal, b.mdp.nominal)
        assert back.mdp.gamma == b.mdp.gamma
        same_spec(back.spec, b.spec)
        assert back.params == b.params and back.name == b.name
        assert rio.dumps(rio.bundle_to_dict(back)) == path.read_text()

    def test_mixed_pairs(self, rng):
        b = random_bundle(rng)
        back = rio.bundle_from_dict(json.loads(rio.dumps(rio.bundle_to_dict(b))))
        same_spec(back.spec, b.spec)
        assert "pairs" in rio.bundle_to_dict(b)["ambiguity"]

    def test_example1_uses_kernel_list(self):
        ex = build_example1(4, 0.1, 0.5)
        d = rio.bundle_to_dict(ex.nominal)
        assert d["ambiguity"]["kind"] == "scenarios" and len(d["ambiguity"]["kernels"]) == 2
        same_spec(rio.bundle_from_dict(d).spec, ex.nominal.spec)

    def test_pair_kinds(self):
        nom = np.full((2, 1, 2), 0.5)
        pairs = [[Contamination(0.3, np.array([[0.5, 0.5], [1.0, 0.0]]))], [L1Ball(0.1)]]
        spec = AmbiguitySpec(nom, pairs)
        back = rio.ambiguity_from_dict(json.loads(rio.dumps(rio.ambiguity_to_dict(spec))), nom)
        same_spec(back, spec)
        nom_s = AmbiguitySpec(nom, [[Scenarios(np.array([[0.5, 0.5], [0.0, 1.0]]))], [Singleton()]])
        same_spec(rio.ambiguity_from_dict(rio.ambiguity_to_dict(nom_s), nom), nom_s)

    def test_bad_blocks(self):
        nom = np.full((2, 1, 2), 0.5)
        with pytest.raises(ValidationError):
            rio.ambiguity_from_dict({"kind": "scenarios"}, nom)
        with pytest.raises(ValidationError):
            rio.ambiguity_from_dict({"kind": "box"}, nom)
        d = rio.bundle_to_dict(build_garnet(3, 2, 2, seed=0))
        d["n_states"] = 4
        with pytest.raises(ValidationError):
            rio.bundle_from_dict(d)

    def test_missing_ambiguity_means_singleton(self):
        d = rio.bundle_to_dict(build_garnet(3, 2, 2, seed=0))
        del d["ambiguity"]
        assert np.all(rio.bundle_from_dict(d).spec.kind == 0)


class TestOutputs:
    def test_dumps_handles_non_finite_and_numpy(self):
        text = rio.dumps({"a": np.float64(math.inf), "b": np.arange(3), "c": np.bool_(True), "d": math.nan})
        assert json.loads(text) == {"a": None, "b": [0, 1, 2], "c": True, "d": None}

    def test_evaluation_json(self, rng):
        b = random_bundle(rng)
        ev = evaluate_robust(b.mdp, b.spec, np.full((b.mdp.n_states, b.mdp.n_actions), 1 / b.mdp.n_actions))
        d = json.loads(rio.dumps(ev.to_dict()))
        assert np.array_equal(np.array(d["v_r"]), ev.v_r)
        assert np.array_equal(np.array(d["worst_kernel"]), ev.worst_kernel)

    def test_runlog_csv_and_json(self, tmp_path):
        b = build_garnet(4, 2, 2, seed=0)
        log = rpmd_solve(b.mdp, b.spec, SolverConfig(max_iters=5))
        csv_path, json_path = rio.write_runlog(log, tmp_path / "run")
        lines = open(csv_path).read().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert lines[0] == "k,eta,f_rho,gap,value_decrease_max,divergence_to_opt,rtd_error,wall_ms"
        assert len(lines) == len(log.records) + 1
        first = lines[1].split(",")
        assert float(first[2]) == log.records[0]["f_rho"]
        data = json.loads(open(json_path).read())
        assert np.array_equal(np.array(data["policy"]), log.policy)
        assert data["algo"] == "rpmd"

    def test_trace_csv(self):
        text = rio.trace_csv([1000, 2000], [0.5, 0.25])
        assert text == "step,error\n1000,0.5\n2000,0.25\n"

    def test_load_vector_forms(self, tmp_path):
        p = tmp_path / "v.json"
        p.write_text("[0.25, 0.75]")
        assert np.array_equal(rio.load_vector(p), [0.25, 0.75])
        p.write_text('{"weights": [1.0]}')
        assert np.array_equal(rio.load_vector(p), [1.0])
