import json

import numpy as np
import pytest

from tubempc.errors import ProblemFormatError
from tubempc.problem_io import (config_from_problem, eps_list_from_problem,
                                error_system_from_problem, load_problem,
                                plant_from_problem, sim_config_from_problem,
                                validate_problem)


@pytest.fixture()
def minimal_problem(scalar_problem):
    return json.loads(json.dumps(scalar_problem))  # deep copy


class TestValidation:
    def test_all_shipped_problems_validate(self, scalar_problem, di_problem):
        validate_problem(scalar_problem)
        validate_problem(di_problem)

    def test_missing_section_reported_with_path(self, minimal_problem):
        del minimal_problem["plant"]
        with pytest.raises(ProblemFormatError, match="plant"):
            validate_problem(minimal_problem)

    def test_unknown_key_rejected(self, minimal_problem):
        minimal_problem["extra"] = 1
        with pytest.raises(ProblemFormatError):
            validate_problem(minimal_problem)

    def test_ragged_matrix_rejected(self, minimal_problem):
        minimal_problem["plant"]["A"] = [[1.0], [2.0, 3.0]]
        with pytest.raises(ProblemFormatError):
            validate_problem(minimal_problem)

    def test_x0_and_x0_box_are_exclusive(self, minimal_problem):
        sim = minimal_problem["simulation"]
        sim["x0"] = [1.0]
        sim["x0_box"] = {"lower": [-1.0], "upper": [1.0]}
        with pytest.raises(ProblemFormatError):
            validate_problem(minimal_problem)

    def test_wrong_schema_tag(self, minimal_problem):
        minimal_problem["schema"] = "nope/0"
        with pytest.raises(ProblemFormatError):
            validate_problem(minimal_problem)


class TestLoading:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ProblemFormatError):
            load_problem(tmp_path / "missing.json")

    def test_invalid_json_reports_position(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text('{"schema": ')
        with pytest.raises(ProblemFormatError, match="line"):
            load_problem(p)

    def test_round_trip(self, tmp_path, scalar_problem):
        p = tmp_path / "ok.json"
        p.write_text(json.dumps(scalar_problem))
        data = load_problem(p)
        assert data["name"] == scalar_problem["name"]


class TestConversion:
    def test_plant_dimensions(self, scalar_problem):
        plant = plant_from_problem(scalar_problem)
        s = plant.sys
        assert (s.n, s.m, s.p, s.o) == (1, 1, 1, 1)
        assert plant.Z.dim == 1 and plant.U.dim == 1

    def test_config_carries_weights_and_horizon(self, scalar_problem):
        cfg = config_from_problem(scalar_problem)
        assert cfg.N == 8
        np.testing.assert_allclose(cfg.Q, [[1.0]])
        np.testing.assert_allclose(cfg.R, [[1.0]])

    def test_config_reads_explicit_gain(self, di_problem):
        cfg = config_from_problem(di_problem)
        assert cfg.K is not None and cfg.K.shape == (1, 2)

    def test_output_weight_lift(self, minimal_problem):
        w = minimal_problem["weights"]
        del w["Q"]
        w["Q_z"] = [[2.0]]
        validate_problem(minimal_problem)
        cfg = config_from_problem(minimal_problem)
        assert cfg.Q[0, 0] >= 2.0

    def test_sim_config_defaults(self, scalar_problem):
        cfg, runs = sim_config_from_problem(scalar_problem)
        assert cfg.steps == 30 and cfg.seed == 2024
        assert runs == 20

    def test_sim_config_overrides(self, scalar_problem):
        cfg, _ = sim_config_from_problem(scalar_problem, seed=7, steps=5)
        assert cfg.seed == 7 and cfg.steps == 5

    def test_error_system_block_present(self, scalar_problem):
        es = error_system_from_problem(scalar_problem)
        assert es is not None
        np.testing.assert_allclose(es.A, [[0.5]])

    def test_error_system_block_absent(self, di_problem):
        assert error_system_from_problem(di_problem) is None

    def test_eps_list(self, scalar_problem, di_problem):
        assert eps_list_from_problem(scalar_problem) == [0.1]
        assert eps_list_from_problem(di_problem) == [0.01, 0.1, 0.5]
