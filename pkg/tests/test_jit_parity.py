"""The pure-numpy fallback and the compiled kernels give the same answers."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

SCRIPT = r"""
import json
import numpy as np
from apsest import _jit
from apsest.estimators import HaugazeauConfig, haugazeau_estimate, prox_g
from apsest.oracles import random_instance
from apsest.solvers import FeasibilityProblem, nnls, pocs_baseline

rng = np.random.default_rng(17)
b = rng.standard_normal((12, 9)); v = rng.standard_normal(12)
inst = random_instance(rng, num_points=8, num_antennas=3)
out = {
    "jit": _jit.JIT_ENABLED,
    "nnls": nnls(b, v).solution.tolist(),
    "prox": prox_g(inst.metric_m, inst.operator_a, inst.target_r, 2.0, inst.rho_hat).tolist(),
    "pocs": pocs_baseline(FeasibilityProblem(inst.operator_a, inst.target_r), max_iters=50).solution.tolist(),
    "haug": haugazeau_estimate(inst.metric_m, inst.operator_a, inst.target_r, inst.rho_hat,
                               HaugazeauConfig(5.0, 60))[0].tolist(),
}
print(json.dumps(out))
"""


def run(disable):
    env = {**os.environ, "APSEST_DISABLE_NUMBA": "1" if disable else "0"}
    proc = subprocess.run([sys.executable, "-c", SCRIPT], capture_output=True, text=True, env=env, check=True)
    return json.loads(proc.stdout)


@pytest.fixture(scope="module")
def both():
    return run(False), run(True)


def test_flag_selects_backend(both):
    compiled, plain = both
    assert plain["jit"] is False
    assert compiled["jit"] is True


@pytest.mark.parametrize("key, tol", [("nnls", 1e-11), ("prox", 1e-11), ("pocs", 1e-11),
                                      # summation order differs and 60 steps amplify it
                                      ("haug", 1e-7)])
def test_backends_agree(both, key, tol):
    compiled, plain = both
    np.testing.assert_allclose(compiled[key], plain[key], rtol=tol, atol=tol)
