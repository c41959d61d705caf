import os
import subprocess
import sys

import pytest

from codipas import accel

PROBE = "from codipas import accel; print(accel.backend(), accel.kernels().__name__)"


def run_probe(flag):
    env = dict(os.environ)
    env.pop("CODIPAS_DISABLE_NUMBA", None)
    if flag is not None:
        env["CODIPAS_DISABLE_NUMBA"] = flag
    out = subprocess.run([sys.executable, "-c", PROBE], env=env, capture_output=True, text=True, check=True)
    return out.stdout.split()


@pytest.mark.parametrize("flag", ["1", "true", "YES"])
def test_env_flag_selects_numpy(flag):
    assert run_probe(flag) == ["numpy", "codipas._kernels"]


@pytest.mark.skipif(not accel.numba_available(), reason="numba not installed")
@pytest.mark.parametrize("flag", [None, "0", ""])
def test_default_is_numba(flag):
    assert run_probe(flag) == ["numba", "codipas._kernels_jit"]


def test_plain_module_stays_python():
    from codipas import _kernels
    assert not hasattr(_kernels.rk4_integrate, "py_func")
    if accel.numba_available():
        assert hasattr(accel.get_kernels("numba").rk4_integrate, "py_func")
