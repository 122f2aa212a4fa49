import subprocess
import sys

import numpy as np
import pytest

from ehlod.cli import main
from ehlod.multiscale import load_basis

SMALL = """
eps_n = 32
fine_n = 256
coarse_n = 4, 8
p = 1
j = 1
tau_coarse = 2^-6
tau_ref = 2^-10
tau_list = 2^-1, 2^-2, 2^-3
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return str(path)


def test_spatial_writes_csv(cfg, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["spatial", "--config", cfg, "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "dim,H,h,eps,p,j,strategy,ell,tau,error_energy,eoc,flags"
    assert len(lines) == 3


def test_threads_and_seed_determinism(cfg, tmp_path):
    a, b, c = (tmp_path / f"{k}.csv" for k in "abc")
    main(["spatial", "--config", cfg, "--out", str(a), "--seed", "3"])
    main(["spatial", "--config", cfg, "--out", str(b), "--seed", "3", "--threads", "2"])
    main(["spatial", "--config", cfg, "--out", str(c), "--seed", "4"])
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_basis_file(cfg, tmp_path):
    out = tmp_path / "b.npz"
    assert main(["basis", "--config", cfg, "--out", str(out)]) == 0
    B, meta = load_basis(out)
    assert B.shape == (255, 2 * 2 * 4) and meta["strategy"] == "ideal" and meta["ell"] == "inf"


def test_solve_decay_temporal_localization(cfg, tmp_path, capsys):
    assert main(["solve", "--config", cfg]) == 0
    assert main(["temporal", "--config", cfg]) == 0
    extra = tmp_path / "loc.cfg"
    extra.write_text(SMALL + "coarse_n = 8\nell = 1, 2\nstrategies = naive, generalized\n")
    assert main(["localization", "--config", str(extra)]) == 0
    dec = tmp_path / "dec.cfg"
    dec.write_text(SMALL + "coarse_n = 8\nell_max = 3\n")
    assert main(["decay", "--config", str(dec)]) == 0
    out = capsys.readouterr()
    assert "ell,relative_exterior_energy" in out.out
    assert "plateau at ell=" in out.err


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("coarse_n = 3\nfine_n = 256\n")
    assert main(["spatial", "--config", str(bad)]) == 2
    assert "does not divide" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ehlod", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("basis", "solve", "spatial", "temporal", "decay", "localization"):
        assert cmd in res.stdout
