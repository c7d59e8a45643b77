from pathlib import Path

import pytest

from carleman.cli import ConfigError, main, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """\
alpha=0
epsilon=0.1
nx=100
t_end=1
bc.left.kind=constant
bc.left.a=1
bc.right.kind=constant
bc.right.a=1
init.kind=constant
init.u=1
init.v=1
"""

SMALL_SWEEP = """\
alpha=0
epsilons=0.2,0.1
nx=20
t_end=0.2
bc.left.kind=constant
bc.left.a=1
bc.right.kind=constant
bc.right.a=2
init.kind=constant
init.u=1
init.v=1
output.samples=20
"""


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, MINIMAL))
    assert cfg.alpha == 0.0 and cfg.epsilon == 0.1 and cfg.grid.nx == 100
    assert cfg.get("cfl", 1.0) == 1.0
    assert cfg.boundary().is_constant
    init = cfg.initial(cfg.grid)
    assert init.u_in.shape == (100,)
    assert cfg.newton().max_iter == 50


def test_alpha_out_of_range(tmp_path):
    with pytest.raises(ConfigError, match=r":1: alpha=2 violates alpha in \[-1, 1\]"):
        parse_config(_write(tmp_path, MINIMAL.replace("alpha=0", "alpha=2")))


def test_zero_minimum_sinusoid(tmp_path):
    text = MINIMAL.replace("bc.left.kind=constant", "bc.left.kind=sinusoid\nbc.left.b=1\nbc.left.omega=3")
    with pytest.raises(ConfigError, match="positivity"):
        parse_config(_write(tmp_path, text))


@pytest.mark.parametrize(
    "extra, match",
    [
        ("colour=blue\n", r":12: unknown key 'colour'"),
        ("cfl=fast\n", r":12: bad value for 'cfl'"),
        ("cfl=1/2\n", r":12: bad value for 'cfl'"),
        ("nx=3\n", r":12: duplicate key 'nx'"),
        ("output.stride=2.5\n", r":12: bad value for 'output.stride'"),
        ("just words\n", r":12: expected key=value"),
    ],
)
def test_config_errors_name_key_and_line(tmp_path, extra, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(_write(tmp_path, MINIMAL + extra))


def test_missing_required_key(tmp_path):
    text = MINIMAL.replace("nx=100\n", "")
    with pytest.raises(ConfigError, match="missing required key 'nx'"):
        parse_config(_write(tmp_path, text))


def test_comments_and_lists(tmp_path):
    text = "# header\n" + MINIMAL.replace("epsilon=0.1", "epsilons=0.2, 0.1  # ladder") + "ledger.betas=0,1\n"
    cfg = parse_config(_write(tmp_path, text))
    assert cfg.epsilons == (0.2, 0.1)
    assert cfg.get("ledger.betas") == (0.0, 1.0)


def test_init_file_relative_to_config(tmp_path):
    (tmp_path / "init.txt").write_text("".join("1 1\n" for _ in range(100)))
    text = MINIMAL.replace("init.kind=constant\ninit.u=1\ninit.v=1\n", "init.file=init.txt\n")
    cfg = parse_config(_write(tmp_path, text))
    assert cfg.initial(cfg.grid).rho0.sum() == 200.0


def test_kinetic_bad_config_exit_1(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL.replace("alpha=0", "alpha=2"))
    out = tmp_path / "run"
    assert main(["kinetic", "--config", str(cfg), "--out", str(out)]) == 1
    assert "alpha" in capsys.readouterr().err
    manifest = (out / "manifest.txt").read_text()
    assert "exit_status=1" in manifest


def test_kinetic_run_artifacts(tmp_path):
    cfg = _write(tmp_path, MINIMAL.replace("t_end=1", "t_end=0.05") + "ledger.betas=0,1\noutput.stride=10\n")
    out = tmp_path / "run"
    assert main(["kinetic", "--config", str(cfg), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names[0] == "fields_00000000.csv"
    assert "ledger_beta_+0.00.csv" in names and "ledger_beta_+1.00.csv" in names
    assert "exit_status=0" in (out / "manifest.txt").read_text()


def test_diffusion_run(tmp_path):
    cfg = _write(tmp_path, MINIMAL.replace("t_end=1", "t_end=0.01") + "dt_par=0.001\noutput.stride=5\n")
    out = tmp_path / "run"
    assert main(["diffusion", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "fields_00000010.csv").read_text().startswith("x,rho\n")


def test_diffusion_newton_abort_exit_2(tmp_path):
    text = MINIMAL.replace("alpha=0", "alpha=0.5").replace("bc.right.a=1", "bc.right.a=3")
    text += "dt_par=0.01\nnewton.max_iter=1\nnewton.tol=1e-15\n"
    out = tmp_path / "run"
    assert main(["diffusion", "--config", str(_write(tmp_path, text)), "--out", str(out)]) == 2
    assert "exit_status=2" in (out / "manifest.txt").read_text()


def test_sweep_is_idempotent(tmp_path):
    cfg = _write(tmp_path, SMALL_SWEEP)
    codes = [main(["sweep", "--config", str(cfg), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    assert codes[0] == codes[1]
    for name in ("convergence.csv", "audit.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_failed_flags_exit_3(tmp_path, capsys):
    # on this coarse, short run the left trace error grows along the ladder
    assert main(["sweep", "--config", str(_write(tmp_path, SMALL_SWEEP)), "--out", str(tmp_path / "r")]) == 3
    assert "boundary_decreasing: false" in capsys.readouterr().out
    assert "exit_status=3" in (tmp_path / "r" / "manifest.txt").read_text()


def test_audit_and_steady(tmp_path, capsys):
    assert main(["audit", "--seed", "42", "--out", str(tmp_path / "a")]) == 0
    text = capsys.readouterr().out
    assert "young: 5000/5000 passed" in text
    assert (tmp_path / "a" / "properties.csv").read_text().startswith("check,passed,total\n")
    assert "seed=42" in (tmp_path / "a" / "manifest.txt").read_text()
    assert main(["steady", "--out", str(tmp_path / "s")]) == 0
    rows = (tmp_path / "s" / "steady.csv").read_text().splitlines()
    assert rows[0] == "x,alpha=-1,alpha=-0.5,alpha=0,alpha=0.5,alpha=1"
    assert rows[6].split(",")[3] == "3.0"


def test_config_required_for_solvers(tmp_path, capsys):
    with pytest.raises(SystemExit):
        main(["kinetic", "--out", str(tmp_path)])


def test_shipped_acceptance_config_parses():
    cfg = parse_config(CONFIGS / "acceptance_a0.cfg")
    assert cfg.epsilons == (0.2, 0.1, 0.05, 0.025) and cfg.grid.nx == 200


def test_missing_config_file(tmp_path):
    out = tmp_path / "run"
    assert main(["sweep", "--config", str(tmp_path / "nope.cfg"), "--out", str(out)]) == 1
    assert (out / "manifest.txt").exists()
