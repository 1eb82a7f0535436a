import re
import subprocess
import sys

import pytest

from toeplab import cli


def write(tmp_path, text, name="m.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


# --- manifest parsing ---------------------------------------------------------------------------


def test_parse_manifest_comments_and_lines():
    vals = cli.parse_manifest("# header\nsymbol = 2*cos:1  # trailing\n\nspace = halfline:10\n")
    assert vals == {"symbol": ("2*cos:1", 2), "space": ("halfline:10", 4)}


@pytest.mark.parametrize("text, line, fragment", [
    ("symbol = 2*cos:1\nnonsense\n", 2, "expected 'key = value'"),
    ("symbol = 2*cos:1\n\ncolour = red\n", 3, "unknown key"),
    ("space = halfline:10\nspace = halfline:20\n", 2, "duplicate key"),
])
def test_manifest_errors_carry_line(text, line, fragment):
    with pytest.raises(cli.ManifestError, match=rf":{line}: {fragment}"):
        cli.parse_manifest(text, "m")


@pytest.mark.parametrize("text, line, key", [
    ("experiment = spectrum\nspace = halfline:abc\n", 2, "space"),
    ("interval = 1\n", 1, "interval"),
    ("\nexperiment = dance\n", 2, "experiment"),
    ("symbol = 2*cos:1\nsymbol_typo = 1\n", 2, None),
    ("times = linspace:0,1\n", 1, "times"),
])
def test_run_exits_two_with_line_number(tmp_path, capsys, text, line, key):
    assert run_cli("--out", tmp_path / "o", "run", write(tmp_path, text)) == 2
    err = capsys.readouterr().err
    assert f"m.toml:{line}:" in err
    if key:
        assert repr(key) in err


def test_run_missing_manifest(tmp_path, capsys):
    assert run_cli("run", tmp_path / "absent.toml") == 2
    assert "cannot read manifest" in capsys.readouterr().err


def test_unknown_preset(capsys, tmp_path):
    assert run_cli("--out", tmp_path, "preset", "nope") == 2
    assert "available:" in capsys.readouterr().err
    text = "experiment = preset\npreset = nope\n"
    assert run_cli("--out", tmp_path, "run", write(tmp_path, text)) == 2
    assert "m.toml:2: unknown preset" in capsys.readouterr().err


def test_emit_round_trips(tmp_path):
    target = tmp_path / "rank1.toml"
    assert run_cli("preset", "rank1", "--emit", target) == 0
    assert target.read_text(encoding="utf-8") == cli.PRESETS["rank1"]
    cfg = cli.resolve(cli.parse_manifest(target.read_text(encoding="utf-8")))
    assert list(cfg.experiments) == ["count", "spectrum", "virial"]


def test_preset_expansion_with_override(tmp_path):
    vals = cli.parse_manifest("experiment = preset\npreset = rank1\nladder = 50,60,70\n")
    cfg = cli.resolve(vals)
    assert cfg.ladder == [50, 60, 70]
    assert cfg.space.N == 400


@pytest.mark.parametrize("text", [
    "2*cos:1",
    "2*cos:1 + cos:2",
    "laplacian:2",
])
def test_parse_symbol_real(text):
    f = cli.parse_symbol(text)
    assert f.is_real_within()


def test_parse_symbol_rejects_garbage():
    with pytest.raises(ValueError):
        cli.parse_symbol("tan:1")


# --- execution ---------------------------------------------------------------------------------


def test_lightcone_violation_exits_three(tmp_path, capsys):
    text = "experiment = evolve\nspace = halfline:100\ntimes = linspace:0,100,11\n"
    assert run_cli("--out", tmp_path / "o", "run", write(tmp_path, text)) == 3
    out = capsys.readouterr().out
    assert "guard violation" in out and "max_safe_t=39.6" in out


def test_empty_band_exits_three(tmp_path):
    text = ("experiment = band-rate\nspace = lattice:1,40\ninitial = e0\ninterval = 2.5,3\n"
            "times = linspace:0,5,11\n")
    assert run_cli("--out", tmp_path / "o", "run", write(tmp_path, text)) == 3


def test_outputs_and_byte_identical_rerun(tmp_path):
    man = write(tmp_path, cli.PRESETS["rank1"])
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("--out", a, "run", man) == 0
    assert run_cli("--out", b, "run", man) == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    assert {"manifest.resolved", "summary.txt", "count.csv", "spectrum.csv", "virial.csv"} <= set(files)
    for name in files:
        x, y = (a / name).read_bytes(), (b / name).read_bytes()
        if name == "manifest.resolved":
            x, y = (re.sub(rb"(?m)^out = .*$", b"", s) for s in (x, y))
        assert x == y, name


def test_manifest_resolved_lists_every_key(tmp_path):
    out = tmp_path / "o"
    assert run_cli("--out", out, "--seed", 7, "run", write(tmp_path, "space = halfline:20\n")) == 0
    text = (out / "manifest.resolved").read_text(encoding="utf-8")
    keys = [line.split(" = ")[0] for line in text.splitlines()]
    assert keys == list(cli.DEFAULTS)
    assert "seed = 7" in text and "space = halfline:20" in text
    again = cli.resolve(cli.parse_manifest(text))
    assert again.space.N == 20


def test_summary_lines_have_anchors(tmp_path):
    out = tmp_path / "o"
    text = ("experiment = spectrum, thresholds, count, lap, virial, probe\nspace = halfline:200\n"
            "potential = power:2\ninterval = 2.1,3\nladder = 100,150,200\n")
    assert run_cli("--out", out, "run", write(tmp_path, text)) == 0
    lines = (out / "summary.txt").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 6
    for line in lines:
        name = line.split(":")[0]
        assert line.endswith(f"({cli.ANCHORS[name]})")


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "toeplab.cli", "--out", str(tmp_path / "o"),
                          "preset", "free-toeplitz"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "virial: holds" in res.stdout


# --- presets -----------------------------------------------------------------------------------


PRESET_EXPECT = {
    "free-toeplitz": [r"thresholds: \{-2, 2\}", r"virial: holds"],
    "rank1": [r"count: stabilized_count=1 eigenvalues=\{2\.5", r"virial: holds"],
    "product": [r"thresholds: .* exhaustive=True", r"mourre: certified", r"virial: holds"],
    "schro-SML": [r"admissibility: S=converges M=converges L=converges", r"mourre: certified",
                  r"virial: holds"],
    "lattice-laplacian-d1": [r"thresholds: \{-2, 2\}", r"evolve: rate=1\.41", r"virial: holds"],
    "lattice-laplacian-d2": [r"thresholds: \{-4, 0, 4\}", r"evolve: rate=1\.99", r"virial: holds"],
}


@pytest.mark.parametrize("name", [
    "free-toeplitz", "rank1", "product", "lattice-laplacian-d1",
    "schro-SML",
    pytest.param("lattice-laplacian-d2", marks=pytest.mark.slow),
])
def test_presets(tmp_path, capsys, name):
    assert set(PRESET_EXPECT) == set(cli.PRESETS)
    assert run_cli("--out", tmp_path / name, "preset", name) == 0
    summary = capsys.readouterr().out
    for pattern in PRESET_EXPECT[name]:
        assert re.search(pattern, summary), (pattern, summary)
