import json
import os
import threading

import numpy as np
import pytest
from PIL import Image

from emscan.cli import main
from emscan.heatmap import Heatmap, export_csv, read_csv


def _scan_args(out_dir, extra=()):
    return [
        "scan",
        "--scene",
        "builtin:desktop_6ft",
        "--seed",
        "7",
        "--out",
        str(out_dir),
        "--az-range=-30:30",
        "--el-range",
        "0:20",
        "--az-pixels",
        "5",
        "--el-pixels",
        "4",
        "--band",
        "1.69e9:1.71e9",
        "--hop-duration",
        "0.002",
        *extra,
    ]


# ---------------------------------------------------------------------------
# antenna
# ---------------------------------------------------------------------------


def test_antenna_text_output(capsys):
    assert main(["antenna", "--turns", "13", "--pitch", "11.3", "--clambda", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == [
        "spacing_wavelengths: 0.1998",
        "gain_dbi: 15.9067",
        "hpbw_deg: 32.2636",
        "axial_ratio: 1.0385",
    ]


def test_antenna_json_output(capsys):
    assert (
        main(["antenna", "--turns", "13", "--pitch", "11.3", "--clambda", "1", "--json"])
        == 0
    )
    figures = json.loads(capsys.readouterr().out)
    assert figures["gain_dbi"] == pytest.approx(15.9067295243696)
    assert figures["hpbw_deg"] == pytest.approx(32.26357565073648)
    assert figures["spacing_wavelengths"] == pytest.approx(0.19981971769923682)
    assert figures["axial_ratio"] == pytest.approx(27.0 / 26.0)


def test_antenna_rejects_bad_design(capsys):
    assert main(["antenna", "--turns", "0", "--pitch", "11.3", "--clambda", "1"]) == 2
    assert capsys.readouterr().err.startswith("error:")


# ---------------------------------------------------------------------------
# estimate / plan
# ---------------------------------------------------------------------------


def test_estimate_reference_output(capsys):
    assert main(["estimate"]) == 0
    assert capsys.readouterr().out.strip() == "5000 s (1:23:20)"


def test_estimate_single_pixel(capsys):
    assert main(["estimate", "--az-pixels", "1", "--el-pixels", "1"]) == 0
    assert capsys.readouterr().out.startswith("0.5 s")


def test_estimate_rejects_indivisible_band(capsys):
    assert main(["estimate", "--band", "2.4e9:2.45e9"]) == 2
    assert "nearest tiling" in capsys.readouterr().err


def test_plan_json(capsys):
    assert main(["plan"]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["pixels"] == 10000
    assert plan["estimated_duration_s"] == 5000.0
    assert [h["center_frequency_hz"] for h in plan["hops"]] == [
        1.658e9,
        1.678e9,
        1.698e9,
        1.718e9,
    ]


def test_range_equals_form(capsys):
    assert main(["plan", "--az-range=-45:45", "--el-range=0:30"]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["az_range_deg"] == [-45.0, 45.0]


def test_range_without_colon_is_usage_error(capsys):
    with pytest.raises(SystemExit) as err:
        main(["plan", "--az-range", "45"])
    assert err.value.code == 2
    assert "MIN:MAX" in capsys.readouterr().err


def test_version(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--version"])
    assert err.value.code == 0
    assert capsys.readouterr().out.startswith("emscan ")


# ---------------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------------


def test_scan_happy_path(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(_scan_args(out)) == 0
    for name in (
        "heatmap.csv",
        "heatmap.pgm",
        "heatmap.png",
        "pixels.csv",
        "transcript.log",
        "manifest.json",
    ):
        assert (out / name).exists(), name

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["complete"] is True
    assert manifest["backend"] == "sim"
    assert manifest["seed"] == 7
    assert manifest["pixels"] == 20
    assert manifest["pixels_acquired"] == 20
    assert manifest["invalid_pixels"] == 0
    assert manifest["grid"]["az_range_deg"] == [-30.0, 30.0]
    assert manifest["scan_duration_s"] == 10.0  # 20 pixels x 0.5 s dwell
    assert manifest["outputs"] == [
        "heatmap.csv",
        "heatmap.pgm",
        "heatmap.png",
        "pixels.csv",
        "transcript.log",
    ]

    pixels_header = (out / "pixels.csv").read_text().splitlines()[0]
    assert pixels_header == "i_az,i_el,az_deg,el_deg,t_offset_s,hop0_dbm,integrated_dbm"
    transcript = (out / "transcript.log").read_text().splitlines()
    assert transcript[0] == "> HOME"
    assert transcript[1] == "< OK"
    assert (out / "heatmap.csv").read_text().startswith("# {")


def test_scan_deterministic_outputs(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(_scan_args(a)) == 0
    assert main(_scan_args(b)) == 0
    for name in ("heatmap.csv", "heatmap.pgm", "heatmap.png", "pixels.csv",
                 "transcript.log", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_scan_requires_scene(tmp_path, capsys):
    assert main(["scan", "--seed", "1", "--out", str(tmp_path / "x")]) == 2
    assert "scene" in capsys.readouterr().err


def test_scan_sim_requires_seed(tmp_path, capsys):
    assert (
        main(["scan", "--scene", "builtin:desktop_6ft", "--out", str(tmp_path / "x")])
        == 2
    )
    assert "--seed" in capsys.readouterr().err


def test_scan_rejects_negative_seed(tmp_path, capsys):
    args = _scan_args(tmp_path / "x")
    args[args.index("7")] = "-3"
    assert main(args) == 2
    assert "non-negative" in capsys.readouterr().err


def test_scan_serial_requires_port(tmp_path, capsys):
    assert (
        main(
            [
                "scan",
                "--scene",
                "builtin:desktop_6ft",
                "--backend",
                "serial",
                "--out",
                str(tmp_path / "x"),
            ]
        )
        == 2
    )
    assert "--port" in capsys.readouterr().err


def test_scan_unreachable_port_is_exit_4(tmp_path, capsys):
    assert (
        main(
            [
                "scan",
                "--scene",
                "builtin:desktop_6ft",
                "--backend",
                "serial",
                "--port",
                str(tmp_path / "missing-tty"),
                "--out",
                str(tmp_path / "x"),
            ]
        )
        == 4
    )
    assert "cannot open device" in capsys.readouterr().err


def test_scan_unknown_builtin_scene(tmp_path, capsys):
    args = _scan_args(tmp_path / "x")
    args[args.index("builtin:desktop_6ft")] = "builtin:nope"
    assert main(args) == 2


def test_scan_travel_violation(tmp_path, capsys):
    args = _scan_args(tmp_path / "x", extra=["--el-range", "0:85"])
    # later flag wins in argparse, so el range becomes 0:85
    assert main(args) == 2
    assert "travel" in capsys.readouterr().err


def test_scan_aborts_with_exit_3_when_device_dies(tmp_path, capsys):
    master, slave = os.openpty()

    def serve():
        buf = b""
        while True:
            try:
                data = os.read(master, 256)
            except OSError:
                return
            if not data:
                return
            buf += data
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                if line.strip() == b"HOME":
                    os.write(master, b"OK\n")
                else:
                    os.close(master)
                    return

    thread = threading.Thread(target=serve, daemon=True)
    thread.start()
    out = tmp_path / "run"
    code = main(
        [
            "scan",
            "--scene",
            "builtin:desktop_6ft",
            "--backend",
            "serial",
            "--port",
            os.ttyname(slave),
            "--out",
            str(out),
            "--az-range=-10:10",
            "--el-range",
            "0:5",
            "--az-pixels",
            "2",
            "--el-pixels",
            "1",
            "--band",
            "1.69e9:1.71e9",
            "--hop-duration",
            "0.002",
        ]
    )
    thread.join(timeout=5)
    os.close(slave)
    assert code == 3
    assert "aborted" in capsys.readouterr().err
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["complete"] is False
    assert manifest["pixels_acquired"] < manifest["pixels"]


def test_scan_config_file_fills_defaults(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "scene": "builtin:desktop_6ft",
                "seed": 5,
                "az_range": [-10.0, 10.0],
                "el_range": [0.0, 10.0],
                "az_pixels": 3,
                "el_pixels": 2,
                "band": [1.69e9, 1.71e9],
                "hop_duration": 0.002,
            }
        )
    )
    out = tmp_path / "run"
    assert main(["scan", "--config", str(config), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 5
    assert manifest["grid"]["az_pixels"] == 3
    assert manifest["grid"]["az_range_deg"] == [-10.0, 10.0]


def test_scan_cli_flags_override_config(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "scene": "builtin:desktop_6ft",
                "seed": 5,
                "az_range": [-10.0, 10.0],
                "el_range": [0.0, 10.0],
                "az_pixels": 3,
                "el_pixels": 2,
                "band": [1.69e9, 1.71e9],
                "hop_duration": 0.002,
            }
        )
    )
    out = tmp_path / "run"
    assert (
        main(
            [
                "scan",
                "--config",
                str(config),
                "--az-pixels",
                "4",
                "--seed",
                "9",
                "--out",
                str(out),
            ]
        )
        == 0
    )
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["grid"]["az_pixels"] == 4
    assert manifest["seed"] == 9


def test_scan_config_rejects_unknown_key(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"bogus": 1}))
    assert main(["scan", "--config", str(config), "--out", str(tmp_path / "x")]) == 2
    assert "unknown setting" in capsys.readouterr().err


def test_scan_config_rotor_section(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "scene": "builtin:desktop_6ft",
                "seed": 5,
                "az_range": [-9.0, 9.0],
                "el_range": [0.0, 4.0],
                "az_pixels": 3,
                "el_pixels": 2,
                "band": [1.69e9, 1.71e9],
                "hop_duration": 0.002,
                "rotor": {"az_backlash_steps": 5},
            }
        )
    )
    out = tmp_path / "run"
    assert main(["scan", "--config", str(config), "--out", str(out)]) == 0
    # a 3-column raster reverses azimuth once; the padded move shows on the wire
    transcript = (out / "transcript.log").read_text()
    assert "MOVE -2005 0" in transcript


def test_scan_config_rejects_bad_rotor_key(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"rotor": {"bad_knob": 1}}))
    assert main(["scan", "--config", str(config), "--out", str(tmp_path / "x")]) == 2
    assert "config:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# export / overlay
# ---------------------------------------------------------------------------


def _write_map(path, values, normalized=False):
    export_csv(
        Heatmap(
            np.asarray(values, dtype=np.float64),
            az_range_deg=(-10.0, 10.0),
            el_range_deg=(0.0, 5.0),
            normalized=normalized,
        ),
        str(path),
    )


def test_export_writes_requested_formats(tmp_path):
    src = tmp_path / "map.csv"
    _write_map(src, [[-40.0, -20.0], [-30.0, -25.0]])
    pgm = tmp_path / "out.pgm"
    png = tmp_path / "out.png"
    csv_out = tmp_path / "out.csv"
    assert (
        main(
            [
                "export",
                "--map",
                str(src),
                "--pgm",
                str(pgm),
                "--png",
                str(png),
                "--csv",
                str(csv_out),
            ]
        )
        == 0
    )
    assert pgm.read_bytes().startswith(b"P5\n")
    with Image.open(png) as img:
        assert img.size == (2, 2)
    back = read_csv(str(csv_out))
    assert back.normalized
    assert back.values.min() == 0.0 and back.values.max() == 1.0


def test_export_nothing_to_do(tmp_path, capsys):
    src = tmp_path / "map.csv"
    _write_map(src, [[-40.0, -20.0]])
    assert main(["export", "--map", str(src)]) == 2
    assert "nothing to do" in capsys.readouterr().err


def test_export_against_reference(tmp_path):
    src = tmp_path / "map.csv"
    ref = tmp_path / "ref.csv"
    _write_map(src, [[-40.0, -20.0]])
    _write_map(ref, [[-45.0, -25.0]])
    out = tmp_path / "out.csv"
    assert (
        main(
            ["export", "--map", str(src), "--reference", str(ref), "--csv", str(out)]
        )
        == 0
    )
    back = read_csv(str(out))
    # (-40 + 45) / 20 = 0.25; -20 clips at the reference max
    assert back.values[0, 0] == pytest.approx(0.25)
    assert back.values[0, 1] == 1.0


def test_export_missing_map(tmp_path, capsys):
    assert (
        main(["export", "--map", str(tmp_path / "nope.csv"), "--png", "x.png"]) == 2
    )


def test_export_png_scale(tmp_path):
    src = tmp_path / "map.csv"
    _write_map(src, [[-40.0, -20.0], [-30.0, -25.0]])
    png = tmp_path / "big.png"
    assert main(["export", "--map", str(src), "--png", str(png), "--scale", "5"]) == 0
    with Image.open(png) as img:
        assert img.size == (10, 10)


def test_overlay_cli(tmp_path):
    src = tmp_path / "map.csv"
    _write_map(src, [[-40.0, -20.0], [-30.0, -25.0]])
    photo = tmp_path / "photo.png"
    Image.fromarray(np.full((10, 20, 3), 64, dtype=np.uint8), "RGB").save(photo)
    out = tmp_path / "overlay.png"
    assert (
        main(
            [
                "overlay",
                "--map",
                str(src),
                "--photo",
                str(photo),
                "--out",
                str(out),
                "--hfov",
                "40",
                "--vfov",
                "20",
            ]
        )
        == 0
    )
    with Image.open(out) as img:
        assert img.size == (20, 10)


def test_overlay_cli_bad_fov(tmp_path, capsys):
    src = tmp_path / "map.csv"
    _write_map(src, [[-40.0, -20.0]])
    photo = tmp_path / "photo.png"
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8), "RGB").save(photo)
    assert (
        main(
            [
                "overlay",
                "--map",
                str(src),
                "--photo",
                str(photo),
                "--out",
                str(tmp_path / "o.png"),
                "--hfov",
                "200",
                "--vfov",
                "20",
            ]
        )
        == 2
    )
    assert "error:" in capsys.readouterr().err
