import os
import shutil

import pytest

from gcndecomp.cli import run

from conftest import CORPUS


@pytest.fixture
def work(tmp_path):
    def copy(name):
        dst = tmp_path / f"{name}.asm"
        shutil.copy(CORPUS / f"{name}.asm", dst)
        return dst

    return copy


def test_happy_path_writes_output(work, capsys):
    src = work("copy")
    assert run([str(src)]) == 0
    out = src.with_suffix(".cl")
    assert out.read_text().startswith("__kernel void copy(")
    assert capsys.readouterr().err == ""


def test_explicit_output_path(work, tmp_path):
    src = work("copy")
    out = tmp_path / "result.cl"
    assert run([str(src), "-o", str(out)]) == 0
    assert out.exists() and not src.with_suffix(".cl").exists()


def test_unsupported_instruction_warns_and_succeeds(work, capsys):
    src = work("lds_fallback")
    assert run([str(src)]) == 0
    err = capsys.readouterr().err
    assert f"{src}:" in err and ": warning: " in err
    assert src.with_suffix(".cl").read_text().count("__asm__ volatile(") == 1


def test_no_kernels_is_an_error(tmp_path, capsys):
    src = tmp_path / "none.asm"
    src.write_text("    s_endpgm\n")
    assert run([str(src)]) != 0
    assert "no kernels found" in capsys.readouterr().err
    assert not src.with_suffix(".cl").exists()


def test_missing_input(tmp_path, capsys):
    assert run([str(tmp_path / "absent.asm")]) != 0
    assert "cannot read" in capsys.readouterr().err


def test_unwritable_output_leaves_nothing(work, tmp_path, capsys):
    src = work("copy")
    target = tmp_path / "missing_dir" / "out.cl"
    assert run([str(src), "-o", str(target)]) != 0
    assert "cannot write" in capsys.readouterr().err
    assert not target.exists()


def test_no_temporary_files_left(work, tmp_path):
    src = work("copy")
    assert run([str(src)]) == 0
    assert sorted(os.listdir(tmp_path)) == ["copy.asm", "copy.cl"]


def test_rerun_replaces_output(work):
    src = work("copy")
    out = src.with_suffix(".cl")
    out.write_text("stale")
    assert run([str(src)]) == 0
    assert out.read_text().startswith("__kernel")


def test_kernel_filter(tmp_path):
    src = tmp_path / "two.asm"
    src.write_text((CORPUS / "copy.asm").read_text() + (CORPUS / "empty.asm").read_text())
    assert run([str(src), "--kernel", "empty"]) == 0
    text = src.with_suffix(".cl").read_text()
    assert "void empty(" in text and "void copy(" not in text


def test_dump_cfg_writes_dot(work):
    src = work("scalar_if")
    assert run([str(src), "--dump-cfg"]) == 0
    dots = list(src.parent.glob("scalar_if.*.cfg.dot"))
    assert len(dots) == 1 and dots[0].read_text().startswith("digraph")


def test_dump_regions_prints_merges(work, capsys):
    src = work("scalar_if")
    assert run([str(src), "--dump-regions"]) == 0
    assert "scalar_if: " in capsys.readouterr().err


def test_bad_override_names_its_file(work, tmp_path, capsys):
    src = work("copy")
    table = tmp_path / "abi.txt"
    table.write_text("not a mapping\n")
    assert run([str(src), "--abi-override", str(table)]) != 0
    assert capsys.readouterr().err.startswith(f"{table}:1: error:")
