"""Command-line entry point: ``gcndecomp input.asm [-o out.cl]``."""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path
from typing import List, Optional, Sequence

from .abi import parse_abi_override
from .errors import DecompileError
from .pipeline import Options, decompile_text


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gcndecomp", description="Decompile a CLRX GCN listing to OpenCL C.")
    p.add_argument("input", help="CLRX disassembler listing")
    p.add_argument("-o", "--output", help="output .cl path (default: input stem + .cl)")
    p.add_argument("--kernel", help="decompile only this kernel")
    p.add_argument("--dump-cfg", action="store_true", help="write <output>.<kernel>.cfg.dot per kernel")
    p.add_argument("--dump-regions", action="store_true", help="print region merges to stderr")
    p.add_argument("--fold-local-size", action="store_true", help="fold constant work-group sizes into get_local_size()")
    p.add_argument("--abi-override", metavar="FILE", help="offset = builtin table replacing the default settings layout")
    return p


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent or Path(".")))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _error(prog: str, message: str) -> int:
    print(f"{prog}: error: {message}", file=sys.stderr)
    return 1


def _located(path: Path, exc: DecompileError) -> int:
    line = exc.line if exc.line is not None else 0
    print(f"{path}:{line}: error: {exc.message}", file=sys.stderr)
    return 1


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    src = Path(args.input)
    out = Path(args.output) if args.output else src.with_suffix(".cl")
    try:
        listing = src.read_text(encoding="utf-8")
    except OSError as exc:
        return _error("gcndecomp", f"cannot read {src}: {exc.strerror or exc}")

    options = Options(
        fold_local_size=args.fold_local_size,
        kernel=args.kernel,
        dump_cfg=args.dump_cfg,
        dump_regions=args.dump_regions,
    )
    if args.abi_override:
        table = Path(args.abi_override)
        try:
            options.abi_overrides = parse_abi_override(table.read_text(encoding="utf-8"))
        except OSError as exc:
            return _error("gcndecomp", f"cannot read {table}: {exc.strerror or exc}")
        except DecompileError as exc:
            return _located(table, exc)
    try:
        result = decompile_text(listing, options)
    except DecompileError as exc:
        return _located(src, exc)

    for d in result.diagnostics:
        print(d.format(str(src)), file=sys.stderr)
    try:
        _write_atomic(out, result.text)
        for k in result.kernels:
            if args.dump_cfg:
                _write_atomic(out.with_name(f"{out.stem}.{k.name}.cfg.dot"), k.cfg_dot)
            if args.dump_regions:
                for line in k.region_dots:
                    print(f"{k.name}: {line}", file=sys.stderr)
    except OSError as exc:
        return _error("gcndecomp", f"cannot write {out}: {exc.strerror or exc}")
    return 0


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(run(argv))
