"""Shared test utilities: corpus loading."""

import pathlib

from anfj.syntax import LabeledProgram, load_program

CORPUS_DIR = pathlib.Path(__file__).parent / "corpus"


def corpus_source(name: str) -> str:
    return (CORPUS_DIR / f"{name}.anfj").read_text()


def corpus_program(name: str) -> LabeledProgram:
    return load_program(corpus_source(name))


def corpus_names() -> list[str]:
    return sorted(p.stem for p in CORPUS_DIR.glob("*.anfj"))
