from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List

import yaml

from .problems import InclusionProblem, ProblemFormatError, load_problem, problem_from_dict

CATALOG_PATH = Path(__file__).parent / "config" / "catalog.yml"


class UnknownProblemError(KeyError):
    pass


@dataclass(frozen=True)
class CatalogEntry:
    problem: InclusionProblem
    description: str

    @property
    def name(self) -> str:
        return self.problem.name or ""


def load_catalog(path: str | Path = CATALOG_PATH) -> List[CatalogEntry]:
    p = Path(path)
    doc = yaml.safe_load(p.read_text(encoding="utf-8"))
    out: List[CatalogEntry] = []
    for i, raw in enumerate(doc["problems"]):
        entry = dict(raw)
        description = str(entry.pop("description", ""))
        try:
            problem = problem_from_dict(entry)
        except ProblemFormatError as e:
            raise ProblemFormatError(f"{p.name}: problems[{i}] ({entry.get('name')}): {e}") from e
        out.append(CatalogEntry(problem, description))
    return out


@lru_cache(maxsize=1)
def _builtin() -> Dict[str, CatalogEntry]:
    return {e.name: e for e in load_catalog()}


def catalog() -> List[InclusionProblem]:
    return [e.problem for e in _builtin().values()]


def catalog_entries() -> List[CatalogEntry]:
    return list(_builtin().values())


def get_problem(name: str) -> InclusionProblem:
    try:
        return _builtin()[name].problem
    except KeyError:
        known = ", ".join(sorted(_builtin()))
        raise UnknownProblemError(f"Unknown problem {name!r}. Built-ins: {known}") from None


def resolve_problem(source: str) -> InclusionProblem:
    """Catalog name, or path to a problem JSON file."""
    if source in _builtin():
        return _builtin()[source].problem
    path = Path(source)
    if path.is_file():
        return load_problem(path.read_text(encoding="utf-8"))
    raise UnknownProblemError(
        f"{source!r} is neither a built-in problem ({', '.join(sorted(_builtin()))}) nor a file"
    )
